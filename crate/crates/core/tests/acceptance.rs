//! One PASS/FAIL line per acceptance criterion. Exits nonzero on any FAIL.
//!
//! Run with `cargo test -p aerotrack --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use aerotrack::classifier::{bundled, bundled_parity, parity_max_error};
use aerotrack::eval::checks::{self, Check, Thresholds};
use aerotrack::eval::pipeline::{ablation_ladder, fit_calibration, run_pipeline, PipelineConfig, PipelineInputs};
use aerotrack::object::confidence_step;
use aerotrack::types::FRAME_INTERVAL_S;
use common::*;

struct Line {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn line(name: &'static str, passed: bool, detail: String) -> Line {
    Line { name, passed, detail }
}

fn all(list: &[Check]) -> (bool, String) {
    let passed = list.iter().all(|c| c.passed);
    let detail = list.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join("; ");
    (passed, detail)
}

fn percentile() -> Line {
    let t = Instant::now();
    let (removal, kept) = held_out_percentile(0x80);
    let secs = t.elapsed().as_secs_f64();
    let ok = (removal - 0.80).abs() <= 0.03 && kept >= 0.98 && secs < 60.0;
    line(
        "percentile_threshold",
        ok,
        format!("held-out removal {removal:.4} (0.80 +/- 0.03), 4-sigma offsets kept {kept:.4} (min 0.98), {secs:.2} s"),
    )
}

fn mahalanobis() -> Line {
    let worst = mahalanobis_worst(0x5A4A, 1000);
    line("mahalanobis", worst < 1e-9, format!("1000 SPD cases, worst relative error {worst:.2e} (max 1e-9)"))
}

fn hz() -> Line {
    let (acc, rej) = hz_rates(0x42, 200, 400);
    let ok = (acc - 0.95).abs() <= 0.04 && rej >= 0.99;
    line("hz_test", ok, format!("Gaussian accepted {acc:.3} (0.95 +/- 0.04), uniform rejected {rej:.3} (min 0.99)"))
}

fn hungarian() -> Line {
    let bad = hungarian_mismatches(0xA551, 10_000);
    line("hungarian", bad == 0, format!("{bad} mismatches against exhaustive search in 10000 instances"))
}

fn confidence() -> Line {
    let g = 0.9;
    let mut c = [0.0; 3];
    c[0] = confidence_step(0.0, false, g);
    c[1] = confidence_step(c[0], true, g);
    c[2] = confidence_step(c[1], true, g);
    let mut steady = 0.0;
    for _ in 0..1000 {
        steady = confidence_step(steady, true, g);
    }
    let ok = (c[2] - 1.71).abs() < 1e-12 && (steady - 9.0).abs() < 1e-9;
    line("confidence", ok, format!("C after first two re-sightings {:.12}, steady state {steady:.12}", c[2]))
}

fn filters() -> Line {
    let kf = imm_kalman_gap(0x4B46, 100, FRAME_INTERVAL_S);
    let ut = ut_affine_worst(0x0717, 500);
    let ctrv = ctrv_cv_worst(0xC7, 2000);
    let ok = kf < 1e-3 && ut < 1e-7 && ctrv < 1e-6;
    line(
        "imm_ukf",
        ok,
        format!("IMM vs KF {kf:.2e} m over 100 frames (max 1e-3), UT affine {ut:.2e} (max 1e-7), CTRV vs CV {ctrv:.2e} m (max 1e-6)"),
    )
}

fn parity() -> Line {
    let result = bundled().and_then(|m| {
        let v = bundled_parity()?;
        Ok((v.len(), parity_max_error(&m, &v)?))
    });
    match result {
        Ok((n, worst)) => line("classifier_parity", n >= 64 && worst <= 1e-5, format!("{n} vectors, max error {worst:.2e} (max 1e-5)")),
        Err(e) => line("classifier_parity", false, e.to_string()),
    }
}

/// Ladder, end-to-end accuracy, object layer, target-free and throughput,
/// all from one benchmark run.
fn benchmark() -> Vec<Line> {
    let fail = |e: String| {
        ["ablation_ladder", "final_f1_e_loc", "false_object_reduction", "target_free_fp_rate", "throughput"]
            .into_iter()
            .map(|n| line(n, false, e.clone()))
            .collect::<Vec<_>>()
    };
    let cfg = PipelineConfig::default();
    let th = Thresholds::default();
    let t = Instant::now();
    let inputs = match (fit_calibration(&cfg), cfg.load_classifier()) {
        (Ok(m), Ok(c)) => PipelineInputs { model: Some(m), classifier: Some(c) },
        (Err(e), _) | (_, Err(e)) => return fail(e.to_string()),
    };
    let steps = match ablation_ladder(&cfg, inputs.clone()) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let ladder_s = t.elapsed().as_secs_f64();

    let mut free = cfg.clone();
    free.scene = cfg.scene.target_free(0xF4EE);
    let free_report = match run_pipeline(&free, inputs, None) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };

    let full = &steps.last().expect("five rungs").report;
    let sigma = cfg.scene.uav.noise.sigma();
    let target = checks::target_checks(full, sigma, &th);

    let (ladder_ok, ladder_detail) = all(&checks::ladder_checks(&steps));
    let (acc_ok, acc_detail) = all(&target[..2]);
    let (obj_ok, obj_detail) = all(&checks::object_checks(&steps[3].report.metrics, &th));
    let (free_ok, free_detail) = all(&checks::target_free_checks(&free_report, &th));

    let per_1000 = full.timings.total_s * 1000.0 / full.metrics.frames as f64;
    let fps = full.metrics.frames as f64 / full.timings.total_s.max(1e-9);
    vec![
        line("ablation_ladder", ladder_ok && ladder_s < 300.0, format!("{ladder_detail}; {ladder_s:.1} s for the ladder")),
        line("final_f1_e_loc", acc_ok, acc_detail),
        line("false_object_reduction", obj_ok, obj_detail),
        line("target_free_fp_rate", free_ok, free_detail),
        line(
            "throughput",
            target[2].passed && per_1000 <= 40.0,
            format!("{fps:.1} frames/s, {per_1000:.2} s per 1000 frames (max 40 s)"),
        ),
    ]
}

fn main() -> ExitCode {
    let mut lines = vec![percentile(), mahalanobis(), hz(), hungarian(), confidence(), filters(), parity()];
    lines.extend(benchmark());
    let mut failed = 0;
    for l in &lines {
        let tag = if l.passed { "PASS" } else { "FAIL" };
        failed += !l.passed as usize;
        println!("{tag} {:<24} {}", l.name, l.detail);
    }
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
