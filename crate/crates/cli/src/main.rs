use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aerotrack::classifier::weights::Hyper;
use aerotrack::classifier::{load_parity, parity_max_error, TrajFormer};
use aerotrack::eval::checks::{self, Check, Thresholds};
use aerotrack::eval::{
    ablation_ladder, collect_windows, fit_calibration, run_pipeline, run_stream, trajectory_metrics,
    FrameArtifacts, PipelineConfig, PipelineInputs, RunReport,
};
use aerotrack::fingerprint::{fit_model, NoiseFingerprintModel};
use aerotrack::io::{read_json, read_jsonl, read_toml, write_json, write_jsonl, JsonlWriter};
use aerotrack::sim::{build_scene, GroundTruthFrame};
use aerotrack::tracker::TrackRecord;
use aerotrack::Frame;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aerotrack", version, about = "Simulate, filter, track and score aerial targets in noisy point clouds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate frames and ground truth for a scene.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Replace the flights by nothing, re-salting the frame seed.
        #[arg(long)]
        target_free: Option<u64>,
        #[arg(long)]
        frames_out: PathBuf,
        #[arg(long)]
        truth_out: PathBuf,
    },
    /// Fit a noise fingerprint model.
    Fit {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Fit on these noise-only frames instead of the calibration scene.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline and write every intermediate stream.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        models: ModelArgs,
        /// Read frames and ground truth from files instead of simulating.
        #[arg(long, requires = "truth")]
        frames: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit nonzero when an acceptance threshold is violated.
        #[arg(long)]
        check: bool,
    },
    /// Score a track stream against ground truth.
    Eval {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the five-stage ablation ladder.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run the target-free scene and check every threshold.
        #[arg(long)]
        check: bool,
    },
    /// Export labelled track windows for classifier training.
    Windows {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Scene seeds to collect from; default is the configured seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Frames per case for case-wise splits.
        #[arg(long, default_value_t = 125)]
        segment_frames: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default pipeline configuration as TOML.
    Config,
    /// Write randomly initialised classifier weights.
    InitWeights {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a weight file against a parity sidecar.
    Parity {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        parity: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration (TOML). Defaults reproduce benchmark-A.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of frames.
    #[arg(long)]
    frames_count: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg: PipelineConfig = match &self.config {
            Some(p) => read_toml(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.scene.seed = s;
        }
        if let Some(n) = self.frames_count {
            cfg.scene.frames = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Fitted fingerprint model (JSON); fitted on the fly when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Classifier weights; overrides the configuration.
    #[arg(long)]
    weights: Option<PathBuf>,
}

impl ModelArgs {
    fn inputs(&self, cfg: &mut PipelineConfig) -> Result<PipelineInputs> {
        if let Some(w) = &self.weights {
            cfg.weights_path = Some(w.clone());
        }
        let model: Option<NoiseFingerprintModel> = match &self.model {
            Some(p) => Some(read_json(p)?),
            None => None,
        };
        Ok(PipelineInputs { model, classifier: None })
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn print_checks(list: &[Check]) -> bool {
    for c in list {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    list.iter().all(|c| c.passed)
}

fn summary(r: &RunReport) -> String {
    let m = &r.metrics;
    let t = &r.timings;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let mut s = String::new();
    s += &format!("frames            {}\n", m.frames);
    s += &format!("points            F_u {}  F_n {}\n", opt(m.f_u), opt(m.f_n));
    s += &format!(
        "objects           raw {:.2} false/frame, forwarded {:.3} false/frame, recall {}\n",
        m.raw_objects.false_per_frame(),
        m.objects.false_per_frame(),
        opt(m.objects.recall())
    );
    s += &format!(
        "trajectories      P {:.4}  R {:.4}  F1 {:.4}  E_loc {} m\n",
        m.precision,
        m.recall,
        m.f1,
        opt(m.e_loc)
    );
    s += &format!(
        "tracks            reported {}  rejected {}  quarantined {}\n",
        m.reported_tracks, m.rejected_tracks, m.quarantined_tracks
    );
    s += &format!("fp frame rate     {:.4}\n", m.fp_frame_rate);
    s += &format!(
        "timing            total {:.2} s ({:.1} frames/s), fit {:.2} s\n",
        t.total_s,
        m.frames as f64 / t.total_s.max(1e-9),
        t.fit_s
    );
    s += &format!(
        "  per stage       sim {:.3}  fingerprint {:.3}  cluster {:.3}  object {:.3}  track {:.3}  classify {:.3}  metrics {:.3}\n",
        t.simulate_s, t.fingerprint_s, t.cluster_s, t.object_s, t.track_s, t.classify_s, t.metrics_s
    );
    s += "range buckets     [lo, hi) m: TP FP FN E_loc\n";
    for (i, b) in m.trajectory.buckets.iter().enumerate() {
        if b.tp + b.fp + b.fn_ > 0 {
            s += &format!(
                "  [{:4}, {:4})    {:5} {:5} {:5} {}\n",
                i * 100,
                (i + 1) * 100,
                b.tp,
                b.fp,
                b.fn_,
                opt(b.e_loc())
            );
        }
    }
    s
}

fn write_report(dir: &Path, name: &str, r: &RunReport) -> Result<()> {
    write_json(dir.join(format!("{name}.metrics.json")), &r.metrics)?;
    write_json(dir.join(format!("{name}.timings.json")), &r.timings)?;
    fs::write(dir.join(format!("{name}.txt")), summary(r))?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::InitWeights { seed, out } => {
            TrajFormer::seeded(Hyper::default(), seed)?.save(&out)?;
            Ok(true)
        }
        Cmd::Parity { weights, parity, tol } => {
            let model = TrajFormer::load(&weights)?;
            let vectors = load_parity(&parity)?;
            let err = parity_max_error(&model, &vectors)?;
            println!("{} vectors, max |dp| {err:.3e}", vectors.len());
            Ok(err <= tol)
        }
        Cmd::Config => {
            print!("{}", toml::to_string(&PipelineConfig::default())?);
            Ok(true)
        }
        Cmd::Simulate {
            cfg,
            target_free,
            frames_out,
            truth_out,
        } => {
            let cfg = cfg.load()?;
            let spec = match target_free {
                Some(salt) => cfg.scene.target_free(salt),
                None => cfg.scene.clone(),
            };
            let scene = build_scene(&spec)?;
            let mut fw = JsonlWriter::create(&frames_out)?;
            let mut gw = JsonlWriter::create(&truth_out)?;
            for (f, g) in scene.frames() {
                fw.write(&f)?;
                gw.write(&g)?;
            }
            fw.finish()?;
            gw.finish()?;
            println!("wrote {} frames (scene digest {:016x})", scene.frame_count(), scene.digest());
            Ok(true)
        }
        Cmd::Fit { cfg, frames, out } => {
            let cfg = cfg.load()?;
            let model = match frames {
                Some(p) => {
                    let frames: Vec<Frame> = read_jsonl(&p)?;
                    fit_model(&frames, cfg.scene.grid, cfg.fit)?
                }
                None => fit_calibration(&cfg)?,
            };
            write_json(&out, &model)?;
            println!(
                "modelled {} of {} cubes, tau_sim {:.4}",
                model.modeled_cubes(),
                model.cubes.len(),
                model.tau_sim
            );
            Ok(true)
        }
        Cmd::Run {
            cfg,
            models,
            frames,
            truth,
            out,
            check,
        } => {
            let mut cfg = cfg.load()?;
            let inputs = models.inputs(&mut cfg)?;
            if let Some(dir) = &out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let mut writers = match &out {
                Some(dir) => Some((
                    JsonlWriter::create(dir.join("filtered.jsonl"))?,
                    JsonlWriter::create(dir.join("objects.jsonl"))?,
                    JsonlWriter::create(dir.join("tracks.jsonl"))?,
                )),
                None => None,
            };
            let mut write_err = None;
            let mut observer = |a: &FrameArtifacts| {
                if let Some((fw, ow, tw)) = writers.as_mut() {
                    let res = (|| -> aerotrack::Result<()> {
                        fw.write(a.filtered)?;
                        for o in a.objects {
                            ow.write(o)?;
                        }
                        for t in a.track_records() {
                            tw.write(&t)?;
                        }
                        Ok(())
                    })();
                    if let Err(e) = res {
                        write_err.get_or_insert(e);
                    }
                }
            };
            let report = match (&frames, &truth) {
                (Some(fp), Some(tp)) => {
                    let fs_: Vec<Frame> = read_jsonl(fp)?;
                    let gs: Vec<GroundTruthFrame> = read_jsonl(tp)?;
                    if fs_.len() != gs.len() {
                        bail!("{} frames but {} ground-truth records", fs_.len(), gs.len());
                    }
                    run_stream(&cfg, inputs, fs_.into_iter().zip(gs), fp.display().to_string(), Some(&mut observer))?
                }
                _ => run_pipeline(&cfg, inputs, Some(&mut observer))?,
            };
            if let Some(e) = write_err {
                return Err(e.into());
            }
            if let Some((fw, ow, tw)) = writers {
                fw.finish()?;
                ow.finish()?;
                tw.finish()?;
            }
            print!("{}", summary(&report));
            if let Some(dir) = &out {
                write_report(dir, "run", &report)?;
            }
            if !check {
                return Ok(true);
            }
            let th = Thresholds::default();
            // Decided from the ground truth so file input is handled too.
            let t = &report.metrics.trajectory.total;
            let target_free = t.tp + t.fn_ == 0;
            let mut list = if target_free {
                checks::target_free_checks(&report, &th)
            } else {
                checks::target_checks(&report, cfg.scene.uav.noise.sigma(), &th)
            };
            if cfg.stages.fingerprint && cfg.stages.velocity_confidence && !target_free {
                list.extend(checks::object_checks(&report.metrics, &th));
            }
            Ok(print_checks(&list))
        }
        Cmd::Eval { tracks, truth, out } => {
            let recs: Vec<TrackRecord> = read_jsonl(&tracks)?;
            let gts: Vec<GroundTruthFrame> = read_jsonl(&truth)?;
            let first = gts.first().map_or(0, |g| g.frame_index);
            let mut outputs = vec![Vec::new(); gts.len()];
            for r in recs.iter().filter(|r| r.reported) {
                let k = r.frame_index.checked_sub(first).map(|k| k as usize);
                match k.and_then(|k| outputs.get_mut(k)) {
                    Some(v) => v.push([r.x, r.y, r.z]),
                    None => bail!("track record for frame {} has no ground truth", r.frame_index),
                }
            }
            let truth_pos: Vec<Vec<[f64; 3]>> = gts.iter().map(GroundTruthFrame::uav_positions).collect();
            let m = trajectory_metrics(&outputs, &truth_pos);
            println!(
                "P {:.4}  R {:.4}  F1 {:.4}  E_loc {}  fp-frame rate {:.4}",
                m.precision(),
                m.recall(),
                m.f1(),
                m.e_loc().map_or("n/a".into(), |e| format!("{e:.3} m")),
                m.fp_frame_rate()
            );
            if let Some(p) = out {
                write_json(p, &m)?;
            }
            Ok(true)
        }
        Cmd::Ablate {
            cfg,
            models,
            out,
            check,
        } => {
            let mut cfg = cfg.load()?;
            let mut inputs = models.inputs(&mut cfg)?;
            if inputs.model.is_none() {
                inputs.model = Some(fit_calibration(&cfg)?);
            }
            inputs.classifier = Some(cfg.load_classifier()?);
            let steps = ablation_ladder(&cfg, inputs.clone())?;
            println!("{:<14} {:>8} {:>8} {:>8} {:>9} {:>10} {:>8}", "stage", "P", "R", "F1", "E_loc", "obj fp/f", "fps");
            for s in &steps {
                let m = &s.report.metrics;
                println!(
                    "{:<14} {:>8.4} {:>8.4} {:>8.4} {:>9} {:>10.3} {:>8.1}",
                    s.name,
                    m.precision,
                    m.recall,
                    m.f1,
                    m.e_loc.map_or("n/a".into(), |e| format!("{e:.3}")),
                    m.objects.false_per_frame(),
                    m.frames as f64 / s.report.timings.total_s.max(1e-9)
                );
            }
            if let Some(dir) = &out {
                fs::create_dir_all(dir)?;
                write_json(dir.join("ablation.json"), &steps)?;
            }
            if !check {
                return Ok(true);
            }
            let th = Thresholds::default();
            let mut list = checks::ladder_checks(&steps);
            let last = &steps.last().expect("five steps").report;
            list.extend(checks::target_checks(last, cfg.scene.uav.noise.sigma(), &th));
            list.extend(checks::object_checks(&steps[3].report.metrics, &th));
            let mut free = cfg.clone();
            free.scene = cfg.scene.target_free(0xF4EE);
            let free_report = run_pipeline(&free, inputs, None)?;
            list.extend(checks::target_free_checks(&free_report, &th));
            Ok(print_checks(&list))
        }
        Cmd::Windows {
            cfg,
            seeds,
            segment_frames,
            out,
        } => {
            let cfg = cfg.load()?;
            let seeds = if seeds.is_empty() { vec![cfg.scene.seed] } else { seeds };
            let mut all = Vec::new();
            for s in seeds {
                let mut c = cfg.clone();
                c.scene.seed = s;
                let w = collect_windows(&c, None, segment_frames)?;
                let pos = w.iter().filter(|w| w.label).count();
                println!("seed {s}: {} windows, {} positive", w.len(), pos);
                all.extend(w);
            }
            write_jsonl(&out, &all)?;
            Ok(true)
        }
    }
}
