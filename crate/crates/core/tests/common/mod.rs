//! Reference implementations used as oracles, plus the measurements shared
//! by the integration tests and the acceptance binary.

#![allow(dead_code)]

use aerotrack::assign::hungarian;
use aerotrack::fingerprint::{filter_frame, fit_model, hz_test, mahalanobis, CubeParams, FitOptions, NoiseFingerprintModel};
use aerotrack::tracker::imm::ImmFilter;
use aerotrack::tracker::motion::{ctrv_propagate, cv_propagate, MotionModel, State};
use aerotrack::tracker::ukf::{unscented_transform, Gaussian, UtParams};
use aerotrack::types::{CubeGrid, CubeId, Frame, RawPoint};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

// ---------------------------------------------------------------- algebra

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn quad_form(d: &[f64], inv: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            s += d[i] * inv[i][j] * d[j];
        }
    }
    s
}

/// Random symmetric positive definite matrix `A A^T + shift I`.
pub fn random_spd(r: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| normal(r)).collect()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { shift } else { 0.0 })
                .collect()
        })
        .collect()
}

// ------------------------------------------------------------- assignment

/// Optimal one-to-one assignment cost by enumerating every injection of
/// the smaller side into the larger.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = if rows == 0 { 0 } else { cost[0].len() };
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let (small, large, at): (usize, usize, Box<dyn Fn(usize, usize) -> f64>) = if rows <= cols {
        (rows, cols, Box::new(|s, l| cost[s][l]))
    } else {
        (cols, rows, Box::new(|s, l| cost[l][s]))
    };
    fn rec(i: usize, small: usize, large: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64, at: &dyn Fn(usize, usize) -> f64) {
        if i == small {
            *best = best.min(acc);
            return;
        }
        for l in 0..large {
            if !used[l] {
                used[l] = true;
                rec(i + 1, small, large, used, acc + at(i, l), best, at);
                used[l] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(0, small, large, &mut vec![false; large], 0.0, &mut best, &*at);
    best
}

/// Largest number of admissible pairs and the smallest cost among such
/// matchings, by exhaustive search over partial injections.
pub fn brute_force_gated(cost: &[Vec<f64>], gate: f64) -> (usize, f64) {
    let rows = cost.len();
    let cols = if rows == 0 { 0 } else { cost[0].len() };
    fn rec(i: usize, cost: &[Vec<f64>], gate: f64, used: &mut Vec<bool>, n: usize, acc: f64, best: &mut (usize, f64)) {
        if i == cost.len() {
            if n > best.0 || (n == best.0 && acc < best.1) {
                *best = (n, acc);
            }
            return;
        }
        rec(i + 1, cost, gate, used, n, acc, best);
        for c in 0..used.len() {
            if !used[c] && cost[i][c] < gate {
                used[c] = true;
                rec(i + 1, cost, gate, used, n + 1, acc + cost[i][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    rec(0, cost, gate, &mut vec![false; cols], 0, 0.0, &mut best);
    best
}

// ------------------------------------------------------------- clustering

/// Quadratic-time DBSCAN: clusters are connected components of core points
/// under the weighted metric; a border point joins the cluster of its
/// lowest-index core neighbour; other points are singletons. Labels are
/// numbered by first appearance.
pub fn reference_dbscan(points: &[RawPoint], w: [f64; 4], tau: f64, min_neighbors: usize) -> Vec<usize> {
    let n = points.len();
    let dist = |a: &RawPoint, b: &RawPoint| {
        let d = [w[0] * (a.x - b.x), w[1] * (a.y - b.y), w[2] * (a.z - b.z), w[3] * (a.vd - b.vd)];
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let nb: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && dist(&points[i], &points[j]) <= tau).collect())
        .collect();
    let core: Vec<bool> = nb.iter().map(|v| v.len() >= min_neighbors).collect();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = next;
        while let Some(i) = stack.pop() {
            for &j in &nb[i] {
                if core[j] && comp[j] == usize::MAX {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    let raw: Vec<usize> = (0..n)
        .map(|i| {
            if core[i] {
                comp[i]
            } else if let Some(&c) = nb[i].iter().find(|&&j| core[j]) {
                comp[c]
            } else {
                let id = next;
                next += 1;
                id
            }
        })
        .collect();
    canonical(&raw)
}

/// Relabel by order of first appearance.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let len = map.len();
            *map.entry(*l).or_insert(len)
        })
        .collect()
}

// ------------------------------------------------------------- matching

/// Score one frame by repeatedly taking the globally closest remaining
/// pair within the radius. Returns `(tp, fp, fn, error_sum)`.
pub fn reference_frame_score(out: &[[f64; 3]], truth: &[[f64; 3]], radius: f64) -> (u64, u64, u64, f64) {
    let d = |a: [f64; 3], b: [f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let mut o_free = vec![true; out.len()];
    let mut t_free = vec![true; truth.len()];
    let (mut tp, mut err) = (0u64, 0.0);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, o) in out.iter().enumerate() {
            for (j, t) in truth.iter().enumerate() {
                if o_free[i] && t_free[j] {
                    let dist = d(*o, *t);
                    if dist <= radius && best.is_none_or(|b| dist < b.0) {
                        best = Some((dist, i, j));
                    }
                }
            }
        }
        match best {
            Some((dist, i, j)) => {
                o_free[i] = false;
                t_free[j] = false;
                tp += 1;
                err += dist;
            }
            None => break,
        }
    }
    (tp, out.len() as u64 - tp, truth.len() as u64 - tp, err)
}

// ------------------------------------------------------------- confidence

/// Direct rollout of `C = gamma (C' + I)` for one object seen on the frames
/// where `hits` is true; after more than `max_coast` consecutive misses the
/// object is forgotten and the next hit starts from zero.
pub fn confidence_rollout(hits: &[bool], gamma: f64, max_coast: usize) -> Vec<Option<f64>> {
    let mut c: Option<f64> = None;
    let mut misses = 0;
    hits.iter()
        .map(|&h| {
            if h {
                let next = match c {
                    Some(prev) if misses <= max_coast => gamma * (prev + 1.0),
                    _ => 0.0,
                };
                c = Some(next);
                misses = 0;
                Some(next)
            } else {
                if let Some(prev) = c {
                    misses += 1;
                    c = (misses <= max_coast).then_some(gamma * prev);
                }
                None
            }
        })
        .collect()
}

// ----------------------------------------------------- synthetic clutter

/// A single-cube Gaussian clutter source with independent features.
pub struct GaussianCube {
    pub center: [f64; 3],
    pub mean: [f64; 5],
    pub sd: [f64; 5],
}

pub fn clutter_grid() -> CubeGrid {
    CubeGrid::new(40.0, [0.0, -200.0, -40.0], [400.0, 400.0, 80.0]).unwrap()
}

pub fn gaussian_cubes(r: &mut ChaCha8Rng, count: usize) -> Vec<GaussianCube> {
    (0..count)
        .map(|i| GaussianCube {
            center: [20.0 + 40.0 * (i % 10) as f64, -180.0 + 40.0 * (i / 10) as f64, -20.0],
            mean: std::array::from_fn(|_| r.random_range(-100.0..20.0)),
            sd: std::array::from_fn(|_| r.random_range(1.0..3.0)),
        })
        .collect()
}

pub fn clutter_point(r: &mut ChaCha8Rng, c: &GaussianCube, offset_sd: f64) -> RawPoint {
    let s: [f64; 5] = std::array::from_fn(|d| c.mean[d] + c.sd[d] * (offset_sd + normal(r)));
    RawPoint::from_array([
        c.center[0] + r.random_range(-19.0..19.0),
        c.center[1] + r.random_range(-19.0..19.0),
        c.center[2] + r.random_range(-19.0..19.0),
        r.random_range(-3.0..3.0),
        s[0],
        s[1],
        s[2],
        s[3],
        s[4],
    ])
}

/// Frames of purely Gaussian clutter, `per_cube` points per cube per frame.
pub fn clutter_frames(r: &mut ChaCha8Rng, cubes: &[GaussianCube], frames: u64, first: u64, per_cube: usize) -> Vec<Frame> {
    (first..first + frames)
        .map(|i| {
            let pts = cubes.iter().flat_map(|c| (0..per_cube).map(|_| clutter_point(r, c, 0.0)).collect::<Vec<_>>()).collect();
            Frame::new(i, pts)
        })
        .collect()
}

/// A point with every feature `k` standard deviations above the cube mean,
/// with a small spread of its own.
pub fn offset_point(r: &mut ChaCha8Rng, c: &GaussianCube, k: f64) -> RawPoint {
    let s: [f64; 5] = std::array::from_fn(|d| c.mean[d] + c.sd[d] * (k + 0.25 * normal(r)));
    RawPoint::from_array([c.center[0], c.center[1], c.center[2], 0.0, s[0], s[1], s[2], s[3], s[4]])
}

/// Noise flags for points in modeled cubes; points elsewhere are always kept
/// and say nothing about the threshold.
pub fn modeled_mask(model: &NoiseFingerprintModel, f: &Frame) -> Vec<bool> {
    f.points.iter().filter(|p| model.distance(p).is_some()).map(|p| model.is_noise(p)).collect()
}

pub fn removal_in_modeled(model: &NoiseFingerprintModel, frames: &[Frame]) -> f64 {
    let flags: Vec<bool> = frames.iter().flat_map(|f| modeled_mask(model, f)).collect();
    flags.iter().filter(|m| **m).count() as f64 / flags.len() as f64
}

// ------------------------------------------------------------- normality

pub fn gaussian_sample(r: &mut rand_chacha::ChaCha8Rng, n: usize, chol: &[Vec<f64>]) -> Vec<[f64; 5]> {
    (0..n)
        .map(|_| {
            let e: [f64; 5] = std::array::from_fn(|_| normal(r));
            std::array::from_fn(|i| (0..=i).map(|j| chol[i][j] * e[j]).sum())
        })
        .collect()
}

pub fn lower_cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = if i == j { (a[i][i] - s).sqrt() } else { (a[i][j] - s) / l[j][j] };
        }
    }
    l
}

/// Acceptance rate of Gaussian draws and rejection rate of uniform draws.
pub fn hz_rates(seed: u64, trials: usize, n: usize) -> (f64, f64) {
    let mut r = rng(seed);
    let mut accepted = 0;
    let mut rejected = 0;
    for _ in 0..trials {
        let cov = random_spd(&mut r, 5, 0.3);
        let g = gaussian_sample(&mut r, n, &lower_cholesky(&cov));
        accepted += hz_test(&g, 0.05).is_gaussian() as usize;
        let u: Vec<[f64; 5]> = (0..n).map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0))).collect();
        rejected += !hz_test(&u, 0.05).is_gaussian() as usize;
    }
    (accepted as f64 / trials as f64, rejected as f64 / trials as f64)
}

// ------------------------------------------------------------- filtering

/// Cartesian constant velocity on `[x, y, z, vx, vy, vz]` with white
/// acceleration noise.
pub struct LinearCv {
    pub q: f64,
}

impl LinearCv {
    pub fn f(dt: f64) -> DMatrix<f64> {
        let mut f = DMatrix::identity(6, 6);
        for i in 0..3 {
            f[(i, i + 3)] = dt;
        }
        f
    }

    pub fn noise(q: f64, dt: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(6, 6);
        for i in 0..3 {
            m[(i, i)] = q * dt.powi(3) / 3.0;
            m[(i, i + 3)] = q * dt.powi(2) / 2.0;
            m[(i + 3, i)] = q * dt.powi(2) / 2.0;
            m[(i + 3, i + 3)] = q * dt;
        }
        m
    }
}

impl MotionModel for LinearCv {
    fn dim(&self) -> usize {
        6
    }
    fn propagate(&self, x: &DVector<f64>, dt: f64) -> DVector<f64> {
        Self::f(dt) * x
    }
    fn process_noise(&self, dt: f64) -> DMatrix<f64> {
        Self::noise(self.q, dt)
    }
}

pub struct Kalman {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl Kalman {
    pub fn predict(&mut self, q: f64, dt: f64) {
        let f = LinearCv::f(dt);
        self.x = &f * &self.x;
        self.p = &f * &self.p * f.transpose() + LinearCv::noise(q, dt);
    }

    pub fn update(&mut self, z: &DVector<f64>, r: &DMatrix<f64>) {
        let h = DMatrix::from_fn(3, 6, |i, j| if i == j { 1.0 } else { 0.0 });
        let s = &h * &self.p * h.transpose() + r;
        let k = &self.p * h.transpose() * s.try_inverse().unwrap();
        self.x = &self.x + &k * (z - &h * &self.x);
        self.p = (DMatrix::identity(6, 6) - &k * &h) * &self.p;
    }
}

/// Largest deviation of the unscented transform from the exact moments of
/// random affine maps.
pub fn ut_affine_worst(seed: u64, trials: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = r.random_range(1..=7);
        let k = r.random_range(1..=5);
        let a = DMatrix::from_fn(k, n, |_, _| normal(&mut r));
        let b = DVector::from_fn(k, |_, _| 10.0 * normal(&mut r));
        let mean = DVector::from_fn(n, |_, _| 50.0 * normal(&mut r));
        let s = random_spd(&mut r, n, 0.1);
        let cov = DMatrix::from_fn(n, n, |i, j| s[i][j]);
        let (m, c) = unscented_transform(&mean, &cov, |x| &a * x + &b, &UtParams::default(), &[]).unwrap();
        let want_m = &a * &mean + &b;
        let want_c = &a * &cov * a.transpose();
        worst = worst.max((m - want_m).amax()).max((c - want_c).amax());
    }
    worst
}

/// Largest position gap between an IMM of two identical linear models and
/// a plain Kalman filter on a noisy straight track with periodic misses.
pub fn imm_kalman_gap(seed: u64, frames: usize, dt: f64) -> f64 {
    let (q, sigma) = (2.0, 1.5);
    let r = DMatrix::from_diagonal_element(3, 3, sigma * sigma);
    let filter = ImmFilter::new(
        vec![Box::new(LinearCv { q }), Box::new(LinearCv { q })],
        DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]),
        r.clone(),
        UtParams::default(),
    )
    .unwrap();

    let mut g = rng(seed);
    let x0 = DVector::from_row_slice(&[300.0, -50.0, 80.0, 0.0, 0.0, 0.0]);
    let p0 = DMatrix::from_diagonal(&DVector::from_row_slice(&[4.0, 4.0, 4.0, 100.0, 100.0, 100.0]));
    let mut state = filter.init(Gaussian { mean: x0.clone(), cov: p0.clone() });
    let mut kf = Kalman { x: x0, p: p0 };

    let mut truth = [300.0, -50.0, 80.0];
    let vel = [12.0, 7.0, -1.5];
    let mut worst: f64 = 0.0;
    for step in 0..frames {
        for i in 0..3 {
            truth[i] += vel[i] * dt;
        }
        let z = DVector::from_fn(3, |i, _| truth[i] + sigma * normal(&mut g));
        let pred = filter.predict(&state, dt).unwrap();
        kf.predict(q, dt);
        // Every fifth frame is a missed detection.
        if step % 5 == 4 {
            state = pred.coast();
        } else {
            state = filter.update(&pred, &z).unwrap();
            kf.update(&z, &r);
        }
        let est = filter.combined(&state.estimates, &state.probs);
        for i in 0..3 {
            worst = worst.max((est.mean[i] - kf.x[i]).abs());
        }
    }
    worst
}

pub fn pos_gap(a: &State, b: &State) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Largest CTRV-vs-CV position gap for turn rates within 1e-8 rad/s.
pub fn ctrv_cv_worst(seed: u64, trials: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let phi = r.random_range(-3.1..3.1);
        let theta = r.random_range(-0.5..0.5);
        let v = r.random_range(0.0..40.0);
        let dt = r.random_range(0.01..1.0);
        let omega = r.random_range(-1e-8..1e-8);
        let s: State = [r.random_range(-500.0..500.0), r.random_range(-500.0..500.0), 50.0, phi, theta, v, omega];
        let mut cv_state = s;
        cv_state[6] = 0.0;
        worst = worst.max(pos_gap(&ctrv_propagate(&s, dt), &cv_propagate(&cv_state, dt)));
    }
    worst
}

/// Largest relative error of the fingerprint distance against an explicit
/// inverse of the regularised covariance, over random SPD cubes.
pub fn mahalanobis_worst(seed: u64, trials: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let spd = random_spd(&mut r, 5, 0.5);
        let sigma_hat: [[f64; 5]; 5] = std::array::from_fn(|i| std::array::from_fn(|j| spd[i][j]));
        let mu_z: [f64; 5] = std::array::from_fn(|_| r.random_range(-80.0..10.0));
        let sigma_z: [f64; 5] = std::array::from_fn(|_| r.random_range(0.5..5.0));
        let mu_hat: [f64; 5] = std::array::from_fn(|_| 0.1 * normal(&mut r));
        let eps = 1e-6;
        let params = CubeParams::new(CubeId([0, 0, 0]), mu_z, sigma_z, mu_hat, sigma_hat, 100, true, Some(0.5), eps).unwrap();
        let s: [f64; 5] = std::array::from_fn(|d| mu_z[d] + sigma_z[d] * 3.0 * normal(&mut r));
        let p = RawPoint::from_array([0.0, 0.0, 0.0, 0.0, s[0], s[1], s[2], s[3], s[4]]);

        let mut reg = spd.clone();
        for (d, row) in reg.iter_mut().enumerate() {
            row[d] += eps;
        }
        let diff: Vec<f64> = (0..5).map(|d| (s[d] - mu_z[d]) / sigma_z[d] - mu_hat[d]).collect();
        let want = quad_form(&diff, &invert(&reg)).sqrt();
        let got = mahalanobis(&p, &params).unwrap();
        worst = worst.max((got - want).abs() / want.max(1e-300));
    }
    worst
}

/// Held-out removal over modeled cubes at k = 80, and the kept fraction of
/// points offset by 4 sigma from their cube.
pub fn held_out_percentile(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let cubes = gaussian_cubes(&mut r, 50);
    let train = clutter_frames(&mut r, &cubes, 60, 0, 4);
    let model = fit_model(&train, clutter_grid(), FitOptions::with_k(80.0)).unwrap();
    let test = clutter_frames(&mut r, &cubes, 60, 60, 4);
    let removal = removal_in_modeled(&model, &test);
    let uav: Vec<RawPoint> = (0..2000).map(|i| offset_point(&mut r, &cubes[i % cubes.len()], 4.0)).collect();
    let kept = filter_frame(&model, &Frame::new(999, uav.clone())).kept.points.len();
    (removal, kept as f64 / uav.len() as f64)
}

/// Random rectangular instances where the Hungarian total differs from
/// exhaustive search.
pub fn hungarian_mismatches(seed: u64, trials: usize) -> usize {
    let mut r = rng(seed);
    let mut mismatches = 0;
    for _ in 0..trials {
        let rows = r.random_range(1..=6);
        let cols = r.random_range(1..=6);
        let cost: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| r.random_range(0.0..100.0)).collect()).collect();
        let a = hungarian(&cost);
        let mut seen = vec![false; cols];
        let mut valid = a.iter().flatten().count() == rows.min(cols);
        for c in a.iter().flatten() {
            valid &= !seen[*c];
            seen[*c] = true;
        }
        let total: f64 = a.iter().enumerate().filter_map(|(i, c)| c.map(|c| cost[i][c])).sum();
        if !valid || (total - brute_force_assignment(&cost)).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    mismatches
}
