//! Point-level filtering with per-cube noise fingerprints.
//!
//! Every cube of the grid gets its own model of the five signal metrics of
//! clutter: per-feature z-score statistics followed by a maximum-likelihood
//! Gaussian over the standardised vectors. Cubes whose standardised sample
//! fails the Henze-Zirkler test, or that hold too few points, stay
//! unmodeled and their points are always passed on. A point in a modeled cube
//! is removed when its Mahalanobis distance to the cube fingerprint is below
//! a single global threshold, the k-th percentile of the distances of all
//! fitting points.

mod hz;

pub use hz::{hz_test, HzOutcome};

use std::collections::{BTreeMap, HashMap};

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::percentile_sorted;
use crate::types::{dist3, CubeGrid, CubeId, Frame, RawPoint, SignalVector, SIGNAL_DIM};

type Vec5 = SVector<f64, SIGNAL_DIM>;
type Mat5 = SMatrix<f64, SIGNAL_DIM, SIGNAL_DIM>;

/// Fitting knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Percentile of pooled fitting distances used as the threshold.
    pub k: f64,
    pub min_samples: usize,
    /// Significance level of the normality gate.
    pub alpha: f64,
    /// Diagonal regularisation of the fitted covariance.
    pub epsilon: f64,
    /// Cubes with more points are tested on an evenly strided subsample.
    pub hz_max_samples: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            k: 80.0,
            min_samples: 50,
            alpha: 0.05,
            epsilon: 1e-6,
            hz_max_samples: 4000,
        }
    }
}

impl FitOptions {
    pub fn with_k(k: f64) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k < 100.0) {
            return Err(Error::InvalidConfig(format!("percentile k must lie in (0, 100), got {}", self.k)));
        }
        if !(self.epsilon > 0.0) || !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("epsilon must be positive and alpha in (0, 1)".into()));
        }
        if self.min_samples < SIGNAL_DIM + 2 {
            return Err(Error::InvalidConfig(format!(
                "min_samples must be at least {}",
                SIGNAL_DIM + 2
            )));
        }
        Ok(())
    }
}

/// Serialized form of [`CubeParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CubeParamsData {
    cube: CubeId,
    mu_z: [f64; SIGNAL_DIM],
    sigma_z: [f64; SIGNAL_DIM],
    mu_hat: [f64; SIGNAL_DIM],
    sigma_hat: [[f64; SIGNAL_DIM]; SIGNAL_DIM],
    sample_count: usize,
    modeled: bool,
    #[serde(default)]
    hz_p_value: Option<f64>,
    epsilon: f64,
}

/// Fingerprint of one cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CubeParamsData", into = "CubeParamsData")]
pub struct CubeParams {
    pub cube: CubeId,
    pub mu_z: [f64; SIGNAL_DIM],
    /// Population standard deviation per feature; zeros replaced by 1.
    pub sigma_z: [f64; SIGNAL_DIM],
    pub mu_hat: [f64; SIGNAL_DIM],
    pub sigma_hat: [[f64; SIGNAL_DIM]; SIGNAL_DIM],
    pub sample_count: usize,
    pub modeled: bool,
    pub hz_p_value: Option<f64>,
    pub epsilon: f64,
    /// Lower Cholesky factor of `sigma_hat + epsilon I`.
    chol: Mat5,
}

impl TryFrom<CubeParamsData> for CubeParams {
    type Error = Error;

    fn try_from(d: CubeParamsData) -> Result<Self> {
        CubeParams::new(
            d.cube,
            d.mu_z,
            d.sigma_z,
            d.mu_hat,
            d.sigma_hat,
            d.sample_count,
            d.modeled,
            d.hz_p_value,
            d.epsilon,
        )
    }
}

impl From<CubeParams> for CubeParamsData {
    fn from(c: CubeParams) -> Self {
        Self {
            cube: c.cube,
            mu_z: c.mu_z,
            sigma_z: c.sigma_z,
            mu_hat: c.mu_hat,
            sigma_hat: c.sigma_hat,
            sample_count: c.sample_count,
            modeled: c.modeled,
            hz_p_value: c.hz_p_value,
            epsilon: c.epsilon,
        }
    }
}

impl CubeParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cube: CubeId,
        mu_z: [f64; SIGNAL_DIM],
        sigma_z: [f64; SIGNAL_DIM],
        mu_hat: [f64; SIGNAL_DIM],
        sigma_hat: [[f64; SIGNAL_DIM]; SIGNAL_DIM],
        sample_count: usize,
        modeled: bool,
        hz_p_value: Option<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let finite = mu_z
            .iter()
            .chain(&sigma_z)
            .chain(&mu_hat)
            .chain(sigma_hat.iter().flatten())
            .all(|v| v.is_finite());
        if !finite || sigma_z.iter().any(|s| *s <= 0.0) || !(epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cube {cube}: parameters must be finite with positive scales"
            )));
        }
        let mut m = Mat5::from_fn(|r, c| sigma_hat[r][c]);
        if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
            return Err(Error::CovarianceNotPositiveDefinite(format!(
                "cube {cube}: covariance is not symmetric"
            )));
        }
        for d in 0..SIGNAL_DIM {
            m[(d, d)] += epsilon;
        }
        let chol = nalgebra::linalg::Cholesky::new(m)
            .ok_or_else(|| Error::CovarianceNotPositiveDefinite(format!("cube {cube}")))?
            .l();
        Ok(Self {
            cube,
            mu_z,
            sigma_z,
            mu_hat,
            sigma_hat,
            sample_count,
            modeled,
            hz_p_value,
            epsilon,
            chol,
        })
    }

    /// Z-scored signal vector.
    pub fn standardize(&self, s: &SignalVector) -> [f64; SIGNAL_DIM] {
        std::array::from_fn(|d| (s.0[d] - self.mu_z[d]) / self.sigma_z[d])
    }

    /// Mahalanobis distance of an already standardised vector.
    pub fn distance_z(&self, z: &[f64; SIGNAL_DIM]) -> f64 {
        let diff = Vec5::from_fn(|d, _| z[d] - self.mu_hat[d]);
        let y = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        y.norm()
    }
}

/// Mahalanobis distance of a point to a cube fingerprint, or `None` when
/// the cube is unmodeled.
pub fn mahalanobis(p: &RawPoint, params: &CubeParams) -> Option<f64> {
    if !params.modeled {
        return None;
    }
    Some(params.distance_z(&params.standardize(&p.signal_vector())))
}

/// Serialized form of [`NoiseFingerprintModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelData {
    grid: CubeGrid,
    k: f64,
    tau_sim: f64,
    fitted_at_frame: u64,
    options: FitOptions,
    cubes: Vec<CubeParams>,
}

/// Fitted point-level filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelData", into = "ModelData")]
pub struct NoiseFingerprintModel {
    pub grid: CubeGrid,
    pub k: f64,
    pub tau_sim: f64,
    pub fitted_at_frame: u64,
    pub options: FitOptions,
    pub cubes: HashMap<CubeId, CubeParams>,
}

impl TryFrom<ModelData> for NoiseFingerprintModel {
    type Error = Error;

    fn try_from(d: ModelData) -> Result<Self> {
        d.grid.validate()?;
        if !(d.tau_sim >= 0.0) || !(d.k > 0.0 && d.k < 100.0) {
            return Err(Error::InvalidConfig("model needs tau_sim >= 0 and k in (0, 100)".into()));
        }
        Ok(Self {
            grid: d.grid,
            k: d.k,
            tau_sim: d.tau_sim,
            fitted_at_frame: d.fitted_at_frame,
            options: d.options,
            cubes: d.cubes.into_iter().map(|c| (c.cube, c)).collect(),
        })
    }
}

impl From<NoiseFingerprintModel> for ModelData {
    fn from(m: NoiseFingerprintModel) -> Self {
        let mut cubes: Vec<CubeParams> = m.cubes.into_values().collect();
        cubes.sort_by_key(|c| c.cube);
        Self {
            grid: m.grid,
            k: m.k,
            tau_sim: m.tau_sim,
            fitted_at_frame: m.fitted_at_frame,
            options: m.options,
            cubes,
        }
    }
}

impl NoiseFingerprintModel {
    pub fn modeled_cubes(&self) -> usize {
        self.cubes.values().filter(|c| c.modeled).count()
    }

    /// Mahalanobis distance of a point, or `None` when it is outside the
    /// volume or in an unmodeled cube.
    pub fn distance(&self, p: &RawPoint) -> Option<f64> {
        let id = self.grid.cube_of(p).cube()?;
        mahalanobis(p, self.cubes.get(&id)?)
    }

    /// Whether a point is classified as clutter.
    pub fn is_noise(&self, p: &RawPoint) -> bool {
        self.distance(p).is_some_and(|d| d < self.tau_sim)
    }
}

/// Fit per-cube parameters from `samples` grouped by cube.
fn fit_cube(cube: CubeId, samples: &[[f64; SIGNAL_DIM]], opts: &FitOptions) -> Result<CubeParams> {
    let n = samples.len();
    let nf = n as f64;
    let mut mu_z = [0.0; SIGNAL_DIM];
    for s in samples {
        for d in 0..SIGNAL_DIM {
            mu_z[d] += s[d];
        }
    }
    for m in &mut mu_z {
        *m /= nf;
    }
    let mut var = [0.0; SIGNAL_DIM];
    for s in samples {
        for d in 0..SIGNAL_DIM {
            var[d] += (s[d] - mu_z[d]).powi(2);
        }
    }
    let sigma_z: [f64; SIGNAL_DIM] = std::array::from_fn(|d| {
        let sd = (var[d] / nf).sqrt();
        if sd > 1e-12 * mu_z[d].abs().max(1.0) {
            sd
        } else {
            1.0
        }
    });
    let z: Vec<[f64; SIGNAL_DIM]> = samples
        .iter()
        .map(|s| std::array::from_fn(|d| (s[d] - mu_z[d]) / sigma_z[d]))
        .collect();

    let mut mu_hat = [0.0; SIGNAL_DIM];
    for v in &z {
        for d in 0..SIGNAL_DIM {
            mu_hat[d] += v[d];
        }
    }
    for m in &mut mu_hat {
        *m /= nf;
    }
    let mut sigma_hat = [[0.0; SIGNAL_DIM]; SIGNAL_DIM];
    for v in &z {
        for r in 0..SIGNAL_DIM {
            for c in 0..=r {
                sigma_hat[r][c] += (v[r] - mu_hat[r]) * (v[c] - mu_hat[c]);
            }
        }
    }
    for r in 0..SIGNAL_DIM {
        for c in 0..=r {
            sigma_hat[r][c] /= nf;
            sigma_hat[c][r] = sigma_hat[r][c];
        }
    }

    let (modeled, p_value) = if n < opts.min_samples {
        (false, None)
    } else {
        let outcome = if n > opts.hz_max_samples {
            let stride = n as f64 / opts.hz_max_samples as f64;
            let sub: Vec<_> = (0..opts.hz_max_samples)
                .map(|i| z[(i as f64 * stride) as usize])
                .collect();
            hz_test(&sub, opts.alpha)
        } else {
            hz_test(&z, opts.alpha)
        };
        (outcome.is_gaussian(), outcome.p_value())
    };

    CubeParams::new(cube, mu_z, sigma_z, mu_hat, sigma_hat, n, modeled, p_value, opts.epsilon)
}

fn group_by_cube<'a>(
    grid: &CubeGrid,
    points: impl Iterator<Item = &'a RawPoint>,
) -> BTreeMap<CubeId, Vec<[f64; SIGNAL_DIM]>> {
    let mut out: BTreeMap<CubeId, Vec<[f64; SIGNAL_DIM]>> = BTreeMap::new();
    for p in points {
        if let Some(id) = grid.cube_of(p).cube() {
            out.entry(id).or_default().push(p.signal_vector().0);
        }
    }
    out
}

fn fit_grouped(
    groups: BTreeMap<CubeId, Vec<[f64; SIGNAL_DIM]>>,
    grid: CubeGrid,
    opts: FitOptions,
    fitted_at_frame: u64,
) -> Result<NoiseFingerprintModel> {
    opts.validate()?;
    grid.validate()?;
    if groups.values().all(|g| g.is_empty()) {
        return Err(Error::EmptyInput("no in-volume noise points to fit"));
    }
    let mut cubes = HashMap::with_capacity(groups.len());
    let mut pool = Vec::new();
    for (id, samples) in &groups {
        let params = fit_cube(*id, samples, &opts)?;
        if params.modeled {
            for s in samples {
                pool.push(params.distance_z(&std::array::from_fn(|d| {
                    (s[d] - params.mu_z[d]) / params.sigma_z[d]
                })));
            }
        }
        cubes.insert(*id, params);
    }
    if pool.is_empty() {
        return Err(Error::ModelDegenerate);
    }
    pool.sort_by(|a, b| a.total_cmp(b));
    let tau_sim = percentile_sorted(&pool, opts.k);
    Ok(NoiseFingerprintModel {
        grid,
        k: opts.k,
        tau_sim,
        fitted_at_frame,
        options: opts,
        cubes,
    })
}

/// Fit a model on target-free frames.
pub fn fit_model(noise_frames: &[Frame], grid: CubeGrid, opts: FitOptions) -> Result<NoiseFingerprintModel> {
    if noise_frames.is_empty() {
        return Err(Error::EmptyInput("no frames to fit"));
    }
    let groups = group_by_cube(&grid, noise_frames.iter().flat_map(|f| f.points.iter()));
    let last = noise_frames.iter().map(|f| f.index).max().unwrap_or(0);
    fit_grouped(groups, grid, opts, last)
}

/// Result of [`filter_frame`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub kept: Frame,
    pub removed: Vec<RawPoint>,
}

/// Per-point removal decisions, aligned with `frame.points`.
pub fn noise_mask(model: &NoiseFingerprintModel, frame: &Frame) -> Vec<bool> {
    frame.points.iter().map(|p| model.is_noise(p)).collect()
}

/// Split a frame into kept and removed points, preserving order.
pub fn filter_frame(model: &NoiseFingerprintModel, frame: &Frame) -> FilterOutput {
    let mut kept = Vec::with_capacity(frame.points.len());
    let mut removed = Vec::new();
    for p in &frame.points {
        if model.is_noise(p) {
            removed.push(*p);
        } else {
            kept.push(*p);
        }
    }
    FilterOutput {
        kept: Frame {
            index: frame.index,
            timestamp_s: frame.timestamp_s,
            points: kept,
        },
        removed,
    }
}

/// When and how the model is refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdatePolicy {
    pub interval_frames: u64,
    pub window_frames: usize,
    pub exclusion_radius_m: f64,
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        Self {
            // Two days at 0.64 s per frame.
            interval_frames: 270_000,
            window_frames: 700,
            exclusion_radius_m: 10.0,
        }
    }
}

impl UpdatePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.interval_frames == 0 || self.window_frames == 0 || !(self.exclusion_radius_m >= 0.0) {
            return Err(Error::InvalidConfig(
                "update policy requires T > 0, N > 0 and a non-negative radius".into(),
            ));
        }
        Ok(())
    }
}

/// Refit on the most recent `policy.window_frames` frames, leaving out
/// points close to confirmed tracks of the same frame.
///
/// `track_positions[i]` belongs to `recent_frames[i]`; missing entries mean
/// no confirmed tracks. The threshold is recomputed over the refit pool.
pub fn update_model(
    model: &NoiseFingerprintModel,
    recent_frames: &[Frame],
    track_positions: &[Vec<[f64; 3]>],
    policy: &UpdatePolicy,
) -> Result<NoiseFingerprintModel> {
    policy.validate()?;
    if recent_frames.is_empty() {
        return Err(Error::EmptyInput("no frames for the model update"));
    }
    let start = recent_frames.len().saturating_sub(policy.window_frames);
    let r = policy.exclusion_radius_m;
    let empty = Vec::new();
    let kept = recent_frames[start..].iter().enumerate().flat_map(|(i, f)| {
        let tracks = track_positions.get(start + i).unwrap_or(&empty);
        f.points
            .iter()
            .filter(move |p| tracks.iter().all(|t| dist3(p.position(), *t) > r))
    });
    let groups = group_by_cube(&model.grid, kept);
    let last = recent_frames.iter().map(|f| f.index).max().unwrap_or(0);
    fit_grouped(groups, model.grid, model.options, last)
}
