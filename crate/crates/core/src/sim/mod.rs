//! Seeded scene simulator producing base-station point clouds with ground
//! truth.
//!
//! A [`SceneSpec`] describes the environment (per-cube clutter fingerprints,
//! ghost generators, UAV flights) and is turned into a [`Scene`] by
//! [`build_scene`]. Frames are a pure function of `(scene, frame_index)`.

mod path;
mod signal;

pub use path::{BuiltPath, PathGeometry, Shape};
pub use signal::{GaussianSpec, SignalDist, SignalSampler};

use nalgebra::SMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{fnv1a, mix_seed};
use crate::types::{norm3, CubeGrid, CubeId, Frame, RawPoint, FRAME_INTERVAL_S, SIGNAL_DIM};

/// Clutter emitted by one cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeClutter {
    pub cube: [i64; 3],
    /// Expected points per frame.
    pub rate: f64,
    /// Doppler drawn from U(-spread, spread).
    pub doppler_spread_mps: f64,
    pub signal: SignalDist,
}

/// Random layout of clutter cubes over one or more horizontal cube layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutterGenerator {
    pub layout_seed: u64,
    /// Expected clutter points per frame over the whole scene.
    pub total_rate: f64,
    pub min_range_m: f64,
    pub max_range_m: f64,
    pub half_fov_deg: f64,
    /// Cube z indices that carry clutter.
    pub layers: Vec<i64>,
    /// Log-normal spread of per-cube rates.
    pub rate_log_sigma: f64,
    pub non_gaussian_fraction: f64,
    /// Multiplier on the rate of non-Gaussian cubes.
    pub non_gaussian_rate_scale: f64,
    pub doppler_spread_mps: f64,
    pub mean_center: [f64; SIGNAL_DIM],
    pub mean_jitter: [f64; SIGNAL_DIM],
    /// Per-feature standard deviations are drawn from this range.
    pub sigma_range: [f64; 2],
    /// Strength of random feature correlations, 0 = independent.
    pub correlation: f64,
    /// Separation of the two mixture components, in feature standard deviations.
    pub mixture_separation: f64,
}

impl Default for ClutterGenerator {
    fn default() -> Self {
        Self {
            layout_seed: 0xC1u64,
            total_rate: 171.3,
            min_range_m: 60.0,
            max_range_m: 1000.0,
            half_fov_deg: 65.0,
            layers: vec![0],
            rate_log_sigma: 2.8,
            non_gaussian_fraction: 0.25,
            non_gaussian_rate_scale: 0.5,
            doppler_spread_mps: 3.2,
            mean_center: [8.0, 6.0, -100.0, -72.0, -76.0],
            mean_jitter: [3.0, 3.0, 3.0, 4.0, 4.0],
            sigma_range: [1.0, 3.0],
            correlation: 0.5,
            mixture_separation: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClutterSpec {
    Generated(ClutterGenerator),
    Explicit { cubes: Vec<CubeClutter> },
}

impl Default for ClutterSpec {
    fn default() -> Self {
        ClutterSpec::Generated(ClutterGenerator::default())
    }
}

/// Generator for ghost pseudo-tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GhostSpec {
    pub count: usize,
    pub lifetime_frames: [u64; 2],
    pub altitude_m: [f64; 2],
    pub range_m: [f64; 2],
    pub half_fov_deg: f64,
    pub speed_mps: [f64; 2],
    /// Maximum absolute turn rate, rad/s.
    pub max_turn_rate_rps: f64,
    /// Isotropic position jitter per frame, metres.
    pub jitter_m: f64,
    pub detection_prob: f64,
    /// When set, reported Doppler is unrelated to the ghost's motion.
    pub doppler_inconsistent: bool,
    pub doppler_magnitude_mps: [f64; 2],
    /// Probability that an inconsistent Doppler has the opposite sign of the
    /// true radial motion.
    pub doppler_flip_prob: f64,
    pub signal: SignalDist,
}

impl Default for GhostSpec {
    fn default() -> Self {
        Self {
            count: 30,
            lifetime_frames: [60, 160],
            altitude_m: [100.0, 300.0],
            range_m: [200.0, 900.0],
            half_fov_deg: 55.0,
            speed_mps: [3.0, 10.0],
            max_turn_rate_rps: 0.05,
            jitter_m: 1.5,
            detection_prob: 0.9,
            doppler_inconsistent: true,
            doppler_magnitude_mps: [3.0, 12.0],
            doppler_flip_prob: 0.8,
            signal: SignalDist::Gaussian(GaussianSpec::isotropic(
                [11.0, 9.0, -97.0, -68.0, -70.0],
                2.0,
            )),
        }
    }
}

/// UAV position and Doppler measurement noise.
///
/// Position noise is split into a radial and a cross-range part. The sample
/// is truncated to `clip_m` by rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementNoise {
    pub sigma_radial_m: f64,
    pub sigma_cross_m: f64,
    pub clip_m: f64,
    pub sigma_doppler_mps: f64,
}

impl Default for MeasurementNoise {
    fn default() -> Self {
        Self {
            sigma_radial_m: 0.3,
            sigma_cross_m: 2.0,
            clip_m: 3.0,
            sigma_doppler_mps: 0.25,
        }
    }
}

impl MeasurementNoise {
    /// The largest per-axis standard deviation.
    pub fn sigma(&self) -> f64 {
        self.sigma_radial_m.max(self.sigma_cross_m)
    }
}

/// Random dropout bursts (runs of missed detections).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropoutSpec {
    pub bursts_per_100_frames: f64,
    pub length_frames: [u64; 2],
}

impl Default for DropoutSpec {
    fn default() -> Self {
        Self {
            bursts_per_100_frames: 0.5,
            length_frames: [2, 4],
        }
    }
}

/// Properties shared by all UAV flights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavSpec {
    pub signal: SignalDist,
    pub noise: MeasurementNoise,
    pub detection_prob: f64,
    pub dropout: DropoutSpec,
}

impl Default for UavSpec {
    fn default() -> Self {
        Self {
            signal: SignalDist::Gaussian(GaussianSpec::isotropic(
                [18.0, 15.0, -95.0, -62.0, -60.0],
                1.5,
            )),
            noise: MeasurementNoise::default(),
            detection_prob: 0.95,
            dropout: DropoutSpec::default(),
        }
    }
}

/// One UAV flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub shape: String,
    pub speed_mps: f64,
    pub altitude_m: f64,
    pub center_xy: [f64; 2],
    pub scale_m: f64,
    #[serde(default)]
    pub heading_deg: f64,
    #[serde(default)]
    pub boresight_deg: f64,
    pub start_frame: u64,
    pub duration_frames: u64,
    #[serde(default)]
    pub detection_prob: Option<f64>,
    /// Extra dropouts as `[first_frame, length]`, relative to the start.
    #[serde(default)]
    pub dropouts: Vec<[u64; 2]>,
}

/// Additive shift of one cube's signal mean from `start_frame` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub cube: [i64; 3],
    pub start_frame: u64,
    pub offset: [f64; SIGNAL_DIM],
}

/// Complete description of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub frames: u64,
    pub frame_interval_s: f64,
    pub grid: CubeGrid,
    pub clutter: ClutterSpec,
    pub ghosts: GhostSpec,
    pub uav: UavSpec,
    pub paths: Vec<PathSpec>,
    pub drifts: Vec<DriftSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::benchmark_a()
    }
}

impl SceneSpec {
    /// The fixed benchmark scene: 1000 frames, eight sequential flights (one
    /// per shape), 30 ghost tracks and a 174:1 noise-to-UAV point ratio.
    pub fn benchmark_a() -> Self {
        let flight = |shape: &str, speed, alt, cx, cy, scale, heading, boresight, k: u64| PathSpec {
            shape: shape.to_string(),
            speed_mps: speed,
            altitude_m: alt,
            center_xy: [cx, cy],
            scale_m: scale,
            heading_deg: heading,
            boresight_deg: boresight,
            start_frame: k * 125,
            duration_frames: 125,
            detection_prob: None,
            dropouts: Vec::new(),
        };
        Self {
            seed: 2024,
            frames: 1000,
            frame_interval_s: FRAME_INTERVAL_S,
            grid: CubeGrid::default(),
            clutter: ClutterSpec::default(),
            ghosts: GhostSpec::default(),
            uav: UavSpec::default(),
            paths: vec![
                flight("circle", 10.0, 60.0, 420.0, -150.0, 110.0, 0.0, 0.0, 0),
                flight("line", 12.0, 90.0, 600.0, 200.0, 0.0, 0.0, 35.0, 1),
                flight("S", 9.0, 120.0, 300.0, 120.0, 90.0, 15.0, 0.0, 2),
                flight("figure8", 10.0, 75.0, 700.0, -300.0, 120.0, -20.0, 0.0, 3),
                flight("square", 8.0, 140.0, 520.0, 380.0, 70.0, 10.0, 0.0, 4),
                flight("diamond", 11.0, 50.0, 250.0, -40.0, 90.0, 0.0, 0.0, 5),
                flight("M", 9.0, 105.0, 800.0, 100.0, 70.0, -35.0, 0.0, 6),
                flight("star", 10.0, 130.0, 450.0, 0.0, 120.0, 5.0, 0.0, 7),
            ],
            drifts: Vec::new(),
        }
    }

    /// Same environment without UAV flights, driven by a different frame
    /// seed. Clutter layout is kept; ghosts and per-frame draws change.
    pub fn target_free(&self, salt: u64) -> Self {
        let mut s = self.clone();
        s.paths.clear();
        s.seed = mix_seed(self.seed, salt);
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.frame_interval_s.is_finite() && self.frame_interval_s > 0.0) {
            return Err(Error::InvalidConfig("frame interval must be positive".into()));
        }
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(self.uav.detection_prob) || !prob_ok(self.ghosts.detection_prob) {
            return Err(Error::InvalidConfig("detection probability outside [0, 1]".into()));
        }
        for p in &self.paths {
            if let Some(d) = p.detection_prob {
                if !prob_ok(d) {
                    return Err(Error::InvalidConfig(
                        "detection probability outside [0, 1]".into(),
                    ));
                }
            }
        }
        if self.ghosts.lifetime_frames[0] == 0
            || self.ghosts.lifetime_frames[0] > self.ghosts.lifetime_frames[1]
        {
            return Err(Error::InvalidConfig("ghost lifetime range is invalid".into()));
        }
        if self.uav.dropout.length_frames[0] > self.uav.dropout.length_frames[1] {
            return Err(Error::InvalidConfig("dropout length range is invalid".into()));
        }
        Ok(())
    }
}

/// Point provenance in the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLabel {
    Uav,
    Clutter,
    Ghost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtUav {
    pub id: u64,
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    /// Whether the UAV produced a point this frame.
    pub detected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtGhost {
    pub id: u64,
    pub pos: [f64; 3],
}

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    #[serde(rename = "t")]
    pub frame_index: u64,
    #[serde(rename = "ts")]
    pub timestamp_s: f64,
    pub uavs: Vec<GtUav>,
    #[serde(default)]
    pub ghosts: Vec<GtGhost>,
    /// One label per point of the matching frame, in the same order.
    pub labels: Vec<PointLabel>,
}

impl GroundTruthFrame {
    pub fn uav_positions(&self) -> Vec<[f64; 3]> {
        self.uavs.iter().map(|u| u.pos).collect()
    }
}

/// Kinematics of one ghost pseudo-track: constant speed and turn rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostTrack {
    pub id: u64,
    pub start_frame: u64,
    pub lifetime_frames: u64,
    pub origin: [f64; 3],
    pub heading: f64,
    pub speed_mps: f64,
    pub turn_rate_rps: f64,
}

impl GhostTrack {
    pub fn active(&self, frame: u64) -> bool {
        frame >= self.start_frame && frame < self.start_frame + self.lifetime_frames
    }

    pub fn state(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let (v, w, h0) = (self.speed_mps, self.turn_rate_rps, self.heading);
        let h = h0 + w * t;
        let (dx, dy) = if w.abs() < 1e-9 {
            (v * t * h0.cos(), v * t * h0.sin())
        } else {
            (v / w * (h.sin() - h0.sin()), v / w * (h0.cos() - h.cos()))
        };
        (
            [self.origin[0] + dx, self.origin[1] + dy, self.origin[2]],
            [v * h.cos(), v * h.sin(), 0.0],
        )
    }
}

/// A built UAV flight.
#[derive(Debug, Clone)]
pub struct UavFlight {
    pub id: u64,
    pub path: BuiltPath,
    pub start_frame: u64,
    pub duration_frames: u64,
    pub detection_prob: f64,
    /// Absolute `[first_frame, length]` dropout bursts.
    pub dropouts: Vec<[u64; 2]>,
}

impl UavFlight {
    pub fn active(&self, frame: u64) -> bool {
        frame >= self.start_frame && frame < self.start_frame + self.duration_frames
    }

    fn in_dropout(&self, frame: u64) -> bool {
        self.dropouts
            .iter()
            .any(|d| frame >= d[0] && frame < d[0] + d[1])
    }
}

struct BuiltCube {
    lo: [f64; 3],
    rate: f64,
    spread: f64,
    sampler: SignalSampler,
    drifts: Vec<(u64, [f64; SIGNAL_DIM])>,
}

/// Serializable summary of everything random in a built scene.
#[derive(Serialize)]
struct Layout<'a> {
    spec: &'a SceneSpec,
    cubes: &'a [CubeClutter],
    ghosts: &'a [GhostTrack],
    dropouts: Vec<&'a [[u64; 2]]>,
}

/// A validated, precomputed scene.
pub struct Scene {
    pub spec: SceneSpec,
    pub clutter: Vec<CubeClutter>,
    pub ghosts: Vec<GhostTrack>,
    pub flights: Vec<UavFlight>,
    cubes: Vec<BuiltCube>,
    uav_sampler: SignalSampler,
    ghost_sampler: SignalSampler,
    digest: u64,
}

impl std::fmt::Debug for Scene {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scene")
            .field("cubes", &self.clutter.len())
            .field("ghosts", &self.ghosts.len())
            .field("flights", &self.flights.len())
            .field("digest", &format_args!("{:016x}", self.digest))
            .finish()
    }
}

/// Validate a spec and precompute clutter cubes, ghost tracks, flight paths
/// and dropout schedules.
pub fn build_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let grid = spec.grid;
    let clutter = match &spec.clutter {
        ClutterSpec::Explicit { cubes } => cubes.clone(),
        ClutterSpec::Generated(g) => generate_clutter(g, &grid)?,
    };

    let mut cubes = Vec::with_capacity(clutter.len());
    for c in &clutter {
        let id = CubeId(c.cube);
        if !grid.contains_cube(id) {
            return Err(Error::InvalidConfig(format!("clutter cube {:?} outside grid", c.cube)));
        }
        if !(c.rate.is_finite() && c.rate >= 0.0) || !(c.doppler_spread_mps >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "clutter cube {:?}: rate and Doppler spread must be non-negative",
                c.cube
            )));
        }
        let sampler = SignalSampler::new(&c.signal, &format!("cube {:?}", c.cube))?;
        let drifts = spec
            .drifts
            .iter()
            .filter(|d| d.cube == c.cube)
            .map(|d| (d.start_frame, d.offset))
            .collect();
        cubes.push(BuiltCube {
            lo: grid.cube_min(id),
            rate: c.rate,
            spread: c.doppler_spread_mps,
            sampler,
            drifts,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x6057_7000));
    let ghosts = generate_ghosts(&spec.ghosts, spec.frames, &mut rng);

    let dt = spec.frame_interval_s;
    let mut flights = Vec::with_capacity(spec.paths.len());
    for (i, p) in spec.paths.iter().enumerate() {
        let shape: Shape = p.shape.parse()?;
        let path = BuiltPath::new(PathGeometry {
            shape,
            speed_mps: p.speed_mps,
            altitude_m: p.altitude_m,
            center_xy: p.center_xy,
            scale_m: p.scale_m,
            heading_deg: p.heading_deg,
            boresight_deg: p.boresight_deg,
            duration_s: p.duration_frames as f64 * dt,
        })?;
        let mut dropouts: Vec<[u64; 2]> = p
            .dropouts
            .iter()
            .map(|d| [p.start_frame + d[0], d[1]])
            .collect();
        dropouts.extend(generate_dropouts(&spec.uav.dropout, p.start_frame, p.duration_frames, &mut rng));
        flights.push(UavFlight {
            id: i as u64 + 1,
            path,
            start_frame: p.start_frame,
            duration_frames: p.duration_frames,
            detection_prob: p.detection_prob.unwrap_or(spec.uav.detection_prob),
            dropouts,
        });
    }

    let uav_sampler = SignalSampler::new(&spec.uav.signal, "uav signal")?;
    let ghost_sampler = SignalSampler::new(&spec.ghosts.signal, "ghost signal")?;

    let layout = Layout {
        spec,
        cubes: &clutter,
        ghosts: &ghosts,
        dropouts: flights.iter().map(|f| f.dropouts.as_slice()).collect(),
    };
    let digest = fnv1a(&serde_json::to_vec(&layout).expect("layout serializes"));

    Ok(Scene {
        spec: spec.clone(),
        clutter,
        ghosts,
        flights,
        cubes,
        uav_sampler,
        ghost_sampler,
        digest,
    })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn random_gaussian<R: Rng + ?Sized>(
    rng: &mut R,
    mean: [f64; SIGNAL_DIM],
    g: &ClutterGenerator,
) -> GaussianSpec {
    let sig: [f64; SIGNAL_DIM] = std::array::from_fn(|_| uniform(rng, g.sigma_range));
    // Correlation matrix from a random factor model, rescaled to unit
    // diagonal.
    let a = SMatrix::<f64, SIGNAL_DIM, 2>::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let raw = a * a.transpose() * g.correlation
        + SMatrix::<f64, SIGNAL_DIM, SIGNAL_DIM>::identity() * (1.0 - g.correlation.min(0.95));
    let mut cov = [[0.0; SIGNAL_DIM]; SIGNAL_DIM];
    for r in 0..SIGNAL_DIM {
        for c in 0..SIGNAL_DIM {
            let corr = raw[(r, c)] / (raw[(r, r)] * raw[(c, c)]).sqrt();
            cov[r][c] = corr * sig[r] * sig[c];
        }
    }
    for r in 0..SIGNAL_DIM {
        for c in 0..r {
            cov[c][r] = cov[r][c];
        }
    }
    GaussianSpec { mean, cov }
}

fn generate_clutter(g: &ClutterGenerator, grid: &CubeGrid) -> Result<Vec<CubeClutter>> {
    let mut rng = ChaCha8Rng::seed_from_u64(g.layout_seed);
    let dims = grid.dims();
    let mut ids = Vec::new();
    for &iz in &g.layers {
        if iz < 0 || iz >= dims[2] {
            return Err(Error::InvalidConfig(format!("clutter layer {iz} outside grid")));
        }
        for ix in 0..dims[0] {
            for iy in 0..dims[1] {
                let id = CubeId([ix, iy, iz]);
                let c = grid.cube_center(id);
                let r = (c[0] * c[0] + c[1] * c[1]).sqrt();
                let az = c[1].atan2(c[0]).to_degrees().abs();
                if r >= g.min_range_m && r <= g.max_range_m && az <= g.half_fov_deg {
                    ids.push(id);
                }
            }
        }
    }
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let ln = LogNormal::new(0.0, g.rate_log_sigma.max(0.0))
        .map_err(|e| Error::InvalidConfig(format!("rate spread: {e}")))?;
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let weight: f64 = ln.sample(&mut rng);
        let mean: [f64; SIGNAL_DIM] = std::array::from_fn(|i| {
            g.mean_center[i] + rng.random_range(-1.0..1.0) * g.mean_jitter[i]
        });
        let non_gaussian = rng.random_bool(g.non_gaussian_fraction.clamp(0.0, 1.0));
        let (signal, weight) = if non_gaussian {
            let a = random_gaussian(&mut rng, mean, g);
            let mut shifted = mean;
            for (i, m) in shifted.iter_mut().enumerate() {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                *m += sign * g.mixture_separation * a.cov[i][i].sqrt();
            }
            let b = random_gaussian(&mut rng, shifted, g);
            let w = rng.random_range(0.3..0.7);
            (
                SignalDist::Mixture {
                    weights: vec![w, 1.0 - w],
                    components: vec![a, b],
                },
                weight * g.non_gaussian_rate_scale,
            )
        } else {
            (SignalDist::Gaussian(random_gaussian(&mut rng, mean, g)), weight)
        };
        out.push(CubeClutter {
            cube: id.0,
            rate: weight,
            doppler_spread_mps: g.doppler_spread_mps,
            signal,
        });
    }
    let total: f64 = out.iter().map(|c| c.rate).sum();
    for c in &mut out {
        c.rate *= g.total_rate / total;
    }
    Ok(out)
}

fn generate_ghosts<R: Rng + ?Sized>(g: &GhostSpec, frames: u64, rng: &mut R) -> Vec<GhostTrack> {
    (0..g.count)
        .map(|i| {
            let lifetime = rng.random_range(g.lifetime_frames[0]..=g.lifetime_frames[1]);
            let latest_start = frames.saturating_sub(lifetime).max(1);
            let start_frame = rng.random_range(0..latest_start);
            let range = uniform(rng, g.range_m);
            let az = rng.random_range(-g.half_fov_deg..=g.half_fov_deg).to_radians();
            GhostTrack {
                id: i as u64 + 1,
                start_frame,
                lifetime_frames: lifetime,
                origin: [range * az.cos(), range * az.sin(), uniform(rng, g.altitude_m)],
                heading: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                speed_mps: uniform(rng, g.speed_mps),
                turn_rate_rps: rng.random_range(-1.0..=1.0) * g.max_turn_rate_rps,
            }
        })
        .collect()
}

fn generate_dropouts<R: Rng + ?Sized>(
    d: &DropoutSpec,
    start: u64,
    duration: u64,
    rng: &mut R,
) -> Vec<[u64; 2]> {
    let p = (d.bursts_per_100_frames / 100.0).clamp(0.0, 1.0);
    let mut out = Vec::new();
    let mut f = 0;
    while f < duration {
        if p > 0.0 && rng.random_bool(p) {
            let len = rng.random_range(d.length_frames[0]..=d.length_frames[1]);
            out.push([start + f, len]);
            f += len.max(1);
        } else {
            f += 1;
        }
    }
    out
}

/// Orthonormal basis `(radial, cross1, cross2)` at a position.
fn los_basis(pos: [f64; 3]) -> [[f64; 3]; 3] {
    let r = norm3(pos).max(1e-9);
    let u = [pos[0] / r, pos[1] / r, pos[2] / r];
    let helper = if u[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let c1 = cross(helper, u);
    let n1 = norm3(c1);
    let c1 = [c1[0] / n1, c1[1] / n1, c1[2] / n1];
    let c2 = cross(u, c1);
    [u, c1, c2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Line-of-sight velocity component (positive = receding).
pub fn true_radial_velocity(pos: [f64; 3], vel: [f64; 3]) -> f64 {
    let r = norm3(pos);
    if r == 0.0 {
        0.0
    } else {
        dot(pos, vel) / r
    }
}

fn point(pos: [f64; 3], vd: f64, s: [f64; SIGNAL_DIM]) -> RawPoint {
    RawPoint {
        x: pos[0],
        y: pos[1],
        z: pos[2],
        vd,
        snr: s[0],
        scr: s[1],
        nl: s[2],
        sp: s[3],
        rp: s[4],
    }
}

impl Scene {
    /// Deterministic digest of the spec and all precomputed random layout.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn frame_count(&self) -> u64 {
        self.spec.frames
    }

    /// Position of flight `path_id` (0-based) `t` seconds after it starts.
    pub fn uav_position(&self, path_id: usize, t: f64) -> Result<[f64; 3]> {
        let flight = self
            .flights
            .get(path_id)
            .ok_or_else(|| Error::InvalidConfig(format!("no path with index {path_id}")))?;
        flight.path.position(t)
    }

    /// Frame `index` and its ground truth. Pure in `(self, index)`.
    pub fn generate_frame(&self, index: u64) -> (Frame, GroundTruthFrame) {
        let dt = self.spec.frame_interval_s;
        let t_abs = index as f64 * dt;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.spec.seed, index));
        let mut pts: Vec<(RawPoint, PointLabel)> = Vec::new();

        for c in &self.cubes {
            if c.rate <= 0.0 {
                continue;
            }
            let n = Poisson::new(c.rate).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
            for _ in 0..n {
                let e = self.spec.grid.edge_m;
                let pos = [
                    c.lo[0] + rng.random::<f64>() * e,
                    c.lo[1] + rng.random::<f64>() * e,
                    c.lo[2] + rng.random::<f64>() * e,
                ];
                let vd = if c.spread > 0.0 {
                    rng.random_range(-c.spread..=c.spread)
                } else {
                    0.0
                };
                let mut s = c.sampler.sample(&mut rng);
                for (start, off) in &c.drifts {
                    if index >= *start {
                        for (si, oi) in s.iter_mut().zip(off) {
                            *si += oi;
                        }
                    }
                }
                pts.push((point(pos, vd, s), PointLabel::Clutter));
            }
        }

        let noise = &self.spec.uav.noise;
        let mut uavs = Vec::new();
        for f in &self.flights {
            if !f.active(index) {
                continue;
            }
            let t = (index - f.start_frame) as f64 * dt;
            let (pos, vel) = f.path.state(t).expect("active flight time is in range");
            let detected = !f.in_dropout(index) && rng.random_bool(f.detection_prob);
            if detected {
                let basis = los_basis(pos);
                let offset = loop {
                    let nr = gauss(&mut rng, noise.sigma_radial_m);
                    let n1 = gauss(&mut rng, noise.sigma_cross_m);
                    let n2 = gauss(&mut rng, noise.sigma_cross_m);
                    if (nr * nr + n1 * n1 + n2 * n2).sqrt() <= noise.clip_m || noise.clip_m <= 0.0 {
                        break std::array::from_fn::<f64, 3, _>(|a| {
                            nr * basis[0][a] + n1 * basis[1][a] + n2 * basis[2][a]
                        });
                    }
                };
                let meas = [pos[0] + offset[0], pos[1] + offset[1], pos[2] + offset[2]];
                let vd = true_radial_velocity(pos, vel) + gauss(&mut rng, noise.sigma_doppler_mps);
                let s = self.uav_sampler.sample(&mut rng);
                pts.push((point(meas, vd, s), PointLabel::Uav));
            }
            uavs.push(GtUav {
                id: f.id,
                pos,
                vel,
                detected,
            });
        }

        let g = &self.spec.ghosts;
        let mut ghosts = Vec::new();
        for gh in &self.ghosts {
            if !gh.active(index) {
                continue;
            }
            let t = (index - gh.start_frame) as f64 * dt;
            let (pos, vel) = gh.state(t);
            ghosts.push(GtGhost { id: gh.id, pos });
            if !rng.random_bool(g.detection_prob) {
                continue;
            }
            let meas = std::array::from_fn::<f64, 3, _>(|a| pos[a] + gauss(&mut rng, g.jitter_m));
            let vr = true_radial_velocity(pos, vel);
            let vd = if g.doppler_inconsistent {
                let mag = uniform(&mut rng, g.doppler_magnitude_mps);
                let base = if vr.abs() > 1e-9 {
                    vr.signum()
                } else if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                };
                let sign = if rng.random_bool(g.doppler_flip_prob.clamp(0.0, 1.0)) {
                    -base
                } else {
                    base
                };
                sign * mag
            } else {
                vr + gauss(&mut rng, noise.sigma_doppler_mps)
            };
            let s = self.ghost_sampler.sample(&mut rng);
            pts.push((point(meas, vd, s), PointLabel::Ghost));
        }

        pts.shuffle(&mut rng);
        let (points, labels): (Vec<_>, Vec<_>) = pts.into_iter().unzip();
        (
            Frame {
                index,
                timestamp_s: t_abs,
                points,
            },
            GroundTruthFrame {
                frame_index: index,
                timestamp_s: t_abs,
                uavs,
                ghosts,
                labels,
            },
        )
    }

    /// All frames in order.
    pub fn frames(&self) -> impl Iterator<Item = (Frame, GroundTruthFrame)> + '_ {
        (0..self.spec.frames).map(move |i| self.generate_frame(i))
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}
