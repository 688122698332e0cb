//! Shared domain types: detections, frames, tracked outputs and the cube grid.
//!
//! Coordinates are right-handed and centred on the base station with `z` up.
//! Doppler velocity is positive when the target recedes from the station.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Default interval between consecutive frames, in seconds.
pub const FRAME_INTERVAL_S: f64 = 0.64;

/// Number of signal-quality metrics carried by every detection.
pub const SIGNAL_DIM: usize = 5;

/// One detection emitted by the base station.
///
/// Serialized as a flat array `[x, y, z, vd, snr, scr, nl, sp, rp]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Doppler velocity, m/s, positive = receding.
    pub vd: f64,
    pub snr: f64,
    pub scr: f64,
    /// Noise level.
    pub nl: f64,
    /// Signal power.
    pub sp: f64,
    /// Received power.
    pub rp: f64,
}

impl RawPoint {
    pub fn from_array(v: [f64; 9]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            z: v[2],
            vd: v[3],
            snr: v[4],
            scr: v[5],
            nl: v[6],
            sp: v[7],
            rp: v[8],
        }
    }

    pub fn to_array(&self) -> [f64; 9] {
        [
            self.x, self.y, self.z, self.vd, self.snr, self.scr, self.nl, self.sp, self.rp,
        ]
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// The fixed-order signal vector `[snr, scr, nl, sp, rp]`.
    pub fn signal_vector(&self) -> SignalVector {
        SignalVector([self.snr, self.scr, self.nl, self.sp, self.rp])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn range(&self) -> f64 {
        norm3(self.position())
    }
}

impl Serialize for RawPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RawPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = <[f64; 9]>::deserialize(deserializer)?;
        let p = RawPoint::from_array(raw);
        if !p.is_finite() {
            return Err(D::Error::custom("point contains a non-finite value"));
        }
        Ok(p)
    }
}

/// The five signal metrics of a detection, in the order `[snr, scr, nl, sp, rp]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalVector(pub [f64; SIGNAL_DIM]);

impl SignalVector {
    pub fn as_array(&self) -> &[f64; SIGNAL_DIM] {
        &self.0
    }
}

/// All detections reported for one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    #[serde(rename = "t")]
    pub index: u64,
    #[serde(rename = "ts")]
    pub timestamp_s: f64,
    #[serde(rename = "pts")]
    pub points: Vec<RawPoint>,
}

impl Frame {
    pub fn new(index: u64, points: Vec<RawPoint>) -> Self {
        Self {
            index,
            timestamp_s: index as f64 * FRAME_INTERVAL_S,
            points,
        }
    }

    pub fn empty(index: u64) -> Self {
        Self::new(index, Vec::new())
    }
}

/// System output for one tracked target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedUav {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub id: u64,
}

impl TrackedUav {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Integer coordinates of one cube in a [`CubeGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubeId(pub [i64; 3]);

impl std::fmt::Display for CubeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// Result of mapping a point onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeLookup {
    Inside(CubeId),
    OutOfVolume,
}

impl CubeLookup {
    pub fn cube(self) -> Option<CubeId> {
        match self {
            CubeLookup::Inside(id) => Some(id),
            CubeLookup::OutOfVolume => None,
        }
    }
}

/// Axis-aligned partition of the sensing volume into equal cubes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeGrid {
    pub edge_m: f64,
    pub origin: [f64; 3],
    pub extent: [f64; 3],
}

impl Default for CubeGrid {
    fn default() -> Self {
        Self {
            edge_m: 40.0,
            origin: [0.0, -1000.0, -40.0],
            extent: [1040.0, 2000.0, 480.0],
        }
    }
}

impl CubeGrid {
    pub fn new(edge_m: f64, origin: [f64; 3], extent: [f64; 3]) -> crate::Result<Self> {
        let grid = Self {
            edge_m,
            origin,
            extent,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let finite = self.edge_m.is_finite()
            && self.origin.iter().chain(self.extent.iter()).all(|v| v.is_finite());
        if !finite || self.edge_m <= 0.0 || self.extent.iter().any(|&e| e <= 0.0) {
            return Err(crate::Error::InvalidConfig(format!(
                "cube grid needs a positive edge and extent, got edge {} extent {:?}",
                self.edge_m, self.extent
            )));
        }
        Ok(())
    }

    /// Number of cubes along each axis.
    pub fn dims(&self) -> [i64; 3] {
        let mut d = [0; 3];
        for (axis, out) in d.iter_mut().enumerate() {
            *out = (self.extent[axis] / self.edge_m).ceil() as i64;
        }
        d
    }

    /// Floor-division mapping. A point lying exactly on a shared face belongs to
    /// the cube with the higher index.
    pub fn cube_index(&self, position: [f64; 3]) -> CubeLookup {
        let dims = self.dims();
        let mut idx = [0i64; 3];
        for axis in 0..3 {
            let rel = position[axis] - self.origin[axis];
            if !(rel >= 0.0) || rel >= self.extent[axis] {
                return CubeLookup::OutOfVolume;
            }
            let i = (rel / self.edge_m).floor() as i64;
            if i >= dims[axis] {
                return CubeLookup::OutOfVolume;
            }
            idx[axis] = i;
        }
        CubeLookup::Inside(CubeId(idx))
    }

    pub fn cube_of(&self, p: &RawPoint) -> CubeLookup {
        self.cube_index(p.position())
    }

    /// Lower corner of a cube.
    pub fn cube_min(&self, id: CubeId) -> [f64; 3] {
        let mut out = [0.0; 3];
        for axis in 0..3 {
            out[axis] = self.origin[axis] + id.0[axis] as f64 * self.edge_m;
        }
        out
    }

    pub fn cube_center(&self, id: CubeId) -> [f64; 3] {
        let lo = self.cube_min(id);
        let h = 0.5 * self.edge_m;
        [lo[0] + h, lo[1] + h, lo[2] + h]
    }

    pub fn contains_cube(&self, id: CubeId) -> bool {
        let dims = self.dims();
        (0..3).all(|a| id.0[a] >= 0 && id.0[a] < dims[a])
    }
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}
