//! CV and CTRV motion models on `S = [x, y, z, phi, theta, v, omega]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::stats::wrap_angle;

pub const STATE_DIM: usize = 7;
pub const PHI: usize = 3;
pub const THETA: usize = 4;
pub const SPEED: usize = 5;
pub const OMEGA: usize = 6;

/// Below this turn rate CTRV uses its series expansion.
pub const SMALL_TURN_RATE: f64 = 1e-4;

pub type State = [f64; STATE_DIM];

/// Constant velocity along `(phi, theta)`; the turn rate is carried unchanged.
pub fn cv_propagate(s: &State, dt: f64) -> State {
    let [x, y, z, phi, theta, v, omega] = *s;
    let vh = v * theta.cos();
    [
        x + vh * phi.cos() * dt,
        y + vh * phi.sin() * dt,
        z + v * theta.sin() * dt,
        wrap_angle(phi),
        theta,
        v,
        omega,
    ]
}

/// Constant horizontal turn rate and speed, constant vertical rate.
pub fn ctrv_propagate(s: &State, dt: f64) -> State {
    let [x, y, z, phi, theta, v, omega] = *s;
    let vh = v * theta.cos();
    let phi2 = phi + omega * dt;
    let (dx, dy) = if omega.abs() < SMALL_TURN_RATE {
        // Second-order expansion of the arc about omega = 0.
        let h = 0.5 * omega * dt;
        (
            vh * dt * (phi.cos() - h * phi.sin()),
            vh * dt * (phi.sin() + h * phi.cos()),
        )
    } else {
        (
            vh / omega * (phi2.sin() - phi.sin()),
            vh / omega * (phi.cos() - phi2.cos()),
        )
    };
    [
        x + dx,
        y + dy,
        z + v * theta.sin() * dt,
        wrap_angle(phi2),
        theta,
        v,
        omega,
    ]
}

/// White-noise intensities per state component; the discrete covariance is
/// `diag(q^2) dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessNoise {
    pub position: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub speed: f64,
    pub turn_rate: f64,
}

impl ProcessNoise {
    pub fn cv() -> Self {
        Self {
            position: 0.3,
            azimuth: 0.05,
            elevation: 0.03,
            speed: 1.0,
            turn_rate: 0.05,
        }
    }

    pub fn ctrv() -> Self {
        Self {
            position: 0.3,
            azimuth: 0.02,
            elevation: 0.03,
            speed: 1.0,
            turn_rate: 0.5,
        }
    }

    pub fn matrix(&self, dt: f64) -> DMatrix<f64> {
        let p = self.position;
        let d = [p, p, p, self.azimuth, self.elevation, self.speed, self.turn_rate];
        DMatrix::from_diagonal(&DVector::from_iterator(7, d.iter().map(|q| q * q * dt)))
    }

    pub fn is_valid(&self) -> bool {
        [self.position, self.azimuth, self.elevation, self.speed, self.turn_rate]
            .iter()
            .all(|q| q.is_finite() && *q > 0.0)
    }
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self::cv()
    }
}

/// A state-space motion model usable inside the IMM bank.
pub trait MotionModel: Send + Sync {
    fn dim(&self) -> usize;
    fn propagate(&self, x: &DVector<f64>, dt: f64) -> DVector<f64>;
    fn process_noise(&self, dt: f64) -> DMatrix<f64>;
    /// Indices of angular state components.
    fn angles(&self) -> &[usize] {
        &[]
    }
}

fn as_state(x: &DVector<f64>) -> State {
    std::array::from_fn(|i| x[i])
}

#[derive(Debug, Clone, Copy)]
pub struct Cv(pub ProcessNoise);

#[derive(Debug, Clone, Copy)]
pub struct Ctrv(pub ProcessNoise);

impl MotionModel for Cv {
    fn dim(&self) -> usize {
        STATE_DIM
    }
    fn propagate(&self, x: &DVector<f64>, dt: f64) -> DVector<f64> {
        DVector::from_row_slice(&cv_propagate(&as_state(x), dt))
    }
    fn process_noise(&self, dt: f64) -> DMatrix<f64> {
        self.0.matrix(dt)
    }
    fn angles(&self) -> &[usize] {
        &[PHI]
    }
}

impl MotionModel for Ctrv {
    fn dim(&self) -> usize {
        STATE_DIM
    }
    fn propagate(&self, x: &DVector<f64>, dt: f64) -> DVector<f64> {
        DVector::from_row_slice(&ctrv_propagate(&as_state(x), dt))
    }
    fn process_noise(&self, dt: f64) -> DMatrix<f64> {
        self.0.matrix(dt)
    }
    fn angles(&self) -> &[usize] {
        &[PHI]
    }
}

/// Cartesian velocity of a state.
pub fn velocity(s: &State) -> [f64; 3] {
    let (phi, theta, v) = (s[PHI], s[THETA], s[SPEED]);
    [
        v * theta.cos() * phi.cos(),
        v * theta.cos() * phi.sin(),
        v * theta.sin(),
    ]
}

/// `(phi, theta, v)` of a Cartesian velocity; zero speed maps to zero angles.
pub fn polar_velocity(vel: [f64; 3]) -> (f64, f64, f64) {
    let v = (vel[0] * vel[0] + vel[1] * vel[1] + vel[2] * vel[2]).sqrt();
    if v == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (vel[1].atan2(vel[0]), (vel[2] / v).clamp(-1.0, 1.0).asin(), v)
}
