//! Interacting multiple model filter over a bank of UKFs.

use nalgebra::{DMatrix, DVector};

use super::motion::MotionModel;
use super::ukf::{residual, symmetrize, ukf_predict, ukf_update, Gaussian, UtParams};
use crate::error::{Error, Result};
use crate::stats::wrap_angle;

/// Per-model estimates and model probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmState {
    pub estimates: Vec<Gaussian>,
    pub probs: Vec<f64>,
}

/// Output of the mixing and prediction half of a cycle.
#[derive(Debug, Clone)]
pub struct ImmPrediction {
    pub estimates: Vec<Gaussian>,
    /// Predicted model probabilities `c_j = sum_i p_ij mu_i`.
    pub probs: Vec<f64>,
}

impl ImmPrediction {
    /// State after a frame without a measurement.
    pub fn coast(self) -> ImmState {
        ImmState {
            estimates: self.estimates,
            probs: self.probs,
        }
    }
}

/// A bank of motion models sharing a linear position measurement on the
/// first `meas_dim` state components.
pub struct ImmFilter {
    pub models: Vec<Box<dyn MotionModel>>,
    /// Row-stochastic `p_ij = P(model j at k | model i at k-1)`.
    pub transition: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub ut: UtParams,
    angles: Vec<usize>,
}

impl std::fmt::Debug for ImmFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImmFilter")
            .field("models", &self.models.len())
            .field("transition", &self.transition)
            .field("measurement_noise", &self.measurement_noise)
            .field("ut", &self.ut)
            .finish()
    }
}

impl ImmFilter {
    pub fn new(
        models: Vec<Box<dyn MotionModel>>,
        transition: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
        ut: UtParams,
    ) -> Result<Self> {
        let m = models.len();
        if m == 0 || transition.nrows() != m || transition.ncols() != m {
            return Err(Error::InvalidConfig("transition matrix must be models x models".into()));
        }
        for r in transition.row_iter() {
            if r.iter().any(|p| !(0.0..=1.0).contains(p)) || (r.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig("transition rows must be distributions".into()));
            }
        }
        let dim = models[0].dim();
        if models.iter().any(|md| md.dim() != dim) {
            return Err(Error::InvalidConfig("models disagree on state dimension".into()));
        }
        let k = measurement_noise.nrows();
        if k == 0 || k > dim || measurement_noise.ncols() != k {
            return Err(Error::InvalidConfig("measurement noise must be square".into()));
        }
        if (&measurement_noise - measurement_noise.transpose()).amax() > 1e-12
            || measurement_noise.clone().cholesky().is_none()
        {
            return Err(Error::InvalidConfig("measurement noise must be SPD".into()));
        }
        let angles = models[0].angles().to_vec();
        Ok(Self {
            models,
            transition,
            measurement_noise,
            ut,
            angles,
        })
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn meas_dim(&self) -> usize {
        self.measurement_noise.nrows()
    }

    pub fn angles(&self) -> &[usize] {
        &self.angles
    }

    /// Probability-weighted blend of `xs`, angle-aware around the first.
    fn blend(&self, weights: &[f64], gs: &[&Gaussian]) -> Gaussian {
        let reference = &gs[0].mean;
        let mut mean = reference.clone();
        for (w, g) in weights.iter().zip(gs) {
            mean += residual(&g.mean, reference, &self.angles) * *w;
        }
        for &a in &self.angles {
            mean[a] = wrap_angle(mean[a]);
        }
        let n = mean.len();
        let mut cov = DMatrix::zeros(n, n);
        for (w, g) in weights.iter().zip(gs) {
            let d = residual(&g.mean, &mean, &self.angles);
            cov += (&g.cov + &d * d.transpose()) * *w;
        }
        symmetrize(&mut cov);
        Gaussian { mean, cov }
    }

    /// Mixing followed by per-model prediction over `dt`.
    pub fn predict(&self, state: &ImmState, dt: f64) -> Result<ImmPrediction> {
        let m = self.models.len();
        let c: Vec<f64> = (0..m)
            .map(|j| (0..m).map(|i| self.transition[(i, j)] * state.probs[i]).sum())
            .collect();
        let all: Vec<&Gaussian> = state.estimates.iter().collect();
        let mut estimates = Vec::with_capacity(m);
        for j in 0..m {
            let w: Vec<f64> = if c[j] > 0.0 {
                (0..m).map(|i| self.transition[(i, j)] * state.probs[i] / c[j]).collect()
            } else {
                (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect()
            };
            let mixed = self.blend(&w, &all);
            let model = &self.models[j];
            let q = model.process_noise(dt);
            estimates.push(ukf_predict(&mixed, |x| model.propagate(x, dt), &q, &self.ut, &self.angles)?);
        }
        Ok(ImmPrediction { estimates, probs: normalize(c)? })
    }

    /// Per-model measurement update and model-probability update.
    pub fn update(&self, pred: &ImmPrediction, z: &DVector<f64>) -> Result<ImmState> {
        let k = self.meas_dim();
        let h = |x: &DVector<f64>| x.rows(0, k).into_owned();
        let mut estimates = Vec::with_capacity(pred.estimates.len());
        let mut log_w = Vec::with_capacity(pred.estimates.len());
        for (g, c) in pred.estimates.iter().zip(&pred.probs) {
            let up = ukf_update(g, z, h, &self.measurement_noise, &self.ut, &self.angles)?;
            log_w.push(up.log_likelihood + c.ln());
            estimates.push(up.posterior);
        }
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Numerical("model likelihoods vanished".into()));
        }
        let probs = normalize(log_w.iter().map(|l| (l - top).exp()).collect())?;
        Ok(ImmState { estimates, probs })
    }

    /// Probability-weighted moment match of the bank.
    pub fn combined(&self, estimates: &[Gaussian], probs: &[f64]) -> Gaussian {
        let gs: Vec<&Gaussian> = estimates.iter().collect();
        self.blend(probs, &gs)
    }

    /// A fresh state with every model at `g` and uniform probabilities.
    pub fn init(&self, g: Gaussian) -> ImmState {
        let m = self.models.len();
        ImmState {
            estimates: vec![g; m],
            probs: vec![1.0 / m as f64; m],
        }
    }
}

fn normalize(mut p: Vec<f64>) -> Result<Vec<f64>> {
    let s: f64 = p.iter().sum();
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Numerical("model probabilities degenerate".into()));
    }
    for v in &mut p {
        *v /= s;
    }
    Ok(p)
}
