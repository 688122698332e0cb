//! Signal-metric distributions used by the simulator.

use nalgebra::{SMatrix, SVector};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SIGNAL_DIM;

type Vec5 = SVector<f64, SIGNAL_DIM>;
type Mat5 = SMatrix<f64, SIGNAL_DIM, SIGNAL_DIM>;

/// One Gaussian component over the five signal metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: [f64; SIGNAL_DIM],
    pub cov: [[f64; SIGNAL_DIM]; SIGNAL_DIM],
}

impl GaussianSpec {
    pub fn isotropic(mean: [f64; SIGNAL_DIM], sigma: f64) -> Self {
        let mut cov = [[0.0; SIGNAL_DIM]; SIGNAL_DIM];
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = sigma * sigma;
        }
        Self { mean, cov }
    }

    fn cov_matrix(&self) -> Mat5 {
        Mat5::from_fn(|r, c| self.cov[r][c])
    }
}

/// Distribution of the signal vector attached to a simulated point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalDist {
    Gaussian(GaussianSpec),
    /// Weighted mixture of Gaussians; used for cubes that should fail a
    /// normality test.
    Mixture {
        weights: Vec<f64>,
        components: Vec<GaussianSpec>,
    },
}

impl SignalDist {
    pub fn mean(&self) -> [f64; SIGNAL_DIM] {
        match self {
            SignalDist::Gaussian(g) => g.mean,
            SignalDist::Mixture {
                weights,
                components,
            } => {
                let total: f64 = weights.iter().sum();
                let mut m = [0.0; SIGNAL_DIM];
                for (w, c) in weights.iter().zip(components) {
                    for (mi, ci) in m.iter_mut().zip(c.mean) {
                        *mi += w / total * ci;
                    }
                }
                m
            }
        }
    }
}

/// Pre-factored sampler for a [`SignalDist`].
#[derive(Debug, Clone)]
pub struct SignalSampler {
    cumulative: Vec<f64>,
    means: Vec<Vec5>,
    chols: Vec<Mat5>,
}

impl SignalSampler {
    pub fn new(dist: &SignalDist, what: &str) -> Result<Self> {
        let (weights, comps): (Vec<f64>, Vec<&GaussianSpec>) = match dist {
            SignalDist::Gaussian(g) => (vec![1.0], vec![g]),
            SignalDist::Mixture {
                weights,
                components,
            } => {
                if weights.len() != components.len() || components.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "{what}: mixture needs one weight per component"
                    )));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::InvalidConfig(format!(
                        "{what}: mixture weights must be positive"
                    )));
                }
                (weights.clone(), components.iter().collect())
            }
        };
        let total: f64 = weights.iter().sum();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w / total;
            cumulative.push(acc);
        }
        let mut means = Vec::new();
        let mut chols = Vec::new();
        for g in comps {
            if g.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{what}: non-finite mean")));
            }
            chols.push(cholesky_spd(&g.cov_matrix(), what)?);
            means.push(Vec5::from(g.mean));
        }
        Ok(Self {
            cumulative,
            means,
            chols,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; SIGNAL_DIM] {
        let idx = if self.cumulative.len() == 1 {
            0
        } else {
            let u: f64 = rng.random();
            self.cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(self.cumulative.len() - 1)
        };
        let n = Vec5::from_fn(|_, _| StandardNormal.sample(rng));
        let x = self.means[idx] + self.chols[idx] * n;
        x.into()
    }
}

/// Cholesky factor of a symmetric positive definite matrix; rejects
/// asymmetric or indefinite input.
pub(crate) fn cholesky_spd(m: &Mat5, what: &str) -> Result<Mat5> {
    let scale = m.abs().max().max(1.0);
    if !m.iter().all(|v| v.is_finite()) || (m - m.transpose()).abs().max() > 1e-9 * scale {
        return Err(Error::CovarianceNotPositiveDefinite(format!(
            "{what}: matrix is not symmetric"
        )));
    }
    nalgebra::linalg::Cholesky::new(*m)
        .map(|c| c.l())
        .ok_or_else(|| Error::CovarianceNotPositiveDefinite(what.to_string()))
}
