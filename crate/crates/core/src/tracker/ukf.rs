//! Scaled unscented transform and the UKF predict/update steps built on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::wrap_angle;

/// Unscented-transform spread parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// Sigma-point weights for dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtWeights {
    pub lambda: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl UtParams {
    pub fn weights(&self, n: usize) -> UtWeights {
        let nf = n as f64;
        let lambda = self.alpha * self.alpha * (nf + self.kappa) - nf;
        let wi = 1.0 / (2.0 * (nf + lambda));
        let mut mean = vec![wi; 2 * n + 1];
        let mut cov = vec![wi; 2 * n + 1];
        mean[0] = lambda / (nf + lambda);
        cov[0] = mean[0] + (1.0 - self.alpha * self.alpha + self.beta);
        UtWeights { lambda, mean, cov }
    }
}

/// Components of a vector that are angles and must be averaged and
/// differenced on the circle.
pub type AngleIdx<'a> = &'a [usize];

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// Lower Cholesky factor, retrying with growing diagonal jitter.
pub fn robust_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let scale = m.diagonal().abs().max().max(1e-12);
    let mut jitter = 1e-12 * scale;
    for _ in 0..8 {
        let mut r = m.clone();
        for i in 0..r.nrows() {
            r[(i, i)] += jitter;
        }
        if let Some(c) = r.cholesky() {
            return Ok(c.l());
        }
        jitter *= 100.0;
    }
    Err(Error::Numerical("covariance square root failed".into()))
}

/// `2n + 1` sigma points `mean`, `mean +- sqrt((n + lambda) P)` columns.
pub fn sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    w: &UtWeights,
) -> Result<Vec<DVector<f64>>> {
    let n = mean.len();
    let l = robust_cholesky(&(cov * (n as f64 + w.lambda)))?;
    let mut pts = Vec::with_capacity(2 * n + 1);
    pts.push(mean.clone());
    for i in 0..n {
        pts.push(mean + l.column(i));
    }
    for i in 0..n {
        pts.push(mean - l.column(i));
    }
    Ok(pts)
}

/// Weighted mean; angle components are averaged as residuals around the
/// first point.
pub fn weighted_mean(pts: &[DVector<f64>], weights: &[f64], angles: AngleIdx) -> DVector<f64> {
    let reference = &pts[0];
    let mut m = DVector::zeros(reference.len());
    for (p, w) in pts.iter().zip(weights) {
        let mut d = p - reference;
        for &a in angles {
            d[a] = wrap_angle(d[a]);
        }
        m += d * *w;
    }
    m += reference;
    for &a in angles {
        m[a] = wrap_angle(m[a]);
    }
    m
}

/// `a - b` with angle components wrapped.
pub fn residual(a: &DVector<f64>, b: &DVector<f64>, angles: AngleIdx) -> DVector<f64> {
    let mut d = a - b;
    for &i in angles {
        d[i] = wrap_angle(d[i]);
    }
    d
}

/// Propagate a Gaussian through `f`. The output covariance is symmetrised.
pub fn unscented_transform<F>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    f: F,
    params: &UtParams,
    out_angles: AngleIdx,
) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let w = params.weights(mean.len());
    let pts = sigma_points(mean, cov, &w)?;
    let mapped: Vec<DVector<f64>> = pts.iter().map(&f).collect();
    let m = weighted_mean(&mapped, &w.mean, out_angles);
    let k = m.len();
    let mut c = DMatrix::zeros(k, k);
    for (y, wc) in mapped.iter().zip(&w.cov) {
        let d = residual(y, &m, out_angles);
        c += &d * d.transpose() * *wc;
    }
    symmetrize(&mut c);
    Ok((m, c))
}

/// A Gaussian estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Outcome of a measurement update.
#[derive(Debug, Clone)]
pub struct UpdateResult {
    pub posterior: Gaussian,
    /// Log-density of the measurement under the predicted distribution.
    pub log_likelihood: f64,
    pub innovation: DVector<f64>,
}

/// UKF prediction: unscented transform through `f`, plus `q`.
pub fn ukf_predict<F>(
    prior: &Gaussian,
    f: F,
    q: &DMatrix<f64>,
    params: &UtParams,
    angles: AngleIdx,
) -> Result<Gaussian>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let (mean, mut cov) = unscented_transform(&prior.mean, &prior.cov, f, params, angles)?;
    cov += q;
    symmetrize(&mut cov);
    Ok(Gaussian { mean, cov })
}

/// UKF measurement update with measurement function `h` and noise `r`.
pub fn ukf_update<H>(
    pred: &Gaussian,
    z: &DVector<f64>,
    h: H,
    r: &DMatrix<f64>,
    params: &UtParams,
    angles: AngleIdx,
) -> Result<UpdateResult>
where
    H: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = pred.mean.len();
    let w = params.weights(n);
    let pts = sigma_points(&pred.mean, &pred.cov, &w)?;
    let zs: Vec<DVector<f64>> = pts.iter().map(&h).collect();
    let z_hat = weighted_mean(&zs, &w.mean, &[]);
    let m = z.len();
    let mut s = r.clone();
    let mut pxz = DMatrix::zeros(n, m);
    for ((x, zi), wc) in pts.iter().zip(&zs).zip(&w.cov) {
        let dz = zi - &z_hat;
        let dx = residual(x, &pred.mean, angles);
        s += &dz * dz.transpose() * *wc;
        pxz += dx * dz.transpose() * *wc;
    }
    symmetrize(&mut s);
    let s_chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance not positive definite".into()))?;
    let s_inv = s_chol.inverse();
    let k = &pxz * &s_inv;
    let innovation = z - &z_hat;
    let mut mean = &pred.mean + &k * &innovation;
    for &a in angles {
        mean[a] = wrap_angle(mean[a]);
    }
    let mut cov = &pred.cov - &k * &s * k.transpose();
    symmetrize(&mut cov);

    let maha = (innovation.transpose() * &s_inv * &innovation)[(0, 0)];
    let log_det: f64 = s_chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let log_likelihood =
        -0.5 * (maha + log_det + m as f64 * (2.0 * std::f64::consts::PI).ln());
    Ok(UpdateResult {
        posterior: Gaussian { mean, cov },
        log_likelihood,
        innovation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |r, c| (seed as f64 + 1.3 * r as f64 + 0.7 * c as f64).sin());
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn weights_sum_to_one() {
        let w = UtParams::default().weights(7);
        assert!((w.mean.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_map_is_exact() {
        let m = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let c = spd(3, 1);
        let (m2, c2) = unscented_transform(&m, &c, |x| x.clone(), &UtParams::default(), &[]).unwrap();
        assert!((m2 - &m).amax() < 1e-9);
        assert!((c2 - &c).amax() < 1e-9);
    }

    #[test]
    fn square_of_standard_normal() {
        let m = DVector::from_vec(vec![0.0]);
        let c = DMatrix::from_vec(1, 1, vec![1.0]);
        let (m2, _) =
            unscented_transform(&m, &c, |x| DVector::from_vec(vec![x[0] * x[0]]), &UtParams::default(), &[])
                .unwrap();
        assert!((m2[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angle_mean_across_the_cut() {
        let pts = vec![
            DVector::from_vec(vec![3.1]),
            DVector::from_vec(vec![-3.1]),
        ];
        let m = weighted_mean(&pts, &[0.5, 0.5], &[0]);
        assert!((m[0].abs() - std::f64::consts::PI).abs() < 1e-12);
    }
}
