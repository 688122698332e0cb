//! Henze-Zirkler multivariate normality test.

use nalgebra::DMatrix;

use crate::stats::normal_sf;

/// Diagonal regularisation for a singular standardised covariance.
const EPS: f64 = 1e-6;

/// Outcome of [`hz_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HzOutcome {
    Tested {
        statistic: f64,
        p_value: f64,
        is_gaussian: bool,
    },
    /// Fewer than `dimension + 2` samples.
    Untestable,
}

impl HzOutcome {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, HzOutcome::Tested { is_gaussian: true, .. })
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            HzOutcome::Tested { p_value, .. } => Some(*p_value),
            HzOutcome::Untestable => None,
        }
    }

    pub fn statistic(&self) -> Option<f64> {
        match self {
            HzOutcome::Tested { statistic, .. } => Some(*statistic),
            HzOutcome::Untestable => None,
        }
    }
}

/// Henze-Zirkler test with the usual smoothing parameter
/// `b = 2^{-1/2} ((2p+1)/4)^{1/(p+4)} n^{1/(p+4)}` and a log-normal
/// approximation of the null distribution.
///
/// Features that are constant across the sample carry no information and
/// are left out; the test then runs in the remaining dimensions. A sample
/// with no varying feature is reported as Gaussian with p-value 1.
pub fn hz_test<const P: usize>(samples: &[[f64; P]], alpha: f64) -> HzOutcome {
    let n = samples.len();
    if n < P + 2 {
        return HzOutcome::Untestable;
    }

    // Column standardisation; the statistic is affine invariant so this only
    // conditions the covariance.
    let mut mean = [0.0; P];
    for s in samples {
        for d in 0..P {
            mean[d] += s[d];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut sd = [0.0; P];
    for s in samples {
        for d in 0..P {
            sd[d] += (s[d] - mean[d]).powi(2);
        }
    }
    let active: Vec<usize> = (0..P)
        .filter(|&d| {
            sd[d] = (sd[d] / n as f64).sqrt();
            sd[d] > 0.0 && sd[d] > 1e-12 * mean[d].abs()
        })
        .collect();
    let p = active.len();
    if p == 0 {
        return HzOutcome::Tested {
            statistic: 0.0,
            p_value: 1.0,
            is_gaussian: true,
        };
    }

    let z = DMatrix::from_fn(n, p, |i, j| {
        let d = active[j];
        (samples[i][d] - mean[d]) / sd[d]
    });
    let zt = z.transpose();
    let cov = &zt * &z / n as f64;
    let chol = cov.clone().cholesky().or_else(|| {
        let mut reg = cov;
        for d in 0..p {
            reg[(d, d)] += EPS;
        }
        reg.cholesky()
    });
    let Some(chol) = chol else {
        return HzOutcome::Tested {
            statistic: f64::INFINITY,
            p_value: 0.0,
            is_gaussian: false,
        };
    };
    // Whitened rows y_j = L^{-1} z_j, so |y_j|^2 is the squared Mahalanobis
    // distance to the mean and |y_j - y_k|^2 the pairwise one.
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&zt)
        .expect("cholesky factor is invertible");
    let y = y.transpose();

    let pf = p as f64;
    let nf = n as f64;
    let b = (1.0 / 2f64.sqrt()) * ((2.0 * pf + 1.0) / 4.0).powf(1.0 / (pf + 4.0))
        * nf.powf(1.0 / (pf + 4.0));
    let b2 = b * b;

    let flat: Vec<f64> = (0..n).flat_map(|i| (0..p).map(move |a| (i, a))).map(|(i, a)| y[(i, a)]).collect();
    let dj: Vec<f64> = flat.chunks_exact(p).map(|r| r.iter().map(|v| v * v).sum()).collect();

    let half_b2 = b2 / 2.0;
    let mut pair_sum = 0.0;
    for j in 0..n {
        let rj = &flat[j * p..(j + 1) * p];
        let mut acc = 0.0;
        for rk in flat[(j + 1) * p..].chunks_exact(p) {
            let mut d2 = 0.0;
            for a in 0..p {
                let t = rj[a] - rk[a];
                d2 += t * t;
            }
            acc += (-half_b2 * d2).exp();
        }
        pair_sum += acc;
    }
    // Diagonal terms (D_jj = 0) contribute n.
    let double_sum = 2.0 * pair_sum + nf;

    let single_sum: f64 = dj
        .iter()
        .map(|d| (-(b2 / (2.0 * (1.0 + b2))) * d).exp())
        .sum();

    let statistic = nf
        * (double_sum / (nf * nf) - 2.0 * (1.0 + b2).powf(-pf / 2.0) * single_sum / nf
            + (1.0 + 2.0 * b2).powf(-pf / 2.0));

    let a = 1.0 + 2.0 * b2;
    let wb = (1.0 + b2) * (1.0 + 3.0 * b2);
    let b4 = b2 * b2;
    let b8 = b4 * b4;
    let mu = 1.0 - a.powf(-pf / 2.0) * (1.0 + pf * b2 / a + pf * (pf + 2.0) * b4 / (2.0 * a * a));
    let si2 = 2.0 * (1.0 + 4.0 * b2).powf(-pf / 2.0)
        + 2.0 * a.powf(-pf) * (1.0 + 2.0 * pf * b4 / (a * a) + 3.0 * pf * (pf + 2.0) * b8 / (4.0 * a.powi(4)))
        - 4.0 * wb.powf(-pf / 2.0) * (1.0 + 3.0 * pf * b4 / (2.0 * wb) + pf * (pf + 2.0) * b8 / (2.0 * wb * wb));
    let pmu = (mu.powi(4) / (si2 + mu * mu)).sqrt().ln();
    let psi = ((si2 + mu * mu) / (mu * mu)).ln().sqrt();

    let p_value = if statistic <= 0.0 {
        1.0
    } else {
        normal_sf((statistic.ln() - pmu) / psi)
    };
    HzOutcome::Tested {
        statistic,
        p_value,
        is_gaussian: p_value > alpha,
    }
}
