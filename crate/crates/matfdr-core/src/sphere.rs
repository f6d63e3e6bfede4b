//! De-correlating ("sphering") the noise with the fitted covariances,
//! central-portion rescaling of the resulting statistics, and pre-filtering.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::model::{decompose, DataMatrix};
use crate::special::{t_quantile, truncated_t_moments};
use crate::stats::{row_t_stats, StatKind, TestStatVector};
use crate::trcm::TrcmFit;
use crate::{Error, Result};

/// Symmetric inverse square root P Λ^{−1/2} Pᵀ (eigenvalues floored at
/// 1e-12·λ_max before rooting).
pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    crate::linalg::sym_inv_sqrt_flagged(a).0
}

/// Sphered data X̃ = Ŝ + Σ̂^{−1/2} N Δ̂^{−1/2}.
#[derive(Debug, Clone)]
pub struct SpheredData {
    pub values: DataMatrix,
    pub signal_matrix: DMatrix<f64>,
    pub fit: TrcmFit,
    /// True when eigenvalue flooring was needed for either inverse root.
    pub conditioning_warning: bool,
}

/// Runs the decomposition, spheres the noise with the fitted covariances and
/// re-adds the signal estimate.
///
/// The sphered noise is re-centered within each class before the signal is
/// added back, so the per-row numerator x̄₁ − x̄₂ of the output equals
/// ψ̂₁ − ψ̂₂ of the decomposition exactly (the Z numerator is unchanged by
/// sphering). The decomposition noise already has zero within-class row
/// means, so with identity fits this is the identity on Ŝ + N.
pub fn sphere(x: &DataMatrix, fit: &TrcmFit) -> Result<SpheredData> {
    let (m, n) = x.values.shape();
    if fit.sigma_hat.nrows() != m || fit.delta_hat.nrows() != n {
        return Err(Error::Parameter(format!(
            "fit dimensions {}x{} do not match data {m}x{n}",
            fit.sigma_hat.nrows(),
            fit.delta_hat.nrows()
        )));
    }
    let dec = decompose(x)?;
    let (rs, warn_s) = crate::linalg::sym_inv_sqrt_flagged(&fit.sigma_hat);
    let (rd, warn_d) = crate::linalg::sym_inv_sqrt_flagged(&fit.delta_hat);
    let mut noise = &rs * &dec.noise * &rd;
    for cols in [&x.class1, &x.class2] {
        let inv = 1.0 / cols.len() as f64;
        for i in 0..m {
            let mean: f64 = cols.iter().map(|&j| noise[(i, j)]).sum::<f64>() * inv;
            for &j in cols {
                noise[(i, j)] -= mean;
            }
        }
    }
    let values = &dec.signal_matrix + &noise;
    Ok(SpheredData {
        values: DataMatrix::labeled(values, x.class1.clone(), x.class2.clone())?,
        signal_matrix: dec.signal_matrix,
        fit: fit.clone(),
        conditioning_warning: warn_s || warn_d,
    })
}

/// Output of [`central_match`].
#[derive(Debug, Clone)]
pub struct CentralMatchResult {
    pub scaled_stats: TestStatVector,
    pub pi0: f64,
    /// Standard deviation of the statistics inside the central window.
    pub sigma_central_observed: f64,
    /// Standard deviation of t(df) truncated to the matching window.
    pub sigma_central_reference: f64,
}

impl CentralMatchResult {
    /// The multiplier applied to the statistics.
    pub fn scale(&self) -> f64 {
        self.sigma_central_reference / self.sigma_central_observed
    }
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Rescales the statistics so their central portion matches the central
/// variance of the reference t distribution.
///
/// The window is the closed quantile interval [(1−π₀)/2, 1−π₀/2] of the
/// empirical distribution; the reference variance is that of t(df) truncated
/// to its matching quantile window, computed by adaptive quadrature. With
/// π₀ = 1 this reduces to full-sample variance matching. Flagged (infinite)
/// entries are excluded from the window statistics but still scaled.
pub fn central_match(stats: &TestStatVector, pi0: f64) -> Result<CentralMatchResult> {
    if !(0.0 < pi0 && pi0 <= 1.0) {
        return Err(Error::Parameter(format!("pi0 must be in (0, 1], got {pi0}")));
    }
    if stats.df < 3 {
        return Err(Error::Parameter("central matching needs a t-kind statistic with df >= 3".into()));
    }
    let finite: Vec<f64> = stats
        .values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    if finite.len() < 20 {
        return Err(Error::Degenerate(format!(
            "central matching needs >= 20 finite statistics, got {}",
            finite.len()
        )));
    }
    let df = stats.df as f64;
    let p_lo = (1.0 - pi0) / 2.0;
    let p_hi = 1.0 - p_lo;
    let mut sorted = finite.clone();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = (quantile_sorted(&sorted, p_lo), quantile_sorted(&sorted, p_hi));
    let central: Vec<f64> = sorted.iter().copied().filter(|&v| lo <= v && v <= hi).collect();
    if central.len() < 10 {
        return Err(Error::Degenerate(format!(
            "only {} statistics inside the central window",
            central.len()
        )));
    }
    let mean = central.iter().sum::<f64>() / central.len() as f64;
    let var_obs = central.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (central.len() - 1) as f64;
    if var_obs <= 0.0 {
        return Err(Error::Degenerate("central window has zero variance".into()));
    }
    let var_ref = if pi0 >= 1.0 {
        df / (df - 2.0)
    } else {
        truncated_t_moments(t_quantile(p_lo, df), t_quantile(p_hi, df), df).1
    };
    let scale = libm::sqrt(var_ref / var_obs);
    let scaled_stats = TestStatVector {
        values: stats.values.map(|v| v * scale),
        kind: StatKind::TCentralMatched,
        df: stats.df,
        c_n: stats.c_n,
        flagged: stats.flagged.clone(),
    };
    Ok(CentralMatchResult {
        scaled_stats,
        pi0,
        sigma_central_observed: libm::sqrt(var_obs),
        sigma_central_reference: libm::sqrt(var_ref),
    })
}

/// Keeps the `keep` rows with the largest |T| (un-sphered two-sample T),
/// ties broken by row index. Returns the filtered matrix, rows ordered by
/// decreasing |T|, and the map from new row index to original row index.
pub fn filter_rows(x: &DataMatrix, keep: usize) -> Result<(DataMatrix, Vec<usize>)> {
    let m = x.nrows();
    if keep < 2 || keep > m {
        return Err(Error::Parameter(format!("keep = {keep} out of range 2..={m}")));
    }
    let t = row_t_stats(x)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let ta = libm::fabs(t.values[a]);
        let tb = libm::fabs(t.values[b]);
        tb.partial_cmp(&ta).unwrap().then(a.cmp(&b))
    });
    order.truncate(keep);
    let values = DMatrix::from_fn(keep, x.ncols(), |i, j| x.values[(order[i], j)]);
    let filtered = DataMatrix::labeled(values, x.class1.clone(), x.class2.clone())?;
    Ok((filtered, order))
}

/// Convenience: ψ̂₁ − ψ̂₂ of a decomposition, the invariant numerator.
pub fn signal_difference(psi1: &DVector<f64>, psi2: &DVector<f64>) -> DVector<f64> {
    psi1 - psi2
}
