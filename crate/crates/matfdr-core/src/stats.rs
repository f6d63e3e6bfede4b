//! Per-row two-sample Z and T statistics, the analytic null-variance factor
//! η under column correlation, its Monte-Carlo counterpart for T, and
//! p-values.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::sym_sqrt;
use crate::model::{replicate_rng, DataMatrix};
use crate::special::t_cdf;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    Z,
    T,
    TSphered,
    TCentralMatched,
}

/// A vector of per-row test statistics.
///
/// Rows with zero pooled variance are *flagged* rather than dropped, so the
/// index alignment with ground truth survives the whole pipeline. A flagged
/// entry holds ±∞ when the numerator is nonzero (its sign is the numerator's)
/// and 0.0 for the fully degenerate 0/0 case.
#[derive(Debug, Clone)]
pub struct TestStatVector {
    pub values: DVector<f64>,
    pub kind: StatKind,
    /// n − 2 for t kinds, 0 for z.
    pub df: usize,
    /// 1/n₁ + 1/n₂.
    pub c_n: f64,
    /// Indices of zero-pooled-variance rows.
    pub flagged: Vec<usize>,
}

impl TestStatVector {
    pub fn is_flagged(&self, row: usize) -> bool {
        self.flagged.binary_search(&row).is_ok()
    }
}

fn class_means(x: &DataMatrix, i: usize) -> (f64, f64) {
    let m1 = x.class1.iter().map(|&j| x.values[(i, j)]).sum::<f64>() / x.n1() as f64;
    let m2 = x.class2.iter().map(|&j| x.values[(i, j)]).sum::<f64>() / x.n2() as f64;
    (m1, m2)
}

/// Two-sample T per row: T = (x̄₁ − x̄₂) / (s √c_n) with the pooled variance
/// s² dividing by n₁ + n₂ − 2.
pub fn row_t_stats(x: &DataMatrix) -> Result<TestStatVector> {
    x.require_two_per_class()?;
    let m = x.nrows();
    let n = x.ncols();
    let c_n = x.c_n();
    let mut values = DVector::zeros(m);
    let mut flagged = Vec::new();
    for i in 0..m {
        let (m1, m2) = class_means(x, i);
        let ss1: f64 = x.class1.iter().map(|&j| (x.values[(i, j)] - m1).powi(2)).sum();
        let ss2: f64 = x.class2.iter().map(|&j| (x.values[(i, j)] - m2).powi(2)).sum();
        let s2 = (ss1 + ss2) / (n - 2) as f64;
        if s2 <= 0.0 {
            flagged.push(i);
            let num = m1 - m2;
            values[i] = if num == 0.0 {
                0.0
            } else if num > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        } else {
            values[i] = (m1 - m2) / libm::sqrt(s2 * c_n);
        }
    }
    Ok(TestStatVector { values, kind: StatKind::T, df: n - 2, c_n, flagged })
}

/// Two-sample Z per row with known per-row noise scale σᵢ:
/// Z = (x̄₁ − x̄₂) / (σᵢ √c_n).
pub fn row_z_stats(x: &DataMatrix, sigma: &DVector<f64>) -> Result<TestStatVector> {
    x.require_two_per_class()?;
    let m = x.nrows();
    if sigma.len() != m {
        return Err(Error::Parameter(format!("sigma length {} != m = {m}", sigma.len())));
    }
    if sigma.iter().any(|&s| s <= 0.0) {
        return Err(Error::Parameter("sigma must be strictly positive".into()));
    }
    let c_n = x.c_n();
    let values = DVector::from_fn(m, |i, _| {
        let (m1, m2) = class_means(x, i);
        (m1 - m2) / (sigma[i] * libm::sqrt(c_n))
    });
    Ok(TestStatVector { values, kind: StatKind::Z, df: 0, c_n, flagged: Vec::new() })
}

/// The null-variance factor η = wᵀΔw with class-constant weights
/// w = 1/n₁ on `class1` and −1/n₂ on `class2`; Var(Z) = η / c_n.
///
/// Computed as the quadratic form directly — no matrix root involved.
pub fn eta(delta: &DMatrix<f64>, class1: &[usize], class2: &[usize]) -> f64 {
    let n = delta.nrows();
    let mut w = alloc::vec![0.0f64; n];
    for &j in class1 {
        w[j] = 1.0 / class1.len() as f64;
    }
    for &j in class2 {
        w[j] = -1.0 / class2.len() as f64;
    }
    let mut acc = 0.0;
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            acc += w[i] * delta[(i, j)] * w[j];
        }
    }
    acc
}

/// η when Δ is block-diagonal across the two classes:
/// η = Σ_k (1/n_k²) ΣΣ Δ_{k,ij}.
pub fn eta_blocked(delta1: &DMatrix<f64>, delta2: &DMatrix<f64>) -> f64 {
    let term = |d: &DMatrix<f64>| d.sum() / (d.nrows() as f64 * d.nrows() as f64);
    term(delta1) + term(delta2)
}

/// Monte-Carlo null variance of the two-sample T under row covariance 1 and
/// column covariance Δ. Returns the sample variance and its standard error
/// (fourth-moment based).
pub fn t_null_variance_mc(
    delta: &DMatrix<f64>,
    class1: &[usize],
    class2: &[usize],
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if reps < 10_000 {
        return Err(Error::Parameter(format!("need reps >= 1e4, got {reps}")));
    }
    let n = delta.nrows();
    let n1 = class1.len();
    let n2 = class2.len();
    if n1 + n2 != n || n1 < 2 || n2 < 2 {
        return Err(Error::Parameter("classes must partition the columns, >= 2 each".into()));
    }
    let l = sym_sqrt(delta);
    let mut rng = replicate_rng(seed, 0);
    let c_n = 1.0 / n1 as f64 + 1.0 / n2 as f64;
    let mut ts = Vec::with_capacity(reps);
    let mut z = DVector::zeros(n);
    for _ in 0..reps {
        for k in 0..n {
            z[k] = rng.sample::<f64, _>(StandardNormal);
        }
        let x = &l * &z;
        let m1 = class1.iter().map(|&j| x[j]).sum::<f64>() / n1 as f64;
        let m2 = class2.iter().map(|&j| x[j]).sum::<f64>() / n2 as f64;
        let ss1: f64 = class1.iter().map(|&j| (x[j] - m1).powi(2)).sum();
        let ss2: f64 = class2.iter().map(|&j| (x[j] - m2).powi(2)).sum();
        let s2 = (ss1 + ss2) / (n - 2) as f64;
        ts.push((m1 - m2) / libm::sqrt(s2 * c_n));
    }
    let r = reps as f64;
    let mean = ts.iter().sum::<f64>() / r;
    let m2 = ts.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / r;
    let m4 = ts.iter().map(|t| (t - mean).powi(4)).sum::<f64>() / r;
    let var = m2 * r / (r - 1.0);
    let se = libm::sqrt((m4 - m2 * m2) / r);
    Ok((var, se))
}

/// Reference distribution for [`p_values`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// Central t with the vector's df.
    TDf,
    /// t with the vector's df after dividing the statistic by `scale`.
    ScaledT(f64),
}

/// Two-sided p-values p = 2·(1 − F_t(|T|/scale)).
///
/// Flagged (zero-variance) statistics map to p = 0; the caller can consult
/// `stats.flagged` for the warning record.
pub fn p_values(stats: &TestStatVector, reference: Reference) -> Result<DVector<f64>> {
    let scale = match reference {
        Reference::TDf => 1.0,
        Reference::ScaledT(s) => {
            if s <= 0.0 {
                return Err(Error::Parameter(format!("scale must be positive, got {s}")));
            }
            s
        }
    };
    if stats.df == 0 {
        return Err(Error::Parameter("p_values needs a t-kind statistic (df > 0)".into()));
    }
    let df = stats.df as f64;
    Ok(DVector::from_fn(stats.values.len(), |i, _| {
        if stats.is_flagged(i) {
            0.0
        } else {
            2.0 * (1.0 - t_cdf(libm::fabs(stats.values[i]) / scale, df))
        }
    }))
}
