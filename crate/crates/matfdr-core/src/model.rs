//! The mean-restricted matrix-variate normal model: data containers, the
//! X = M + S + N decomposition, structured covariance constructors, and
//! seeded sampling.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{check_spd, sym_sqrt};
use crate::{Error, Result};

/// An m×n data matrix with optional two-class column labels.
///
/// Column indices in `class1`/`class2` are kept sorted; together they
/// partition `0..n` when labels are present.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub values: DMatrix<f64>,
    pub class1: Vec<usize>,
    pub class2: Vec<usize>,
}

impl DataMatrix {
    /// Labeled data. Requires m ≥ 2, n ≥ 4 and that the classes partition
    /// the column set.
    pub fn labeled(values: DMatrix<f64>, mut class1: Vec<usize>, mut class2: Vec<usize>) -> Result<Self> {
        let (m, n) = values.shape();
        if m < 2 || n < 4 {
            return Err(Error::Parameter(format!(
                "need m >= 2 and n >= 4, got {m}x{n}"
            )));
        }
        class1.sort_unstable();
        class2.sort_unstable();
        let mut seen = alloc::vec![false; n];
        for &j in class1.iter().chain(class2.iter()) {
            if j >= n || seen[j] {
                return Err(Error::Parameter(format!(
                    "class labels must partition the {n} columns"
                )));
            }
            seen[j] = true;
        }
        if class1.len() + class2.len() != n {
            return Err(Error::Parameter(format!(
                "class labels must cover all {n} columns"
            )));
        }
        Ok(DataMatrix { values, class1, class2 })
    }

    /// Labeled data with the conventional contiguous layout: the first `n1`
    /// columns are class one.
    pub fn contiguous(values: DMatrix<f64>, n1: usize) -> Result<Self> {
        let n = values.ncols();
        if n1 == 0 || n1 >= n {
            return Err(Error::Parameter(format!("n1 = {n1} must split {n} columns")));
        }
        Self::labeled(values, (0..n1).collect(), (n1..n).collect())
    }

    /// A matrix without class labels (e.g. a pure covariance-source matrix).
    pub fn unlabeled(values: DMatrix<f64>) -> Self {
        DataMatrix { values, class1: Vec::new(), class2: Vec::new() }
    }

    pub fn has_labels(&self) -> bool {
        !self.class1.is_empty() && !self.class2.is_empty()
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn n1(&self) -> usize {
        self.class1.len()
    }

    pub fn n2(&self) -> usize {
        self.class2.len()
    }

    /// 1/n₁ + 1/n₂.
    pub fn c_n(&self) -> f64 {
        1.0 / self.n1() as f64 + 1.0 / self.n2() as f64
    }

    pub(crate) fn require_two_per_class(&self) -> Result<()> {
        if self.class1.len() < 2 || self.class2.len() < 2 {
            return Err(Error::DegenerateClass(format!(
                "pooled variance needs >= 2 columns per class, got {} and {}",
                self.class1.len(),
                self.class2.len()
            )));
        }
        Ok(())
    }
}

/// Row/column means and separable covariance of the matrix-variate normal.
#[derive(Debug, Clone)]
pub struct MatrixNormalParams {
    pub nu: DVector<f64>,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub delta: DMatrix<f64>,
}

impl MatrixNormalParams {
    /// Validates dimensions, symmetry (1e-10) and positive-definiteness.
    pub fn new(nu: DVector<f64>, mu: DVector<f64>, sigma: DMatrix<f64>, delta: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != nu.len() || delta.nrows() != mu.len() {
            return Err(Error::Parameter(format!(
                "dimension mismatch: nu {} vs Sigma {}, mu {} vs Delta {}",
                nu.len(),
                sigma.nrows(),
                mu.len(),
                delta.nrows()
            )));
        }
        check_spd(&sigma, 1e-10, "Sigma")?;
        check_spd(&delta, 1e-10, "Delta")?;
        Ok(MatrixNormalParams { nu, mu, sigma, delta })
    }

    /// Zero means with the given covariances.
    pub fn centered(sigma: DMatrix<f64>, delta: DMatrix<f64>) -> Result<Self> {
        let m = sigma.nrows();
        let n = delta.nrows();
        Self::new(DVector::zeros(m), DVector::zeros(n), sigma, delta)
    }
}

/// Per-class row signal: row i of class k has mean shift psi_k[i].
/// Null rows are exactly those with psi1[i] == psi2[i].
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub psi1: DVector<f64>,
    pub psi2: DVector<f64>,
}

impl SignalSpec {
    pub fn new(psi1: DVector<f64>, psi2: DVector<f64>) -> Result<Self> {
        if psi1.len() != psi2.len() {
            return Err(Error::Parameter(format!(
                "psi1/psi2 length mismatch: {} vs {}",
                psi1.len(),
                psi2.len()
            )));
        }
        Ok(SignalSpec { psi1, psi2 })
    }

    pub fn null(m: usize) -> Self {
        SignalSpec { psi1: DVector::zeros(m), psi2: DVector::zeros(m) }
    }

    /// Indices of rows carrying signal (psi1 != psi2).
    pub fn non_null_rows(&self) -> Vec<usize> {
        (0..self.psi1.len()).filter(|&i| self.psi1[i] != self.psi2[i]).collect()
    }
}

/// Output of [`decompose`]: X = meanMatrix + signalMatrix + noise.
#[derive(Debug, Clone)]
pub struct DecompositionFit {
    pub mean_matrix: DMatrix<f64>,
    pub signal_matrix: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub nu_hat: DVector<f64>,
    pub mu_hat: DVector<f64>,
    pub psi1_hat: DVector<f64>,
    pub psi2_hat: DVector<f64>,
}

/// Deterministic per-replicate generator: `seed` picks the key, `rep` the
/// stream, so replicate r is reproducible independently of execution order.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep.wrapping_add(1));
    rng
}

/// Samples X = M + S + Σ^{1/2} Z Δ^{1/2} with Z i.i.d. standard normal.
///
/// `n1 > 0` labels the first n₁ columns as class one (the layout assumed by
/// any supplied signal); `n1 = 0` returns unlabeled data and requires no
/// signal. The matrix roots are the symmetric eigendecomposition roots.
pub fn sample_matrix_normal(
    params: &MatrixNormalParams,
    signal: Option<&SignalSpec>,
    n1: usize,
    seed: u64,
) -> Result<DataMatrix> {
    let mut rng = replicate_rng(seed, 0);
    sample_matrix_normal_with(params, signal, n1, &mut rng)
}

/// As [`sample_matrix_normal`] but drawing from a caller-provided generator,
/// for replicate loops that manage their own streams.
pub fn sample_matrix_normal_with(
    params: &MatrixNormalParams,
    signal: Option<&SignalSpec>,
    n1: usize,
    rng: &mut impl Rng,
) -> Result<DataMatrix> {
    let m = params.nu.len();
    let n = params.mu.len();
    if let Some(s) = signal {
        if s.psi1.len() != m {
            return Err(Error::Parameter(format!(
                "signal length {} does not match m = {m}",
                s.psi1.len()
            )));
        }
        if n1 == 0 || n1 >= n {
            return Err(Error::Parameter(format!("signal requires 0 < n1 < {n}")));
        }
    }
    let l_sigma = sym_sqrt(&params.sigma);
    let l_delta = sym_sqrt(&params.delta);
    let z = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut x = &l_sigma * z * &l_delta;
    for j in 0..n {
        let psi = signal.map(|s| if j < n1 { &s.psi1 } else { &s.psi2 });
        for i in 0..m {
            x[(i, j)] += params.nu[i] + params.mu[j] + psi.map_or(0.0, |p| p[i]);
        }
    }
    if n1 > 0 {
        DataMatrix::contiguous(x, n1)
    } else {
        Ok(DataMatrix::unlabeled(x))
    }
}

/// Estimates the decomposition X = M̂ + Ŝ + N by the closed-form chain:
/// column means μ̂, then row means ν̂ of the column-centered data, then
/// per-class row means ψ̂₁, ψ̂₂ of the doubly-centered data.
///
/// By construction the reconstruction is exact and each noise row sums to
/// zero within each class.
pub fn decompose(x: &DataMatrix) -> Result<DecompositionFit> {
    if !x.has_labels() {
        return Err(Error::Parameter("decompose requires class labels".into()));
    }
    x.require_two_per_class()?;
    let (m, n) = x.values.shape();
    let mu_hat = DVector::from_fn(n, |j, _| x.values.column(j).mean());
    let mut centered = x.values.clone();
    for j in 0..n {
        for i in 0..m {
            centered[(i, j)] -= mu_hat[j];
        }
    }
    let nu_hat = DVector::from_fn(m, |i, _| centered.row(i).mean());
    for i in 0..m {
        for j in 0..n {
            centered[(i, j)] -= nu_hat[i];
        }
    }
    let class_mean = |cols: &[usize]| -> DVector<f64> {
        let inv = 1.0 / cols.len() as f64;
        DVector::from_fn(m, |i, _| cols.iter().map(|&j| centered[(i, j)]).sum::<f64>() * inv)
    };
    let psi1_hat = class_mean(&x.class1);
    let psi2_hat = class_mean(&x.class2);
    let mut signal_matrix = DMatrix::zeros(m, n);
    for &j in &x.class1 {
        signal_matrix.set_column(j, &psi1_hat);
    }
    for &j in &x.class2 {
        signal_matrix.set_column(j, &psi2_hat);
    }
    let mean_matrix = DMatrix::from_fn(m, n, |i, j| nu_hat[i] + mu_hat[j]);
    let noise = &centered - &signal_matrix;
    Ok(DecompositionFit {
        mean_matrix,
        signal_matrix,
        noise,
        nu_hat,
        mu_hat,
        psi1_hat,
        psi2_hat,
    })
}

/// Structured covariance families used by the simulation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    /// Entries ρ^{|i−j|}.
    Ar1,
    /// Block-diagonal with AR(ρ) blocks of the given size, zero off-block.
    BlockAr1,
}

/// Builds an AR(1) or block-AR(1) correlation matrix. `block` is required
/// (and must divide `dim`) for [`CovKind::BlockAr1`].
pub fn make_structured_cov(kind: CovKind, dim: usize, rho: f64, block: Option<usize>) -> Result<DMatrix<f64>> {
    if rho.abs() >= 1.0 {
        return Err(Error::Parameter(format!("|rho| must be < 1, got {rho}")));
    }
    match kind {
        CovKind::Ar1 => Ok(DMatrix::from_fn(dim, dim, |i, j| {
            crate::special::powf(rho, i.abs_diff(j) as f64)
        })),
        CovKind::BlockAr1 => {
            let b = block.ok_or_else(|| Error::Parameter("block size required for block_ar1".into()))?;
            if b == 0 || dim % b != 0 {
                return Err(Error::Parameter(format!("block {b} must divide dim {dim}")));
            }
            Ok(DMatrix::from_fn(dim, dim, |i, j| {
                if i / b == j / b {
                    crate::special::powf(rho, i.abs_diff(j) as f64)
                } else {
                    0.0
                }
            }))
        }
    }
}

/// Maximum-likelihood covariance pair of a row- and column-centered matrix:
/// (XXᵀ/n, XᵀX/m) — each Gram matrix is averaged over the dimension it sums
/// out. The nonzero eigenvalues of n·Σ̂ and m·Δ̂ coincide.
pub fn empirical_cov_pair(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = x.nrows() as f64;
    let n = x.ncols() as f64;
    (x * x.transpose() / n, x.transpose() * x / m)
}
