//! Joint L1-penalized estimation of the row covariance Σ and column
//! covariance Δ from a centered noise matrix N, by alternating graphical
//! lasso solves ("flip-flop"), plus cross-validated penalty selection.
//!
//! The objective being maximized over (Σ⁻¹, Δ⁻¹) is
//!
//! (n/2)·log|Σ⁻¹| + (m/2)·log|Δ⁻¹| − ½·tr(Σ⁻¹ N Δ⁻¹ Nᵀ)
//!     − λm‖Σ⁻¹‖₁ − λn‖Δ⁻¹‖₁
//!
//! with ‖·‖₁ the entrywise absolute sum including the diagonal. The pair is
//! identifiable only up to a scalar, fixed by the trace(Δ̂) = n convention.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::linalg::{spd_inverse, spd_log_det};
use crate::model::replicate_rng;
use crate::{Error, Result};

/// Relative diagonal loading applied to each glasso input so the subproblem
/// stays well-posed when rank(N) < d.
const DIAG_LOAD: f64 = 1e-8;

/// Result of [`fit_trcm`].
#[derive(Debug, Clone)]
pub struct TrcmFit {
    pub sigma_hat: DMatrix<f64>,
    pub delta_hat: DMatrix<f64>,
    pub sigma_inv_hat: DMatrix<f64>,
    pub delta_inv_hat: DMatrix<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub final_objective: f64,
    pub objective_trace: Vec<f64>,
    pub delta_is_diagonal: bool,
    pub converged: bool,
}

impl TrcmFit {
    /// An identity fit, useful as the "no sphering" reference.
    pub fn identity(m: usize, n: usize) -> Self {
        TrcmFit {
            sigma_hat: DMatrix::identity(m, m),
            delta_hat: DMatrix::identity(n, n),
            sigma_inv_hat: DMatrix::identity(m, m),
            delta_inv_hat: DMatrix::identity(n, n),
            lambda: 0.0,
            iterations: 0,
            final_objective: 0.0,
            objective_trace: Vec::new(),
            delta_is_diagonal: true,
            converged: true,
        }
    }
}

/// The penalized matrix-normal log-likelihood evaluated at (Σ⁻¹, Δ⁻¹).
pub fn penalized_loglik(
    n_mat: &DMatrix<f64>,
    sigma_inv: &DMatrix<f64>,
    delta_inv: &DMatrix<f64>,
    lambda: f64,
) -> Result<f64> {
    let (m, n) = n_mat.shape();
    if sigma_inv.nrows() != m || delta_inv.nrows() != n {
        return Err(Error::Parameter("inverse dimensions must match N".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Parameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let ld_s = spd_log_det(sigma_inv, "SigmaInv")?;
    let ld_d = spd_log_det(delta_inv, "DeltaInv")?;
    let sn = sigma_inv * n_mat;
    let nd = n_mat * delta_inv;
    let trace: f64 = sn.iter().zip(nd.iter()).map(|(a, b)| a * b).sum();
    let l1 = |a: &DMatrix<f64>| a.iter().map(|v| libm::fabs(*v)).sum::<f64>();
    Ok(0.5 * n as f64 * ld_s + 0.5 * m as f64 * ld_d - 0.5 * trace
        - lambda * m as f64 * l1(sigma_inv)
        - lambda * n as f64 * l1(delta_inv))
}

/// One lasso coordinate-descent solve for a glasso column:
/// min ½βᵀW₁₁β − s₁₂ᵀβ + ρ‖β‖₁, warm-started at the stored β.
/// `v` holds W₁₁β and is kept incrementally up to date.
fn lasso_cd(w11: &DMatrix<f64>, s12: &[f64], beta: &mut [f64], v: &mut [f64], rho: f64, tol: f64) {
    let d = beta.len();
    let mut active: Vec<bool> = beta.iter().map(|&b| b != 0.0).collect();
    let pass = |active_only: bool, active: &mut [bool], beta: &mut [f64], v: &mut [f64]| -> f64 {
        let mut maxdiff = 0.0f64;
        for k in 0..d {
            if active_only && !active[k] {
                continue;
            }
            let wkk = w11[(k, k)];
            let r = s12[k] - v[k] + wkk * beta[k];
            let bnew = if r > rho {
                (r - rho) / wkk
            } else if r < -rho {
                (r + rho) / wkk
            } else {
                0.0
            };
            let diff = bnew - beta[k];
            if diff != 0.0 {
                maxdiff = maxdiff.max(libm::fabs(diff));
                // maintain v = W11 beta
                let col = w11.column(k);
                for (l, vl) in v.iter_mut().enumerate() {
                    *vl += col[l] * diff;
                }
                beta[k] = bnew;
            }
            active[k] = beta[k] != 0.0;
        }
        maxdiff
    };
    pass(false, &mut active, beta, v);
    for _ in 0..50 {
        for _ in 0..50 {
            if pass(true, &mut active, beta, v) < tol {
                break;
            }
        }
        if pass(false, &mut active, beta, v) < tol {
            break;
        }
    }
}

/// Warm-startable primal block-coordinate-descent graphical lasso.
///
/// `b` stores the regression coefficients column by column (β for column j in
/// b[, j] with the j-th entry unused) and may be reused across calls with a
/// related S; the working covariance W is always re-initialized to S + ρI.
/// Returns Θ with exact zeros where the lasso zeroed a coefficient.
pub fn glasso_warm(
    s: &DMatrix<f64>,
    rho: f64,
    b: &mut DMatrix<f64>,
    tol: f64,
    max_sweeps: usize,
) -> Result<DMatrix<f64>> {
    let d = s.nrows();
    if d == 1 {
        return Ok(DMatrix::from_element(1, 1, 1.0 / (s[(0, 0)] + rho)));
    }
    let mut w = s.clone();
    for i in 0..d {
        w[(i, i)] += rho;
    }
    let s_mean = s.iter().map(|v| libm::fabs(*v)).sum::<f64>() / (d * d) as f64;
    let wtol = tol * s_mean.max(1e-12);
    let mut w11 = DMatrix::zeros(d - 1, d - 1);
    let mut s12 = alloc::vec![0.0f64; d - 1];
    let mut beta = alloc::vec![0.0f64; d - 1];
    let mut v = alloc::vec![0.0f64; d - 1];
    let mut converged = false;
    let mut wchange = f64::INFINITY;
    for _ in 0..max_sweeps {
        wchange = 0.0;
        for j in 0..d {
            let mut a = 0;
            for r_ in 0..d {
                if r_ == j {
                    continue;
                }
                s12[a] = s[(r_, j)];
                beta[a] = b[(r_, j)];
                let mut bb = 0;
                for c_ in 0..d {
                    if c_ == j {
                        continue;
                    }
                    w11[(a, bb)] = w[(r_, c_)];
                    bb += 1;
                }
                a += 1;
            }
            for (k, vk) in v.iter_mut().enumerate() {
                *vk = 0.0;
                for l in 0..d - 1 {
                    if beta[l] != 0.0 {
                        *vk += w11[(k, l)] * beta[l];
                    }
                }
            }
            lasso_cd(&w11, &s12, &mut beta, &mut v, rho, tol * 0.1 * s_mean.max(1e-12));
            let mut a = 0;
            for r_ in 0..d {
                if r_ == j {
                    continue;
                }
                b[(r_, j)] = beta[a];
                let val = v[a]; // = (W11 beta)[a] = new w12 entry
                wchange = wchange.max(libm::fabs(val - w[(r_, j)]));
                w[(r_, j)] = val;
                w[(j, r_)] = val;
                a += 1;
            }
        }
        if wchange < wtol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "glasso".into(),
            residual: wchange,
        });
    }
    // reconstruct Theta from W and B; lasso zeros carry over exactly
    let mut theta = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut dot = 0.0;
        for r_ in 0..d {
            if r_ != j {
                dot += w[(r_, j)] * b[(r_, j)];
            }
        }
        let th22 = 1.0 / (w[(j, j)] - dot);
        theta[(j, j)] = th22;
        for r_ in 0..d {
            if r_ != j {
                theta[(r_, j)] = -b[(r_, j)] * th22;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            // the two estimates differ only by rounding unless one was zeroed
            let v = if theta[(i, j)] == 0.0 || theta[(j, i)] == 0.0 {
                if libm::fabs(theta[(i, j)]) > libm::fabs(theta[(j, i)]) {
                    theta[(i, j)]
                } else {
                    theta[(j, i)]
                }
            } else {
                0.5 * (theta[(i, j)] + theta[(j, i)])
            };
            theta[(i, j)] = v;
            theta[(j, i)] = v;
        }
    }
    Ok(theta)
}

/// Graphical lasso: argmax over SPD Θ of log|Θ| − tr(ΘS) − ρ‖Θ‖₁.
pub fn glasso(s: &DMatrix<f64>, rho: f64, tol: f64) -> Result<DMatrix<f64>> {
    if rho < 0.0 {
        return Err(Error::Parameter(format!("rho must be >= 0, got {rho}")));
    }
    let d = s.nrows();
    let mut b = DMatrix::zeros(d, d);
    glasso_warm(s, rho, &mut b, tol, 100)
}

/// KKT residual of a candidate Θ for the glasso problem:
/// max over entries of |S − Θ⁻¹ + ρ·∂‖Θ‖₁| using the optimal subgradient
/// choice on zero entries.
pub fn glasso_kkt_residual(s: &DMatrix<f64>, rho: f64, theta: &DMatrix<f64>) -> Result<f64> {
    let winv = spd_inverse(theta, "Theta")?;
    let d = s.nrows();
    let mut res = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let g = s[(i, j)] - winv[(i, j)];
            let r = if theta[(i, j)] != 0.0 {
                libm::fabs(g + rho * theta[(i, j)].signum())
            } else {
                (libm::fabs(g) - rho).max(0.0)
            };
            res = res.max(r);
        }
    }
    Ok(res)
}

fn diag_loaded(mut s: DMatrix<f64>) -> DMatrix<f64> {
    let d = s.nrows();
    let load = DIAG_LOAD * s.trace() / d as f64;
    for i in 0..d {
        s[(i, i)] += load;
    }
    s
}

/// Internal flip-flop driver with caller-held warm-start storage and
/// adjustable glasso effort (used by cross-validation).
#[allow(clippy::too_many_arguments)]
fn fit_trcm_inner(
    n_mat: &DMatrix<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    gtol: f64,
    gsweeps: usize,
    b_sigma: &mut DMatrix<f64>,
    b_delta: &mut DMatrix<f64>,
) -> Result<TrcmFit> {
    let (m, n) = n_mat.shape();
    if lambda <= 0.0 {
        return Err(Error::Parameter(format!("lambda must be > 0, got {lambda}")));
    }
    let rho_sigma = 2.0 * lambda * m as f64 / n as f64;
    let rho_delta = 2.0 * lambda * n as f64 / m as f64;
    let mut delta_inv = DMatrix::<f64>::identity(n, n);
    let mut sigma_inv;
    let mut objective_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let s_sigma = diag_loaded(n_mat * &delta_inv * n_mat.transpose() / n as f64);
        sigma_inv = glasso_warm(&s_sigma, rho_sigma, b_sigma, gtol, gsweeps)?;
        let s_delta = diag_loaded(n_mat.transpose() * &sigma_inv * n_mat / m as f64);
        delta_inv = glasso_warm(&s_delta, rho_delta, b_delta, gtol, gsweeps)?;
        iterations += 1;
        let obj = penalized_loglik(n_mat, &sigma_inv, &delta_inv, lambda)?;
        let done = objective_trace
            .last()
            .is_some_and(|prev: &f64| libm::fabs(obj - prev) < tol * libm::fabs(*prev));
        objective_trace.push(obj);
        if done {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
    }
    // identifiability: normalize the reported pair as (Σ̂/c, c·Δ̂) so that
    // trace(Δ̂) = n while Σ̂ ⊗ Δ̂ is unchanged. The iteration itself runs on
    // the un-normalized pair: the penalized objective is not scale-invariant,
    // so rescaling mid-stream would both perturb the trajectory and make the
    // recorded objective trace non-monotone.
    let mut sigma_hat = spd_inverse(&sigma_inv, "SigmaInv")?;
    let mut delta_hat = spd_inverse(&delta_inv, "DeltaInv")?;
    let c = n as f64 / delta_hat.trace();
    delta_hat *= c;
    delta_inv /= c;
    sigma_hat /= c;
    sigma_inv *= c;
    let delta_is_diagonal = (0..n).all(|i| (0..i).all(|j| delta_inv[(i, j)] == 0.0));
    let final_objective = *objective_trace.last().unwrap();
    Ok(TrcmFit {
        sigma_hat,
        delta_hat,
        sigma_inv_hat: sigma_inv,
        delta_inv_hat: delta_inv,
        lambda,
        iterations,
        final_objective,
        objective_trace,
        delta_is_diagonal,
        converged,
    })
}

/// Maximizes the penalized log-likelihood by alternating glasso solves.
///
/// Each outer iteration solves the Σ-subproblem (glasso on NΔ̂⁻¹Nᵀ/n at
/// penalty 2λm/n), then the Δ-subproblem (glasso on NᵀΣ̂⁻¹N/m at 2λn/m),
/// then rescales the pair to trace(Δ̂) = n. Stops when the relative
/// objective change drops below `tol`; if `max_iter` is exceeded the fit is
/// returned with `converged = false` rather than as an error.
pub fn fit_trcm(n_mat: &DMatrix<f64>, lambda: f64, tol: f64, max_iter: usize) -> Result<TrcmFit> {
    let (m, n) = n_mat.shape();
    let mut b_sigma = DMatrix::zeros(m, m);
    let mut b_delta = DMatrix::zeros(n, n);
    fit_trcm_inner(n_mat, lambda, tol, max_iter, 1e-6, 100, &mut b_sigma, &mut b_delta)
}

/// Default flip-flop stopping parameters.
pub const TRCM_TOL: f64 = 1e-5;
pub const TRCM_MAX_ITER: usize = 100;

/// The default 8-point log-spaced penalty grid from λ_max down to 0.01·λ_max,
/// where λ_max is the smallest λ making both initial subproblem estimates
/// diagonal (computed from the largest off-diagonals of NNᵀ/n and NᵀN/m).
pub fn default_lambda_grid(n_mat: &DMatrix<f64>) -> Vec<f64> {
    let (m, n) = n_mat.shape();
    let max_off = |a: &DMatrix<f64>| {
        let d = a.nrows();
        let mut mx = 0.0f64;
        for i in 0..d {
            for j in 0..i {
                mx = mx.max(libm::fabs(a[(i, j)]));
            }
        }
        mx
    };
    let s_sigma = n_mat * n_mat.transpose() / n as f64;
    let s_delta = n_mat.transpose() * n_mat / m as f64;
    // invert the per-block penalty weights: rho_Sigma = 2 lam m / n, etc.
    let lmax = (max_off(&s_sigma) * n as f64 / (2.0 * m as f64))
        .max(max_off(&s_delta) * m as f64 / (2.0 * n as f64))
        .max(1e-12);
    let lmin = 0.01 * lmax;
    let k = 8;
    (0..k)
        .map(|i| {
            let t = i as f64 / (k - 1) as f64;
            libm::exp(libm::log(lmax) + t * (libm::log(lmin) - libm::log(lmax)))
        })
        .collect()
}

/// Five-fold-style cross-validation over a penalty grid.
///
/// Columns are partitioned into `folds` interleaved blocks of a seeded
/// permutation. For each λ the model is fit on the training columns (a short
/// flip-flop with loosened glasso tolerance) and held-out columns are scored
/// by the unpenalized matrix-normal log-likelihood with the training Σ̂ and
/// an identity column-covariance assumption on the held-out block:
/// ½·n_test·log|Σ̂⁻¹| − ½·tr(Σ̂⁻¹ N_test N_testᵀ). Ties break toward the
/// larger (sparser) λ.
pub fn cross_validate_lambda(
    n_mat: &DMatrix<f64>,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let (m, n) = n_mat.shape();
    if grid.is_empty() || grid.iter().any(|&l| l <= 0.0) {
        return Err(Error::Parameter("grid must be nonempty and positive".into()));
    }
    if folds < 2 || folds > n {
        return Err(Error::Parameter(format!("folds = {folds} out of range for n = {n}")));
    }
    if grid.len() == 1 {
        return Ok((grid[0], alloc::vec![0.0]));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = replicate_rng(seed, u64::MAX);
    perm.shuffle(&mut rng);
    let mut scores = alloc::vec![0.0f64; grid.len()];
    let mut usable = alloc::vec![true; grid.len()];
    for f in 0..folds {
        let test: Vec<usize> = perm.iter().copied().skip(f).step_by(folds).collect();
        let train: Vec<usize> = (0..n).filter(|j| !test.contains(j)).collect();
        if train.len() < 2 || test.is_empty() {
            continue;
        }
        let n_train = DMatrix::from_fn(m, train.len(), |i, jj| n_mat[(i, train[jj])]);
        let n_test = DMatrix::from_fn(m, test.len(), |i, jj| n_mat[(i, test[jj])]);
        let mut b_sigma = DMatrix::zeros(m, m);
        let mut b_delta = DMatrix::zeros(train.len(), train.len());
        let gram_test = &n_test * n_test.transpose();
        for (gi, &lam) in grid.iter().enumerate() {
            let fit = match fit_trcm_inner(&n_train, lam, TRCM_TOL, 3, 1e-5, 30, &mut b_sigma, &mut b_delta) {
                Ok(f) => f,
                Err(_) => {
                    usable[gi] = false;
                    continue;
                }
            };
            let ld = match spd_log_det(&fit.sigma_inv_hat, "SigmaInv") {
                Ok(v) => v,
                Err(_) => {
                    usable[gi] = false;
                    continue;
                }
            };
            let tr: f64 = (&fit.sigma_inv_hat * &gram_test).trace();
            let sc = 0.5 * test.len() as f64 * ld - 0.5 * tr;
            if sc.is_finite() {
                scores[gi] += sc;
            } else {
                usable[gi] = false;
            }
        }
    }
    let mut best: Option<(f64, f64)> = None; // (lambda, score)
    for (gi, &lam) in grid.iter().enumerate() {
        if !usable[gi] {
            continue;
        }
        let sc = scores[gi];
        best = match best {
            None => Some((lam, sc)),
            Some((bl, bs)) => {
                if sc > bs || (sc == bs && lam > bl) {
                    Some((lam, sc))
                } else {
                    Some((bl, bs))
                }
            }
        };
    }
    let (best_lambda, _) = best.ok_or_else(|| Error::NonConvergence {
        what: "cross-validation (no usable lambda)".into(),
        residual: f64::NAN,
    })?;
    for (gi, ok) in usable.iter().enumerate() {
        if !ok {
            scores[gi] = f64::NEG_INFINITY;
        }
    }
    Ok((best_lambda, scores))
}

/// Fit with the penalty chosen by [`cross_validate_lambda`] on the default
/// grid.
pub fn fit_trcm_cv(n_mat: &DMatrix<f64>, folds: usize, seed: u64) -> Result<TrcmFit> {
    let grid = default_lambda_grid(n_mat);
    let (lambda, _) = cross_validate_lambda(n_mat, &grid, folds, seed)?;
    fit_trcm(n_mat, lambda, TRCM_TOL, TRCM_MAX_ITER)
}
