//! Simulation harness: data generators, the per-replicate pipeline
//! (standard or sphered), aggregation over replicates, and table emission.

use std::path::Path;

use matfdr_core::fdr::{
    bh_q_values, empirical_null_fdr, fdr_curve, permutation_fdr, procedure_columns, FdrReport,
    Procedure,
};
use matfdr_core::model::{
    decompose, empirical_cov_pair, replicate_rng, sample_matrix_normal_with, MatrixNormalParams,
};
use matfdr_core::sphere::{central_match, sphere};
use matfdr_core::stats::{p_values, row_t_stats, Reference, TestStatVector};
use matfdr_core::trcm::{cross_validate_lambda, default_lambda_grid, fit_trcm};
use matfdr_core::DataMatrix;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::io::{fmt_f64, write_fdr_curve, write_matrix};
use crate::scenario::{build_cov, CovSpec, Generator, Pipeline, Scenario};
use crate::svg::write_curve_svg;
use crate::CliError;

/// Rejection counts reported in the summary tables.
pub const SUMMARY_GRID: [usize; 5] = [40, 45, 50, 55, 60];

/// The harness caps covariance refinement at this many alternating
/// iterations; by then relative objective changes are ~1e-3 and the fit is
/// study-quality without dominating the runtime budget.
pub const STUDY_MAX_ITER: usize = 20;
pub const STUDY_TOL: f64 = 1e-5;

/// Resolved simulation truth: the row and column covariances actually used
/// to generate data.
#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    pub sigma: DMatrix<f64>,
    pub delta: DMatrix<f64>,
}

/// Permutation that interleaves the two contiguous class blocks in pairs
/// (pattern c1,c1,c2,c2,...). Structured column covariances are conjugated
/// by it so that their correlation blocks span both classes — with
/// contiguous classes a short-range column correlation would barely couple
/// the class means and the correlation study would be vacuous.
pub fn class_interleave_permutation(n: usize) -> Vec<usize> {
    let mut lab: Vec<u8> = (0..n).map(|i| [0, 0, 1, 1][i % 4]).collect();
    let n2 = n / 2;
    while lab.iter().filter(|&&l| l == 1).count() > n2 {
        let last = lab.iter().rposition(|&l| l == 1).unwrap();
        lab[last] = 0;
    }
    let mut perm: Vec<usize> = (0..n).filter(|&i| lab[i] == 0).collect();
    perm.extend((0..n).filter(|&i| lab[i] == 1));
    perm
}

fn conjugate(a: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(perm[i], perm[j])])
}

/// Subsamples `m_sub` rows and `n_sub` columns of a data file, centers the
/// block, and returns its empirical covariance pair with light diagonal
/// loading so both matrices are strictly positive definite.
pub fn empirical_cov_scenario(
    matrix_file: &Path,
    m_sub: usize,
    n_sub: usize,
    seed: u64,
) -> Result<ScenarioTruth, CliError> {
    let source = crate::io::read_data(matrix_file)?.values;
    let (m, n) = source.shape();
    if m < m_sub || n < n_sub {
        return Err(CliError::Config(format!(
            "empirical source is {m}x{n}, need at least {m_sub}x{n_sub}"
        )));
    }
    let mut rng = replicate_rng(seed, 0);
    let mut rows: Vec<usize> = (0..m).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    cols.shuffle(&mut rng);
    rows.truncate(m_sub);
    cols.truncate(n_sub);
    rows.sort_unstable();
    cols.sort_unstable();
    let mut sub = DMatrix::from_fn(m_sub, n_sub, |i, j| source[(rows[i], cols[j])]);
    // Double centering, matching the model's mean restrictions.
    for j in 0..n_sub {
        let mu = sub.column(j).mean();
        sub.column_mut(j).add_scalar_mut(-mu);
    }
    for i in 0..m_sub {
        let nu = sub.row(i).mean();
        sub.row_mut(i).add_scalar_mut(-nu);
    }
    let (mut sigma, mut delta) = empirical_cov_pair(&sub);
    let load = |a: &mut DMatrix<f64>| {
        let d = a.nrows();
        let bump = 0.01 * a.trace() / d as f64;
        if bump <= 0.0 {
            return Err(CliError::Config(
                "empirical covariance is rank-deficient beyond repair; supply a larger source matrix"
                    .into(),
            ));
        }
        for i in 0..d {
            a[(i, i)] += bump;
        }
        Ok(())
    };
    load(&mut sigma)?;
    load(&mut delta)?;
    Ok(ScenarioTruth { sigma, delta })
}

/// Builds the generating covariances for a scenario.
pub fn resolve_truth(sc: &Scenario) -> Result<ScenarioTruth, CliError> {
    if let CovSpec::Empirical { file } = &sc.row_cov {
        return empirical_cov_scenario(file, sc.m, sc.n, sc.seed);
    }
    let sigma = build_cov(&sc.row_cov, sc.m)?;
    let mut delta = build_cov(&sc.col_cov, sc.n)?;
    if !matches!(sc.col_cov, CovSpec::Identity) {
        delta = conjugate(&delta, &class_interleave_permutation(sc.n));
    }
    Ok(ScenarioTruth { sigma, delta })
}

fn require_identity(spec: &CovSpec, what: &str, generator: &str) -> Result<(), CliError> {
    if !matches!(spec, CovSpec::Identity) {
        return Err(CliError::Config(format!(
            "{generator} defines its own {what} structure; set it to identity"
        )));
    }
    Ok(())
}

/// Draws one replicate of a scenario. Replicate `rep` uses its own RNG
/// stream derived from (seed, rep), so replicates are independent of
/// execution order.
pub fn generate(sc: &Scenario, truth: &ScenarioTruth, rep: usize) -> Result<DataMatrix, CliError> {
    let mut rng = replicate_rng(sc.seed, rep as u64);
    let signal = sc.signal();
    match sc.generator {
        Generator::MatrixNormal => {
            let params = MatrixNormalParams::centered(truth.sigma.clone(), truth.delta.clone())?;
            Ok(sample_matrix_normal_with(&params, Some(&signal), sc.n1, &mut rng)?)
        }
        Generator::LatentVariable => {
            require_identity(&sc.row_cov, "row covariance", "latent_variable")?;
            require_identity(&sc.col_cov, "column covariance", "latent_variable")?;
            let (m, n) = (sc.m, sc.n);
            let d = 2usize;
            // Latent design: two Bernoulli(1/2) latent factors with standard
            // normal loadings, plus unit noise, on top of the class signal.
            let g = DMatrix::from_fn(d, n, |_, _| f64::from(rng.random::<bool>()));
            let gamma =
                DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let u = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut x = gamma * g + u;
            for j in 0..n {
                let psi = if j < sc.n1 { &signal.psi1 } else { &signal.psi2 };
                for i in 0..m {
                    x[(i, j)] += psi[i];
                }
            }
            Ok(DataMatrix::contiguous(x, sc.n1)?)
        }
        Generator::RandomEffects => {
            require_identity(&sc.col_cov, "column covariance", "random_effects")?;
            let (m, n) = (sc.m, sc.n);
            // Batch effects: consecutive batches of five columns share one
            // random shift vector β_k ~ N(μ_k·1, 0.5·I) with batch means
            // cycling through [-0.5, -0.25, 0, 0.25, 0.5].
            let batch_size = 5usize;
            let mus = [-0.5, -0.25, 0.0, 0.25, 0.5];
            let sigma2: f64 = 0.5;
            let n_batches = n.div_ceil(batch_size);
            let betas: Vec<DVector<f64>> = (0..n_batches)
                .map(|k| {
                    DVector::from_fn(m, |_, _| {
                        mus[k % mus.len()]
                            + sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal)
                    })
                })
                .collect();
            let sigma_root = matfdr_core::linalg::sym_sqrt(&truth.sigma);
            let z = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut x = sigma_root * z;
            for j in 0..n {
                let psi = if j < sc.n1 { &signal.psi1 } else { &signal.psi2 };
                let beta = &betas[j / batch_size];
                for i in 0..m {
                    x[(i, j)] += psi[i] + beta[i];
                }
            }
            Ok(DataMatrix::contiguous(x, sc.n1)?)
        }
    }
}

/// Outcome of one replicate: the curve report plus pipeline diagnostics.
#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub report: FdrReport,
    /// Penalty chosen by cross-validation (sphered pipeline only).
    pub lambda: Option<f64>,
    pub converged: bool,
}

/// Monotone step-up FDR estimates at every rejection count:
/// q_k = min_{j >= k} multiplier · m · p_(j) / j, clamped to [0, 1].
fn stepup_estimates(p: &DVector<f64>, ranking: &[usize], multiplier: f64) -> Vec<f64> {
    let m = ranking.len();
    let mut q: Vec<f64> = ranking
        .iter()
        .enumerate()
        .map(|(i, &idx)| multiplier * p[idx] * m as f64 / (i + 1) as f64)
        .collect();
    let mut run = 1.0f64;
    for i in (0..m).rev() {
        run = run.min(q[i]);
        q[i] = run.min(1.0);
    }
    q
}

fn harmonic(m: usize) -> f64 {
    (1..=m).map(|i| 1.0 / i as f64).sum()
}

/// Runs the scenario's pipeline on one data matrix, producing the
/// four-procedure report. `truth_rows` enables exact FDP bookkeeping.
pub fn run_pipeline(
    x: &DataMatrix,
    sc: &Scenario,
    perm_seed: u64,
    cv_seed: u64,
    truth_rows: Option<Vec<usize>>,
) -> Result<RepOutcome, CliError> {
    let decomp = decompose(x)?;
    let mut lambda = None;
    let mut converged = true;

    // Both pipelines test the mean-centered data; the sphered pipeline
    // additionally whitens the noise and rescales the statistics by their
    // central quantile window.
    let (analysed, stats): (DataMatrix, TestStatVector) = match sc.pipeline {
        Pipeline::Standard => {
            let centered = DataMatrix::labeled(
                &decomp.signal_matrix + &decomp.noise,
                x.class1.clone(),
                x.class2.clone(),
            )?;
            let stats = row_t_stats(&centered)?;
            (centered, stats)
        }
        Pipeline::Sphered => {
            let grid = default_lambda_grid(&decomp.noise);
            let (lam, _) = cross_validate_lambda(&decomp.noise, &grid, sc.folds, cv_seed)?;
            let fit = fit_trcm(&decomp.noise, lam, STUDY_TOL, STUDY_MAX_ITER)?;
            lambda = Some(lam);
            converged = fit.converged;
            let sphered = sphere(x, &fit)?;
            let raw = row_t_stats(&sphered.values)?;
            let matched = central_match(&raw, sc.pi0)?;
            (sphered.values, matched.scaled_stats)
        }
    };

    let p = p_values(&stats, Reference::TDf)?;
    let (ranking, bh) = bh_q_values(&p);
    let m = p.len();
    let by = stepup_estimates(&p, &ranking, harmonic(m));
    let perm = permutation_fdr(&analysed, sc.perms, perm_seed)?;
    let enull = empirical_null_fdr(&stats, sc.pi0)?;
    let enull_curve: Vec<f64> = (1..=m).map(|k| enull.tail_fdr(&ranking, k)).collect();
    let report = fdr_curve(
        ranking,
        vec![
            (Procedure::Bh, bh),
            (Procedure::By, by),
            (Procedure::Perm, perm.q),
            (Procedure::Enull, enull_curve),
        ],
        truth_rows,
    )?;
    Ok(RepOutcome { report, lambda, converged })
}

/// A full study: per-replicate reports (or failure messages) plus the
/// rejection-grid summary.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub per_rep: Vec<Result<RepOutcome, String>>,
}

/// Mean and standard error of one column at one rejection count.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub k: usize,
    pub true_fdp: Cell,
    pub procedures: Vec<(Procedure, Cell)>,
}

fn cell(values: &[f64]) -> Cell {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let se = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    } else {
        f64::NAN
    };
    Cell { mean, se }
}

impl RunResult {
    pub fn successful(&self) -> Vec<&RepOutcome> {
        self.per_rep.iter().filter_map(|r| r.as_ref().ok()).collect()
    }

    /// Summary over the standard rejection grid (counts above m are skipped).
    pub fn summary(&self) -> Result<Vec<SummaryRow>, CliError> {
        let reps = self.successful();
        if reps.is_empty() {
            return Err(CliError::Config("no successful replicates to summarize".into()));
        }
        let m = reps[0].report.ranking.len();
        let mut rows = Vec::new();
        for &k in SUMMARY_GRID.iter().filter(|&&k| k <= m) {
            let collect = |f: &dyn Fn(&RepOutcome) -> f64| -> Vec<f64> {
                reps.iter().map(|r| f(r)).collect()
            };
            let true_fdp = cell(&collect(&|r| {
                r.report.true_fdp.as_ref().map(|v| v[k - 1]).unwrap_or(f64::NAN)
            }));
            let procedures = procedure_columns()
                .iter()
                .map(|&pc| {
                    let vals = collect(&|r| {
                        r.report.estimates(pc).map(|v| v[k - 1]).unwrap_or(f64::NAN)
                    });
                    (pc, cell(&vals))
                })
                .collect();
            rows.push(SummaryRow { k, true_fdp, procedures });
        }
        Ok(rows)
    }

    /// Mean curve across replicates, one row per rejection count.
    pub fn mean_curve(&self) -> Result<Vec<(usize, [f64; 5])>, CliError> {
        let reps = self.successful();
        if reps.is_empty() {
            return Err(CliError::Config("no successful replicates".into()));
        }
        let m = reps[0].report.ranking.len();
        let r = reps.len() as f64;
        let mut rows = Vec::with_capacity(m);
        for k in 0..m {
            let mut acc = [0.0f64; 5];
            for rep in &reps {
                acc[0] += rep.report.true_fdp.as_ref().map(|v| v[k]).unwrap_or(f64::NAN);
                for (slot, &pc) in procedure_columns().iter().enumerate() {
                    acc[slot + 1] += rep.report.estimates(pc).map(|v| v[k]).unwrap_or(f64::NAN);
                }
            }
            for a in &mut acc {
                *a /= r;
            }
            rows.push((k + 1, acc));
        }
        Ok(rows)
    }
}

/// Runs every replicate of a scenario. Replicates execute in parallel; the
/// result vector is indexed by replicate, so aggregation is independent of
/// scheduling order.
pub fn run_scenario(sc: &Scenario) -> Result<RunResult, CliError> {
    sc.validate()?;
    let truth = resolve_truth(sc)?;
    let truth_rows = sc.non_null_rows();
    let per_rep: Vec<Result<RepOutcome, String>> = (0..sc.reps)
        .into_par_iter()
        .map(|rep| {
            let x = generate(sc, &truth, rep).map_err(|e| e.to_string())?;
            // Auxiliary seeds come from a stream disjoint from the data
            // streams (high bit set), so they never reuse generator output.
            let mut aux = replicate_rng(sc.seed, rep as u64 | (1 << 63));
            let perm_seed: u64 = aux.random();
            let cv_seed: u64 = aux.random();
            run_pipeline(&x, sc, perm_seed, cv_seed, Some(truth_rows.clone()))
                .map_err(|e| e.to_string())
        })
        .collect();
    Ok(RunResult { scenario: sc.clone(), per_rep })
}

/// Writes `summary.csv`, the mean `fdr_curve.csv` and `fdr_curve.svg`.
pub fn emit_tables(result: &RunResult, out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(CliError::from_io(out_dir))?;
    let summary = result.summary()?;
    let mut out = String::from(
        "k,true_fdp_mean,true_fdp_se,bh_mean,bh_se,by_mean,by_se,perm_mean,perm_se,enull_mean,enull_se\n",
    );
    for row in &summary {
        let mut fields = vec![row.k.to_string(), fmt_f64(row.true_fdp.mean), fmt_f64(row.true_fdp.se)];
        for (_, c) in &row.procedures {
            fields.push(fmt_f64(c.mean));
            fields.push(fmt_f64(c.se));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&summary_path, out).map_err(CliError::from_io(&summary_path))?;

    let curve = result.mean_curve()?;
    write_curve_rows(&out_dir.join("fdr_curve.csv"), &curve)?;
    write_curve_svg(&out_dir.join("fdr_curve.svg"), &curve)?;

    if let Some(first) = result.per_rep.iter().find_map(|r| r.as_ref().ok()) {
        // Keep one per-replicate curve for inspection alongside the mean.
        write_fdr_curve(&out_dir.join("fdr_curve_rep0.csv"), &first.report)?;
    }
    Ok(())
}

/// Writes pre-averaged curve rows in the `k,true_fdp,bh,by,perm,enull`
/// format shared with per-replicate curves.
pub fn write_curve_rows(path: &Path, rows: &[(usize, [f64; 5])]) -> Result<(), CliError> {
    let mut out = String::from("k,true_fdp,bh,by,perm,enull\n");
    for (k, vals) in rows {
        let cols: Vec<String> = vals.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&format!("{},{}\n", k, cols.join(",")));
    }
    std::fs::write(path, out).map_err(CliError::from_io(path))
}

/// Writes a simulated data matrix and its truth rows for the `simulate`
/// subcommand.
pub fn emit_simulated(
    sc: &Scenario,
    out_dir: &Path,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(CliError::from_io(out_dir))?;
    let truth = resolve_truth(sc)?;
    for rep in 0..sc.reps {
        let x = generate(sc, &truth, rep)?;
        crate::io::write_labeled(&out_dir.join(format!("data_rep{rep}.csv")), &x)?;
    }
    crate::io::write_truth(&out_dir.join("truth.csv"), &sc.non_null_rows())?;
    write_matrix(&out_dir.join("sigma_truth.csv"), &truth.sigma)?;
    write_matrix(&out_dir.join("delta_truth.csv"), &truth.delta)?;
    Ok(())
}
