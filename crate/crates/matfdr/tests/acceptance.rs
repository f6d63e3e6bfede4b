//! Acceptance gate: twelve end-to-end criteria, one pass/fail line each.
//! Tolerances are pinned as constants next to each criterion.
//!
//! The two `*_full_preset` tests reproduce the full-size study tables and
//! are `#[ignore]`d by default (they run for tens of minutes); everything
//! else is desk-scale.

use std::time::Instant;

use matfdr::harness::{resolve_truth, run_scenario, RunResult};
use matfdr::scenario::{CovSpec, Pipeline, Scenario};
use matfdr_core::fdr::{bh_stepup, by_stepup, Procedure};
use matfdr_core::linalg::{spd_inverse, sym_inv_sqrt_flagged, sym_sqrt};
use matfdr_core::model::{
    decompose, make_structured_cov, replicate_rng, CovKind, DataMatrix,
};
use matfdr_core::special::t_cdf;
use matfdr_core::sphere::{central_match, sphere};
use matfdr_core::stats::{eta, eta_blocked, row_t_stats, t_null_variance_mc, StatKind, TestStatVector};
use matfdr_core::trcm::{fit_trcm, glasso, glasso_kkt_residual, TrcmFit};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn report(criterion: usize, desc: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("criterion {criterion} ({desc}): PASS — {detail}"),
        Err(detail) => {
            println!("criterion {criterion} ({desc}): FAIL — {detail}");
            panic!("criterion {criterion} failed: {detail}");
        }
    }
}

fn table1_covariances() -> Vec<DMatrix<f64>> {
    vec![
        make_structured_cov(CovKind::Ar1, 50, 0.9, None).unwrap(),
        make_structured_cov(CovKind::BlockAr1, 50, 0.9, Some(10)).unwrap(),
        make_structured_cov(CovKind::Ar1, 50, 0.5, None).unwrap(),
        make_structured_cov(CovKind::BlockAr1, 50, 0.5, Some(10)).unwrap(),
    ]
}

fn contiguous_classes() -> (Vec<usize>, Vec<usize>) {
    ((0..25).collect(), (25..50).collect())
}

#[test]
fn criterion_01_analytic_z_null_variance() {
    // Reference variance ratios for the four structured column covariances;
    // the first two are quoted to 3 decimals, the last two to 2.
    const TARGETS: [(f64, f64); 4] =
        [(9.215, 5e-4), (6.069, 5e-4), (2.76, 5e-3), (2.45, 5e-3)];
    let start = Instant::now();
    let (c1, c2) = contiguous_classes();
    let c_n = 2.0 / 25.0;
    let mut detail = String::new();
    let result = (|| {
        for (delta, (target, tol)) in table1_covariances().iter().zip(TARGETS) {
            let ratio = eta(delta, &c1, &c2) / c_n;
            if (ratio - target).abs() > tol {
                return Err(format!("got {ratio:.4}, want {target} ± {tol}"));
            }
            detail.push_str(&format!("{ratio:.3} "));
        }
        let elapsed = start.elapsed();
        if elapsed.as_secs_f64() >= 1.0 {
            return Err(format!("took {elapsed:?}, budget 1 s"));
        }
        Ok(format!("ratios {detail}in {elapsed:?}"))
    })();
    report(1, "analytic Z null variance", result);
}

#[test]
fn criterion_02_mc_t_null_variance() {
    const TARGETS: [f64; 4] = [19.94, 9.492, 3.197, 2.79];
    const REL_TOL: f64 = 0.03;
    const REPS: usize = 100_000;
    let (c1, c2) = contiguous_classes();
    let result = (|| {
        let mut detail = String::new();
        for (i, (delta, target)) in table1_covariances().iter().zip(TARGETS).enumerate() {
            let start = Instant::now();
            let (var, se) =
                t_null_variance_mc(delta, &c1, &c2, REPS, 1000 + i as u64).map_err(|e| e.to_string())?;
            let elapsed = start.elapsed();
            if (var - target).abs() > REL_TOL * target {
                return Err(format!(
                    "covariance {i}: var {var:.3} (se {se:.3}) vs {target} ± 3%"
                ));
            }
            if elapsed.as_secs_f64() >= 30.0 {
                return Err(format!("covariance {i} took {elapsed:?}, budget 30 s"));
            }
            detail.push_str(&format!("{var:.3} "));
        }
        Ok(format!("variances {detail}at {REPS} replicates"))
    })();
    report(2, "Monte-Carlo T null variance", result);
}

#[test]
fn criterion_03_blocked_eta_consistency() {
    const TOL: f64 = 1e-12;
    let result = (|| {
        let mut rng = replicate_rng(42, 0);
        for case in 0..100 {
            let d1 = 2 + (case % 5);
            let d2 = 2 + (case % 7);
            let spd = |rng: &mut _, d: usize| {
                let b = DMatrix::from_fn(d, d, |_, _| {
                    rand::Rng::sample::<f64, _>(rng, StandardNormal)
                });
                &b * b.transpose() + DMatrix::<f64>::identity(d, d) * 0.3
            };
            let delta1 = spd(&mut rng, d1);
            let delta2 = spd(&mut rng, d2);
            let n = d1 + d2;
            let mut block = DMatrix::zeros(n, n);
            block.view_mut((0, 0), (d1, d1)).copy_from(&delta1);
            block.view_mut((d1, d1), (d2, d2)).copy_from(&delta2);
            let c1: Vec<usize> = (0..d1).collect();
            let c2: Vec<usize> = (d1..n).collect();
            let general = eta(&block, &c1, &c2);
            let blocked = eta_blocked(&delta1, &delta2);
            if (general - blocked).abs() > TOL * general.abs().max(1.0) {
                return Err(format!("case {case}: {general} vs {blocked}"));
            }
        }
        Ok("100 random SPD pairs agree to 1e-12".into())
    })();
    report(3, "blocked eta consistency", result);
}

/// −(penalized log-likelihood) for the sparse inverse-covariance problem:
/// −log det Θ + tr(SΘ) + ρ‖Θ‖₁ (penalty includes the diagonal).
fn glasso_objective(s: &DMatrix<f64>, rho: f64, theta: &DMatrix<f64>) -> f64 {
    let chol = theta.clone().cholesky().expect("theta must be PD");
    let log_det = 2.0 * (0..theta.nrows()).map(|i| chol.l()[(i, i)].ln()).sum::<f64>();
    let l1: f64 = theta.iter().map(|v| v.abs()).sum();
    -log_det + (s * theta).trace() + rho * l1
}

/// Independent oracle: proximal-gradient (ISTA) with backtracking on the
/// dense objective. Slow but simple — exactly what the coordinate-descent
/// solver must match.
fn glasso_ista_oracle(s: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let d = s.nrows();
    let mut theta = DMatrix::<f64>::identity(d, d);
    let mut step = 1.0;
    let mut obj = glasso_objective(s, rho, &theta);
    for _ in 0..200_000 {
        let grad = s - theta.clone().try_inverse().unwrap();
        let mut accepted = false;
        while step > 1e-14 {
            let mut cand = &theta - &grad * step;
            for v in cand.iter_mut() {
                *v = v.signum() * (v.abs() - step * rho).max(0.0);
            }
            cand = (&cand + cand.transpose()) / 2.0;
            if cand.clone().cholesky().is_some() {
                let cand_obj = glasso_objective(s, rho, &cand);
                if cand_obj <= obj + 1e-15 {
                    let moved = (&cand - &theta).amax();
                    theta = cand;
                    obj = cand_obj;
                    accepted = true;
                    if moved < 1e-12 {
                        return theta;
                    }
                    step *= 1.2;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    theta
}

#[test]
fn criterion_04_glasso_against_dense_oracle() {
    const OBJ_TOL: f64 = 1e-6;
    const KKT_TOL: f64 = 1e-6;
    let result = (|| {
        let mut rng = replicate_rng(7, 0);
        let mut worst_gap = 0.0f64;
        let mut worst_kkt = 0.0f64;
        for case in 0..20 {
            let b = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = &b * b.transpose() + DMatrix::<f64>::identity(3, 3) * 0.2;
            let rho = 0.02 + 0.1 * (case as f64 / 20.0);
            let theta = glasso(&s, rho, 1e-9).map_err(|e| e.to_string())?;
            let oracle = glasso_ista_oracle(&s, rho);
            let gap = glasso_objective(&s, rho, &theta) - glasso_objective(&s, rho, &oracle);
            let kkt = glasso_kkt_residual(&s, rho, &theta).map_err(|e| e.to_string())?;
            if gap.abs() > OBJ_TOL {
                return Err(format!("case {case}: objective gap {gap:.2e} vs oracle"));
            }
            if kkt > KKT_TOL {
                return Err(format!("case {case}: KKT residual {kkt:.2e}"));
            }
            worst_gap = worst_gap.max(gap.abs());
            worst_kkt = worst_kkt.max(kkt);
        }
        Ok(format!("20 problems, max objective gap {worst_gap:.2e}, max KKT {worst_kkt:.2e}"))
    })();
    report(4, "graphical lasso vs dense oracle", result);
}

#[test]
fn criterion_05_flipflop_ascent_and_normalization() {
    // Relative slack for floating-point comparison of successive objectives.
    const ASCENT_SLACK: f64 = 1e-9;
    const TRACE_TOL: f64 = 1e-8;
    let result = (|| {
        let mut rng = replicate_rng(11, 0);
        for case in 0..10 {
            let (m, n) = (14 + case % 3, 10 + case % 4);
            let noise =
                DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let lambda = 0.02 + 0.05 * (case as f64 / 10.0);
            let fit = fit_trcm(&noise, lambda, 1e-7, 40).map_err(|e| e.to_string())?;
            for w in fit.objective_trace.windows(2) {
                if w[1] < w[0] - ASCENT_SLACK * w[0].abs().max(1.0) {
                    return Err(format!(
                        "case {case}: objective decreased {} -> {}",
                        w[0], w[1]
                    ));
                }
            }
            let tr = fit.delta_hat.trace();
            if (tr - n as f64).abs() > TRACE_TOL * n as f64 {
                return Err(format!("case {case}: trace(delta) = {tr}, want {n}"));
            }
        }
        Ok("10 random fits: objective nondecreasing, trace(delta)=n".into())
    })();
    report(5, "alternating-maximization ascent", result);
}

/// Mean empirical correlation at each within-block lag, averaged over
/// replicates. A per-pair maximum is statistically vacuous here (the max of
/// ~31k sample correlations from 50 observations concentrates near 0.5 even
/// for exact independence), so the structured lags carry the check.
fn max_lag_correlation(
    samples: &[DMatrix<f64>], // one matrix per replicate, variables = rows
    block: usize,
) -> f64 {
    let d = samples[0].nrows();
    let lags = block - 1;
    let mut sums = vec![0.0f64; lags];
    let mut counts = vec![0usize; lags];
    for x in samples {
        let n = x.ncols() as f64;
        let means: Vec<f64> = (0..d).map(|i| x.row(i).mean()).collect();
        let sds: Vec<f64> = (0..d)
            .map(|i| {
                (x.row(i).iter().map(|v| (v - means[i]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            })
            .collect();
        for start in (0..d).step_by(block) {
            for a in start..(start + block).min(d) {
                for b in (a + 1)..(start + block).min(d) {
                    let cov = x
                        .row(a)
                        .iter()
                        .zip(x.row(b).iter())
                        .map(|(u, v)| (u - means[a]) * (v - means[b]))
                        .sum::<f64>()
                        / (n - 1.0);
                    let lag = b - a - 1;
                    sums[lag] += cov / (sds[a] * sds[b]);
                    counts[lag] += 1;
                }
            }
        }
    }
    (0..lags)
        .filter(|&l| counts[l] > 0)
        .map(|l| (sums[l] / counts[l] as f64).abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_06_oracle_sphering_removes_correlation() {
    const CORR_TOL: f64 = 0.1;
    const REPS: usize = 10;
    let result = (|| {
        let sigma = make_structured_cov(CovKind::BlockAr1, 250, 0.9, Some(10)).unwrap();
        let delta = make_structured_cov(CovKind::BlockAr1, 50, 0.5, Some(10)).unwrap();
        let fit = TrcmFit {
            sigma_inv_hat: spd_inverse(&sigma, "sigma").unwrap(),
            delta_inv_hat: spd_inverse(&delta, "delta").unwrap(),
            sigma_hat: sigma.clone(),
            delta_hat: delta.clone(),
            lambda: 0.0,
            iterations: 0,
            final_objective: 0.0,
            objective_trace: vec![],
            delta_is_diagonal: false,
            converged: true,
        };
        let ls = sym_sqrt(&sigma);
        let ld = sym_sqrt(&delta);
        let mut sphered_noise = Vec::with_capacity(REPS);
        let mut raw_noise = Vec::with_capacity(REPS);
        for rep in 0..REPS {
            let mut rng = replicate_rng(600, rep as u64);
            let z = DMatrix::from_fn(250, 50, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = DataMatrix::contiguous(&ls * z * &ld, 25).unwrap();
            let sph = sphere(&x, &fit).map_err(|e| e.to_string())?;
            sphered_noise.push(&sph.values.values - &sph.signal_matrix);
            raw_noise.push(decompose(&x).map_err(|e| e.to_string())?.noise);
        }
        let row_corr = max_lag_correlation(&sphered_noise, 10);
        let col_t: Vec<DMatrix<f64>> = sphered_noise.iter().map(|m| m.transpose()).collect();
        let col_corr = max_lag_correlation(&col_t, 10);
        // Contrast: without sphering the lag-1 row correlation is ~0.9.
        let raw_row_corr = max_lag_correlation(&raw_noise, 10);
        if row_corr >= CORR_TOL || col_corr >= CORR_TOL {
            return Err(format!(
                "residual structured correlation rows {row_corr:.3}, cols {col_corr:.3}"
            ));
        }
        if raw_row_corr < 0.5 {
            return Err(format!(
                "sanity: unsphered row correlation only {raw_row_corr:.3}"
            ));
        }
        Ok(format!(
            "max lag correlation rows {row_corr:.3}, cols {col_corr:.3} (unsphered {raw_row_corr:.3})"
        ))
    })();
    report(6, "oracle sphering removes correlation", result);
}

#[test]
fn criterion_07_sphered_t_matches_t48() {
    // Kolmogorov-Smirnov critical value at level 0.01: 1.628 / sqrt(m).
    const KS_CONST: f64 = 1.628;
    const M: usize = 10_000;
    let result = (|| {
        let delta = make_structured_cov(CovKind::Ar1, 50, 0.5, None).unwrap();
        let ld = sym_sqrt(&delta);
        let (rd, _) = sym_inv_sqrt_flagged(&delta);
        let mut rng = replicate_rng(700, 0);
        let z = DMatrix::from_fn(M, 50, |_, _| rng.sample::<f64, _>(StandardNormal));
        // Null data with column covariance delta, sphered by the oracle root.
        let x = DataMatrix::contiguous(z * &ld * &rd, 25).unwrap();
        let dec = decompose(&x).map_err(|e| e.to_string())?;
        let centered = DataMatrix::labeled(
            &dec.signal_matrix + &dec.noise,
            x.class1.clone(),
            x.class2.clone(),
        )
        .map_err(|e| e.to_string())?;
        let t = row_t_stats(&centered).map_err(|e| e.to_string())?;
        let mut sorted: Vec<f64> = t.values.iter().copied().collect();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d_stat = 0.0f64;
        for (i, &v) in sorted.iter().enumerate() {
            let f = t_cdf(v, 48.0);
            d_stat = d_stat
                .max((f - i as f64 / M as f64).abs())
                .max(((i + 1) as f64 / M as f64 - f).abs());
        }
        let crit = KS_CONST / (M as f64).sqrt();
        if d_stat >= crit {
            return Err(format!("KS statistic {d_stat:.5} >= critical {crit:.5}"));
        }
        Ok(format!("KS {d_stat:.5} < {crit:.5} over {M} null rows"))
    })();
    report(7, "sphered T follows t(48)", result);
}

#[test]
fn criterion_08_central_matching_recovers_scale() {
    const TRUE_SCALE: f64 = 3.0;
    const REL_TOL: f64 = 0.02;
    const DRAWS: usize = 100_000;
    let result = (|| {
        let mut rng = replicate_rng(800, 0);
        let df = 48.0;
        let values = DVector::from_fn(DRAWS, |_, _| {
            // t draw as normal / sqrt(chi^2_df / df).
            let z: f64 = rng.sample(StandardNormal);
            let chi2: f64 = (0..48)
                .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                .sum();
            TRUE_SCALE * z / (chi2 / df).sqrt()
        });
        let stats = TestStatVector {
            values,
            kind: StatKind::TSphered,
            df: 48,
            c_n: 2.0 / 25.0,
            flagged: vec![],
        };
        let matched = central_match(&stats, 0.8).map_err(|e| e.to_string())?;
        let recovered = matched.scale();
        if (recovered * TRUE_SCALE - 1.0).abs() > REL_TOL {
            return Err(format!(
                "recovered scale {recovered:.5}, want {:.5} ± 2%",
                1.0 / TRUE_SCALE
            ));
        }
        Ok(format!("recovered scale {recovered:.5} vs 1/3"))
    })();
    report(8, "central matching recovers the null scale", result);
}

#[test]
fn criterion_09_stepup_golden_cases() {
    let result = (|| {
        let p = DVector::from_vec(vec![0.01, 0.02, 0.2]);
        let bh = bh_stepup(&p, 0.05).map_err(|e| e.to_string())?;
        let by = by_stepup(&p, 0.05).map_err(|e| e.to_string())?;
        if bh.len() != 2 {
            return Err(format!("BH rejected {} of 3, want 2", bh.len()));
        }
        if !by.is_empty() {
            return Err(format!("BY rejected {} of 3, want 0", by.len()));
        }
        Ok("BH rejects 2, BY rejects 0 on the worked 3-p-value case".into())
    })();
    report(9, "step-up golden cases", result);
}

fn desk_scenario(pipeline: Pipeline) -> Scenario {
    Scenario {
        name: "desk".into(),
        row_cov: CovSpec::BlockAr1 { rho: 0.9, block: 10 },
        col_cov: CovSpec::BlockAr1 { rho: 0.5, block: 10 },
        reps: 3,
        perms: 200,
        seed: 20260826,
        pipeline,
        ..Scenario::default()
    }
}

fn cell_at(result: &RunResult, k: usize, which: Option<Procedure>) -> Result<f64, String> {
    let summary = result.summary().map_err(|e| e.to_string())?;
    let row = summary
        .iter()
        .find(|r| r.k == k)
        .ok_or_else(|| format!("no summary row at k={k}"))?;
    Ok(match which {
        None => row.true_fdp.mean,
        Some(p) => {
            row.procedures
                .iter()
                .find(|(q, _)| *q == p)
                .ok_or_else(|| format!("no column for {}", p.name()))?
                .1
                .mean
        }
    })
}

#[test]
fn criterion_10_desk_scale_sphering_study() {
    // Desk-scale contract at 3 replicates, 200 permutations, 50 rejections:
    // the naive BH estimate overshoots the true FDP by >= 3x under column
    // correlation, while the sphered estimate lands within 2.5x and the
    // sphered FDP drops below the unsphered FDP.
    const K: usize = 50;
    const UNSPHERED_MIN_RATIO: f64 = 3.0;
    const SPHERED_MAX_RATIO: f64 = 2.5;
    const BUDGET_SECS: f64 = 600.0;
    let start = Instant::now();
    let result = (|| {
        let std_run = run_scenario(&desk_scenario(Pipeline::Standard)).map_err(|e| e.to_string())?;
        let sph_run = run_scenario(&desk_scenario(Pipeline::Sphered)).map_err(|e| e.to_string())?;
        for (name, run) in [("standard", &std_run), ("sphered", &sph_run)] {
            for (rep, r) in run.per_rep.iter().enumerate() {
                if let Err(e) = r {
                    return Err(format!("{name} rep {rep} failed: {e}"));
                }
            }
        }
        let fdp_std = cell_at(&std_run, K, None)?;
        let bh_std = cell_at(&std_run, K, Some(Procedure::Bh))?;
        let fdp_sph = cell_at(&sph_run, K, None)?;
        let bh_sph = cell_at(&sph_run, K, Some(Procedure::Bh))?;
        let elapsed = start.elapsed().as_secs_f64();
        let detail = format!(
            "unsphered FDP {fdp_std:.4} BH {bh_std:.4}; sphered FDP {fdp_sph:.4} BH {bh_sph:.4}; {elapsed:.0} s"
        );
        // Evaluate every clause so a failure reports the full picture rather
        // than stopping at the first violated bound.
        let hi = bh_sph.max(fdp_sph);
        let lo = bh_sph.min(fdp_sph);
        let clauses = [
            (
                bh_std >= UNSPHERED_MIN_RATIO * fdp_std,
                format!("unsphered BH/FDP ratio {:.2} >= 3", bh_std / fdp_std),
            ),
            (
                lo > 0.0 && hi / lo <= SPHERED_MAX_RATIO,
                format!("sphered BH within 2.5x of sphered FDP (ratio {:.2})", hi / lo),
            ),
            (
                fdp_sph < fdp_std,
                "sphered FDP below unsphered FDP".to_string(),
            ),
            (
                elapsed < BUDGET_SECS,
                format!("runtime {elapsed:.0} s under the 600 s budget"),
            ),
        ];
        let failed: Vec<&str> = clauses
            .iter()
            .filter(|(ok, _)| !ok)
            .map(|(_, msg)| msg.as_str())
            .collect();
        if !failed.is_empty() {
            return Err(format!("violated: {}; {detail}", failed.join("; ")));
        }
        Ok(detail)
    })();
    report(10, "desk-scale sphering study", result);
}

/// Full-size reproduction of the correlated-column study (10 replicates,
/// 1000 permutations): means within 3 reported standard errors.
#[test]
#[ignore = "full preset: tens of minutes"]
fn criterion_10_full_preset() {
    const K: usize = 50;
    // (target, reported standard error) for the 10-replicate study cells.
    const STD_FDP: (f64, f64) = (0.056, 0.016);
    const STD_BH: (f64, f64) = (0.245, 0.052);
    const SPH_FDP: (f64, f64) = (0.0222, 0.011);
    const SPH_BH: (f64, f64) = (0.0438, 0.013);
    let full = |pipeline| Scenario {
        reps: 10,
        perms: 1000,
        ..desk_scenario(pipeline)
    };
    let result = (|| {
        let std_run = run_scenario(&full(Pipeline::Standard)).map_err(|e| e.to_string())?;
        let sph_run = run_scenario(&full(Pipeline::Sphered)).map_err(|e| e.to_string())?;
        let checks = [
            ("unsphered FDP", cell_at(&std_run, K, None)?, STD_FDP),
            ("unsphered BH", cell_at(&std_run, K, Some(Procedure::Bh))?, STD_BH),
            ("sphered FDP", cell_at(&sph_run, K, None)?, SPH_FDP),
            ("sphered BH", cell_at(&sph_run, K, Some(Procedure::Bh))?, SPH_BH),
        ];
        let mut detail = String::new();
        let mut missed = Vec::new();
        for (name, got, (target, se)) in checks {
            if (got - target).abs() > 3.0 * se {
                missed.push(format!("{name} = {got:.4}, want {target} ± {:.4}", 3.0 * se));
            }
            detail.push_str(&format!("{name} {got:.4} (target {target}); "));
        }
        if !missed.is_empty() {
            return Err(format!("{}; {detail}", missed.join("; ")));
        }
        Ok(detail)
    })();
    report(10, "full-preset sphering study", result);
}

/// Full-size sanity run with independent columns: BH tracks the true FDP.
#[test]
#[ignore = "full preset: tens of minutes"]
fn criterion_11_independent_columns_full_preset() {
    // Reported standard errors of the BH column at 40 and 45 rejections.
    const SE_BH: [(usize, f64); 2] = [(40, 0.022), (45, 0.026)];
    let sc = Scenario {
        name: "independent-columns".into(),
        row_cov: CovSpec::BlockAr1 { rho: 0.9, block: 10 },
        col_cov: CovSpec::Identity,
        reps: 10,
        perms: 1000,
        seed: 20260826,
        pipeline: Pipeline::Standard,
        ..Scenario::default()
    };
    let result = (|| {
        let run = run_scenario(&sc).map_err(|e| e.to_string())?;
        let mut detail = String::new();
        for (k, se) in SE_BH {
            let fdp = cell_at(&run, k, None)?;
            let bh = cell_at(&run, k, Some(Procedure::Bh))?;
            if (bh - fdp).abs() > 2.0 * se {
                return Err(format!(
                    "at {k} rejections BH {bh:.4} vs FDP {fdp:.4} differ by more than {:.4}",
                    2.0 * se
                ));
            }
            detail.push_str(&format!("k={k}: FDP {fdp:.4} BH {bh:.4}; "));
        }
        Ok(detail)
    })();
    report(11, "independent-column BH calibration", result);
}

#[test]
fn criterion_12_determinism_across_thread_counts() {
    let result = (|| {
        let sc = Scenario {
            reps: 2,
            perms: 150,
            seed: 99,
            ..desk_scenario(Pipeline::Standard)
        };
        let mut outputs = Vec::new();
        for threads in [1usize, 3] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| e.to_string())?;
            let run = pool.install(|| run_scenario(&sc)).map_err(|e| e.to_string())?;
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            matfdr::harness::emit_tables(&run, dir.path()).map_err(|e| e.to_string())?;
            outputs.push(std::fs::read(dir.path().join("summary.csv")).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err("summary.csv differs between 1-thread and 3-thread runs".into());
        }
        Ok(format!("byte-identical summary.csv ({} bytes) at 1 and 3 threads", outputs[0].len()))
    })();
    report(12, "determinism across thread counts", result);
}

/// The interleaved column-covariance truth actually produced by the harness
/// is the one the analytic checks describe (a guard for criterion 10's
/// scenario wiring, not a numbered criterion).
#[test]
fn scenario_truth_matches_analytic_table() {
    let sc = desk_scenario(Pipeline::Standard);
    let truth = resolve_truth(&sc).unwrap();
    let (c1, c2) = contiguous_classes();
    let ratio = eta(&truth.delta, &c1, &c2) / (2.0 / 25.0);
    assert!(
        ratio < 0.9,
        "interleaved truth should under-disperse the class difference, got {ratio}"
    );
}
