use matfdr::harness::{generate, resolve_truth};
use matfdr::scenario::{CovSpec, Pipeline, Scenario};
use matfdr_core::model::decompose;
use matfdr_core::sphere::{central_match, sphere};
use matfdr_core::stats::row_t_stats;
use matfdr_core::trcm::{default_lambda_grid, fit_trcm};

fn main() {
    let sc = Scenario {
        name: "desk".into(),
        row_cov: CovSpec::BlockAr1 { rho: 0.9, block: 10 },
        col_cov: CovSpec::BlockAr1 { rho: 0.5, block: 10 },
        reps: 3, perms: 200, seed: 20260826,
        pipeline: Pipeline::Sphered,
        ..Scenario::default()
    };
    let truth = resolve_truth(&sc).unwrap();
    let x = generate(&sc, &truth, 0).unwrap();
    let decomp = decompose(&x).unwrap();
    let sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|u| (u - m) * (u - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    for lam in default_lambda_grid(&decomp.noise) {
        let fit = match fit_trcm(&decomp.noise, lam, 1e-5, 20) { Ok(f) => f, Err(e) => { println!("lam {lam:.4}: {e}"); continue } };
        let sph = sphere(&x, &fit).unwrap();
        let raw = row_t_stats(&sph.values).unwrap();
        let nulls: Vec<f64> = (50..250).map(|i| raw.values[i]).collect();
        let sig: f64 = (0..50).map(|i| raw.values[i].abs()).sum::<f64>() / 50.0;
        let matched = central_match(&raw, 0.8).unwrap();
        // off-diag density of sigma_inv
        let m = 250;
        let nz = (0..m).flat_map(|i| (0..i).map(move |j| (i, j)))
            .filter(|&(i, j)| fit.sigma_inv_hat[(i, j)] != 0.0).count();
        println!("lam {lam:.4}: null sd {:.3} mean|sig t| {:.2} scale {:.3} delta_diag {} sigma_nz {:.3} iters {}",
            sd(&nulls), sig, matched.scale(), fit.delta_is_diagonal,
            nz as f64 / (m * (m - 1) / 2) as f64, fit.iterations);
    }
}
