//! `matfdr`: two-sample large-scale testing for matrices with correlated
//! rows and columns — simulation, covariance estimation, sphering,
//! statistics and FDR reporting.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use matfdr::harness::{emit_simulated, emit_tables, run_scenario};
use matfdr::io;
use matfdr::scenario::load_scenario;
use matfdr::svg::write_curve_svg;
use matfdr::CliError;
use matfdr_core::fdr::{
    bh_q_values, bh_stepup, by_stepup, empirical_null_fdr, fdr_curve, permutation_fdr, Procedure,
};
use matfdr_core::model::decompose;
use matfdr_core::sphere::{central_match, filter_rows, sphere};
use matfdr_core::stats::{p_values, row_t_stats, Reference, StatKind, TestStatVector};
use matfdr_core::trcm::{fit_trcm, fit_trcm_cv, TRCM_MAX_ITER, TRCM_TOL};
use matfdr_core::DataMatrix;

#[derive(Parser)]
#[command(
    name = "matfdr",
    about = "Two-sample testing with correlated rows and columns",
    version
)]
struct Cli {
    /// Base RNG seed (overrides the scenario file's seed when set).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicate/permutation loops (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate data files from a scenario description.
    Simulate {
        /// Scenario file (flat key = value format).
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Estimate the penalized covariance pair from labeled data.
    Estimate {
        /// Labeled data CSV (header `class,c1,...,c2`).
        #[arg(long)]
        data: PathBuf,
        /// Fixed penalty; omitted = five-fold cross-validation.
        #[arg(long)]
        lambda: Option<f64>,
        /// Cross-validation folds.
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Whiten the noise of labeled data with a stored fit.
    Sphere {
        #[arg(long)]
        data: PathBuf,
        /// Fit directory written by `estimate`.
        #[arg(long)]
        fit: PathBuf,
    },
    /// Row statistics and p-values.
    Test(TestArgs),
    /// FDR reports from a statistics table.
    Fdr(FdrArgs),
    /// Run a full scenario study: replicates, summary tables and plots.
    Study {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Re-render the SVG curve from a study directory.
    Report {
        /// Directory containing fdr_curve.csv.
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    data: PathBuf,
    /// Sphere the noise before testing (central-matched statistics).
    #[arg(long)]
    sphered: bool,
    /// Reuse a stored fit instead of cross-validating (with --sphered).
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Null-proportion window for central matching.
    #[arg(long, default_value_t = 0.8)]
    pi0: f64,
    /// Keep only the K rows with largest unsphered |T| first.
    #[arg(long, value_name = "K")]
    filter: Option<usize>,
}

#[derive(Args)]
struct FdrArgs {
    /// Statistics table written by `test` (columns row,stat,flag,p).
    #[arg(long)]
    stats: PathBuf,
    /// Truth file (one non-null row id per line) for exact FDP curves.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Labeled data CSV; required by the perm method.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated subset of bh,by,perm,enull.
    #[arg(long, default_value = "bh,by,perm,enull", value_delimiter = ',')]
    methods: Vec<String>,
    /// Number of label permutations for the perm method.
    #[arg(long, default_value_t = 1000)]
    perms: usize,
    /// Target FDR level for the printed rejection counts.
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    /// Central window used by the enull method.
    #[arg(long, default_value_t = 0.8)]
    pi0: f64,
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Determinism does not depend on this; it only sizes the pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::from_io(dir))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(seed) = cli.seed {
                sc.seed = seed;
            }
            ensure_out(&cli.out)?;
            emit_simulated(&sc, &cli.out)?;
            println!(
                "wrote {} replicate(s) of {}x{} data to {}",
                sc.reps,
                sc.m,
                sc.n,
                cli.out.display()
            );
            Ok(())
        }
        Command::Estimate { data, lambda, folds } => {
            let x = io::read_data(&data)?;
            let dec = decompose(&x)?;
            let fit = match lambda {
                Some(lam) => fit_trcm(&dec.noise, lam, TRCM_TOL, TRCM_MAX_ITER)?,
                None => fit_trcm_cv(&dec.noise, folds, cli.seed.unwrap_or(0))?,
            };
            ensure_out(&cli.out)?;
            io::write_fit_dir(&cli.out, &fit)?;
            println!(
                "lambda={:.6} iterations={} converged={} objective={:.4}",
                fit.lambda, fit.iterations, fit.converged, fit.final_objective
            );
            Ok(())
        }
        Command::Sphere { data, fit } => {
            let x = io::read_data(&data)?;
            let fit = io::read_fit_dir(&fit)?;
            let sphered = sphere(&x, &fit)?;
            if sphered.conditioning_warning {
                eprintln!("warning: covariance roots required eigenvalue flooring");
            }
            ensure_out(&cli.out)?;
            io::write_labeled(&cli.out.join("sphered.csv"), &sphered.values)?;
            println!("wrote {}", cli.out.join("sphered.csv").display());
            Ok(())
        }
        Command::Test(args) => cmd_test(args, cli.seed.unwrap_or(0), &cli.out),
        Command::Fdr(args) => cmd_fdr(args, cli.seed.unwrap_or(0), &cli.out),
        Command::Study { scenario } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(seed) = cli.seed {
                sc.seed = seed;
            }
            let result = run_scenario(&sc)?;
            for (rep, outcome) in result.per_rep.iter().enumerate() {
                match outcome {
                    Ok(o) => {
                        if let Some(lam) = o.lambda {
                            println!("rep {rep}: lambda={lam:.6} converged={}", o.converged);
                        }
                    }
                    Err(msg) => eprintln!("rep {rep} failed: {msg}"),
                }
            }
            ensure_out(&cli.out)?;
            emit_tables(&result, &cli.out)?;
            println!("wrote summary.csv, fdr_curve.csv, fdr_curve.svg to {}", cli.out.display());
            Ok(())
        }
        Command::Report { dir } => {
            let rows = io::read_fdr_curve(&dir.join("fdr_curve.csv"))?;
            ensure_out(&cli.out)?;
            let svg_path = cli.out.join("fdr_curve.svg");
            write_curve_svg(&svg_path, &rows)?;
            println!("wrote {}", svg_path.display());
            Ok(())
        }
    }
}

fn cmd_test(args: TestArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    let full = io::read_data(&args.data)?;
    let (x, row_ids): (DataMatrix, Vec<usize>) = match args.filter {
        Some(k) => {
            let (filtered, map) = filter_rows(&full, k)?;
            (filtered, map)
        }
        None => {
            let ids = (0..full.nrows()).collect();
            (full, ids)
        }
    };
    let stats: TestStatVector;
    if args.sphered {
        let dec = decompose(&x)?;
        let fit = match &args.fit {
            Some(dir) => io::read_fit_dir(dir)?,
            None => fit_trcm_cv(&dec.noise, 5, seed)?,
        };
        let sphered = sphere(&x, &fit)?;
        if sphered.conditioning_warning {
            eprintln!("warning: covariance roots required eigenvalue flooring");
        }
        let raw = row_t_stats(&sphered.values)?;
        let matched = central_match(&raw, args.pi0)?;
        println!(
            "central matching: pi0={} observed sd={:.4} reference sd={:.4} scale={:.4}",
            matched.pi0,
            matched.sigma_central_observed,
            matched.sigma_central_reference,
            matched.scale()
        );
        stats = matched.scaled_stats;
    } else {
        // The standard path also removes the estimated row/column means so
        // the numerator is the class-signal estimate.
        let dec = decompose(&x)?;
        let centered = DataMatrix::labeled(
            &dec.signal_matrix + &dec.noise,
            x.class1.clone(),
            x.class2.clone(),
        )?;
        stats = row_t_stats(&centered)?;
    }
    let p = p_values(&stats, Reference::TDf)?;
    ensure_out(out)?;
    let path = out.join("stats.csv");
    io::write_stats(&path, &row_ids, &stats, &p)?;
    println!("wrote {} ({} rows)", path.display(), row_ids.len());
    Ok(())
}

fn cmd_fdr(args: FdrArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    let table = io::read_stats(&args.stats)?;
    let m = table.len();
    let p = DVector::from_fn(m, |i, _| table[i].p);
    let flagged: Vec<usize> = (0..m).filter(|&i| table[i].flag).collect();
    let truth_rows: Option<Vec<usize>> = match &args.truth {
        Some(path) => {
            let ids = io::read_truth(path)?;
            // Map original row ids onto positions in this (possibly
            // filtered) table.
            Some(
                (0..m)
                    .filter(|&i| ids.contains(&table[i].row))
                    .collect(),
            )
        }
        None => None,
    };

    let mut wanted = Vec::new();
    for name in &args.methods {
        let proc = match name.trim() {
            "bh" => Procedure::Bh,
            "by" => Procedure::By,
            "perm" => Procedure::Perm,
            "enull" => Procedure::Enull,
            other => {
                return Err(CliError::Config(format!(
                    "unknown method {other:?} (expected bh, by, perm, enull)"
                )))
            }
        };
        if !wanted.contains(&proc) {
            wanted.push(proc);
        }
    }
    if wanted.is_empty() {
        return Err(CliError::Config("no methods requested".into()));
    }

    let (ranking, bh_q) = bh_q_values(&p);
    let harmonic: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
    let mut procedures: Vec<(Procedure, Vec<f64>)> = Vec::new();
    let mut counts: Vec<(Procedure, usize)> = Vec::new();
    for &proc in &wanted {
        let curve = match proc {
            Procedure::Bh => {
                counts.push((proc, bh_stepup(&p, args.q)?.len()));
                bh_q.clone()
            }
            Procedure::By => {
                counts.push((proc, by_stepup(&p, args.q)?.len()));
                let mut q: Vec<f64> = ranking
                    .iter()
                    .enumerate()
                    .map(|(i, &idx)| harmonic * p[idx] * m as f64 / (i + 1) as f64)
                    .collect();
                let mut run = 1.0f64;
                for i in (0..m).rev() {
                    run = run.min(q[i]);
                    q[i] = run.min(1.0);
                }
                q
            }
            Procedure::Perm => {
                let data_path = args.data.as_ref().ok_or_else(|| {
                    CliError::Config("the perm method needs --data for label permutations".into())
                })?;
                let x = io::read_data(data_path)?;
                if x.nrows() != m {
                    return Err(CliError::Config(format!(
                        "--data has {} rows but the stats table has {m}",
                        x.nrows()
                    )));
                }
                let perm = permutation_fdr(&x, args.perms, seed)?;
                counts.push((proc, perm.q.iter().take_while(|&&v| v <= args.q).count()));
                perm.q
            }
            Procedure::Enull => {
                let stats = TestStatVector {
                    values: DVector::from_fn(m, |i, _| table[i].stat),
                    kind: StatKind::T,
                    df: 0,
                    c_n: 0.0,
                    flagged: flagged.clone(),
                };
                let enull = empirical_null_fdr(&stats, args.pi0)?;
                let curve: Vec<f64> = (1..=m).map(|k| enull.tail_fdr(&ranking, k)).collect();
                counts.push((proc, curve.iter().take_while(|&&v| v <= args.q).count()));
                curve
            }
        };
        procedures.push((proc, curve));
    }

    let report = fdr_curve(ranking, procedures, truth_rows)?;
    ensure_out(out)?;
    io::write_fdr_curve(&out.join("fdr_curve.csv"), &report)?;
    let rows = io::read_fdr_curve(&out.join("fdr_curve.csv"))?;
    write_curve_svg(&out.join("fdr_curve.svg"), &rows)?;
    for (proc, count) in counts {
        println!("{}: {count} rejections at q={}", proc.name(), args.q);
    }
    println!("wrote fdr_curve.csv and fdr_curve.svg to {}", out.display());
    Ok(())
}
