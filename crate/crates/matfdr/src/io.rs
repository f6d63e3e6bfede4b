//! File formats: CSV matrices (with an optional class-label header line),
//! fit directories, statistic tables and FDR curves. All floats are written
//! with 17 significant digits so round-trips are bit-exact.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use matfdr_core::fdr::FdrReport;
use matfdr_core::linalg::spd_inverse;
use matfdr_core::stats::TestStatVector;
use matfdr_core::trcm::TrcmFit;
use matfdr_core::DataMatrix;
use nalgebra::{DMatrix, DVector};

use crate::CliError;

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Config(format!("cannot parse {what}: {s:?}")))
}

/// Writes a pure matrix: row-major CSV, no header.
pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| fmt_f64(a[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::from_io(path))
}

/// Writes labeled data with the `class,<c1|c2>,...` header line.
pub fn write_labeled(path: &Path, x: &DataMatrix) -> Result<(), CliError> {
    let mut tags = vec!["c1"; x.ncols()];
    for &j in &x.class2 {
        tags[j] = "c2";
    }
    let mut out = format!("class,{}\n", tags.join(","));
    for i in 0..x.nrows() {
        let row: Vec<String> = (0..x.ncols()).map(|j| fmt_f64(x.values[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::from_io(path))
}

/// Reads a CSV matrix; a leading `class,...` line yields labeled data,
/// otherwise the matrix is unlabeled.
pub fn read_data(path: &Path) -> Result<DataMatrix, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::from_io(path))?;
    let mut lines = text.lines().peekable();
    let labels: Option<(Vec<usize>, Vec<usize>)> = match lines.peek() {
        Some(first) if first.starts_with("class,") => {
            let tags: Vec<&str> = first.split(',').skip(1).map(str::trim).collect();
            let mut c1 = Vec::new();
            let mut c2 = Vec::new();
            for (j, t) in tags.iter().enumerate() {
                match *t {
                    "c1" => c1.push(j),
                    "c2" => c2.push(j),
                    other => {
                        return Err(CliError::Config(format!(
                            "{}: unknown class tag {other:?} (expected c1 or c2)",
                            path.display()
                        )))
                    }
                }
            }
            lines.next();
            Some((c1, c2))
        }
        _ => None,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, CliError> = line
            .split(',')
            .map(|v| parse_f64(v, &format!("matrix entry in {}", path.display())))
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{}: empty matrix", path.display())));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("{}: ragged rows", path.display())));
    }
    let values = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    match labels {
        Some((c1, c2)) => DataMatrix::labeled(values, c1, c2).map_err(CliError::from),
        None => Ok(DataMatrix::unlabeled(values)),
    }
}

/// Serializes a fit as a directory: `sigma.csv`, `delta.csv` and a `meta`
/// key=value text file.
pub fn write_fit_dir(dir: &Path, fit: &TrcmFit) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::from_io(dir))?;
    write_matrix(&dir.join("sigma.csv"), &fit.sigma_hat)?;
    write_matrix(&dir.join("delta.csv"), &fit.delta_hat)?;
    let meta = format!(
        "lambda={}\niterations={}\nconverged={}\nobjective={}\n",
        fmt_f64(fit.lambda),
        fit.iterations,
        fit.converged,
        fmt_f64(fit.final_objective),
    );
    fs::write(dir.join("meta"), meta).map_err(CliError::from_io(dir))
}

/// Reads a fit directory back; inverses are recomputed from the stored
/// covariances.
pub fn read_fit_dir(dir: &Path) -> Result<TrcmFit, CliError> {
    let sigma = read_data(&dir.join("sigma.csv"))?.values;
    let delta = read_data(&dir.join("delta.csv"))?.values;
    let meta_path = dir.join("meta");
    let meta = fs::read_to_string(&meta_path).map_err(CliError::from_io(&meta_path))?;
    let mut lambda = 0.0;
    let mut iterations = 0;
    let mut converged = true;
    let mut objective = 0.0;
    for line in meta.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("meta line without '=': {line:?}")))?;
        match key {
            "lambda" => lambda = parse_f64(value, "lambda")?,
            "iterations" => {
                iterations = value
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad iterations: {value:?}")))?
            }
            "converged" => {
                converged = value
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad converged flag: {value:?}")))?
            }
            "objective" => objective = parse_f64(value, "objective")?,
            other => return Err(CliError::Config(format!("unknown meta key {other:?}"))),
        }
    }
    let sigma_inv = spd_inverse(&sigma, "sigma.csv")?;
    let delta_inv = spd_inverse(&delta, "delta.csv")?;
    let delta_is_diagonal = {
        let n = delta_inv.nrows();
        (0..n).all(|i| (0..i).all(|j| delta_inv[(i, j)] == 0.0))
    };
    Ok(TrcmFit {
        sigma_hat: sigma,
        delta_hat: delta,
        sigma_inv_hat: sigma_inv,
        delta_inv_hat: delta_inv,
        lambda,
        iterations,
        final_objective: objective,
        objective_trace: Vec::new(),
        delta_is_diagonal,
        converged,
    })
}

/// Statistics and p-values: CSV columns `row,stat,flag,p`.
///
/// `row_ids` are the row identifiers (original indices when the input was
/// filtered, 0..m otherwise) and may appear in any order.
pub fn write_stats(
    path: &Path,
    row_ids: &[usize],
    stats: &TestStatVector,
    p: &DVector<f64>,
) -> Result<(), CliError> {
    let mut out = String::from("row,stat,flag,p\n");
    for i in 0..stats.values.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row_ids[i],
            fmt_f64(stats.values[i]),
            u8::from(stats.is_flagged(i)),
            fmt_f64(p[i])
        ));
    }
    fs::write(path, out).map_err(CliError::from_io(path))
}

/// One row of a `row,stat,flag,p` table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatRow {
    pub row: usize,
    pub stat: f64,
    pub flag: bool,
    pub p: f64,
}

/// Reads a `row,stat,flag,p` table in file order.
pub fn read_stats(path: &Path) -> Result<Vec<StatRow>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::from_io(path))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            if line.trim() != "row,stat,flag,p" {
                return Err(CliError::Config(format!(
                    "{}: expected header row,stat,flag,p",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::Config(format!("{}: bad line {line:?}", path.display())));
        }
        rows.push(StatRow {
            row: fields[0]
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad row index {:?}", fields[0])))?,
            stat: parse_f64(fields[1], "stat")?,
            flag: fields[2].trim() == "1",
            p: parse_f64(fields[3], "p")?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{}: no statistics", path.display())));
    }
    Ok(rows)
}

/// A truth file is one non-null row index per line.
pub fn write_truth(path: &Path, non_null: &[usize]) -> Result<(), CliError> {
    let mut out = String::new();
    for &i in non_null {
        out.push_str(&format!("{i}\n"));
    }
    fs::write(path, out).map_err(CliError::from_io(path))
}

pub fn read_truth(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::from_io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad truth row index {l:?}")))
        })
        .collect()
}

/// The per-replicate (or averaged) curve table:
/// columns `k,true_fdp,bh,by,perm,enull`; absent values are written as `nan`.
pub fn write_fdr_curve(path: &Path, report: &FdrReport) -> Result<(), CliError> {
    use matfdr_core::fdr::{procedure_columns, Procedure};
    let m = report.ranking.len();
    let col = |which: Procedure, k: usize| -> f64 {
        report
            .estimates(which)
            .map(|v| v[k])
            .unwrap_or(f64::NAN)
    };
    let mut out = String::from("k,true_fdp,bh,by,perm,enull\n");
    for k in 0..m {
        let tf = report.true_fdp.as_ref().map(|v| v[k]).unwrap_or(f64::NAN);
        let cols: Vec<String> = procedure_columns()
            .iter()
            .map(|&pc| fmt_f64(col(pc, k)))
            .collect();
        out.push_str(&format!("{},{},{}\n", k + 1, fmt_f64(tf), cols.join(",")));
    }
    let mut f = fs::File::create(path).map_err(CliError::from_io(path))?;
    f.write_all(out.as_bytes()).map_err(CliError::from_io(path))
}

/// Reads a curve table back as (k, true_fdp, bh, by, perm, enull) rows.
#[allow(clippy::type_complexity)]
pub fn read_fdr_curve(path: &Path) -> Result<Vec<(usize, [f64; 5])>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::from_io(path))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            if line.trim() != "k,true_fdp,bh,by,perm,enull" {
                return Err(CliError::Config(format!(
                    "{}: expected header k,true_fdp,bh,by,perm,enull",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::Config(format!("{}: bad line {line:?}", path.display())));
        }
        let k: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad k {:?}", fields[0])))?;
        let mut vals = [0.0f64; 5];
        for (slot, field) in vals.iter_mut().zip(&fields[1..]) {
            *slot = parse_f64(field, "curve value")?;
        }
        rows.push((k, vals));
    }
    Ok(rows)
}
