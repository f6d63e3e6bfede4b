//! Scenario configuration: a flat `key = value` text format describing one
//! simulation study. Unknown keys are hard errors so that typos cannot
//! silently change a study.

use std::fmt;
use std::path::{Path, PathBuf};

use matfdr_core::model::{make_structured_cov, CovKind, SignalSpec};
use nalgebra::{DMatrix, DVector};

use crate::CliError;

/// How one side (rows or columns) of the covariance truth is built.
#[derive(Debug, Clone, PartialEq)]
pub enum CovSpec {
    Identity,
    Ar1 { rho: f64 },
    BlockAr1 { rho: f64, block: usize },
    /// Both covariances are subsampled jointly from a data file; see
    /// `empirical_cov_scenario`.
    Empirical { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    MatrixNormal,
    LatentVariable,
    RandomEffects,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Standard,
    Sphered,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pipeline::Standard => write!(f, "standard"),
            Pipeline::Sphered => write!(f, "sphered"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub n1: usize,
    pub signal_rows: usize,
    pub signal_effect: f64,
    pub row_cov: CovSpec,
    pub col_cov: CovSpec,
    pub generator: Generator,
    pub reps: usize,
    pub seed: u64,
    pub pipeline: Pipeline,
    pub pi0: f64,
    pub perms: usize,
    pub folds: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "scenario".into(),
            m: 250,
            n: 50,
            n1: 25,
            signal_rows: 50,
            signal_effect: 0.5,
            row_cov: CovSpec::Identity,
            col_cov: CovSpec::Identity,
            generator: Generator::MatrixNormal,
            reps: 10,
            seed: 0,
            pipeline: Pipeline::Standard,
            pi0: 0.8,
            perms: 1000,
            folds: 5,
        }
    }
}

impl Scenario {
    pub fn n2(&self) -> usize {
        self.n - self.n1
    }

    /// The non-null block: the first `signal_rows` rows carry ±effect in the
    /// first class and the negated pattern in the second, with the sign
    /// flipping at the halfway point of the block.
    pub fn signal(&self) -> SignalSpec {
        let mut psi1 = DVector::zeros(self.m);
        let mut psi2 = DVector::zeros(self.m);
        let half = self.signal_rows / 2;
        for i in 0..self.signal_rows {
            let e = if i < half { self.signal_effect } else { -self.signal_effect };
            psi1[i] = e;
            psi2[i] = -e;
        }
        SignalSpec { psi1, psi2 }
    }

    /// Rows whose class means truly differ.
    pub fn non_null_rows(&self) -> Vec<usize> {
        if self.signal_effect == 0.0 {
            return Vec::new();
        }
        (0..self.signal_rows).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n1 == 0 || self.n1 >= self.n {
            return Err(CliError::Config(format!(
                "n1 must lie strictly between 0 and n (n1={}, n={})",
                self.n1, self.n
            )));
        }
        if self.n1 < 2 || self.n2() < 2 {
            return Err(CliError::Config("each class needs at least 2 columns".into()));
        }
        if self.signal_rows > self.m {
            return Err(CliError::Config(format!(
                "signal_rows ({}) exceeds m ({})",
                self.signal_rows, self.m
            )));
        }
        if !(self.pi0 > 0.0 && self.pi0 <= 1.0) {
            return Err(CliError::Config(format!("pi0 must be in (0,1], got {}", self.pi0)));
        }
        if self.reps == 0 {
            return Err(CliError::Config("reps must be positive".into()));
        }
        if self.folds < 2 {
            return Err(CliError::Config("folds must be at least 2".into()));
        }
        let emp = |c: &CovSpec| matches!(c, CovSpec::Empirical { .. });
        if emp(&self.row_cov) != emp(&self.col_cov) {
            return Err(CliError::Config(
                "empirical covariances are sampled jointly: set both row_cov and col_cov to empirical".into(),
            ));
        }
        Ok(())
    }
}

fn parse_key<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad value for {key}: {value:?}")))
}

/// Builds a structured covariance of the requested dimension. `Empirical`
/// variants are resolved by the harness, not here.
pub fn build_cov(spec: &CovSpec, dim: usize) -> Result<DMatrix<f64>, CliError> {
    match spec {
        CovSpec::Identity => Ok(DMatrix::identity(dim, dim)),
        CovSpec::Ar1 { rho } => {
            make_structured_cov(CovKind::Ar1, dim, *rho, None).map_err(CliError::from)
        }
        CovSpec::BlockAr1 { rho, block } => {
            make_structured_cov(CovKind::BlockAr1, dim, *rho, Some(*block)).map_err(CliError::from)
        }
        CovSpec::Empirical { .. } => Err(CliError::Config(
            "empirical covariance must be resolved from its data file first".into(),
        )),
    }
}

/// Parses the flat key-value scenario format. Lines are `key = value`;
/// blank lines and `#` comments are ignored; unknown keys are errors.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, CliError> {
    let mut sc = Scenario::default();
    // Covariance sub-keys are gathered first, then assembled, so the key
    // order in the file does not matter.
    let mut row_kind: Option<String> = None;
    let mut col_kind: Option<String> = None;
    let mut row_rho = 0.5;
    let mut col_rho = 0.5;
    let mut row_block = 10usize;
    let mut col_block = 10usize;
    let mut empirical_file: Option<PathBuf> = None;

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected key = value, got {raw:?}", ln + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "name" => sc.name = value.to_string(),
            "m" => sc.m = parse_key(value, key)?,
            "n" => sc.n = parse_key(value, key)?,
            "n1" => sc.n1 = parse_key(value, key)?,
            "signal_rows" => sc.signal_rows = parse_key(value, key)?,
            "signal_effect" => sc.signal_effect = parse_key(value, key)?,
            "reps" => sc.reps = parse_key(value, key)?,
            "seed" => sc.seed = parse_key(value, key)?,
            "pi0" => sc.pi0 = parse_key(value, key)?,
            "perms" => sc.perms = parse_key(value, key)?,
            "folds" => sc.folds = parse_key(value, key)?,
            "pipeline" => {
                sc.pipeline = match value {
                    "standard" => Pipeline::Standard,
                    "sphered" => Pipeline::Sphered,
                    other => {
                        return Err(CliError::Config(format!(
                            "pipeline must be standard or sphered, got {other:?}"
                        )))
                    }
                }
            }
            "generator" => {
                sc.generator = match value {
                    "matrix_normal" => Generator::MatrixNormal,
                    "latent_variable" => Generator::LatentVariable,
                    "random_effects" => Generator::RandomEffects,
                    other => {
                        return Err(CliError::Config(format!(
                            "generator must be matrix_normal, latent_variable or random_effects, got {other:?}"
                        )))
                    }
                }
            }
            "row_cov" => row_kind = Some(value.to_string()),
            "col_cov" => col_kind = Some(value.to_string()),
            "row_rho" => row_rho = parse_key(value, key)?,
            "col_rho" => col_rho = parse_key(value, key)?,
            "row_block" => row_block = parse_key(value, key)?,
            "col_block" => col_block = parse_key(value, key)?,
            "empirical_file" => {
                let p = PathBuf::from(value);
                empirical_file = Some(if p.is_relative() { base_dir.join(p) } else { p });
            }
            other => {
                return Err(CliError::Config(format!(
                    "line {}: unknown scenario key {other:?}",
                    ln + 1
                )))
            }
        }
    }

    let assemble = |kind: Option<String>, rho: f64, block: usize, side: &str| -> Result<CovSpec, CliError> {
        match kind.as_deref() {
            None | Some("identity") => Ok(CovSpec::Identity),
            Some("ar1") => Ok(CovSpec::Ar1 { rho }),
            Some("block_ar1") => Ok(CovSpec::BlockAr1 { rho, block }),
            Some("empirical") => {
                let file = empirical_file.clone().ok_or_else(|| {
                    CliError::Config("empirical covariance requires empirical_file".into())
                })?;
                Ok(CovSpec::Empirical { file })
            }
            Some(other) => Err(CliError::Config(format!(
                "{side} must be identity, ar1, block_ar1 or empirical, got {other:?}"
            ))),
        }
    };
    sc.row_cov = assemble(row_kind, row_rho, row_block, "row_cov")?;
    sc.col_cov = assemble(col_kind, col_rho, col_block, "col_cov")?;
    sc.validate()?;
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::from_io(path))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, base)
}
