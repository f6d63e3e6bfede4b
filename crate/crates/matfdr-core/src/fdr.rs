//! Multiple-testing procedures: BH and BY step-up rules, permutation-based
//! q-values with pooled nulls, a simplified empirical-null local fdr, and
//! the bookkeeping that turns them into FDR-vs-rejections curves with true
//! false discovery proportions when ground truth is known.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DVector;
use rand::seq::SliceRandom;

use crate::model::{replicate_rng, DataMatrix};
use crate::special::norm_pdf;
use crate::stats::{row_t_stats, TestStatVector};
use crate::{Error, Result};

/// Significance ranking: indices ordered by ascending p-value, ties broken
/// by row index so the order is total and reproducible.
pub fn rank_by_p(p: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
    order
}

/// Benjamini–Hochberg step-up at level `q`: rejects the k smallest p-values
/// where k = max{i : p_(i) <= i·q/m}.
pub fn bh_stepup(p: &DVector<f64>, q: f64) -> Result<Vec<usize>> {
    if !(0.0 < q && q < 1.0) {
        return Err(Error::Parameter(format!("q must be in (0,1), got {q}")));
    }
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Parameter("p-values must lie in [0,1]".into()));
    }
    let m = p.len();
    let order = rank_by_p(p);
    let mut k = 0;
    for (i, &idx) in order.iter().enumerate() {
        if p[idx] <= (i + 1) as f64 * q / m as f64 {
            k = i + 1;
        }
    }
    Ok(order[..k].to_vec())
}

/// Benjamini–Yekutieli step-up: BH with q replaced by q / H_m,
/// H_m = Σ_{i=1}^m 1/i, valid under arbitrary dependence.
pub fn by_stepup(p: &DVector<f64>, q: f64) -> Result<Vec<usize>> {
    let h: f64 = (1..=p.len()).map(|i| 1.0 / i as f64).sum();
    bh_stepup(p, q / h)
}

/// BH-style q-values: for the i-th smallest p-value, the monotonized
/// min_{j >= i} m·p_(j)/j clamped to 1. Returns (ranking, q at each rank),
/// so the BH FDR estimate at k rejections is `q[k-1]`.
pub fn bh_q_values(p: &DVector<f64>) -> (Vec<usize>, Vec<f64>) {
    let m = p.len();
    let order = rank_by_p(p);
    let mut q: Vec<f64> = order
        .iter()
        .enumerate()
        .map(|(i, &idx)| p[idx] * m as f64 / (i + 1) as f64)
        .collect();
    let mut run = 1.0f64;
    for i in (0..m).rev() {
        run = run.min(q[i]);
        q[i] = run.min(1.0);
    }
    (order, q)
}

/// Output of [`permutation_fdr`].
#[derive(Debug, Clone)]
pub struct PermutationFdr {
    /// Pooled permutation p-values, one per row, strictly positive.
    pub p: DVector<f64>,
    /// q-values aligned with the ranking (index k-1 = estimate at k rejections).
    pub q: Vec<f64>,
    /// Ranking by permutation p-value.
    pub ranking: Vec<usize>,
    /// The doubling estimate of the null proportion, clamped to [0.05, 1].
    pub pi0_hat: f64,
}

/// Permutation-based p- and q-values using pooled null statistics.
///
/// For each of `b` uniformly random permutations of the column class labels
/// all row T statistics are recomputed and pooled; then
/// p_i = (1 + #{null |T*| >= |T_i|}/m) / (b + 1), which keeps every p-value
/// strictly positive. π̂₀ = 2·(fraction of p > 0.5) clamped to [0.05, 1];
/// q-values are running minima of π̂₀·m·p_(i)/i. The permutation stream for
/// replicate b is derived from (seed, b) so results do not depend on
/// evaluation order.
pub fn permutation_fdr(x: &DataMatrix, b: usize, seed: u64) -> Result<PermutationFdr> {
    if b < 100 {
        return Err(Error::Parameter(format!("need >= 100 permutations, got {b}")));
    }
    x.require_two_per_class()?;
    let m = x.nrows();
    let n = x.ncols();
    let n1 = x.n1();
    let observed = row_t_stats(x)?;
    let mut nulls: Vec<f64> = Vec::with_capacity(m * b);
    for rep in 0..b {
        let mut cols: Vec<usize> = (0..n).collect();
        let mut rng = replicate_rng(seed, rep as u64);
        cols.shuffle(&mut rng);
        let perm = DataMatrix::labeled(
            x.values.clone(),
            cols[..n1].to_vec(),
            cols[n1..].to_vec(),
        )?;
        let t = row_t_stats(&perm)?;
        nulls.extend(t.values.iter().map(|v| libm::fabs(*v)).filter(|v| v.is_finite()));
    }
    nulls.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let p = DVector::from_fn(m, |i, _| {
        let t = libm::fabs(observed.values[i]);
        // count of pooled nulls >= t
        let count = nulls.len() - nulls.partition_point(|&v| v < t);
        (1.0 + count as f64 / m as f64) / (b as f64 + 1.0)
    });
    let pi0_hat = {
        let frac = p.iter().filter(|&&v| v > 0.5).count() as f64 / m as f64;
        (2.0 * frac).clamp(0.05, 1.0)
    };
    let ranking = rank_by_p(&p);
    let mut q: Vec<f64> = ranking
        .iter()
        .enumerate()
        .map(|(i, &idx)| pi0_hat * p[idx] * m as f64 / (i + 1) as f64)
        .collect();
    let mut run = 1.0f64;
    for i in (0..m).rev() {
        run = run.min(q[i]);
        q[i] = run.min(1.0);
    }
    Ok(PermutationFdr { p, q, ranking, pi0_hat })
}

/// Output of [`empirical_null_fdr`].
#[derive(Debug, Clone)]
pub struct EmpiricalNullFdr {
    /// Per-row local fdr in [0, 1].
    pub local_fdr: DVector<f64>,
    /// Location of the fitted empirical null.
    pub delta_hat: f64,
    /// Scale of the fitted empirical null.
    pub sigma_hat: f64,
    /// Estimated null proportion.
    pub pi0_hat: f64,
    /// Set when tail bins had to be clamped.
    pub clamped: bool,
}

impl EmpiricalNullFdr {
    /// Tail-averaged FDR: the mean local fdr over the `k` most significant
    /// rows of `ranking`.
    pub fn tail_fdr(&self, ranking: &[usize], k: usize) -> f64 {
        let k = k.clamp(1, ranking.len());
        ranking[..k].iter().map(|&i| self.local_fdr[i]).sum::<f64>() / k as f64
    }
}

/// Simplified empirical-null local fdr.
///
/// The null N(δ̂, σ̂²) is fit by central matching — δ̂ and σ̂ are the mean and
/// standard deviation of the statistics inside the central `pi0_window`
/// quantile mass. The mixture density f is a Lindsey-style histogram
/// estimate: 60 fixed bins, degree-7 polynomial least-squares fit to the
/// log-counts of occupied bins. π̂₀ = min(1, f(δ̂)/f₀(δ̂)).
/// local fdr_i = min(1, π̂₀ f₀(z_i)/f(z_i)).
pub fn empirical_null_fdr(stats: &TestStatVector, pi0_window: f64) -> Result<EmpiricalNullFdr> {
    if !(0.0 < pi0_window && pi0_window <= 1.0) {
        return Err(Error::Parameter(format!("pi0_window must be in (0,1], got {pi0_window}")));
    }
    let z: Vec<f64> = stats.values.iter().copied().filter(|v| v.is_finite()).collect();
    let m = stats.values.len();
    if z.len() < 100 {
        return Err(Error::Parameter(format!("need >= 100 finite statistics, got {}", z.len())));
    }
    let mut sorted = z.clone();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let lo_q = ((1.0 - pi0_window) / 2.0 * (sorted.len() - 1) as f64) as usize;
    let hi_q = ((1.0 - (1.0 - pi0_window) / 2.0) * (sorted.len() - 1) as f64) as usize;
    let central = &sorted[lo_q..=hi_q];
    let delta_hat = central.iter().sum::<f64>() / central.len() as f64;
    let var = central.iter().map(|v| (v - delta_hat).powi(2)).sum::<f64>()
        / (central.len().saturating_sub(1)).max(1) as f64;
    if var <= 0.0 {
        return Err(Error::Degenerate("all central statistics equal".into()));
    }
    let sigma_hat = libm::sqrt(var);
    // Lindsey-style density fit
    const BINS: usize = 60;
    const DEGREE: usize = 7;
    let zmin = sorted[0];
    let zmax = sorted[sorted.len() - 1];
    if zmax <= zmin {
        return Err(Error::Degenerate("all statistics equal".into()));
    }
    let width = (zmax - zmin) / BINS as f64;
    let mut counts = [0usize; BINS];
    for &v in &z {
        let idx = (((v - zmin) / width) as usize).min(BINS - 1);
        counts[idx] += 1;
    }
    // scale bin centers to [-1, 1] for a well-conditioned polynomial basis
    let center = |k: usize| -1.0 + 2.0 * (k as f64 + 0.5) / BINS as f64;
    let occupied: Vec<(f64, f64)> = (0..BINS)
        .filter(|&k| counts[k] > 0)
        .map(|k| (center(k), libm::log(counts[k] as f64)))
        .collect();
    if occupied.len() <= DEGREE {
        return Err(Error::Degenerate(format!(
            "only {} occupied histogram bins; density fit is underdetermined",
            occupied.len()
        )));
    }
    let coef = polyfit(&occupied, DEGREE)?;
    let total = z.len() as f64;
    let to_unit = |v: f64| -1.0 + 2.0 * (v - zmin) / (zmax - zmin);
    let fhat = |v: f64| -> f64 {
        let u = to_unit(v).clamp(-1.0, 1.0);
        libm::exp(polyval(&coef, u)) / (total * width)
    };
    let f0 = |v: f64| norm_pdf((v - delta_hat) / sigma_hat) / sigma_hat;
    let pi0_hat = (fhat(delta_hat) / f0(delta_hat)).min(1.0);
    let mut clamped = false;
    const DENSITY_FLOOR: f64 = 1e-12;
    let local_fdr = DVector::from_fn(m, |i, _| {
        let v = stats.values[i];
        if !v.is_finite() {
            return 0.0; // infinite statistics are maximally significant
        }
        let mut f = fhat(v);
        if f < DENSITY_FLOOR {
            f = DENSITY_FLOOR;
            clamped = true;
        }
        (pi0_hat * f0(v) / f).min(1.0)
    });
    Ok(EmpiricalNullFdr { local_fdr, delta_hat, sigma_hat, pi0_hat, clamped })
}

/// Least-squares polynomial fit through (x, y) pairs via normal equations.
fn polyfit(points: &[(f64, f64)], degree: usize) -> Result<Vec<f64>> {
    let k = degree + 1;
    let x = nalgebra::DMatrix::from_fn(points.len(), k, |r, c| libm::pow(points[r].0, c as f64));
    let y = DVector::from_fn(points.len(), |r, _| points[r].1);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    xtx.lu()
        .solve(&xty)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Degenerate("singular polynomial fit".into()))
}

fn polyval(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Which estimate a column of an [`FdrReport`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Procedure {
    Bh,
    By,
    Perm,
    Enull,
}

impl Procedure {
    pub fn name(&self) -> &'static str {
        match self {
            Procedure::Bh => "bh",
            Procedure::By => "by",
            Procedure::Perm => "perm",
            Procedure::Enull => "enull",
        }
    }
}

/// FDR estimates as a function of rejection count, with exact true-FDP
/// bookkeeping when ground truth is available.
#[derive(Debug, Clone)]
pub struct FdrReport {
    /// Significance ranking (a permutation of row indices).
    pub ranking: Vec<usize>,
    /// Estimated FDR at rejection counts 1..=m, per procedure.
    pub procedures: Vec<(Procedure, Vec<f64>)>,
    /// True FDP at rejection counts 1..=m; present when truth is known.
    pub true_fdp: Option<Vec<f64>>,
    /// Indices of truly non-null rows.
    pub truth_set: Option<Vec<usize>>,
}

impl FdrReport {
    pub fn estimates(&self, which: Procedure) -> Option<&[f64]> {
        self.procedures
            .iter()
            .find(|(p, _)| *p == which)
            .map(|(_, v)| v.as_slice())
    }
}

/// Assembles the plot-ready curves. `truth_set` lists the non-null rows;
/// trueFdp[k] = |{top-k} ∩ nulls| / k.
pub fn fdr_curve(
    ranking: Vec<usize>,
    procedures: Vec<(Procedure, Vec<f64>)>,
    truth_set: Option<Vec<usize>>,
) -> Result<FdrReport> {
    let m = ranking.len();
    let mut seen = alloc::vec![false; m];
    for &i in &ranking {
        if i >= m || seen[i] {
            return Err(Error::Parameter("ranking must be a permutation of row indices".into()));
        }
        seen[i] = true;
    }
    for (p, v) in &procedures {
        if v.len() != m {
            return Err(Error::Parameter(format!(
                "procedure {} has {} entries for {m} rows",
                p.name(),
                v.len()
            )));
        }
    }
    let true_fdp = truth_set.as_ref().map(|truth| {
        let mut is_signal = alloc::vec![false; m];
        for &i in truth {
            if i < m {
                is_signal[i] = true;
            }
        }
        let mut false_count = 0usize;
        ranking
            .iter()
            .enumerate()
            .map(|(k, &idx)| {
                if !is_signal[idx] {
                    false_count += 1;
                }
                false_count as f64 / (k + 1) as f64
            })
            .collect()
    });
    Ok(FdrReport { ranking, procedures, true_fdp, truth_set })
}

/// Helper carrying a procedure's human name for serialization.
pub fn procedure_columns() -> [Procedure; 4] {
    [Procedure::Bh, Procedure::By, Procedure::Perm, Procedure::Enull]
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn bh_worked_example() {
        let p = DVector::from_vec(vec![0.01, 0.02, 0.9]);
        let rej = bh_stepup(&p, 0.05).unwrap();
        assert_eq!(rej.len(), 2);
        assert!(rej.contains(&0) && rej.contains(&1));
    }

    #[test]
    fn by_worked_example() {
        // H_3 = 11/6; thresholds 0.00909, 0.01818, 0.02727 all fail
        let p = DVector::from_vec(vec![0.01, 0.02, 0.9]);
        assert!(by_stepup(&p, 0.05).unwrap().is_empty());
    }

    #[test]
    fn bh_all_ones_rejects_nothing() {
        let p = DVector::from_element(10, 1.0);
        assert!(bh_stepup(&p, 0.2).unwrap().is_empty());
    }

    #[test]
    fn by_subset_of_bh() {
        // deterministic pseudo-random p-values
        let p = DVector::from_fn(60, |i, _| {
            let v = libm::sin((i * 37 + 11) as f64 * 12.9898) * 43758.5453;
            v - libm::floor(v)
        });
        for q in [0.05, 0.2, 0.5] {
            let bh: Vec<usize> = bh_stepup(&p, q).unwrap();
            let by: Vec<usize> = by_stepup(&p, q).unwrap();
            assert!(by.iter().all(|i| bh.contains(i)), "q={q}");
        }
    }

    #[test]
    fn by_equals_bh_for_single_test() {
        let p = DVector::from_vec(vec![0.03]);
        assert_eq!(bh_stepup(&p, 0.05).unwrap(), by_stepup(&p, 0.05).unwrap());
    }

    #[test]
    fn bh_rejections_monotone_in_q() {
        let p = DVector::from_fn(40, |i, _| ((i * 29 + 7) % 40) as f64 / 40.0 + 0.01);
        let mut prev = 0;
        for q in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let r = bh_stepup(&p, q).unwrap().len();
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn q_values_monotone_and_consistent_with_stepup() {
        let p = DVector::from_fn(25, |i, _| ((i * 13 + 3) % 25) as f64 / 25.0 + 0.02);
        let (order, q) = bh_q_values(&p);
        for w in q.windows(2) {
            assert!(w[0] <= w[1]);
        }
        // q-value at rank k <= alpha iff BH at level alpha rejects >= k
        for alpha in [0.1, 0.3, 0.6] {
            let rej = bh_stepup(&p, alpha).unwrap().len();
            let via_q = q.iter().filter(|&&v| v <= alpha).count();
            assert_eq!(rej, via_q);
        }
        assert_eq!(order.len(), 25);
    }

    #[test]
    fn curve_counting() {
        // truth = rows 0..50 ranked first
        let m = 80;
        let ranking: Vec<usize> = (0..m).collect();
        let truth: Vec<usize> = (0..50).collect();
        let rep = fdr_curve(ranking, vec![], Some(truth.clone())).unwrap();
        let fdp = rep.true_fdp.unwrap();
        for k in 1..=50 {
            assert_eq!(fdp[k - 1], 0.0);
        }
        for k in 51..=m {
            assert!((fdp[k - 1] - (k - 50) as f64 / k as f64).abs() < 1e-15);
        }
        // reversed ranking: nulls (rows 50..80) come first
        let ranking: Vec<usize> = (0..m).rev().collect();
        let rep = fdr_curve(ranking, vec![], Some(truth)).unwrap();
        let fdp = rep.true_fdp.unwrap();
        for k in 1..=(m - 50) {
            assert_eq!(fdp[k - 1], 1.0);
        }
    }

    #[test]
    fn curve_rejects_bad_ranking() {
        assert!(fdr_curve(vec![0, 0, 1], vec![], None).is_err());
    }

    #[test]
    fn brute_force_fdp_agrees() {
        let m = 30;
        let ranking: Vec<usize> = (0..m).map(|i| (i * 7 + 3) % m).collect();
        let truth: Vec<usize> = (0..m).filter(|i| i % 3 == 0).collect();
        let rep = fdr_curve(ranking.clone(), vec![], Some(truth.clone())).unwrap();
        let fdp = rep.true_fdp.unwrap();
        for k in 1..=m {
            let v = ranking[..k].iter().filter(|i| !truth.contains(i)).count();
            assert!((fdp[k - 1] - v as f64 / k as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn polyfit_recovers_cubic() {
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let x = -1.0 + i as f64 / 10.0;
                (x, 2.0 - x + 0.5 * x * x * x)
            })
            .collect();
        let c = polyfit(&pts, 3).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-9);
        assert!((c[1] + 1.0).abs() < 1e-9);
        assert!(c[2].abs() < 1e-9);
        assert!((c[3] - 0.5).abs() < 1e-9);
    }
}
