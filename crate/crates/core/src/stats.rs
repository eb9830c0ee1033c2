//! Paired significance tests used to compare trials and user cohorts.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    pub n: usize,
    pub mean_diff: f64,
    /// Sample standard deviation of the differences.
    pub sd_diff: f64,
    pub t: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Set when every difference is the same non-zero value: `t` is then
    /// infinite and `p` is 0.
    pub zero_variance: bool,
}

/// Paired t-test on `a[i] − b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("paired samples differ in length".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    t_test_on_differences(&diffs)
}

pub fn t_test_on_differences(diffs: &[f64]) -> Result<PairedTTest> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if var == 0.0 || sd <= 1e-300 {
        let all_zero = diffs.iter().all(|&d| d == 0.0);
        return Ok(PairedTTest {
            n,
            mean_diff: mean,
            sd_diff: 0.0,
            t: if all_zero { 0.0 } else { f64::INFINITY.copysign(mean) },
            p_value: if all_zero { 1.0 } else { 0.0 },
            zero_variance: !all_zero,
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(PairedTTest {
        n,
        mean_diff: mean,
        sd_diff: sd,
        t,
        p_value,
        zero_variance: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    /// Normal approximation with tie correction.
    Normal,
    /// Exact null distribution of the signed-rank sum.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub n: usize,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub z: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Pairs with at least this many non-zero differences use the normal
/// approximation; smaller samples use the exact distribution.
pub const WILCOXON_NORMAL_MIN_N: usize = 51;

/// Average ranks (1-based) of `|d|`, ties sharing the mean rank.
pub fn signed_ranks(diffs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0.0; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Wilcoxon signed-rank test on `a[i] − b[i]`. Zero differences are
/// dropped; if nothing is left the result is `p = 1`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("paired samples differ in length".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            n: 0,
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            z: 0.0,
            p_value: 1.0,
            method: WilcoxonMethod::Exact,
        });
    }
    let ranks = signed_ranks(&diffs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let mean = total / 2.0;
    let tie_term: f64 = tie_groups(&diffs).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = (n * (n + 1) * (2 * n + 1)) as f64 / 24.0 - tie_term / 48.0;
    let z = if var > 0.0 { (w_plus - mean) / var.sqrt() } else { 0.0 };
    let (p_value, method) = if n >= WILCOXON_NORMAL_MIN_N {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        ((2.0 * normal.sf(z.abs())).min(1.0), WilcoxonMethod::Normal)
    } else {
        (exact_two_sided_p(&ranks, w_plus), WilcoxonMethod::Exact)
    };
    Ok(WilcoxonResult {
        n,
        w_plus,
        w_minus,
        statistic: w_plus.min(w_minus),
        z,
        p_value,
        method,
    })
}

fn tie_groups(diffs: &[f64]) -> Vec<usize> {
    let mut abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < abs.len() {
        let mut j = i;
        while j + 1 < abs.len() && abs[j + 1] == abs[i] {
            j += 1;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    groups
}

/// Exact two-sided p-value: the probability, over all `2^n` equally likely
/// sign assignments, that `|W+ − E[W+]|` is at least the observed value.
/// Ranks are multiples of ½, so doubling them makes the distribution an
/// integer subset-sum count.
pub fn exact_two_sided_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut ways = vec![0.0f64; max + 1];
    ways[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            ways[s] += ways[s - r];
        }
    }
    let total = 2f64.powi(ranks.len() as i32);
    let observed = (w_plus * 2.0).round() as i64;
    let centre = max as i64; // twice the mean of the doubled sum
    let dev = (2 * observed - centre).abs();
    let tail: f64 = ways
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as i64 - centre).abs() >= dev)
        .map(|(_, w)| w)
        .sum();
    (tail / total).min(1.0)
}

/// Exact Wilcoxon p-value for the same pairs (any `n`, practical up to a
/// few thousand rank units).
pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    let mut r = wilcoxon_signed_rank(a, b)?;
    if r.n > 0 {
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
        r.p_value = exact_two_sided_p(&signed_ranks(&diffs), r.w_plus);
        r.method = WilcoxonMethod::Exact;
    }
    Ok(r)
}
