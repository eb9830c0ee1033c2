//! Feedback relative to the community: how often a user's posts beat the
//! median (or 75th percentile) score of everything posted to the same
//! community that month, and the single-post versus returned-to community
//! comparison.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::ingest::{Month, MonthStatsIndex, PostEvent, UserTrajectory};
use crate::stats::{paired_t_test, PairedTTest};

pub const FB_MED: &str = "fb_med";
pub const FB_P75: &str = "fb_p75";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthQuantiles {
    pub median: f64,
    pub p75: f64,
    pub n: usize,
}

/// Median by the midpoint rule; 75th percentile as the `⌈0.75n⌉`-th order
/// statistic. `values` must be sorted ascending.
pub fn month_quantiles(values: &[i64]) -> Option<MonthQuantiles> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let median = if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    };
    let k = (3 * n).div_ceil(4);
    Some(MonthQuantiles {
        median,
        p75: values[k - 1] as f64,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    Median,
    P75,
}

impl Threshold {
    pub fn metric(self) -> &'static str {
        match self {
            Threshold::Median => FB_MED,
            Threshold::P75 => FB_P75,
        }
    }
}

/// Strictly-greater comparison against the month's threshold.
pub fn outperform(feedback: i64, q: &MonthQuantiles, threshold: Threshold) -> bool {
    let bar = match threshold {
        Threshold::Median => q.median,
        Threshold::P75 => q.p75,
    };
    feedback as f64 > bar
}

#[derive(Debug, Clone, Default)]
pub struct QuantileIndex {
    by_community: BTreeMap<String, BTreeMap<Month, MonthQuantiles>>,
}

impl QuantileIndex {
    pub fn build(stats: &MonthStatsIndex) -> Self {
        let mut by_community: BTreeMap<String, BTreeMap<Month, MonthQuantiles>> = BTreeMap::new();
        for s in stats.iter() {
            if let Some(q) = month_quantiles(&s.feedback_values) {
                by_community.entry(s.community.clone()).or_default().insert(s.month, q);
            }
        }
        Self { by_community }
    }

    pub fn get(&self, community: &str, month: Month) -> Option<&MonthQuantiles> {
        self.by_community.get(community)?.get(&month)
    }

    /// The 0/1 indicator for one post; `None` without feedback data.
    pub fn indicator(&self, ev: &PostEvent, threshold: Threshold) -> Option<f64> {
        let f = ev.feedback?;
        let q = self.get(&ev.community, ev.month())?;
        Some(if outperform(f, q, threshold) { 1.0 } else { 0.0 })
    }
}

/// Lifetime post count per community, in community order.
pub fn community_post_counts(events: &[PostEvent]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for e in events {
        *counts.entry(e.community.as_str()).or_default() += 1;
    }
    counts
}

/// `(communities posted to exactly once, communities posted to twice or more)`.
pub fn single_multi_partition(traj: &UserTrajectory) -> (usize, usize) {
    let counts = community_post_counts(&traj.events);
    let single = counts.values().filter(|&&n| n == 1).count();
    (single, counts.len() - single)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstPostPair {
    pub user: String,
    /// Mean outperform-median indicator over first posts in single-post
    /// communities.
    pub single: f64,
    pub multi: f64,
    pub n_single: usize,
    pub n_multi: usize,
}

#[derive(Debug, Clone)]
pub struct FirstPostComparison {
    pub pairs: Vec<FirstPostPair>,
    pub single_mean: f64,
    pub multi_mean: f64,
    /// Paired t-test of `multi − single`; `None` with fewer than 2 users.
    pub test: Option<PairedTTest>,
}

/// For one user: the mean first-post indicator on each side, or `None` if
/// either side has no eligible community. A community is eligible when its
/// first post carries feedback and its month has quantiles.
pub fn first_post_pair(traj: &UserTrajectory, quantiles: &QuantileIndex) -> Option<FirstPostPair> {
    let counts = community_post_counts(&traj.events);
    let mut first: BTreeMap<&str, &PostEvent> = BTreeMap::new();
    for e in &traj.events {
        first.entry(e.community.as_str()).or_insert(e);
    }
    let (mut single, mut multi) = (Vec::new(), Vec::new());
    for (c, ev) in first {
        let Some(ind) = quantiles.indicator(ev, Threshold::Median) else {
            continue;
        };
        if counts[c] == 1 {
            single.push(ind);
        } else {
            multi.push(ind);
        }
    }
    if single.is_empty() || multi.is_empty() {
        return None;
    }
    Some(FirstPostPair {
        user: traj.user.clone(),
        single: single.iter().sum::<f64>() / single.len() as f64,
        multi: multi.iter().sum::<f64>() / multi.len() as f64,
        n_single: single.len(),
        n_multi: multi.len(),
    })
}

/// Users with only single-post or only multi-post communities are
/// excluded.
pub fn first_post_feedback_comparison<'a>(
    users: impl IntoIterator<Item = &'a UserTrajectory>,
    quantiles: &QuantileIndex,
) -> Result<FirstPostComparison> {
    let mut pairs: Vec<FirstPostPair> = users
        .into_iter()
        .filter_map(|t| first_post_pair(t, quantiles))
        .collect();
    pairs.sort_by(|a, b| a.user.cmp(&b.user));
    let n = pairs.len() as f64;
    let single: Vec<f64> = pairs.iter().map(|p| p.single).collect();
    let multi: Vec<f64> = pairs.iter().map(|p| p.multi).collect();
    let test = if pairs.len() >= 2 {
        Some(paired_t_test(&multi, &single)?)
    } else {
        None
    };
    Ok(FirstPostComparison {
        single_mean: single.iter().sum::<f64>() / n,
        multi_mean: multi.iter().sum::<f64>() / n,
        pairs,
        test,
    })
}
