//! Community-choice metrics: how many communities a window spans, how often
//! the user switches, how concentrated the posting is, how big the visited
//! communities look, and how different they are from each other.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::RwLock;

use crate::ingest::{CommunityUserIndex, MonthStatsIndex, PostEvent};

pub const UNIQ: &str = "uniq";
pub const CUMNEW: &str = "cumnew";
pub const JUMPS: &str = "jumps";
pub const ENTROPY: &str = "entropy";
pub const GINI: &str = "gini";
pub const LOGSIZE: &str = "logsize";
pub const DISSIM: &str = "dissim";

/// Communities need this many posts (over the whole dataset) before their
/// poster overlap is trusted.
pub const DEFAULT_DISSIM_MIN_POSTS: u64 = 1000;

pub fn unique_communities(window: &[PostEvent]) -> usize {
    window.iter().map(|e| e.community.as_str()).collect::<BTreeSet<_>>().len()
}

/// Adjacent pairs inside the window that change community.
pub fn jumps(window: &[PostEvent]) -> usize {
    window.windows(2).filter(|p| p[0].community != p[1].community).count()
}

/// Distinct communities among the first `x` posts.
pub fn cumulative_new_communities(events: &[PostEvent], x: usize) -> usize {
    unique_communities(&events[..x.min(events.len())])
}

/// Distinct communities among the first `⌈p·T/100⌉` posts.
pub fn cumulative_new_communities_pct(events: &[PostEvent], percent: f64) -> usize {
    let x = (percent * events.len() as f64 / 100.0).ceil() as usize;
    cumulative_new_communities(events, x)
}

/// Relative frequency of each community within a window.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityDistribution {
    pub p: BTreeMap<String, f64>,
}

impl CommunityDistribution {
    pub fn from_window(window: &[PostEvent]) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for e in window {
            *counts.entry(e.community.as_str()).or_default() += 1;
        }
        Self::from_counts(counts.into_iter().map(|(c, n)| (c.to_string(), n)))
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (String, usize)>) -> Self {
        let counts: Vec<_> = counts.into_iter().filter(|(_, n)| *n > 0).collect();
        let total: usize = counts.iter().map(|(_, n)| n).sum();
        Self {
            p: counts
                .into_iter()
                .map(|(c, n)| (c, n as f64 / total as f64))
                .collect(),
        }
    }

    pub fn support(&self) -> usize {
        self.p.len()
    }
}

/// Shannon entropy in bits.
pub fn entropy(dist: &CommunityDistribution) -> f64 {
    dist.p
        .values()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn gini_simpson(dist: &CommunityDistribution) -> f64 {
    1.0 - dist.p.values().map(|p| p * p).sum::<f64>()
}

/// `log2` of the number of posts the post's community received in the
/// post's calendar month.
pub fn apparent_size(ev: &PostEvent, stats: &MonthStatsIndex) -> Option<f64> {
    stats
        .get(&ev.community, ev.month())
        .map(|s| (s.post_count as f64).log2())
}

/// `1 − |U₁ ∩ U₂| / |U₁ ∪ U₂|` over eventual poster sets, restricted to
/// communities with enough posts. Pairs are memoized since the value never
/// changes.
pub struct PosterOverlap {
    ids: BTreeMap<String, u32>,
    posters: Vec<Vec<u32>>,
    cache: RwLock<HashMap<(u32, u32), f64>>,
    min_posts: u64,
}

impl PosterOverlap {
    pub fn new(index: &BTreeMap<String, CommunityUserIndex>, min_posts: u64) -> Self {
        let mut user_ids: HashMap<&str, u32> = HashMap::new();
        let mut ids = BTreeMap::new();
        let mut posters = Vec::new();
        for (name, c) in index {
            if c.total_posts < min_posts {
                continue;
            }
            let mut set: Vec<u32> = c
                .posters
                .iter()
                .map(|u| {
                    let next = user_ids.len() as u32;
                    *user_ids.entry(u.as_str()).or_insert(next)
                })
                .collect();
            set.sort_unstable();
            ids.insert(name.clone(), posters.len() as u32);
            posters.push(set);
        }
        Self {
            ids,
            posters,
            cache: RwLock::new(HashMap::new()),
            min_posts,
        }
    }

    pub fn min_posts(&self) -> u64 {
        self.min_posts
    }

    pub fn is_eligible(&self, community: &str) -> bool {
        self.ids.contains_key(community)
    }

    pub fn eligible_count(&self) -> usize {
        self.ids.len()
    }

    /// `None` when either community is ineligible.
    pub fn dissimilarity(&self, a: &str, b: &str) -> Option<f64> {
        let (ia, ib) = (*self.ids.get(a)?, *self.ids.get(b)?);
        if ia == ib {
            return Some(0.0);
        }
        let key = (ia.min(ib), ia.max(ib));
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return Some(*v);
        }
        let v = 1.0 - jaccard_sorted(&self.posters[key.0 as usize], &self.posters[key.1 as usize]);
        self.cache.write().expect("cache lock").insert(key, v);
        Some(v)
    }
}

fn jaccard_sorted(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean pairwise dissimilarity over the distinct eligible communities in a
/// window; `None` with fewer than two of them.
pub fn window_dissimilarity(window: &[PostEvent], overlap: &PosterOverlap) -> Option<f64> {
    let communities: Vec<&str> = window
        .iter()
        .map(|e| e.community.as_str())
        .filter(|c| overlap.is_eligible(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, a) in communities.iter().enumerate() {
        for b in &communities[i + 1..] {
            sum += overlap.dissimilarity(a, b)?;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}
