//! Random event logs and naive reference implementations shared by the
//! integration tests. Nothing here calls into the library's metric code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wander_core::ingest::PostEvent;

pub const WORDS: [&str; 24] = [
    "the", "a", "i", "me", "my", "I", "My", "TIL", "MINE", "cat", "dog", "run", "blue", "code", "rust", "tree", "sky",
    "red", "fast", "slow", "myself", "mine", "lol", "x",
];
pub const TAGS: [&str; 6] = ["DT", "PRP", "NN", "VB", "JJ", "RB"];
pub const PRONOUNS: [&str; 5] = ["i", "me", "my", "mine", "myself"];

/// `users` users with between `min_len` and `max_len` posts each, spread
/// over `communities` communities with skewed popularity. Tokens, tags and
/// feedback are sometimes absent.
pub fn random_events(seed: u64, users: usize, min_len: usize, max_len: usize, communities: usize) -> Vec<PostEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for u in 0..users {
        let t = rng.random_range(min_len..=max_len);
        let mut ts: i64 = 1_325_376_000 + rng.random_range(0..30_000_000);
        let favourite = rng.random_range(0..communities);
        for _ in 0..t {
            ts += rng.random_range(60..400_000);
            let c = if rng.random_bool(0.4) {
                favourite
            } else {
                // squaring a uniform skews toward low indices
                let x: f64 = rng.random();
                ((x * x) * communities as f64) as usize
            };
            let (tokens, tags) = if rng.random_bool(0.05) {
                (None, None)
            } else {
                let n = if rng.random_bool(0.03) { 0 } else { rng.random_range(1..9) };
                let tok: Vec<String> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()).collect();
                let tag: Vec<String> = (0..n).map(|_| TAGS[rng.random_range(0..TAGS.len())].to_string()).collect();
                (Some(tok), Some(tag))
            };
            let feedback = rng.random_bool(0.9).then(|| rng.random_range(-3..12));
            out.push(PostEvent {
                user: format!("user{u:04}"),
                ts,
                community: format!("c{c:02}"),
                tokens,
                pos_tags: tags,
                feedback,
            });
        }
    }
    out
}

/// Calendar month index (`year * 12 + month0`) of a UTC timestamp, by the
/// days-to-civil algorithm.
pub fn month_key(ts: i64) -> i64 {
    let days = ts.div_euclid(86_400);
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + if m <= 2 { 1 } else { 0 };
    y * 12 + (m - 1)
}

pub enum OracleVocab {
    Pos,
    Top(usize),
    Full(u64),
}

pub struct Oracle {
    /// (community, month) -> post count
    pub volume: HashMap<(String, i64), usize>,
    /// (community, month) -> feedback values
    pub feedback: HashMap<(String, i64), Vec<i64>>,
    pub posters: HashMap<String, BTreeSet<String>>,
    pub community_posts: HashMap<String, usize>,
    /// per vocab: member set, and (community, month) -> mapped unit counts
    pub vocabs: Vec<(BTreeSet<String>, bool, HashMap<(String, i64), HashMap<String, usize>>)>,
}

pub const RARE: &str = "<RARE>";

impl Oracle {
    pub fn new(events: &[PostEvent], vocabs: &[OracleVocab]) -> Self {
        let mut volume = HashMap::new();
        let mut feedback: HashMap<(String, i64), Vec<i64>> = HashMap::new();
        let mut posters: HashMap<String, BTreeSet<String>> = HashMap::new();
        let mut community_posts = HashMap::new();
        let mut words: HashMap<String, u64> = HashMap::new();
        let mut tags: BTreeSet<String> = BTreeSet::new();
        for e in events {
            let key = (e.community.clone(), month_key(e.ts));
            *volume.entry(key.clone()).or_insert(0) += 1;
            if let Some(f) = e.feedback {
                feedback.entry(key).or_default().push(f);
            }
            posters.entry(e.community.clone()).or_default().insert(e.user.clone());
            *community_posts.entry(e.community.clone()).or_insert(0) += 1;
            for w in e.tokens.iter().flatten() {
                *words.entry(w.clone()).or_insert(0) += 1;
            }
            for t in e.pos_tags.iter().flatten() {
                tags.insert(t.clone());
            }
        }
        let mut ranked: Vec<(String, u64)> = words.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut built = Vec::new();
        for v in vocabs {
            let (members, pos): (BTreeSet<String>, bool) = match v {
                OracleVocab::Pos => (tags.clone(), true),
                OracleVocab::Top(k) => (ranked.iter().take(*k).map(|p| p.0.clone()).collect(), false),
                OracleVocab::Full(m) => (ranked.iter().filter(|p| p.1 > *m).map(|p| p.0.clone()).collect(), false),
            };
            let mut counts: HashMap<(String, i64), HashMap<String, usize>> = HashMap::new();
            for e in events {
                let units = if pos { &e.pos_tags } else { &e.tokens };
                let entry = counts.entry((e.community.clone(), month_key(e.ts))).or_default();
                for u in units.iter().flatten() {
                    let m = if members.contains(u) { u.clone() } else { RARE.to_string() };
                    *entry.entry(m).or_insert(0) += 1;
                }
            }
            built.push((members, pos, counts));
        }
        Self {
            volume,
            feedback,
            posters,
            community_posts,
            vocabs: built,
        }
    }

    pub fn logsize(&self, e: &PostEvent) -> f64 {
        (self.volume[&(e.community.clone(), month_key(e.ts))] as f64).log2()
    }

    pub fn ce(&self, v: usize, e: &PostEvent) -> Option<f64> {
        let (members, pos, counts) = &self.vocabs[v];
        let units = if *pos { e.pos_tags.as_ref()? } else { e.tokens.as_ref()? };
        if units.is_empty() {
            return None;
        }
        let c = &counts[&(e.community.clone(), month_key(e.ts))];
        let total: usize = c.values().sum();
        let mut s = 0.0;
        for u in units {
            let m = if members.contains(u) { u.as_str() } else { RARE };
            s += -(c[m] as f64 / total as f64).log2();
        }
        Some(s / units.len() as f64)
    }

    pub fn pronoun(&self, e: &PostEvent) -> Option<f64> {
        let t = e.tokens.as_ref()?;
        if t.is_empty() {
            return None;
        }
        let hits = t
            .iter()
            .filter(|w| {
                let acronym = w.chars().count() >= 2 && w.chars().all(|c| c.is_uppercase());
                !acronym && PRONOUNS.contains(&w.to_lowercase().as_str())
            })
            .count();
        Some(hits as f64 / t.len() as f64)
    }

    pub fn length(&self, e: &PostEvent) -> Option<f64> {
        e.tokens.as_ref().map(|t| t.len() as f64)
    }

    /// Indicator that the post beats the month's median (`p75 = false`) or
    /// 75th percentile.
    pub fn fb(&self, e: &PostEvent, p75: bool) -> Option<f64> {
        let f = e.feedback?;
        let mut vals = self.feedback.get(&(e.community.clone(), month_key(e.ts)))?.clone();
        vals.sort();
        let n = vals.len();
        let bar = if p75 {
            // smallest value with at least 75% of the sample at or below it
            let mut k = 1;
            while (k as f64) < 0.75 * n as f64 {
                k += 1;
            }
            vals[k - 1] as f64
        } else if n % 2 == 1 {
            vals[n / 2] as f64
        } else {
            (vals[n / 2 - 1] + vals[n / 2]) as f64 / 2.0
        };
        Some(if f as f64 > bar { 1.0 } else { 0.0 })
    }

    pub fn dissim_pair(&self, a: &str, b: &str, min_posts: usize) -> Option<f64> {
        if self.community_posts[a] < min_posts || self.community_posts[b] < min_posts {
            return None;
        }
        let (pa, pb) = (&self.posters[a], &self.posters[b]);
        let inter = pa.intersection(pb).count();
        let union = pa.union(pb).count();
        Some(1.0 - inter as f64 / union as f64)
    }

    pub fn window_dissim(&self, w: &[PostEvent], min_posts: usize) -> Option<f64> {
        let cs: BTreeSet<&str> = w.iter().map(|e| e.community.as_str()).collect();
        let cs: Vec<&str> = cs.into_iter().collect();
        let mut vals = Vec::new();
        for i in 0..cs.len() {
            for j in i + 1..cs.len() {
                if let Some(d) = self.dissim_pair(cs[i], cs[j], min_posts) {
                    vals.push(d);
                }
            }
        }
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

pub fn uniq(w: &[PostEvent]) -> f64 {
    w.iter().map(|e| e.community.as_str()).collect::<BTreeSet<_>>().len() as f64
}

pub fn jumps(w: &[PostEvent]) -> f64 {
    let mut n = 0;
    for i in 1..w.len() {
        if w[i].community != w[i - 1].community {
            n += 1;
        }
    }
    n as f64
}

fn shares(w: &[PostEvent]) -> Vec<f64> {
    let mut m: BTreeMap<&str, usize> = BTreeMap::new();
    for e in w {
        *m.entry(&e.community).or_insert(0) += 1;
    }
    m.values().map(|&c| c as f64 / w.len() as f64).collect()
}

pub fn entropy(w: &[PostEvent]) -> f64 {
    shares(w).iter().map(|p| -p * p.log2()).sum()
}

pub fn gini(w: &[PostEvent]) -> f64 {
    1.0 - shares(w).iter().map(|p| p * p).sum::<f64>()
}

/// Mean of the defined values, or `None`.
pub fn mean_some(v: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let d: Vec<f64> = v.into_iter().flatten().collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
}

/// Stage `s` (1-based) of `n` windows covers windows `floor((s-1)n/S)+1
/// ..= floor(sn/S)`.
pub fn stage_means(windows: &[Option<f64>], stages: usize) -> Vec<Option<f64>> {
    let n = windows.len();
    (1..=stages)
        .map(|s| {
            let lo = (s - 1) * n / stages;
            let hi = s * n / stages;
            mean_some(windows[lo..hi].iter().copied())
        })
        .collect()
}

/// Sort-and-split activity quartiles: rank by (count, user), give the
/// remainder to the lower quartiles.
pub fn quartiles(users: &[(String, usize)]) -> BTreeMap<String, u8> {
    let mut v = users.to_vec();
    v.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    let n = v.len();
    let mut sizes = [n / 4; 4];
    for s in sizes.iter_mut().take(n % 4) {
        *s += 1;
    }
    let mut out = BTreeMap::new();
    let mut it = v.into_iter();
    for (q, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let (u, _) = it.next().unwrap();
            out.insert(u, q as u8 + 1);
        }
    }
    out
}
