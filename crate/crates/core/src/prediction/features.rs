//! Feature vectors from the first posts of a trajectory, grouped into four
//! families. Window values are taken over `w`-post windows inside the
//! first or last `x` posts of the prefix.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::community::{self, CommunityDistribution};
use crate::error::{Error, Result};
use crate::feedback::{QuantileIndex, Threshold};
use crate::framework::{mean_defined, DEFAULT_PREFIX, DEFAULT_WINDOW};
use crate::ingest::{Dataset, MonthStatsIndex, PostEvent, UserTrajectory};
use crate::language::{
    build_vocabulary, post_length, pronoun_rate, LanguageModels, Smoothing, VocabKind, Vocabulary, DEFAULT_PRONOUNS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Timegap,
    Subinfo,
    Lang,
    Feedback,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Timegap, Family::Subinfo, Family::Lang, Family::Feedback];

    pub fn name(self) -> &'static str {
        match self {
            Family::Timegap => "timegap",
            Family::Subinfo => "subinfo",
            Family::Lang => "lang",
            Family::Feedback => "feedback",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A feature family on its own, or every available family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureSet {
    All,
    Only(Family),
}

impl FeatureSet {
    pub fn standard() -> Vec<FeatureSet> {
        let mut v = vec![FeatureSet::All];
        v.extend(Family::ALL.map(FeatureSet::Only));
        v
    }

    pub fn includes(self, f: Family) -> bool {
        match self {
            FeatureSet::All => true,
            FeatureSet::Only(g) => f == g,
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSet::All => f.write_str("all"),
            FeatureSet::Only(fam) => f.write_str(fam.name()),
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(FeatureSet::All);
        }
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .map(FeatureSet::Only)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature set '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeKind {
    First,
    Last,
}

impl fmt::Display for RangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RangeKind::First => "first",
            RangeKind::Last => "last",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub w: usize,
    pub prefix_len: usize,
    /// Add the argmax/argmin window index of every windowed series.
    pub argextrema: bool,
    pub vocabs: Vec<VocabKind>,
    pub pronouns: Vec<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            w: DEFAULT_WINDOW,
            prefix_len: DEFAULT_PREFIX,
            argextrema: true,
            vocabs: VocabKind::prediction_set(),
            pronouns: DEFAULT_PRONOUNS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Owned inputs the extractor borrows: vocabularies and feedback
/// quantiles. Families or vocabularies the data cannot support are listed
/// in `omitted`.
pub struct FeatureResources {
    pub vocabs: Vec<Vocabulary>,
    pub quantiles: Option<QuantileIndex>,
    pub omitted: Vec<String>,
}

impl FeatureResources {
    pub fn build(dataset: &Dataset, cfg: &FeatureConfig) -> Result<Self> {
        let mut omitted = Vec::new();
        let mut vocabs = Vec::new();
        if dataset.has_tokens {
            let words = dataset.month_stats.global_token_counts();
            let tags = dataset.month_stats.global_pos_counts();
            for &kind in &cfg.vocabs {
                if kind.is_pos() && !dataset.has_pos {
                    omitted.push(format!("lang.ce.{kind}: no part-of-speech tags"));
                    continue;
                }
                vocabs.push(build_vocabulary(&words, &tags, kind)?);
            }
        } else {
            omitted.push("lang: no tokens".into());
        }
        let quantiles = if dataset.has_feedback {
            Some(QuantileIndex::build(&dataset.month_stats))
        } else {
            omitted.push("feedback: no feedback values".into());
            None
        };
        Ok(Self {
            vocabs,
            quantiles,
            omitted,
        })
    }
}

/// Per-post values of one user's prefix, computed once and reused for every
/// range.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixValues {
    pub communities: Vec<String>,
    pub logsize: Vec<Option<f64>>,
    /// `[vocab][post]`.
    pub ce: Vec<Vec<Option<f64>>>,
    pub pronoun: Vec<Option<f64>>,
    pub length: Vec<Option<f64>>,
    pub fb_med: Vec<Option<f64>>,
    pub fb_p75: Vec<Option<f64>>,
    /// Days since the previous post; undefined for the very first post.
    pub gap_days: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub families: Vec<Family>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn columns(&self, set: FeatureSet) -> Vec<usize> {
        (0..self.len()).filter(|&j| set.includes(self.families[j])).collect()
    }

    pub fn has_family(&self, f: Family) -> bool {
        self.families.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub range: RangeKind,
    pub x: usize,
    pub schema: FeatureSchema,
    pub users: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub omitted: Vec<String>,
}

impl FeatureMatrix {
    /// Rows restricted to the columns of `set`.
    pub fn select(&self, set: FeatureSet, idx: &[usize]) -> Vec<Vec<Option<f64>>> {
        let cols = self.schema.columns(set);
        idx.iter()
            .map(|&i| cols.iter().map(|&j| self.rows[i][j]).collect())
            .collect()
    }
}

struct Sink {
    names: Option<Vec<(String, Family)>>,
    values: Vec<Option<f64>>,
}

impl Sink {
    fn push(&mut self, family: Family, name: impl FnOnce() -> String, v: Option<f64>) {
        if let Some(n) = &mut self.names {
            n.push((name(), family));
        }
        self.values.push(v);
    }
}

/// Index (1-based) of the largest and smallest defined value; ties go to
/// the earliest window.
pub fn arg_extrema(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let mut best: Option<(usize, f64)> = None;
    let mut worst: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
        if worst.is_none_or(|(_, b)| v < b) {
            worst = Some((i, v));
        }
    }
    (best.map(|(i, _)| (i + 1) as f64), worst.map(|(i, _)| (i + 1) as f64))
}

pub struct FeatureExtractor<'a> {
    pub cfg: &'a FeatureConfig,
    stats: &'a MonthStatsIndex,
    lms: Vec<LanguageModels<'a>>,
    quantiles: Option<&'a QuantileIndex>,
    has_tokens: bool,
    omitted: Vec<String>,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(dataset: &'a Dataset, resources: &'a FeatureResources, cfg: &'a FeatureConfig) -> Result<Self> {
        if cfg.w == 0 || cfg.prefix_len < cfg.w {
            return Err(Error::InvalidArgument("prefix must hold at least one window".into()));
        }
        Ok(Self {
            cfg,
            stats: &dataset.month_stats,
            lms: resources
                .vocabs
                .iter()
                .map(|v| LanguageModels::build(&dataset.month_stats, v, Smoothing::None))
                .collect(),
            quantiles: resources.quantiles.as_ref(),
            has_tokens: dataset.has_tokens,
            omitted: resources.omitted.clone(),
        })
    }

    pub fn vocab_ids(&self) -> Vec<String> {
        self.lms.iter().map(|m| m.vocab.id()).collect()
    }

    pub fn prefix_values(&self, traj: &UserTrajectory) -> Result<PrefixValues> {
        let n = self.cfg.prefix_len;
        if traj.len() < n {
            return Err(Error::InvalidArgument(format!(
                "user {} has {} posts, fewer than the prefix of {n}",
                traj.user,
                traj.len()
            )));
        }
        let ev: &[PostEvent] = &traj.events[..n];
        let pron: Vec<&str> = self.cfg.pronouns.iter().map(String::as_str).collect();
        let mut ce = Vec::with_capacity(self.lms.len());
        for lm in &self.lms {
            ce.push(ev.iter().map(|e| lm.post_cross_entropy(e)).collect::<Result<Vec<_>>>()?);
        }
        let fb = |t: Threshold| -> Vec<Option<f64>> {
            ev.iter()
                .map(|e| self.quantiles.and_then(|q| q.indicator(e, t)))
                .collect()
        };
        Ok(PrefixValues {
            communities: ev.iter().map(|e| e.community.clone()).collect(),
            logsize: ev.iter().map(|e| community::apparent_size(e, self.stats)).collect(),
            ce,
            pronoun: ev
                .iter()
                .map(|e| e.tokens.as_deref().and_then(|t| pronoun_rate(t, &pron)))
                .collect(),
            length: ev
                .iter()
                .map(|e| e.tokens.as_deref().map(|t| post_length(t) as f64))
                .collect(),
            fb_med: fb(Threshold::Median),
            fb_p75: fb(Threshold::P75),
            gap_days: (0..n)
                .map(|i| (i > 0).then(|| (ev[i].ts - ev[i - 1].ts) as f64 / 86_400.0))
                .collect(),
        })
    }

    fn check_range(&self, x: usize) -> Result<()> {
        if x == 0 || x > self.cfg.prefix_len || x % self.cfg.w != 0 {
            return Err(Error::InvalidArgument(format!(
                "range length {x} must be a positive multiple of {} no longer than {}",
                self.cfg.w, self.cfg.prefix_len
            )));
        }
        Ok(())
    }

    fn emit(&self, pv: &PrefixValues, range: RangeKind, x: usize, sink: &mut Sink) {
        let w = self.cfg.w;
        let start = match range {
            RangeKind::First => 0,
            RangeKind::Last => self.cfg.prefix_len - x,
        };
        let wins: Vec<std::ops::Range<usize>> = (0..x / w).map(|i| start + i * w..start + (i + 1) * w).collect();
        let per_post = |v: &[Option<f64>]| -> Vec<Option<f64>> {
            wins.iter().map(|r| mean_defined(v[r.clone()].iter().copied())).collect()
        };
        let argext = self.cfg.argextrema;
        let series = |sink: &mut Sink, fam: Family, name: &str, vals: &[Option<f64>]| {
            for (i, v) in vals.iter().enumerate() {
                sink.push(fam, || format!("{fam}.{name}.w{}", i + 1), *v);
            }
            if argext {
                let (hi, lo) = arg_extrema(vals);
                sink.push(fam, || format!("{fam}.{name}.argmax"), hi);
                sink.push(fam, || format!("{fam}.{name}.argmin"), lo);
            }
        };

        let gaps = per_post(&pv.gap_days);
        series(sink, Family::Timegap, "gap", &gaps);
        let all = start..start + x;
        sink.push(
            Family::Timegap,
            || "timegap.gap.mean".into(),
            mean_defined(pv.gap_days[all.clone()].iter().copied()),
        );

        let counts = |r: std::ops::Range<usize>| {
            let mut m: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
            for c in &pv.communities[r] {
                *m.entry(c.as_str()).or_default() += 1;
            }
            CommunityDistribution::from_counts(m.into_iter().map(|(c, n)| (c.to_string(), n)))
        };
        let jumps = |r: &std::ops::Range<usize>| {
            pv.communities[r.clone()].windows(2).filter(|p| p[0] != p[1]).count() as f64
        };
        let dists: Vec<CommunityDistribution> = wins.iter().map(|r| counts(r.clone())).collect();
        let sub = Family::Subinfo;
        series(sink, sub, community::UNIQ, &dists.iter().map(|d| Some(d.support() as f64)).collect::<Vec<_>>());
        series(sink, sub, community::JUMPS, &wins.iter().map(|r| Some(jumps(r))).collect::<Vec<_>>());
        series(sink, sub, community::ENTROPY, &dists.iter().map(|d| Some(community::entropy(d))).collect::<Vec<_>>());
        series(sink, sub, community::GINI, &dists.iter().map(|d| Some(community::gini_simpson(d))).collect::<Vec<_>>());
        series(sink, sub, community::LOGSIZE, &per_post(&pv.logsize));
        let whole = counts(all);
        sink.push(sub, || format!("subinfo.{}.all", community::UNIQ), Some(whole.support() as f64));
        sink.push(sub, || format!("subinfo.{}.all", community::ENTROPY), Some(community::entropy(&whole)));
        sink.push(sub, || format!("subinfo.{}.all", community::GINI), Some(community::gini_simpson(&whole)));

        if self.has_tokens {
            for (lm, ce) in self.lms.iter().zip(&pv.ce) {
                series(sink, Family::Lang, &format!("ce.{}", lm.vocab.id()), &per_post(ce));
            }
            series(sink, Family::Lang, "pronoun", &per_post(&pv.pronoun));
            series(sink, Family::Lang, "length", &per_post(&pv.length));
        }
        if self.quantiles.is_some() {
            series(sink, Family::Feedback, crate::feedback::FB_MED, &per_post(&pv.fb_med));
            series(sink, Family::Feedback, crate::feedback::FB_P75, &per_post(&pv.fb_p75));
        }
    }

    pub fn features(&self, pv: &PrefixValues, range: RangeKind, x: usize) -> Result<Vec<Option<f64>>> {
        self.check_range(x)?;
        let mut sink = Sink {
            names: None,
            values: Vec::new(),
        };
        self.emit(pv, range, x, &mut sink);
        Ok(sink.values)
    }

    pub fn schema(&self, x: usize) -> Result<FeatureSchema> {
        self.check_range(x)?;
        let n = self.cfg.prefix_len;
        let blank = PrefixValues {
            communities: vec![String::new(); n],
            logsize: vec![None; n],
            ce: vec![vec![None; n]; self.lms.len()],
            pronoun: vec![None; n],
            length: vec![None; n],
            fb_med: vec![None; n],
            fb_p75: vec![None; n],
            gap_days: vec![None; n],
        };
        let mut sink = Sink {
            names: Some(Vec::new()),
            values: Vec::new(),
        };
        self.emit(&blank, RangeKind::First, x, &mut sink);
        let (names, families) = sink.names.unwrap_or_default().into_iter().unzip();
        Ok(FeatureSchema { names, families })
    }

    /// Feature matrices for every requested `(range, x)`, rows in the order
    /// of `users`.
    pub fn extract(
        &self,
        users: &[&UserTrajectory],
        ranges: &[(RangeKind, usize)],
    ) -> Result<Vec<FeatureMatrix>> {
        for &(_, x) in ranges {
            self.check_range(x)?;
        }
        let values = crate::par::map(users, |t| self.prefix_values(t));
        let values: Vec<PrefixValues> = values.into_iter().collect::<Result<_>>()?;
        ranges
            .iter()
            .map(|&(range, x)| {
                let rows = crate::par::map(&values, |pv| self.features(pv, range, x));
                Ok(FeatureMatrix {
                    range,
                    x,
                    schema: self.schema(x)?,
                    users: users.iter().map(|t| t.user.clone()).collect(),
                    rows: rows.into_iter().collect::<Result<_>>()?,
                    omitted: self.omitted.clone(),
                })
            })
            .collect()
    }
}
