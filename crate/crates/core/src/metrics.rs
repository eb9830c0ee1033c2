//! Per-user metric series under both views, and population curves over
//! groups of users.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::community::{self, CommunityDistribution, PosterOverlap};
use crate::error::{Error, Result};
use crate::feedback::{QuantileIndex, Threshold, FB_MED, FB_P75};
use crate::framework::{eval_view, population_curve, PerPost, PerWindow, WindowFunction, WindowSpec};
use crate::ingest::{Dataset, PostEvent, UserTrajectory};
use crate::language::{
    build_vocabulary, post_length, pronoun_rate, LanguageModels, Smoothing, VocabKind, Vocabulary, DEFAULT_PRONOUNS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum XKind {
    Window,
    Stage,
    /// Number of posts so far (cumulative curves).
    Post,
}

impl fmt::Display for XKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XKind::Window => "window",
            XKind::Stage => "stage",
            XKind::Post => "post",
        })
    }
}

impl std::str::FromStr for XKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(XKind::Window),
            "stage" => Ok(XKind::Stage),
            "post" => Ok(XKind::Post),
            _ => Err(Error::InvalidArgument(format!("unknown x kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub w: usize,
    pub prefix_len: usize,
    pub stages: usize,
    pub vocabs: Vec<VocabKind>,
    pub pronouns: Vec<String>,
    pub dissim_min_posts: u64,
    /// Users with fewer posts are left out.
    pub min_posts: usize,
    /// Cumulative new-community counts are reported for x = 1..=this.
    pub cumnew_len: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            w: crate::framework::DEFAULT_WINDOW,
            prefix_len: crate::framework::DEFAULT_PREFIX,
            stages: crate::framework::DEFAULT_STAGES,
            vocabs: VocabKind::prediction_set(),
            pronouns: DEFAULT_PRONOUNS.iter().map(|s| s.to_string()).collect(),
            dissim_min_posts: community::DEFAULT_DISSIM_MIN_POSTS,
            min_posts: crate::framework::DEFAULT_PREFIX,
            cumnew_len: crate::framework::DEFAULT_PREFIX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub user: String,
    pub x_kind: XKind,
    pub x: usize,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub group: String,
    pub x: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Everything the window functions read, built once per dataset.
pub struct MetricSuite<'a> {
    dataset: &'a Dataset,
    lms: Vec<LanguageModels<'a>>,
    quantiles: Option<QuantileIndex>,
    overlap: PosterOverlap,
    pronouns: Vec<String>,
}

/// Vocabularies for `kinds` that the dataset can support, in order.
pub fn build_vocabularies(dataset: &Dataset, kinds: &[VocabKind]) -> Result<Vec<Vocabulary>> {
    if !dataset.has_tokens {
        return Ok(Vec::new());
    }
    let words = dataset.month_stats.global_token_counts();
    let tags = dataset.month_stats.global_pos_counts();
    kinds
        .iter()
        .filter(|k| !k.is_pos() || dataset.has_pos)
        .map(|&k| build_vocabulary(&words, &tags, k))
        .collect()
}

impl<'a> MetricSuite<'a> {
    pub fn new(dataset: &'a Dataset, vocabs: &'a [Vocabulary], cfg: &MetricsConfig) -> Self {
        Self {
            dataset,
            lms: vocabs
                .iter()
                .map(|v| LanguageModels::build(&dataset.month_stats, v, Smoothing::None))
                .collect(),
            quantiles: dataset.has_feedback.then(|| QuantileIndex::build(&dataset.month_stats)),
            overlap: PosterOverlap::new(&dataset.user_index, cfg.dissim_min_posts),
            pronouns: cfg.pronouns.clone(),
        }
    }

    /// Named window functions, in output order. Language and feedback
    /// metrics appear only when the data carries tokens or feedback.
    pub fn functions(&self) -> Vec<(String, Box<dyn WindowFunction + '_>)> {
        let mut out: Vec<(String, Box<dyn WindowFunction + '_>)> = vec![
            (
                community::UNIQ.into(),
                Box::new(PerWindow(|w: &[PostEvent]| Some(community::unique_communities(w) as f64))),
            ),
            (
                community::JUMPS.into(),
                Box::new(PerWindow(|w: &[PostEvent]| Some(community::jumps(w) as f64))),
            ),
            (
                community::ENTROPY.into(),
                Box::new(PerWindow(|w: &[PostEvent]| {
                    Some(community::entropy(&CommunityDistribution::from_window(w)))
                })),
            ),
            (
                community::GINI.into(),
                Box::new(PerWindow(|w: &[PostEvent]| {
                    Some(community::gini_simpson(&CommunityDistribution::from_window(w)))
                })),
            ),
            (
                community::LOGSIZE.into(),
                Box::new(PerPost(|ev: &[PostEvent], t: usize| {
                    community::apparent_size(&ev[t], &self.dataset.month_stats)
                })),
            ),
            (
                community::DISSIM.into(),
                Box::new(PerWindow(|w: &[PostEvent]| community::window_dissimilarity(w, &self.overlap))),
            ),
        ];
        if self.dataset.has_tokens {
            for lm in &self.lms {
                // every ingested post belongs to its own month's corpus, so
                // the unsmoothed model cannot fail here
                out.push((
                    format!("ce.{}", lm.vocab.id()),
                    Box::new(PerPost(move |ev: &[PostEvent], t: usize| {
                        lm.post_cross_entropy(&ev[t]).ok().flatten()
                    })),
                ));
            }
            out.push((
                "pronoun".into(),
                Box::new(PerPost(|ev: &[PostEvent], t: usize| {
                    let lex: Vec<&str> = self.pronouns.iter().map(String::as_str).collect();
                    ev[t].tokens.as_deref().and_then(|tok| pronoun_rate(tok, &lex))
                })),
            ));
            out.push((
                "length".into(),
                Box::new(PerPost(|ev: &[PostEvent], t: usize| {
                    ev[t].tokens.as_deref().map(|tok| post_length(tok) as f64)
                })),
            ));
        }
        if let Some(q) = &self.quantiles {
            for (name, th) in [(FB_MED, Threshold::Median), (FB_P75, Threshold::P75)] {
                out.push((
                    name.into(),
                    Box::new(PerPost(move |ev: &[PostEvent], t: usize| q.indicator(&ev[t], th))),
                ));
            }
        }
        out
    }
}

fn validate(cfg: &MetricsConfig) -> Result<(WindowSpec, WindowSpec)> {
    if cfg.cumnew_len > cfg.min_posts {
        return Err(Error::InvalidArgument(format!(
            "cumulative curve length {} exceeds the minimum post count {}",
            cfg.cumnew_len, cfg.min_posts
        )));
    }
    if cfg.prefix_len > cfg.min_posts {
        return Err(Error::InvalidArgument(format!(
            "prefix of {} posts is longer than the minimum post count {}",
            cfg.prefix_len, cfg.min_posts
        )));
    }
    Ok((
        WindowSpec::fixed_prefix(cfg.w, cfg.prefix_len)?,
        WindowSpec::full_life(cfg.w, cfg.stages)?,
    ))
}

/// Series for one user: prefix windows, life stages, then the cumulative
/// new-community curve.
pub fn user_series(
    traj: &UserTrajectory,
    functions: &[(String, Box<dyn WindowFunction + '_>)],
    cfg: &MetricsConfig,
) -> Result<Vec<SeriesRow>> {
    let (prefix, life) = validate(cfg)?;
    let mut rows = Vec::new();
    for (kind, spec) in [(XKind::Window, &prefix), (XKind::Stage, &life)] {
        for (name, f) in functions {
            for (i, v) in eval_view(traj, f.as_ref(), spec).into_iter().enumerate() {
                rows.push(SeriesRow {
                    user: traj.user.clone(),
                    x_kind: kind,
                    x: i + 1,
                    metric: name.clone(),
                    value: v,
                });
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for (i, e) in traj.events.iter().take(cfg.cumnew_len).enumerate() {
        seen.insert(e.community.as_str());
        rows.push(SeriesRow {
            user: traj.user.clone(),
            x_kind: XKind::Post,
            x: i + 1,
            metric: community::CUMNEW.into(),
            value: Some(seen.len() as f64),
        });
    }
    Ok(rows)
}

/// Series for every user with at least `min_posts` posts, in user order.
pub fn compute_series(dataset: &Dataset, cfg: &MetricsConfig) -> Result<Vec<SeriesRow>> {
    validate(cfg)?;
    let vocabs = build_vocabularies(dataset, &cfg.vocabs)?;
    let suite = MetricSuite::new(dataset, &vocabs, cfg);
    let functions = suite.functions();
    let users: Vec<&UserTrajectory> = dataset.users_with_min_posts(cfg.min_posts).collect();
    let per_user = crate::par::map(&users, |t| user_series(t, &functions, cfg));
    let mut rows = Vec::new();
    for r in per_user {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Population curves for one x-kind. Users missing from `groups` are
/// skipped.
pub fn curves(rows: &[SeriesRow], x_kind: XKind, groups: &BTreeMap<String, String>) -> Vec<CurveRow> {
    // (metric, user) -> values by x
    let mut series: BTreeMap<(&str, &str), Vec<Option<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.x_kind == x_kind) {
        if !groups.contains_key(&r.user) {
            continue;
        }
        let v = series.entry((r.metric.as_str(), r.user.as_str())).or_default();
        if v.len() < r.x {
            v.resize(r.x, None);
        }
        v[r.x - 1] = r.value;
    }
    let mut by_metric: BTreeMap<&str, Vec<(&str, &str, &[Option<f64>])>> = BTreeMap::new();
    for ((metric, user), values) in &series {
        by_metric
            .entry(metric)
            .or_default()
            .push((user, groups[*user].as_str(), values.as_slice()));
    }
    let mut out = Vec::new();
    for (metric, users) in by_metric {
        for p in population_curve(users) {
            out.push(CurveRow {
                group: p.group,
                x: p.x,
                metric: metric.to_string(),
                mean: p.mean,
                stderr: p.stderr,
                n: p.n,
            });
        }
    }
    out.sort_by(|a, b| (&a.metric, &a.group, a.x).cmp(&(&b.metric, &b.group, b.x)));
    out
}
