//! Which of two post collections by the same user was written in which
//! community, judged only from cross-entropies against smoothed monthly
//! models of the two communities.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::framework::{mean_defined, mean_stderr};
use crate::ingest::{Dataset, PostEvent, UserTrajectory};
use crate::language::{cross_entropy, LanguageModels, MonthlyLanguageModel, Smoothing, VocabKind, Vocabulary};
use crate::prediction::linear::{train_logistic_no_bias, Matrix, SolverOptions, DEFAULT_C_GRID};

pub const DEFAULT_MIN_POSTS: usize = 25;
pub const DEFAULT_STYLE_WINDOW: usize = 5;

pub fn default_vocabs() -> Vec<VocabKind> {
    vec![VocabKind::Pos, VocabKind::Top(100), VocabKind::Top(500)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleConfig {
    pub min_posts: usize,
    /// Keep at most this many pairs per user (a seeded sample).
    pub cap_per_user: Option<usize>,
    pub seed: u64,
}

impl Default for TripleConfig {
    fn default() -> Self {
        Self {
            min_posts: DEFAULT_MIN_POSTS,
            cap_per_user: None,
            seed: 0,
        }
    }
}

/// One classification instance. `community_a < community_b`; `posts_a`
/// and `posts_b` index the user's trajectory. When `swapped` is false the
/// side presented first is `a`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StyleTriple {
    pub user: String,
    pub community_a: String,
    pub community_b: String,
    pub posts_a: Vec<usize>,
    pub posts_b: Vec<usize>,
    pub swapped: bool,
}

impl StyleTriple {
    pub fn sides(&self) -> (&[usize], &[usize]) {
        if self.swapped {
            (&self.posts_b, &self.posts_a)
        } else {
            (&self.posts_a, &self.posts_b)
        }
    }
}

fn first_posts_by_community(traj: &UserTrajectory, k: usize) -> BTreeMap<&str, Vec<usize>> {
    let mut by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in traj.events.iter().enumerate() {
        let v = by.entry(e.community.as_str()).or_default();
        if v.len() < k {
            v.push(i);
        }
    }
    by.retain(|_, v| v.len() == k);
    by
}

/// Every unordered pair of communities where the user has at least
/// `min_posts` posts, with a seeded orientation bit. Users are visited in
/// id order so the random stream does not depend on scheduling.
pub fn build_triples<'a>(users: impl IntoIterator<Item = &'a UserTrajectory>, cfg: &TripleConfig) -> Vec<StyleTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut users: Vec<&UserTrajectory> = users.into_iter().collect();
    users.sort_by(|a, b| a.user.cmp(&b.user));
    let mut out = Vec::new();
    for t in users {
        let firsts = first_posts_by_community(t, cfg.min_posts);
        let cs: Vec<(&&str, &Vec<usize>)> = firsts.iter().collect();
        let mut pairs = Vec::new();
        for i in 0..cs.len() {
            for j in i + 1..cs.len() {
                pairs.push((i, j));
            }
        }
        if let Some(cap) = cfg.cap_per_user {
            if pairs.len() > cap {
                pairs.shuffle(&mut rng);
                pairs.truncate(cap);
                pairs.sort_unstable();
            }
        }
        for (i, j) in pairs {
            out.push(StyleTriple {
                user: t.user.clone(),
                community_a: cs[i].0.to_string(),
                community_b: cs[j].0.to_string(),
                posts_a: cs[i].1.clone(),
                posts_b: cs[j].1.clone(),
                swapped: rng.random(),
            });
        }
    }
    out
}

/// Null-control instances: the user's first `2·min_posts` posts in a single
/// community. Each consecutive pair of posts sends one post to each side,
/// chosen by coin flip, so neither side is systematically earlier.
pub fn build_same_community_triples<'a>(
    users: impl IntoIterator<Item = &'a UserTrajectory>,
    cfg: &TripleConfig,
) -> Vec<StyleTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut users: Vec<&UserTrajectory> = users.into_iter().collect();
    users.sort_by(|a, b| a.user.cmp(&b.user));
    let mut out = Vec::new();
    for t in users {
        for (c, idx) in first_posts_by_community(t, 2 * cfg.min_posts) {
            let mut posts_a = Vec::with_capacity(cfg.min_posts);
            let mut posts_b = Vec::with_capacity(cfg.min_posts);
            for pair in idx.chunks(2) {
                let (x, y) = if rng.random() { (pair[0], pair[1]) } else { (pair[1], pair[0]) };
                posts_a.push(x);
                posts_b.push(y);
            }
            out.push(StyleTriple {
                user: t.user.clone(),
                community_a: c.to_string(),
                community_b: c.to_string(),
                posts_a,
                posts_b,
                swapped: rng.random(),
            });
        }
    }
    out
}

/// Rejects triple sets whose orientation bits are constant or implausibly
/// unbalanced (|z| > 4 under a fair coin).
pub fn check_orientation(triples: &[StyleTriple]) -> Result<()> {
    let n = triples.len();
    if n < 2 {
        return Ok(());
    }
    let pos = triples.iter().filter(|t| t.swapped).count();
    let z = (pos as f64 - n as f64 / 2.0) / (n as f64 / 4.0).sqrt();
    if pos == 0 || pos == n || z.abs() > 4.0 {
        return Err(Error::OrientationNotRandomized { positives: pos, total: n });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleFeatureConfig {
    pub window: usize,
    /// Remove the user's own posts from the community-month models.
    pub exclude_own: bool,
}

impl Default for StyleFeatureConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_STYLE_WINDOW,
            exclude_own: false,
        }
    }
}

/// Layout: `[side][window][community]`, sides in presentation order and
/// communities `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleFeatures {
    pub triple: usize,
    pub values: Vec<f64>,
    pub swapped: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StyleFeatureOutput {
    pub features: Vec<StyleFeatures>,
    pub dropped: Vec<String>,
}

pub struct StyleScorer<'a> {
    dataset: &'a Dataset,
    lms: LanguageModels<'a>,
    vocab: &'a Vocabulary,
    cfg: &'a StyleFeatureConfig,
}

impl<'a> StyleScorer<'a> {
    pub fn new(dataset: &'a Dataset, vocab: &'a Vocabulary, cfg: &'a StyleFeatureConfig) -> Self {
        Self {
            dataset,
            lms: LanguageModels::build(&dataset.month_stats, vocab, Smoothing::AddOneOverV),
            vocab,
            cfg,
        }
    }

    fn post_ce(&self, traj: &UserTrajectory, ev: &PostEvent, community: &str) -> Result<Option<f64>> {
        let Some(units) = self.vocab.units(ev) else {
            return Ok(None);
        };
        let month = ev.month();
        let Some(lm) = self.lms.model(community, month) else {
            return Err(Error::InvalidArgument(format!("no model for {community} in {month}")));
        };
        if self.cfg.exclude_own {
            let own = own_counts(traj, community, month, self.vocab);
            let lm: MonthlyLanguageModel<'_> = lm.without(&own);
            return cross_entropy(units, &lm);
        }
        cross_entropy(units, &lm)
    }

    fn side(&self, traj: &UserTrajectory, posts: &[usize], t: &StyleTriple, out: &mut Vec<f64>) -> Result<()> {
        for win in posts.chunks(self.cfg.window) {
            for c in [&t.community_a, &t.community_b] {
                let vals = win
                    .iter()
                    .map(|&i| self.post_ce(traj, &traj.events[i], c))
                    .collect::<Result<Vec<_>>>()?;
                let v = mean_defined(vals)
                    .ok_or_else(|| Error::InvalidArgument(format!("no scorable posts in a window of {}", t.user)))?;
                out.push(v);
            }
        }
        Ok(())
    }

    pub fn features(&self, t: &StyleTriple) -> Result<Vec<f64>> {
        let traj = self
            .dataset
            .trajectories
            .get(&t.user)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown user {}", t.user)))?;
        let (first, second) = t.sides();
        let mut out = Vec::with_capacity(4 * first.len().div_ceil(self.cfg.window));
        self.side(traj, first, t, &mut out)?;
        self.side(traj, second, t, &mut out)?;
        Ok(out)
    }

    /// Features for every triple; triples whose models are missing are
    /// dropped with a note.
    pub fn all_features(&self, triples: &[StyleTriple]) -> StyleFeatureOutput {
        let idx: Vec<usize> = (0..triples.len()).collect();
        let res = crate::par::map(&idx, |&i| self.features(&triples[i]));
        let mut out = StyleFeatureOutput::default();
        for (i, r) in res.into_iter().enumerate() {
            match r {
                Ok(values) => out.features.push(StyleFeatures {
                    triple: i,
                    values,
                    swapped: triples[i].swapped,
                }),
                Err(e) => out.dropped.push(format!(
                    "{} {}/{}: {e}",
                    triples[i].user, triples[i].community_a, triples[i].community_b
                )),
            }
        }
        out
    }
}

fn own_counts(traj: &UserTrajectory, community: &str, month: crate::ingest::Month, vocab: &Vocabulary) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for e in traj.events.iter().filter(|e| e.community == community && e.month() == month) {
        for u in vocab.units(e).unwrap_or_default() {
            *m.entry(u.clone()).or_default() += 1;
        }
    }
    m
}

/// First side minus second side. Swapping the sides negates the vector.
pub fn difference_features(values: &[f64]) -> Vec<f64> {
    let half = values.len() / 2;
    values[..half].iter().zip(&values[half..]).map(|(a, b)| a - b).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleExperimentConfig {
    /// Training plus development instances per split.
    pub train: usize,
    /// Development instances carved from `train` for choosing C.
    pub dev: usize,
    pub test: usize,
    pub splits: usize,
    pub seed: u64,
    pub c_grid: Vec<f64>,
    pub solver: SolverOptions,
}

impl Default for StyleExperimentConfig {
    fn default() -> Self {
        Self {
            train: 2000,
            dev: 500,
            test: 500,
            splits: 10,
            seed: 0,
            c_grid: DEFAULT_C_GRID.to_vec(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub vocabulary: String,
    pub trial: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracySummary {
    pub vocabulary: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Per-feature `x / max|x|` fitted on training rows; all-zero columns stay 0.
fn max_abs_scale(fit: &[Vec<f64>], rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = fit.first().map_or(0, Vec::len);
    let mut m = vec![0.0f64; d];
    for r in fit {
        for (j, v) in r.iter().enumerate() {
            m[j] = m[j].max(v.abs());
        }
    }
    rows.iter()
        .map(|r| r.iter().zip(&m).map(|(v, s)| if *s > 0.0 { v / s } else { 0.0 }).collect())
        .collect()
}

fn fit_predict(
    x: &[Vec<f64>],
    y: &[bool],
    fit: &[usize],
    eval: &[usize],
    c: f64,
    opts: &SolverOptions,
) -> Result<Vec<bool>> {
    let xf: Vec<Vec<f64>> = fit.iter().map(|&i| x[i].clone()).collect();
    let xe: Vec<Vec<f64>> = eval.iter().map(|&i| x[i].clone()).collect();
    let mf = Matrix::from_rows(&max_abs_scale(&xf, &xf))?;
    let me = Matrix::from_rows(&max_abs_scale(&xf, &xe))?;
    let labels: Vec<bool> = fit.iter().map(|&i| y[i]).collect();
    let model = train_logistic_no_bias(&mf, &labels, c, opts)?;
    Ok(model.predict_labels(&me))
}

fn accuracy(pred: &[bool], truth: &[bool]) -> f64 {
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len().max(1) as f64
}

/// Accuracy of recovering the orientation bit on each random split. The
/// classifier sees the side difference of the 20 cross-entropies, has no
/// intercept, and uses sign-preserving scaling, so relabeling every
/// instance the other way round leaves every prediction's correctness
/// unchanged.
pub fn run_style_splits(features: &[StyleFeatures], cfg: &StyleExperimentConfig) -> Result<Vec<f64>> {
    if cfg.dev == 0 || cfg.dev >= cfg.train || cfg.test == 0 {
        return Err(Error::InvalidArgument("invalid style split sizes".into()));
    }
    let needed = cfg.train + cfg.test;
    if features.len() < needed {
        return Err(Error::InsufficientUsers {
            needed,
            available: features.len(),
        });
    }
    let x: Vec<Vec<f64>> = features.iter().map(|f| difference_features(&f.values)).collect();
    let y: Vec<bool> = features.iter().map(|f| f.swapped).collect();
    let splits: Vec<usize> = (0..cfg.splits).collect();
    let res = crate::par::map(&splits, |&s| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(&mut rng);
        let train = &idx[..cfg.train];
        let test = &idx[cfg.train..needed];
        let (fit, dev) = train.split_at(cfg.train - cfg.dev);
        let dev_truth: Vec<bool> = dev.iter().map(|&i| y[i]).collect();
        let mut best: Option<(f64, f64)> = None;
        for &c in &cfg.c_grid {
            let acc = accuracy(&fit_predict(&x, &y, fit, dev, c, &cfg.solver)?, &dev_truth);
            if best.is_none_or(|(b, _)| acc > b) {
                best = Some((acc, c));
            }
        }
        let (_, c) = best.ok_or_else(|| Error::InvalidArgument("empty regularization grid".into()))?;
        let truth: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        Ok(accuracy(&fit_predict(&x, &y, train, test, c, &cfg.solver)?, &truth))
    });
    res.into_iter().collect()
}

/// Accuracy rows for every vocabulary, plus per-vocabulary summaries and
/// the triples each vocabulary had to drop.
pub struct StyleResults {
    pub rows: Vec<AccuracyRow>,
    pub summary: Vec<AccuracySummary>,
    pub dropped: BTreeMap<String, Vec<String>>,
}

pub fn run_style_experiment(
    dataset: &Dataset,
    triples: &[StyleTriple],
    vocabs: &[Vocabulary],
    fcfg: &StyleFeatureConfig,
    ecfg: &StyleExperimentConfig,
) -> Result<StyleResults> {
    check_orientation(triples)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut dropped = BTreeMap::new();
    for v in vocabs {
        let scorer = StyleScorer::new(dataset, v, fcfg);
        let out = scorer.all_features(triples);
        let accs = run_style_splits(&out.features, ecfg)?;
        let (mean, stderr) = mean_stderr(&accs);
        summary.push(AccuracySummary {
            vocabulary: v.id(),
            mean,
            stderr,
            n: accs.len(),
        });
        rows.extend(accs.into_iter().enumerate().map(|(trial, accuracy)| AccuracyRow {
            vocabulary: v.id(),
            trial,
            accuracy,
        }));
        dropped.insert(v.id(), out.dropped);
    }
    Ok(StyleResults { rows, summary, dropped })
}
