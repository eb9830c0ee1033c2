//! Restricted-vocabulary unigram models per community-month, and the
//! per-post language metrics built on them.
//!
//! A vocabulary `V` maps every unit outside it to [`RARE`]. A monthly model
//! is the relative frequency of each unit of `V ∪ {<RARE>}` in everything
//! posted to the community that month, optionally smoothed by adding
//! `1/|V'|` to every count (`V' = V ∪ {<RARE>}`, so the added mass is 1).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::{CommunityMonthStats, Month, MonthStatsIndex, PostEvent};
use crate::par;

pub const RARE: &str = "<RARE>";

/// Default threshold for the full vocabulary: words seen more than this
/// many times in the whole dataset.
pub const FULL_VOCAB_MIN_COUNT: u64 = 100;

pub const DEFAULT_PRONOUNS: [&str; 5] = ["i", "me", "my", "mine", "myself"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VocabKind {
    /// Part-of-speech tags; models are built over tag sequences.
    Pos,
    /// The `k` most frequent words.
    Top(usize),
    /// Every word seen more than `min_count` times.
    Full { min_count: u64 },
}

impl VocabKind {
    pub fn is_pos(&self) -> bool {
        matches!(self, VocabKind::Pos)
    }

    /// Vocabularies used for the language feature family.
    pub fn prediction_set() -> Vec<VocabKind> {
        vec![
            VocabKind::Pos,
            VocabKind::Top(100),
            VocabKind::Top(500),
            VocabKind::Top(1000),
            VocabKind::Top(5000),
            VocabKind::Top(10000),
            VocabKind::Full {
                min_count: FULL_VOCAB_MIN_COUNT,
            },
        ]
    }
}

impl fmt::Display for VocabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VocabKind::Pos => f.write_str("pos"),
            VocabKind::Top(k) => write!(f, "top{k}"),
            VocabKind::Full { min_count } if *min_count == FULL_VOCAB_MIN_COUNT => f.write_str("full"),
            VocabKind::Full { min_count } => write!(f, "full{min_count}"),
        }
    }
}

impl FromStr for VocabKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown vocabulary `{s}` (pos, topK, full, fullN)"));
        match s {
            "pos" => Ok(VocabKind::Pos),
            "full" => Ok(VocabKind::Full {
                min_count: FULL_VOCAB_MIN_COUNT,
            }),
            _ => {
                if let Some(k) = s.strip_prefix("top") {
                    let k: usize = k.parse().map_err(|_| bad())?;
                    if k == 0 {
                        return Err(bad());
                    }
                    Ok(VocabKind::Top(k))
                } else if let Some(n) = s.strip_prefix("full") {
                    Ok(VocabKind::Full {
                        min_count: n.parse().map_err(|_| bad())?,
                    })
                } else {
                    Err(bad())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub kind: VocabKind,
    /// Members by descending frequency, ties lexicographic.
    pub ranked: Vec<String>,
    members: HashSet<String>,
}

impl Vocabulary {
    pub fn from_ranked(kind: VocabKind, ranked: Vec<String>) -> Self {
        let members = ranked.iter().cloned().collect();
        Self { kind, ranked, members }
    }

    pub fn contains(&self, unit: &str) -> bool {
        self.members.contains(unit)
    }

    /// `|V|`, not counting `<RARE>`.
    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    /// `|V ∪ {<RARE>}|`.
    pub fn extended_len(&self) -> usize {
        self.ranked.len() + 1
    }

    pub fn id(&self) -> String {
        self.kind.to_string()
    }

    /// The units of a post this vocabulary reads: tags for POS, words
    /// otherwise.
    pub fn units<'a>(&self, ev: &'a PostEvent) -> Option<&'a [String]> {
        if self.kind.is_pos() {
            ev.pos_tags.as_deref()
        } else {
            ev.tokens.as_deref()
        }
    }

    pub fn counts<'a>(&self, stats: &'a CommunityMonthStats) -> &'a BTreeMap<String, u64> {
        if self.kind.is_pos() {
            &stats.pos_counts
        } else {
            &stats.token_counts
        }
    }
}

fn rank_by_count(counts: &BTreeMap<String, u64>) -> Vec<(&String, u64)> {
    let mut ranked: Vec<(&String, u64)> = counts.iter().map(|(w, &c)| (w, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
}

/// Builds a vocabulary from dataset-wide counts. Word kinds use
/// `word_counts`; the POS kind takes every tag in `pos_counts`.
pub fn build_vocabulary(
    word_counts: &BTreeMap<String, u64>,
    pos_counts: &BTreeMap<String, u64>,
    kind: VocabKind,
) -> Result<Vocabulary> {
    let ranked: Vec<String> = match kind {
        VocabKind::Pos => {
            if pos_counts.is_empty() {
                return Err(Error::InvalidArgument("no part-of-speech tags were ingested".into()));
            }
            rank_by_count(pos_counts).into_iter().map(|(w, _)| w.clone()).collect()
        }
        VocabKind::Top(k) => {
            if word_counts.is_empty() {
                return Err(Error::NoTokens);
            }
            rank_by_count(word_counts)
                .into_iter()
                .take(k)
                .map(|(w, _)| w.clone())
                .collect()
        }
        VocabKind::Full { min_count } => {
            if word_counts.is_empty() {
                return Err(Error::NoTokens);
            }
            rank_by_count(word_counts)
                .into_iter()
                .filter(|(_, c)| *c > min_count)
                .map(|(w, _)| w.clone())
                .collect()
        }
    };
    Ok(Vocabulary::from_ranked(kind, ranked))
}

pub fn map_rare<'a, S: AsRef<str>>(units: &'a [S], vocab: &Vocabulary) -> Vec<&'a str> {
    units
        .iter()
        .map(|u| {
            let u = u.as_ref();
            if vocab.contains(u) {
                u
            } else {
                RARE
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    None,
    /// Adds `1/|V'|` to every count.
    AddOneOverV,
}

/// A community-month unigram model over `V ∪ {<RARE>}`. Borrows the raw
/// counts; only the `<RARE>` mass is precomputed.
#[derive(Debug, Clone)]
pub struct MonthlyLanguageModel<'a> {
    pub community: &'a str,
    pub month: Month,
    vocab: &'a Vocabulary,
    counts: &'a BTreeMap<String, u64>,
    withheld: Option<&'a BTreeMap<String, u64>>,
    rare: u64,
    total: u64,
    smoothing: Smoothing,
}

impl<'a> MonthlyLanguageModel<'a> {
    /// `None` when the community-month has no units for this vocabulary.
    pub fn new(stats: &'a CommunityMonthStats, vocab: &'a Vocabulary, smoothing: Smoothing) -> Option<Self> {
        let counts = vocab.counts(stats);
        let rare = counts
            .iter()
            .filter(|(w, _)| !vocab.contains(w))
            .map(|(_, c)| c)
            .sum();
        Self::with_rare(stats, vocab, smoothing, rare)
    }

    fn with_rare(stats: &'a CommunityMonthStats, vocab: &'a Vocabulary, smoothing: Smoothing, rare: u64) -> Option<Self> {
        let total = if vocab.kind.is_pos() {
            stats.total_pos
        } else {
            stats.total_tokens
        };
        (total > 0).then_some(Self {
            community: &stats.community,
            month: stats.month,
            vocab,
            counts: vocab.counts(stats),
            withheld: None,
            rare,
            total,
            smoothing,
        })
    }

    /// The same model with `own` (raw unit counts, a subset of this
    /// community-month's corpus) removed from the counts.
    pub fn without(mut self, own: &'a BTreeMap<String, u64>) -> Self {
        for (w, c) in own {
            let c = (*c).min(self.counts.get(w).copied().unwrap_or(0));
            self.total -= c;
            if !self.vocab.contains(w) {
                self.rare -= c;
            }
        }
        self.withheld = Some(own);
        self
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count of a unit of `V'` (`<RARE>` included).
    fn count(&self, unit: &str) -> u64 {
        if unit == RARE || !self.vocab.contains(unit) {
            return self.rare;
        }
        let c = self.counts.get(unit).copied().unwrap_or(0);
        let w = self.withheld.and_then(|m| m.get(unit)).copied().unwrap_or(0);
        c - w.min(c)
    }

    fn prob_from_count(&self, c: u64) -> f64 {
        match self.smoothing {
            Smoothing::None => {
                if self.total == 0 {
                    0.0
                } else {
                    c as f64 / self.total as f64
                }
            }
            Smoothing::AddOneOverV => {
                let alpha = 1.0 / self.vocab.extended_len() as f64;
                (c as f64 + alpha) / (self.total as f64 + 1.0)
            }
        }
    }

    /// Probability of a raw unit after `<RARE>` mapping.
    pub fn prob(&self, unit: &str) -> f64 {
        self.prob_from_count(self.count(unit))
    }

    /// Sum over every unit of `V'`, enumerated explicitly.
    pub fn total_probability(&self) -> f64 {
        self.vocab.ranked.iter().map(|w| self.prob(w)).sum::<f64>() + self.prob(RARE)
    }

    /// Shannon entropy of the model in bits.
    pub fn entropy(&self) -> f64 {
        let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
        let mut seen = 0usize;
        let mut sum = 0.0;
        for w in self.counts.keys() {
            if self.vocab.contains(w) {
                let c = self.count(w);
                if c > 0 {
                    seen += 1;
                    sum += h(self.prob_from_count(c));
                }
            }
        }
        let unseen = self.vocab.len() - seen;
        sum + unseen as f64 * h(self.prob_from_count(0)) + h(self.prob_from_count(self.rare))
    }
}

/// Mean of `−log2 p(v)` over the post's units (with multiplicity). `None`
/// for an empty post; an error if some unit has probability zero, which
/// only happens when the post is not part of an unsmoothed model's corpus.
pub fn cross_entropy<S: AsRef<str>>(units: &[S], lm: &MonthlyLanguageModel<'_>) -> Result<Option<f64>> {
    if units.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for u in units {
        let p = lm.prob(u.as_ref());
        if p <= 0.0 {
            return Err(Error::ZeroProbability {
                token: u.as_ref().to_string(),
                community: lm.community.to_string(),
                month: lm.month.to_string(),
            });
        }
        sum -= p.log2();
    }
    Ok(Some(sum / units.len() as f64))
}

/// All monthly models for one vocabulary, with the `<RARE>` mass of every
/// community-month precomputed.
pub struct LanguageModels<'a> {
    pub vocab: &'a Vocabulary,
    stats: &'a MonthStatsIndex,
    rare: BTreeMap<&'a str, BTreeMap<Month, u64>>,
    smoothing: Smoothing,
}

impl<'a> LanguageModels<'a> {
    pub fn build(stats: &'a MonthStatsIndex, vocab: &'a Vocabulary, smoothing: Smoothing) -> Self {
        let all: Vec<&CommunityMonthStats> = stats.iter().collect();
        let rares = par::map(&all, |s| {
            vocab
                .counts(s)
                .iter()
                .filter(|(w, _)| !vocab.contains(w))
                .map(|(_, c)| c)
                .sum::<u64>()
        });
        let mut rare: BTreeMap<&str, BTreeMap<Month, u64>> = BTreeMap::new();
        for (s, r) in all.into_iter().zip(rares) {
            rare.entry(s.community.as_str()).or_default().insert(s.month, r);
        }
        Self {
            vocab,
            stats,
            rare,
            smoothing,
        }
    }

    pub fn model(&self, community: &str, month: Month) -> Option<MonthlyLanguageModel<'a>> {
        let stats = self.stats.get(community, month)?;
        let rare = *self.rare.get(community)?.get(&month)?;
        MonthlyLanguageModel::with_rare(stats, self.vocab, self.smoothing, rare)
    }

    /// Cross-entropy of a post against its own community-month model.
    pub fn post_cross_entropy(&self, ev: &PostEvent) -> Result<Option<f64>> {
        let Some(units) = self.vocab.units(ev) else {
            return Ok(None);
        };
        match self.model(&ev.community, ev.month()) {
            Some(lm) => cross_entropy(units, &lm),
            None => Ok(None),
        }
    }
}

/// Acronyms (two or more letters, none lowercase, e.g. "TIL") never count
/// as pronouns even when their lowercase form would.
fn is_acronym(token: &str) -> bool {
    let letters = token.chars().filter(|c| c.is_alphabetic()).count();
    letters >= 2 && !token.chars().any(char::is_lowercase)
}

/// Fraction of tokens that are first-person-singular pronouns.
pub fn pronoun_rate<S: AsRef<str>>(tokens: &[S], lexicon: &[&str]) -> Option<f64> {
    if tokens.is_empty() {
        return None;
    }
    let hits = tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_acronym(t))
        .filter(|t| {
            let lower = t.to_lowercase();
            lexicon.iter().any(|p| *p == lower)
        })
        .count();
    Some(hits as f64 / tokens.len() as f64)
}

pub fn post_length<S>(tokens: &[S]) -> usize {
    tokens.len()
}
