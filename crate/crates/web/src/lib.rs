//! WebAssembly bindings for the demo page in `www/`. Each export takes plain
//! values and returns a JSON string; the `*_json` functions hold the logic
//! and run natively too.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;
use wander_core::community::{self, CommunityDistribution};
use wander_core::framework::window_ranges;
use wander_core::ingest::{parse_events, CommunityMonthStats, Dataset, ParseOptions, EVENTS_V1};
use wander_core::language::{build_vocabulary, cross_entropy, map_rare, MonthlyLanguageModel, Smoothing, VocabKind};
use wander_core::synth::{expected_distinct, generate, ArchetypeConfig, PopulationSpec};

#[derive(Serialize)]
struct WindowRow {
    x: usize,
    uniq: usize,
    jumps: usize,
    entropy: f64,
    gini: f64,
}

/// Community metrics for each consecutive `window`-post block of every
/// user in an events-v1 log.
pub fn window_metrics_json(log: &str, window: usize) -> Result<String, String> {
    if window == 0 {
        return Err("window size must be positive".into());
    }
    let parsed = parse_events(log.as_bytes(), EVENTS_V1, &ParseOptions::default()).map_err(|e| e.to_string())?;
    let ds = Dataset::build(parsed.events);
    let users: Vec<_> = ds
        .trajectories
        .values()
        .map(|t| {
            let rows: Vec<WindowRow> = window_ranges(t.len(), window)
                .enumerate()
                .map(|(i, r)| {
                    let w = &t.events[r];
                    let d = CommunityDistribution::from_window(w);
                    WindowRow {
                        x: i + 1,
                        uniq: community::unique_communities(w),
                        jumps: community::jumps(w),
                        entropy: community::entropy(&d),
                        gini: community::gini_simpson(&d),
                    }
                })
                .collect();
            json!({ "user": t.user, "posts": t.len(), "windows": rows })
        })
        .collect();
    let diagnostics: Vec<String> = parsed
        .diagnostics
        .iter()
        .map(|d| format!("line {}: {}", d.line, d.message))
        .collect();
    Ok(json!({ "users": users, "diagnostics": diagnostics }).to_string())
}

/// Mean distinct communities after `x` posts for two synthetic archetypes
/// that differ only in exploration rate, next to `1 + (x - 1) r`.
pub fn exploration_curves_json(users: usize, rate_a: f64, rate_b: f64, max_x: usize, seed: u64) -> Result<String, String> {
    let archetype = |name: &str, r: f64| ArchetypeConfig {
        name: name.into(),
        share: 1.0,
        exploration: r,
        size_preference: 0.5,
        adaptation: 0.1,
        feedback_quality: 1.0,
        mean_gap_days: 2.0,
        departure_prob: 0.5,
        mean_extra_posts: 0.0,
    };
    let max_x = max_x.clamp(1, 50);
    let spec = PopulationSpec {
        users: users.clamp(2, 5000),
        archetypes: vec![archetype("a", rate_a), archetype("b", rate_b)],
        background_users: 0,
        with_text: false,
        with_pos: false,
        with_feedback: false,
        seed,
        ..PopulationSpec::default()
    };
    let out = generate(&spec).map_err(|e| e.to_string())?;
    let mut by_user: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &out.events {
        by_user.entry(&e.user).or_default().push(&e.community);
    }
    let curves: Vec<_> = [("a", rate_a), ("b", rate_b)]
        .iter()
        .map(|&(name, r)| {
            let members: Vec<&Vec<&str>> = out
                .truth
                .iter()
                .filter(|t| t.archetype == name)
                .map(|t| &by_user[t.user.as_str()])
                .collect();
            let observed: Vec<f64> = (1..=max_x)
                .map(|x| {
                    let total: usize = members
                        .iter()
                        .map(|posts| posts.iter().take(x).collect::<BTreeSet<_>>().len())
                        .sum();
                    total as f64 / members.len().max(1) as f64
                })
                .collect();
            let expected: Vec<f64> = (1..=max_x).map(|x| expected_distinct(x, r)).collect();
            json!({ "name": name, "rate": r, "users": members.len(), "observed": observed, "expected": expected })
        })
        .collect();
    Ok(json!({ "x": (1..=max_x).collect::<Vec<_>>(), "curves": curves }).to_string())
}

fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Cross-entropy (bits per token) of `post` under a unigram model of
/// `corpus`. `vocab_size` 0 keeps every corpus word; otherwise the most
/// frequent words are kept and the rest become `<RARE>`.
pub fn post_cross_entropy_json(corpus: &str, post: &str, vocab_size: usize, smoothed: bool) -> Result<String, String> {
    let corpus_tokens = tokenize(corpus);
    let post_tokens = tokenize(post);
    if corpus_tokens.is_empty() {
        return Err("the corpus has no words".into());
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in &corpus_tokens {
        *counts.entry(t.clone()).or_default() += 1;
    }
    let kind = if vocab_size == 0 {
        VocabKind::Full { min_count: 0 }
    } else {
        VocabKind::Top(vocab_size)
    };
    let vocab = build_vocabulary(&counts, &BTreeMap::new(), kind).map_err(|e| e.to_string())?;
    let mapped_corpus = map_rare(&corpus_tokens, &vocab);
    let mut unit_counts: BTreeMap<String, u64> = BTreeMap::new();
    for u in &mapped_corpus {
        *unit_counts.entry(u.to_string()).or_default() += 1;
    }
    let stats = CommunityMonthStats {
        community: "corpus".into(),
        post_count: 1,
        total_tokens: corpus_tokens.len() as u64,
        token_counts: unit_counts,
        ..CommunityMonthStats::default()
    };
    let smoothing = if smoothed { Smoothing::AddOneOverV } else { Smoothing::None };
    let lm = MonthlyLanguageModel::new(&stats, &vocab, smoothing).ok_or("empty model")?;
    let mapped = map_rare(&post_tokens, &vocab);
    let tokens: Vec<_> = post_tokens
        .iter()
        .zip(&mapped)
        .map(|(t, u)| json!({ "token": t, "unit": u, "prob": lm.prob(u) }))
        .collect();
    let (ce, error) = match cross_entropy(&mapped, &lm) {
        Ok(ce) => (ce, None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(json!({
        "cross_entropy": ce,
        "model_entropy": lm.entropy(),
        "vocab_size": vocab.len(),
        "tokens": tokens,
        "error": error,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn window_metrics(log: &str, window: usize) -> Result<String, JsError> {
    window_metrics_json(log, window).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn exploration_curves(users: usize, rate_a: f64, rate_b: f64, max_x: usize, seed: u32) -> Result<String, JsError> {
    exploration_curves_json(users, rate_a, rate_b, max_x, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn post_cross_entropy(corpus: &str, post: &str, vocab_size: usize, smoothed: bool) -> Result<String, JsError> {
    post_cross_entropy_json(corpus, post, vocab_size, smoothed).map_err(|e| JsError::new(&e))
}
