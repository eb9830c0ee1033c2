mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wander_core::ingest::{Dataset, PostEvent};
use wander_core::labeling::{label_users, LabelConfig, QuartileScope, Status, DEFAULT_SOF};

const DAY: i64 = 86_400;
const MID: i64 = 1_380_585_600; // 2013-10-01
const END: i64 = 1_388_534_400; // 2014-01-01

/// Users straddling SOF: some stop before it, some post in one or both
/// halves of the observation period, some never reach 50 posts.
fn events(seed: u64, users: usize) -> Vec<PostEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for u in 0..users {
        let before = rng.random_range(30..90);
        let mut push = |ts: i64| {
            out.push(PostEvent {
                user: format!("u{u:04}"),
                ts,
                community: "c".into(),
                tokens: None,
                pos_tags: None,
                feedback: None,
            })
        };
        for _ in 0..before {
            push(DEFAULT_SOF - rng.random_range(1..500) * DAY);
        }
        if rng.random_bool(0.6) {
            for _ in 0..rng.random_range(0..40) {
                push(rng.random_range(DEFAULT_SOF..MID));
            }
        }
        if rng.random_bool(0.6) {
            for _ in 0..rng.random_range(0..40) {
                push(rng.random_range(MID..END));
            }
        }
    }
    out
}

fn oracle_status(ts: &[i64]) -> Option<Status> {
    if ts.iter().filter(|&&t| t < DEFAULT_SOF).count() < 50 {
        return None;
    }
    if ts.iter().all(|&t| t < DEFAULT_SOF) {
        return Some(Status::Departing);
    }
    let first = ts.iter().any(|&t| (DEFAULT_SOF..MID).contains(&t));
    let second = ts.iter().any(|&t| (MID..END).contains(&t));
    Some(if first && second { Status::Staying } else { Status::Neither })
}

#[test]
fn labels_and_quartiles_match_oracle() {
    let ev = events(41, 1000);
    let mut times: BTreeMap<String, Vec<i64>> = BTreeMap::new();
    for e in &ev {
        times.entry(e.user.clone()).or_default().push(e.ts);
    }
    let ds = Dataset::build(ev);

    for scope in [QuartileScope::AllEligible, QuartileScope::Labeled] {
        let cfg = LabelConfig { quartile_scope: scope, ..LabelConfig::default() };
        let labels = label_users(&ds, &cfg).unwrap();

        let mut want = BTreeMap::new();
        for (u, ts) in &times {
            if let Some(s) = oracle_status(ts) {
                want.insert(u.clone(), (s, ts.len() - 50));
            }
        }
        let got: BTreeMap<String, (Status, usize)> = labels
            .iter()
            .map(|l| (l.user.clone(), (l.status, l.future_post_count)))
            .collect();
        assert_eq!(got, want);
        for s in [Status::Departing, Status::Staying, Status::Neither] {
            assert!(want.values().filter(|v| v.0 == s).count() > 50, "too few {s}");
        }

        let pool: Vec<(String, usize)> = want
            .iter()
            .filter(|(_, v)| scope == QuartileScope::AllEligible || v.0 != Status::Neither)
            .map(|(u, v)| (u.clone(), v.1))
            .collect();
        let q = common::quartiles(&pool);
        for l in &labels {
            assert_eq!(l.quartile, q.get(&l.user).copied().unwrap_or(0), "{}", l.user);
        }
    }
}
