use std::collections::{BTreeMap, BTreeSet};

use wander_core::ingest::Dataset;
use wander_core::labeling::{label_users, LabelConfig, Status};
use wander_core::synth::{expected_distinct, generate, two_archetypes, PopulationSpec};

fn spec() -> PopulationSpec {
    PopulationSpec {
        users: 2000,
        background_users: 0,
        with_text: false,
        seed: 77,
        ..PopulationSpec::default()
    }
}

#[test]
fn recovered_rates_within_three_standard_errors() {
    let out = generate(&spec()).unwrap();
    let archetypes: BTreeMap<String, f64> =
        two_archetypes().into_iter().map(|a| (a.name.clone(), a.departure_prob)).collect();
    let mut by_user: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &out.events {
        by_user.entry(&e.user).or_default().push(&e.community);
    }
    for a in two_archetypes() {
        let rows: Vec<_> = out.truth.iter().filter(|t| t.archetype == a.name).collect();
        assert_eq!(rows.len(), 1000);

        let (mut new, mut steps) = (0usize, 0usize);
        for t in &rows {
            let mut seen = BTreeSet::new();
            for (i, c) in by_user[t.user.as_str()].iter().enumerate() {
                let fresh = seen.insert(*c);
                if i > 0 {
                    steps += 1;
                    new += usize::from(fresh);
                }
            }
        }
        let r = new as f64 / steps as f64;
        let se = (a.exploration * (1.0 - a.exploration) / steps as f64).sqrt();
        assert!((r - a.exploration).abs() <= 3.0 * se, "{}: exploration {r} vs {}", a.name, a.exploration);

        let p = archetypes[&a.name];
        let d = rows.iter().filter(|t| t.departing).count() as f64 / rows.len() as f64;
        let se = (p * (1.0 - p) / rows.len() as f64).sqrt();
        assert!((d - p).abs() <= 3.0 * se, "{}: departure {d} vs {p}", a.name);
    }
}

#[test]
fn departers_are_labeled_departing() {
    let out = generate(&spec()).unwrap();
    let truth: BTreeMap<String, bool> = out.truth.iter().map(|t| (t.user.clone(), t.departing)).collect();
    let ds = Dataset::build(out.events);
    let labels = label_users(&ds, &LabelConfig::default()).unwrap();
    assert!(labels.len() > 1500);
    for l in &labels {
        assert_eq!(l.status == Status::Departing, truth[&l.user], "{}", l.user);
    }
}

#[test]
fn mean_distinct_follows_linear_curve() {
    let out = generate(&spec()).unwrap();
    let mut by_user: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &out.events {
        by_user.entry(&e.user).or_default().push(&e.community);
    }
    for a in two_archetypes() {
        let users: Vec<&str> = out.truth.iter().filter(|t| t.archetype == a.name).map(|t| t.user.as_str()).collect();
        for x in [1, 10, 25, 50] {
            let vals: Vec<f64> = users
                .iter()
                .map(|u| by_user[u][..x].iter().collect::<BTreeSet<_>>().len() as f64)
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt().max(1e-12);
            let want = expected_distinct(x, a.exploration);
            assert!((mean - want).abs() <= 3.0 * se + 1e-9, "{} x={x}: {mean} vs {want}", a.name);
        }
    }
}
