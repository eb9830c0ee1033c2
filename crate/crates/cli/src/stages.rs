use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use serde_json::json;
use wander_core::feedback::{first_post_feedback_comparison, QuantileIndex};
use wander_core::framework::mean_stderr;
use wander_core::ingest::{parse_events, Month, ParseMode, ParseOptions};
use wander_core::labeling::{label_users, HalfRule, LabelConfig, QuartileScope, Status};
use wander_core::language::{build_vocabulary, MonthlyLanguageModel, Smoothing, VocabKind, RARE};
use wander_core::metrics::{self, MetricsConfig, SeriesRow, XKind};
use wander_core::prediction::linear::SolverOptions;
use wander_core::prediction::{
    build_instances, run_trial_protocol, FeatureConfig, FeatureSet, ProtocolConfig, RangeKind, Task,
};
use wander_core::style::{
    build_same_community_triples, build_triples, run_style_experiment, StyleExperimentConfig, StyleFeatureConfig,
    TripleConfig,
};
use wander_core::synth::{generate, PopulationSpec};

use crate::io::{self, csv_writer};
use crate::workspace::{Input, Workspace};
use crate::{
    FeaturesArgs, GroupBy, IngestArgs, LabelsArgs, MetricsArgs, PredictArgs, ReportArgs, ScopeArg, SingleMultiArgs,
    StyleArgs, SynthArgs, WindowArgs,
};

const EVENTS: &str = "events.jsonl";

fn events_input(ws: &Workspace) -> Result<Input> {
    ws.require("ingest", EVENTS)
}

fn parse_vocabs(names: &[String]) -> Result<Vec<VocabKind>> {
    names.iter().map(|s| Ok(s.parse::<VocabKind>()?)).collect()
}

pub fn ingest(ws: &Workspace, a: &IngestArgs) -> Result<()> {
    let cutoff = a.cutoff.as_deref().map(io::parse_instant).transpose()?;
    let config = json!({ "format": a.format, "strict": a.strict, "cutoff": cutoff });
    let input = Input {
        name: format!("input:{}", a.input.file_name().map(|f| f.to_string_lossy()).unwrap_or_default()),
        path: a.input.clone(),
    };
    ws.run_stage("ingest", &config, &[input], |dir| {
        let opts = ParseOptions {
            mode: if a.strict { ParseMode::Strict } else { ParseMode::Lenient },
            bounds: None,
            cutoff,
        };
        let file = fs::File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
        let parsed = parse_events(BufReader::new(file), &a.format, &opts)?;
        for d in parsed.diagnostics.iter().take(5) {
            eprintln!("warning: line {}: {}", d.line, d.message);
        }
        if parsed.diagnostics.len() > 5 {
            eprintln!("warning: {} malformed lines skipped in total", parsed.diagnostics.len());
        }
        let mut diag = csv_writer(&dir.join("diagnostics.csv"))?;
        diag.write_record(["line", "message"])?;
        for d in &parsed.diagnostics {
            diag.write_record([d.line.to_string(), d.message.clone()])?;
        }
        diag.flush()?;

        let ds = wander_core::ingest::Dataset::build(parsed.events);
        io::save_events(&dir.join(EVENTS), ds.trajectories.values().flat_map(|t| &t.events))?;

        let mut users = csv_writer(&dir.join("users.csv"))?;
        users.write_record(["user", "posts", "communities", "first_ts", "last_ts"])?;
        for t in ds.trajectories.values() {
            let communities: std::collections::BTreeSet<&str> = t.events.iter().map(|e| e.community.as_str()).collect();
            users.write_record([
                t.user.clone(),
                t.len().to_string(),
                communities.len().to_string(),
                t.events.first().map(|e| e.ts.to_string()).unwrap_or_default(),
                t.events.last().map(|e| e.ts.to_string()).unwrap_or_default(),
            ])?;
        }
        users.flush()?;

        let mut cm = csv_writer(&dir.join("community_months.csv"))?;
        cm.write_record(["community", "month", "posts", "tokens", "pos_tags", "feedback_values"])?;
        for s in ds.month_stats.iter() {
            cm.write_record([
                s.community.clone(),
                s.month.to_string(),
                s.post_count.to_string(),
                s.total_tokens.to_string(),
                s.total_pos.to_string(),
                s.feedback_values.len().to_string(),
            ])?;
        }
        cm.flush()?;
        eprintln!(
            "ingest: {} events, {} users, {} community-months, {} malformed, {} after cutoff",
            ds.event_count(),
            ds.trajectories.len(),
            ds.month_stats.len(),
            parsed.diagnostics.len(),
            parsed.dropped_after_cutoff
        );
        Ok(())
    })?;
    Ok(())
}

fn window_config(w: &WindowArgs) -> Result<(Vec<VocabKind>, Vec<String>)> {
    let pronouns: Vec<String> = w.pronouns.iter().map(|p| p.to_lowercase()).collect();
    Ok((parse_vocabs(&w.vocab)?, pronouns))
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

pub fn metrics(ws: &Workspace, a: &MetricsArgs) -> Result<()> {
    let (vocabs, pronouns) = window_config(&a.window)?;
    let cfg = MetricsConfig {
        w: a.window.window_size,
        prefix_len: a.window.prefix_len,
        stages: a.stages,
        vocabs,
        pronouns,
        dissim_min_posts: a.dissim_min_posts,
        min_posts: a.window.prefix_len,
        cumnew_len: a.window.prefix_len,
    };
    let dumps: Vec<(String, Month)> = a
        .dump_model
        .iter()
        .map(|d| {
            let (c, m) = d
                .rsplit_once('@')
                .ok_or_else(|| anyhow!("--dump-model expects COMMUNITY@YYYY-MM, got `{d}`"))?;
            Ok((c.to_string(), m.parse::<Month>()?))
        })
        .collect::<Result<_>>()?;
    let config = json!({
        "window_size": cfg.w,
        "prefix_len": cfg.prefix_len,
        "stages": cfg.stages,
        "vocab": cfg.vocabs.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "pronouns": cfg.pronouns,
        "dissim_min_posts": cfg.dissim_min_posts,
        "dump_model": a.dump_model,
    });
    let input = events_input(ws)?;
    let path = input.path.clone();
    ws.run_stage("metrics", &config, &[input], |dir| {
        let ds = io::load_dataset(&path)?;
        let vocabs = metrics::build_vocabularies(&ds, &cfg.vocabs)?;
        fs::create_dir_all(dir.join("vocab"))?;
        for v in &vocabs {
            io::write_lines(&dir.join("vocab").join(format!("{}.txt", v.id())), &v.ranked)?;
        }
        if !dumps.is_empty() {
            fs::create_dir_all(dir.join("models"))?;
        }
        for (community, month) in &dumps {
            let stats = ds
                .month_stats
                .get(community, *month)
                .ok_or_else(|| anyhow!("no posts in {community} during {month}"))?;
            for v in &vocabs {
                let Some(lm) = MonthlyLanguageModel::new(stats, v, Smoothing::None) else {
                    continue;
                };
                let name = format!("{}_{}_{}.csv", v.id(), sanitize(community), month);
                let mut w = csv_writer(&dir.join("models").join(name))?;
                w.write_record(["token", "probability"])?;
                for t in v.ranked.iter().map(String::as_str).chain([RARE]) {
                    w.write_record([t, &lm.prob(t).to_string()])?;
                }
                w.flush()?;
            }
        }
        let rows = metrics::compute_series(&ds, &cfg)?;
        io::write_series(&dir.join("series.csv"), &rows)?;
        eprintln!("metrics: {} series values", rows.len());
        Ok(())
    })?;
    Ok(())
}

pub fn labels(ws: &Workspace, a: &LabelsArgs) -> Result<()> {
    let cfg = LabelConfig {
        sof: io::parse_instant(&a.sof)?,
        half: a.half_days.map_or(HalfRule::Calendar, HalfRule::FixedDays),
        prefix_len: a.prefix_len,
        quartile_scope: match a.quartile_scope {
            ScopeArg::All => QuartileScope::AllEligible,
            ScopeArg::Labeled => QuartileScope::Labeled,
        },
    };
    let config = json!({
        "sof": cfg.sof,
        "half_days": a.half_days,
        "prefix_len": cfg.prefix_len,
        "quartile_scope": format!("{:?}", a.quartile_scope).to_lowercase(),
        "strict": a.strict,
    });
    let input = events_input(ws)?;
    let path = input.path.clone();
    ws.run_stage("labels", &config, &[input], |dir| {
        let ds = io::load_dataset(&path)?;
        if let Some(end) = ds.end_ts {
            if let Err(e) = cfg.check_coverage(end + 1) {
                if a.strict {
                    return Err(e.into());
                }
                eprintln!("warning: {e}");
            }
        }
        let labels = label_users(&ds, &cfg)?;
        io::write_labels(&dir.join("labels.csv"), &labels)?;
        let count = |s: Status| labels.iter().filter(|l| l.status == s).count();
        eprintln!(
            "labels: {} eligible users, {} departing, {} staying",
            labels.len(),
            count(Status::Departing),
            count(Status::Staying)
        );
        Ok(())
    })?;
    Ok(())
}

/// Protocol config file: `key = value` lines, TOML syntax.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolFile {
    train: Option<usize>,
    validation: Option<usize>,
    test: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    tasks: Option<Vec<String>>,
    feature_sets: Option<Vec<String>>,
    sweep_sets: Option<Vec<String>>,
    xs: Option<Vec<usize>>,
    c_grid: Option<Vec<f64>>,
    eps_grid: Option<Vec<f64>>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    shuffle_labels: Option<bool>,
}

fn parse_sets(v: &[String]) -> Result<Vec<FeatureSet>> {
    v.iter().map(|s| Ok(s.parse::<FeatureSet>()?)).collect()
}

fn protocol_config(path: Option<&Path>) -> Result<ProtocolConfig> {
    let f: ProtocolFile = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ProtocolFile::default(),
    };
    let d = ProtocolConfig::default();
    let tasks = match &f.tasks {
        Some(t) => t
            .iter()
            .map(|s| match s.as_str() {
                "departure" => Ok(Task::Departure),
                "activity" => Ok(Task::Activity),
                _ => Err(anyhow!("unknown task `{s}` (departure, activity)")),
            })
            .collect::<Result<_>>()?,
        None => d.tasks,
    };
    Ok(ProtocolConfig {
        train: f.train.unwrap_or(d.train),
        validation: f.validation.unwrap_or(d.validation),
        test: f.test.unwrap_or(d.test),
        trials: f.trials.unwrap_or(d.trials),
        seed: f.seed.unwrap_or(d.seed),
        tasks,
        feature_sets: f.feature_sets.as_deref().map(parse_sets).transpose()?.unwrap_or(d.feature_sets),
        sweep_sets: f.sweep_sets.as_deref().map(parse_sets).transpose()?.unwrap_or(d.sweep_sets),
        xs: f.xs.unwrap_or(d.xs),
        prefix_len: d.prefix_len,
        c_grid: f.c_grid.unwrap_or(d.c_grid),
        eps_grid: f.eps_grid.unwrap_or(d.eps_grid),
        solver: SolverOptions {
            tol: f.tol.unwrap_or(d.solver.tol),
            max_iter: f.max_iter.unwrap_or(d.solver.max_iter),
        },
        shuffle_labels: f.shuffle_labels.unwrap_or(d.shuffle_labels),
    })
}

fn protocol_json(p: &ProtocolConfig) -> serde_json::Value {
    let names = |s: &[FeatureSet]| s.iter().map(|f| f.to_string()).collect::<Vec<_>>();
    json!({
        "train": p.train,
        "validation": p.validation,
        "test": p.test,
        "trials": p.trials,
        "seed": p.seed,
        "tasks": p.tasks.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
        "feature_sets": names(&p.feature_sets),
        "sweep_sets": names(&p.sweep_sets),
        "xs": p.xs,
        "prefix_len": p.prefix_len,
        "c_grid": p.c_grid,
        "eps_grid": p.eps_grid,
        "tol": p.solver.tol,
        "max_iter": p.solver.max_iter,
        "shuffle_labels": p.shuffle_labels,
    })
}

/// `(range, x)` pairs the protocol reads.
fn required_ranges(p: &ProtocolConfig) -> Vec<(RangeKind, usize)> {
    let mut r = vec![(RangeKind::First, p.prefix_len)];
    if !p.sweep_sets.is_empty() {
        for range in [RangeKind::First, RangeKind::Last] {
            for &x in &p.xs {
                if !r.contains(&(range, x)) {
                    r.push((range, x));
                }
            }
        }
    }
    r
}

pub fn features(ws: &Workspace, a: &FeaturesArgs) -> Result<()> {
    let (vocabs, pronouns) = window_config(&a.window)?;
    let fcfg = FeatureConfig {
        w: a.window.window_size,
        prefix_len: a.window.prefix_len,
        argextrema: !a.no_argextrema,
        vocabs,
        pronouns,
    };
    let mut pcfg = protocol_config(a.config.as_deref())?;
    pcfg.prefix_len = fcfg.prefix_len;
    let ranges: Vec<String> = required_ranges(&pcfg).iter().map(|(r, x)| format!("{r}_{x}")).collect();
    let config = json!({
        "window_size": fcfg.w,
        "prefix_len": fcfg.prefix_len,
        "argextrema": fcfg.argextrema,
        "vocab": fcfg.vocabs.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "pronouns": fcfg.pronouns,
        "ranges": ranges,
    });
    let events = events_input(ws)?;
    let labels = ws.require("labels", "labels.csv")?;
    let (events_path, labels_path) = (events.path.clone(), labels.path.clone());
    ws.run_stage("features", &config, &[events, labels], |dir| {
        let ds = io::load_dataset(&events_path)?;
        let labels = io::read_labels(&labels_path)?;
        let inst = build_instances(&ds, &labels, &fcfg, &pcfg)?;
        let departing: BTreeMap<&str, bool> =
            inst.users.iter().map(String::as_str).zip(inst.departing.iter().copied()).collect();
        let target: BTreeMap<&str, f64> =
            inst.users.iter().map(String::as_str).zip(inst.target.iter().copied()).collect();
        io::write_matrices(dir, &departing, &target, &inst.matrices)?;
        eprintln!("features: {} users, {} matrices", inst.users.len(), inst.matrices.len());
        Ok(())
    })?;
    Ok(())
}

pub fn predict(ws: &Workspace, a: &PredictArgs) -> Result<()> {
    let schema = ws.require("features", "schema.csv")?;
    let feat_manifest = ws.manifest("features").ok_or_else(|| anyhow!("run `wander features` first"))?;
    let mut pcfg = protocol_config(a.config.as_deref())?;
    pcfg.prefix_len = feat_manifest.config["prefix_len"]
        .as_u64()
        .ok_or_else(|| anyhow!("features manifest lacks prefix_len; rerun `wander features`"))? as usize;
    if let Some(s) = a.seed {
        pcfg.seed = s;
    }
    if let Some(t) = a.trials {
        pcfg.trials = t;
    }
    pcfg.shuffle_labels |= a.shuffle_labels;
    let feature_dir = ws.stage_dir("features");
    let mut inputs = vec![schema];
    for (range, x) in required_ranges(&pcfg) {
        let file = io::matrix_file(range, x);
        if !feature_dir.join(&file).is_file() {
            bail!("features has no matrix for {range} {x} posts; rerun `wander features` with the same --config");
        }
        inputs.push(ws.require("features", &file)?);
    }
    ws.run_stage("predict", &protocol_json(&pcfg), &inputs, |dir| {
        let m = io::read_matrices(&feature_dir)?;
        let inst = wander_core::prediction::Instances {
            users: m.users,
            departing: m.departing,
            target: m.target,
            matrices: m.matrices,
        };
        let res = run_trial_protocol(&inst, &pcfg)?;
        let mut w = csv_writer(&dir.join("results.csv"))?;
        for r in &res.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv_writer(&dir.join("summary.csv"))?;
        for r in &res.summary {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv_writer(&dir.join("wilcoxon.csv"))?;
        for r in &res.wilcoxon {
            w.serialize(r)?;
        }
        w.flush()?;
        io::write_lines(&dir.join("warnings.txt"), &res.warnings)?;
        for s in res.summary.iter().filter(|s| s.range == RangeKind::First && s.x == pcfg.prefix_len) {
            eprintln!("{} {:<9} {} = {:.3} ± {:.3}", s.task, s.feature_set, s.metric, s.mean, s.stderr);
        }
        Ok(())
    })?;
    Ok(())
}

pub fn style(ws: &Workspace, a: &StyleArgs) -> Result<()> {
    let kinds = parse_vocabs(&a.vocab)?;
    let tcfg = TripleConfig {
        min_posts: a.min_posts,
        cap_per_user: a.cap_per_user,
        seed: a.seed,
    };
    let fcfg = StyleFeatureConfig {
        window: a.style_window,
        exclude_own: a.exclude_own,
    };
    let ecfg = StyleExperimentConfig {
        train: a.train,
        dev: a.dev,
        test: a.test,
        splits: a.splits,
        seed: a.seed,
        ..StyleExperimentConfig::default()
    };
    let config = json!({
        "vocab": kinds.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "min_posts": a.min_posts,
        "cap_per_user": a.cap_per_user,
        "exclude_own": a.exclude_own,
        "same_community": a.same_community,
        "style_window": a.style_window,
        "train": a.train,
        "dev": a.dev,
        "test": a.test,
        "splits": a.splits,
        "seed": a.seed,
    });
    let input = events_input(ws)?;
    let path = input.path.clone();
    ws.run_stage("style", &config, &[input], |dir| {
        let ds = io::load_dataset(&path)?;
        let triples = if a.same_community {
            build_same_community_triples(ds.trajectories.values(), &tcfg)
        } else {
            build_triples(ds.trajectories.values(), &tcfg)
        };
        let mut w = csv_writer(&dir.join("triples.csv"))?;
        w.write_record(["user", "community_a", "community_b", "swapped"])?;
        for t in &triples {
            w.write_record([&t.user, &t.community_a, &t.community_b, &(t.swapped as u8).to_string()])?;
        }
        w.flush()?;
        let words = ds.month_stats.global_token_counts();
        let tags = ds.month_stats.global_pos_counts();
        let vocabs = kinds
            .iter()
            .map(|&k| build_vocabulary(&words, &tags, k))
            .collect::<wander_core::Result<Vec<_>>>()?;
        let res = run_style_experiment(&ds, &triples, &vocabs, &fcfg, &ecfg)?;
        let mut w = csv_writer(&dir.join("accuracy.csv"))?;
        for r in &res.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv_writer(&dir.join("summary.csv"))?;
        for r in &res.summary {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv_writer(&dir.join("dropped.csv"))?;
        w.write_record(["vocabulary", "reason"])?;
        for (v, reasons) in &res.dropped {
            for r in reasons {
                w.write_record([v, r])?;
            }
        }
        w.flush()?;
        eprintln!("style: {} triples", triples.len());
        for s in &res.summary {
            eprintln!("{:<8} accuracy {:.3} ± {:.3}", s.vocabulary, s.mean, s.stderr);
        }
        Ok(())
    })?;
    Ok(())
}

pub fn singlemulti(ws: &Workspace, _a: &SingleMultiArgs) -> Result<()> {
    let input = events_input(ws)?;
    let path = input.path.clone();
    ws.run_stage("singlemulti", &json!({ "threshold": "median" }), &[input], |dir| {
        let ds = io::load_dataset(&path)?;
        if !ds.has_feedback {
            bail!("the event log carries no feedback values");
        }
        let q = QuantileIndex::build(&ds.month_stats);
        let r = first_post_feedback_comparison(ds.trajectories.values(), &q)?;
        let mut w = csv_writer(&dir.join("singlemulti.csv"))?;
        w.write_record(["user", "side", "mean_indicator"])?;
        for p in &r.pairs {
            w.write_record([&p.user, "single", &p.single.to_string()])?;
            w.write_record([&p.user, "multi", &p.multi.to_string()])?;
        }
        w.flush()?;
        let mut w = csv_writer(&dir.join("summary.csv"))?;
        w.write_record(["n", "single_mean", "multi_mean", "mean_diff", "t", "p_value", "zero_variance"])?;
        let t = r.test.as_ref();
        w.write_record([
            r.pairs.len().to_string(),
            r.single_mean.to_string(),
            r.multi_mean.to_string(),
            io::fmt_opt(t.map(|t| t.mean_diff)),
            io::fmt_opt(t.map(|t| t.t)),
            io::fmt_opt(t.map(|t| t.p_value)),
            t.map(|t| t.zero_variance.to_string()).unwrap_or_default(),
        ])?;
        w.flush()?;
        eprintln!(
            "singlemulti: {} users, single {:.3}, multi {:.3}, p {}",
            r.pairs.len(),
            r.single_mean,
            r.multi_mean,
            io::fmt_opt(t.map(|t| t.p_value))
        );
        Ok(())
    })?;
    Ok(())
}

pub fn synth(ws: &Workspace, a: &SynthArgs) -> Result<()> {
    let mut spec: PopulationSpec = match &a.spec {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => PopulationSpec::default(),
    };
    if let Some(u) = a.users {
        spec.users = u;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    ws.run_stage("synth", &spec, &[], |dir| {
        let out = generate(&spec)?;
        io::save_events(&dir.join(EVENTS), &out.events)?;
        let mut w = csv_writer(&dir.join("truth.csv"))?;
        for t in &out.truth {
            w.serialize(t)?;
        }
        w.flush()?;
        fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
        eprintln!("synth: {} events, {} focal users", out.events.len(), out.truth.len());
        Ok(())
    })?;
    Ok(())
}

fn read_groups(path: &Path, column: &str) -> Result<BTreeMap<String, String>> {
    let mut r = io::csv_reader(path)?;
    let headers = r.headers()?.clone();
    let user = headers.iter().position(|h| h == "user").ok_or_else(|| anyhow!("{} has no user column", path.display()))?;
    let col = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| anyhow!("{} has no {column} column", path.display()))?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        out.insert(rec[user].to_string(), rec[col].to_string());
    }
    Ok(out)
}

pub fn report(ws: &Workspace, a: &ReportArgs) -> Result<()> {
    let series = ws.require("metrics", "series.csv")?;
    let labels = ws.optional("labels", "labels.csv");
    let truth_path: Option<PathBuf> = a.truth.clone().or_else(|| ws.optional("synth", "truth.csv").map(|i| i.path));
    let singlemulti = ws.optional("singlemulti", "singlemulti.csv");

    let groupings: Vec<GroupBy> = if a.group_by.is_empty() {
        let mut g = Vec::new();
        if labels.is_some() {
            g.extend([GroupBy::Status, GroupBy::Quartile]);
        }
        if truth_path.is_some() {
            g.push(GroupBy::Archetype);
        }
        if g.is_empty() {
            bail!("nothing to group by; run `wander labels` (or `wander synth`) first");
        }
        g
    } else {
        a.group_by.clone()
    };
    let mut inputs = vec![series];
    let mut group_maps: Vec<(&str, BTreeMap<String, String>)> = Vec::new();
    for g in &groupings {
        match g {
            GroupBy::Status | GroupBy::Quartile => {
                let l = labels
                    .as_ref()
                    .ok_or_else(|| anyhow!("missing labels/labels.csv; run `wander labels` first"))?;
                let all = io::read_labels(&l.path)?;
                let map = if *g == GroupBy::Status {
                    let m = all
                        .iter()
                        .filter(|l| l.status != Status::Neither)
                        .map(|l| (l.user.clone(), l.status.to_string()))
                        .collect();
                    ("status", m)
                } else {
                    let m = all
                        .iter()
                        .filter(|l| l.quartile > 0)
                        .map(|l| (l.user.clone(), format!("q{}", l.quartile)))
                        .collect();
                    ("quartile", m)
                };
                group_maps.push(map);
            }
            GroupBy::Archetype => {
                let p = truth_path
                    .as_ref()
                    .ok_or_else(|| anyhow!("no truth CSV; pass --truth or run `wander synth` first"))?;
                group_maps.push(("archetype", read_groups(p, "archetype")?));
            }
        }
    }
    if let Some(l) = labels {
        inputs.push(l);
    }
    if let Some(p) = &truth_path {
        inputs.push(Input {
            name: "truth".into(),
            path: p.clone(),
        });
    }
    let sm_path = singlemulti.as_ref().map(|s| s.path.clone());
    if let Some(s) = singlemulti {
        inputs.push(s);
    }
    let series_path = inputs[0].path.clone();
    let config = json!({ "group_by": group_maps.iter().map(|(n, _)| *n).collect::<Vec<_>>() });
    ws.run_stage("report", &config, &inputs, |dir| {
        let rows: Vec<SeriesRow> = io::read_series(&series_path)?;
        for (name, groups) in &group_maps {
            for kind in [XKind::Window, XKind::Stage, XKind::Post] {
                let curves = metrics::curves(&rows, kind, groups);
                let mut w = csv_writer(&dir.join(format!("curves_{kind}_by_{name}.csv")))?;
                for c in &curves {
                    w.serialize(c)?;
                }
                w.flush()?;
            }
            if let Some(p) = &sm_path {
                single_multi_by_group(p, groups, &dir.join(format!("singlemulti_by_{name}.csv")))?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

/// Mean first-post indicator per group and side.
fn single_multi_by_group(path: &Path, groups: &BTreeMap<String, String>, out: &Path) -> Result<()> {
    let mut acc: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for rec in io::csv_reader(path)?.records() {
        let rec = rec?;
        if let Some(g) = groups.get(&rec[0]) {
            acc.entry((g.clone(), rec[1].to_string())).or_default().push(rec[2].parse()?);
        }
    }
    let mut w = csv_writer(out)?;
    w.write_record(["group", "side", "mean", "stderr", "n"])?;
    for ((g, side), v) in &acc {
        let (mean, se) = mean_stderr(v);
        w.write_record([g.clone(), side.clone(), mean.to_string(), se.to_string(), v.len().to_string()])?;
    }
    w.flush()?;
    Ok(())
}
