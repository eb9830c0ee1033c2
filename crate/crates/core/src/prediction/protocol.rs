//! Randomized train/validation/test trials over labeled users, with
//! feature-family ablations, first-x/last-x sweeps and paired significance
//! tests between feature sets.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::features::{FeatureMatrix, FeatureSet, Family, RangeKind};
use super::linear::{
    class_prior_f1, evaluate_f1, evaluate_rmse, train_logistic, train_svr, Matrix, MeanImputer, MinMaxScaler,
    SolverOptions, DEFAULT_C_GRID, DEFAULT_EPS_GRID,
};
use crate::error::{Error, Result};
use crate::framework::mean_stderr;
use crate::stats::wilcoxon_signed_rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Departing (positive) vs staying, scored by F1.
    Departure,
    /// `log2` of future post count, scored by RMSE.
    Activity,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Departure => "departure",
            Task::Activity => "activity",
        })
    }
}

impl Task {
    pub fn metric(self) -> &'static str {
        match self {
            Task::Departure => "f1",
            Task::Activity => "rmse",
        }
    }
}

/// Regression target: `log2(count)`, with `log2(1 + count)` for a zero
/// count.
pub fn activity_target(future_post_count: usize) -> f64 {
    if future_post_count == 0 {
        (1.0f64).log2()
    } else {
        (future_post_count as f64).log2()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub train: usize,
    /// Carved from the training draw.
    pub validation: usize,
    pub test: usize,
    pub trials: usize,
    pub seed: u64,
    pub tasks: Vec<Task>,
    /// Compared at the full prefix on the first range.
    pub feature_sets: Vec<FeatureSet>,
    /// Sets swept over every `(range, x)`.
    pub sweep_sets: Vec<FeatureSet>,
    pub xs: Vec<usize>,
    pub prefix_len: usize,
    pub c_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub solver: SolverOptions,
    /// Permute training labels (a null control).
    pub shuffle_labels: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            train: 2000,
            validation: 500,
            test: 500,
            trials: 10,
            seed: 0,
            tasks: vec![Task::Departure, Task::Activity],
            feature_sets: FeatureSet::standard(),
            sweep_sets: vec![FeatureSet::All, FeatureSet::Only(Family::Timegap)],
            xs: vec![10, 20, 30, 40, 50],
            prefix_len: 50,
            c_grid: DEFAULT_C_GRID.to_vec(),
            eps_grid: DEFAULT_EPS_GRID.to_vec(),
            solver: SolverOptions::default(),
            shuffle_labels: false,
        }
    }
}

/// Users eligible for the tasks, aligned with the rows of every feature
/// matrix.
#[derive(Debug, Clone)]
pub struct Instances {
    pub users: Vec<String>,
    pub departing: Vec<bool>,
    pub target: Vec<f64>,
    pub matrices: Vec<FeatureMatrix>,
}

impl Instances {
    fn matrix(&self, range: RangeKind, x: usize) -> Option<&FeatureMatrix> {
        self.matrices.iter().find(|m| m.range == range && m.x == x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub trial: usize,
    pub task: Task,
    pub feature_set: String,
    pub range: RangeKind,
    pub x: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub task: Task,
    pub feature_set: String,
    pub range: RangeKind,
    pub x: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WilcoxonRow {
    pub task: Task,
    pub range: RangeKind,
    pub x: usize,
    pub set_a: String,
    pub set_b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResults {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub wilcoxon: Vec<WilcoxonRow>,
    /// Fits that hit the iteration cap.
    pub warnings: Vec<String>,
}

/// Name used for the analytic class-prior baseline (departure) and the
/// predict-the-training-mean baseline (activity).
pub fn baseline_name(task: Task) -> &'static str {
    match task {
        Task::Departure => "prior",
        Task::Activity => "average",
    }
}

fn trial_seed(master: u64, trial: usize) -> u64 {
    // splitmix64 step so neighbouring trials get unrelated streams
    let mut z = master.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Split {
    fit: Vec<usize>,
    val: Vec<usize>,
    train: Vec<usize>,
    test: Vec<usize>,
    departing: Vec<bool>,
}

fn draw(inst: &Instances, cfg: &ProtocolConfig, trial: usize) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, trial));
    let mut idx: Vec<usize> = (0..inst.users.len()).collect();
    idx.shuffle(&mut rng);
    let train: Vec<usize> = idx[..cfg.train].to_vec();
    let test: Vec<usize> = idx[cfg.train..cfg.train + cfg.test].to_vec();
    let cut = cfg.train - cfg.validation;
    let mut departing = inst.departing.clone();
    if cfg.shuffle_labels {
        let mut labels: Vec<bool> = train.iter().map(|&i| inst.departing[i]).collect();
        labels.shuffle(&mut rng);
        for (&i, l) in train.iter().zip(labels) {
            departing[i] = l;
        }
    }
    Split {
        fit: train[..cut].to_vec(),
        val: train[cut..].to_vec(),
        train,
        test,
        departing,
    }
}

struct Prepared {
    x_fit: Matrix,
    x_eval: Matrix,
}

fn prepare(m: &FeatureMatrix, set: FeatureSet, fit: &[usize], eval: &[usize]) -> Result<Prepared> {
    let fit_rows = m.select(set, fit);
    let eval_rows = m.select(set, eval);
    let imputer = MeanImputer::fit(&fit_rows);
    let x_fit = imputer.transform(&fit_rows)?;
    let scaler = MinMaxScaler::fit(&x_fit)?;
    Ok(Prepared {
        x_fit: scaler.transform(&x_fit),
        x_eval: scaler.transform(&imputer.transform(&eval_rows)?),
    })
}

struct Scored {
    value: f64,
    warnings: Vec<String>,
}

fn run_departure(
    m: &FeatureMatrix,
    set: FeatureSet,
    split: &Split,
    cfg: &ProtocolConfig,
    truth: &[bool],
) -> Result<Scored> {
    let labels = |idx: &[usize]| idx.iter().map(|&i| split.departing[i]).collect::<Vec<_>>();
    let mut warnings = Vec::new();
    let p = prepare(m, set, &split.fit, &split.val)?;
    let val_truth = labels(&split.val);
    let mut best: Option<(f64, f64)> = None;
    for &c in &cfg.c_grid {
        let model = train_logistic(&p.x_fit, &labels(&split.fit), c, &cfg.solver)?;
        if !model.converged {
            warnings.push(format!("departure/{set}: C={c} stopped at the iteration cap"));
        }
        let f1 = evaluate_f1(&model.predict_labels(&p.x_eval), &val_truth);
        if best.is_none_or(|(b, _)| f1 > b) {
            best = Some((f1, c));
        }
    }
    let (_, c) = best.ok_or_else(|| Error::InvalidArgument("empty regularization grid".into()))?;
    let p = prepare(m, set, &split.train, &split.test)?;
    let model = train_logistic(&p.x_fit, &labels(&split.train), c, &cfg.solver)?;
    if !model.converged {
        warnings.push(format!("departure/{set}: refit with C={c} stopped at the iteration cap"));
    }
    let test_truth: Vec<bool> = split.test.iter().map(|&i| truth[i]).collect();
    Ok(Scored {
        value: evaluate_f1(&model.predict_labels(&p.x_eval), &test_truth),
        warnings,
    })
}

fn run_activity(m: &FeatureMatrix, set: FeatureSet, split: &Split, cfg: &ProtocolConfig, y: &[f64]) -> Result<Scored> {
    let targets = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
    let mut warnings = Vec::new();
    let p = prepare(m, set, &split.fit, &split.val)?;
    let y_val = targets(&split.val);
    let mut best: Option<(f64, f64, f64)> = None;
    for &c in &cfg.c_grid {
        for &eps in &cfg.eps_grid {
            let model = train_svr(&p.x_fit, &targets(&split.fit), c, eps, &cfg.solver)?;
            if !model.converged {
                warnings.push(format!("activity/{set}: C={c} eps={eps} stopped at the iteration cap"));
            }
            let rmse = evaluate_rmse(&model.decisions(&p.x_eval), &y_val);
            if best.is_none_or(|(b, _, _)| rmse < b) {
                best = Some((rmse, c, eps));
            }
        }
    }
    let (_, c, eps) = best.ok_or_else(|| Error::InvalidArgument("empty regularization grid".into()))?;
    let p = prepare(m, set, &split.train, &split.test)?;
    let model = train_svr(&p.x_fit, &targets(&split.train), c, eps, &cfg.solver)?;
    if !model.converged {
        warnings.push(format!("activity/{set}: refit stopped at the iteration cap"));
    }
    Ok(Scored {
        value: evaluate_rmse(&model.decisions(&p.x_eval), &targets(&split.test)),
        warnings,
    })
}

/// Every `(set, range, x)` evaluated per task, in output order.
fn configurations(cfg: &ProtocolConfig) -> Vec<(FeatureSet, RangeKind, usize)> {
    let mut out = Vec::new();
    for &set in &cfg.feature_sets {
        out.push((set, RangeKind::First, cfg.prefix_len));
    }
    for &set in &cfg.sweep_sets {
        for range in [RangeKind::First, RangeKind::Last] {
            for &x in &cfg.xs {
                if !out.contains(&(set, range, x)) {
                    out.push((set, range, x));
                }
            }
        }
    }
    out
}

fn run_trial(inst: &Instances, cfg: &ProtocolConfig, trial: usize) -> Result<(Vec<ResultRow>, Vec<String>)> {
    let split = draw(inst, cfg, trial);
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &task in &cfg.tasks {
        for (set, range, x) in configurations(cfg) {
            let m = inst.matrix(range, x).ok_or_else(|| {
                Error::InvalidArgument(format!("no feature matrix for range {range} x={x}"))
            })?;
            if let FeatureSet::Only(f) = set {
                if !m.schema.has_family(f) {
                    continue;
                }
            }
            let scored = match task {
                Task::Departure => run_departure(m, set, &split, cfg, &inst.departing)?,
                Task::Activity => run_activity(m, set, &split, cfg, &inst.target)?,
            };
            warnings.extend(scored.warnings.into_iter().map(|w| format!("trial {trial}: {w}")));
            rows.push(ResultRow {
                trial,
                task,
                feature_set: set.to_string(),
                range,
                x,
                metric: task.metric().into(),
                value: scored.value,
            });
        }
        let baseline = match task {
            Task::Departure => {
                let rate = |idx: &[usize], labels: &[bool]| {
                    idx.iter().filter(|&&i| labels[i]).count() as f64 / idx.len() as f64
                };
                class_prior_f1(rate(&split.train, &split.departing), rate(&split.test, &inst.departing))
            }
            Task::Activity => {
                let mean = split.train.iter().map(|&i| inst.target[i]).sum::<f64>() / split.train.len() as f64;
                let y: Vec<f64> = split.test.iter().map(|&i| inst.target[i]).collect();
                evaluate_rmse(&vec![mean; y.len()], &y)
            }
        };
        rows.push(ResultRow {
            trial,
            task,
            feature_set: baseline_name(task).into(),
            range: RangeKind::First,
            x: cfg.prefix_len,
            metric: task.metric().into(),
            value: baseline,
        });
    }
    Ok((rows, warnings))
}

pub fn validate(inst: &Instances, cfg: &ProtocolConfig) -> Result<()> {
    if cfg.validation == 0 || cfg.validation >= cfg.train {
        return Err(Error::InvalidArgument(format!(
            "validation size {} must be between 1 and the training size {}",
            cfg.validation, cfg.train
        )));
    }
    if cfg.test == 0 || cfg.trials == 0 {
        return Err(Error::InvalidArgument("test size and trial count must be positive".into()));
    }
    let needed = cfg.train + cfg.test;
    if inst.users.len() < needed {
        return Err(Error::InsufficientUsers {
            needed,
            available: inst.users.len(),
        });
    }
    if inst.departing.len() != inst.users.len() || inst.target.len() != inst.users.len() {
        return Err(Error::InvalidArgument("instance columns differ in length".into()));
    }
    Ok(())
}

/// Runs all trials (in parallel when enabled) and reduces them in trial
/// order.
pub fn run_trial_protocol(inst: &Instances, cfg: &ProtocolConfig) -> Result<TrialResults> {
    validate(inst, cfg)?;
    let trials: Vec<usize> = (0..cfg.trials).collect();
    let outcomes = crate::par::map(&trials, |&t| run_trial(inst, cfg, t));
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for o in outcomes {
        let (r, w) = o?;
        rows.extend(r);
        warnings.extend(w);
    }
    let summary = summarize(&rows);
    let wilcoxon = pairwise_wilcoxon(&rows)?;
    Ok(TrialResults {
        rows,
        summary,
        wilcoxon,
        warnings,
    })
}

type Key = (Task, String, RangeKind, usize);

fn group(rows: &[ResultRow]) -> BTreeMap<Key, Vec<(usize, f64)>> {
    let mut g: BTreeMap<Key, Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        g.entry((r.task, r.feature_set.clone(), r.range, r.x))
            .or_default()
            .push((r.trial, r.value));
    }
    for v in g.values_mut() {
        v.sort_by_key(|(t, _)| *t);
    }
    g
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    group(rows)
        .into_iter()
        .map(|((task, set, range, x), vals)| {
            let v: Vec<f64> = vals.iter().map(|(_, v)| *v).collect();
            let (mean, stderr) = mean_stderr(&v);
            SummaryRow {
                task,
                feature_set: set,
                range,
                x,
                metric: task.metric().into(),
                mean,
                stderr,
                n: v.len(),
            }
        })
        .collect()
}

/// Paired tests between every two feature sets evaluated at the same
/// `(task, range, x)`, pairing by trial.
pub fn pairwise_wilcoxon(rows: &[ResultRow]) -> Result<Vec<WilcoxonRow>> {
    let g = group(rows);
    let mut by_cell: BTreeMap<(Task, RangeKind, usize), Vec<(&String, &Vec<(usize, f64)>)>> = BTreeMap::new();
    for ((task, set, range, x), vals) in &g {
        by_cell.entry((*task, *range, *x)).or_default().push((set, vals));
    }
    let mut out = Vec::new();
    for ((task, range, x), sets) in by_cell {
        for (i, (a, va)) in sets.iter().enumerate() {
            for (b, vb) in &sets[i + 1..] {
                if va.len() != vb.len() || va.iter().zip(vb.iter()).any(|(p, q)| p.0 != q.0) {
                    continue;
                }
                let xa: Vec<f64> = va.iter().map(|p| p.1).collect();
                let xb: Vec<f64> = vb.iter().map(|p| p.1).collect();
                let w = wilcoxon_signed_rank(&xa, &xb)?;
                out.push(WilcoxonRow {
                    task,
                    range,
                    x,
                    set_a: a.to_string(),
                    set_b: b.to_string(),
                    mean_a: mean_stderr(&xa).0,
                    mean_b: mean_stderr(&xb).0,
                    statistic: w.statistic,
                    p_value: w.p_value,
                });
            }
        }
    }
    Ok(out)
}
