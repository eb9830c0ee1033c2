//! Windows, life stages, and the two views (fixed prefix and full life)
//! under which per-window functions are tracked.
//!
//! Post indices are 1-based in the public API, matching how windows are
//! usually described: with `w = 10`, window 6 covers posts 51 through 60.
//! Trailing posts that do not fill a whole window are never used.

use std::collections::BTreeMap;
use std::ops::{Range, RangeInclusive};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{PostEvent, UserTrajectory};

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_PREFIX: usize = 50;
pub const DEFAULT_STAGES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    FixedPrefix { prefix_len: usize },
    FullLife { stages: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub w: usize,
    pub view: View,
}

impl WindowSpec {
    pub fn fixed_prefix(w: usize, prefix_len: usize) -> Result<Self> {
        let spec = Self {
            w,
            view: View::FixedPrefix { prefix_len },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn full_life(w: usize, stages: usize) -> Result<Self> {
        let spec = Self {
            w,
            view: View::FullLife { stages },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w == 0 {
            return Err(Error::InvalidArgument("window size must be at least 1".into()));
        }
        match self.view {
            View::FixedPrefix { prefix_len } if prefix_len == 0 || prefix_len % self.w != 0 => Err(
                Error::InvalidArgument(format!("prefix length {prefix_len} is not a positive multiple of w={}", self.w)),
            ),
            View::FullLife { stages: 0 } => Err(Error::InvalidArgument("need at least one stage".into())),
            _ => Ok(()),
        }
    }

    /// The slice of the trajectory this view looks at.
    pub fn visible<'a>(&self, events: &'a [PostEvent]) -> &'a [PostEvent] {
        match self.view {
            View::FixedPrefix { prefix_len } => &events[..events.len().min(prefix_len)],
            View::FullLife { .. } => events,
        }
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            w: DEFAULT_WINDOW,
            view: View::FixedPrefix {
                prefix_len: DEFAULT_PREFIX,
            },
        }
    }
}

/// The `⌊T/w⌋` complete windows of a `T`-post trajectory as 1-based
/// inclusive index ranges.
pub fn windows(t: usize, w: usize) -> Vec<RangeInclusive<usize>> {
    assert!(w >= 1, "window size must be at least 1");
    (0..t / w).map(|i| i * w + 1..=(i + 1) * w).collect()
}

/// Same windows as 0-based half-open ranges, for slicing.
pub fn window_ranges(t: usize, w: usize) -> impl Iterator<Item = Range<usize>> {
    assert!(w >= 1, "window size must be at least 1");
    (0..t / w).map(move |i| i * w..(i + 1) * w)
}

/// Stage (1-based) of each of `n` windows. Stage `i` holds the windows with
/// indices in `(⌊(i-1)n/s⌋, ⌊in/s⌋]`.
pub fn stages(n: usize, s: usize) -> Vec<usize> {
    assert!(s >= 1, "need at least one stage");
    let mut out = Vec::with_capacity(n);
    for stage in 1..=s {
        let lo = (stage - 1) * n / s;
        let hi = stage * n / s;
        out.extend(std::iter::repeat_n(stage, hi - lo));
    }
    out
}

/// Something evaluated on one window of a trajectory. `events` is the whole
/// (visible) trajectory so per-post functions can look backwards.
pub trait WindowFunction: Sync {
    fn eval(&self, events: &[PostEvent], window: Range<usize>) -> Option<f64>;
}

/// Defined directly on the window's posts.
pub struct PerWindow<F>(pub F);

impl<F> WindowFunction for PerWindow<F>
where
    F: Fn(&[PostEvent]) -> Option<f64> + Sync,
{
    fn eval(&self, events: &[PostEvent], window: Range<usize>) -> Option<f64> {
        (self.0)(&events[window])
    }
}

/// Induced by a per-post function `f(events, t)` (0-based `t`), averaged
/// over the posts where it is defined.
pub struct PerPost<F>(pub F);

impl<F> WindowFunction for PerPost<F>
where
    F: Fn(&[PostEvent], usize) -> Option<f64> + Sync,
{
    fn eval(&self, events: &[PostEvent], window: Range<usize>) -> Option<f64> {
        mean_defined(window.map(|t| (self.0)(events, t)))
    }
}

/// Mean over the `Some` values; `None` if there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One value per window; `None` marks a window where the function is
/// undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSeries {
    pub user: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSeries {
    pub user: String,
    pub values: Vec<Option<f64>>,
}

pub fn eval_windows(events: &[PostEvent], f: &dyn WindowFunction, w: usize) -> Vec<Option<f64>> {
    window_ranges(events.len(), w).map(|r| f.eval(events, r)).collect()
}

/// Evaluates `f` on every window visible under `spec`. In the full-life
/// view this is the per-window series that [`eval_stage_view`] condenses.
pub fn eval_window_function(traj: &UserTrajectory, f: &dyn WindowFunction, spec: &WindowSpec) -> WindowSeries {
    WindowSeries {
        user: traj.user.clone(),
        values: eval_windows(spec.visible(&traj.events), f, spec.w),
    }
}

/// Per-stage mean of the defined window values.
pub fn eval_stage_view(series: &WindowSeries, s: usize) -> StageSeries {
    let assignment = stages(series.values.len(), s);
    let mut buckets: Vec<Vec<Option<f64>>> = vec![Vec::new(); s];
    for (v, stage) in series.values.iter().zip(assignment) {
        buckets[stage - 1].push(*v);
    }
    StageSeries {
        user: series.user.clone(),
        values: buckets.into_iter().map(mean_defined).collect(),
    }
}

/// Series under either view: window values for the fixed prefix, stage
/// means for the full life.
pub fn eval_view(traj: &UserTrajectory, f: &dyn WindowFunction, spec: &WindowSpec) -> Vec<Option<f64>> {
    let series = eval_window_function(traj, f, spec);
    match spec.view {
        View::FixedPrefix { .. } => series.values,
        View::FullLife { stages } => eval_stage_view(&series, stages).values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub group: String,
    pub x: usize,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Sample mean and standard error (`sd / √n`, 0 when `n = 1`).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-group, per-x mean and standard error over users with a defined
/// value at x. Input is reduced in user order, so the floating-point result
/// does not depend on how it was produced. Groups and x values with no
/// users are omitted.
pub fn population_curve<'a, I>(series: I) -> Vec<CurvePoint>
where
    I: IntoIterator<Item = (&'a str, &'a str, &'a [Option<f64>])>,
{
    let mut rows: Vec<(&str, &str, &[Option<f64>])> = series.into_iter().collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut groups: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for (_, group, values) in rows {
        let g = groups.entry(group).or_default();
        for (i, v) in values.iter().enumerate() {
            if let Some(v) = v {
                g.entry(i + 1).or_default().push(*v);
            }
        }
    }
    groups
        .into_iter()
        .flat_map(|(group, xs)| {
            xs.into_iter().map(move |(x, vals)| {
                let (mean, stderr) = mean_stderr(&vals);
                CurvePoint {
                    group: group.to_string(),
                    x,
                    mean,
                    stderr,
                    n: vals.len(),
                }
            })
        })
        .collect()
}
