//! Dense linear models trained by truncated Newton (Newton-CG): weighted
//! L2-regularized logistic regression and L2-loss epsilon-insensitive
//! support vector regression. The bias is not regularized.

use crate::error::{Error, Result};

pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_EPS_GRID: [f64; 2] = [0.01, 0.1];
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Per-feature affine map sending the training minimum to 0 and maximum to
/// 1. Constant features map to 0; nothing is clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows == 0 {
            return Err(Error::InvalidArgument("cannot fit a scaler on no rows".into()));
        }
        let mut min = vec![f64::INFINITY; x.cols];
        let mut max = vec![f64::NEG_INFINITY; x.cols];
        for i in 0..x.rows {
            for (j, &v) in x.row(i).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let range = min.iter().zip(&max).map(|(lo, hi)| hi - lo).collect();
        Ok(Self { min, range })
    }

    pub fn apply(&self, v: f64, j: usize) -> f64 {
        if self.range[j] > 0.0 {
            (v - self.min[j]) / self.range[j]
        } else {
            0.0
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..x.rows {
            for j in 0..x.cols {
                out.data[i * x.cols + j] = self.apply(x.data[i * x.cols + j], j);
            }
        }
        out
    }
}

/// Fills missing values with the training mean and appends a 0/1 indicator
/// column for every feature that had a missing value in training.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanImputer {
    pub means: Vec<f64>,
    /// Columns that get an indicator, in order.
    pub flagged: Vec<usize>,
}

impl MeanImputer {
    pub fn fit(rows: &[Vec<Option<f64>>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let mut sums = vec![0.0; d];
        let mut counts = vec![0usize; d];
        for r in rows {
            for (j, v) in r.iter().enumerate() {
                if let Some(v) = v {
                    sums[j] += v;
                    counts[j] += 1;
                }
            }
        }
        let means = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        let flagged = (0..d).filter(|&j| counts[j] < rows.len()).collect();
        Self { means, flagged }
    }

    pub fn output_len(&self) -> usize {
        self.means.len() + self.flagged.len()
    }

    pub fn transform_row(&self, row: &[Option<f64>]) -> Vec<f64> {
        let mut out: Vec<f64> = row.iter().zip(&self.means).map(|(v, m)| v.unwrap_or(*m)).collect();
        out.extend(self.flagged.iter().map(|&j| if row[j].is_none() { 1.0 } else { 0.0 }));
        out
    }

    pub fn transform(&self, rows: &[Vec<Option<f64>>]) -> Result<Matrix> {
        Matrix::from_rows(&rows.iter().map(|r| self.transform_row(r)).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; the weights are the best
    /// iterate found.
    pub converged: bool,
    pub objective: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn decisions(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows).map(|i| self.decision(x.row(i))).collect()
    }

    /// Positive class when the decision value is strictly positive.
    pub fn predict_labels(&self, x: &Matrix) -> Vec<bool> {
        self.decisions(x).into_iter().map(|s| s > 0.0).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Loss {
    /// Labels in {−1, +1}.
    Logistic,
    SquaredEpsInsensitive { eps: f64 },
}

/// `½‖w‖² + Σ cᵢ ℓ(yᵢ, w·xᵢ + b)`.
struct Problem<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    c: Vec<f64>,
    loss: Loss,
    fit_bias: bool,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.x.cols + 1
    }

    fn margins(&self, theta: &[f64]) -> Vec<f64> {
        let (w, b) = theta.split_at(self.x.cols);
        (0..self.x.rows).map(|i| dot(w, self.x.row(i)) + b[0]).collect()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let (w, _) = theta.split_at(self.x.cols);
        let z = self.margins(theta);
        let mut f = 0.5 * dot(w, w);
        for i in 0..self.x.rows {
            f += self.c[i]
                * match self.loss {
                    Loss::Logistic => log1p_exp(-self.y[i] * z[i]),
                    Loss::SquaredEpsInsensitive { eps } => {
                        let r = ((z[i] - self.y[i]).abs() - eps).max(0.0);
                        r * r
                    }
                };
        }
        f
    }

    /// Gradient and the per-sample curvature used by Hessian-vector products.
    fn gradient(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.x.cols;
        let z = self.margins(theta);
        let mut g = theta.to_vec();
        g[d] = 0.0;
        let mut curv = vec![0.0; self.x.rows];
        for i in 0..self.x.rows {
            let (coef, h) = match self.loss {
                Loss::Logistic => {
                    let s = sigmoid(self.y[i] * z[i]);
                    (self.c[i] * (s - 1.0) * self.y[i], self.c[i] * s * (1.0 - s))
                }
                Loss::SquaredEpsInsensitive { eps } => {
                    let r = z[i] - self.y[i];
                    if r > eps {
                        (2.0 * self.c[i] * (r - eps), 2.0 * self.c[i])
                    } else if r < -eps {
                        (2.0 * self.c[i] * (r + eps), 2.0 * self.c[i])
                    } else {
                        (0.0, 0.0)
                    }
                }
            };
            curv[i] = h;
            if coef != 0.0 {
                for (gj, xj) in g[..d].iter_mut().zip(self.x.row(i)) {
                    *gj += coef * xj;
                }
                g[d] += coef;
            }
        }
        if !self.fit_bias {
            g[d] = 0.0;
        }
        (g, curv)
    }

    fn hess_vec(&self, curv: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.x.cols;
        let mut out = v.to_vec();
        // tiny ridge on the bias keeps the system positive definite when no
        // sample contributes curvature
        out[d] = 1e-12 * v[d];
        for i in 0..self.x.rows {
            if curv[i] == 0.0 {
                continue;
            }
            let row = self.x.row(i);
            let xv = dot(row, &v[..d]) + v[d];
            let s = curv[i] * xv;
            for (oj, xj) in out[..d].iter_mut().zip(row) {
                *oj += s * xj;
            }
            out[d] += s;
        }
        if !self.fit_bias {
            out[d] = v[d];
        }
        out
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Conjugate gradient on `H s = −g`, stopped at relative residual `eta`.
fn cg(problem: &Problem<'_>, curv: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    let n = g.len();
    let mut s = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = eta * rr.sqrt();
    for _ in 0..(2 * n).max(20) {
        if rr.sqrt() <= stop {
            break;
        }
        let hp = problem.hess_vec(curv, &p);
        let php = dot(&p, &hp);
        if php <= 0.0 {
            break;
        }
        let alpha = rr / php;
        for k in 0..n {
            s[k] += alpha * p[k];
            r[k] -= alpha * hp[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    s
}

fn newton(problem: &Problem<'_>, opts: &SolverOptions) -> LinearModel {
    let n = problem.dim();
    let mut theta = vec![0.0; n];
    let mut f = problem.value(&theta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let (g, curv) = problem.gradient(&theta);
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= 1e-12 {
            converged = true;
            break;
        }
        let eta = gnorm.sqrt().min(0.1);
        let mut step = cg(problem, &curv, &g, eta);
        let mut slope = dot(&g, &step);
        if slope >= 0.0 {
            step = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let fc = problem.value(&cand);
            if fc <= f + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            converged = true;
            break;
        };
        let rel = (f - fc).abs() / f.abs().max(f64::MIN_POSITIVE);
        theta = cand;
        f = fc;
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    let bias = theta.pop().unwrap_or(0.0);
    LinearModel {
        weights: theta,
        bias,
        iterations,
        converged,
        objective: f,
    }
}

/// Inverse class frequency weights `(positive, negative)`, normalized so a
/// balanced set gets weight 1 for both classes.
pub fn class_weights(labels: &[bool]) -> Result<(f64, f64)> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass);
    }
    Ok((n / (2.0 * pos), n / (2.0 * neg)))
}

/// Weighted L2-regularized logistic regression.
pub fn train_logistic(x: &Matrix, labels: &[bool], c: f64, opts: &SolverOptions) -> Result<LinearModel> {
    logistic(x, labels, c, opts, true)
}

/// As [`train_logistic`] with the bias fixed at zero, so the fitted
/// decision function is odd in `x`.
pub fn train_logistic_no_bias(x: &Matrix, labels: &[bool], c: f64, opts: &SolverOptions) -> Result<LinearModel> {
    logistic(x, labels, c, opts, false)
}

fn logistic(x: &Matrix, labels: &[bool], c: f64, opts: &SolverOptions, fit_bias: bool) -> Result<LinearModel> {
    check_shape(x, labels.len(), c)?;
    let (wp, wn) = class_weights(labels)?;
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let problem = Problem {
        x,
        y: &y,
        c: labels.iter().map(|&l| c * if l { wp } else { wn }).collect(),
        loss: Loss::Logistic,
        fit_bias,
    };
    Ok(newton(&problem, opts))
}

/// L2-regularized L2-loss epsilon-insensitive regression.
pub fn train_svr(x: &Matrix, y: &[f64], c: f64, eps: f64, opts: &SolverOptions) -> Result<LinearModel> {
    check_shape(x, y.len(), c)?;
    if eps < 0.0 {
        return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
    }
    let problem = Problem {
        x,
        y,
        c: vec![c; y.len()],
        loss: Loss::SquaredEpsInsensitive { eps },
        fit_bias: true,
    };
    Ok(newton(&problem, opts))
}

fn check_shape(x: &Matrix, n: usize, c: f64) -> Result<()> {
    if x.rows != n {
        return Err(Error::InvalidArgument(format!("{} rows but {} targets", x.rows, n)));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument("regularization strength must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn new(pred: &[bool], truth: &[bool]) -> Self {
        let mut c = Self::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 || denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn evaluate_f1(pred: &[bool], truth: &[bool]) -> f64 {
    Confusion::new(pred, truth).f1()
}

pub fn evaluate_rmse(pred: &[f64], target: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let ss: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    (ss / pred.len() as f64).sqrt()
}

/// Expected F1 of a classifier that ignores its input and predicts the
/// positive class with probability equal to the training positive rate.
pub fn class_prior_f1(train_prior: f64, test_prior: f64) -> f64 {
    if train_prior + test_prior == 0.0 {
        0.0
    } else {
        2.0 * train_prior * test_prior / (train_prior + test_prior)
    }
}
