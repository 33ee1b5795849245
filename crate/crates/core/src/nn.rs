//! Dense numerical kernel: parameter arrays, affine layers, activations,
//! binary cross-entropy, Adam, and a central finite-difference gradient
//! checker. Gradients are written by hand per primitive.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};
use crate::seed::{self, Rng};

/// Probability clamp used by [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

/// A named learnable 2-D array and its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamArray {
    name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl ParamArray {
    pub fn new(name: impl Into<String>, value: Matrix) -> ParamArray {
        let grad = Matrix::zeros(value.rows(), value.cols());
        ParamArray {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> ParamArray {
        ParamArray::new(name, Matrix::zeros(rows, cols))
    }

    /// Glorot-uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> ParamArray {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
        ParamArray::new(name, Matrix::from_vec(fan_in, fan_out, data).expect("sized"))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.value.rows(), self.value.cols()]
    }

    pub fn len(&self) -> usize {
        self.value.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Masks `grad` where the ReLU input was not strictly positive (the
/// derivative at exactly 0 is taken as 0).
pub fn relu_backward(pre: &Matrix, grad: &mut Matrix) {
    for (g, &x) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

/// Mean binary cross-entropy with probabilities clamped to `[ε, 1 - ε]`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} labels",
            p.len(),
            y.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let sum: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / p.len() as f64)
}

/// `x · W + b` with `b` broadcast over rows.
pub fn affine_forward(x: &Matrix, w: &ParamArray, b: Option<&ParamArray>) -> Result<Matrix> {
    if x.cols() != w.value.rows() {
        return Err(Error::Shape(format!(
            "input has {} columns, weight {} expects {}",
            x.cols(),
            w.name(),
            w.value.rows()
        )));
    }
    let mut out = Matrix::zeros(x.rows(), w.value.cols());
    if let Some(b) = b {
        if b.value.rows() != 1 || b.value.cols() != w.value.cols() {
            return Err(Error::Shape(format!(
                "bias {} has shape {:?}, expected [1, {}]",
                b.name(),
                b.shape(),
                w.value.cols()
            )));
        }
        for i in 0..out.rows() {
            out.row_mut(i).copy_from_slice(b.value.row(0));
        }
        gemm(false, x, false, &w.value, 1.0, &mut out);
    } else {
        gemm(false, x, false, &w.value, 0.0, &mut out);
    }
    Ok(out)
}

/// Accumulates `dW += xᵀ·dy`, `db += Σ_rows dy` and returns `dx = dy·Wᵀ`.
pub fn affine_backward(x: &Matrix, w: &mut ParamArray, b: Option<&mut ParamArray>, dy: &Matrix) -> Matrix {
    gemm(true, x, false, dy, 1.0, &mut w.grad);
    if let Some(b) = b {
        let db = b.grad.row_mut(0);
        for i in 0..dy.rows() {
            for (acc, g) in db.iter_mut().zip(dy.row(i)) {
                *acc += g;
            }
        }
    }
    let mut dx = Matrix::zeros(dy.rows(), w.value.rows());
    gemm(false, dy, true, &w.value, 0.0, &mut dx);
    dx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&ParamArray]) -> Adam {
        Adam {
            config,
            first_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update from the current gradients. Nothing is modified if
    /// any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut ParamArray]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} arrays, got {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.first_moment) {
            if p.len() != m.len() {
                return Err(Error::Shape(format!("array {} changed size", p.name())));
            }
            if let Some(i) = p.grad.as_slice().iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}[{i}]", p.name())));
            }
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let grad = p.grad.as_slice().to_vec();
            for (((w, g), m), v) in p.value.as_mut_slice().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// A differentiable scalar objective over a set of parameter arrays.
pub trait Objective {
    fn params_mut(&mut self) -> Vec<&mut ParamArray>;
    /// Forward pass only.
    fn loss(&mut self) -> Result<f64>;
    /// Zeroes the gradients, then runs forward and backward.
    fn loss_and_grad(&mut self) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub tolerance: f64,
    /// Relative step; the actual step is `h * max(1, |x|)`. Central
    /// differences are taken at both `h` and `h / 2`; the latter is compared.
    pub step: f64,
    /// Coordinates sampled per array; arrays at most this large are checked in full.
    pub coords_per_param: usize,
    /// Gradients below this magnitude are compared in absolute terms.
    pub magnitude_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            tolerance: 1e-4,
            step: 1e-5,
            coords_per_param: 64,
            magnitude_floor: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose one-sided differences disagree, i.e. the step
    /// straddles a ReLU kink; these are not compared.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub worst: Option<GradMismatch>,
    pub failures: Vec<GradMismatch>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// Compares analytic gradients with central differences on a random subset
/// of coordinates.
pub fn finite_diff_check<O: Objective>(objective: &mut O, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let base = objective.loss_and_grad()?;
    let mut rng = seed::rng(config.seed);
    let plan: Vec<(String, Vec<usize>, Vec<f64>)> = objective
        .params_mut()
        .iter()
        .map(|p| {
            let n = p.len();
            let coords: Vec<usize> = if n <= config.coords_per_param {
                (0..n).collect()
            } else {
                let mut c = index::sample(&mut rng, n, config.coords_per_param).into_vec();
                c.sort_unstable();
                c
            };
            let analytic = coords.iter().map(|&i| p.grad.as_slice()[i]).collect();
            (p.name().to_string(), coords, analytic)
        })
        .collect();

    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst: None,
        failures: Vec::new(),
        tolerance: config.tolerance,
    };
    for (pi, (name, coords, analytic)) in plan.iter().enumerate() {
        for (&i, &a) in coords.iter().zip(analytic) {
            let x = objective.params_mut()[pi].value.as_slice()[i];
            let h = config.step * x.abs().max(1.0);
            let plus = eval_at(objective, pi, i, x + h)?;
            let minus = eval_at(objective, pi, i, x - h)?;
            let half_plus = eval_at(objective, pi, i, x + h / 2.0)?;
            let half_minus = eval_at(objective, pi, i, x - h / 2.0)?;
            objective.params_mut()[pi].value.as_mut_slice()[i] = x;

            // For a smooth loss the gap between forward and backward slopes
            // is about h * f'' and halves with the step; a ReLU kink inside
            // the step leaves a gap that does not shrink. A kink where only
            // the curvature jumps shows up instead as central differences
            // that disagree between the two steps far beyond O(h^2).
            let gap = (plus - 2.0 * base + minus) / h;
            let half_gap = (half_plus - 2.0 * base + half_minus) / (h / 2.0);
            let coarse = (plus - minus) / (2.0 * h);
            let numeric = (half_plus - half_minus) / h;
            let noise = base.abs().max(1.0);
            let slope_kink = gap.abs() > 1e-8 * noise && (half_gap / gap - 0.5).abs() > 0.05;
            let curvature_kink = (coarse - numeric).abs() > 1e-3 * coarse.abs().max(numeric.abs()) + 1e-9 * noise;
            if slope_kink || curvature_kink {
                report.skipped_kinks += 1;
                continue;
            }
            let denom = a.abs().max(numeric.abs()).max(config.magnitude_floor);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            let mismatch = GradMismatch {
                param: name.clone(),
                index: i,
                analytic: a,
                numeric,
                rel_error: rel,
            };
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(mismatch.clone());
            }
            if rel > config.tolerance || !rel.is_finite() {
                report.failures.push(mismatch);
            }
        }
    }
    Ok(report)
}

fn eval_at<O: Objective>(objective: &mut O, param: usize, index: usize, value: f64) -> Result<f64> {
    objective.params_mut()[param].value.as_mut_slice()[index] = value;
    objective.loss()
}
