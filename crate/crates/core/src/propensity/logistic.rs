//! L2-regularized logistic regression for `p̂(S=1 | X)`, fitted by full-batch
//! gradient descent with a backtracking (Armijo) line search on standardized
//! features.

use serde::{Deserialize, Serialize};

use super::LabeledPool;
use crate::dataset::CovariateVector;
use crate::error::{Error, Result};

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitHyper {
    /// Ridge penalty on the (standardized) coefficients; the intercept is free.
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the gradient.
    pub tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor on rejection.
    pub shrink: f64,
}

impl Default for FitHyper {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 5_000,
            tol: 1e-7,
            armijo: 1e-4,
            shrink: 0.5,
        }
    }
}

impl FitHyper {
    fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "l2 = {} must be >= 0",
                self.l2
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be > 0".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0 && self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParameter(
                "armijo and shrink must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Coefficients on standardized features.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Per-feature `(mean, scale)` applied as `(x - mean) / scale`.
    pub standardization: Vec<(f64, f64)>,
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// Unclamped log-odds of `S = 1`.
    pub fn logit(&self, x: &CovariateVector<f64>) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(self.logit_unchecked(x.values()))
    }

    fn logit_unchecked(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(&self.standardization)
                .zip(x)
                .map(|((c, (mean, scale)), v)| c * (v - mean) / scale)
                .sum::<f64>()
    }

    /// Nominal odds `p̂(S=0|x) / p̂(S=1|x) = exp(-logit)`, logit clamped.
    pub fn predict_odds(&self, x: &CovariateVector<f64>) -> Result<f64> {
        Ok(odds_from_logit(self.logit(x)?))
    }

    pub fn predict_prob(&self, x: &CovariateVector<f64>) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    /// Odds for every row; fails on the first dimension mismatch.
    pub fn odds_for<'a>(
        &self,
        rows: impl IntoIterator<Item = &'a CovariateVector<f64>>,
    ) -> Result<Vec<f64>> {
        rows.into_iter().map(|x| self.predict_odds(x)).collect()
    }
}

pub fn odds_from_logit(logit: f64) -> f64 {
    (-logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)).exp()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    pub grad_max_norm: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub model: LogisticModel,
    pub report: FitReport,
}

struct Problem {
    /// Standardized design, row-major `n × d`.
    z: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    d: usize,
    l2: f64,
}

impl Problem {
    /// Mean negative log-likelihood plus `l2/2 · |β|²`.
    fn objective(&self, params: &[f64]) -> f64 {
        let (b0, beta) = params.split_first().expect("intercept present");
        let mut nll = 0.0;
        for i in 0..self.n {
            let eta = b0 + dot(beta, &self.z[i * self.d..(i + 1) * self.d]);
            nll += softplus(eta) - self.y[i] * eta;
        }
        nll / self.n as f64 + 0.5 * self.l2 * dot(beta, beta)
    }

    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let (b0, beta) = params.split_first().expect("intercept present");
        let mut grad = vec![0.0; self.d + 1];
        for i in 0..self.n {
            let row = &self.z[i * self.d..(i + 1) * self.d];
            let residual = sigmoid(b0 + dot(beta, row)) - self.y[i];
            grad[0] += residual;
            for (g, v) in grad[1..].iter_mut().zip(row) {
                *g += residual * v;
            }
        }
        let n = self.n as f64;
        grad[0] /= n;
        for (g, b) in grad[1..].iter_mut().zip(beta) {
            *g = *g / n + self.l2 * b;
        }
        grad
    }

    /// Curvature bound of the objective, used to size the first trial step.
    fn lipschitz_bound(&self) -> f64 {
        // λ_max([1 z]ᵀ[1 z]/n) ≤ 1 + Σ_j mean(z_j²) = 1 + d for standardized data.
        0.25 * (1.0 + self.d as f64) + self.l2
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fits `p̂(S=1|X)` on the pool without any class reweighting.
pub fn fit_logistic(pool: &LabeledPool, hyper: &FitHyper) -> Result<FitOutcome> {
    hyper.validate()?;
    pool.check_both_classes()?;
    let n = pool.len();
    let d = pool.dim();

    let standardization: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let mean = pool.rows().iter().map(|r| r.values()[j]).sum::<f64>() / n as f64;
            let var = pool
                .rows()
                .iter()
                .map(|r| (r.values()[j] - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let scale = var.sqrt();
            (
                mean,
                if scale > 0.0 && scale.is_finite() {
                    scale
                } else {
                    1.0
                },
            )
        })
        .collect();

    let mut z = Vec::with_capacity(n * d);
    for row in pool.rows() {
        for (v, (mean, scale)) in row.values().iter().zip(&standardization) {
            z.push((v - mean) / scale);
        }
    }
    let y = pool.labels().iter().map(|&s| f64::from(s)).collect();
    let problem = Problem {
        z,
        y,
        n,
        d,
        l2: hyper.l2,
    };

    let max_step = 4.0 / problem.lipschitz_bound();
    let mut step = 1.0 / problem.lipschitz_bound();
    let mut params = vec![0.0; d + 1];
    let mut value = problem.objective(&params);
    let mut grad = problem.gradient(&params);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut converged = max_norm(&grad) <= hyper.tol;

    while !converged && iterations < hyper.max_iter {
        iterations += 1;
        let grad_sq = dot(&grad, &grad);
        let mut trial_step = (2.0 * step).min(max_step);
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = params
                .iter()
                .zip(&grad)
                .map(|(p, g)| p - trial_step * g)
                .collect();
            let candidate_value = problem.objective(&candidate);
            if candidate_value <= value - hyper.armijo * trial_step * grad_sq {
                accepted = Some((candidate, candidate_value));
                break;
            }
            trial_step *= hyper.shrink;
        }
        let Some((candidate, candidate_value)) = accepted else {
            // No decrease representable at this precision.
            break;
        };
        params = candidate;
        value = candidate_value;
        step = trial_step;
        grad = problem.gradient(&params);
        trace.push(value);
        converged = max_norm(&grad) <= hyper.tol;
    }

    let grad_max_norm = max_norm(&grad);
    let (intercept, coefficients) = params.split_first().expect("intercept present");
    Ok(FitOutcome {
        model: LogisticModel {
            coefficients: coefficients.to_vec(),
            intercept: *intercept,
            standardization,
        },
        report: FitReport {
            converged,
            iterations,
            grad_max_norm,
            objective_trace: trace,
        },
    })
}
