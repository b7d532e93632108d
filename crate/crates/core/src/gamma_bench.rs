//! Benchmarking credible Γ values by treating each measured covariate in turn
//! as if it were an unmeasured selection factor.
//!
//! For feature `k`, the full model's odds are divided by the odds of a model
//! refitted without `k`; the spread of `max(r, 1/r)` over the evaluation rows
//! indicates how large Γ must be to absorb a factor of comparable strength.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propensity::{fit_logistic, FitHyper, LabeledPool, LogisticModel};

/// Coverage levels at which a Γ is suggested.
pub const COVERAGE_LEVELS: [f64; 3] = [0.9, 0.95, 1.0];
const SUMMARY_LEVELS: [f64; 5] = [0.5, 0.75, 0.9, 0.95, 1.0];

/// Which pool rows the ratios are evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalRows {
    #[default]
    All,
    Target,
    Trial,
}

impl EvalRows {
    fn includes(self, label: u8) -> bool {
        match self {
            EvalRows::All => true,
            EvalRows::Target => label == 0,
            EvalRows::Trial => label == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmissionReport {
    pub feature: usize,
    /// `odds(x) / odds(x_{-k})` per evaluation row, in pool order.
    pub ratios: Vec<f64>,
    /// `(q, q-quantile of max(r, 1/r))`.
    pub summary: Vec<(f64, f64)>,
    /// `(coverage, Γ)` for each of [`COVERAGE_LEVELS`].
    pub suggested_gamma: Vec<(f64, f64)>,
    pub full_converged: bool,
    pub reduced_converged: bool,
}

impl OmissionReport {
    pub fn gamma_at(&self, coverage: f64) -> Option<f64> {
        self.suggested_gamma
            .iter()
            .find(|(c, _)| *c == coverage)
            .map(|&(_, g)| g)
    }
}

/// Empirical q-quantile as the `⌈q·n⌉`-th order statistic (1-based).
pub fn order_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn report_for(
    pool: &LabeledPool,
    full: &LogisticModel,
    full_converged: bool,
    k: usize,
    hyper: &FitHyper,
    rows: EvalRows,
) -> Result<OmissionReport> {
    let reduced_pool = pool.without_feature(k)?;
    let reduced = fit_logistic(&reduced_pool, hyper)?;

    let mut ratios = Vec::new();
    for ((x, x_reduced), &label) in pool
        .rows()
        .iter()
        .zip(reduced_pool.rows())
        .zip(pool.labels())
    {
        if rows.includes(label) {
            ratios.push(full.predict_odds(x)? / reduced.model.predict_odds(x_reduced)?);
        }
    }
    if ratios.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no pool rows selected by {rows:?}"
        )));
    }

    let mut spread: Vec<f64> = ratios.iter().map(|&r| r.max(1.0 / r)).collect();
    spread.sort_by(f64::total_cmp);
    let summary = SUMMARY_LEVELS
        .iter()
        .map(|&q| (q, order_quantile(&spread, q)))
        .collect();
    let suggested_gamma = COVERAGE_LEVELS
        .iter()
        .map(|&q| (q, order_quantile(&spread, q)))
        .collect();

    Ok(OmissionReport {
        feature: k,
        ratios,
        summary,
        suggested_gamma,
        full_converged,
        reduced_converged: reduced.report.converged,
    })
}

/// Report for omitting feature `k`.
pub fn omitted_covariate_ratios(
    pool: &LabeledPool,
    k: usize,
    hyper: &FitHyper,
    rows: EvalRows,
) -> Result<OmissionReport> {
    if pool.dim() < 2 {
        return Err(Error::InvalidParameter(
            "benchmarking needs at least two covariates".into(),
        ));
    }
    let full = fit_logistic(pool, hyper)?;
    report_for(pool, &full.model, full.report.converged, k, hyper, rows)
}

/// One report per feature, sharing a single full-model fit.
pub fn benchmark_all(
    pool: &LabeledPool,
    hyper: &FitHyper,
    rows: EvalRows,
) -> Result<Vec<OmissionReport>> {
    if pool.dim() < 2 {
        return Err(Error::InvalidParameter(
            "benchmarking needs at least two covariates".into(),
        ));
    }
    let full = fit_logistic(pool, hyper)?;
    (0..pool.dim())
        .into_par_iter()
        .map(|k| report_for(pool, &full.model, full.report.converged, k, hyper, rows))
        .collect()
}
