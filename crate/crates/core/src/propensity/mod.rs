//! Nominal selection odds: an in-repo logistic model, external score files,
//! and reliability diagrams for checking their calibration.

mod logistic;
mod reliability;
mod scores;

pub use logistic::{
    fit_logistic, odds_from_logit, FitHyper, FitOutcome, FitReport, LogisticModel, LOGIT_CLAMP,
};
pub use reliability::{reliability_diagram, ReliabilityBin};
pub use scores::{load_external_scores, parse_external_scores};

use serde::{Deserialize, Serialize};

use crate::dataset::{CovariateVector, TargetCovariates, TrialDataset};
use crate::error::{Error, Result};

/// Rows labeled by population: `S = 0` target, `S = 1` trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPool {
    rows: Vec<CovariateVector<f64>>,
    labels: Vec<u8>,
    dim: usize,
}

impl LabeledPool {
    pub fn new(rows: Vec<CovariateVector<f64>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = rows
            .first()
            .ok_or_else(|| Error::InvalidDataset("labeled pool is empty".into()))?
            .dim();
        if let Some(i) = rows.iter().position(|r| r.dim() != dim) {
            return Err(Error::InvalidDataset(format!(
                "pool row {i} has dimension {}, expected {dim}",
                rows[i].dim()
            )));
        }
        if let Some(i) = labels.iter().position(|&s| s > 1) {
            return Err(Error::InvalidDataset(format!(
                "pool row {i} has label {}, expected 0 or 1",
                labels[i]
            )));
        }
        let pool = Self { rows, labels, dim };
        pool.check_both_classes()?;
        Ok(pool)
    }

    /// Target rows labeled 0 followed by trial rows labeled 1.
    pub fn from_parts(target: &TargetCovariates<f64>, trial: &TrialDataset<f64>) -> Result<Self> {
        let rows = target
            .rows()
            .iter()
            .cloned()
            .chain(trial.samples().iter().map(|s| s.x.clone()))
            .collect();
        let labels = std::iter::repeat_n(0, target.len())
            .chain(std::iter::repeat_n(1, trial.len()))
            .collect();
        Self::new(rows, labels)
    }

    pub fn rows(&self) -> &[CovariateVector<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(n0, n1)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.labels.iter().filter(|&&s| s == 1).count();
        (self.labels.len() - n1, n1)
    }

    pub(crate) fn check_both_classes(&self) -> Result<()> {
        let (n0, n1) = self.class_counts();
        if n0 == 0 || n1 == 0 {
            return Err(Error::SingleClass { n0, n1 });
        }
        Ok(())
    }

    /// Copy with feature `k` dropped from every row.
    pub fn without_feature(&self, k: usize) -> Result<Self> {
        if k >= self.dim {
            return Err(Error::InvalidParameter(format!(
                "feature {k} out of range for d = {}",
                self.dim
            )));
        }
        if self.dim < 2 {
            return Err(Error::InvalidParameter(
                "cannot omit the only feature".into(),
            ));
        }
        let rows = self.rows.iter().map(|r| r.without(k)).collect();
        Self::new(rows, self.labels.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Fitted,
    External,
}

/// Nominal odds, one per row of some dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsTable {
    odds: Vec<f64>,
    provenance: Provenance,
}

impl OddsTable {
    pub fn new(odds: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if let Some((row, &value)) = odds
            .iter()
            .enumerate()
            .find(|(_, o)| !(**o > 0.0) || !o.is_finite())
        {
            return Err(Error::InvalidOdds { row, value });
        }
        Ok(Self { odds, provenance })
    }

    pub fn from_model<'a>(
        model: &LogisticModel,
        rows: impl IntoIterator<Item = &'a CovariateVector<f64>>,
    ) -> Result<Self> {
        Self::new(model.odds_for(rows)?, Provenance::Fitted)
    }

    pub fn odds(&self) -> &[f64] {
        &self.odds
    }

    pub fn len(&self) -> usize {
        self.odds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.odds.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Multiplies every odds value by `factor`, e.g. `n0/n1` for scores from a
    /// model trained with class balancing.
    pub fn with_prior_correction(mut self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "prior correction {factor} must be positive and finite"
            )));
        }
        for o in &mut self.odds {
            *o *= factor;
        }
        Self::new(self.odds, self.provenance)
    }
}
