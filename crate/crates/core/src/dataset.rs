//! Trial and target data, policy and design descriptions, and the two
//! strategies for splitting trial data into a weight-bound half (D') and a
//! calibration half (D'').

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{sums_to_one, Scalar};

/// Covariates of one individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariateVector<T>(pub Vec<T>);

impl<T: Scalar> CovariateVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Copy of the vector with feature `k` removed.
    pub fn without(&self, k: usize) -> Self {
        let values = self
            .0
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &v)| v)
            .collect();
        Self(values)
    }
}

impl<T> From<Vec<T>> for CovariateVector<T> {
    fn from(values: Vec<T>) -> Self {
        Self(values)
    }
}

/// One `(X, A, L)` draw from the trial population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSample<T> {
    pub x: CovariateVector<T>,
    pub a: usize,
    pub l: T,
}

impl<T: Scalar> TrialSample<T> {
    pub fn new(x: impl Into<CovariateVector<T>>, a: usize, l: T) -> Self {
        Self { x: x.into(), a, l }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset<T> {
    samples: Vec<TrialSample<T>>,
    k_actions: usize,
    dim: usize,
}

impl<T: Scalar> TrialDataset<T> {
    /// Builds a dataset, enforcing the structural invariants (nonempty,
    /// homogeneous dimension, actions below `k_actions`). Finiteness is left
    /// to [`validate_dataset`].
    pub fn new(samples: Vec<TrialSample<T>>, k_actions: usize) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidDataset("trial dataset is empty".into()))?;
        if k_actions == 0 {
            return Err(Error::InvalidDataset("k_actions must be at least 1".into()));
        }
        let dim = first.x.dim();
        for (i, s) in samples.iter().enumerate() {
            if s.x.dim() != dim {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has dimension {}, expected {dim}",
                    s.x.dim()
                )));
            }
            if s.a >= k_actions {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has action {} but K = {k_actions}",
                    s.a
                )));
            }
        }
        Ok(Self {
            samples,
            k_actions,
            dim,
        })
    }

    pub fn samples(&self) -> &[TrialSample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn k_actions(&self) -> usize {
        self.k_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn losses(&self) -> impl Iterator<Item = T> + '_ {
        self.samples.iter().map(|s| s.l)
    }

    fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        Self::new(samples, self.k_actions)
    }
}

/// Covariate-only rows from the target population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCovariates<T> {
    rows: Vec<CovariateVector<T>>,
    dim: usize,
}

impl<T: Scalar> TargetCovariates<T> {
    pub fn new(rows: Vec<CovariateVector<T>>) -> Result<Self> {
        let dim = rows
            .first()
            .ok_or_else(|| Error::InvalidDataset("target covariates are empty".into()))?
            .dim();
        if let Some(i) = rows.iter().position(|r| r.dim() != dim) {
            return Err(Error::InvalidDataset(format!(
                "target row {i} has dimension {}, expected {dim}",
                rows[i].dim()
            )));
        }
        Ok(Self { rows, dim })
    }

    pub fn rows(&self) -> &[CovariateVector<T>] {
        &self.rows
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
}

/// Action-probability rule `p_π(A | X)` of the evaluated policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec<T> {
    /// Always takes the given action.
    Constant(usize),
    /// Uniform over all `K` actions.
    Uniform,
    /// One probability vector per trial row, indexed like the dataset.
    Table(Vec<Vec<T>>),
}

impl<T: Scalar> PolicySpec<T> {
    /// Checks the policy against `k` actions and, for tables, the row count.
    pub fn validate(&self, k: usize, rows: Option<usize>) -> Result<()> {
        match self {
            PolicySpec::Constant(a) if *a >= k => Err(Error::InvalidProbabilities(format!(
                "constant action {a} is outside 0..{k}"
            ))),
            PolicySpec::Constant(_) | PolicySpec::Uniform => Ok(()),
            PolicySpec::Table(table) => {
                if let Some(n) = rows {
                    if table.len() != n {
                        return Err(Error::Misaligned {
                            expected: n,
                            got: table.len(),
                        });
                    }
                }
                for (i, probs) in table.iter().enumerate() {
                    if probs.len() != k {
                        return Err(Error::InvalidProbabilities(format!(
                            "policy row {i} has {} entries, expected {k}",
                            probs.len()
                        )));
                    }
                    if probs.iter().any(|p| !(*p >= T::zero()) || !p.is_finite()) {
                        return Err(Error::InvalidProbabilities(format!(
                            "policy row {i} has a negative or non-finite entry"
                        )));
                    }
                    if !sums_to_one(probs) {
                        return Err(Error::InvalidProbabilities(format!(
                            "policy row {i} does not sum to 1"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// `p_π(a | x_row)`.
    pub fn prob(&self, row: usize, a: usize, k: usize) -> T {
        match self {
            PolicySpec::Constant(star) => {
                if a == *star {
                    T::one()
                } else {
                    T::zero()
                }
            }
            PolicySpec::Uniform => T::one() / T::of_usize(k),
            PolicySpec::Table(table) => table[row][a],
        }
    }

    /// Whether the rule depends only on `K` (and so applies to fresh individuals).
    pub fn is_covariate_free(&self) -> bool {
        !matches!(self, PolicySpec::Table(_))
    }

    /// Inverse-CDF draw of an action for `row` from a uniform variate `u ∈ [0, 1)`.
    pub fn draw(&self, row: usize, k: usize, u: T) -> usize {
        if let PolicySpec::Constant(a) = self {
            return *a;
        }
        let mut cumulative = T::zero();
        let mut last_positive = 0;
        for a in 0..k {
            let p = self.prob(row, a, k);
            if p > T::zero() {
                last_positive = a;
            }
            cumulative = cumulative + p;
            if u < cumulative {
                return a;
            }
        }
        last_positive
    }
}

/// Covariate-free randomization `p(A)` of the trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDesign<T> {
    probs: Vec<T>,
}

impl<T: Scalar> TrialDesign<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidProbabilities("design has no actions".into()));
        }
        if probs.iter().any(|p| !(*p > T::zero()) || !p.is_finite()) {
            return Err(Error::InvalidProbabilities(
                "design probabilities must be strictly positive".into(),
            ));
        }
        if !sums_to_one(&probs) {
            return Err(Error::InvalidProbabilities(
                "design probabilities must sum to 1".into(),
            ));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidProbabilities("design has no actions".into()));
        }
        Self::new(vec![T::one() / T::of_usize(k); k])
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, a: usize) -> T {
        self.probs[a]
    }

    pub fn draw(&self, u: T) -> usize {
        let mut cumulative = T::zero();
        for (a, &p) in self.probs.iter().enumerate() {
            cumulative = cumulative + p;
            if u < cumulative {
                return a;
            }
        }
        self.probs.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    Random,
    Matched,
}

/// Partition of a trial dataset. Indices refer to rows of the input dataset
/// and are ascending within each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult<T> {
    pub d_prime: TrialDataset<T>,
    pub d_double_prime: TrialDataset<T>,
    pub prime_indices: Vec<usize>,
    pub double_prime_indices: Vec<usize>,
    /// Policy draws `Ã_i` for every input row (matched split only, else empty).
    pub policy_draws: Vec<usize>,
    pub strategy: SplitStrategy,
    pub seed: u64,
}

impl<T: Scalar> SplitResult<T> {
    fn from_indices(
        trial: &TrialDataset<T>,
        prime_indices: Vec<usize>,
        double_prime_indices: Vec<usize>,
        policy_draws: Vec<usize>,
        strategy: SplitStrategy,
        seed: u64,
    ) -> Result<Self> {
        if prime_indices.is_empty() || double_prime_indices.is_empty() {
            return Err(Error::DegenerateSplit {
                prime: prime_indices.len(),
                double_prime: double_prime_indices.len(),
            });
        }
        Ok(Self {
            d_prime: trial.subset(&prime_indices)?,
            d_double_prime: trial.subset(&double_prime_indices)?,
            prime_indices,
            double_prime_indices,
            policy_draws,
            strategy,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Report-only consistency checks over a trial/target pair.
pub fn validate_dataset<T: Scalar>(
    trial: &TrialDataset<T>,
    target: &TargetCovariates<T>,
    l_max: Option<T>,
) -> ValidationReport {
    let mut checks = Vec::new();

    checks.push(Check {
        name: "dimension_match",
        passed: trial.dim() == target.dim(),
        detail: format!("trial d = {}, target d = {}", trial.dim(), target.dim()),
    });

    let bad_trial: Vec<usize> = trial
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.x.is_finite() || !s.l.is_finite())
        .map(|(i, _)| i)
        .collect();
    checks.push(Check {
        name: "trial_finite",
        passed: bad_trial.is_empty(),
        detail: format!(
            "{} non-finite trial rows {:?}",
            bad_trial.len(),
            head(&bad_trial)
        ),
    });

    let bad_target: Vec<usize> = target
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_finite())
        .map(|(i, _)| i)
        .collect();
    checks.push(Check {
        name: "target_finite",
        passed: bad_target.is_empty(),
        detail: format!(
            "{} non-finite target rows {:?}",
            bad_target.len(),
            head(&bad_target)
        ),
    });

    let k = trial.k_actions();
    let bad_actions: Vec<usize> = trial
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.a >= k)
        .map(|(i, _)| i)
        .collect();
    checks.push(Check {
        name: "action_range",
        passed: bad_actions.is_empty(),
        detail: format!("K = {k}, out-of-range rows {:?}", head(&bad_actions)),
    });

    if let Some(l_max) = l_max {
        let above: Vec<usize> = trial
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| !(s.l < l_max))
            .map(|(i, _)| i)
            .collect();
        checks.push(Check {
            name: "loss_below_l_max",
            passed: above.is_empty(),
            detail: format!("L_max = {l_max}, rows at or above {:?}", head(&above)),
        });
    }

    ValidationReport { checks }
}

fn head(rows: &[usize]) -> &[usize] {
    &rows[..rows.len().min(8)]
}

/// Seeded random partition with `|D'| = round(frac · m)`.
pub fn random_split<T: Scalar>(
    trial: &TrialDataset<T>,
    frac: f64,
    seed: u64,
) -> Result<SplitResult<T>> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction {frac} must lie in (0, 1)"
        )));
    }
    let m = trial.len();
    let m_prime = (frac * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::seeded(seed));
    let (prime, double_prime) = order.split_at(m_prime.min(m));
    let mut prime = prime.to_vec();
    let mut double_prime = double_prime.to_vec();
    prime.sort_unstable();
    double_prime.sort_unstable();
    SplitResult::from_indices(
        trial,
        prime,
        double_prime,
        Vec::new(),
        SplitStrategy::Random,
        seed,
    )
}

/// Rejection-style split: row `i` joins D'' iff its trial action equals a
/// fresh draw `Ã_i ~ p_π(· | X_i)`.
pub fn matched_split<T: Scalar>(
    trial: &TrialDataset<T>,
    policy: &PolicySpec<T>,
    design: &TrialDesign<T>,
    seed: u64,
) -> Result<SplitResult<T>> {
    let k = trial.k_actions();
    if design.k() != k {
        return Err(Error::InvalidParameter(format!(
            "design has {} actions, dataset has K = {k}",
            design.k()
        )));
    }
    policy.validate(k, Some(trial.len()))?;

    let mut rng = rng::seeded(seed);
    let mut prime = Vec::new();
    let mut double_prime = Vec::new();
    let mut draws = Vec::with_capacity(trial.len());
    for (i, sample) in trial.samples().iter().enumerate() {
        let u = T::of(rng.random::<f64>());
        let drawn = policy.draw(i, k, u);
        draws.push(drawn);
        if drawn == sample.a {
            double_prime.push(i);
        } else {
            prime.push(i);
        }
    }
    SplitResult::from_indices(
        trial,
        prime,
        double_prime,
        draws,
        SplitStrategy::Matched,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(m: usize, d: usize) -> TrialDataset<f64> {
        let samples = (0..m)
            .map(|i| TrialSample::new(vec![i as f64; d], i % 2, i as f64))
            .collect();
        TrialDataset::new(samples, 2).unwrap()
    }

    fn target(n: usize, d: usize) -> TargetCovariates<f64> {
        TargetCovariates::new((0..n).map(|i| vec![i as f64; d].into()).collect()).unwrap()
    }

    #[test]
    fn validation_passes_on_consistent_data() {
        let report = validate_dataset(&toy(4, 2), &target(3, 2), None);
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn validation_flags_dimension_mismatch() {
        let report = validate_dataset(&toy(4, 2), &target(3, 3), None);
        assert!(!report.check("dimension_match").unwrap().passed);
        assert_eq!(report.failures().count(), 1);
    }

    #[test]
    fn validation_flags_infinite_loss() {
        let mut samples = toy(4, 2).samples().to_vec();
        samples[2].l = f64::INFINITY;
        let trial = TrialDataset::new(samples, 2).unwrap();
        let report = validate_dataset(&trial, &target(3, 2), None);
        assert!(!report.check("trial_finite").unwrap().passed);
        assert!(report.check("dimension_match").unwrap().passed);
    }

    #[test]
    fn validation_flags_losses_at_l_max() {
        let report = validate_dataset(&toy(4, 2), &target(3, 2), Some(3.0));
        assert!(!report.check("loss_below_l_max").unwrap().passed);
    }

    #[test]
    fn construction_rejects_bad_structure() {
        assert!(TrialDataset::<f64>::new(vec![], 2).is_err());
        let mixed = vec![
            TrialSample::new(vec![0.0, 1.0], 0, 1.0),
            TrialSample::new(vec![0.0], 0, 1.0),
        ];
        assert!(TrialDataset::new(mixed, 2).is_err());
        let bad_action = vec![TrialSample::new(vec![0.0], 2, 1.0)];
        assert!(TrialDataset::new(bad_action, 2).is_err());
        assert!(TargetCovariates::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn random_split_sizes() {
        let split = random_split(&toy(10, 1), 0.5, 3).unwrap();
        assert_eq!(split.d_prime.len(), 5);
        assert_eq!(split.d_double_prime.len(), 5);
        let split = random_split(&toy(10, 1), 0.3, 3).unwrap();
        assert_eq!(split.d_prime.len(), 3);
    }

    #[test]
    fn random_split_is_deterministic() {
        let a = random_split(&toy(50, 2), 0.5, 11).unwrap();
        let b = random_split(&toy(50, 2), 0.5, 11).unwrap();
        assert_eq!(a, b);
        let c = random_split(&toy(50, 2), 0.5, 12).unwrap();
        assert_ne!(a.prime_indices, c.prime_indices);
    }

    #[test]
    fn random_split_rejects_degenerate_sizes() {
        assert!(matches!(
            random_split(&toy(1, 1), 0.5, 0),
            Err(Error::DegenerateSplit { .. })
        ));
        assert!(random_split(&toy(10, 1), 1.0, 0).is_err());
    }

    #[test]
    fn splits_partition_the_rows() {
        let trial = toy(37, 1);
        let design = TrialDesign::uniform(2).unwrap();
        let splits = [
            random_split(&trial, 0.4, 5).unwrap(),
            matched_split(&trial, &PolicySpec::Uniform, &design, 5).unwrap(),
        ];
        for split in splits {
            let mut all: Vec<usize> = split
                .prime_indices
                .iter()
                .chain(&split.double_prime_indices)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..37).collect::<Vec<_>>());
            for (pos, &i) in split.double_prime_indices.iter().enumerate() {
                assert_eq!(split.d_double_prime.samples()[pos], trial.samples()[i]);
            }
        }
    }

    #[test]
    fn matched_split_with_constant_policy_keeps_matching_actions() {
        let trial = toy(20, 1);
        let design = TrialDesign::uniform(2).unwrap();
        let split = matched_split(&trial, &PolicySpec::Constant(1), &design, 9).unwrap();
        assert!(split.d_double_prime.samples().iter().all(|s| s.a == 1));
        assert!(split.d_prime.samples().iter().all(|s| s.a == 0));
        assert_eq!(split.policy_draws, vec![1; 20]);
    }

    #[test]
    fn matched_split_errors_when_every_action_matches() {
        let samples = (0..10)
            .map(|i| TrialSample::new(vec![i as f64], 1, 1.0))
            .collect();
        let trial = TrialDataset::new(samples, 2).unwrap();
        let design = TrialDesign::uniform(2).unwrap();
        let err = matched_split(&trial, &PolicySpec::Constant(1), &design, 0).unwrap_err();
        assert_eq!(
            err,
            Error::DegenerateSplit {
                prime: 0,
                double_prime: 10
            }
        );
    }

    #[test]
    fn policy_and_design_validation() {
        assert!(TrialDesign::new(vec![0.5_f64, 0.5]).is_ok());
        assert!(TrialDesign::new(vec![1.0_f64, 0.0]).is_err());
        assert!(TrialDesign::new(vec![0.5_f64, 0.6]).is_err());
        let table = PolicySpec::Table(vec![vec![0.3_f64, 0.7], vec![1.0, 0.0]]);
        assert!(table.validate(2, Some(2)).is_ok());
        assert!(table.validate(2, Some(3)).is_err());
        assert!(PolicySpec::Table(vec![vec![0.3_f64, 0.6]])
            .validate(2, None)
            .is_err());
        assert!(PolicySpec::<f64>::Constant(2).validate(2, None).is_err());
    }

    #[test]
    fn policy_draw_follows_cumulative_probabilities() {
        let table = PolicySpec::Table(vec![vec![0.25_f64, 0.0, 0.75]]);
        assert_eq!(table.draw(0, 3, 0.1), 0);
        assert_eq!(table.draw(0, 3, 0.25), 2);
        assert_eq!(table.draw(0, 3, 0.999_999), 2);
        assert_eq!(PolicySpec::<f64>::Uniform.draw(0, 4, 0.6), 2);
    }
}
