//! Inverse probability of sampling weighting (IPSW) baselines: a point
//! estimate of the expected loss and a plug-in quantile of the loss.
//!
//! Both weight trial row `i` by `odds_i · p_π(A_i|X_i)/p(A_i)` and normalize
//! by the target sample size `n`. Neither carries a finite-sample guarantee.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::conformal::Limit;
use crate::dataset::{PolicySpec, TrialDataset, TrialDesign};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::weights::{policy_ratio, RatioMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the target sample size `n`.
    #[default]
    TargetCount,
    /// Divide by the total weight (Hájek form).
    TotalWeight,
}

/// Per-row IPSW weights (before normalization), sorted by loss.
#[derive(Debug, Clone, PartialEq)]
pub struct IpswWeights<T> {
    losses: Vec<T>,
    weights: Vec<T>,
    normalizer: T,
}

impl<T: Scalar> IpswWeights<T> {
    pub fn new(
        trial: &TrialDataset<T>,
        odds: &[T],
        policy: &PolicySpec<T>,
        design: &TrialDesign<T>,
        n: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        if odds.len() != trial.len() {
            return Err(Error::Misaligned {
                expected: trial.len(),
                got: odds.len(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidParameter(
                "target count n must be >= 1".into(),
            ));
        }
        if design.k() != trial.k_actions() {
            return Err(Error::InvalidParameter(format!(
                "design has {} actions, dataset has K = {}",
                design.k(),
                trial.k_actions()
            )));
        }
        policy.validate(trial.k_actions(), Some(trial.len()))?;

        let mut rows: Vec<(T, T)> = trial
            .samples()
            .iter()
            .zip(odds)
            .enumerate()
            .map(|(i, (s, &o))| {
                if !(o > T::zero()) || !o.is_finite() {
                    return Err(Error::InvalidOdds {
                        row: i,
                        value: o.to_f64_lossy(),
                    });
                }
                Ok((
                    s.l,
                    o * policy_ratio(policy, design, i, s.a, RatioMode::Importance),
                ))
            })
            .collect::<Result<_>>()?;
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

        let normalizer = match normalization {
            Normalization::TargetCount => T::of_usize(n),
            Normalization::TotalWeight => {
                let total = rows.iter().fold(T::zero(), |acc, &(_, w)| acc + w);
                if total > T::zero() {
                    total
                } else {
                    T::one()
                }
            }
        };
        let (losses, weights) = rows.into_iter().unzip();
        Ok(Self {
            losses,
            weights,
            normalizer,
        })
    }

    /// `(1/n) Σ w_i L_i`.
    pub fn value(&self) -> T {
        self.losses
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&l, &w)| acc + w * l)
            / self.normalizer
    }

    /// `(1/n) Σ w_i 1{L_i ≤ ℓ}`; may exceed 1.
    pub fn cdf(&self, ell: T) -> T {
        let count = self.losses.partition_point(|&l| l <= ell);
        self.weights[..count]
            .iter()
            .fold(T::zero(), |acc, &w| acc + w)
            / self.normalizer
    }

    /// Smallest observed loss with `cdf ≥ 1 - α`.
    pub fn quantile(&self, alpha: T) -> Limit<T> {
        let threshold = T::one() - alpha;
        let mut acc = T::zero();
        let mut i = 0;
        while i < self.losses.len() {
            let level = self.losses[i];
            while i < self.losses.len() && self.losses[i] == level {
                acc = acc + self.weights[i];
                i += 1;
            }
            if acc / self.normalizer >= threshold {
                return Limit::Finite(level);
            }
        }
        Limit::Trivial
    }
}

pub fn ipsw_value<T: Scalar>(
    trial: &TrialDataset<T>,
    odds: &[T],
    policy: &PolicySpec<T>,
    design: &TrialDesign<T>,
    n: usize,
) -> Result<T> {
    Ok(IpswWeights::new(trial, odds, policy, design, n, Normalization::TargetCount)?.value())
}

pub fn ipsw_cdf<T: Scalar>(
    trial: &TrialDataset<T>,
    odds: &[T],
    policy: &PolicySpec<T>,
    design: &TrialDesign<T>,
    n: usize,
    ell: T,
) -> Result<T> {
    Ok(IpswWeights::new(trial, odds, policy, design, n, Normalization::TargetCount)?.cdf(ell))
}

pub fn ipsw_quantile<T: Scalar>(
    trial: &TrialDataset<T>,
    odds: &[T],
    policy: &PolicySpec<T>,
    design: &TrialDesign<T>,
    n: usize,
    alpha: T,
) -> Result<Limit<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(
        IpswWeights::new(trial, odds, policy, design, n, Normalization::TargetCount)?
            .quantile(alpha),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TrialSample;

    /// Two treated rows with losses 1 and 3, two untreated rows.
    fn fixture() -> (
        TrialDataset<f64>,
        Vec<f64>,
        PolicySpec<f64>,
        TrialDesign<f64>,
    ) {
        let trial = TrialDataset::new(
            vec![
                TrialSample::new(vec![0.0], 1, 1.0),
                TrialSample::new(vec![0.0], 0, 5.0),
                TrialSample::new(vec![0.0], 1, 3.0),
                TrialSample::new(vec![0.0], 0, 0.5),
            ],
            2,
        )
        .unwrap();
        (
            trial,
            vec![1.0; 4],
            PolicySpec::Constant(1),
            TrialDesign::uniform(2).unwrap(),
        )
    }

    #[test]
    fn hand_evaluated_value() {
        let (trial, odds, policy, design) = fixture();
        assert_eq!(ipsw_value(&trial, &odds, &policy, &design, 4).unwrap(), 2.0);
    }

    #[test]
    fn hand_evaluated_cdf() {
        let (trial, odds, policy, design) = fixture();
        assert_eq!(
            ipsw_cdf(&trial, &odds, &policy, &design, 4, 2.0).unwrap(),
            0.5
        );
        assert_eq!(
            ipsw_cdf(&trial, &odds, &policy, &design, 4, 0.1).unwrap(),
            0.0
        );
        assert_eq!(
            ipsw_cdf(&trial, &odds, &policy, &design, 4, 10.0).unwrap(),
            1.0
        );
    }

    #[test]
    fn hand_evaluated_quantiles() {
        let (trial, odds, policy, design) = fixture();
        let q = |a| ipsw_quantile(&trial, &odds, &policy, &design, 4, a).unwrap();
        assert_eq!(q(0.25), Limit::Finite(3.0));
        assert_eq!(q(0.6), Limit::Finite(1.0));
        // Total mass 1 with n = 8 halves to 0.5 < 0.75.
        assert_eq!(
            ipsw_quantile(&trial, &odds, &policy, &design, 8, 0.25).unwrap(),
            Limit::Trivial
        );
    }

    #[test]
    fn policy_equal_to_design_gives_sample_mean() {
        let (trial, odds, _, design) = fixture();
        let v = ipsw_value(&trial, &odds, &PolicySpec::Uniform, &design, 4).unwrap();
        assert!((v - 9.5 / 4.0).abs() < 1e-15);
        let all = ipsw_cdf(&trial, &odds, &PolicySpec::Uniform, &design, 4, 100.0).unwrap();
        assert!((all - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_policy_mass_gives_zero() {
        let trial = TrialDataset::new(
            vec![
                TrialSample::new(vec![0.0], 0, 2.0),
                TrialSample::new(vec![0.0], 0, 4.0),
            ],
            2,
        )
        .unwrap();
        let design = TrialDesign::uniform(2).unwrap();
        let v = ipsw_value(&trial, &[1.0, 1.0], &PolicySpec::Constant(1), &design, 2).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn hajek_normalization_has_unit_mass() {
        let (trial, _, policy, design) = fixture();
        let w = IpswWeights::new(
            &trial,
            &[2.0, 1.0, 6.0, 1.0],
            &policy,
            &design,
            4,
            Normalization::TotalWeight,
        )
        .unwrap();
        assert!((w.cdf(100.0) - 1.0).abs() < 1e-15);
        assert!((w.value() - (4.0 * 1.0 + 12.0 * 3.0) / 16.0).abs() < 1e-15);
    }

    #[test]
    fn misaligned_odds_are_rejected() {
        let (trial, _, policy, design) = fixture();
        assert!(matches!(
            ipsw_value(&trial, &[1.0; 3], &policy, &design, 4),
            Err(Error::Misaligned {
                expected: 4,
                got: 3
            })
        ));
    }
}
