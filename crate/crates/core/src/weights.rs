//! Lower/upper distribution-shift weights under a declared miscalibration
//! degree Γ.
//!
//! A sample's nominal weight is `odds · ratio`, where `odds` are the nominal
//! selection odds `p̂(S=0|x)/p̂(S=1|x)` and `ratio` is the action factor
//! `p_π(a|x)/p(a)`. The band `[odds·ratio/Γ, Γ·odds·ratio]` then contains the
//! unobservable true weight up to the constant `p(S=1)/p(S=0)`, which is never
//! estimated because every downstream statistic is scale invariant.

use serde::{Deserialize, Serialize};

use crate::dataset::{PolicySpec, SplitResult, SplitStrategy, TrialDesign};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Miscalibration degree Γ ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gamma<T>(T);

impl<T: Scalar> Gamma<T> {
    pub fn new(gamma: T) -> Result<Self> {
        if gamma.is_finite() && gamma >= T::one() {
            Ok(Self(gamma))
        } else {
            Err(Error::InvalidParameter(format!(
                "gamma must be finite and >= 1, got {gamma}"
            )))
        }
    }

    pub fn calibrated() -> Self {
        Self(T::one())
    }

    pub fn value(self) -> T {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPair<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> WeightPair<T> {
    /// Scales both ends by `factor`.
    pub fn scaled(self, factor: T) -> Self {
        Self {
            lower: self.lower * factor,
            upper: self.upper * factor,
        }
    }
}

/// How the action factor of a weight is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// `p_π(a|x) / p(a)`, for randomly split data and for IPSW.
    Importance,
    /// Matched-split samples already carry the policy's action law; only the
    /// design normalization `1 / (K · p(a))` remains, which is 1 for a
    /// uniform design.
    Matched,
}

impl From<SplitStrategy> for RatioMode {
    fn from(strategy: SplitStrategy) -> Self {
        match strategy {
            SplitStrategy::Random => RatioMode::Importance,
            SplitStrategy::Matched => RatioMode::Matched,
        }
    }
}

/// Action factor for trial row `row` with action `a`.
pub fn policy_ratio<T: Scalar>(
    policy: &PolicySpec<T>,
    design: &TrialDesign<T>,
    row: usize,
    a: usize,
    mode: RatioMode,
) -> T {
    let k = design.k();
    match mode {
        RatioMode::Importance => policy.prob(row, a, k) / design.prob(a),
        RatioMode::Matched => {
            let uniform = T::one() / T::of_usize(k);
            if design.probs().iter().all(|&p| p == uniform) {
                T::one()
            } else {
                T::one() / (T::of_usize(k) * design.prob(a))
            }
        }
    }
}

/// `(odds·ratio/Γ, Γ·odds·ratio)`.
pub fn bounded_weights<T: Scalar>(odds: T, ratio: T, gamma: Gamma<T>) -> Result<WeightPair<T>> {
    if !(odds > T::zero()) || !odds.is_finite() {
        return Err(Error::InvalidOdds {
            row: 0,
            value: odds.to_f64_lossy(),
        });
    }
    if !(ratio >= T::zero()) || !ratio.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "action ratio must be finite and >= 0, got {ratio}"
        )));
    }
    let nominal = odds * ratio;
    Ok(WeightPair {
        lower: nominal / gamma.value(),
        upper: gamma.value() * nominal,
    })
}

/// Γ-free nominal weights `odds · ratio` for both halves of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitWeights<T> {
    /// Nominal weights of D' rows, in split order.
    pub prime: Vec<T>,
    /// `(loss, nominal weight)` for D'' rows, in split order.
    pub double_prime: Vec<(T, T)>,
}

/// Nominal weights for a split, given odds aligned to the *unsplit* trial rows.
///
/// For a matched split, D' rows use the policy draw `Ã_i` in place of their
/// (mismatched) trial action so they stand in for policy-distributed draws.
pub fn split_weights<T: Scalar>(
    split: &SplitResult<T>,
    odds: &[T],
    policy: &PolicySpec<T>,
    design: &TrialDesign<T>,
) -> Result<SplitWeights<T>> {
    let m = split.prime_indices.len() + split.double_prime_indices.len();
    if odds.len() != m {
        return Err(Error::Misaligned {
            expected: m,
            got: odds.len(),
        });
    }
    let mode = RatioMode::from(split.strategy);
    let checked = |row: usize| -> Result<T> {
        let o = odds[row];
        if o > T::zero() && o.is_finite() {
            Ok(o)
        } else {
            Err(Error::InvalidOdds {
                row,
                value: o.to_f64_lossy(),
            })
        }
    };

    let prime = split
        .prime_indices
        .iter()
        .zip(split.d_prime.samples())
        .map(|(&row, sample)| {
            let action = match split.strategy {
                SplitStrategy::Matched => split.policy_draws[row],
                SplitStrategy::Random => sample.a,
            };
            Ok(checked(row)? * policy_ratio(policy, design, row, action, mode))
        })
        .collect::<Result<Vec<_>>>()?;

    let double_prime = split
        .double_prime_indices
        .iter()
        .zip(split.d_double_prime.samples())
        .map(|(&row, sample)| {
            let ratio = policy_ratio(policy, design, row, sample.a, mode);
            Ok((sample.l, checked(row)? * ratio))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SplitWeights {
        prime,
        double_prime,
    })
}
