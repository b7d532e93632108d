//! Certified quantile engine.
//!
//! D' supplies an order-statistic bound `w̄_β` on the upper weight of a future
//! target individual; D'' supplies a weighted stand-in CDF whose lower/upper
//! weights are tilted against small losses. The limit for level α is the
//! smallest stand-in quantile at level `(1-α)/(1-β)` over a grid of β in
//! `(0, α)`. Limit curves repeat this over α and Γ grids.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{snapped_ceil, Scalar};
use crate::weights::{Gamma, WeightPair};

/// Order-statistic weight bound: finite, or the "no finite bound" branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBound<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> WeightBound<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, WeightBound::Finite(_))
    }
}

/// A loss limit, or the trivial limit `L_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit<T> {
    Finite(T),
    Trivial,
}

impl<T: Scalar> Limit<T> {
    pub fn is_trivial(&self) -> bool {
        matches!(self, Limit::Trivial)
    }

    pub fn finite(&self) -> Option<T> {
        match self {
            Limit::Finite(v) => Some(*v),
            Limit::Trivial => None,
        }
    }

    /// Numeric value with the trivial limit mapped to `l_max`.
    pub fn value_or(&self, l_max: T) -> T {
        self.finite().unwrap_or(l_max)
    }

    /// Whether a realized loss lies at or below the limit.
    pub fn covers(&self, loss: T) -> bool {
        match self {
            Limit::Finite(v) => loss <= *v,
            Limit::Trivial => true,
        }
    }

    /// Total order with the trivial limit above every finite value.
    pub fn cmp_limit(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Limit::Trivial, Limit::Trivial) => Ordering::Equal,
            (Limit::Trivial, Limit::Finite(_)) => Ordering::Greater,
            (Limit::Finite(_), Limit::Trivial) => Ordering::Less,
            (Limit::Finite(a), Limit::Finite(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
        }
    }
}

fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Upper weights of D' in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBoundSet<T> {
    sorted_upper: Vec<T>,
}

impl<T: Scalar> WeightBoundSet<T> {
    pub fn new(mut upper: Vec<T>) -> Result<Self> {
        if upper.is_empty() {
            return Err(Error::InvalidParameter("D' is empty".into()));
        }
        if let Some(bad) = upper.iter().find(|w| !(**w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "D' upper weight {bad} is negative or non-finite"
            )));
        }
        upper.sort_by(total_cmp);
        Ok(Self {
            sorted_upper: upper,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted_upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_upper.is_empty()
    }

    pub fn sorted(&self) -> &[T] {
        &self.sorted_upper
    }

    /// `W̄_[⌈(m'+1)(1-β)⌉]` (1-based) when `(m'+1)(1-β) ≤ m'`, else infinite.
    pub fn weight_bound(&self, beta: T) -> WeightBound<T> {
        let m = self.sorted_upper.len();
        let position = T::of_usize(m + 1) * (T::one() - beta);
        let index = snapped_ceil(position);
        if index > T::of_usize(m) || !(index >= T::one()) {
            return WeightBound::Infinite;
        }
        let index = index.to_usize().expect("index within 1..=m'");
        WeightBound::Finite(self.sorted_upper[index - 1])
    }
}

/// D'' losses with their weight pairs, sorted by loss (ties by input order),
/// with cumulative sums over distinct loss values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet<T> {
    losses: Vec<T>,
    pairs: Vec<WeightPair<T>>,
    order: Vec<usize>,
    /// Distinct losses, ascending.
    levels: Vec<T>,
    /// Σ lower over samples with loss ≤ `levels[g]`.
    lower_at_or_below: Vec<T>,
    /// Σ upper over samples with loss > `levels[g]`.
    upper_above: Vec<T>,
    /// Σ upper over all samples (the `ℓ < min loss` case).
    upper_total: T,
}

impl<T: Scalar> CalibrationSet<T> {
    pub fn new(entries: Vec<(T, WeightPair<T>)>) -> Result<Self> {
        for (i, (loss, pair)) in entries.iter().enumerate() {
            if !loss.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "D'' loss {i} is not finite"
                )));
            }
            let ok = |w: T| w >= T::zero() && w.is_finite();
            if !ok(pair.lower) || !ok(pair.upper) || pair.lower > pair.upper {
                return Err(Error::InvalidParameter(format!(
                    "D'' weight pair {i} is invalid: {pair:?}"
                )));
            }
        }
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by(|&a, &b| total_cmp(&entries[a].0, &entries[b].0).then(a.cmp(&b)));
        let losses: Vec<T> = order.iter().map(|&i| entries[i].0).collect();
        let pairs: Vec<WeightPair<T>> = order.iter().map(|&i| entries[i].1).collect();
        Ok(Self::from_sorted(losses, pairs, order))
    }

    fn from_sorted(losses: Vec<T>, pairs: Vec<WeightPair<T>>, order: Vec<usize>) -> Self {
        let n = losses.len();
        let mut levels = Vec::new();
        let mut group_end = Vec::new();
        for i in 0..n {
            if i + 1 == n || losses[i + 1] != losses[i] {
                levels.push(losses[i]);
                group_end.push(i + 1);
            }
        }

        let mut lower_at_or_below = Vec::with_capacity(levels.len());
        let mut acc = T::zero();
        let mut start = 0;
        for &end in &group_end {
            for pair in &pairs[start..end] {
                acc = acc + pair.lower;
            }
            lower_at_or_below.push(acc);
            start = end;
        }

        // Suffix sums accumulated from the right so no cancellation occurs.
        let mut upper_above = vec![T::zero(); levels.len()];
        let mut acc = T::zero();
        let mut end = n;
        for g in (0..levels.len()).rev() {
            for pair in pairs[group_end[g]..end].iter().rev() {
                acc = acc + pair.upper;
            }
            upper_above[g] = acc;
            end = group_end[g];
        }
        let mut upper_total = acc;
        for pair in pairs[..end].iter().rev() {
            upper_total = upper_total + pair.upper;
        }

        Self {
            losses,
            pairs,
            order,
            levels,
            lower_at_or_below,
            upper_above,
            upper_total,
        }
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// Losses in ascending order.
    pub fn sorted_losses(&self) -> &[T] {
        &self.losses
    }

    /// Weight pairs aligned with [`Self::sorted_losses`].
    pub fn sorted_pairs(&self) -> &[WeightPair<T>] {
        &self.pairs
    }

    /// Input position of each sorted entry.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Distinct loss values, ascending. The stand-in CDF only jumps here.
    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    fn cdf_at_level(&self, g: usize, w: T) -> T {
        let below = self.lower_at_or_below[g];
        let denominator = below + self.upper_above[g] + w;
        if denominator > T::zero() {
            below / denominator
        } else {
            T::zero()
        }
    }

    /// Stand-in CDF at `ell` with out-of-sample weight `w`.
    pub fn stand_in_cdf(&self, w: WeightBound<T>, ell: T) -> T {
        let WeightBound::Finite(w) = w else {
            return T::zero();
        };
        let count = self.levels.partition_point(|&level| level <= ell);
        if count == 0 {
            return T::zero();
        }
        self.cdf_at_level(count - 1, w)
    }

    /// Smallest observed loss at which the stand-in CDF reaches
    /// `(1-α)/(1-β)`, or the trivial limit.
    pub fn quantile(&self, w: WeightBound<T>, alpha: T, beta: T) -> Limit<T> {
        let WeightBound::Finite(w) = w else {
            return Limit::Trivial;
        };
        let threshold = (T::one() - alpha) / (T::one() - beta);
        let reach = threshold - T::rounding_slack(threshold);
        (0..self.levels.len())
            .find(|&g| self.cdf_at_level(g, w) >= reach)
            .map_or(Limit::Trivial, |g| Limit::Finite(self.levels[g]))
    }
}

/// How β candidates are chosen for a given α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule<T> {
    /// `{α/steps, 2α/steps, …, (steps-1)α/steps}`.
    Proportional { steps: usize },
    /// A fixed list; entries outside `(0, α)` are skipped.
    Fixed(Vec<T>),
}

impl<T: Scalar> Default for BetaRule<T> {
    fn default() -> Self {
        BetaRule::Proportional { steps: 50 }
    }
}

impl<T: Scalar> BetaRule<T> {
    pub fn betas_for(&self, alpha: T) -> Vec<T> {
        match self {
            BetaRule::Proportional { steps } => (1..*steps)
                .map(|k| T::of_usize(k) * alpha / T::of_usize(*steps))
                .collect(),
            BetaRule::Fixed(betas) => betas
                .iter()
                .copied()
                .filter(|&b| b > T::zero() && b < alpha)
                .collect(),
        }
    }
}

/// `{0.01, 0.02, …, 0.99}`.
pub fn default_alpha_grid<T: Scalar>() -> Vec<T> {
    (1..100).map(|k| T::of_usize(k) / T::of(100.0)).collect()
}

/// Minimum over the feasible β grid of the stand-in quantile.
pub fn limit<T: Scalar>(
    cal: &CalibrationSet<T>,
    ws: &WeightBoundSet<T>,
    alpha: T,
    betas: &[T],
) -> Result<Limit<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut best: Option<Limit<T>> = None;
    for &beta in betas.iter().filter(|&&b| b > T::zero() && b < alpha) {
        let candidate = cal.quantile(ws.weight_bound(beta), alpha, beta);
        best = Some(match best {
            Some(current) if current.cmp_limit(&candidate) != Ordering::Greater => current,
            _ => candidate,
        });
    }
    best.ok_or(Error::EmptyBetaGrid {
        alpha: alpha.to_f64_lossy(),
    })
}

/// Γ-free inputs to a limit curve: nominal weights `odds · ratio` for D' and
/// `(loss, nominal weight)` for D'', each sorted once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalWeights<T> {
    prime_sorted: Vec<T>,
    double_prime: CalibrationSet<T>,
}

impl<T: Scalar> NominalWeights<T> {
    pub fn new(prime: Vec<T>, double_prime: Vec<(T, T)>) -> Result<Self> {
        let prime_sorted = WeightBoundSet::new(prime)?.sorted_upper;
        if double_prime.is_empty() {
            return Err(Error::InvalidParameter("D'' is empty".into()));
        }
        let entries = double_prime
            .into_iter()
            .map(|(loss, w)| (loss, WeightPair { lower: w, upper: w }))
            .collect();
        Ok(Self {
            prime_sorted,
            double_prime: CalibrationSet::new(entries)?,
        })
    }

    /// Calibration and weight-bound sets at degree Γ, reusing the sort order.
    pub fn at_gamma(&self, gamma: Gamma<T>) -> (CalibrationSet<T>, WeightBoundSet<T>) {
        let g = gamma.value();
        let pairs = self
            .double_prime
            .pairs
            .iter()
            .map(|p| WeightPair {
                lower: p.lower / g,
                upper: g * p.upper,
            })
            .collect();
        let cal = CalibrationSet::from_sorted(
            self.double_prime.losses.clone(),
            pairs,
            self.double_prime.order.clone(),
        );
        let ws = WeightBoundSet {
            sorted_upper: self.prime_sorted.iter().map(|&w| g * w).collect(),
        };
        (cal, ws)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEntry<T> {
    pub gamma: T,
    pub alpha: T,
    pub limit: Limit<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCurve<T> {
    /// Γ-major, α-minor, in the order of the input grids.
    pub entries: Vec<LimitEntry<T>>,
    /// `(Γ, informativeness)` per Γ.
    pub informativeness: Vec<(T, T)>,
    pub alpha_grid: Vec<T>,
    pub gammas: Vec<T>,
    pub l_max: T,
}

impl<T: Scalar> LimitCurve<T> {
    /// Entries for one Γ, in α-grid order.
    pub fn curve(&self, gamma: T) -> impl Iterator<Item = &LimitEntry<T>> {
        self.entries.iter().filter(move |e| e.gamma == gamma)
    }

    pub fn informativeness_at(&self, gamma: T) -> Option<T> {
        self.informativeness
            .iter()
            .find(|(g, _)| *g == gamma)
            .map(|&(_, i)| i)
    }
}

/// `1 - min{α : limit(α) < L_max}`, or 0 when no limit is below `l_max`.
pub fn informativeness<T: Scalar>(points: &[(T, Limit<T>)], l_max: T) -> T {
    points
        .iter()
        .filter(|(_, l)| l.finite().is_some_and(|v| v < l_max))
        .map(|&(a, _)| a)
        .fold(None, |min: Option<T>, a| Some(min.map_or(a, |m| m.min(a))))
        .map_or(T::zero(), |a| T::one() - a)
}

/// Limits for every `(Γ, α)` pair of the grids.
pub fn limit_curve<T: Scalar>(
    nominal: &NominalWeights<T>,
    alpha_grid: &[T],
    gammas: &[T],
    beta_rule: &BetaRule<T>,
    l_max: T,
) -> Result<LimitCurve<T>> {
    if alpha_grid.is_empty() || gammas.is_empty() {
        return Err(Error::InvalidParameter(
            "alpha and gamma grids must be nonempty".into(),
        ));
    }
    let mut entries = Vec::with_capacity(alpha_grid.len() * gammas.len());
    let mut info = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let gamma = Gamma::new(g)?;
        let (cal, ws) = nominal.at_gamma(gamma);
        let column = alpha_grid
            .par_iter()
            .map(|&alpha| limit(&cal, &ws, alpha, &beta_rule.betas_for(alpha)).map(|l| (alpha, l)))
            .collect::<Result<Vec<_>>>()?;
        info.push((g, informativeness(&column, l_max)));
        entries.extend(column.into_iter().map(|(alpha, limit)| LimitEntry {
            gamma: g,
            alpha,
            limit,
        }));
    }
    Ok(LimitCurve {
        entries,
        informativeness: info,
        alpha_grid: alpha_grid.to_vec(),
        gammas: gammas.to_vec(),
        l_max,
    })
}
