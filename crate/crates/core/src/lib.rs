//! Certified loss limits for evaluating decision policies with randomized
//! trial data transported to a target population.
//!
//! The numeric core (datasets, weights, conformal limits, IPSW baselines) is
//! generic over [`Scalar`], implemented for `f32` and `f64`. Odds modelling,
//! Γ benchmarking and the synthetic lab work in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod dataset;
pub mod error;
pub mod gamma_bench;
pub mod ipsw;
pub mod propensity;
pub mod rng;
pub mod scalar;
pub mod simlab;
pub mod weights;

pub use conformal::{
    default_alpha_grid, informativeness, limit, limit_curve, BetaRule, CalibrationSet, Limit,
    LimitCurve, LimitEntry, NominalWeights, WeightBound, WeightBoundSet,
};
pub use dataset::{
    matched_split, random_split, validate_dataset, CovariateVector, PolicySpec, SplitResult,
    SplitStrategy, TargetCovariates, TrialDataset, TrialDesign, TrialSample, ValidationReport,
};
pub use error::{Error, Result};
pub use ipsw::{ipsw_cdf, ipsw_quantile, ipsw_value, IpswWeights, Normalization};
pub use propensity::{
    fit_logistic, load_external_scores, reliability_diagram, FitHyper, LabeledPool, LogisticModel,
    OddsTable,
};
pub use scalar::Scalar;
pub use weights::{bounded_weights, split_weights, Gamma, WeightPair};

pub type Limit64 = Limit<f64>;
pub type Limit32 = Limit<f32>;
pub type LimitCurve64 = LimitCurve<f64>;
pub type LimitCurve32 = LimitCurve<f32>;
pub type CalibrationSet64 = CalibrationSet<f64>;
pub type CalibrationSet32 = CalibrationSet<f32>;
pub type TrialDataset64 = TrialDataset<f64>;
pub type TrialDataset32 = TrialDataset<f32>;
pub type TargetCovariates64 = TargetCovariates<f64>;
pub type TargetCovariates32 = TargetCovariates<f32>;
pub type PolicySpec64 = PolicySpec<f64>;
pub type PolicySpec32 = PolicySpec<f32>;
pub type TrialDesign64 = TrialDesign<f64>;
pub type TrialDesign32 = TrialDesign<f32>;
pub type Gamma64 = Gamma<f64>;
pub type Gamma32 = Gamma<f32>;
