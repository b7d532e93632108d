//! Synthetic lab: Gaussian target/trial populations with a hidden selection
//! factor `U`, the treatment loss model, closed-form true selection odds, and a
//! Monte Carlo estimate of the miscoverage gap of a limit-producing method.
//!
//! Covariates are drawn per population as independent Gaussians
//! `X0, X1, U | S`. Losses follow `L | A, X, U ~ N(A·X0² + X1 + A·U + (1-A), σ²)`.
//! Since the generator samples `X, U | S` directly, true odds follow from
//! Bayes' rule: `prior_ratio · p(x, u | S=0) / p(x, u | S=1)`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{BetaRule, Limit, NominalWeights};
use crate::dataset::{
    matched_split, random_split, CovariateVector, PolicySpec, TargetCovariates, TrialDataset,
    TrialDesign, TrialSample,
};
use crate::error::{Error, Result};
use crate::ipsw::{IpswWeights, Normalization};
use crate::propensity::{fit_logistic, FitHyper, LabeledPool};
use crate::rng::{self, derive_seed};
use crate::weights::{split_weights, Gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub mu0: f64,
    pub mu1: f64,
    pub mu_u: f64,
    pub var0: f64,
    pub var1: f64,
    pub var_u: f64,
}

impl PopulationParams {
    pub fn new(mu0: f64, mu1: f64, mu_u: f64, var0: f64, var1: f64, var_u: f64) -> Result<Self> {
        let p = Self {
            mu0,
            mu1,
            mu_u,
            var0,
            var1,
            var_u,
        };
        let finite = [mu0, mu1, mu_u, var0, var1, var_u]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(var0 > 0.0 && var1 > 0.0 && var_u > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "population needs finite means and positive variances: {p:?}"
            )));
        }
        Ok(p)
    }

    pub const A: Self = Self::constant(0.5, 0.5, 0.5, 1.0, 1.0, 1.0);
    pub const B: Self = Self::constant(0.0, 0.5, 0.0, 1.25, 1.5, 1.25);
    pub const C: Self = Self::constant(0.0, 0.0, 0.0, 1.5, 1.5, 1.5);
    pub const D: Self = Self::constant(0.25, 0.25, 0.25, 1.0, 0.25, 0.5);
    pub const TRIAL: Self = Self::constant(0.0, 0.0, 0.0, 1.0, 1.0, 1.0);

    const fn constant(mu0: f64, mu1: f64, mu_u: f64, var0: f64, var1: f64, var_u: f64) -> Self {
        Self {
            mu0,
            mu1,
            mu_u,
            var0,
            var1,
            var_u,
        }
    }

    /// Built-in populations `A`, `B`, `C`, `D` and `Trial` (case-insensitive).
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "a" => Some(Self::A),
            "b" => Some(Self::B),
            "c" => Some(Self::C),
            "d" => Some(Self::D),
            "trial" => Some(Self::TRIAL),
            _ => None,
        }
    }

    pub fn means(&self) -> [f64; 3] {
        [self.mu0, self.mu1, self.mu_u]
    }

    pub fn variances(&self) -> [f64; 3] {
        [self.var0, self.var1, self.var_u]
    }

    fn draw(&self, rng: &mut rng::Rng) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (v, (mu, var)) in out
            .iter_mut()
            .zip(self.means().into_iter().zip(self.variances()))
        {
            *v = Normal::new(mu, var.sqrt())
                .expect("validated variance")
                .sample(rng);
        }
        out
    }
}

/// `log N(x; mu, var)` up to the shared `-½ log 2π` term.
fn log_density_kernel(x: f64, mu: f64, var: f64) -> f64 {
    -0.5 * (x - mu).powi(2) / var - 0.5 * var.ln()
}

fn log_ratio(x: f64, num: (f64, f64), den: (f64, f64)) -> f64 {
    log_density_kernel(x, num.0, num.1) - log_density_kernel(x, den.0, den.1)
}

/// Selection odds given `X` only (`U` integrated out).
pub fn true_odds(
    x: &CovariateVector<f64>,
    target: &PopulationParams,
    trial: &PopulationParams,
    prior_ratio: f64,
) -> f64 {
    let v = x.values();
    let log = log_ratio(v[0], (target.mu0, target.var0), (trial.mu0, trial.var0))
        + log_ratio(v[1], (target.mu1, target.var1), (trial.mu1, trial.var1));
    prior_ratio * log.exp()
}

/// Selection odds given both `X` and the hidden `U`.
pub fn true_odds_with_u(
    x: &CovariateVector<f64>,
    u: f64,
    target: &PopulationParams,
    trial: &PopulationParams,
    prior_ratio: f64,
) -> f64 {
    true_odds(x, target, trial, prior_ratio) * u_density_ratio(u, target, trial)
}

/// `p(u | S=0) / p(u | S=1)`.
pub fn u_density_ratio(u: f64, target: &PopulationParams, trial: &PopulationParams) -> f64 {
    log_ratio(u, (target.mu_u, target.var_u), (trial.mu_u, trial.var_u)).exp()
}

/// True odds divided by a model's nominal odds.
pub fn true_miscalibration(
    x: &CovariateVector<f64>,
    u: f64,
    model_odds: f64,
    target: &PopulationParams,
    trial: &PopulationParams,
    prior_ratio: f64,
) -> f64 {
    true_odds_with_u(x, u, target, trial, prior_ratio) / model_odds
}

/// Conditional mean of the loss model.
pub fn loss_mean(a: usize, x0: f64, x1: f64, u: f64) -> f64 {
    let a = a as f64;
    a * x0 * x0 + x1 + a * u + (1.0 - a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetDraw {
    pub covariates: TargetCovariates<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialDraw {
    pub data: TrialDataset<f64>,
    pub u: Vec<f64>,
}

pub fn sample_target(params: &PopulationParams, n: usize, seed: u64) -> Result<TargetDraw> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let mut r = rng::seeded(seed);
    let mut rows = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for _ in 0..n {
        let [x0, x1, ui] = params.draw(&mut r);
        rows.push(vec![x0, x1].into());
        u.push(ui);
    }
    Ok(TargetDraw {
        covariates: TargetCovariates::new(rows)?,
        u,
    })
}

fn check_binary(design: &TrialDesign<f64>) -> Result<()> {
    if design.k() != 2 {
        return Err(Error::InvalidParameter(format!(
            "the synthetic loss model needs binary actions, design has K = {}",
            design.k()
        )));
    }
    Ok(())
}

pub fn sample_trial(
    params: &PopulationParams,
    m: usize,
    design: &TrialDesign<f64>,
    noise_sd: f64,
    seed: u64,
) -> Result<TrialDraw> {
    check_binary(design)?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| Error::InvalidParameter(format!("noise sd {noise_sd}: {e}")))?;
    let mut r = rng::seeded(seed);
    let mut samples = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m);
    for _ in 0..m {
        let [x0, x1, ui] = params.draw(&mut r);
        let a = design.draw(r.random::<f64>());
        let l = loss_mean(a, x0, x1, ui) + noise.sample(&mut r);
        samples.push(TrialSample::new(vec![x0, x1], a, l));
        u.push(ui);
    }
    Ok(TrialDraw {
        data: TrialDataset::new(samples, 2)?,
        u,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub target: PopulationParams,
    pub trial: PopulationParams,
    pub design: TrialDesign<f64>,
    /// Evaluated policy; must not depend on covariates.
    pub policy: PolicySpec<f64>,
    pub noise_sd: f64,
    /// Target covariate rows per run.
    pub n: usize,
    /// Trial rows per run used to build limits.
    pub m: usize,
    /// Additional held-out trial rows per run used to fit the odds model.
    pub m_fit: usize,
}

impl SimScenario {
    /// Treat-all policy, balanced binary trial, unit noise, `m_fit = m`.
    pub fn new(target: PopulationParams, n: usize, m: usize) -> Self {
        Self {
            target,
            trial: PopulationParams::TRIAL,
            design: TrialDesign::uniform(2).expect("K = 2"),
            policy: PolicySpec::Constant(1),
            noise_sd: 1.0,
            n,
            m,
            m_fit: m,
        }
    }

    /// Default Bayes prior `n / m`: the pooled class ratio when the odds
    /// model is fitted on `n` target rows against `m` trial rows.
    pub fn prior_ratio(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    fn validate(&self) -> Result<()> {
        check_binary(&self.design)?;
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidParameter("n and m must be >= 1".into()));
        }
        if !self.policy.is_covariate_free() {
            return Err(Error::InvalidParameter(
                "simulation needs a constant or uniform policy".into(),
            ));
        }
        self.policy.validate(2, None)?;
        if !(self.noise_sd > 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidParameter("noise sd must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddsSource {
    /// `true_odds_with_u` on the hidden `U`; satisfies the band with Γ = 1.
    OracleWithU,
    /// `true_odds` from `X` alone.
    OracleX,
    /// Logistic model fitted per run on `n` target vs `m_fit` trial rows.
    Logistic(FitHyper),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SplitConfig {
    Random { frac: f64 },
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    Certified {
        gamma: f64,
        beta_rule: BetaRule<f64>,
        split: SplitConfig,
    },
    Ipsw {
        normalization: Normalization,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub alpha: f64,
    pub exceed_rate: f64,
    /// `α - exceed_rate`; negative means the limit is invalid.
    pub gap: f64,
    /// `sqrt(rate · (1 - rate) / (R · T))`.
    pub se: f64,
    /// Fraction of runs whose limit was trivial.
    pub trivial_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiscoverageReport {
    pub entries: Vec<GapEntry>,
    pub runs: usize,
    pub per_run: usize,
    /// Runs whose logistic fit stopped before reaching tolerance.
    pub nonconverged_fits: usize,
    pub se_convention: String,
}

impl MiscoverageReport {
    pub fn entry(&self, alpha: f64) -> Option<&GapEntry> {
        self.entries.iter().find(|e| e.alpha == alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub alphas: Vec<f64>,
    pub runs: usize,
    pub per_run: usize,
    pub seed: u64,
    pub parallel: bool,
}

/// One run's data, odds and limits. Exposed so callers can inspect a single
/// replication (e.g. informativeness studies).
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trial: TrialDraw,
    pub odds: Vec<f64>,
    pub limits: Vec<Limit<f64>>,
    pub fit_converged: bool,
}

/// Per-run stream indices under the run seed.
mod stream {
    pub const TARGET: u64 = 0;
    pub const TRIAL: u64 = 1;
    pub const FIT_TRIAL: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const FRESH: u64 = 4;
}

/// Odds for the trial rows of a replication.
pub fn scenario_odds(
    scenario: &SimScenario,
    source: &OddsSource,
    target: &TargetDraw,
    trial: &TrialDraw,
    run_seed: u64,
) -> Result<(Vec<f64>, bool)> {
    let prior = scenario.prior_ratio();
    let rows = trial.data.samples().iter().map(|s| &s.x);
    match source {
        OddsSource::OracleWithU => Ok((
            rows.zip(&trial.u)
                .map(|(x, &u)| true_odds_with_u(x, u, &scenario.target, &scenario.trial, prior))
                .collect(),
            true,
        )),
        OddsSource::OracleX => Ok((
            rows.map(|x| true_odds(x, &scenario.target, &scenario.trial, prior))
                .collect(),
            true,
        )),
        OddsSource::Logistic(hyper) => {
            if scenario.m_fit == 0 {
                return Err(Error::InvalidParameter(
                    "logistic odds need m_fit >= 1 held-out trial rows".into(),
                ));
            }
            let held_out = sample_trial(
                &scenario.trial,
                scenario.m_fit,
                &scenario.design,
                scenario.noise_sd,
                derive_seed(run_seed, stream::FIT_TRIAL),
            )?;
            let pool = LabeledPool::from_parts(&target.covariates, &held_out.data)?;
            let fit = fit_logistic(&pool, hyper)?;
            Ok((fit.model.odds_for(rows)?, fit.report.converged))
        }
    }
}

/// Generates one replication and computes its limits at every α.
pub fn run_once(
    scenario: &SimScenario,
    source: &OddsSource,
    method: &Method,
    alphas: &[f64],
    run_seed: u64,
) -> Result<RunOutput> {
    let target = sample_target(
        &scenario.target,
        scenario.n,
        derive_seed(run_seed, stream::TARGET),
    )?;
    let trial = sample_trial(
        &scenario.trial,
        scenario.m,
        &scenario.design,
        scenario.noise_sd,
        derive_seed(run_seed, stream::TRIAL),
    )?;
    let (odds, fit_converged) = scenario_odds(scenario, source, &target, &trial, run_seed)?;

    let limits = match method {
        Method::Certified {
            gamma,
            beta_rule,
            split,
        } => {
            let split_seed = derive_seed(run_seed, stream::SPLIT);
            let split = match split {
                SplitConfig::Random { frac } => random_split(&trial.data, *frac, split_seed)?,
                SplitConfig::Matched => {
                    matched_split(&trial.data, &scenario.policy, &scenario.design, split_seed)?
                }
            };
            let w = split_weights(&split, &odds, &scenario.policy, &scenario.design)?;
            let nominal = NominalWeights::new(w.prime, w.double_prime)?;
            let (cal, ws) = nominal.at_gamma(Gamma::new(*gamma)?);
            alphas
                .iter()
                .map(|&a| crate::conformal::limit(&cal, &ws, a, &beta_rule.betas_for(a)))
                .collect::<Result<Vec<_>>>()?
        }
        Method::Ipsw { normalization } => {
            let w = IpswWeights::new(
                &trial.data,
                &odds,
                &scenario.policy,
                &scenario.design,
                scenario.n,
                *normalization,
            )?;
            alphas.iter().map(|&a| w.quantile(a)).collect()
        }
    };
    Ok(RunOutput {
        trial,
        odds,
        limits,
        fit_converged,
    })
}

/// Fresh target individuals acting under the scenario's policy: `(loss)` only.
pub fn fresh_target_losses(scenario: &SimScenario, count: usize, seed: u64) -> Result<Vec<f64>> {
    let noise = Normal::new(0.0, scenario.noise_sd)
        .map_err(|e| Error::InvalidParameter(format!("noise sd: {e}")))?;
    let mut r = rng::seeded(seed);
    Ok((0..count)
        .map(|_| {
            let [x0, x1, u] = scenario.target.draw(&mut r);
            let a = scenario.policy.draw(0, 2, r.random::<f64>());
            loss_mean(a, x0, x1, u) + noise.sample(&mut r)
        })
        .collect())
}

struct RunTally {
    exceed: Vec<u64>,
    trivial: Vec<u64>,
    converged: bool,
}

/// Monte Carlo miscoverage gap over `runs` replications, each scored on
/// `per_run` fresh target draws.
pub fn miscoverage_gap(
    scenario: &SimScenario,
    source: &OddsSource,
    method: &Method,
    config: &McConfig,
) -> Result<MiscoverageReport> {
    scenario.validate()?;
    if config.runs == 0 || config.per_run == 0 {
        return Err(Error::InvalidParameter(
            "runs and per-run size must be >= 1".into(),
        ));
    }
    if config.alphas.is_empty() || config.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidParameter("alphas must lie in (0, 1)".into()));
    }
    if let Method::Certified { gamma, .. } = method {
        Gamma::new(*gamma)?;
    }

    let tally = |r: usize| -> Result<RunTally> {
        let run_seed = derive_seed(config.seed, r as u64);
        let out = run_once(scenario, source, method, &config.alphas, run_seed)?;
        let losses = fresh_target_losses(
            scenario,
            config.per_run,
            derive_seed(run_seed, stream::FRESH),
        )?;
        let exceed = out
            .limits
            .iter()
            .map(|limit| losses.iter().filter(|&&l| !limit.covers(l)).count() as u64)
            .collect();
        let trivial = out
            .limits
            .iter()
            .map(|l| u64::from(l.is_trivial()))
            .collect();
        Ok(RunTally {
            exceed,
            trivial,
            converged: out.fit_converged,
        })
    };

    let tallies: Vec<RunTally> = if config.parallel {
        (0..config.runs)
            .into_par_iter()
            .map(tally)
            .collect::<Result<_>>()?
    } else {
        (0..config.runs).map(tally).collect::<Result<_>>()?
    };

    let k = config.alphas.len();
    let mut exceed = vec![0u64; k];
    let mut trivial = vec![0u64; k];
    let mut nonconverged = 0;
    for t in &tallies {
        for j in 0..k {
            exceed[j] += t.exceed[j];
            trivial[j] += t.trivial[j];
        }
        nonconverged += usize::from(!t.converged);
    }

    let events = (config.runs * config.per_run) as f64;
    let entries = config
        .alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let rate = exceed[j] as f64 / events;
            GapEntry {
                alpha,
                exceed_rate: rate,
                gap: alpha - rate,
                se: (rate * (1.0 - rate) / events).sqrt(),
                trivial_rate: trivial[j] as f64 / config.runs as f64,
            }
        })
        .collect();

    Ok(MiscoverageReport {
        entries,
        runs: config.runs,
        per_run: config.per_run,
        nonconverged_fits: nonconverged,
        se_convention: "sqrt(rate*(1-rate)/(R*T))".into(),
    })
}
