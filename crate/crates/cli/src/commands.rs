//! Subcommand bodies. Each reads its inputs, validates them before any
//! computation, and writes its outputs atomically.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use certlim::gamma_bench::{benchmark_all, EvalRows};
use certlim::propensity::{
    fit_logistic, parse_external_scores, reliability_diagram, FitReport, OddsTable,
};
use certlim::simlab::{self, McConfig, MiscoverageReport, OddsSource, SimScenario, SplitConfig};
use certlim::{
    limit_curve, matched_split, random_split, split_weights, validate_dataset, BetaRule,
    CovariateVector, IpswWeights, Limit, LogisticModel, NominalWeights,
};
use serde::{Deserialize, Serialize};

use crate::io::{self, fmt_f64};
use crate::{
    BenchmarkArgs, EvaluateArgs, FitArgs, IpswArgs, MethodKind, MiscoverageArgs, OddsArgs,
    OddsKind, ReliabilityArgs, RowsKind, ScoreArgs, SimulateArgs, SplitKind,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, B: Serialize> {
    schema_version: u32,
    command: &'a str,
    config: &'a C,
    #[serde(flatten)]
    body: B,
}

fn write_envelope(
    path: &Path,
    command: &str,
    config: &impl Serialize,
    body: impl Serialize,
) -> Result<()> {
    io::write_json(
        path,
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command,
            config,
            body,
        },
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model: LogisticModel,
    pub report: FitReport,
}

fn load_model(path: &Path) -> Result<LogisticModel> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model {}", path.display()))?;
    let file: ModelFile =
        serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))?;
    if file.schema_version != SCHEMA_VERSION {
        bail!(
            "{}: schema version {} is not supported",
            path.display(),
            file.schema_version
        );
    }
    Ok(file.model)
}

fn load_odds(args: &OddsArgs, rows: &[CovariateVector<f64>]) -> Result<Vec<f64>> {
    let table = match (&args.model, &args.scores) {
        (Some(model), None) => OddsTable::from_model(&load_model(model)?, rows)?,
        (None, Some(scores)) => {
            let file = std::fs::File::open(scores)
                .with_context(|| format!("opening {}", scores.display()))?;
            parse_external_scores(file, rows.len())
                .with_context(|| format!("reading scores {}", scores.display()))?
        }
        _ => bail!("give exactly one of --model and --scores"),
    };
    Ok(table
        .with_prior_correction(args.prior_correction)?
        .odds()
        .to_vec())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let design = args.design.resolve()?;
    let target = simlab::sample_target(
        &args.pop.params,
        args.n,
        certlim::rng::derive_seed(args.seed, 0),
    )?;
    let trial = simlab::sample_trial(
        &args.trial_pop.params,
        args.m,
        &design,
        args.noise_sd,
        certlim::rng::derive_seed(args.seed, 1),
    )?;
    io::write_target(&args.target_out, &target.covariates)?;
    io::write_trial(&args.trial_out, &trial.data)?;
    println!(
        "wrote {} target rows to {} and {} trial rows to {}",
        args.n,
        args.target_out.display(),
        args.m,
        args.trial_out.display()
    );
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let pool = io::read_pool(&args.pool)?;
    let outcome = fit_logistic(&pool, &args.hyper.hyper())?;
    if !outcome.report.converged {
        bail!(
            "non-converged: gradient max-norm {:e} after {} iterations (tolerance {:e}); \
             the pool may be separable, set --l2 > 0 or raise --max-iter",
            outcome.report.grad_max_norm,
            outcome.report.iterations,
            args.hyper.tol
        );
    }
    io::write_json(
        &args.out,
        &ModelFile {
            schema_version: SCHEMA_VERSION,
            model: outcome.model,
            report: outcome.report,
        },
    )?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let rows = io::read_covariates(&args.data)?;
    let odds = model.odds_for(&rows)?;
    let table: Vec<Vec<String>> = odds
        .iter()
        .enumerate()
        .map(|(i, &o)| vec![i.to_string(), fmt_f64(o)])
        .collect();
    io::write_csv(&args.out, &["id".into(), "odds".into()], &table)
}

#[derive(Serialize)]
struct CurvePoint {
    gamma: f64,
    alpha: f64,
    /// The limit, or `l_max` when trivial (`null` if no `l_max` was given).
    limit: Option<f64>,
    trivial: bool,
}

fn limit_fields(limit: Limit<f64>, l_max: Option<f64>) -> (Option<f64>, bool) {
    match limit {
        Limit::Finite(v) => (Some(v), false),
        Limit::Trivial => (l_max, true),
    }
}

fn optional(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let design = args.policy.design.resolve()?;
    let trial = io::read_trial(&args.trial, design.k())?;
    let policy = args.policy.policy.resolve()?;
    policy.validate(design.k(), Some(trial.len()))?;
    if let Some(l_max) = args.l_max {
        if !l_max.is_finite() {
            bail!("--l-max must be finite");
        }
    }
    if args.beta_steps < 2 {
        bail!("--beta-steps must be >= 2");
    }
    let validation = match &args.target {
        Some(path) => {
            let target = io::read_target(path)?;
            let report = validate_dataset(&trial, &target, args.l_max);
            if !report.all_passed() {
                let failed: Vec<String> = report
                    .failures()
                    .map(|c| format!("{} ({})", c.name, c.detail))
                    .collect();
                bail!("dataset validation failed: {}", failed.join("; "));
            }
            Some(report)
        }
        None => None,
    };
    let rows: Vec<CovariateVector<f64>> = trial.samples().iter().map(|s| s.x.clone()).collect();
    let odds = load_odds(&args.odds, &rows)?;

    let split = match args.split {
        SplitKind::Matched => matched_split(&trial, &policy, &design, args.seed)?,
        SplitKind::Random => random_split(&trial, args.frac, args.seed)?,
    };
    let weights = split_weights(&split, &odds, &policy, &design)?;
    let nominal = NominalWeights::new(weights.prime, weights.double_prime)?;
    let curve = limit_curve(
        &nominal,
        &args.alphas.0,
        &args.gammas.0,
        &BetaRule::Proportional {
            steps: args.beta_steps,
        },
        args.l_max.unwrap_or(f64::INFINITY),
    )?;

    let points: Vec<CurvePoint> = curve
        .entries
        .iter()
        .map(|e| {
            let (limit, trivial) = limit_fields(e.limit, args.l_max);
            CurvePoint {
                gamma: e.gamma,
                alpha: e.alpha,
                limit,
                trivial,
            }
        })
        .collect();
    let informativeness: BTreeMap<String, f64> = curve
        .informativeness
        .iter()
        .map(|&(g, i)| (fmt_f64(g), i))
        .collect();

    #[derive(Serialize)]
    struct Body<'a> {
        trial_rows: usize,
        d_prime_rows: usize,
        d_double_prime_rows: usize,
        l_max: Option<f64>,
        curves: &'a [CurvePoint],
        informativeness: BTreeMap<String, f64>,
        validation: Option<certlim::ValidationReport>,
    }
    write_envelope(
        &args.out,
        "evaluate",
        args,
        Body {
            trial_rows: trial.len(),
            d_prime_rows: split.prime_indices.len(),
            d_double_prime_rows: split.double_prime_indices.len(),
            l_max: args.l_max,
            curves: &points,
            informativeness,
            validation,
        },
    )?;

    let csv_path = args
        .csv_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("csv"));
    let table: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.gamma),
                fmt_f64(p.alpha),
                optional(p.limit),
                p.trivial.to_string(),
            ]
        })
        .collect();
    io::write_csv(
        &csv_path,
        &[
            "gamma".into(),
            "alpha".into(),
            "limit".into(),
            "trivial".into(),
        ],
        &table,
    )?;
    for (g, info) in &curve.informativeness {
        println!("Γ = {g}: informativeness {info}");
    }
    Ok(())
}

pub fn benchmark_gamma(args: &BenchmarkArgs) -> Result<()> {
    let pool = io::read_pool(&args.pool)?;
    let rows = match args.rows {
        RowsKind::All => EvalRows::All,
        RowsKind::Target => EvalRows::Target,
        RowsKind::Trial => EvalRows::Trial,
    };
    let reports = benchmark_all(&pool, &args.hyper.hyper(), rows)?;

    #[derive(Serialize)]
    struct Report {
        feature: usize,
        rows: usize,
        summary: Vec<(f64, f64)>,
        suggested_gamma: Vec<(f64, f64)>,
        full_converged: bool,
        reduced_converged: bool,
    }
    #[derive(Serialize)]
    struct Body {
        reports: Vec<Report>,
    }
    let body = Body {
        reports: reports
            .iter()
            .map(|r| Report {
                feature: r.feature,
                rows: r.ratios.len(),
                summary: r.summary.clone(),
                suggested_gamma: r.suggested_gamma.clone(),
                full_converged: r.full_converged,
                reduced_converged: r.reduced_converged,
            })
            .collect(),
    };
    write_envelope(&args.out, "benchmark-gamma", args, body)?;

    if let Some(path) = &args.ratios_out {
        let table: Vec<Vec<String>> = reports
            .iter()
            .flat_map(|r| {
                r.ratios
                    .iter()
                    .enumerate()
                    .map(move |(i, &v)| vec![r.feature.to_string(), i.to_string(), fmt_f64(v)])
            })
            .collect();
        io::write_csv(
            path,
            &["feature".into(), "row".into(), "ratio".into()],
            &table,
        )?;
    }
    for r in &reports {
        let gammas: Vec<String> = r
            .suggested_gamma
            .iter()
            .map(|(q, g)| format!("Γ({q}) = {g:.4}"))
            .collect();
        println!("feature x{}: {}", r.feature, gammas.join(", "));
    }
    Ok(())
}

pub fn reliability(args: &ReliabilityArgs) -> Result<()> {
    let pool = io::read_pool(&args.pool)?;
    let odds = load_odds(&args.odds, pool.rows())?;
    let bins = reliability_diagram(&odds, pool.labels(), args.bins)?;
    let table: Vec<Vec<String>> = bins
        .iter()
        .enumerate()
        .map(|(i, b)| {
            vec![
                i.to_string(),
                fmt_f64(b.lo),
                fmt_f64(b.hi),
                fmt_f64(b.mean_nominal),
                optional(b.observed),
                b.n0.to_string(),
                b.n1.to_string(),
            ]
        })
        .collect();
    let headers = ["bin", "lo", "hi", "mean_nominal", "observed", "n0", "n1"].map(String::from);
    io::write_csv(&args.out, &headers, &table)
}

pub fn ipsw(args: &IpswArgs) -> Result<()> {
    let design = args.policy.design.resolve()?;
    let trial = io::read_trial(&args.trial, design.k())?;
    let policy = args.policy.policy.resolve()?;
    let n = match (&args.target, args.n) {
        (Some(path), None) => {
            let target = io::read_target(path)?;
            if target.dim() != trial.dim() {
                bail!(
                    "target has d = {}, trial has d = {}",
                    target.dim(),
                    trial.dim()
                );
            }
            target.len()
        }
        (None, Some(n)) => n,
        _ => bail!("give exactly one of --target and --n"),
    };
    let rows: Vec<CovariateVector<f64>> = trial.samples().iter().map(|s| s.x.clone()).collect();
    let odds = load_odds(&args.odds, &rows)?;
    let weights = IpswWeights::new(
        &trial,
        &odds,
        &policy,
        &design,
        n,
        args.normalization.into(),
    )?;

    #[derive(Serialize)]
    struct Quantile {
        alpha: f64,
        limit: Option<f64>,
        trivial: bool,
    }
    #[derive(Serialize)]
    struct Body {
        n: usize,
        value: f64,
        alphas: Vec<f64>,
        quantiles: Vec<Quantile>,
    }
    let quantiles = args
        .alphas
        .0
        .iter()
        .map(|&alpha| {
            let (limit, trivial) = limit_fields(weights.quantile(alpha), None);
            Quantile {
                alpha,
                limit,
                trivial,
            }
        })
        .collect();
    let value = weights.value();
    write_envelope(
        &args.out,
        "ipsw",
        args,
        Body {
            n,
            value,
            alphas: args.alphas.0.clone(),
            quantiles,
        },
    )?;
    println!("IPSW value {value}");
    Ok(())
}

pub fn miscoverage(args: &MiscoverageArgs) -> Result<()> {
    let design = args.policy.design.resolve()?;
    let policy = args.policy.policy.resolve()?;
    let scenario = SimScenario {
        target: args.pop.params,
        trial: args.trial_pop.params,
        design,
        policy,
        noise_sd: args.noise_sd,
        n: args.n,
        m: args.m,
        m_fit: args.m_fit.unwrap_or(args.m),
    };
    let source = match args.odds {
        OddsKind::Logistic => OddsSource::Logistic(args.hyper.hyper()),
        OddsKind::OracleX => OddsSource::OracleX,
        OddsKind::OracleU => OddsSource::OracleWithU,
    };
    let method = match args.method {
        MethodKind::Certified => {
            if args.beta_steps < 2 {
                bail!("--beta-steps must be >= 2");
            }
            simlab::Method::Certified {
                gamma: args.gamma,
                beta_rule: BetaRule::Proportional {
                    steps: args.beta_steps,
                },
                split: match args.split {
                    SplitKind::Matched => SplitConfig::Matched,
                    SplitKind::Random => SplitConfig::Random { frac: args.frac },
                },
            }
        }
        MethodKind::Ipsw => simlab::Method::Ipsw {
            normalization: args.normalization.into(),
        },
    };
    let config = McConfig {
        alphas: args.alphas.0.clone(),
        runs: args.runs,
        per_run: args.per_run,
        seed: args.seed,
        parallel: !args.serial,
    };
    let report = simlab::miscoverage_gap(&scenario, &source, &method, &config)?;

    #[derive(Serialize)]
    struct Body<'a> {
        report: &'a MiscoverageReport,
    }
    write_envelope(&args.out, "miscoverage", args, Body { report: &report })?;
    for e in &report.entries {
        println!(
            "α = {}: exceedance {:.4}, gap {:+.4} (se {:.4})",
            e.alpha, e.exceed_rate, e.gap, e.se
        );
    }
    Ok(())
}
