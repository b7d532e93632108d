//! Parsers for the compound flag values and the `key=value` config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use certlim::simlab::PopulationParams;
use certlim::{PolicySpec, TrialDesign};
use serde::{Deserialize, Serialize};

use crate::io;

/// `constant:<a>`, `uniform` or `table:<path>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFlag {
    Constant(usize),
    Uniform,
    Table(PathBuf),
}

impl std::str::FromStr for PolicyFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "uniform" {
            return Ok(PolicyFlag::Uniform);
        }
        if let Some(a) = s.strip_prefix("constant:") {
            return a
                .parse()
                .map(PolicyFlag::Constant)
                .map_err(|_| format!("`{a}` is not an action index"));
        }
        if let Some(p) = s.strip_prefix("table:") {
            return Ok(PolicyFlag::Table(PathBuf::from(p)));
        }
        Err(format!(
            "expected constant:<a>, uniform or table:<path>, got `{s}`"
        ))
    }
}

impl PolicyFlag {
    pub fn resolve(&self) -> Result<PolicySpec<f64>> {
        Ok(match self {
            PolicyFlag::Constant(a) => PolicySpec::Constant(*a),
            PolicyFlag::Uniform => PolicySpec::Uniform,
            PolicyFlag::Table(path) => PolicySpec::Table(io::read_policy_table(path)?),
        })
    }
}

/// `uniform:<K>` or `probs:<p0,p1,...>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignFlag {
    Uniform(usize),
    Probs(Vec<f64>),
}

impl std::str::FromStr for DesignFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(k) = s.strip_prefix("uniform:") {
            return k
                .parse()
                .map(DesignFlag::Uniform)
                .map_err(|_| format!("`{k}` is not an action count"));
        }
        if let Some(p) = s.strip_prefix("probs:") {
            return parse_list(p).map(DesignFlag::Probs);
        }
        Err(format!("expected uniform:<K> or probs:<p0,...>, got `{s}`"))
    }
}

impl DesignFlag {
    pub fn resolve(&self) -> Result<TrialDesign<f64>> {
        Ok(match self {
            DesignFlag::Uniform(k) => TrialDesign::uniform(*k)?,
            DesignFlag::Probs(p) => TrialDesign::new(p.clone())?,
        })
    }
}

/// A built-in population name or `custom:<mu0,mu1,mu_u,var0,var1,var_u>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationFlag {
    pub name: String,
    pub params: PopulationParams,
}

impl std::str::FromStr for PopulationFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(values) = s.strip_prefix("custom:") {
            let v = parse_list(values)?;
            let [mu0, mu1, mu_u, var0, var1, var_u] = v[..] else {
                return Err(format!("custom population needs 6 values, got {}", v.len()));
            };
            let params = PopulationParams::new(mu0, mu1, mu_u, var0, var1, var_u)
                .map_err(|e| e.to_string())?;
            return Ok(Self {
                name: "custom".into(),
                params,
            });
        }
        PopulationParams::builtin(s)
            .map(|params| Self {
                name: s.to_owned(),
                params,
            })
            .ok_or_else(|| {
                format!("unknown population `{s}`; use A, B, C, D, Trial or custom:<6 values>")
            })
    }
}

/// Comma-separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let values = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .map_err(|_| format!("`{t}` is not a number"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(values)
}

/// Comma-separated numbers, or `default` for `0.01, 0.02, ..., 0.99`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlphaGrid(pub Vec<f64>);

impl std::str::FromStr for AlphaGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let values = if s == "default" {
            certlim::default_alpha_grid()
        } else {
            parse_list(s)?
        };
        if values.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err("alphas must lie in (0, 1)".into());
        }
        Ok(AlphaGrid(values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GammaList(pub Vec<f64>);

impl std::str::FromStr for GammaList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let values = parse_list(s)?;
        if values.iter().any(|&g| g < 1.0) {
            return Err("every Γ must be >= 1".into());
        }
        Ok(GammaList(values))
    }
}

fn config_path(args: &[String]) -> Result<Option<(usize, usize, PathBuf)>> {
    for (i, arg) in args.iter().enumerate() {
        if let Some(p) = arg.strip_prefix("--config=") {
            return Ok(Some((i, 1, PathBuf::from(p))));
        }
        if arg == "--config" {
            let p = args.get(i + 1).context("--config needs a path")?;
            return Ok(Some((i, 2, PathBuf::from(p))));
        }
    }
    Ok(None)
}

/// Flags from a `key=value` file; `key=true` becomes a bare switch and
/// `key=false` is dropped.
pub fn config_args(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{} line {}: expected key=value", path.display(), n + 1);
        };
        let key = key.trim().replace('_', "-");
        match value.trim() {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => {
                out.push(format!("--{key}"));
                out.push(v.to_owned());
            }
        }
    }
    Ok(out)
}

/// Splices config-file flags in right after the subcommand so that flags on
/// the command line, parsed later, take precedence.
pub fn expand_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let Some((at, len, path)) = config_path(&args)? else {
        return Ok(args);
    };
    args.drain(at..at + len);
    let from_file = config_args(&path)?;
    let insert_at = args.len().min(2);
    args.splice(insert_at..insert_at, from_file);
    Ok(args)
}
