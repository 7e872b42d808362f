use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use riebo::solvers::HypergradMethod;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ToyRiebo,
    ToyRiesbo,
    RobustKarcher,
    RobustMle,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ToyRiebo => "toy-riebo",
            Experiment::ToyRiesbo => "toy-riesbo",
            Experiment::RobustKarcher => "robust-karcher",
            Experiment::RobustMle => "robust-mle",
            Experiment::Validate => "validate",
        }
    }
}

/// Fully resolved run settings. Step sizes left as `null` are derived from
/// each instance's smoothness constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Upper dimension for toy runs, matrix size for robust runs.
    pub d: usize,
    /// Lower dimension for toy runs, number of data points for robust runs.
    pub n: usize,
    /// Condition number of the generated instance.
    pub kappa: f64,
    pub lambda: f64,
    pub sigma: f64,
    #[serde(rename = "K")]
    pub outer_steps: usize,
    #[serde(rename = "T")]
    pub inner_steps: usize,
    #[serde(rename = "N")]
    pub cg_steps: usize,
    #[serde(rename = "Q")]
    pub neumann_terms: usize,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub hypergrad: HypergradMethod,
    pub record_every: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

/// Any subset of [`RunConfig`], as read from a file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[serde(rename = "K")]
    #[arg(long = "K")]
    pub outer_steps: Option<usize>,
    #[serde(rename = "T")]
    #[arg(long = "T")]
    pub inner_steps: Option<usize>,
    #[serde(rename = "N")]
    #[arg(long = "N")]
    pub cg_steps: Option<usize>,
    #[serde(rename = "Q")]
    #[arg(long = "Q")]
    pub neumann_terms: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_parser = parse_method)]
    pub hypergrad: Option<HypergradMethod>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<HypergradMethod, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown method `{s}`; expected cg, neumann-expected or neumann-sampled"))
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        PartialConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if text.trim().is_empty() {
            return Ok(PartialConfig::default());
        }
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Values in `top` win.
    pub fn overlay(self, top: PartialConfig) -> PartialConfig {
        let base = self;
        overlay!(base, top; experiment, d, n, kappa, lambda, sigma, outer_steps, inner_steps, cg_steps,
            neumann_terms, alpha, beta, eta, hypergrad, record_every, seeds, out)
    }

    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let experiment = self
            .experiment
            .ok_or_else(|| CliError::Config("no experiment given".into()))?;
        let p = preset(experiment);
        let merged = p.overlay(self);
        let cfg = RunConfig {
            experiment,
            d: merged.d.unwrap_or(0),
            n: merged.n.unwrap_or(0),
            kappa: merged.kappa.unwrap_or(1.0),
            lambda: merged.lambda.unwrap_or(1.0),
            sigma: merged.sigma.unwrap_or(0.0),
            outer_steps: merged.outer_steps.unwrap_or(0),
            inner_steps: merged.inner_steps.unwrap_or(0),
            cg_steps: merged.cg_steps.unwrap_or(0),
            neumann_terms: merged.neumann_terms.unwrap_or(0),
            alpha: merged.alpha,
            beta: merged.beta,
            eta: merged.eta,
            hypergrad: merged.hypergrad.unwrap_or_default(),
            record_every: merged.record_every.unwrap_or(1),
            seeds: merged.seeds.unwrap_or_default(),
            out: merged.out.unwrap_or_else(|| PathBuf::from("runs").join(experiment.name())),
        };
        cfg.check()?;
        Ok(cfg)
    }
}

fn preset(experiment: Experiment) -> PartialConfig {
    let base = PartialConfig {
        experiment: Some(experiment),
        kappa: Some(10.0),
        lambda: Some(1.0),
        sigma: Some(0.0),
        record_every: Some(1),
        seeds: Some((0..5).collect()),
        ..PartialConfig::default()
    };
    let specific = match experiment {
        Experiment::ToyRiebo | Experiment::ToyRiesbo => PartialConfig {
            d: Some(5),
            n: Some(10),
            sigma: Some(if experiment == Experiment::ToyRiesbo { 0.1 } else { 0.0 }),
            outer_steps: Some(if experiment == Experiment::ToyRiesbo { 4000 } else { 500 }),
            inner_steps: Some(10),
            cg_steps: Some(5),
            neumann_terms: Some(50),
            hypergrad: Some(HypergradMethod::Cg),
            ..PartialConfig::default()
        },
        Experiment::RobustKarcher | Experiment::RobustMle => {
            let karcher = experiment == Experiment::RobustKarcher;
            PartialConfig {
                d: Some(10),
                n: Some(if karcher { 5 } else { 100 }),
                outer_steps: Some(if karcher { 200 } else { 1000 }),
                inner_steps: Some(200),
                cg_steps: Some(10),
                neumann_terms: Some(50),
                alpha: Some(if karcher { 1e-2 } else { 1e-3 }),
                beta: Some(1e-1),
                hypergrad: Some(HypergradMethod::NeumannExpected),
                ..PartialConfig::default()
            }
        }
        Experiment::Validate => PartialConfig {
            d: Some(1),
            n: Some(1),
            outer_steps: Some(0),
            seeds: Some(vec![0]),
            ..PartialConfig::default()
        },
    };
    base.overlay(specific)
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.d == 0 || self.n == 0 {
            return bad(format!("dimensions must be positive, got d = {} and n = {}", self.d, self.n));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be at least 1, got {}", self.kappa));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("eta", self.eta)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        Ok(())
    }

    /// Re-reads a serialized config through the same path as a user file.
    #[cfg(test)]
    pub fn reparse(text: &str) -> Result<RunConfig, CliError> {
        let partial: PartialConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        partial.resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(experiment: Experiment) -> PartialConfig {
        PartialConfig {
            experiment: Some(experiment),
            ..PartialConfig::default()
        }
    }

    #[test]
    fn presets_fill_everything() {
        let cfg = with(Experiment::RobustKarcher).resolve().unwrap();
        assert_eq!((cfg.d, cfg.n, cfg.outer_steps, cfg.inner_steps), (10, 5, 200, 200));
        assert_eq!((cfg.alpha, cfg.beta), (Some(1e-2), Some(1e-1)));
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        let cfg = with(Experiment::RobustMle).resolve().unwrap();
        assert_eq!((cfg.n, cfg.outer_steps), (100, 1000));
    }

    #[test]
    fn later_layers_win() {
        let file = PartialConfig {
            outer_steps: Some(3),
            d: Some(4),
            ..with(Experiment::ToyRiebo)
        };
        let flags = PartialConfig {
            outer_steps: Some(7),
            ..PartialConfig::default()
        };
        let cfg = file.overlay(flags).resolve().unwrap();
        assert_eq!((cfg.outer_steps, cfg.d), (7, 4));
    }

    #[test]
    fn effective_config_round_trips() {
        for e in [Experiment::ToyRiebo, Experiment::ToyRiesbo, Experiment::RobustKarcher, Experiment::RobustMle] {
            let cfg = with(e).resolve().unwrap();
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            assert_eq!(RunConfig::reparse(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(serde_json::from_str::<PartialConfig>(r#"{"experiment":"toy-riebo","KK":3}"#).is_err());
        assert!(serde_json::from_str::<PartialConfig>(r#"{"experiment":"toy-lol"}"#).is_err());
        assert!(PartialConfig::default().resolve().is_err());
        let no_seeds = PartialConfig {
            seeds: Some(vec![]),
            ..with(Experiment::ToyRiebo)
        };
        assert!(no_seeds.resolve().is_err());
        let negative = PartialConfig {
            alpha: Some(-1.0),
            ..with(Experiment::ToyRiebo)
        };
        assert!(negative.resolve().is_err());
    }

    #[test]
    fn method_names_accept_either_separator() {
        assert_eq!(parse_method("neumann-expected").unwrap(), HypergradMethod::NeumannExpected);
        assert_eq!(parse_method("neumann_sampled").unwrap(), HypergradMethod::NeumannSampled);
        assert!(parse_method("newton").is_err());
    }
}
