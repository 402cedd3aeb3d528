//! Experiment configuration, read from TOML and adjustable from the command
//! line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pie_core::{ChainConfig, Family, LinearFunctional, ModelSpec, NigPrior};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PIE_OUT_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Average the shard quantile functions.
    #[default]
    Pie,
    /// Precision-weighted average of shard draws.
    Consensus,
    /// Standardize, combine each coordinate, resample and map back.
    Multidim,
    /// Full-data posterior only.
    FullOracle,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pie => "pie",
            Mode::Consensus => "consensus",
            Mode::Multidim => "multidim",
            Mode::FullOracle => "full-oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pie" => Mode::Pie,
            "consensus" => Mode::Consensus,
            "multidim" => Mode::Multidim,
            "full-oracle" => Mode::FullOracle,
            other => return Err(HarnessError::Config(format!("unknown mode `{other}`"))),
        })
    }
}

/// How shard posteriors are sampled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    /// Closed-form conjugate draws.
    #[default]
    Exact,
    Metropolis,
}

impl FromStr for SamplerKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SamplerKind::Exact),
            "metropolis" => Ok(SamplerKind::Metropolis),
            other => Err(HarnessError::Config(format!("unknown sampler `{other}`"))),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_prior_scale() -> f64 {
    100.0
}

fn default_nig_a() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    PoissonGamma {
        #[serde(default = "one")]
        shape: f64,
        #[serde(default = "one")]
        rate: f64,
    },
    ExponentialGamma {
        #[serde(default = "one")]
        shape: f64,
        #[serde(default = "one")]
        rate: f64,
    },
    BernoulliBeta {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "one")]
        beta: f64,
    },
    /// Zero prior mean and prior covariance `prior_scale · I`.
    NormalLinearNig {
        #[serde(default = "default_prior_scale")]
        prior_scale: f64,
        #[serde(default = "default_nig_a")]
        a: f64,
        #[serde(default = "one")]
        b: f64,
    },
}

impl ModelConfig {
    pub fn family(&self) -> Family {
        match self {
            ModelConfig::PoissonGamma { .. } => Family::PoissonGamma,
            ModelConfig::ExponentialGamma { .. } => Family::ExponentialGamma,
            ModelConfig::BernoulliBeta { .. } => Family::BernoulliBeta,
            ModelConfig::NormalLinearNig { .. } => Family::NormalLinearNig,
        }
    }

    /// Model for `p` covariates (ignored by the univariate families).
    pub fn build(&self, p: usize) -> Result<ModelSpec> {
        Ok(match *self {
            ModelConfig::PoissonGamma { shape, rate } => ModelSpec::poisson_gamma(shape, rate)?,
            ModelConfig::ExponentialGamma { shape, rate } => ModelSpec::exponential_gamma(shape, rate)?,
            ModelConfig::BernoulliBeta { alpha, beta } => ModelSpec::bernoulli_beta(alpha, beta)?,
            ModelConfig::NormalLinearNig { prior_scale, a, b } => {
                ModelSpec::NormalLinearNig(NigPrior::isotropic(p, prior_scale, a, b)?)
            }
        })
    }
}

/// Where observations come from: a CSV file, or simulation at a known truth.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// True parameter of a univariate family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    /// Number of covariates for simulated linear data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
}

/// Either a coordinate of θ or an explicit `aᵀθ + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub b: f64,
}

impl FunctionalConfig {
    pub fn coordinate(i: usize) -> Self {
        Self {
            name: None,
            coordinate: Some(i),
            a: None,
            b: 0.0,
        }
    }

    /// Resolve against parameter dimension `d`; `index` names unnamed
    /// functionals.
    pub fn resolve(&self, index: usize, d: usize) -> Result<(String, LinearFunctional)> {
        let functional = match (&self.coordinate, &self.a) {
            (Some(i), None) => {
                if *i >= d {
                    return Err(HarnessError::Config(format!(
                        "functional {index}: coordinate {i} out of range for dimension {d}"
                    )));
                }
                let mut f = LinearFunctional::coordinate(*i, d);
                f.b = self.b;
                f
            }
            (None, Some(a)) => {
                if a.len() != d {
                    return Err(HarnessError::Config(format!(
                        "functional {index}: {} coefficients for dimension {d}",
                        a.len()
                    )));
                }
                LinearFunctional::new(a.clone(), self.b)?
            }
            _ => {
                return Err(HarnessError::Config(format!(
                    "functional {index}: give exactly one of `coordinate` or `a`"
                )))
            }
        };
        let name = match (&self.name, self.coordinate) {
            (Some(name), _) => name.clone(),
            (None, Some(i)) if self.b == 0.0 => format!("theta{i}"),
            _ => format!("f{index}"),
        };
        if name.is_empty() || name.contains([',', '"', '\n', '\r']) {
            return Err(HarnessError::Config(format!(
                "functional {index}: name {name:?} must be nonempty without commas, quotes or newlines"
            )));
        }
        Ok((name, functional))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub overwrite: bool,
    /// Also write `timings.json`.
    #[serde(default)]
    pub timings: bool,
}

fn default_alpha_levels() -> Vec<f64> {
    vec![0.05]
}

fn default_grid_size() -> usize {
    pie_core::combiner::DEFAULT_GRID_SIZE
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub sampler: SamplerKind,
    /// Number of observations; optional when reading a CSV file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub k: usize,
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub functionals: Vec<FunctionalConfig>,
    #[serde(default = "default_alpha_levels")]
    pub alpha_levels: Vec<f64>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command-line values that replace config keys when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub sampler: Option<SamplerKind>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub t_total: Option<usize>,
    pub grid_size: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub data_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub overwrite: bool,
    pub timings: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(mode) = o.mode {
            self.mode = mode;
        }
        if let Some(sampler) = o.sampler {
            self.sampler = sampler;
        }
        if let Some(n) = o.n {
            self.n = Some(n);
        }
        if let Some(k) = o.k {
            self.k = k;
        }
        if let Some(t) = o.t_total {
            self.chain.t_total = t;
        }
        if let Some(g) = o.grid_size {
            self.grid_size = g;
        }
        if let Some(seeds) = &o.seeds {
            self.seeds = seeds.clone();
        }
        if let Some(path) = &o.data_path {
            self.data.path = Some(path.clone());
        }
        if let Some(dir) = &o.out_dir {
            self.output.dir = Some(dir.clone());
        }
        self.output.overwrite |= o.overwrite;
        self.output.timings |= o.timings;
    }

    /// Output directory: the config value, else `$PIE_OUT_DIR`, else `pie-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("pie-out"))
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if let Some(n) = self.n {
            if n < self.k {
                return bad(format!("n = {n} is smaller than k = {}", self.k));
            }
        }
        if self.data.path.is_none() && self.n.is_none() {
            return bad("simulated data needs `n`".into());
        }
        if self.functionals.is_empty() {
            return bad("at least one functional is required".into());
        }
        if self.alpha_levels.is_empty() {
            return bad("at least one alpha level is required".into());
        }
        if let Some(a) = self.alpha_levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha level {a} is outside (0, 1)"));
        }
        let min_grid = if self.mode == Mode::Multidim { 2 } else { 1 };
        if self.grid_size < min_grid {
            return bad(format!("grid_size must be at least {min_grid}"));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        self.chain.validate()?;
        if self.sampler == SamplerKind::Exact && !self.model.family().is_conjugate() {
            return bad("the exact sampler needs a conjugate family".into());
        }
        let linear = self.model.family() == Family::NormalLinearNig;
        if self.data.path.is_none() {
            match (linear, self.data.theta0, self.data.p) {
                (true, _, Some(p)) if p >= 1 => {}
                (true, _, _) => return bad("simulated linear data needs `data.p >= 1`".into()),
                (false, Some(_), _) => {}
                (false, None, _) => return bad("simulated data needs `data.theta0`".into()),
            }
        }
        self.model.build(self.data.p.unwrap_or(1))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const POISSON: &str = r#"
        k = 10
        n = 10000
        seeds = [1, 2]

        [model]
        family = "poisson-gamma"
        shape = 1.0
        rate = 1.0

        [data]
        theta0 = 3.0

        [[functionals]]
        coordinate = 0
    "#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(POISSON).unwrap();
        assert_eq!(cfg.mode, Mode::Pie);
        assert_eq!(cfg.sampler, SamplerKind::Exact);
        assert_eq!(cfg.chain, ChainConfig::default());
        assert_eq!(cfg.alpha_levels, vec![0.05]);
        assert_eq!(cfg.grid_size, 999);
        assert_eq!(cfg.model, ModelConfig::PoissonGamma { shape: 1.0, rate: 1.0 });
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(POISSON).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn chain_and_linear_sections() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            k = 4
            n = 400
            mode = "multidim"
            sampler = "metropolis"

            [model]
            family = "normal-linear-nig"
            a = 6.0

            [data]
            p = 3

            [chain]
            t_total = 4000
            proposal_scale = { fixed = 0.2 }

            [[functionals]]
            name = "contrast"
            a = [1.0, -1.0, 0.0, 0.0]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.chain.t_total, 4000);
        assert_eq!(cfg.chain.thin, 5);
        assert_eq!(cfg.chain.proposal_scale, pie_core::ProposalScale::Fixed(0.2));
        assert_eq!(
            cfg.model,
            ModelConfig::NormalLinearNig {
                prior_scale: 100.0,
                a: 6.0,
                b: 1.0
            }
        );
        cfg.validate().unwrap();
        let (name, f) = cfg.functionals[0].resolve(0, 4).unwrap();
        assert_eq!(name, "contrast");
        assert_eq!(f.a, vec![1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_configs() {
        let with = |extra: &str| ExperimentConfig::from_toml_str(&format!("{POISSON}\n{extra}"));
        assert!(with("typo = 1").is_err());
        let mut cfg = ExperimentConfig::from_toml_str(POISSON).unwrap();
        cfg.n = Some(5);
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        let mut cfg = ExperimentConfig::from_toml_str(POISSON).unwrap();
        cfg.alpha_levels = vec![1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::from_toml_str(POISSON).unwrap();
        cfg.functionals.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::from_toml_str(POISSON).unwrap();
        cfg.data.theta0 = None;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::from_toml_str(POISSON).unwrap();
        cfg.model = ModelConfig::PoissonGamma { shape: -1.0, rate: 1.0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_replace_keys() {
        let mut cfg = ExperimentConfig::from_toml_str(POISSON).unwrap();
        cfg.apply(&Overrides {
            mode: Some(Mode::Consensus),
            k: Some(5),
            seeds: Some(vec![9]),
            out_dir: Some("elsewhere".into()),
            overwrite: true,
            ..Overrides::default()
        });
        assert_eq!(cfg.mode, Mode::Consensus);
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.seeds, vec![9]);
        assert_eq!(cfg.out_dir(), PathBuf::from("elsewhere"));
        assert!(cfg.output.overwrite);
        assert_eq!(cfg.n, Some(10_000));
    }

    #[test]
    fn functional_resolution() {
        let (name, f) = FunctionalConfig::coordinate(1).resolve(0, 3).unwrap();
        assert_eq!(name, "theta1");
        assert_eq!(f.a, vec![0.0, 1.0, 0.0]);
        assert!(FunctionalConfig::coordinate(3).resolve(0, 3).is_err());
        let both = FunctionalConfig {
            a: Some(vec![1.0]),
            ..FunctionalConfig::coordinate(0)
        };
        assert!(both.resolve(0, 1).is_err());
        let comma = FunctionalConfig {
            name: Some("a,b".into()),
            ..FunctionalConfig::coordinate(0)
        };
        assert!(comma.resolve(0, 1).is_err());
        let zero = FunctionalConfig {
            coordinate: None,
            a: Some(vec![0.0, 0.0]),
            ..FunctionalConfig::coordinate(0)
        };
        assert!(zero.resolve(2, 2).is_err());
    }

    #[test]
    fn mode_names() {
        for m in [Mode::Pie, Mode::Consensus, Mode::Multidim, Mode::FullOracle] {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("fast".parse::<Mode>().is_err());
    }
}
