//! TOML configuration files for analyses and simulation scenarios.
//!
//! An analysis configuration looks like
//!
//! ```toml
//! analysis = "marginal"          # or "multivariate" (default)
//! effects = ["all"]              # or e.g. ["sex", "diagnosis", "sex*diagnosis"]
//! methods = ["chi2", "pbs"]      # default: chi2, pbs, npbs
//! alpha = 0.05
//! bootstrap = 10000
//! seed = 2024
//!
//! [[factor]]
//! name = "sex"
//! role = "between"
//! levels = ["M", "F"]
//! column = "sex"                 # defaults to the factor name
//!
//! [[factor]]
//! name = "region"
//! role = "within"
//! levels = ["temporal", "frontal", "central"]
//!
//! [[response]]
//! column = "br_temporal"
//! levels = { region = "temporal" }
//! zscore = true
//! negate = false
//! ```
//!
//! Without within-subjects factors the `[[response]]` entries (or the
//! shorthand `responses = ["y1", "y2"]`) are used in the order given.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{
    all_effects, Analysis, Factor, FactorialLayout, HypothesisSpec, Role,
};
use crate::distributions::ErrorDistribution;
use crate::error::{Error, Result};
use crate::inference::Method;
use crate::linalg::Matrix;
use crate::simulation::{covariances_by_factor, SimulationScenario, DEFAULT_NSIM, DEFAULT_REPLICATES};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_BOOTSTRAP: usize = 10_000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub name: String,
    pub role: Role,
    pub levels: Vec<String>,
    /// Source column of a between-subjects factor; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

impl FactorConfig {
    pub fn source_column(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseConfig {
    pub column: String,
    /// Level of every within-subjects factor this column belongs to.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub levels: BTreeMap<String, String>,
    /// Standardize with the full-sample mean and standard deviation.
    #[serde(default, skip_serializing_if = "is_false")]
    pub zscore: bool,
    /// Multiply by −1 (applied before standardization).
    #[serde(default, skip_serializing_if = "is_false")]
    pub negate: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(rename = "factor")]
    pub factors: Vec<FactorConfig>,
    #[serde(rename = "response", default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<ResponseConfig>,
    /// Shorthand for plain response columns without transforms.
    #[serde(rename = "responses", default, skip_serializing_if = "Vec::is_empty")]
    pub response_columns: Vec<String>,
    #[serde(default = "all_effects_marker")]
    pub effects: Vec<String>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn all_effects_marker() -> Vec<String> {
    vec!["all".to_string()]
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Layout, effects and column mapping derived from a validated configuration.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub layout: FactorialLayout,
    pub effects: Vec<HypothesisSpec>,
    /// `responses[k]` is the configuration of response coordinate `k`.
    pub responses: Vec<ResponseConfig>,
}

impl AnalysisConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::spec(format!("invalid configuration: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::spec(format!("cannot read configuration {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// All response entries, with the `responses` shorthand expanded.
    pub fn response_entries(&self) -> Vec<ResponseConfig> {
        let mut out = self.responses.clone();
        out.extend(self.response_columns.iter().map(|c| ResponseConfig {
            column: c.clone(),
            levels: BTreeMap::new(),
            zscore: false,
            negate: false,
        }));
        out
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::spec(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.bootstrap == 0 && self.methods.iter().any(|m| *m != Method::Chi2) {
            return Err(Error::spec("bootstrap must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::spec("no methods configured"));
        }
        let factors: Vec<Factor> = self
            .factors
            .iter()
            .map(|f| {
                let levels: Vec<&str> = f.levels.iter().map(String::as_str).collect();
                Factor::new(f.name.clone(), f.role, &levels)
            })
            .collect();
        let entries = self.response_entries();
        if entries.is_empty() {
            return Err(Error::spec("no response columns configured"));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.column.as_str()) {
                return Err(Error::spec(format!("response column '{}' listed twice", e.column)));
            }
        }
        let has_within = factors.iter().any(|f| f.role == Role::Within);
        let layout = FactorialLayout::new(factors, (!has_within).then_some(entries.len()))?;

        let responses = if has_within {
            let within: Vec<&Factor> = layout.within().collect();
            let mut slots: Vec<Option<ResponseConfig>> = vec![None; layout.p()];
            for e in &entries {
                if let Some(k) = e.levels.keys().find(|k| !within.iter().any(|f| &f.name == *k)) {
                    return Err(Error::spec(format!(
                        "response '{}' is tagged with '{k}', which is not a within-subjects factor",
                        e.column
                    )));
                }
                let tags = within
                    .iter()
                    .map(|f| {
                        e.levels.get(&f.name).map(String::as_str).ok_or_else(|| {
                            Error::spec(format!(
                                "response '{}' has no level for within-subjects factor '{}'",
                                e.column, f.name
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let k = layout.response_index(&tags)?;
                if let Some(prev) = &slots[k] {
                    return Err(Error::spec(format!(
                        "responses '{}' and '{}' carry the same within-subjects levels",
                        prev.column, e.column
                    )));
                }
                slots[k] = Some(e.clone());
            }
            if let Some(k) = slots.iter().position(Option::is_none) {
                return Err(Error::spec(format!(
                    "no response column for within-subjects cell {k} (every level combination needs one)"
                )));
            }
            slots.into_iter().map(Option::unwrap).collect()
        } else {
            if let Some(e) = entries.iter().find(|e| !e.levels.is_empty()) {
                return Err(Error::spec(format!(
                    "response '{}' has within-subjects levels but no within-subjects factor is declared",
                    e.column
                )));
            }
            entries
        };

        let effects = if self.effects.iter().any(|e| e == "all") {
            if self.effects.len() > 1 {
                return Err(Error::spec("'all' cannot be combined with other effects"));
            }
            all_effects(&layout, self.analysis)
        } else if self.effects.is_empty() {
            return Err(Error::spec("no effects configured"));
        } else {
            self.effects
                .iter()
                .map(|e| HypothesisSpec::parse(e, self.analysis))
                .collect::<Result<_>>()?
        };
        Ok(ResolvedConfig {
            layout,
            effects,
            responses,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CovarianceConfig {
    /// `I_p` in every cell.
    Identity,
    /// Built-in AD/MCI/SCC matrices assigned by the levels of `factor`.
    Fixture { factor: String },
    /// One `p × p` matrix per cell, in cell order.
    Explicit { matrices: Vec<Vec<Vec<f64>>> },
}

/// A simulation scenario read from TOML:
///
/// ```toml
/// name = "balanced"
/// p = 2
/// cell_sizes = [200, 200]
/// distributions = ["normal"]
/// effects = ["g"]               # default: every between effect
///
/// [[factor]]
/// name = "g"
/// levels = ["a", "b"]
///
/// [covariance]
/// kind = "identity"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_scenario_name")]
    pub name: String,
    pub p: usize,
    #[serde(rename = "factor")]
    pub factors: Vec<ScenarioFactor>,
    pub cell_sizes: Vec<usize>,
    pub covariance: CovarianceConfig,
    #[serde(default)]
    pub distributions: Vec<ErrorDistribution>,
    #[serde(default)]
    pub effects: Vec<String>,
    #[serde(default)]
    pub methods: Vec<Method>,
    pub nsim: Option<usize>,
    pub bootstrap: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFactor {
    pub name: String,
    pub levels: Vec<String>,
}

fn default_scenario_name() -> String {
    "custom".to_string()
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::spec(format!("invalid scenario file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::spec(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// One scenario per listed distribution (normal when none are listed).
    pub fn scenarios(&self) -> Result<Vec<SimulationScenario>> {
        let factors = self
            .factors
            .iter()
            .map(|f| {
                let levels: Vec<&str> = f.levels.iter().map(String::as_str).collect();
                Factor::between(f.name.clone(), &levels)
            })
            .collect();
        let layout = FactorialLayout::new(factors, Some(self.p))?;
        let covariances = match &self.covariance {
            CovarianceConfig::Identity => vec![Matrix::identity(self.p); layout.d()],
            CovarianceConfig::Fixture { factor } => covariances_by_factor(&layout, factor)?,
            CovarianceConfig::Explicit { matrices } => matrices
                .iter()
                .map(|rows| {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(Error::spec("explicit covariance matrices must be square"));
                    }
                    Matrix::new(n, n, rows.concat())
                })
                .collect::<Result<_>>()?,
        };
        let effects = if self.effects.is_empty() {
            all_effects(&layout, Analysis::Multivariate)
        } else {
            self.effects
                .iter()
                .map(|e| HypothesisSpec::parse(e, Analysis::Multivariate))
                .collect::<Result<_>>()?
        };
        let dists = if self.distributions.is_empty() {
            vec![ErrorDistribution::Normal]
        } else {
            self.distributions.clone()
        };
        Ok(dists
            .into_iter()
            .map(|dist| SimulationScenario {
                name: self.name.clone(),
                layout: layout.clone(),
                cell_sizes: self.cell_sizes.clone(),
                covariances: covariances.clone(),
                dist,
                effects: effects.clone(),
                methods: if self.methods.is_empty() {
                    Method::ALL.to_vec()
                } else {
                    self.methods.clone()
                },
                nsim: self.nsim.unwrap_or(DEFAULT_NSIM),
                replicates: self.bootstrap.unwrap_or(DEFAULT_REPLICATES),
                alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
                seed: self.seed.unwrap_or(DEFAULT_SEED),
            })
            .collect())
    }
}
