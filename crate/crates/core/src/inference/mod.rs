//! Moment estimation, the Wald-type statistic and its three reference
//! distributions (χ², parametric bootstrap, nonparametric bootstrap).

pub mod bootstrap;
pub mod dataset;
pub mod wald;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::{HypothesisMatrix, HypothesisSpec};
use crate::error::{Error, Result};

pub use bootstrap::{
    bootstrap_p_value, critical_value, npbs_statistics, npbs_test, npbs_test_many, pbs_statistics,
    pbs_test, pbs_test_many, BootstrapOutcome, BootstrapSettings,
};
pub use dataset::{estimate_moments, Group, GroupedDataset, MomentEstimates};
pub use wald::{chi2_test, covariance_estimate, wald_statistic, WaldKernel, WaldStatistic};

/// Reference distribution used to turn `Q_N` into a p-value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Chi2,
    Pbs,
    Npbs,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Chi2, Method::Pbs, Method::Npbs];

    pub fn name(self) -> &'static str {
        match self {
            Method::Chi2 => "chi2",
            Method::Pbs => "pbs",
            Method::Npbs => "npbs",
        }
    }

    /// Column heading used in simulation tables.
    pub fn heading(self) -> &'static str {
        match self {
            Method::Chi2 => "WTS",
            Method::Pbs => "PBS",
            Method::Npbs => "NPBS",
        }
    }

    /// Parses a comma separated list such as `chi2,pbs`; duplicates collapse.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if out.is_empty() {
            return Err(Error::spec("no methods given"));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chi2" | "wts" => Ok(Method::Chi2),
            "pbs" => Ok(Method::Pbs),
            "npbs" => Ok(Method::Npbs),
            other => Err(Error::spec(format!(
                "unknown method '{other}' (expected chi2, pbs or npbs)"
            ))),
        }
    }
}

/// One row of an analysis table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub effect: String,
    pub spec: HypothesisSpec,
    pub statistic: f64,
    /// `rank(T)`.
    pub df: usize,
    /// Rank of `T V̂_N T'`; smaller than `df` only for degenerate covariances.
    pub df_effective: usize,
    pub p_chi2: f64,
    pub p_pbs: Option<f64>,
    pub p_npbs: Option<f64>,
    pub critical_pbs: Option<f64>,
    pub critical_npbs: Option<f64>,
    pub b_replicates: usize,
    pub seed: u64,
}

impl TestResult {
    pub fn p_value(&self, method: Method) -> Option<f64> {
        match method {
            Method::Chi2 => Some(self.p_chi2),
            Method::Pbs => self.p_pbs,
            Method::Npbs => self.p_npbs,
        }
    }

    pub fn rank_mismatch(&self) -> bool {
        self.df != self.df_effective
    }
}

/// Tests every hypothesis with the χ² approximation and, if requested, the
/// bootstrap methods. All hypotheses share one set of bootstrap draws per
/// method, seeded by `settings.seed`.
pub fn test_hypotheses(
    data: &GroupedDataset,
    hyps: &[&HypothesisMatrix],
    methods: &[Method],
    settings: &BootstrapSettings,
) -> Result<Vec<TestResult>> {
    let est = estimate_moments(data)?;
    let mut rows = Vec::with_capacity(hyps.len());
    for h in hyps {
        if h.is_degenerate() {
            return Err(Error::DegenerateHypothesis(h.label.clone()));
        }
        if h.d() != data.d() || h.p() != data.p() {
            return Err(Error::dim(format!(
                "hypothesis '{}' expects d = {}, p = {} but data have d = {}, p = {}",
                h.label,
                h.d(),
                h.p(),
                data.d(),
                data.p()
            )));
        }
        let w = wald_statistic(&est, &h.t)?;
        rows.push(TestResult {
            effect: h.label.clone(),
            spec: h.spec.clone(),
            statistic: w.statistic,
            df: h.df,
            df_effective: w.df,
            p_chi2: chi2_test(w.statistic, h.df)?,
            p_pbs: None,
            p_npbs: None,
            critical_pbs: None,
            critical_npbs: None,
            b_replicates: 0,
            seed: settings.seed,
        });
    }
    let wants_bootstrap = methods.iter().any(|m| *m != Method::Chi2);
    if wants_bootstrap {
        for r in &mut rows {
            r.b_replicates = settings.replicates;
        }
    }
    if methods.contains(&Method::Pbs) {
        for (r, o) in rows.iter_mut().zip(pbs_test_many(data, hyps, settings)?) {
            r.p_pbs = Some(o.p_value);
            r.critical_pbs = Some(o.critical_value);
        }
    }
    if methods.contains(&Method::Npbs) {
        for (r, o) in rows.iter_mut().zip(npbs_test_many(data, hyps, settings)?) {
            r.p_npbs = Some(o.p_value);
            r.critical_npbs = Some(o.critical_value);
        }
    }
    Ok(rows)
}
