//! Result documents and their text, JSON and CSV renderings.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{Method, TestResult};
use crate::multiplicity::PairwiseReport;
use crate::simulation::SimulationReport;

use super::config::AnalysisConfig;

pub const TOOL: &str = "manova-boot";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::spec(format!("unknown format '{other}' (expected text, json or csv)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub alpha: f64,
    pub replicates: usize,
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<AnalysisConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Metadata {
    pub fn new(command: &str, seed: u64, alpha: f64, replicates: usize, methods: &[Method]) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: command.to_string(),
            seed,
            alpha,
            replicates,
            methods: methods.to_vec(),
            input_digest: None,
            config: None,
            notes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub metadata: Metadata,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub results: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise: Option<PairwiseReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub simulation: Vec<SimulationReport>,
}

impl ResultDocument {
    pub fn new(metadata: Metadata) -> Self {
        Self {
            metadata,
            results: Vec::new(),
            pairwise: None,
            simulation: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::data(None, format!("invalid result document: {e}")))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => Ok(self.to_json()),
            OutputFormat::Text => Ok(self.to_text()),
            OutputFormat::Csv => self.to_csv(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.results.is_empty() {
            out.push_str(&results_table(&self.results, &self.metadata));
        }
        if let Some(p) = &self.pairwise {
            out.push_str(&pairwise_table(p));
        }
        for (i, r) in self.simulation.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&simulation_table(r));
        }
        for n in &self.metadata.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        if !self.results.is_empty() {
            w.write_record([
                "effect",
                "statistic",
                "df",
                "df_effective",
                "p_chi2",
                "p_pbs",
                "p_npbs",
                "critical_pbs",
                "critical_npbs",
                "replicates",
                "seed",
            ])
            .map_err(csv_err)?;
            for r in &self.results {
                w.write_record(result_fields(&r.effect, r)).map_err(csv_err)?;
            }
        } else if let Some(p) = &self.pairwise {
            let mut header = vec![
                "hypothesis".to_string(),
                "kind".to_string(),
                "statistic".to_string(),
                "df".to_string(),
                "p_chi2".to_string(),
                "p_pbs".to_string(),
                "p_npbs".to_string(),
            ];
            header.extend(p.decisions.iter().map(|d| format!("rejected_{}", d.method)));
            w.write_record(&header).map_err(csv_err)?;
            for t in pairwise_rows(p) {
                let r = &t.result;
                let mut row = vec![
                    row_label(p, t),
                    if t.elementary { "pairwise" } else { "intersection" }.to_string(),
                    r.statistic.to_string(),
                    r.df.to_string(),
                    r.p_chi2.to_string(),
                    opt(r.p_pbs),
                    opt(r.p_npbs),
                ];
                for d in &p.decisions {
                    row.push(decision_of(p, t, d.method).map_or(String::new(), |b| b.to_string()));
                }
                w.write_record(&row).map_err(csv_err)?;
            }
        } else if !self.simulation.is_empty() {
            w.write_record([
                "scenario", "dist", "effect", "method", "rejections", "nsim", "rate", "mcse",
            ])
            .map_err(csv_err)?;
            for s in &self.simulation {
                for r in &s.rows {
                    w.write_record([
                        s.scenario.clone(),
                        s.dist.name().to_string(),
                        r.effect.clone(),
                        r.method.name().to_string(),
                        r.rejections.to_string(),
                        s.nsim.to_string(),
                        r.rate.to_string(),
                        r.mcse.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn result_fields(label: &str, r: &TestResult) -> Vec<String> {
    vec![
        label.to_string(),
        r.statistic.to_string(),
        r.df.to_string(),
        r.df_effective.to_string(),
        r.p_chi2.to_string(),
        opt(r.p_pbs),
        opt(r.p_npbs),
        opt(r.critical_pbs),
        opt(r.critical_npbs),
        r.b_replicates.to_string(),
        r.seed.to_string(),
    ]
}

/// Four decimals, or `<0.0001` below that.
pub fn format_p(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

fn results_table(results: &[TestResult], meta: &Metadata) -> String {
    let methods = &meta.methods;
    let width = results.iter().map(|r| r.effect.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}  {:>10}  {:>4}", "Effect", "WTS", "df");
    for m in methods {
        let _ = write!(out, "  {:>9}", format!("p({})", m.heading()));
    }
    out.push('\n');
    for r in results {
        let _ = write!(out, "{:<width$}  {:>10.2}  {:>4}", r.effect, r.statistic, r.df);
        for &m in methods {
            let p = r.p_value(m).map_or("-".to_string(), format_p);
            let _ = write!(out, "  {p:>9}");
        }
        out.push('\n');
    }
    if methods.iter().any(|m| *m != Method::Chi2) {
        let _ = writeln!(out, "bootstrap replicates: {}, seed: {}, alpha: {}", meta.replicates, meta.seed, meta.alpha);
    }
    out
}

fn pairwise_rows(p: &PairwiseReport) -> Vec<&crate::multiplicity::IntersectionTest> {
    let mut rows: Vec<_> = p.tests.iter().filter(|t| t.elementary).collect();
    rows.extend(p.tests.iter().filter(|t| !t.elementary));
    rows
}

fn row_label(p: &PairwiseReport, t: &crate::multiplicity::IntersectionTest) -> String {
    if t.elementary {
        let b = &t.partition.blocks()[0];
        format!("{} vs {}", p.levels[b[0]], p.levels[b[1]])
    } else if t.partition.blocks().len() == 1 && t.partition.blocks()[0].len() == p.levels.len() {
        format!("global ({})", t.label)
    } else {
        t.label.clone()
    }
}

fn decision_of(p: &PairwiseReport, t: &crate::multiplicity::IntersectionTest, m: Method) -> Option<bool> {
    if !t.elementary {
        return None;
    }
    let d = p.decisions.iter().find(|d| d.method == m)?;
    d.decision
        .elementary
        .iter()
        .find(|e| e.groups == t.partition.blocks()[0])
        .map(|e| e.rejected)
}

fn pairwise_table(p: &PairwiseReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Pairwise comparisons of {} ({}; closed testing at alpha = {})",
        p.factor, p.analysis, p.alpha
    );
    let rows = pairwise_rows(p);
    let labels: Vec<String> = rows.iter().map(|t| row_label(p, t)).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(10).max(10);
    let _ = write!(out, "{:<width$}  {:>10}  {:>4}", "Hypothesis", "WTS", "df");
    for d in &p.decisions {
        let _ = write!(out, "  {:>9}  {:>8}", format!("p({})", d.method.heading()), "decision");
    }
    out.push('\n');
    for (t, label) in rows.iter().zip(&labels) {
        let _ = write!(out, "{:<width$}  {:>10.2}  {:>4}", label, t.result.statistic, t.result.df);
        for d in &p.decisions {
            let pv = t.result.p_value(d.method).map_or("-".to_string(), format_p);
            let dec = match decision_of(p, t, d.method) {
                Some(true) => "reject",
                Some(false) => "retain",
                None => "-",
            };
            let _ = write!(out, "  {pv:>9}  {dec:>8}");
        }
        out.push('\n');
    }
    out
}

fn simulation_table(r: &SimulationReport) -> String {
    let mut out = String::new();
    let sizes: Vec<String> = r.cell_sizes.iter().map(usize::to_string).collect();
    let _ = writeln!(
        out,
        "Type-I error rates: scenario {}, n = ({}), {} errors, nsim = {}, B = {}, alpha = {}",
        r.scenario,
        sizes.join(", "),
        r.dist.label(),
        r.nsim,
        r.replicates,
        r.alpha
    );
    // supplement column order
    let order = [Method::Chi2, Method::Npbs, Method::Pbs];
    let methods: Vec<Method> = order
        .into_iter()
        .filter(|m| r.rows.iter().any(|row| row.method == *m))
        .collect();
    let effects = r.effects();
    let width = effects.iter().map(|e| e.len()).max().unwrap_or(10).max(10);
    let _ = write!(out, "{:<width$}", "Hypothesis");
    for m in &methods {
        let _ = write!(out, "  {:>6}", m.heading());
    }
    out.push('\n');
    for e in &effects {
        let _ = write!(out, "{e:<width$}");
        for &m in &methods {
            let _ = write!(out, "  {:>6.3}", r.rate(e, m).unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    let mcse = r.rows.iter().map(|x| x.mcse).fold(0.0_f64, f64::max);
    let _ = writeln!(out, "largest Monte Carlo standard error: {mcse:.4}");
    if let Some(t) = r.wall_time_secs {
        let _ = writeln!(out, "wall time: {t:.1} s");
    }
    out
}
