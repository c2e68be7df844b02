//! Command-line front end: `analyze`, `pairwise` and `simulate`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data error,
//! 4 numerical error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::distributions::ErrorDistribution;
use crate::error::{Error, Result};
use crate::inference::{test_hypotheses, BootstrapSettings, Method};
use crate::design::build_hypothesis;
use crate::multiplicity::pairwise_comparisons;
use crate::simulation::{builtin_scenario, run_scenario, SimulationScenario};

use super::config::{AnalysisConfig, ScenarioFile};
use super::csv_load::load_csv;
use super::report::{Metadata, OutputFormat, ResultDocument};

#[derive(Debug, Parser)]
#[command(name = "manova-boot", version, about = "Wald-type and bootstrap tests for heteroscedastic multivariate factorial designs")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test every configured effect.
    Analyze(AnalyzeArgs),
    /// Closed testing of all pairwise comparisons of one factor's levels.
    Pairwise(PairwiseArgs),
    /// Type-I error simulation.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Significance level (overrides the configuration).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma separated subset of chi2, pbs, npbs.
    #[arg(long)]
    pub methods: Option<String>,
    /// Bootstrap replicates.
    #[arg(long = "B", visible_alias = "bootstrap")]
    pub b: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// text, json or csv.
    #[arg(long, default_value = "text")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PairwiseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Between-subjects factor whose levels are compared.
    #[arg(long)]
    pub factor: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// two-way, three-way or a scenario file.
    #[arg(long)]
    pub scenario: String,
    /// normal, laplace, chisq20, chisq15, t7 or all. Built-in scenarios
    /// default to all; scenario files to their own list.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub nsim: Option<usize>,
    /// Include wall-clock time in the report (makes output run dependent).
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let written = match output_path(&cli.command) {
                Some(path) => std::fs::write(path, text.as_bytes()).map_err(Error::from),
                None => out.write_all(text.as_bytes()).map_err(Error::from),
            };
            match written {
                Ok(()) => 0,
                Err(e) => report_error(&e, err),
            }
        }
        Err(e) => report_error(&e, err),
    }
}

fn report_error(e: &Error, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "error: {e}");
    e.exit_code()
}

fn output_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Analyze(a) => a.common.output.as_deref(),
        Command::Pairwise(a) => a.common.output.as_deref(),
        Command::Simulate(a) => a.common.output.as_deref(),
    }
}

/// Runs the parsed command and returns the rendered output.
pub fn execute(cli: &Cli) -> Result<String> {
    let job = || match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Pairwise(a) => cmd_pairwise(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match cli.threads {
        Some(0) => Err(Error::spec("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::spec(format!("cannot start {n} worker threads: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Applies command-line overrides to a configuration.
fn apply_overrides(cfg: &mut AnalysisConfig, c: &CommonArgs) -> Result<()> {
    if let Some(a) = c.alpha {
        cfg.alpha = a;
    }
    if let Some(m) = &c.methods {
        cfg.methods = Method::parse_list(m)?;
    }
    if let Some(b) = c.b {
        cfg.bootstrap = b;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.methods.sort();
    cfg.methods.dedup();
    Ok(())
}

fn settings(cfg: &AnalysisConfig) -> BootstrapSettings {
    BootstrapSettings::new(cfg.bootstrap, cfg.seed, cfg.alpha)
}

fn zscore_note(cols: &[String]) -> Option<String> {
    (!cols.is_empty()).then(|| {
        format!(
            "z-scores of {} use the sample mean and standard deviation, not external norms",
            cols.join(", ")
        )
    })
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<String> {
    let format: OutputFormat = a.common.format.parse()?;
    let mut cfg = AnalysisConfig::load(&a.config)?;
    apply_overrides(&mut cfg, &a.common)?;
    let loaded = load_csv(&a.data, &cfg)?;
    let hyps = loaded
        .resolved
        .effects
        .iter()
        .map(|e| build_hypothesis(&loaded.layout, e))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = hyps.iter().collect();
    let results = test_hypotheses(&loaded.dataset, &refs, &cfg.methods, &settings(&cfg))?;

    let mut meta = Metadata::new("analyze", cfg.seed, cfg.alpha, cfg.bootstrap, &cfg.methods);
    meta.input_digest = Some(loaded.digest.clone());
    meta.notes.extend(zscore_note(&loaded.zscored));
    for r in results.iter().filter(|r| r.rank_mismatch()) {
        meta.notes.push(format!(
            "{}: rank of the estimated covariance of T·X̄ is {} but rank(T) is {}",
            r.effect, r.df_effective, r.df
        ));
    }
    meta.config = Some(cfg);
    let mut doc = ResultDocument::new(meta);
    doc.results = results;
    doc.render(format)
}

pub fn cmd_pairwise(a: &PairwiseArgs) -> Result<String> {
    let format: OutputFormat = a.common.format.parse()?;
    let mut cfg = AnalysisConfig::load(&a.config)?;
    apply_overrides(&mut cfg, &a.common)?;
    let loaded = load_csv(&a.data, &cfg)?;
    let report = pairwise_comparisons(
        &loaded.dataset,
        &loaded.layout,
        &a.factor,
        cfg.analysis,
        &cfg.methods,
        &settings(&cfg),
    )?;
    let mut meta = Metadata::new("pairwise", cfg.seed, cfg.alpha, cfg.bootstrap, &cfg.methods);
    meta.input_digest = Some(loaded.digest.clone());
    meta.notes.extend(zscore_note(&loaded.zscored));
    meta.config = Some(cfg);
    let mut doc = ResultDocument::new(meta);
    doc.pairwise = Some(report);
    doc.render(format)
}

fn scenarios_for(a: &SimulateArgs) -> Result<Vec<SimulationScenario>> {
    let dists: Option<Vec<ErrorDistribution>> = match a.dist.as_deref() {
        None => None,
        Some("all") => Some(ErrorDistribution::ALL.to_vec()),
        Some(d) => Some(vec![d.parse()?]),
    };
    let mut scenarios = match a.scenario.as_str() {
        "two-way" | "three-way" => dists
            .unwrap_or_else(|| ErrorDistribution::ALL.to_vec())
            .into_iter()
            .map(|d| builtin_scenario(&a.scenario, d))
            .collect::<Result<Vec<_>>>()?,
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Error::spec(format!(
                    "unknown scenario '{path}' (expected two-way, three-way or an existing scenario file)"
                )));
            }
            let mut file = ScenarioFile::load(p)?;
            if let Some(d) = dists {
                file.distributions = d;
            }
            file.scenarios()?
        }
    };
    for s in &mut scenarios {
        if let Some(n) = a.nsim {
            s.nsim = n;
        }
        if let Some(b) = a.common.b {
            s.replicates = b;
        }
        if let Some(seed) = a.common.seed {
            s.seed = seed;
        }
        if let Some(alpha) = a.common.alpha {
            s.alpha = alpha;
        }
        if let Some(m) = &a.common.methods {
            s.methods = Method::parse_list(m)?;
        }
    }
    Ok(scenarios)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<String> {
    let format: OutputFormat = a.common.format.parse()?;
    let scenarios = scenarios_for(a)?;
    for s in &scenarios {
        s.validate()?;
    }
    let reports = scenarios
        .iter()
        .map(|s| {
            let mut r = run_scenario(s)?;
            if !a.timing {
                r.wall_time_secs = None;
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let first = &scenarios[0];
    let meta = Metadata::new("simulate", first.seed, first.alpha, first.replicates, &first.methods);
    let mut doc = ResultDocument::new(meta);
    doc.simulation = reports;
    doc.render(format)
}
