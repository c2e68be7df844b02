//! Loads a synthetic 160-patient cohort from CSV, runs the marginal
//! four-way analysis and prints the text report.

use manova_boot::design::build_hypothesis;
use manova_boot::inference::{test_hypotheses, BootstrapSettings};
use manova_boot::io::{load_csv_bytes, AnalysisConfig, Metadata, ResultDocument};
use manova_boot::simulation::fixtures::cohort_csv;

const CONFIG: &str = r#"
analysis = "marginal"
bootstrap = 2000
seed = 42

[[factor]]
name = "sex"
role = "between"
levels = ["M", "F"]

[[factor]]
name = "diagnosis"
role = "between"
levels = ["AD", "MCI", "SCC"]

[[factor]]
name = "feature"
role = "within"
levels = ["br", "cx"]

[[factor]]
name = "region"
role = "within"
levels = ["temporal", "frontal", "central"]

[[response]]
column = "br_temporal"
levels = { feature = "br", region = "temporal" }
zscore = true
[[response]]
column = "br_frontal"
levels = { feature = "br", region = "frontal" }
zscore = true
[[response]]
column = "br_central"
levels = { feature = "br", region = "central" }
zscore = true
[[response]]
column = "cx_temporal"
levels = { feature = "cx", region = "temporal" }
zscore = true
[[response]]
column = "cx_frontal"
levels = { feature = "cx", region = "frontal" }
zscore = true
[[response]]
column = "cx_central"
levels = { feature = "cx", region = "central" }
zscore = true
"#;

fn main() -> manova_boot::Result<()> {
    let csv = cohort_csv(1);
    let cfg = AnalysisConfig::from_toml(CONFIG)?;
    let loaded = load_csv_bytes(csv.as_bytes(), &cfg)?;
    println!("cell sizes {:?}", loaded.dataset.sizes());
    let hyps = loaded
        .resolved
        .effects
        .iter()
        .map(|e| build_hypothesis(&loaded.layout, e))
        .collect::<manova_boot::Result<Vec<_>>>()?;
    let refs: Vec<_> = hyps.iter().collect();
    let settings = BootstrapSettings::new(cfg.bootstrap, cfg.seed, cfg.alpha);
    let results = test_hypotheses(&loaded.dataset, &refs, &cfg.methods, &settings)?;

    let mut doc = ResultDocument::new(Metadata::new("analyze", cfg.seed, cfg.alpha, cfg.bootstrap, &cfg.methods));
    doc.results = results;
    print!("{}", doc.to_text());
    Ok(())
}
