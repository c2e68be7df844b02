//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use manova_boot::simulation::fixtures::{cohort_csv, EEG_COLUMNS, SPECT_COLUMNS};

pub const SEX: (&str, &[&str]) = ("sex", &["M", "F"]);
pub const AGE: (&str, &[&str]) = ("age", &["<70", ">=70"]);
pub const DIAGNOSIS: (&str, &[&str]) = ("diagnosis", &["AD", "MCI", "SCC"]);

/// Which response block an analysis configuration uses.
#[derive(Clone, Copy)]
pub enum Responses {
    /// Six EEG columns as a plain multivariate response.
    Eeg,
    /// EEG columns structured by feature (2) × region (3).
    EegFactorial,
    /// Six SPECT columns as levels of a region factor.
    SpectRegions,
    /// Six SPECT columns as a plain multivariate response.
    Spect,
}

fn factor_block(name: &str, role: &str, levels: &[&str]) -> String {
    let levels: Vec<String> = levels.iter().map(|l| format!("\"{l}\"")).collect();
    format!("[[factor]]\nname = \"{name}\"\nrole = \"{role}\"\nlevels = [{}]\n\n", levels.join(", "))
}

fn response_block(column: &str, levels: &[(&str, &str)]) -> String {
    let levels: Vec<String> = levels.iter().map(|(f, l)| format!("{f} = \"{l}\"")).collect();
    format!("[[response]]\ncolumn = \"{column}\"\nlevels = {{ {} }}\n\n", levels.join(", "))
}

/// TOML configuration for the synthetic cohort.
pub fn cohort_config(between: &[(&str, &[&str])], responses: Responses, extra: &str) -> String {
    let analysis = match responses {
        Responses::Eeg | Responses::Spect => "multivariate",
        Responses::EegFactorial | Responses::SpectRegions => "marginal",
    };
    let mut out = format!("analysis = \"{analysis}\"\n{extra}\n\n");
    for (name, levels) in between {
        out.push_str(&factor_block(name, "between", levels));
    }
    match responses {
        Responses::Eeg => {
            let cols: Vec<String> = EEG_COLUMNS.iter().map(|c| format!("\"{c}\"")).collect();
            // top-level keys must precede the tables
            out = format!("responses = [{}]\n{out}", cols.join(", "));
        }
        Responses::Spect => {
            let cols: Vec<String> = SPECT_COLUMNS.iter().map(|c| format!("\"{c}\"")).collect();
            out = format!("responses = [{}]\n{out}", cols.join(", "));
        }
        Responses::EegFactorial => {
            out.push_str(&factor_block("feature", "within", &["br", "cx"]));
            out.push_str(&factor_block("region", "within", &["temporal", "frontal", "central"]));
            for c in EEG_COLUMNS {
                let (feature, region) = c.split_once('_').expect("feature_region column");
                out.push_str(&response_block(c, &[("feature", feature), ("region", region)]));
            }
        }
        Responses::SpectRegions => {
            let regions: Vec<&str> = SPECT_COLUMNS.iter().map(|c| &c[6..]).collect();
            out.push_str(&factor_block("region", "within", &regions));
            for (c, r) in SPECT_COLUMNS.iter().zip(&regions) {
                out.push_str(&response_block(c, &[("region", r)]));
            }
        }
    }
    out
}

/// Writes the synthetic cohort and returns its path.
pub fn write_cohort(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join("cohort.csv");
    std::fs::write(&path, cohort_csv(seed)).expect("write cohort");
    path
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).expect("write file");
    path
}

/// Runs the command line in-process and returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("manova-boot").chain(args.iter().copied());
    let code = manova_boot::io::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).expect("utf-8"), String::from_utf8(err).expect("utf-8"))
}
