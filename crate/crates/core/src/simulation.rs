//! Monte Carlo estimation of type-I error rates.
//!
//! Each replication generates null data `X_ik = Σ_i^{1/2} z_ik` with `z_ik`
//! drawn coordinate-wise from a standardized error distribution, then runs
//! every configured effect through the χ² approximation and both bootstrap
//! tests. Replication `r` is seeded by `derive_seed(seed, r)`; within it the
//! data use stream 0 of that seed and the parametric and nonparametric
//! bootstraps use the seeds `derive_seed(rep, 1)` and `derive_seed(rep, 2)`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_hypothesis, Analysis, Factor, FactorialLayout, HypothesisMatrix, HypothesisSpec};
use crate::distributions::{derive_seed, ErrorDistribution, RngStream};
use crate::error::{Error, Result};
use crate::inference::bootstrap::bootstrap_p_values;
use crate::inference::{chi2_test, estimate_moments, Group, GroupedDataset, Method, WaldKernel};
use crate::linalg::{sym_sqrt, Matrix};

pub mod fixtures {
    //! Empirical covariance matrices of the six EEG features (brain rate at
    //! temporal, frontal, central positions, then complexity at the same
    //! positions) for the three diagnosis groups.

    use crate::linalg::Matrix;

    pub const AD: [[f64; 6]; 6] = [
        [5.14, 5.04, 4.94, 5.63, 4.36, 4.46],
        [5.04, 6.55, 5.21, 5.74, 5.82, 4.83],
        [4.94, 5.21, 6.35, 5.39, 4.55, 6.63],
        [5.63, 5.74, 5.39, 8.88, 6.92, 6.64],
        [4.36, 5.82, 4.55, 6.92, 7.88, 7.15],
        [4.46, 4.83, 6.63, 6.64, 7.15, 13.84],
    ];

    pub const MCI: [[f64; 6]; 6] = [
        [2.10, 1.95, 1.76, 1.45, 1.25, 0.69],
        [1.95, 2.18, 1.82, 1.59, 1.61, 0.86],
        [1.76, 1.82, 2.11, 1.41, 1.21, 1.08],
        [1.45, 1.59, 1.41, 2.23, 2.35, 1.19],
        [1.25, 1.61, 1.21, 2.35, 2.95, 1.23],
        [0.69, 0.86, 1.08, 1.19, 1.23, 1.03],
    ];

    pub const SCC: [[f64; 6]; 6] = [
        [1.62, 1.17, 1.17, 0.76, 0.49, 0.32],
        [1.17, 1.41, 1.10, 0.63, 0.75, 0.37],
        [1.17, 1.10, 1.26, 0.54, 0.39, 0.41],
        [0.76, 0.63, 0.54, 0.64, 0.53, 0.30],
        [0.49, 0.75, 0.39, 0.53, 0.94, 0.28],
        [0.32, 0.37, 0.41, 0.30, 0.28, 0.28],
    ];

    pub fn matrix(rows: &[[f64; 6]; 6]) -> Matrix {
        Matrix::from_fn(6, 6, |r, c| rows[r][c])
    }

    /// Covariance for a diagnosis label (`AD`, `MCI`, `SCC`, any case).
    pub fn by_diagnosis(label: &str) -> Option<Matrix> {
        match label.to_ascii_uppercase().as_str() {
            "AD" => Some(matrix(&AD)),
            "MCI" => Some(matrix(&MCI)),
            "SCC" => Some(matrix(&SCC)),
            _ => None,
        }
    }

    /// Subjects per (sex, age, diagnosis) cell of the 160-patient cohort,
    /// sex in {M, F}, age in {<70, >=70}, diagnosis in {AD, MCI, SCC}.
    pub const COHORT_COUNTS: [[[usize; 3]; 2]; 2] = [[[2, 15, 14], [10, 12, 6]], [[9, 13, 29], [15, 17, 18]]];

    /// EEG columns: brain rate and complexity at temporal, frontal and
    /// central positions.
    pub const EEG_COLUMNS: [&str; 6] = ["br_temporal", "br_frontal", "br_central", "cx_temporal", "cx_frontal", "cx_central"];

    /// SPECT perfusion columns of six temporal and cingulate regions.
    pub const SPECT_COLUMNS: [&str; 6] = ["spect_mtl", "spect_ltl", "spect_ptl", "spect_acg", "spect_ptc", "spect_tp"];

    /// A synthetic cohort with the cell counts of [`COHORT_COUNTS`] as CSV
    /// (`id,sex,age,diagnosis`, then the EEG and SPECT columns). EEG values
    /// use the covariance of the subject's diagnosis and a diagnosis shift;
    /// SPECT values are independent with a diagnosis shift.
    pub fn cohort_csv(seed: u64) -> String {
        use crate::distributions::{draw_mvn, RngStream};
        use crate::linalg::sym_sqrt;

        const SEX: [&str; 2] = ["M", "F"];
        const AGE: [&str; 2] = ["<70", ">=70"];
        const DX: [&str; 3] = ["AD", "MCI", "SCC"];
        let mut rng = RngStream::new(seed, 0);
        let mut out = format!("id,sex,age,diagnosis,{},{}\n", EEG_COLUMNS.join(","), SPECT_COLUMNS.join(","));
        let mut id = 0;
        for (s, by_age) in COHORT_COUNTS.iter().enumerate() {
            for (a, by_dx) in by_age.iter().enumerate() {
                for (k, &n) in by_dx.iter().enumerate() {
                    let root = sym_sqrt(&by_diagnosis(DX[k]).expect("fixture")).expect("fixture is positive definite");
                    let shift = [-1.5, -0.5, 0.0][k];
                    let eeg_mean: Vec<f64> = (0..6).map(|j| 10.0 + shift + 0.2 * j as f64).collect();
                    for _ in 0..n {
                        id += 1;
                        let eeg = draw_mvn(&eeg_mean, &root, &mut rng).expect("6 × 6 root");
                        let spect: Vec<f64> = (0..6).map(|_| 60.0 + 4.0 * shift + 5.0 * rng.standard_normal()).collect();
                        let values: Vec<String> = eeg.iter().chain(&spect).map(|v| format!("{v:.4}")).collect();
                        out.push_str(&format!("{id},{},{},{},{}\n", SEX[s], AGE[a], DX[k], values.join(",")));
                    }
                }
            }
        }
        out
    }
}

pub const DEFAULT_NSIM: usize = 5000;
pub const DEFAULT_REPLICATES: usize = 1000;

/// A null-hypothesis simulation setting.
#[derive(Clone, Debug)]
pub struct SimulationScenario {
    pub name: String,
    pub layout: FactorialLayout,
    pub cell_sizes: Vec<usize>,
    pub covariances: Vec<Matrix>,
    pub dist: ErrorDistribution,
    pub effects: Vec<HypothesisSpec>,
    pub methods: Vec<Method>,
    pub nsim: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

/// Assigns each cell the fixture covariance of its level of `factor`.
pub fn covariances_by_factor(layout: &FactorialLayout, factor: &str) -> Result<Vec<Matrix>> {
    let pos = layout
        .between()
        .position(|f| f.name == factor)
        .ok_or_else(|| Error::spec(format!("covariance factor '{factor}' is not a between-subjects factor")))?;
    if layout.p() != 6 {
        return Err(Error::spec(format!(
            "covariance fixtures are 6 × 6 but the layout has p = {}",
            layout.p()
        )));
    }
    (0..layout.d())
        .map(|i| {
            let level = &layout.cell_labels(i)[pos];
            fixtures::by_diagnosis(level).ok_or_else(|| {
                Error::spec(format!("no covariance fixture for level '{level}' (expected AD, MCI or SCC)"))
            })
        })
        .collect()
}

fn sex_diagnosis_layout(with_age: bool) -> FactorialLayout {
    let mut factors = vec![Factor::between("sex", &["M", "F"])];
    if with_age {
        factors.push(Factor::between("age", &["<70", ">=70"]));
    }
    factors.push(Factor::between("diagnosis", &["AD", "MCI", "SCC"]));
    FactorialLayout::new(factors, Some(6)).expect("valid builtin layout")
}

fn builtin(name: &str, with_age: bool, sizes: &[usize], dist: ErrorDistribution) -> SimulationScenario {
    let layout = sex_diagnosis_layout(with_age);
    let covariances = covariances_by_factor(&layout, "diagnosis").expect("fixtures cover diagnosis");
    let effects = crate::design::all_effects(&layout, Analysis::Multivariate);
    SimulationScenario {
        name: name.to_string(),
        layout,
        cell_sizes: sizes.to_vec(),
        covariances,
        dist,
        effects,
        methods: Method::ALL.to_vec(),
        nsim: DEFAULT_NSIM,
        replicates: DEFAULT_REPLICATES,
        alpha: 0.05,
        seed: 1,
    }
}

/// sex (2) × diagnosis (3), 160 subjects.
pub fn two_way_scenario(dist: ErrorDistribution) -> SimulationScenario {
    builtin("two-way", false, &[12, 27, 20, 24, 30, 47], dist)
}

/// sex (2) × age (2) × diagnosis (3).
pub fn three_way_scenario(dist: ErrorDistribution) -> SimulationScenario {
    builtin("three-way", true, &[7, 15, 14, 10, 12, 7, 9, 13, 29, 15, 17, 18], dist)
}

/// The two-way and three-way scenarios under every error distribution.
pub fn builtin_scenarios() -> Vec<SimulationScenario> {
    ErrorDistribution::ALL
        .iter()
        .map(|&d| two_way_scenario(d))
        .chain(ErrorDistribution::ALL.iter().map(|&d| three_way_scenario(d)))
        .collect()
}

/// Looks up `two-way` or `three-way`.
pub fn builtin_scenario(name: &str, dist: ErrorDistribution) -> Result<SimulationScenario> {
    match name {
        "two-way" => Ok(two_way_scenario(dist)),
        "three-way" => Ok(three_way_scenario(dist)),
        other => Err(Error::spec(format!(
            "unknown scenario '{other}' (expected two-way, three-way or a scenario file)"
        ))),
    }
}

impl SimulationScenario {
    pub fn validate(&self) -> Result<()> {
        let (d, p) = (self.layout.d(), self.layout.p());
        if self.cell_sizes.len() != d {
            return Err(Error::spec(format!(
                "scenario '{}' lists {} cell sizes for {d} cells",
                self.name,
                self.cell_sizes.len()
            )));
        }
        if let Some(i) = self.cell_sizes.iter().position(|&n| n < 2) {
            return Err(Error::InsufficientData {
                cell: self.layout.cell_name(i),
                n: self.cell_sizes[i],
            });
        }
        if self.covariances.len() != d {
            return Err(Error::spec(format!(
                "scenario '{}' lists {} covariance matrices for {d} cells",
                self.name,
                self.covariances.len()
            )));
        }
        for (i, s) in self.covariances.iter().enumerate() {
            if s.rows() != p || s.cols() != p {
                return Err(Error::dim(format!(
                    "covariance of cell {} is {}×{}, expected {p}×{p}",
                    self.layout.cell_name(i),
                    s.rows(),
                    s.cols()
                )));
            }
            if !s.is_symmetric(1e-12) {
                return Err(Error::numerical(format!(
                    "covariance of cell {} is not symmetric",
                    self.layout.cell_name(i)
                )));
            }
        }
        if self.effects.is_empty() || self.methods.is_empty() {
            return Err(Error::spec("scenario needs at least one effect and one method"));
        }
        if self.nsim == 0 || self.replicates == 0 {
            return Err(Error::spec("nsim and the bootstrap replicate count must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::spec(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Draws the data of replication `rep_seed`.
    pub fn generate(&self, roots: &[Matrix], rep_seed: u64) -> Result<GroupedDataset> {
        let p = self.layout.p();
        let mut rng = RngStream::new(rep_seed, 0);
        let mut z = vec![0.0; p];
        let groups = self
            .cell_sizes
            .iter()
            .zip(roots)
            .enumerate()
            .map(|(i, (&n, a))| {
                let a = a.as_slice();
                let mut data = vec![0.0; n * p];
                for row in data.chunks_exact_mut(p) {
                    self.dist.fill(&mut z, &mut rng);
                    for (r, out) in row.iter_mut().enumerate() {
                        *out = a[r * p..(r + 1) * p].iter().zip(&z).map(|(x, y)| x * y).sum();
                    }
                }
                Ok(Group::new(self.layout.cell_name(i), Matrix::new(n, p, data)?))
            })
            .collect::<Result<Vec<_>>>()?;
        GroupedDataset::new(groups)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub effect: String,
    pub method: Method,
    pub rejections: usize,
    pub rate: f64,
    /// `sqrt(rate · (1 − rate) / nsim)`.
    pub mcse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub dist: ErrorDistribution,
    pub cell_sizes: Vec<usize>,
    pub nsim: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub rows: Vec<SimulationRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

impl SimulationReport {
    pub fn rate(&self, effect: &str, method: Method) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.effect == effect && r.method == method)
            .map(|r| r.rate)
    }

    pub fn effects(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.effect.as_str()) {
                out.push(&r.effect);
            }
        }
        out
    }
}

/// Runs the scenario. Rates depend only on the scenario (including its
/// seed), not on the number of worker threads.
pub fn run_scenario(s: &SimulationScenario) -> Result<SimulationReport> {
    s.validate()?;
    let start = Instant::now();
    let roots = s
        .covariances
        .iter()
        .map(sym_sqrt)
        .collect::<Result<Vec<_>>>()?;
    let hyps: Vec<HypothesisMatrix> = s
        .effects
        .iter()
        .map(|e| build_hypothesis(&s.layout, e))
        .collect::<Result<_>>()?;
    if let Some(h) = hyps.iter().find(|h| h.is_degenerate()) {
        return Err(Error::DegenerateHypothesis(h.label.clone()));
    }
    let kernels: Vec<WaldKernel> = hyps.iter().map(WaldKernel::new).collect::<Result<_>>()?;
    let methods = &s.methods;

    // rejections[r][m * effects + e]
    let per_rep: Vec<Vec<bool>> = (0..s.nsim)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(s.seed, r as u64);
            let data = s.generate(&roots, rep_seed)?;
            let est = estimate_moments(&data)?;
            let q: Vec<f64> = kernels.iter().map(|k| k.statistic(&est)).collect::<Result<_>>()?;
            let mut out = Vec::with_capacity(methods.len() * kernels.len());
            for m in methods {
                let p = match m {
                    Method::Chi2 => q
                        .iter()
                        .zip(&kernels)
                        .map(|(&q, k)| chi2_test(q, k.df()))
                        .collect::<Result<Vec<_>>>()?,
                    Method::Pbs => bootstrap_p_values(
                        &data,
                        &est,
                        &kernels,
                        &q,
                        true,
                        s.replicates,
                        derive_seed(rep_seed, 1),
                    )?,
                    Method::Npbs => bootstrap_p_values(
                        &data,
                        &est,
                        &kernels,
                        &q,
                        false,
                        s.replicates,
                        derive_seed(rep_seed, 2),
                    )?,
                };
                out.extend(p.iter().map(|&p| p <= s.alpha));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let nsim = s.nsim as f64;
    let mut rows = Vec::new();
    for (mi, &m) in methods.iter().enumerate() {
        for (ei, h) in hyps.iter().enumerate() {
            let idx = mi * hyps.len() + ei;
            let rejections = per_rep.iter().filter(|r| r[idx]).count();
            let rate = rejections as f64 / nsim;
            rows.push(SimulationRow {
                effect: h.label.clone(),
                method: m,
                rejections,
                rate,
                mcse: (rate * (1.0 - rate) / nsim).sqrt(),
            });
        }
    }
    Ok(SimulationReport {
        scenario: s.name.clone(),
        dist: s.dist,
        cell_sizes: s.cell_sizes.clone(),
        nsim: s.nsim,
        replicates: s.replicates,
        alpha: s.alpha,
        seed: s.seed,
        rows,
        wall_time_secs: Some(start.elapsed().as_secs_f64()),
    })
}
