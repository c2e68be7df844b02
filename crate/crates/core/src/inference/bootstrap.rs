//! Parametric and nonparametric bootstrap versions of the Wald-type test.
//!
//! Replicate `b` draws from [`RngStream::new(seed, b)`](RngStream), so the
//! bootstrap distribution does not depend on the worker count. Several
//! hypotheses can share one set of bootstrap samples through the `*_many`
//! entry points.

use rayon::prelude::*;

use crate::distributions::RngStream;
use crate::error::{Error, Result};
use crate::linalg::{sym_sqrt, Matrix};

use super::dataset::{estimate_moments, GroupedDataset, MomentEstimates};
use super::wald::WaldKernel;
use crate::design::HypothesisMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl BootstrapSettings {
    pub fn new(replicates: usize, seed: u64, alpha: f64) -> Self {
        Self {
            replicates,
            seed,
            alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Domain("bootstrap needs at least one replicate".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapOutcome {
    /// Observed statistic the bootstrap distribution was compared with.
    pub statistic: f64,
    /// `(#{Q* ≥ Q_N} + 1) / (B + 1)`.
    pub p_value: f64,
    /// Empirical `(1 − α)`-quantile `c*(α)` of the bootstrap statistics.
    pub critical_value: f64,
    pub replicates: usize,
    pub exceedances: usize,
}

impl BootstrapOutcome {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// `(#{q* ≥ observed} + 1) / (B + 1)`.
pub fn bootstrap_p_value(observed: f64, replicates: &[f64]) -> f64 {
    let count = replicates.iter().filter(|&&q| q >= observed).count();
    (count + 1) as f64 / (replicates.len() + 1) as f64
}

/// The `⌈(1 − α)·B⌉`-th smallest bootstrap statistic.
pub fn critical_value(replicates: &[f64], alpha: f64) -> f64 {
    if replicates.is_empty() {
        return f64::NAN;
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let rank = (((1.0 - alpha) * b as f64).ceil() as usize).clamp(1, b);
    sorted[rank - 1]
}

fn summarize(observed: f64, stats: &[f64], alpha: f64) -> BootstrapOutcome {
    let exceedances = stats.iter().filter(|&&q| q >= observed).count();
    BootstrapOutcome {
        statistic: observed,
        p_value: (exceedances + 1) as f64 / (stats.len() + 1) as f64,
        critical_value: critical_value(stats, alpha),
        replicates: stats.len(),
        exceedances,
    }
}

/// Resampling scheme applied to each group.
#[derive(Clone, Debug)]
enum Resampler {
    /// `X*_ik = A_i z_ik` with `A_i A_i' = Σ̂_i`.
    Parametric { roots: Vec<Matrix> },
    /// Draws with replacement from the centered rows `X_ik − X̄_i`.
    Centered { rows: Vec<Vec<f64>> },
}

struct Engine<'a> {
    sizes: Vec<usize>,
    p: usize,
    kernels: &'a [WaldKernel],
    resampler: Resampler,
}

impl Engine<'_> {
    fn replicate(&self, seed: u64, b: usize) -> Result<Vec<f64>> {
        let mut rng = RngStream::new(seed, b as u64);
        let p = self.p;
        let mut est = MomentEstimates::with_shape(self.sizes.len(), p);
        let mut buf = Vec::new();
        let mut z = vec![0.0; p];
        for (i, &n) in self.sizes.iter().enumerate() {
            buf.clear();
            buf.resize(n * p, 0.0);
            match &self.resampler {
                Resampler::Parametric { roots } => {
                    let a = roots[i].as_slice();
                    for row in buf.chunks_exact_mut(p) {
                        z.iter_mut().for_each(|v| *v = rng.standard_normal());
                        for (r, out) in row.iter_mut().enumerate() {
                            *out = a[r * p..(r + 1) * p].iter().zip(&z).map(|(x, y)| x * y).sum();
                        }
                    }
                }
                Resampler::Centered { rows } => {
                    let src = &rows[i];
                    for row in buf.chunks_exact_mut(p) {
                        let k = rng.index(n);
                        row.copy_from_slice(&src[k * p..(k + 1) * p]);
                    }
                }
            }
            est.set_group(i, &buf, n);
        }
        self.kernels.iter().map(|k| k.statistic(&est)).collect()
    }

    /// `out[h][b]` is replicate `b` of hypothesis `h`.
    fn run(&self, seed: u64, replicates: usize) -> Result<Vec<Vec<f64>>> {
        let per_rep: Vec<Vec<f64>> = (0..replicates)
            .into_par_iter()
            .map(|b| self.replicate(seed, b))
            .collect::<Result<_>>()?;
        Ok((0..self.kernels.len())
            .map(|h| per_rep.iter().map(|r| r[h]).collect())
            .collect())
    }
}

fn kernels_for(hyps: &[&HypothesisMatrix]) -> Result<Vec<WaldKernel>> {
    hyps.iter().map(|h| WaldKernel::new(h)).collect()
}

fn parametric_engine<'a>(est: &MomentEstimates, kernels: &'a [WaldKernel]) -> Result<Engine<'a>> {
    let roots = (0..est.d())
        .map(|i| {
            sym_sqrt(&est.covariance_matrix(i)).map_err(|e| match e {
                Error::Dimension(m) => Error::numerical(format!("covariance of group {} : {m}", i + 1)),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Engine {
        sizes: est.sizes().to_vec(),
        p: est.p(),
        kernels,
        resampler: Resampler::Parametric { roots },
    })
}

fn centered_engine<'a>(
    data: &GroupedDataset,
    est: &MomentEstimates,
    kernels: &'a [WaldKernel],
) -> Engine<'a> {
    let p = data.p();
    let rows = data
        .groups()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mean = est.mean(i);
            g.data
                .as_slice()
                .chunks_exact(p)
                .flat_map(|r| r.iter().zip(mean).map(|(x, m)| x - m))
                .collect()
        })
        .collect();
    Engine {
        sizes: est.sizes().to_vec(),
        p,
        kernels,
        resampler: Resampler::Centered { rows },
    }
}

fn observed(kernels: &[WaldKernel], est: &MomentEstimates) -> Result<Vec<f64>> {
    kernels.iter().map(|k| k.statistic(est)).collect()
}

/// Parametric bootstrap statistics `Q*_b` for each kernel, drawn from
/// `N(0, Σ̂_i)` with the original group sizes.
pub fn pbs_statistics(
    est: &MomentEstimates,
    kernels: &[WaldKernel],
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    parametric_engine(est, kernels)?.run(seed, replicates)
}

/// Nonparametric bootstrap statistics `Q*_b` for each kernel, resampling the
/// group-centered observations with replacement.
pub fn npbs_statistics(
    data: &GroupedDataset,
    est: &MomentEstimates,
    kernels: &[WaldKernel],
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    centered_engine(data, est, kernels).run(seed, replicates)
}

/// Parametric bootstrap test of several hypotheses on shared draws.
pub fn pbs_test_many(
    data: &GroupedDataset,
    hyps: &[&HypothesisMatrix],
    settings: &BootstrapSettings,
) -> Result<Vec<BootstrapOutcome>> {
    settings.validate()?;
    let est = estimate_moments(data)?;
    let kernels = kernels_for(hyps)?;
    let q = observed(&kernels, &est)?;
    let stats = pbs_statistics(&est, &kernels, settings.replicates, settings.seed)?;
    Ok(q.iter()
        .zip(&stats)
        .map(|(&q, s)| summarize(q, s, settings.alpha))
        .collect())
}

/// Nonparametric bootstrap test of several hypotheses on shared draws.
pub fn npbs_test_many(
    data: &GroupedDataset,
    hyps: &[&HypothesisMatrix],
    settings: &BootstrapSettings,
) -> Result<Vec<BootstrapOutcome>> {
    settings.validate()?;
    let est = estimate_moments(data)?;
    let kernels = kernels_for(hyps)?;
    let q = observed(&kernels, &est)?;
    let stats = npbs_statistics(data, &est, &kernels, settings.replicates, settings.seed)?;
    Ok(q.iter()
        .zip(&stats)
        .map(|(&q, s)| summarize(q, s, settings.alpha))
        .collect())
}

pub fn pbs_test(
    data: &GroupedDataset,
    hyp: &HypothesisMatrix,
    settings: &BootstrapSettings,
) -> Result<BootstrapOutcome> {
    Ok(pbs_test_many(data, &[hyp], settings)?.remove(0))
}

pub fn npbs_test(
    data: &GroupedDataset,
    hyp: &HypothesisMatrix,
    settings: &BootstrapSettings,
) -> Result<BootstrapOutcome> {
    Ok(npbs_test_many(data, &[hyp], settings)?.remove(0))
}

/// Bootstrap p-values of precomputed kernels against already estimated
/// moments; used by the simulation loop to avoid repeated setup.
pub(crate) fn bootstrap_p_values(
    data: &GroupedDataset,
    est: &MomentEstimates,
    kernels: &[WaldKernel],
    observed_q: &[f64],
    parametric: bool,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let stats = if parametric {
        parametric_engine(est, kernels)?.run(seed, replicates)?
    } else {
        centered_engine(data, est, kernels).run(seed, replicates)?
    };
    Ok(observed_q
        .iter()
        .zip(&stats)
        .map(|(&q, s)| bootstrap_p_value(q, s))
        .collect())
}
