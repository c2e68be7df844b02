use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Observations of one cell: `n_i × p`, one subject per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub label: String,
    pub data: Matrix,
}

impl Group {
    pub fn new(label: impl Into<String>, data: Matrix) -> Self {
        Self {
            label: label.into(),
            data,
        }
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }
}

/// `d` groups of `p`-variate observations, in the layout's cell order.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedDataset {
    p: usize,
    groups: Vec<Group>,
}

impl GroupedDataset {
    pub fn new(groups: Vec<Group>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::dim("dataset needs at least one group"))?;
        let p = first.data.cols();
        for g in &groups {
            if g.data.cols() != p {
                return Err(Error::dim(format!(
                    "group '{}' has {} responses, expected {p}",
                    g.label,
                    g.data.cols()
                )));
            }
        }
        Ok(Self { p, groups })
    }

    /// Convenience constructor from nested rows (`groups[i][k]` is subject
    /// `k` of group `i`).
    pub fn from_rows(groups: &[Vec<Vec<f64>>]) -> Result<Self> {
        let built = groups
            .iter()
            .enumerate()
            .map(|(i, rows)| {
                let n = rows.len();
                let p = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != p) {
                    return Err(Error::dim(format!("group {i} has ragged rows")));
                }
                Ok(Group::new(format!("group{}", i + 1), Matrix::new(n, p, rows.concat())?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(built)
    }

    pub fn d(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Group::n).collect()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Group::n).sum()
    }

    pub(crate) fn check_sizes(&self) -> Result<()> {
        match self.groups.iter().find(|g| g.n() < 2) {
            Some(g) => Err(Error::InsufficientData {
                cell: g.label.clone(),
                n: g.n(),
            }),
            None => Ok(()),
        }
    }

    /// Applies `f` to every observation, keeping the grouping.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let data = g.data.as_slice().iter().map(|&v| f(v)).collect();
                Ok(Group::new(g.label.clone(), Matrix::new(g.n(), self.p, data)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups)
    }
}

/// Group means `X̄_i` and covariances `Σ̂_i` (divisor `n_i − 1`), stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimates {
    p: usize,
    sizes: Vec<usize>,
    means: Vec<f64>,
    covariances: Vec<f64>,
}

impl MomentEstimates {
    pub(crate) fn with_shape(d: usize, p: usize) -> Self {
        Self {
            p,
            sizes: vec![0; d],
            means: vec![0.0; d * p],
            covariances: vec![0.0; d * p * p],
        }
    }

    pub fn d(&self) -> usize {
        self.sizes.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `N = Σ n_i`.
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.p..(i + 1) * self.p]
    }

    /// Stacked mean vector `(X̄_1', …, X̄_d')'`.
    pub fn stacked_means(&self) -> &[f64] {
        &self.means
    }

    /// Row-major `p × p` covariance of group `i`.
    pub fn covariance(&self, i: usize) -> &[f64] {
        let pp = self.p * self.p;
        &self.covariances[i * pp..(i + 1) * pp]
    }

    pub fn covariance_matrix(&self, i: usize) -> Matrix {
        Matrix::from_fn(self.p, self.p, |r, c| self.covariance(i)[r * self.p + c])
    }

    /// Recomputes group `i` from `n` row-major observations.
    pub(crate) fn set_group(&mut self, i: usize, rows: &[f64], n: usize) {
        let p = self.p;
        debug_assert_eq!(rows.len(), n * p);
        self.sizes[i] = n;
        let mean = &mut self.means[i * p..(i + 1) * p];
        mean.iter_mut().for_each(|m| *m = 0.0);
        for r in rows.chunks_exact(p) {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        let inv_n = 1.0 / n as f64;
        mean.iter_mut().for_each(|m| *m *= inv_n);

        let pp = p * p;
        let cov = &mut self.covariances[i * pp..(i + 1) * pp];
        cov.iter_mut().for_each(|c| *c = 0.0);
        let mut dev = vec![0.0; p];
        for r in rows.chunks_exact(p) {
            dev.iter_mut()
                .zip(r)
                .zip(mean.iter())
                .for_each(|((d, v), m)| *d = v - m);
            for a in 0..p {
                let da = dev[a];
                for b in a..p {
                    cov[a * p + b] += da * dev[b];
                }
            }
        }
        let inv = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
        for a in 0..p {
            for b in a..p {
                let v = cov[a * p + b] * inv;
                cov[a * p + b] = v;
                cov[b * p + a] = v;
            }
        }
    }
}

/// Arithmetic means and unbiased covariances of every group.
pub fn estimate_moments(data: &GroupedDataset) -> Result<MomentEstimates> {
    data.check_sizes()?;
    let mut est = MomentEstimates::with_shape(data.d(), data.p());
    for (i, g) in data.groups().iter().enumerate() {
        est.set_group(i, g.data.as_slice(), g.n());
    }
    Ok(est)
}
