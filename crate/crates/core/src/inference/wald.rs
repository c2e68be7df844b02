//! The Wald-type statistic
//!
//! ```text
//! Q_N(T) = N · X̄' T' (T V̂_N T')⁺ T X̄,   V̂_N = diag(N / n_i · Σ̂_i)
//! ```
//!
//! [`wald_statistic`] evaluates this literally. [`WaldKernel`] evaluates the
//! same quantity through an orthonormal basis `C` of the row space of `T`
//! (`T = C'C`), where `T(TV̂T)⁺T = C'(CV̂C')⁺C` reduces the work to a
//! `df × df` system. Resampling loops use the kernel.

use crate::design::HypothesisMatrix;
use crate::distributions::chi_square_sf;
use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, psd_quadratic_form, Matrix};

use super::dataset::MomentEstimates;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaldStatistic {
    pub statistic: f64,
    /// Rank of `T V̂_N T'` as seen by the pseudo-inverse.
    pub df: usize,
}

/// Block-diagonal `V̂_N = diag(N / n_i · Σ̂_i)`.
pub fn covariance_estimate(est: &MomentEstimates) -> Matrix {
    let total = est.total() as f64;
    let blocks: Vec<Matrix> = (0..est.d())
        .map(|i| est.covariance_matrix(i).scale(total / est.sizes()[i] as f64))
        .collect();
    Matrix::block_diag(&blocks)
}

/// Wald-type statistic for `H₀: T μ = 0`, computed from the full `d·p`
/// dimensional matrices.
pub fn wald_statistic(est: &MomentEstimates, t: &Matrix) -> Result<WaldStatistic> {
    let dp = est.d() * est.p();
    if t.cols() != dp {
        return Err(Error::dim(format!(
            "hypothesis matrix has {} columns but the data have d·p = {dp}",
            t.cols()
        )));
    }
    let v = covariance_estimate(est);
    let tvt = t.matmul(&v)?.matmul(&t.transpose())?;
    let (pinv, df) = pseudo_inverse(&tvt)?;
    let tx = t.matvec(est.stacked_means())?;
    let q: f64 = tx.iter().zip(pinv.matvec(&tx)?).map(|(a, b)| a * b).sum();
    Ok(WaldStatistic {
        statistic: (est.total() as f64 * q).max(0.0),
        df,
    })
}

/// χ² approximation `P(χ²_df > q)`.
pub fn chi2_test(q: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::DegenerateHypothesis(format!("statistic {q}")));
    }
    let df = u32::try_from(df).map_err(|_| Error::Domain(format!("df {df} too large")))?;
    chi_square_sf(q, df)
}

/// Reduced-basis evaluator of the Wald-type statistic for one hypothesis.
///
/// The basis factors as `C = B ⊗ R` (cells ⊗ responses), so with `b_i` the
/// `i`-th column of `B`
///
/// ```text
/// Σ_i C_i Σ̂_i C_i' / n_i = Σ_i (b_i b_i') ⊗ (R Σ̂_i R') / n_i,   y = Σ_i b_i ⊗ R X̄_i.
/// ```
#[derive(Clone, Debug)]
pub struct WaldKernel {
    d: usize,
    p: usize,
    // B, kb × d row-major
    between: Vec<f64>,
    kb: usize,
    // R, r × p row-major; None when R = I_p
    response: Option<Vec<f64>>,
    r: usize,
}

impl WaldKernel {
    pub fn new(hyp: &HypothesisMatrix) -> Result<Self> {
        let (b, r) = hyp
            .basis_factors()
            .ok_or_else(|| Error::DegenerateHypothesis(hyp.label.clone()))?;
        let (d, p) = (hyp.d(), hyp.p());
        if b.cols() != d || r.cols() != p {
            return Err(Error::dim(format!(
                "basis factors of '{}' do not match d = {d}, p = {p}",
                hyp.label
            )));
        }
        let identity = r.rows() == p && r.max_abs_diff(&Matrix::identity(p)) == 0.0;
        Ok(Self {
            d,
            p,
            between: b.as_slice().to_vec(),
            kb: b.rows(),
            response: (!identity).then(|| r.as_slice().to_vec()),
            r: r.rows(),
        })
    }

    pub fn df(&self) -> usize {
        self.kb * self.r
    }

    /// `Q_N = y'(Σ_i C_i Σ̂_i C_i' / n_i)⁺ y` with `y = Σ_i C_i X̄_i`.
    pub fn statistic(&self, est: &MomentEstimates) -> Result<f64> {
        if est.d() != self.d || est.p() != self.p {
            return Err(Error::dim(format!(
                "hypothesis built for d = {}, p = {} but data have d = {}, p = {}",
                self.d,
                self.p,
                est.d(),
                est.p()
            )));
        }
        let (kb, r, p) = (self.kb, self.r, self.p);
        let k = kb * r;
        let mut y = vec![0.0; k];
        let mut a = vec![0.0; k * k];
        let mut m = vec![0.0; r];
        let mut s = vec![0.0; r * r];
        let mut w = vec![0.0; r * p];
        for i in 0..self.d {
            let inv_n = 1.0 / est.sizes()[i] as f64;
            let mean = est.mean(i);
            let cov = est.covariance(i);
            // m = R X̄_i, s = R Σ̂_i R' / n_i
            match &self.response {
                None => {
                    m.copy_from_slice(mean);
                    s.iter_mut().zip(cov).for_each(|(o, c)| *o = c * inv_n);
                }
                Some(rm) => {
                    for u in 0..r {
                        let row = &rm[u * p..(u + 1) * p];
                        m[u] = row.iter().zip(mean).map(|(x, y)| x * y).sum();
                        for c in 0..p {
                            w[u * p + c] = (0..p).map(|j| row[j] * cov[j * p + c]).sum();
                        }
                    }
                    for u in 0..r {
                        for v in u..r {
                            let val = (0..p).map(|j| w[u * p + j] * rm[v * p + j]).sum::<f64>() * inv_n;
                            s[u * r + v] = val;
                            s[v * r + u] = val;
                        }
                    }
                }
            }
            for bu in 0..kb {
                let cu = self.between[bu * self.d + i];
                if cu == 0.0 {
                    continue;
                }
                for (yy, mm) in y[bu * r..(bu + 1) * r].iter_mut().zip(&m) {
                    *yy += cu * mm;
                }
                for bv in bu..kb {
                    let coef = cu * self.between[bv * self.d + i];
                    if coef == 0.0 {
                        continue;
                    }
                    for u in 0..r {
                        let dst = &mut a[(bu * r + u) * k + bv * r..(bu * r + u) * k + bv * r + r];
                        for (o, sv) in dst.iter_mut().zip(&s[u * r..(u + 1) * r]) {
                            *o += coef * sv;
                        }
                    }
                }
            }
        }
        // fill the lower block triangle
        for row in 0..k {
            for col in 0..row {
                if col / r < row / r {
                    a[row * k + col] = a[col * k + row];
                }
            }
        }
        Ok(psd_quadratic_form(&a, k, &y)?.max(0.0))
    }
}
