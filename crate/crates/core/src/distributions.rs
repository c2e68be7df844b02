//! χ² tail probabilities, standardized error generators and seeded,
//! stream-splittable random numbers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 1000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = Γ(a, x) / Γ(a)`.
///
/// Series expansion of `P` below `x = a + 1`, Lentz continued fraction for `Q`
/// above it.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    if a.is_nan() || a <= 0.0 || x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "incomplete gamma needs a > 0 and x >= 0 (a = {a}, x = {x})"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                return Ok((1.0 - sum * log_prefactor.exp()).clamp(0.0, 1.0));
            }
        }
        Err(Error::numerical(format!(
            "incomplete gamma series did not converge (a = {a}, x = {x})"
        )))
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                return Ok((h * log_prefactor.exp()).clamp(0.0, 1.0));
            }
        }
        Err(Error::numerical(format!(
            "incomplete gamma continued fraction did not converge (a = {a}, x = {x})"
        )))
    }
}

fn check_chi_square_args(x: f64, df: u32) -> Result<()> {
    if df == 0 {
        return Err(Error::Domain("chi-square needs df >= 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("chi-square argument must be >= 0, got {x}")));
    }
    Ok(())
}

/// Upper tail `P(χ²_df > x)`.
pub fn chi_square_sf(x: f64, df: u32) -> Result<f64> {
    check_chi_square_args(x, df)?;
    regularized_gamma_q(0.5 * df as f64, 0.5 * x)
}

/// Lower tail `P(χ²_df ≤ x)`.
pub fn chi_square_cdf(x: f64, df: u32) -> Result<f64> {
    chi_square_sf(x, df).map(|q| 1.0 - q)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

/// Independent random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so stream `b` never depends on how many other streams were
/// consumed or on which thread consumed them.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn open_unit(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Marginal error law used when simulating data. Every kind is shifted and
/// scaled to mean 0 and variance 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorDistribution {
    Normal,
    /// Laplace with scale `1/√2`.
    Laplace,
    /// `(χ²₂₀ − 20) / √40`.
    Chisq20,
    /// `(χ²₁₅ − 15) / √30`.
    Chisq15,
    /// `t₇ · √(5/7)`.
    T7,
}

impl ErrorDistribution {
    pub const ALL: [ErrorDistribution; 5] = [
        ErrorDistribution::Normal,
        ErrorDistribution::Laplace,
        ErrorDistribution::Chisq20,
        ErrorDistribution::Chisq15,
        ErrorDistribution::T7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorDistribution::Normal => "normal",
            ErrorDistribution::Laplace => "laplace",
            ErrorDistribution::Chisq20 => "chisq20",
            ErrorDistribution::Chisq15 => "chisq15",
            ErrorDistribution::T7 => "t7",
        }
    }

    /// Long label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ErrorDistribution::Normal => "Multivariate normal",
            ErrorDistribution::Laplace => "Double exponential",
            ErrorDistribution::Chisq20 => "Chi-square(20)",
            ErrorDistribution::Chisq15 => "Chi-square(15)",
            ErrorDistribution::T7 => "t(7)",
        }
    }

    /// Fills `out` with i.i.d. standardized variates.
    pub fn fill(self, out: &mut [f64], rng: &mut RngStream) {
        match self {
            ErrorDistribution::Normal => out.iter_mut().for_each(|v| *v = rng.standard_normal()),
            ErrorDistribution::Laplace => out.iter_mut().for_each(|v| {
                let u = rng.open_unit();
                *v = if u < 0.5 {
                    FRAC_1_SQRT_2 * (2.0 * u).ln()
                } else {
                    -FRAC_1_SQRT_2 * (2.0 * (1.0 - u)).ln()
                };
            }),
            ErrorDistribution::Chisq20 => fill_chi_square(out, 20.0, rng),
            ErrorDistribution::Chisq15 => fill_chi_square(out, 15.0, rng),
            ErrorDistribution::T7 => {
                let t = StudentT::new(7.0).expect("valid dof");
                let scale = (5.0f64 / 7.0).sqrt();
                out.iter_mut().for_each(|v| *v = scale * t.sample(rng));
            }
        }
    }
}

fn fill_chi_square(out: &mut [f64], k: f64, rng: &mut RngStream) {
    let chi = ChiSquared::new(k).expect("valid dof");
    let sd = (2.0 * k).sqrt();
    out.iter_mut().for_each(|v| *v = (chi.sample(rng) - k) / sd);
}

impl fmt::Display for ErrorDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Self::Normal),
            "laplace" | "double-exponential" | "double_exponential" => Ok(Self::Laplace),
            "chisq20" => Ok(Self::Chisq20),
            "chisq15" => Ok(Self::Chisq15),
            "t7" => Ok(Self::T7),
            other => Err(Error::spec(format!(
                "unknown distribution '{other}' (expected normal, laplace, chisq20, chisq15 or t7)"
            ))),
        }
    }
}

/// `n` i.i.d. standardized variates of the given kind.
pub fn draw_standardized(dist: ErrorDistribution, n: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut out = vec![0.0; n];
    dist.fill(&mut out, rng);
    out
}

/// One draw of `mean + cov_sqrt · z` with `z` standard normal.
pub fn draw_mvn(mean: &[f64], cov_sqrt: &Matrix, rng: &mut RngStream) -> Result<Vec<f64>> {
    if mean.len() != cov_sqrt.rows() {
        return Err(Error::dim(format!(
            "mean has length {} but covariance factor has {} rows",
            mean.len(),
            cov_sqrt.rows()
        )));
    }
    let z: Vec<f64> = (0..cov_sqrt.cols()).map(|_| rng.standard_normal()).collect();
    let mut x = cov_sqrt.matvec(&z)?;
    x.iter_mut().zip(mean).for_each(|(v, m)| *v += m);
    Ok(x)
}
