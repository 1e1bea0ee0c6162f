//! Kernel density estimation of normalized statistics and distances to the
//! standard Gaussian: sup-norm on densities and Kolmogorov–Smirnov on
//! samples. The KS companion exists because density sup-distance is
//! bandwidth-sensitive while the CDF distance is not.

use rayon::prelude::*;
use std::io::Write;
use thiserror::Error;

use crate::stats::compensated_sum;
use crate::svg;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("sample variance is zero; no bandwidth can be derived")]
    ZeroVariance,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid [{lo}, {hi}] does not cover [−4, 4]")]
    GridTooNarrow { lo: f64, hi: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Evaluation grid `[lo, hi]` with `count` equally spaced points.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for GridSpec {
    /// `[−6, 6]` with 1201 points; odd count keeps x = 0 on the grid.
    fn default() -> Self {
        GridSpec {
            lo: -6.0,
            hi: 6.0,
            count: 1201,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.lo + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub sample_count: usize,
}

pub fn standard_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `Φ(x)` through `erfc`, accurate to ~1e-15 absolute.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Silverman's rule `1.06 · s · M^{−1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, DensityError> {
    let m = samples.len() as f64;
    let mean = compensated_sum(samples.iter().copied()) / m;
    let var = compensated_sum(samples.iter().map(|&x| (x - mean) * (x - mean))) / (m - 1.0);
    if !(var > 0.0) {
        return Err(DensityError::ZeroVariance);
    }
    Ok(1.06 * var.sqrt() * m.powf(-0.2))
}

const KDE_MIN_SAMPLES: usize = 1000;
/// Kernel support cutoff in bandwidths; the discarded Gaussian mass is
/// below 1e-14.
const KERNEL_CUTOFF: f64 = 8.0;

/// Gaussian-kernel density estimate on the grid; `bandwidth = None` means
/// Silverman's rule.
pub fn kde(
    samples: &[f64],
    grid: GridSpec,
    bandwidth: Option<f64>,
) -> Result<DensityEstimate, DensityError> {
    if samples.len() < KDE_MIN_SAMPLES {
        return Err(DensityError::TooFewSamples {
            got: samples.len(),
            min: KDE_MIN_SAMPLES,
        });
    }
    if !(grid.lo < grid.hi) || grid.count < 2 {
        return Err(DensityError::InvalidGrid(format!(
            "lo={} hi={} count={}",
            grid.lo, grid.hi, grid.count
        )));
    }
    let h = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => {
            return Err(DensityError::InvalidGrid(format!("bandwidth {b} not positive")));
        }
        None => silverman_bandwidth(samples)?,
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let points = grid.points();
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let values: Vec<f64> = points
        .par_iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&s| s < x - KERNEL_CUTOFF * h);
            let hi = sorted.partition_point(|&s| s <= x + KERNEL_CUTOFF * h);
            let mut acc = 0.0;
            for &s in &sorted[lo..hi] {
                let u = (x - s) / h;
                acc += (-0.5 * u * u).exp();
            }
            acc * norm
        })
        .collect();
    Ok(DensityEstimate {
        grid: points,
        values,
        bandwidth: h,
        sample_count: samples.len(),
    })
}

impl DensityEstimate {
    /// Trapezoidal mass over the grid; a little may leak off-grid.
    pub fn integral(&self) -> f64 {
        let mut acc = 0.0;
        for w in self.grid.windows(2).zip(self.values.windows(2)) {
            let (xs, ys) = w;
            acc += 0.5 * (ys[0] + ys[1]) * (xs[1] - xs[0]);
        }
        acc
    }

    /// CSV rows `x, estimate, phi` with a versioned header comment.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<(), DensityError> {
        writeln!(w, "# density estimate v1 (bandwidth={:.6e}, samples={})", self.bandwidth, self.sample_count)?;
        writeln!(w, "x,estimate,phi")?;
        for (x, v) in self.grid.iter().zip(self.values.iter()) {
            writeln!(w, "{x:.8e},{v:.12e},{:.12e}", standard_normal_pdf(*x))?;
        }
        Ok(())
    }

    /// Self-contained SVG overlay of the estimate against φ.
    pub fn to_svg(&self, title: &str) -> String {
        let est: Vec<(f64, f64)> = self
            .grid
            .iter()
            .zip(self.values.iter())
            .map(|(&x, &v)| (x, v))
            .collect();
        let phi: Vec<(f64, f64)> = self
            .grid
            .iter()
            .map(|&x| (x, standard_normal_pdf(x)))
            .collect();
        svg::line_chart(
            title,
            "x",
            "density",
            &[
                svg::Series {
                    label: "estimate",
                    points: &est,
                    color: "#c0392b",
                    dashed: false,
                },
                svg::Series {
                    label: "standard normal",
                    points: &phi,
                    color: "#2c3e50",
                    dashed: true,
                },
            ],
        )
    }
}

/// `max over grid of |p̂(x) − φ(x)|`; the grid must cover `[−4, 4]`.
pub fn sup_distance_to_gaussian(est: &DensityEstimate) -> Result<f64, DensityError> {
    let (lo, hi) = (est.grid[0], *est.grid.last().unwrap());
    if lo > -4.0 || hi < 4.0 {
        return Err(DensityError::GridTooNarrow { lo, hi });
    }
    Ok(est
        .grid
        .iter()
        .zip(est.values.iter())
        .map(|(&x, &v)| (v - standard_normal_pdf(x)).abs())
        .fold(0.0, f64::max))
}

/// Kolmogorov–Smirnov statistic of the samples against the standard
/// normal CDF.
pub fn ks_distance_to_gaussian(samples: &[f64]) -> Result<f64, DensityError> {
    if samples.len() < 100 {
        return Err(DensityError::TooFewSamples {
            got: samples.len(),
            min: 100,
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = standard_normal_cdf(x);
        d = d
            .max((cdf - i as f64 / m).abs())
            .max(((i + 1) as f64 / m - cdf).abs());
    }
    Ok(d)
}
