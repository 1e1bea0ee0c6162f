//! The normalized Hermite-functional statistic
//! `V_n = n^{−1/2} Σ_{k<n} f(X_k)`, its exact finite-n and asymptotic
//! variances, the Malliavin-derivative norm
//! `‖DV_n‖² = (1/n) Σ_{k₁,k₂} f'(X_{k₁}) ρ(k₁−k₂) f'(X_{k₂})`,
//! and Monte Carlo moment / negative-moment reports over path batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;
use thiserror::Error;

use crate::hermite::{factorial, HermiteCombination, HermiteSeries};
use crate::simulate::PathBatch;
use crate::spectral::CovarianceSequence;
use crate::wold::{floor_constant, CausalCoefficients};

/// Squared norms below this are counted as anomalies instead of being
/// raised to negative powers; one underflow must not poison a mean.
pub const NORM_SQ_FLOOR: f64 = 1e-300;

const BOOTSTRAP_RESAMPLES: usize = 400;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error(
        "Σ_v |ρ(v)|^{rank} partial sums are not Cauchy at cutoff {cutoff} \
         (last dyadic segment {segment:.3e}); the asymptotic variance diverges"
    )]
    Divergent {
        rank: u32,
        cutoff: usize,
        segment: f64,
    },
    #[error("covariance sequence has max lag {have}, need at least {need}")]
    InsufficientLags { need: usize, have: usize },
    #[error("batch of {m} paths is below the minimum {min}")]
    BatchTooSmall { m: usize, min: usize },
    #[error("degenerate batch: sample variance is zero")]
    DegenerateBatch,
    #[error("quadratic form returned {value:.3e} < -1e-10; covariance is not positive semidefinite")]
    NonPsd { value: f64 },
    #[error("internal: {0}")]
    Internal(String),
}

/// Neumaier-compensated sum; used everywhere a reduction must be
/// deterministic to rounding regardless of worker count.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `V_n = n^{−1/2} Σ_{k=0}^{n−1} f(X_k)`.
pub fn v_statistic(path: &[f64], f: &HermiteCombination) -> f64 {
    assert!(!path.is_empty(), "need n ≥ 1");
    let sum = compensated_sum(path.iter().map(|&x| f.eval(x)));
    sum / (path.len() as f64).sqrt()
}

/// Asymptotic variance `σ² = Σ_j j! a_j² Σ_{v∈Z} ρ(v)^j`, truncated at
/// `tail_cutoff` lags (capped by the available covariance).
///
/// The summability hypothesis is checked operationally: partial sums of
/// `|ρ(v)|^d` over dyadic cutoffs must be Cauchy at 1e-6, otherwise the
/// divergence diagnostic fires (e.g. fGn with H too large for the rank).
pub fn sigma_sq_asymptotic(
    f: &HermiteCombination,
    rho: &CovarianceSequence,
    tail_cutoff: usize,
) -> Result<f64, StatsError> {
    let cutoff = tail_cutoff.min(rho.max_lag()).max(1);
    let d = f.rank();
    let half = compensated_sum(
        (1..=cutoff / 2).map(|v| rho.lag(v).abs().powi(d as i32)),
    );
    let full = half
        + compensated_sum(
            (cutoff / 2 + 1..=cutoff).map(|v| rho.lag(v).abs().powi(d as i32)),
        );
    let segment = (full - half).abs();
    if segment > 1e-6 * full.abs().max(1.0) {
        return Err(StatsError::Divergent {
            rank: d,
            cutoff,
            segment,
        });
    }
    let mut sigma_sq = 0.0;
    for (j, a) in f.orders() {
        let tail = compensated_sum((1..=cutoff).map(|v| rho.lag(v).powi(j as i32)));
        sigma_sq += factorial(j) * a * a * (1.0 + 2.0 * tail);
    }
    if !(sigma_sq > 0.0) {
        return Err(StatsError::Internal(format!(
            "asymptotic variance {sigma_sq} not positive despite ρ(0)=1"
        )));
    }
    Ok(sigma_sq)
}

/// Exact finite-n variance
/// `σ_n² = E[V_n²] = Σ_j j! a_j² Σ_{|v|<n} (1 − |v|/n) ρ(v)^j`.
pub fn sigma_n_sq_exact(
    f: &HermiteCombination,
    rho: &CovarianceSequence,
    n: usize,
) -> Result<f64, StatsError> {
    if rho.max_lag() + 1 < n {
        return Err(StatsError::InsufficientLags {
            need: n - 1,
            have: rho.max_lag(),
        });
    }
    let nf = n as f64;
    let mut sigma_sq = 0.0;
    for (j, a) in f.orders() {
        let tail = compensated_sum(
            (1..n).map(|v| (1.0 - v as f64 / nf) * rho.lag(v).powi(j as i32)),
        );
        sigma_sq += factorial(j) * a * a * (1.0 + 2.0 * tail);
    }
    Ok(sigma_sq)
}

/// Evaluates `‖DV_n‖²` as the quadratic form
/// `(1/n) Σ f'(X_{k₁}) ρ(k₁−k₂) f'(X_{k₂})`, with the Toeplitz product done
/// by circulant-embedding FFT in O(n log n). Reused across the paths of a
/// batch; the direct O(n²) form lives in the tests as the oracle.
pub struct MalliavinEvaluator {
    n: usize,
    derivative: HermiteSeries,
    conv_len: usize,
    rho_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl MalliavinEvaluator {
    pub fn new(
        rho: &CovarianceSequence,
        f: &HermiteCombination,
        n: usize,
    ) -> Result<Self, StatsError> {
        if n == 0 {
            return Err(StatsError::Internal("need n ≥ 1".into()));
        }
        if rho.max_lag() + 1 < n {
            return Err(StatsError::InsufficientLags {
                need: n - 1,
                have: rho.max_lag(),
            });
        }
        let conv_len = (2 * n).next_power_of_two();
        let mut first_col = vec![Complex64::new(0.0, 0.0); conv_len];
        for j in 0..n {
            first_col[j].re = rho.lag(j);
        }
        for j in 1..n {
            first_col[conv_len - j].re = rho.lag(j);
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(conv_len);
        let inv = planner.plan_fft_inverse(conv_len);
        fwd.process(&mut first_col);
        Ok(Self {
            n,
            derivative: f.derivative(),
            conv_len,
            rho_hat: first_col,
            fwd,
            inv,
        })
    }

    pub fn norm_sq(&self, path: &[f64]) -> Result<f64, StatsError> {
        assert_eq!(path.len(), self.n);
        let g: Vec<f64> = path.iter().map(|&x| self.derivative.eval(x)).collect();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.conv_len];
        for (b, &v) in buf.iter_mut().zip(g.iter()) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        for (b, r) in buf.iter_mut().zip(self.rho_hat.iter()) {
            *b *= r;
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / self.conv_len as f64;
        let quad = compensated_sum(
            g.iter()
                .enumerate()
                .map(|(k, &gk)| gk * buf[k].re * scale),
        ) / self.n as f64;
        if quad < -1e-10 {
            return Err(StatsError::NonPsd { value: quad });
        }
        Ok(quad.max(0.0))
    }
}

/// One-shot form of [`MalliavinEvaluator`].
pub fn malliavin_norm_sq(
    path: &[f64],
    rho: &CovarianceSequence,
    f: &HermiteCombination,
) -> Result<f64, StatsError> {
    MalliavinEvaluator::new(rho, f, path.len())?.norm_sq(path)
}

/// Monte Carlo moments of `V_n` over a batch, with jackknife standard
/// errors, next to the exact finite-n and asymptotic variances and the
/// normalized statistic `F_n = V_n/σ_n`.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub n: usize,
    pub m: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub fourth_moment: f64,
    pub fourth_moment_se: f64,
    /// `E[V⁴] − 3 (E[V²])²` on the sample.
    pub fourth_moment_gap: f64,
    pub fourth_moment_gap_se: f64,
    pub sigma_n_sq_exact: f64,
    /// None when the summability check could not pass at the available
    /// cutoff.
    pub sigma_sq_asymptotic: Option<f64>,
    /// Fourth moment of `F_n = V_n/σ_n` (σ_n from the exact formula).
    pub fn_fourth_moment: f64,
    pub fn_fourth_moment_se: f64,
    /// `E[F_n⁴] − 3`.
    pub fn_fourth_gap: f64,
    pub fn_fourth_gap_se: f64,
}

const MOMENT_MIN_BATCH: usize = 100;

fn jackknife_se(thetas: &[f64]) -> f64 {
    let m = thetas.len() as f64;
    let mean = thetas.iter().sum::<f64>() / m;
    let ss: f64 = thetas.iter().map(|&t| (t - mean) * (t - mean)).sum();
    ((m - 1.0) / m * ss).sqrt()
}

/// Report from precomputed `V_n` samples; the batch-driven entry point
/// below is a thin wrapper.
pub fn moment_report_from_samples(
    v: &[f64],
    n: usize,
    sigma_n_sq: f64,
    sigma_sq_asym: Option<f64>,
) -> Result<MomentReport, StatsError> {
    let m = v.len();
    if m < MOMENT_MIN_BATCH {
        return Err(StatsError::BatchTooSmall {
            m,
            min: MOMENT_MIN_BATCH,
        });
    }
    let mf = m as f64;
    let s1 = compensated_sum(v.iter().copied());
    let s2 = compensated_sum(v.iter().map(|&x| x * x));
    let s4 = compensated_sum(v.iter().map(|&x| x * x * x * x));
    let mean = s1 / mf;
    let variance = (s2 - s1 * s1 / mf) / (mf - 1.0);
    if !(variance > 0.0) {
        return Err(StatsError::DegenerateBatch);
    }
    let fourth = s4 / mf;

    // Leave-one-out statistics are O(1) from the power sums.
    let var_i = |x: f64| {
        let s1i = s1 - x;
        let s2i = s2 - x * x;
        (s2i - s1i * s1i / (mf - 1.0)) / (mf - 2.0)
    };
    let fourth_i = |x: f64| (s4 - x * x * x * x) / (mf - 1.0);

    let mean_thetas: Vec<f64> = v.iter().map(|&x| (s1 - x) / (mf - 1.0)).collect();
    let var_thetas: Vec<f64> = v.iter().map(|&x| var_i(x)).collect();
    let fourth_thetas: Vec<f64> = v.iter().map(|&x| fourth_i(x)).collect();
    let gap_thetas: Vec<f64> = v
        .iter()
        .map(|&x| {
            let vi = var_i(x);
            fourth_i(x) - 3.0 * vi * vi
        })
        .collect();

    let gap = fourth - 3.0 * variance * variance;
    let sn4 = sigma_n_sq * sigma_n_sq;
    let fn_fourth = fourth / sn4;
    let fn_fourth_se = jackknife_se(&fourth_thetas) / sn4;

    Ok(MomentReport {
        n,
        m,
        mean,
        mean_se: jackknife_se(&mean_thetas),
        variance,
        variance_se: jackknife_se(&var_thetas),
        fourth_moment: fourth,
        fourth_moment_se: jackknife_se(&fourth_thetas),
        fourth_moment_gap: gap,
        fourth_moment_gap_se: jackknife_se(&gap_thetas),
        sigma_n_sq_exact: sigma_n_sq,
        sigma_sq_asymptotic: sigma_sq_asym,
        fn_fourth_moment: fn_fourth,
        fn_fourth_moment_se: fn_fourth_se,
        fn_fourth_gap: fn_fourth - 3.0,
        fn_fourth_gap_se: fn_fourth_se,
    })
}

pub fn moment_report(
    batch: &PathBatch,
    f: &HermiteCombination,
    rho: &CovarianceSequence,
) -> Result<MomentReport, StatsError> {
    let v: Vec<f64> = (0..batch.m)
        .into_par_iter()
        .map(|i| v_statistic(batch.row(i), f))
        .collect();
    let sigma_n = sigma_n_sq_exact(f, rho, batch.n)?;
    let sigma_asym = sigma_sq_asymptotic(f, rho, rho.max_lag()).ok();
    moment_report_from_samples(&v, batch.n, sigma_n, sigma_asym)
}

impl MomentReport {
    pub const CSV_COLUMNS: &'static str = "n,M,mean,mean_se,variance,variance_se,\
fourth_moment,fourth_moment_se,fourth_moment_gap,fourth_moment_gap_se,\
sigma_n_sq_exact,sigma_sq_asymptotic,fn_fourth_moment,fn_fourth_moment_se,\
fn_fourth_gap,fn_fourth_gap_se";

    pub fn csv_fields(&self) -> String {
        let asym = self
            .sigma_sq_asymptotic
            .map(|s| format!("{s:.12e}"))
            .unwrap_or_else(|| "divergent".to_string());
        format!(
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.n,
            self.m,
            self.mean,
            self.mean_se,
            self.variance,
            self.variance_se,
            self.fourth_moment,
            self.fourth_moment_se,
            self.fourth_moment_gap,
            self.fourth_moment_gap_se,
            self.sigma_n_sq_exact,
            asym,
            self.fn_fourth_moment,
            self.fn_fourth_moment_se,
            self.fn_fourth_gap,
            self.fn_fourth_gap_se,
        )
    }
}

/// One negative-moment estimate `E[‖DV_n‖^{−p}]` with its bootstrap error.
#[derive(Debug, Clone)]
pub struct NegativeMomentEstimate {
    pub p: f64,
    pub estimate: f64,
    pub bootstrap_se: f64,
}

/// Per-path `‖DV_n‖²` samples and negative-moment estimates.
#[derive(Debug, Clone)]
pub struct MalliavinReport {
    pub n: usize,
    pub m: usize,
    pub estimates: Vec<NegativeMomentEstimate>,
    pub min_norm_sq: f64,
    pub median_norm_sq: f64,
    /// Squared norms below [`NORM_SQ_FLOOR`], excluded from the estimates.
    pub anomaly_count: usize,
    /// `q·q!·a_q²·ψ_0^{2q}` when causal coefficients are available.
    pub floor_constant: Option<f64>,
}

const MALLIAVIN_MIN_BATCH: usize = 1000;

/// Negative moments of the derivative norm over a batch: the estimate for
/// `p` is the sample mean of `(‖DV‖²)^{−p/2}`, never a division of raw
/// doubles, and the standard errors are bootstrapped because these
/// estimators are fat-tailed.
pub fn malliavin_report(
    batch: &PathBatch,
    f: &HermiteCombination,
    rho: &CovarianceSequence,
    p_list: &[f64],
    psi: Option<&CausalCoefficients>,
) -> Result<MalliavinReport, StatsError> {
    if batch.m < MALLIAVIN_MIN_BATCH {
        return Err(StatsError::BatchTooSmall {
            m: batch.m,
            min: MALLIAVIN_MIN_BATCH,
        });
    }
    let evaluator = MalliavinEvaluator::new(rho, f, batch.n)?;
    let norms: Vec<f64> = (0..batch.m)
        .into_par_iter()
        .map(|i| evaluator.norm_sq(batch.row(i)))
        .collect::<Result<_, _>>()?;
    malliavin_report_from_norms(&norms, batch.n, batch.seed, p_list, f, psi)
}

/// Report from precomputed squared norms (the streaming drivers use this).
pub fn malliavin_report_from_norms(
    norms: &[f64],
    n: usize,
    seed: u64,
    p_list: &[f64],
    f: &HermiteCombination,
    psi: Option<&CausalCoefficients>,
) -> Result<MalliavinReport, StatsError> {
    let m = norms.len();
    if m < MALLIAVIN_MIN_BATCH {
        return Err(StatsError::BatchTooSmall {
            m,
            min: MALLIAVIN_MIN_BATCH,
        });
    }
    let kept: Vec<f64> = norms.iter().copied().filter(|&x| x >= NORM_SQ_FLOOR).collect();
    let anomaly_count = m - kept.len();
    if kept.is_empty() {
        return Err(StatsError::DegenerateBatch);
    }
    let mut sorted = kept.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];

    // Bootstrap stream is fixed by the batch seed but distinct from every
    // path stream.
    let mut boot_rng = ChaCha12Rng::seed_from_u64(seed);
    boot_rng.set_stream(u64::MAX);

    let mut estimates = Vec::with_capacity(p_list.len());
    for &p in p_list {
        let y: Vec<f64> = kept.iter().map(|&x| x.powf(-p / 2.0)).collect();
        let mean = compensated_sum(y.iter().copied()) / y.len() as f64;
        let mut boot_means = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for _ in 0..BOOTSTRAP_RESAMPLES {
            let mut s = 0.0;
            for _ in 0..y.len() {
                s += y[boot_rng.gen_range(0..y.len())];
            }
            boot_means.push(s / y.len() as f64);
        }
        let bm = boot_means.iter().sum::<f64>() / boot_means.len() as f64;
        let bv = boot_means
            .iter()
            .map(|&x| (x - bm) * (x - bm))
            .sum::<f64>()
            / (boot_means.len() - 1) as f64;
        estimates.push(NegativeMomentEstimate {
            p,
            estimate: mean,
            bootstrap_se: bv.sqrt(),
        });
    }
    Ok(MalliavinReport {
        n,
        m,
        estimates,
        min_norm_sq: sorted[0],
        median_norm_sq: median,
        anomaly_count,
        floor_constant: psi.map(|c| floor_constant(f, c)),
    })
}

impl MalliavinReport {
    pub const CSV_COLUMNS: &'static str =
        "n,M,p,estimate,bootstrap_se,min_norm_sq,median_norm_sq,anomaly_count,floor_constant";

    /// One CSV row per requested `p`.
    pub fn csv_rows(&self) -> Vec<String> {
        let fc = self
            .floor_constant
            .map(|c| format!("{c:.12e}"))
            .unwrap_or_default();
        self.estimates
            .iter()
            .map(|e| {
                format!(
                    "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                    self.n,
                    self.m,
                    e.p,
                    e.estimate,
                    e.bootstrap_se,
                    self.min_norm_sq,
                    self.median_norm_sq,
                    self.anomaly_count,
                    fc
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::simulate_circulant;
    use crate::spectral::fgn_covariance;
    use rand::Rng;

    fn h2() -> HermiteCombination {
        HermiteCombination::new(&[(2, 1.0)]).unwrap()
    }

    #[test]
    fn v_statistic_closed_cases() {
        let f = h2();
        // H_2(0) = −1 on a zero path of length 4
        assert!((v_statistic(&[0.0; 4], &f) + 2.0).abs() < 1e-15);
        // H_2(±1) = 0
        assert_eq!(v_statistic(&[1.0, -1.0], &f), 0.0);
    }

    #[test]
    fn v_statistic_matches_double_loop() {
        let f = HermiteCombination::new(&[(2, 0.8), (3, -0.2), (4, 0.05)]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let path: Vec<f64> = (0..400).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let naive: f64 = path.iter().map(|&x| f.eval(x)).sum::<f64>() / (400f64).sqrt();
        let v = v_statistic(&path, &f);
        assert!((v - naive).abs() <= 1e-12 * naive.abs().max(1.0));
    }

    #[test]
    fn sigma_sq_asymptotic_white_noise() {
        let rho = CovarianceSequence::white(64);
        assert!((sigma_sq_asymptotic(&h2(), &rho, 64).unwrap() - 2.0).abs() < 1e-14);
        let f23 = HermiteCombination::new(&[(2, 1.0), (3, 1.0)]).unwrap();
        assert!((sigma_sq_asymptotic(&f23, &rho, 64).unwrap() - 8.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_sq_asymptotic_fgn_frozen_value() {
        // Frozen reference: direct summation to 1e7 lags plus analytic tail
        // (Hurwitz-zeta extrapolation) gives Σ-based σ² = 2.164261641365486
        // for H = 0.6, a₂ = 1. The truncated implementation at 2^23 lags
        // must land within its own tail deficit (≈ 6.7e-6).
        let rho = CovarianceSequence::from_fn(1 << 23, |k| fgn_covariance(0.6, k)).unwrap();
        let sigma = sigma_sq_asymptotic(&h2(), &rho, 1 << 23).unwrap();
        assert!(
            (sigma - 2.164261641365486).abs() < 1e-5,
            "sigma^2 = {sigma}"
        );
    }

    #[test]
    fn sigma_sq_divergence_detected_for_h09() {
        let rho = CovarianceSequence::from_fn(1 << 16, |k| fgn_covariance(0.9, k)).unwrap();
        let err = sigma_sq_asymptotic(&h2(), &rho, 1 << 16);
        assert!(matches!(err, Err(StatsError::Divergent { .. })));
    }

    #[test]
    fn sigma_n_sq_exact_cases() {
        let rho = CovarianceSequence::white(1024);
        // only v = 0 contributes: Σ j! a_j²
        assert!((sigma_n_sq_exact(&h2(), &rho, 1).unwrap() - 2.0).abs() < 1e-14);
        assert!((sigma_n_sq_exact(&h2(), &rho, 777).unwrap() - 2.0).abs() < 1e-14);
        let f = HermiteCombination::new(&[(2, 1.0), (3, 0.5)]).unwrap();
        assert!((sigma_n_sq_exact(&f, &rho, 10).unwrap() - (2.0 + 6.0 * 0.25)).abs() < 1e-14);
    }

    #[test]
    fn sigma_n_converges_to_sigma_asymptotic() {
        // Cesàro sums approach the full series, within 2% at n = 2^14 for
        // fGn H = 0.6.
        let rho = CovarianceSequence::from_fn(1 << 23, |k| fgn_covariance(0.6, k)).unwrap();
        let f = h2();
        let asym = sigma_sq_asymptotic(&f, &rho, 1 << 23).unwrap();
        let mut prev_gap = f64::INFINITY;
        for n in [1usize << 8, 1 << 10, 1 << 12, 1 << 14] {
            let sn = sigma_n_sq_exact(&f, &rho, n).unwrap();
            let gap = (asym - sn).abs() / asym;
            assert!(gap < prev_gap, "gap not shrinking at n={n}");
            prev_gap = gap;
        }
        assert!(prev_gap < 0.02, "relative gap {prev_gap} at n=2^14");
    }

    fn direct_norm_sq(path: &[f64], rho: &CovarianceSequence, f: &HermiteCombination) -> f64 {
        let df = f.derivative();
        let g: Vec<f64> = path.iter().map(|&x| df.eval(x)).collect();
        let n = path.len();
        let mut acc = 0.0;
        for k1 in 0..n {
            for k2 in 0..n {
                acc += g[k1] * rho.lag(k1.abs_diff(k2)) * g[k2];
            }
        }
        acc / n as f64
    }

    #[test]
    fn malliavin_single_point() {
        // n = 1, f = H_2: ⟨DV,DV⟩ = (2x)²ρ(0) = 4x².
        let rho = CovarianceSequence::white(1);
        let x = 1.7;
        let v = malliavin_norm_sq(&[x], &rho, &h2()).unwrap();
        assert!((v - 4.0 * x * x).abs() < 1e-12);
    }

    #[test]
    fn malliavin_white_noise_is_diagonal() {
        let rho = CovarianceSequence::white(64);
        let f = HermiteCombination::new(&[(2, 1.0), (3, -0.3)]).unwrap();
        let df = f.derivative();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let path: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let expect: f64 =
            path.iter().map(|&x| df.eval(x) * df.eval(x)).sum::<f64>() / 64.0;
        let got = malliavin_norm_sq(&path, &rho, &f).unwrap();
        assert!((got - expect).abs() < 1e-11 * expect.max(1.0));
    }

    #[test]
    fn malliavin_fft_matches_direct_oracle() {
        let rho = CovarianceSequence::from_fn(64, |k| fgn_covariance(0.7, k)).unwrap();
        let f = h2();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..5 {
            let path: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.5..2.5)).collect();
            let fft = malliavin_norm_sq(&path, &rho, &f).unwrap();
            let direct = direct_norm_sq(&path, &rho, &f);
            assert!(
                (fft - direct).abs() <= 1e-10 * direct.abs().max(1.0),
                "{fft} vs {direct}"
            );
        }
    }

    #[test]
    fn moment_report_white_noise_h2() {
        let n = 1 << 10;
        let m = 4000;
        let rho = CovarianceSequence::white(n);
        let batch = simulate_circulant(&rho, n, m, 42, "white").unwrap();
        let rep = moment_report(&batch, &h2(), &rho).unwrap();
        assert!((rep.variance - 2.0).abs() < 4.0 * rep.variance_se, "{rep:?}");
        assert!(
            (rep.fn_fourth_moment - 3.0).abs() < 4.0 * rep.fn_fourth_moment_se,
            "fn fourth {} se {}",
            rep.fn_fourth_moment,
            rep.fn_fourth_moment_se
        );
        assert!(rep.mean.abs() < 4.0 * rep.mean_se);
        assert_eq!(rep.sigma_sq_asymptotic, Some(sigma_sq_asymptotic(&h2(), &rho, n).unwrap()));
    }

    #[test]
    fn moment_report_scaling_equivariance() {
        let n = 256;
        let rho = CovarianceSequence::white(n);
        let batch = simulate_circulant(&rho, n, 500, 9, "white").unwrap();
        let f1 = h2();
        let f2 = f1.scaled(2.0).unwrap();
        let r1 = moment_report(&batch, &f1, &rho).unwrap();
        let r2 = moment_report(&batch, &f2, &rho).unwrap();
        assert_eq!(r2.variance, 4.0 * r1.variance);
        assert_eq!(r2.fourth_moment, 16.0 * r1.fourth_moment);
        // normalized statistics are scale-free
        assert_eq!(r2.fn_fourth_moment, r1.fn_fourth_moment);
        assert_eq!(r2.fn_fourth_gap, r1.fn_fourth_gap);
    }

    #[test]
    fn moment_report_preconditions() {
        let rho = CovarianceSequence::white(16);
        let batch = simulate_circulant(&rho, 16, 50, 1, "w").unwrap();
        assert!(matches!(
            moment_report(&batch, &h2(), &rho),
            Err(StatsError::BatchTooSmall { .. })
        ));
    }

    #[test]
    fn malliavin_report_white_noise_stability() {
        // p = 2 estimates stay finite and within ±20% across a dyadic
        // n-grid.
        let f = h2();
        let mut estimates = Vec::new();
        for n in [1usize << 10, 1 << 11, 1 << 12] {
            let rho = CovarianceSequence::white(n);
            let batch = simulate_circulant(&rho, n, 1500, 77, "white").unwrap();
            let rep = malliavin_report(&batch, &f, &rho, &[2.0], None).unwrap();
            assert_eq!(rep.anomaly_count, 0);
            assert!(rep.estimates[0].estimate.is_finite());
            estimates.push(rep.estimates[0].estimate);
        }
        let lo = estimates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = estimates.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo < 1.2, "estimates {estimates:?}");
    }

    #[test]
    fn malliavin_report_scaling_homogeneity() {
        let n = 256;
        let rho = CovarianceSequence::white(n);
        let batch = simulate_circulant(&rho, n, 1200, 5, "w").unwrap();
        let f1 = h2();
        let c = 2.0;
        let f2 = f1.scaled(c).unwrap();
        let r1 = malliavin_report(&batch, &f1, &rho, &[1.0], None).unwrap();
        let r2 = malliavin_report(&batch, &f2, &rho, &[1.0], None).unwrap();
        // ‖DV‖² scales by c² exactly, so the p-th negative moment by c^{−p}
        assert_eq!(r2.min_norm_sq, c * c * r1.min_norm_sq);
        assert!(
            (r2.estimates[0].estimate - r1.estimates[0].estimate / c).abs()
                < 1e-12 * r1.estimates[0].estimate
        );
    }

    #[test]
    fn malliavin_below_n0_diverges_with_batch_size() {
        // n = 1, p = 1: ‖DV‖² = 4X² and E[(4X²)^{−1/2}] = E[1/(2|X|)] = ∞.
        // Prefix means of a heavy-tailed positive variable drift upward
        // instead of stabilizing; the median estimate across seeds must
        // grow with M. (Any single seed can be dominated by one early
        // near-zero X, so the median is the stable observable.)
        use crate::simulate::NoiseStream;
        let f = h2();
        let sizes = [1000usize, 10_000, 100_000];
        let mut medians = Vec::new();
        for (mi, &m) in sizes.iter().enumerate() {
            let mut per_seed: Vec<f64> = (0..31u64)
                .map(|seed| {
                    let xs = NoiseStream::new(seed, 0).standard_normals(m);
                    compensated_sum(xs.iter().map(|&x| 1.0 / (2.0 * x.abs()))) / m as f64
                })
                .collect();
            per_seed.sort_by(|a, b| a.total_cmp(b));
            medians.push(per_seed[per_seed.len() / 2]);
            // the report pipeline must agree with the direct mean
            if mi == 0 {
                let xs = NoiseStream::new(0, 0).standard_normals(m);
                let norms: Vec<f64> = xs.iter().map(|&x| 4.0 * x * x).collect();
                let rep =
                    malliavin_report_from_norms(&norms, 1, 0, &[1.0], &f, None).unwrap();
                let direct =
                    compensated_sum(xs.iter().map(|&x| 1.0 / (2.0 * x.abs()))) / m as f64;
                assert!((rep.estimates[0].estimate - direct).abs() < 1e-12 * direct);
            }
        }
        assert!(
            medians[1] > medians[0] && medians[2] > medians[1],
            "medians {medians:?}"
        );
    }
}
