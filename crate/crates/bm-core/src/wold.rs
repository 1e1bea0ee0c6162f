//! Causal (minimal-phase) moving-average factorization of spectral
//! densities: recovers `ψ_0, ψ_1, …` with `X_k = Σ_j ψ_j w_{k−j}`,
//! `ψ_0 > 0`, from a density with integrable log.
//!
//! The method is cepstral (Kolmogorov) factorization on the midpoint grid:
//! Fourier coefficients `c_k` of `log(2π f)` are folded one-sided into
//! `A(λ) = c_0/2 + Σ_{k≥1} c_k e^{−ikλ}` (plus half the Nyquist bin, which
//! keeps the grid reconstruction exact), and `Ψ = exp(A)` is transformed
//! back. `|Ψ(λ)|² = 2π f(λ)` then holds on the grid to rounding, and the
//! one-sided weighting — `c_0` once, `c_k` doubled for `k ≥ 1` inside
//! `2 Re A` — is pinned by the white-noise and MA(1) tests below.

use std::io::{BufRead, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::grid::{analysis_coeffs, is_power_of_two, synthesis_values, to_complex};
use crate::hermite::{factorial, HermiteCombination};
use crate::spectral::{check_log_integrability, SpectralError, SpectralModel};

/// Truncations keeping less than this much of the unit variance are
/// rejected as too short.
pub const RESIDUAL_MASS_LIMIT: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum WoldError {
    #[error("grid: {0}")]
    Grid(String),
    #[error("spectral density does not satisfy the log-integrability hypothesis: {detail}")]
    Hypothesis { detail: String },
    #[error("{0}")]
    Spectral(SpectralError),
    #[error(
        "truncation too short: residual mass {achieved_mass:.3e} exceeds {limit:.0e}; {advice}"
    )]
    TruncationTooShort {
        achieved_mass: f64,
        limit: f64,
        advice: String,
    },
    #[error("lag {lag} exceeds truncation length {max}")]
    LagOutOfRange { lag: usize, max: usize },
    #[error("coefficient file: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Truncated causal MA coefficients `ψ_0..ψ_L` with `ψ_0 > 0` and
/// `Σ ψ_j² = 1 − residual_mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalCoefficients {
    psi: Vec<f64>,
    residual_mass: f64,
}

impl CausalCoefficients {
    pub fn new(psi: Vec<f64>) -> Result<Self, WoldError> {
        if psi.is_empty() {
            return Err(WoldError::Parse("no coefficients".into()));
        }
        if !(psi[0] > 0.0) {
            return Err(WoldError::Parse(format!(
                "ψ_0 = {} must be positive",
                psi[0]
            )));
        }
        let sum_sq: f64 = psi.iter().map(|&p| p * p).sum();
        if sum_sq > 1.0 + 1e-8 {
            return Err(WoldError::Parse(format!(
                "Σψ² = {sum_sq} exceeds the unit variance"
            )));
        }
        Ok(Self {
            residual_mass: 1.0 - sum_sq,
            psi,
        })
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn psi0(&self) -> f64 {
        self.psi[0]
    }

    pub fn truncation_l(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn residual_mass(&self) -> f64 {
        self.residual_mass
    }

    /// One coefficient per line, after a header recording the contract.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), WoldError> {
        writeln!(
            w,
            "psi0_positive=true L={} residual={:e}",
            self.truncation_l(),
            self.residual_mass
        )?;
        for p in &self.psi {
            writeln!(w, "{p:.17e}")?;
        }
        Ok(())
    }

    pub fn write_to_path(&self, path: &Path) -> Result<(), WoldError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, WoldError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| WoldError::Parse("empty file".into()))??;
        let mut declared_l = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("psi0_positive", "true")) => {}
                Some(("psi0_positive", v)) => {
                    return Err(WoldError::Parse(format!("psi0_positive={v}")));
                }
                Some(("L", v)) => {
                    declared_l = Some(v.parse::<usize>().map_err(|_| {
                        WoldError::Parse(format!("bad L field: {v}"))
                    })?);
                }
                Some(("residual", _)) => {}
                _ => return Err(WoldError::Parse(format!("bad header field: {field}"))),
            }
        }
        let mut psi = Vec::new();
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            psi.push(
                t.parse::<f64>()
                    .map_err(|_| WoldError::Parse(format!("bad coefficient: {t}")))?,
            );
        }
        if let Some(l) = declared_l {
            if l + 1 != psi.len() {
                return Err(WoldError::Parse(format!(
                    "header claims L={l} but file has {} coefficients",
                    psi.len()
                )));
            }
        }
        Self::new(psi)
    }

    pub fn read_from_path(path: &Path) -> Result<Self, WoldError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Cepstral factorization of `model`'s density into causal coefficients
/// `ψ_0..ψ_L` on a midpoint grid of `grid_size` points (a power of two, at
/// least `16·truncation_l`).
///
/// Fails when the log-integrability hypothesis does not hold, and when the
/// requested truncation keeps less than `1 − RESIDUAL_MASS_LIMIT` of the
/// variance — in that case the error names the smallest adequate length
/// found by doubling probes.
pub fn factorize(
    model: &SpectralModel,
    truncation_l: usize,
    grid_size: usize,
) -> Result<CausalCoefficients, WoldError> {
    if truncation_l == 0 {
        return Err(WoldError::Grid("truncation length must be ≥ 1".into()));
    }
    if !is_power_of_two(grid_size) || grid_size < 16 * truncation_l {
        return Err(WoldError::Grid(format!(
            "grid_size {grid_size} must be a power of two ≥ 16·L = {}",
            16 * truncation_l
        )));
    }
    match check_log_integrability(model, grid_size) {
        Ok(li) if li.satisfied => {}
        Ok(li) => {
            return Err(WoldError::Hypothesis {
                detail: format!(
                    "∫|log f| refinements not Cauchy (relative change {:.3e})",
                    li.refinement_delta
                ),
            });
        }
        Err(e @ SpectralError::NonPositiveDensity { .. }) => {
            return Err(WoldError::Hypothesis {
                detail: e.to_string(),
            });
        }
        Err(e) => return Err(WoldError::Spectral(e)),
    }

    let f = model.density_on_grid(grid_size).map_err(WoldError::Spectral)?;
    if f.iter().any(|&v| v <= 0.0) {
        return Err(WoldError::Hypothesis {
            detail: "density vanishes at a grid point".into(),
        });
    }
    let tau = 2.0 * std::f64::consts::PI;
    let log_vals: Vec<f64> = f.iter().map(|&v| (tau * v).ln()).collect();
    let cep = analysis_coeffs(&to_complex(&log_vals));

    let g = grid_size;
    let half = g / 2;
    let mut one_sided = vec![Complex64::new(0.0, 0.0); g];
    one_sided[0] = cep[0] * 0.5;
    one_sided[1..half].copy_from_slice(&cep[1..half]);
    // Index `half` carries the −G/2 bin; half of it keeps 2·Re A equal to
    // the sampled log on every grid point.
    one_sided[half] = cep[half] * 0.5;

    let transfer: Vec<Complex64> = synthesis_values(&one_sided)
        .iter()
        .map(|a| a.exp())
        .collect();
    // Contract: the constructed transfer function reproduces the density
    // on the grid to 1e-6 relative (the Nyquist fold makes this hold to
    // rounding; a violation means the density is numerically unusable).
    let worst_ratio = transfer
        .iter()
        .zip(f.iter())
        .map(|(t, &fv)| (t.norm_sqr() / (tau * fv) - 1.0).abs())
        .fold(0.0f64, f64::max);
    if worst_ratio > 1e-6 {
        return Err(WoldError::Hypothesis {
            detail: format!(
                "transfer reconstruction off by {worst_ratio:.3e} on the grid"
            ),
        });
    }
    let psi_full = analysis_coeffs(&transfer);
    let psi: Vec<f64> = psi_full[..=truncation_l].iter().map(|c| c.re).collect();
    if !(psi[0] > 0.0) {
        return Err(WoldError::Parse(format!(
            "factorization produced ψ_0 = {}",
            psi[0]
        )));
    }

    let mass = |l: usize| -> f64 { 1.0 - psi_full[..=l].iter().map(|c| c.re * c.re).sum::<f64>() };
    let residual = mass(truncation_l);
    if residual > RESIDUAL_MASS_LIMIT {
        let mut probe = truncation_l;
        let mut adequate = None;
        while probe * 2 <= g / 16 {
            probe *= 2;
            if mass(probe) <= RESIDUAL_MASS_LIMIT {
                adequate = Some(probe);
                break;
            }
        }
        let advice = match adequate {
            Some(l) => format!("smallest adequate truncation found by doubling: L = {l}"),
            None => format!(
                "no adequate truncation up to L = {} on this grid; enlarge grid_size",
                g / 16
            ),
        };
        return Err(WoldError::TruncationTooShort {
            achieved_mass: residual,
            limit: RESIDUAL_MASS_LIMIT,
            advice,
        });
    }
    Ok(CausalCoefficients {
        psi,
        residual_mass: residual,
    })
}

/// `ρ(lag) = Σ_{j} ψ_j ψ_{j+lag}` from the truncated coefficients.
pub fn covariance_from_psi(psi: &CausalCoefficients, lag: usize) -> Result<f64, WoldError> {
    let l = psi.truncation_l();
    if lag > l {
        return Err(WoldError::LagOutOfRange { lag, max: l });
    }
    let p = psi.psi();
    Ok((0..=l - lag).map(|j| p[j] * p[j + lag]).sum())
}

/// Ratios `|Σ_j ψ_j e^{−ijλ}|² / (2π f(λ))` on the midpoint grid — the
/// spectral-match diagnostic for a truncated factorization.
pub fn transfer_ratio(
    psi: &CausalCoefficients,
    model: &SpectralModel,
    grid_size: usize,
) -> Result<Vec<f64>, WoldError> {
    if !is_power_of_two(grid_size) || grid_size <= psi.truncation_l() {
        return Err(WoldError::Grid(
            "grid_size must be a power of two larger than the truncation".into(),
        ));
    }
    let mut spec = vec![Complex64::new(0.0, 0.0); grid_size];
    for (j, &p) in psi.psi().iter().enumerate() {
        spec[j] = Complex64::new(p, 0.0);
    }
    let vals = synthesis_values(&spec);
    let f = model.density_on_grid(grid_size).map_err(WoldError::Spectral)?;
    let tau = 2.0 * std::f64::consts::PI;
    Ok(vals
        .iter()
        .zip(f.iter())
        .map(|(v, &fv)| v.norm_sqr() / (tau * fv))
        .collect())
}

/// The lower-bound constant `q·q!·a_q²·ψ_0^{2q}` attached to the top order
/// `q` of the combination; reported as a diagnostic next to the negative
/// moments of the Malliavin derivative norm.
pub fn floor_constant(f: &HermiteCombination, psi: &CausalCoefficients) -> f64 {
    let q = f.top();
    let a_q = f.coeff(q);
    q as f64 * factorial(q) * a_q * a_q * psi.psi0().powi(2 * q as i32)
}
