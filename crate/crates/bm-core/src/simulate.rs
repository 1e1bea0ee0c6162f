//! Seeded generation of stationary Gaussian path batches.
//!
//! Two generators are kept deliberately: circulant embedding samples the
//! exact law from the covariance in O(n log n), and the causal MA route
//! drives the factorized `ψ` filter with white noise. Each one checks the
//! other, and the causal route is the one whose hypotheses the Malliavin
//! diagnostics are phrased through.
//!
//! Randomness: one ChaCha stream per path, `(seed, stream_index = path
//! index)`. Streams are indexed, never shared, so batches are bit-identical
//! regardless of how many workers generate them.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::spectral::CovarianceSequence;
use crate::wold::CausalCoefficients;

const MAGIC: &[u8; 4] = b"BMPB";
const FORMAT_VERSION: u32 = 1;

/// Eigenvalues of the circulant embedding more negative than this abort
/// the simulation; anything in `(−1e−8, 0)` is floating-point noise and is
/// clipped to zero.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(
        "circulant embedding failed: eigenvalue {min_eig:.3e} below −{tol:.0e}; \
         double the embedding size or check the covariance"
    )]
    Embedding { min_eig: f64, tol: f64 },
    #[error("burn-in {burn_in} is shorter than the filter length {required}")]
    BurnInTooShort { burn_in: usize, required: usize },
    #[error("covariance sequence has max lag {have}, need at least {need}")]
    CovarianceTooShort { need: usize, have: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("batch file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMethod {
    Circulant,
    CausalMa,
}

impl SimMethod {
    fn to_byte(self) -> u8 {
        match self {
            SimMethod::Circulant => 0,
            SimMethod::CausalMa => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self, SimError> {
        match b {
            0 => Ok(SimMethod::Circulant),
            1 => Ok(SimMethod::CausalMa),
            other => Err(SimError::Format(format!("unknown method byte {other}"))),
        }
    }
}

impl std::fmt::Display for SimMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimMethod::Circulant => write!(f, "circulant"),
            SimMethod::CausalMa => write!(f, "causal_ma"),
        }
    }
}

/// A reproducible source of standard normals: `(seed, stream_index)`
/// selects an independent ChaCha stream, and identical pairs reproduce the
/// sequence bit for bit.
#[derive(Debug, Clone, Copy)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }

    pub fn standard_normals(&self, len: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    }
}

/// M × n batch of stationary paths with its seed provenance.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub method: SimMethod,
    /// Free-form provenance (model id, clipped embedding mass, …). Not part
    /// of the binary format.
    pub model_id: String,
    data: Vec<f64>,
}

impl PathBatch {
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        seed: u64,
        method: SimMethod,
        model_id: String,
    ) -> Result<Self, SimError> {
        let m = rows.len();
        if m == 0 {
            return Err(SimError::InvalidParameter("empty batch".into()));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(SimError::InvalidParameter("ragged batch".into()));
        }
        let mut data = Vec::with_capacity(m * n);
        for r in rows {
            data.extend_from_slice(&r);
        }
        Ok(Self {
            n,
            m,
            seed,
            method,
            model_id,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.m).map(move |i| self.row(i))
    }

    /// Little-endian binary: magic `BMPB`, version u32, n u64, M u64,
    /// seed u64, method u8, then M·n doubles row-major.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), SimError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&[self.method.to_byte()])?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_to_path(&self, path: &Path) -> Result<(), SimError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, SimError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SimError::Format("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != FORMAT_VERSION {
            return Err(SimError::Format(format!("unsupported version {version}")));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let m = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let seed = u64::from_le_bytes(u64buf);
        let mut method_byte = [0u8; 1];
        r.read_exact(&mut method_byte)?;
        let method = SimMethod::from_byte(method_byte[0])?;
        let count = n
            .checked_mul(m)
            .ok_or_else(|| SimError::Format("n·M overflows".into()))?;
        let mut data = vec![0.0f64; count];
        let mut fbuf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut fbuf)?;
            *v = f64::from_le_bytes(fbuf);
        }
        Ok(Self {
            n,
            m,
            seed,
            method,
            model_id: String::new(),
            data,
        })
    }

    pub fn read_from_path(path: &Path) -> Result<Self, SimError> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Circulant-embedding sampler: exact in distribution for the given
/// covariance. Construction pays the eigenvalue FFT once; each path then
/// costs one FFT and one noise stream.
pub struct CirculantSampler {
    n: usize,
    scaled_sqrt_eig: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    clipped_mass: f64,
}

impl CirculantSampler {
    pub fn new(rho: &CovarianceSequence, n: usize) -> Result<Self, SimError> {
        if n < 2 {
            return Err(SimError::InvalidParameter("need n ≥ 2".into()));
        }
        if rho.max_lag() < n - 1 {
            return Err(SimError::CovarianceTooShort {
                need: n - 1,
                have: rho.max_lag(),
            });
        }
        // Minimal embedding is 2(n−1); padding to a power of two buys much
        // faster FFTs whenever the covariance carries enough lags for the
        // wider wrap-around.
        let minimal = 2 * (n - 1);
        let padded = minimal.next_power_of_two();
        let size = if padded / 2 <= rho.max_lag() {
            padded
        } else {
            minimal
        };
        let mut first_row = vec![Complex64::new(0.0, 0.0); size];
        for j in 0..=size / 2 {
            first_row[j].re = rho.lag(j);
        }
        for j in 1..size.div_ceil(2) {
            first_row[size - j].re = rho.lag(j);
        }
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(size).process(&mut first_row);
        let eigs: Vec<f64> = first_row.iter().map(|c| c.re).collect();
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -EIGENVALUE_TOLERANCE {
            return Err(SimError::Embedding {
                min_eig,
                tol: EIGENVALUE_TOLERANCE,
            });
        }
        let total: f64 = eigs.iter().map(|&e| e.max(0.0)).sum();
        let clipped: f64 = eigs.iter().filter(|&&e| e < 0.0).map(|&e| -e).sum();
        let inv_sqrt_size = 1.0 / (size as f64).sqrt();
        let scaled_sqrt_eig = eigs
            .iter()
            .map(|&e| e.max(0.0).sqrt() * inv_sqrt_size)
            .collect();
        Ok(Self {
            n,
            scaled_sqrt_eig,
            fft: planner.plan_fft_inverse(size),
            clipped_mass: clipped / total,
        })
    }

    /// Fraction of spectral mass removed by clipping tiny negative
    /// eigenvalues; reported in batch provenance.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    /// One stationary path of length n from stream `(seed, index)`.
    pub fn sample_path(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = NoiseStream::new(seed, index).rng();
        let mut buf: Vec<Complex64> = self
            .scaled_sqrt_eig
            .iter()
            .map(|&s| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                Complex64::new(s * a, s * b)
            })
            .collect();
        self.fft.process(&mut buf);
        buf[..self.n].iter().map(|c| c.re).collect()
    }

    pub fn provenance(&self, model_id: &str) -> String {
        format!("{model_id};clipped_mass={:.3e}", self.clipped_mass)
    }
}

/// Exact-in-distribution batch by circulant embedding of `ρ(0..n−1)`.
pub fn simulate_circulant(
    rho: &CovarianceSequence,
    n: usize,
    m: usize,
    seed: u64,
    model_id: &str,
) -> Result<PathBatch, SimError> {
    if m == 0 {
        return Err(SimError::InvalidParameter("need M ≥ 1".into()));
    }
    let sampler = CirculantSampler::new(rho, n)?;
    let rows: Vec<Vec<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|i| sampler.sample_path(seed, i))
        .collect();
    PathBatch::from_rows(rows, seed, SimMethod::Circulant, sampler.provenance(model_id))
}

/// Causal moving-average sampler: `X_k = Σ_{j=0}^{L} ψ_j w_{k−j}` with a
/// discarded burn-in so every retained output uses a full filter window.
pub struct CausalSampler {
    psi: Vec<f64>,
    n: usize,
    burn_in: usize,
    // FFT path, used once the filter is long enough to beat direct
    // convolution.
    conv_len: usize,
    psi_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

const DIRECT_CONV_MAX_L: usize = 64;

impl CausalSampler {
    pub fn new(psi: &CausalCoefficients, n: usize, burn_in: usize) -> Result<Self, SimError> {
        let l = psi.truncation_l();
        if burn_in < l {
            return Err(SimError::BurnInTooShort {
                burn_in,
                required: l,
            });
        }
        if n == 0 {
            return Err(SimError::InvalidParameter("need n ≥ 1".into()));
        }
        let conv_len = (n + burn_in + l + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(conv_len);
        let inv = planner.plan_fft_inverse(conv_len);
        let mut psi_hat = vec![Complex64::new(0.0, 0.0); conv_len];
        for (j, &p) in psi.psi().iter().enumerate() {
            psi_hat[j].re = p;
        }
        fwd.process(&mut psi_hat);
        Ok(Self {
            psi: psi.psi().to_vec(),
            n,
            burn_in,
            conv_len,
            psi_hat,
            fwd,
            inv,
        })
    }

    pub fn sample_path(&self, seed: u64, index: u64) -> Vec<f64> {
        let noise = NoiseStream::new(seed, index).standard_normals(self.n + self.burn_in);
        let l = self.psi.len() - 1;
        if l <= DIRECT_CONV_MAX_L {
            let mut out = Vec::with_capacity(self.n);
            for k in 0..self.n {
                let t = k + self.burn_in;
                let mut acc = 0.0;
                for (j, &p) in self.psi.iter().enumerate() {
                    acc += p * noise[t - j];
                }
                out.push(acc);
            }
            return out;
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.conv_len];
        for (b, &w) in buf.iter_mut().zip(noise.iter()) {
            b.re = w;
        }
        self.fwd.process(&mut buf);
        for (b, p) in buf.iter_mut().zip(self.psi_hat.iter()) {
            *b *= p;
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / self.conv_len as f64;
        (self.burn_in..self.burn_in + self.n)
            .map(|t| buf[t].re * scale)
            .collect()
    }
}

/// Batch from the causal representation; `burn_in` must be at least the
/// filter length.
pub fn simulate_causal(
    psi: &CausalCoefficients,
    n: usize,
    m: usize,
    seed: u64,
    burn_in: usize,
    model_id: &str,
) -> Result<PathBatch, SimError> {
    if m == 0 {
        return Err(SimError::InvalidParameter("need M ≥ 1".into()));
    }
    let sampler = CausalSampler::new(psi, n, burn_in)?;
    let rows: Vec<Vec<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|i| sampler.sample_path(seed, i))
        .collect();
    PathBatch::from_rows(
        rows,
        seed,
        SimMethod::CausalMa,
        format!("{model_id};burn_in={burn_in}"),
    )
}
