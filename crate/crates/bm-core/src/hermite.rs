//! Probabilists' Hermite polynomials and finite Hermite combinations.
//!
//! Convention: `H_q` is the *probabilists'* polynomial,
//! `H_q(x) = (−1)^q e^{x²/2} dq/dxq e^{−x²/2}`, so `H_0 = 1`, `H_1 = x`,
//! `H_2 = x² − 1`, and `E[H_p(X) H_q(X)] = q! δ_{pq}` under the standard
//! Gaussian measure. The physicists' convention differs by scaling; nothing
//! in this crate uses it.
//!
//! Evaluation always goes through the three-term recurrence
//! `H_{k+1}(x) = x·H_k(x) − k·H_{k−1}(x)`; monomial coefficient tables are
//! confined to test oracles because they cancel catastrophically.

use std::collections::BTreeMap;
use thiserror::Error;

/// Orders above this are rejected: factorials and binomial weights are
/// computed in `f64` and stay well inside range below it, and the theory
/// exercised here only ever needs small orders.
pub const MAX_ORDER: u32 = 60;

#[derive(Debug, Error)]
pub enum HermiteError {
    #[error("Hermite order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: u32, max: u32 },
    #[error("invalid Hermite combination: {0}")]
    InvalidCombination(String),
    #[error("invalid split parameters: a² + b² = {sum_sq} is not 1 within 1e-12")]
    InvalidSplitParameters { sum_sq: f64 },
}

/// `H_order(x)` by the three-term recurrence.
pub fn hermite_eval(order: u32, x: f64) -> Result<f64, HermiteError> {
    if order > MAX_ORDER {
        return Err(HermiteError::UnsupportedOrder {
            order,
            max: MAX_ORDER,
        });
    }
    Ok(hermite_eval_unchecked(order, x))
}

fn hermite_eval_unchecked(order: u32, x: f64) -> f64 {
    match order {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0; // H_0
            let mut cur = x; // H_1
            for k in 1..order {
                let next = x * cur - k as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut out = 1.0;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// A sparse polynomial in the Hermite basis, `Σ_j c_j H_j`, with no
/// constraint on which orders appear. [`HermiteCombination`] wraps this
/// with the rank ≥ 2 requirement; derivatives live here because they may
/// contain order 1.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteSeries {
    coeffs: BTreeMap<u32, f64>,
}

impl HermiteSeries {
    pub fn new(pairs: &[(u32, f64)]) -> Result<Self, HermiteError> {
        let mut coeffs = BTreeMap::new();
        for &(order, c) in pairs {
            if order > MAX_ORDER {
                return Err(HermiteError::UnsupportedOrder {
                    order,
                    max: MAX_ORDER,
                });
            }
            if !c.is_finite() {
                return Err(HermiteError::InvalidCombination(format!(
                    "coefficient at order {order} is not finite"
                )));
            }
            if c != 0.0 {
                *coeffs.entry(order).or_insert(0.0) += c;
            }
        }
        coeffs.retain(|_, c| *c != 0.0);
        Ok(Self { coeffs })
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, order: u32) -> f64 {
        self.coeffs.get(&order).copied().unwrap_or(0.0)
    }

    pub fn orders(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.coeffs.iter().map(|(&o, &c)| (o, c))
    }

    pub fn min_order(&self) -> Option<u32> {
        self.coeffs.keys().next().copied()
    }

    pub fn max_order(&self) -> Option<u32> {
        self.coeffs.keys().next_back().copied()
    }

    /// `Σ_j c_j H_j(x)`, sharing one recurrence pass up to the top order.
    pub fn eval(&self, x: f64) -> f64 {
        let top = match self.max_order() {
            Some(t) => t,
            None => return 0.0,
        };
        let mut acc = self.coeff(0);
        let mut prev = 1.0;
        let mut cur = x;
        if top >= 1 {
            acc += self.coeff(1) * x;
        }
        for k in 1..top {
            let next = x * cur - k as f64 * prev;
            prev = cur;
            cur = next;
            acc += self.coeff(k + 1) * cur;
        }
        acc
    }
}

/// A finite Hermite combination `f = Σ_{j=d}^{q} a_j H_j` with Hermite rank
/// `d ≥ 2`: `a_d ≠ 0` and all orders below `d` absent. `d` and `q` are
/// always the effective bounds (smallest and largest order with a nonzero
/// coefficient).
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteCombination {
    series: HermiteSeries,
    rank_d: u32,
    top_q: u32,
}

impl HermiteCombination {
    pub fn new(pairs: &[(u32, f64)]) -> Result<Self, HermiteError> {
        let series = HermiteSeries::new(pairs)?;
        let rank_d = series.min_order().ok_or_else(|| {
            HermiteError::InvalidCombination("all coefficients are zero".into())
        })?;
        if rank_d < 2 {
            return Err(HermiteError::InvalidCombination(format!(
                "Hermite rank must be at least 2, got {rank_d}"
            )));
        }
        let top_q = series.max_order().unwrap();
        Ok(Self {
            series,
            rank_d,
            top_q,
        })
    }

    /// Smallest order with a nonzero coefficient (the Hermite rank `d`).
    pub fn rank(&self) -> u32 {
        self.rank_d
    }

    /// Largest order with a nonzero coefficient (`q`).
    pub fn top(&self) -> u32 {
        self.top_q
    }

    pub fn coeff(&self, order: u32) -> f64 {
        self.series.coeff(order)
    }

    pub fn orders(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.series.orders()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.series.eval(x)
    }

    /// `f' = Σ_j j·a_j H_{j−1}`. The result may contain order `d − 1 ≥ 1`,
    /// so it is a [`HermiteSeries`] rather than a combination.
    pub fn derivative(&self) -> HermiteSeries {
        let pairs: Vec<(u32, f64)> = self
            .series
            .orders()
            .map(|(j, a)| (j - 1, j as f64 * a))
            .collect();
        HermiteSeries::new(&pairs).expect("derivative of a valid combination is valid")
    }

    /// Combination with every coefficient multiplied by `c ≠ 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, HermiteError> {
        let pairs: Vec<(u32, f64)> = self.series.orders().map(|(j, a)| (j, c * a)).collect();
        Self::new(&pairs)
    }
}

/// Result of splitting `H_q(ay + bz)` over the two arguments.
#[derive(Debug, Clone)]
pub struct HermiteSplit {
    /// `Σ_ℓ C(q,ℓ) a^{q−ℓ} b^ℓ H_{q−ℓ}(y) H_ℓ(z)`.
    pub value: f64,
    /// The weight table `ℓ ↦ C(q,ℓ)·a^{q−ℓ}·b^ℓ`, length `q + 1`.
    pub weights: Vec<f64>,
}

/// Splits `H_q(ay + bz)` into products `H_{q−ℓ}(y) H_ℓ(z)`; requires
/// `a² + b² = 1` within 1e-12. The value equals `hermite_eval(q, ay + bz)`.
pub fn hermite_split(
    q: u32,
    a: f64,
    b: f64,
    y: f64,
    z: f64,
) -> Result<HermiteSplit, HermiteError> {
    if q > MAX_ORDER {
        return Err(HermiteError::UnsupportedOrder {
            order: q,
            max: MAX_ORDER,
        });
    }
    let sum_sq = a * a + b * b;
    if (sum_sq - 1.0).abs() > 1e-12 {
        return Err(HermiteError::InvalidSplitParameters { sum_sq });
    }
    let mut weights = Vec::with_capacity(q as usize + 1);
    let mut value = 0.0;
    for l in 0..=q {
        let w = binomial(q, l) * a.powi((q - l) as i32) * b.powi(l as i32);
        value += w * hermite_eval_unchecked(q - l, y) * hermite_eval_unchecked(l, z);
        weights.push(w);
    }
    Ok(HermiteSplit { value, weights })
}

/// The factor `a^q` in `E[H_q(aY + bZ) | 𝒢] = a^q H_q(Y)` for `Y`
/// 𝒢-measurable, `Z` independent of 𝒢, both standard Gaussian and
/// `a² + b² = 1`. Callers must pass `|a| ≤ 1`.
pub fn conditional_expectation_factor(q: u32, a: f64) -> f64 {
    debug_assert!(a.abs() <= 1.0 + 1e-12);
    a.powi(q as i32)
}

/// `E[H_p(Y) H_q(Z)] = p!·ρ^p` when `p = q` and 0 otherwise, for jointly
/// standard Gaussian `(Y, Z)` with correlation `ρ`. Callers must pass
/// `|ρ| ≤ 1`.
pub fn hermite_covariance(order_p: u32, order_q: u32, rho: f64) -> f64 {
    debug_assert!(rho.abs() <= 1.0 + 1e-12);
    if order_p != order_q {
        return 0.0;
    }
    factorial(order_p) * rho.powi(order_p as i32)
}
