//! Midpoint frequency grid and discrete Fourier helpers.
//!
//! All spectral computations run on the grid `λ_m = −π + (2m+1)π/G`,
//! which never touches λ = 0, so long-memory densities with an integrable
//! pole at the origin need no special casing.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Frequency grid points `λ_m = −π + (2m+1)π/G` for `m = 0..G`.
pub fn midpoint_grid(g: usize) -> Vec<f64> {
    let gf = g as f64;
    (0..g)
        .map(|m| -std::f64::consts::PI + (2 * m + 1) as f64 * std::f64::consts::PI / gf)
        .collect()
}

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Fourier analysis on the midpoint grid.
///
/// Given samples `v_m = v(λ_m)`, returns for every `k = 0..G` the estimate
/// `t_k = (1/G) · e^{ik(h/2−π)} · Σ_m v_m e^{2πikm/G}` of the Fourier
/// coefficient `(1/2π)∫ v(λ) e^{ikλ} dλ`; indices `k ≥ G/2` carry the
/// negative frequencies `k − G`.
pub fn analysis_coeffs(values: &[Complex64]) -> Vec<Complex64> {
    let g = values.len();
    let h = 2.0 * std::f64::consts::PI / g as f64;
    let mut buf = values.to_vec();
    FftPlanner::new().plan_fft_inverse(g).process(&mut buf);
    let scale = 1.0 / g as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let freq = if k < g / 2 { k as f64 } else { k as f64 - g as f64 };
        let phase = Complex64::from_polar(scale, freq * (0.5 * h - std::f64::consts::PI));
        *c *= phase;
    }
    buf
}

/// Evaluates `A(λ_m) = Σ_k b_k e^{−ikλ_m}` on the midpoint grid, where
/// `b_k` is the coefficient of `e^{−ikλ}` (again with `k ≥ G/2` meaning
/// `k − G`).
pub fn synthesis_values(coeffs: &[Complex64]) -> Vec<Complex64> {
    let g = coeffs.len();
    let h = 2.0 * std::f64::consts::PI / g as f64;
    let mut buf: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let freq = if k < g / 2 { k as f64 } else { k as f64 - g as f64 };
            b * Complex64::from_polar(1.0, freq * (std::f64::consts::PI - 0.5 * h))
        })
        .collect();
    FftPlanner::new().plan_fft_forward(g).process(&mut buf);
    buf
}

pub fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_symmetric_and_avoids_zero() {
        for g in [8usize, 64, 1024] {
            let grid = midpoint_grid(g);
            assert_eq!(grid.len(), g);
            for m in 0..g {
                assert!(grid[m].abs() > 1e-12);
                assert!((grid[m] + grid[g - 1 - m]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analysis_recovers_cosine_coefficients() {
        // v(λ) = 3 + 2 cos(5λ): coefficients t_0 = 3, t_{±5} = 1.
        let g = 256;
        let grid = midpoint_grid(g);
        let vals = to_complex(&grid.iter().map(|&l| 3.0 + 2.0 * (5.0 * l).cos()).collect::<Vec<_>>());
        let t = analysis_coeffs(&vals);
        assert!((t[0].re - 3.0).abs() < 1e-12);
        assert!((t[5].re - 1.0).abs() < 1e-12);
        assert!(t[5].im.abs() < 1e-12);
        assert!((t[g - 5].re - 1.0).abs() < 1e-12);
        assert!(t[7].norm() < 1e-12);
    }

    #[test]
    fn synthesis_inverts_analysis() {
        let g = 128;
        let grid = midpoint_grid(g);
        let vals = to_complex(
            &grid
                .iter()
                .map(|&l| (l * 1.7).sin() + 0.3 * (4.0 * l).cos() + 0.9)
                .collect::<Vec<_>>(),
        );
        let t = analysis_coeffs(&vals);
        let back = synthesis_values(&t);
        for (a, b) in vals.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
