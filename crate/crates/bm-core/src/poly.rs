//! Small real-coefficient polynomial utilities: evaluation on the unit
//! circle and Durand–Kerner root finding (degrees here are tiny, so the
//! simple simultaneous iteration is plenty).

use rustfft::num_complex::Complex64;

/// Horner evaluation of `Σ c_k z^k` with real coefficients.
pub fn eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// `|p(e^{−iλ})|²`.
pub fn modulus_sq_on_circle(coeffs: &[f64], lambda: f64) -> f64 {
    eval(coeffs, Complex64::from_polar(1.0, -lambda)).norm_sqr()
}

/// Effective degree (index of the highest nonzero coefficient), or `None`
/// for the zero polynomial.
pub fn degree(coeffs: &[f64]) -> Option<usize> {
    coeffs.iter().rposition(|&c| c != 0.0)
}

/// All complex roots by Durand–Kerner. Roots at the origin (vanishing
/// constant term) are split off first; the iteration handles the rest.
///
/// Leading coefficients below `1e-12·max|c|` are treated as zero — they
/// carry no phase information and destabilize the iteration.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let max_abs = coeffs.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let deg = match coeffs
        .iter()
        .rposition(|&c| c.abs() > 1e-12 * max_abs && c != 0.0)
    {
        Some(d) if d > 0 => d,
        _ => return Vec::new(),
    };
    let mut c: Vec<f64> = coeffs[..=deg].to_vec();
    let mut out = Vec::new();
    while c.len() > 1 && c[0] == 0.0 {
        out.push(Complex64::new(0.0, 0.0));
        c.remove(0);
    }
    let n = c.len() - 1;
    if n == 0 {
        return out;
    }
    let lead = c[n];
    let monic: Vec<f64> = c.iter().map(|&x| x / lead).collect();

    let seed = Complex64::new(0.4, 0.9);
    let mut zs: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let zi = zs[i];
            let mut denom = Complex64::new(1.0, 0.0);
            for (j, &zj) in zs.iter().enumerate() {
                if j != i {
                    denom *= zi - zj;
                }
            }
            let step = eval(&monic, zi) / denom;
            let next = zi - step;
            if next.is_finite() {
                zs[i] = next;
                max_step = max_step.max(step.norm());
            } else {
                // restart this root off the common circle
                zs[i] = seed.powu(i as u32 + 1) * 1.21;
                max_step = f64::INFINITY;
            }
        }
        if max_step < 1e-13 {
            break;
        }
    }
    out.extend(zs);
    out
}
