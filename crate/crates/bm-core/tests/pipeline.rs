//! Cross-module checks: the two simulators must agree in distribution, and
//! Monte Carlo moments must match the exact formulas for every built-in
//! model/function pair of the test matrix.

use bm_core::hermite::HermiteCombination;
use bm_core::simulate::{simulate_causal, simulate_circulant};
use bm_core::spectral::{covariance_from_density, fgn_covariance, CovarianceSequence, SpectralModel};
use bm_core::stats::{moment_report, sigma_n_sq_exact, v_statistic};
use bm_core::wold::factorize;

fn h2() -> HermiteCombination {
    HermiteCombination::new(&[(2, 1.0)]).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[test]
fn circulant_and_causal_agree_on_h2_functionals() {
    // Same law through two generators: batch means of V_n (f = H_2) must
    // agree within 5 combined standard errors, for every built-in model.
    let n = 1 << 10;
    let m = 600;
    let f = h2();
    let cases: Vec<(&str, SpectralModel, usize)> = vec![
        ("white", SpectralModel::white(), 64),
        (
            "ma1",
            SpectralModel::arfima(0.0, vec![1.0], vec![1.0, 0.5]).unwrap(),
            64,
        ),
        ("fgn07", SpectralModel::fgn(0.7).unwrap(), 4096),
    ];
    for (name, model, l) in cases {
        let rho = covariance_from_density(&model, n, (8 * n).next_power_of_two()).unwrap();
        let circ = simulate_circulant(&rho, n, m, 123, name).unwrap();
        let vc: Vec<f64> = circ.rows().map(|r| v_statistic(r, &f)).collect();

        let psi = factorize(&model, l, (16 * l).next_power_of_two().max(1 << 12)).unwrap();
        let caus = simulate_causal(&psi, n, m, 456, l, name).unwrap();
        let vm: Vec<f64> = caus.rows().map(|r| v_statistic(r, &f)).collect();

        let (mc, sec) = mean_se(&vc);
        let (mm, sem) = mean_se(&vm);
        let combined = (sec * sec + sem * sem).sqrt();
        assert!(
            (mc - mm).abs() < 5.0 * combined,
            "{name}: circulant {mc}±{sec} vs causal {mm}±{sem}"
        );
    }
}

#[test]
fn causal_fgn_covariance_matches_closed_form() {
    let model = SpectralModel::fgn(0.7).unwrap();
    let psi = factorize(&model, 4096, 1 << 16).unwrap();
    let n = 1 << 10;
    let m = 500;
    let batch = simulate_causal(&psi, n, m, 7, 4096, "fgn07").unwrap();
    for lag in 1..=8usize {
        let per: Vec<f64> = batch
            .rows()
            .map(|r| {
                (0..n - lag).map(|k| r[k] * r[k + lag]).sum::<f64>() / (n - lag) as f64
            })
            .collect();
        let (mean, se) = mean_se(&per);
        let exact = fgn_covariance(0.7, lag as u64).unwrap();
        let bias_allowance = psi.residual_mass();
        assert!(
            (mean - exact).abs() < 4.0 * se + bias_allowance,
            "lag {lag}: {mean} vs {exact} (se {se})"
        );
    }
}

#[test]
fn batch_variance_matches_exact_formula_across_matrix() {
    // model × f matrix: sample variance of V_n within 5 jackknife standard
    // errors of σ_n².
    let n = 1 << 9;
    let m = 2000;
    let f_list = [
        HermiteCombination::new(&[(2, 1.0)]).unwrap(),
        HermiteCombination::new(&[(2, 1.0), (3, 0.5)]).unwrap(),
        HermiteCombination::new(&[(3, 1.0)]).unwrap(),
    ];
    let models: Vec<(String, CovarianceSequence)> = vec![
        ("white".into(), CovarianceSequence::white(n)),
        (
            "fgn06".into(),
            CovarianceSequence::from_fn(n, |k| fgn_covariance(0.6, k)).unwrap(),
        ),
        (
            "ma1".into(),
            covariance_from_density(
                &SpectralModel::arfima(0.0, vec![1.0], vec![1.0, 0.5]).unwrap(),
                n,
                8 * n,
            )
            .unwrap(),
        ),
    ];
    for (name, rho) in &models {
        for (fi, f) in f_list.iter().enumerate() {
            let batch = simulate_circulant(rho, n, m, 1000 + fi as u64, name).unwrap();
            let rep = moment_report(&batch, f, rho).unwrap();
            let exact = sigma_n_sq_exact(f, rho, n).unwrap();
            assert!(
                (rep.variance - exact).abs() < 5.0 * rep.variance_se,
                "{name}/f{fi}: variance {} vs exact {exact} (se {})",
                rep.variance,
                rep.variance_se
            );
        }
    }
}

#[test]
fn fourth_moment_gap_shrinks_along_n() {
    // E[F_n⁴] − 3 decreases along a dyadic n-grid within two combined
    // standard errors at each step (small-scale version of the acceptance
    // run).
    let h = 0.6;
    let m = 4000;
    let f = h2();
    let mut prev: Option<(f64, f64)> = None;
    for n in [1usize << 7, 1 << 9, 1 << 11] {
        let rho = CovarianceSequence::from_fn(n, |k| fgn_covariance(h, k)).unwrap();
        let batch = simulate_circulant(&rho, n, m, 2024, "fgn06").unwrap();
        let rep = moment_report(&batch, &f, &rho).unwrap();
        let gap = rep.fn_fourth_gap.abs();
        let se = rep.fn_fourth_gap_se;
        if let Some((pgap, pse)) = prev {
            let combined = (se * se + pse * pse).sqrt();
            assert!(
                gap <= pgap + 2.0 * combined,
                "gap grew: {pgap}±{pse} -> {gap}±{se}"
            );
        }
        prev = Some((gap, se));
    }
}
