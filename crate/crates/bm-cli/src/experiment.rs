//! Streaming experiment drivers: model → covariance/factorization →
//! seeded simulation → statistics → CSV/SVG reports. Paths are generated
//! per worker and folded into per-path statistics immediately, so memory
//! stays flat in M.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use bm_core::density::{
    kde, ks_distance_to_gaussian, sup_distance_to_gaussian, DensityError, DensityEstimate,
    GridSpec,
};
use bm_core::hermite::HermiteCombination;
use bm_core::simulate::{
    CausalSampler, CirculantSampler, PathBatch, SimError, SimMethod,
};
use bm_core::spectral::{
    covariance_from_density, fgn_covariance, CovarianceSequence, SpectralError, SpectralModel,
};
use bm_core::stats::{
    malliavin_report_from_norms, moment_report_from_samples, sigma_n_sq_exact,
    sigma_sq_asymptotic, v_statistic, MalliavinEvaluator, MalliavinReport, MomentReport,
    StatsError,
};
use bm_core::svg;
use bm_core::wold::{factorize, transfer_ratio, WoldError};

use crate::config::{parse_combination, parse_model, ConfigError, ExperimentConfig, Gate};

#[derive(Debug)]
pub enum RunError {
    /// A model hypothesis failed (log-integrability, σ² divergence).
    Hypothesis(String),
    /// Bad parameters or preconditions.
    Precondition(String),
    Io(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Hypothesis(s) => write!(f, "hypothesis failure: {s}"),
            RunError::Precondition(s) => write!(f, "precondition failure: {s}"),
            RunError::Io(s) => write!(f, "i/o error: {s}"),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Hypothesis(_) | RunError::Precondition(_) => 3,
            RunError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Precondition(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<SpectralError> for RunError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Io(io) => RunError::Io(io.to_string()),
            SpectralError::NonPositiveDensity { .. } => RunError::Hypothesis(e.to_string()),
            other => RunError::Precondition(other.to_string()),
        }
    }
}

impl From<WoldError> for RunError {
    fn from(e: WoldError) -> Self {
        match e {
            WoldError::Hypothesis { .. } => RunError::Hypothesis(e.to_string()),
            WoldError::Io(io) => RunError::Io(io.to_string()),
            other => RunError::Precondition(other.to_string()),
        }
    }
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(io) => RunError::Io(io.to_string()),
            other => RunError::Precondition(other.to_string()),
        }
    }
}

impl From<StatsError> for RunError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Divergent { .. } => RunError::Hypothesis(e.to_string()),
            other => RunError::Precondition(other.to_string()),
        }
    }
}

impl From<DensityError> for RunError {
    fn from(e: DensityError) -> Self {
        match e {
            DensityError::Io(io) => RunError::Io(io.to_string()),
            other => RunError::Precondition(other.to_string()),
        }
    }
}

/// Lag budget for the summability check: closed-form fGn covariances are
/// cheap at any cutoff; grid-inverted models are capped so the inversion
/// grid stays reasonable.
fn covariance_budget(model: &SpectralModel, requested: usize) -> usize {
    match model {
        SpectralModel::Fgn { .. } => requested,
        _ => requested.min(1 << 17),
    }
}

fn covariance_for(model: &SpectralModel, max_lag: usize) -> Result<CovarianceSequence, RunError> {
    match model {
        SpectralModel::Fgn { hurst } => {
            let h = *hurst;
            Ok(CovarianceSequence::from_fn(max_lag, move |k| {
                fgn_covariance(h, k)
            })?)
        }
        _ => {
            let grid = (8 * max_lag).next_power_of_two().max(1024);
            Ok(covariance_from_density(model, max_lag, grid)?)
        }
    }
}

fn prefix(rho: &CovarianceSequence, max_lag: usize) -> CovarianceSequence {
    CovarianceSequence::new(rho.values()[..=max_lag.min(rho.max_lag())].to_vec())
        .expect("prefix of a valid covariance is valid")
}

struct Prepared {
    model: SpectralModel,
    f: HermiteCombination,
    rho_long: CovarianceSequence,
    sigma_asym: f64,
}

/// Shared front of clt/malliavin/density: parse, build the long covariance,
/// and run the summability gate (the divergence diagnostic exits here).
fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, RunError> {
    cfg.validate()?;
    let model = parse_model(&cfg.model)?;
    let f = parse_combination(&cfg.f)?;
    let n_max = *cfg.n_grid.last().unwrap();
    if cfg.n_grid[0] < 2 {
        return Err(RunError::Precondition("need n ≥ 2".into()));
    }
    let budget = covariance_budget(&model, cfg.tail_cutoff.max(n_max));
    let rho_long = covariance_for(&model, budget.max(n_max))?;
    let sigma_asym = sigma_sq_asymptotic(&f, &rho_long, cfg.tail_cutoff)?;
    Ok(Prepared {
        model,
        f,
        rho_long,
        sigma_asym,
    })
}

enum Sampler {
    Circulant(CirculantSampler),
    Causal(CausalSampler),
}

impl Sampler {
    fn path(&self, seed: u64, index: u64) -> Vec<f64> {
        match self {
            Sampler::Circulant(s) => s.sample_path(seed, index),
            Sampler::Causal(s) => s.sample_path(seed, index),
        }
    }
}

fn build_sampler(
    cfg: &ExperimentConfig,
    model: &SpectralModel,
    rho_n: &CovarianceSequence,
    n: usize,
) -> Result<Sampler, RunError> {
    match cfg.method {
        SimMethod::Circulant => Ok(Sampler::Circulant(CirculantSampler::new(rho_n, n)?)),
        SimMethod::CausalMa => {
            let l = cfg.truncation_l;
            let grid = cfg.grid_size.unwrap_or(16 * l).next_power_of_two();
            let psi = factorize(model, l, grid)?;
            let burn_in = cfg.burn_in.unwrap_or(l);
            Ok(Sampler::Causal(CausalSampler::new(&psi, n, burn_in)?))
        }
    }
}

fn write_manifest(cfg: &ExperimentConfig, dir: &Path, started: Instant) -> Result<(), RunError> {
    let mut out = String::new();
    out.push_str("# bmlab manifest v1\n");
    out.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("config_hash={}\n", cfg.hash()));
    out.push_str(&format!(
        "wall_time_s={:.3}\n",
        started.elapsed().as_secs_f64()
    ));
    out.push_str(&cfg.serialize());
    std::fs::write(dir.join("manifest.txt"), out)?;
    Ok(())
}

pub struct CltRow {
    pub n: usize,
    pub report: MomentReport,
    pub ks: f64,
    pub kde_sup: Option<f64>,
    pub bandwidth: Option<f64>,
}

pub struct CltOutcome {
    pub rows: Vec<CltRow>,
    pub violations: Vec<String>,
}

pub fn run_clt(cfg: &ExperimentConfig) -> Result<CltOutcome, RunError> {
    let started = Instant::now();
    let prep = prepare(cfg)?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for &n in &cfg.n_grid {
        let rho_n = prefix(&prep.rho_long, n);
        let sampler = build_sampler(cfg, &prep.model, &rho_n, n)?;
        let f = &prep.f;
        let v: Vec<f64> = (0..cfg.m as u64)
            .into_par_iter()
            .map(|i| v_statistic(&sampler.path(cfg.seed, i), f))
            .collect();
        let sigma_n_sq = sigma_n_sq_exact(f, &rho_n, n)?;
        let report = moment_report_from_samples(&v, n, sigma_n_sq, Some(prep.sigma_asym))?;

        let sigma_n = sigma_n_sq.sqrt();
        let fn_samples: Vec<f64> = v.iter().map(|&x| x / sigma_n).collect();
        let ks = ks_distance_to_gaussian(&fn_samples)?;
        let (kde_sup, bandwidth) = if cfg.m >= 1000 {
            let est = kde(&fn_samples, GridSpec::default(), cfg.bandwidth)?;
            let sup = sup_distance_to_gaussian(&est)?;
            let mut csv = Vec::new();
            est.write_csv(&mut csv)?;
            std::fs::write(cfg.out.join(format!("density_n{n}.csv")), csv)?;
            std::fs::write(
                cfg.out.join(format!("density_n{n}.svg")),
                est.to_svg(&format!("normalized statistic vs standard normal, n = {n}")),
            )?;
            (Some(sup), Some(est.bandwidth))
        } else {
            (None, None)
        };

        if cfg.gate == Gate::PerN {
            let th = &cfg.thresholds;
            let dev = (report.variance - sigma_n_sq).abs();
            if dev > th.variance_sigmas * report.variance_se {
                violations.push(format!(
                    "n={n}: |variance − σ_n²| = {dev:.3e} exceeds {}·se = {:.3e}",
                    th.variance_sigmas,
                    th.variance_sigmas * report.variance_se
                ));
            }
            if report.fn_fourth_moment < th.fourth_lo || report.fn_fourth_moment > th.fourth_hi {
                violations.push(format!(
                    "n={n}: fourth moment of F_n = {:.4} outside [{}, {}]",
                    report.fn_fourth_moment, th.fourth_lo, th.fourth_hi
                ));
            }
            if ks >= th.ks_max {
                violations.push(format!("n={n}: KS distance {ks:.4} ≥ {}", th.ks_max));
            }
            if let Some(sup) = kde_sup {
                if sup >= th.kde_sup_max {
                    violations.push(format!(
                        "n={n}: KDE sup distance {sup:.4} ≥ {}",
                        th.kde_sup_max
                    ));
                }
            }
        }
        rows.push(CltRow {
            n,
            report,
            ks,
            kde_sup,
            bandwidth,
        });
    }

    let mut csv = String::new();
    csv.push_str("# bmlab clt report v1\n");
    csv.push_str(&format!(
        "model,f,method,seed,{},ks_distance,kde_sup_distance,kde_bandwidth\n",
        MomentReport::CSV_COLUMNS
    ));
    for row in &rows {
        let sup = row
            .kde_sup
            .map(|s| format!("{s:.12e}"))
            .unwrap_or_else(|| "".into());
        let bw = row
            .bandwidth
            .map(|b| format!("{b:.12e}"))
            .unwrap_or_else(|| "".into());
        csv.push_str(&format!(
            "{},{},{},{},{},{:.12e},{},{}\n",
            cfg.model,
            cfg.f,
            cfg.method,
            cfg.seed,
            row.report.csv_fields(),
            row.ks,
            sup,
            bw
        ));
    }
    std::fs::write(cfg.out.join("report.csv"), csv)?;
    write_manifest(cfg, &cfg.out, started)?;
    Ok(CltOutcome { rows, violations })
}

pub fn run_malliavin(cfg: &ExperimentConfig) -> Result<Vec<MalliavinReport>, RunError> {
    let started = Instant::now();
    let prep = prepare(cfg)?;
    std::fs::create_dir_all(&cfg.out)?;

    // ψ is required for the causal sampler; with the circulant method it is
    // only the floor-constant diagnostic, so a hypothesis failure degrades
    // to a missing diagnostic instead of aborting the run.
    let l = cfg.truncation_l;
    let grid = cfg.grid_size.unwrap_or(16 * l).next_power_of_two();
    let psi = match factorize(&prep.model, l, grid) {
        Ok(p) => Some(p),
        Err(WoldError::Hypothesis { .. }) if cfg.method == SimMethod::Circulant => None,
        Err(e) => return Err(e.into()),
    };

    let mut reports = Vec::new();
    let mut csv = String::new();
    csv.push_str("# bmlab malliavin report v1\n");
    csv.push_str(&format!(
        "model,f,method,seed,{}\n",
        MalliavinReport::CSV_COLUMNS
    ));
    for &n in &cfg.n_grid {
        let rho_n = prefix(&prep.rho_long, n);
        let sampler = build_sampler(cfg, &prep.model, &rho_n, n)?;
        let evaluator = MalliavinEvaluator::new(&rho_n, &prep.f, n)?;
        let norms: Vec<f64> = (0..cfg.m as u64)
            .into_par_iter()
            .map(|i| evaluator.norm_sq(&sampler.path(cfg.seed, i)))
            .collect::<Result<_, _>>()?;
        let report = malliavin_report_from_norms(
            &norms,
            n,
            cfg.seed,
            &cfg.p_list,
            &prep.f,
            psi.as_ref(),
        )?;
        for row in report.csv_rows() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                cfg.model, cfg.f, cfg.method, cfg.seed, row
            ));
        }
        reports.push(report);
    }
    std::fs::write(cfg.out.join("malliavin.csv"), &csv)?;

    // estimate-vs-n overlay, one polyline per p
    let mut series_data: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (pi, &p) in cfg.p_list.iter().enumerate() {
        let pts: Vec<(f64, f64)> = reports
            .iter()
            .map(|r| (r.n as f64, r.estimates[pi].estimate))
            .collect();
        series_data.push((format!("p = {p}"), pts));
    }
    let palette = ["#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400"];
    let series: Vec<svg::Series> = series_data
        .iter()
        .enumerate()
        .map(|(i, (label, pts))| svg::Series {
            label,
            points: pts,
            color: palette[i % palette.len()],
            dashed: false,
        })
        .collect();
    std::fs::write(
        cfg.out.join("negative_moments.svg"),
        svg::line_chart(
            "negative moments of the derivative norm",
            "n",
            "estimate",
            &series,
        ),
    )?;
    write_manifest(cfg, &cfg.out, started)?;
    Ok(reports)
}

pub fn run_factorize(cfg: &ExperimentConfig) -> Result<(), RunError> {
    let started = Instant::now();
    let model = parse_model(&cfg.model)?;
    std::fs::create_dir_all(&cfg.out)?;
    let l = cfg.truncation_l;
    let grid = cfg.grid_size.unwrap_or(16 * l).next_power_of_two();
    let psi = factorize(&model, l, grid)?;
    psi.write_to_path(&cfg.out.join("psi.txt"))?;

    let ratios = transfer_ratio(&psi, &model, grid)?;
    let grid_points = bm_core::grid::midpoint_grid(grid);
    let mut csv = String::new();
    csv.push_str("# bmlab spectral match v1\n");
    csv.push_str("lambda,ratio\n");
    // every 16th point keeps the file reviewable at large grids
    let stride = (grid / 4096).max(1);
    for (lam, r) in grid_points.iter().zip(ratios.iter()).step_by(stride) {
        csv.push_str(&format!("{lam:.8e},{r:.12e}\n"));
    }
    std::fs::write(cfg.out.join("spectral_match.csv"), csv)?;
    write_manifest(cfg, &cfg.out, started)?;
    println!(
        "psi_0 = {:.9}, L = {}, residual mass = {:.3e}",
        psi.psi0(),
        psi.truncation_l(),
        psi.residual_mass()
    );
    Ok(())
}

pub fn run_simulate(cfg: &ExperimentConfig, out_file: &Path) -> Result<(), RunError> {
    cfg.validate()?;
    let model = parse_model(&cfg.model)?;
    let n = *cfg.n_grid.last().unwrap();
    if n < 2 {
        return Err(RunError::Precondition("need n ≥ 2".into()));
    }
    let rho = covariance_for(&model, n)?;
    let batch = match cfg.method {
        SimMethod::Circulant => {
            let sampler = CirculantSampler::new(&rho, n)?;
            let rows: Vec<Vec<f64>> = (0..cfg.m as u64)
                .into_par_iter()
                .map(|i| sampler.sample_path(cfg.seed, i))
                .collect();
            PathBatch::from_rows(
                rows,
                cfg.seed,
                SimMethod::Circulant,
                sampler.provenance(&model.id()),
            )?
        }
        SimMethod::CausalMa => {
            let l = cfg.truncation_l;
            let grid = cfg.grid_size.unwrap_or(16 * l).next_power_of_two();
            let psi = factorize(&model, l, grid)?;
            let burn_in = cfg.burn_in.unwrap_or(l);
            bm_core::simulate::simulate_causal(&psi, n, cfg.m, cfg.seed, burn_in, &model.id())?
        }
    };
    if let Some(dir) = out_file.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    batch.write_to_path(out_file)?;
    println!(
        "wrote {} paths of length {} ({})",
        batch.m, batch.n, batch.model_id
    );
    Ok(())
}

/// KDE + distance report for the normalized statistic, either from a fresh
/// simulation or from a stored batch file.
pub fn run_density(cfg: &ExperimentConfig, batch_file: Option<&Path>) -> Result<(), RunError> {
    let started = Instant::now();
    std::fs::create_dir_all(&cfg.out)?;
    let f = parse_combination(&cfg.f)?;
    let (v, n, rho) = match batch_file {
        Some(path) => {
            let batch = PathBatch::read_from_path(path)?;
            let model = parse_model(&cfg.model)?;
            let rho = covariance_for(&model, batch.n)?;
            let v: Vec<f64> = batch.rows().map(|r| v_statistic(r, &f)).collect();
            (v, batch.n, rho)
        }
        None => {
            let prep = prepare(cfg)?;
            let n = *cfg.n_grid.last().unwrap();
            let rho_n = prefix(&prep.rho_long, n);
            let sampler = build_sampler(cfg, &prep.model, &rho_n, n)?;
            let v: Vec<f64> = (0..cfg.m as u64)
                .into_par_iter()
                .map(|i| v_statistic(&sampler.path(cfg.seed, i), &f))
                .collect();
            (v, n, rho_n)
        }
    };
    let sigma_n = sigma_n_sq_exact(&f, &rho, n)?.sqrt();
    let fn_samples: Vec<f64> = v.iter().map(|&x| x / sigma_n).collect();
    let ks = ks_distance_to_gaussian(&fn_samples)?;
    let est: DensityEstimate = kde(&fn_samples, GridSpec::default(), cfg.bandwidth)?;
    let sup = sup_distance_to_gaussian(&est)?;

    let mut csv = Vec::new();
    est.write_csv(&mut csv)?;
    std::fs::write(cfg.out.join(format!("density_n{n}.csv")), csv)?;
    std::fs::write(
        cfg.out.join(format!("density_n{n}.svg")),
        est.to_svg(&format!("normalized statistic vs standard normal, n = {n}")),
    )?;
    let mut summary = String::new();
    summary.push_str("# bmlab density report v1\n");
    summary.push_str("model,f,n,M,seed,ks_distance,kde_sup_distance,kde_bandwidth\n");
    summary.push_str(&format!(
        "{},{},{},{},{},{:.12e},{:.12e},{:.12e}\n",
        cfg.model,
        cfg.f,
        n,
        fn_samples.len(),
        cfg.seed,
        ks,
        sup,
        est.bandwidth
    ));
    std::fs::write(cfg.out.join("density_report.csv"), summary)?;
    write_manifest(cfg, &cfg.out, started)?;
    println!("n = {n}: KS = {ks:.5}, KDE sup distance = {sup:.5}");
    Ok(())
}
