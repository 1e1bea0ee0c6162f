//! Flat key=value experiment configuration: diffable text manifests, with
//! command-line flags overriding file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use bm_core::hermite::HermiteCombination;
use bm_core::simulate::SimMethod;
use bm_core::spectral::SpectralModel;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Gate policy for the clt command: whether per-n thresholds decide the
/// exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    PerN,
    None,
}

/// Pass/fail thresholds; defaults mirror the acceptance criteria, and they
/// live in config because they are experiment policy, not library
/// semantics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub variance_sigmas: f64,
    pub fourth_lo: f64,
    pub fourth_hi: f64,
    pub ks_max: f64,
    pub kde_sup_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            variance_sigmas: 4.0,
            fourth_lo: 2.92,
            fourth_hi: 3.08,
            ks_max: 0.01,
            kde_sup_max: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: String,
    pub f: String,
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub seed: u64,
    pub method: SimMethod,
    pub p_list: Vec<f64>,
    pub out: PathBuf,
    pub truncation_l: usize,
    pub grid_size: Option<usize>,
    pub burn_in: Option<usize>,
    pub bandwidth: Option<f64>,
    pub tail_cutoff: usize,
    pub gate: Gate,
    pub thresholds: Thresholds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: "white".into(),
            f: "2:1.0".into(),
            n_grid: vec![1 << 10],
            m: 10_000,
            seed: 1,
            method: SimMethod::Circulant,
            p_list: vec![1.0, 2.0, 4.0],
            out: PathBuf::from("out"),
            truncation_l: 4096,
            grid_size: None,
            burn_in: None,
            bandwidth: None,
            tail_cutoff: 1 << 23,
            gate: Gate::PerN,
            thresholds: Thresholds::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, ConfigError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| ConfigError(format!("bad {what} entry: {t}")))
        })
        .collect()
}

impl ExperimentConfig {
    /// Applies `key=value` lines on top of the current values. Lines that
    /// are empty or start with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (lineno, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (key, value) = t
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key=value", lineno + 1)))?;
            self.apply_pair(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |k: &str, v: &str| ConfigError(format!("bad value for {k}: {v}"));
        match key {
            "model" => self.model = value.to_string(),
            "f" => self.f = value.to_string(),
            "n" => self.n_grid = parse_list(value, "n")?,
            "M" => self.m = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            "method" => {
                self.method = match value {
                    "circulant" => SimMethod::Circulant,
                    "causal_ma" => SimMethod::CausalMa,
                    _ => return err(format!("method must be circulant or causal_ma, got {value}")),
                }
            }
            "p" => self.p_list = parse_list(value, "p")?,
            "out" => self.out = PathBuf::from(value),
            "L" => self.truncation_l = value.parse().map_err(|_| bad(key, value))?,
            "grid_size" => {
                self.grid_size = Some(value.parse().map_err(|_| bad(key, value))?);
            }
            "burn_in" => self.burn_in = Some(value.parse().map_err(|_| bad(key, value))?),
            "bandwidth" => {
                self.bandwidth = if value == "silverman" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad(key, value))?)
                }
            }
            "tail_cutoff" => self.tail_cutoff = value.parse().map_err(|_| bad(key, value))?,
            "gate" => {
                self.gate = match value {
                    "per_n" => Gate::PerN,
                    "none" => Gate::None,
                    _ => return err(format!("gate must be per_n or none, got {value}")),
                }
            }
            "th.variance_sigmas" => {
                self.thresholds.variance_sigmas = value.parse().map_err(|_| bad(key, value))?
            }
            "th.fourth_lo" => {
                self.thresholds.fourth_lo = value.parse().map_err(|_| bad(key, value))?
            }
            "th.fourth_hi" => {
                self.thresholds.fourth_hi = value.parse().map_err(|_| bad(key, value))?
            }
            "th.ks_max" => self.thresholds.ks_max = value.parse().map_err(|_| bad(key, value))?,
            "th.kde_sup_max" => {
                self.thresholds.kde_sup_max = value.parse().map_err(|_| bad(key, value))?
            }
            other => return err(format!("unknown key: {other}")),
        }
        Ok(())
    }

    /// Canonical text form; `parse ∘ serialize` is the identity.
    pub fn serialize(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("model", self.model.clone());
        kv.insert("f", self.f.clone());
        kv.insert(
            "n",
            self.n_grid
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("M", self.m.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("method", self.method.to_string());
        kv.insert(
            "p",
            self.p_list
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("out", self.out.display().to_string());
        kv.insert("L", self.truncation_l.to_string());
        if let Some(g) = self.grid_size {
            kv.insert("grid_size", g.to_string());
        }
        if let Some(b) = self.burn_in {
            kv.insert("burn_in", b.to_string());
        }
        kv.insert(
            "bandwidth",
            self.bandwidth
                .map(|b| b.to_string())
                .unwrap_or_else(|| "silverman".into()),
        );
        kv.insert("tail_cutoff", self.tail_cutoff.to_string());
        kv.insert(
            "gate",
            match self.gate {
                Gate::PerN => "per_n".into(),
                Gate::None => "none".into(),
            },
        );
        kv.insert(
            "th.variance_sigmas",
            self.thresholds.variance_sigmas.to_string(),
        );
        kv.insert("th.fourth_lo", self.thresholds.fourth_lo.to_string());
        kv.insert("th.fourth_hi", self.thresholds.fourth_hi.to_string());
        kv.insert("th.ks_max", self.thresholds.ks_max.to_string());
        kv.insert("th.kde_sup_max", self.thresholds.kde_sup_max.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            writeln!(out, "{k}={v}").unwrap();
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_grid.is_empty() {
            return err("n grid is empty");
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return err("n grid must be strictly increasing");
        }
        if self.m == 0 {
            return err("M must be positive");
        }
        Ok(())
    }

    /// FNV-1a over the canonical serialization; ties every report line to
    /// the exact configuration.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.serialize().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// Model specs: `white`, `fgn:H=0.7`,
/// `arfima:d=0.2;ar=1,-0.5;ma=1,0.3`, `tabulated:file=path`.
pub fn parse_model(spec: &str) -> Result<SpectralModel, ConfigError> {
    let trimmed = spec.trim();
    if trimmed == "white" {
        return Ok(SpectralModel::white());
    }
    let (kind, rest) = trimmed
        .split_once(':')
        .ok_or_else(|| ConfigError(format!("bad model spec: {spec}")))?;
    match kind {
        "fgn" => {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("fgn spec needs H=<value>: {spec}")))?;
            if k != "H" && k != "h" {
                return err(format!("fgn spec needs H=<value>: {spec}"));
            }
            let h: f64 = v
                .parse()
                .map_err(|_| ConfigError(format!("bad Hurst value: {v}")))?;
            SpectralModel::fgn(h).map_err(|e| ConfigError(e.to_string()))
        }
        "arfima" => {
            let mut d = None;
            let mut ar = vec![1.0];
            let mut ma = vec![1.0];
            for part in rest.split(';') {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| ConfigError(format!("bad arfima field: {part}")))?;
                match k {
                    "d" => {
                        d = Some(
                            v.parse::<f64>()
                                .map_err(|_| ConfigError(format!("bad d: {v}")))?,
                        )
                    }
                    "ar" => ar = parse_list(v, "ar")?,
                    "ma" => ma = parse_list(v, "ma")?,
                    _ => return err(format!("unknown arfima field: {k}")),
                }
            }
            let d = d.ok_or_else(|| ConfigError(format!("arfima spec needs d=: {spec}")))?;
            SpectralModel::arfima(d, ar, ma).map_err(|e| ConfigError(e.to_string()))
        }
        "tabulated" => {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("tabulated spec needs file=: {spec}")))?;
            if k != "file" {
                return err(format!("tabulated spec needs file=: {spec}"));
            }
            SpectralModel::tabulated_from_path(std::path::Path::new(v))
                .map_err(|e| ConfigError(e.to_string()))
        }
        other => err(format!("unknown model kind: {other}")),
    }
}

/// Hermite combination specs: `2:1.0,3:0.5` means a₂ = 1, a₃ = 0.5.
pub fn parse_combination(spec: &str) -> Result<HermiteCombination, ConfigError> {
    let mut pairs = Vec::new();
    for part in spec.split(',') {
        let (o, c) = part
            .trim()
            .split_once(':')
            .ok_or_else(|| ConfigError(format!("bad f entry (want order:coeff): {part}")))?;
        let order: u32 = o
            .trim()
            .parse()
            .map_err(|_| ConfigError(format!("bad order: {o}")))?;
        let coeff: f64 = c
            .trim()
            .parse()
            .map_err(|_| ConfigError(format!("bad coefficient: {c}")))?;
        pairs.push((order, coeff));
    }
    HermiteCombination::new(&pairs).map_err(|e| ConfigError(e.to_string()))
}
