//! Run configuration: flat `key = value` lines, `#` starts a comment.
//!
//! Grids are either a comma-separated list or `linspace:lo:hi:n` /
//! `logspace:lo:hi:n` (geometric spacing between `lo` and `hi`). Unknown or
//! repeated keys are errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use crate::bell::BellAngles;
use crate::error::{Error, Result};
use crate::specfun::QuadratureSpec;

const KEYS: &[&str] = &[
    "w_over_a",
    "sigma_over_a",
    "d_over_a",
    "eta",
    "noise_n",
    "chi_grid",
    "squeeze_db",
    "alpha",
    "r_grid",
    "t_grid",
    "fbar_grid",
    "seed",
    "n_samples",
    "abs_tol",
    "rel_tol",
    "max_subdivisions",
    "z_threshold",
    "angles",
    "threads",
    "use_exact_t",
];

/// Every parameter a command may read, with defaults for a run at the
/// reference operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub w_over_a: f64,
    pub sigma_over_a: f64,
    pub d_over_a: f64,
    pub eta: f64,
    pub noise_n: f64,
    pub chi_grid: Vec<f64>,
    pub squeeze_db: f64,
    pub alpha: f64,
    pub r_grid: Vec<f64>,
    /// `None` means 101 points on `[0, T₀]`.
    pub t_grid: Option<Vec<f64>>,
    pub fbar_grid: Vec<f64>,
    pub seed: u64,
    pub n_samples: usize,
    pub quadrature: QuadratureSpec,
    pub z_threshold: f64,
    pub angles: BellAngles,
    /// 0 lets the thread pool pick.
    pub threads: usize,
    pub use_exact_t: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            w_over_a: 1.1,
            sigma_over_a: 28.5,
            d_over_a: 0.0,
            eta: crate::bell::ETA_RECEIVER,
            noise_n: crate::bell::NOISE_CURVE,
            chi_grid: logspace(1e-3, 0.3, 40),
            squeeze_db: 6.0,
            alpha: 10.0,
            r_grid: linspace(0.0, 3.0, 61),
            t_grid: None,
            fbar_grid: logspace(1e-6, 1.0, 61),
            seed: 1,
            n_samples: 1_000_000,
            quadrature: QuadratureSpec::default(),
            z_threshold: 3.0,
            angles: BellAngles::default(),
            threads: 0,
            use_exact_t: false,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = linspace(a, b, n).into_iter().map(f64::exp).collect();
    // pin the end points exactly
    out[0] = lo;
    if n > 1 {
        out[n - 1] = hi;
    }
    out
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| config_err(key, format!("expected a number, got '{raw}'")))?;
    if !v.is_finite() {
        return Err(config_err(key, "value must be finite"));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| config_err(key, format!("expected a nonnegative integer, got '{raw}'")))
}

fn parse_grid(key: &str, raw: &str) -> Result<Vec<f64>> {
    let raw = raw.trim();
    let spaced = raw
        .strip_prefix("linspace:")
        .map(|rest| (rest, false))
        .or_else(|| raw.strip_prefix("logspace:").map(|rest| (rest, true)));
    let grid = if let Some((rest, log)) = spaced {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(config_err(key, "grid generators take lo:hi:n"));
        }
        let lo = parse_f64(key, parts[0])?;
        let hi = parse_f64(key, parts[1])?;
        let n: usize = parse_int(key, parts[2])?;
        if n == 0 {
            return Err(config_err(key, "grid needs at least one point"));
        }
        if log {
            if !(lo > 0.0 && hi > 0.0) {
                return Err(config_err(key, "logspace bounds must be positive"));
            }
            logspace(lo, hi, n)
        } else {
            linspace(lo, hi, n)
        }
    } else {
        raw.split(',').map(|v| parse_f64(key, v)).collect::<Result<Vec<f64>>>()?
    };
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_err(key, "grid must be strictly increasing"));
    }
    Ok(grid)
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(config_err(key, format!("expected true or false, got '{other}'"))),
    }
}

fn format_grid(grid: &[f64]) -> String {
    grid.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
            }
            if seen.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        let mut cfg = RunConfig::default();
        let (mut abs_tol, mut rel_tol, mut max_sub) =
            (cfg.quadrature.abs_tol, cfg.quadrature.rel_tol, cfg.quadrature.max_subdivisions);
        for (key, value) in &seen {
            let v = value.as_str();
            match key.as_str() {
                "w_over_a" => cfg.w_over_a = parse_f64(key, v)?,
                "sigma_over_a" => cfg.sigma_over_a = parse_f64(key, v)?,
                "d_over_a" => cfg.d_over_a = parse_f64(key, v)?,
                "eta" => cfg.eta = parse_f64(key, v)?,
                "noise_n" => cfg.noise_n = parse_f64(key, v)?,
                "chi_grid" => cfg.chi_grid = parse_grid(key, v)?,
                "squeeze_db" => cfg.squeeze_db = parse_f64(key, v)?,
                "alpha" => cfg.alpha = parse_f64(key, v)?,
                "r_grid" => cfg.r_grid = parse_grid(key, v)?,
                "t_grid" => cfg.t_grid = if v == "auto" { None } else { Some(parse_grid(key, v)?) },
                "fbar_grid" => cfg.fbar_grid = parse_grid(key, v)?,
                "seed" => cfg.seed = parse_int(key, v)?,
                "n_samples" => cfg.n_samples = parse_int(key, v)?,
                "abs_tol" => abs_tol = parse_f64(key, v)?,
                "rel_tol" => rel_tol = parse_f64(key, v)?,
                "max_subdivisions" => max_sub = parse_int(key, v)?,
                "z_threshold" => cfg.z_threshold = parse_f64(key, v)?,
                "angles" => {
                    let a = v.split(',').map(|x| parse_f64(key, x)).collect::<Result<Vec<f64>>>()?;
                    if a.len() != 4 {
                        return Err(config_err(key, "expected four angles a1,b1,a2,b2"));
                    }
                    cfg.angles = BellAngles {
                        a1: a[0],
                        b1: a[1],
                        a2: a[2],
                        b2: a[3],
                    };
                }
                "threads" => cfg.threads = parse_int(key, v)?,
                "use_exact_t" => cfg.use_exact_t = parse_bool(key, v)?,
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.quadrature =
            QuadratureSpec::new(abs_tol, rel_tol, max_sub).map_err(|e| Error::Config(format!("quadrature: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if !(self.w_over_a > 0.0) {
            return Err(config_err("w_over_a", "must be positive"));
        }
        if !(self.sigma_over_a > 0.0) {
            return Err(config_err("sigma_over_a", "must be positive"));
        }
        if self.d_over_a < 0.0 {
            return Err(config_err("d_over_a", "must be nonnegative"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(config_err("eta", "must lie in (0, 1]"));
        }
        if self.noise_n < 0.0 {
            return Err(config_err("noise_n", "must be nonnegative"));
        }
        if self.chi_grid.first().is_some_and(|&c| c < 0.0) {
            return Err(config_err("chi_grid", "values must be nonnegative"));
        }
        if self.alpha < 0.0 {
            return Err(config_err("alpha", "must be nonnegative"));
        }
        if self.r_grid.first().is_some_and(|&r| r < 0.0) {
            return Err(config_err("r_grid", "values must be nonnegative"));
        }
        if !(self.fbar_grid[0] > 0.0 && self.fbar_grid[self.fbar_grid.len() - 1] <= 1.0) {
            return Err(config_err("fbar_grid", "values must lie in (0, 1]"));
        }
        if self.n_samples < crate::mc_verify::MIN_SAMPLES {
            return Err(config_err("n_samples", format!("must be at least {}", crate::mc_verify::MIN_SAMPLES)));
        }
        if !(self.z_threshold > 0.0) {
            return Err(config_err("z_threshold", "must be positive"));
        }
        Ok(())
    }

    /// Resolved parameters in config syntax; feeding them back reproduces the run.
    pub fn to_config_text(&self) -> String {
        let a = self.angles;
        let lines = [
            format!("w_over_a = {:?}", self.w_over_a),
            format!("sigma_over_a = {:?}", self.sigma_over_a),
            format!("d_over_a = {:?}", self.d_over_a),
            format!("eta = {:?}", self.eta),
            format!("noise_n = {:?}", self.noise_n),
            format!("chi_grid = {}", format_grid(&self.chi_grid)),
            format!("squeeze_db = {:?}", self.squeeze_db),
            format!("alpha = {:?}", self.alpha),
            format!("r_grid = {}", format_grid(&self.r_grid)),
            format!(
                "t_grid = {}",
                self.t_grid.as_deref().map_or_else(|| "auto".to_string(), format_grid)
            ),
            format!("fbar_grid = {}", format_grid(&self.fbar_grid)),
            format!("seed = {}", self.seed),
            format!("n_samples = {}", self.n_samples),
            format!("abs_tol = {:?}", self.quadrature.abs_tol),
            format!("rel_tol = {:?}", self.quadrature.rel_tol),
            format!("max_subdivisions = {}", self.quadrature.max_subdivisions),
            format!("z_threshold = {:?}", self.z_threshold),
            format!("angles = {:?},{:?},{:?},{:?}", a.a1, a.b1, a.a2, a.b2),
            format!("threads = {}", self.threads),
            format!("use_exact_t = {}", self.use_exact_t),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Default analyser angles in radians, for documentation and tests.
pub const DEFAULT_ANGLES: [f64; 4] = [0.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0];
