//! Command implementations behind the `beamwander` binary.
//!
//! Each command turns a [`RunConfig`] into CSV text with a header row; the
//! binary adds file handling and exit codes. Output depends only on the
//! configuration, never on timing or thread count.

pub mod config;

use std::fmt::Write as _;
use std::path::Path;

use crate::aperture::{fit_approx_model, transmission_approx, transmission_exact, ApertureBeam};
use crate::bell::{bell_scan, PdcBellSetup};
use crate::channel::PointMass;
use crate::error::{Error, Result};
use crate::mc_verify::{verify_suite, McConfig, Verdict};
use crate::pdtc::{ExceedanceMethod, Pdtc};
use crate::squeezing::{squeezing_vs_exceedance_scan, SqueezingInput};

pub use config::RunConfig;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONVERGENCE: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Exact and fitted T² against beam deflection.
    Transmission,
    /// Exact and approximate exceedance against T.
    Exceedance,
    /// Bell parameter against χ for the fluctuating and constant channels.
    Bell,
    /// Post-selected squeezing against exceedance.
    Squeezing,
    /// Monte Carlo checks of the analytic distribution.
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Transmission => "transmission",
            Command::Exceedance => "exceedance",
            Command::Bell => "bell",
            Command::Squeezing => "squeezing",
            Command::Verify => "verify",
        }
    }
}

/// CSV text produced by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub csv: String,
    /// Set by `verify` when any check fails; inconclusive checks do not count.
    pub verification_failed: bool,
}

impl CommandOutput {
    fn data(csv: String) -> Self {
        Self {
            csv,
            verification_failed: false,
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Convergence { .. }
        | Error::Truncation { .. }
        | Error::UndefinedCorrelation { .. }
        | Error::InfeasiblePostSelection { .. } => EXIT_CONVERGENCE,
        _ => EXIT_USAGE,
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn pdtc_of(cfg: &RunConfig) -> Result<Pdtc> {
    Pdtc::normalized(cfg.w_over_a, cfg.sigma_over_a, cfg.d_over_a)
}

/// Run `command`, on a dedicated pool when `cfg.threads` is set.
pub fn run(command: Command, cfg: &RunConfig) -> Result<CommandOutput> {
    if cfg.threads == 0 {
        return dispatch(command, cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    pool.install(|| dispatch(command, cfg))
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<CommandOutput> {
    match command {
        Command::Transmission => cmd_transmission(cfg).map(CommandOutput::data),
        Command::Exceedance => cmd_exceedance(cfg).map(CommandOutput::data),
        Command::Bell => cmd_bell(cfg).map(CommandOutput::data),
        Command::Squeezing => cmd_squeezing(cfg).map(CommandOutput::data),
        Command::Verify => cmd_verify(cfg),
    }
}

/// `r_over_a,T2_exact,T2_approx`.
pub fn cmd_transmission(cfg: &RunConfig) -> Result<String> {
    let geom = ApertureBeam::normalized(cfg.w_over_a)?;
    let model = fit_approx_model(&geom)?;
    let mut out = String::from("r_over_a,T2_exact,T2_approx\n");
    for &r in &cfg.r_grid {
        let exact = transmission_exact(r, &geom, &cfg.quadrature)?.t_sq;
        let _ = writeln!(out, "{},{},{}", num(r), num(exact), num(transmission_approx(r, &model)));
    }
    Ok(out)
}

/// `T,Fbar_exact,Fbar_approx`.
pub fn cmd_exceedance(cfg: &RunConfig) -> Result<String> {
    let p = pdtc_of(cfg)?;
    let grid = match &cfg.t_grid {
        Some(g) => g.clone(),
        None => (0..=100).map(|i| p.t0() * f64::from(i) / 100.0).collect(),
    };
    let mut out = String::from("T,Fbar_exact,Fbar_approx\n");
    for t in grid {
        let exact = p.exceedance(t, ExceedanceMethod::Exact, &cfg.quadrature)?;
        let approx = p.exceedance(t, ExceedanceMethod::Approx, &cfg.quadrature)?;
        let _ = writeln!(out, "{},{},{}", num(t), num(exact), num(approx));
    }
    Ok(out)
}

/// `chi,B_fluct,B_const`; the constant channel has the same `⟨T²⟩`.
pub fn cmd_bell(cfg: &RunConfig) -> Result<String> {
    let p = pdtc_of(cfg)?;
    let constant = PointMass::from_efficiency(p.moment(2, &cfg.quadrature)?)?;
    let template = PdcBellSetup::new(0.0, cfg.eta, cfg.noise_n)?.with_angles(cfg.angles);
    let fluct = bell_scan(&template, &p, &cfg.chi_grid, &cfg.quadrature)?;
    let cons = bell_scan(&template, &constant, &cfg.chi_grid, &cfg.quadrature)?;
    let mut out = String::from("chi,B_fluct,B_const\n");
    for ((chi, bf), (_, bc)) in fluct.into_iter().zip(cons) {
        let _ = writeln!(out, "{},{},{}", num(chi), num(bf), num(bc));
    }
    Ok(out)
}

/// `fbar,t_min,quad_dB,photon_dB`; infeasible selections show NaN.
pub fn cmd_squeezing(cfg: &RunConfig) -> Result<String> {
    let p = pdtc_of(cfg)?;
    let input = SqueezingInput::displaced_squeezed(cfg.alpha, cfg.squeeze_db)?;
    let rows = squeezing_vs_exceedance_scan(&input, &p, &cfg.fbar_grid, &cfg.quadrature)?;
    let mut out = String::from("fbar,t_min,quad_dB,photon_dB\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            num(row.fbar),
            num(row.t_min),
            num(row.quad_db),
            num(row.photon_db)
        );
    }
    Ok(out)
}

/// `quantity,analytic,empirical,std_error,n_samples,z_score,verdict`.
pub fn cmd_verify(cfg: &RunConfig) -> Result<CommandOutput> {
    let p = pdtc_of(cfg)?;
    let mc = McConfig {
        z_threshold: cfg.z_threshold,
        use_exact_t: cfg.use_exact_t,
        spec: cfg.quadrature,
    };
    let reports = verify_suite(&p, cfg.n_samples, cfg.seed, &mc)?;
    let mut csv = String::from("quantity,analytic,empirical,std_error,n_samples,z_score,verdict\n");
    for r in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.quantity_name,
            num(r.analytic),
            num(r.empirical),
            num(r.std_error),
            r.n_samples,
            num(r.z_score),
            r.verdict
        );
    }
    Ok(CommandOutput {
        csv,
        verification_failed: reports.iter().any(|r| r.verdict == Verdict::Fail),
    })
}

/// Run description: tool, command and every resolved parameter in config
/// syntax, so the manifest can be passed back as `--config`.
pub fn manifest(command: Command, cfg: &RunConfig, config_path: Option<&Path>, created_unix: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# tool = {TOOL_NAME} {TOOL_VERSION}");
    let _ = writeln!(out, "# command = {}", command.name());
    if let Some(path) = config_path {
        let _ = writeln!(out, "# config = {}", path.display());
    }
    let _ = writeln!(out, "# created_unix = {created_unix}");
    out.push_str(&cfg.to_config_text());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    fn rows(csv: &str) -> Vec<Vec<f64>> {
        csv.lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    }

    #[test]
    fn transmission_table() {
        let out = cmd_transmission(&cfg("w_over_a = 1\nr_grid = 0,0.5,1")).unwrap();
        assert!(out.starts_with("r_over_a,T2_exact,T2_approx\n"));
        let r = rows(&out);
        assert!((r[0][1] - (1.0 - (-2f64).exp())).abs() < 1e-10);
        assert!((r[2][1] - r[2][2]).abs() < 1e-8);
    }

    #[test]
    fn exceedance_table() {
        let out = cmd_exceedance(&cfg("sigma_over_a = 2\nt_grid = linspace:0:0.9:10")).unwrap();
        assert!(out.starts_with("T,Fbar_exact,Fbar_approx\n"));
        let r = rows(&out);
        assert_eq!(r[0][1], 1.0);
        assert!(r.iter().all(|row| row[1] == row[2]));
        let shifted = cmd_exceedance(&cfg("sigma_over_a = 2\nd_over_a = 2\nw_over_a = 1")).unwrap();
        let r = rows(&shifted);
        assert_eq!(r.len(), 101);
        assert!(r.iter().all(|row| (row[1] - row[2]).abs() < 0.01));
    }

    #[test]
    fn bell_table_zero_row() {
        let out = cmd_bell(&cfg("chi_grid = 0,0.05")).unwrap();
        let r = rows(&out);
        assert_eq!(r[0], vec![0.0, 0.0, 0.0]);
        assert!(r[1][1] > r[1][2]);
    }

    #[test]
    fn squeezing_table() {
        let out = cmd_squeezing(&cfg("fbar_grid = 1e-4,1")).unwrap();
        assert!(out.starts_with("fbar,t_min,quad_dB,photon_dB\n"));
        let r = rows(&out);
        assert_eq!(r[1][1], 0.0);
        assert!(r[0][2] > 3.0);
    }

    #[test]
    fn verify_table() {
        let c = cfg("sigma_over_a = 2\nn_samples = 20000");
        let out = cmd_verify(&c).unwrap();
        assert!(out.csv.starts_with("quantity,analytic,empirical,std_error,n_samples,z_score,verdict\n"));
        assert_eq!(out.csv.lines().count(), 12);
        assert_eq!(out, cmd_verify(&c).unwrap());
    }

    #[test]
    fn manifest_reparses() {
        let c = cfg("seed = 9\nchi_grid = 0.1,0.2");
        let m = manifest(Command::Bell, &c, Some(Path::new("run.cfg")), 0);
        assert!(m.contains("# command = bell"));
        assert_eq!(RunConfig::parse(&m).unwrap(), c);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Convergence { estimate: 0.0, error: 1.0 }), EXIT_CONVERGENCE);
    }
}
