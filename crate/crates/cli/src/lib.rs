//! Command-line front end: config handling, subcommand dispatch and
//! artifact emission.
//!
//! Each invocation writes into `<output root>/<run id>/<subcommand>/`, where
//! the output root comes from the config, then `PNC_OUTPUT_DIR`, then
//! `./pnc-output`. The run id defaults to a hash of the effective config and
//! the subcommand arguments, so identical invocations land in the same place
//! and produce identical files.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, Structure, OUTPUT_DIR_ENV};
pub use error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pnc", version, about = "Phononic-crystal bands, orbital relaxation rates and fits")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override a config key, e.g. `--set t_nm=25.1`; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    pub run_id: Option<String>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for k-points, sweeps and delay scans.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Band diagram over the configured k path.
    Bands,
    /// Band diagram, density of states and a plot script for both.
    Dos,
    /// Complete gaps and comparison with the reference gap.
    Gap,
    /// Widest gap as one cell parameter varies.
    Sweep(SweepArgs),
    /// Orbital relaxation rates versus temperature.
    Rates(RatesArgs),
    /// Simulated pump-probe recovery curve.
    Pumpprobe(PumpProbeArgs),
    /// Fit of the recovery law to a measured curve.
    #[command(name = "fit-t1")]
    FitT1(FitT1Args),
    /// Power-law fits of relaxation rate versus temperature.
    #[command(name = "fit-temp")]
    FitTemp(FitTempArgs),
    /// Cell geometry statistics from contour point sets.
    #[command(name = "fit-geom")]
    FitGeom(FitGeomArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Cell parameter to vary (w, h, a, t, r, d).
    #[arg(long)]
    pub param: Option<String>,
    /// Comma-separated values in nm.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// Ground-state orbital splitting.
    #[arg(long, allow_negative_numbers = true)]
    pub delta_ghz: f64,
    /// Comma-separated temperatures.
    #[arg(long, value_delimiter = ',', conflicts_with = "temp_range", required_unless_present = "temp_range")]
    pub temp_k: Option<Vec<f64>>,
    /// `LO:HI:N`, N evenly spaced temperatures.
    #[arg(long)]
    pub temp_range: Option<String>,
    /// Single-phonon coupling times DOS, MHz/GHz^3.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub chi_rho: f64,
    /// Two-phonon product, MHz/GHz^5.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub chi_rho_sq: f64,
    /// Report angular rates (x 2 pi) instead of ordinary frequency.
    #[arg(long)]
    pub angular: bool,
    /// Raman channels entering the total rate.
    #[arg(long, default_value_t = 2.0)]
    pub raman_channels: f64,
}

#[derive(Debug, Args)]
pub struct PumpProbeArgs {
    #[arg(long, conflicts_with_all = ["gamma_up", "gamma_down"], required_unless_present_all = ["gamma_up", "gamma_down"])]
    pub t1_ns: Option<f64>,
    /// Ratio gamma_up / gamma_down used with `--t1-ns`.
    #[arg(long, default_value_t = 0.5, requires = "t1_ns")]
    pub up_over_down: f64,
    #[arg(long, requires = "gamma_down")]
    pub gamma_up: Option<f64>,
    #[arg(long, requires = "gamma_up")]
    pub gamma_down: Option<f64>,
    /// Optical pump rate, MHz.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Excited-state decay rate, MHz.
    #[arg(long)]
    pub gamma_opt: Option<f64>,
    /// Branching of the excited-state decay back to the lower orbital.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Comma-separated delays in ns; default 25 delays up to 5 T1.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Relative shot-noise level applied to each trace.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub width_ns: Option<f64>,
    #[arg(long)]
    pub step_ns: Option<f64>,
    /// Integration window at the start of each pulse.
    #[arg(long)]
    pub window_ns: Option<f64>,
    /// Delay whose trace is dumped; default the longest.
    #[arg(long)]
    pub trace_tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitT1Args {
    /// CSV with columns tau_ns, ratio and optionally sigma.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitTempArgs {
    /// CSV with columns temperature_K, rate_MHz, sigma_MHz.
    #[arg(long)]
    pub input: PathBuf,
    /// Exponents to compare.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    pub models: Vec<u32>,
    /// Fit only points below this temperature.
    #[arg(long)]
    pub t_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitGeomArgs {
    /// CSV with columns file, role (block, corner, tether-edge) and cell.
    #[arg(long)]
    pub manifest: PathBuf,
}

impl Cli {
    /// Config file plus overrides; dedicated flags are applied last.
    pub fn effective_config(&self) -> CliResult<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Command::Sweep(s) = &self.command {
            if let Some(p) = &s.param {
                overrides.push(format!("sweep_param=\"{}\"", p.trim()));
            }
            if let Some(v) = &s.values {
                let list: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                overrides.push(format!("sweep_values_nm=[{}]", list.join(",")));
            }
        }
        if let Some(d) = &self.output_dir {
            overrides.push(format!("output_dir={}", toml::Value::String(d.to_string_lossy().into_owned())));
        }
        if let Some(id) = &self.run_id {
            overrides.push(format!("run_id={}", toml::Value::String(id.clone())));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

/// Runs a parsed command line; returns the artifact directory, if any.
pub fn run(cli: &Cli) -> CliResult<Option<PathBuf>> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // Fails only when the global pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = cli.effective_config()?;
    commands::dispatch(&cli.command, &cfg)
}

/// Parses `args`, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::INVALID_CONFIG } else { exit::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(Some(dir)) => {
            println!("artifacts: {}", dir.display());
            exit::SUCCESS
        }
        Ok(None) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
