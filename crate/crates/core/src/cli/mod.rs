//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 config error, 2 numerical failure, 3 validation failure.

pub mod config;
pub mod manifest;
pub mod validate;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use config::RunConfig;
pub use manifest::{file_sha256, OutputFile, RunManifest};
pub use validate::{run_validation, Check, Faults};

use crate::analysis::{
    fit_t2, format_table1, ordering_violations, quarter_phase_pulses, reproduce_table1, spectrum_scan, table1_grid,
    write_spectrum_csv, write_table1_csv, CellFilter,
};
use crate::engine::output::write_ensemble_csv;
use crate::engine::run_ensemble;
use crate::error::{Error, Result};
use crate::sequence::{fourier_coefficient, response_function};
use crate::units::{mhz, to_us};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;

pub const TIMESERIES_CSV: &str = "timeseries.csv";
pub const TABLE1_CSV: &str = "table1.csv";
pub const TABLE1_TXT: &str = "table1.txt";
pub const SPECTRUM_CSV: &str = "spectrum.csv";
pub const RESPONSE_CSV: &str = "response.csv";
pub const FOURIER_CSV: &str = "fourier.csv";
pub const RESULTS_JSON: &str = "results.json";

#[derive(Debug, Parser)]
#[command(name = "zfmag", version, about = "Dressed spin-1 clock-transition magnetometry simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ensemble time series of one configured run, with a T2 fit.
    Simulate(CommonArgs),
    /// Coherence-time grid against the reference values.
    Table1 {
        #[command(flatten)]
        common: CommonArgs,
        /// Cell subset, e.g. "rf=4,control=ldd,t2star=1.8".
        #[arg(long)]
        cells: Option<String>,
    },
    /// Readout contrast against signal detuning.
    Scan(CommonArgs),
    /// Response function f(t) and its cosine coefficients for the configured sequence.
    Filter {
        #[command(flatten)]
        common: CommonArgs,
        /// Highest coefficient index.
        #[arg(long, default_value_t = 20)]
        harmonics: usize,
    },
    /// Fast self-check suite.
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Flip the sign of S_y in the commutator check.
        #[arg(long, hide = true)]
        inject_sy_sign_error: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Does not change results.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    /// Load the config and apply command-line overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.ensemble.base_seed = s;
            cfg.table1.base_seed = s;
        }
        if let Some(w) = self.workers {
            cfg.ensemble.workers = w;
            cfg.table1.workers = w;
        }
        if let Some(n) = self.realizations {
            cfg.ensemble.n_realizations = n;
            cfg.table1.n_realizations = n;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.to_string_lossy().into_owned();
        }
        Ok(cfg)
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical { .. } => EXIT_NUMERICAL,
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::Precondition(_)
        | Error::Integrator(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_CONFIG,
    }
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(cmd: &Command) -> Result<u8> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a.resolve()?).map(|_| EXIT_OK),
        Command::Table1 { common, cells } => cmd_table1(&common.resolve()?, cells.as_deref()).map(|_| EXIT_OK),
        Command::Scan(a) => cmd_scan(&a.resolve()?).map(|_| EXIT_OK),
        Command::Filter { common, harmonics } => cmd_filter(&common.resolve()?, *harmonics).map(|_| EXIT_OK),
        Command::Validate { out, inject_sy_sign_error } => {
            let passed = cmd_validate(out.as_deref(), Faults { flip_sy: *inject_sy_sign_error })?;
            Ok(if passed { EXIT_OK } else { EXIT_VALIDATION })
        }
    }
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn csv_header(command: &str, cfg: &RunConfig, base_seed: u64, n_realizations: usize) -> Result<Vec<(&'static str, String)>> {
    Ok(vec![
        ("command", command.to_string()),
        ("config_hash", cfg.hash()?),
        ("base_seed", base_seed.to_string()),
        ("n_realizations", n_realizations.to_string()),
    ])
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn finish(mut manifest: RunManifest, dir: &Path, files: &[&str], started: Instant) -> Result<RunManifest> {
    for f in files {
        manifest.add_output(dir, f)?;
    }
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(dir)?;
    Ok(manifest)
}

/// Returns the manifest of the written outputs.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<RunManifest> {
    let started = Instant::now();
    let sc = cfg.scenario()?;
    for w in RunConfig::warnings(&sc) {
        log::warn!("{w}");
    }
    let ens = cfg.ensemble_config();
    let res = run_ensemble(&sc, &ens)?;
    let dir = output_dir(cfg)?;
    let header = csv_header("simulate", cfg, ens.base_seed, ens.n_realizations)?;
    write_ensemble_csv(BufWriter::new(File::create(dir.join(TIMESERIES_CSV))?), &res, &header)?;

    let fit = match fit_t2(&res, cfg.analysis.observable) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("no T2 fit: {e}");
            None
        }
    };
    if let Some(f) = &fit {
        println!(
            "T2 = {:.4} us ({:?}, stretch {:.3}, decay fraction {:.2})",
            to_us(f.t2),
            f.method,
            f.stretch_exponent,
            f.decay_fraction
        );
    }
    let last = res.len() - 1;
    write_json(
        &dir,
        RESULTS_JSON,
        &json!({
            "config_hash": cfg.hash()?,
            "base_seed": ens.base_seed,
            "n_realizations": ens.n_realizations,
            "n_samples": res.len(),
            "final_time": res.times[last],
            "final_mean_p_plus": res.mean_p_plus[last],
            "final_stderr_p_plus": res.stderr_p_plus[last],
            "observable": cfg.analysis.observable,
            "fit": fit,
            "warnings": RunConfig::warnings(&sc),
        }),
    )?;
    println!("wrote {}", dir.join(TIMESERIES_CSV).display());
    finish(RunManifest::new("simulate", cfg, ens.base_seed)?, &dir, &[TIMESERIES_CSV, RESULTS_JSON], started)
}

pub fn cmd_table1(cfg: &RunConfig, cells: Option<&str>) -> Result<RunManifest> {
    let started = Instant::now();
    let grid = table1_grid();
    let selected = match cells {
        Some(f) => f.parse::<CellFilter>()?.apply(&grid),
        None => grid,
    };
    if selected.is_empty() {
        return Err(Error::Config(format!("cell filter {cells:?} selects no cells")));
    }
    let settings = &cfg.table1;
    let rows = reproduce_table1(settings, &selected)?;
    let dir = output_dir(cfg)?;
    let header = csv_header("table1", cfg, settings.base_seed, settings.n_realizations)?;
    write_table1_csv(BufWriter::new(File::create(dir.join(TABLE1_CSV))?), &rows, &header)?;
    let text = format_table1(&rows);
    std::fs::write(dir.join(TABLE1_TXT), &text)?;
    print!("{text}");
    let violations = ordering_violations(&rows);
    for v in &violations {
        println!(
            "ordering violated at rf={} T2*={}: {} {:.1} us < {} {:.1} us",
            v.rf_mhz,
            v.t2star_us,
            v.better.label(),
            v.better_t2_us,
            v.worse.label(),
            v.worse_t2_us
        );
    }
    write_json(
        &dir,
        RESULTS_JSON,
        &json!({
            "config_hash": cfg.hash()?,
            "base_seed": settings.base_seed,
            "cells": rows,
            "ordering_violations": violations,
        }),
    )?;
    finish(
        RunManifest::new("table1", cfg, settings.base_seed)?,
        &dir,
        &[TABLE1_CSV, TABLE1_TXT, RESULTS_JSON],
        started,
    )
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<RunManifest> {
    let started = Instant::now();
    let tau = cfg.tau()?;
    let coupling = mhz(cfg.signal.coupling_mhz);
    let n = match cfg.scan.n_pulses {
        Some(n) => n,
        None if coupling > 0.0 => {
            let block = cfg.sequence.phases.as_ref().map_or(1, |p| p.len().max(1));
            let block = if cfg.sequence.family == "ldd8b" && cfg.sequence.phases.is_none() { 8 } else { block };
            quarter_phase_pulses(coupling, mhz(cfg.sequence.resonance_mhz), tau, block)?
        }
        None => cfg.n_pulses(tau)?,
    };
    let base = cfg.scenario_with(Some(n))?;
    for w in RunConfig::warnings(&base) {
        log::warn!("{w}");
    }
    let ens = cfg.ensemble_config();
    let scan = spectrum_scan(&base, coupling, &cfg.scan.grid()?, &ens)?;
    let dir = output_dir(cfg)?;
    let mut header = csv_header("scan", cfg, ens.base_seed, ens.n_realizations)?;
    header.push(("readout_time_us", format!("{}", to_us(scan.readout_time))));
    write_spectrum_csv(BufWriter::new(File::create(dir.join(SPECTRUM_CSV))?), &scan, &header)?;
    let peak = scan.peak_detuning().map(crate::units::to_mhz);
    let width = scan.linewidth().map(crate::units::to_mhz);
    println!("{n} pulses, readout {:.3} us, peak at {peak:?} MHz, FWHM {width:?} MHz", to_us(scan.readout_time));
    write_json(
        &dir,
        RESULTS_JSON,
        &json!({
            "config_hash": cfg.hash()?,
            "base_seed": ens.base_seed,
            "n_pulses": n,
            "readout_time": scan.readout_time,
            "peak_detuning_mhz": peak,
            "linewidth_mhz": width,
        }),
    )?;
    finish(RunManifest::new("scan", cfg, ens.base_seed)?, &dir, &[SPECTRUM_CSV, RESULTS_JSON], started)
}

pub fn cmd_filter(cfg: &RunConfig, harmonics: usize) -> Result<RunManifest> {
    use std::io::Write;
    let started = Instant::now();
    let sc = cfg.scenario()?;
    let f = response_function(&sc.sequence);
    let dir = output_dir(cfg)?;
    let header = csv_header("filter", cfg, cfg.ensemble.base_seed, 0)?;

    let mut w = BufWriter::new(File::create(dir.join(RESPONSE_CSV))?);
    for (k, v) in &header {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "t_start_us,t_end_us,sign")?;
    for (a, b, s) in f.pieces() {
        writeln!(w, "{:.9e},{:.9e},{s}", to_us(a), to_us(b))?;
    }
    w.flush()?;

    // The square wave repeats every 4τ; coefficients are taken over one period.
    let period = 4.0 * sc.sequence.tau;
    let mut w = BufWriter::new(File::create(dir.join(FOURIER_CSV))?);
    for (k, v) in &header {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "# period_us: {}", to_us(period))?;
    writeln!(w, "n,a_n,square_wave_a_n")?;
    for n in 1..=harmonics {
        writeln!(w, "{n},{:.12e},{:.12e}", f.cosine_coefficient(n, period), fourier_coefficient(n)?)?;
    }
    w.flush()?;
    println!("wrote {} and {}", dir.join(RESPONSE_CSV).display(), dir.join(FOURIER_CSV).display());
    finish(
        RunManifest::new("filter", cfg, cfg.ensemble.base_seed)?,
        &dir,
        &[RESPONSE_CSV, FOURIER_CSV],
        started,
    )
}

/// Print the report; returns whether every check passed.
pub fn cmd_validate(out: Option<&Path>, faults: Faults) -> Result<bool> {
    let checks = run_validation(faults)?;
    for c in &checks {
        println!("{c}");
    }
    let passed = checks.iter().all(|c| c.passed);
    println!("{} of {} checks passed", checks.iter().filter(|c| c.passed).count(), checks.len());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(dir, "validate.json", &json!({ "passed": passed, "checks": checks }))?;
    }
    Ok(passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Precondition("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Numerical { time: 0.0, message: "nan".into() }), EXIT_NUMERICAL);
    }

    #[test]
    fn overrides_apply() {
        let a = CommonArgs {
            config: None,
            seed: Some(9),
            workers: Some(2),
            realizations: Some(5),
            out: Some("x".into()),
        };
        let cfg = a.resolve().unwrap();
        assert_eq!(cfg.ensemble.base_seed, 9);
        assert_eq!(cfg.table1.n_realizations, 5);
        assert_eq!(cfg.output_dir, "x");
    }

    #[test]
    fn bad_arguments_are_config_errors() {
        assert_eq!(run(["zfmag", "simulate", "--seed", "abc"]), EXIT_CONFIG);
        assert_eq!(run(["zfmag", "nonsense"]), EXIT_CONFIG);
        assert_eq!(run(["zfmag", "simulate", "--config", "/nonexistent/cfg.json"]), EXIT_CONFIG);
    }
}
