//! `lgi` command-line interface.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use clap::{Arg, ArgMatches, Command};

use crate::analysis::{analyze, AnalysisReport};
use crate::config::{flag_name, parse_entries, Entry, RunConfig, KEYS};
use crate::counting::{
    simulate_blocker_runs, simulate_interferogram, simulate_transversal_scan, CountRecord, RUN_BLOCKER,
    RUN_INTERFEROGRAM, RUN_TRANSVERSAL,
};
use crate::csvio::{read_counts, write_counts, write_k_curve, write_sweep};
use crate::error::{Error, Result};
use crate::protocol::{correlators_analytic, correlators_protocol, linspace, sweep_k, CorrelatorSet};

pub const INTERFEROGRAM_FILE: &str = "interferogram.csv";
pub const TRANSVERSAL_FILE: &str = "transversal.csv";
pub const BLOCKER_FILE: &str = "blocker.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const K_CURVE_FILE: &str = "k_curve.csv";
pub const REPORT_FILE: &str = "report.json";

fn with_config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key = value configuration file"),
    );
    KEYS.iter().fold(cmd, |cmd, &(key, help)| {
        cmd.arg(Arg::new(key).long(flag_name(key)).value_name("VALUE").help(help))
    })
}

pub fn command() -> Command {
    Command::new("lgi")
        .about("Leggett-Garg tests with ideal negative measurements in a two-path interferometer")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_config_args(
            Command::new("analytic").about("Print closed-form and protocol correlators"),
        ))
        .subcommand(with_config_args(
            Command::new("sweep").about("Write K over a (theta_A, chi) grid to sweep.csv"),
        ))
        .subcommand(with_config_args(
            Command::new("simulate").about("Write simulated detector counts for all three correlators"),
        ))
        .subcommand(with_config_args(
            Command::new("analyze").about("Estimate correlators and K from count CSVs"),
        ))
}

fn load_config(matches: &ArgMatches) -> Result<RunConfig> {
    let file = match matches.get_one::<String>("config") {
        Some(path) => {
            let path = PathBuf::from(path);
            let text = fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
            parse_entries(&text)?
        }
        None => Vec::new(),
    };
    let flags = KEYS
        .iter()
        .filter_map(|&(key, _)| matches.get_one::<String>(key).map(|v| Entry::flag(key, v.clone())))
        .collect();
    Ok(RunConfig::from_sources(file, flags)?)
}

fn fmt5(x: f64) -> String {
    let s = format!("{x:.5}");
    if s == "-0.00000" {
        "0.00000".into()
    } else {
        s
    }
}

fn print_set(out: &mut dyn Write, set: &CorrelatorSet) -> std::io::Result<()> {
    writeln!(out, "C21 = {}", fmt5(set.c21.value))?;
    writeln!(out, "C32 = {}", fmt5(set.c32.value))?;
    writeln!(out, "C31 = {}", fmt5(set.c31.value))?;
    writeln!(out, "K = {}", fmt5(set.k))
}

fn io_err(path: &FsPath) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes every file or none: on failure, files already written are removed.
fn write_outputs(dir: &FsPath, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        if let Err(source) = fs::write(&path, contents) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(Error::Io { path, source });
        }
        written.push(path);
    }
    Ok(written)
}

fn analytic(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = &config.protocol;
    let closed = correlators_analytic(p.theta_a, p.theta_b, p.chi);
    let protocol = correlators_protocol(p)?;
    let w = |e| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    writeln!(
        out,
        "theta_A = {:.6} rad, theta_B = {:.6} rad, chi = {:.6} rad",
        p.theta_a, p.theta_b, p.chi
    )
    .map_err(w)?;
    print_set(out, &closed).map_err(w)?;
    if p.absorber.is_some() || p.visibility < 1.0 {
        writeln!(out, "with absorber and visibility (blocked-path protocol):").map_err(w)?;
        print_set(out, &protocol).map_err(w)?;
    }
    Ok(())
}

fn sweep(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let thetas = linspace(0.0, std::f64::consts::PI, config.sweep.theta_points);
    let chis = linspace(-std::f64::consts::PI, std::f64::consts::PI, config.sweep.chi_points);
    let grid = sweep_k(&thetas, &chis, config.protocol.theta_b)?;
    let text = write_sweep(&grid)?;
    let written = write_outputs(&config.output_dir, &[(SWEEP_FILE, text)])?;
    let (t, c, k) = grid
        .cells()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .expect("grid is non-empty");
    let violating = grid.values.iter().filter(|&&k| k > 1.0).count();
    writeln!(
        out,
        "wrote {} cells to {}\nmax K = {} at theta_A = {:.6}, chi = {:.6}; {} cells with K > 1",
        grid.values.len(),
        written[0].display(),
        fmt5(k),
        t,
        c,
        violating
    )
    .map_err(io_err(FsPath::new("<stdout>")))?;
    Ok(())
}

/// Count records for the three measurement runs of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRuns {
    pub interferogram: Vec<CountRecord>,
    pub transversal: Vec<CountRecord>,
    pub blocker: Vec<CountRecord>,
    pub warnings: Vec<String>,
}

impl SimulatedRuns {
    pub fn analyze(&self, config: &RunConfig) -> Result<AnalysisReport> {
        analyze(&self.interferogram, &self.transversal, &self.blocker, &config.analysis_options())
    }
}

pub fn simulate_runs(config: &RunConfig) -> Result<SimulatedRuns> {
    let scan = &config.scan;
    let chis = linspace(scan.chi_min, scan.chi_max, scan.chi_points);
    let positions = linspace(scan.pos_min_mm, scan.pos_max_mm, scan.pos_points);
    let transversal = simulate_transversal_scan(&config.protocol, &config.beam, &positions, &scan.profile)?;
    Ok(SimulatedRuns {
        interferogram: simulate_interferogram(&config.protocol, &config.beam, &chis)?,
        transversal: transversal.records,
        blocker: simulate_blocker_runs(&config.protocol, &config.beam)?,
        warnings: transversal.warnings,
    })
}

fn simulate(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let runs = simulate_runs(config)?;
    let files = [
        (INTERFEROGRAM_FILE, write_counts(&runs.interferogram)?),
        (TRANSVERSAL_FILE, write_counts(&runs.transversal)?),
        (BLOCKER_FILE, write_counts(&runs.blocker)?),
    ];
    let written = write_outputs(&config.output_dir, &files)?;
    let mut text = String::new();
    for warning in &runs.warnings {
        text.push_str(&format!("warning: {warning}\n"));
    }
    for path in &written {
        text.push_str(&format!("wrote {}\n", path.display()));
    }
    out.write_all(text.as_bytes())
        .map_err(io_err(FsPath::new("<stdout>")))?;
    Ok(())
}

fn read_run(dir: &FsPath, file: &str, run: &'static str) -> Result<Vec<CountRecord>> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(Error::MissingRun { run, path });
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    read_counts(&text).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))
}

fn sig(x: Option<f64>) -> String {
    x.map(fmt5).unwrap_or_else(|| "-".into())
}

pub fn format_report(report: &AnalysisReport) -> String {
    let set = &report.correlators;
    let mut s = String::new();
    s.push_str("correlator      value      sigma\n");
    for (name, e) in [("C21", set.c21), ("C32", set.c32), ("C31", set.c31)] {
        s.push_str(&format!("{name:<10} {:>10} {:>10}\n", fmt5(e.value), sig(e.sigma)));
    }
    s.push_str(&format!("{:<10} {:>10} {:>10}\n", "K", fmt5(set.k), sig(set.sigma_k)));
    match set.n_sigma {
        Some(n) => s.push_str(&format!("n_sigma    {n:>10.1}\n")),
        None => s.push_str("n_sigma             -   (no violation)\n"),
    }
    s.push_str(&format!(
        "operating chi = {:.6} rad ({}, {} labels)\n",
        report.operating_chi,
        report.chi_mode,
        if report.relabeled { "swapped" } else { "standard" }
    ));
    s.push_str(&format!(
        "C31 from fitted curves = {} +/- {}\n",
        fmt5(report.c31_fit.value),
        sig(report.c31_fit.sigma)
    ));
    for w in &report.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s
}

fn analyze_cmd(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let dir = &config.input_dir;
    let interferogram = read_run(dir, INTERFEROGRAM_FILE, RUN_INTERFEROGRAM)?;
    let transversal = read_run(dir, TRANSVERSAL_FILE, RUN_TRANSVERSAL)?;
    let blocker = read_run(dir, BLOCKER_FILE, RUN_BLOCKER)?;
    let report = analyze(&interferogram, &transversal, &blocker, &config.analysis_options())?;
    let files = [
        (K_CURVE_FILE, write_k_curve(&report.k_curve)?),
        (REPORT_FILE, serde_json::to_string_pretty(&report)? + "\n"),
    ];
    let written = write_outputs(&config.output_dir, &files)?;
    let mut text = format_report(&report);
    for path in &written {
        text.push_str(&format!("wrote {}\n", path.display()));
    }
    out.write_all(text.as_bytes())
        .map_err(io_err(FsPath::new("<stdout>")))?;
    Ok(())
}

/// Runs one invocation; `argv[0]` is the program name.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(argv).map_err(CliError::Usage)?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let config = load_config(sub)?;
    match name {
        "analytic" => analytic(&config, out)?,
        "sweep" => sweep(&config, out)?,
        "simulate" => simulate(&config, out)?,
        "analyze" => analyze_cmd(&config, out)?,
        _ => unreachable!("clap rejects unknown subcommands"),
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(clap::Error),
    #[error("error: {0}")]
    Run(#[from] Error),
}

/// [`run`] mapped to a process exit status, with diagnostics on `err`.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(argv, out) {
        Ok(()) => 0,
        Err(CliError::Usage(e)) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = out.write_all(rendered.as_bytes());
            } else {
                let _ = err.write_all(rendered.as_bytes());
            }
            code
        }
        Err(e) => {
            let _ = writeln!(err, "{e}");
            1
        }
    }
}
