use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use pivotrack::certify::{certify, CertificateReport};
use pivotrack::config::{self, load_manifest, to_manifest, PAPER_SQUARE, SWEEP_PARAMS};
use pivotrack::outer::VehicleModel;
use pivotrack::sim::{self, Mode, Outcome, SimConfig, SimLog};
use pivotrack::validate::{run_suites, Faults, Suite};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "pivotrack", version, about = "Closed-loop simulator for pivoted-actuator tracking control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Put,
    #[value(alias = "naive_baseline")]
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    /// Shift theta* up by 0.05 rad so it overshoots theta-bar
    ThetaStar,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write the log, summary and certificate report
    Simulate {
        /// Manifest to run; the bundled square maneuver when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the manifest's mode
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one simulation per value of a parameter
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        param: String,
        /// Comma-separated values; `2pi/10` style fractions of pi are accepted
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Run the seeded property suites and the closed-loop certificates
    Validate {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Manifest for the closed-loop certificates
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

fn load(path: Option<&Path>) -> Result<SimConfig, String> {
    match path {
        Some(p) => load_manifest(p).map_err(|e| e.to_string()),
        None => config::parse_manifest(PAPER_SQUARE).map_err(|e| e.to_string()),
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

/// Parses `1.5`, `pi`, `2pi`, `pi/4` or `2pi/10`.
fn parse_value(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim().parse::<f64>().ok()?),
        None => (s, 1.0),
    };
    let coeff = num.strip_suffix("pi")?.trim().trim_end_matches('*');
    let coeff = if coeff.is_empty() { 1.0 } else { coeff.parse::<f64>().ok()? };
    Some(coeff * std::f64::consts::PI / den)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}

fn report_json(log: &SimLog, certs: Option<&CertificateReport>, passed: bool) -> serde_json::Value {
    json!({
        "mode": log.config.mode.name(),
        "outcome": log.outcome,
        "passed": passed,
        "switch_events": log.events,
        "certificates": certs,
    })
}

fn simulate(config: Option<&Path>, mode: Option<ModeArg>, out: &Path) -> ExitCode {
    let mut cfg = match load(config) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    if let Some(m) = mode {
        cfg.mode = match m {
            ModeArg::Put => Mode::Put,
            ModeArg::Naive => Mode::Naive,
        };
    }
    let model = match VehicleModel::by_name(&cfg.model) {
        Ok(m) => m,
        Err(e) => return usage_error(e),
    };
    if let Err(e) = fs::create_dir_all(out) {
        return usage_error(format!("{}: {e}", out.display()));
    }

    let started = Instant::now();
    let log = match sim::run(&cfg) {
        Ok(l) => l,
        Err(e) => return usage_error(e),
    };
    let elapsed = started.elapsed();

    let (certs, passed) = match cfg.mode {
        Mode::Put => match certify(&log, &model) {
            Ok(r) => {
                let ok = log.outcome.is_completed() && r.passed();
                (Some(r), ok)
            }
            Err(e) => {
                eprintln!("certificates unavailable: {e}");
                (None, false)
            }
        },
        // reaching the singularity is the expected naive outcome
        Mode::Naive => (None, matches!(log.outcome, Outcome::Completed | Outcome::Singularity { .. })),
    };

    let written = write_file(&out.join("log.csv"), |w| log.write_csv(w))
        .and_then(|_| write_file(&out.join("summary.json"), |w| Ok(serde_json::to_writer_pretty(w, &log.summary())?)))
        .and_then(|_| {
            write_file(&out.join("report.json"), |w| {
                Ok(serde_json::to_writer_pretty(w, &report_json(&log, certs.as_ref(), passed))?)
            })
        })
        .and_then(|_| fs::write(out.join("manifest.cfg"), to_manifest(&cfg)));
    if let Err(e) = written {
        return usage_error(format!("{}: {e}", out.display()));
    }

    let s = log.summary();
    println!("mode            {}", s.mode);
    println!("outcome         {}", serde_json::to_string(&s.outcome).unwrap_or_default());
    println!("final time      {:.3} s", s.final_time);
    println!("final |e|       {:.3e}", s.final_error_norm);
    println!("final set dist  {:.3e}", s.final_set_distance);
    println!("min lambda_y    {:.4}", s.min_lambda_y);
    println!("switch events   {}", s.diagnostics.switch_events);
    if let Some(r) = &certs {
        println!("window max |e|  {:.4} (bound {:.4})", r.window_max_error, r.ultimate_bound);
        let failed = r.failures();
        if failed.is_empty() {
            println!("certificates    all pass");
        } else {
            println!("certificates    failed: {}", failed.join(", "));
        }
    }
    eprintln!("runtime {:.3} s, artifacts in {}", elapsed.as_secs_f64(), out.display());
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

struct SweepRow {
    value: f64,
    outcome: Outcome,
    window_max_error: f64,
    bound: f64,
    terminal_set_distance: f64,
}

fn sweep_one(base: &SimConfig, model: &VehicleModel, param: &str, value: f64) -> Result<SweepRow, String> {
    let mut c = config::with_param(base, param, value).map_err(|e| e.to_string())?;
    c.mode = Mode::Put;
    let log = sim::run(&c).map_err(|e| e.to_string())?;
    let r = certify(&log, model).map_err(|e| e.to_string())?;
    Ok(SweepRow {
        value,
        outcome: log.outcome,
        window_max_error: r.window_max_error,
        bound: r.ultimate_bound,
        terminal_set_distance: r.terminal_set_distance,
    })
}

fn sweep(config: Option<&Path>, param: &str, values: &str) -> ExitCode {
    if !SWEEP_PARAMS.contains(&param) {
        return usage_error(format!("unknown parameter `{param}`, expected one of {}", SWEEP_PARAMS.join(", ")));
    }
    let base = match load(config) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    let model = match VehicleModel::by_name(&base.model) {
        Ok(m) => m,
        Err(e) => return usage_error(e),
    };
    let mut list = Vec::new();
    for item in values.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match parse_value(item) {
            Some(v) => list.push(v),
            None => return usage_error(format!("`{item}` is not a number")),
        }
    }
    if list.is_empty() {
        return usage_error("empty value list");
    }
    for &v in &list {
        if let Err(e) = config::with_param(&base, param, v) {
            return usage_error(e);
        }
    }

    // par_iter keeps the input order when collecting
    let rows: Vec<Result<SweepRow, String>> = list.par_iter().map(|&v| sweep_one(&base, &model, param, v)).collect();

    println!("{param:>12}  {:>10}  {:>14}  {:>12}  {:>12}", "outcome", "window max|e|", "bound", "set dist");
    let mut ok = true;
    let mut prev: Option<f64> = None;
    let mut monotone = true;
    for (v, row) in list.iter().zip(rows) {
        match row {
            Ok(r) => {
                let completed = r.outcome.is_completed();
                let within = r.window_max_error <= r.bound;
                ok &= completed && within;
                if let Some(p) = prev {
                    monotone &= r.window_max_error >= p;
                }
                prev = Some(r.window_max_error);
                let status = if completed { "completed" } else { "aborted" };
                println!(
                    "{:>12.6}  {status:>10}  {:>14.6e}  {:>12.6}  {:>12.3e}{}",
                    r.value,
                    r.window_max_error,
                    r.bound,
                    r.terminal_set_distance,
                    if within { "" } else { "  over bound" }
                );
            }
            Err(e) => {
                ok = false;
                println!("{v:>12.6}  error: {e}");
            }
        }
    }
    if param == "r" {
        let sorted = list.windows(2).all(|w| w[0] <= w[1]);
        if sorted {
            println!("window error nondecreasing in r: {}", if monotone { "yes" } else { "no" });
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

fn validate(suite: &str, seed: u64, config: Option<&Path>, fault: Option<FaultArg>) -> ExitCode {
    let suite: Suite = match suite.parse() {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    let cfg = match load(config) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    let faults = match fault {
        Some(FaultArg::ThetaStar) => Faults { theta_star_offset: 0.05 },
        None => Faults::default(),
    };
    let started = Instant::now();
    let report = run_suites(suite, seed, &cfg, &faults);
    for r in &report.results {
        println!("{r}");
    }
    let failed = report.results.iter().filter(|r| !r.passed).count();
    println!(
        "{} of {} properties passed (seed {seed}, {:.2} s)",
        report.results.len() - failed,
        report.results.len(),
        started.elapsed().as_secs_f64()
    );
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Simulate { config, mode, out } => simulate(config.as_deref(), mode, &out),
        Command::Sweep { config, param, values } => sweep(config.as_deref(), &param, &values),
        Command::Validate {
            suite,
            seed,
            config,
            inject_fault,
        } => validate(&suite, seed, config.as_deref(), inject_fault),
    }
}
