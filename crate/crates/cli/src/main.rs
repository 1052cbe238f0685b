use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridbench_core::campaign::{
    emit_report, parse_config, run_campaign, Backend, CampaignConfig, Phase, ReportFormat, Scenario,
    DEFAULT_FORMATS,
};
use gridbench_core::radio::{
    coverage_grid, read_metric_csv, validate_metric_series, write_raster_csv, ViolationKind,
    DEFAULT_N_PRB,
};

const SEED_ENV: &str = "GRIDBENCH_SEED";

#[derive(Parser)]
#[command(name = "gridbench", version, about = "Microgrid radio-link test campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write its report files.
    Run {
        config: PathBuf,
        #[arg(long)]
        backend: Option<Backend>,
        #[arg(long)]
        scenario: Option<Scenario>,
        /// Overrides GRIDBENCH_SEED and the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "gridbench-out")]
        out: PathBuf,
        /// Comma-separated subset of t,e,a (throughput, echo, application).
        #[arg(long, value_delimiter = ',', value_parser = parse_phase)]
        phases: Option<Vec<Phase>>,
        /// Also write coverage.csv and, on the virtual backend, trace.csv.
        #[arg(long)]
        extras: bool,
    },
    /// Write the downlink SINR raster of the configured area.
    Coverage {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a radio metric log for RSRP/RSSI/RSRQ inconsistencies.
    ValidateMetrics {
        csv: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_PRB)]
        n_prb: u32,
    },
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    Phase::from_letter(s.trim()).ok_or_else(|| format!("unknown phase {s:?}; use t, e or a"))
}

enum Failure {
    /// Ran to completion but a declared threshold or check failed.
    Violated,
    Error(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.to_string())
    }
}

fn load(path: &Path) -> Result<CampaignConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Error(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Failure::Error(format!("{SEED_ENV}: {e}"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: &Path,
    backend: Option<Backend>,
    scenario: Option<Scenario>,
    seed: Option<u64>,
    out: &Path,
    phases: Option<Vec<Phase>>,
    extras: bool,
) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(s) = seed.or(env_seed()?) {
        cfg.seed = s;
    }
    if let Some(b) = backend {
        cfg.backend = b;
    }
    if let Some(s) = scenario {
        cfg.scenario = s;
    }
    if let Some(p) = phases {
        cfg.phases = p;
    }
    if extras {
        cfg.trace = cfg.backend == Backend::Virtual;
    }
    cfg.validate()?;

    let report = run_campaign(&cfg)?;
    let mut formats = DEFAULT_FORMATS.to_vec();
    if extras {
        formats.extend([ReportFormat::Coverage, ReportFormat::Trace]);
    }
    let files = emit_report(&report, out, &formats)?;
    print!("{}", fs::read_to_string(out.join(ReportFormat::Summary.file_name()))?);
    eprintln!(
        "wrote {} files to {} in {:.2} s",
        files.len(),
        out.display(),
        report.wall_runtime.as_secs_f64()
    );
    if report.passed() {
        Ok(())
    } else {
        for c in report.checks.iter().filter(|c| !c.passed) {
            eprintln!("threshold violated: {} (limit {})", c.name, c.limit);
        }
        Err(Failure::Violated)
    }
}

fn coverage(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load(config)?;
    let raster = coverage_grid(&cfg.hub_radio(), &cfg.node_radios(), &cfg.radio.budget, &cfg.radio.raster)?;
    let file = File::create(out).map_err(|e| format!("{}: {e}", out.display()))?;
    write_raster_csv(BufWriter::new(file), &raster)?;
    eprintln!("{} x {} cells written to {}", raster.columns, raster.rows, out.display());
    for p in &raster.points {
        println!(
            "{:<12} {:>8.1} m  {:>8.2} dBm  {:>7.2} dB  {}",
            p.name,
            p.distance_m,
            p.prx_dbm,
            p.sinr_db,
            p.class.as_str()
        );
    }
    Ok(())
}

fn validate_metrics(csv: &Path, n_prb: u32) -> Result<(), Failure> {
    let file = File::open(csv).map_err(|e| format!("{}: {e}", csv.display()))?;
    let samples = read_metric_csv(file)?;
    let violations = validate_metric_series(&samples, n_prb);
    for v in &violations {
        match v.kind {
            ViolationKind::RsrpAboveRssi { excess_db } => {
                println!("row {} t={}: RSRP exceeds RSSI by {excess_db:.2} dB", v.index, v.t_s)
            }
            ViolationKind::RsrqIdentity { deviation_db } => {
                println!("row {} t={}: RSRQ off by {deviation_db:+.2} dB", v.index, v.t_s)
            }
        }
    }
    eprintln!("{} samples, {} violations", samples.len(), violations.len());
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violated)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            backend,
            scenario,
            seed,
            out,
            phases,
            extras,
        } => run(&config, backend, scenario, seed, &out, phases, extras),
        Command::Coverage { config, out } => coverage(&config, &out),
        Command::ValidateMetrics { csv, n_prb } => validate_metrics(&csv, n_prb),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violated) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
