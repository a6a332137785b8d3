use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use afrelay::experiment::{run_experiment, write_csv_to, Case, DeltaMode, ExperimentConfig};
use afrelay::relay::SourceMode;
use afrelay::Error;
use clap::error::ErrorKind;
use clap::Parser;

/// Monte Carlo sum-rate sweeps for amplify-and-forward relaying over
/// orthogonal subchannels. Writes one CSV row per (SNR, case).
#[derive(Parser, Debug)]
#[command(name = "afrelay", version)]
struct Cli {
    /// Comma-separated subset of 1,2,3,4,asym.
    #[arg(long, default_value = "1,2", value_parser = parse_cases)]
    cases: CaseList,

    /// Number of subchannels.
    #[arg(long, default_value_t = 20)]
    n: usize,

    /// Relay-to-source power ratio.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,

    /// Total SNR sweep in dB, START:STEP:STOP (inclusive) or a single value.
    #[arg(long = "snr-db", default_value = "0:2:40", value_parser = parse_snr_range)]
    snr_db: SnrRange,

    /// Fading variance on both hops.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,

    #[arg(long, default_value_t = 2000)]
    trials: usize,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Rate back-off of the relay-side cases: `auto` or a value in (0, 1).
    #[arg(long, default_value = "auto", value_parser = parse_delta)]
    delta: DeltaMode,

    /// Grid step of the `auto` back-off search.
    #[arg(long, default_value_t = 0.02)]
    delta_step: f64,

    /// Draws used by the `auto` back-off search at each SNR point.
    #[arg(long, default_value_t = 1000)]
    calibration_trials: usize,

    /// Source power split of the relay-side cases.
    #[arg(long = "source-alloc", default_value = "equal", value_parser = parse_source_mode)]
    source_alloc: SourceMode,

    /// Worker threads; 0 uses every core. The output does not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct CaseList(Vec<Case>);

#[derive(Clone, Debug)]
struct SnrRange(Vec<f64>);

fn parse_cases(s: &str) -> Result<CaseList, String> {
    s.split(',')
        .map(|c| c.trim().parse::<Case>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map(CaseList)
}

fn parse_snr_range(s: &str) -> Result<SnrRange, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("not a number: {t:?}"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [one] => Ok(SnrRange(vec![num(one)?])),
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
                return Err("expected START:STEP:STOP with STEP > 0 and STOP >= START".into());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok(SnrRange(
                (0..count).map(|k| start + k as f64 * step).collect(),
            ))
        }
        _ => Err("expected START:STEP:STOP or a single value".into()),
    }
}

fn parse_delta(s: &str) -> Result<DeltaMode, String> {
    if s == "auto" {
        return Ok(DeltaMode::Optimized);
    }
    match s.parse::<f64>() {
        Ok(d) if d > 0.0 && d < 1.0 => Ok(DeltaMode::Fixed(d)),
        _ => Err(format!("expected auto or a value in (0, 1), got {s:?}")),
    }
}

fn parse_source_mode(s: &str) -> Result<SourceMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    let cfg = ExperimentConfig {
        cases: cli.cases.0,
        n: cli.n,
        tau: cli.tau,
        snr_db: cli.snr_db.0,
        sigma2: cli.sigma2,
        trials: cli.trials,
        master_seed: cli.seed,
        delta_mode: cli.delta,
        source_mode: cli.source_alloc,
        delta_step: cli.delta_step,
        calibration_trials: cli.calibration_trials,
        ..Default::default()
    };
    cfg.validate().map_err(|e| (2, e.to_string()))?;
    // Open the output before the sweep so a bad path fails fast.
    let out: Box<dyn Write> = match &cli.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| (1, format!("cannot write {}: {e}", path.display())))?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(io::stdout().lock()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| (1, e.to_string()))?;
    let curve = pool
        .install(|| run_experiment(&cfg))
        .map_err(|e| (2, e.to_string()))?;
    write_csv_to(&curve, out).map_err(|e| (1, format!("cannot write output: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", line.trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
