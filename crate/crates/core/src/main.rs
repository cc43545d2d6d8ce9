use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mudsim::channel::{rayleigh_trace, trace_statistics};
use mudsim::harness::sweep::{stream_rng, FADING_STREAM};
use mudsim::harness::{
    config::DEFAULT_STAGES, dump_records, parse_config, parse_receiver, run_sweep, trial_seed, version_tag,
    write_outputs, SimConfig,
};
use mudsim::sequences::{correlation_matrix, default_preferred_pair, gold_family};
use mudsim::{Error, Result};

#[derive(Parser)]
#[command(name = "mudsim", about = "DS-CDMA multiuser detection Monte-Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an Eb/N0 sweep and write metrics, diagnostics and manifest files.
    Run {
        /// Configuration file of `key = value` lines; options below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated Eb/N0 points in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        ebno_db: Option<Vec<f64>>,
        /// Comma-separated receivers, e.g. `mf,sic,pic:3`.
        #[arg(long)]
        receivers: Option<String>,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Symbols per trial.
        #[arg(long)]
        symbols: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Metrics CSV path; sidecar files are written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        workers: Option<usize>,
        /// Also write every detection record of trial 0 (single Eb/N0 point only).
        #[arg(long)]
        dump_records: Option<PathBuf>,
    },
    /// Print a Gold code family as CSV, or its zero-lag correlation matrix.
    Codes {
        /// LFSR degree; the codes have `2^degree - 1` chips.
        #[arg(long, default_value_t = 5)]
        degree: u32,
        /// Print `N * rho` for every code pair instead of the chips.
        #[arg(long)]
        matrix: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate one fading trace and compare its statistics with the Rayleigh/Clarke model.
    FadingCheck {
        /// Normalized Doppler frequency.
        #[arg(long, default_value_t = 0.003)]
        fd_tb: f64,
        #[arg(long, default_value_t = 200_000)]
        symbols: usize,
        #[arg(long, default_value_t = SimConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
        /// Exit nonzero if any check fails.
        #[arg(long)]
        strict: bool,
        /// Write the trace as CSV (m, re, im, magnitude).
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Print the version tag recorded in run manifests.
    Version,
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: Option<PathBuf>,
    ebno_db: Option<Vec<f64>>,
    receivers: Option<String>,
    seed: Option<u64>,
    symbols: Option<usize>,
    trials: Option<usize>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    dump: Option<PathBuf>,
) -> Result<bool> {
    let mut cfg = match &config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => SimConfig::default(),
    };
    if let Some(v) = ebno_db {
        cfg.ebno_db = v;
    }
    if let Some(list) = receivers {
        cfg.receivers = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_receiver(s, DEFAULT_STAGES))
            .collect::<std::result::Result<_, _>>()
            .map_err(Error::InvalidParameter)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = symbols {
        cfg.symbols = m;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(o) = out {
        cfg.output = o;
    }
    cfg.validate()?;
    if dump.is_some() && cfg.ebno_db.len() != 1 {
        return Err(Error::InvalidParameter(
            "--dump-records needs exactly one Eb/N0 point".into(),
        ));
    }
    let workers = workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
        .max(1);

    let result = run_sweep(&cfg, workers)?;
    let paths = write_outputs(&result, &cfg.output)?;
    if let Some(path) = dump {
        let mut w = BufWriter::new(File::create(&path)?);
        dump_records(&cfg, cfg.ebno_db[0], 0, &mut w)?;
        w.flush()?;
        eprintln!("records: {}", path.display());
    }
    print!("{}", result.metrics_csv());
    for p in &paths {
        eprintln!("wrote {}", p.display());
    }
    let mut ok = true;
    for d in &result.diagnostics {
        if d.diverged_trials > 0 {
            eprintln!(
                "warning: {} stage {} at {} dB: {} of {} trials diverged{}",
                d.receiver,
                d.stage,
                d.ebno_db,
                d.diverged_trials,
                cfg.trials,
                if d.valid { "" } else { " (cell invalid)" }
            );
            ok &= d.valid;
        }
    }
    for r in &result.rows {
        if r.sinr_mean.is_infinite() {
            eprintln!(
                "warning: {} stage {} at {} dB has zero residual for every user",
                r.receiver, r.stage, r.ebno_db
            );
        }
    }
    Ok(ok)
}

fn codes(degree: u32, matrix: bool, out: Option<PathBuf>) -> Result<()> {
    let family = gold_family(degree, default_preferred_pair(degree)?)?;
    let mut w = output(out.as_ref())?;
    let n = family.spreading_factor();
    if matrix {
        let rho = correlation_matrix(family.codes())?;
        let header: Vec<String> = (0..family.len()).map(|j| format!("code_{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in rho {
            let cells: Vec<String> = row
                .iter()
                .map(|r| format!("{}", (r * n as f64).round() as i64))
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
    } else {
        let header: Vec<String> = (0..n).map(|i| format!("chip_{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for code in family.codes() {
            let cells: Vec<String> = code.signs().iter().map(ToString::to_string).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fading_check(fd_tb: f64, symbols: usize, seed: u64, max_lag: usize, trace_out: Option<PathBuf>) -> Result<bool> {
    let mut rng = stream_rng(trial_seed(seed, 0), FADING_STREAM);
    let trace = rayleigh_trace(0, symbols, fd_tb, &mut rng)?;
    let stats = trace_statistics(&trace, max_lag);
    let checks = [
        (
            "variance of beta (E|beta|^2)",
            stats.power,
            "within 1 +/- 0.05",
            (stats.power - 1.0).abs() <= 0.05,
        ),
        (
            "variance of |beta|^2",
            stats.power_variance,
            "within 1 +/- 0.05",
            (stats.power_variance - 1.0).abs() <= 0.05,
        ),
        (
            "max |R(tau) - J0(2 pi fd tau)|",
            stats.max_autocorrelation_error,
            "<= 0.05",
            stats.max_autocorrelation_error <= 0.05,
        ),
        (
            "KS distance from Rayleigh",
            stats.ks_rayleigh,
            "< 0.01",
            stats.ks_rayleigh < 0.01,
        ),
    ];
    println!("fd_tb = {fd_tb}, symbols = {symbols}, seed = {seed}, lags <= {max_lag}");
    for (name, value, bound, ok) in &checks {
        println!(
            "{name:<34} {value:>10.6}  {bound:<18} {}",
            if *ok { "PASS" } else { "FAIL" }
        );
    }
    println!("{:<34} {:>10.6}", "|mean of beta|", stats.mean.norm());
    if let Some(path) = trace_out {
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "m,re,im,magnitude")?;
        for (m, g) in trace.gains.iter().enumerate() {
            writeln!(w, "{m},{:.12e},{:.12e},{:.12e}", g.re, g.im, g.norm())?;
        }
        w.flush()?;
    }
    Ok(checks.iter().all(|c| c.3))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            ebno_db,
            receivers,
            seed,
            symbols,
            trials,
            out,
            workers,
            dump_records,
        } => run(
            config,
            ebno_db,
            receivers,
            seed,
            symbols,
            trials,
            out,
            workers,
            dump_records,
        ),
        Command::Codes { degree, matrix, out } => codes(degree, matrix, out).map(|()| true),
        Command::FadingCheck {
            fd_tb,
            symbols,
            seed,
            max_lag,
            strict,
            trace_out,
        } => fading_check(fd_tb, symbols, seed, max_lag, trace_out).map(|ok| ok || !strict),
        Command::Version => {
            println!("{}", version_tag());
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
