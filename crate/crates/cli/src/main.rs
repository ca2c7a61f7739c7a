//! Command-line driver: distance/noise sweeps with CSV + SVG emission, single
//! protocol sessions with transcript and key output, and excess-noise
//! threshold queries.
//!
//! Exit codes: 0 when every requested cell computed (rates may still be
//! non-positive), 1 for configuration errors, 2 for runtime failures.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use cvqkd_core::channel::{transmission_from_distance, ChannelParams};
use cvqkd_core::error::Error as CoreError;
use cvqkd_core::keyrate::xi_threshold;
use cvqkd_core::session::{pack_bits_bytes, run_session, SessionConfig};
use cvqkd_core::sweep::{emit_outputs, run_sweep, to_csv, SweepConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "Gaussian coherent-state key distribution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep distances and excess-noise values; emit CSV/SVG/metadata.
    Sweep(SweepArgs),
    /// Run one full protocol session.
    Session(SessionArgs),
    /// Locate the largest tolerable excess noise.
    Threshold(ThresholdArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Distances in km (comma separated).
    #[arg(long = "distance-km", value_delimiter = ',', num_args = 1..)]
    distance_km: Option<Vec<f64>>,
    /// Excess-noise values (comma separated).
    #[arg(long = "xi", value_delimiter = ',', num_args = 1..)]
    xi: Option<Vec<f64>>,
    /// Modulation variance V_A in shot-noise units.
    #[arg(long)]
    va: Option<f64>,
    /// Pulses per Monte-Carlo cell.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Post-selection BER cut.
    #[arg(long = "ber-cut")]
    ber_cut: Option<f64>,
    /// BER bin width for grouping.
    #[arg(long = "bin-width")]
    bin_width: Option<f64>,
    /// Error-correction inefficiency (>= 1).
    #[arg(long = "fec")]
    f_ec: Option<f64>,
    /// Fiber attenuation in dB/km.
    #[arg(long = "atten-db-km")]
    atten_db_km: Option<f64>,
    /// analytic, monte-carlo, or both.
    #[arg(long)]
    mode: Option<String>,
    /// Output path prefix; without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long = "distance-km")]
    distance_km: f64,
    #[arg(long, default_value_t = 0.0)]
    xi: f64,
    #[arg(long, default_value_t = 500.0)]
    va: f64,
    /// Total pulses, calibration included.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "atten-db-km", default_value_t = 0.2)]
    atten_db_km: f64,
    #[arg(long = "calibration-fraction", default_value_t = 0.1)]
    calibration_fraction: f64,
    #[arg(long = "fec", default_value_t = 1.0)]
    f_ec: f64,
    /// Output prefix for transcript and key files.
    #[arg(long)]
    out: Option<String>,
    /// Also write a human-readable transcript dump.
    #[arg(long, default_value_t = false)]
    dump: bool,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Reconciliation efficiency in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Channel transmission G; alternative to --distance-km.
    #[arg(long, conflicts_with = "distance_km")]
    transmission: Option<f64>,
    #[arg(long = "distance-km")]
    distance_km: Option<f64>,
    #[arg(long = "atten-db-km", default_value_t = 0.2)]
    atten_db_km: f64,
    #[arg(long, default_value_t = 500.0)]
    va: f64,
    /// Upper end of the search bracket.
    #[arg(long = "xi-max", default_value_t = 0.5)]
    xi_max: f64,
}

enum AppError {
    Config(String),
    Runtime(String),
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(_) | CoreError::Domain { .. } => {
                AppError::Config(e.to_string())
            }
            other => AppError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::Session(args) => cmd_session(args),
        Command::Threshold(args) => cmd_threshold(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), AppError> {
    let mut config = match &args.config {
        Some(path) => SweepConfig::load(path)?,
        None => SweepConfig::default(),
    };
    if let Some(v) = args.distance_km {
        config.distances_km = v;
    }
    if let Some(v) = args.xi {
        config.xi_values = v;
    }
    if let Some(v) = args.va {
        config.modulation_variance = v;
    }
    if let Some(v) = args.samples {
        config.samples = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.ber_cut {
        config.ber_cut = v;
    }
    if let Some(v) = args.bin_width {
        config.ber_bin_width = v;
    }
    if let Some(v) = args.f_ec {
        config.f_ec = v;
    }
    if let Some(v) = args.atten_db_km {
        config.attenuation_db_per_km = v;
    }
    if let Some(v) = &args.mode {
        config.mode = v.parse()?;
    }
    if let Some(v) = args.out {
        config.out = Some(v);
    }
    config.validate()?;

    eprintln!(
        "sweep: {} distances x {} xi values, mode {:?}, samples {}, seed {}",
        config.distances_km.len(),
        config.xi_values.len(),
        config.mode,
        config.samples,
        config.seed
    );
    let table = run_sweep(&config)?;
    for row in &table.rows {
        if let Some(err) = &row.error {
            eprintln!(
                "cell L={} km xi={} ({:?}): {err}",
                row.distance_km, row.xi, row.mode
            );
        }
    }
    if config.out.is_some() {
        let paths = emit_outputs(&table, &config)?;
        eprintln!(
            "wrote {}, {}, {}",
            paths.csv.display(),
            paths.svg.display(),
            paths.metadata.display()
        );
    } else {
        print!("{}", to_csv(&table, &config));
    }
    if table.all_computed() {
        Ok(())
    } else {
        Err(AppError::Runtime("some sweep cells failed".to_string()))
    }
}

fn cmd_session(args: SessionArgs) -> Result<(), AppError> {
    let params = ChannelParams::from_distance(args.distance_km, args.atten_db_km, args.xi, args.va)?;
    let mut config = SessionConfig::new(params, args.samples, args.seed);
    config.calibration_fraction = args.calibration_fraction;
    config.f_ec = args.f_ec;
    let result = run_session(&config).map_err(|e| AppError::Runtime(e.to_string()))?;
    println!(
        "session: L={} km (G={:.6e}, loss {:.2} dB), xi={}, V_A={}, {} pulses ({} calibration), seed {}",
        args.distance_km,
        params.transmission,
        params.loss_db(),
        args.xi,
        args.va,
        args.samples,
        result.calibration_pulses,
        args.seed
    );
    println!(
        "estimates: G_hat={:.6e}, xi_hat={:.4e}; normality pass={} (skew z {:.2}, kurtosis z {:.2})",
        result.estimated_transmission,
        result.estimated_excess_noise,
        result.normality.pass,
        result.normality.skew_z,
        result.normality.kurtosis_z
    );
    println!(
        "kept {} of {} key pulses ({:.2}%), {} groups, mean BER {:.4}",
        result.kept,
        result.n,
        100.0 * result.kept as f64 / result.n as f64,
        result.report.groups.len(),
        result.report.mean_ber_ab
    );
    println!(
        "practical rate {:.6e} bits/pulse (theoretical {:.6e}, efficiency {})",
        result.report.practical_rate,
        result.report.theoretical_rate,
        result
            .report
            .efficiency
            .map(|e| format!("{e:.4}"))
            .unwrap_or_else(|| "n/a".to_string())
    );
    println!(
        "leaked {:.1} bits to error correction; final key {} bits ({:.6e} bits/pulse)",
        result.leaked_bits,
        result.final_key.len(),
        result.final_key_rate
    );
    println!("key digest sha256 {}", result.key_digest_hex);
    if let Some(prefix) = args.out {
        write(&format!("{prefix}.transcript.bin"), &result.transcript.encode())?;
        write(&format!("{prefix}.key"), &pack_bits_bytes(&result.final_key))?;
        write(
            &format!("{prefix}.key.sha256"),
            format!("{}\n", result.key_digest_hex).as_bytes(),
        )?;
        if args.dump {
            write(
                &format!("{prefix}.transcript.txt"),
                result.transcript.dump().as_bytes(),
            )?;
        }
        println!("wrote {prefix}.transcript.bin, {prefix}.key, {prefix}.key.sha256");
    }
    Ok(())
}

fn write(path: &str, bytes: &[u8]) -> Result<(), AppError> {
    std::fs::write(path, bytes).map_err(|e| AppError::Runtime(format!("i/o error on {path}: {e}")))
}

fn cmd_threshold(args: ThresholdArgs) -> Result<(), AppError> {
    let transmission = match (args.transmission, args.distance_km) {
        (Some(g), _) => g,
        (None, Some(l)) => transmission_from_distance(l, args.atten_db_km)?,
        (None, None) => {
            return Err(AppError::Config(
                "need --transmission or --distance-km".to_string(),
            ))
        }
    };
    match xi_threshold(args.gamma, transmission, args.va, args.xi_max) {
        Ok(xi) => {
            println!(
                "xi threshold at G={transmission:.6e}, V_A={}, gamma={}: {xi:.6}",
                args.va, args.gamma
            );
            Ok(())
        }
        Err(CoreError::NoRoot { f_lo, f_hi, .. }) => {
            println!(
                "no threshold below xi={}: rate stays {} on the whole bracket (f({:.1e})={:.3e}, f({})={:.3e})",
                args.xi_max,
                if f_lo > 0.0 { "positive" } else { "negative" },
                1e-9,
                f_lo,
                args.xi_max,
                f_hi
            );
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}
