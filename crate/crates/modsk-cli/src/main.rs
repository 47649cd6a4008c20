//! Command-line front end for the Schalkwijk-Kailath / Modulo-SK
//! simulator. Each subcommand reproduces one family of reference curves
//! and emits a CSV plus a metadata sidecar that can replay the run.

use clap::{Args, Parser, Subcommand};
use modsk_cli::config::{CommandKind, ConfigOverlay, ExperimentConfig};
use modsk_cli::{run_to_files, sidecar_path};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "modsk",
    version,
    about = "Schalkwijk-Kailath and Modulo-SK feedback coding simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BER vs. feedback SNR for Modulo-SK at fixed forward SNR, with the
    /// analytical upper bound and no-feedback converse floors.
    FbSweep(RunArgs),
    /// BER vs. forward SNR for Modulo-SK at fixed feedback SNR, one curve
    /// per round count.
    FfSweep(RunArgs),
    /// BER vs. forward SNR for classical SK with noiseless feedback,
    /// with the effective-SNR prediction column.
    SkCurves(RunArgs),
    /// Analytical curves only, no simulation.
    Bounds(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Code rate, e.g. 1/3.
    #[arg(long)]
    rate: Option<String>,
    /// Information bits per message (must equal rate * n_rounds).
    #[arg(long)]
    k_bits: Option<u32>,
    /// Communication rounds per message.
    #[arg(long)]
    n_rounds: Option<u32>,
    /// Feedforward SNR in dB.
    #[arg(long, allow_negative_numbers = true)]
    forward_snr_db: Option<f64>,
    /// Feedback SNR in dB, or "noiseless".
    #[arg(long, allow_hyphen_values = true)]
    feedback_snr_db: Option<String>,
    /// Common-randomness dither on the feedback transmission.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dither: Option<bool>,
    /// No-wrap margin, or "auto" for the bound-minimizing grid search.
    #[arg(long)]
    kappa: Option<String>,
    /// Base seed; every reported number is a pure function of it.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial cap per grid point.
    #[arg(long)]
    max_trials: Option<u64>,
    /// Stop a point once this many symbol errors are collected.
    #[arg(long)]
    target_errors: Option<u64>,
    /// Campaigns never grow past the size resolving this BER.
    #[arg(long)]
    ber_floor: Option<f64>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Abscissa grid: start:stop:step or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Round counts for ff-sweep curves, comma separated.
    #[arg(long)]
    n_rounds_list: Option<String>,
    /// k:n pairs for sk-curves, comma separated.
    #[arg(long)]
    pairs: Option<String>,
    /// Output CSV path; the sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn overlay(&self) -> ConfigOverlay {
        ConfigOverlay {
            scheme: None,
            rate: self.rate.clone(),
            k_bits: self.k_bits,
            n_rounds: self.n_rounds,
            forward_snr_db: self.forward_snr_db,
            feedback_snr_db: self.feedback_snr_db.clone(),
            dither: self.dither,
            kappa: self.kappa.clone(),
            seed: self.seed,
            max_trials: self.max_trials,
            target_errors: self.target_errors,
            ber_floor: self.ber_floor,
            workers: self.workers,
            grid: self.grid.clone(),
            n_rounds_list: self.n_rounds_list.clone(),
            pairs: self.pairs.clone(),
        }
    }
}

fn run(kind: CommandKind, args: &RunArgs) -> Result<(), String> {
    let mut overlay = args.overlay();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let from_file =
            ConfigOverlay::from_file_text(&text, kind).map_err(|e| e.to_string())?;
        overlay = overlay.merged_over(from_file);
    }
    let cfg = ExperimentConfig::resolve(kind, &overlay).map_err(|e| e.to_string())?;
    run_to_files(&cfg, &args.out).map_err(|e| e.to_string())?;
    println!(
        "wrote {} and {}",
        args.out.display(),
        sidecar_path(&args.out).display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::FbSweep(args) => run(CommandKind::FbSweep, args),
        Command::FfSweep(args) => run(CommandKind::FfSweep, args),
        Command::SkCurves(args) => run(CommandKind::SkCurves, args),
        Command::Bounds(args) => run(CommandKind::Bounds, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
