mod commands;
mod manifest;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "darkspec", version, about = "Magnetically driven singlet-triplet 2D spectroscopy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Config file of `key = value` lines, applied on top of the preset
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in parameter set: resonant, offresonant or paper2d
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads, 0 = all cores (falls back to DARKSPEC_THREADS)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the config seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Ensemble-averaged spin populations after exciting the singlet
    Dynamics {
        #[command(flatten)]
        common: Common,
        /// Also write the spin Hamiltonian at this time (fs), without hyperfine offsets
        #[arg(long, value_name = "T_FS")]
        dump_hamiltonian: Option<f64>,
    },
    /// Time-domain third-order response, rephasing and non-rephasing
    Response {
        #[command(flatten)]
        common: Common,
        /// Population time in fs, overriding the config
        #[arg(long)]
        t2: Option<f64>,
        /// Write CSV copies of the binary grids
        #[arg(long)]
        csv: bool,
    },
    /// Linear absorption spectrum
    Absorption {
        #[command(flatten)]
        common: Common,
    },
    /// Pump-probe spectrum at one population time
    Pumpprobe {
        #[command(flatten)]
        common: Common,
        /// Population time in fs, overriding the config
        #[arg(long)]
        t2: Option<f64>,
    },
    /// 2D spectrum at one population time or a range start:stop:step
    #[command(name = "2dmap")]
    Map2d {
        #[command(flatten)]
        common: Common,
        /// Population time in fs, or start:stop:step for a movie
        #[arg(long)]
        t2: Option<String>,
        /// total, rephasing or nonrephasing
        #[arg(long, default_value = "total")]
        kind: String,
        /// Energy window lo:hi in meV applied to both axes
        #[arg(long)]
        window: Option<String>,
        /// For ranges, also write CSV and PPM for every frame
        #[arg(long)]
        all_formats: bool,
    },
    /// Recover bare energies from a series of 2D maps
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Map files (.dspc) or directories containing them
        #[arg(long, num_args = 1.., required = true)]
        maps: Vec<PathBuf>,
        /// Population time (fs) of the frame used to pick diagonal peaks
        #[arg(long)]
        reference_t2: Option<f64>,
        /// Peak threshold as a fraction of the frame maximum
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the built-in invariant checks
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

/// Bad flags, config or inputs; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = match &cli.command {
        Command::Dynamics { common, .. }
        | Command::Response { common, .. }
        | Command::Absorption { common }
        | Command::Pumpprobe { common, .. }
        | Command::Map2d { common, .. }
        | Command::Reconstruct { common, .. }
        | Command::Selftest { common } => common.out.clone(),
    };
    let result = match cli.command {
        Command::Dynamics { common, dump_hamiltonian } => commands::dynamics(&common, dump_hamiltonian),
        Command::Response { common, t2, csv } => commands::response(&common, t2, csv),
        Command::Absorption { common } => commands::absorption_cmd(&common),
        Command::Pumpprobe { common, t2 } => commands::pumpprobe(&common, t2),
        Command::Map2d { common, t2, kind, window, all_formats } => {
            commands::map2d(&common, t2.as_deref(), &kind, window.as_deref(), all_formats)
        }
        Command::Reconstruct { common, maps, reference_t2, threshold } => {
            commands::reconstruct(&common, &maps, reference_t2, threshold)
        }
        Command::Selftest { common } => selftest::run(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_usage(&e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let path = out_dir.join("diagnostic.txt");
            if std::fs::create_dir_all(&out_dir).is_ok() && std::fs::write(&path, format!("{e:#}\n")).is_ok() {
                eprintln!("diagnostic written to {}", path.display());
            }
            ExitCode::from(1)
        }
    }
}

fn is_usage(e: &anyhow::Error) -> bool {
    if e.downcast_ref::<UsageError>().is_some() {
        return true;
    }
    matches!(
        e.downcast_ref::<darkspec::Error>(),
        Some(darkspec::Error::Config(_) | darkspec::Error::Parse { .. } | darkspec::Error::Format(_))
    )
}
