use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adapcomfl_cli::{cmd_compare, cmd_gen_traces, cmd_simulate, GenTracesArgs};

/// Bandwidth-adaptive sketch-compressed federated learning simulator.
#[derive(Parser)]
#[command(name = "adapcomfl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv + summary.json.
    Simulate {
        /// TOML experiment config; an empty file runs the defaults.
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic bandwidth traces as CSV.
    GenTraces {
        #[arg(long)]
        clients: u32,
        /// Trace length in seconds (1 Hz sampling).
        #[arg(long)]
        duration: u64,
        #[arg(long)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Base bandwidth level, MB/s.
        #[arg(long, default_value_t = 2.0)]
        base: f64,
        /// Amplitude of the slow daily sinusoid, MB/s.
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// Stationary AR(1) noise level, MB/s.
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        /// Per-second probability of a multiplicative regime shift.
        #[arg(long = "shift-prob", default_value_t = 0.002)]
        shift_prob: f64,
    },
    /// Run adapcomfl, sketchfl, and fedavg on one config and compare.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, out } => cmd_simulate(&config, &out).map(|summary| {
            println!("wrote {}", out.join("metrics.csv").display());
            println!("wrote {}", out.join("summary.json").display());
            println!(
                "final_accuracy_pct={} mean_cr={}",
                summary.final_accuracy_pct, summary.mean_compression_ratio
            );
        }),
        Command::GenTraces { clients, duration, seed, out, base, amplitude, noise, shift_prob } => {
            let args = GenTracesArgs {
                clients,
                duration_s: duration,
                seed,
                base_bw_mbps: base,
                daily_amplitude_mbps: amplitude,
                noise_std_mbps: noise,
                regime_shift_prob: shift_prob,
            };
            cmd_gen_traces(&args, &out).map(|rows| {
                println!("wrote {} ({rows} samples, {clients} clients)", out.display());
            })
        }
        Command::Compare { config, out } => cmd_compare(&config, &out).map(|report| {
            println!("wrote {}", out.join("comparison.json").display());
            println!(
                "final accuracy: adapcomfl={} sketchfl={} fedavg={}",
                report.adapcomfl.final_accuracy_pct,
                report.sketchfl.final_accuracy_pct,
                report.fedavg.final_accuracy_pct
            );
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
