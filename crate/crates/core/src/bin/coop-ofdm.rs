use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coop_ofdm::alloc_finite::{lbbb_finite, lbsb_finite, ubbb_finite, ubsb_finite};
use coop_ofdm::error::Result;
use coop_ofdm::experiment::{
    preset, run_experiment, summarize, write_csv, write_diagnostics, ExperimentConfig, RunOptions, PRESETS,
};
use coop_ofdm::netmodel::{gen_iid_channels, NetworkDims, SnrConfig};
use coop_ofdm::oracle::{grid_oracle_block, grid_oracle_subcarrier};
use coop_ofdm::scheme::Scheme;

#[derive(Parser)]
#[command(name = "coop-ofdm", version, about = "Max-min fair relaying in cooperative OFDM networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a Monte-Carlo sweep and write one CSV row per scheme and trial.
    Run {
        /// TOML experiment file.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in figure preset (see `list-presets`).
        #[arg(long)]
        preset: Option<String>,
        /// CSV path; defaults to the config's `output`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Base seed; trial t uses seed + t.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated scheme names, replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        /// Fill the solve_time_ms column (output is then not reproducible).
        #[arg(long)]
        timing: bool,
        /// Write solver diagnostics as JSON lines.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Print per-point means to stderr.
        #[arg(long)]
        summary: bool,
    },
    /// Compare bounds and heuristics with the brute-force oracles on tiny networks.
    OracleCheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 21)]
        levels: usize,
        #[arg(long, default_value_t = 2)]
        relays: usize,
    },
    /// List the built-in presets.
    ListPresets,
    /// Print a preset as TOML, as a starting point for a config file.
    ShowPreset { name: String },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run { config, preset: name, out, trials, seed, schemes, timing, diagnostics, summary } => {
            let mut cfg = match (config, name) {
                (Some(path), _) => ExperimentConfig::load(&path)?,
                (None, Some(name)) => preset(&name)?,
                (None, None) => unreachable!("clap requires one of --config and --preset"),
            };
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(s) = schemes {
                cfg.schemes = s;
            }
            let rows = run_experiment(&cfg, RunOptions { timing })?;
            match out.or(cfg.output.clone()) {
                Some(path) => write_csv(&rows, BufWriter::new(File::create(path)?))?,
                None => write_csv(&rows, io::stdout().lock())?,
            }
            if let Some(path) = diagnostics {
                let mut w = BufWriter::new(File::create(path)?);
                write_diagnostics(&rows, &mut w)?;
                w.flush()?;
            }
            if summary {
                eprintln!("{:<26} {:>12} {:>12} {:>7}", "scheme", "sweep", "mean_min", "failed");
                for s in summarize(&rows) {
                    eprintln!(
                        "{:<26} {:>12.4} {:>12.6} {:>7}",
                        s.scheme.name(),
                        s.sweep_value,
                        s.mean_min_rate,
                        s.not_converged
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::OracleCheck { trials, seed, levels, relays } => oracle_check(trials, seed, levels, relays),
        Cmd::ListPresets => {
            for (name, about) in PRESETS {
                println!("{name:<6} {about}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ShowPreset { name } => {
            print!("{}", preset(&name)?.to_toml_string()?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn oracle_check(trials: usize, seed: u64, levels: usize, relays: usize) -> Result<ExitCode> {
    let dims = NetworkDims::new(2, relays, 2)?;
    let snrs = SnrConfig::uniform_db(dims, 5.0, 10.0, 10.0);
    let tol = 1e-6;
    let mut bad = 0;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}", "seed", "lbsb", "oracle", "ubsb", "lbbb", "oracle", "ubbb");
    for t in 0..trials as u64 {
        let ch = gen_iid_channels(dims, seed + t)?;
        let ub = ubsb_finite(&ch, &snrs)?;
        let lb = lbsb_finite(&ub, &ch, &snrs)?;
        let or = grid_oracle_subcarrier(&ch, &snrs, levels)?;
        let ubb = ubbb_finite(&ch, &snrs)?;
        let lbb = lbbb_finite(&ubb, &ch, &snrs)?;
        let orb = grid_oracle_block(&ch, &snrs, levels)?;
        let ok = lb.min_rate <= or.value + tol
            && or.value <= ub.min_rate + tol
            && lbb.min_rate <= orb.value + tol
            && orb.value <= ubb.min_rate + tol;
        if !ok {
            bad += 1;
        }
        println!(
            "{:>6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}{}",
            seed + t,
            lb.min_rate,
            or.value,
            ub.min_rate,
            lbb.min_rate,
            orb.value,
            ubb.min_rate,
            if ok { "" } else { "  <-- out of order" }
        );
    }
    println!("{} of {trials} instances ordered", trials - bad);
    Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
