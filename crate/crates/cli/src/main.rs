use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dmlink::complexity::{rmps_fd, rmps_td, ComplexityInput, LDBP_BLOCK, LDBP_N_CDC};
use dmlink::dbp::{tabulated_half_length, DbpPlan};
use dmlink::experiment::{run_experiment, sweep_report, ExperimentConfig, Manifest, Preset, Setup};
use dmlink::rx::read_results;

#[derive(Parser)]
#[command(name = "dmlink", version, about = "DBP and learned DBP over dispersion-managed links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a launch-power sweep and write results.csv, manifest.json, plans/ and models/.
    Run {
        /// Experiment config (TOML); built from --setup/--preset when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long, default_value = "A")]
        setup: String,
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides the config's.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a results directory: peak metric, optimal power and gain over LE.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Real multiplications per symbol of a saved DBP plan.
    Complexity {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Print the config of a setup/preset as TOML.
    Config {
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long, default_value = "A")]
        setup: String,
    },
}

fn preset_config(setup: &str, preset: &str) -> Result<ExperimentConfig> {
    let setup: Setup = setup.parse()?;
    let preset: Preset = preset.parse()?;
    Ok(ExperimentConfig::preset(setup, preset))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, preset, setup, out, seed } => {
            let mut cfg = match config {
                Some(path) => {
                    ExperimentConfig::load(&path).with_context(|| format!("loading {}", path.display()))?
                }
                None => preset_config(&setup, &preset)?,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            log::info!(
                "setup {} ({:?}), {} powers x {} equalizers, {} threads",
                cfg.setup,
                cfg.preset,
                cfg.launch_powers_dbm.len(),
                cfg.equalizers.len(),
                dmlink::exec::threads()
            );
            let outcome = run_experiment(&cfg, &out).context("experiment failed; partial results kept")?;
            let report = sweep_report(&outcome.rows, Some(outcome.manifest.bits_per_point))?;
            print!("{}", report.to_text());
            report.write_csv(&out.join("summary.csv"))?;
        }
        Command::Report { input } => {
            let rows = read_results(&input.join("results.csv"))
                .with_context(|| format!("reading {}", input.join("results.csv").display()))?;
            let bits = Manifest::load(&input.join("manifest.json")).ok().map(|m| m.bits_per_point);
            let report = sweep_report(&rows, bits)?;
            print!("{}", report.to_text());
            report.write_csv(&input.join("summary.csv"))?;
        }
        Command::Complexity { plan } => {
            let p = DbpPlan::load(&plan).with_context(|| format!("loading {}", plan.display()))?;
            let f = match p.fir_half_length.or_else(|| tabulated_half_length(p.steps_per_span.value())) {
                Some(f) => f,
                None => bail!("plan has no FIR half-length and none is tabulated for {} StpS", p.steps_per_span),
            };
            let inp = ComplexityInput {
                n_steps: p.n_steps,
                block_size: LDBP_BLOCK,
                samples_per_symbol: 2,
                n_cdc_link: LDBP_N_CDC,
                fir_half_length: f,
            };
            println!("steps per span  {}", p.steps_per_span);
            println!("steps           {}", p.n_steps);
            println!("F               {f}");
            println!("RMpS (FD)       {:.0}", rmps_fd(&inp)?);
            println!("RMpS (TD)       {:.0}", rmps_td(&inp)?);
        }
        Command::Config { preset, setup } => {
            print!("{}", preset_config(&setup, &preset)?.to_toml()?);
        }
    }
    Ok(())
}
