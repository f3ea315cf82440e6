//! `lowpass-lab` command-line interface.
//!
//! Exit codes: 0 on success, 1 when a verification subcommand finds a
//! violated assertion, 2 on usage or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lowpass_lab::emit;
use lowpass_lab::experiments::{
    check_conditions, demo_alias, search_collapse, spectrum_cmd, synthetic_image,
    verify_relu_fourier, CheckConditionsConfig, SearchCollapseConfig,
};
use lowpass_lab::train::{train_toy, EpochCheck, TrainConfig};
use lowpass_core::tensor::io::load_tensor;

#[derive(Parser)]
#[command(
    name = "lowpass-lab",
    about = "Frequency-domain laboratory for spectrally normalized residual networks",
    version
)]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// JSON config file for the subcommand (fields are optional).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// 1-D aliasing demonstration: decimate a pure mode with and without an
    /// ideal anti-alias filter and emit all four panels as CSV.
    DemoAlias {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 23)]
        mode_freq: usize,
        #[arg(long, default_value_t = 2)]
        factor: usize,
    },
    /// Verify that rectification in space equals mask convolution in
    /// frequency on an image (synthetic unless --input is given).
    VerifyReluFourier {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        extent: usize,
    },
    /// Dominance and contraction proportions over seeds, as a table.
    CheckConditions {
        /// Directory with saved network weights; synthetic networks if absent.
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Feature-collapse searches across band restrictions and model variants.
    SearchCollapse {
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Train the toy model, recording per-epoch condition checks.
    TrainToy,
    /// Radial power spectrum of a tensor-file image.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> anyhow::Result<T> {
    match path {
        Some(p) => {
            let bytes = std::fs::read(p)?;
            Ok(serde_json::from_slice(&bytes)?)
        }
        None => Ok(T::default()),
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    std::fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::DemoAlias { n, mode_freq, factor } => {
            let demo = demo_alias(n, mode_freq, factor, &cli.out)?;
            println!(
                "alias demo: mode {} on n={} decimated by {} -> raw peak bin {}, filtered peak bin {} (predicted fold {})",
                demo.mode_freq, demo.n, demo.factor, demo.raw_peak_bin, demo.filtered_peak_bin,
                demo.predicted_alias_bin
            );
            Ok(true)
        }
        Command::VerifyReluFourier { input, extent } => {
            let image = match input {
                Some(p) => load_tensor(&p)?,
                None => synthetic_image(extent, cli.seed)?,
            };
            let report = verify_relu_fourier(&image, 1e-8)?;
            emit::write_json(&cli.out.join("relu_fourier.json"), &report)?;
            println!(
                "relu-fourier: spectrum rel err {:.3e}, image rel err {:.3e} -> {}",
                report.spectrum_rel_err,
                report.image_rel_err,
                if report.pass { "PASS" } else { "FAIL" }
            );
            Ok(report.pass)
        }
        Command::CheckConditions { network } => {
            let config: CheckConditionsConfig = load_config(&cli.config)?;
            let table = check_conditions(&config, network.as_deref(), cli.seed, &cli.out)?;
            println!(
                "conditions over {} seeds (coeff {:?}): dominance(x) = {:.2} +/- {:.2}",
                table.seeds, table.coeff, table.dominance_input.mean, table.dominance_input.stderr
            );
            for (l, s) in table.contraction_as_written.iter().enumerate() {
                println!("  block {}: contraction {:.2} +/- {:.2}", l + 1, s.mean, s.stderr);
            }
            Ok(true)
        }
        Command::SearchCollapse { network } => {
            let config: SearchCollapseConfig = load_config(&cli.config)?;
            let run = search_collapse(&config, network.as_deref(), cli.seed, &cli.out)?;
            for s in &run.summaries {
                println!(
                    "{}: |x-x0| mean {:.3}, |y-y0| mean {:.4} over {} trajectories",
                    s.label, s.input_dist.mean, s.feat_dist.mean, s.count
                );
            }
            println!("product lower-bound factor: {:.4e}", run.product_lower_bound);
            Ok(true)
        }
        Command::TrainToy => {
            let mut config: TrainConfig = load_config(&cli.config)?;
            config.seed = cli.seed;
            let outcome = train_toy(&config)?;
            let weights_dir = cli.out.join("weights");
            outcome.classifier.save(&weights_dir)?;
            emit::write_json(&cli.out.join("train_summary.json"), &outcome.summary)?;
            let rows = training_check_rows(&outcome.checks);
            emit::write_csv(
                &cli.out.join("training_checks.csv"),
                emit::TRAINING_SCHEMA,
                &["epoch", "block", "u", "as_written", "lowpassed_output", "dominance"],
                &rows,
            )?;
            println!(
                "trained {} epochs (coeff {:?}): test accuracy {:.3}, final loss {:.4}",
                outcome.summary.epochs,
                outcome.summary.coeff,
                outcome.summary.test_accuracy,
                outcome.summary.final_loss
            );
            Ok(true)
        }
        Command::Spectrum { input } => {
            let bins = spectrum_cmd(&input, &cli.out)?;
            println!("radial spectrum with {} bins written", bins.len());
            Ok(true)
        }
    }
}

fn training_check_rows(checks: &[EpochCheck]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for check in checks {
        for (l, c) in check.report.contraction.iter().enumerate() {
            rows.push(vec![
                check.epoch.to_string(),
                (l + 1).to_string(),
                c.u.to_string(),
                format!("{:.6}", c.as_written),
                format!("{:.6}", c.lowpassed_output),
                format!("{:.6}", check.report.dominance.per_block[l]),
            ]);
        }
    }
    rows
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
