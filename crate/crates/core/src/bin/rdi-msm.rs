use clap::{Parser, Subcommand};
use rdi_msm::pipeline::{self, PipelineConfig, PipelineError};
use rdi_msm::simulator::SimConfig;
use rdi_msm::TieMethod;
use std::path::PathBuf;
use std::process::ExitCode;

/// Causal survival analysis of chemotherapy received dose intensity.
#[derive(Debug, Parser)]
#[command(name = "rdi-msm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON pipeline configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the simulation and bootstrap seeds.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Denominator specification, iptw1 to iptw5.
    #[arg(long, global = true)]
    spec: Option<String>,
    /// Number of bootstrap replicates.
    #[arg(long = "bootstrap-B", global = true, value_name = "N")]
    bootstrap_b: Option<usize>,
    /// Tie handling in the Cox partial likelihood.
    #[arg(long, global = true, value_parser = ["breslow", "efron"])]
    tie: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset and its ground truth.
    Simulate,
    /// Apply eligibility and derive covariates.
    Derive,
    /// Fit all weight specifications and their diagnostics.
    Weights,
    /// Fit the weighted and unweighted marginal structural Cox models.
    Fit,
    /// Estimate CATEs with bootstrap confidence intervals.
    Effects,
    /// Run every stage in order.
    All,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if matches!(cli.command, Command::Simulate) && cfg.simulate.is_none() {
        cfg.simulate = Some(SimConfig::default());
    }
    if let Some(seed) = cli.seed {
        if let Some(sim) = cfg.simulate.as_mut() {
            sim.seed = seed;
        }
        cfg.bootstrap.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(spec) = &cli.spec {
        cfg.weight_spec = spec.clone();
    }
    if let Some(b) = cli.bootstrap_b {
        cfg.bootstrap.replicates = b;
    }
    if let Some(tie) = &cli.tie {
        cfg.ties = tie.parse::<TieMethod>().map_err(PipelineError::Config)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    let out = cfg.output_dir.display();
    match cli.command {
        Command::Simulate => {
            let sim = pipeline::cmd_simulate(&cfg)?;
            println!("simulated {} patients into {out}/{}", sim.records.len(), pipeline::SIMULATED_DATA_DIR);
        }
        Command::Derive => {
            let d = pipeline::cmd_derive(&cfg)?;
            println!("{} eligible patients; wrote {out}/{}", d.derived.len(), pipeline::DERIVED_FILE);
        }
        Command::Weights => {
            let report = pipeline::cmd_weights(&cfg)?;
            for s in &report.specs {
                match (&s.diagnostics, &s.error) {
                    (Some(d), _) => println!(
                        "{}: mean {:.4} max {:.3}{}",
                        s.spec,
                        d.summary.mean,
                        d.summary.max,
                        if d.flagged() { " (flagged)" } else { "" }
                    ),
                    (None, Some(e)) => println!("{}: failed: {e}", s.spec),
                    (None, None) => {}
                }
            }
        }
        Command::Fit => {
            let report = pipeline::cmd_fit(&cfg)?;
            for (k, name) in report.weighted.terms.iter().enumerate() {
                println!(
                    "{name}: {:.4} (robust SE {:.4})",
                    report.weighted.coefficients[k], report.weighted.robust_se[k]
                );
            }
        }
        Command::Effects => {
            let (_, boot) = pipeline::cmd_effects(&cfg)?;
            println!(
                "{} replicates ({} failed); wrote {out}/{}",
                boot.replicates.len(),
                boot.failed,
                pipeline::CATE_FILE
            );
        }
        Command::All => {
            pipeline::cmd_all(&cfg)?;
            println!("pipeline complete; outputs in {out}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
