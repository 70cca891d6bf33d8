//! Command-line driver for the weibo-cnn pipeline.
//!
//! Every subcommand resolves a [`config::RunConfig`], runs its stage, writes
//! `manifest_<command>.txt` into the output directory and prints a one-line
//! summary. `pipeline` runs the stages back to back through the same code
//! path, so its output directory matches a stage-by-stage run byte for byte.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod plot;

use std::fs;

use anyhow::{Context, Result};

use args::{Cli, Command};
use commands::{Layout, Outcome};
use config::RunConfig;

fn run_stage(name: &str, cfg: &RunConfig, stage: impl FnOnce(&RunConfig) -> Result<Outcome>) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create output directory {}", cfg.out.display()))?;
    let outcome = stage(cfg).with_context(|| format!("{name} failed"))?;
    let layout = Layout { out: &cfg.out };
    manifest::write(&layout.manifest(name), name, cfg, &outcome.inputs, &outcome.artifacts)?;
    println!("{}", outcome.summary);
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("--threads: cannot configure the worker pool")?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let options = match &cli.command {
        Command::Predict(p) => &p.options,
        Command::Preprocess(o)
        | Command::Label(o)
        | Command::Split(o)
        | Command::Train(o)
        | Command::Evaluate(o)
        | Command::ExportPlot(o)
        | Command::Pipeline(o) => o,
    };
    configure_threads(options.threads)?;
    let cfg = RunConfig::resolve(options)?;
    match &cli.command {
        Command::Preprocess(_) => run_stage("preprocess", &cfg, commands::preprocess),
        Command::Label(_) => run_stage("label", &cfg, commands::label),
        Command::Split(_) => run_stage("split", &cfg, commands::split),
        Command::Train(_) => run_stage("train", &cfg, commands::train_stage),
        Command::Evaluate(_) => run_stage("evaluate", &cfg, commands::evaluate),
        Command::Predict(p) => run_stage("predict", &cfg, |c| commands::predict(c, &p.input)),
        Command::ExportPlot(_) => run_stage("export-plot", &cfg, commands::export_plot),
        Command::Pipeline(_) => pipeline(&cfg),
    }
}

pub fn pipeline(cfg: &RunConfig) -> Result<()> {
    run_stage("preprocess", cfg, commands::preprocess)?;
    run_stage("label", cfg, commands::label)?;
    run_stage("split", cfg, commands::split)?;
    run_stage("train", cfg, commands::train_stage)?;
    run_stage("evaluate", cfg, commands::evaluate)
}

