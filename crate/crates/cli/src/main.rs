mod config;
mod manifest;
mod pipeline;
mod report;
mod toy;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use manifest::{DirLock, Manifest};
use pipeline::Stage;

#[derive(Parser)]
#[command(
    name = "reprobe",
    version,
    about = "Train NMT models and probe their hidden states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set epochs=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn segmentation models (BPE merges or a fixed scheme) for both sides.
    BpeLearn(Common),
    /// Segment the corpora and build vocabularies.
    Segment(Common),
    /// Train the encoder-decoder and keep the best checkpoint.
    TrainNmt(Common),
    /// Translate the test set greedily and score it with BLEU.
    Translate(Common),
    /// Extract word representations for every probe task and layer selector.
    Extract(Common),
    /// Train and evaluate one probe per task and layer selector.
    Probe(Common),
    /// Baselines, binned accuracy, per-label deltas and significance tests.
    Analyze(Common),
    /// Tables and a chart from the analyses.
    Report(Common),
    /// Every stage in order, skipping those already complete.
    Run {
        #[command(flatten)]
        common: Common,
        /// Rerun stages even if the manifest marks them complete.
        #[arg(long)]
        force: bool,
    },
    /// Write the toy experiment (data plus `toy.conf`) into a directory.
    MakeToy {
        dir: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn run_stages(common: &Common, stages: &[Stage], force: bool) -> Result<()> {
    let cfg = ExperimentConfig::load(&common.config, &common.overrides)?;
    let dir = cfg.output_dir.clone();
    let _lock = DirLock::acquire(&dir)?;
    let mut manifest = Manifest::open(&dir, &cfg.hash(), cfg.seed)?;
    for &stage in stages {
        let name = stage.name();
        if stage == Stage::Translate && cfg.test.is_none() && stages.len() > 1 {
            eprintln!("{name}: skipped, no test set configured");
            continue;
        }
        if !force && stages.len() > 1 && manifest.is_complete(&dir, name) {
            eprintln!("{name}: already complete");
            continue;
        }
        eprintln!("{name}: running");
        let files = stage.run(&cfg)?;
        manifest.prune(&dir);
        manifest.record(&dir, name, &files)?;
        manifest.save(&dir)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let single = |common: &Common, stage| run_stages(common, &[stage], true);
    match &cli.command {
        Command::BpeLearn(c) => single(c, Stage::BpeLearn),
        Command::Segment(c) => single(c, Stage::Segment),
        Command::TrainNmt(c) => single(c, Stage::TrainNmt),
        Command::Translate(c) => single(c, Stage::Translate),
        Command::Extract(c) => single(c, Stage::Extract),
        Command::Probe(c) => single(c, Stage::Probe),
        Command::Analyze(c) => single(c, Stage::Analyze),
        Command::Report(c) => single(c, Stage::Report),
        Command::Run { common, force } => run_stages(common, &Stage::ALL, *force),
        Command::MakeToy { dir, seed } => {
            let conf = toy::make_toy(dir, &toy::ToySizes::default(), *seed)?;
            println!("{}", conf.display());
            Ok(())
        }
    }
}

/// 2 for I/O failures anywhere in the error chain, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.downcast_ref::<std::io::Error>().is_some()
            || matches!(
                e.downcast_ref::<reprobe_core::Error>(),
                Some(reprobe_core::Error::Io { .. })
            )
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
