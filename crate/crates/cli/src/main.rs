use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use lpclip_cli::{Overrides, Pipeline, PipelineConfig};
use lpclip_core::augment::CorruptionSpec;

#[derive(Parser)]
#[command(
    name = "lpclip",
    version,
    about = "Distil a zero-shot teacher into a linear probe and evaluate it"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline config (JSON). Defaults to the built-in toy world.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run a single probe seed.
    #[arg(long, global = true, conflicts_with = "seeds")]
    seed: Option<u64>,

    /// Comma-separated probe seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Corruptions as kind:severity, comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    corrupt: Option<Vec<CorruptionSpec>>,

    /// Weight every sample by 1 instead of teacher confidence.
    #[arg(long, global = true)]
    no_weighting: bool,

    /// Train on the weak view instead of the strong views.
    #[arg(long, global = true)]
    no_strong_aug: bool,

    /// Use at most K strong views.
    #[arg(long, global = true, value_name = "K")]
    views: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the toy world into embedding stores and a prompt bank.
    Synth,
    /// Evaluate the zero-shot teacher on the test store.
    Zeroshot,
    /// Score every single prompt on the labelled test store.
    PromptSelect,
    /// Train one probe per seed.
    Train,
    /// Accuracy and ECE on clean and corrupted test stores.
    Eval,
    /// OOD detection against the OOD store.
    Ood,
    /// Reliability, histogram and PCA figures as SVG.
    Plot,
    /// Every stage in order.
    All,
    /// Print the resolved config and exit.
    Config,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        seeds: cli.seeds,
        out: cli.out,
        corrupt: cli.corrupt,
        no_weighting: cli.no_weighting,
        no_strong_aug: cli.no_strong_aug,
        views: cli.views,
    });
    let p = Pipeline::new(cfg)?;
    let out = p.out().display().to_string();
    match cli.command {
        Command::Synth => {
            let paths = p.synth()?;
            println!(
                "wrote stores under {}",
                paths.train.parent().unwrap_or(p.out()).display()
            );
        }
        Command::Zeroshot => {
            let r = p.zeroshot()?;
            println!(
                "teacher accuracy {:.4} ece {:.4} over {} samples",
                r.accuracy, r.ece, r.samples
            );
        }
        Command::PromptSelect => {
            let s = p.prompt_select()?;
            println!(
                "best prompt {} accuracy {:.4}",
                s.best, s.accuracies[s.best]
            );
        }
        Command::Train => {
            for r in p.train()? {
                println!("seed {} final loss {:.4}", r.seed, r.final_loss);
            }
        }
        Command::Eval => {
            let (_, summary) = p.eval()?;
            println!("model,condition,accuracy_mean,accuracy_std,ece_mean,ece_std");
            for r in summary {
                println!(
                    "{},{},{:.4},{:.4},{:.4},{:.4}",
                    r.model, r.condition, r.accuracy_mean, r.accuracy_std, r.ece_mean, r.ece_std
                );
            }
        }
        Command::Ood => {
            let (_, summary) = p.ood()?;
            println!("model,auroc_mean,aupr_mean,fpr95_mean");
            for r in summary {
                println!(
                    "{},{:.4},{:.4},{:.4}",
                    r.model, r.auroc_mean, r.aupr_mean, r.fpr95_mean
                );
            }
        }
        Command::Plot => {
            for path in p.plot()? {
                println!("{}", path.display());
            }
        }
        Command::All => {
            p.all()?;
            println!("artifacts under {out}");
        }
        Command::Config => print!("{}", p.config().to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
