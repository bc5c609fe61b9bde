use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use langgrid::harness::{
    cmd_eval, cmd_generate, cmd_predict, cmd_train, final_line, parse_scene, RunConfig,
};
use langgrid::synth::Split;
use langgrid::{Error, Result};

/// Language-conditioned pick-and-place over occupancy grids.
#[derive(Parser)]
#[command(name = "langgrid", version)]
struct Cli {
    /// Flat key = value file applied before the flags below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    weight_decay: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// langunet, langfcnet, center or random.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Dataset directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Run directory for checkpoints, logs and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/dev/test splits and a manifest to the data directory.
    Generate,
    /// Train on the stored dataset and save the best checkpoint.
    Train,
    /// Score a model or baseline on one split.
    Eval {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Predict start and end coordinates for one instruction.
    Predict {
        /// Scene JSON file.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        instruction: String,
        /// Also write heatmap and attention images to the run directory.
        #[arg(long)]
        images: bool,
    },
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_file_text(&text)?;
    }
    let flags = [
        ("grid", cli.grid.map(|v| v.to_string())),
        ("epochs", cli.epochs.map(|v| v.to_string())),
        ("learning_rate", cli.lr.map(|v| v.to_string())),
        ("weight_decay", cli.weight_decay.map(|v| v.to_string())),
        ("tol", cli.tol.map(|v| v.to_string())),
        ("seed", cli.seed.map(|v| v.to_string())),
        ("model", cli.model.clone()),
        ("data", cli.data.as_ref().map(|p| p.display().to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|sp| sp.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown split {s:?}")))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = run_config(&cli)?;
    match cli.command {
        Command::Generate => {
            let m = cmd_generate(&cfg)?;
            for s in &m.splits {
                println!("{} {} {} {}", s.split.name(), s.count, s.sha256, cfg.data.join(&s.file).display());
            }
        }
        Command::Train => {
            let s = cmd_train(&cfg, &mut |l| println!("{}", l.line()))?;
            println!("{}", final_line(s.best_epoch, &s.train));
        }
        Command::Eval { split } => {
            let out = cmd_eval(&cfg, parse_split(&split)?)?;
            print!("{}", out.summary);
            println!("report     {}", out.path.display());
        }
        Command::Predict {
            scene,
            instruction,
            images,
        } => {
            let text = std::fs::read_to_string(&scene).map_err(|e| Error::io(&scene, e))?;
            let out = cmd_predict(&cfg, &parse_scene(&text)?, &instruction, images)?;
            print!("{}", out.text);
            for p in &out.images {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
