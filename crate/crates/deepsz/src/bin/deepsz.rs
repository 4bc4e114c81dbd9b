use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use deepsz::commands::{self, Artifacts};
use deepsz::config::{PipelineConfig, PlannerMode};
use deepsz::{exit, Error};

/// Prune, assess, plan and compress the FC layers of an MLP.
#[derive(Debug, Parser)]
#[command(name = "deepsz", version)]
struct Cli {
    /// Pipeline config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for assessment.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Planner mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Loss budget in points (accuracy mode) or data-array bytes (ratio mode).
    #[arg(long, global = true)]
    budget: Option<f64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Accuracy,
    Ratio,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the baseline network.
    Train,
    /// Magnitude-prune and retrain with masks.
    Prune {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Measure per-layer degradation and compressed size.
    Assess {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Choose one error bound per layer.
    Optimize {
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Write the compressed-model container.
    Encode {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Decode a container into a network checkpoint.
    Decode {
        #[arg(long)]
        container: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Report test accuracy of a checkpoint or container.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run every stage in sequence.
    Pipeline,
}

fn config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::with_env_defaults(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.mode {
        cfg.mode = match m {
            Mode::Accuracy => PlannerMode::Accuracy,
            Mode::Ratio => PlannerMode::Ratio,
        };
    }
    if let Some(b) = cli.budget {
        cfg.budget = Some(b);
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate().map_err(|e| Error::Config { path: cli.config.clone().unwrap_or_default(), source: e })?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = config(cli)?;
    let art = Artifacts::new(&cfg.out_dir);
    let log = &mut std::io::stderr();
    let pick = |p: &Option<PathBuf>, default: PathBuf| p.clone().unwrap_or(default);
    match &cli.command {
        Command::Train => {
            let r = commands::cmd_train(&cfg, log)?;
            println!("{}\t{:.2}", r.checkpoint.display(), r.accuracy);
        }
        Command::Prune { checkpoint } => {
            let r = commands::cmd_prune(&cfg, &pick(checkpoint, art.base()), log)?;
            println!("top-1 {:.2} -> {:.2}\tsparse {:.2}x", r.accuracy_before, r.accuracy_after, r.sparse_ratio());
        }
        Command::Assess { checkpoint } => {
            commands::cmd_assess(&cfg, &pick(checkpoint, art.pruned()), cli.jobs, log)?;
            println!("{}", art.table().display());
        }
        Command::Optimize { table } => {
            let plan = commands::cmd_optimize(&cfg, &pick(table, art.table()), log)?;
            print!("{}", deepsz::tables::write_plan(&plan));
        }
        Command::Encode { checkpoint, plan } => {
            let r = commands::cmd_encode(&cfg, &pick(checkpoint, art.pruned()), &pick(plan, art.plan()), log)?;
            println!(
                "{}\t{} bytes\t{:.2}x raw\t{:.2}x sparse",
                art.container().display(),
                r.model.payload_bytes(),
                r.raw_ratio(),
                r.sparse_ratio()
            );
        }
        Command::Decode { container, output } => {
            let out = pick(output, art.decoded());
            commands::cmd_decode(&pick(container, art.container()), &out, log)?;
            println!("{}", out.display());
        }
        Command::Eval { model } => {
            let acc = commands::cmd_eval(&cfg, &pick(model, art.container()), log)?;
            println!("{acc:.2}");
        }
        Command::Pipeline => {
            let s = commands::cmd_pipeline(&cfg, cli.jobs, log)?;
            print!("{}", s.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::FAILURE } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
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
