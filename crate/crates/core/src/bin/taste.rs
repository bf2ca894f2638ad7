use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taste::pipeline::{self, Command, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "taste", version, about = "Music recommendation benchmark engine")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Run config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    Synth(Common),
    Ingest(Common),
    Tokenize(Common),
    Train(Common),
    Eval(Common),
    Coldstart(Common),
    Sweep(Common),
    Diversity(Common),
    Drift(Common),
    /// Re-runs a manifest and checks every output digest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    let pool = pipeline::thread_pool()?;
    let (command, common) = match cli.command {
        Cmd::Synth(c) => (Command::Synth, c),
        Cmd::Ingest(c) => (Command::Ingest, c),
        Cmd::Tokenize(c) => (Command::Tokenize, c),
        Cmd::Train(c) => (Command::Train, c),
        Cmd::Eval(c) => (Command::Eval, c),
        Cmd::Coldstart(c) => (Command::Coldstart, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Diversity(c) => (Command::Diversity, c),
        Cmd::Drift(c) => (Command::Drift, c),
        Cmd::Replay { manifest } => {
            let outcome = pool.install(|| pipeline::replay(&manifest))?;
            println!("{}", serde_json::to_string_pretty(&outcome).expect("outcome serializes"));
            return if outcome.identical() {
                Ok(())
            } else {
                Err(PipelineError::Data(format!("replay of {} differs", manifest.display())))
            };
        }
    };
    let cfg: RunConfig = pipeline::load_config(&common.config)?.with_overrides(common.seed, common.out);
    let manifest = pool.install(|| pipeline::run(command, &cfg))?;
    for (path, digest) in &manifest.outputs {
        println!("{}  {}", &digest[..16], cfg.out_dir.join(path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { pipeline::EXIT_CONFIG } else { pipeline::EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
