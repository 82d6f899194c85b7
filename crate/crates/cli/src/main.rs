use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latentfm::harness::{pipeline, selftest, ExperimentConfig};
use latentfm::{exec, Error};

#[derive(Parser)]
#[command(name = "latentfm", version, about = "Latent flow-matching refinement for a CTC recognizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/dev/test corpus.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (defaults to paths.data_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the recognizer on clean features.
    TrainAsr {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint path (defaults to <paths.run_dir>/asr.ckpt).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the latent refiner against a frozen recognizer.
    TrainRefiner {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        asr_ckpt: PathBuf,
        /// Checkpoint path (defaults to <paths.run_dir>/refiner.ckpt).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate on the test split and write report.csv / report.txt.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        asr_ckpt: PathBuf,
        #[arg(long)]
        refiner_ckpt: Option<PathBuf>,
        /// Report directory (defaults to paths.run_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle and gradient checks.
    Selftest,
}

const EXIT_CONFIG: u8 = 3;
const EXIT_MISSING: u8 = 4;
const EXIT_IO: u8 = 5;
const EXIT_FORMAT: u8 = 6;
const EXIT_DIVERGED: u8 = 7;
const EXIT_NUMERIC: u8 = 8;
const EXIT_SELFTEST: u8 = 9;

fn diagnose(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Config(_) => (EXIT_CONFIG, "invalid config"),
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => (EXIT_MISSING, "missing file"),
        Error::Io { .. } => (EXIT_IO, "i/o failure"),
        Error::BadMagic { .. } | Error::Version { .. } | Error::Malformed { .. } => (EXIT_FORMAT, "unreadable file"),
        Error::KindMismatch { .. } => (EXIT_FORMAT, "wrong checkpoint kind"),
        Error::Diverged { .. } => (EXIT_DIVERGED, "training diverged"),
        _ => (EXIT_NUMERIC, "computation failed"),
    }
}

fn load_config(path: Option<&Path>) -> latentfm::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> latentfm::Result<bool> {
    let mut log = |line: &str| eprintln!("[latentfm] {line}");
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let out = out.unwrap_or_else(|| cfg.data_dir.clone());
            pipeline::gen_data(&cfg, &out, &mut log)?;
        }
        Command::TrainAsr { config, data, out } => {
            let cfg = load_config(config.as_deref())?;
            let data = data.unwrap_or_else(|| cfg.data_dir.clone());
            let out = out.unwrap_or_else(|| cfg.run_dir.join(pipeline::ASR_CHECKPOINT));
            pipeline::train_asr_stage(&cfg, &data, &out, &mut log)?;
        }
        Command::TrainRefiner { config, data, asr_ckpt, out } => {
            let cfg = load_config(config.as_deref())?;
            let data = data.unwrap_or_else(|| cfg.data_dir.clone());
            let out = out.unwrap_or_else(|| cfg.run_dir.join(pipeline::REFINER_CHECKPOINT));
            pipeline::train_refiner_stage(&cfg, &data, &asr_ckpt, &out, &mut log)?;
        }
        Command::Eval { config, data, asr_ckpt, refiner_ckpt, out } => {
            let cfg = load_config(config.as_deref())?;
            let data = data.unwrap_or_else(|| cfg.data_dir.clone());
            let out = out.unwrap_or_else(|| cfg.run_dir.clone());
            pipeline::eval_stage(&cfg, &data, &asr_ckpt, refiner_ckpt.as_deref(), &out, &mut log)?;
        }
        Command::Selftest => {
            let mut ok = true;
            for c in selftest::run() {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    exec::init_threads_from_env();
    if exec::parallel_enabled() {
        eprintln!("[latentfm] parallel execution ({} override: {:?})", exec::THREADS_ENV, std::env::var(exec::THREADS_ENV).ok());
    } else {
        eprintln!("[latentfm] sequential execution");
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: selftest failed");
            ExitCode::from(EXIT_SELFTEST)
        }
        Err(e) => {
            let (code, kind) = diagnose(&e);
            eprintln!("error: {kind}: {e}");
            ExitCode::from(code)
        }
    }
}
