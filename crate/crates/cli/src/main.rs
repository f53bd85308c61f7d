use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jobmatch_core::pipeline::{Pipeline, RunConfig};
use jobmatch_core::synth::{generate_lines, SynthConfig};
use jobmatch_core::Error;

/// Resume to job matching pipeline.
///
/// Each stage reads the artifacts of the stage before it from the artifact
/// directory and writes its own. Artifacts carry a key derived from the input
/// file and the configuration, so stale artifacts are refused with a message
/// naming the stage to rerun.
#[derive(Parser, Debug)]
#[command(name = "jobmatch", version, about, long_about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration. Every field is optional; see `jobmatch config` for the defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Input corpus, one JSON resume per line (overrides paths.input).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Artifact directory (overrides paths.artifacts).
    #[arg(long, global = true)]
    artifacts: Option<PathBuf>,
    /// Master seed (overrides seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core (overrides threads). Results are
    /// identical at any count except embedding training, which is only
    /// reproducible with 1 thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log more (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and clean the input, keep the top-K positions and split train/test.
    Ingest,
    /// Train phrase embeddings on the training split.
    Embed,
    /// Fit the two k-means models, the two topic models and the categorical dictionaries.
    Cluster,
    /// Build the train and test feature matrices.
    Featurize,
    /// Train every base model for every task.
    Train,
    /// Score all methods on the test split and write report.{txt,tsv,json}. Exits 2 on train/test leakage.
    Evaluate,
    /// Run every stage in order and print the report.
    Run {
        /// Skip stages whose artifacts are already current.
        #[arg(long)]
        resume: bool,
    },
    /// Rank positions for one resume record read from standard input.
    Recommend {
        /// Number of positions to print.
        #[arg(long, short, default_value_t = 3)]
        n: usize,
    },
    /// Write a synthetic corpus with planted position signal.
    Synth {
        /// Number of resumes.
        #[arg(long, short, default_value_t = 2000)]
        n: usize,
        /// Generator seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Probability that a resume follows its planted career track, in [0, 1].
        #[arg(long, default_value_t = 0.8)]
        signal: f64,
        /// Output file; standard output when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn load_config(g: &Global) -> Result<RunConfig, Error> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &g.input {
        cfg.paths.input = v.clone();
    }
    if let Some(v) = &g.artifacts {
        cfg.paths.artifacts = v.clone();
    }
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if let Some(v) = g.threads {
        cfg.threads = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli.global)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start the thread pool: {e}")))?;
    let stdout = io::stdout();
    match cli.command {
        Command::Synth { n, seed, signal, out } => {
            if !(0.0..=1.0).contains(&signal) {
                return Err(Error::Config("--signal must lie in [0, 1]".into()));
            }
            let text = generate_lines(&SynthConfig { n, seed, signal });
            match out {
                Some(p) => {
                    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                        std::fs::create_dir_all(dir)?;
                    }
                    std::fs::write(&p, text)?;
                    log::info!("wrote {n} resumes to {}", p.display());
                }
                None => stdout.lock().write_all(text.as_bytes())?,
            }
        }
        Command::Config => stdout.lock().write_all(cfg.to_toml().as_bytes())?,
        Command::Recommend { n } => {
            let mut input = String::new();
            io::stdin().read_to_string(&mut input)?;
            let record = input.trim();
            if record.is_empty() {
                return Err(Error::Config(
                    "recommend expects one JSON resume on standard input".into(),
                ));
            }
            let pipeline = Pipeline::new(cfg)?;
            let mut out = stdout.lock();
            for (name, p) in pipeline.recommend(record, n)? {
                writeln!(out, "{name}\t{p:.4}")?;
            }
        }
        Command::Run { resume } => {
            let report = Pipeline::new(cfg)?.run_all(resume)?;
            stdout.lock().write_all(report.to_text().as_bytes())?;
        }
        Command::Evaluate => {
            let report = Pipeline::new(cfg)?.evaluate()?;
            stdout.lock().write_all(report.to_text().as_bytes())?;
        }
        Command::Ingest => Pipeline::new(cfg)?.run_stage("ingest")?,
        Command::Embed => Pipeline::new(cfg)?.run_stage("embed")?,
        Command::Cluster => Pipeline::new(cfg)?.run_stage("cluster")?,
        Command::Featurize => Pipeline::new(cfg)?.run_stage("featurize")?,
        Command::Train => Pipeline::new(cfg)?.run_stage("train")?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Leakage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
