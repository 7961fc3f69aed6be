use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use claimrefine::config::{FactCheckerKind, GeneratorKind, LoopConfig};
use claimrefine::dataset::Schema;
use claimrefine::orchestrator::{self, Backends, InputVariant};
use claimrefine::remote::{Endpoint, HttpClient, ENV_GENERATOR_URL, ENV_NLI_URL};
use claimrefine::report;

#[derive(Parser)]
#[command(name = "claimrefine", version, about = "Fact-checker-driven claim extraction with iterative DPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare the dataset snapshot and tweets in the run directory.
    Synth(Common),
    /// Run or resume the refinement loop.
    Loop {
        #[command(flatten)]
        common: Common,
        /// Number of iterations; each evaluates the current policy and trains the next.
        #[arg(long)]
        iterations: Option<usize>,
        /// Continue a run directory created with the same config (iterations and workers may change).
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate the seed, tweet and zero-shot baselines.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Evaluate only these variants.
        #[arg(long, value_parser = parse_baseline)]
        variant: Vec<InputVariant>,
    },
    /// Summarise a run directory into report.json and report.txt.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Query /health on the configured remote backends.
    CheckBackends(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    schema: Option<Schema>,
    #[arg(long)]
    label_map: Option<PathBuf>,
    #[arg(long)]
    tweets: Option<PathBuf>,
    #[arg(long, value_enum)]
    generator: Option<GeneratorKind>,
    #[arg(long, value_enum)]
    fact_checker: Option<FactCheckerKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Size of the synthetic corpus used when no dataset is given.
    #[arg(long)]
    desk_claims: Option<usize>,
}

fn parse_baseline(s: &str) -> Result<InputVariant, String> {
    InputVariant::BASELINES
        .into_iter()
        .find(|v| v.dir_name() == s)
        .ok_or_else(|| format!("expected one of seed, tweet, zeroshot_core, zeroshot_checkworthy; got {s:?}"))
}

impl Common {
    fn resolve(&self) -> anyhow::Result<LoopConfig> {
        let mut cfg = match &self.config {
            Some(p) => LoopConfig::load(p)?,
            None => LoopConfig::default(),
        };
        if let Some(v) = &self.run_dir {
            cfg.run_dir = v.clone();
        }
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = self.schema {
            cfg.schema = v;
        }
        if let Some(v) = &self.label_map {
            cfg.label_map = Some(v.clone());
        }
        if let Some(v) = &self.tweets {
            cfg.tweets = Some(v.clone());
        }
        if let Some(v) = self.generator {
            cfg.generator = v;
        }
        if let Some(v) = self.fact_checker {
            cfg.fact_checker = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.desk_claims {
            cfg.desk.claims = v;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(common) => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            let backends = Backends::from_config(&cfg)?;
            std::fs::create_dir_all(&cfg.run_dir).with_context(|| format!("creating {}", cfg.run_dir.display()))?;
            let corpus = orchestrator::prepare_corpus(&cfg, &backends)?;
            println!("{} claims, {} tweets in {}", corpus.dataset.len(), corpus.tweets.len(), cfg.run_dir.display());
        }
        Command::Loop { common, iterations, resume } => {
            let mut cfg = common.resolve()?;
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            let backends = Backends::from_config(&cfg)?;
            let states = orchestrator::run_loop(&cfg, &backends, resume)?;
            for s in &states {
                println!(
                    "iteration {:>3}  weighted F1 {:.4}  mean length {:.2}",
                    s.index, s.classification.weighted_f1, s.lengths.mean_words
                );
            }
            let r = report::write(&cfg.run_dir)?;
            log::info!("report with {} rows written", r.rows.len());
        }
        Command::Baseline { common, variant } => {
            let cfg = common.resolve()?;
            let backends = Backends::from_config(&cfg)?;
            let variants = if variant.is_empty() { InputVariant::BASELINES.to_vec() } else { variant };
            for e in orchestrator::run_baselines(&cfg, &backends, &variants)? {
                println!("{:<22} weighted F1 {:.4}", e.variant.to_string(), e.classification.weighted_f1);
            }
        }
        Command::Report { run_dir } => {
            let r = report::write(&run_dir)?;
            print!("{}", r.to_table());
        }
        Command::CheckBackends(common) => {
            let cfg = common.resolve()?;
            let mut failed = false;
            let wanted = [
                (cfg.generator == GeneratorKind::Remote, ENV_GENERATOR_URL),
                (cfg.fact_checker == FactCheckerKind::Remote, ENV_NLI_URL),
            ];
            for (_, var) in wanted.iter().filter(|(on, _)| *on) {
                let result = Endpoint::from_env(var).and_then(|ep| HttpClient::new(ep, cfg.remote.clone()).health());
                match result {
                    Ok(body) => println!("{var}: ok {body}"),
                    Err(e) => {
                        println!("{var}: {e}");
                        failed = true;
                    }
                }
            }
            if wanted.iter().all(|(on, _)| !on) {
                println!("no remote backends configured");
            }
            anyhow::ensure!(!failed, "backend health check failed");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
