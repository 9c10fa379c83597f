use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use zocmp::experiment::{
    load_reference, parse_config_with, run_experiment, synthesize_dataset, write_csv, Mode, Overrides, RunConfig,
    RunManifest,
};
use zocmp::policy::{read_jsonl, split_by_margin, write_jsonl};

#[derive(Parser)]
#[command(name = "zocmp", version, about = "Comparison-oracle zeroth-order optimization toolkit")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run benchmark suites with default settings; exits nonzero on failure.
    Bench {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parent directory; each suite writes to a subdirectory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a preference dataset into clean and noisy pairs by reference margin.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        delta: f64,
        /// Stored reference policy (JSON); random from --seed otherwise.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic toy preference dataset as JSON lines.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        n_clean: usize,
        #[arg(long, default_value_t = 10)]
        n_noisy: usize,
        #[arg(long, default_value_t = 3.0)]
        delta: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Lemma,
    Proposition,
    Sweep,
    All,
}

impl Suite {
    fn modes(self) -> Vec<Mode> {
        match self {
            Suite::Lemma => vec![Mode::BenchLemma],
            Suite::Proposition => vec![Mode::BenchProposition],
            Suite::Sweep => vec![Mode::BenchSweep],
            Suite::All => vec![Mode::BenchLemma, Mode::BenchProposition, Mode::BenchSweep],
        }
    }
}

fn report(m: &RunManifest) {
    for c in &m.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "{} done in {:.2}s, artifacts in {}",
        m.mode.name(),
        m.wall_clock_seconds,
        m.output_dir.display()
    );
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            preset,
        } => {
            let overrides = Overrides {
                seed,
                preset,
                output_dir: out,
                ..Overrides::default()
            };
            let loaded = parse_config_with(&config, &overrides)
                .with_context(|| format!("loading config {}", config.display()))?;
            let m = run_experiment(&loaded.config)?;
            report(&m);
            Ok(m.pass)
        }
        Command::Bench { suite, seed, out } => {
            let mut pass = true;
            for mode in suite.modes() {
                let mut c = RunConfig::new(mode, seed);
                let parent = out.clone().unwrap_or_else(|| c.resolved_output_dir());
                c.output_dir = Some(parent.join(mode.name()));
                let m = run_experiment(&c)?;
                report(&m);
                pass &= m.pass;
            }
            Ok(pass)
        }
        Command::Split {
            dataset,
            delta,
            policy,
            seed,
            out,
        } => {
            let mut c = RunConfig::new(Mode::Pipeline, seed);
            c.reference_policy = policy;
            c.output_dir = out;
            let reference = load_reference(&c)?;
            let pairs = read_jsonl(&dataset)?;
            let split = split_by_margin(&reference, reference.weights(), &pairs, delta)?;
            let dir = c.resolved_output_dir();
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            write_csv(&split, &dir.join("split.csv"))?;
            write_jsonl(dir.join("clean.jsonl"), &split.clean)?;
            write_jsonl(dir.join("noisy.jsonl"), &split.noisy)?;
            println!(
                "{} pairs: {} clean, {} noisy (delta = {delta}); written to {}",
                pairs.len(),
                split.clean.len(),
                split.noisy.len(),
                dir.display()
            );
            Ok(true)
        }
        Command::Generate {
            out,
            seed,
            n_clean,
            n_noisy,
            delta,
        } => {
            let mut c = RunConfig::new(Mode::Pipeline, seed);
            c.n_clean = n_clean;
            c.n_noisy = n_noisy;
            c.delta = delta;
            let reference = load_reference(&c)?;
            let pairs = synthesize_dataset(&c, &reference)?;
            write_jsonl(&out, &pairs)?;
            println!("wrote {} pairs to {}", pairs.len(), out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
