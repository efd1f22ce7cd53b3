use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use kmv::accept::{acceptance_suite, SuiteOptions, Tier};
use kmv::commands::{self, Outcome};
use kmv::config::ExperimentConfig;
use kmv::output::write_manifest;

#[derive(Parser)]
#[command(name = "kmv", version, about = "Killed McKean-Vlasov experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: the config's `output`, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    Simulate(ConfigArg),
    Picard(ConfigArg),
    Couple(ConfigArg),
    Dist(ConfigArg),
    #[command(name = "girsanov-check")]
    GirsanovCheck(ConfigArg),
    Validate(ConfigArg),
    #[command(name = "fp-residual")]
    FpResidual(ConfigArg),
    /// Run the acceptance suite.
    Accept {
        #[arg(long, default_value = "fast")]
        tier: String,
        /// Optional TOML with `tier`, `seed`, `only` and `tolerance_scale`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AcceptConfig {
    tier: Option<String>,
    seed: Option<u64>,
    #[serde(default)]
    only: Vec<String>,
    tolerance_scale: Option<f64>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Command::Accept { tier, config } = &cli.command {
        threads(cli.threads)?;
        let ac: AcceptConfig = match config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).map_err(|e| anyhow!("accept config parse error: {e}"))?
            }
            None => AcceptConfig::default(),
        };
        let mut opts = SuiteOptions::new(Tier::parse(ac.tier.as_deref().unwrap_or(tier))?);
        if let Some(s) = cli.seed.or(ac.seed) {
            opts.seed = s;
        }
        opts.only = ac.only;
        if let Some(s) = ac.tolerance_scale {
            opts.tolerance_scale = s;
        }
        let report = acceptance_suite(opts)?;
        println!("{report}");
        if let Some(out) = &cli.out {
            fs::create_dir_all(out)?;
            let f = report.table().write(&out.join("accept.csv"))?;
            write_manifest(out, "accept", &[], 0, &[f])?;
        }
        return Ok(report.pass());
    }

    let (name, path) = match &cli.command {
        Command::Simulate(c) => ("simulate", &c.config),
        Command::Picard(c) => ("picard", &c.config),
        Command::Couple(c) => ("couple", &c.config),
        Command::Dist(c) => ("dist", &c.config),
        Command::GirsanovCheck(c) => ("girsanov-check", &c.config),
        Command::Validate(c) => ("validate", &c.config),
        Command::FpResidual(c) => ("fp-residual", &c.config),
        Command::Accept { .. } => unreachable!("handled above"),
    };
    let (mut cfg, bytes) = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    threads(cli.threads.or(cfg.threads))?;
    let out = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let config_dir = path.parent().map(PathBuf::from).unwrap_or_default();
    let outcome: Outcome = match &cli.command {
        Command::Simulate(_) => commands::simulate(&cfg, &out),
        Command::Picard(_) => commands::picard(&cfg, &out),
        Command::Couple(_) => commands::couple(&cfg, &out),
        Command::Dist(_) => commands::dist(&cfg, &config_dir, &out),
        Command::GirsanovCheck(_) => commands::girsanov_check(&cfg, &out),
        Command::Validate(_) => commands::validate(&cfg, &out),
        Command::FpResidual(_) => commands::fp_residual(&cfg, &out),
        Command::Accept { .. } => unreachable!("handled above"),
    }
    .with_context(|| format!("{name} failed for {}", path.display()))?;
    write_manifest(&out, name, &bytes, cfg.seed, &outcome.files)?;
    println!("{name}: {}", outcome.summary);
    Ok(outcome.pass)
}
