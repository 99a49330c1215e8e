//! `loggrowth`: runs one experiment and writes its CSV files.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use loggrowth_core::estimators::EstimatorKind;
use loggrowth_core::experiments::{self, ExperimentConfig, ExperimentId, DEFAULT_SCALE};
use loggrowth_core::DensityId;

#[derive(Parser, Debug)]
#[command(name = "loggrowth", version, about = "Log-growth policy-gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal gains and local constants for each density.
    Constants(Common),
    /// Estimator variance against the regularization level.
    Exp1(Common),
    /// Optimality gap against iterations with the known density.
    Exp2(Common),
    /// Sample complexity of the learners with the density unknown.
    Exp3(Common),
    /// Principal-value schemes and Newton convergence.
    Exp4(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// D1, D2, D3, D4 or `all`; may be repeated or comma separated.
    #[arg(long, value_delimiter = ',')]
    density: Vec<String>,
    /// Number of seeds; defaults to the nominal count times `--scale`.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SCALE)]
    scale: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed_base: Option<u64>,
    /// Comma-separated accuracy targets.
    #[arg(long, value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,
    /// Comma-separated regularization levels.
    #[arg(long, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    /// naive, paired or plugin.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long, default_value_t = 2)]
    kde_order: u32,
    #[arg(long, default_value_t = 1.0)]
    kde_ch: f64,
    /// Overrides the scaled sample or iteration count.
    #[arg(long)]
    samples: Option<usize>,
}

fn parse_estimator(s: &str) -> anyhow::Result<EstimatorKind> {
    Ok(match s {
        "naive" => EstimatorKind::Naive,
        "paired" => EstimatorKind::PairedOracle,
        "plugin" => EstimatorKind::PairedPlugin,
        _ => bail!("unknown estimator {s:?} (expected naive, paired or plugin)"),
    })
}

fn parse_densities(items: &[String]) -> anyhow::Result<Option<Vec<DensityId>>> {
    if items.is_empty() {
        return Ok(None);
    }
    let mut out = Vec::new();
    for item in items {
        if item.eq_ignore_ascii_case("all") {
            for id in DensityId::ALL {
                if !out.contains(&id) {
                    out.push(id);
                }
            }
            continue;
        }
        let id: DensityId = item.parse().with_context(|| format!("--density {item}"))?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    Ok(Some(out))
}

fn build(id: ExperimentId, c: Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(id, c.out);
    if let Some(ds) = parse_densities(&c.density)? {
        cfg.densities = ds;
    }
    cfg.seeds = c.seeds;
    cfg.scale = c.scale;
    if let Some(b) = c.seed_base {
        cfg.seed_base = b;
    }
    cfg.eta_grid = c.eta_grid;
    cfg.eps_grid = c.eps_grid;
    cfg.estimator = c.estimator.as_deref().map(parse_estimator).transpose()?;
    cfg.kde_order = c.kde_order;
    cfg.kde_ch = c.kde_ch;
    cfg.samples = c.samples;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (id, common) = match cli.command {
        Command::Constants(c) => (ExperimentId::Constants, c),
        Command::Exp1(c) => (ExperimentId::Exp1, c),
        Command::Exp2(c) => (ExperimentId::Exp2, c),
        Command::Exp3(c) => (ExperimentId::Exp3, c),
        Command::Exp4(c) => (ExperimentId::Exp4, c),
    };
    let result = build(id, common).and_then(|cfg| {
        cfg.validate()?;
        Ok(experiments::run(&cfg)?)
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("loggrowth {id}: {e:#}");
            ExitCode::FAILURE
        }
    }
}
