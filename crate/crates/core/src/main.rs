use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use dweb::cache::Policy;
use dweb::harness::{run_matrix, run_scenario, write_outputs, ScenarioConfig, Sweep};
use dweb::simnet::build_topology;

#[derive(Parser)]
#[command(name = "dweb", about = "DWeb mesh and ledger simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Scenario config file (flat `key = value`); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    policy: Option<Policy>,
    #[arg(long)]
    gateways: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv, summary.csv and config.txt.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a sweep file: every combination of listed values times `seeds`.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: Option<Policy>,
        #[arg(long)]
        gateways: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the topology edge list for a scenario.
    Topo {
        #[command(flatten)]
        overrides: Overrides,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(o: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = match &o.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(p) = o.policy {
        cfg.policy = p;
    }
    if let Some(g) = o.gateways {
        cfg.gateway_count = g;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { overrides, out } => {
            let cfg = load(&overrides)?;
            let t = Instant::now();
            let m = run_scenario(&cfg)?;
            write_outputs(&cfg, &m, &out)?;
            let t_all = m.totals();
            println!(
                "{} gateways={} seed={} requests={} hit_ratio={:.4} local={:.4} failures={} ({:.1}s)",
                cfg.policy,
                cfg.gateway_count,
                cfg.seed,
                t_all.sample_requests,
                m.final_hit_ratio().unwrap_or(f64::NAN),
                m.local_hit_ratio().unwrap_or(f64::NAN),
                t_all.failures,
                t.elapsed().as_secs_f64()
            );
        }
        Command::Matrix {
            config,
            policy,
            gateways,
            out,
        } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut sweep = Sweep::parse(&text)?;
            for c in &mut sweep.configs {
                if let Some(p) = policy {
                    c.policy = p;
                }
                if let Some(g) = gateways {
                    c.gateway_count = g;
                }
            }
            let res = run_matrix(&sweep.configs, &sweep.seeds, Some(&out))?;
            for c in &res.cells {
                if let Err(e) = &c.result {
                    eprintln!("cell {} seed {}: {e}", c.config_index, c.seed);
                }
            }
            print!("{}", res.aggregate_csv());
        }
        Command::Topo { overrides, out } => {
            let cfg = load(&overrides)?;
            let topo = build_topology(cfg.gateway_count, cfg.consumers_per_gateway, cfg.seed)?;
            match out {
                Some(p) => std::fs::write(&p, topo.to_edge_list())?,
                None => print!("{}", topo.to_edge_list()),
            }
        }
    }
    Ok(())
}
