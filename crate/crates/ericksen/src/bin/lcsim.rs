//! Command-line simulator: run a scenario config, the convergence
//! study, or a mesh acuteness audit.

use clap::{Parser, Subcommand};
use ericksen::config::ConfigMap;
use ericksen::error::Error;
use ericksen::mesh::check_weak_acute;
use ericksen::scenario::{eoc_run, run_scenario, ScenarioConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lcsim", about = "Ericksen liquid-crystal equilibrium simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a config file.
    Run {
        /// Path to a key-value config file.
        config: PathBuf,
    },
    /// Plane-defect convergence study on the unit cube.
    Eoc {
        /// Comma-separated mesh levels, e.g. 3,4,5.
        #[arg(long, default_value = "3,4,5")]
        levels: String,
        #[arg(long, default_value_t = 0.2)]
        kappa: f64,
    },
    /// Weak-acuteness audit of the mesh a config would build.
    CheckMesh {
        config: PathBuf,
    },
    /// Print the version.
    Version,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_FLOW: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Io(_) | Error::Mesh(_) | Error::Model(_) => {
                    ExitCode::from(EXIT_CONFIG)
                }
                Error::Flow(_) | Error::Solver(_) | Error::Linalg(_) => ExitCode::from(EXIT_FLOW),
            }
        }
    }
}

fn run(cli: Cli) -> ericksen::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)?;
            let map = ConfigMap::parse(&text)?;
            let cfg = ScenarioConfig::from_config(&map)?;
            let result = run_scenario(&cfg)?;
            let last = result.records.last();
            println!(
                "scenario {} finished after {} iterations (total energy {})",
                cfg.kind.name(),
                result.records.len(),
                last.map(|r| r.energy.total).unwrap_or(f64::NAN)
            );
            println!(
                "defect nodes: {} (threshold {}), centroid ({:.4}, {:.4}, {:.4}), equatorial radius {:.4}, ring radius {:.4}, clusters {}",
                result.defects.nodes.len(),
                cfg.defect_threshold,
                result.defects.centroid.x,
                result.defects.centroid.y,
                result.defects.centroid.z,
                result.defects.equatorial_radius,
                result.ring_radius,
                result.defects.n_clusters
            );
            Ok(())
        }
        Command::Eoc { levels, kappa } => {
            let levels: Vec<usize> = levels
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad level '{t}'")))
                })
                .collect::<Result<_, _>>()?;
            let report = eoc_run(&levels, kappa, None)?;
            print!("{}", report.table_string());
            Ok(())
        }
        Command::CheckMesh { config } => {
            let text = std::fs::read_to_string(&config)?;
            let map = ConfigMap::parse(&text)?;
            let cfg = ScenarioConfig::from_config(&map)?;
            let mesh = cfg.build_mesh()?;
            let report = check_weak_acute(&mesh, 1e-12)?;
            println!(
                "vertices {}, cells {}, worst off-diagonal k_ij = {:.6e} at pair {:?}",
                mesh.n_vertices(),
                mesh.n_cells(),
                report.worst_k_offdiag,
                report.worst_pair
            );
            if report.pass {
                println!("weakly acute: PASS");
                Ok(())
            } else {
                Err(Error::Mesh("mesh is not weakly acute".into()))
            }
        }
        Command::Version => {
            println!("lcsim {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}
