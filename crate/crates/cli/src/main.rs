//! Command-line front end for the swarm evolution experiments.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use evoswarm_core::harness::{
    export_tables, load_best_controllers, replay_run, run_behavior, run_evolution,
    run_flexibility, run_scalability, BestController, ExperimentConfig, Profile,
};

#[derive(Parser)]
#[command(
    name = "evoswarm",
    about = "Evolve and analyze swarm controllers for collective gradient ascent",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Profile {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Args)]
struct CommonOpts {
    /// Built-in parameter profile used when no config file is given.
    #[arg(long, value_enum, default_value = "desk")]
    profile: ProfileArg,
    /// TOML config file; unset keys fall back to desk-profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for episode evaluation (0 = rayon default).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print the fully resolved config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

impl CommonOpts {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ExperimentConfig::profile(self.profile.into()),
        };
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        config.progress = true;
        Ok(config)
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    /// Handles --print-config; returns true when the run should stop.
    fn maybe_print(&self, config: &ExperimentConfig) -> bool {
        if self.print_config {
            print!("{}", config.to_toml());
        }
        self.print_config
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolutionary campaign over all configured arenas.
    Evolve {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Cross-validate evolved champions across all arenas.
    Flexibility {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory of a finished evolve run.
        #[arg(long)]
        evolved: PathBuf,
    },
    /// Re-test evolved champions at different swarm sizes.
    Scalability {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        evolved: PathBuf,
    },
    /// Record one fully traced episode for a champion controller.
    Behavior {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory of a finished evolve run (controller per arena).
        #[arg(long, conflicts_with = "controller")]
        evolved: Option<PathBuf>,
        /// A best_controller_*.json file.
        #[arg(long)]
        controller: Option<PathBuf>,
        /// Arena side in meters; defaults to the controller's home arena.
        #[arg(long)]
        arena: Option<f64>,
    },
    /// Re-run a finished experiment from its manifest and compare every
    /// artifact byte for byte.
    Replay {
        /// Directory containing manifest.json.
        run: PathBuf,
        /// Where to regenerate the outputs (default: <run>.replay).
        #[arg(long)]
        scratch: Option<PathBuf>,
        /// Keep the regenerated copy instead of deleting it.
        #[arg(long)]
        keep: bool,
    },
    /// Recompute derived tables or print embedded defaults.
    Export {
        #[command(subcommand)]
        what: ExportCommand,
    },
}

#[derive(Subcommand)]
enum ExportCommand {
    /// Rebuild the aggregate fitness table of an evolve run from its
    /// generation logs.
    Tables { run: PathBuf },
    /// Print a profile's full default config as TOML.
    Defaults {
        #[arg(long, value_enum, default_value = "desk")]
        profile: ProfileArg,
    },
    /// Write the generated scalar-field map for an arena as a plain
    /// text grid file.
    Field {
        /// Arena side in meters.
        #[arg(long)]
        size: f64,
        #[arg(long, default_value_t = 0.1)]
        cell: f64,
        #[arg(long, default_value_t = 255.0)]
        gmax: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn load_controller(path: &Path) -> Result<BestController> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading controller {}", path.display()))?;
    BestController::from_json(&text)
        .with_context(|| format!("parsing controller {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Evolve { common } => {
            let config = common.resolve()?;
            if common.maybe_print(&config) {
                return Ok(());
            }
            let out = common.out_dir("runs/evolve");
            let output = run_evolution(&config, &out)?;
            println!("evolve run finished: {} episodes total", output.episodes_total);
            for best in &output.best_per_arena {
                println!(
                    "arena {:>4}: best fitness {:.4} (rep {}, reservoir seed {})",
                    best.arena_size, best.fitness, best.repetition, best.reservoir_seed
                );
            }
            println!("artifacts in {}", out.display());
        }
        Command::Flexibility { common, evolved } => {
            let config = common.resolve()?;
            if common.maybe_print(&config) {
                return Ok(());
            }
            let controllers = load_best_controllers(&evolved)?;
            let out = common.out_dir("runs/flexibility");
            run_flexibility(&controllers, &config, &out)?;
            println!("flexibility table in {}", out.join("flexibility.tsv").display());
        }
        Command::Scalability { common, evolved } => {
            let config = common.resolve()?;
            if common.maybe_print(&config) {
                return Ok(());
            }
            let controllers = load_best_controllers(&evolved)?;
            let out = common.out_dir("runs/scalability");
            run_scalability(&controllers, &config, &out)?;
            println!("scalability table in {}", out.join("scalability.tsv").display());
        }
        Command::Behavior {
            common,
            evolved,
            controller,
            arena,
        } => {
            let config = common.resolve()?;
            if common.maybe_print(&config) {
                return Ok(());
            }
            let best = match (&controller, &evolved) {
                (Some(path), _) => load_controller(path)?,
                (None, Some(dir)) => {
                    let all = load_best_controllers(dir)?;
                    let size = arena.unwrap_or(all[0].arena_size);
                    all.into_iter()
                        .find(|c| c.arena_size == size)
                        .with_context(|| format!("no champion for arena {size} in {}", dir.display()))?
                }
                (None, None) => bail!("behavior needs --controller or --evolved"),
            };
            let arena_size = arena.unwrap_or(best.arena_size);
            let out = common.out_dir("runs/behavior");
            let record = run_behavior(&best, arena_size, &config, &out)?;
            println!(
                "behavior episode: fitness {:.4}, {} control steps, traces in {}",
                record.fitness,
                record.f_trace.len(),
                out.display()
            );
        }
        Command::Replay { run, scratch, keep } => {
            let scratch = scratch.unwrap_or_else(|| {
                let mut name = run.file_name().unwrap_or_default().to_os_string();
                name.push(".replay");
                run.with_file_name(name)
            });
            let report = replay_run(&run, &scratch)?;
            println!(
                "replay of {} ({}): {} files compared",
                run.display(),
                report.kind,
                report.compared
            );
            for path in &report.mismatched {
                println!("  MISMATCH {path}");
            }
            for path in &report.missing {
                println!("  MISSING  {path}");
            }
            if !keep {
                let _ = std::fs::remove_dir_all(&scratch);
            }
            if report.is_exact() {
                println!("replay is bit-exact");
            } else {
                bail!("replay diverged");
            }
        }
        Command::Export { what } => match what {
            ExportCommand::Tables { run } => {
                let path = export_tables(&run)?;
                println!("rebuilt {}", path.display());
            }
            ExportCommand::Defaults { profile } => {
                print!("{}", ExperimentConfig::profile(profile.into()).to_toml());
            }
            ExportCommand::Field { size, cell, gmax, out } => {
                let field = evoswarm_core::env::make_radial_field(size, cell, gmax)?;
                field.write_to(&out)?;
                let (nx, ny) = field.dims();
                println!("wrote {nx}x{ny} field map to {}", out.display());
            }
        },
    }
    Ok(())
}
