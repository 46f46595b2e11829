//! Experiment recipes: evolution campaigns, flexibility and scalability
//! re-tests, single-episode behavior analysis, and bit-exact replay.
//!
//! Every output file is content-deterministic (no timestamps, no
//! absolute paths), so re-running an experiment from its manifest must
//! reproduce each artifact byte for byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::manifest::{compare_outputs, ReplayReport, RunManifest};
use crate::controller::{Genotype, ReservoirController, ReservoirWeights};
use crate::de::{evolve, GenerationLog, SwarmEvaluator};
use crate::env::{Arena, SpawnSpec};
use crate::error::{Error, Result};
use crate::metrics::{summarize_run, EvalRecord, RunSummary};
use crate::rng::{derive_seed, Stream, STREAM_RESERVOIR};
use crate::sim::{run_episode, Recorder};

const TAG_EVOLVE: u64 = 10;
const TAG_FLEX: u64 = 20;
const TAG_SCAL: u64 = 30;
const TAG_BEHAVIOR: u64 = 40;

/// Spawn boxes scale with sqrt(swarm size / this baseline) so robot
/// density at spawn stays constant across scalability conditions.
pub const SCALABILITY_BASELINE_SWARM: f64 = 14.0;

pub const FITNESS_TABLE: &str = "fitness_by_generation.tsv";

/// The champion of one evolutionary condition, with everything needed
/// to rebuild its controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestController {
    pub arena_size: f64,
    pub repetition: usize,
    pub generation: usize,
    pub fitness: f64,
    pub reservoir_seed: u64,
    pub genotype: Genotype,
}

impl BestController {
    pub fn controller(&self, config: &ExperimentConfig) -> ReservoirController {
        ReservoirController::new(
            ReservoirWeights::generate(self.reservoir_seed),
            self.genotype.clone(),
            config.activation,
            config.v_mapping,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("controller json", e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
struct RunMeta {
    arena_size: f64,
    repetition: usize,
    run_seed: u64,
    reservoir_seed: u64,
    ring_radius_m: f64,
    box_side_m: f64,
    activation: crate::controller::Activation,
    v_mapping: crate::controller::VMapping,
    episodes_run: usize,
    best_fitness: f64,
}

pub struct EvolutionOutput {
    pub best_per_arena: Vec<BestController>,
    pub episodes_total: usize,
    pub manifest: RunManifest,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool builds")
            .install(f)
    }
}

fn finalize_or_mark_partial<T>(
    kind: &str,
    config: &ExperimentConfig,
    extra: serde_json::Map<String, serde_json::Value>,
    out_dir: &Path,
    result: Result<T>,
) -> Result<(T, RunManifest)> {
    let mut manifest = RunManifest::new(kind, config.clone());
    manifest.extra = extra;
    match result {
        Ok(value) => {
            let manifest = manifest.finalize(out_dir)?;
            Ok((value, manifest))
        }
        Err(e) => {
            manifest.partial = true;
            let _ = manifest.finalize(out_dir);
            Err(e)
        }
    }
}

/// Runs the full evolutionary campaign: every configured arena times
/// `repetitions` independent runs, each persisted as an append-only
/// generation log plus metadata, then aggregated into a per-generation
/// fitness table and one champion controller per arena.
pub fn run_evolution(config: &ExperimentConfig, out_dir: &Path) -> Result<EvolutionOutput> {
    config.validate()?;
    create_dir(out_dir)?;
    let result = with_pool(config.workers, || evolution_inner(config, out_dir));
    let (output, manifest) =
        finalize_or_mark_partial("evolve", config, serde_json::Map::new(), out_dir, result)?;
    Ok(EvolutionOutput {
        best_per_arena: output.0,
        episodes_total: output.1,
        manifest,
    })
}

fn evolution_inner(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<(Vec<BestController>, usize)> {
    let mut best_per_arena = Vec::new();
    let mut episodes_total = 0;
    let mut all_logs: Vec<(f64, Vec<Vec<GenerationLog>>)> = Vec::new();

    for (ai, &size) in config.arena_sizes.iter().enumerate() {
        let arena = config.arena(size)?;
        let spawn = config.spawn_spec(size, config.swarm_size)?;
        let mut best: Option<BestController> = None;
        let mut arena_logs = Vec::new();

        for rep in 0..config.repetitions {
            let run_seed = derive_seed(
                config.master_seed,
                TAG_EVOLVE,
                ai as u64 * 1_000_000 + rep as u64,
            );
            let reservoir_seed = derive_seed(run_seed, STREAM_RESERVOIR, 0);
            let reservoir = ReservoirWeights::generate(reservoir_seed);
            let evaluator = SwarmEvaluator {
                arena: &arena,
                spawn,
                robot: config.robot,
                sim: config.sim,
                reservoir: &reservoir,
                activation: config.activation,
                v_mapping: config.v_mapping,
            };

            let rep_dir = out_dir.join(format!("arena{size}")).join(format!("rep{rep:02}"));
            create_dir(&rep_dir)?;
            let log_path = rep_dir.join("generations.jsonl");
            let log_file = fs::File::create(&log_path)
                .map_err(|e| Error::io(log_path.display().to_string(), e))?;
            let mut writer = std::io::BufWriter::new(log_file);

            let outcome = evolve(&config.de, &evaluator, &Stream::new(run_seed), |log| {
                let line = serde_json::to_string(log).expect("generation log serializes");
                writeln!(writer, "{line}")
                    .map_err(|e| Error::io(log_path.display().to_string(), e))
            })?;
            writer
                .flush()
                .map_err(|e| Error::io(log_path.display().to_string(), e))?;

            let final_log = outcome.logs.last().expect("at least generation 0");
            write_file(
                &rep_dir.join("best_genotype.txt"),
                &format!("{}\n", final_log.best_genotype.to_line()),
            )?;
            let meta = RunMeta {
                arena_size: size,
                repetition: rep,
                run_seed,
                reservoir_seed,
                ring_radius_m: spawn.ring_radius_m,
                box_side_m: spawn.box_side_m,
                activation: config.activation,
                v_mapping: config.v_mapping,
                episodes_run: outcome.episodes_run,
                best_fitness: final_log.best_fitness,
            };
            write_file(
                &rep_dir.join("meta.json"),
                &serde_json::to_string_pretty(&meta).expect("meta serializes"),
            )?;

            if config.progress {
                eprintln!(
                    "arena {size} rep {rep}: best fitness {:.4} after {} generations ({} episodes)",
                    final_log.best_fitness, config.de.generations, outcome.episodes_run
                );
            }

            let candidate = BestController {
                arena_size: size,
                repetition: rep,
                generation: final_log.generation,
                fitness: final_log.best_fitness,
                reservoir_seed,
                genotype: final_log.best_genotype.clone(),
            };
            if best.as_ref().map_or(true, |b| candidate.fitness > b.fitness) {
                best = Some(candidate);
            }

            episodes_total += outcome.episodes_run;
            arena_logs.push(outcome.logs);
        }

        let best = best.expect("at least one repetition ran");
        write_file(
            &out_dir.join(format!("best_controller_arena{size}.json")),
            &serde_json::to_string_pretty(&best).expect("controller serializes"),
        )?;
        best_per_arena.push(best);
        all_logs.push((size, arena_logs));
    }

    let table = fitness_table(&all_logs);
    write_file(&out_dir.join(FITNESS_TABLE), &table)?;
    Ok((best_per_arena, episodes_total))
}

/// Mean/std of the population-mean fitness and mean/max of the best
/// fitness per generation, aggregated over repetitions.
fn fitness_table(all_logs: &[(f64, Vec<Vec<GenerationLog>>)]) -> String {
    let mut out = String::from(
        "arena\tgeneration\tmean_fitness_avg\tmean_fitness_std\tbest_fitness_avg\tbest_fitness_max\n",
    );
    for (size, reps) in all_logs {
        let generations = reps.iter().map(|logs| logs.len()).min().unwrap_or(0);
        for g in 0..generations {
            let means: Vec<f64> = reps.iter().map(|logs| logs[g].mean_fitness).collect();
            let bests: Vec<f64> = reps.iter().map(|logs| logs[g].best_fitness).collect();
            let n = means.len() as f64;
            let mean_avg = means.iter().sum::<f64>() / n;
            let mean_std =
                (means.iter().map(|m| (m - mean_avg).powi(2)).sum::<f64>() / n).sqrt();
            let best_avg = bests.iter().sum::<f64>() / n;
            let best_max = bests.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.push_str(&format!(
                "{size}\t{g}\t{mean_avg}\t{mean_std}\t{best_avg}\t{best_max}\n"
            ));
        }
    }
    out
}

/// Re-derives the aggregate fitness table from the generation logs on
/// disk; the table is a pure function of those logs.
pub fn export_tables(run_dir: &Path) -> Result<PathBuf> {
    let manifest = RunManifest::read(run_dir)?;
    if manifest.kind != "evolve" {
        return Err(Error::invalid(format!(
            "export recomputes evolve tables, not '{}' runs",
            manifest.kind
        )));
    }
    let config = manifest.config;
    let mut all_logs = Vec::new();
    for &size in &config.arena_sizes {
        let mut reps = Vec::new();
        for rep in 0..config.repetitions {
            let path = run_dir
                .join(format!("arena{size}"))
                .join(format!("rep{rep:02}"))
                .join("generations.jsonl");
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            let logs: Vec<GenerationLog> = text
                .lines()
                .map(|line| {
                    serde_json::from_str(line)
                        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
                })
                .collect::<Result<_>>()?;
            reps.push(logs);
        }
        all_logs.push((size, reps));
    }
    let table_path = run_dir.join(FITNESS_TABLE);
    write_file(&table_path, &fitness_table(&all_logs))?;
    Ok(table_path)
}

/// Loads the champion controllers an evolution run wrote (one per
/// arena, in the run's arena order).
pub fn load_best_controllers(evolve_dir: &Path) -> Result<Vec<BestController>> {
    let manifest = RunManifest::read(evolve_dir)?;
    let mut out = Vec::new();
    for &size in &manifest.config.arena_sizes {
        let path = evolve_dir.join(format!("best_controller_arena{size}.json"));
        let text =
            fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        out.push(
            serde_json::from_str(&text)
                .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?,
        );
    }
    Ok(out)
}

struct EpisodeJob {
    arena_index: usize,
    spawn: SpawnSpec,
    controller: ReservoirController,
    seed: u64,
}

fn run_summary_job(
    job: &EpisodeJob,
    arenas: &[Arena],
    config: &ExperimentConfig,
) -> Result<RunSummary> {
    let arena = &arenas[job.arena_index];
    let record = run_episode(
        arena,
        &job.spawn,
        &config.robot,
        &job.controller,
        &config.sim,
        &mut Stream::new(job.seed),
        Recorder::Full,
    )?;
    summarize_run(&record, arena.center())
}

fn summary_row(prefix: &str, seed: u64, s: &RunSummary) -> String {
    format!(
        "{prefix}\t{seed}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        s.fitness,
        s.mean_order,
        s.max_order,
        s.total_collisions,
        s.displacement_toward_max,
        s.start_mean_field,
        s.end_mean_field
    )
}

const SUMMARY_COLUMNS: &str = "seed\tfitness\tmean_order\tmax_order\ttotal_collisions\tdisplacement_toward_max\tstart_mean_field\tend_mean_field";

fn write_controller_inputs(out_dir: &Path, controllers: &[BestController]) -> Result<()> {
    let inputs = out_dir.join("inputs");
    create_dir(&inputs)?;
    for c in controllers {
        write_file(
            &inputs.join(format!("controller_arena{}.json", c.arena_size)),
            &serde_json::to_string_pretty(c).expect("controller serializes"),
        )?;
    }
    Ok(())
}

fn load_controller_inputs(run_dir: &Path, arena_sizes: &[f64]) -> Result<Vec<BestController>> {
    arena_sizes
        .iter()
        .map(|size| {
            let path = run_dir.join("inputs").join(format!("controller_arena{size}.json"));
            let text =
                fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
        })
        .collect()
}

/// Cross-validates each champion controller in every configured arena,
/// `repetitions` episodes per cell.
pub fn run_flexibility(
    controllers: &[BestController],
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunManifest> {
    if controllers.is_empty() {
        return Err(Error::invalid("flexibility needs at least one controller"));
    }
    config.validate()?;
    create_dir(out_dir)?;
    let result = with_pool(config.workers, || {
        flexibility_inner(controllers, config, out_dir)
    });
    let (_, manifest) =
        finalize_or_mark_partial("flexibility", config, serde_json::Map::new(), out_dir, result)?;
    Ok(manifest)
}

fn flexibility_inner(
    controllers: &[BestController],
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<()> {
    write_controller_inputs(out_dir, controllers)?;
    let arenas: Vec<Arena> = config
        .arena_sizes
        .iter()
        .map(|&s| config.arena(s))
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    let mut labels = Vec::new();
    for (ci, best) in controllers.iter().enumerate() {
        for (ai, &size) in config.arena_sizes.iter().enumerate() {
            let spawn = config.spawn_spec(size, config.swarm_size)?;
            for rep in 0..config.repetitions {
                let index = ((ci * config.arena_sizes.len() + ai) * config.repetitions + rep) as u64;
                jobs.push(EpisodeJob {
                    arena_index: ai,
                    spawn,
                    controller: best.controller(config),
                    seed: derive_seed(config.master_seed, TAG_FLEX, index),
                });
                labels.push(format!("{}\t{size}\t{rep}", best.arena_size));
            }
        }
    }

    let summaries: Vec<Result<RunSummary>> = jobs
        .par_iter()
        .map(|job| run_summary_job(job, &arenas, config))
        .collect();

    let mut table = format!("controller_arena\ttest_arena\trepetition\t{SUMMARY_COLUMNS}\n");
    for ((job, label), summary) in jobs.iter().zip(labels).zip(summaries) {
        table.push_str(&summary_row(&label, job.seed, &summary?));
    }
    write_file(&out_dir.join("flexibility.tsv"), &table)?;
    if config.progress {
        eprintln!("flexibility: {} episodes summarized", jobs.len());
    }
    Ok(())
}

/// Re-tests each champion in its own arena across the configured swarm
/// sizes. The spawn box is rescaled to hold density constant, and the
/// ring radius shrinks when a bigger box would otherwise leave the
/// arena.
pub fn run_scalability(
    controllers: &[BestController],
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunManifest> {
    if controllers.is_empty() {
        return Err(Error::invalid("scalability needs at least one controller"));
    }
    config.validate()?;
    create_dir(out_dir)?;
    let result = with_pool(config.workers, || {
        scalability_inner(controllers, config, out_dir)
    });
    let (_, manifest) =
        finalize_or_mark_partial("scalability", config, serde_json::Map::new(), out_dir, result)?;
    Ok(manifest)
}

pub fn scaled_box_side(box_side_m: f64, swarm_size: usize) -> f64 {
    box_side_m * (swarm_size as f64 / SCALABILITY_BASELINE_SWARM).sqrt()
}

fn scalability_inner(
    controllers: &[BestController],
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<()> {
    write_controller_inputs(out_dir, controllers)?;
    let arenas: Vec<Arena> = controllers
        .iter()
        .map(|c| config.arena(c.arena_size))
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    let mut labels = Vec::new();
    for (ci, best) in controllers.iter().enumerate() {
        let size = best.arena_size;
        for (si, &n) in config.scalability_swarm_sizes.iter().enumerate() {
            let box_side = scaled_box_side(config.box_side_m, n);
            if box_side / 2.0 > size / 2.0 {
                return Err(Error::invalid(format!(
                    "a {box_side:.2} m spawn box cannot fit a {size} m arena"
                )));
            }
            let ring = config.ring_radius(size).min(size / 2.0 - box_side / 2.0);
            let spawn = SpawnSpec::new(ring, box_side, n)?;
            for rep in 0..config.repetitions {
                let index =
                    ((ci * config.scalability_swarm_sizes.len() + si) * config.repetitions + rep) as u64;
                jobs.push(EpisodeJob {
                    arena_index: ci,
                    spawn,
                    controller: best.controller(config),
                    seed: derive_seed(config.master_seed, TAG_SCAL, index),
                });
                labels.push(format!("{size}\t{n}\t{box_side}\t{ring}\t{rep}"));
            }
        }
    }

    let summaries: Vec<Result<RunSummary>> = jobs
        .par_iter()
        .map(|job| run_summary_job(job, &arenas, config))
        .collect();

    let mut table = format!(
        "arena\tswarm_size\tbox_side_m\tring_radius_m\trepetition\t{SUMMARY_COLUMNS}\n"
    );
    for ((job, label), summary) in jobs.iter().zip(labels).zip(summaries) {
        table.push_str(&summary_row(&label, job.seed, &summary?));
    }
    write_file(&out_dir.join("scalability.tsv"), &table)?;
    if config.progress {
        eprintln!("scalability: {} episodes summarized", jobs.len());
    }
    Ok(())
}

/// One fully recorded episode: metric traces, trajectories, pose
/// snapshots at the configured timestamps, and a summary row.
pub fn run_behavior(
    controller: &BestController,
    arena_size: f64,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<EvalRecord> {
    config.validate()?;
    create_dir(out_dir)?;
    let mut extra = serde_json::Map::new();
    extra.insert("arena_size".into(), serde_json::json!(arena_size));
    let result = behavior_inner(controller, arena_size, config, out_dir);
    let (record, _) = finalize_or_mark_partial("behavior", config, extra, out_dir, result)?;
    Ok(record)
}

fn behavior_inner(
    controller: &BestController,
    arena_size: f64,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<EvalRecord> {
    let inputs = out_dir.join("inputs");
    create_dir(&inputs)?;
    write_file(
        &inputs.join("controller.json"),
        &serde_json::to_string_pretty(controller).expect("controller serializes"),
    )?;

    let arena = config.arena(arena_size)?;
    let spawn = config.spawn_spec(arena_size, config.swarm_size)?;
    let seed = derive_seed(config.master_seed, TAG_BEHAVIOR, 0);
    let record = run_episode(
        &arena,
        &spawn,
        &config.robot,
        &controller.controller(config),
        &config.sim,
        &mut Stream::new(seed),
        Recorder::Full,
    )?;

    let cp = config.sim.control_period;
    let mut metrics = String::from("t\tf\torder\tcollisions\n");
    for (k, ((f, phi), col)) in record
        .f_trace
        .iter()
        .zip(&record.order_trace)
        .zip(&record.collision_trace)
        .enumerate()
    {
        metrics.push_str(&format!("{:.3}\t{f}\t{phi}\t{col}\n", k as f64 * cp));
    }
    write_file(&out_dir.join("metrics.tsv"), &metrics)?;

    let steps = record.f_trace.len();
    let mut trajectories = String::from("t\trobot\tx\ty\ttheta\n");
    for k in 0..steps {
        for (robot, traj) in record.trajectories.iter().enumerate() {
            let p = &traj[k];
            trajectories.push_str(&format!(
                "{:.3}\t{robot}\t{}\t{}\t{}\n",
                k as f64 * cp,
                p.x,
                p.y,
                p.heading
            ));
        }
    }
    write_file(&out_dir.join("trajectories.tsv"), &trajectories)?;

    let mut snapshots = String::from("t\trobot\tx\ty\ttheta\n");
    for &t in &config.snapshot_times_s {
        let k = ((t / cp).round() as usize).min(steps.saturating_sub(1));
        for (robot, traj) in record.trajectories.iter().enumerate() {
            let p = &traj[k];
            snapshots.push_str(&format!(
                "{:.3}\t{robot}\t{}\t{}\t{}\n",
                k as f64 * cp,
                p.x,
                p.y,
                p.heading
            ));
        }
    }
    write_file(&out_dir.join("snapshots.tsv"), &snapshots)?;

    let summary = summarize_run(&record, arena.center())?;
    let mut table = format!("{SUMMARY_COLUMNS}\n");
    table.push_str(&format!(
        "{seed}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        summary.fitness,
        summary.mean_order,
        summary.max_order,
        summary.total_collisions,
        summary.displacement_toward_max,
        summary.start_mean_field,
        summary.end_mean_field
    ));
    write_file(&out_dir.join("summary.tsv"), &table)?;

    Ok(record)
}

/// Re-runs a finished experiment from its manifest into `scratch_dir`
/// and compares every artifact byte for byte.
pub fn replay_run(run_dir: &Path, scratch_dir: &Path) -> Result<ReplayReport> {
    let manifest = RunManifest::read(run_dir)?;
    let mut config = manifest.config.clone();
    config.progress = false;
    create_dir(scratch_dir)?;
    match manifest.kind.as_str() {
        "evolve" => {
            run_evolution(&config, scratch_dir)?;
        }
        "flexibility" => {
            let controllers = load_controller_inputs(run_dir, &config.arena_sizes)?;
            run_flexibility(&controllers, &config, scratch_dir)?;
        }
        "scalability" => {
            let manifest_controllers: Vec<BestController> = {
                // scalability inputs are keyed by each controller's own arena
                let inputs = run_dir.join("inputs");
                let mut found = Vec::new();
                for &size in &config.arena_sizes {
                    let path = inputs.join(format!("controller_arena{size}.json"));
                    if path.exists() {
                        let text = fs::read_to_string(&path)
                            .map_err(|e| Error::io(path.display().to_string(), e))?;
                        found.push(serde_json::from_str(&text).map_err(|e| {
                            Error::parse(path.display().to_string(), e.to_string())
                        })?);
                    }
                }
                found
            };
            run_scalability(&manifest_controllers, &config, scratch_dir)?;
        }
        "behavior" => {
            let path = run_dir.join("inputs").join("controller.json");
            let text =
                fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let controller: BestController = serde_json::from_str(&text)
                .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
            let arena_size = manifest
                .extra
                .get("arena_size")
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::invalid("behavior manifest lacks arena_size"))?;
            run_behavior(&controller, arena_size, &config, scratch_dir)?;
        }
        other => return Err(Error::invalid(format!("unknown experiment kind '{other}'"))),
    }
    Ok(compare_outputs(&manifest, run_dir, scratch_dir))
}
