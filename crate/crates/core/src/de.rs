//! Differential Evolution over controller genotypes: rand/1 mutation,
//! Bernoulli uniform crossover, noisy min-of-k evaluation and
//! deterministic (mu + lambda) selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Activation, Genotype, ReservoirController, ReservoirWeights, VMapping};
use crate::env::{Arena, SpawnSpec};
use crate::error::{Error, Result};
use crate::rng::{Stream, STREAM_EPISODE, STREAM_EVOLVE, STREAM_INIT};
use crate::sim::{run_episode, Recorder, RobotParams, SimConfig};

/// One member of the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genotype: Genotype,
    /// Min over the configured number of evaluation episodes; `None`
    /// until evaluated.
    pub fitness: Option<f64>,
    pub birth_generation: usize,
    pub eval_seeds: Vec<u64>,
}

impl Individual {
    pub fn unevaluated(genotype: Genotype, birth_generation: usize) -> Self {
        Individual {
            genotype,
            fitness: None,
            birth_generation,
            eval_seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    pub population_size: usize,
    pub generations: usize,
    pub f_scale: f64,
    pub cr: f64,
    pub eval_repeats: usize,
}

impl Default for DEConfig {
    fn default() -> Self {
        DEConfig {
            population_size: 25,
            generations: 100,
            f_scale: 0.5,
            cr: 0.9,
            eval_repeats: 2,
        }
    }
}

impl DEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::invalid(
                "population must hold at least 4 individuals to sample a triplet plus base",
            ));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::invalid("CR must lie in [0, 1]"));
        }
        if !(self.f_scale > 0.0) {
            return Err(Error::invalid("F must be positive"));
        }
        if self.eval_repeats < 1 {
            return Err(Error::invalid("eval_repeats must be at least 1"));
        }
        Ok(())
    }
}

/// rand/1 mutation: `y = x_i + F (x_j - x_k)`, clamped to gene bounds.
pub fn mutate(x_i: &Genotype, x_j: &Genotype, x_k: &Genotype, f_scale: f64) -> Genotype {
    let genes: Vec<f64> = x_i
        .genes()
        .iter()
        .zip(x_j.genes())
        .zip(x_k.genes())
        .map(|((&i, &j), &k)| i + f_scale * (j - k))
        .collect();
    Genotype::clamped(genes).expect("mutation of valid genotypes stays well formed")
}

/// Uniform crossover: per dimension keep `y` with probability `cr`,
/// otherwise fall back to the base `x_i`. Mask bits are drawn in
/// dimension order.
pub fn crossover(y: &Genotype, x_i: &Genotype, cr: f64, stream: &mut Stream) -> Genotype {
    let genes: Vec<f64> = y
        .genes()
        .iter()
        .zip(x_i.genes())
        .map(|(&yd, &xd)| if stream.bernoulli(cr) { yd } else { xd })
        .collect();
    Genotype::clamped(genes).expect("crossover of valid genotypes stays well formed")
}

/// Produces one candidate per population slot: draws three distinct
/// individuals uniformly, uses the first as the base vector, mutates
/// and crosses over.
pub fn generate_candidates(
    population: &[Individual],
    config: &DEConfig,
    stream: &mut Stream,
) -> Vec<Genotype> {
    assert!(population.len() >= 4, "need at least 4 individuals");
    (0..config.population_size)
        .map(|_| {
            let idx = stream.distinct_indices(population.len(), 3);
            let base = &population[idx[0]].genotype;
            let y = mutate(
                base,
                &population[idx[1]].genotype,
                &population[idx[2]].genotype,
                config.f_scale,
            );
            crossover(&y, base, config.cr, stream)
        })
        .collect()
}

/// Deterministic (mu + lambda) selection: parents and offspring pooled,
/// ranked by fitness (descending), age (older first) and insertion
/// order, the top `n` kept with their stored fitness.
pub fn select_survivors(
    old: Vec<Individual>,
    new: Vec<Individual>,
    n: usize,
) -> Result<Vec<Individual>> {
    let mut pool: Vec<(usize, Individual)> = old.into_iter().chain(new).enumerate().collect();
    for (insertion, ind) in &pool {
        if ind.fitness.is_none() {
            return Err(Error::Unevaluated(*insertion));
        }
    }
    pool.sort_by(|(ia, a), (ib, b)| {
        b.fitness
            .unwrap()
            .total_cmp(&a.fitness.unwrap())
            .then(a.birth_generation.cmp(&b.birth_generation))
            .then(ia.cmp(ib))
    });
    Ok(pool.into_iter().take(n).map(|(_, ind)| ind).collect())
}

/// Anything that can score a genotype given its episode seeds. The
/// returned value is the final (already min-aggregated) fitness.
pub trait Evaluator: Sync {
    fn evaluate(&self, genotype: &Genotype, seeds: &[u64]) -> Result<f64>;
}

/// Scores a genotype by running one swarm episode per seed and keeping
/// the lowest fitness.
pub struct SwarmEvaluator<'a> {
    pub arena: &'a Arena,
    pub spawn: SpawnSpec,
    pub robot: RobotParams,
    pub sim: SimConfig,
    pub reservoir: &'a ReservoirWeights,
    pub activation: Activation,
    pub v_mapping: VMapping,
}

impl Evaluator for SwarmEvaluator<'_> {
    fn evaluate(&self, genotype: &Genotype, seeds: &[u64]) -> Result<f64> {
        let controller = ReservoirController::new(
            self.reservoir.clone(),
            genotype.clone(),
            self.activation,
            self.v_mapping,
        );
        let mut worst = f64::INFINITY;
        for &seed in seeds {
            let record = run_episode(
                self.arena,
                &self.spawn,
                &self.robot,
                &controller,
                &self.sim,
                &mut Stream::new(seed),
                Recorder::Slim,
            )?;
            worst = worst.min(record.fitness);
        }
        Ok(worst)
    }
}

/// Per-generation log entry. Generation 0 describes the evaluated
/// initial population; later entries follow each selection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub std_fitness: f64,
    pub best_genotype: Genotype,
    /// Episode seeds used to evaluate this generation's candidates, one
    /// list per candidate. Survivors keep their stored fitness and are
    /// never re-evaluated.
    pub eval_seeds: Vec<Vec<u64>>,
    /// Evaluation failures demoted to zero fitness, if any.
    pub events: Vec<String>,
}

pub struct EvolveOutcome {
    pub logs: Vec<GenerationLog>,
    pub population: Vec<Individual>,
    /// Episodes dispatched over the whole run.
    pub episodes_run: usize,
}

fn summarize_population(
    population: &[Individual],
    generation: usize,
    eval_seeds: Vec<Vec<u64>>,
    events: Vec<String>,
) -> GenerationLog {
    let n = population.len() as f64;
    let mut best = &population[0];
    let mut sum = 0.0;
    for ind in population {
        let f = ind.fitness.expect("population evaluated");
        sum += f;
        if f > best.fitness.unwrap() {
            best = ind;
        }
    }
    let mean = sum / n;
    let var = population
        .iter()
        .map(|i| (i.fitness.unwrap() - mean).powi(2))
        .sum::<f64>()
        / n;
    GenerationLog {
        generation,
        best_fitness: best.fitness.unwrap(),
        mean_fitness: mean,
        std_fitness: var.sqrt(),
        best_genotype: best.genotype.clone(),
        eval_seeds,
        events,
    }
}

/// Evaluates a batch in parallel; results commit in candidate order.
/// Failures are demoted to zero fitness and reported as events.
fn evaluate_batch<E: Evaluator>(
    individuals: &mut [Individual],
    evaluator: &E,
    generation: usize,
) -> (Vec<String>, usize) {
    let results: Vec<Result<f64>> = individuals
        .par_iter()
        .map(|ind| evaluator.evaluate(&ind.genotype, &ind.eval_seeds))
        .collect();
    let mut events = Vec::new();
    let mut episodes = 0;
    for (slot, (ind, outcome)) in individuals.iter_mut().zip(results).enumerate() {
        episodes += ind.eval_seeds.len();
        match outcome {
            Ok(f) => ind.fitness = Some(f),
            Err(e) => {
                ind.fitness = Some(0.0);
                events.push(format!(
                    "generation {generation}, candidate {slot}: evaluation failed ({e}); fitness set to 0"
                ));
            }
        }
    }
    (events, episodes)
}

/// Runs the full optimization loop. All randomness is derived from
/// `run_stream`; `sink` receives each generation log as soon as it is
/// complete (for append-only persistence).
pub fn evolve<E: Evaluator>(
    config: &DEConfig,
    evaluator: &E,
    run_stream: &Stream,
    mut sink: impl FnMut(&GenerationLog) -> Result<()>,
) -> Result<EvolveOutcome> {
    config.validate()?;
    let n = config.population_size;
    let mut episodes_run = 0;

    let mut init_stream = run_stream.child(STREAM_INIT, 0);
    let mut population: Vec<Individual> = (0..n)
        .map(|_| Individual::unevaluated(Genotype::random(&mut init_stream), 0))
        .collect();

    let mut seed_stream = run_stream.child(STREAM_EPISODE, 0);
    for ind in &mut population {
        ind.eval_seeds = (0..config.eval_repeats).map(|_| seed_stream.next_u64()).collect();
    }
    let (events, episodes) = evaluate_batch(&mut population, evaluator, 0);
    episodes_run += episodes;

    let mut logs = Vec::with_capacity(config.generations + 1);
    let log = summarize_population(
        &population,
        0,
        population.iter().map(|i| i.eval_seeds.clone()).collect(),
        events,
    );
    sink(&log)?;
    logs.push(log);

    for generation in 1..=config.generations {
        let mut gen_stream = run_stream.child(STREAM_EVOLVE, generation as u64);
        let genotypes = generate_candidates(&population, config, &mut gen_stream);

        let mut seed_stream = run_stream.child(STREAM_EPISODE, generation as u64);
        let mut candidates: Vec<Individual> = genotypes
            .into_iter()
            .map(|g| {
                let mut ind = Individual::unevaluated(g, generation);
                ind.eval_seeds = (0..config.eval_repeats)
                    .map(|_| seed_stream.next_u64())
                    .collect();
                ind
            })
            .collect();

        let (events, episodes) = evaluate_batch(&mut candidates, evaluator, generation);
        episodes_run += episodes;
        let eval_seeds: Vec<Vec<u64>> = candidates.iter().map(|c| c.eval_seeds.clone()).collect();

        population = select_survivors(population, candidates, n)?;
        debug_assert_eq!(population.len(), n);

        let log = summarize_population(&population, generation, eval_seeds, events);
        sink(&log)?;
        logs.push(log);
    }

    Ok(EvolveOutcome {
        logs,
        population,
        episodes_run,
    })
}
