//! Group-level measurements: fitness, heading order, collision traces
//! and per-episode summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A robot pose at one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Which robots count as "perceived neighbors" for the order metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrderNeighbors {
    /// The robots actually selected by the four quadrant sensors.
    #[default]
    QuadrantSensed,
    /// Every robot within sensor range.
    AllInRange,
}

/// Everything measured during one episode. `f_trace`, `order_trace`
/// and `collision_trace` have one entry per control step; trajectories
/// are only present when the episode ran with a full recorder.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Normalized episode fitness; equals `mean(f_trace) / g_max`.
    pub fitness: f64,
    /// Mean scalar value under the swarm at each control step.
    pub f_trace: Vec<f64>,
    /// Heading order at each control step.
    pub order_trace: Vec<f64>,
    /// Overlapping pairs found at each control step.
    pub collision_trace: Vec<usize>,
    /// Per-robot pose series (empty for slim recordings).
    pub trajectories: Vec<Vec<Pose>>,
    pub episode_seed: u64,
    pub config_hash: String,
}

/// Episode fitness: the f-trace summed left to right, normalized by
/// `g_max` and the trace length.
pub fn fitness(f_trace: &[f64], g_max: f64) -> Result<f64> {
    if f_trace.is_empty() {
        return Err(Error::invalid("fitness of an empty trace is undefined"));
    }
    if !(g_max > 0.0) {
        return Err(Error::invalid("g_max must be positive"));
    }
    let mut sum = 0.0;
    for &f in f_trace {
        if !(0.0..=g_max).contains(&f) {
            return Err(Error::invalid(format!(
                "trace value {f} outside [0, {g_max}]"
            )));
        }
        sum += f;
    }
    Ok(sum / (g_max * f_trace.len() as f64))
}

/// Heading order. Each agent contributes the resultant length of its
/// own heading unit vector plus those of its perceived neighbors; the
/// swarm order is the mean contribution.
///
/// An agent with no perceived neighbors contributes exactly 1 (the norm
/// of a single unit vector), so a fully dispersed swarm reads as
/// ordered; that is a property of the measure, kept as defined.
pub fn order(headings: &[f64], neighbor_sets: &[Vec<usize>]) -> f64 {
    debug_assert_eq!(headings.len(), neighbor_sets.len());
    if headings.is_empty() {
        return 1.0;
    }
    let mut total = 0.0;
    for (n, &theta) in headings.iter().enumerate() {
        let mut sx = theta.cos();
        let mut sy = theta.sin();
        for &p in &neighbor_sets[n] {
            sx += headings[p].cos();
            sy += headings[p].sin();
        }
        let count = (neighbor_sets[n].len() + 1) as f64;
        total += (sx * sx + sy * sy).sqrt() / count;
    }
    total / headings.len() as f64
}

/// One row of aggregate output describing a finished episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub fitness: f64,
    pub mean_order: f64,
    pub max_order: f64,
    pub total_collisions: usize,
    /// How much closer the swarm centroid ended to the field maximum.
    pub displacement_toward_max: f64,
    pub start_mean_field: f64,
    pub end_mean_field: f64,
}

/// Collapses a fully recorded episode into a summary row. `field_max`
/// is the position of the field maximum (the arena center for the
/// default map).
pub fn summarize_run(record: &EvalRecord, field_max: (f64, f64)) -> Result<RunSummary> {
    if record.f_trace.is_empty() {
        return Err(Error::invalid("cannot summarize an empty record"));
    }
    if record.trajectories.is_empty() || record.trajectories.iter().any(|t| t.is_empty()) {
        return Err(Error::invalid(
            "summary needs trajectories; run the episode with a full recorder",
        ));
    }
    let n = record.trajectories.len() as f64;
    let (mut sx, mut sy, mut ex, mut ey) = (0.0, 0.0, 0.0, 0.0);
    for t in &record.trajectories {
        let start = t.first().expect("checked non-empty");
        let end = t.last().expect("checked non-empty");
        sx += start.x;
        sy += start.y;
        ex += end.x;
        ey += end.y;
    }
    let (sx, sy, ex, ey) = (sx / n, sy / n, ex / n, ey / n);
    let dist = |x: f64, y: f64| ((x - field_max.0).powi(2) + (y - field_max.1).powi(2)).sqrt();

    let mean_order = record.order_trace.iter().sum::<f64>() / record.order_trace.len() as f64;
    let max_order = record
        .order_trace
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(RunSummary {
        fitness: record.fitness,
        mean_order,
        max_order,
        total_collisions: record.collision_trace.iter().sum(),
        displacement_toward_max: dist(sx, sy) - dist(ex, ey),
        start_mean_field: record.f_trace[0],
        end_mean_field: *record.f_trace.last().expect("non-empty"),
    })
}
