//! Differential-drive kinematics, quadrant sensing, circle-body
//! collision handling and the episode loop.
//!
//! One episode owns its robot states and is single-threaded; arenas and
//! controller weights are shared immutably, so independent episodes run
//! concurrently without coordination.

use serde::{Deserialize, Serialize};

use crate::controller::ReservoirController;
use crate::env::{spawn_swarm, Arena, SpawnSpec};
use crate::error::{Error, Result};
use crate::metrics::{order, EvalRecord, OrderNeighbors, Pose};
use crate::rng::Stream;

const PI: f64 = std::f64::consts::PI;
const TAU: f64 = std::f64::consts::TAU;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Physical robot constants. The paper only fixes the wheel speed limit;
/// body and axle sizes follow common desktop robots and can be
/// overridden in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    pub body_radius: f64,
    pub axle_length: f64,
    pub max_wheel_speed: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            body_radius: 0.06,
            axle_length: 0.12,
            max_wheel_speed: 0.14,
        }
    }
}

/// Pose and wheel state of one robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-pi, pi]`.
    pub heading: f64,
    pub left_wheel: f64,
    pub right_wheel: f64,
    pub body_radius: f64,
    pub axle_length: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, heading: f64, params: &RobotParams) -> Self {
        RobotState {
            x,
            y,
            heading: wrap_angle(heading),
            left_wheel: 0.0,
            right_wheel: 0.0,
            body_radius: params.body_radius,
            axle_length: params.axle_length,
        }
    }

    pub fn set_wheels(&mut self, left: f64, right: f64, max_wheel: f64) {
        self.left_wheel = left.clamp(-max_wheel, max_wheel);
        self.right_wheel = right.clamp(-max_wheel, max_wheel);
    }

    pub fn pose(&self) -> Pose {
        Pose {
            x: self.x,
            y: self.y,
            heading: self.heading,
        }
    }
}

/// Timing and sensing parameters of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub control_period: f64,
    pub episode_length: f64,
    pub sensor_range: f64,
    /// Neighbor definition used by the order metric.
    #[serde(default)]
    pub order_neighbors: OrderNeighbors,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.05,
            control_period: 0.1,
            episode_length: 600.0,
            sensor_range: 2.0,
            order_neighbors: OrderNeighbors::QuadrantSensed,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.control_period > 0.0 && self.episode_length > 0.0) {
            return Err(Error::invalid("sim durations must be positive"));
        }
        if !(self.sensor_range > 0.0) {
            return Err(Error::invalid("sensor range must be positive"));
        }
        let sub = self.control_period / self.dt;
        if (sub - sub.round()).abs() > 1e-9 || sub.round() < 1.0 {
            return Err(Error::invalid(
                "control_period must be an integer multiple of dt",
            ));
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.control_period / self.dt).round() as usize
    }

    pub fn physics_steps(&self) -> usize {
        (self.episode_length / self.dt).round() as usize
    }

    pub fn control_steps(&self) -> usize {
        self.physics_steps().div_ceil(self.substeps())
    }
}

/// Body-frame sensing sectors, 90 degrees each, Front centered on the
/// heading. Bearings are measured counterclockwise from the heading and
/// bins are half-open: Front `[-45, 45)`, Left `[45, 135)`,
/// Back `[135, 225)`, Right `[225, 315)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrant {
    Front,
    Back,
    Left,
    Right,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::Front,
        Quadrant::Back,
        Quadrant::Left,
        Quadrant::Right,
    ];

    /// Channel slot in the sensor vector layout (F, B, L, R).
    pub fn slot(self) -> usize {
        match self {
            Quadrant::Front => 0,
            Quadrant::Back => 1,
            Quadrant::Left => 2,
            Quadrant::Right => 3,
        }
    }

    /// Bin a body-frame bearing (radians, any range).
    pub fn of_bearing(rel_bearing: f64) -> Quadrant {
        let shifted = (rel_bearing + PI / 4.0).rem_euclid(TAU);
        match ((shifted / (PI / 2.0)) as usize).min(3) {
            0 => Quadrant::Front,
            1 => Quadrant::Left,
            2 => Quadrant::Back,
            _ => Quadrant::Right,
        }
    }
}

/// Distance of an empty quadrant reading.
pub const EMPTY_QUADRANT_DISTANCE: f64 = 2.0;

/// The 9 controller inputs, each normalized into `[-1, 1]`:
/// `(distance, relative heading)` for Front, Back, Left, Right, then the
/// local field value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorVector {
    pub channels: [f64; 9],
}

impl SensorVector {
    pub fn distance_channel(&self, q: Quadrant) -> f64 {
        self.channels[2 * q.slot()]
    }

    pub fn heading_channel(&self, q: Quadrant) -> f64 {
        self.channels[2 * q.slot() + 1]
    }

    pub fn field_channel(&self) -> f64 {
        self.channels[8]
    }
}

/// Raw reading of one quadrant before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrantReading {
    /// Index of the selected neighbor, if any.
    pub neighbor: Option<usize>,
    pub distance: f64,
    pub rel_heading: f64,
}

impl QuadrantReading {
    fn empty() -> Self {
        QuadrantReading {
            neighbor: None,
            distance: EMPTY_QUADRANT_DISTANCE,
            rel_heading: 0.0,
        }
    }
}

/// Sensor output with the per-quadrant neighbor selection kept around
/// (the order metric reuses exactly this perception).
#[derive(Debug, Clone, PartialEq)]
pub struct SenseResult {
    pub vector: SensorVector,
    /// Readings by slot (F, B, L, R).
    pub quadrants: [QuadrantReading; 4],
}

impl SenseResult {
    /// Distinct robots currently perceived (at most one per quadrant).
    pub fn perceived(&self) -> Vec<usize> {
        self.quadrants.iter().filter_map(|q| q.neighbor).collect()
    }
}

fn scan_quadrants<'a>(
    me: &RobotState,
    neighbors: impl Iterator<Item = (usize, &'a RobotState)>,
    sensor_range: f64,
) -> [QuadrantReading; 4] {
    let mut readings = [QuadrantReading::empty(); 4];
    for (idx, other) in neighbors {
        let dx = other.x - me.x;
        let dy = other.y - me.y;
        let dist = (dx * dx + dy * dy).sqrt();
        if dist >= sensor_range {
            continue;
        }
        let bearing = wrap_angle(dy.atan2(dx) - me.heading);
        let slot = Quadrant::of_bearing(bearing).slot();
        if dist < readings[slot].distance {
            readings[slot] = QuadrantReading {
                neighbor: Some(idx),
                distance: dist,
                rel_heading: wrap_angle(other.heading - me.heading),
            };
        }
    }
    readings
}

fn normalize(readings: &[QuadrantReading; 4], field_value: f64, g_max: f64) -> SensorVector {
    let mut channels = [0.0; 9];
    for (slot, r) in readings.iter().enumerate() {
        channels[2 * slot] = r.distance - 1.0;
        channels[2 * slot + 1] = r.rel_heading / PI;
    }
    channels[8] = 2.0 * field_value / g_max - 1.0;
    SensorVector { channels }
}

/// Senses for the robot at `me` within the full state slice. Neighbor
/// indices in the result refer to positions in `states`.
pub fn sense_detail(
    me: usize,
    states: &[RobotState],
    field: &crate::env::ScalarFieldGrid,
    sensor_range: f64,
) -> SenseResult {
    let robot = &states[me];
    let readings = scan_quadrants(
        robot,
        states.iter().enumerate().filter(|(i, _)| *i != me),
        sensor_range,
    );
    let vector = normalize(&readings, field.sample(robot.x, robot.y), field.g_max());
    SenseResult { vector, quadrants: readings }
}

/// Senses against an explicit neighbor list (which must exclude the
/// robot itself).
pub fn sense(
    robot: &RobotState,
    others: &[RobotState],
    field: &crate::env::ScalarFieldGrid,
    sensor_range: f64,
) -> SensorVector {
    let readings = scan_quadrants(robot, others.iter().enumerate(), sensor_range);
    normalize(&readings, field.sample(robot.x, robot.y), field.g_max())
}

/// Maps controller output to wheel speeds. `v` spans 0 (stop) to -1
/// (full forward); robots cannot reverse. `w` turns counterclockwise
/// for positive values. Out-of-range outputs clamp to their ranges
/// before conversion.
pub fn actuate(v: f64, w: f64, max_wheel: f64) -> (f64, f64) {
    let v = v.clamp(-1.0, 0.0);
    let w = w.clamp(-1.0, 1.0);
    let forward = -v * max_wheel;
    let turn = w * max_wheel;
    (
        (forward - turn).clamp(-max_wheel, max_wheel),
        (forward + turn).clamp(-max_wheel, max_wheel),
    )
}

const STRAIGHT_OMEGA_EPS: f64 = 1e-9;

/// Advances one robot by `dt` with exact arc integration.
pub fn step_kinematics(state: &RobotState, dt: f64) -> RobotState {
    let v = (state.left_wheel + state.right_wheel) / 2.0;
    let omega = (state.right_wheel - state.left_wheel) / state.axle_length;
    let mut next = *state;
    if omega.abs() < STRAIGHT_OMEGA_EPS {
        next.x += v * state.heading.cos() * dt;
        next.y += v * state.heading.sin() * dt;
        next.heading = wrap_angle(state.heading + omega * dt);
    } else {
        let theta2 = state.heading + omega * dt;
        let radius = v / omega;
        next.x += radius * (theta2.sin() - state.heading.sin());
        next.y -= radius * (theta2.cos() - state.heading.cos());
        next.heading = wrap_angle(theta2);
    }
    next
}

const RESOLVE_PASSES: usize = 16;
const RESOLVE_EPS: f64 = 1e-9;

/// Counts overlapping pairs and pushes them apart along the center line
/// (each robot moves half the overlap). The count comes from the first
/// sweep; projection passes repeat up to a cap because separating one
/// pair can create another overlap. Wall clamping runs last.
pub fn resolve_collisions(states: &mut [RobotState], arena: &Arena) -> usize {
    let n = states.len();
    let mut collisions = 0;
    for pass in 0..RESOLVE_PASSES {
        let mut any_overlap = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let min_dist = states[i].body_radius + states[j].body_radius;
                let dx = states[j].x - states[i].x;
                let dy = states[j].y - states[i].y;
                let dist = (dx * dx + dy * dy).sqrt();
                if dist >= min_dist {
                    continue;
                }
                if pass == 0 {
                    collisions += 1;
                }
                let overlap = min_dist - dist;
                if overlap <= RESOLVE_EPS {
                    continue;
                }
                any_overlap = true;
                // coincident centers have no direction; separate along x
                let (ux, uy) = if dist > 0.0 {
                    (dx / dist, dy / dist)
                } else {
                    (1.0, 0.0)
                };
                let half = overlap / 2.0;
                states[i].x -= ux * half;
                states[i].y -= uy * half;
                states[j].x += ux * half;
                states[j].y += uy * half;
            }
        }
        if !any_overlap {
            break;
        }
    }
    for s in states.iter_mut() {
        let (x, y) = arena.clamp_to_walls(s.x, s.y, s.body_radius);
        s.x = x;
        s.y = y;
    }
    collisions
}

/// How much an episode records beyond the metric traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Recorder {
    /// Metric traces only; trajectories stay empty.
    #[default]
    Slim,
    /// Metric traces plus per-robot pose series.
    Full,
}

#[derive(Serialize)]
struct EpisodeSetup<'a> {
    arena_size_m: f64,
    field_hash: &'a str,
    walls: bool,
    spawn: &'a SpawnSpec,
    robot: &'a RobotParams,
    sim: &'a SimConfig,
    controller: crate::controller::ControllerDescriptor,
}

fn episode_config_hash(
    arena: &Arena,
    spawn: &SpawnSpec,
    robot: &RobotParams,
    sim: &SimConfig,
    controller: &ReservoirController,
) -> String {
    let setup = EpisodeSetup {
        arena_size_m: arena.size_m(),
        field_hash: arena.field_hash(),
        walls: arena.has_walls(),
        spawn,
        robot,
        sim,
        controller: controller.descriptor(),
    };
    let json = serde_json::to_string(&setup).expect("episode setup serializes");
    crate::harness::sha256_hex(json.as_bytes())
}

/// Runs one full episode: every robot shares the controller weights,
/// senses every `control_period`, and the recorder captures the group
/// metrics at the same cadence. The stream is consumed by spawning
/// only, so an episode is a pure function of `(controller, seed,
/// configuration)`.
pub fn run_episode(
    arena: &Arena,
    spawn: &SpawnSpec,
    robot_params: &RobotParams,
    controller: &ReservoirController,
    sim: &SimConfig,
    stream: &mut Stream,
    recorder: Recorder,
) -> Result<EvalRecord> {
    sim.validate()?;
    let episode_seed = stream.seed();
    let mut states = spawn_swarm(arena, spawn, robot_params, stream)?;
    let n = states.len();
    let field = arena.field();
    let substeps = sim.substeps();
    let physics_steps = sim.physics_steps();
    let control_steps = sim.control_steps();

    let mut f_trace = Vec::with_capacity(control_steps);
    let mut order_trace = Vec::with_capacity(control_steps);
    let mut collision_trace = Vec::with_capacity(control_steps);
    let mut trajectories: Vec<Vec<Pose>> = match recorder {
        Recorder::Full => vec![Vec::with_capacity(control_steps); n],
        Recorder::Slim => Vec::new(),
    };

    let mut headings = vec![0.0; n];
    let mut neighbor_sets: Vec<Vec<usize>> = vec![Vec::new(); n];

    for step in 0..physics_steps {
        if step % substeps == 0 {
            let collisions = resolve_collisions(&mut states, arena);

            let mut f_sum = 0.0;
            for (i, s) in states.iter().enumerate() {
                f_sum += field.sample(s.x, s.y);
                headings[i] = s.heading;
            }
            let f_t = f_sum / n as f64;

            let sensed: Vec<SenseResult> = (0..n)
                .map(|i| sense_detail(i, &states, field, sim.sensor_range))
                .collect();
            for (i, r) in sensed.iter().enumerate() {
                neighbor_sets[i] = match sim.order_neighbors {
                    OrderNeighbors::QuadrantSensed => r.perceived(),
                    OrderNeighbors::AllInRange => (0..n)
                        .filter(|&j| {
                            j != i && {
                                let dx = states[j].x - states[i].x;
                                let dy = states[j].y - states[i].y;
                                (dx * dx + dy * dy).sqrt() < sim.sensor_range
                            }
                        })
                        .collect(),
                };
            }

            f_trace.push(f_t);
            order_trace.push(order(&headings, &neighbor_sets));
            collision_trace.push(collisions);
            if recorder == Recorder::Full {
                for (i, s) in states.iter().enumerate() {
                    trajectories[i].push(s.pose());
                }
            }

            for (i, r) in sensed.iter().enumerate() {
                let out = controller.forward(&r.vector);
                let (left, right) = actuate(out.v, out.w, robot_params.max_wheel_speed);
                states[i].set_wheels(left, right, robot_params.max_wheel_speed);
            }
        }

        for s in states.iter_mut() {
            *s = step_kinematics(s, sim.dt);
            let (x, y) = arena.clamp_to_walls(s.x, s.y, s.body_radius);
            s.x = x;
            s.y = y;
        }
    }

    let fitness = crate::metrics::fitness(&f_trace, field.g_max())?;
    Ok(EvalRecord {
        fitness,
        f_trace,
        order_trace,
        collision_trace,
        trajectories,
        episode_seed,
        config_hash: episode_config_hash(arena, spawn, robot_params, sim, controller),
    })
}
