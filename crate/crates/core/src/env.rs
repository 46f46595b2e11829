//! Arenas, environmental scalar fields and randomized swarm spawning.
//!
//! The environment is a square arena carrying a discretized scalar map.
//! Robots sense only the value of the cell they stand in; the map is
//! immutable once built and shared freely across concurrent episodes.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sim::{wrap_angle, RobotParams, RobotState};

pub const DEFAULT_G_MAX: f64 = 255.0;
pub const DEFAULT_CELL_SIZE_M: f64 = 0.1;
pub const DEFAULT_BOX_SIDE_M: f64 = 3.0;
/// Spawn ring radius as a fraction of the arena side.
pub const DEFAULT_RING_RADIUS_FACTOR: f64 = 0.35;

const TAU: f64 = std::f64::consts::TAU;

/// Discretized scalar map over a rectangular area.
///
/// Cell values live in `[0, g_max]` and at least one cell holds exactly
/// `g_max`. Lookup is piecewise-constant with floor indexing; positions
/// outside the area clamp to the nearest cell so sensing is total.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldGrid {
    width_m: f64,
    height_m: f64,
    cell_size_m: f64,
    nx: usize,
    ny: usize,
    g_max: f64,
    /// Row-major: `cells[iy * nx + ix]`.
    cells: Vec<f64>,
}

impl ScalarFieldGrid {
    /// Builds a grid from explicit cell values (row-major, `ny` rows of `nx`).
    pub fn from_cells(
        width_m: f64,
        height_m: f64,
        cell_size_m: f64,
        g_max: f64,
        cells: Vec<f64>,
    ) -> Result<Self> {
        if !(width_m > 0.0 && height_m > 0.0 && cell_size_m > 0.0 && g_max > 0.0) {
            return Err(Error::invalid(
                "field dimensions, cell size and g_max must be positive",
            ));
        }
        let nx = (width_m / cell_size_m).ceil() as usize;
        let ny = (height_m / cell_size_m).ceil() as usize;
        if cells.len() != nx * ny {
            return Err(Error::invalid(format!(
                "expected {nx}x{ny}={} cells, got {}",
                nx * ny,
                cells.len()
            )));
        }
        if cells.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field cell"));
        }
        if cells.iter().any(|&v| v < 0.0 || v > g_max) {
            return Err(Error::invalid("field cell outside [0, g_max]"));
        }
        if !cells.iter().any(|&v| v == g_max) {
            return Err(Error::invalid("field has no cell equal to g_max"));
        }
        Ok(ScalarFieldGrid {
            width_m,
            height_m,
            cell_size_m,
            nx,
            ny,
            g_max,
            cells,
        })
    }

    pub fn width_m(&self) -> f64 {
        self.width_m
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Cell indices for a position, clamped into the grid.
    pub fn cell_index(&self, x: f64, y: f64) -> (usize, usize) {
        let ix = (x / self.cell_size_m).floor();
        let iy = (y / self.cell_size_m).floor();
        let ix = (ix.max(0.0) as usize).min(self.nx - 1);
        let iy = (iy.max(0.0) as usize).min(self.ny - 1);
        (ix, iy)
    }

    /// Value of the cell containing `(x, y)`; clamps out-of-bounds
    /// positions so robots pressed against a wall still sense.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (ix, iy) = self.cell_index(x, y);
        self.cells[iy * self.nx + ix]
    }

    /// Serializes as plain text: a header line
    /// `width_m height_m cell_size_m g_max` followed by one line per row
    /// of space-separated cell values (row 0 first). Values are printed
    /// with shortest round-trip precision, so write/read is lossless.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.width_m, self.height_m, self.cell_size_m, self.g_max
        );
        for iy in 0..self.ny {
            let row = &self.cells[iy * self.nx..(iy + 1) * self.nx];
            let mut line = String::new();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{v}");
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "empty field file"))?;
        let head: Vec<f64> = header
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(origin, format!("bad header: {e}")))?;
        if head.len() != 4 {
            return Err(Error::parse(origin, "header needs 4 values"));
        }
        let mut cells = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split_whitespace() {
                cells.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::parse(origin, format!("bad cell value: {e}")))?,
                );
            }
        }
        ScalarFieldGrid::from_cells(head[0], head[1], head[2], head[3], cells)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Continuous radial ramp: `g_max` at distance 0, linearly down to 0 at
/// `d_corner`, clipped below at 0.
pub fn radial_ramp(distance: f64, d_corner: f64, g_max: f64) -> f64 {
    (g_max * (1.0 - distance / d_corner)).max(0.0)
}

/// Field generator selection. Kept as an enum so alternative gradient
/// landscapes can be added behind the same configuration surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldProfile {
    #[default]
    RadialRamp,
}

/// Builds the default radially symmetric field over a square arena:
/// each cell holds the ramp evaluated at its center, except that the
/// cells nearest the arena center (a 2x2 block on even grids, where no
/// cell center coincides with the arena center) are pinned to exactly
/// `g_max`. Pinning the whole nearest set keeps the map's quarter-turn
/// symmetry while guaranteeing the true maximum is exposed.
pub fn make_radial_field(arena_size_m: f64, cell_size_m: f64, g_max: f64) -> Result<ScalarFieldGrid> {
    if !(arena_size_m > 0.0) || !(cell_size_m > 0.0) {
        return Err(Error::invalid("arena and cell size must be positive"));
    }
    if !(g_max > 0.0) {
        return Err(Error::invalid("g_max must be positive"));
    }
    let nx = (arena_size_m / cell_size_m).ceil() as usize;
    let ny = nx;
    let cx = arena_size_m / 2.0;
    let cy = arena_size_m / 2.0;
    let d_corner = (cx * cx + cy * cy).sqrt();
    let mut cells = vec![0.0; nx * ny];
    let mut distances = vec![0.0; nx * ny];
    let mut d_min = f64::INFINITY;
    for iy in 0..ny {
        for ix in 0..nx {
            let x = (ix as f64 + 0.5) * cell_size_m;
            let y = (iy as f64 + 0.5) * cell_size_m;
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            distances[iy * nx + ix] = d;
            d_min = d_min.min(d);
            cells[iy * nx + ix] = radial_ramp(d, d_corner, g_max).min(g_max);
        }
    }
    // minimal-distance ties differ by rounding noise only
    let tie_tol = cell_size_m * 1e-9;
    for (cell, &d) in cells.iter_mut().zip(&distances) {
        if d <= d_min + tie_tol {
            *cell = g_max;
        }
    }
    ScalarFieldGrid::from_cells(arena_size_m, arena_size_m, cell_size_m, g_max, cells)
}

pub fn make_field(
    profile: FieldProfile,
    arena_size_m: f64,
    cell_size_m: f64,
    g_max: f64,
) -> Result<ScalarFieldGrid> {
    match profile {
        FieldProfile::RadialRamp => make_radial_field(arena_size_m, cell_size_m, g_max),
    }
}

/// Square arena with rigid walls (robot centers are confined to
/// `[body_radius, size - body_radius]` per axis when `walls` is set).
#[derive(Debug, Clone)]
pub struct Arena {
    size_m: f64,
    field: ScalarFieldGrid,
    walls: bool,
    /// Content hash of the field map, computed once for replay records.
    field_hash: String,
}

impl Arena {
    pub fn new(size_m: f64, field: ScalarFieldGrid, walls: bool) -> Result<Self> {
        if field.width_m() != size_m || field.height_m() != size_m {
            return Err(Error::invalid(format!(
                "field is {}x{} m but arena side is {} m",
                field.width_m(),
                field.height_m(),
                size_m
            )));
        }
        let field_hash = crate::harness::sha256_hex(field.to_text().as_bytes());
        Ok(Arena {
            size_m,
            field,
            walls,
            field_hash,
        })
    }

    /// Walled square arena with the default radial field.
    pub fn square(size_m: f64, cell_size_m: f64, g_max: f64) -> Result<Self> {
        let field = make_radial_field(size_m, cell_size_m, g_max)?;
        Arena::new(size_m, field, true)
    }

    pub fn size_m(&self) -> f64 {
        self.size_m
    }

    pub fn field(&self) -> &ScalarFieldGrid {
        &self.field
    }

    pub fn has_walls(&self) -> bool {
        self.walls
    }

    pub fn field_hash(&self) -> &str {
        &self.field_hash
    }

    pub fn center(&self) -> (f64, f64) {
        (self.size_m / 2.0, self.size_m / 2.0)
    }

    /// Clamps a robot center into the wall-safe region. No-op without walls.
    pub fn clamp_to_walls(&self, x: f64, y: f64, body_radius: f64) -> (f64, f64) {
        if !self.walls {
            return (x, y);
        }
        let lo = body_radius;
        let hi = self.size_m - body_radius;
        (x.clamp(lo, hi), y.clamp(lo, hi))
    }
}

/// Where and how a swarm is placed at episode start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnSpec {
    /// Distance of the swarm center from the arena center.
    pub ring_radius_m: f64,
    /// Side of the square box the robots scatter in.
    pub box_side_m: f64,
    pub n_robots: usize,
}

impl SpawnSpec {
    pub fn new(ring_radius_m: f64, box_side_m: f64, n_robots: usize) -> Result<Self> {
        if n_robots < 1 {
            return Err(Error::invalid("n_robots must be at least 1"));
        }
        if !(ring_radius_m >= 0.0) || !(box_side_m > 0.0) {
            return Err(Error::invalid("spawn geometry must be non-negative"));
        }
        Ok(SpawnSpec {
            ring_radius_m,
            box_side_m,
            n_robots,
        })
    }

    /// The box must stay inside the arena for every ring angle.
    pub fn validate_for(&self, arena: &Arena) -> Result<()> {
        let half = arena.size_m() / 2.0;
        if self.ring_radius_m + self.box_side_m / 2.0 > half + 1e-12 {
            return Err(Error::invalid(format!(
                "spawn box (r={} m, side={} m) leaves the {} m arena",
                self.ring_radius_m,
                self.box_side_m,
                arena.size_m()
            )));
        }
        Ok(())
    }
}

const SPAWN_ATTEMPTS_PER_ROBOT: usize = 1000;

/// Places a swarm: the box center is drawn uniformly on the spawn ring,
/// robot positions uniformly inside the box (re-drawn until bodies do
/// not overlap), headings uniformly on the circle.
///
/// Draw order is fixed (ring angle, then per robot x, y, heading) so a
/// seed fully determines the placement.
pub fn spawn_swarm(
    arena: &Arena,
    spec: &SpawnSpec,
    params: &RobotParams,
    stream: &mut Stream,
) -> Result<Vec<RobotState>> {
    spec.validate_for(arena)?;
    let (acx, acy) = arena.center();
    let alpha = stream.range_f64(0.0, TAU);
    let bx = acx + spec.ring_radius_m * alpha.cos();
    let by = acy + spec.ring_radius_m * alpha.sin();

    // Sampling rectangle: the box, shrunk so bodies stay off the walls.
    let (wall_lo, wall_hi) = if arena.has_walls() {
        (params.body_radius, arena.size_m() - params.body_radius)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let x_lo = (bx - spec.box_side_m / 2.0).max(wall_lo);
    let x_hi = (bx + spec.box_side_m / 2.0).min(wall_hi);
    let y_lo = (by - spec.box_side_m / 2.0).max(wall_lo);
    let y_hi = (by + spec.box_side_m / 2.0).min(wall_hi);
    if !(x_lo < x_hi && y_lo < y_hi) {
        return Err(Error::invalid("spawn box collapses after wall shrink"));
    }

    let min_dist = 2.0 * params.body_radius;
    let mut robots: Vec<RobotState> = Vec::with_capacity(spec.n_robots);
    for _ in 0..spec.n_robots {
        let mut placed = false;
        for _ in 0..SPAWN_ATTEMPTS_PER_ROBOT {
            let x = stream.range_f64(x_lo, x_hi);
            let y = stream.range_f64(y_lo, y_hi);
            let clear = robots
                .iter()
                .all(|r| ((r.x - x).powi(2) + (r.y - y).powi(2)).sqrt() > min_dist);
            if clear {
                let heading = wrap_angle(stream.range_f64(0.0, TAU));
                robots.push(RobotState::new(x, y, heading, params));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SpawnFailure {
                requested: spec.n_robots,
                placed: robots.len(),
                attempts: SPAWN_ATTEMPTS_PER_ROBOT,
            });
        }
    }
    Ok(robots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> RobotParams {
        RobotParams::default()
    }

    #[test]
    fn ramp_profile_analytic_points() {
        let d_corner = 50.0f64.sqrt(); // 10x10 arena
        assert_eq!(radial_ramp(0.0, d_corner, 255.0), 255.0);
        assert_eq!(radial_ramp(d_corner, d_corner, 255.0), 0.0);
        assert_eq!(radial_ramp(d_corner / 2.0, d_corner, 255.0), 127.5);
    }

    #[test]
    fn radial_field_center_is_g_max() {
        for size in [10.0, 30.0, 45.0] {
            let field = make_radial_field(size, DEFAULT_CELL_SIZE_M, 255.0).unwrap();
            assert_eq!(field.sample(size / 2.0, size / 2.0), 255.0);
        }
    }

    #[test]
    fn radial_field_corner_cell_near_zero() {
        let field = make_radial_field(10.0, DEFAULT_CELL_SIZE_M, 255.0).unwrap();
        // corner cell center sits half a cell diagonal short of the true
        // corner, so its value is bounded by ramp slope * that offset
        let d_corner = 50.0f64.sqrt();
        let bound = 255.0 / d_corner * (DEFAULT_CELL_SIZE_M * 0.5 * 2.0f64.sqrt()) + 1e-9;
        let v = field.sample(0.0, 0.0);
        assert!(v >= 0.0 && v <= bound, "corner cell {v} above bound {bound}");
    }

    #[test]
    fn radial_field_monotone_outward() {
        let field = make_radial_field(10.0, 0.5, 255.0).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..10 {
            let x = 5.0 + 0.5 * k as f64;
            let v = field.sample(x.min(9.9), 5.0);
            assert!(v <= last + 1e-12);
            last = v;
        }
    }

    #[test]
    fn grid_dims_follow_ceil() {
        let field = make_radial_field(10.0, 0.3, 255.0).unwrap();
        assert_eq!(field.dims(), (34, 34)); // ceil(10/0.3)
    }

    #[test]
    fn sample_is_piecewise_constant() {
        let field = make_radial_field(10.0, 0.5, 255.0).unwrap();
        // two positions in the same cell read the same value
        assert_eq!(field.sample(1.01, 2.01), field.sample(1.49, 2.49));
    }

    #[test]
    fn sample_boundary_uses_floor_convention() {
        // cell size 0.5 is binary-exact, so boundary arithmetic is exact
        let field = make_radial_field(10.0, 0.5, 255.0).unwrap();
        for (x, y) in [(1.5, 3.0), (0.5, 0.5), (7.5, 2.5)] {
            let (ix, iy) = field.cell_index(x, y);
            // independent index oracle: position k*0.5 starts cell k
            assert_eq!(ix, (x * 2.0) as usize);
            assert_eq!(iy, (y * 2.0) as usize);
            assert_eq!(field.sample(x, y), field.cells()[iy * field.dims().0 + ix]);
        }
    }

    #[test]
    fn sample_clamps_out_of_bounds() {
        let field = make_radial_field(10.0, 0.5, 255.0).unwrap();
        assert_eq!(field.sample(-3.0, 5.1), field.sample(0.1, 5.1));
        assert_eq!(field.sample(11.0, 11.0), field.sample(9.9, 9.9));
    }

    #[test]
    fn field_text_round_trip_is_lossless() {
        let field = make_radial_field(10.0, 0.5, 255.0).unwrap();
        let text = field.to_text();
        let back = ScalarFieldGrid::from_text(&text, "test").unwrap();
        assert_eq!(field, back);
    }

    #[test]
    fn field_rejects_bad_input() {
        assert!(make_radial_field(-1.0, 0.1, 255.0).is_err());
        assert!(make_radial_field(10.0, 0.0, 255.0).is_err());
        assert!(ScalarFieldGrid::from_cells(1.0, 1.0, 0.5, 255.0, vec![0.0; 3]).is_err());
        // no cell reaches g_max
        assert!(ScalarFieldGrid::from_cells(1.0, 1.0, 0.5, 255.0, vec![1.0; 4]).is_err());
    }

    #[test]
    fn spawn_single_robot_inside_box() {
        let arena = Arena::square(30.0, 0.1, 255.0).unwrap();
        let spec = SpawnSpec::new(10.5, 3.0, 1).unwrap();
        let mut stream = Stream::new(7);
        let robots = spawn_swarm(&arena, &spec, &params(), &mut stream).unwrap();
        assert_eq!(robots.len(), 1);
        let (cx, cy) = arena.center();
        let d = ((robots[0].x - cx).powi(2) + (robots[0].y - cy).powi(2)).sqrt();
        // inside the box around a point on the ring
        assert!(d >= 10.5 - 3.0 && d <= 10.5 + 3.0);
    }

    #[test]
    fn spawn_fourteen_robots_no_overlap() {
        let arena = Arena::square(30.0, 0.1, 255.0).unwrap();
        let spec = SpawnSpec::new(10.5, 3.0, 14).unwrap();
        let p = params();
        let mut stream = Stream::new(99);
        let robots = spawn_swarm(&arena, &spec, &p, &mut stream).unwrap();
        assert_eq!(robots.len(), 14);
        for i in 0..14 {
            for j in (i + 1)..14 {
                let d = ((robots[i].x - robots[j].x).powi(2)
                    + (robots[i].y - robots[j].y).powi(2))
                .sqrt();
                assert!(d > 2.0 * p.body_radius, "robots {i},{j} overlap: {d}");
            }
        }
    }

    #[test]
    fn spawn_same_seed_identical() {
        let arena = Arena::square(10.0, 0.1, 255.0).unwrap();
        let spec = SpawnSpec::new(3.5, 3.0, 5).unwrap();
        let a = spawn_swarm(&arena, &spec, &params(), &mut Stream::new(1234)).unwrap();
        let b = spawn_swarm(&arena, &spec, &params(), &mut Stream::new(1234)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spawn_fails_when_box_cannot_hold_swarm() {
        let arena = Arena::square(10.0, 0.1, 255.0).unwrap();
        // 0.15 m box cannot hold five 6 cm radius bodies without overlap
        let spec = SpawnSpec::new(3.5, 0.15, 5).unwrap();
        let err = spawn_swarm(&arena, &spec, &params(), &mut Stream::new(5)).unwrap_err();
        assert!(matches!(err, Error::SpawnFailure { .. }), "got {err:?}");
    }

    #[test]
    fn spawn_box_outside_arena_rejected() {
        let arena = Arena::square(10.0, 0.1, 255.0).unwrap();
        let spec = SpawnSpec::new(4.5, 3.0, 3).unwrap();
        assert!(spec.validate_for(&arena).is_err());
    }

    #[test]
    fn spawn_centroid_stays_near_ring() {
        let arena = Arena::square(30.0, 0.1, 255.0).unwrap();
        let spec = SpawnSpec::new(10.5, 3.0, 14).unwrap();
        let (cx, cy) = arena.center();
        for seed in 0..20 {
            let robots = spawn_swarm(&arena, &spec, &params(), &mut Stream::new(seed)).unwrap();
            let mx = robots.iter().map(|r| r.x).sum::<f64>() / robots.len() as f64;
            let my = robots.iter().map(|r| r.y).sum::<f64>() / robots.len() as f64;
            let d = ((mx - cx).powi(2) + (my - cy).powi(2)).sqrt();
            let spread = spec.box_side_m * std::f64::consts::SQRT_2 / 2.0;
            assert!(
                (d - spec.ring_radius_m).abs() <= spread,
                "centroid distance {d} too far from ring {}",
                spec.ring_radius_m
            );
        }
    }
}
