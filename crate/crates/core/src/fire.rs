//! Fire-fighting mission model.
//!
//! Each team owns a rectangular region discretized into a uniform grid with
//! a piecewise-constant fire density. Sensing robots cover the region with a
//! centroidal Voronoi configuration (Lloyd's algorithm on the grid), which
//! gives a locational cost `L` and a sensing effectiveness `ψ = σ(1/L)`.
//! Fire-fighting robots contribute their capacities to the team's power `P`,
//! and one step multiplies the density by `exp(−P·ψ·Δt/η)`.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, MissionOracle, Robot, RobotId, TeamId};

/// Capability index of sensing robots.
pub const SENSING: usize = 0;
/// Capability index of fire-fighting robots.
pub const FIGHTER: usize = 1;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamRegion {
    pub origin: Point,
    pub width: f64,
    pub height: f64,
    /// Cells per side.
    pub grid_resolution: usize,
}

impl TeamRegion {
    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < 4 {
            return Err(Error::InvalidInstance(format!(
                "region grid resolution {} is below 4",
                self.grid_resolution
            )));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidInstance("region has non-positive extent".into()));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.grid_resolution * self.grid_resolution
    }

    pub fn cell_area(&self) -> f64 {
        let n = self.grid_resolution as f64;
        (self.width / n) * (self.height / n)
    }

    /// Center of cell `idx` (row-major, row = y index).
    pub fn cell_center(&self, idx: usize) -> Point {
        let n = self.grid_resolution;
        let (row, col) = (idx / n, idx % n);
        [
            self.origin[0] + (col as f64 + 0.5) * self.width / n as f64,
            self.origin[1] + (row as f64 + 0.5) * self.height / n as f64,
        ]
    }

    pub fn center(&self) -> Point {
        [
            self.origin[0] + 0.5 * self.width,
            self.origin[1] + 0.5 * self.height,
        ]
    }

    pub fn overlaps(&self, other: &TeamRegion) -> bool {
        self.origin[0] < other.origin[0] + other.width
            && other.origin[0] < self.origin[0] + self.width
            && self.origin[1] < other.origin[1] + other.height
            && other.origin[1] < self.origin[1] + self.height
    }
}

/// Fire intensity per unit area, one value per grid cell (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub cell_area: f64,
}

impl DensityField {
    pub fn uniform(region: &TeamRegion, value: f64) -> Self {
        Self {
            values: vec![value; region.num_cells()],
            cell_area: region.cell_area(),
        }
    }

    /// `∫ φ`, midpoint rule over cells.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn validate(&self, region: &TeamRegion) -> Result<()> {
        if self.values.len() != region.num_cells() {
            return Err(Error::InvalidInstance(format!(
                "density has {} cells, region has {}",
                self.values.len(),
                region.num_cells()
            )));
        }
        if self.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInstance("density has a negative or non-finite cell".into()));
        }
        if !(self.cell_area > 0.0) {
            return Err(Error::InvalidInstance("density cell area is not positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub lloyd_max_iters: usize,
    /// Centroid-displacement threshold in meters.
    pub lloyd_tol: f64,
    pub sigmoid_a: f64,
    pub sigmoid_b: f64,
    /// Base seed for initial sensor placement.
    #[serde(default)]
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            lloyd_max_iters: 200,
            lloyd_tol: 1e-6,
            sigmoid_a: 1.0,
            sigmoid_b: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FireDynamicsConfig {
    pub eta: f64,
    pub dt: f64,
}

impl Default for FireDynamicsConfig {
    fn default() -> Self {
        Self { eta: 1.0, dt: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LloydOutcome {
    pub positions: Vec<Point>,
    pub iterations: usize,
    pub converged: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
}

fn sq_dist(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Nearest position to `q`, ties to the lowest index.
fn nearest(positions: &[Point], q: Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &p) in positions.iter().enumerate() {
        let d = sq_dist(p, q);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// `Σ_i Σ_{q ∈ V_i} ‖p_i − q‖² φ(q) · cell_area`; zero without sensors.
pub fn locational_cost(positions: &[Point], region: &TeamRegion, density: &DensityField) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (idx, &phi) in density.values.iter().enumerate() {
        if phi == 0.0 {
            continue;
        }
        let q = region.cell_center(idx);
        let p = positions[nearest(positions, q)];
        total += sq_dist(p, q) * phi;
    }
    total * density.cell_area
}

/// Seeded jittered-grid placement, laid out to follow the region's aspect.
fn initial_positions(region: &TeamRegion, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aspect = region.width / region.height;
    let cols = ((n as f64 * aspect).sqrt().ceil() as usize).clamp(1, n);
    let rows = n.div_ceil(cols);
    let (cw, ch) = (region.width / cols as f64, region.height / rows as f64);
    (0..n)
        .map(|k| {
            let (row, col) = (k / cols, k % cols);
            let jx: f64 = rng.random_range(-0.1..0.1);
            let jy: f64 = rng.random_range(-0.1..0.1);
            [
                region.origin[0] + (col as f64 + 0.5 + jx) * cw,
                region.origin[1] + (row as f64 + 0.5 + jy) * ch,
            ]
        })
        .collect()
}

/// Lloyd iterations on the grid until every sensor moves less than
/// `lloyd_tol`. An all-zero density is replaced by a uniform one.
pub fn lloyd_cvt(
    region: &TeamRegion,
    density: &DensityField,
    n_sensors: usize,
    config: &CoverageConfig,
    seed: u64,
) -> LloydOutcome {
    if n_sensors == 0 {
        return LloydOutcome {
            positions: Vec::new(),
            iterations: 0,
            converged: true,
            initial_cost: 0.0,
            final_cost: 0.0,
        };
    }
    let uniform;
    let weights = if density.is_zero() {
        uniform = DensityField::uniform(region, 1.0);
        &uniform
    } else {
        density
    };

    let centers: Vec<Point> = (0..region.num_cells()).map(|i| region.cell_center(i)).collect();
    let mut positions = initial_positions(region, n_sensors, seed);
    let initial_cost = locational_cost(&positions, region, weights);

    let mut mass = vec![0.0; n_sensors];
    let mut moment = vec![[0.0; 2]; n_sensors];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.lloyd_max_iters {
        iterations += 1;
        mass.iter_mut().for_each(|m| *m = 0.0);
        moment.iter_mut().for_each(|m| *m = [0.0; 2]);
        for (q, &phi) in centers.iter().zip(&weights.values) {
            if phi == 0.0 {
                continue;
            }
            let i = nearest(&positions, *q);
            mass[i] += phi;
            moment[i][0] += phi * q[0];
            moment[i][1] += phi * q[1];
        }
        let mut max_shift: f64 = 0.0;
        for i in 0..n_sensors {
            // A sensor whose cell carries no mass keeps its position.
            if mass[i] > 0.0 {
                let c = [moment[i][0] / mass[i], moment[i][1] / mass[i]];
                max_shift = max_shift.max(sq_dist(c, positions[i]).sqrt());
                positions[i] = c;
            }
        }
        if max_shift < config.lloyd_tol {
            converged = true;
            break;
        }
    }
    let final_cost = locational_cost(&positions, region, weights);
    LloydOutcome {
        positions,
        iterations,
        converged,
        initial_cost,
        final_cost,
    }
}

/// `ψ = 0` without sensors, otherwise `σ(a(1/L − b))`; `ψ = 1` at `L = 0`.
pub fn sensing_effectiveness(n_sensing: usize, locational_cost: f64, config: &CoverageConfig) -> f64 {
    if n_sensing == 0 {
        return 0.0;
    }
    if locational_cost == 0.0 {
        return 1.0;
    }
    let x = 1.0 / locational_cost;
    1.0 / (1.0 + (-config.sigmoid_a * (x - config.sigmoid_b)).exp())
}

/// Sum of capacities of the fire-fighting robots in `members`.
pub fn fire_power(members: &[RobotId], robots: &[Robot]) -> f64 {
    members
        .iter()
        .filter(|&&r| robots[r].has(FIGHTER))
        .map(|&r| robots[r].capacity)
        .sum()
}

pub fn sensing_count(members: &[RobotId], robots: &[Robot]) -> usize {
    members.iter().filter(|&&r| robots[r].has(SENSING)).count()
}

fn decay_factor(power: f64, psi: f64, dynamics: &FireDynamicsConfig) -> f64 {
    (-power * psi * dynamics.dt / dynamics.eta).exp()
}

/// Every cell multiplied by `exp(−P·ψ·Δt/η)`.
pub fn decay_density(
    density: &DensityField,
    power: f64,
    psi: f64,
    dynamics: &FireDynamicsConfig,
) -> DensityField {
    let f = decay_factor(power, psi, dynamics);
    DensityField {
        values: density.values.iter().map(|v| v * f).collect(),
        cell_area: density.cell_area,
    }
}

/// Coverage of one team for a given number of sensing robots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub locational_cost: f64,
    pub psi: f64,
    pub positions: Vec<Point>,
    pub converged: bool,
}

/// Per-team quantities used by the feature encoder and the step log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeamStats {
    pub total_fire: f64,
    pub psi: f64,
    pub power: f64,
    pub locational_cost: f64,
    pub sensing: usize,
    pub fighters: usize,
}

/// Fire state of all teams plus the coverage memo.
#[derive(Debug, Serialize, Deserialize)]
pub struct FireMission {
    pub regions: Vec<TeamRegion>,
    pub densities: Vec<DensityField>,
    pub coverage: CoverageConfig,
    pub dynamics: FireDynamicsConfig,
    #[serde(skip)]
    version: u64,
    #[serde(skip)]
    memo: Mutex<HashMap<(TeamId, usize), Coverage>>,
}

impl Clone for FireMission {
    fn clone(&self) -> Self {
        Self {
            regions: self.regions.clone(),
            densities: self.densities.clone(),
            coverage: self.coverage,
            dynamics: self.dynamics,
            version: self.version,
            memo: Mutex::new(self.memo.lock().expect("coverage memo poisoned").clone()),
        }
    }
}

impl PartialEq for FireMission {
    fn eq(&self, other: &Self) -> bool {
        self.regions == other.regions
            && self.densities == other.densities
            && self.coverage == other.coverage
            && self.dynamics == other.dynamics
    }
}

impl FireMission {
    pub fn new(
        regions: Vec<TeamRegion>,
        densities: Vec<DensityField>,
        coverage: CoverageConfig,
        dynamics: FireDynamicsConfig,
    ) -> Result<Self> {
        let mission = Self {
            regions,
            densities,
            coverage,
            dynamics,
            version: 0,
            memo: Mutex::new(HashMap::new()),
        };
        mission.validate()?;
        Ok(mission)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.len() != self.densities.len() {
            return Err(Error::InvalidInstance(
                "one density field per team region required".into(),
            ));
        }
        for (region, density) in self.regions.iter().zip(&self.densities) {
            region.validate()?;
            density.validate(region)?;
        }
        for (i, a) in self.regions.iter().enumerate() {
            for (j, b) in self.regions.iter().enumerate().skip(i + 1) {
                if a.overlaps(b) {
                    return Err(Error::InvalidInstance(format!(
                        "regions of teams {i} and {j} overlap"
                    )));
                }
            }
        }
        if !(self.dynamics.eta > 0.0 && self.dynamics.dt > 0.0) {
            return Err(Error::InvalidInstance("eta and dt must be positive".into()));
        }
        if !(self.coverage.lloyd_tol > 0.0) || self.coverage.lloyd_max_iters == 0 {
            return Err(Error::InvalidInstance("invalid Lloyd settings".into()));
        }
        Ok(())
    }

    pub fn num_teams(&self) -> usize {
        self.regions.len()
    }

    /// Number of committed fire steps.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn total_fire(&self, team: TeamId) -> f64 {
        self.densities[team].integral()
    }

    pub fn total_fire_all(&self) -> f64 {
        (0..self.num_teams()).map(|v| self.total_fire(v)).sum()
    }

    fn lloyd_seed(&self, team: TeamId, n: usize) -> u64 {
        self.coverage
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((team as u64) << 32 | n as u64)
    }

    /// CVT coverage of `team` with `n` sensing robots on the current density,
    /// memoized per density version.
    pub fn coverage(&self, team: TeamId, n: usize) -> Coverage {
        if let Some(hit) = self.memo.lock().expect("coverage memo poisoned").get(&(team, n)) {
            return hit.clone();
        }
        let region = &self.regions[team];
        let density = &self.densities[team];
        let lloyd = lloyd_cvt(region, density, n, &self.coverage, self.lloyd_seed(team, n));
        let cost = locational_cost(&lloyd.positions, region, density);
        let cov = Coverage {
            locational_cost: cost,
            psi: sensing_effectiveness(n, cost, &self.coverage),
            positions: lloyd.positions,
            converged: lloyd.converged,
        };
        self.memo
            .lock()
            .expect("coverage memo poisoned")
            .insert((team, n), cov.clone());
        cov
    }

    /// `ψ` of `team` with `n` sensing robots; same memo as [`Self::coverage`].
    pub fn psi(&self, team: TeamId, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        if let Some(hit) = self.memo.lock().expect("coverage memo poisoned").get(&(team, n)) {
            return hit.psi;
        }
        self.coverage(team, n).psi
    }

    pub fn team_stats(&self, team: TeamId, members: &[RobotId], robots: &[Robot]) -> TeamStats {
        let sensing = sensing_count(members, robots);
        let cov = self.coverage(team, sensing);
        TeamStats {
            total_fire: self.total_fire(team),
            psi: cov.psi,
            power: fire_power(members, robots),
            locational_cost: cov.locational_cost,
            sensing,
            fighters: members.iter().filter(|&&r| robots[r].has(FIGHTER)).count(),
        }
    }

    /// `−∫ φ^{k+1}` if `members` were the team for the next step. Does not
    /// change the mission state.
    pub fn mission_value(&self, team: TeamId, members: &[RobotId], robots: &[Robot]) -> f64 {
        let power = fire_power(members, robots);
        let total = self.total_fire(team);
        if power == 0.0 || total == 0.0 {
            return -total;
        }
        let psi = self.psi(team, sensing_count(members, robots));
        -total * decay_factor(power, psi, &self.dynamics)
    }

    /// Commits one decay step for every team under `assignment`. Returns the
    /// per-team stats used for the step (fire totals before the decay).
    pub fn advance_fire(&mut self, assignment: &Assignment, robots: &[Robot]) -> Vec<TeamStats> {
        let sets = assignment.team_sets(self.num_teams());
        let stats: Vec<TeamStats> = sets
            .iter()
            .enumerate()
            .map(|(v, set)| self.team_stats(v, set, robots))
            .collect();
        for (v, s) in stats.iter().enumerate() {
            if s.power > 0.0 && s.psi > 0.0 {
                self.densities[v] = decay_density(&self.densities[v], s.power, s.psi, &self.dynamics);
            }
        }
        self.version += 1;
        self.memo.get_mut().expect("coverage memo poisoned").clear();
        stats
    }

    pub fn oracle<'a>(&'a self, robots: &'a [Robot]) -> FireOracle<'a> {
        FireOracle {
            mission: self,
            robots,
        }
    }
}

/// [`MissionOracle`] view of a [`FireMission`].
#[derive(Clone, Copy)]
pub struct FireOracle<'a> {
    mission: &'a FireMission,
    robots: &'a [Robot],
}

impl MissionOracle for FireOracle<'_> {
    fn evaluate(&self, team: TeamId, members: &[RobotId]) -> f64 {
        self.mission.mission_value(team, members, self.robots)
    }
}

/// Sum of 1–3 Gaussian blobs with peaks in `[0.5, 2.0]`, sampled at cell
/// centers.
pub fn sample_fire_field(region: &TeamRegion, rng: &mut impl Rng) -> DensityField {
    let blobs: usize = rng.random_range(1..=3);
    let side = region.width.min(region.height);
    let params: Vec<(Point, f64, f64)> = (0..blobs)
        .map(|_| {
            let c = [
                region.origin[0] + rng.random_range(0.15..0.85) * region.width,
                region.origin[1] + rng.random_range(0.15..0.85) * region.height,
            ];
            let peak = rng.random_range(0.5..=2.0);
            let sigma = rng.random_range(0.15..0.35) * side;
            (c, peak, sigma)
        })
        .collect();
    let values = (0..region.num_cells())
        .map(|idx| {
            let q = region.cell_center(idx);
            params
                .iter()
                .map(|&(c, peak, sigma)| peak * (-sq_dist(q, c) / (2.0 * sigma * sigma)).exp())
                .sum()
        })
        .collect();
    DensityField {
        values,
        cell_area: region.cell_area(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64, res: usize) -> TeamRegion {
        TeamRegion {
            origin: [0.0, 0.0],
            width: side,
            height: side,
            grid_resolution: res,
        }
    }

    fn fighter(id: usize, k: f64) -> Robot {
        Robot {
            id,
            capability: vec![0, 1],
            speed: 1.0,
            capacity: k,
        }
    }

    fn sensor(id: usize) -> Robot {
        Robot {
            id,
            capability: vec![1, 0],
            speed: 1.0,
            capacity: 0.0,
        }
    }

    fn one_team(density: f64) -> FireMission {
        let region = square(2.0, 16);
        let field = DensityField::uniform(&region, density);
        FireMission::new(
            vec![region],
            vec![field],
            CoverageConfig::default(),
            FireDynamicsConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn lloyd_single_sensor_uniform_goes_to_center() {
        let region = square(4.0, 16);
        let d = DensityField::uniform(&region, 1.0);
        let out = lloyd_cvt(&region, &d, 1, &CoverageConfig::default(), 3);
        assert!(out.converged);
        assert!(sq_dist(out.positions[0], [2.0, 2.0]).sqrt() < 1e-9);
    }

    #[test]
    fn lloyd_point_mass_goes_to_cell_center() {
        let region = square(4.0, 16);
        let mut d = DensityField::uniform(&region, 0.0);
        d.values[37] = 5.0;
        let out = lloyd_cvt(&region, &d, 1, &CoverageConfig::default(), 3);
        let c = region.cell_center(37);
        assert!(sq_dist(out.positions[0], c).sqrt() < 1e-12);
    }

    #[test]
    fn lloyd_zero_density_uses_uniform() {
        let region = square(4.0, 16);
        let d = DensityField::uniform(&region, 0.0);
        let out = lloyd_cvt(&region, &d, 1, &CoverageConfig::default(), 0);
        assert!(sq_dist(out.positions[0], [2.0, 2.0]).sqrt() < 1e-9);
    }

    #[test]
    fn lloyd_two_sensors_split_a_wide_rectangle() {
        let region = TeamRegion {
            origin: [0.0, 0.0],
            width: 4.0,
            height: 2.0,
            grid_resolution: 16,
        };
        let d = DensityField::uniform(&region, 1.0);
        // Exhaustive search over sensor pairs on a 0.125 m lattice.
        let lattice: Vec<Point> = (0..=32)
            .flat_map(|i| (0..=16).map(move |j| [i as f64 * 0.125, j as f64 * 0.125]))
            .collect();
        let mut brute = f64::INFINITY;
        for (a, &p) in lattice.iter().enumerate() {
            for &q in &lattice[a + 1..] {
                brute = brute.min(locational_cost(&[p, q], &region, &d));
            }
        }
        let best = (0..8)
            .map(|seed| lloyd_cvt(&region, &d, 2, &CoverageConfig::default(), seed))
            .min_by(|a, b| a.final_cost.total_cmp(&b.final_cost))
            .unwrap();
        assert!(best.final_cost <= brute + 1e-12, "{} vs {brute}", best.final_cost);
        let mut xs = best.positions.clone();
        xs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!(sq_dist(xs[0], [1.0, 1.0]).sqrt() < 1e-9);
        assert!(sq_dist(xs[1], [3.0, 1.0]).sqrt() < 1e-9);
    }

    #[test]
    fn lloyd_never_increases_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20 {
            let region = square(2.0, 16);
            let d = sample_fire_field(&region, &mut rng);
            for n in 1..6 {
                let out = lloyd_cvt(&region, &d, n, &CoverageConfig::default(), seed);
                assert!(out.final_cost <= out.initial_cost + 1e-12);
            }
        }
    }

    #[test]
    fn locational_cost_examples() {
        let region = square(1.0, 4);
        let d = DensityField::uniform(&region, 1.0);
        assert_eq!(locational_cost(&[], &region, &d), 0.0);

        // One 1x1 cell centered at (3, 4) with φ = 2, sensor at the origin.
        let region = TeamRegion {
            origin: [2.5, 3.5],
            width: 4.0,
            height: 4.0,
            grid_resolution: 4,
        };
        let mut d = DensityField::uniform(&region, 0.0);
        d.values[0] = 2.0;
        assert_eq!(region.cell_center(0), [3.0, 4.0]);
        assert_eq!(d.cell_area, 1.0);
        assert_eq!(locational_cost(&[[0.0, 0.0]], &region, &d), 50.0);

        // A sensor sitting on the only burning cell.
        assert_eq!(locational_cost(&[[3.0, 4.0]], &region, &d), 0.0);
    }

    #[test]
    fn locational_cost_ties_go_to_lowest_index() {
        let region = TeamRegion {
            origin: [-0.5, -0.5],
            width: 4.0,
            height: 4.0,
            grid_resolution: 4,
        };
        let mut d = DensityField::uniform(&region, 0.0);
        d.values[0] = 1.0; // center (0, 0)
        // Equidistant sensors: the cost is the same whichever wins.
        assert_eq!(locational_cost(&[[1.0, 0.0], [-1.0, 0.0]], &region, &d), 1.0);
        assert_eq!(nearest(&[[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0]), 0);
    }

    #[test]
    fn sensing_effectiveness_examples() {
        let cfg = CoverageConfig::default();
        assert_eq!(sensing_effectiveness(0, 3.0, &cfg), 0.0);
        assert_eq!(sensing_effectiveness(0, 0.0, &cfg), 0.0);
        assert!((sensing_effectiveness(2, 1e300, &cfg) - 0.5).abs() < 1e-12);
        assert!((sensing_effectiveness(1, 1.0, &cfg) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((sensing_effectiveness(1, 1.0, &cfg) - 0.7311).abs() < 1e-4);
        assert_eq!(sensing_effectiveness(3, 0.0, &cfg), 1.0);
    }

    #[test]
    fn fire_power_examples() {
        let robots = vec![sensor(0), fighter(1, 1.5), fighter(2, 2.5)];
        assert_eq!(fire_power(&[0], &robots), 0.0);
        assert_eq!(fire_power(&[1, 2], &robots), 4.0);
        assert_eq!(fire_power(&[0, 1, 2], &robots), 4.0);
    }

    #[test]
    fn decay_examples() {
        let region = square(1.0, 4);
        let d = DensityField::uniform(&region, 1.0);
        let dynamics = FireDynamicsConfig::default();
        assert_eq!(decay_density(&d, 0.0, 0.7, &dynamics), d);
        assert_eq!(decay_density(&d, 3.0, 0.0, &dynamics), d);
        let out = decay_density(&d, 1.0, 1.0, &dynamics);
        assert!(out.values.iter().all(|&v| (v - (-1.0f64).exp()).abs() < 1e-15));
        assert!((out.values[0] - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn mission_value_examples() {
        let robots = vec![sensor(0), fighter(1, 1.0), fighter(2, 1.0)];
        let zero = one_team(0.0);
        assert_eq!(zero.mission_value(0, &[0, 1], &robots), 0.0);

        let m = one_team(1.0);
        let total = m.total_fire(0);
        assert_eq!(m.mission_value(0, &[0], &robots), -total);
        let one = m.mission_value(0, &[0, 1], &robots);
        let two = m.mission_value(0, &[0, 1, 2], &robots);
        assert!(two > one && one > -total);

        // Fighters without a sensor cannot suppress.
        assert_eq!(m.mission_value(0, &[1, 2], &robots), -total);
    }

    #[test]
    fn mission_value_matches_decayed_integral() {
        let robots = vec![sensor(0), sensor(1), fighter(2, 1.3)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let region = square(2.0, 16);
        let field = sample_fire_field(&region, &mut rng);
        let m = FireMission::new(
            vec![region.clone()],
            vec![field.clone()],
            CoverageConfig::default(),
            FireDynamicsConfig::default(),
        )
        .unwrap();
        let cov = m.coverage(0, 2);
        let direct = -decay_density(&field, 1.3, cov.psi, &m.dynamics).integral();
        let v = m.mission_value(0, &[0, 1, 2], &robots);
        assert!((v - direct).abs() <= 1e-12 * direct.abs());
    }

    #[test]
    fn mission_value_is_pure() {
        let robots = vec![sensor(0), fighter(1, 1.0)];
        let a = Assignment::new(vec![0, 0]);
        let mut m1 = one_team(1.0);
        let mut m2 = one_team(1.0);
        for _ in 0..10 {
            m1.mission_value(0, &[1], &robots);
            m1.mission_value(0, &[0, 1], &robots);
        }
        m1.advance_fire(&a, &robots);
        m2.advance_fire(&a, &robots);
        assert_eq!(m1.densities, m2.densities);
    }

    #[test]
    fn removing_last_sensor_drops_value() {
        let robots = vec![sensor(0), fighter(1, 1.0)];
        let m = one_team(1.0);
        let with = m.mission_value(0, &[0, 1], &robots);
        let without = m.mission_value(0, &[1], &robots);
        assert!(with - without > 0.0);
        assert_eq!(without, -m.total_fire(0));
    }

    #[test]
    fn advance_fire_examples() {
        let robots = vec![sensor(0), sensor(1)];
        let a = Assignment::new(vec![0, 0]);
        let mut m = one_team(1.0);
        let before = m.densities.clone();
        m.advance_fire(&a, &robots);
        assert_eq!(m.densities, before);

        // Capacity chosen so that P·ψ·Δt/η = ln 2.
        let mut m = one_team(1.0);
        let psi = m.coverage(0, 1).psi;
        let robots = vec![sensor(0), fighter(1, std::f64::consts::LN_2 / psi)];
        let a = Assignment::new(vec![0, 0]);
        let t0 = m.total_fire(0);
        m.advance_fire(&a, &robots);
        assert!((m.total_fire(0) - 0.5 * t0).abs() < 1e-12);
        let t1 = m.total_fire(0);
        m.advance_fire(&a, &robots);
        assert!(m.total_fire(0) <= t1);
    }

    #[test]
    fn grid_refinement_is_consistent() {
        let coarse = square(2.0, 16);
        let fine = square(2.0, 32);
        let field = |region: &TeamRegion| DensityField {
            values: (0..region.num_cells())
                .map(|i| {
                    let q = region.cell_center(i);
                    (-sq_dist(q, [0.8, 1.1]) / 0.5).exp() + 0.3
                })
                .collect(),
            cell_area: region.cell_area(),
        };
        let layouts: [&[Point]; 3] = [
            &[[1.0, 1.0]],
            &[[0.5, 0.5], [1.5, 1.2]],
            &[[0.5, 0.5], [1.5, 1.2], [0.7, 1.6]],
        ];
        for positions in layouts {
            let lc = locational_cost(positions, &coarse, &field(&coarse));
            let lf = locational_cost(positions, &fine, &field(&fine));
            assert!(((lc - lf) / lf).abs() < 0.10, "{lc} vs {lf}");
        }
    }
}
