//! Random fire instances, exact one-step labels, graph features and the
//! JSON-lines dataset format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fire::{
    sample_fire_field, CoverageConfig, FireDynamicsConfig, FireMission, TeamRegion, FIGHTER,
    SENSING,
};
use crate::instance::{fire_constraints, Instance};
use crate::model::{
    relatedness, Assignment, HamiltonMask, InteractionGraph, Problem, Robot, TeamId, TeamWeights,
};
use crate::seeding::{derive_seed, rng_for};
use crate::solver::{solve_one_step, SolveOptions};

pub const DATASET_FORMAT: &str = "teamalloc-dataset";
pub const DATASET_VERSION: u32 = 1;
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// Names of every feature column, versioned so checkpoints can declare
/// which encoder they were trained against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub team: Vec<String>,
    pub robot: Vec<String>,
    pub edge: Vec<String>,
    pub xi: Vec<String>,
}

impl FeatureSchema {
    pub fn current() -> Self {
        let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            version: FEATURE_SCHEMA_VERSION,
            team: names(&["weight", "size", "sensing", "fighters", "fire", "psi", "power", "locational_cost"]),
            robot: names(&["sensing", "fighter", "speed", "capacity"]),
            edge: names(&["dx", "dy", "distance", "relatedness", "adjacent"]),
            xi: names(&["travel_time"]),
        }
    }

    pub fn team_dim(&self) -> usize {
        self.team.len()
    }

    pub fn robot_dim(&self) -> usize {
        self.robot.len()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub teams: usize,
    pub robots: usize,
}

/// Encoded live state: everything the policy sees, without a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphState {
    pub team_features: Vec<Vec<f64>>,
    pub robot_features: Vec<Vec<f64>>,
    /// Directed edges `(src, dst)`, both directions of every graph edge,
    /// sorted by `(dst, src)`.
    pub edges: Vec<(TeamId, TeamId)>,
    pub edge_features: Vec<Vec<f64>>,
    pub hamilton_mask: Vec<Vec<bool>>,
    pub candidate_mask: Vec<Vec<bool>>,
    /// Travel time `d(cur(r), v) / s_r`.
    pub distance_row: Vec<Vec<f64>>,
    pub current: Vec<TeamId>,
    pub meta: SampleMeta,
}

impl GraphState {
    pub fn num_teams(&self) -> usize {
        self.team_features.len()
    }

    pub fn num_robots(&self) -> usize {
        self.robot_features.len()
    }

    /// Candidate destinations of robot `r`, ascending.
    pub fn candidates(&self, r: usize) -> impl Iterator<Item = TeamId> + '_ {
        self.candidate_mask[r]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(v, _)| v)
    }

    /// Feature vector of the edge `src → dst`, if it exists.
    pub fn edge_feature(&self, src: TeamId, dst: TeamId) -> Option<&[f64]> {
        self.edges
            .binary_search_by_key(&(dst, src), |&(s, d)| (d, s))
            .ok()
            .map(|k| self.edge_features[k].as_slice())
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let (m, n) = (self.num_teams(), self.num_robots());
        let dims_ok = self.team_features.iter().all(|f| f.len() == schema.team_dim())
            && self.robot_features.iter().all(|f| f.len() == schema.robot_dim())
            && self.edge_features.iter().all(|f| f.len() == schema.edge_dim());
        if !dims_ok {
            return Err(Error::SchemaMismatch(
                "feature widths do not match the schema".into(),
            ));
        }
        let shapes_ok = self.edges.len() == self.edge_features.len()
            && self.hamilton_mask.len() == n
            && self.candidate_mask.len() == n
            && self.distance_row.len() == n
            && self.current.len() == n
            && self.hamilton_mask.iter().all(|r| r.len() == m)
            && self.candidate_mask.iter().all(|r| r.len() == m)
            && self.distance_row.iter().all(|r| r.len() == m)
            && self.edges.iter().all(|&(s, d)| s < m && d < m && s != d)
            && self.edges.windows(2).all(|w| (w[0].1, w[0].0) < (w[1].1, w[1].0));
        if !shapes_ok {
            return Err(Error::Dataset("inconsistent graph state shapes".into()));
        }
        if (0..n).any(|r| self.current[r] >= m || !self.candidate_mask[r][self.current[r]]) {
            return Err(Error::Dataset("current team missing from candidates".into()));
        }
        let finite = |rows: &[Vec<f64>]| rows.iter().flatten().all(|x| x.is_finite());
        if !(finite(&self.team_features)
            && finite(&self.robot_features)
            && finite(&self.edge_features)
            && finite(&self.distance_row))
        {
            return Err(Error::Dataset("non-finite feature".into()));
        }
        Ok(())
    }
}

/// A labeled state: `label[r]` is the exact one-step destination of `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub state: GraphState,
    pub label: Vec<TeamId>,
}

impl GraphSample {
    pub fn is_move(&self, r: usize) -> bool {
        self.label[r] != self.state.current[r]
    }

    pub fn move_count(&self) -> usize {
        (0..self.label.len()).filter(|&r| self.is_move(r)).count()
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        self.state.validate(schema)?;
        if self.label.len() != self.state.num_robots() {
            return Err(Error::Dataset("label length differs from robot count".into()));
        }
        for (r, &y) in self.label.iter().enumerate() {
            if y >= self.state.num_teams() || !self.state.candidate_mask[r][y] {
                return Err(Error::Dataset(format!(
                    "label of robot {r} is outside its candidate mask"
                )));
            }
        }
        Ok(())
    }
}

/// Knobs for [`sample_instance_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub teams: RangeInclusive<usize>,
    pub robots_per_team: RangeInclusive<usize>,
    pub edge_probability: f64,
    pub min_separation: f64,
    /// Side of the square team positions are drawn from, as a multiple of
    /// `min_separation · √M`.
    pub workspace_scale: f64,
    pub region_side: f64,
    pub grid_resolution: usize,
    pub coverage: CoverageConfig,
    pub dynamics: FireDynamicsConfig,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            teams: 3..=7,
            robots_per_team: 3..=5,
            edge_probability: 0.3,
            min_separation: 6.0,
            workspace_scale: 1.2,
            region_side: 4.0,
            grid_resolution: 16,
            coverage: CoverageConfig::default(),
            dynamics: FireDynamicsConfig::default(),
        }
    }
}

const ASSIGNMENT_TRIES: usize = 10_000;

/// Seeded random fire instance with default geometry.
pub fn sample_instance(
    seed: u64,
    teams: RangeInclusive<usize>,
    robots_per_team: RangeInclusive<usize>,
) -> Result<Instance> {
    sample_instance_with(
        seed,
        &InstanceConfig {
            teams,
            robots_per_team,
            ..InstanceConfig::default()
        },
    )
}

pub fn sample_instance_with(seed: u64, config: &InstanceConfig) -> Result<Instance> {
    let (tmin, tmax) = (*config.teams.start(), *config.teams.end());
    let (rmin, rmax) = (*config.robots_per_team.start(), *config.robots_per_team.end());
    if tmin == 0 || tmin > tmax || rmin == 0 || rmin > rmax {
        return Err(Error::InvalidInstance(
            "team and robots-per-team ranges must be nonempty and positive".into(),
        ));
    }
    let mut rng = rng_for(seed, &[0]);
    let m = rng.random_range(tmin..=tmax);

    let positions = sample_positions(m, config.min_separation, config.workspace_scale, &mut rng);
    let edges = sample_edges(m, config.edge_probability, &mut rng);
    let graph = InteractionGraph::new(positions.clone(), &edges)?;
    let weights = TeamWeights::new((0..m).map(|_| rng.random_range(1.0..=2.0)).collect())?;

    let n: usize = (0..m).map(|_| rng.random_range(rmin..=rmax)).sum();
    let sensing: Vec<bool> = loop {
        let caps: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if caps.iter().filter(|&&s| s).count() >= m {
            break caps;
        }
    };
    let robots: Vec<Robot> = sensing
        .iter()
        .enumerate()
        .map(|(id, &s)| {
            let speed = rng.random_range(0.5..=2.0);
            let capacity = if s { 0.0 } else { rng.random_range(0.5..=2.0) };
            let mut capability = vec![0u8; 2];
            capability[if s { SENSING } else { FIGHTER }] = 1;
            Robot {
                id,
                capability,
                speed,
                capacity,
            }
        })
        .collect();
    let problem = Problem::new(graph, weights, robots, fire_constraints())?;
    let assignment = sample_assignment(&problem, &mut rng);

    let half = config.region_side / 2.0;
    let regions: Vec<TeamRegion> = positions
        .iter()
        .map(|p| TeamRegion {
            origin: [p[0] - half, p[1] - half],
            width: config.region_side,
            height: config.region_side,
            grid_resolution: config.grid_resolution,
        })
        .collect();
    let densities = regions.iter().map(|r| sample_fire_field(r, &mut rng)).collect();
    let coverage = CoverageConfig {
        seed,
        ..config.coverage
    };
    let mission = FireMission::new(regions, densities, coverage, config.dynamics)?;
    Instance::new(problem, assignment, mission)
}

fn sample_positions(m: usize, min_sep: f64, scale: f64, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let mut side = scale * min_sep * (m as f64).sqrt();
    loop {
        let mut placed: Vec<[f64; 2]> = Vec::with_capacity(m);
        for _ in 0..1000 {
            if placed.len() == m {
                break;
            }
            let p = [rng.random_range(0.0..side), rng.random_range(0.0..side)];
            if placed
                .iter()
                .all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_sep)
            {
                placed.push(p);
            }
        }
        if placed.len() == m {
            return placed;
        }
        side *= 1.1;
    }
}

/// Random spanning tree plus each remaining pair with probability `p`.
fn sample_edges(m: usize, p: f64, rng: &mut impl Rng) -> Vec<(TeamId, TeamId)> {
    let mut order: Vec<TeamId> = (0..m).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..m {
        let parent = order[rng.random_range(0..k)];
        edges.push((parent.min(order[k]), parent.max(order[k])));
    }
    for i in 0..m {
        for j in i + 1..m {
            if !edges.contains(&(i, j)) && rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Uniform over feasible assignments by rejection; falls back to seeding
/// each team with one sensing robot if rejection keeps failing.
fn sample_assignment(problem: &Problem, rng: &mut impl Rng) -> Assignment {
    let (m, n) = (problem.num_teams(), problem.num_robots());
    for _ in 0..ASSIGNMENT_TRIES {
        let a = Assignment::new((0..n).map(|_| rng.random_range(0..m)).collect());
        if problem.check(&a).is_ok() {
            return a;
        }
    }
    let mut sensors: Vec<usize> = (0..n).filter(|&r| problem.robots[r].has(SENSING)).collect();
    sensors.shuffle(rng);
    let mut team_of: Vec<TeamId> = (0..n).map(|_| rng.random_range(0..m)).collect();
    for (team, &r) in sensors.iter().take(m).enumerate() {
        team_of[r] = team;
    }
    Assignment::new(team_of)
}

/// Graph features of the instance's live state.
pub fn encode_features(instance: &Instance, seed: u64) -> GraphState {
    encode_with_mask(instance, &instance.hamilton_mask(), seed)
}

pub fn encode_with_mask(instance: &Instance, mask: &HamiltonMask, seed: u64) -> GraphState {
    let problem = &instance.problem;
    let (m, n) = (problem.num_teams(), problem.num_robots());
    let sets = instance.assignment.team_sets(m);
    let team_features = (0..m)
        .map(|v| {
            let s = instance.mission.team_stats(v, &sets[v], &problem.robots);
            vec![
                problem.weights.get(v),
                sets[v].len() as f64,
                s.sensing as f64,
                s.fighters as f64,
                s.total_fire,
                s.psi,
                s.power,
                s.locational_cost,
            ]
        })
        .collect();
    let robot_features = problem
        .robots
        .iter()
        .map(|r| {
            vec![
                f64::from(r.has(SENSING) as u8),
                f64::from(r.has(FIGHTER) as u8),
                r.speed,
                r.capacity,
            ]
        })
        .collect();
    let edges = problem.graph.directed_edges();
    let pos = problem.graph.positions();
    let edge_features = edges
        .iter()
        .map(|&(i, j)| {
            vec![
                pos[j][0] - pos[i][0],
                pos[j][1] - pos[i][1],
                problem.graph.distance(i, j),
                relatedness(&problem.weights, i, j),
                1.0,
            ]
        })
        .collect();
    let rows = mask.rows().to_vec();
    let candidate_mask = rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let cur = instance.assignment.team(r);
            row.iter().enumerate().map(|(v, &a)| a || v == cur).collect()
        })
        .collect();
    let distance_row = (0..n)
        .map(|r| {
            let cur = instance.assignment.team(r);
            (0..m).map(|v| problem.travel_time(r, cur, v)).collect()
        })
        .collect();
    GraphState {
        team_features,
        robot_features,
        edges,
        edge_features,
        hamilton_mask: rows,
        candidate_mask,
        distance_row,
        current: instance.assignment.team_of.clone(),
        meta: SampleMeta {
            seed,
            teams: m,
            robots: n,
        },
    }
}

/// Exact one-step label for the instance, or `None` if the solver timed out.
pub fn label_instance(
    instance: &Instance,
    opts: &SolveOptions,
    seed: u64,
) -> Result<Option<GraphSample>> {
    let mask = instance.hamilton_mask();
    let oracle = instance.oracle();
    let res = solve_one_step(&instance.problem, &instance.assignment, &oracle, &mask, opts)?;
    if res.timed_out {
        return Ok(None);
    }
    Ok(Some(GraphSample {
        state: encode_with_mask(instance, &mask, seed),
        label: res.best_assignment.team_of,
    }))
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero spread; these are only centered.
    pub constant: Vec<bool>,
}

impl FeatureStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            constant: vec![false; dim],
        }
    }

    pub fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]> + Clone) -> Self {
        let mut count = 0usize;
        let mut sum = vec![0.0; dim];
        for row in rows.clone() {
            count += 1;
            for (s, x) in sum.iter_mut().zip(row) {
                *s += x;
            }
        }
        if count == 0 {
            return Self::identity(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; dim];
        for row in rows {
            for ((s, x), mu) in sq.iter_mut().zip(row).zip(&mean) {
                *s += (x - mu) * (x - mu);
            }
        }
        let std: Vec<f64> = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
        let constant = std.iter().map(|&s| s <= 1e-12).collect();
        Self { mean, std, constant }
    }

    pub fn apply(&self, col: usize, x: f64) -> f64 {
        if self.constant[col] {
            x - self.mean[col]
        } else {
            (x - self.mean[col]) / self.std[col]
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Normalization statistics for every feature family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// The split the statistics were fitted on; always `"train"`.
    pub source: String,
    pub team: FeatureStats,
    pub robot: FeatureStats,
    pub edge: FeatureStats,
    pub xi: FeatureStats,
}

impl Normalization {
    pub fn identity(schema: &FeatureSchema) -> Self {
        Self {
            source: "identity".into(),
            team: FeatureStats::identity(schema.team_dim()),
            robot: FeatureStats::identity(schema.robot_dim()),
            edge: FeatureStats::identity(schema.edge_dim()),
            xi: FeatureStats::identity(1),
        }
    }

    pub fn fit(train: &[GraphSample], schema: &FeatureSchema) -> Self {
        let states = || train.iter().map(|s| &s.state);
        let xi: Vec<[f64; 1]> = states()
            .flat_map(|s| s.distance_row.iter().flatten().map(|&x| [x]))
            .collect();
        Self {
            source: "train".into(),
            team: FeatureStats::fit(
                schema.team_dim(),
                states().flat_map(|s| s.team_features.iter().map(Vec::as_slice)),
            ),
            robot: FeatureStats::fit(
                schema.robot_dim(),
                states().flat_map(|s| s.robot_features.iter().map(Vec::as_slice)),
            ),
            edge: FeatureStats::fit(
                schema.edge_dim(),
                states().flat_map(|s| s.edge_features.iter().map(Vec::as_slice)),
            ),
            xi: FeatureStats::fit(1, xi.iter().map(|x| x.as_slice())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub num_samples: usize,
    pub teams_min: usize,
    pub teams_max: usize,
    pub robots_per_team_min: usize,
    pub robots_per_team_max: usize,
    pub seed: u64,
    pub lambda: f64,
    pub alpha: f64,
    #[serde(with = "crate::solver::duration_secs")]
    pub timeout: Duration,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub threads: usize,
    /// Fresh seeds tried for one sample slot before giving up.
    pub max_attempts: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_samples: 1000,
            teams_min: 3,
            teams_max: 7,
            robots_per_team_min: 3,
            robots_per_team_max: 5,
            seed: 0,
            lambda: 1.0,
            alpha: 0.1,
            timeout: Duration::from_secs(10),
            val_fraction: 0.1,
            test_fraction: 0.1,
            threads: 1,
            max_attempts: 20,
        }
    }
}

impl DatasetConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.num_samples > 0
            && self.teams_min >= 1
            && self.teams_min <= self.teams_max
            && self.robots_per_team_min >= 1
            && self.robots_per_team_min <= self.robots_per_team_max
            && self.val_fraction >= 0.0
            && self.test_fraction >= 0.0
            && self.val_fraction + self.test_fraction < 1.0
            && self.max_attempts >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Dataset(format!("invalid dataset config {self:?}")))
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            lambda: self.lambda,
            alpha: self.alpha,
            timeout: Some(self.timeout),
            threads: 1,
        }
    }

    /// Team count of sample slot `index`: slots cycle through the range so
    /// every team count gets the same share.
    pub fn teams_for(&self, index: usize) -> usize {
        self.teams_min + index % (self.teams_max - self.teams_min + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub num_samples: usize,
    pub splits: SplitSizes,
    pub team_histogram: BTreeMap<usize, usize>,
    pub robot_histogram: BTreeMap<usize, usize>,
    pub stay_count: usize,
    pub move_count: usize,
    pub move_fraction: f64,
    /// Timed-out labelings per team count.
    pub skipped: BTreeMap<usize, usize>,
    pub normalization: Normalization,
    pub schema: FeatureSchema,
    pub config: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub split: String,
    pub count: usize,
    pub schema: FeatureSchema,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<GraphSample>,
    pub val: Vec<GraphSample>,
    pub test: Vec<GraphSample>,
    pub manifest: DatasetManifest,
}

struct Slot {
    sample: GraphSample,
    skipped: usize,
}

fn label_slot(config: &DatasetConfig, index: usize) -> Result<Slot> {
    let teams = config.teams_for(index);
    let opts = config.solve_options();
    for attempt in 0..config.max_attempts {
        let seed = derive_seed(config.seed, &[index as u64, attempt as u64]);
        let inst = sample_instance(
            seed,
            teams..=teams,
            config.robots_per_team_min..=config.robots_per_team_max,
        )?;
        if let Some(sample) = label_instance(&inst, &opts, seed)? {
            return Ok(Slot {
                sample,
                skipped: attempt,
            });
        }
        log::debug!("sample {index}: attempt {attempt} timed out");
    }
    Err(Error::Dataset(format!(
        "sample {index} with {teams} teams timed out {} times",
        config.max_attempts
    )))
}

/// Largest-remainder apportionment of `total` across groups sized `sizes`.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| total as f64 * s as f64 / n as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let short = total - out.iter().sum::<usize>();
    for &g in order.iter().take(short) {
        out[g] += 1;
    }
    out
}

/// Samples, labels and splits a dataset in memory.
pub fn build_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let run = |i: usize| label_slot(config, i);
    let slots: Vec<Result<Slot>> = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Dataset(format!("thread pool: {e}")))?;
        pool.install(|| (0..config.num_samples).into_par_iter().map(run).collect())
    } else {
        (0..config.num_samples).map(run).collect()
    };
    let slots = slots.into_iter().collect::<Result<Vec<_>>>()?;

    let mut skipped: BTreeMap<usize, usize> = BTreeMap::new();
    let mut accepted: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, s) in slots.iter().enumerate() {
        *skipped.entry(config.teams_for(i)).or_default() += s.skipped;
        *accepted.entry(config.teams_for(i)).or_default() += 1;
    }
    for (&m, &k) in &skipped {
        let rate = k as f64 / (k + accepted[&m]) as f64;
        if rate > 0.5 {
            return Err(Error::Dataset(format!(
                "{:.0}% of {m}-team instances timed out; raise the timeout",
                rate * 100.0
            )));
        }
    }

    // Stratify by team count: every group contributes to val and test in
    // proportion to its size.
    let n = slots.len();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in slots.iter().enumerate() {
        groups.entry(s.sample.state.num_teams()).or_default().push(i);
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let n_val = (config.val_fraction * n as f64).round() as usize;
    let n_test = (config.test_fraction * n as f64).round() as usize;
    let val_share = apportion(n_val, &sizes);
    let test_share = apportion(n_test, &sizes);
    let mut rng = rng_for(config.seed, &[u64::MAX]);
    let (mut train_idx, mut val_idx, mut test_idx) = (Vec::new(), Vec::new(), Vec::new());
    for (g, members) in groups.values().enumerate() {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        let (v, t) = (val_share[g], test_share[g]);
        val_idx.extend_from_slice(&members[..v]);
        test_idx.extend_from_slice(&members[v..v + t]);
        train_idx.extend_from_slice(&members[v + t..]);
    }
    for idx in [&mut train_idx, &mut val_idx, &mut test_idx] {
        idx.shuffle(&mut rng);
    }

    let mut samples: Vec<Option<GraphSample>> = slots.into_iter().map(|s| Some(s.sample)).collect();
    let mut take = |idx: &[usize]| -> Vec<GraphSample> {
        idx.iter().map(|&i| samples[i].take().expect("index used once")).collect()
    };
    let (train, val, test) = (take(&train_idx), take(&val_idx), take(&test_idx));

    let schema = FeatureSchema::current();
    let all = || train.iter().chain(&val).chain(&test);
    let mut team_histogram = BTreeMap::new();
    let mut robot_histogram = BTreeMap::new();
    let (mut stay_count, mut move_count) = (0, 0);
    for s in all() {
        *team_histogram.entry(s.state.num_teams()).or_default() += 1;
        *robot_histogram.entry(s.state.num_robots()).or_default() += 1;
        let moves = s.move_count();
        move_count += moves;
        stay_count += s.label.len() - moves;
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        num_samples: n,
        splits: SplitSizes {
            train: train.len(),
            val: val.len(),
            test: test.len(),
        },
        team_histogram,
        robot_histogram,
        stay_count,
        move_count,
        move_fraction: move_count as f64 / (stay_count + move_count).max(1) as f64,
        skipped,
        normalization: Normalization::fit(&train, &schema),
        schema,
        config: config.clone(),
    };
    Ok(Dataset {
        train,
        val,
        test,
        manifest,
    })
}

/// Builds the dataset and writes `train.jsonl`, `val.jsonl`, `test.jsonl`
/// and `manifest.json` into `dir`.
pub fn generate_dataset(config: &DatasetConfig, dir: &Path) -> Result<DatasetManifest> {
    let ds = build_dataset(config)?;
    write_dataset(&ds, dir)?;
    Ok(ds.manifest)
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, split) in [("train", &ds.train), ("val", &ds.val), ("test", &ds.test)] {
        write_split(&dir.join(format!("{name}.jsonl")), name, split, &ds.manifest.schema)?;
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&ds.manifest).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn write_split(
    path: &Path,
    split: &str,
    samples: &[GraphSample],
    schema: &FeatureSchema,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        split: split.into(),
        count: samples.len(),
        schema: schema.clone(),
    };
    write_line(&mut w, path, &header)?;
    for s in samples {
        write_line(&mut w, path, s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_line<T: Serialize>(w: &mut impl Write, path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Reads one split file, checking its header and every sample.
pub fn read_split(path: &Path) -> Result<(DatasetHeader, Vec<GraphSample>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Dataset(format!("{}: empty file", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: DatasetHeader = serde_json::from_str(&first).map_err(|e| Error::json(path, e))?;
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
        return Err(Error::Dataset(format!(
            "{}: unsupported format {} v{}",
            path.display(),
            header.format,
            header.version
        )));
    }
    if header.schema != FeatureSchema::current() {
        return Err(Error::SchemaMismatch(format!(
            "{} uses feature schema v{}",
            path.display(),
            header.schema.version
        )));
    }
    let mut samples = Vec::with_capacity(header.count);
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let s: GraphSample = serde_json::from_str(&line).map_err(|e| Error::json(path, e))?;
        s.validate(&header.schema)?;
        samples.push(s);
    }
    if samples.len() != header.count {
        return Err(Error::Dataset(format!(
            "{}: header says {} samples, found {}",
            path.display(),
            header.count,
            samples.len()
        )));
    }
    Ok((header, samples))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Loads all three splits and the manifest from a dataset directory.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(&dir.join("manifest.json"))?;
    let load = |name: &str| read_split(&dir.join(format!("{name}.jsonl"))).map(|(_, s)| s);
    Ok(Dataset {
        train: load("train")?,
        val: load("val")?,
        test: load("test")?,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance_json() {
        let a = sample_instance(11, 3..=5, 3..=5).unwrap().to_json();
        let b = sample_instance(11, 3..=5, 3..=5).unwrap().to_json();
        assert_eq!(a, b);
        assert_ne!(a, sample_instance(12, 3..=5, 3..=5).unwrap().to_json());
    }

    #[test]
    fn three_teams_three_robots_each() {
        let inst = sample_instance(5, 3..=3, 3..=3).unwrap();
        assert_eq!(inst.num_teams(), 3);
        assert_eq!(inst.num_robots(), 9);
        // The graph constructor rejects disconnected graphs.
        assert!(inst.problem.graph.edges().len() >= 2);
    }

    #[test]
    fn regions_do_not_overlap() {
        for seed in 0..50 {
            let inst = sample_instance(seed, 7..=7, 3..=3).unwrap();
            inst.mission.validate().unwrap();
        }
    }

    #[test]
    fn initial_assignments_feasible_over_many_seeds() {
        for seed in 0..1000 {
            let inst = sample_instance(seed, 3..=7, 3..=5).unwrap();
            inst.problem.check(&inst.assignment).unwrap();
            for r in &inst.problem.robots {
                assert!((0.5..=2.0).contains(&r.speed));
                assert_eq!(r.capability.iter().sum::<u8>(), 1);
            }
        }
    }

    #[test]
    fn empty_ranges_rejected() {
        #[allow(clippy::reversed_empty_ranges)]
        let bad = 4..=3;
        assert!(sample_instance(0, bad, 3..=3).is_err());
        assert!(sample_instance(0, 3..=3, 0..=0).is_err());
    }

    #[test]
    fn robot_and_edge_features() {
        let inst = sample_instance(3, 4..=4, 3..=4).unwrap();
        let s = encode_features(&inst, 3);
        s.validate(&FeatureSchema::current()).unwrap();
        for (r, robot) in inst.problem.robots.iter().enumerate() {
            if robot.has(SENSING) {
                assert_eq!(s.robot_features[r], vec![1.0, 0.0, robot.speed, 0.0]);
            }
        }
        for &(i, j) in &s.edges {
            let fwd = s.edge_feature(i, j).unwrap();
            let back = s.edge_feature(j, i).unwrap();
            assert_eq!(fwd[2], back[2]);
            assert_eq!(fwd[3], relatedness(&inst.problem.weights, i, j));
            assert_eq!(fwd[0], -back[0]);
        }
    }

    #[test]
    fn all_stay_mask_labels_current_team() {
        let inst = sample_instance(9, 3..=3, 3..=3).unwrap();
        let mask = HamiltonMask::stay_only(&inst.assignment, 3);
        let res = solve_one_step(
            &inst.problem,
            &inst.assignment,
            &inst.oracle(),
            &mask,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(res.best_assignment, inst.assignment);
    }

    #[test]
    fn labels_respect_candidate_mask() {
        let opts = SolveOptions::default();
        for seed in 0..60 {
            let inst = sample_instance(seed, 3..=4, 3..=4).unwrap();
            let s = label_instance(&inst, &opts, seed).unwrap().unwrap();
            s.validate(&FeatureSchema::current()).unwrap();
        }
    }

    #[test]
    fn apportion_examples() {
        assert_eq!(apportion(10, &[50, 50]), vec![5, 5]);
        assert_eq!(apportion(10, &[34, 33, 33]), vec![4, 3, 3]);
        assert_eq!(apportion(0, &[3, 4]), vec![0, 0]);
    }

    #[test]
    fn split_sizes_and_train_only_normalization() {
        let cfg = DatasetConfig {
            num_samples: 100,
            teams_min: 3,
            teams_max: 4,
            robots_per_team_max: 3,
            ..DatasetConfig::default()
        };
        let ds = build_dataset(&cfg).unwrap();
        assert_eq!(ds.manifest.splits, SplitSizes { train: 80, val: 10, test: 10 });
        assert_eq!(ds.manifest.team_histogram.values().sum::<usize>(), 100);
        assert_eq!(ds.manifest.robot_histogram.values().sum::<usize>(), 100);
        assert_eq!(ds.manifest.normalization.source, "train");
        let count_teams = |s: &[GraphSample], m| s.iter().filter(|x| x.state.num_teams() == m).count();
        assert_eq!(count_teams(&ds.val, 3), 5);
        assert_eq!(count_teams(&ds.test, 4), 5);

        let norm = &ds.manifest.normalization;
        let rows: Vec<Vec<f64>> = ds
            .train
            .iter()
            .flat_map(|s| &s.state.team_features)
            .map(|f| f.iter().enumerate().map(|(c, &x)| norm.team.apply(c, x)).collect())
            .collect();
        let refit = FeatureStats::fit(8, rows.iter().map(Vec::as_slice));
        for c in 0..8 {
            assert!(refit.mean[c].abs() < 1e-9);
            if !norm.team.constant[c] {
                assert!((refit.std[c] - 1.0).abs() < 1e-9);
            }
        }
    }
}
