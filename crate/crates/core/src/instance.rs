//! A full fire-fighting problem state and its JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fire::{
    CoverageConfig, DensityField, FireDynamicsConfig, FireMission, FireOracle, TeamRegion, SENSING,
};
use crate::model::{
    self, Assignment, Constraints, HamiltonMask, InteractionGraph, Problem, Robot, TeamId,
    TeamWeights, Transfer,
};

/// Team graph, robots, current assignment and fire state.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub problem: Problem,
    pub assignment: Assignment,
    pub mission: FireMission,
}

/// Constraints of the fire application: nonempty teams with a sensing robot.
pub fn fire_constraints() -> Constraints {
    Constraints {
        require_nonempty: true,
        required_capability: Some(SENSING),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MissionParams {
    regions: Vec<TeamRegion>,
    densities: Vec<DensityField>,
    coverage: CoverageConfig,
    dynamics: FireDynamicsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    teams: usize,
    edges: Vec<(TeamId, TeamId)>,
    positions: Vec<[f64; 2]>,
    weights: Vec<f64>,
    robots: Vec<Robot>,
    assignment: Vec<TeamId>,
    mission_params: MissionParams,
}

impl Instance {
    pub fn new(problem: Problem, assignment: Assignment, mission: FireMission) -> Result<Self> {
        if mission.num_teams() != problem.num_teams() {
            return Err(Error::InvalidInstance(format!(
                "mission has {} regions for {} teams",
                mission.num_teams(),
                problem.num_teams()
            )));
        }
        problem.check(&assignment)?;
        Ok(Self {
            problem,
            assignment,
            mission,
        })
    }

    pub fn num_teams(&self) -> usize {
        self.problem.num_teams()
    }

    pub fn num_robots(&self) -> usize {
        self.problem.num_robots()
    }

    pub fn oracle(&self) -> FireOracle<'_> {
        self.mission.oracle(&self.problem.robots)
    }

    pub fn hamilton_mask(&self) -> HamiltonMask {
        model::hamilton_mask(&self.problem, &self.assignment, &self.oracle())
    }

    pub fn objective(&self, assignment: &Assignment) -> f64 {
        model::global_objective(assignment, &self.problem.weights, &self.oracle())
    }

    pub fn transfer_cost(&self, next: &Assignment, alpha: f64) -> f64 {
        model::transfer_cost(
            &self.assignment,
            next,
            &self.problem.graph,
            &self.problem.robots,
            alpha,
        )
    }

    /// `G(next) − λ·C(current, next)`.
    pub fn one_step_score(&self, next: &Assignment, lambda: f64, alpha: f64) -> f64 {
        self.objective(next) - lambda * self.transfer_cost(next, alpha)
    }

    pub fn apply_transfers(&self, transfers: &[Transfer]) -> Result<Assignment> {
        model::apply_transfers(&self.problem, &self.assignment, transfers)
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::from_file(file).map_err(|e| e.to_string())
    }

    fn from_file(f: InstanceFile) -> Result<Self> {
        if f.positions.len() != f.teams {
            return Err(Error::InvalidInstance(format!(
                "{} positions for {} teams",
                f.positions.len(),
                f.teams
            )));
        }
        let graph = InteractionGraph::new(f.positions, &f.edges)?;
        let problem = Problem::new(
            graph,
            TeamWeights::new(f.weights)?,
            f.robots,
            fire_constraints(),
        )?;
        let mp = f.mission_params;
        let mission = FireMission::new(mp.regions, mp.densities, mp.coverage, mp.dynamics)?;
        Instance::new(problem, Assignment::new(f.assignment), mission)
    }

    fn to_file(&self) -> InstanceFile {
        InstanceFile {
            teams: self.num_teams(),
            edges: self.problem.graph.edges().to_vec(),
            positions: self.problem.graph.positions().to_vec(),
            weights: self.problem.weights.as_slice().to_vec(),
            robots: self.problem.robots.clone(),
            assignment: self.assignment.team_of.clone(),
            mission_params: MissionParams {
                regions: self.mission.regions.clone(),
                densities: self.mission.densities.clone(),
                coverage: self.mission.coverage,
                dynamics: self.mission.dynamics,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("instance serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_file()).expect("instance serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
