//! Teams, robots, assignments and the Hamilton-rule admissibility engine.
//!
//! Everything here is capability-agnostic: a team's mission is reached only
//! through the [`MissionOracle`] trait, and the only application knowledge is
//! the optional "keep at least one robot with capability `c`" constraint.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Constraint, Error, Result};

pub type TeamId = usize;
pub type RobotId = usize;

/// Undirected, connected team interaction graph with planar team positions.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    positions: Vec<[f64; 2]>,
    edges: Vec<(TeamId, TeamId)>,
    neighbors: Vec<Vec<TeamId>>,
    distance: Vec<f64>,
}

impl InteractionGraph {
    /// Builds the graph, normalizing each edge to `(min, max)` and
    /// rejecting self-loops, out-of-range endpoints and disconnected graphs.
    pub fn new(positions: Vec<[f64; 2]>, edges: &[(TeamId, TeamId)]) -> Result<Self> {
        let m = positions.len();
        if m == 0 {
            return Err(Error::InvalidGraph("graph has no teams".into()));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGraph("non-finite team position".into()));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= m || b >= m {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a team outside 0..{m}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on team {a}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();

        let mut neighbors = vec![Vec::new(); m];
        for &(a, b) in &norm {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let mut seen = vec![false; m];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &neighbors[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        if let Some(lost) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidGraph(format!(
                "graph is not connected (team {lost} unreachable from team 0)"
            )));
        }

        let mut distance = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let dx = positions[i][0] - positions[j][0];
                    let dy = positions[i][1] - positions[j][1];
                    distance[i * m + j] = dx.hypot(dy);
                }
            }
        }

        Ok(Self {
            positions,
            edges: norm,
            neighbors,
            distance,
        })
    }

    pub fn num_teams(&self) -> usize {
        self.positions.len()
    }

    pub fn edges(&self) -> &[(TeamId, TeamId)] {
        &self.edges
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// Neighbors of `team`, ascending.
    pub fn neighbors(&self, team: TeamId) -> &[TeamId] {
        &self.neighbors[team]
    }

    pub fn is_edge(&self, a: TeamId, b: TeamId) -> bool {
        a != b && self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Euclidean distance between team positions in meters.
    pub fn distance(&self, a: TeamId, b: TeamId) -> f64 {
        self.distance[a * self.num_teams() + b]
    }

    /// Both directions of every undirected edge, sorted by `(dst, src)`.
    pub fn directed_edges(&self) -> Vec<(TeamId, TeamId)> {
        let mut out: Vec<_> = self
            .edges
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .collect();
        out.sort_unstable_by_key(|&(src, dst)| (dst, src));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub id: RobotId,
    /// Binary capability vector.
    pub capability: Vec<u8>,
    /// Speed in m/s.
    pub speed: f64,
    /// Suppression capacity; zero for robots without an actuation role.
    pub capacity: f64,
}

impl Robot {
    pub fn has(&self, capability: usize) -> bool {
        self.capability.get(capability).copied() == Some(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "robot {} has non-positive speed {}",
                self.id, self.speed
            )));
        }
        if !(self.capacity >= 0.0 && self.capacity.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "robot {} has invalid capacity {}",
                self.id, self.capacity
            )));
        }
        if self.capability.iter().any(|&c| c > 1) {
            return Err(Error::InvalidInstance(format!(
                "robot {} has a non-binary capability vector",
                self.id
            )));
        }
        Ok(())
    }
}

/// Mission-importance weights, all strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TeamWeights(Vec<f64>);

impl TeamWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(bad) = w.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInstance(format!(
                "team weight {bad} is not strictly positive"
            )));
        }
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, team: TeamId) -> f64 {
        self.0[team]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for TeamWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TeamWeights::new(v)
    }
}

impl From<TeamWeights> for Vec<f64> {
    fn from(w: TeamWeights) -> Self {
        w.0
    }
}

/// Relatedness of donor `i` to receiver `j`: `w_j / w_i`.
pub fn relatedness(weights: &TeamWeights, i: TeamId, j: TeamId) -> f64 {
    weights.get(j) / weights.get(i)
}

/// Dense robot-to-team map; `team_of[r]` is the current team of robot `r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    pub team_of: Vec<TeamId>,
}

impl Assignment {
    pub fn new(team_of: Vec<TeamId>) -> Self {
        Self { team_of }
    }

    pub fn num_robots(&self) -> usize {
        self.team_of.len()
    }

    pub fn team(&self, robot: RobotId) -> TeamId {
        self.team_of[robot]
    }

    /// Member lists per team, each sorted ascending by robot id.
    pub fn team_sets(&self, num_teams: usize) -> Vec<Vec<RobotId>> {
        let mut sets = vec![Vec::new(); num_teams];
        for (r, &t) in self.team_of.iter().enumerate() {
            sets[t].push(r);
        }
        sets
    }

    pub fn members(&self, team: TeamId) -> Vec<RobotId> {
        self.team_of
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == team)
            .map(|(r, _)| r)
            .collect()
    }

    pub fn team_sizes(&self, num_teams: usize) -> Vec<usize> {
        let mut n = vec![0; num_teams];
        for &t in &self.team_of {
            n[t] += 1;
        }
        n
    }

    /// The N×M binary matrix form.
    pub fn to_one_hot(&self, num_teams: usize) -> Vec<Vec<u8>> {
        self.team_of
            .iter()
            .map(|&t| (0..num_teams).map(|v| u8::from(v == t)).collect())
            .collect()
    }

    pub fn from_one_hot(x: &[Vec<u8>]) -> Result<Self> {
        let team_of = x
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let ones: Vec<_> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| b == 1)
                    .map(|(v, _)| v)
                    .collect();
                if ones.len() == 1 && row.iter().all(|&b| b <= 1) {
                    Ok(ones[0])
                } else {
                    Err(Error::InvalidInstance(format!(
                        "row {r} of the assignment matrix is not one-hot"
                    )))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { team_of })
    }

    /// Number of robots whose team differs between `self` and `other`.
    pub fn moved_count(&self, other: &Assignment) -> usize {
        self.team_of
            .iter()
            .zip(&other.team_of)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Hard feasibility constraints on every team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub require_nonempty: bool,
    /// Each team must keep at least one robot with this capability.
    pub required_capability: Option<usize>,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            require_nonempty: true,
            required_capability: None,
        }
    }
}

impl Constraints {
    pub fn check(&self, assignment: &Assignment, robots: &[Robot], num_teams: usize) -> Result<()> {
        let mut size = vec![0usize; num_teams];
        let mut capable = vec![0usize; num_teams];
        for (r, &t) in assignment.team_of.iter().enumerate() {
            if t >= num_teams {
                return Err(Error::InvalidInstance(format!(
                    "robot {r} assigned to unknown team {t}"
                )));
            }
            size[t] += 1;
            if let Some(c) = self.required_capability {
                if robots[r].has(c) {
                    capable[t] += 1;
                }
            }
        }
        for team in 0..num_teams {
            if self.require_nonempty && size[team] == 0 {
                return Err(Error::Infeasible {
                    team,
                    constraint: Constraint::Nonempty,
                });
            }
            if let Some(c) = self.required_capability {
                if capable[team] == 0 {
                    return Err(Error::Infeasible {
                        team,
                        constraint: Constraint::Capability(c),
                    });
                }
            }
        }
        Ok(())
    }

    /// Whether robot `r` may leave a team whose current members are `source`
    /// without that team breaking a constraint.
    pub fn may_leave(&self, r: RobotId, source: &[RobotId], robots: &[Robot]) -> bool {
        if self.require_nonempty && source.len() <= 1 {
            return false;
        }
        if let Some(c) = self.required_capability {
            if robots[r].has(c) && source.iter().filter(|&&s| robots[s].has(c)).count() <= 1 {
                return false;
            }
        }
        true
    }
}

/// The static part of an allocation problem: who exists and how teams relate.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub graph: InteractionGraph,
    pub weights: TeamWeights,
    pub robots: Vec<Robot>,
    pub constraints: Constraints,
}

impl Problem {
    pub fn new(
        graph: InteractionGraph,
        weights: TeamWeights,
        robots: Vec<Robot>,
        constraints: Constraints,
    ) -> Result<Self> {
        if weights.len() != graph.num_teams() {
            return Err(Error::InvalidInstance(format!(
                "{} weights for {} teams",
                weights.len(),
                graph.num_teams()
            )));
        }
        for (i, robot) in robots.iter().enumerate() {
            if robot.id != i {
                return Err(Error::InvalidInstance(format!(
                    "robot at index {i} has id {}",
                    robot.id
                )));
            }
            robot.validate()?;
        }
        Ok(Self {
            graph,
            weights,
            robots,
            constraints,
        })
    }

    pub fn num_teams(&self) -> usize {
        self.graph.num_teams()
    }

    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn check(&self, assignment: &Assignment) -> Result<()> {
        if assignment.num_robots() != self.num_robots() {
            return Err(Error::InvalidInstance(format!(
                "assignment covers {} robots, problem has {}",
                assignment.num_robots(),
                self.num_robots()
            )));
        }
        self.constraints
            .check(assignment, &self.robots, self.num_teams())
    }

    /// Travel time of robot `r` from team `from` to team `to`.
    pub fn travel_time(&self, r: RobotId, from: TeamId, to: TeamId) -> f64 {
        self.graph.distance(from, to) / self.robots[r].speed
    }
}

/// Set-dependent mission evaluation `F_v(S_v)`.
///
/// `members` is always sorted ascending by robot id. Implementations must
/// be deterministic in `(team, members)` and their own state.
pub trait MissionOracle: Sync {
    fn evaluate(&self, team: TeamId, members: &[RobotId]) -> f64;
}

impl<T: MissionOracle + ?Sized> MissionOracle for &T {
    fn evaluate(&self, team: TeamId, members: &[RobotId]) -> f64 {
        (**self).evaluate(team, members)
    }
}

fn with_member(set: &[RobotId], r: RobotId) -> Vec<RobotId> {
    let mut out = set.to_vec();
    let at = out.partition_point(|&x| x < r);
    out.insert(at, r);
    out
}

fn without_member(set: &[RobotId], r: RobotId) -> Vec<RobotId> {
    set.iter().copied().filter(|&x| x != r).collect()
}

/// `F_j(S ∪ {r}) − F_j(S)`.
pub fn marginal_benefit(
    oracle: &dyn MissionOracle,
    team: TeamId,
    set: &[RobotId],
    r: RobotId,
) -> Result<f64> {
    if set.contains(&r) {
        return Err(Error::AlreadyMember { robot: r, team });
    }
    Ok(oracle.evaluate(team, &with_member(set, r)) - oracle.evaluate(team, set))
}

/// `F_i(S) − F_i(S \ {r})`.
pub fn marginal_cost(
    oracle: &dyn MissionOracle,
    team: TeamId,
    set: &[RobotId],
    r: RobotId,
) -> Result<f64> {
    if !set.contains(&r) {
        return Err(Error::NotMember { robot: r, team });
    }
    Ok(oracle.evaluate(team, set) - oracle.evaluate(team, &without_member(set, r)))
}

/// Per-robot admissible destinations, stored row-major as N×M.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HamiltonMask {
    num_teams: usize,
    admissible: Vec<Vec<bool>>,
}

impl HamiltonMask {
    /// Only "stay" is admissible.
    pub fn stay_only(assignment: &Assignment, num_teams: usize) -> Self {
        let admissible = assignment
            .team_of
            .iter()
            .map(|&t| (0..num_teams).map(|v| v == t).collect())
            .collect();
        Self {
            num_teams,
            admissible,
        }
    }

    /// Every team is admissible for every robot.
    pub fn full(num_robots: usize, num_teams: usize) -> Self {
        Self {
            num_teams,
            admissible: vec![vec![true; num_teams]; num_robots],
        }
    }

    pub fn from_rows(admissible: Vec<Vec<bool>>, num_teams: usize) -> Result<Self> {
        if admissible.iter().any(|row| row.len() != num_teams) {
            return Err(Error::InvalidInstance(
                "mask row length differs from team count".into(),
            ));
        }
        Ok(Self {
            num_teams,
            admissible,
        })
    }

    pub fn num_teams(&self) -> usize {
        self.num_teams
    }

    pub fn num_robots(&self) -> usize {
        self.admissible.len()
    }

    pub fn is_admissible(&self, r: RobotId, team: TeamId) -> bool {
        self.admissible[r][team]
    }

    pub fn set(&mut self, r: RobotId, team: TeamId, value: bool) {
        self.admissible[r][team] = value;
    }

    /// Admissible destinations of robot `r`, ascending.
    pub fn destinations(&self, r: RobotId) -> impl Iterator<Item = TeamId> + '_ {
        self.admissible[r]
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(v, _)| v)
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.admissible
    }

    /// Number of admissible (robot, non-current team) pairs.
    pub fn move_count(&self, assignment: &Assignment) -> usize {
        (0..self.num_robots())
            .map(|r| {
                self.destinations(r)
                    .filter(|&v| v != assignment.team(r))
                    .count()
            })
            .sum()
    }
}

/// Hamilton-admissible destinations for every robot.
///
/// A robot in team `i` may go to neighbor `j` iff `r_ij · B_{r,j}(S_j) >
/// C_{r,i}(S_i)` (strict, no epsilon) and leaving does not break a hard
/// constraint of `i`. Staying is always admissible.
pub fn hamilton_mask(
    problem: &Problem,
    assignment: &Assignment,
    oracle: &dyn MissionOracle,
) -> HamiltonMask {
    let m = problem.num_teams();
    let sets = assignment.team_sets(m);
    let current: Vec<f64> = (0..m).map(|v| oracle.evaluate(v, &sets[v])).collect();
    let mut mask = HamiltonMask::stay_only(assignment, m);

    for (r, &i) in assignment.team_of.iter().enumerate() {
        if problem.graph.neighbors(i).is_empty()
            || !problem
                .constraints
                .may_leave(r, &sets[i], &problem.robots)
        {
            continue;
        }
        let cost = current[i] - oracle.evaluate(i, &without_member(&sets[i], r));
        for &j in problem.graph.neighbors(i) {
            let benefit = oracle.evaluate(j, &with_member(&sets[j], r)) - current[j];
            if relatedness(&problem.weights, i, j) * benefit > cost {
                mask.set(r, j, true);
            }
        }
    }
    mask
}

/// `Σ_v w_v F_v(S_v)`.
pub fn global_objective(
    assignment: &Assignment,
    weights: &TeamWeights,
    oracle: &dyn MissionOracle,
) -> f64 {
    assignment
        .team_sets(weights.len())
        .iter()
        .enumerate()
        .map(|(v, set)| weights.get(v) * oracle.evaluate(v, set))
        .sum()
}

/// `Σ_r α · d(cur_prev(r), cur_next(r)) / s_r`.
pub fn transfer_cost(
    prev: &Assignment,
    next: &Assignment,
    graph: &InteractionGraph,
    robots: &[Robot],
    alpha: f64,
) -> f64 {
    prev.team_of
        .iter()
        .zip(&next.team_of)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(r, (&a, &b))| alpha * graph.distance(a, b) / robots[r].speed)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub robot: RobotId,
    pub from: TeamId,
    pub to: TeamId,
}

/// Applies `transfers` and checks the result against the problem's hard
/// constraints.
pub fn apply_transfers(
    problem: &Problem,
    assignment: &Assignment,
    transfers: &[Transfer],
) -> Result<Assignment> {
    let mut next = assignment.clone();
    let mut seen = vec![false; assignment.num_robots()];
    for t in transfers {
        if t.robot >= assignment.num_robots() {
            return Err(Error::InvalidTransfer {
                robot: t.robot,
                reason: "unknown robot".into(),
            });
        }
        if std::mem::replace(&mut seen[t.robot], true) {
            return Err(Error::InvalidTransfer {
                robot: t.robot,
                reason: "listed more than once".into(),
            });
        }
        if assignment.team(t.robot) != t.from {
            return Err(Error::InvalidTransfer {
                robot: t.robot,
                reason: format!(
                    "source team {} but robot is in team {}",
                    t.from,
                    assignment.team(t.robot)
                ),
            });
        }
        if t.to >= problem.num_teams() {
            return Err(Error::InvalidTransfer {
                robot: t.robot,
                reason: format!("unknown destination team {}", t.to),
            });
        }
        next.team_of[t.robot] = t.to;
    }
    problem.check(&next)?;
    Ok(next)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub struct Constant(pub f64);
    impl MissionOracle for Constant {
        fn evaluate(&self, _: TeamId, _: &[RobotId]) -> f64 {
            self.0
        }
    }

    pub struct Cardinality;
    impl MissionOracle for Cardinality {
        fn evaluate(&self, _: TeamId, members: &[RobotId]) -> f64 {
            members.len() as f64
        }
    }

    pub fn robot(id: usize, sensing: bool) -> Robot {
        Robot {
            id,
            capability: if sensing { vec![1, 0] } else { vec![0, 1] },
            speed: 1.0,
            capacity: if sensing { 0.0 } else { 1.0 },
        }
    }

    pub fn two_team_problem(weights: [f64; 2], robots: Vec<Robot>) -> Problem {
        let graph = InteractionGraph::new(vec![[0.0, 0.0], [3.0, 4.0]], &[(0, 1)]).unwrap();
        Problem::new(
            graph,
            TeamWeights::new(weights.to_vec()).unwrap(),
            robots,
            Constraints::default(),
        )
        .unwrap()
    }

    #[test]
    fn relatedness_examples() {
        let w = TeamWeights::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(relatedness(&w, 0, 1), 1.0);
        let w = TeamWeights::new(vec![2.0, 1.0]).unwrap();
        assert_eq!(relatedness(&w, 0, 1), 0.5);
        let w = TeamWeights::new(vec![1.03, 1.82]).unwrap();
        assert!((relatedness(&w, 0, 1) - 1.82 / 1.03).abs() < 1e-15);
        assert!((relatedness(&w, 0, 1) - 1.7670).abs() < 1e-4);
    }

    #[test]
    fn weights_must_be_positive() {
        assert!(TeamWeights::new(vec![1.0, 0.0]).is_err());
        assert!(TeamWeights::new(vec![-1.0]).is_err());
        assert!(serde_json::from_str::<TeamWeights>("[1.0, -2.0]").is_err());
    }

    #[test]
    fn graph_validation() {
        let p = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(InteractionGraph::new(p.clone(), &[(0, 1)]).is_err());
        assert!(InteractionGraph::new(p.clone(), &[(0, 0), (1, 2)]).is_err());
        assert!(InteractionGraph::new(p.clone(), &[(0, 3)]).is_err());
        let g = InteractionGraph::new(p, &[(1, 0), (2, 1), (0, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.distance(0, 2), 2.0);
        assert_eq!(g.distance(2, 0), 2.0);
        assert_eq!(g.distance(1, 1), 0.0);
        assert!(g.is_edge(1, 0) && !g.is_edge(0, 2));
        assert_eq!(g.directed_edges(), vec![(1, 0), (0, 1), (2, 1), (1, 2)]);
    }

    #[test]
    fn marginal_examples() {
        assert_eq!(marginal_benefit(&Constant(3.0), 0, &[0, 1], 2).unwrap(), 0.0);
        assert_eq!(marginal_benefit(&Cardinality, 0, &[0, 1], 2).unwrap(), 1.0);
        assert_eq!(marginal_cost(&Constant(3.0), 0, &[0, 1], 1).unwrap(), 0.0);
        assert_eq!(marginal_cost(&Cardinality, 0, &[0, 1], 1).unwrap(), 1.0);
        assert!(matches!(
            marginal_benefit(&Cardinality, 0, &[0, 1], 1),
            Err(Error::AlreadyMember { robot: 1, team: 0 })
        ));
        assert!(matches!(
            marginal_cost(&Cardinality, 2, &[0, 1], 5),
            Err(Error::NotMember { robot: 5, team: 2 })
        ));
    }

    #[test]
    fn mask_single_team_is_stay_only() {
        let graph = InteractionGraph::new(vec![[0.0, 0.0]], &[]).unwrap();
        let problem = Problem::new(
            graph,
            TeamWeights::new(vec![1.0]).unwrap(),
            (0..3).map(|i| robot(i, true)).collect(),
            Constraints::default(),
        )
        .unwrap();
        let a = Assignment::new(vec![0, 0, 0]);
        let mask = hamilton_mask(&problem, &a, &Cardinality);
        assert_eq!(mask, HamiltonMask::stay_only(&a, 1));
    }

    #[test]
    fn mask_constant_oracle_blocks_all_moves() {
        let problem = two_team_problem([1.0, 5.0], (0..4).map(|i| robot(i, true)).collect());
        let a = Assignment::new(vec![0, 0, 1, 1]);
        let mask = hamilton_mask(&problem, &a, &Constant(7.0));
        assert_eq!(mask, HamiltonMask::stay_only(&a, 2));
    }

    #[test]
    fn mask_cardinality_follows_weights() {
        let problem = two_team_problem([1.0, 2.0], (0..4).map(|i| robot(i, true)).collect());
        let a = Assignment::new(vec![0, 0, 1, 1]);
        let mask = hamilton_mask(&problem, &a, &Cardinality);
        // r_01 * B = 2 > 1 for team-0 robots; r_10 * B = 0.5 < 1 for team-1 robots.
        assert!(mask.is_admissible(0, 1) && mask.is_admissible(1, 1));
        assert!(!mask.is_admissible(2, 0) && !mask.is_admissible(3, 0));
        for r in 0..4 {
            assert!(mask.is_admissible(r, a.team(r)));
        }
    }

    #[test]
    fn mask_ties_are_inadmissible() {
        let problem = two_team_problem([1.0, 1.0], (0..4).map(|i| robot(i, true)).collect());
        let a = Assignment::new(vec![0, 0, 1, 1]);
        assert_eq!(
            hamilton_mask(&problem, &a, &Cardinality),
            HamiltonMask::stay_only(&a, 2)
        );
    }

    #[test]
    fn mask_respects_capability_constraint() {
        let mut problem = two_team_problem(
            [1.0, 2.0],
            vec![robot(0, true), robot(1, false), robot(2, true)],
        );
        problem.constraints.required_capability = Some(0);
        let a = Assignment::new(vec![0, 0, 1]);
        let mask = hamilton_mask(&problem, &a, &Cardinality);
        assert!(!mask.is_admissible(0, 1), "last sensing robot must stay");
        assert!(mask.is_admissible(1, 1));
    }

    #[test]
    fn objective_examples() {
        let w = TeamWeights::new(vec![1.0; 3]).unwrap();
        let a = Assignment::new(vec![0, 1, 2, 2, 1]);
        assert_eq!(global_objective(&a, &w, &Constant(0.0)), 0.0);
        assert_eq!(global_objective(&a, &w, &Cardinality), 5.0);
    }

    #[test]
    fn transfer_cost_examples() {
        let graph = InteractionGraph::new(vec![[0.0, 0.0], [6.0, 8.0]], &[(0, 1)]).unwrap();
        let mut robots = vec![robot(0, true)];
        robots[0].speed = 2.0;
        let prev = Assignment::new(vec![0]);
        let next = Assignment::new(vec![1]);
        assert_eq!(transfer_cost(&prev, &prev, &graph, &robots, 1.0), 0.0);
        assert_eq!(transfer_cost(&prev, &next, &graph, &robots, 1.0), 5.0);

        let graph = InteractionGraph::new(vec![[0.0, 0.0], [3.0, 0.0]], &[(0, 1)]).unwrap();
        let robots = vec![robot(0, true), robot(1, true)];
        let prev = Assignment::new(vec![0, 1]);
        let next = Assignment::new(vec![1, 0]);
        assert_eq!(transfer_cost(&prev, &next, &graph, &robots, 0.5), 3.0);
    }

    #[test]
    fn apply_transfers_checks_constraints() {
        let mut problem = two_team_problem(
            [1.0, 1.0],
            vec![robot(0, true), robot(1, false), robot(2, true)],
        );
        let a = Assignment::new(vec![0, 0, 1]);
        assert_eq!(apply_transfers(&problem, &a, &[]).unwrap(), a);

        let empty = apply_transfers(
            &problem,
            &a,
            &[Transfer {
                robot: 2,
                from: 1,
                to: 0,
            }],
        );
        assert!(matches!(
            empty,
            Err(Error::Infeasible {
                team: 1,
                constraint: Constraint::Nonempty
            })
        ));

        problem.constraints.required_capability = Some(0);
        let blind = apply_transfers(
            &problem,
            &a,
            &[Transfer {
                robot: 0,
                from: 0,
                to: 1,
            }],
        );
        assert!(matches!(
            blind,
            Err(Error::Infeasible {
                team: 0,
                constraint: Constraint::Capability(0)
            })
        ));

        let wrong_source = apply_transfers(
            &problem,
            &a,
            &[Transfer {
                robot: 1,
                from: 1,
                to: 0,
            }],
        );
        assert!(matches!(wrong_source, Err(Error::InvalidTransfer { .. })));
    }

    #[test]
    fn one_hot_round_trip() {
        let a = Assignment::new(vec![2, 0, 1, 1]);
        let x = a.to_one_hot(3);
        assert_eq!(x[0], vec![0, 0, 1]);
        assert_eq!(Assignment::from_one_hot(&x).unwrap(), a);
        assert!(Assignment::from_one_hot(&[vec![1, 1, 0]]).is_err());
    }
}
