//! Exact optimizers.
//!
//! - [`solve_one_step`]: exhaustive search over every mask-consistent next
//!   assignment, maximizing `G(X') − λ·C(X, X')`. This is the labeling
//!   oracle for the dataset.
//! - [`solve_homogeneous_iterative`]: the size-only Hamilton/bidding process.
//! - [`build_partition_instance`]: the two-team Partition construction.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    global_objective, relatedness, Assignment, Constraints, HamiltonMask, InteractionGraph, MissionOracle, Problem,
    Robot, RobotId, TeamId, TeamWeights,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub lambda: f64,
    pub alpha: f64,
    pub timeout: Option<Duration>,
    /// Worker count for sharding the enumeration; 1 runs inline.
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 0.1,
            timeout: Some(Duration::from_secs(10)),
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub best_assignment: Assignment,
    /// Objective minus `λ·cost`.
    pub best_score: f64,
    pub evaluated_count: u64,
    #[serde(with = "duration_secs")]
    pub elapsed: Duration,
    pub timed_out: bool,
}

impl SolveResult {
    pub fn moved(&self, from: &Assignment) -> usize {
        self.best_assignment.moved_count(from)
    }
}

pub(crate) mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// Every assignment reachable by sending each robot to one of its
/// admissible destinations, keeping only those that satisfy the hard
/// constraints. Candidates come out in lexicographic order of `team_of`.
pub fn enumerate_feasible<'a>(
    problem: &'a Problem,
    mask: &HamiltonMask,
) -> impl Iterator<Item = Assignment> + 'a {
    let options: Vec<Vec<TeamId>> = (0..mask.num_robots())
        .map(|r| mask.destinations(r).collect())
        .collect();
    let mut digits = vec![0usize; options.len()];
    let mut done = options.iter().any(Vec::is_empty);
    std::iter::from_fn(move || {
        while !done {
            let candidate =
                Assignment::new(digits.iter().zip(&options).map(|(&d, o)| o[d]).collect());
            // Advance the mixed-radix counter, last robot fastest.
            done = true;
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < options[k].len() {
                    done = false;
                    break;
                }
                digits[k] = 0;
            }
            if problem.check(&candidate).is_ok() {
                return Some(candidate);
            }
        }
        None
    })
}

#[derive(Debug, Clone)]
struct Best {
    score: f64,
    moved: usize,
    team_of: Vec<TeamId>,
}

/// Total order used for ties: higher score, then fewer moves, then the
/// lexicographically smaller assignment.
fn better(a: &Best, b: &Best) -> bool {
    match a.score.partial_cmp(&b.score) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => match a.moved.cmp(&b.moved) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.team_of < b.team_of,
        },
    }
}

struct Search<'a> {
    problem: &'a Problem,
    oracle: &'a dyn MissionOracle,
    base: &'a Assignment,
    options: &'a [Vec<TeamId>],
    lambda: f64,
    alpha: f64,
    deadline: Option<Instant>,

    members: Vec<Vec<RobotId>>,
    /// Member bitmask per team, used as the value-cache key.
    member_bits: Vec<u64>,
    value_cache: Option<HashMap<(TeamId, u64), f64>>,
    team_of: Vec<TeamId>,
    /// Decided-into plus still-possible robots per team.
    potential: Vec<usize>,
    /// Same, restricted to robots with the required capability.
    capable_potential: Vec<usize>,
    cost: f64,
    moved: usize,

    best: Option<Best>,
    evaluated: u64,
    nodes: u64,
    timed_out: bool,
}

impl<'a> Search<'a> {
    fn new(
        problem: &'a Problem,
        oracle: &'a dyn MissionOracle,
        base: &'a Assignment,
        options: &'a [Vec<TeamId>],
        opts: &SolveOptions,
        deadline: Option<Instant>,
    ) -> Self {
        let m = problem.num_teams();
        let mut potential = vec![0; m];
        let mut capable_potential = vec![0; m];
        let cap = problem.constraints.required_capability;
        for (r, opts_r) in options.iter().enumerate() {
            for &v in opts_r {
                potential[v] += 1;
                if cap.is_some_and(|c| problem.robots[r].has(c)) {
                    capable_potential[v] += 1;
                }
            }
        }
        Self {
            problem,
            oracle,
            base,
            options,
            lambda: opts.lambda,
            alpha: opts.alpha,
            deadline,
            members: vec![Vec::new(); m],
            member_bits: vec![0; m],
            value_cache: (base.num_robots() <= 64).then(HashMap::new),
            team_of: Vec::with_capacity(base.num_robots()),
            potential,
            capable_potential,
            cost: 0.0,
            moved: 0,
            best: None,
            evaluated: 0,
            nodes: 0,
            timed_out: false,
        }
    }

    fn capable(&self, r: RobotId) -> bool {
        self.problem
            .constraints
            .required_capability
            .is_some_and(|c| self.problem.robots[r].has(c))
    }

    /// Sends robot `r` to `team`; returns false if some team can no longer
    /// be made feasible. Must be undone with [`Self::pop`] either way.
    fn push(&mut self, r: RobotId, team: TeamId) -> bool {
        let constraints: Constraints = self.problem.constraints;
        let capable = self.capable(r);
        let mut ok = true;
        for &v in &self.options[r] {
            if v != team {
                self.potential[v] -= 1;
                if constraints.require_nonempty && self.potential[v] == 0 {
                    ok = false;
                }
                if capable {
                    self.capable_potential[v] -= 1;
                    if self.capable_potential[v] == 0 {
                        ok = false;
                    }
                }
            }
        }
        self.members[team].push(r);
        self.member_bits[team] |= 1 << (r % 64);
        self.team_of.push(team);
        let from = self.base.team(r);
        if team != from {
            self.cost += self.alpha * self.problem.graph.distance(from, team)
                / self.problem.robots[r].speed;
            self.moved += 1;
        }
        ok
    }

    fn pop(&mut self, r: RobotId, team: TeamId, saved_cost: f64) {
        let capable = self.capable(r);
        for &v in &self.options[r] {
            if v != team {
                self.potential[v] += 1;
                if capable {
                    self.capable_potential[v] += 1;
                }
            }
        }
        self.members[team].pop();
        self.member_bits[team] &= !(1 << (r % 64));
        self.team_of.pop();
        if team != self.base.team(r) {
            self.moved -= 1;
        }
        self.cost = saved_cost;
    }

    fn team_value(&mut self, v: TeamId) -> f64 {
        let (oracle, set) = (self.oracle, &self.members[v]);
        match self.value_cache.as_mut() {
            Some(cache) => *cache
                .entry((v, self.member_bits[v]))
                .or_insert_with(|| oracle.evaluate(v, set)),
            None => oracle.evaluate(v, set),
        }
    }

    fn score_leaf(&mut self) -> f64 {
        let mut objective = 0.0;
        for v in 0..self.members.len() {
            objective += self.problem.weights.get(v) * self.team_value(v);
        }
        objective - self.lambda * self.cost
    }

    fn out_of_time(&mut self) -> bool {
        if self.timed_out {
            return true;
        }
        self.nodes += 1;
        if self.nodes % 1024 == 0 {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                }
            }
        }
        self.timed_out
    }

    fn run(&mut self, depth: usize) {
        if self.out_of_time() {
            return;
        }
        if depth == self.options.len() {
            if self.moved == 0 {
                // The unchanged assignment is scored up front.
                return;
            }
            self.evaluated += 1;
            let score = self.score_leaf();
            let improves = match &self.best {
                None => true,
                Some(b) => score > b.score || (score == b.score && self.moved < b.moved),
            };
            if improves {
                self.best = Some(Best {
                    score,
                    moved: self.moved,
                    team_of: self.team_of.clone(),
                });
            }
            return;
        }
        let r = depth;
        for k in 0..self.options[r].len() {
            let team = self.options[r][k];
            let saved = self.cost;
            if self.push(r, team) {
                self.run(depth + 1);
            }
            self.pop(r, team, saved);
            if self.timed_out {
                return;
            }
        }
    }
}

/// Exhaustive one-step optimization over the assignments allowed by `mask`.
///
/// Ties are broken by fewest moved robots, then by the lexicographically
/// smallest `team_of`. On timeout the best candidate found so far is
/// returned with `timed_out` set.
pub fn solve_one_step(
    problem: &Problem,
    current: &Assignment,
    oracle: &dyn MissionOracle,
    mask: &HamiltonMask,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let start = Instant::now();
    let deadline = opts.timeout.map(|t| start + t);
    if mask.num_robots() != current.num_robots() {
        return Err(Error::InvalidInstance("mask and assignment sizes differ".into()));
    }
    let options: Vec<Vec<TeamId>> = (0..current.num_robots())
        .map(|r| {
            let mut o: Vec<TeamId> = mask.destinations(r).collect();
            if !o.contains(&current.team(r)) {
                o.push(current.team(r));
                o.sort_unstable();
            }
            o
        })
        .collect();

    // The unchanged assignment is always a candidate and always scored.
    let stay_score = global_objective(current, &problem.weights, oracle);
    let mut best = Best {
        score: stay_score,
        moved: 0,
        team_of: current.team_of.clone(),
    };
    let mut evaluated = 1u64;
    let mut timed_out = false;

    let shards = shard_prefixes(&options, opts.threads);
    let run_shard = |prefix: &Vec<TeamId>| {
        let mut s = Search::new(problem, oracle, current, &options, opts, deadline);
        let mut feasible = true;
        for (r, &t) in prefix.iter().enumerate() {
            feasible &= s.push(r, t);
        }
        if feasible {
            s.run(prefix.len());
        }
        (s.best, s.evaluated, s.timed_out)
    };
    let results: Vec<_> = if opts.threads > 1 && shards.len() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::InvalidInstance(format!("thread pool: {e}")))?;
        pool.install(|| shards.par_iter().map(run_shard).collect())
    } else {
        shards.iter().map(run_shard).collect()
    };
    for (cand, n, t) in results {
        evaluated += n;
        timed_out |= t;
        if let Some(c) = cand {
            if better(&c, &best) {
                best = c;
            }
        }
    }

    Ok(SolveResult {
        best_assignment: Assignment::new(best.team_of),
        best_score: best.score,
        evaluated_count: evaluated,
        elapsed: start.elapsed(),
        timed_out,
    })
}

/// Fixed decision prefixes for the first robots, enough to give each
/// worker several shards. With one worker the only shard is the root.
fn shard_prefixes(options: &[Vec<TeamId>], threads: usize) -> Vec<Vec<TeamId>> {
    let mut prefixes = vec![Vec::new()];
    if threads <= 1 {
        return prefixes;
    }
    let target = threads * 4;
    for opts_r in options {
        if prefixes.len() >= target {
            break;
        }
        prefixes = prefixes
            .into_iter()
            .flat_map(|p| {
                opts_r.iter().map(move |&t| {
                    let mut q = p.clone();
                    q.push(t);
                    q
                })
            })
            .collect();
    }
    prefixes
}

/// Concave, strictly increasing team value as a function of team size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueFn {
    /// `scale · √n`
    Sqrt { scale: f64 },
    /// `scale · ln(1 + n)`
    Log1p { scale: f64 },
    /// `scale · n^exponent`, `0 < exponent < 1`
    Power { scale: f64, exponent: f64 },
}

impl ValueFn {
    pub fn eval(&self, n: usize) -> f64 {
        let x = n as f64;
        match *self {
            ValueFn::Sqrt { scale } => scale * x.sqrt(),
            ValueFn::Log1p { scale } => scale * x.ln_1p(),
            ValueFn::Power { scale, exponent } => scale * x.powf(exponent),
        }
    }

    /// `F(n + 1) − F(n)`
    pub fn benefit(&self, n: usize) -> f64 {
        self.eval(n + 1) - self.eval(n)
    }

    /// `F(n) − F(n − 1)`
    pub fn cost(&self, n: usize) -> f64 {
        self.eval(n) - self.eval(n - 1)
    }
}

/// Identical robots: only team sizes matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousInstance {
    #[serde(skip)]
    pub graph: Option<InteractionGraph>,
    pub weights: TeamWeights,
    pub team_sizes: Vec<usize>,
    pub value_fns: Vec<ValueFn>,
}

impl HomogeneousInstance {
    pub fn new(
        graph: InteractionGraph,
        weights: TeamWeights,
        team_sizes: Vec<usize>,
        value_fns: Vec<ValueFn>,
    ) -> Result<Self> {
        let m = graph.num_teams();
        if weights.len() != m || team_sizes.len() != m || value_fns.len() != m {
            return Err(Error::InvalidInstance(
                "weights, sizes and value functions must have one entry per team".into(),
            ));
        }
        if team_sizes.contains(&0) {
            return Err(Error::InvalidInstance("every team needs at least one robot".into()));
        }
        Ok(Self {
            graph: Some(graph),
            weights,
            team_sizes,
            value_fns,
        })
    }

    pub fn graph(&self) -> &InteractionGraph {
        self.graph.as_ref().expect("homogeneous instance without graph")
    }

    pub fn num_robots(&self) -> usize {
        self.team_sizes.iter().sum()
    }

    /// `Σ_v w_v F_v(n_v)`
    pub fn objective(&self, sizes: &[usize]) -> f64 {
        sizes
            .iter()
            .enumerate()
            .map(|(v, &n)| self.weights.get(v) * self.value_fns[v].eval(n))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousTrace {
    /// Team sizes before the first iteration and after each one.
    pub sizes: Vec<Vec<usize>>,
    pub objectives: Vec<f64>,
    /// Transfers executed at each iteration.
    pub transfers: Vec<Vec<(TeamId, TeamId)>>,
}

impl HomogeneousTrace {
    pub fn final_sizes(&self) -> &[usize] {
        self.sizes.last().expect("trace has an initial state")
    }

    pub fn final_objective(&self) -> f64 {
        *self.objectives.last().expect("trace has an initial state")
    }
}

#[derive(Debug, Clone, Copy)]
struct Bid {
    from: TeamId,
    to: TeamId,
    gain: f64,
}

/// Bid order: higher gain first, then lowest `(from, to)`.
fn outbids(a: &Bid, b: &Bid) -> bool {
    a.gain > b.gain || (a.gain == b.gain && (a.from, a.to) < (b.from, b.to))
}

/// Size-only Hamilton process: find admissible transfers on every edge,
/// let each team keep its best outgoing and best incoming bid, execute the
/// transfers both endpoints agreed on, repeat until nothing is admissible.
pub fn solve_homogeneous_iterative(instance: &HomogeneousInstance) -> HomogeneousTrace {
    let graph = instance.graph();
    let m = graph.num_teams();
    let mut sizes = instance.team_sizes.clone();
    let mut trace = HomogeneousTrace {
        sizes: vec![sizes.clone()],
        objectives: vec![instance.objective(&sizes)],
        transfers: Vec::new(),
    };

    loop {
        let mut bids = Vec::new();
        for i in 0..m {
            if sizes[i] < 2 {
                continue;
            }
            let cost = instance.value_fns[i].cost(sizes[i]);
            for &j in graph.neighbors(i) {
                let weighted = relatedness(&instance.weights, i, j)
                    * instance.value_fns[j].benefit(sizes[j]);
                if weighted > cost {
                    bids.push(Bid {
                        from: i,
                        to: j,
                        gain: weighted - cost,
                    });
                }
            }
        }
        if bids.is_empty() {
            break;
        }

        let mut out_best: Vec<Option<Bid>> = vec![None; m];
        let mut in_best: Vec<Option<Bid>> = vec![None; m];
        for b in &bids {
            if out_best[b.from].is_none_or(|o| outbids(b, &o)) {
                out_best[b.from] = Some(*b);
            }
            if in_best[b.to].is_none_or(|o| outbids(b, &o)) {
                in_best[b.to] = Some(*b);
            }
        }
        let mut accepted: Vec<(TeamId, TeamId)> = out_best
            .iter()
            .flatten()
            .filter(|b| in_best[b.to].is_some_and(|i| i.from == b.from))
            .map(|b| (b.from, b.to))
            .collect();

        let before = *trace.objectives.last().expect("nonempty");
        let mut next = sizes.clone();
        for &(i, j) in &accepted {
            next[i] -= 1;
            next[j] += 1;
        }
        let mut after = instance.objective(&next);
        if after <= before {
            // Fall back to the single strongest bid.
            let top = bids
                .iter()
                .copied()
                .reduce(|a, b| if outbids(&b, &a) { b } else { a })
                .expect("nonempty");
            next = sizes.clone();
            next[top.from] -= 1;
            next[top.to] += 1;
            after = instance.objective(&next);
            accepted = vec![(top.from, top.to)];
            if after <= before {
                break;
            }
        }
        sizes = next;
        trace.sizes.push(sizes.clone());
        trace.objectives.push(after);
        trace.transfers.push(accepted);
    }
    trace
}

/// `C(N − 1, M − 1)`, the number of ways to give each of `M` teams at least
/// one of `N` identical robots.
pub fn count_feasible_homogeneous(n: usize, m: usize) -> Result<u128> {
    if m == 0 || n < m {
        return Err(Error::TooFewRobots { robots: n, teams: m });
    }
    let (top, k) = ((n - 1) as u128, (m - 1) as u128);
    let k = k.min(top - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (top - i) / (i + 1);
    }
    Ok(acc)
}

/// `F_v(S) = −|Σ_{r∈S} a_r − A/2|` for both teams.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOracle {
    values: Vec<u64>,
    half: f64,
}

impl PartitionOracle {
    pub fn new(values: Vec<u64>) -> Self {
        let total: u64 = values.iter().sum();
        Self {
            values,
            half: total as f64 / 2.0,
        }
    }
}

impl MissionOracle for PartitionOracle {
    fn evaluate(&self, _team: TeamId, members: &[RobotId]) -> f64 {
        let s: u64 = members.iter().map(|&r| self.values[r]).sum();
        -(s as f64 - self.half).abs()
    }
}

/// Two-team allocation problem whose optimum is 0 iff the integers split
/// into two equal-sum halves.
#[derive(Debug, Clone)]
pub struct PartitionInstance {
    pub problem: Problem,
    pub assignment: Assignment,
    pub oracle: PartitionOracle,
    pub mask: HamiltonMask,
}

impl PartitionInstance {
    /// Options for the reduction: no transfer cost, no deadline.
    pub fn solve_options() -> SolveOptions {
        SolveOptions {
            lambda: 0.0,
            alpha: 0.0,
            timeout: None,
            threads: 1,
        }
    }

    pub fn solve(&self) -> Result<SolveResult> {
        solve_one_step(
            &self.problem,
            &self.assignment,
            &self.oracle,
            &self.mask,
            &Self::solve_options(),
        )
    }
}

pub fn build_partition_instance(integers: &[u64]) -> Result<PartitionInstance> {
    if integers.is_empty() {
        return Err(Error::InvalidInstance("partition needs at least one integer".into()));
    }
    if integers.contains(&0) {
        return Err(Error::InvalidInstance("partition integers must be positive".into()));
    }
    let graph = InteractionGraph::new(vec![[0.0, 0.0], [1.0, 0.0]], &[(0, 1)])?;
    let robots = integers
        .iter()
        .enumerate()
        .map(|(id, &a)| Robot {
            id,
            capability: vec![1],
            speed: 1.0,
            capacity: a as f64,
        })
        .collect();
    // A single integer cannot leave both teams occupied, so the reduction
    // drops the nonempty constraint; with positive integers an exact split
    // has both sides nonempty anyway.
    let constraints = Constraints {
        require_nonempty: false,
        required_capability: None,
    };
    let problem = Problem::new(graph, TeamWeights::new(vec![1.0, 1.0])?, robots, constraints)?;
    let n = integers.len();
    Ok(PartitionInstance {
        problem,
        assignment: Assignment::new(vec![0; n]),
        oracle: PartitionOracle::new(integers.to_vec()),
        mask: HamiltonMask::full(n, 2),
    })
}
