//! Policy-driven reallocation: one decentralized step with per-team
//! conflict resolution, full episodes with fire decay, the exact iterative
//! baseline, the runtime benchmark and the one-step optimality gap.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::datagen::{encode_with_mask, label_instance, sample_instance, GraphState};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::model::{Assignment, RobotId, TeamId, Transfer};
use crate::nn::{Policy, ScoreMatrix};
use crate::seeding::derive_seed;
use crate::solver::{solve_one_step, SolveOptions};

/// Anything that scores candidate destinations for every robot.
pub trait TransferPolicy {
    fn score(&self, instance: &Instance, state: &GraphState) -> Result<ScoreMatrix>;
}

impl TransferPolicy for Policy {
    fn score(&self, _instance: &Instance, state: &GraphState) -> Result<ScoreMatrix> {
        Policy::score(self, state)
    }
}

/// Scores the exact one-step optimum 1 and every other candidate 0, so its
/// argmax reproduces the solver's decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactPolicy {
    pub opts: SolveOptions,
}

impl TransferPolicy for ExactPolicy {
    fn score(&self, instance: &Instance, state: &GraphState) -> Result<ScoreMatrix> {
        let sample = label_instance(instance, &self.opts, state.meta.seed)?
            .ok_or_else(|| Error::InvalidInstance("exact policy timed out".into()))?;
        let scores = state
            .candidate_mask
            .iter()
            .zip(&sample.label)
            .map(|(row, &y)| {
                row.iter()
                    .enumerate()
                    .map(|(v, &c)| match (c, v == y) {
                        (false, _) => f64::NEG_INFINITY,
                        (true, true) => 1.0,
                        (true, false) => 0.0,
                    })
                    .collect()
            })
            .collect();
        Ok(ScoreMatrix {
            scores,
            move_logits: vec![0.0; state.num_robots()],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub robot: RobotId,
    pub to: TeamId,
    pub score: f64,
}

/// Move proposals grouped by source team, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub by_team: Vec<Vec<Proposal>>,
}

impl ProposalSet {
    /// Robots whose best candidate is not their current team.
    pub fn from_scores(scores: &ScoreMatrix, current: &[TeamId], num_teams: usize) -> Self {
        let mut by_team = vec![Vec::new(); num_teams];
        for (r, &cur) in current.iter().enumerate() {
            let to = scores.argmax(r);
            if to != cur {
                by_team[cur].push(Proposal {
                    robot: r,
                    to,
                    score: scores.scores[r][to],
                });
            }
        }
        for list in &mut by_team {
            list.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.robot.cmp(&b.robot)));
        }
        Self { by_team }
    }

    pub fn len(&self) -> usize {
        self.by_team.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub assignment: Assignment,
    pub accepted: Vec<Transfer>,
    pub proposals: ProposalSet,
    pub state: GraphState,
}

/// Accepts each team's proposals in descending score while the team keeps
/// its hard constraints given the departures already accepted.
pub fn resolve_conflicts(instance: &Instance, proposals: &ProposalSet) -> Vec<Transfer> {
    let problem = &instance.problem;
    let mut sets = instance.assignment.team_sets(problem.num_teams());
    let mut accepted = Vec::new();
    for (team, list) in proposals.by_team.iter().enumerate() {
        for p in list {
            if !problem.constraints.may_leave(p.robot, &sets[team], &problem.robots) {
                continue;
            }
            sets[team].retain(|&r| r != p.robot);
            accepted.push(Transfer {
                robot: p.robot,
                from: team,
                to: p.to,
            });
        }
    }
    accepted
}

/// One decentralized reallocation step from the instance's live state.
pub fn infer_step(instance: &Instance, policy: &dyn TransferPolicy) -> Result<StepOutcome> {
    let mask = instance.hamilton_mask();
    let state = encode_with_mask(instance, &mask, instance.mission.coverage.seed);
    let scores = policy.score(instance, &state)?;
    let proposals = ProposalSet::from_scores(&scores, &state.current, instance.num_teams());
    let accepted = resolve_conflicts(instance, &proposals);
    let assignment = instance.apply_transfers(&accepted)?;
    Ok(StepOutcome {
        assignment,
        accepted,
        proposals,
        state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    /// Stop once total fire falls below this fraction of the initial total.
    pub fire_epsilon: f64,
    /// Steps over which fire must fail to drop for a no-transfer stop.
    pub stagnation_steps: usize,
    /// Relative decrease below which fire counts as stagnant.
    pub stagnation_tol: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_steps: 200,
            fire_epsilon: 1e-3,
            stagnation_steps: 3,
            stagnation_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalReason {
    NoTransfers,
    FireExtinguished,
    MaxSteps,
    /// Exact baseline only: the best next assignment was the current one.
    Converged,
    /// Exact baseline only: the solver ran out of time.
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub step: usize,
    /// Assignment after this step's transfers.
    pub assignment: Vec<TeamId>,
    pub accepted: Vec<Transfer>,
    pub fire_before: Vec<f64>,
    pub fire_after: Vec<f64>,
    pub psi: Vec<f64>,
    pub power: Vec<f64>,
    pub locational_cost: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub teams: usize,
    pub robots: usize,
    pub initial_fire: Vec<f64>,
    pub steps: Vec<EpisodeStep>,
    pub terminal: TerminalReason,
    pub total_seconds: f64,
}

impl EpisodeLog {
    pub fn mean_step_seconds(&self) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.steps.iter().map(|s| s.seconds).sum::<f64>() / self.steps.len() as f64
        }
    }

    /// `(step, team)` pairs where a team's fire grew during a step.
    pub fn fire_increases(&self) -> Vec<(usize, TeamId)> {
        let mut out = Vec::new();
        for s in &self.steps {
            for (v, (a, b)) in s.fire_before.iter().zip(&s.fire_after).enumerate() {
                if b > a {
                    out.push((s.step, v));
                }
            }
        }
        out
    }

    /// Writes `step, team, total_fire, psi, power, L` rows.
    pub fn write_fire_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("step,team,total_fire,psi,power,L\n");
        for s in &self.steps {
            for v in 0..self.teams {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    s.step, v, s.fire_after[v], s.psi[v], s.power[v], s.locational_cost[v]
                ));
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn fire_totals(instance: &Instance) -> Vec<f64> {
    (0..instance.num_teams())
        .map(|v| instance.mission.total_fire(v))
        .collect()
}

/// Commits `next`, decays the fire and records the step.
fn commit_step(
    instance: &mut Instance,
    step: usize,
    next: Assignment,
    accepted: Vec<Transfer>,
    started: Instant,
) -> EpisodeStep {
    let fire_before = fire_totals(instance);
    instance.assignment = next;
    let stats = instance
        .mission
        .advance_fire(&instance.assignment, &instance.problem.robots);
    EpisodeStep {
        step,
        assignment: instance.assignment.team_of.clone(),
        accepted,
        fire_before,
        fire_after: fire_totals(instance),
        psi: stats.iter().map(|s| s.psi).collect(),
        power: stats.iter().map(|s| s.power).collect(),
        locational_cost: stats.iter().map(|s| s.locational_cost).collect(),
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Alternates policy steps and fire decay until the fire is out, the
/// policy stops moving robots while the fire stagnates, or `max_steps`.
/// `instance` is left in the final state.
pub fn run_episode(
    instance: &mut Instance,
    policy: &dyn TransferPolicy,
    config: &EpisodeConfig,
) -> Result<EpisodeLog> {
    let start = Instant::now();
    let initial_fire = fire_totals(instance);
    let initial_total: f64 = initial_fire.iter().sum();
    let mut totals = vec![initial_total];
    let mut steps = Vec::new();
    let mut terminal = TerminalReason::MaxSteps;
    for step in 1..=config.max_steps {
        let t = Instant::now();
        let out = infer_step(instance, policy)?;
        let no_transfers = out.accepted.is_empty();
        let rec = commit_step(instance, step, out.assignment, out.accepted, t);
        let total: f64 = rec.fire_after.iter().sum();
        steps.push(rec);
        totals.push(total);
        if total == 0.0 || total < config.fire_epsilon * initial_total {
            terminal = TerminalReason::FireExtinguished;
            break;
        }
        let reference = totals[step.saturating_sub(config.stagnation_steps)];
        if no_transfers && reference - total <= config.stagnation_tol * reference {
            terminal = TerminalReason::NoTransfers;
            break;
        }
    }
    Ok(EpisodeLog {
        teams: instance.num_teams(),
        robots: instance.num_robots(),
        initial_fire,
        steps,
        terminal,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Repeats exact one-step optimization with fire decay in between until the
/// optimum is to stay. `opts.timeout` bounds the whole run.
pub fn run_exact_iterative(
    instance: &mut Instance,
    opts: &SolveOptions,
    max_steps: usize,
) -> Result<EpisodeLog> {
    let start = Instant::now();
    let deadline = opts.timeout.map(|t| start + t);
    let initial_fire = fire_totals(instance);
    let mut steps = Vec::new();
    let mut terminal = TerminalReason::MaxSteps;
    for step in 1..=max_steps {
        let t = Instant::now();
        let remaining = deadline.map(|d| d.saturating_duration_since(t));
        let step_opts = SolveOptions {
            timeout: remaining,
            ..*opts
        };
        let mask = instance.hamilton_mask();
        let res = solve_one_step(
            &instance.problem,
            &instance.assignment,
            &instance.oracle(),
            &mask,
            &step_opts,
        )?;
        if res.timed_out {
            terminal = TerminalReason::TimedOut;
            break;
        }
        if res.best_assignment == instance.assignment {
            terminal = TerminalReason::Converged;
            break;
        }
        let accepted = (0..instance.num_robots())
            .filter(|&r| res.best_assignment.team(r) != instance.assignment.team(r))
            .map(|r| Transfer {
                robot: r,
                from: instance.assignment.team(r),
                to: res.best_assignment.team(r),
            })
            .collect();
        steps.push(commit_step(instance, step, res.best_assignment, accepted, t));
    }
    Ok(EpisodeLog {
        teams: instance.num_teams(),
        robots: instance.num_robots(),
        initial_fire,
        steps,
        terminal,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Gnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub teams: usize,
    pub robots: usize,
    pub method: Method,
    pub total_seconds: f64,
    pub mean_step_seconds: f64,
    pub steps: usize,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub robots_per_team: usize,
    pub exact_timeout: Duration,
    /// Team counts above this skip the exact baseline.
    pub exact_max_teams: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub episode: EpisodeConfig,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![3, 4, 5, 6, 7],
            robots_per_team: 3,
            exact_timeout: Duration::from_secs(60),
            exact_max_teams: 7,
            lambda: 1.0,
            alpha: 0.1,
            episode: EpisodeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub episodes: Vec<EpisodeLog>,
}

fn row(log: &EpisodeLog, method: Method) -> BenchRow {
    BenchRow {
        teams: log.teams,
        robots: log.robots,
        method,
        total_seconds: log.total_seconds,
        mean_step_seconds: log.mean_step_seconds(),
        steps: log.steps.len(),
        timed_out: log.terminal == TerminalReason::TimedOut,
    }
}

/// Seeded instance for benchmark size `teams`.
pub fn bench_instance(seed: u64, teams: usize, robots_per_team: usize) -> Result<Instance> {
    sample_instance(
        derive_seed(seed, &[teams as u64]),
        teams..=teams,
        robots_per_team..=robots_per_team,
    )
}

/// Runs the exact baseline and the policy on one seeded instance per size,
/// sequentially so timings are not skewed by contention.
pub fn run_bench(config: &BenchConfig, policy: &dyn TransferPolicy) -> Result<BenchReport> {
    let mut rows = Vec::new();
    let mut episodes = Vec::new();
    for &m in &config.sizes {
        let instance = bench_instance(config.seed, m, config.robots_per_team)?;
        if m <= config.exact_max_teams {
            let opts = SolveOptions {
                lambda: config.lambda,
                alpha: config.alpha,
                timeout: Some(config.exact_timeout),
                threads: 1,
            };
            let log = run_exact_iterative(&mut instance.clone(), &opts, config.episode.max_steps)?;
            log::info!("bench {m} teams exact: {:.3}s {:?}", log.total_seconds, log.terminal);
            rows.push(row(&log, Method::Exact));
            episodes.push(log);
        }
        let log = run_episode(&mut instance.clone(), policy, &config.episode)?;
        log::info!("bench {m} teams gnn: {:.3}s {:?}", log.total_seconds, log.terminal);
        rows.push(row(&log, Method::Gnn));
        episodes.push(log);
    }
    Ok(BenchReport { rows, episodes })
}

/// One line per size with exact and policy columns side by side. A timed
/// out exact run reports `inf` total time and no mean step.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "Teams,Robots,Opt. Total (s),Opt. Mean Step (s),Opt. Steps,GNN Total (s),GNN Mean Step (s),GNN Steps\n",
    );
    let mut sizes: Vec<(usize, usize)> = rows.iter().map(|r| (r.teams, r.robots)).collect();
    sizes.dedup();
    for (m, n) in sizes {
        let cols = |method: Method| -> String {
            match rows.iter().find(|r| (r.teams, r.robots, r.method) == (m, n, method)) {
                None => ",,".into(),
                Some(r) if r.timed_out => format!("inf,,{}", r.steps),
                Some(r) => format!("{:.6},{:.6},{}", r.total_seconds, r.mean_step_seconds, r.steps),
            }
        };
        out.push_str(&format!("{m},{n},{},{}\n", cols(Method::Exact), cols(Method::Gnn)));
    }
    out
}

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    std::fs::write(path, bench_csv(rows)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub teams: usize,
    pub robots: usize,
    pub exact_score: f64,
    pub policy_score: f64,
    /// `(exact − policy) / |exact|`.
    pub relative_gap: f64,
    /// Fraction of robots whose next team matches the exact decision.
    pub identical_fraction: f64,
    /// Per-team fire before and after one decay step under the policy's
    /// assignment.
    pub fire_before: Vec<f64>,
    pub fire_after: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub entries: Vec<GapEntry>,
    pub median_gap: f64,
    pub mean_gap: f64,
    pub mean_identical_fraction: f64,
    /// Instances skipped because the exact solver timed out.
    pub skipped: usize,
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        (v[k - 1] + v[k]) / 2.0
    }
}

/// One exact step and one policy step from the same state per instance.
pub fn compare_with_exact(
    instances: &[Instance],
    policy: &dyn TransferPolicy,
    opts: &SolveOptions,
) -> Result<GapReport> {
    let mut entries = Vec::new();
    let mut skipped = 0;
    for inst in instances {
        let mask = inst.hamilton_mask();
        let exact = solve_one_step(&inst.problem, &inst.assignment, &inst.oracle(), &mask, opts)?;
        if exact.timed_out {
            skipped += 1;
            continue;
        }
        let step = infer_step(inst, policy)?;
        let policy_score = inst.one_step_score(&step.assignment, opts.lambda, opts.alpha);
        let denom = exact.best_score.abs();
        let relative_gap = if denom == 0.0 {
            0.0
        } else {
            (exact.best_score - policy_score) / denom
        };
        let same = exact.best_assignment.num_robots() - exact.best_assignment.moved_count(&step.assignment);
        let mut after = inst.clone();
        let rec = commit_step(&mut after, 1, step.assignment, step.accepted, Instant::now());
        entries.push(GapEntry {
            teams: inst.num_teams(),
            robots: inst.num_robots(),
            exact_score: exact.best_score,
            policy_score,
            relative_gap,
            identical_fraction: same as f64 / inst.num_robots() as f64,
            fire_before: rec.fire_before,
            fire_after: rec.fire_after,
        });
    }
    let gaps: Vec<f64> = entries.iter().map(|e| e.relative_gap).collect();
    let n = entries.len().max(1) as f64;
    Ok(GapReport {
        median_gap: median(&gaps),
        mean_gap: gaps.iter().sum::<f64>() / n,
        mean_identical_fraction: entries.iter().map(|e| e.identical_fraction).sum::<f64>() / n,
        skipped,
        entries,
    })
}
