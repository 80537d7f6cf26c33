//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use itertools::Itertools;

use teamalloc::model::{global_objective, transfer_cost, Assignment, HamiltonMask, MissionOracle, Problem};
use teamalloc::solver::{HomogeneousInstance, SolveOptions};

/// Every mask-consistent feasible assignment, materialized, scored and
/// sorted: best score first, then fewest moves, then smallest `team_of`.
/// Returns the winner, its score and the number of candidates.
pub fn materialize_and_sort(
    problem: &Problem,
    current: &Assignment,
    oracle: &dyn MissionOracle,
    mask: &HamiltonMask,
    opts: &SolveOptions,
) -> (Assignment, f64, usize) {
    let options: Vec<Vec<usize>> = (0..current.num_robots())
        .map(|r| {
            (0..mask.num_teams())
                .filter(|&v| v == current.team(r) || mask.is_admissible(r, v))
                .collect()
        })
        .collect();
    let mut scored: Vec<(f64, usize, Vec<usize>)> = options
        .iter()
        .multi_cartesian_product()
        .map(|team_of| Assignment::new(team_of.into_iter().copied().collect()))
        .filter(|a| problem.check(a).is_ok())
        .map(|a| {
            let score = global_objective(&a, &problem.weights, oracle)
                - opts.lambda * transfer_cost(current, &a, &problem.graph, &problem.robots, opts.alpha);
            (score, a.moved_count(current), a.team_of)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    let n = scored.len();
    let (score, _, team_of) = scored.swap_remove(0);
    (Assignment::new(team_of), score, n)
}

/// Whether the multiset splits into two equal-sum halves (subset-sum DP).
pub fn has_exact_partition(values: &[u64]) -> bool {
    let total: u64 = values.iter().sum();
    if total % 2 == 1 {
        return false;
    }
    let half = (total / 2) as usize;
    let mut reach = vec![false; half + 1];
    reach[0] = true;
    for &v in values {
        let v = v as usize;
        for s in (v..=half).rev() {
            reach[s] |= reach[s - v];
        }
    }
    reach[half]
}

/// All ways to write `n` as an ordered sum of `m` positive parts.
pub fn compositions(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, m: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if m == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 1..=n - (m - 1) {
            prefix.push(first);
            go(n - first, m - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if m >= 1 && n >= m {
        go(n, m, &mut Vec::new(), &mut out);
    }
    out
}

/// Maximum of the homogeneous objective over every size vector with all
/// teams nonempty.
pub fn homogeneous_brute_max(instance: &HomogeneousInstance) -> f64 {
    compositions(instance.num_robots(), instance.team_sizes.len())
        .iter()
        .map(|s| instance.objective(s))
        .fold(f64::NEG_INFINITY, f64::max)
}
