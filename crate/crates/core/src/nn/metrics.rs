//! Robot-level classification metrics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub exact_acc: f64,
    pub move_stay_acc: f64,
    pub top3_acc: f64,
    /// Exact accuracy restricted to robots whose label is a move.
    pub move_target_acc: f64,
    /// 0 when nothing was predicted to move.
    pub move_precision: f64,
    /// 0 when no label is a move.
    pub move_recall: f64,
    pub loss: f64,
    pub robots: usize,
    pub label_moves: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricCounts {
    pub robots: usize,
    pub exact: usize,
    pub move_stay: usize,
    pub top3: usize,
    pub label_moves: usize,
    pub predicted_moves: usize,
    pub true_moves: usize,
    pub move_target: usize,
}

impl MetricCounts {
    /// Adds one robot given its candidates as `(team, score)` in ascending
    /// team order.
    pub fn add(&mut self, candidates: &[(usize, f64)], label: usize, current: usize) {
        let mut ranked: Vec<(usize, f64)> = candidates.to_vec();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let pred = ranked[0].0;
        let (pred_move, label_move) = (pred != current, label != current);
        self.robots += 1;
        self.exact += usize::from(pred == label);
        self.move_stay += usize::from(pred_move == label_move);
        self.top3 += usize::from(ranked.iter().take(3).any(|&(t, _)| t == label));
        self.label_moves += usize::from(label_move);
        self.predicted_moves += usize::from(pred_move);
        self.true_moves += usize::from(pred_move && label_move);
        self.move_target += usize::from(label_move && pred == label);
    }

    pub fn merge(&mut self, other: &MetricCounts) {
        self.robots += other.robots;
        self.exact += other.exact;
        self.move_stay += other.move_stay;
        self.top3 += other.top3;
        self.label_moves += other.label_moves;
        self.predicted_moves += other.predicted_moves;
        self.true_moves += other.true_moves;
        self.move_target += other.move_target;
    }

    pub fn finish(&self, loss: f64) -> Metrics {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Metrics {
            exact_acc: ratio(self.exact, self.robots),
            move_stay_acc: ratio(self.move_stay, self.robots),
            top3_acc: ratio(self.top3, self.robots),
            move_target_acc: ratio(self.move_target, self.label_moves),
            move_precision: ratio(self.true_moves, self.predicted_moves),
            move_recall: ratio(self.true_moves, self.label_moves),
            loss,
            robots: self.robots,
            label_moves: self.label_moves,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let mut c = MetricCounts::default();
        c.add(&[(0, 1.0), (1, 5.0)], 1, 0);
        c.add(&[(0, 2.0), (2, -1.0)], 0, 0);
        let m = c.finish(0.0);
        assert_eq!(
            (m.exact_acc, m.move_stay_acc, m.top3_acc, m.move_target_acc),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!((m.move_precision, m.move_recall), (1.0, 1.0));
    }

    #[test]
    fn all_stay_predictor_arithmetic() {
        // 10,000 robots, 1,768 of them labeled to move.
        let mut c = MetricCounts::default();
        for i in 0..10_000 {
            let label = if i < 1768 { 1 } else { 0 };
            c.add(&[(0, 1.0), (1, 0.0)], label, 0);
        }
        let m = c.finish(0.0);
        assert!((m.move_stay_acc - 0.8232).abs() < 1e-12);
        assert_eq!(m.move_recall, 0.0);
        assert_eq!(m.exact_acc, m.move_stay_acc);
    }

    #[test]
    fn top3_contains_exact() {
        let mut c = MetricCounts::default();
        c.add(&[(0, 0.1), (1, 0.5), (2, 0.4), (3, 0.3)], 3, 0);
        c.add(&[(0, 0.1), (1, 0.5), (2, 0.4), (3, 0.3)], 0, 0);
        c.add(&[(0, 0.1), (1, 0.5), (2, 0.4), (3, 0.3)], 1, 0);
        let m = c.finish(0.0);
        assert_eq!(m.top3_acc, 2.0 / 3.0);
        assert_eq!(m.exact_acc, 1.0 / 3.0);
    }

    #[test]
    fn ties_rank_lower_team_first() {
        let mut c = MetricCounts::default();
        c.add(&[(0, 1.0), (1, 1.0)], 0, 1);
        assert_eq!(c.exact, 1);
        assert_eq!(c.predicted_moves, 1);
    }
}
