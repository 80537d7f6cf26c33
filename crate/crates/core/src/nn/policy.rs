//! The message-passing policy: encoders, one round of edge-conditioned
//! messages with mean aggregation, a candidate scorer and a move/stay head.
//! Every MLP has two ReLU hidden layers and a linear output.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Mat, Tape, Var};
use crate::datagen::{FeatureSchema, GraphSample, GraphState, Normalization};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub team_dim: usize,
    pub robot_dim: usize,
    pub edge_dim: usize,
}

impl PolicyConfig {
    pub fn for_schema(schema: &FeatureSchema, hidden: usize) -> Self {
        Self {
            hidden,
            team_dim: schema.team_dim(),
            robot_dim: schema.robot_dim(),
            edge_dim: schema.edge_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Mat,
}

/// Linear layers per MLP: `in → hidden → hidden → out`.
const MLP_LAYERS: usize = 3;

/// Index of an MLP's first parameter; layer `k` stores its weight at
/// `first + 2k` and its bias right after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Mlp {
    first: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub config: PolicyConfig,
    pub params: Vec<Param>,
    team: Mlp,
    robot: Mlp,
    message: Mlp,
    update: Mlp,
    action: Mlp,
    aux: Mlp,
}

/// Layout of every MLP as `(name, input width, output width)`.
fn layout(c: &PolicyConfig) -> [(&'static str, usize, usize); 6] {
    let h = c.hidden;
    [
        ("team", c.team_dim, h),
        ("robot", c.robot_dim, h),
        ("message", 2 * h + c.edge_dim, h),
        ("update", 2 * h, h),
        ("action", 3 * h + c.edge_dim + 1, 1),
        ("aux", 2 * h, 1),
    ]
}

/// Parameter names and shapes in storage order.
pub fn param_shapes(c: &PolicyConfig) -> Vec<(String, [usize; 2])> {
    layout(c)
        .iter()
        .flat_map(|&(name, i, o)| {
            let widths = [i, c.hidden, c.hidden, o];
            (0..MLP_LAYERS).flat_map(move |k| {
                [
                    (format!("{name}.{k}.weight"), [widths[k], widths[k + 1]]),
                    (format!("{name}.{k}.bias"), [1, widths[k + 1]]),
                ]
            })
        })
        .collect()
}

impl PolicyNet {
    /// Uniform `±1/√fan_in` initialization from `seed`.
    pub fn new(config: PolicyConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = 1;
        let params = param_shapes(&config)
            .into_iter()
            .map(|(name, [rows, cols])| {
                // Biases share the fan-in of the weight stored just before.
                if name.ends_with("weight") {
                    fan_in = rows;
                }
                let bound = 1.0 / (fan_in as f64).sqrt();
                let value = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound));
                Param { name, value }
            })
            .collect();
        Self::from_params(config, params).expect("shapes come from the layout")
    }

    pub fn from_params(config: PolicyConfig, params: Vec<Param>) -> Result<Self> {
        let shapes = param_shapes(&config);
        if shapes.len() != params.len() {
            return Err(Error::SchemaMismatch(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in shapes.iter().zip(&params) {
            if *name != p.name || p.value.shape() != shape {
                return Err(Error::SchemaMismatch(format!(
                    "parameter {} has shape {:?}, expected {name} {:?}",
                    p.name,
                    p.value.shape(),
                    shape
                )));
            }
            if p.value.iter().any(|x| !x.is_finite()) {
                return Err(Error::SchemaMismatch(format!("parameter {name} is not finite")));
            }
        }
        let mlp = |k: usize| Mlp {
            first: 2 * MLP_LAYERS * k,
        };
        Ok(Self {
            config,
            params,
            team: mlp(0),
            robot: mlp(1),
            message: mlp(2),
            update: mlp(3),
            action: mlp(4),
            aux: mlp(5),
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Dropout state for a training forward pass.
pub struct Dropout {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

struct Pass<'a> {
    net: &'a PolicyNet,
    tape: Tape,
    vars: Vec<Option<Var>>,
    dropout: Option<Dropout>,
}

impl Pass<'_> {
    fn p(&mut self, k: usize) -> Var {
        if let Some(v) = self.vars[k] {
            return v;
        }
        let v = self.tape.param(k, &self.net.params[k].value);
        self.vars[k] = Some(v);
        v
    }

    fn mlp(&mut self, m: Mlp, x: Var) -> Var {
        let mut h = x;
        for k in 0..MLP_LAYERS {
            let (w, b) = (self.p(m.first + 2 * k), self.p(m.first + 2 * k + 1));
            let z = self.tape.matmul(h, w);
            h = self.tape.add_row(z, b);
            if k + 1 < MLP_LAYERS {
                h = self.tape.relu(h);
                h = self.dropout(h);
            }
        }
        h
    }

    fn dropout(&mut self, h: Var) -> Var {
        let Some(d) = self.dropout.as_mut().filter(|d| d.rate > 0.0) else {
            return h;
        };
        let keep = 1.0 - d.rate;
        let shape = self.tape.value(h).raw_dim();
        let mask = Mat::from_shape_simple_fn(shape, || {
            if d.rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.tape.scale(h, mask)
    }
}

/// Several graph states stacked into one disconnected graph, with every
/// feature already normalized.
#[derive(Debug, Clone)]
pub struct Batch {
    pub team_x: Mat,
    pub robot_x: Mat,
    pub edge_x: Mat,
    pub edge_src: Vec<usize>,
    pub edge_dst: Vec<usize>,
    /// Per candidate: robot, its current team, destination team (global ids).
    pub cand_robot: Vec<usize>,
    pub cand_cur: Vec<usize>,
    pub cand_dst: Vec<usize>,
    /// Per candidate: edge features then travel time.
    pub cand_x: Mat,
    /// Candidates of robot `r` are `cand_start[r]..cand_start[r + 1]`.
    pub cand_start: Vec<usize>,
    pub robot_cur: Vec<usize>,
    /// Team id (local to the sample) of every candidate.
    pub cand_team: Vec<usize>,
    /// Local current team of every robot.
    pub robot_cur_local: Vec<usize>,
    /// Robots of sample `s` are `robot_start[s]..robot_start[s + 1]`.
    pub robot_start: Vec<usize>,
    pub team_start: Vec<usize>,
}

impl Batch {
    pub fn from_states(states: &[&GraphState], norm: &Normalization) -> Result<Self> {
        let (te, re, ee) = (norm.team.dim(), norm.robot.dim(), norm.edge.dim());
        let mut team_rows = Vec::new();
        let mut robot_rows = Vec::new();
        let mut edge_rows = Vec::new();
        let mut cand_rows = Vec::new();
        let mut b = Batch {
            team_x: Mat::zeros((0, te)),
            robot_x: Mat::zeros((0, re)),
            edge_x: Mat::zeros((0, ee)),
            edge_src: Vec::new(),
            edge_dst: Vec::new(),
            cand_robot: Vec::new(),
            cand_cur: Vec::new(),
            cand_dst: Vec::new(),
            cand_x: Mat::zeros((0, ee + 1)),
            cand_start: vec![0],
            robot_cur: Vec::new(),
            cand_team: Vec::new(),
            robot_cur_local: Vec::new(),
            robot_start: vec![0],
            team_start: vec![0],
        };
        // Stay candidates use a self edge: no offset, relatedness 1, not adjacent.
        let self_edge: Vec<f64> = [0.0, 0.0, 0.0, 1.0, 0.0]
            .iter()
            .enumerate()
            .map(|(c, &x)| norm.edge.apply(c, x))
            .collect();
        for st in states {
            let m = st.num_teams();
            if st.team_features.first().is_some_and(|f| f.len() != te)
                || st.robot_features.first().is_some_and(|f| f.len() != re)
                || st.edge_features.first().is_some_and(|f| f.len() != ee)
                || self_edge.len() != ee
            {
                return Err(Error::SchemaMismatch(
                    "state feature widths differ from the network's".into(),
                ));
            }
            let t0 = *b.team_start.last().expect("nonempty");
            let r0 = *b.robot_start.last().expect("nonempty");
            let norm_row = |stats: &crate::datagen::FeatureStats, f: &[f64]| -> Vec<f64> {
                f.iter().enumerate().map(|(c, &x)| stats.apply(c, x)).collect()
            };
            for f in &st.team_features {
                team_rows.extend(norm_row(&norm.team, f));
            }
            for f in &st.robot_features {
                robot_rows.extend(norm_row(&norm.robot, f));
            }
            // Aggregation order is fixed by sorting edges on (dst, src),
            // whatever order the state stores them in.
            let mut order: Vec<usize> = (0..st.edges.len()).collect();
            order.sort_by_key(|&k| (st.edges[k].1, st.edges[k].0));
            let mut normed_edges: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
            for k in order {
                let (s, d) = st.edges[k];
                let e = norm_row(&norm.edge, &st.edge_features[k]);
                edge_rows.extend_from_slice(&e);
                normed_edges.insert((s, d), e);
                b.edge_src.push(t0 + s);
                b.edge_dst.push(t0 + d);
            }
            for r in 0..st.num_robots() {
                let cur = st.current[r];
                b.robot_cur.push(t0 + cur);
                b.robot_cur_local.push(cur);
                for v in st.candidates(r) {
                    let e = if v == cur {
                        &self_edge
                    } else {
                        normed_edges.get(&(cur, v)).ok_or_else(|| {
                            Error::Dataset(format!(
                                "candidate {cur} -> {v} of robot {r} is not a graph edge"
                            ))
                        })?
                    };
                    cand_rows.extend_from_slice(e);
                    cand_rows.push(norm.xi.apply(0, st.distance_row[r][v]));
                    b.cand_robot.push(r0 + r);
                    b.cand_cur.push(t0 + cur);
                    b.cand_dst.push(t0 + v);
                    b.cand_team.push(v);
                }
                b.cand_start.push(b.cand_robot.len());
            }
            b.team_start.push(t0 + m);
            b.robot_start.push(r0 + st.num_robots());
        }
        let rows = |v: Vec<f64>, w: usize| {
            Mat::from_shape_vec((v.len() / w, w), v).expect("row-major feature block")
        };
        b.team_x = rows(team_rows, te);
        b.robot_x = rows(robot_rows, re);
        b.edge_x = rows(edge_rows, ee);
        b.cand_x = rows(cand_rows, ee + 1);
        Ok(b)
    }

    pub fn num_robots(&self) -> usize {
        self.robot_cur.len()
    }

    pub fn num_teams(&self) -> usize {
        *self.team_start.last().expect("nonempty")
    }

    pub fn num_samples(&self) -> usize {
        self.robot_start.len() - 1
    }

    pub fn candidates(&self, r: usize) -> std::ops::Range<usize> {
        self.cand_start[r]..self.cand_start[r + 1]
    }
}

/// Forward pass results, with the tape kept for backpropagation.
pub struct Forward {
    tape: Tape,
    scores: Var,
    aux: Var,
    team_embeddings: Var,
}

impl Forward {
    /// One score per candidate, in batch candidate order.
    pub fn scores(&self) -> Vec<f64> {
        self.tape.value(self.scores).iter().copied().collect()
    }

    /// One move/stay logit per robot.
    pub fn move_logits(&self) -> Vec<f64> {
        self.tape.value(self.aux).iter().copied().collect()
    }

    /// Team embeddings after message passing.
    pub fn team_embeddings(&self) -> &Mat {
        self.tape.value(self.team_embeddings)
    }

    /// Parameter gradients given the loss gradient with respect to the
    /// scores and move logits.
    pub fn backward(&self, d_scores: &[f64], d_aux: &[f64], num_params: usize) -> Vec<Mat> {
        let col = |v: &[f64]| Mat::from_shape_vec((v.len(), 1), v.to_vec()).expect("column");
        self.tape
            .backward(
                vec![(self.scores, col(d_scores)), (self.aux, col(d_aux))],
                num_params,
            )
            .into_iter()
            .map(|g| g.expect("every parameter feeds the loss"))
            .collect()
    }
}

impl PolicyNet {
    pub fn forward(&self, batch: &Batch, dropout: Option<Dropout>) -> Forward {
        let mut pass = Pass {
            net: self,
            tape: Tape::new(),
            vars: vec![None; self.params.len()],
            dropout,
        };
        let t = &mut pass.tape;
        let team_x = t.input(batch.team_x.clone());
        let robot_x = t.input(batch.robot_x.clone());
        let edge_x = t.input(batch.edge_x.clone());
        let cand_x = t.input(batch.cand_x.clone());

        let h0 = pass.mlp(self.team, team_x);
        let g = pass.mlp(self.robot, robot_x);

        let t = &mut pass.tape;
        let hs = t.gather(h0, batch.edge_src.clone());
        let hd = t.gather(h0, batch.edge_dst.clone());
        let msg_in = t.concat(&[hs, hd, edge_x]);
        let msg = pass.mlp(self.message, msg_in);

        let t = &mut pass.tape;
        let mbar = t.segment_mean(msg, batch.edge_dst.clone(), batch.num_teams());
        let upd_in = t.concat(&[h0, mbar]);
        let h1 = pass.mlp(self.update, upd_in);

        let t = &mut pass.tape;
        let gr = t.gather(g, batch.cand_robot.clone());
        let hc = t.gather(h1, batch.cand_cur.clone());
        let hj = t.gather(h1, batch.cand_dst.clone());
        let act_in = t.concat(&[gr, hc, hj, cand_x]);
        let scores = pass.mlp(self.action, act_in);

        let t = &mut pass.tape;
        let hcur = t.gather(h1, batch.robot_cur.clone());
        let aux_in = t.concat(&[g, hcur]);
        let aux = pass.mlp(self.aux, aux_in);

        Forward {
            tape: pass.tape,
            scores,
            aux,
            team_embeddings: h1,
        }
    }
}

/// Loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub aux_weight: f64,
    pub move_emphasis: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            aux_weight: 0.15,
            move_emphasis: 1.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub cross_entropy: f64,
    pub aux: f64,
    pub d_scores: Vec<f64>,
    pub d_aux: Vec<f64>,
}

/// Position of each robot's label within its candidate range.
pub fn label_positions(batch: &Batch, labels: &[usize]) -> Result<Vec<usize>> {
    (0..batch.num_robots())
        .map(|r| {
            batch
                .candidates(r)
                .position(|k| batch.cand_team[k] == labels[r])
                .ok_or_else(|| {
                    Error::Dataset(format!("label of robot {r} is not among its candidates"))
                })
        })
        .collect()
}

/// Masked cross-entropy over each robot's candidates (weighted by
/// `move_emphasis` for move labels) plus `aux_weight` times the binary
/// cross-entropy of the move/stay logit, both averaged over robots.
pub fn loss(
    batch: &Batch,
    scores: &[f64],
    move_logits: &[f64],
    labels: &[usize],
    weights: &LossWeights,
) -> Result<LossOutput> {
    let pos = label_positions(batch, labels)?;
    let n = batch.num_robots();
    let inv_n = 1.0 / n.max(1) as f64;
    let mut d_scores = vec![0.0; scores.len()];
    let mut d_aux = vec![0.0; n];
    let (mut ce, mut bce) = (0.0, 0.0);
    for r in 0..n {
        let range = batch.candidates(r);
        let s = &scores[range.clone()];
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = s.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + z.ln();
        let is_move = labels[r] != batch.robot_cur_local[r];
        let w = if is_move { weights.move_emphasis } else { 1.0 };
        ce += w * (lse - s[pos[r]]);
        for (k, &x) in s.iter().enumerate() {
            let p = (x - lse).exp();
            let y = if k == pos[r] { 1.0 } else { 0.0 };
            d_scores[range.start + k] = w * (p - y) * inv_n;
        }

        let zr = move_logits[r];
        let t = if is_move { 1.0 } else { 0.0 };
        bce += zr.max(0.0) - zr * t + (-zr.abs()).exp().ln_1p();
        d_aux[r] = weights.aux_weight * (sigmoid(zr) - t) * inv_n;
    }
    let (ce, bce) = (ce * inv_n, bce * inv_n);
    Ok(LossOutput {
        loss: ce + weights.aux_weight * bce,
        cross_entropy: ce,
        aux: bce,
        d_scores,
        d_aux,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A trained network with the normalization it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: PolicyNet,
    pub normalization: Normalization,
    pub schema: FeatureSchema,
}

/// Per-robot scores for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    /// `N × M`, `−∞` outside the candidate mask.
    pub scores: Vec<Vec<f64>>,
    pub move_logits: Vec<f64>,
}

impl ScoreMatrix {
    /// Softmax over each robot's candidates; exactly 0 elsewhere.
    pub fn probabilities(&self) -> Vec<Vec<f64>> {
        self.scores
            .iter()
            .map(|row| {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
                let z: f64 = e.iter().sum();
                e.iter().map(|x| x / z).collect()
            })
            .collect()
    }

    /// Highest-scoring candidate of robot `r`; ties go to the lowest team.
    pub fn argmax(&self, r: usize) -> usize {
        argmax(&self.scores[r])
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = k;
        }
    }
    best
}

impl Policy {
    pub fn new(net: PolicyNet, normalization: Normalization, schema: FeatureSchema) -> Result<Self> {
        let c = &net.config;
        if c.team_dim != schema.team_dim()
            || c.robot_dim != schema.robot_dim()
            || c.edge_dim != schema.edge_dim()
            || normalization.team.dim() != c.team_dim
            || normalization.robot.dim() != c.robot_dim
            || normalization.edge.dim() != c.edge_dim
        {
            return Err(Error::SchemaMismatch(
                "network, schema and normalization widths disagree".into(),
            ));
        }
        Ok(Self {
            net,
            normalization,
            schema,
        })
    }

    pub fn batch(&self, states: &[&GraphState]) -> Result<Batch> {
        Batch::from_states(states, &self.normalization)
    }

    /// Inference-mode scores for one state.
    pub fn score(&self, state: &GraphState) -> Result<ScoreMatrix> {
        let batch = self.batch(&[state])?;
        let fwd = self.net.forward(&batch, None);
        let flat = fwd.scores();
        let m = state.num_teams();
        let scores = (0..state.num_robots())
            .map(|r| {
                let mut row = vec![f64::NEG_INFINITY; m];
                for k in batch.candidates(r) {
                    row[batch.cand_team[k]] = flat[k];
                }
                row
            })
            .collect();
        Ok(ScoreMatrix {
            scores,
            move_logits: fwd.move_logits(),
        })
    }

    /// Inference-mode loss of labeled samples.
    pub fn loss(&self, samples: &[&GraphSample], weights: &LossWeights) -> Result<LossOutput> {
        let states: Vec<&GraphState> = samples.iter().map(|s| &s.state).collect();
        let batch = self.batch(&states)?;
        let labels: Vec<usize> = samples.iter().flat_map(|s| s.label.iter().copied()).collect();
        let fwd = self.net.forward(&batch, None);
        loss(&batch, &fwd.scores(), &fwd.move_logits(), &labels, weights)
    }

    /// Inference-mode loss and its gradient for every parameter, in
    /// storage order.
    pub fn loss_and_gradients(
        &self,
        samples: &[&GraphSample],
        weights: &LossWeights,
    ) -> Result<(LossOutput, Vec<Mat>)> {
        let states: Vec<&GraphState> = samples.iter().map(|s| &s.state).collect();
        let batch = self.batch(&states)?;
        let labels: Vec<usize> = samples.iter().flat_map(|s| s.label.iter().copied()).collect();
        let fwd = self.net.forward(&batch, None);
        let out = loss(&batch, &fwd.scores(), &fwd.move_logits(), &labels, weights)?;
        let grads = fwd.backward(&out.d_scores, &out.d_aux, self.net.params.len());
        Ok((out, grads))
    }
}
