//! Reverse-mode automatic differentiation over dense row-major matrices.

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    /// `x + b` with `b` a single row broadcast over `x`.
    AddRow(Var, Var),
    Relu(Var),
    /// Elementwise product with a fixed (already scaled) mask.
    Scale(Var, Mat),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    /// Row means per segment; `inv[k]` is `1/|segment k|` or 0 if empty.
    SegmentMean {
        x: Var,
        segment: Vec<usize>,
        inv: Vec<f64>,
    },
}

struct Node {
    op: Op,
    value: Mat,
    needs_grad: bool,
}

/// Records a computation for one backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Mat, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, value: Mat) -> Var {
        self.push(Op::Input, value, false)
    }

    /// Parameter `index`; its gradient is reported at that index.
    pub fn param(&mut self, index: usize, value: &Mat) -> Var {
        self.push(Op::Param(index), value.clone(), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(Op::MatMul(a, b), value, g)
    }

    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let value = self.value(x) + self.value(b);
        let g = self.needs(x) || self.needs(b);
        self.push(Op::AddRow(x, b), value, g)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        let g = self.needs(x);
        self.push(Op::Relu(x), value, g)
    }

    pub fn scale(&mut self, x: Var, mask: Mat) -> Var {
        let value = self.value(x) * &mask;
        let g = self.needs(x);
        self.push(Op::Scale(x, mask), value, g)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let g = parts.iter().any(|&p| self.needs(p));
        self.push(Op::Concat(parts.to_vec()), value, g)
    }

    pub fn gather(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let value = self.value(x).select(Axis(0), &rows);
        let g = self.needs(x);
        self.push(Op::Gather(x, rows), value, g)
    }

    /// Mean of the rows of `x` per segment id; empty segments give zeros.
    pub fn segment_mean(&mut self, x: Var, segment: Vec<usize>, num_segments: usize) -> Var {
        let src = self.value(x);
        let mut count = vec![0usize; num_segments];
        let mut value = Mat::zeros((num_segments, src.ncols()));
        for (row, &k) in src.outer_iter().zip(&segment) {
            count[k] += 1;
            let mut acc = value.row_mut(k);
            acc += &row;
        }
        let inv: Vec<f64> = count
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
            .collect();
        for (mut row, &f) in value.outer_iter_mut().zip(&inv) {
            row *= f;
        }
        let g = self.needs(x);
        self.push(Op::SegmentMean { x, segment, inv }, value, g)
    }

    /// Backpropagates the given output gradients and returns the gradient
    /// of every parameter index (None if a parameter was not reached).
    pub fn backward(&self, seeds: Vec<(Var, Mat)>, num_params: usize) -> Vec<Option<Mat>> {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            accumulate(&mut grads[v.0], g);
        }
        let mut out: Vec<Option<Mat>> = (0..num_params).map(|_| None).collect();
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(k) => accumulate(&mut out[*k], g),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads[a.0], g.dot(&self.value(*b).t()));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], self.value(*a).t().dot(&g));
                    }
                }
                Op::AddRow(x, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads[x.0], g);
                    }
                }
                Op::Relu(x) => {
                    let mut g = g;
                    Zip::from(&mut g).and(&node.value).for_each(|gi, &y| {
                        if y <= 0.0 {
                            *gi = 0.0;
                        }
                    });
                    accumulate(&mut grads[x.0], g);
                }
                Op::Scale(x, mask) => accumulate(&mut grads[x.0], g * mask),
                Op::Concat(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if self.needs(*p) {
                            accumulate(&mut grads[p.0], g.slice(s![.., col..col + w]).to_owned());
                        }
                        col += w;
                    }
                }
                Op::Gather(x, rows) => {
                    let mut gx = Mat::zeros(self.value(*x).raw_dim());
                    for (grow, &r) in g.outer_iter().zip(rows) {
                        let mut dst = gx.row_mut(r);
                        dst += &grow;
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                Op::SegmentMean { x, segment, inv } => {
                    let mut gx = Mat::zeros(self.value(*x).raw_dim());
                    for (mut row, &k) in gx.outer_iter_mut().zip(segment) {
                        row.scaled_add(inv[k], &g.row(k));
                    }
                    accumulate(&mut grads[x.0], gx);
                }
            }
        }
        out
    }
}

fn accumulate(slot: &mut Option<Mat>, g: Mat) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}
