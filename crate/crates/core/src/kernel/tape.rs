//! Reverse-mode differentiation over a tape of matrix primitives.
//!
//! A forward pass records each primitive with its output value; `backward`
//! walks the tape in reverse and accumulates adjoints. Nodes that do not
//! depend on a parameter are never differentiated.

use std::sync::Arc;

use super::mat::{gemm, matmul, Mat};
use crate::config::SimConstants;
use crate::theory::{self, ObservableGrads};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Per-row context for the theory primitive.
#[derive(Debug, Clone)]
pub struct TheoryBatch {
    pub capacity_mbps: Vec<f64>,
    /// `n x U` backlog at window start.
    pub buffer_mb: Mat,
    pub dt_s: f64,
    pub consts: SimConstants,
}

enum Op {
    Leaf,
    Param(usize),
    /// `a * w^T`, with `w` stored `out x in`.
    MatMulT(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    RowDot(Var, Var),
    MulCol(Var, Var),
    SoftmaxRows(Var),
    Theory(Var, Arc<TheoryBatch>),
    MseLog1p(Var, Arc<Mat>),
    SmoothL1(Var, Arc<Mat>, f64),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMulT(a, b) | Op::AddBias(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::RowDot(a, b) | Op::MulCol(a, b) => {
                self.ng(*a) || self.ng(*b)
            }
            Op::Scale(a, _)
            | Op::OneMinus(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softplus(a)
            | Op::SliceCols(a, _)
            | Op::SoftmaxRows(a)
            | Op::Theory(a, _)
            | Op::MseLog1p(a, _)
            | Op::SmoothL1(a, _, _) => self.ng(*a),
            Op::ConcatCols(parts) => parts.iter().any(|p| self.ng(*p)),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant input.
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A trainable input identified by `slot`.
    pub fn param(&mut self, slot: usize, value: Mat) -> Var {
        self.push(value, Op::Param(slot))
    }

    pub fn matmul_t(&mut self, a: Var, w: Var) -> Var {
        let v = matmul(self.value(a), false, self.value(w), true);
        self.push(v, Op::MatMulT(a, w))
    }

    pub fn add_bias(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!((bv.rows, bv.cols), (1, av.cols), "bias shape");
        let mut out = av.clone();
        for r in 0..out.rows {
            for (x, b) in out.row_mut(r).iter_mut().zip(&bv.data) {
                *x += b;
            }
        }
        self.push(out, Op::AddBias(a, b))
    }

    /// `a * w^T + b`.
    pub fn linear(&mut self, a: Var, w: Var, b: Var) -> Var {
        let y = self.matmul_t(a, w);
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 - x);
        self.push(v, Op::OneMinus(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).cols_slice(start, len);
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let pv = self.value(*p);
                assert_eq!(pv.rows, rows, "row mismatch in concat");
                out.row_mut(r)[off..off + pv.cols].copy_from_slice(pv.row(r));
                off += pv.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Row-wise inner product, `n x 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!((av.rows, av.cols), (bv.rows, bv.cols), "row_dot shape");
        let data = (0..av.rows)
            .map(|r| av.row(r).iter().zip(bv.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        self.push(Mat::from_vec(av.rows, 1, data), Op::RowDot(a, b))
    }

    /// Scale each row of `a` by the matching entry of the column `w` (`n x 1`).
    pub fn mul_col(&mut self, a: Var, w: Var) -> Var {
        let (av, wv) = (self.value(a), self.value(w));
        assert_eq!((wv.rows, wv.cols), (av.rows, 1), "mul_col shape");
        let mut out = av.clone();
        for r in 0..out.rows {
            let s = wv.data[r];
            out.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        self.push(out, Op::MulCol(a, w))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            row.iter_mut().for_each(|x| *x /= s);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Theory layer applied row-wise to demand `d` (`n x U`); output is
    /// `n x 3U` laid out as `[throughput | delay | loss]`.
    pub fn theory(&mut self, d: Var, ctx: Arc<TheoryBatch>) -> Var {
        let dv = self.value(d);
        let (n, u) = (dv.rows, dv.cols);
        assert_eq!(ctx.capacity_mbps.len(), n, "theory context rows");
        let mut out = Mat::zeros(n, 3 * u);
        for r in 0..n {
            let o = theory::theory_forward(dv.row(r), ctx.capacity_mbps[r], ctx.buffer_mb.row(r), ctx.dt_s, &ctx.consts)
                .expect("theory inputs validated upstream");
            let row = out.row_mut(r);
            row[..u].copy_from_slice(&o.throughput_mbps);
            row[u..2 * u].copy_from_slice(&o.delay_s);
            row[2 * u..].copy_from_slice(&o.loss_frac);
        }
        self.push(out, Op::Theory(d, ctx))
    }

    /// Mean of `(ln(1+p) - ln(1+t))^2` over all elements, `1 x 1`.
    pub fn mse_log1p(&mut self, pred: Var, target: Arc<Mat>) -> Var {
        let pv = self.value(pred);
        assert_eq!((pv.rows, pv.cols), (target.rows, target.cols), "target shape");
        let n = pv.data.len().max(1) as f64;
        let s: f64 = pv
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| (p.ln_1p() - t.ln_1p()).powi(2))
            .sum();
        self.push(Mat::scalar(s / n), Op::MseLog1p(pred, target))
    }

    /// Mean smooth-L1 (Huber with transition `beta`), `1 x 1`.
    pub fn smooth_l1(&mut self, pred: Var, target: Arc<Mat>, beta: f64) -> Var {
        let pv = self.value(pred);
        assert_eq!((pv.rows, pv.cols), (target.rows, target.cols), "target shape");
        let n = pv.data.len().max(1) as f64;
        let s: f64 = pv
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| smooth_l1_elem(p - t, beta))
            .sum();
        self.push(Mat::scalar(s / n), Op::SmoothL1(pred, target, beta))
    }

    /// Reverse sweep from the scalar `out`.
    pub fn backward(&self, out: Var) -> Grads {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let ov = self.value(out);
        grads[out.0] = Some(Mat::filled(ov.rows, ov.cols, 1.0));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(node, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Grads { grads }
    }

    fn acc(&self, grads: &mut [Option<Mat>], v: Var, g: Mat) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, dy: &Mat, grads: &mut [Option<Mat>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMulT(a, w) => {
                if self.ng(*a) {
                    self.acc(grads, *a, matmul(dy, false, self.value(*w), false));
                }
                if self.ng(*w) {
                    let wv = self.value(*w);
                    let mut gw = Mat::zeros(wv.rows, wv.cols);
                    gemm(1.0, dy, true, self.value(*a), false, 0.0, &mut gw);
                    self.acc(grads, *w, gw);
                }
            }
            Op::AddBias(a, b) => {
                self.acc(grads, *a, dy.clone());
                if self.ng(*b) {
                    let mut gb = Mat::zeros(1, dy.cols);
                    for r in 0..dy.rows {
                        for (g, d) in gb.data.iter_mut().zip(dy.row(r)) {
                            *g += d;
                        }
                    }
                    self.acc(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, dy.clone());
                self.acc(grads, *b, dy.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, dy.clone());
                self.acc(grads, *b, dy.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, dy.zip_map(self.value(*b), |g, x| g * x));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, dy.zip_map(self.value(*a), |g, x| g * x));
                }
            }
            Op::Scale(a, s) => self.acc(grads, *a, dy.map(|g| g * s)),
            Op::OneMinus(a) => self.acc(grads, *a, dy.map(|g| -g)),
            Op::Relu(a) => {
                let g = dy.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                self.acc(grads, *a, g);
            }
            Op::Sigmoid(a) => self.acc(grads, *a, dy.zip_map(y, |g, s| g * s * (1.0 - s))),
            Op::Tanh(a) => self.acc(grads, *a, dy.zip_map(y, |g, t| g * (1.0 - t * t))),
            Op::Softplus(a) => {
                self.acc(grads, *a, dy.zip_map(self.value(*a), |g, x| g * sigmoid(x)));
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let mut g = Mat::zeros(av.rows, av.cols);
                for r in 0..dy.rows {
                    g.row_mut(r)[*start..*start + dy.cols].copy_from_slice(dy.row(r));
                }
                self.acc(grads, *a, g);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let cols = self.value(*p).cols;
                    if self.ng(*p) {
                        self.acc(grads, *p, dy.cols_slice(off, cols));
                    }
                    off += cols;
                }
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let mut g = bv.clone();
                    for r in 0..g.rows {
                        let s = dy.data[r];
                        g.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    }
                    self.acc(grads, *a, g);
                }
                if self.ng(*b) {
                    let mut g = av.clone();
                    for r in 0..g.rows {
                        let s = dy.data[r];
                        g.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    }
                    self.acc(grads, *b, g);
                }
            }
            Op::MulCol(a, w) => {
                let (av, wv) = (self.value(*a), self.value(*w));
                if self.ng(*a) {
                    let mut g = dy.clone();
                    for r in 0..g.rows {
                        let s = wv.data[r];
                        g.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    }
                    self.acc(grads, *a, g);
                }
                if self.ng(*w) {
                    let data = (0..av.rows)
                        .map(|r| dy.row(r).iter().zip(av.row(r)).map(|(g, x)| g * x).sum())
                        .collect();
                    self.acc(grads, *w, Mat::from_vec(av.rows, 1, data));
                }
            }
            Op::SoftmaxRows(a) => {
                let mut g = Mat::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let dot: f64 = dy.row(r).iter().zip(y.row(r)).map(|(g, s)| g * s).sum();
                    for ((o, d), s) in g.row_mut(r).iter_mut().zip(dy.row(r)).zip(y.row(r)) {
                        *o = s * (d - dot);
                    }
                }
                self.acc(grads, *a, g);
            }
            Op::Theory(d, ctx) => {
                let dv = self.value(*d);
                let u = dv.cols;
                let mut g = Mat::zeros(dv.rows, u);
                for r in 0..dv.rows {
                    let row = dy.row(r);
                    let dem: Vec<f64> = ctx
                        .buffer_mb
                        .row(r)
                        .iter()
                        .zip(dv.row(r))
                        .map(|(b, x)| b / ctx.dt_s + x)
                        .collect();
                    let up = ObservableGrads {
                        throughput: &row[..u],
                        delay: &row[u..2 * u],
                        loss: &row[2 * u..],
                    };
                    theory::vjp_into(
                        dv.row(r),
                        ctx.capacity_mbps[r],
                        ctx.buffer_mb.row(r),
                        ctx.dt_s,
                        &ctx.consts,
                        up,
                        &dem,
                        g.row_mut(r),
                    );
                }
                self.acc(grads, *d, g);
            }
            Op::MseLog1p(p, t) => {
                let pv = self.value(*p);
                let n = pv.data.len().max(1) as f64;
                let s = dy.data[0];
                let g = pv.zip_map(t, |p, t| s * 2.0 * (p.ln_1p() - t.ln_1p()) / (1.0 + p) / n);
                self.acc(grads, *p, g);
            }
            Op::SmoothL1(p, t, beta) => {
                let pv = self.value(*p);
                let n = pv.data.len().max(1) as f64;
                let s = dy.data[0];
                let g = pv.zip_map(t, |p, t| s * smooth_l1_grad(p - t, *beta) / n);
                self.acc(grads, *p, g);
            }
        }
    }

    /// Slot ids and adjoints of every parameter node reached by `grads`.
    pub fn param_grads<'a>(&'a self, grads: &'a Grads) -> impl Iterator<Item = (usize, &'a Mat)> + 'a {
        self.nodes.iter().enumerate().filter_map(move |(i, n)| match n.op {
            Op::Param(slot) => grads.grads[i].as_ref().map(|g| (slot, g)),
            _ => None,
        })
    }
}

pub fn smooth_l1_elem(x: f64, beta: f64) -> f64 {
    let a = x.abs();
    if a < beta {
        0.5 * x * x / beta
    } else {
        a - 0.5 * beta
    }
}

fn smooth_l1_grad(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        x / beta
    } else {
        x.signum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn rand_mat(seed: u64, rows: usize, cols: usize, lo: f64, hi: f64) -> Mat {
        let mut s = derive_stream(seed, 0);
        Mat::from_vec(rows, cols, (0..rows * cols).map(|_| s.uniform(lo, hi)).collect())
    }

    /// Checks the adjoint of a scalar-valued builder against central differences.
    fn check(build: impl Fn(&mut Tape, Var) -> Var, x: Mat, tol: f64) {
        let mut tape = Tape::new();
        let xv = tape.param(0, x.clone());
        let out = build(&mut tape, xv);
        let grads = tape.backward(out);
        let analytic = grads.get(xv).unwrap().clone();
        let h = 1e-6;
        for i in 0..x.data.len() {
            let eval = |delta: f64| {
                let mut xp = x.clone();
                xp.data[i] += delta;
                let mut t = Tape::new();
                let v = t.param(0, xp);
                let o = build(&mut t, v);
                t.value(o).data[0]
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data[i];
            let err = (a - fd).abs() / fd.abs().max(a.abs()).max(1e-3);
            assert!(err < tol, "entry {i}: analytic {a} vs fd {fd}");
        }
    }

    fn sum_all(t: &mut Tape, v: Var) -> Var {
        // Weighted sum so every entry sees a distinct upstream gradient.
        let (rows, cols) = (t.value(v).rows, t.value(v).cols);
        let w = Mat::from_vec(rows, cols, (0..rows * cols).map(|i| 0.3 + 0.1 * i as f64).collect());
        let wv = t.leaf(w);
        let p = t.mul(v, wv);
        let ones_c = t.leaf(Mat::filled(1, cols, 1.0));
        let per_row = t.matmul_t(ones_c, p);
        let ones_r = t.leaf(Mat::filled(1, rows, 1.0));
        t.matmul_t(per_row, ones_r)
    }

    #[test]
    fn elementwise_primitives() {
        let x = rand_mat(1, 3, 4, -2.0, 2.0);
        check(|t, v| { let y = t.sigmoid(v); sum_all(t, y) }, x.clone(), 1e-6);
        check(|t, v| { let y = t.tanh(v); sum_all(t, y) }, x.clone(), 1e-6);
        check(|t, v| { let y = t.softplus(v); sum_all(t, y) }, x.clone(), 1e-6);
        check(|t, v| { let y = t.one_minus(v); sum_all(t, y) }, x.clone(), 1e-6);
        check(|t, v| { let y = t.scale(v, -1.7); sum_all(t, y) }, x.clone(), 1e-6);
        check(|t, v| { let y = t.mul(v, v); sum_all(t, y) }, x.clone(), 1e-6);
        check(|t, v| { let y = t.softmax_rows(v); sum_all(t, y) }, x.clone(), 1e-6);
    }

    #[test]
    fn relu_away_from_kink() {
        let x = rand_mat(2, 3, 4, 0.1, 1.0).zip_map(&rand_mat(3, 3, 4, 0.0, 1.0), |a, s| if s < 0.5 { -a } else { a });
        check(|t, v| { let y = t.relu(v); sum_all(t, y) }, x, 1e-6);
    }

    #[test]
    fn structural_primitives() {
        let x = rand_mat(4, 3, 6, -1.0, 1.0);
        let w = rand_mat(5, 4, 6, -1.0, 1.0);
        check(
            |t, v| {
                let wv = t.leaf(w.clone());
                let y = t.matmul_t(v, wv);
                sum_all(t, y)
            },
            x.clone(),
            1e-6,
        );
        check(
            |t, v| {
                let xv = t.leaf(x.clone());
                let y = t.matmul_t(xv, v);
                sum_all(t, y)
            },
            w.clone(),
            1e-6,
        );
        check(
            |t, v| {
                let a = t.slice_cols(v, 1, 3);
                let b = t.slice_cols(v, 4, 2);
                let c = t.concat_cols(&[b, a]);
                sum_all(t, c)
            },
            x.clone(),
            1e-6,
        );
        check(
            |t, v| {
                let a = t.slice_cols(v, 0, 3);
                let b = t.slice_cols(v, 3, 3);
                let d = t.row_dot(a, b);
                let e = t.mul_col(a, d);
                sum_all(t, e)
            },
            x.clone(),
            1e-6,
        );
        check(
            |t, v| {
                let s = t.sub(v, v);
                let z = t.add(s, v);
                let z = t.add(z, v);
                sum_all(t, z)
            },
            x,
            1e-6,
        );
    }

    #[test]
    fn bias_gradient() {
        let x = rand_mat(11, 4, 3, -1.0, 1.0);
        check(
            |t, b| {
                let xv = t.leaf(x.clone());
                let y = t.add_bias(xv, b);
                let z = t.tanh(y);
                sum_all(t, z)
            },
            rand_mat(12, 1, 3, -1.0, 1.0),
            1e-6,
        );
    }

    #[test]
    fn loss_primitives() {
        let target = Arc::new(rand_mat(21, 3, 2, 0.0, 5.0));
        let p = rand_mat(22, 3, 2, 0.1, 6.0);
        check(|t, v| t.mse_log1p(v, target.clone()), p.clone(), 1e-6);
        check(|t, v| t.smooth_l1(v, target.clone(), 1.0), p, 1e-6);
    }

    #[test]
    fn theory_primitive_matches_finite_differences() {
        let consts = SimConstants::default();
        let ctx = Arc::new(TheoryBatch {
            capacity_mbps: vec![20.0, 100.0, 8.0],
            buffer_mb: Mat::from_vec(3, 2, vec![0.0, 0.0, 0.3, 1.2, 4.0, 2.0]),
            dt_s: 0.2,
            consts,
        });
        let d = Mat::from_vec(3, 2, vec![30.0, 10.0, 5.0, 3.0, 25.0, 6.0]);
        check(
            |t, v| {
                let o = t.theory(v, ctx.clone());
                sum_all(t, o)
            },
            d,
            1e-4,
        );
    }
}
