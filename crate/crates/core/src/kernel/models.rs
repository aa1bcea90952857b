//! The three network families: the demand MLP, the GRU+LSTM direct
//! predictor and the attention-based direct predictor.
//!
//! Inputs are batches `n x (seq_len * step_dim)`: the flattened history of
//! `seq_len` windows, `step_dim` features each. All heads end in softplus.

use serde::{Deserialize, Serialize};

use super::mat::Mat;
use super::params::ParamVector;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TgdinMlp,
    GruLstm,
    AttnDirect,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::TgdinMlp => "tgdin_mlp",
            Self::GruLstm => "gru_lstm",
            Self::AttnDirect => "attn_direct",
        }
    }
}

/// Architecture descriptor.
///
/// * `tgdin_mlp`: `hidden_dims` are the three hidden widths.
/// * `gru_lstm`: `hidden_dims = [recurrent, head]`.
/// * `attn_direct`: `hidden_dims = [projection, feed_forward]`, `n_heads` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Features per window.
    pub step_dim: usize,
    pub seq_len: usize,
    pub hidden_dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_heads: Option<usize>,
    pub output_dim: usize,
    /// Attention model only: run the LSTM encoder. Disabling it is a test hook.
    #[serde(default = "default_true")]
    pub encoder: bool,
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn tgdin_mlp(step_dim: usize, seq_len: usize, hidden: [usize; 3], n_users: usize) -> Self {
        Self {
            kind: ModelKind::TgdinMlp,
            step_dim,
            seq_len,
            hidden_dims: hidden.to_vec(),
            n_heads: None,
            output_dim: n_users,
            encoder: true,
        }
    }

    pub fn gru_lstm(step_dim: usize, seq_len: usize, hidden: usize, head: usize, n_users: usize) -> Self {
        Self {
            kind: ModelKind::GruLstm,
            step_dim,
            seq_len,
            hidden_dims: vec![hidden, head],
            n_heads: None,
            output_dim: n_users,
            encoder: true,
        }
    }

    pub fn attn_direct(step_dim: usize, seq_len: usize, proj: usize, heads: usize, ff: usize, n_users: usize) -> Self {
        Self {
            kind: ModelKind::AttnDirect,
            step_dim,
            seq_len,
            hidden_dims: vec![proj, ff],
            n_heads: Some(heads),
            output_dim: n_users,
            encoder: true,
        }
    }

    /// Flattened input width.
    pub fn input_dim(&self) -> usize {
        self.step_dim * self.seq_len
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.step_dim >= 1 && self.seq_len >= 1 && self.output_dim >= 1 && self.hidden_dims.iter().all(|d| *d >= 1);
        if !dims_ok {
            return Err(Error::invalid("model dimensions must be >= 1"));
        }
        match self.kind {
            ModelKind::TgdinMlp if self.hidden_dims.len() != 3 => {
                Err(Error::invalid("tgdin_mlp needs exactly three hidden layers"))
            }
            ModelKind::GruLstm if self.hidden_dims.len() != 2 => Err(Error::invalid("gru_lstm needs [hidden, head]")),
            ModelKind::AttnDirect => {
                let heads = self.n_heads.ok_or_else(|| Error::invalid("attn_direct needs n_heads"))?;
                if self.hidden_dims.len() != 2 || heads == 0 || self.hidden_dims[0] % heads != 0 {
                    return Err(Error::invalid("attn_direct needs [proj, ff] with proj divisible by n_heads"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Named tensor shapes in storage order. The output head is always the
    /// `out.*` slots.
    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        let mut s: Vec<(String, usize, usize)> = Vec::new();
        let linear = |s: &mut Vec<_>, name: &str, out: usize, inp: usize| {
            s.push((format!("{name}.weight"), out, inp));
            s.push((format!("{name}.bias"), 1, out));
        };
        let lstm = |s: &mut Vec<(String, usize, usize)>, name: &str, inp: usize, h: usize| {
            s.push((format!("{name}.w_ih"), 4 * h, inp));
            s.push((format!("{name}.w_hh"), 4 * h, h));
            s.push((format!("{name}.b_ih"), 1, 4 * h));
            s.push((format!("{name}.b_hh"), 1, 4 * h));
        };
        let u = self.output_dim;
        match self.kind {
            ModelKind::TgdinMlp => {
                let mut prev = self.input_dim();
                for (i, h) in self.hidden_dims.iter().enumerate() {
                    linear(&mut s, &format!("fc{i}"), *h, prev);
                    prev = *h;
                }
                linear(&mut s, "out", u, prev);
            }
            ModelKind::GruLstm => {
                let (h, head) = (self.hidden_dims[0], self.hidden_dims[1]);
                s.push(("gru.w_ih".into(), 3 * h, self.step_dim));
                s.push(("gru.w_hh".into(), 3 * h, h));
                s.push(("gru.b_ih".into(), 1, 3 * h));
                s.push(("gru.b_hh".into(), 1, 3 * h));
                lstm(&mut s, "lstm", h, h);
                linear(&mut s, "head.fc", head, h);
                linear(&mut s, "out", u, head);
            }
            ModelKind::AttnDirect => {
                let (d, ff) = (self.hidden_dims[0], self.hidden_dims[1]);
                linear(&mut s, "proj", d, self.step_dim);
                if self.encoder {
                    lstm(&mut s, "lstm", d, d);
                }
                for p in ["attn.q", "attn.k", "attn.v", "attn.o"] {
                    linear(&mut s, p, d, d);
                }
                linear(&mut s, "ff", ff, d);
                linear(&mut s, "out", u, ff);
            }
        }
        s
    }

    pub fn zero_params(&self) -> ParamVector {
        ParamVector::zeros(&self.shapes())
    }

    /// Fan-in uniform initialisation; weights feeding a ReLU use the Kaiming
    /// bound `sqrt(6/fan_in)`, all other weights `1/sqrt(fan_in)`. Biases start at 0.
    pub fn init_params(&self, rng: &mut RngStream) -> ParamVector {
        let mut p = self.zero_params();
        for slot in p.layout.clone() {
            let is_bias = slot.rows == 1 && (slot.name.ends_with(".bias") || slot.name.contains(".b_"));
            if is_bias {
                continue;
            }
            let fan_in = slot.cols as f64;
            let relu_fed = slot.name.starts_with("fc") || slot.name.starts_with("head.fc") || slot.name.starts_with("ff.");
            let bound = if relu_fed { (6.0 / fan_in).sqrt() } else { 1.0 / fan_in.sqrt() };
            for v in &mut p.values[slot.range()] {
                *v = rng.uniform(-bound, bound);
            }
        }
        p
    }

    pub fn head_prefix(&self) -> &'static str {
        "out."
    }
}

/// Parameter nodes bound on a tape, indexed like the layout.
pub struct Bound {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    pub fn new(tape: &mut Tape, params: &ParamVector) -> Self {
        let mut names = Vec::with_capacity(params.layout.len());
        let mut vars = Vec::with_capacity(params.layout.len());
        for (i, slot) in params.layout.iter().enumerate() {
            names.push(slot.name.clone());
            vars.push(tape.param(i, params.mat(slot)));
        }
        Self { names, vars }
    }

    pub fn get(&self, name: &str) -> Var {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"));
        self.vars[i]
    }

    fn linear(&self, tape: &mut Tape, name: &str, x: Var) -> Var {
        tape.linear(x, self.get(&format!("{name}.weight")), self.get(&format!("{name}.bias")))
    }
}

/// Outputs of a forward pass.
pub struct Forward {
    pub output: Var,
    /// Attention model only: `[head][query step]` rows of attention weights (`n x seq_len`).
    pub attention: Vec<Vec<Var>>,
}

/// Build the forward graph for `x` (`n x input_dim`).
pub fn forward(tape: &mut Tape, spec: &ModelSpec, params: &Bound, x: Var) -> Result<Forward> {
    let width = tape.value(x).cols;
    if width != spec.input_dim() {
        return Err(Error::invalid(format!(
            "input width {width} does not match model input dim {}",
            spec.input_dim()
        )));
    }
    match spec.kind {
        ModelKind::TgdinMlp => Ok(Forward {
            output: mlp(tape, spec, params, x),
            attention: Vec::new(),
        }),
        ModelKind::GruLstm => Ok(Forward {
            output: gru_lstm(tape, spec, params, x),
            attention: Vec::new(),
        }),
        ModelKind::AttnDirect => Ok(attn(tape, spec, params, x)),
    }
}

fn mlp(tape: &mut Tape, spec: &ModelSpec, p: &Bound, x: Var) -> Var {
    let mut h = x;
    for i in 0..spec.hidden_dims.len() {
        let z = p.linear(tape, &format!("fc{i}"), h);
        h = tape.relu(z);
    }
    let z = p.linear(tape, "out", h);
    tape.softplus(z)
}

fn steps(tape: &mut Tape, spec: &ModelSpec, x: Var) -> Vec<Var> {
    (0..spec.seq_len)
        .map(|t| tape.slice_cols(x, t * spec.step_dim, spec.step_dim))
        .collect()
}

fn zeros_like_rows(tape: &mut Tape, rows: usize, cols: usize) -> Var {
    tape.leaf(Mat::zeros(rows, cols))
}

/// GRU cell with PyTorch gate ordering `[r | z | n]`.
fn gru_layer(tape: &mut Tape, p: &Bound, inputs: &[Var], h_dim: usize) -> Vec<Var> {
    let n = tape.value(inputs[0]).rows;
    let mut h = zeros_like_rows(tape, n, h_dim);
    let (w_ih, w_hh, b_ih, b_hh) = (p.get("gru.w_ih"), p.get("gru.w_hh"), p.get("gru.b_ih"), p.get("gru.b_hh"));
    let mut outs = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let gi = tape.linear(x, w_ih, b_ih);
        let gh = tape.linear(h, w_hh, b_hh);
        let gi_rz = tape.slice_cols(gi, 0, 2 * h_dim);
        let gh_rz = tape.slice_cols(gh, 0, 2 * h_dim);
        let rz_pre = tape.add(gi_rz, gh_rz);
        let rz = tape.sigmoid(rz_pre);
        let r = tape.slice_cols(rz, 0, h_dim);
        let z = tape.slice_cols(rz, h_dim, h_dim);
        let gi_n = tape.slice_cols(gi, 2 * h_dim, h_dim);
        let gh_n = tape.slice_cols(gh, 2 * h_dim, h_dim);
        let rg = tape.mul(r, gh_n);
        let n_pre = tape.add(gi_n, rg);
        let cand = tape.tanh(n_pre);
        // h' = (1 - z) * cand + z * h = cand + z * (h - cand)
        let diff = tape.sub(h, cand);
        let zd = tape.mul(z, diff);
        h = tape.add(cand, zd);
        outs.push(h);
    }
    outs
}

/// LSTM cell with PyTorch gate ordering `[i | f | g | o]`.
fn lstm_layer(tape: &mut Tape, p: &Bound, prefix: &str, inputs: &[Var], h_dim: usize) -> Vec<Var> {
    let n = tape.value(inputs[0]).rows;
    let mut h = zeros_like_rows(tape, n, h_dim);
    let mut c = zeros_like_rows(tape, n, h_dim);
    let w_ih = p.get(&format!("{prefix}.w_ih"));
    let w_hh = p.get(&format!("{prefix}.w_hh"));
    let b_ih = p.get(&format!("{prefix}.b_ih"));
    let b_hh = p.get(&format!("{prefix}.b_hh"));
    let mut outs = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let gi = tape.linear(x, w_ih, b_ih);
        let gh = tape.linear(h, w_hh, b_hh);
        let g = tape.add(gi, gh);
        let ifg = tape.slice_cols(g, 0, 2 * h_dim);
        let ifg = tape.sigmoid(ifg);
        let i = tape.slice_cols(ifg, 0, h_dim);
        let f = tape.slice_cols(ifg, h_dim, h_dim);
        let cand = tape.slice_cols(g, 2 * h_dim, h_dim);
        let cand = tape.tanh(cand);
        let o = tape.slice_cols(g, 3 * h_dim, h_dim);
        let o = tape.sigmoid(o);
        let fc = tape.mul(f, c);
        let ic = tape.mul(i, cand);
        c = tape.add(fc, ic);
        let tc = tape.tanh(c);
        h = tape.mul(o, tc);
        outs.push(h);
    }
    outs
}

fn gru_lstm(tape: &mut Tape, spec: &ModelSpec, p: &Bound, x: Var) -> Var {
    let h_dim = spec.hidden_dims[0];
    let xs = steps(tape, spec, x);
    let g = gru_layer(tape, p, &xs, h_dim);
    let l = lstm_layer(tape, p, "lstm", &g, h_dim);
    let last = *l.last().expect("seq_len >= 1");
    let z = p.linear(tape, "head.fc", last);
    let z = tape.relu(z);
    let z = p.linear(tape, "out", z);
    tape.softplus(z)
}

fn attn(tape: &mut Tape, spec: &ModelSpec, p: &Bound, x: Var) -> Forward {
    let d = spec.hidden_dims[0];
    let heads = spec.n_heads.unwrap_or(1);
    let dh = d / heads;
    let k_len = spec.seq_len;
    let xs = steps(tape, spec, x);
    let projected: Vec<Var> = xs.iter().map(|&xt| p.linear(tape, "proj", xt)).collect();
    let hs = if spec.encoder {
        lstm_layer(tape, p, "lstm", &projected, d)
    } else {
        projected
    };

    let qs: Vec<Var> = hs.iter().map(|&h| p.linear(tape, "attn.q", h)).collect();
    let ks: Vec<Var> = hs.iter().map(|&h| p.linear(tape, "attn.k", h)).collect();
    let vs: Vec<Var> = hs.iter().map(|&h| p.linear(tape, "attn.v", h)).collect();
    let scale = 1.0 / (dh as f64).sqrt();

    let mut attention = vec![Vec::with_capacity(k_len); heads];
    let mut head_outs: Vec<Vec<Var>> = vec![Vec::with_capacity(heads); k_len];
    for (hd, weights_for_head) in attention.iter_mut().enumerate() {
        let q_h: Vec<Var> = qs.iter().map(|&q| tape.slice_cols(q, hd * dh, dh)).collect();
        let k_h: Vec<Var> = ks.iter().map(|&k| tape.slice_cols(k, hd * dh, dh)).collect();
        let v_h: Vec<Var> = vs.iter().map(|&v| tape.slice_cols(v, hd * dh, dh)).collect();
        for t in 0..k_len {
            let scores: Vec<Var> = k_h
                .iter()
                .map(|&ks_| {
                    let s = tape.row_dot(q_h[t], ks_);
                    tape.scale(s, scale)
                })
                .collect();
            let scores = tape.concat_cols(&scores);
            let w = tape.softmax_rows(scores);
            weights_for_head.push(w);
            let mut acc: Option<Var> = None;
            for (s, &v) in v_h.iter().enumerate() {
                let ws = tape.slice_cols(w, s, 1);
                let term = tape.mul_col(v, ws);
                acc = Some(match acc {
                    Some(a) => tape.add(a, term),
                    None => term,
                });
            }
            head_outs[t].push(acc.expect("seq_len >= 1"));
        }
    }

    let mut pooled: Option<Var> = None;
    for (t, parts) in head_outs.iter().enumerate() {
        let cat = tape.concat_cols(parts);
        let o = p.linear(tape, "attn.o", cat);
        let z = tape.add(hs[t], o);
        pooled = Some(match pooled {
            Some(a) => tape.add(a, z),
            None => z,
        });
    }
    let pooled = tape.scale(pooled.expect("seq_len >= 1"), 1.0 / k_len as f64);
    let z = p.linear(tape, "ff", pooled);
    let z = tape.relu(z);
    let z = p.linear(tape, "out", z);
    Forward {
        output: tape.softplus(z),
        attention,
    }
}

/// Inference without gradients, processed in row chunks.
pub fn predict(params: &ParamVector, spec: &ModelSpec, x: &Mat) -> Result<Mat> {
    const CHUNK: usize = 2048;
    let mut out = Mat::zeros(x.rows, spec.output_dim);
    let mut start = 0;
    while start < x.rows {
        let end = (start + CHUNK).min(x.rows);
        let chunk = Mat::from_vec(end - start, x.cols, x.data[start * x.cols..end * x.cols].to_vec());
        let mut tape = Tape::new();
        let xv = tape.leaf(chunk);
        let bound = Bound::new(&mut tape, params);
        let f = forward(&mut tape, spec, &bound, xv)?;
        let y = tape.value(f.output);
        out.data[start * spec.output_dim..end * spec.output_dim].copy_from_slice(&y.data);
        start = end;
    }
    Ok(out)
}

/// Loss value and flat gradient for one batch. `loss_fn` maps the model
/// output to a scalar using tape primitives.
pub fn model_gradient<F>(params: &ParamVector, spec: &ModelSpec, x: &Mat, loss_fn: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let bound = Bound::new(&mut tape, params);
    let f = forward(&mut tape, spec, &bound, xv)?;
    let loss = loss_fn(&mut tape, f.output)?;
    let value = tape.value(loss).data[0];
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "model_gradient".to_string(),
        });
    }
    let grads = tape.backward(loss);
    let mut flat = vec![0.0; params.len()];
    for (slot, g) in tape.param_grads(&grads) {
        let range = params.layout[slot].range();
        for (dst, src) in flat[range].iter_mut().zip(&g.data) {
            *dst += src;
        }
    }
    Ok((value, flat))
}
