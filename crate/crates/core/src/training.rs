//! Demand-model training: features, the composite loss through the theory
//! layer, user-swap augmentation, the refresh-round loop and inference.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::PlateauScheduler;
use crate::config::{Config, SimConstants, TrainSection};
use crate::error::{Error, Result};
use crate::kernel::adam::{adam_step, AdamState};
use crate::kernel::checkpoint::{ModelCheckpoint, Provenance};
use crate::kernel::mat::Mat;
use crate::kernel::models::{self, Bound, ModelKind, ModelSpec};
use crate::kernel::params::ParamVector;
use crate::kernel::tape::{smooth_l1_elem, Tape, TheoryBatch, Var};
use crate::regimegen::{build_calibration_set, build_random_corpus};
use crate::rng::{derive_stream, mix, streams, RngStream};
use crate::theory::{theory_forward, TheoryOutput};
use crate::trace::Trace;

/// Bumped whenever the per-window feature order changes.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;
/// `log1p(throughput), log1p(buffer), delay, loss` per user.
pub const PER_USER_FEATURES: usize = 4;
/// SmoothL1 transition point, Mbps.
pub const SMOOTH_L1_BETA: f64 = 1.0;

pub fn step_dim(n_users: usize) -> usize {
    PER_USER_FEATURES * n_users + 1
}

pub fn feature_dim(k: usize, n_users: usize) -> usize {
    k * step_dim(n_users)
}

/// Causal history `t-K+1..=t`, oldest window first. Each window contributes
/// the per-user block followed by `log1p(capacity)`.
pub fn featurize(trace: &Trace, t: usize, k: usize) -> Result<Vec<f64>> {
    if k == 0 || t + 1 < k {
        return Err(Error::invalid(format!("featurize needs t >= K-1 (t={t}, K={k})")));
    }
    if t >= trace.len() {
        return Err(Error::invalid(format!("window {t} beyond trace length {}", trace.len())));
    }
    let mut out = vec![0.0; feature_dim(k, trace.n_users())];
    featurize_into(trace, t, k, &mut out);
    Ok(out)
}

fn featurize_into(trace: &Trace, t: usize, k: usize, out: &mut [f64]) {
    let u = trace.n_users();
    let sd = step_dim(u);
    for (s, w) in trace.windows[t + 1 - k..=t].iter().enumerate() {
        let block = &mut out[s * sd..(s + 1) * sd];
        for (i, uw) in w.users.iter().enumerate() {
            block[4 * i] = uw.throughput_mbps.ln_1p();
            block[4 * i + 1] = uw.buffer_mb.ln_1p();
            block[4 * i + 2] = uw.delay_s;
            block[4 * i + 3] = uw.loss_frac;
        }
        block[4 * u] = w.capacity_mbps.ln_1p();
    }
}

/// Row-aligned supervised samples, one per valid window.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub n_users: usize,
    pub k: usize,
    pub x: Mat,
    pub throughput: Mat,
    pub delay: Mat,
    pub loss: Mat,
    pub capacity: Vec<f64>,
    pub buffer: Mat,
    pub demand: Option<Mat>,
    /// `(trace index, window index)` of every row.
    pub origin: Vec<(usize, usize)>,
}

impl SampleSet {
    pub fn from_traces<'a, I>(traces: I, k: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Trace>,
    {
        let traces: Vec<&Trace> = traces.into_iter().collect();
        let n_users = traces.first().map_or(0, |t| t.n_users());
        let mut origin = Vec::new();
        for (ti, tr) in traces.iter().enumerate() {
            if tr.n_users() != n_users {
                return Err(Error::invalid("traces disagree on the number of users"));
            }
            origin.extend((k.saturating_sub(1)..tr.len()).map(|t| (ti, t)));
        }
        let has_truth = traces.iter().all(|t| t.has_truth);
        let n = origin.len();
        let d = feature_dim(k, n_users);
        let mut set = SampleSet {
            n_users,
            k,
            x: Mat::zeros(n, d),
            throughput: Mat::zeros(n, n_users),
            delay: Mat::zeros(n, n_users),
            loss: Mat::zeros(n, n_users),
            capacity: Vec::with_capacity(n),
            buffer: Mat::zeros(n, n_users),
            demand: has_truth.then(|| Mat::zeros(n, n_users)),
            origin,
        };
        for row in 0..n {
            let (ti, t) = set.origin[row];
            let tr = traces[ti];
            featurize_into(tr, t, k, set.x.row_mut(row));
            let w = &tr.windows[t];
            set.capacity.push(w.capacity_mbps);
            for (u, uw) in w.users.iter().enumerate() {
                *set.throughput.at_mut(row, u) = uw.throughput_mbps;
                *set.delay.at_mut(row, u) = uw.delay_s;
                *set.loss.at_mut(row, u) = uw.loss_frac;
                *set.buffer.at_mut(row, u) = uw.buffer_mb;
                if let Some(dm) = set.demand.as_mut() {
                    *dm.at_mut(row, u) = uw.demand_true_mbps.unwrap_or(0.0);
                }
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.capacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacity.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> SampleSet {
        let pick = |m: &Mat| {
            let mut out = Mat::zeros(rows.len(), m.cols);
            for (i, r) in rows.iter().enumerate() {
                out.row_mut(i).copy_from_slice(m.row(*r));
            }
            out
        };
        SampleSet {
            n_users: self.n_users,
            k: self.k,
            x: pick(&self.x),
            throughput: pick(&self.throughput),
            delay: pick(&self.delay),
            loss: pick(&self.loss),
            capacity: rows.iter().map(|r| self.capacity[*r]).collect(),
            buffer: pick(&self.buffer),
            demand: self.demand.as_ref().map(pick),
            origin: rows.iter().map(|r| self.origin[*r]).collect(),
        }
    }
}

fn swap_cols(m: &mut Mat, a: usize, b: usize) {
    for r in 0..m.rows {
        let row = m.row_mut(r);
        row.swap(a, b);
    }
}

/// With probability `p`, exchange the two users everywhere in the batch:
/// feature blocks, targets and theory context. Capacity slots stay put.
/// Returns whether the swap happened.
pub fn user_swap(batch: &mut SampleSet, rng: &mut RngStream, p: f64) -> Result<bool> {
    if batch.n_users != 2 {
        return Err(Error::Unsupported(format!("user swap needs two users, got {}", batch.n_users)));
    }
    if !rng.bernoulli(p) {
        return Ok(false);
    }
    let sd = step_dim(2);
    for s in 0..batch.k {
        for f in 0..PER_USER_FEATURES {
            swap_cols(&mut batch.x, s * sd + f, s * sd + PER_USER_FEATURES + f);
        }
    }
    for m in [&mut batch.throughput, &mut batch.delay, &mut batch.loss, &mut batch.buffer] {
        swap_cols(m, 0, 1);
    }
    if let Some(d) = batch.demand.as_mut() {
        swap_cols(d, 0, 1);
    }
    Ok(true)
}

/// Loss weights. Keys accepted by [`LossWeights::set`]: `lin`, `delay`, `loss`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_lin: f64,
    pub delay: f64,
    pub loss: f64,
}

impl LossWeights {
    pub fn from_train(t: &TrainSection) -> Self {
        Self {
            lambda_lin: t.lambda_lin,
            delay: t.lambda_delay,
            loss: t.lambda_loss,
        }
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "lin" => self.lambda_lin = value,
            "delay" => self.delay = value,
            "loss" => self.loss = value,
            other => return Err(Error::invalid(format!("unknown loss metric `{other}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub log_thr: f64,
    pub lin_thr: f64,
    pub delay_term: f64,
    pub loss_term: f64,
    pub total: f64,
}

fn check_nonneg(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|v| *v >= 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite and non-negative")))
    }
}

fn mean_smooth_l1(pred: &[f64], obs: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter()
        .zip(obs)
        .map(|(p, o)| smooth_l1_elem(p - o, SMOOTH_L1_BETA))
        .sum::<f64>()
        / pred.len() as f64
}

/// `(total, log term, linear term)` with the linear term unweighted.
pub fn throughput_loss(r_hat: &[f64], r: &[f64], lambda_lin: f64) -> Result<(f64, f64, f64)> {
    if r_hat.len() != r.len() {
        return Err(Error::invalid("prediction and target lengths differ"));
    }
    check_nonneg("r_hat", r_hat)?;
    check_nonneg("r", r)?;
    if r.is_empty() {
        return Ok((0.0, 0.0, 0.0));
    }
    let log = r_hat
        .iter()
        .zip(r)
        .map(|(p, t)| (p.ln_1p() - t.ln_1p()).powi(2))
        .sum::<f64>()
        / r.len() as f64;
    let lin = mean_smooth_l1(r_hat, r);
    Ok((log + lambda_lin * lin, log, lin))
}

/// One auxiliary QoS term; `metric` is `delay` or `loss`.
pub struct AuxTerm<'a> {
    pub metric: &'a str,
    pub weight: f64,
    pub pred: &'a [f64],
    pub obs: &'a [f64],
}

pub fn aux_loss(terms: &[AuxTerm<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for t in terms {
        if !matches!(t.metric, "delay" | "loss") {
            return Err(Error::invalid(format!("unknown auxiliary metric `{}`", t.metric)));
        }
        if t.pred.len() != t.obs.len() {
            return Err(Error::invalid(format!("{} prediction and observation lengths differ", t.metric)));
        }
        total += t.weight * mean_smooth_l1(t.pred, t.obs);
    }
    Ok(total)
}

struct LossGraph {
    total: Var,
    parts: [Var; 4],
}

fn build_loss(
    tape: &mut Tape,
    params: &ParamVector,
    spec: &ModelSpec,
    batch: &SampleSet,
    consts: &SimConstants,
    w: &LossWeights,
) -> Result<LossGraph> {
    let u = batch.n_users;
    let x = tape.leaf(batch.x.clone());
    let bound = Bound::new(tape, params);
    let d = models::forward(tape, spec, &bound, x)?.output;
    let ctx = Arc::new(TheoryBatch {
        capacity_mbps: batch.capacity.clone(),
        buffer_mb: batch.buffer.clone(),
        dt_s: consts.dt_s,
        consts: *consts,
    });
    let obs = tape.theory(d, ctx);
    let r_hat = tape.slice_cols(obs, 0, u);
    let tau_hat = tape.slice_cols(obs, u, u);
    let loss_hat = tape.slice_cols(obs, 2 * u, u);
    let log_thr = tape.mse_log1p(r_hat, Arc::new(batch.throughput.clone()));
    let lin_thr = tape.smooth_l1(r_hat, Arc::new(batch.throughput.clone()), SMOOTH_L1_BETA);
    let delay_term = tape.smooth_l1(tau_hat, Arc::new(batch.delay.clone()), SMOOTH_L1_BETA);
    let loss_term = tape.smooth_l1(loss_hat, Arc::new(batch.loss.clone()), SMOOTH_L1_BETA);
    let a = tape.scale(lin_thr, w.lambda_lin);
    let b = tape.scale(delay_term, w.delay);
    let c = tape.scale(loss_term, w.loss);
    let s = tape.add(log_thr, a);
    let s = tape.add(s, b);
    let total = tape.add(s, c);
    Ok(LossGraph {
        total,
        parts: [log_thr, lin_thr, delay_term, loss_term],
    })
}

fn breakdown(tape: &Tape, g: &LossGraph) -> LossBreakdown {
    let v = |x: Var| tape.value(x).data[0];
    LossBreakdown {
        log_thr: v(g.parts[0]),
        lin_thr: v(g.parts[1]),
        delay_term: v(g.parts[2]),
        loss_term: v(g.parts[3]),
        total: v(g.total),
    }
}

fn check_batch(spec: &ModelSpec, batch: &SampleSet) -> Result<()> {
    if spec.kind != ModelKind::TgdinMlp {
        return Err(Error::KindMismatch {
            expected: ModelKind::TgdinMlp.name().into(),
            found: spec.kind.name().into(),
        });
    }
    if spec.output_dim != batch.n_users {
        return Err(Error::invalid("model output width differs from the number of users"));
    }
    Ok(())
}

/// Composite objective: demand model, theory layer, throughput and QoS terms.
pub fn total_loss(
    params: &ParamVector,
    spec: &ModelSpec,
    batch: &SampleSet,
    consts: &SimConstants,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    check_batch(spec, batch)?;
    let mut tape = Tape::new();
    let g = build_loss(&mut tape, params, spec, batch, consts, w)?;
    Ok(breakdown(&tape, &g))
}

/// [`total_loss`] plus its gradient with respect to the flat parameters.
pub fn total_loss_grad(
    params: &ParamVector,
    spec: &ModelSpec,
    batch: &SampleSet,
    consts: &SimConstants,
    w: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_batch(spec, batch)?;
    let mut tape = Tape::new();
    let g = build_loss(&mut tape, params, spec, batch, consts, w)?;
    let bd = breakdown(&tape, &g);
    if !bd.total.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "total_loss_grad".into(),
        });
    }
    let grads = tape.backward(g.total);
    let mut flat = vec![0.0; params.len()];
    for (slot, gm) in tape.param_grads(&grads) {
        for (dst, src) in flat[params.layout[slot].range()].iter_mut().zip(&gm.data) {
            *dst += src;
        }
    }
    Ok((bd, flat))
}

/// Observables implied by demand estimates `d` (`n x U`) row by row.
pub fn theory_rows(d: &Mat, samples: &SampleSet, consts: &SimConstants) -> Result<Vec<TheoryOutput>> {
    (0..d.rows)
        .map(|r| theory_forward(d.row(r), samples.capacity[r], samples.buffer.row(r), consts.dt_s, consts))
        .collect()
}

/// Pooled throughput RMSE over every user and sample.
pub fn calibration_rmse(params: &ParamVector, spec: &ModelSpec, samples: &SampleSet, consts: &SimConstants) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyCorpus("calibration set has no samples".into()));
    }
    let d = models::predict(params, spec, &samples.x)?;
    let outs = theory_rows(&d, samples, consts)?;
    let mut se = 0.0;
    let mut n = 0usize;
    for (r, o) in outs.iter().enumerate() {
        for (u, rh) in o.throughput_mbps.iter().enumerate() {
            se += (rh - samples.throughput.at(r, u)).powi(2);
            n += 1;
        }
    }
    Ok((se / n as f64).sqrt())
}

/// Where each round's traces come from.
#[derive(Debug, Clone)]
pub enum CorpusSource {
    /// Fresh randomized regimes every round.
    Randomized,
    /// A fixed trace set, re-split every round.
    Fixed(Vec<Trace>),
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub corpus: CorpusSource,
    /// Checkpoint-selection set; the stratified default when `None`.
    pub calibration: Option<Vec<Trace>>,
    pub jobs: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            corpus: CorpusSource::Randomized,
            calibration: None,
            jobs: 1,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub round: usize,
    pub train: LossBreakdown,
    pub val_total: Option<f64>,
    pub calibration_rmse: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub log: Vec<EpochRecord>,
}

/// Shuffle trace indices and cut them by the split fractions.
pub fn split_indices(n: usize, fracs: [f64; 3], rng: &mut RngStream) -> [Vec<usize>; 3] {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let total: f64 = fracs.iter().sum();
    let mut n_train = ((fracs[0] / total) * n as f64).round() as usize;
    let mut n_val = ((fracs[1] / total) * n as f64).round() as usize;
    if n > 0 && n_train == 0 {
        n_train = 1;
    }
    n_train = n_train.min(n);
    n_val = n_val.min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    [idx, val, test]
}

pub fn tgdin_spec(cfg: &Config) -> Result<ModelSpec> {
    let h = &cfg.train.hidden;
    if h.len() != 3 {
        return Err(Error::Config {
            key: "train.hidden".into(),
            msg: "the demand model has exactly three hidden layers".into(),
        });
    }
    let u = cfg.sim.n_users;
    let spec = ModelSpec::tgdin_mlp(step_dim(u), cfg.k(), [h[0], h[1], h[2]], u);
    spec.validate()?;
    Ok(spec)
}

fn mean_breakdown(acc: &LossBreakdown, rows: usize) -> LossBreakdown {
    let n = rows.max(1) as f64;
    LossBreakdown {
        log_thr: acc.log_thr / n,
        lin_thr: acc.lin_thr / n,
        delay_term: acc.delay_term / n,
        loss_term: acc.loss_term / n,
        total: acc.total / n,
    }
}

/// Train the demand model end to end through the theory layer.
pub fn train_tgdin(cfg: &Config, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tc = &cfg.train;
    let consts = cfg.consts();
    let spec = tgdin_spec(cfg)?;
    let weights = LossWeights::from_train(tc);
    let k = cfg.k();

    let calibration = match &opts.calibration {
        Some(c) => c.clone(),
        None => build_calibration_set(&cfg.regimes, &consts, opts.jobs)?
            .into_iter()
            .map(|n| n.trace)
            .collect(),
    };
    let cal = SampleSet::from_traces(&calibration, k)?;

    let mut params = spec.init_params(&mut derive_stream(cfg.seed, streams::INIT));
    let mut adam = AdamState::new(params.len(), tc.lr, tc.weight_decay);
    let mut sched = (tc.plateau_factor < 1.0).then(|| PlateauScheduler::new(tc.lr, tc.plateau_factor, tc.plateau_patience));
    let mut best: Option<(f64, ModelCheckpoint)> = None;
    let mut since_best = 0usize;
    let mut log = Vec::new();
    let mut train_set: Option<SampleSet> = None;
    let mut val_set: Option<SampleSet> = None;
    let refresh = tc.refresh_every.max(1);

    for epoch in 0..tc.max_epochs {
        let round = epoch / refresh;
        if epoch % refresh == 0 {
            let round_seed = mix(mix(cfg.seed, streams::ROUND), round as u64);
            let fresh;
            let corpus: &[Trace] = match &opts.corpus {
                CorpusSource::Randomized => {
                    fresh = build_random_corpus(&cfg.regimes, &consts, tc.traces_per_round, round_seed, opts.jobs)?;
                    &fresh
                }
                CorpusSource::Fixed(traces) => traces,
            };
            let [tr, va, _test] = split_indices(corpus.len(), tc.split, &mut derive_stream(round_seed, streams::SPLIT));
            let ts = SampleSet::from_traces(tr.iter().map(|i| &corpus[*i]), k)?;
            if ts.is_empty() {
                return Err(Error::EmptyCorpus(format!("round {round} produced no training samples")));
            }
            let vs = SampleSet::from_traces(va.iter().map(|i| &corpus[*i]), k)?;
            train_set = Some(ts);
            val_set = (!vs.is_empty()).then_some(vs);
        }
        let train = train_set.as_ref().expect("set at round start");

        let epoch_seed = mix(cfg.seed, epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        derive_stream(epoch_seed, streams::SHUFFLE).shuffle(&mut order);
        let mut swap_rng = derive_stream(epoch_seed, streams::SWAP);
        let mut acc = LossBreakdown::default();
        for (b, rows) in order.chunks(tc.batch.max(1)).enumerate() {
            let mut batch = train.select(rows);
            if batch.n_users == 2 {
                user_swap(&mut batch, &mut swap_rng, tc.swap_prob)?;
            }
            let (bd, grad) = total_loss_grad(&params, &spec, &batch, &consts, &weights).map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                    context: format!("seed {}, round {round}, epoch {epoch}, batch {b}", cfg.seed),
                },
                other => other,
            })?;
            adam_step(&mut params.values, &grad, &mut adam, None)?;
            let n = rows.len() as f64;
            acc.log_thr += bd.log_thr * n;
            acc.lin_thr += bd.lin_thr * n;
            acc.delay_term += bd.delay_term * n;
            acc.loss_term += bd.loss_term * n;
            acc.total += bd.total * n;
        }

        let val_total = match &val_set {
            Some(v) => Some(total_loss(&params, &spec, v, &consts, &weights)?.total),
            None => None,
        };
        let cal_rmse = calibration_rmse(&params, &spec, &cal, &consts)?;
        if !cal_rmse.is_finite() {
            return Err(Error::NonFiniteLoss {
                context: format!("calibration, seed {}, epoch {epoch}", cfg.seed),
            });
        }
        if let Some(s) = sched.as_mut() {
            if s.step(cal_rmse) {
                adam.lr = s.lr;
                log::info!("epoch {epoch}: learning rate reduced to {:.2e}", s.lr);
            }
        }
        let improved = best.as_ref().is_none_or(|(b, _)| cal_rmse < *b);
        if improved {
            let mut extra = serde_json::Map::new();
            extra.insert("round".into(), round.into());
            extra.insert("feature_layout".into(), FEATURE_LAYOUT_VERSION.into());
            let ck = ModelCheckpoint::new(
                spec.clone(),
                params.clone(),
                Some(adam.clone()),
                Provenance {
                    seed: cfg.seed,
                    epoch,
                    metric: Some(cal_rmse),
                    extra,
                },
            );
            best = Some((cal_rmse, ck));
            since_best = 0;
        } else {
            since_best += 1;
        }
        log::info!("epoch {epoch} round {round} train {:.5} cal_rmse {cal_rmse:.4}", acc.total / train.len() as f64);
        log.push(EpochRecord {
            epoch,
            round,
            train: mean_breakdown(&acc, train.len()),
            val_total,
            calibration_rmse: cal_rmse,
            improved,
        });
        if since_best >= tc.patience.max(1) {
            break;
        }
    }
    let (_, checkpoint) = best.ok_or_else(|| Error::invalid("max_epochs must be at least 1"))?;
    Ok(TrainOutcome { checkpoint, log })
}

/// Per-window outputs starting at window `first_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSeries<T> {
    pub first_t: usize,
    pub rows: Vec<T>,
}

fn trace_samples(ck: &ModelCheckpoint, trace: &Trace) -> Result<SampleSet> {
    ck.expect_kind(&[ModelKind::TgdinMlp])?;
    let k = ck.spec.seq_len;
    if trace.len() < k {
        return Err(Error::invalid(format!("trace has {} windows, model needs at least {k}", trace.len())));
    }
    if trace.n_users() != ck.spec.output_dim || step_dim(trace.n_users()) != ck.spec.step_dim {
        return Err(Error::invalid("trace user count does not match the checkpoint"));
    }
    SampleSet::from_traces([trace], k)
}

/// Demand estimates for every window with a full history.
pub fn infer_demand(ck: &ModelCheckpoint, trace: &Trace) -> Result<WindowSeries<Vec<f64>>> {
    let s = trace_samples(ck, trace)?;
    let d = models::predict(&ck.params, &ck.spec, &s.x)?;
    Ok(WindowSeries {
        first_t: s.k - 1,
        rows: (0..d.rows).map(|r| d.row(r).to_vec()).collect(),
    })
}

/// Theory-layer observables from the inferred demand and the observed
/// buffers and capacity.
pub fn predict_observables(ck: &ModelCheckpoint, trace: &Trace, consts: &SimConstants) -> Result<WindowSeries<TheoryOutput>> {
    let s = trace_samples(ck, trace)?;
    let d = models::predict(&ck.params, &ck.spec, &s.x)?;
    Ok(WindowSeries {
        first_t: s.k - 1,
        rows: theory_rows(&d, &s, consts)?,
    })
}
