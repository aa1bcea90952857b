//! Direct throughput predictors: single-capacity training, target-side
//! fine-tuning and prediction. No theory layer is involved anywhere here.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{BaselineSection, CalibrationSampling, Config};
use crate::error::{Error, Result};
use crate::kernel::adam::{adam_step, clip_grad_norm, AdamState};
use crate::kernel::checkpoint::{ModelCheckpoint, Provenance};
use crate::kernel::mat::Mat;
use crate::kernel::models::{self, ModelKind, ModelSpec};
use crate::kernel::params::ParamVector;
use crate::regimegen::all_scenarios;
use crate::rng::{derive_stream, mix, streams};
use crate::trace::{scenario_name, Trace};
use crate::training::{split_indices, step_dim, throughput_loss, SampleSet, WindowSeries, SMOOTH_L1_BETA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    Full,
    LastLayer,
}

impl FinetuneMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::LastLayer => "last",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSpec {
    pub budget_frac: f64,
    pub mode: FinetuneMode,
    pub target_capacity_mbps: f64,
    pub source_id: String,
}

impl FinetuneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget_frac >= 0.0 && self.budget_frac < 1.0) {
            return Err(Error::invalid(format!("budget_frac {} must be in [0, 1)", self.budget_frac)));
        }
        Ok(())
    }
}

/// `ReduceLROnPlateau` in relative-threshold `min` mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            threshold: 1e-4,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feed one validation metric; returns whether the rate was reduced.
    pub fn step(&mut self, metric: f64) -> bool {
        if metric < self.best * (1.0 - self.threshold) {
            self.best = metric;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}

pub fn direct_spec(kind: ModelKind, cfg: &Config) -> Result<ModelSpec> {
    let b = &cfg.baselines;
    let (sd, k, u) = (step_dim(cfg.sim.n_users), cfg.k(), cfg.sim.n_users);
    let spec = match kind {
        ModelKind::GruLstm => ModelSpec::gru_lstm(sd, k, b.gru_hidden, b.gru_head, u),
        ModelKind::AttnDirect => ModelSpec::attn_direct(sd, k, b.attn_proj, b.attn_heads, b.attn_ff, u),
        ModelKind::TgdinMlp => {
            return Err(Error::KindMismatch {
                expected: "gru_lstm|attn_direct".into(),
                found: kind.name().into(),
            })
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn direct_loss_grad(params: &ParamVector, spec: &ModelSpec, batch: &SampleSet, lambda_lin: f64) -> Result<(f64, Vec<f64>)> {
    let target = Arc::new(batch.throughput.clone());
    models::model_gradient(params, spec, &batch.x, |tape, y| {
        let log = tape.mse_log1p(y, target.clone());
        let lin = tape.smooth_l1(y, target, SMOOTH_L1_BETA);
        let lin = tape.scale(lin, lambda_lin);
        Ok(tape.add(log, lin))
    })
}

/// Throughput loss of the model on a whole sample set, without gradients.
pub fn direct_eval_loss(params: &ParamVector, spec: &ModelSpec, set: &SampleSet, lambda_lin: f64) -> Result<f64> {
    let y = models::predict(params, spec, &set.x)?;
    Ok(throughput_loss(&y.data, &set.throughput.data, lambda_lin)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectEpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct DirectOutcome {
    pub checkpoint: ModelCheckpoint,
    pub log: Vec<DirectEpochRecord>,
}

struct Loop<'a> {
    spec: &'a ModelSpec,
    lambda_lin: f64,
    batch: usize,
    max_epochs: usize,
    patience: usize,
    clip: Option<f64>,
    plateau: Option<(f64, usize)>,
    seed: u64,
    mask: Option<Vec<bool>>,
}

/// Shared mini-batch loop with best-validation selection.
fn run_loop(
    lp: &Loop<'_>,
    mut params: ParamVector,
    mut adam: AdamState,
    train: &SampleSet,
    val: &SampleSet,
) -> Result<(ParamVector, AdamState, usize, f64, Vec<DirectEpochRecord>)> {
    let mut sched = lp.plateau.map(|(f, p)| PlateauScheduler::new(adam.lr, f, p));
    let mut best = (params.clone(), adam.clone(), 0usize, f64::INFINITY);
    let mut since = 0usize;
    let mut log = Vec::new();
    let eval_set = if val.is_empty() { train } else { val };
    for epoch in 0..lp.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        derive_stream(mix(lp.seed, epoch as u64), streams::SHUFFLE).shuffle(&mut order);
        let mut acc = 0.0;
        for (b, rows) in order.chunks(lp.batch.max(1)).enumerate() {
            let batch = train.select(rows);
            let (loss, mut grad) = direct_loss_grad(&params, lp.spec, &batch, lp.lambda_lin).map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                    context: format!("seed {}, epoch {epoch}, batch {b}", lp.seed),
                },
                other => other,
            })?;
            if let Some(c) = lp.clip {
                clip_grad_norm(&mut grad, c);
            }
            adam_step(&mut params.values, &grad, &mut adam, lp.mask.as_deref())?;
            acc += loss * rows.len() as f64;
        }
        let val_loss = direct_eval_loss(&params, lp.spec, eval_set, lp.lambda_lin)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                context: format!("validation, seed {}, epoch {epoch}", lp.seed),
            });
        }
        let improved = val_loss < best.3;
        if improved {
            best = (params.clone(), adam.clone(), epoch, val_loss);
            since = 0;
        } else {
            since += 1;
        }
        log.push(DirectEpochRecord {
            epoch,
            train_loss: acc / train.len().max(1) as f64,
            val_loss,
            lr: adam.lr,
            improved,
        });
        log::info!("epoch {epoch} train {:.5} val {val_loss:.5} lr {:.2e}", acc / train.len().max(1) as f64, adam.lr);
        if let Some(s) = sched.as_mut() {
            s.step(val_loss);
            adam.lr = s.lr;
        }
        if since >= lp.patience.max(1) {
            break;
        }
    }
    Ok((best.0, best.1, best.2, best.3, log))
}

/// Train a direct predictor on a single-capacity corpus.
pub fn train_direct(kind: ModelKind, corpus: &[Trace], cfg: &Config, seed: u64) -> Result<DirectOutcome> {
    let spec = direct_spec(kind, cfg)?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("baseline corpus is empty".into()));
    }
    let caps: Vec<f64> = corpus.iter().flat_map(|t| t.windows.iter().map(|w| w.capacity_mbps)).collect();
    let (lo, hi) = caps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), c| (a.min(*c), b.max(*c)));
    if lo > 0.0 && hi / lo > 1.5 + 1e-9 {
        return Err(Error::invalid(format!(
            "baseline corpus spans capacities {lo:.1}..{hi:.1}; expected a single capacity band"
        )));
    }
    let b: &BaselineSection = &cfg.baselines;
    let k = cfg.k();
    let frac = b.val_frac;
    let [tr, va, _] = split_indices(corpus.len(), [1.0 - frac, frac, 0.0], &mut derive_stream(seed, streams::SPLIT));
    let train = SampleSet::from_traces(tr.iter().map(|i| &corpus[*i]), k)?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus("no training windows in the baseline corpus".into()));
    }
    let val = SampleSet::from_traces(va.iter().map(|i| &corpus[*i]), k)?;

    let params = spec.init_params(&mut derive_stream(seed, streams::INIT));
    let adam = AdamState::new(params.len(), b.lr, 0.0);
    let lp = Loop {
        spec: &spec,
        lambda_lin: b.lambda_lin,
        batch: b.batch,
        max_epochs: b.max_epochs,
        patience: b.patience,
        clip: Some(b.clip_norm),
        plateau: Some((b.plateau_factor, b.plateau_patience)),
        seed,
        mask: None,
    };
    let (params, adam, epoch, metric, log) = run_loop(&lp, params, adam, &train, &val)?;
    let mut extra = serde_json::Map::new();
    if let Some(c) = corpus[0].meta.as_ref().map(|m| m.capacity_base_mbps) {
        extra.insert("source_capacity_mbps".into(), c.into());
    }
    Ok(DirectOutcome {
        checkpoint: ModelCheckpoint::new(
            spec,
            params,
            Some(adam),
            Provenance {
                seed,
                epoch,
                metric: Some(metric),
                extra,
            },
        ),
        log,
    })
}

/// Number of calibration windows a trace contributes.
pub fn budget_windows(n_valid: usize, budget_frac: f64) -> usize {
    ((budget_frac * n_valid as f64).ceil() as usize).min(n_valid)
}

/// Valid window indices (`t >= K-1`) a trace contributes to calibration.
pub fn calibration_windows(trace_len: usize, k: usize, budget_frac: f64, sampling: CalibrationSampling, seed: u64) -> Vec<usize> {
    let first = k.saturating_sub(1);
    let n_valid = trace_len.saturating_sub(first);
    let m = budget_windows(n_valid, budget_frac);
    match sampling {
        CalibrationSampling::Prefix => (first..first + m).collect(),
        CalibrationSampling::Uniform => {
            let mut idx: Vec<usize> = (first..trace_len).collect();
            derive_stream(seed, streams::CALIBRATION).shuffle(&mut idx);
            idx.truncate(m);
            idx.sort_unstable();
            idx
        }
    }
}

/// Scenarios from the drift grid with no trace among `traces`.
pub fn missing_scenarios(traces: &[Trace]) -> Vec<String> {
    all_scenarios()
        .into_iter()
        .map(|(f, u)| scenario_name(f, u))
        .filter(|name| !traces.iter().any(|t| t.scenario().as_deref() == Some(name.as_str())))
        .collect()
}

/// Calibration rows for every target trace, in trace order.
pub fn calibration_samples(targets: &[Trace], k: usize, budget_frac: f64, sampling: CalibrationSampling) -> Result<SampleSet> {
    let all = SampleSet::from_traces(targets, k)?;
    let mut rows = Vec::new();
    for (row, (ti, t)) in all.origin.iter().enumerate() {
        let keep = calibration_windows(targets[*ti].len(), k, budget_frac, sampling, targets[*ti].seed);
        if keep.binary_search(t).is_ok() {
            rows.push(row);
        }
    }
    Ok(all.select(&rows))
}

/// Adapt a direct predictor on a small calibration slice of the target traces.
pub fn finetune_direct(ck: &ModelCheckpoint, ft: &FinetuneSpec, targets: &[Trace], cfg: &Config) -> Result<ModelCheckpoint> {
    ck.expect_kind(&[ModelKind::GruLstm, ModelKind::AttnDirect])?;
    ft.validate()?;
    let missing = missing_scenarios(targets);
    if !missing.is_empty() {
        return Err(Error::MissingScenarios(missing));
    }
    let b = &cfg.baselines;
    let k = ck.spec.seq_len;
    let cal = calibration_samples(targets, k, ft.budget_frac, b.finetune_sampling)?;

    let mut out = ck.clone();
    out.provenance
        .extra
        .insert("finetune".into(), serde_json::to_value(ft)?);
    if cal.is_empty() {
        return Ok(out);
    }

    let seed = mix(cfg.seed, streams::FINETUNE);
    let mut rows: Vec<usize> = (0..cal.len()).collect();
    derive_stream(seed, streams::SPLIT).shuffle(&mut rows);
    let n_val = ((b.finetune_val_frac * rows.len() as f64).round() as usize).min(rows.len() - 1);
    let train_rows = rows.split_off(n_val);
    let val = cal.select(&rows);
    let train = cal.select(&train_rows);

    let mask = match ft.mode {
        FinetuneMode::Full => None,
        FinetuneMode::LastLayer => Some(ck.params.mask_prefix(ck.spec.head_prefix())),
    };
    let lp = Loop {
        spec: &ck.spec,
        lambda_lin: b.lambda_lin,
        batch: b.batch,
        max_epochs: b.finetune_max_epochs,
        patience: b.finetune_patience,
        clip: Some(b.clip_norm),
        plateau: None,
        seed,
        mask,
    };
    let adam = AdamState::new(ck.params.len(), b.finetune_lr, 0.0);
    let (params, adam, epoch, metric, _) = run_loop(&lp, ck.params.clone(), adam, &train, &val)?;
    out.params = params;
    out.adam = Some(adam);
    out.provenance.epoch = epoch;
    out.provenance.metric = Some(metric);
    Ok(out)
}

/// Non-negative per-user throughput for every window with a full history.
pub fn predict_direct(ck: &ModelCheckpoint, trace: &Trace) -> Result<WindowSeries<Vec<f64>>> {
    ck.expect_kind(&[ModelKind::GruLstm, ModelKind::AttnDirect])?;
    let k = ck.spec.seq_len;
    if trace.len() < k {
        return Err(Error::invalid(format!("trace has {} windows, model needs at least {k}", trace.len())));
    }
    if trace.n_users() != ck.spec.output_dim {
        return Err(Error::invalid("trace user count does not match the checkpoint"));
    }
    let s = SampleSet::from_traces([trace], k)?;
    let y: Mat = models::predict(&ck.params, &ck.spec, &s.x)?;
    Ok(WindowSeries {
        first_t: k - 1,
        rows: (0..y.rows).map(|r| y.row(r).to_vec()).collect(),
    })
}
