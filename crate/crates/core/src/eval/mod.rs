//! Cross-capacity and fine-tuning studies plus report emission.

pub mod metrics;
pub mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::{calibration_windows, finetune_direct, predict_direct, FinetuneMode, FinetuneSpec};
use crate::config::{CalibrationSampling, Config, SimConstants};
use crate::error::{Error, Result};
use crate::kernel::checkpoint::ModelCheckpoint;
use crate::kernel::models::ModelKind;
use crate::trace::Trace;
use crate::training::predict_observables;

pub use metrics::{pearson_r, relative_mae, rmse};
pub use report::{emit_report, read_table_csv};

/// Scenario label used for the per-capacity pooled rows.
pub const POOLED: &str = "pooled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub model: String,
    pub source: String,
    pub target_capacity_mbps: f64,
    pub scenario: String,
    pub rmse_mbps: f64,
    pub rel_mae: Option<f64>,
    /// Mean of per-(user, trace) correlations that were defined.
    pub pearson_r: Option<f64>,
    /// Number of (user, trace) series whose correlation was undefined.
    pub pearson_undefined: usize,
    /// Pooled user-window pairs.
    pub n_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub study: String,
    pub records: Vec<MetricRecord>,
}

impl MetricTable {
    pub fn get(&self, model: &str, capacity: f64, scenario: &str) -> Option<&MetricRecord> {
        self.records
            .iter()
            .find(|r| r.model == model && r.target_capacity_mbps == capacity && r.scenario == scenario)
    }
}

/// A checkpoint entering a study, with its display id and training condition.
#[derive(Debug, Clone)]
pub struct EvalModel {
    pub id: String,
    pub source: String,
    pub checkpoint: ModelCheckpoint,
}

/// Predicted per-user throughput rows starting at window `K-1`.
pub fn predict_throughput(ck: &ModelCheckpoint, trace: &Trace, consts: &SimConstants) -> Result<(usize, Vec<Vec<f64>>)> {
    match ck.kind() {
        ModelKind::TgdinMlp => {
            let s = predict_observables(ck, trace, consts)?;
            Ok((s.first_t, s.rows.into_iter().map(|o| o.throughput_mbps).collect()))
        }
        _ => {
            let s = predict_direct(ck, trace)?;
            Ok((s.first_t, s.rows))
        }
    }
}

/// Nominal capacity of a trace: the generator base if known, else the mean.
pub fn trace_capacity(trace: &Trace) -> f64 {
    match &trace.meta {
        Some(m) => m.capacity_base_mbps,
        None => trace.windows.iter().map(|w| w.capacity_mbps).sum::<f64>() / trace.len().max(1) as f64,
    }
}

pub fn trace_scenario(trace: &Trace) -> String {
    trace.scenario().unwrap_or_else(|| "none".into())
}

#[derive(Default)]
struct Cell {
    pred: Vec<f64>,
    truth: Vec<f64>,
    pearson: Vec<f64>,
    undefined: usize,
}

impl Cell {
    fn absorb(&mut self, other: &Cell) {
        self.pred.extend_from_slice(&other.pred);
        self.truth.extend_from_slice(&other.truth);
        self.pearson.extend_from_slice(&other.pearson);
        self.undefined += other.undefined;
    }

    fn record(&self, model: &str, source: &str, capacity: f64, scenario: &str) -> Result<MetricRecord> {
        Ok(MetricRecord {
            model: model.to_string(),
            source: source.to_string(),
            target_capacity_mbps: capacity,
            scenario: scenario.to_string(),
            rmse_mbps: rmse(&self.pred, &self.truth)?,
            rel_mae: relative_mae(&self.pred, &self.truth)?,
            pearson_r: (!self.pearson.is_empty()).then(|| self.pearson.iter().sum::<f64>() / self.pearson.len() as f64),
            pearson_undefined: self.undefined,
            n_windows: self.pred.len(),
        })
    }
}

/// Series for one trace, skipping windows in `exclude` (sorted).
fn trace_cell(ck: &ModelCheckpoint, trace: &Trace, consts: &SimConstants, exclude: &[usize]) -> Result<Cell> {
    let (first, rows) = predict_throughput(ck, trace, consts)?;
    let mut cell = Cell::default();
    for u in 0..trace.n_users() {
        let mut p = Vec::with_capacity(rows.len());
        let mut t = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let w = first + i;
            if exclude.binary_search(&w).is_ok() {
                continue;
            }
            p.push(row[u]);
            t.push(trace.windows[w].users[u].throughput_mbps);
        }
        if p.is_empty() {
            continue;
        }
        match pearson_r(&p, &t)? {
            Some(r) => cell.pearson.push(r),
            None => cell.undefined += 1,
        }
        cell.pred.extend(p);
        cell.truth.extend(t);
    }
    Ok(cell)
}

/// Canonical evaluation order: capacity, scenario, seed.
fn ordered(traces: &[Trace]) -> Vec<&Trace> {
    let mut v: Vec<&Trace> = traces.iter().collect();
    v.sort_by(|a, b| {
        trace_capacity(a)
            .total_cmp(&trace_capacity(b))
            .then_with(|| trace_scenario(a).cmp(&trace_scenario(b)))
            .then_with(|| a.seed.cmp(&b.seed))
    });
    v
}

type CellKey = (u64, String);

fn cap_key(c: f64) -> u64 {
    c.to_bits()
}

/// Per-scenario and pooled records for one model on `traces`.
fn evaluate_model(
    model: &EvalModel,
    traces: &[&Trace],
    consts: &SimConstants,
    exclude: impl Fn(&Trace) -> Vec<usize>,
) -> Result<Vec<MetricRecord>> {
    let mut cells: BTreeMap<CellKey, Cell> = BTreeMap::new();
    let mut caps: BTreeMap<u64, f64> = BTreeMap::new();
    for tr in traces {
        let c = trace_capacity(tr);
        caps.insert(cap_key(c), c);
        let cell = trace_cell(&model.checkpoint, tr, consts, &exclude(tr))?;
        cells.entry((cap_key(c), trace_scenario(tr))).or_default().absorb(&cell);
    }
    let mut caps: Vec<f64> = caps.into_values().collect();
    caps.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for c in caps {
        let mut pooled = Cell::default();
        for ((ck, scen), cell) in cells.range((cap_key(c), String::new())..) {
            if *ck != cap_key(c) {
                break;
            }
            if cell.pred.is_empty() {
                continue;
            }
            out.push(cell.record(&model.id, &model.source, c, scen)?);
            pooled.absorb(cell);
        }
        if !pooled.pred.is_empty() {
            out.push(pooled.record(&model.id, &model.source, c, POOLED)?);
        }
    }
    Ok(out)
}

/// Every model on every trace without any target-side adaptation.
pub fn run_cross_capacity(models: &[EvalModel], traces: &[Trace], consts: &SimConstants) -> Result<MetricTable> {
    if traces.is_empty() {
        return Err(Error::EmptyCorpus("no evaluation traces".into()));
    }
    let ordered = ordered(traces);
    let mut records = Vec::new();
    for m in models {
        records.extend(evaluate_model(m, &ordered, consts, |_| Vec::new())?);
    }
    Ok(MetricTable {
        study: "cross_capacity".into(),
        records,
    })
}

fn budget_label(b: f64) -> String {
    let pct = b * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round())
    } else {
        format!("{pct}%")
    }
}

/// Model id for an adapted baseline, e.g. `gru_lstm(60)+5%full`.
pub fn adapted_id(base: &str, budget: f64, mode: FinetuneMode) -> String {
    format!("{base}+{}{}", budget_label(budget), mode.name())
}

/// Baselines adapted at each target capacity versus their unadapted selves
/// and the demand model. Adapted rows exclude each trace's calibration windows.
pub fn run_finetune_study(
    sources: &[EvalModel],
    tgdin: Option<&EvalModel>,
    traces: &[Trace],
    targets_mbps: &[f64],
    budgets: &[f64],
    modes: &[FinetuneMode],
    cfg: &Config,
) -> Result<MetricTable> {
    let consts = cfg.consts();
    let sampling: CalibrationSampling = cfg.baselines.finetune_sampling;
    let mut records = Vec::new();
    for &target in targets_mbps {
        let at: Vec<Trace> = traces
            .iter()
            .filter(|t| trace_capacity(t) == target)
            .cloned()
            .collect();
        if at.is_empty() {
            log::warn!("no traces at target capacity {target}; skipping");
            continue;
        }
        let ordered_at = ordered(&at);
        if let Some(m) = tgdin {
            records.extend(evaluate_model(m, &ordered_at, &consts, |_| Vec::new())?);
        }
        for src in sources {
            records.extend(evaluate_model(src, &ordered_at, &consts, |_| Vec::new())?);
            for &budget in budgets {
                for &mode in modes {
                    let spec = FinetuneSpec {
                        budget_frac: budget,
                        mode,
                        target_capacity_mbps: target,
                        source_id: src.id.clone(),
                    };
                    let ck = finetune_direct(&src.checkpoint, &spec, &at, cfg)?;
                    let adapted = EvalModel {
                        id: adapted_id(&src.id, budget, mode),
                        source: src.source.clone(),
                        checkpoint: ck,
                    };
                    let k = src.checkpoint.spec.seq_len;
                    records.extend(evaluate_model(&adapted, &ordered_at, &consts, |t| {
                        calibration_windows(t.len(), k, budget, sampling, t.seed)
                    })?);
                }
            }
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus("no traces at any fine-tuning target capacity".into()));
    }
    Ok(MetricTable {
        study: "finetune".into(),
        records,
    })
}
