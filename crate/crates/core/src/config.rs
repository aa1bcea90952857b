//! Simulation constants and the run configuration document.
//!
//! The configuration is a single JSON document with the sections `sim`,
//! `regimes`, `train`, `baselines`, `eval` and `paths`, plus a top-level
//! `seed`. Every key has a default, so `{}` is a complete configuration.
//! Unknown keys are rejected in strict mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable that overrides the root seed.
pub const SEED_ENV: &str = "TGDIN_SEED";

/// Physical constants of the fluid-window model. Rates in Mbps, volumes in
/// megabits, time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConstants {
    pub dt_s: f64,
    pub n_users: usize,
    pub b_max_mb: f64,
    pub tau_max_s: f64,
    pub loss_max_frac: f64,
    pub a_min_mbps: f64,
}

impl Default for SimConstants {
    fn default() -> Self {
        Self {
            dt_s: 0.2,
            n_users: 2,
            b_max_mb: 5.0,
            tau_max_s: 2.0,
            loss_max_frac: 0.5,
            a_min_mbps: 0.01,
        }
    }
}

impl SimConstants {
    pub fn validate(&self) -> Result<()> {
        positive("sim.dt_s", "dt_s", self.dt_s)?;
        if self.n_users < 2 {
            return Err(cfg_err("sim.n_users", "n_users must be at least 2"));
        }
        positive("sim.b_max_mb", "b_max_mb", self.b_max_mb)?;
        positive("sim.tau_max_s", "tau_max_s", self.tau_max_s)?;
        if !(self.loss_max_frac > 0.0 && self.loss_max_frac <= 1.0) {
            return Err(cfg_err(
                "sim.loss_max_frac",
                "loss_max_frac must lie in (0, 1]",
            ));
        }
        positive("sim.a_min_mbps", "a_min_mbps", self.a_min_mbps)?;
        Ok(())
    }
}

/// The `sim` section: constants plus the observation history length K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt_s: f64,
    pub n_users: usize,
    pub b_max_mb: f64,
    pub tau_max_s: f64,
    pub loss_max_frac: f64,
    pub a_min_mbps: f64,
    pub k: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let c = SimConstants::default();
        Self {
            dt_s: c.dt_s,
            n_users: c.n_users,
            b_max_mb: c.b_max_mb,
            tau_max_s: c.tau_max_s,
            loss_max_frac: c.loss_max_frac,
            a_min_mbps: c.a_min_mbps,
            k: 5,
        }
    }
}

impl SimSection {
    pub fn consts(&self) -> SimConstants {
        SimConstants {
            dt_s: self.dt_s,
            n_users: self.n_users,
            b_max_mb: self.b_max_mb,
            tau_max_s: self.tau_max_s,
            loss_max_frac: self.loss_max_frac,
            a_min_mbps: self.a_min_mbps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeSection {
    pub capacity_range_mbps: [f64; 2],
    pub demand_range_mbps: [f64; 2],
    pub trace_len: usize,
    /// Per-window capacity increment bound, as a fraction of the base.
    pub capacity_step_frac: f64,
    /// Capacity clip band half-width, as a fraction of the base.
    pub capacity_band_frac: f64,
    pub ar_coef: f64,
    pub ar_sigma_frac: f64,
    pub on_off_period: [u32; 2],
    pub on_off_duty: [f64; 2],
    pub test_capacities_mbps: Vec<f64>,
    pub grid_replicates: usize,
    pub grid_seed: u64,
    pub calibration_bands: usize,
    pub calibration_per_cell: usize,
    pub calibration_seed: u64,
}

impl Default for RegimeSection {
    fn default() -> Self {
        Self {
            capacity_range_mbps: [20.0, 600.0],
            demand_range_mbps: [1.0, 80.0],
            trace_len: 600,
            capacity_step_frac: 0.005,
            capacity_band_frac: 0.2,
            ar_coef: 0.9,
            ar_sigma_frac: 0.1,
            on_off_period: [5, 50],
            on_off_duty: [0.2, 0.8],
            test_capacities_mbps: vec![20.0, 40.0, 60.0, 120.0, 200.0, 280.0, 360.0],
            grid_replicates: 3,
            grid_seed: 0x5EED_0001,
            calibration_bands: 8,
            calibration_per_cell: 1,
            calibration_seed: 0x5EED_0002,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub traces_per_round: usize,
    pub refresh_every: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub swap_prob: f64,
    pub lambda_lin: f64,
    pub lambda_delay: f64,
    pub lambda_loss: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Multiply the learning rate by this when calibration RMSE stalls for
    /// `plateau_patience` epochs. 1 disables the schedule.
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Train / validation / test fractions at trace level.
    pub split: [f64; 3],
    pub hidden: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            traces_per_round: 200,
            refresh_every: 30,
            batch: 256,
            lr: 1e-4,
            weight_decay: 1e-5,
            swap_prob: 0.5,
            lambda_lin: 0.01,
            lambda_delay: 0.1,
            lambda_loss: 0.1,
            max_epochs: 300,
            patience: 20,
            plateau_factor: 1.0,
            plateau_patience: 5,
            split: [0.8, 0.1, 0.1],
            hidden: vec![128, 128, 128],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSampling {
    Prefix,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub corpus_traces: usize,
    pub lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub clip_norm: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_frac: f64,
    pub lambda_lin: f64,
    pub gru_hidden: usize,
    pub gru_head: usize,
    pub attn_proj: usize,
    pub attn_heads: usize,
    pub attn_ff: usize,
    pub finetune_lr: f64,
    pub finetune_max_epochs: usize,
    pub finetune_patience: usize,
    pub finetune_val_frac: f64,
    pub finetune_sampling: CalibrationSampling,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            corpus_traces: 200,
            lr: 1e-3,
            plateau_factor: 0.5,
            plateau_patience: 3,
            clip_norm: 5.0,
            batch: 256,
            max_epochs: 60,
            patience: 10,
            val_frac: 0.1,
            lambda_lin: 0.01,
            gru_hidden: 64,
            gru_head: 64,
            attn_proj: 64,
            attn_heads: 4,
            attn_ff: 128,
            finetune_lr: 1e-4,
            finetune_max_epochs: 20,
            finetune_patience: 5,
            finetune_val_frac: 0.1,
            finetune_sampling: CalibrationSampling::Prefix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub source_capacities_mbps: Vec<f64>,
    pub finetune_source_mbps: f64,
    pub finetune_targets_mbps: Vec<f64>,
    pub budgets: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            source_capacities_mbps: vec![20.0, 40.0, 60.0],
            finetune_source_mbps: 60.0,
            finetune_targets_mbps: vec![20.0, 40.0, 120.0, 200.0, 280.0, 360.0],
            budgets: vec![0.01, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    pub out_dir: String,
}

impl Default for PathSection {
    fn default() -> Self {
        Self {
            out_dir: "runs".to_string(),
        }
    }
}

/// Fully defaulted and range-checked configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub sim: SimSection,
    pub regimes: RegimeSection,
    pub train: TrainSection,
    pub baselines: BaselineSection,
    pub eval: EvalSection,
    pub paths: PathSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            sim: SimSection::default(),
            regimes: RegimeSection::default(),
            train: TrainSection::default(),
            baselines: BaselineSection::default(),
            eval: EvalSection::default(),
            paths: PathSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Unknown keys are errors.
    Strict,
    /// Unknown keys are ignored.
    Lax,
}

/// Parse, default and range-check a configuration document.
pub fn validate_config(raw: &str, mode: ParseMode) -> Result<Config> {
    let raw = if raw.trim().is_empty() { "{}" } else { raw };
    let cfg: Config = match mode {
        ParseMode::Strict => serde_json::from_str(raw).map_err(json_to_cfg_err)?,
        ParseMode::Lax => {
            let value: serde_json::Value = serde_json::from_str(raw).map_err(json_to_cfg_err)?;
            lax_from_value(value)?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

impl Config {
    pub fn consts(&self) -> SimConstants {
        self.sim.consts()
    }

    pub fn k(&self) -> usize {
        self.sim.k
    }

    /// Apply `TGDIN_SEED` if it is set.
    pub fn with_env_overrides(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| cfg_err("seed", &format!("{SEED_ENV}={v} is not an integer")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.consts().validate()?;
        if self.sim.k < 1 {
            return Err(cfg_err("sim.k", "k must be at least 1"));
        }

        let r = &self.regimes;
        range("regimes.capacity_range_mbps", r.capacity_range_mbps)?;
        if r.capacity_range_mbps[0] <= 0.0 {
            return Err(cfg_err("regimes.capacity_range_mbps", "capacities must be positive"));
        }
        range("regimes.demand_range_mbps", r.demand_range_mbps)?;
        if r.demand_range_mbps[0] < 0.0 {
            return Err(cfg_err("regimes.demand_range_mbps", "demand must be non-negative"));
        }
        if r.trace_len < 2 * self.sim.k {
            return Err(cfg_err("regimes.trace_len", "trace_len must be at least 2*k"));
        }
        unit_open("regimes.capacity_step_frac", r.capacity_step_frac)?;
        unit_open("regimes.capacity_band_frac", r.capacity_band_frac)?;
        if !(0.0..1.0).contains(&r.ar_coef) {
            return Err(cfg_err("regimes.ar_coef", "ar_coef must lie in [0, 1)"));
        }
        if !(r.ar_sigma_frac >= 0.0) {
            return Err(cfg_err("regimes.ar_sigma_frac", "ar_sigma_frac must be non-negative"));
        }
        if r.on_off_period[0] < 2 || r.on_off_period[0] > r.on_off_period[1] {
            return Err(cfg_err(
                "regimes.on_off_period",
                "empty range (need 2 <= lo <= hi)",
            ));
        }
        range("regimes.on_off_duty", r.on_off_duty)?;
        if r.on_off_duty[0] <= 0.0 || r.on_off_duty[1] >= 1.0 {
            return Err(cfg_err("regimes.on_off_duty", "duty must lie in (0, 1)"));
        }
        if r.test_capacities_mbps.is_empty() || r.test_capacities_mbps.iter().any(|c| !(*c > 0.0)) {
            return Err(cfg_err(
                "regimes.test_capacities_mbps",
                "need at least one positive capacity",
            ));
        }
        count("regimes.grid_replicates", r.grid_replicates)?;
        count("regimes.calibration_bands", r.calibration_bands)?;
        count("regimes.calibration_per_cell", r.calibration_per_cell)?;

        let t = &self.train;
        count("train.traces_per_round", t.traces_per_round)?;
        count("train.refresh_every", t.refresh_every)?;
        count("train.batch", t.batch)?;
        positive("train.lr", "lr", t.lr)?;
        non_negative("train.weight_decay", t.weight_decay)?;
        probability("train.swap_prob", t.swap_prob)?;
        non_negative("train.lambda_lin", t.lambda_lin)?;
        non_negative("train.lambda_delay", t.lambda_delay)?;
        non_negative("train.lambda_loss", t.lambda_loss)?;
        count("train.max_epochs", t.max_epochs)?;
        count("train.patience", t.patience)?;
        if !(t.plateau_factor > 0.0 && t.plateau_factor <= 1.0) {
            return Err(cfg_err("train.plateau_factor", "must be in (0, 1]"));
        }
        count("train.plateau_patience", t.plateau_patience)?;
        if t.split.iter().any(|f| !(*f >= 0.0)) || (t.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(cfg_err("train.split", "fractions must be non-negative and sum to 1"));
        }
        if t.split[0] <= 0.0 {
            return Err(cfg_err("train.split", "train fraction must be positive"));
        }
        if t.hidden.len() != 3 || t.hidden.contains(&0) {
            return Err(cfg_err("train.hidden", "exactly three positive hidden widths required"));
        }

        let b = &self.baselines;
        count("baselines.corpus_traces", b.corpus_traces)?;
        positive("baselines.lr", "lr", b.lr)?;
        unit_open("baselines.plateau_factor", b.plateau_factor)?;
        positive("baselines.clip_norm", "clip_norm", b.clip_norm)?;
        count("baselines.batch", b.batch)?;
        count("baselines.max_epochs", b.max_epochs)?;
        count("baselines.patience", b.patience)?;
        unit_open("baselines.val_frac", b.val_frac)?;
        non_negative("baselines.lambda_lin", b.lambda_lin)?;
        count("baselines.gru_hidden", b.gru_hidden)?;
        count("baselines.gru_head", b.gru_head)?;
        count("baselines.attn_proj", b.attn_proj)?;
        count("baselines.attn_heads", b.attn_heads)?;
        count("baselines.attn_ff", b.attn_ff)?;
        if b.attn_proj % b.attn_heads != 0 {
            return Err(cfg_err(
                "baselines.attn_heads",
                "attn_proj must be divisible by attn_heads",
            ));
        }
        positive("baselines.finetune_lr", "finetune_lr", b.finetune_lr)?;
        count("baselines.finetune_patience", b.finetune_patience)?;
        unit_open("baselines.finetune_val_frac", b.finetune_val_frac)?;

        let e = &self.eval;
        for (i, budget) in e.budgets.iter().enumerate() {
            if !(*budget > 0.0 && *budget < 1.0) {
                return Err(cfg_err(&format!("eval.budgets[{i}]"), "budget must lie in (0, 1)"));
            }
        }
        positive("eval.finetune_source_mbps", "finetune_source_mbps", e.finetune_source_mbps)?;
        Ok(())
    }
}

fn lax_from_value(value: serde_json::Value) -> Result<Config> {
    // Round-trip through a known-key projection so unknown keys drop out.
    let defaults = serde_json::to_value(Config::default())?;
    let pruned = prune_to(&defaults, value);
    serde_json::from_value(pruned).map_err(json_to_cfg_err)
}

fn prune_to(template: &serde_json::Value, value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match (template, value) {
        (Value::Object(t), Value::Object(v)) => Value::Object(
            v.into_iter()
                .filter_map(|(k, val)| t.get(&k).map(|tv| (k, prune_to(tv, val))))
                .collect(),
        ),
        (_, v) => v,
    }
}

fn json_to_cfg_err(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let key = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".to_string());
    Error::Config { key, msg }
}

fn cfg_err(key: &str, msg: &str) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

fn positive(key: &str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(key, &format!("{name} must be positive")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(key, "must be non-negative"))
    }
}

fn probability(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(cfg_err(key, "probability must lie in [0, 1]"))
    }
}

fn unit_open(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(cfg_err(key, "must lie in (0, 1)"))
    }
}

fn count(key: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(cfg_err(key, "must be at least 1"))
    }
}

fn range(key: &str, r: [f64; 2]) -> Result<()> {
    if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] {
        Ok(())
    } else {
        Err(cfg_err(key, "empty range"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = validate_config("{}", ParseMode::Strict).unwrap();
        assert_eq!(cfg.sim.dt_s, 0.2);
        assert_eq!(cfg.sim.k, 5);
        assert_eq!(cfg.sim.n_users, 2);
        assert_eq!(cfg.train.lambda_lin, 0.01);
        assert_eq!(cfg, Config::default());
        assert_eq!(validate_config("", ParseMode::Strict).unwrap(), cfg);
    }

    #[test]
    fn negative_dt_rejected() {
        let err = validate_config(r#"{"sim": {"dt_s": -1}}"#, ParseMode::Strict).unwrap_err();
        assert!(err.to_string().contains("dt_s must be positive"), "{err}");
        assert!(err.to_string().contains("sim.dt_s"));
    }

    #[test]
    fn plateau_factor_bounds() {
        assert!(validate_config(r#"{"train": {"plateau_factor": 0.5}}"#, ParseMode::Strict).is_ok());
        for bad in ["0", "1.5", "-0.2"] {
            let doc = format!(r#"{{"train": {{"plateau_factor": {bad}}}}}"#);
            let err = validate_config(&doc, ParseMode::Strict).unwrap_err();
            assert!(err.to_string().contains("train.plateau_factor"), "{err}");
        }
    }

    #[test]
    fn reversed_capacity_range_rejected() {
        let err = validate_config(
            r#"{"regimes": {"capacity_range_mbps": [600, 20]}}"#,
            ParseMode::Strict,
        )
        .unwrap_err();
        assert!(err.to_string().contains("empty range"), "{err}");
        assert!(err.to_string().contains("capacity_range_mbps"));
    }

    #[test]
    fn unknown_key_strict_vs_lax() {
        let doc = r#"{"sim": {"dt_s": 0.1, "bogus": 3}}"#;
        let err = validate_config(doc, ParseMode::Strict).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let cfg = validate_config(doc, ParseMode::Lax).unwrap();
        assert_eq!(cfg.sim.dt_s, 0.1);
    }

    #[test]
    fn identical_documents_identical_configs() {
        let doc = r#"{"seed": 9, "train": {"lr": 0.001}}"#;
        let a = validate_config(doc, ParseMode::Strict).unwrap();
        let b = validate_config(doc, ParseMode::Strict).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.lr, 1e-3);
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = validate_config(r#"{"seed": 11}"#, ParseMode::Strict).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(validate_config(&text, ParseMode::Strict).unwrap(), cfg);
    }
}
