//! Window observations, traces and the regime metadata that produced them.

use serde::{Deserialize, Serialize};

use crate::config::SimConstants;
use crate::error::{Error, Result};

/// One user's observables in one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserWindow {
    pub throughput_mbps: f64,
    /// Backlog at the start of the window.
    pub buffer_mb: f64,
    pub delay_s: f64,
    pub loss_frac: f64,
    /// Ground-truth offered rate; only known for generated traces.
    pub demand_true_mbps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowObservation {
    pub t_index: u64,
    pub capacity_mbps: f64,
    pub users: Vec<UserWindow>,
}

impl WindowObservation {
    pub fn total_throughput(&self) -> f64 {
        self.users.iter().map(|u| u.throughput_mbps).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandRegime {
    Small,
    Light,
    Medium,
    Heavy,
}

impl DemandRegime {
    pub const ALL: [DemandRegime; 4] = [Self::Small, Self::Light, Self::Medium, Self::Heavy];

    /// Rate bounds (Mbps) the regime's base rate is drawn from, clamped to
    /// the configured overall demand range.
    pub fn bounds(self, demand_range: [f64; 2]) -> (f64, f64) {
        let [lo, hi] = demand_range;
        let b = match self {
            Self::Small => (lo, 5.0),
            Self::Light => (1.0, 8.0),
            Self::Medium => (3.0, 20.0),
            Self::Heavy => (10.0, hi),
        };
        (b.0.max(lo).min(hi), b.1.min(hi).max(lo))
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Light => "light",
            Self::Medium => "medium",
            Self::Heavy => "heavy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Continuous,
    OnOff,
}

impl Pattern {
    pub const ALL: [Pattern; 2] = [Self::Continuous, Self::OnOff];
}

/// Generator parameters for one user's demand series.
///
/// Anything left as `None` is drawn from the generator's RNG stream. The
/// active level is jittered multiplicatively by an AR(1) process and clipped
/// to `clip_mbps`; idle windows of an on/off source sit at `idle_mbps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub pattern: Pattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<DemandRegime>,
    /// Range the active base rate is drawn from when `base_mbps` is unset.
    pub rate_range_mbps: (f64, f64),
    /// Hard envelope applied to every generated value.
    pub clip_mbps: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_mbps: Option<f64>,
    #[serde(default)]
    pub idle_mbps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_windows: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_windows: Option<u32>,
}

impl DemandProfile {
    /// Profile for a randomized training regime.
    pub fn for_regime(regime: DemandRegime, pattern: Pattern, demand_range: [f64; 2]) -> Self {
        let (lo, hi) = regime.bounds(demand_range);
        Self {
            pattern,
            regime: Some(regime),
            rate_range_mbps: (lo, hi),
            clip_mbps: (0.0, 1.1 * hi),
            base_mbps: None,
            idle_mbps: 0.0,
            duty: None,
            period_windows: None,
            phase_windows: None,
        }
    }

    /// Long-run mean ignoring jitter and clipping, when every parameter is pinned.
    pub fn nominal_mean(&self) -> Option<f64> {
        let base = self.base_mbps?;
        match self.pattern {
            Pattern::Continuous => Some(base),
            Pattern::OnOff => {
                let period = self.period_windows?;
                let on = on_windows(self.duty?, period);
                let frac = on as f64 / period as f64;
                Some(frac * base + (1.0 - frac) * self.idle_mbps)
            }
        }
    }
}

/// Active windows per period for a given duty cycle, kept within `[1, period-1]`.
pub fn on_windows(duty: f64, period: u32) -> u32 {
    let on = (duty * period as f64).round() as u32;
    on.clamp(1, period.saturating_sub(1).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DriftFamily {
    #[serde(rename = "demandOnly")]
    DemandOnly,
    #[serde(rename = "patternOnly")]
    PatternOnly,
    #[serde(rename = "patternDemand")]
    PatternDemand,
}

impl DriftFamily {
    pub const ALL: [DriftFamily; 3] = [Self::DemandOnly, Self::PatternOnly, Self::PatternDemand];

    pub fn name(self) -> &'static str {
        match self {
            Self::DemandOnly => "demandOnly",
            Self::PatternOnly => "patternOnly",
            Self::PatternDemand => "patternDemand",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChangedUser {
    #[serde(rename = "u0")]
    U0,
    #[serde(rename = "u1")]
    U1,
}

impl ChangedUser {
    pub const ALL: [ChangedUser; 2] = [Self::U0, Self::U1];

    pub fn index(self) -> usize {
        match self {
            Self::U0 => 0,
            Self::U1 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::U0 => "changeU0",
            Self::U1 => "changeU1",
        }
    }
}

/// A single mid-trace change of one user's generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftScenario {
    pub family: DriftFamily,
    pub changed_user: ChangedUser,
    pub pre: DemandProfile,
    pub post: DemandProfile,
}

impl DriftScenario {
    /// `demandOnly_changeU0` style identifier.
    pub fn name(&self) -> String {
        scenario_name(self.family, self.changed_user)
    }
}

pub fn scenario_name(family: DriftFamily, user: ChangedUser) -> String {
    format!("{}_{}", family.name(), user.name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityLaw {
    SlowWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub capacity_base_mbps: f64,
    pub capacity_law: CapacityLaw,
    pub users: Vec<DemandProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftScenario>,
    pub length_windows: usize,
}

impl RegimeSpec {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// Window index at which drift takes effect.
    pub fn drift_at(&self) -> usize {
        self.length_windows / 2
    }
}

/// A time-ordered sequence of windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub windows: Vec<WindowObservation>,
    /// Generator metadata; absent for ingested traces.
    pub meta: Option<RegimeSpec>,
    /// Seed that reproduces the trace from `meta`.
    pub seed: u64,
    pub has_truth: bool,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.windows.first().map_or(0, |w| w.users.len())
    }

    pub fn scenario(&self) -> Option<String> {
        self.meta.as_ref()?.drift.as_ref().map(DriftScenario::name)
    }

    pub fn throughput(&self, user: usize) -> Vec<f64> {
        self.windows.iter().map(|w| w.users[user].throughput_mbps).collect()
    }

    pub fn demand_true(&self, user: usize) -> Option<Vec<f64>> {
        self.windows.iter().map(|w| w.users[user].demand_true_mbps).collect()
    }

    /// Check structural and physical invariants.
    pub fn validate(&self, consts: &SimConstants) -> Result<()> {
        let n = self.n_users();
        for (i, w) in self.windows.iter().enumerate() {
            if w.t_index != i as u64 {
                return Err(Error::invalid(format!(
                    "window {i} has t_index {} (expected {i})",
                    w.t_index
                )));
            }
            if w.users.len() != n {
                return Err(Error::invalid(format!("window {i} has {} users, expected {n}", w.users.len())));
            }
            if !(w.capacity_mbps >= 0.0 && w.capacity_mbps.is_finite()) {
                return Err(Error::invalid(format!("window {i}: bad capacity {}", w.capacity_mbps)));
            }
            for (u, uw) in w.users.iter().enumerate() {
                let ok = uw.throughput_mbps >= 0.0
                    && uw.buffer_mb >= 0.0
                    && (0.0..=consts.tau_max_s).contains(&uw.delay_s)
                    && (0.0..=consts.loss_max_frac).contains(&uw.loss_frac)
                    && uw.demand_true_mbps.is_none_or(|d| d >= 0.0);
                if !ok {
                    return Err(Error::invalid(format!("window {i} user {u}: observable out of range: {uw:?}")));
                }
                if self.has_truth != uw.demand_true_mbps.is_some() {
                    return Err(Error::invalid(format!("window {i} user {u}: truth column mismatch")));
                }
            }
        }
        Ok(())
    }
}
