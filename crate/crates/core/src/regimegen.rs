//! Randomized regimes, synthetic capacity/demand series and the fixed trace
//! sets (drift test grid, calibration set, single-capacity corpora).
//!
//! Every trace is a pure function of its `seed`: capacity, each user's demand
//! and the post-drift generator draw from separate streams under that seed.

use serde::{Deserialize, Serialize};

use crate::config::{RegimeSection, SimConstants};
use crate::error::{Error, Result};
use crate::par::par_map;
use crate::rng::{derive_stream, mix, streams, RngStream};
use crate::theory::{buffer_advance, theory_forward};
use crate::trace::{
    on_windows, CapacityLaw, ChangedUser, DemandProfile, DemandRegime, DriftFamily, DriftScenario, Pattern,
    RegimeSpec, Trace, UserWindow, WindowObservation,
};

/// A generated trace together with its stable file stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTrace {
    pub name: String,
    pub trace: Trace,
}

/// Draw a training regime: uniform capacity base, per-user uniform regime
/// label and pattern, no drift.
pub fn sample_regime(rng: &mut RngStream, ranges: &RegimeSection, n_users: usize) -> RegimeSpec {
    let [lo, hi] = ranges.capacity_range_mbps;
    let capacity_base_mbps = rng.uniform(lo, hi);
    let users = (0..n_users)
        .map(|_| {
            let regime = DemandRegime::ALL[rng.index(4)];
            let pattern = Pattern::ALL[rng.index(2)];
            DemandProfile::for_regime(regime, pattern, ranges.demand_range_mbps)
        })
        .collect();
    RegimeSpec {
        capacity_base_mbps,
        capacity_law: CapacityLaw::SlowWalk,
        users,
        drift: None,
        length_windows: ranges.trace_len,
    }
}

/// Bounded slow random walk starting at the base.
pub fn gen_capacity_series(spec: &RegimeSpec, ranges: &RegimeSection, rng: &mut RngStream, len: usize) -> Vec<f64> {
    let base = spec.capacity_base_mbps;
    let step = ranges.capacity_step_frac * base;
    let lo = ((1.0 - ranges.capacity_band_frac) * base).max(1.0);
    let hi = ((1.0 + ranges.capacity_band_frac) * base).max(1.0);
    let mut c = base.clamp(lo, hi);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(c);
        c = (c + rng.uniform(-step, step)).clamp(lo, hi);
    }
    out
}

/// One user's demand series under `profile`.
pub fn gen_user_demand(profile: &DemandProfile, ranges: &RegimeSection, rng: &mut RngStream, len: usize) -> Vec<f64> {
    let (rlo, rhi) = profile.rate_range_mbps;
    let base = profile.base_mbps.unwrap_or_else(|| rng.uniform(rlo, rhi));
    let (clo, chi) = profile.clip_mbps;
    let sigma = ranges.ar_sigma_frac;
    let phi = ranges.ar_coef;

    let (period, on) = match profile.pattern {
        Pattern::Continuous => (0, 0),
        Pattern::OnOff => {
            let [plo, phi_] = ranges.on_off_period;
            let period = profile
                .period_windows
                .unwrap_or_else(|| rng.int_inclusive(plo as u64, phi_ as u64) as u32)
                .max(2);
            let [dlo, dhi] = ranges.on_off_duty;
            let duty = profile.duty.unwrap_or_else(|| rng.uniform(dlo, dhi));
            (period, on_windows(duty, period))
        }
    };
    let phase = match profile.pattern {
        Pattern::Continuous => 0,
        Pattern::OnOff => profile
            .phase_windows
            .unwrap_or_else(|| rng.int_inclusive(0, period as u64 - 1) as u32),
    };

    // Stationary start for the jitter process.
    let mut j = rng.normal() * sigma / (1.0 - phi * phi).max(1e-12).sqrt();
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        let active = period == 0 || ((t as u32 + phase) % period) < on;
        let v = if active {
            (base * (1.0 + j)).clamp(clo, chi)
        } else {
            profile.idle_mbps
        };
        out.push(v.max(0.0));
        j = phi * j + sigma * rng.normal();
    }
    out
}

/// Demand series for every user, each from its own stream under `seed`.
pub fn gen_demand_series(spec: &RegimeSpec, ranges: &RegimeSection, seed: u64, len: usize) -> Vec<Vec<f64>> {
    spec.users
        .iter()
        .enumerate()
        .map(|(u, p)| gen_user_demand(p, ranges, &mut derive_stream(seed, streams::DEMAND + u as u64), len))
        .collect()
}

/// Switch the changed user to its post-drift generator from `len/2` on. The
/// other users' series are returned untouched.
pub fn apply_drift(spec: &RegimeSpec, ranges: &RegimeSection, seed: u64, series: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let drift = spec
        .drift
        .as_ref()
        .ok_or_else(|| Error::invalid("apply_drift called on a regime without drift"))?;
    let u = drift.changed_user.index();
    if u >= series.len() {
        return Err(Error::invalid(format!("drift targets user {u} but only {} users exist", series.len())));
    }
    let len = series[u].len();
    let at = len / 2;
    let post = gen_user_demand(&drift.post, ranges, &mut derive_stream(seed, streams::DRIFT), len);
    let mut out = series.to_vec();
    out[u][at..].copy_from_slice(&post[at..]);
    Ok(out)
}

/// Run the fluid dynamics forward over true demand, starting from empty
/// buffers.
pub fn simulate_windows(capacity: &[f64], demand: &[Vec<f64>], consts: &SimConstants) -> Result<Vec<WindowObservation>> {
    let n_users = demand.len();
    let len = capacity.len();
    if demand.iter().any(|d| d.len() != len) {
        return Err(Error::invalid("demand and capacity series differ in length"));
    }
    let mut buffer = vec![0.0; n_users];
    let mut d = vec![0.0; n_users];
    let mut windows = Vec::with_capacity(len);
    for t in 0..len {
        for u in 0..n_users {
            d[u] = demand[u][t];
        }
        let out = theory_forward(&d, capacity[t], &buffer, consts.dt_s, consts)?;
        let users = (0..n_users)
            .map(|u| UserWindow {
                throughput_mbps: out.throughput_mbps[u],
                buffer_mb: buffer[u],
                delay_s: out.delay_s[u],
                loss_frac: out.loss_frac[u],
                demand_true_mbps: Some(d[u]),
            })
            .collect();
        windows.push(WindowObservation {
            t_index: t as u64,
            capacity_mbps: capacity[t],
            users,
        });
        for u in 0..n_users {
            buffer[u] = buffer_advance(out.residual_queue_mb[u], consts.b_max_mb).0;
        }
    }
    Ok(windows)
}

/// Generate the observed trace for `spec` under `seed`.
pub fn synthesize_trace(spec: &RegimeSpec, ranges: &RegimeSection, seed: u64, consts: &SimConstants) -> Result<Trace> {
    let len = spec.length_windows;
    if len == 0 {
        return Err(Error::invalid("trace length must be >= 1"));
    }
    let capacity = gen_capacity_series(spec, ranges, &mut derive_stream(seed, streams::CAPACITY), len);
    let mut demand = gen_demand_series(spec, ranges, seed, len);
    if spec.drift.is_some() {
        demand = apply_drift(spec, ranges, seed, &demand)?;
    }
    Ok(Trace {
        windows: simulate_windows(&capacity, &demand, consts)?,
        meta: Some(spec.clone()),
        seed,
        has_truth: true,
    })
}

/// Sample a regime from `seed` and synthesize it.
pub fn random_trace(ranges: &RegimeSection, seed: u64, consts: &SimConstants) -> Result<Trace> {
    let spec = sample_regime(&mut derive_stream(seed, streams::REGIME), ranges, consts.n_users);
    synthesize_trace(&spec, ranges, seed, consts)
}

/// `n` randomized traces; trace `i` uses seed `mix(seed, i)`.
pub fn build_random_corpus(ranges: &RegimeSection, consts: &SimConstants, n: usize, seed: u64, jobs: usize) -> Result<Vec<Trace>> {
    let ids: Vec<u64> = (0..n as u64).collect();
    par_map(&ids, jobs, |i| random_trace(ranges, mix(seed, *i), consts))
        .into_iter()
        .collect()
}

/// Randomized-demand traces pinned to one capacity base.
pub fn build_single_capacity_corpus(
    capacity_mbps: f64,
    n_traces: usize,
    seed: u64,
    ranges: &RegimeSection,
    consts: &SimConstants,
    jobs: usize,
) -> Result<Vec<Trace>> {
    let [lo, hi] = ranges.capacity_range_mbps;
    if !(lo..=hi).contains(&capacity_mbps) {
        return Err(Error::invalid(format!(
            "capacity {capacity_mbps} outside the configured range [{lo}, {hi}]"
        )));
    }
    let ids: Vec<u64> = (0..n_traces as u64).collect();
    par_map(&ids, jobs, |i| {
        let s = mix(seed, *i);
        let mut spec = sample_regime(&mut derive_stream(s, streams::REGIME), ranges, consts.n_users);
        spec.capacity_base_mbps = capacity_mbps;
        synthesize_trace(&spec, ranges, s, consts)
    })
    .into_iter()
    .collect()
}

// Fixed drift-scenario profiles.

fn continuous(base: f64, clip: (f64, f64)) -> DemandProfile {
    DemandProfile {
        pattern: Pattern::Continuous,
        regime: None,
        rate_range_mbps: clip,
        clip_mbps: clip,
        base_mbps: Some(base),
        idle_mbps: 0.0,
        duty: None,
        period_windows: None,
        phase_windows: None,
    }
}

fn on_off(active: f64, duty: f64, period: u32, clip: (f64, f64)) -> DemandProfile {
    DemandProfile {
        pattern: Pattern::OnOff,
        regime: None,
        rate_range_mbps: clip,
        clip_mbps: clip,
        base_mbps: Some(active),
        idle_mbps: 0.0,
        duty: Some(duty),
        period_windows: Some(period),
        phase_windows: None,
    }
}

/// Long bursts at a high rate, idle in between.
fn yt_like() -> DemandProfile {
    on_off(60.0, 0.3, 25, (0.0, 75.0))
}

/// Pre-drift user profiles and the drift event for one scenario cell.
pub fn scenario_profiles(family: DriftFamily, changed: ChangedUser) -> (Vec<DemandProfile>, DriftScenario) {
    use ChangedUser::*;
    use DriftFamily::*;
    let (u0, u1, post) = match (family, changed) {
        (DemandOnly, U0) => (
            on_off(8.67, 0.3, 20, (0.0, 12.0)),
            continuous(3.0, (1.2, 5.0)),
            on_off(9.85, 0.3, 20, (0.0, 12.0)),
        ),
        (DemandOnly, U1) => (yt_like(), continuous(8.5, (6.5, 14.0)), continuous(11.5, (6.5, 14.0))),
        (PatternOnly, U0) => {
            let mut post = on_off(59.5, 0.5, 20, (37.0, 62.0));
            post.idle_mbps = 42.0;
            (continuous(50.0, (37.0, 62.0)), continuous(3.0, (1.1, 5.1)), post)
        }
        (PatternOnly, U1) => (
            yt_like(),
            on_off(1.44, 0.9, 10, (0.0, 2.5)),
            on_off(2.17, 0.6, 10, (0.0, 2.5)),
        ),
        (PatternDemand, U0) => (
            on_off(12.0, 0.5, 20, (0.0, 14.0)),
            continuous(3.0, (1.1, 5.1)),
            continuous(10.0, (5.6, 14.0)),
        ),
        (PatternDemand, U1) => (yt_like(), continuous(3.0, (1.1, 5.1)), on_off(9.3, 0.7, 20, (0.0, 12.0))),
    };
    let pre = if changed == U0 { u0.clone() } else { u1.clone() };
    (
        vec![u0, u1],
        DriftScenario {
            family,
            changed_user: changed,
            pre,
            post,
        },
    )
}

/// All six scenario cells in canonical order.
pub fn all_scenarios() -> Vec<(DriftFamily, ChangedUser)> {
    DriftFamily::ALL
        .iter()
        .flat_map(|f| ChangedUser::ALL.iter().map(move |u| (*f, *u)))
        .collect()
}

pub fn grid_trace_name(capacity_mbps: f64, scenario: &str, replicate: usize) -> String {
    format!("c{}_{scenario}_r{replicate}", capacity_mbps)
}

/// Drifted two-user traces: every test capacity × scenario × replicate.
pub fn build_test_grid(ranges: &RegimeSection, consts: &SimConstants, jobs: usize) -> Result<Vec<NamedTrace>> {
    if consts.n_users != 2 {
        return Err(Error::Unsupported("the drift test grid is defined for two users".into()));
    }
    let mut cells = Vec::new();
    for (ci, cap) in ranges.test_capacities_mbps.iter().enumerate() {
        for (si, (family, user)) in all_scenarios().into_iter().enumerate() {
            for rep in 0..ranges.grid_replicates {
                let seed = mix(mix(mix(ranges.grid_seed, ci as u64), si as u64), rep as u64);
                cells.push((*cap, family, user, rep, seed));
            }
        }
    }
    par_map(&cells, jobs, |(cap, family, user, rep, seed)| {
        let (users, drift) = scenario_profiles(*family, *user);
        let name = grid_trace_name(*cap, &drift.name(), *rep);
        let spec = RegimeSpec {
            capacity_base_mbps: *cap,
            capacity_law: CapacityLaw::SlowWalk,
            users,
            drift: Some(drift),
            length_windows: ranges.trace_len,
        };
        Ok(NamedTrace {
            name,
            trace: synthesize_trace(&spec, ranges, *seed, consts)?,
        })
    })
    .into_iter()
    .collect()
}

/// Log-spaced band edges over the capacity range.
pub fn capacity_bands(ranges: &RegimeSection) -> Vec<(f64, f64)> {
    let [lo, hi] = ranges.capacity_range_mbps;
    let n = ranges.calibration_bands.max(1);
    let edge = |i: usize| lo * (hi / lo).powf(i as f64 / n as f64);
    (0..n).map(|i| (edge(i), edge(i + 1))).collect()
}

fn pattern_tag(p: Pattern) -> &'static str {
    match p {
        Pattern::Continuous => "cont",
        Pattern::OnOff => "onoff",
    }
}

/// Stratified, drift-free set: band × regime (shared by all users) ×
/// per-user pattern combination × `calibration_per_cell`.
pub fn build_calibration_set(ranges: &RegimeSection, consts: &SimConstants, jobs: usize) -> Result<Vec<NamedTrace>> {
    let combos: Vec<Vec<Pattern>> = (0..1usize << consts.n_users)
        .map(|bits| {
            (0..consts.n_users)
                .map(|u| if bits >> u & 1 == 1 { Pattern::OnOff } else { Pattern::Continuous })
                .collect()
        })
        .collect();
    let mut cells = Vec::new();
    for (b, band) in capacity_bands(ranges).into_iter().enumerate() {
        for regime in DemandRegime::ALL {
            for combo in &combos {
                for rep in 0..ranges.calibration_per_cell {
                    cells.push((b, band, regime, combo.clone(), rep));
                }
            }
        }
    }
    let ids: Vec<usize> = (0..cells.len()).collect();
    par_map(&ids, jobs, |i| {
        let (b, (lo, hi), regime, combo, rep) = &cells[*i];
        let seed = mix(ranges.calibration_seed, *i as u64);
        let mut rng = derive_stream(seed, streams::REGIME);
        let spec = RegimeSpec {
            capacity_base_mbps: rng.uniform(*lo, *hi),
            capacity_law: CapacityLaw::SlowWalk,
            users: combo
                .iter()
                .map(|p| DemandProfile::for_regime(*regime, *p, ranges.demand_range_mbps))
                .collect(),
            drift: None,
            length_windows: ranges.trace_len,
        };
        let tags: Vec<&str> = combo.iter().map(|p| pattern_tag(*p)).collect();
        Ok(NamedTrace {
            name: format!("cal_b{b}_{}_{}_r{rep}", regime.label(), tags.join("-")),
            trace: synthesize_trace(&spec, ranges, seed, consts)?,
        })
    })
    .into_iter()
    .collect()
}
