//! Closed-form scheduling and queueing forward map with exact gradients.
//!
//! Given inferred per-user demand `d`, capacity `C`, the buffer backlog `B`
//! at the start of a window and the window length `dt`:
//!
//! ```text
//! dem_i  = B_i/dt + d_i                       effective (backlog-aware) demand
//! a_i    = dem_i                 if sum(dem) <= C
//!        = C * dem_i / sum(dem)  otherwise    proportional sharing
//! sent_i = min(B_i + d_i*dt, a_i*dt)
//! r_i    = sent_i / dt
//! tau_i  = min(tau_max, B_i / max(a_i, a_min))
//! qrem_i = B_i + d_i*dt - sent_i
//! loss_i = min(loss_max, max(qrem_i - b_max, 0) / max(B_i + d_i*dt, 1e-9))
//! ```
//!
//! The map is piecewise smooth. At a kink the derivative of the branch the
//! forward pass selected is used, and exact ties select the first-listed
//! argument of `min`/`max` (and the uncongested case of the scheduler).
//!
//! Only proportional sharing is implemented; any scheduler satisfying
//! `0 <= a_i <= dem_i` and `sum(a) <= C` could replace [`schedule_allocate`].

use crate::config::SimConstants;
use crate::error::{Error, Result};

/// Guard on the loss-rate denominator.
pub const LOSS_DENOM_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TheoryOutput {
    pub effective_demand_mbps: Vec<f64>,
    pub allocation_mbps: Vec<f64>,
    pub sent_mb: Vec<f64>,
    pub throughput_mbps: Vec<f64>,
    pub delay_s: Vec<f64>,
    pub loss_frac: Vec<f64>,
    pub residual_queue_mb: Vec<f64>,
}

/// Upstream gradients on the three observables.
#[derive(Debug, Clone, Copy)]
pub struct ObservableGrads<'a> {
    pub throughput: &'a [f64],
    pub delay: &'a [f64],
    pub loss: &'a [f64],
}

fn check_nonneg(name: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
        Some(i) => Err(Error::invalid(format!("{name}[{i}] = {} must be finite and >= 0", xs[i]))),
        None => Ok(()),
    }
}

fn check_dt(dt_s: f64) -> Result<()> {
    if dt_s > 0.0 && dt_s.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("dt_s = {dt_s} must be positive")))
    }
}

/// Backlog-aware demand `(B + d*dt)/dt`, evaluated as `B/dt + d`.
pub fn effective_demand(buffer_mb: &[f64], d_hat_mbps: &[f64], dt_s: f64) -> Result<Vec<f64>> {
    check_dt(dt_s)?;
    check_nonneg("buffer_mb", buffer_mb)?;
    check_nonneg("d_hat_mbps", d_hat_mbps)?;
    if buffer_mb.len() != d_hat_mbps.len() {
        return Err(Error::invalid("buffer and demand lengths differ"));
    }
    Ok(buffer_mb
        .iter()
        .zip(d_hat_mbps)
        .map(|(b, d)| b / dt_s + d)
        .collect())
}

/// Work-conserving proportional allocation of `capacity_mbps`.
pub fn schedule_allocate(dem_mbps: &[f64], capacity_mbps: f64) -> Result<Vec<f64>> {
    check_nonneg("dem_mbps", dem_mbps)?;
    if !(capacity_mbps >= 0.0) || !capacity_mbps.is_finite() {
        return Err(Error::invalid(format!("capacity {capacity_mbps} must be finite and >= 0")));
    }
    Ok(allocate(dem_mbps, capacity_mbps).0)
}

/// Returns the allocation and whether the congested branch was taken.
fn allocate(dem: &[f64], c: f64) -> (Vec<f64>, bool) {
    let total: f64 = dem.iter().sum();
    if total <= c {
        (dem.to_vec(), false)
    } else {
        (dem.iter().map(|x| c * x / total).collect(), true)
    }
}

/// Per-window queue observables for fixed allocation.
pub fn queue_observables(
    buffer_mb: &[f64],
    d_hat_mbps: &[f64],
    allocation_mbps: &[f64],
    dt_s: f64,
    consts: &SimConstants,
) -> Result<TheoryOutput> {
    let dem = effective_demand(buffer_mb, d_hat_mbps, dt_s)?;
    check_nonneg("allocation_mbps", allocation_mbps)?;
    if allocation_mbps.len() != dem.len() {
        return Err(Error::invalid("allocation length differs from demand length"));
    }
    Ok(observables(buffer_mb, d_hat_mbps, dem, allocation_mbps.to_vec(), dt_s, consts))
}

fn observables(
    buffer: &[f64],
    d: &[f64],
    dem: Vec<f64>,
    alloc: Vec<f64>,
    dt: f64,
    consts: &SimConstants,
) -> TheoryOutput {
    let n = d.len();
    let mut out = TheoryOutput {
        effective_demand_mbps: dem,
        allocation_mbps: alloc,
        sent_mb: Vec::with_capacity(n),
        throughput_mbps: Vec::with_capacity(n),
        delay_s: Vec::with_capacity(n),
        loss_frac: Vec::with_capacity(n),
        residual_queue_mb: Vec::with_capacity(n),
    };
    for i in 0..n {
        let arrivals = buffer[i] + d[i] * dt;
        let a = out.allocation_mbps[i];
        // min(B + d dt, a dt) / dt == min(dem, a); the rate form keeps r == d
        // exact in the uncongested, empty-buffer case.
        let rate = if out.effective_demand_mbps[i] <= a {
            out.effective_demand_mbps[i]
        } else {
            a
        };
        let sent = rate * dt;
        let qrem = (arrivals - sent).max(0.0);
        let tau = (buffer[i] / a.max(consts.a_min_mbps)).min(consts.tau_max_s);
        let over = (qrem - consts.b_max_mb).max(0.0);
        let loss = (over / arrivals.max(LOSS_DENOM_FLOOR)).min(consts.loss_max_frac);
        out.sent_mb.push(sent);
        out.throughput_mbps.push(rate);
        out.delay_s.push(tau);
        out.loss_frac.push(loss);
        out.residual_queue_mb.push(qrem);
    }
    out
}

/// Split a residual queue into the carried-over buffer and the dropped volume.
pub fn buffer_advance(q_rem_mb: f64, b_max_mb: f64) -> (f64, f64) {
    let next = q_rem_mb.min(b_max_mb);
    (next, q_rem_mb - next)
}

/// Full forward map: effective demand, allocation, then queue observables.
pub fn theory_forward(
    d_hat: &[f64],
    capacity_mbps: f64,
    buffer_mb: &[f64],
    dt_s: f64,
    consts: &SimConstants,
) -> Result<TheoryOutput> {
    let dem = effective_demand(buffer_mb, d_hat, dt_s)?;
    let alloc = schedule_allocate(&dem, capacity_mbps)?;
    Ok(observables(buffer_mb, d_hat, dem, alloc, dt_s, consts))
}

/// Vector-Jacobian product of `(r, tau, loss)` with respect to `d_hat`.
pub fn theory_vjp(
    d_hat: &[f64],
    capacity_mbps: f64,
    buffer_mb: &[f64],
    dt_s: f64,
    consts: &SimConstants,
    upstream: ObservableGrads<'_>,
) -> Result<Vec<f64>> {
    let n = d_hat.len();
    for (name, g) in [
        ("throughput", upstream.throughput),
        ("delay", upstream.delay),
        ("loss", upstream.loss),
    ] {
        if g.len() != n {
            return Err(Error::invalid(format!("upstream {name} gradient has length {}, expected {n}", g.len())));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("upstream {name} gradient is not finite")));
        }
    }
    let dem = effective_demand(buffer_mb, d_hat, dt_s)?;
    if !(capacity_mbps >= 0.0) || !capacity_mbps.is_finite() {
        return Err(Error::invalid(format!("capacity {capacity_mbps} must be finite and >= 0")));
    }
    let mut grad = vec![0.0; n];
    vjp_into(d_hat, capacity_mbps, buffer_mb, dt_s, consts, upstream, &dem, &mut grad);
    Ok(grad)
}

/// Unchecked VJP used by the training hot path. `dem` must be the effective demand.
#[allow(clippy::too_many_arguments)]
pub(crate) fn vjp_into(
    d: &[f64],
    c: f64,
    buffer: &[f64],
    dt: f64,
    consts: &SimConstants,
    up: ObservableGrads<'_>,
    dem: &[f64],
    grad: &mut [f64],
) {
    let n = d.len();
    let total: f64 = dem.iter().sum();
    let congested = total > c;
    let alloc: Vec<f64> = if congested {
        dem.iter().map(|x| c * x / total).collect()
    } else {
        dem.to_vec()
    };

    let mut adj_alloc = vec![0.0; n];
    let mut adj_dem = vec![0.0; n];
    for i in 0..n {
        let a = alloc[i];
        let arrivals = buffer[i] + d[i] * dt;
        let mut adj_arr = 0.0;
        let mut adj_rate = up.throughput[i];

        // delay: min(tau_max, B / max(a, a_min)); ties pick tau_max.
        let den = a.max(consts.a_min_mbps);
        let q = buffer[i] / den;
        if consts.tau_max_s > q && a >= consts.a_min_mbps {
            adj_alloc[i] += up.delay[i] * (-buffer[i] / (den * den));
        }

        // loss: min(loss_max, max(qrem - b_max, 0) / max(arrivals, floor)).
        let rate = if dem[i] <= a { dem[i] } else { a };
        let qrem_raw = arrivals - rate * dt;
        let qrem = qrem_raw.max(0.0);
        let over_raw = qrem - consts.b_max_mb;
        let over = over_raw.max(0.0);
        let lden = arrivals.max(LOSS_DENOM_FLOOR);
        let frac = over / lden;
        if consts.loss_max_frac > frac {
            let g = up.loss[i];
            if over_raw >= 0.0 && qrem_raw >= 0.0 {
                // qrem = arrivals - rate*dt
                let adj_q = g / lden;
                adj_arr += adj_q;
                adj_rate -= adj_q * dt;
            }
            if arrivals >= LOSS_DENOM_FLOOR {
                adj_arr -= g * over / (lden * lden);
            }
        }

        // rate = min(dem, a); ties pick dem.
        if dem[i] <= a {
            adj_dem[i] += adj_rate;
        } else {
            adj_alloc[i] += adj_rate;
        }
        grad[i] += adj_arr * dt;
    }

    if congested {
        let weighted: f64 = adj_alloc.iter().zip(&alloc).map(|(g, a)| g * a).sum();
        for j in 0..n {
            adj_dem[j] += c * adj_alloc[j] / total - weighted / total;
        }
    } else {
        for j in 0..n {
            adj_dem[j] += adj_alloc[j];
        }
    }
    for j in 0..n {
        grad[j] += adj_dem[j];
    }
}

/// Dense Jacobian rows `d(obs_i)/d(d_j)` for each observable, built from VJPs.
pub struct TheoryJacobian {
    pub throughput: Vec<Vec<f64>>,
    pub delay: Vec<Vec<f64>>,
    pub loss: Vec<Vec<f64>>,
}

pub fn theory_jacobian(
    d_hat: &[f64],
    capacity_mbps: f64,
    buffer_mb: &[f64],
    dt_s: f64,
    consts: &SimConstants,
) -> Result<TheoryJacobian> {
    let n = d_hat.len();
    let zero = vec![0.0; n];
    let mut jac = TheoryJacobian {
        throughput: Vec::with_capacity(n),
        delay: Vec::with_capacity(n),
        loss: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let row = |which: usize| {
            let up = ObservableGrads {
                throughput: if which == 0 { &e } else { &zero },
                delay: if which == 1 { &e } else { &zero },
                loss: if which == 2 { &e } else { &zero },
            };
            theory_vjp(d_hat, capacity_mbps, buffer_mb, dt_s, consts, up)
        };
        jac.throughput.push(row(0)?);
        jac.delay.push(row(1)?);
        jac.loss.push(row(2)?);
    }
    Ok(jac)
}
