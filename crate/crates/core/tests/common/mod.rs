//! Independent scalar re-implementations used as test oracles.
#![allow(dead_code)]

use tgdin::config::SimConstants;

pub fn consts() -> SimConstants {
    SimConstants {
        dt_s: 0.2,
        n_users: 2,
        b_max_mb: 2.0,
        tau_max_s: 2.0,
        loss_max_frac: 1.0,
        a_min_mbps: 0.01,
    }
}

/// (r, tau, loss, qrem) per user, written out longhand.
pub fn theory_oracle(d: &[f64], c: f64, b: &[f64], dt: f64, k: &SimConstants) -> Vec<[f64; 4]> {
    let mut dem = Vec::new();
    let mut total = 0.0;
    for i in 0..d.len() {
        let x = b[i] / dt + d[i];
        dem.push(x);
        total += x;
    }
    let mut out = Vec::new();
    for i in 0..d.len() {
        let a = if total <= c { dem[i] } else { c * dem[i] / total };
        let r = if dem[i] <= a { dem[i] } else { a };
        let denom = if a > k.a_min_mbps { a } else { k.a_min_mbps };
        let mut tau = b[i] / denom;
        if tau > k.tau_max_s {
            tau = k.tau_max_s;
        }
        let arrivals = b[i] + d[i] * dt;
        let mut q = arrivals - r * dt;
        if q < 0.0 {
            q = 0.0;
        }
        let over = if q > k.b_max_mb { q - k.b_max_mb } else { 0.0 };
        let mut loss = over / if arrivals > 1e-9 { arrivals } else { 1e-9 };
        if loss > k.loss_max_frac {
            loss = k.loss_max_frac;
        }
        out.push([r, tau, loss, q]);
    }
    out
}

pub fn rmse_oracle(p: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - t[i]).powi(2);
    }
    (s / p.len() as f64).sqrt()
}

pub fn rel_mae_oracle(p: &[f64], t: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..p.len() {
        num += (p[i] - t[i]).abs();
        den += t[i];
    }
    (den > 0.0).then(|| num / den)
}

pub fn pearson_oracle(p: &[f64], t: &[f64]) -> Option<f64> {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let cov: f64 = p.iter().zip(t).map(|(a, b)| (a - mp) * (b - mt)).sum();
    let vp: f64 = p.iter().map(|a| (a - mp) * (a - mp)).sum();
    let vt: f64 = t.iter().map(|b| (b - mt) * (b - mt)).sum();
    (vp > 0.0 && vt > 0.0).then(|| cov / (vp * vt).sqrt())
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
