//! Packet-log aggregation, feature reconstruction and the trace CSV format.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ParseMode, SimConstants};
use crate::error::{Error, Result};
use crate::regimegen::simulate_windows;
use crate::trace::{RegimeSpec, Trace, UserWindow, WindowObservation};

/// Per-window, per-user throughput aggregated from packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSeries {
    pub dt_s: f64,
    pub n_users: usize,
    /// `[window][user]`, Mbps.
    pub throughput_mbps: Vec<Vec<f64>>,
    /// Offered (ingress) rate, when the source provides it.
    pub offered_mbps: Option<Vec<Vec<f64>>>,
    /// `[window][user]` byte totals; empty when not built from packets.
    #[serde(default)]
    pub bytes: Vec<Vec<u64>>,
    /// Bytes of packets at or beyond the end of the last window.
    #[serde(default)]
    pub dropped_tail_bytes: u64,
}

impl WindowSeries {
    pub fn len(&self) -> usize {
        self.throughput_mbps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.throughput_mbps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub ts_s: f64,
    pub user: usize,
    pub size_bytes: u64,
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parse `ts_s,user_id,size_bytes` rows. `path` only labels errors.
pub fn parse_packets<R: Read>(reader: R, path: &Path, n_users: usize) -> Result<Vec<Packet>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            column: name.into(),
            msg: "missing mandatory packet column".into(),
        })
    };
    let (its, iu, isz) = (col("ts_s")?, col("user_id")?, col("size_bytes")?);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).ok_or_else(|| parse_err(path, line, "missing field"));
        let ts: f64 = field(its)?
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad ts_s `{}`", &rec[its])))?;
        if !(ts.is_finite() && ts >= 0.0) {
            return Err(parse_err(path, line, format!("ts_s {ts} must be finite and >= 0")));
        }
        let user: usize = field(iu)?
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad user_id `{}`", &rec[iu])))?;
        if user >= n_users {
            return Err(parse_err(path, line, format!("unknown user_id {user} (n_users = {n_users})")));
        }
        let size_bytes: u64 = field(isz)?
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad size_bytes `{}`", &rec[isz])))?;
        out.push(Packet { ts_s: ts, user, size_bytes });
    }
    Ok(out)
}

/// Bin packets into `[w*dt, (w+1)*dt)` windows. Without `duration_s` the
/// series ends with the window holding the last packet; with it, exactly
/// `floor(duration/dt)` windows are produced and later packets count as
/// dropped tail bytes.
pub fn aggregate(packets: &[Packet], dt_s: f64, n_users: usize, duration_s: Option<f64>) -> Result<WindowSeries> {
    if !(dt_s > 0.0 && dt_s.is_finite()) {
        return Err(Error::invalid(format!("dt_s = {dt_s} must be positive")));
    }
    let mut sorted = packets.to_vec();
    sorted.sort_by(|a, b| a.ts_s.total_cmp(&b.ts_s));
    let n_windows = match duration_s {
        Some(d) => (d / dt_s).floor().max(0.0) as usize,
        None => sorted.last().map_or(0, |p| (p.ts_s / dt_s).floor() as usize + 1),
    };
    let mut bytes = vec![vec![0u64; n_users]; n_windows];
    let mut dropped = 0u64;
    for p in &sorted {
        let w = (p.ts_s / dt_s).floor() as usize;
        if w < n_windows {
            bytes[w][p.user] += p.size_bytes;
        } else {
            dropped += p.size_bytes;
        }
    }
    let throughput_mbps = bytes
        .iter()
        .map(|row| row.iter().map(|b| *b as f64 * 8.0 / 1e6 / dt_s).collect())
        .collect();
    Ok(WindowSeries {
        dt_s,
        n_users,
        throughput_mbps,
        offered_mbps: None,
        bytes,
        dropped_tail_bytes: dropped,
    })
}

/// Read a packet CSV and aggregate it.
pub fn aggregate_packets(path: &Path, dt_s: f64, n_users: usize, duration_s: Option<f64>) -> Result<WindowSeries> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let packets = parse_packets(f, path, n_users)?;
    aggregate(&packets, dt_s, n_users, duration_s)
}

/// Capacity known at the bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub enum CapacityInput {
    Constant(f64),
    Series(Vec<f64>),
}

/// Build a trace without ground truth. With offered rates the fluid
/// recursion supplies buffer, delay and loss; without them those columns
/// are zero.
pub fn reconstruct_features(series: &WindowSeries, capacity: Option<&CapacityInput>, consts: &SimConstants) -> Result<Trace> {
    let capacity = capacity.ok_or_else(|| Error::invalid("capacity is required to reconstruct features"))?;
    let n = series.len();
    let caps = match capacity {
        CapacityInput::Constant(c) => vec![*c; n],
        CapacityInput::Series(v) => {
            if v.len() != n {
                return Err(Error::invalid(format!(
                    "capacity series has {} windows, throughput has {n}",
                    v.len()
                )));
            }
            v.clone()
        }
    };
    if caps.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::invalid("capacity values must be finite and positive"));
    }
    let u = series.n_users;
    let windows = match &series.offered_mbps {
        None => (0..n)
            .map(|t| WindowObservation {
                t_index: t as u64,
                capacity_mbps: caps[t],
                users: series.throughput_mbps[t]
                    .iter()
                    .map(|r| UserWindow {
                        throughput_mbps: *r,
                        buffer_mb: 0.0,
                        delay_s: 0.0,
                        loss_frac: 0.0,
                        demand_true_mbps: None,
                    })
                    .collect(),
            })
            .collect(),
        Some(offered) => {
            let per_user: Vec<Vec<f64>> = (0..u).map(|i| offered.iter().map(|row| row[i]).collect()).collect();
            let mut sim = simulate_windows(&caps, &per_user, consts)?;
            for (t, w) in sim.iter_mut().enumerate() {
                for (i, uw) in w.users.iter_mut().enumerate() {
                    uw.throughput_mbps = series.throughput_mbps[t][i];
                    uw.demand_true_mbps = None;
                }
            }
            sim
        }
    };
    let trace = Trace {
        windows,
        meta: None,
        seed: 0,
        has_truth: false,
    };
    trace.validate(consts)?;
    Ok(trace)
}

// Window CSV: t_index, thr_u{i}_mbps..., optional offered_u{i}_mbps...

pub fn write_window_csv(series: &WindowSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["t_index".to_string()];
    header.extend((0..series.n_users).map(|i| format!("thr_u{i}_mbps")));
    if series.offered_mbps.is_some() {
        header.extend((0..series.n_users).map(|i| format!("offered_u{i}_mbps")));
    }
    w.write_record(&header)?;
    for t in 0..series.len() {
        let mut row = vec![t.to_string()];
        row.extend(series.throughput_mbps[t].iter().map(|v| v.to_string()));
        if let Some(o) = &series.offered_mbps {
            row.extend(o[t].iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    }
}

fn user_columns(headers: &csv::StringRecord, prefix: &str, suffix: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0.. {
        match headers.iter().position(|h| h == format!("{prefix}{i}{suffix}")) {
            Some(p) => out.push(p),
            None => break,
        }
    }
    out
}

fn finite(v: &str, column: &str) -> Result<f64> {
    let x: f64 = v.trim().parse().map_err(|_| Error::Schema {
        column: column.into(),
        msg: format!("not a number: `{v}`"),
    })?;
    if !x.is_finite() {
        return Err(Error::Schema {
            column: column.into(),
            msg: format!("non-finite value `{v}`"),
        });
    }
    Ok(x)
}

fn check_unknown(headers: &csv::StringRecord, known: &[usize], mode: ParseMode) -> Result<()> {
    for (i, h) in headers.iter().enumerate() {
        if known.contains(&i) {
            continue;
        }
        match mode {
            ParseMode::Strict => {
                return Err(Error::Schema {
                    column: h.into(),
                    msg: "unknown column (strict mode)".into(),
                })
            }
            ParseMode::Lax => log::warn!("ignoring unknown column `{h}`"),
        }
    }
    Ok(())
}

pub fn read_window_csv(path: &Path, dt_s: f64, mode: ParseMode) -> Result<WindowSeries> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = rd.headers()?.clone();
    let it = headers.iter().position(|h| h == "t_index").ok_or_else(|| Error::Schema {
        column: "t_index".into(),
        msg: "missing mandatory column".into(),
    })?;
    let thr = user_columns(&headers, "thr_u", "_mbps");
    if thr.is_empty() {
        return Err(Error::Schema {
            column: "thr_u0_mbps".into(),
            msg: "missing mandatory column".into(),
        });
    }
    let off = user_columns(&headers, "offered_u", "_mbps");
    if !off.is_empty() && off.len() != thr.len() {
        return Err(Error::Schema {
            column: format!("offered_u{}_mbps", off.len()),
            msg: "offered columns must cover every user".into(),
        });
    }
    let mut known = vec![it];
    known.extend(&thr);
    known.extend(&off);
    check_unknown(&headers, &known, mode)?;
    let mut throughput = Vec::new();
    let mut offered = Vec::new();
    for (row_i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let t: u64 = rec[it].trim().parse().map_err(|_| Error::Schema {
            column: "t_index".into(),
            msg: format!("not an integer: `{}`", &rec[it]),
        })?;
        if t != row_i as u64 {
            return Err(Error::Schema {
                column: "t_index".into(),
                msg: format!("expected {row_i}, found {t}"),
            });
        }
        throughput.push(thr.iter().map(|c| finite(&rec[*c], &headers[*c])).collect::<Result<Vec<_>>>()?);
        if !off.is_empty() {
            offered.push(off.iter().map(|c| finite(&rec[*c], &headers[*c])).collect::<Result<Vec<_>>>()?);
        }
    }
    Ok(WindowSeries {
        dt_s,
        n_users: thr.len(),
        throughput_mbps: throughput,
        offered_mbps: (!off.is_empty()).then_some(offered),
        bytes: Vec::new(),
        dropped_tail_bytes: 0,
    })
}

/// Sidecar `<trace>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    pub dt_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeSpec>,
}

pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

const QOS: [(&str, &str); 4] = [("thr_u", "_mbps"), ("buf_u", "_mb"), ("delay_u", "_s"), ("loss_u", "_frac")];

pub fn trace_header(n_users: usize, truth: bool) -> Vec<String> {
    let mut h = vec!["t_index".to_string(), "t_start_s".to_string(), "capacity_mbps".to_string()];
    for (p, s) in QOS {
        h.extend((0..n_users).map(|i| format!("{p}{i}{s}")));
    }
    if truth {
        h.extend((0..n_users).map(|i| format!("demand_true_u{i}_mbps")));
    }
    h
}

/// Trace as CSV bytes.
pub fn trace_csv_bytes(trace: &Trace, dt_s: f64) -> Result<Vec<u8>> {
    let u = trace.n_users();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace_header(u, trace.has_truth))?;
    for win in &trace.windows {
        let mut row = vec![
            win.t_index.to_string(),
            (win.t_index as f64 * dt_s).to_string(),
            win.capacity_mbps.to_string(),
        ];
        row.extend(win.users.iter().map(|x| x.throughput_mbps.to_string()));
        row.extend(win.users.iter().map(|x| x.buffer_mb.to_string()));
        row.extend(win.users.iter().map(|x| x.delay_s.to_string()));
        row.extend(win.users.iter().map(|x| x.loss_frac.to_string()));
        if trace.has_truth {
            row.extend(win.users.iter().map(|x| x.demand_true_mbps.unwrap_or(0.0).to_string()));
        }
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))
}

/// Write the CSV and its metadata sidecar.
pub fn write_trace_csv(trace: &Trace, path: &Path, dt_s: f64) -> Result<()> {
    std::fs::write(path, trace_csv_bytes(trace, dt_s)?).map_err(|e| Error::io(path, e))?;
    let meta = TraceMeta {
        seed: trace.seed,
        dt_s,
        regime: trace.meta.clone(),
    };
    let mp = meta_path(path);
    std::fs::write(&mp, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&mp, e))
}

/// Read a trace CSV; the sidecar is picked up when present.
pub fn read_trace_csv(path: &Path, mode: ParseMode) -> Result<Trace> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = rd.headers()?.clone();
    let need = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            column: name.into(),
            msg: "missing mandatory column".into(),
        })
    };
    let it = need("t_index")?;
    let its = need("t_start_s")?;
    let ic = need("capacity_mbps")?;
    let thr = user_columns(&headers, "thr_u", "_mbps");
    if thr.is_empty() {
        return Err(Error::Schema {
            column: "thr_u0_mbps".into(),
            msg: "missing mandatory column".into(),
        });
    }
    let u = thr.len();
    let mut cols = vec![thr];
    for (p, s) in &QOS[1..] {
        let c = user_columns(&headers, p, s);
        if c.len() != u {
            return Err(Error::Schema {
                column: format!("{p}{}{s}", c.len()),
                msg: "missing mandatory column".into(),
            });
        }
        cols.push(c);
    }
    let truth = user_columns(&headers, "demand_true_u", "_mbps");
    if !truth.is_empty() && truth.len() != u {
        return Err(Error::Schema {
            column: format!("demand_true_u{}_mbps", truth.len()),
            msg: "truth columns must cover every user".into(),
        });
    }
    let mut known = vec![it, its, ic];
    for c in &cols {
        known.extend(c);
    }
    known.extend(&truth);
    check_unknown(&headers, &known, mode)?;

    let mut windows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let t: u64 = rec[it].trim().parse().map_err(|_| Error::Schema {
            column: "t_index".into(),
            msg: format!("not an integer: `{}`", &rec[it]),
        })?;
        finite(&rec[its], "t_start_s")?;
        let f = |c: usize| finite(&rec[c], &headers[c]);
        let mut users = Vec::with_capacity(u);
        for i in 0..u {
            users.push(UserWindow {
                throughput_mbps: f(cols[0][i])?,
                buffer_mb: f(cols[1][i])?,
                delay_s: f(cols[2][i])?,
                loss_frac: f(cols[3][i])?,
                demand_true_mbps: match truth.get(i) {
                    Some(c) => Some(f(*c)?),
                    None => None,
                },
            });
        }
        windows.push(WindowObservation {
            t_index: t,
            capacity_mbps: f(ic)?,
            users,
        });
    }
    let mp = meta_path(path);
    let meta: Option<TraceMeta> = if mp.exists() {
        let s = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        Some(serde_json::from_str(&s)?)
    } else {
        None
    };
    Ok(Trace {
        windows,
        seed: meta.as_ref().map_or(0, |m| m.seed),
        meta: meta.and_then(|m| m.regime),
        has_truth: !truth.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let p = [
            Packet { ts_s: 0.25, user: 1, size_bytes: 50_000 },
            Packet { ts_s: 0.05, user: 0, size_bytes: 25_000 },
            Packet { ts_s: 0.15, user: 0, size_bytes: 25_000 },
        ];
        let s = aggregate(&p, 0.2, 2, None).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.throughput_mbps[0][0] - 2.0).abs() < 1e-12);
        assert_eq!(s.throughput_mbps[0][1], 0.0);
        assert_eq!(s.throughput_mbps[1][0], 0.0);
        assert!((s.throughput_mbps[1][1] - 2.0).abs() < 1e-12);
        let s = aggregate(&p, 0.2, 2, Some(0.2)).unwrap();
        assert_eq!((s.len(), s.dropped_tail_bytes), (1, 50_000));
        assert!(aggregate(&[], 0.2, 2, None).unwrap().is_empty());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let data = "ts_s,user_id,size_bytes\n0.1,0,100\n0.2,x,100\n";
        let e = parse_packets(data.as_bytes(), Path::new("p.csv"), 2).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let data = "ts_s,user_id,size_bytes\n0.1,5,100\n";
        assert!(parse_packets(data.as_bytes(), Path::new("p.csv"), 2).is_err());
    }
}
