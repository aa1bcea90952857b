//! CSV tables and SVG line charts for metric tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{MetricRecord, MetricTable, POOLED};
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 9] = [
    "model",
    "source",
    "target_capacity_mbps",
    "scenario",
    "rmse_mbps",
    "rel_mae",
    "pearson_r",
    "pearson_undefined",
    "n_windows",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn table_csv(table: &MetricTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in &table.records {
        w.write_record([
            r.model.clone(),
            r.source.clone(),
            r.target_capacity_mbps.to_string(),
            r.scenario.clone(),
            r.rmse_mbps.to_string(),
            opt(r.rel_mae),
            opt(r.pearson_r),
            r.pearson_undefined.to_string(),
            r.n_windows.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))
}

#[derive(Clone, Copy)]
enum Metric {
    Rmse,
    RelMae,
    Pearson,
}

impl Metric {
    const ALL: [Metric; 3] = [Metric::Rmse, Metric::RelMae, Metric::Pearson];

    fn key(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::RelMae => "rel_mae",
            Metric::Pearson => "pearson_r",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Rmse => "RMSE (Mbps)",
            Metric::RelMae => "relative MAE",
            Metric::Pearson => "Pearson r",
        }
    }

    fn of(self, r: &MetricRecord) -> Option<f64> {
        match self {
            Metric::Rmse => Some(r.rmse_mbps),
            Metric::RelMae => r.rel_mae,
            Metric::Pearson => r.pearson_r,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart of the pooled rows: capacity on x, one polyline per model.
fn chart_svg(table: &MetricTable, metric: Metric) -> String {
    // model -> (capacity, value), keeping first-seen model order
    let mut order: Vec<String> = Vec::new();
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in table.records.iter().filter(|r| r.scenario == POOLED) {
        if let Some(v) = metric.of(r) {
            if !series.contains_key(&r.model) {
                order.push(r.model.clone());
            }
            series.entry(r.model.clone()).or_default().push((r.target_capacity_mbps, v));
        }
    }
    let pts = series.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let (w, h, ml, mr, mt, mb) = (640.0, 400.0, 60.0, 180.0, 30.0, 50.0);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="18" font-family="sans-serif" font-size="13" text-anchor="middle">{} ({})</text>"#,
        (w - mr + ml) / 2.0,
        esc(metric.label()),
        esc(&table.study)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{ml}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb
    );
    let _ = writeln!(s, r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{:.1}" stroke="black"/>"#, h - mb);
    for i in 0..=4 {
        let yv = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{yv:.3}</text>"#,
            ml - 4.0,
            sy(yv) + 3.0
        );
    }
    let mut xs: Vec<f64> = series.values().flatten().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in &xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{x}</text>"#,
            sx(*x),
            h - mb + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">capacity (Mbps)</text>"#,
        (w - mr + ml) / 2.0,
        h - 12.0
    );
    for (i, model) in order.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = series[model].clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            coords.join(" "),
            esc(model)
        );
        let ly = mt + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            w - mr + 10.0,
            ly + 10.0,
            esc(model)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write `metrics_<study>.csv` and `fig_<study>_<metric>.svg` per table.
/// Returns the written paths in order.
pub fn emit_report(tables: &[MetricTable], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if tables.is_empty() || tables.iter().all(|t| t.records.is_empty()) {
        return Err(Error::invalid("no metric records to report"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for t in tables {
        let p = out_dir.join(format!("metrics_{}.csv", t.study));
        write(&p, &table_csv(t)?)?;
        written.push(p);
        for m in Metric::ALL {
            let p = out_dir.join(format!("fig_{}_{}.svg", t.study, m.key()));
            write(&p, chart_svg(t, m).as_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Parse a table written by [`emit_report`].
pub fn read_table_csv(path: &Path, study: &str) -> Result<MetricTable> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    })?;
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_COLUMNS {
        return Err(Error::Schema {
            column: headers.iter().collect::<Vec<_>>().join(","),
            msg: "unexpected metric table header".into(),
        });
    }
    let num = |s: &str, col: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Schema {
            column: col.into(),
            msg: format!("not a number: `{s}`"),
        })
    };
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row?;
        let o = |i: usize, col: &str| -> Result<Option<f64>> {
            if row[i].is_empty() {
                Ok(None)
            } else {
                num(&row[i], col).map(Some)
            }
        };
        records.push(MetricRecord {
            model: row[0].to_string(),
            source: row[1].to_string(),
            target_capacity_mbps: num(&row[2], "target_capacity_mbps")?,
            scenario: row[3].to_string(),
            rmse_mbps: num(&row[4], "rmse_mbps")?,
            rel_mae: o(5, "rel_mae")?,
            pearson_r: o(6, "pearson_r")?,
            pearson_undefined: num(&row[7], "pearson_undefined")? as usize,
            n_windows: num(&row[8], "n_windows")? as usize,
        });
    }
    Ok(MetricTable {
        study: study.to_string(),
        records,
    })
}
