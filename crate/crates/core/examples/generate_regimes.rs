//! Build the test grid and the calibration set, summarize them and write one
//! trace to CSV.

use tgdin::config::Config;
use tgdin::ingest::write_trace_csv;
use tgdin::regimegen::{build_calibration_set, build_test_grid, random_trace};

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn main() -> anyhow::Result<()> {
    let cfg = Config::default();
    let consts = cfg.consts();

    let grid = build_test_grid(&cfg.regimes, &consts, 1)?;
    println!("test grid: {} traces", grid.len());
    for nt in grid.iter().step_by(cfg.regimes.grid_replicates * 6) {
        let t = &nt.trace;
        let thr = mean(t.windows.iter().map(|w| w.total_throughput()));
        let busy = t.windows.iter().filter(|w| w.users.iter().any(|u| u.buffer_mb > 0.0)).count();
        println!("  {:<40} mean total thr {thr:7.2} Mbps, {busy:3} backlogged windows", nt.name);
    }

    let cal = build_calibration_set(&cfg.regimes, &consts, 1)?;
    println!("calibration set: {} traces, e.g. {}", cal.len(), cal[0].name);

    let t = random_trace(&cfg.regimes, 42, &consts)?;
    let dir = std::env::temp_dir().join("tgdin_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("random_42.csv");
    write_trace_csv(&t, &path, consts.dt_s)?;
    let users: Vec<String> = t
        .meta
        .iter()
        .flat_map(|m| &m.users)
        .map(|p| format!("{:?} {:?}", p.pattern, p.regime.unwrap()))
        .collect();
    println!("wrote {} ({} windows, users: {})", path.display(), t.len(), users.join(", "));
    Ok(())
}
