//! Train the demand model on randomized regimes for a few epochs, then
//! recover per-user demand on an unseen trace.

use tgdin::config::Config;
use tgdin::eval::rmse;
use tgdin::regimegen::random_trace;
use tgdin::training::{infer_demand, train_tgdin, TrainOptions};

fn main() -> anyhow::Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let mut cfg = Config::default();
    cfg.seed = 7;
    cfg.train.traces_per_round = 50;
    cfg.train.max_epochs = epochs;
    cfg.train.lr = 1e-3;

    let out = train_tgdin(&cfg, &TrainOptions::default())?;
    for r in &out.log {
        println!(
            "epoch {:3}  train {:.4}  calibration rmse {:.3}{}",
            r.epoch,
            r.train.total,
            r.calibration_rmse,
            if r.improved { "  *" } else { "" }
        );
    }

    let trace = random_trace(&cfg.regimes, 9999, &cfg.consts())?;
    let est = infer_demand(&out.checkpoint, &trace)?;
    for u in 0..trace.n_users() {
        let pred: Vec<f64> = est.rows.iter().map(|r| r[u]).collect();
        let truth: Vec<f64> = trace.demand_true(u).unwrap()[est.first_t..].to_vec();
        println!("user {u}: demand rmse {:.3} Mbps", rmse(&pred, &truth)?);
    }
    Ok(())
}
