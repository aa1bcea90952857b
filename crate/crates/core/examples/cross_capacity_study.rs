//! Small cross-capacity study: the demand model against a baseline trained
//! at 20 Mbps, written out as CSV tables and SVG charts.

use tgdin::baselines::train_direct;
use tgdin::config::Config;
use tgdin::eval::{emit_report, run_cross_capacity, EvalModel};
use tgdin::kernel::ModelKind;
use tgdin::regimegen::{build_single_capacity_corpus, build_test_grid};
use tgdin::training::{train_tgdin, TrainOptions};

fn main() -> anyhow::Result<()> {
    let mut cfg = Config::default();
    cfg.regimes.test_capacities_mbps = vec![20.0, 60.0, 200.0, 360.0];
    cfg.train.traces_per_round = 30;
    cfg.train.max_epochs = 15;
    cfg.train.lr = 1e-3;
    cfg.baselines.max_epochs = 8;
    let consts = cfg.consts();

    let tg = train_tgdin(&cfg, &TrainOptions::default())?.checkpoint;
    let corpus = build_single_capacity_corpus(20.0, 20, 3, &cfg.regimes, &consts, 1)?;
    let gru = train_direct(ModelKind::GruLstm, &corpus, &cfg, 3)?.checkpoint;

    let grid: Vec<_> = build_test_grid(&cfg.regimes, &consts, 1)?.into_iter().map(|n| n.trace).collect();
    let models = [
        EvalModel { id: "tgdin".into(), source: "randomized".into(), checkpoint: tg },
        EvalModel { id: "gru_lstm(20)".into(), source: "20".into(), checkpoint: gru },
    ];
    let table = run_cross_capacity(&models, &grid, &consts)?;
    let out = std::env::temp_dir().join("tgdin_cross_capacity");
    for p in emit_report(&[table], &out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
