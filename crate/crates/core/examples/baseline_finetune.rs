//! Train a GRU-LSTM throughput baseline at one capacity and adapt it to a
//! larger one with 5% of the target windows.

use tgdin::baselines::{finetune_direct, train_direct, FinetuneMode, FinetuneSpec};
use tgdin::config::Config;
use tgdin::eval::{run_cross_capacity, EvalModel, POOLED};
use tgdin::kernel::ModelKind;
use tgdin::regimegen::{build_single_capacity_corpus, build_test_grid};

fn main() -> anyhow::Result<()> {
    let mut cfg = Config::default();
    cfg.baselines.max_epochs = 10;
    cfg.regimes.test_capacities_mbps = vec![60.0, 200.0];
    let consts = cfg.consts();

    let corpus = build_single_capacity_corpus(60.0, 30, 1, &cfg.regimes, &consts, 1)?;
    let trained = train_direct(ModelKind::GruLstm, &corpus, &cfg, 1)?;
    println!("trained for {} epochs", trained.log.len());

    let grid: Vec<_> = build_test_grid(&cfg.regimes, &consts, 1)?.into_iter().map(|n| n.trace).collect();
    let at_200: Vec<_> = grid.iter().filter(|t| t.windows[0].capacity_mbps > 100.0).cloned().collect();
    let spec = FinetuneSpec {
        budget_frac: 0.05,
        mode: FinetuneMode::Full,
        target_capacity_mbps: 200.0,
        source_id: "gru_lstm(60)".into(),
    };
    let adapted = finetune_direct(&trained.checkpoint, &spec, &at_200, &cfg)?;

    let models = [
        EvalModel { id: "gru_lstm(60)".into(), source: "60".into(), checkpoint: trained.checkpoint },
        EvalModel { id: "gru_lstm(60)+5%full".into(), source: "60".into(), checkpoint: adapted },
    ];
    // The adapted model is scored on all windows here, calibration slice included.
    let table = run_cross_capacity(&models, &grid, &consts)?;
    for r in table.records.iter().filter(|r| r.scenario == POOLED) {
        println!("{:<22} C={:<5} rmse {:.3}", r.model, r.target_capacity_mbps, r.rmse_mbps);
    }
    Ok(())
}
