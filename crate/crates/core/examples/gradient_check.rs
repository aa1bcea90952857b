//! Compare reverse-mode gradients of each model with central differences.

use std::sync::Arc;

use tgdin::kernel::models::{model_gradient, ModelSpec};
use tgdin::kernel::Mat;
use tgdin::rng::derive_stream;

fn main() -> anyhow::Result<()> {
    let specs = [
        ModelSpec::tgdin_mlp(9, 5, [16, 16, 16], 2),
        ModelSpec::gru_lstm(9, 5, 8, 8, 2),
        ModelSpec::attn_direct(9, 5, 8, 2, 16, 2),
    ];
    for spec in specs {
        let params = spec.init_params(&mut derive_stream(1, 0));
        let mut rng = derive_stream(2, 0);
        let x = Mat::from_vec(4, spec.input_dim(), (0..4 * spec.input_dim()).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let target = Arc::new(Mat::filled(4, 2, 1.5));
        let loss = |p: &tgdin::kernel::ParamVector| {
            let t = target.clone();
            model_gradient(p, &spec, &x, move |tape, y| Ok(tape.mse_log1p(y, t)))
        };
        let (_, grad) = loss(&params)?;
        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in (0..params.len()).step_by((params.len() / 50).max(1)) {
            let mut plus = params.clone();
            plus.values[i] += h;
            let mut minus = params.clone();
            minus.values[i] -= h;
            let fd = (loss(&plus)?.0 - loss(&minus)?.0) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
        }
        println!("{:<12} {:6} params, worst relative error {worst:.2e}", spec.kind.name(), params.len());
    }
    Ok(())
}
