//! Push a congested window through the scheduling/queueing map and print
//! the observables and their Jacobian with respect to demand.

use tgdin::config::SimConstants;
use tgdin::theory::{theory_forward, theory_jacobian};

fn main() -> anyhow::Result<()> {
    let consts = SimConstants::default();
    let demand = [30.0, 12.0];
    let buffer = [0.5, 0.0];
    for capacity in [100.0, 40.0, 20.0] {
        let out = theory_forward(&demand, capacity, &buffer, consts.dt_s, &consts)?;
        println!("C = {capacity} Mbps");
        println!("  allocation {:?}", out.allocation_mbps);
        println!("  throughput {:?}", out.throughput_mbps);
        println!("  delay      {:?}", out.delay_s);
        println!("  loss       {:?}", out.loss_frac);
        let j = theory_jacobian(&demand, capacity, &buffer, consts.dt_s, &consts)?;
        println!("  d r / d d  {:?}", j.throughput);
    }
    Ok(())
}
