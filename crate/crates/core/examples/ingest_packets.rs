//! Aggregate a packet log into windows and rebuild the model's features,
//! once from throughput alone and once with offered rates.

use rand::{Rng, SeedableRng};
use tgdin::config::SimConstants;
use tgdin::ingest::{aggregate, reconstruct_features, CapacityInput, Packet};

fn main() -> anyhow::Result<()> {
    let consts = SimConstants::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut packets = Vec::new();
    for _ in 0..20_000 {
        let user = rng.random_range(0..2);
        packets.push(Packet {
            ts_s: rng.random_range(0.0..10.0),
            user,
            size_bytes: if user == 0 { 1500 } else { rng.random_range(64..1500) },
        });
    }
    let mut series = aggregate(&packets, consts.dt_s, 2, Some(10.0))?;
    let total: u64 = packets.iter().map(|p| p.size_bytes).sum();
    let binned: u64 = series.bytes.iter().flatten().sum();
    println!("{} windows, {binned} of {total} bytes binned, {} dropped", series.len(), series.dropped_tail_bytes);

    let cap = CapacityInput::Constant(20.0);
    let plain = reconstruct_features(&series, Some(&cap), &consts)?;
    println!("throughput only: max buffer {:.3} MB", max_buffer(&plain));

    // Pretend user 0 offered twice what got through.
    series.offered_mbps = Some(series.throughput_mbps.iter().map(|r| vec![2.0 * r[0], r[1]]).collect());
    let offered = reconstruct_features(&series, Some(&cap), &consts)?;
    println!("with offered rates: max buffer {:.3} MB", max_buffer(&offered));
    Ok(())
}

fn max_buffer(t: &tgdin::trace::Trace) -> f64 {
    t.windows.iter().flat_map(|w| w.users.iter().map(|u| u.buffer_mb)).fold(0.0, f64::max)
}
