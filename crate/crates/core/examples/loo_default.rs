//! Leave-one-out AUCs on the default storm.

use std::time::Instant;

use rainfuse_core::eval::leave_one_out;
use rainfuse_core::fusion::FusionConfig;
use rainfuse_core::storm::{radar_sequence, simulate_fleet, truth_at, StormScenario};

fn main() {
    let scn = StormScenario::bundled_default();
    let t0 = Instant::now();
    let radar: Vec<_> = radar_sequence(&scn).into_iter().map(|(_, r)| r).collect();
    let obs = simulate_fleet(&scn);
    let cfg = FusionConfig { global_seed: scn.seed, ..FusionConfig::default() };
    let res = leave_one_out(&obs, &radar, &cfg).expect("loo");
    let start = scn.start_epoch();
    let (rt, ft) = res
        .curves_against(|s| truth_at(&scn, s.timestamp - start, s.position) > 0.1)
        .expect("truth curves");
    println!("samples {}", res.samples.len());
    println!("wiper reference: radar {:.4} fused {:.4}", res.radar.auc, res.fused.auc);
    println!("truth reference: radar {:.4} fused {:.4}", rt.auc, ft.auc);
    println!("elapsed {:.2?}", t0.elapsed());
}
