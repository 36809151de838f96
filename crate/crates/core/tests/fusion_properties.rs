use proptest::prelude::*;
use rainfuse_core::fusion::{assimilate_bin, build_prior, four_case_report, FusionConfig};
use rainfuse_core::model::{GridSpec, Point, RainField, VehicleObservation, WiperLevel};

fn grid() -> GridSpec {
    GridSpec::new(0.0, 0.0, 1000.0, 12, 12).unwrap()
}

fn reading(id: &str, t: f64, p: Point, level: u8) -> VehicleObservation {
    VehicleObservation::new(id, t, p, WiperLevel::new(level).unwrap()).unwrap()
}

/// Fields that are wet everywhere or dry everywhere, so every reading agrees
/// with every cell it reaches.
fn radar_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        Just(vec![0.0f64; 144]),
        prop::collection::vec(2.0f64..20.0, 144),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Readings that agree with radar leave rainy cells within 15% of their
    /// prior mean, never raise a dry cell, and keep every case label.
    #[test]
    fn agreeing_evidence_changes_little(
        values in radar_strategy(),
        picks in prop::collection::vec(0usize..144, 1..12),
        seed in any::<u64>(),
    ) {
        let g = grid();
        let radar = RainField::new(g, 0.0, values.clone()).unwrap();
        let cfg = FusionConfig { global_seed: seed, ..FusionConfig::default() };
        let prior = build_prior(&radar, &cfg).unwrap();
        let obs: Vec<_> = picks
            .iter()
            .enumerate()
            .map(|(k, &i)| reading(&format!("v{k}"), 30.0, g.center_linear(i), if values[i] > 0.1 { 2 } else { 0 }))
            .collect();
        let (post, _) = assimilate_bin(&prior, &obs, &cfg).unwrap();
        let before = four_case_report(&radar, &prior, 0.1).unwrap();
        let after = four_case_report(&radar, &post, 0.1).unwrap();
        for (i, v) in values.iter().enumerate() {
            let (m0, m1) = (prior.cell(i).posterior_mean(), post.cell(i).posterior_mean());
            if *v > 0.1 {
                prop_assert!((m1 - m0).abs() < 0.15 * m0, "cell {i}: {m0} -> {m1}");
            } else {
                prop_assert!(m1 <= m0 + 1e-12, "cell {i}: {m0} -> {m1}");
            }
        }
        prop_assert_eq!(before, after);
    }

    /// A second wiper-off vehicle at the same place never raises the
    /// probability of rain (importance step, no resampling).
    #[test]
    fn second_off_reading_never_raises_rain(
        value in prop_oneof![Just(0.0f64), 0.5f64..20.0],
        dx in -2500.0f64..2500.0,
        dy in -2500.0f64..2500.0,
        seed in any::<u64>(),
    ) {
        let g = grid();
        let radar = RainField::new(g, 0.0, vec![value; g.len()]).unwrap();
        let cfg = FusionConfig { global_seed: seed, ess_fraction: 0.0, ..FusionConfig::default() };
        let prior = build_prior(&radar, &cfg).unwrap();
        let at = Point::new(5500.0 + dx, 5500.0 + dy);
        let one = [reading("a", 30.0, at, 0)];
        let two = [reading("a", 30.0, at, 0), reading("b", 30.0, at, 0)];
        let (p1, _) = assimilate_bin(&prior, &one, &cfg).unwrap();
        let (p2, _) = assimilate_bin(&prior, &two, &cfg).unwrap();
        for (a, b) in p1.prob_rain().iter().zip(p2.prob_rain()) {
            prop_assert!(b <= a, "{b} > {a}");
        }
    }
}

#[test]
fn worker_count_does_not_change_posterior() {
    let g = grid();
    let values: Vec<f64> = (0..g.len()).map(|i| ((i * 7) % 11) as f64).collect();
    let radar = RainField::new(g, 0.0, values).unwrap();
    let cfg = FusionConfig { global_seed: 4, ..FusionConfig::default() };
    let obs: Vec<_> = (0..40)
        .map(|k| reading(&format!("v{}", k % 5), 7.0 * k as f64, g.center_linear((k * 13) % 144), (k % 3) as u8))
        .collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| assimilate_bin(&build_prior(&radar, &cfg).unwrap(), &obs, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}
