use std::path::Path;

use rainfuse_core::eval::leave_one_out;
use rainfuse_core::fusion::{run_sequence, FusionConfig};
use rainfuse_core::ingest::{parse_vehicle_trace, write_vehicle_trace};
use rainfuse_core::io::{read_field, write_field, Provenance};
use rainfuse_core::sensor::WiperSensorModel;
use rainfuse_core::storm::{
    fit_injection, radar_sequence, simulate_fleet, truth_at, Fleet, RadarNoise, RainCell, StormScenario,
};

fn blanket(amplitude: f64, tpr: f64, tnr: f64) -> StormScenario {
    let mut scn = StormScenario::bundled_small();
    scn.duration = 60_000.0;
    scn.cells = vec![RainCell { x: 3500.0, y: 3500.0, amplitude, radius: 1e7, vx: 0.0, vy: 0.0 }];
    scn.fleet = Fleet {
        n_vehicles: 100,
        speed: 10.0,
        tick: 60.0,
        sensor: Some(WiperSensorModel { tpr, tnr, rain_threshold: 0.1 }),
        mister_rate: 0.0,
    };
    scn
}

fn on_fraction(scn: &StormScenario) -> (f64, usize) {
    let obs = simulate_fleet(scn);
    let on = obs.iter().filter(|o| o.wiper_level.get() > 0).count();
    (on as f64 / obs.len() as f64, obs.len())
}

#[test]
fn wiper_rates_over_many_ticks() {
    let (tpr, n) = on_fraction(&blanket(20.0, 0.931, 0.982));
    assert_eq!(n, 100_000);
    assert!((tpr - 0.931).abs() <= 0.005, "{tpr}");
    let (fpr, _) = on_fraction(&blanket(0.0, 0.931, 0.982));
    assert!((1.0 - fpr - 0.982).abs() <= 0.005, "{fpr}");
}

#[test]
fn perfect_sensor_follows_truth() {
    let mut scn = StormScenario::bundled_default();
    scn.fleet.sensor = Some(WiperSensorModel { tpr: 1.0, tnr: 1.0, rain_threshold: 0.1 });
    scn.fleet.mister_rate = 0.0;
    let start = scn.start_epoch();
    for o in simulate_fleet(&scn) {
        let wet = truth_at(&scn, o.timestamp - start, o.position) > 0.1;
        assert_eq!(o.wiper_level.get() > 0, wet, "{o:?}");
    }
}

#[test]
fn generation_is_deterministic() {
    let scn = StormScenario::bundled_default();
    assert_eq!(simulate_fleet(&scn), simulate_fleet(&scn));
    assert_eq!(radar_sequence(&scn), radar_sequence(&scn));
    let mut other = scn.clone();
    other.seed += 1;
    assert_ne!(simulate_fleet(&scn), simulate_fleet(&other));
}

#[test]
fn simulator_output_survives_ingestion() {
    let scn = StormScenario::bundled_default();
    let obs = simulate_fleet(&scn);
    let parsed = parse_vehicle_trace(&write_vehicle_trace(&obs, &scn.geo), Path::new("t"), &scn.geo).unwrap();
    assert!(parsed.malformed.is_empty());
    assert_eq!(parsed.observations.len(), obs.len());
    for (a, b) in parsed.observations.iter().zip(&obs) {
        assert_eq!((&a.vehicle_id, a.timestamp, a.wiper_level), (&b.vehicle_id, b.timestamp, b.wiper_level));
        assert!(a.position.distance(&b.position) < 1e-6, "{a:?} {b:?}");
    }
    let again = write_vehicle_trace(&parsed.observations, &scn.geo);
    let reparsed = parse_vehicle_trace(&again, Path::new("t"), &scn.geo).unwrap();
    assert_eq!(reparsed.observations, parsed.observations);

    let prov = Provenance::new("abc", scn.seed);
    for (truth, radar) in radar_sequence(&scn) {
        for f in [truth, radar] {
            let back = read_field(&write_field(&prov, "radar", "mm/h", &f), Path::new("f")).unwrap();
            assert_eq!(back.field, f);
            assert_eq!(back.provenance, Some(prov.clone()));
        }
    }
}

#[test]
fn bundled_injection_matches_its_fit() {
    let scn = StormScenario::bundled_default();
    let edges = [0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
    let fitted = fit_injection(&scn, 0.1, &edges).unwrap().to_text();
    let asset = include_str!("../assets/injection_default.csv");
    let body: String = asset.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    assert_eq!(fitted, body);
}

#[test]
fn perfect_observations_do_not_drift_from_truth() {
    let mut scn = StormScenario::bundled_default();
    scn.radar = RadarNoise { bias: 1.0, lognormal_sigma: 0.0, miss_regions: vec![] };
    scn.fleet.sensor = Some(WiperSensorModel { tpr: 1.0, tnr: 1.0, rain_threshold: 0.1 });
    scn.fleet.mister_rate = 0.0;
    let seq = radar_sequence(&scn);
    let radar: Vec<_> = seq.iter().map(|(_, r)| r.clone()).collect();
    let cfg = FusionConfig { global_seed: 1, time_bin_width: scn.radar_interval, ..FusionConfig::default() };
    let bins = run_sequence(&radar, &simulate_fleet(&scn), &cfg).unwrap();
    let err = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    for (bin, (truth, _)) in bins.iter().zip(&seq) {
        let prior = err(bin.prior.mean_field().values(), truth.values());
        let post = err(bin.posterior.mean_field().values(), truth.values());
        let scale = truth.mean();
        assert!(post <= prior + 0.02 * scale, "bin {:?}: posterior {post} prior {prior}", bin.prior.time_bin());
    }
}

#[test]
fn leave_one_out_ignores_input_order() {
    let scn = StormScenario::bundled_small();
    let radar: Vec<_> = radar_sequence(&scn).into_iter().map(|(_, r)| r).collect();
    let obs = simulate_fleet(&scn);
    let cfg = FusionConfig { global_seed: 9, ..FusionConfig::default() };
    let a = leave_one_out(&obs, &radar, &cfg).unwrap();
    let mut reversed = obs.clone();
    reversed.reverse();
    let b = leave_one_out(&reversed, &radar, &cfg).unwrap();
    assert_eq!(a.radar.auc, b.radar.auc);
    assert_eq!(a.fused.auc, b.fused.auc);
    assert_eq!(a.samples, b.samples);
}
