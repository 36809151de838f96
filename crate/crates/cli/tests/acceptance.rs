//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rainfuse_core::eval::{leave_one_out, rates, ConfusionCounts};
use rainfuse_core::fusion::{assimilate_bin, build_prior, FusionConfig, PosteriorField};
use rainfuse_core::ingest::aggregate_wiper;
use rainfuse_core::kernel::{detection_probability, KernelParams};
use rainfuse_core::model::{bin_of, GridSpec, Point, RainField, VehicleObservation, WiperLevel};
use rainfuse_core::particle::ParticleSet;
use rainfuse_core::rng::{stream, Purpose};
use rainfuse_core::sensor::WiperSensorModel;
use rainfuse_core::storm::{radar_sequence, simulate_fleet, truth_at, Fleet, RainCell, StormScenario};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reading(t: f64, p: Point, level: u8) -> VehicleObservation {
    VehicleObservation::new("probe", t, p, WiperLevel::new(level).unwrap()).unwrap()
}

fn likelihood(on: bool, wet: bool, p_d: f64, s: &WiperSensorModel) -> f64 {
    let detected = match (on, wet) {
        (true, true) => s.tpr,
        (false, true) => 1.0 - s.tpr,
        (true, false) => 1.0 - s.tnr,
        (false, false) => s.tnr,
    };
    p_d * detected + (1.0 - p_d) * 0.5
}

/// Particle posterior of one cell against the exact recursion on a
/// 32-point support.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let support: Vec<f64> = (0..32).map(|k| 0.025 * (k * k) as f64).collect();
    let raw: Vec<f64> = support
        .iter()
        .enumerate()
        .map(|(k, z)| if k == 0 { 0.6 } else { (-z / 4.0).exp() })
        .collect();
    let total: f64 = raw.iter().sum();
    let prior: Vec<f64> = raw.iter().map(|p| p / total).collect();

    let cfg = FusionConfig {
        n_particles: 10_000,
        roughening: 0.0,
        global_seed: 11,
        ..FusionConfig::default()
    };
    let grid = GridSpec::new(0.0, 0.0, 1000.0, 1, 1).unwrap();
    let mut rng = stream(11, Purpose::Evaluate, &[1]);
    let values: Vec<f64> = (0..cfg.n_particles)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, p) in prior.iter().enumerate() {
                acc += p;
                if u < acc {
                    return support[k];
                }
            }
            support[31]
        })
        .collect();
    let cell = ParticleSet::from_values(values, 3).unwrap();
    let bin = bin_of(0.0, cfg.time_bin_width);
    let mut field = PosteriorField::new(grid, bin, vec![cell], cfg.sensor.rain_threshold).unwrap();

    let sigma = cfg.kernel.sigma;
    let updates = [(true, 0.0), (false, sigma), (true, 0.5 * sigma)];
    let mut exact = prior.clone();
    for (k, &(on, d)) in updates.iter().enumerate() {
        let obs = reading(10.0 + 60.0 * k as f64, Point::new(d, 0.0), if on { 1 } else { 0 });
        field = assimilate_bin(&field, &[obs], &cfg).unwrap().0;
        let p_d = cfg.kernel.at_distance(d);
        for (p, z) in exact.iter_mut().zip(&support) {
            *p *= likelihood(on, cfg.sensor.is_raining(*z), p_d, &cfg.sensor);
        }
        let s: f64 = exact.iter().sum();
        exact.iter_mut().for_each(|p| *p /= s);
    }
    let index: HashMap<u64, usize> = support.iter().enumerate().map(|(k, z)| (z.to_bits(), k)).collect();
    let mut particle = vec![0.0; 32];
    let c = field.cell(0);
    for (v, w) in c.values().iter().zip(c.weights()) {
        particle[index[&v.to_bits()]] += w;
    }
    let tv = 0.5 * particle.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let secs = start.elapsed().as_secs_f64();
    check(tv < 0.05 && secs < 10.0, format!("TV {tv:.4} (< 0.05), {secs:.2} s (< 10 s)"))
}

fn uniform_radar(value: f64) -> RainField {
    let grid = GridSpec::new(0.0, 0.0, 1000.0, 21, 21).unwrap();
    RainField::new(grid, 0.0, vec![value; grid.len()]).unwrap()
}

/// Uniform 5 mm/h radar, one vehicle reporting off through the bin.
fn hole() -> Outcome {
    let start = Instant::now();
    let cfg = FusionConfig::default();
    let radar = uniform_radar(5.0);
    let prior = build_prior(&radar, &cfg).unwrap();
    let at = Point::new(10_000.0, 10_000.0);
    let obs: Vec<_> = (0..5).map(|k| reading(30.0 + 60.0 * k as f64, at, 0)).collect();
    let (post, _) = assimilate_bin(&prior, &obs, &cfg).unwrap();
    let grid = *radar.grid();
    let cell = grid.linear(grid.cell_of(at).unwrap());
    let mean = post.cell(cell).posterior_mean();
    let cutoff = cfg.kernel.cutoff();
    let far: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.center_linear(i).distance(&at) >= cutoff)
        .collect();
    let identical = far.iter().all(|&i| post.cell(i) == prior.cell(i));
    let secs = start.elapsed().as_secs_f64();
    check(
        mean < 0.5 && identical && !far.is_empty() && secs < 5.0,
        format!(
            "posterior mean {mean:.4} mm/h (< 0.5), {} far cells identical: {identical}, {secs:.2} s (< 5 s)",
            far.len()
        ),
    )
}

/// Zero radar, one wiper-on reading.
fn addition() -> Outcome {
    let cfg = FusionConfig::default();
    let radar = uniform_radar(0.0);
    let prior = build_prior(&radar, &cfg).unwrap();
    let at = Point::new(10_000.0, 10_000.0);
    let (post, _) = assimilate_bin(&prior, &[reading(30.0, at, 2)], &cfg).unwrap();
    let got = post.prob_rain_at(at).unwrap();
    let (e, s) = (cfg.prior_epsilon, cfg.sensor);
    let want = e * s.tpr / (e * s.tpr + (1.0 - e) * (1.0 - s.tnr));
    check(
        (got - want).abs() <= 0.05,
        format!("prob_above(tau) {got:.4}, analytic {want:.4}, |diff| {:.4} (<= 0.05)", (got - want).abs()),
    )
}

fn golden_auc() -> Option<(String, String)> {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/default_auc.csv")).ok()?;
    let row = text.lines().find(|l| !l.starts_with('#') && !l.starts_with("radar"))?;
    let (r, f) = row.split_once(',')?;
    Some((r.trim().to_string(), f.trim().to_string()))
}

/// Leave-one-out on the bundled default storm.
fn roc_dominance() -> Outcome {
    let start = Instant::now();
    let scn = StormScenario::bundled_default();
    let radar: Vec<RainField> = radar_sequence(&scn).into_iter().map(|(_, r)| r).collect();
    let obs = simulate_fleet(&scn);
    let cfg = FusionConfig {
        global_seed: scn.seed,
        time_bin_width: scn.radar_interval,
        ..FusionConfig::default()
    };
    let res = leave_one_out(&obs, &radar, &cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let margin = res.fused.auc - res.radar.auc;
    let golden = golden_auc();
    let matches = golden
        .as_ref()
        .is_some_and(|(r, f)| *r == res.radar.auc.to_string() && *f == res.fused.auc.to_string());
    check(
        margin >= 0.03 && secs < 120.0 && matches,
        format!(
            "fused AUC {:.4} vs radar {:.4}, margin {margin:.4} (>= 0.03), golden match: {matches}, {secs:.1} s (< 120 s)",
            res.fused.auc, res.radar.auc
        ),
    )
}

/// Wiper states from the simulator scored against simulator truth.
fn rate_recovery() -> Outcome {
    let mut scn = StormScenario::bundled_small();
    scn.seed = 5;
    scn.duration = 60_000.0;
    scn.cells = vec![RainCell { x: 0.0, y: 3500.0, amplitude: 20.0, radius: 1200.0, vx: 0.0, vy: 0.0 }];
    scn.fleet = Fleet {
        n_vehicles: 100,
        speed: 10.0,
        tick: 60.0,
        sensor: Some(WiperSensorModel { tpr: 0.931, tnr: 0.982, rain_threshold: 0.1 }),
        mister_rate: 0.0,
    };
    let obs = simulate_fleet(&scn);
    let start = scn.start_epoch();
    let truth = rainfuse_core::storm::truth_labels(&scn, &obs);
    let bins = aggregate_wiper(&obs, 60.0);
    let predicted: Vec<_> = bins.iter().filter_map(rainfuse_core::eval::wiper_state).collect();
    let truth_states = rainfuse_core::eval::label_states(&truth, &bins);
    let score = rainfuse_core::eval::score_against_truth(&predicted, &truth_states, 30.0);
    let (tpr, tnr) = rates(&score.counts).map_err(|e| e.to_string())?;
    let n = score.counts.total();
    let positives = obs
        .iter()
        .filter(|o| truth_at(&scn, o.timestamp - start, o.position) > 0.1)
        .count();
    check(
        n >= 100_000 && (tpr - 0.931).abs() <= 0.01 && (tnr - 0.982).abs() <= 0.01,
        format!("{n} samples ({positives} raining): tpr {tpr:.4}, tnr {tnr:.4} (each within 0.01)"),
    )
}

fn kernel_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for p_max in [1.0, 0.95] {
        let k = KernelParams::new(1000.0, p_max).unwrap();
        for m in [0.0, 1.0, 2.0] {
            let d = m * k.sigma;
            let got = detection_probability(Point::new(0.0, 0.0), Point::new(d, 0.0), &k);
            let want = p_max * (-(d * d) / (2.0 * k.sigma * k.sigma)).exp();
            worst = worst.max((got - want).abs());
        }
    }
    check(worst <= 1e-12, format!("max |error| {worst:e} (<= 1e-12)"))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rainfuse"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// simulate | fuse | evaluate twice, with 1 and 8 workers.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for (run, workers) in [("a", "1"), ("b", "8"), ("c", "8")] {
        let root = tmp.path().join(run);
        std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
        let c = "sim/config.toml";
        run_cli(&root, &["simulate", "--bundled", "default", "--out", "sim", "--workers", workers])?;
        run_cli(&root, &["fuse", "--config", c, "--out", "fuse", "--workers", workers])?;
        run_cli(&root, &["evaluate", "--config", c, "--out", "eval", "--workers", workers])?;
        trees.push(tree(&root));
    }
    let files = trees[0].len();
    let same = trees.windows(2).all(|w| w[0] == w[1]);
    check(
        same && files > 50,
        format!("{files} output files byte-identical across runs and --workers 1/8: {same}"),
    )
}

fn resampler_statistics() -> Outcome {
    let mut rng = stream(8, Purpose::Evaluate, &[8]);
    let mut violations = 0usize;
    let (mut bias_sum, mut mean_sum) = (0.0, 0.0);
    for k in 0..1000u64 {
        let n = rng.random_range(2..200usize);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
        let set = ParticleSet::from_weighted(values.clone(), weights.clone(), k).unwrap();
        let counts = set.systematic_counts(rng.random());
        for (c, w) in counts.iter().zip(&weights) {
            let nw = n as f64 * w;
            if (*c as f64) < nw.floor() - 1e-9 || (*c as f64) > nw.ceil() + 1e-9 {
                violations += 1;
            }
        }
        let resampled = set.systematic_resample(&mut rng);
        bias_sum += resampled.posterior_mean() - set.posterior_mean();
        mean_sum += set.posterior_mean();
    }
    let bias = (bias_sum / mean_sum).abs();
    check(
        violations == 0 && bias < 0.01,
        format!("{violations} count violations, relative mean bias {bias:.5} (< 0.01)"),
    )
}

fn metric_arithmetic() -> Outcome {
    let got = rates(&ConfusionCounts::new(931, 18, 982, 69)).map_err(|e| e.to_string())?;
    check(got == (0.931, 0.982), format!("rates {got:?}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("hole reproduction", hole),
        ("addition reproduction", addition),
        ("ROC dominance", roc_dominance),
        ("sensor-rate recovery", rate_recovery),
        ("kernel closed form", kernel_closed_form),
        ("determinism", determinism),
        ("resampler statistics", resampler_statistics),
        ("metric arithmetic", metric_arithmetic),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
