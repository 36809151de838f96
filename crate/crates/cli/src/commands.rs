use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rainfuse_core::eval::{curves_from, label_state, leave_one_out, metrics_table, RocCurve, TableOptions};
use rainfuse_core::fusion::{four_case_report, run_sequence_with, BinStats, CaseLabel};
use rainfuse_core::ingest::{format_iso8601, write_gages, write_labels, write_vehicle_trace};
use rainfuse_core::io::{
    manifest, read_cases, read_field, sha256_hex, write_cases, write_field, write_metrics, write_roc, Provenance,
    RunConfig,
};
use rainfuse_core::model::{bin_of, RainField};
use rainfuse_core::storm::{radar_sequence, simulate_fleet, simulate_gages, truth_labels, StormScenario};
use rainfuse_core::{Error, Result};

use crate::inputs::load_inputs;

/// Collects every file written into an output directory for the manifest.
struct OutDir {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn put(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    fn finish(self, prov: &Provenance) -> Result<()> {
        let text = manifest(prov, &self.root, &self.files)?;
        let path = self.root.join("manifest.txt");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub enum ScenarioSource {
    File(PathBuf),
    Default,
    Small,
}

pub fn simulate(source: ScenarioSource, out: &Path, seed: Option<u64>, verbose: bool) -> Result<()> {
    let mut scn = match source {
        ScenarioSource::File(p) => StormScenario::load(&p)?,
        ScenarioSource::Default => StormScenario::bundled_default(),
        ScenarioSource::Small => StormScenario::bundled_small(),
    };
    if let Some(s) = seed {
        scn.seed = s;
    }
    let resolved = scn.to_toml();
    let prov = Provenance::new(&sha256_hex(resolved.as_bytes())[..16], scn.seed);
    let mut dir = OutDir::create(out)?;
    dir.put("scenario.scn", &format!("{}{resolved}", prov.header()))?;

    let mut radar_files = Vec::new();
    for (k, (truth, radar)) in radar_sequence(&scn).iter().enumerate() {
        dir.put(&format!("truth/truth_{k:03}.fld"), &write_field(&prov, "truth", "mm/h", truth))?;
        let rel = format!("radar/radar_{k:03}.fld");
        dir.put(&rel, &write_field(&prov, "radar", "mm/h", radar))?;
        radar_files.push(PathBuf::from(rel));
    }
    let obs = simulate_fleet(&scn);
    dir.put("trace.csv", &format!("{}{}", prov.header(), write_vehicle_trace(&obs, &scn.geo)))?;
    dir.put(
        "labels.csv",
        &format!("{}{}", prov.header(), write_labels(&truth_labels(&scn, &obs))),
    )?;
    let gages = simulate_gages(&scn);
    if !scn.gages.is_empty() {
        dir.put("gages.csv", &format!("{}{}", prov.header(), write_gages(&gages, &scn.geo)))?;
    }

    let mut cfg = RunConfig::new(scn.seed);
    cfg.grid = Some(scn.grid);
    cfg.geo = scn.geo;
    cfg.fusion.time_bin_width = scn.radar_interval;
    cfg.inputs.radar = radar_files;
    cfg.inputs.traces = vec!["trace.csv".into()];
    cfg.inputs.labels = Some("labels.csv".into());
    if !scn.gages.is_empty() {
        cfg.inputs.gages = vec!["gages.csv".into()];
    }
    dir.put("config.toml", &format!("{}{}", prov.header(), cfg.to_toml()))?;
    if verbose {
        eprintln!(
            "simulated {} radar scans, {} wiper reports, {} gage readings into {}",
            scn.radar_times().len(),
            obs.len(),
            gages.len(),
            out.display()
        );
    }
    dir.finish(&prov)
}

fn stats_line(k: usize, start: f64, s: &BinStats) -> String {
    format!(
        "bin {k:03} start={} observations={} evidence={} dropped_mister={} dropped_out_of_domain={} dropped_out_of_bin={} cells_updated={} resample_events={}\n",
        format_iso8601(start),
        s.observations,
        s.evidence_items,
        s.dropped_mister,
        s.dropped_out_of_domain,
        s.dropped_out_of_bin,
        s.cells_updated,
        s.resample_events
    )
}

pub fn fuse(cfg: &RunConfig, out: &Path, verbose: bool) -> Result<()> {
    let loaded = load_inputs(cfg)?;
    if loaded.radar.is_empty() {
        return Err(Error::Insufficient("no radar fields to fuse".into()));
    }
    let fc = cfg.fusion_config()?;
    let prov = cfg.provenance();
    let tau = fc.sensor.rain_threshold;
    let mut dir = OutDir::create(out)?;
    let mut log = prov.header();
    let _ = writeln!(log, "particles_per_cell = {}", fc.n_particles);
    let _ = writeln!(log, "radar_bins = {}", loaded.radar.len());
    let _ = writeln!(log, "observations = {}", loaded.raw_observations);
    let _ = writeln!(log, "observations_after_quality_filter = {}", loaded.observations.len());
    let _ = writeln!(log, "malformed_rows = {}", loaded.malformed_rows);
    for r in loaded.reports.iter().filter(|r| !r.is_clean()) {
        let flags: Vec<&str> = r.flags.iter().map(|f| f.name()).collect();
        let _ = writeln!(log, "quality {} flags={} intervals={}", r.vehicle_id, flags.join("+"), r.intervals.len());
    }
    let mut totals = BinStats::default();
    let mut k = 0usize;
    run_sequence_with(&loaded.radar, &loaded.observations, &fc, |r| {
        let start = r.posterior.time_bin().start;
        dir.put(
            &format!("bins/bin_{k:03}_mean.fld"),
            &write_field(&prov, "posterior_mean", "mm/h", r.posterior.mean_field()),
        )?;
        dir.put(
            &format!("bins/bin_{k:03}_prob.fld"),
            &write_field(&prov, "prob_rain", "probability", &r.posterior.prob_rain_field()),
        )?;
        let cases = four_case_report(&r.radar, &r.posterior, tau)?;
        dir.put(
            &format!("bins/bin_{k:03}_cases.txt"),
            &write_cases(&prov, r.posterior.grid(), r.radar.timestamp(), &cases),
        )?;
        log += &stats_line(k, start, &r.stats);
        totals.observations += r.stats.observations;
        totals.dropped_mister += r.stats.dropped_mister;
        totals.dropped_out_of_domain += r.stats.dropped_out_of_domain;
        totals.resample_events += r.stats.resample_events;
        if verbose {
            eprintln!("bin {k:03}: {} evidence items", r.stats.evidence_items);
        }
        k += 1;
        Ok(())
    })?;
    let _ = writeln!(
        log,
        "total assimilated_observations={} dropped_mister={} dropped_out_of_domain={} resample_events={}",
        totals.observations, totals.dropped_mister, totals.dropped_out_of_domain, totals.resample_events
    );
    dir.put("run_log.txt", &log)?;
    dir.put("resolved_config.toml", &format!("{}{}", prov.header(), cfg.to_toml()))?;
    dir.finish(&prov)
}

fn auc_cell(c: &Result<RocCurve>) -> String {
    c.as_ref().map_or_else(|_| "n/a".into(), |c| c.auc.to_string())
}

pub fn evaluate(cfg: &RunConfig, out: &Path, verbose: bool) -> Result<()> {
    let loaded = load_inputs(cfg)?;
    let fc = cfg.fusion_config()?;
    let prov = cfg.provenance();
    let loo = leave_one_out(&loaded.observations, &loaded.radar, &fc)?;
    let mut dir = OutDir::create(out)?;
    dir.put("roc_radar.csv", &write_roc(&prov, "radar", &loo.radar))?;
    dir.put("roc_fused.csv", &write_roc(&prov, "fused", &loo.fused))?;

    let width = cfg.evaluation.wiper_width;
    let label_of = |vehicle: &str, t: f64| {
        let b = bin_of(t, width);
        loaded
            .labels
            .as_ref()
            .and_then(|l| label_state(l, vehicle, b.start, b.end()))
    };
    let mut samples = prov.header();
    samples += "vehicle_id,iso8601_time,x_m,y_m,radar_mm_h,fused_prob_rain,wiper_on,label\n";
    for s in &loo.samples {
        let label = label_of(&s.vehicle_id, s.timestamp).map_or("", |b| if b { "1" } else { "0" });
        let _ = writeln!(
            samples,
            "{},{},{},{},{},{},{},{}",
            s.vehicle_id,
            format_iso8601(s.timestamp),
            s.position.x,
            s.position.y,
            s.radar,
            s.fused,
            u8::from(s.wiper_on),
            label
        );
    }
    dir.put("loo_samples.csv", &samples)?;

    let mut auc = prov.header();
    if loaded.labels.is_none() {
        auc += "# mode = leave-one-out only: no label file, so no ground-truth rows or metrics table\n";
    }
    auc += "reference,radar_auc,fused_auc,samples\n";
    let _ = writeln!(auc, "wiper,{},{},{}", loo.radar.auc, loo.fused.auc, loo.samples.len());
    if let Some(labels) = &loaded.labels {
        let labeled: Vec<_> = loo
            .samples
            .iter()
            .filter(|s| label_of(&s.vehicle_id, s.timestamp).is_some())
            .cloned()
            .collect();
        let (r, f) = match curves_from(&labeled, |s| label_of(&s.vehicle_id, s.timestamp) == Some(true)) {
            Ok((r, f)) => (Ok(r), Ok(f)),
            Err(e) => (Err(e), Err(Error::invalid("no label curve"))),
        };
        let _ = writeln!(auc, "label,{},{},{}", auc_cell(&r), auc_cell(&f), labeled.len());
        let opts = TableOptions {
            rain_threshold: fc.sensor.rain_threshold,
            gage_radius: cfg.evaluation.gage_radius,
            bin_width: fc.time_bin_width,
            wiper_width: width,
        };
        let table = metrics_table(&loaded.observations, labels, &loaded.radar, &loaded.gages, &opts);
        dir.put("metrics.csv", &write_metrics(&prov, &table))?;
    }
    dir.put("auc.csv", &auc)?;
    if verbose {
        eprintln!("leave-one-out AUC radar {:.4} fused {:.4}", loo.radar.auc, loo.fused.auc);
    }
    dir.finish(&prov)
}

const RAMP: &[u8] = b" .:-=+*#%@";

fn ascii_field(f: &RainField) -> String {
    let g = f.grid();
    let max = f.max();
    let mut s = String::new();
    for iy in (0..g.ny).rev() {
        for ix in 0..g.nx {
            let v = f.values()[iy * g.nx + ix];
            let k = if max > 0.0 {
                ((v / max) * (RAMP.len() - 1) as f64).round() as usize
            } else {
                0
            };
            s.push(RAMP[k.min(RAMP.len() - 1)] as char);
        }
        s.push('\n');
    }
    s
}

fn data_rows(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty())
}

/// Render the newest fused bin and any evaluation tables found in `dir`.
pub fn report(dir: &Path) -> Result<String> {
    let mut s = String::new();
    let bins = dir.join("bins");
    let mut means: Vec<PathBuf> = fs::read_dir(&bins)
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    means.retain(|p| p.to_string_lossy().ends_with("_mean.fld"));
    means.sort();
    if let Some(last) = means.last() {
        let text = fs::read_to_string(last).map_err(|e| Error::io(last, e))?;
        let f = read_field(&text, last)?.field;
        let _ = writeln!(
            s,
            "posterior mean at {} (max {:.2} mm/h, mean {:.3} mm/h), north up:",
            format_iso8601(f.timestamp()),
            f.max(),
            f.mean()
        );
        s += &ascii_field(&f);
        let cases_path = PathBuf::from(last.to_string_lossy().replace("_mean.fld", "_cases.txt"));
        if let Ok(text) = fs::read_to_string(&cases_path) {
            let (g, _, labels) = read_cases(&text, &cases_path)?;
            let count = |c: CaseLabel| labels.iter().filter(|l| **l == c).count();
            let _ = writeln!(
                s,
                "cases: both-rain {} both-dry {} holes {} additions {}",
                count(CaseLabel::BothRain),
                count(CaseLabel::BothDry),
                count(CaseLabel::Hole),
                count(CaseLabel::Addition)
            );
            for row in labels.chunks(g.nx).rev() {
                s.extend(row.iter().map(|l| l.code()));
                s.push('\n');
            }
        }
    }
    for name in ["auc.csv", "metrics.csv"] {
        let p = dir.join(name);
        if let Ok(text) = fs::read_to_string(&p) {
            let _ = writeln!(s, "\n{name}:");
            let rows: Vec<Vec<&str>> = data_rows(&text).map(|l| l.split(',').collect()).collect();
            let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
            let widths: Vec<usize> = (0..cols)
                .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|v| v.len()).max().unwrap_or(0))
                .collect();
            for r in &rows {
                let cells: Vec<String> = r.iter().enumerate().map(|(c, v)| format!("{v:>w$}", w = widths[c])).collect();
                let _ = writeln!(s, "  {}", cells.join("  "));
            }
        }
    }
    if s.is_empty() {
        return Err(Error::Insufficient(format!("nothing to report in {}", dir.display())));
    }
    Ok(s)
}
