use std::path::Path;

use rainfuse_core::ingest::{
    flag_against_labels, load_gages, load_labels, load_vehicle_trace, remove_flagged, resample_radial,
    sort_observations, GroundTruthLabel, RadialScan, TraceQualityReport,
};
use rainfuse_core::io::{load_field, RunConfig};
use rainfuse_core::model::{GageReading, RainField, VehicleObservation};
use rainfuse_core::{Error, Result};

/// Minimum labeled-rain stretch with the wiper off that counts as an
/// unobservable wiper mode.
const UNOBSERVABLE_GAP: f64 = 300.0;

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let path = path.ok_or_else(|| Error::invalid("--config is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.check_inputs()?;
    Ok(cfg)
}

pub struct Loaded {
    pub radar: Vec<RainField>,
    /// Observations with flagged intervals removed.
    pub observations: Vec<VehicleObservation>,
    pub raw_observations: usize,
    pub malformed_rows: usize,
    pub reports: Vec<TraceQualityReport>,
    pub gages: Vec<GageReading>,
    pub labels: Option<Vec<GroundTruthLabel>>,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Loaded> {
    let mut radar = Vec::new();
    for p in &cfg.inputs.radar {
        radar.push(load_field(p)?.field);
    }
    if !cfg.inputs.radar_scans.is_empty() {
        let grid = cfg
            .grid
            .ok_or_else(|| Error::invalid("radial scans need a [grid] section"))?;
        for p in &cfg.inputs.radar_scans {
            radar.push(resample_radial(&RadialScan::load(p)?, &grid)?.field);
        }
    }
    radar.sort_by(|a, b| a.timestamp().total_cmp(&b.timestamp()));
    if let Some(first) = radar.first() {
        for r in &radar[1..] {
            if !r.grid().same_as(first.grid()) {
                return Err(Error::GridMismatch {
                    left: first.grid().to_string(),
                    right: r.grid().to_string(),
                });
            }
        }
        if let Some(g) = &cfg.grid {
            if !g.same_as(first.grid()) {
                return Err(Error::GridMismatch {
                    left: g.to_string(),
                    right: first.grid().to_string(),
                });
            }
        }
    }

    let mut all = Vec::new();
    let mut reports = Vec::new();
    let mut malformed_rows = 0;
    for p in &cfg.inputs.traces {
        let parsed = load_vehicle_trace(p, &cfg.geo)?;
        malformed_rows += parsed.malformed.len();
        all.extend(parsed.observations);
        reports.extend(parsed.reports);
    }
    sort_observations(&mut all);
    reports.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id));

    let labels = match &cfg.inputs.labels {
        Some(p) => Some(load_labels(p)?),
        None => None,
    };
    if let Some(l) = &labels {
        flag_against_labels(&mut reports, &all, l, UNOBSERVABLE_GAP);
    }
    let observations = remove_flagged(&all, &reports);

    let mut gages = Vec::new();
    for p in &cfg.inputs.gages {
        let parsed = load_gages(p, &cfg.geo)?;
        malformed_rows += parsed.malformed.len();
        gages.extend(parsed.readings);
    }

    Ok(Loaded {
        radar,
        raw_observations: all.len(),
        observations,
        malformed_rows,
        reports,
        gages,
        labels,
    })
}
