//! Binary-classification scoring: confusion counts, ROC curves and AUC, the
//! leave-one-out validation of fused versus radar-only fields, and the
//! per-source TPR/TNR table against labeled ground truth.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::{run_sequence_with, FusionConfig};
use crate::ingest::{aggregate_wiper, nearest_gages, GroundTruthLabel, WiperBin};
use crate::model::{bin_of, BinaryRainState, GageReading, Point, RainField, StateSource, VehicleObservation};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn tpr(&self) -> Result<f64> {
        match self.tp + self.fn_ {
            0 => Err(Error::UndefinedRate("positive")),
            p => Ok(self.tp as f64 / p as f64),
        }
    }

    pub fn tnr(&self) -> Result<f64> {
        match self.tn + self.fp {
            0 => Err(Error::UndefinedRate("negative")),
            n => Ok(self.tn as f64 / n as f64),
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// `(tpr, tnr)`.
pub fn rates(c: &ConfusionCounts) -> Result<(f64, f64)> {
    Ok((c.tpr()?, c.tnr()?))
}

// ---------------------------------------------------------------------------
// binary states

/// Radar state at the cell containing `position`; `None` outside the grid.
pub fn radar_state(
    field: &RainField,
    subject: &str,
    position: Point,
    timestamp: f64,
    tau: f64,
) -> Option<BinaryRainState> {
    let v = field.sample(position)?;
    Some(BinaryRainState {
        subject: subject.to_string(),
        raining: v > tau,
        source: StateSource::Radar,
        timestamp,
        position,
    })
}

/// Raining iff any gage within `radius` reports more than `tau`; `None` when
/// no gage is in range. `gages` should already be restricted to the time of
/// interest.
pub fn gage_state(
    gages: &[GageReading],
    subject: &str,
    position: Point,
    timestamp: f64,
    radius: f64,
    tau: f64,
) -> Option<BinaryRainState> {
    let near = nearest_gages(position, gages, radius);
    if near.is_empty() {
        return None;
    }
    Some(BinaryRainState {
        subject: subject.to_string(),
        raining: near.iter().any(|g| g.intensity > tau),
        source: StateSource::Gage,
        timestamp,
        position,
    })
}

/// State of an aggregated wiper bin; `None` for mister-only bins.
pub fn wiper_state(bin: &WiperBin) -> Option<BinaryRainState> {
    Some(BinaryRainState {
        subject: bin.vehicle_id.clone(),
        raining: bin.on?,
        source: StateSource::Wiper,
        timestamp: bin.timestamp,
        position: bin.position,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Score {
    pub counts: ConfusionCounts,
    /// Predictions with no truth sample close enough in time.
    pub unmatched: u64,
}

/// Tally predictions against truth. Each prediction is paired with the truth
/// sample of the same subject nearest in time, if it lies within
/// `half_window` seconds (earlier sample on ties).
pub fn score_against_truth(
    predictions: &[BinaryRainState],
    truth: &[BinaryRainState],
    half_window: f64,
) -> Score {
    let mut by_subject: HashMap<&str, Vec<(f64, bool)>> = HashMap::new();
    for t in truth {
        by_subject.entry(&t.subject).or_default().push((t.timestamp, t.raining));
    }
    for v in by_subject.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let mut score = Score::default();
    for p in predictions {
        let Some(series) = by_subject.get(p.subject.as_str()) else {
            score.unmatched += 1;
            continue;
        };
        let i = series.partition_point(|s| s.0 < p.timestamp);
        let candidates = [i.checked_sub(1), Some(i)];
        let best = candidates
            .into_iter()
            .flatten()
            .filter_map(|j| series.get(j))
            .map(|s| ((s.0 - p.timestamp).abs(), s))
            .filter(|(d, _)| *d <= half_window)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1 .0.total_cmp(&b.1 .0)));
        match best {
            Some((_, s)) => score.counts.record(p.raining, s.1),
            None => score.unmatched += 1,
        }
    }
    score
}

// ---------------------------------------------------------------------------
// ROC

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from the highest threshold down, starting at `(0, 0)` and
    /// ending at `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Trapezoidal area under `(fpr, tpr)` points, augmented with `(0, 0)` and
/// `(1, 1)` if missing.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    let pts = augment(points.to_vec());
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}

fn augment(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if pts.first() != Some(&(0.0, 0.0)) {
        pts.insert(0, (0.0, 0.0));
    }
    if pts.last() != Some(&(1.0, 1.0)) {
        pts.push((1.0, 1.0));
    }
    pts
}

/// ROC of `scores` (higher means rain) against `labels`, one point per
/// distinct score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(Error::UndefinedRate("positive"));
    }
    if neg == 0 {
        return Err(Error::UndefinedRate("negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for group in order.chunk_by(|&a, &b| scores[a] == scores[b]) {
        for &i in group {
            if labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let points = augment(points);
    let auc = auc(&points);
    Ok(RocCurve { points, auc })
}

// ---------------------------------------------------------------------------
// leave-one-out

/// One scored reading of a withheld vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct LooSample {
    pub vehicle_id: String,
    pub timestamp: f64,
    pub position: Point,
    /// Radar intensity at the vehicle's cell.
    pub radar: f64,
    /// Posterior probability of rain at the vehicle's cell, fused without the
    /// vehicle.
    pub fused: f64,
    /// The withheld vehicle's own wiper state.
    pub wiper_on: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooResult {
    pub samples: Vec<LooSample>,
    pub radar: RocCurve,
    pub fused: RocCurve,
}

impl LooResult {
    /// Both curves against an alternative reference, e.g. simulator truth.
    pub fn curves_against<F>(&self, reference: F) -> Result<(RocCurve, RocCurve)>
    where
        F: Fn(&LooSample) -> bool,
    {
        curves_from(&self.samples, reference)
    }
}

/// Radar-only and fused ROC curves of `samples` against `reference`.
pub fn curves_from<F: Fn(&LooSample) -> bool>(samples: &[LooSample], reference: F) -> Result<(RocCurve, RocCurve)> {
    let labels: Vec<bool> = samples.iter().map(&reference).collect();
    let radar: Vec<f64> = samples.iter().map(|s| s.radar).collect();
    let fused: Vec<f64> = samples.iter().map(|s| s.fused).collect();
    Ok((roc_curve(&radar, &labels)?, roc_curve(&fused, &labels)?))
}

fn fold(
    vehicle: &str,
    held_out: &[VehicleObservation],
    others: &[VehicleObservation],
    radar: &[RainField],
    cfg: &FusionConfig,
) -> Result<Vec<LooSample>> {
    let mut windows: BTreeMap<i64, Vec<WiperBin>> = BTreeMap::new();
    for b in aggregate_wiper(held_out, cfg.evidence_window) {
        if b.on.is_some() {
            windows
                .entry(bin_of(b.timestamp, cfg.time_bin_width).index())
                .or_default()
                .push(b);
        }
    }
    let mut out = Vec::new();
    run_sequence_with(radar, others, cfg, |r| {
        let Some(bins) = windows.get(&r.posterior.time_bin().index()) else {
            return Ok(());
        };
        for b in bins {
            let (Some(fused), Some(rv)) = (r.posterior.prob_rain_at(b.position), r.radar.sample(b.position)) else {
                continue;
            };
            out.push(LooSample {
                vehicle_id: vehicle.to_string(),
                timestamp: b.timestamp,
                position: b.position,
                radar: rv,
                fused,
                wiper_on: b.on.expect("filtered"),
            });
        }
        Ok(())
    })?;
    Ok(out)
}

/// Iterated leave-one-out: for each vehicle, fuse every other vehicle with
/// the radar sequence and score the result at the withheld vehicle's
/// evidence windows against its own wiper. Folds run in parallel; the output
/// does not depend on input order.
pub fn leave_one_out(obs: &[VehicleObservation], radar: &[RainField], cfg: &FusionConfig) -> Result<LooResult> {
    let mut ids: Vec<&str> = obs.iter().map(|o| o.vehicle_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::Insufficient(format!(
            "leave-one-out needs at least 2 vehicles, found {}",
            ids.len()
        )));
    }
    let folds: Vec<Result<Vec<LooSample>>> = ids
        .par_iter()
        .map(|&id| {
            let (held, others): (Vec<VehicleObservation>, Vec<VehicleObservation>) =
                obs.iter().cloned().partition(|o| o.vehicle_id == id);
            let mut others = others;
            crate::ingest::sort_observations(&mut others);
            fold(id, &held, &others, radar, cfg)
        })
        .collect();
    let mut samples = Vec::new();
    for f in folds {
        samples.extend(f?);
    }
    let (radar_roc, fused_roc) = curves_from(&samples, |s| s.wiper_on)?;
    Ok(LooResult {
        samples,
        radar: radar_roc,
        fused: fused_roc,
    })
}

// ---------------------------------------------------------------------------
// per-source table against labels

/// Labeled state over `[start, end)` of one vehicle: raining iff rain covers
/// at least half of the labeled time. `None` if nothing is labeled.
pub fn label_state(labels: &[GroundTruthLabel], vehicle_id: &str, start: f64, end: f64) -> Option<bool> {
    let (mut wet, mut total) = (0.0, 0.0);
    for l in labels.iter().filter(|l| l.vehicle_id == vehicle_id) {
        let overlap = l.end.min(end) - l.start.max(start);
        if overlap > 0.0 {
            total += overlap;
            if l.raining {
                wet += overlap;
            }
        }
    }
    (total > 0.0).then_some(wet >= 0.5 * total)
}

/// Truth states aligned to aggregated wiper bins.
pub fn label_states(labels: &[GroundTruthLabel], bins: &[WiperBin]) -> Vec<BinaryRainState> {
    bins.iter()
        .filter_map(|b| {
            let raining = label_state(labels, &b.vehicle_id, b.bin.start, b.bin.end())?;
            Some(BinaryRainState {
                subject: b.vehicle_id.clone(),
                raining,
                source: StateSource::GroundTruth,
                timestamp: b.timestamp,
                position: b.position,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    pub rain_threshold: f64,
    pub gage_radius: f64,
    /// Radar / gage bin width in seconds.
    pub bin_width: f64,
    /// Wiper aggregation width in seconds.
    pub wiper_width: f64,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            rain_threshold: 0.1,
            gage_radius: 2000.0,
            bin_width: 300.0,
            wiper_width: 60.0,
        }
    }
}

/// Confusion counts per source, scored against labeled truth at every
/// aggregated wiper bin.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<(StateSource, Score)>,
}

pub fn metrics_table(
    obs: &[VehicleObservation],
    labels: &[GroundTruthLabel],
    radar: &[RainField],
    gages: &[GageReading],
    opts: &TableOptions,
) -> MetricsTable {
    let bins = aggregate_wiper(obs, opts.wiper_width);
    let truth = label_states(labels, &bins);
    let radar_by_bin: HashMap<i64, &RainField> = radar
        .iter()
        .map(|r| (bin_of(r.timestamp(), opts.bin_width).index(), r))
        .collect();
    let mut gages_by_bin: HashMap<i64, Vec<GageReading>> = HashMap::new();
    for g in gages {
        gages_by_bin
            .entry(bin_of(g.timestamp, opts.bin_width).index())
            .or_default()
            .push(g.clone());
    }
    let tau = opts.rain_threshold;
    let (mut w, mut r, mut g) = (Vec::new(), Vec::new(), Vec::new());
    for b in &bins {
        let k = bin_of(b.timestamp, opts.bin_width).index();
        if let Some(s) = wiper_state(b) {
            w.push(s);
        }
        if let Some(s) = radar_by_bin
            .get(&k)
            .and_then(|f| radar_state(f, &b.vehicle_id, b.position, b.timestamp, tau))
        {
            r.push(s);
        }
        if let Some(s) = gages_by_bin
            .get(&k)
            .and_then(|gs| gage_state(gs, &b.vehicle_id, b.position, b.timestamp, opts.gage_radius, tau))
        {
            g.push(s);
        }
    }
    // truth shares each bin's timestamp, so exact alignment suffices
    let half = 0.0;
    MetricsTable {
        rows: vec![
            (StateSource::Gage, score_against_truth(&g, &truth, half)),
            (StateSource::Radar, score_against_truth(&r, &truth, half)),
            (StateSource::Wiper, score_against_truth(&w, &truth, half)),
        ],
    }
}
