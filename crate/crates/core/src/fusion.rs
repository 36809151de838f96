//! Radar prior construction and per-bin assimilation of wiper evidence.
//!
//! The belief over rainfall is factored per grid cell: every cell carries its
//! own [`ParticleSet`]. A wiper reading updates every cell whose center lies
//! inside the detection-kernel cutoff around the vehicle. Bins are processed in
//! time order; cells within a bin are independent and processed in parallel
//! with random streams keyed by `(seed, cell, bin)`, so results do not depend
//! on the number of worker threads.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::model::{bin_of, GridSpec, Point, RainField, TimeBin, VehicleObservation};
use crate::particle::ParticleSet;
use crate::rng::{self, bin_key, Purpose, StreamRng};
use crate::sensor::{likelihood_with_detection, EmpiricalIntensityDistribution, WiperSensorModel};

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub kernel: KernelParams,
    pub sensor: WiperSensorModel,
    pub injection: EmpiricalIntensityDistribution,
    pub n_particles: usize,
    /// Resample when ESS drops below `ess_fraction * n_particles`.
    pub ess_fraction: f64,
    /// Weight of the injection component in the prior mixture.
    pub prior_epsilon: f64,
    /// Coefficient of variation of the gamma radar kernel.
    pub prior_cv: f64,
    /// Radar / assimilation bin width in seconds.
    pub time_bin_width: f64,
    /// Width of the window within which one vehicle's readings in one cell
    /// collapse to a single binary value.
    pub evidence_window: f64,
    /// Weight of the previous posterior when advancing to the next bin.
    pub persistence: f64,
    /// Post-resampling jitter as a fraction of the particle range; 0 disables.
    pub roughening: f64,
    pub global_seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            kernel: KernelParams::default(),
            sensor: WiperSensorModel::default(),
            injection: EmpiricalIntensityDistribution::bundled(),
            n_particles: 500,
            ess_fraction: 0.5,
            prior_epsilon: 0.1,
            prior_cv: 0.3,
            time_bin_width: 300.0,
            evidence_window: 60.0,
            persistence: 0.5,
            roughening: 0.05,
            global_seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.sensor.validate()?;
        if self.n_particles == 0 {
            return Err(Error::invalid("n_particles must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.ess_fraction) {
            return Err(Error::invalid("ess_fraction must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.prior_epsilon) {
            return Err(Error::invalid("prior_epsilon must be in [0, 1)"));
        }
        if self.prior_epsilon > 0.0 && self.injection.is_empty() {
            return Err(Error::invalid("prior_epsilon > 0 needs an injection distribution"));
        }
        if !(self.prior_cv > 0.0 && self.prior_cv.is_finite()) {
            return Err(Error::invalid("prior_cv must be > 0"));
        }
        if !(self.time_bin_width > 0.0) || !(self.evidence_window > 0.0) {
            return Err(Error::invalid("time_bin_width and evidence_window must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.persistence) {
            return Err(Error::invalid("persistence must be in [0, 1]"));
        }
        if !(self.roughening >= 0.0 && self.roughening.is_finite()) {
            return Err(Error::invalid("roughening must be >= 0"));
        }
        Ok(())
    }

    fn cell_seed(&self, linear: usize) -> u64 {
        rng::derive_seed(self.global_seed, &[linear as u64])
    }
}

/// Per-cell particle beliefs for one time bin plus their summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorField {
    grid: GridSpec,
    time_bin: TimeBin,
    cells: Vec<ParticleSet>,
    rain_threshold: f64,
    summary_mean: RainField,
    prob_rain: Vec<f64>,
}

impl PosteriorField {
    pub fn new(
        grid: GridSpec,
        time_bin: TimeBin,
        cells: Vec<ParticleSet>,
        rain_threshold: f64,
    ) -> Result<Self> {
        if cells.len() != grid.len() {
            return Err(Error::invalid(format!(
                "{} particle sets for a grid of {} cells",
                cells.len(),
                grid.len()
            )));
        }
        let mean: Vec<f64> = cells.iter().map(ParticleSet::posterior_mean).collect();
        let prob_rain = cells.iter().map(|c| c.prob_above(rain_threshold)).collect();
        let summary_mean = RainField::new(grid, time_bin.start, mean)?;
        Ok(PosteriorField {
            grid,
            time_bin,
            cells,
            rain_threshold,
            summary_mean,
            prob_rain,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn time_bin(&self) -> TimeBin {
        self.time_bin
    }

    pub fn cells(&self) -> &[ParticleSet] {
        &self.cells
    }

    pub fn cell(&self, linear: usize) -> &ParticleSet {
        &self.cells[linear]
    }

    pub fn rain_threshold(&self) -> f64 {
        self.rain_threshold
    }

    pub fn mean_field(&self) -> &RainField {
        &self.summary_mean
    }

    /// Posterior probability of rain (intensity above the sensor threshold) per cell.
    pub fn prob_rain(&self) -> &[f64] {
        &self.prob_rain
    }

    pub fn prob_rain_field(&self) -> RainField {
        RainField::new(self.grid, self.time_bin.start, self.prob_rain.clone())
            .expect("probabilities are valid field values")
    }

    pub fn prob_rain_at(&self, p: Point) -> Option<f64> {
        self.grid.cell_of(p).map(|c| self.prob_rain[self.grid.linear(c)])
    }
}

/// Bookkeeping for one assimilation step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinStats {
    pub observations: usize,
    pub evidence_items: usize,
    pub dropped_mister: usize,
    pub dropped_out_of_domain: usize,
    pub dropped_out_of_bin: usize,
    pub cells_updated: usize,
    pub resample_events: usize,
}

fn sample_prior_value(
    gamma: Option<&Gamma<f64>>,
    cfg: &FusionConfig,
    rng: &mut StreamRng,
) -> f64 {
    if cfg.prior_epsilon > 0.0 && rng.random::<f64>() < cfg.prior_epsilon {
        return cfg
            .injection
            .sample_pooled(rng)
            .expect("validated: injection present when epsilon > 0");
    }
    match gamma {
        Some(g) => g.sample(rng),
        None => 0.0,
    }
}

fn prior_cell(radar: f64, linear: usize, bin: i64, cfg: &FusionConfig) -> ParticleSet {
    let seed = cfg.cell_seed(linear);
    let mut rng = rng::stream(seed, Purpose::Prior, &[bin_key(bin)]);
    let gamma = (radar > 0.0).then(|| {
        let shape = 1.0 / (cfg.prior_cv * cfg.prior_cv);
        Gamma::new(shape, radar / shape).expect("positive gamma parameters")
    });
    let values = (0..cfg.n_particles)
        .map(|_| sample_prior_value(gamma.as_ref(), cfg, &mut rng))
        .collect();
    ParticleSet::from_values(values, seed).expect("prior samples are finite and >= 0")
}

/// Prior belief from a radar field: per cell, a mixture of a gamma kernel
/// around the radar value (a point mass at zero for dry cells) and the pooled
/// injection distribution.
pub fn build_prior(radar: &RainField, cfg: &FusionConfig) -> Result<PosteriorField> {
    cfg.validate()?;
    let grid = *radar.grid();
    let time_bin = bin_of(radar.timestamp(), cfg.time_bin_width);
    let bin = time_bin.index();
    let cells: Vec<ParticleSet> = radar
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, &r)| prior_cell(r, i, bin, cfg))
        .collect();
    PosteriorField::new(grid, time_bin, cells, cfg.sensor.rain_threshold)
}

/// One vehicle's collapsed binary reading used as a likelihood factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub vehicle_id: String,
    pub position: Point,
    pub wiper_on: bool,
}

/// Collapse readings per (vehicle, cell, evidence window) into one binary
/// value: on if any reading was on, positioned at the latest fix. Mister
/// readings, out-of-domain positions and readings outside `bin` are dropped
/// and counted.
pub fn collect_evidence(
    obs: &[VehicleObservation],
    grid: &GridSpec,
    bin: TimeBin,
    window: f64,
    stats: &mut BinStats,
) -> Vec<Evidence> {
    // key -> (latest timestamp, position, any on)
    let mut groups: BTreeMap<(String, usize, i64), (f64, Point, bool)> = BTreeMap::new();
    for o in obs {
        stats.observations += 1;
        let Some(on) = o.wiper_on() else {
            stats.dropped_mister += 1;
            continue;
        };
        if !bin.contains(o.timestamp) {
            stats.dropped_out_of_bin += 1;
            continue;
        }
        let Some(cell) = grid.cell_of(o.position) else {
            stats.dropped_out_of_domain += 1;
            continue;
        };
        let key = (
            o.vehicle_id.clone(),
            grid.linear(cell),
            bin_of(o.timestamp, window).index(),
        );
        groups
            .entry(key)
            .and_modify(|g| {
                if o.timestamp >= g.0 {
                    g.0 = o.timestamp;
                    g.1 = o.position;
                }
                g.2 |= on;
            })
            .or_insert((o.timestamp, o.position, on));
    }
    let evidence: Vec<Evidence> = groups
        .into_iter()
        .map(|((vehicle_id, _, _), (_, position, wiper_on))| Evidence {
            vehicle_id,
            position,
            wiper_on,
        })
        .collect();
    stats.evidence_items = evidence.len();
    evidence
}

/// Per-cell (wiper_on, detection probability) factors within the kernel cutoff.
fn factors_by_cell(evidence: &[Evidence], grid: &GridSpec, kernel: &KernelParams) -> Vec<Vec<(bool, f64)>> {
    let mut by_cell: Vec<Vec<(bool, f64)>> = vec![Vec::new(); grid.len()];
    for e in evidence {
        for linear in grid.cells_within(e.position, kernel.cutoff()) {
            let d = grid.center_linear(linear).distance(&e.position);
            let p_d = kernel.at_distance(d);
            if p_d > 0.0 {
                by_cell[linear].push((e.wiper_on, p_d));
            }
        }
    }
    by_cell
}

/// Joint likelihood of a cell's factors for a wet and for a dry intensity,
/// scaled so the larger is 1.
fn wet_dry_likelihood(factors: &[(bool, f64)], sensor: &WiperSensorModel) -> (f64, f64) {
    let wet_z = sensor.rain_threshold + 1.0;
    let (mut log_wet, mut log_dry) = (0.0f64, 0.0f64);
    for &(on, p_d) in factors {
        log_wet += likelihood_with_detection(on, wet_z, p_d, sensor).ln();
        log_dry += likelihood_with_detection(on, 0.0, p_d, sensor).ln();
    }
    let m = log_wet.max(log_dry);
    ((log_wet - m).exp(), (log_dry - m).exp())
}

fn update_cell(
    cell: &ParticleSet,
    factors: &[(bool, f64)],
    bin: i64,
    cfg: &FusionConfig,
) -> Result<(ParticleSet, bool)> {
    let (l_wet, l_dry) = wet_dry_likelihood(factors, &cfg.sensor);
    let tau = cfg.sensor.rain_threshold;
    let mut next = cell.reweight(|v| if v > tau { l_wet } else { l_dry })?;
    let threshold = cfg.ess_fraction * next.len() as f64;
    if next.effective_sample_size() < threshold {
        let mut rng = rng::stream(cell.seed(), Purpose::Resample, &[bin_key(bin)]);
        next = next.systematic_resample(&mut rng);
        next.roughen(cfg.roughening, tau, &mut rng);
        return Ok((next, true));
    }
    Ok((next, false))
}

/// Assimilate the wiper observations of one bin into `field`.
///
/// Cells outside the kernel cutoff of every reading are returned untouched.
pub fn assimilate_bin(
    field: &PosteriorField,
    obs: &[VehicleObservation],
    cfg: &FusionConfig,
) -> Result<(PosteriorField, BinStats)> {
    cfg.validate()?;
    let mut stats = BinStats::default();
    let evidence = collect_evidence(obs, &field.grid, field.time_bin, cfg.evidence_window, &mut stats);
    if evidence.is_empty() {
        return Ok((field.clone(), stats));
    }
    assimilate_evidence(field, &evidence, cfg, stats)
}

pub fn assimilate_evidence(
    field: &PosteriorField,
    evidence: &[Evidence],
    cfg: &FusionConfig,
    mut stats: BinStats,
) -> Result<(PosteriorField, BinStats)> {
    let factors = factors_by_cell(evidence, &field.grid, &cfg.kernel);
    let bin = field.time_bin.index();
    let updated: Vec<Result<(ParticleSet, Option<bool>)>> = field
        .cells
        .par_iter()
        .zip(factors.par_iter())
        .map(|(cell, f)| {
            if f.is_empty() {
                Ok((cell.clone(), None))
            } else {
                update_cell(cell, f, bin, cfg).map(|(c, r)| (c, Some(r)))
            }
        })
        .collect();
    let mut cells = Vec::with_capacity(updated.len());
    for u in updated {
        let (c, touched) = u?;
        if let Some(resampled) = touched {
            stats.cells_updated += 1;
            stats.resample_events += usize::from(resampled);
        }
        cells.push(c);
    }
    let next = PosteriorField::new(field.grid, field.time_bin, cells, field.rain_threshold)?;
    Ok((next, stats))
}

/// Carry a posterior into the next radar bin: each particle comes from the
/// resampled previous posterior with probability `persistence`, otherwise
/// from the fresh radar prior.
pub fn advance_bin(
    prev: &PosteriorField,
    next_radar: &RainField,
    cfg: &FusionConfig,
) -> Result<PosteriorField> {
    if !prev.grid.same_as(next_radar.grid()) {
        return Err(Error::GridMismatch {
            left: prev.grid.to_string(),
            right: next_radar.grid().to_string(),
        });
    }
    let fresh = build_prior(next_radar, cfg)?;
    let alpha = cfg.persistence;
    if alpha == 0.0 {
        return Ok(fresh);
    }
    let next_bin = fresh.time_bin;
    if next_bin.index() <= prev.time_bin.index() {
        return Err(Error::invalid(format!(
            "radar at {} does not follow the bin starting {}",
            next_radar.timestamp(),
            prev.time_bin.start
        )));
    }
    let key = bin_key(next_bin.index());
    let cells: Vec<ParticleSet> = prev
        .cells
        .par_iter()
        .zip(fresh.cells.par_iter())
        .map(|(old, new)| {
            let mut rng = rng::stream(old.seed(), Purpose::Advance, &[key]);
            let carried = old.systematic_resample(&mut rng);
            let n = new.len();
            let values = (0..n)
                .map(|i| {
                    let from_prev = rng.random::<f64>() < alpha;
                    if from_prev {
                        carried.values()[i % carried.len()]
                    } else {
                        new.values()[i]
                    }
                })
                .collect();
            ParticleSet::from_values(values, new.seed()).expect("values come from valid sets")
        })
        .collect();
    PosteriorField::new(prev.grid, next_bin, cells, prev.rain_threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseLabel {
    BothRain,
    BothDry,
    /// Radar rain removed by the posterior.
    Hole,
    /// Rain added where radar was dry.
    Addition,
}

impl CaseLabel {
    pub fn name(self) -> &'static str {
        match self {
            CaseLabel::BothRain => "both-rain",
            CaseLabel::BothDry => "both-dry",
            CaseLabel::Hole => "hole",
            CaseLabel::Addition => "addition",
        }
    }

    /// Single-character code used in label grids.
    pub fn code(self) -> char {
        match self {
            CaseLabel::BothRain => 'R',
            CaseLabel::BothDry => '.',
            CaseLabel::Hole => 'H',
            CaseLabel::Addition => 'A',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'R' => Some(CaseLabel::BothRain),
            '.' => Some(CaseLabel::BothDry),
            'H' => Some(CaseLabel::Hole),
            'A' => Some(CaseLabel::Addition),
            _ => None,
        }
    }

    pub fn classify(radar_rain: bool, posterior_rain: bool) -> Self {
        match (radar_rain, posterior_rain) {
            (true, true) => CaseLabel::BothRain,
            (false, false) => CaseLabel::BothDry,
            (true, false) => CaseLabel::Hole,
            (false, true) => CaseLabel::Addition,
        }
    }
}

/// Label each cell by radar state (value > `tau`) against posterior state
/// (probability of rain > 0.5).
pub fn four_case_report(
    radar: &RainField,
    posterior: &PosteriorField,
    tau: f64,
) -> Result<Vec<CaseLabel>> {
    if !radar.grid().same_as(&posterior.grid) {
        return Err(Error::GridMismatch {
            left: radar.grid().to_string(),
            right: posterior.grid.to_string(),
        });
    }
    Ok(radar
        .values()
        .iter()
        .zip(posterior.cells.iter())
        .map(|(&r, cell)| CaseLabel::classify(r > tau, cell.prob_above(tau) > 0.5))
        .collect())
}

/// Result of running the filter over a radar sequence.
#[derive(Debug, Clone)]
pub struct BinResult {
    pub radar: RainField,
    pub prior: PosteriorField,
    pub posterior: PosteriorField,
    pub stats: BinStats,
}

/// Run the recursive filter over `radar` (sorted by time) assimilating the
/// observations that fall in each radar bin.
pub fn run_sequence(
    radar: &[RainField],
    obs: &[VehicleObservation],
    cfg: &FusionConfig,
) -> Result<Vec<BinResult>> {
    let mut sink = Vec::with_capacity(radar.len());
    run_sequence_with(radar, obs, cfg, |r| {
        sink.push(r);
        Ok(())
    })?;
    Ok(sink)
}

/// Streaming form of [`run_sequence`]: `visit` receives each bin's result in order.
pub fn run_sequence_with<F>(
    radar: &[RainField],
    obs: &[VehicleObservation],
    cfg: &FusionConfig,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(BinResult) -> Result<()>,
{
    cfg.validate()?;
    if let Some(first) = radar.first() {
        for r in &radar[1..] {
            if !r.grid().same_as(first.grid()) {
                return Err(Error::GridMismatch {
                    left: first.grid().to_string(),
                    right: r.grid().to_string(),
                });
            }
        }
    }
    let mut by_bin: BTreeMap<i64, Vec<VehicleObservation>> = BTreeMap::new();
    for o in obs {
        by_bin
            .entry(bin_of(o.timestamp, cfg.time_bin_width).index())
            .or_default()
            .push(o.clone());
    }
    let mut prev: Option<PosteriorField> = None;
    for r in radar {
        let prior = match &prev {
            None => build_prior(r, cfg)?,
            Some(p) => advance_bin(p, r, cfg)?,
        };
        let bin_obs = by_bin
            .get(&prior.time_bin.index())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let (posterior, stats) = assimilate_bin(&prior, bin_obs, cfg)?;
        prev = Some(posterior.clone());
        visit(BinResult {
            radar: r.clone(),
            prior,
            posterior,
            stats,
        })?;
    }
    Ok(())
}
