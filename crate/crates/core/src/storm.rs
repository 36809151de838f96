//! Synthetic storms: advecting Gaussian rain cells, a degraded radar view of
//! them, and a fleet of vehicles whose wipers respond to the true field with a
//! configured confusion rate.
//!
//! Scenarios are TOML documents (see `assets/default.scn`). Everything is a
//! pure function of the scenario and its seed.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{parse_iso8601, GeoAnchor, GroundTruthLabel};
use crate::model::{GageReading, GridSpec, Point, RainField, VehicleObservation, WiperLevel};
use crate::rng::{self, Purpose};
use crate::sensor::{EmpiricalIntensityDistribution, WiperSensorModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainCell {
    /// Center at t = 0 (meters).
    pub x: f64,
    pub y: f64,
    /// Peak intensity in mm/h.
    pub amplitude: f64,
    /// Gaussian radius in meters.
    pub radius: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
}

impl RainCell {
    pub fn intensity_at(&self, p: Point, t: f64) -> f64 {
        let cx = self.x + self.vx * t;
        let cy = self.y + self.vy * t;
        let d2 = (p.x - cx).powi(2) + (p.y - cy).powi(2);
        self.amplitude * (-d2 / (2.0 * self.radius * self.radius)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarNoise {
    #[serde(default = "one")]
    pub bias: f64,
    #[serde(default)]
    pub lognormal_sigma: f64,
    /// Polygons (lists of `[x, y]` vertices) where the radar reports zero.
    #[serde(default)]
    pub miss_regions: Vec<Vec<[f64; 2]>>,
}

impl Default for RadarNoise {
    fn default() -> Self {
        RadarNoise {
            bias: 1.0,
            lognormal_sigma: 0.0,
            miss_regions: Vec::new(),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fleet {
    pub n_vehicles: usize,
    /// Cruising speed in m/s.
    pub speed: f64,
    /// Seconds between wiper reports.
    #[serde(default = "default_tick")]
    pub tick: f64,
    #[serde(default)]
    pub sensor: Option<WiperSensorModel>,
    /// Probability a report is the washer/mister instead of a wiper state.
    #[serde(default)]
    pub mister_rate: f64,
}

fn default_tick() -> f64 {
    60.0
}

impl Fleet {
    pub fn sensor(&self) -> WiperSensorModel {
        self.sensor.unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StormScenario {
    pub seed: u64,
    /// Storm length in seconds.
    pub duration: f64,
    /// ISO-8601 UTC start time.
    pub start: String,
    /// Radar scan interval in seconds.
    #[serde(default = "default_radar_interval")]
    pub radar_interval: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub geo: GeoAnchor,
    #[serde(default, rename = "cell")]
    pub cells: Vec<RainCell>,
    #[serde(default)]
    pub radar: RadarNoise,
    pub fleet: Fleet,
    #[serde(default, rename = "gage")]
    pub gages: Vec<GageStation>,
}

/// A rain gage reporting the true rate at each radar scan time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GageStation {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

fn default_radar_interval() -> f64 {
    300.0
}

impl StormScenario {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let scn: StormScenario = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::parse(source, line, e.message().to_string())
        })?;
        scn.validate()
            .map_err(|e| Error::parse(source, 0, e.to_string()))?;
        Ok(scn)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn bundled_default() -> Self {
        Self::parse(crate::assets::DEFAULT_SCENARIO, Path::new("default.scn"))
            .expect("bundled default scenario parses")
    }

    pub fn bundled_small() -> Self {
        Self::parse(crate::assets::SMALL_SCENARIO, Path::new("small.scn"))
            .expect("bundled small scenario parses")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("duration must be >= 0"));
        }
        if !(self.radar_interval > 0.0) {
            return Err(Error::invalid("radar_interval must be > 0"));
        }
        parse_iso8601(&self.start)
            .ok_or_else(|| Error::invalid(format!("bad start time {:?}", self.start)))?;
        for c in &self.cells {
            if !(c.amplitude >= 0.0) || !(c.radius > 0.0) {
                return Err(Error::invalid("rain cells need amplitude >= 0 and radius > 0"));
            }
        }
        if !(self.radar.bias >= 0.0) || !(self.radar.lognormal_sigma >= 0.0) {
            return Err(Error::invalid("radar bias and lognormal_sigma must be >= 0"));
        }
        for poly in &self.radar.miss_regions {
            if poly.len() < 3 {
                return Err(Error::invalid("miss region polygons need >= 3 vertices"));
            }
        }
        if !(self.fleet.speed >= 0.0) || !(self.fleet.tick > 0.0) {
            return Err(Error::invalid("fleet speed must be >= 0 and tick > 0"));
        }
        if !(0.0..=1.0).contains(&self.fleet.mister_rate) {
            return Err(Error::invalid("mister_rate must be in [0, 1]"));
        }
        self.fleet.sensor().validate()?;
        Ok(())
    }

    /// Start time as seconds since the epoch.
    pub fn start_epoch(&self) -> f64 {
        parse_iso8601(&self.start).expect("validated start time")
    }

    /// Scan times (seconds since scenario start) covering `[0, duration)`.
    pub fn radar_times(&self) -> Vec<f64> {
        let n = (self.duration / self.radar_interval).ceil() as usize;
        (0..n).map(|k| k as f64 * self.radar_interval).collect()
    }
}

/// True rain rate at `p`, `t` seconds into the storm.
pub fn truth_at(scn: &StormScenario, t: f64, p: Point) -> f64 {
    scn.cells.iter().map(|c| c.intensity_at(p, t)).sum()
}

/// True field at cell centers, `t` seconds into the storm.
pub fn truth_field(scn: &StormScenario, t: f64) -> RainField {
    let g = scn.grid;
    let values = (0..g.len()).map(|i| truth_at(scn, t, g.center_linear(i))).collect();
    RainField::new(g, scn.start_epoch() + t, values).expect("gaussian sums are finite")
}

/// Ray-casting point-in-polygon test.
pub fn point_in_polygon(p: Point, poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > p.y) != (yj > p.y) && p.x < (xj - xi) * (p.y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Radar view of `truth`: `bias * truth * lognormal(0, sigma)` per cell,
/// zero inside the miss regions.
pub fn degrade_to_radar<R: Rng + ?Sized>(truth: &RainField, scn: &StormScenario, rng: &mut R) -> RainField {
    let noise = &scn.radar;
    let ln = (noise.lognormal_sigma > 0.0)
        .then(|| LogNormal::new(0.0, noise.lognormal_sigma).expect("sigma > 0"));
    let g = *truth.grid();
    let values = truth
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            // draw regardless of masking so the noise pattern does not depend on the masks
            let factor = ln.as_ref().map_or(1.0, |d| d.sample(rng));
            let c = g.center_linear(i);
            if noise.miss_regions.iter().any(|poly| point_in_polygon(c, poly)) {
                0.0
            } else {
                noise.bias * v * factor
            }
        })
        .collect();
    RainField::new(g, truth.timestamp(), values).expect("degraded values are finite")
}

/// Truth and radar fields at every radar scan time.
pub fn radar_sequence(scn: &StormScenario) -> Vec<(RainField, RainField)> {
    scn.radar_times()
        .into_iter()
        .enumerate()
        .map(|(k, t)| {
            let truth = truth_field(scn, t);
            let mut rng = rng::stream(scn.seed, Purpose::Radar, &[k as u64]);
            let radar = degrade_to_radar(&truth, scn, &mut rng);
            (truth, radar)
        })
        .collect()
}

/// One vehicle's route sampled at the fleet tick, as `(t, position)` pairs.
fn route(scn: &StormScenario, vehicle: usize) -> Vec<(f64, Point)> {
    let g = &scn.grid;
    let (lo_x, lo_y) = (g.origin_x - 0.5 * g.cell_size, g.origin_y - 0.5 * g.cell_size);
    let (w, h) = (g.nx as f64 * g.cell_size, g.ny as f64 * g.cell_size);
    let mut rng = rng::stream(scn.seed, Purpose::Fleet, &[vehicle as u64]);
    let draw = |rng: &mut rng::StreamRng| {
        Point::new(lo_x + rng.random::<f64>() * w, lo_y + rng.random::<f64>() * h)
    };
    let mut pos = draw(&mut rng);
    let mut target = draw(&mut rng);
    let step = scn.fleet.speed * scn.fleet.tick;
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut k = 0u64;
    while t < scn.duration {
        out.push((t, pos));
        let mut remaining = step;
        while remaining > 0.0 {
            let d = pos.distance(&target);
            if d <= remaining {
                pos = target;
                remaining -= d;
                target = draw(&mut rng);
            } else {
                let f = remaining / d;
                pos = Point::new(pos.x + f * (target.x - pos.x), pos.y + f * (target.y - pos.y));
                remaining = 0.0;
            }
            if step == 0.0 {
                break;
            }
        }
        k += 1;
        t = k as f64 * scn.fleet.tick;
    }
    out
}

pub fn vehicle_id(index: usize) -> String {
    format!("veh{index:02}")
}

/// Wiper reports from every vehicle, sorted by vehicle then time.
pub fn simulate_fleet(scn: &StormScenario) -> Vec<VehicleObservation> {
    let sensor = scn.fleet.sensor();
    let start = scn.start_epoch();
    let mut out = Vec::new();
    for v in 0..scn.fleet.n_vehicles {
        let id = vehicle_id(v);
        let mut rng = rng::stream(scn.seed, Purpose::Wiper, &[v as u64]);
        for (t, p) in route(scn, v) {
            let raining = sensor.is_raining(truth_at(scn, t, p));
            let u: f64 = rng.random();
            let level_draw: u8 = rng.random_range(1..=3);
            let mister = rng.random::<f64>() < scn.fleet.mister_rate;
            let on = if raining { u < sensor.tpr } else { u >= sensor.tnr };
            let level = if mister {
                WiperLevel::MISTER
            } else if on {
                WiperLevel::new(level_draw).expect("1..=3")
            } else {
                WiperLevel::OFF
            };
            out.push(
                VehicleObservation::new(id.clone(), start + t, p, level).expect("finite route"),
            );
        }
    }
    out
}

/// Gage readings at every radar scan time, sorted by time then station.
pub fn simulate_gages(scn: &StormScenario) -> Vec<GageReading> {
    let start = scn.start_epoch();
    let mut out = Vec::new();
    for t in scn.radar_times() {
        for g in &scn.gages {
            let p = Point::new(g.x, g.y);
            out.push(GageReading::new(g.id.clone(), p, start + t, truth_at(scn, t, p)).expect("finite truth"));
        }
    }
    out
}

/// Ground-truth labels for each report: the true state at the fix, held for
/// one fleet tick.
pub fn truth_labels(scn: &StormScenario, obs: &[VehicleObservation]) -> Vec<GroundTruthLabel> {
    let start = scn.start_epoch();
    let tau = scn.fleet.sensor().rain_threshold;
    obs.iter()
        .map(|o| GroundTruthLabel {
            vehicle_id: o.vehicle_id.clone(),
            start: o.timestamp,
            end: o.timestamp + scn.fleet.tick,
            raining: truth_at(scn, o.timestamp - start, o.position) > tau,
        })
        .collect()
}

/// Fit injection histograms the way radar-vs-wiper climatologies are built:
/// the radar intensity at each wiper-on report, grouped by wiper level.
pub fn fit_injection(scn: &StormScenario, dry_limit: f64, edges: &[f64]) -> Result<EmpiricalIntensityDistribution> {
    let radar = radar_sequence(scn);
    let start = scn.start_epoch();
    let mut samples = Vec::new();
    for o in simulate_fleet(scn) {
        if o.wiper_on() != Some(true) {
            continue;
        }
        let k = ((o.timestamp - start) / scn.radar_interval).floor() as usize;
        let Some((_, r)) = radar.get(k) else { continue };
        if let Some(v) = r.sample(o.position) {
            samples.push((o.wiper_level.get(), v));
        }
    }
    EmpiricalIntensityDistribution::fit(&samples, dry_limit, edges)
}
