//! Text-file ingestion: radial radar scans, vehicle wiper traces, rain gages
//! and ground-truth labels, plus the cleaning and co-location steps applied
//! before fusion.
//!
//! All formats are comma-separated, one record per line, `#` starts a comment.
//! See `docs/formats.md` at the repository root for the schemas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bin_of, GageReading, GridSpec, Point, RainField, TimeBin, VehicleObservation, WiperLevel};
use crate::sensor::strip_comment;

pub const TRACE_SCHEMA: &str = "vehicle-trace/1";
pub const GAGE_SCHEMA: &str = "gage/1";
pub const LABEL_SCHEMA: &str = "label/1";
pub const SCAN_SCHEMA: &str = "radial-scan/1";

const EARTH_RADIUS_M: f64 = 6_371_008.8;

// ---------------------------------------------------------------------------
// time

/// Seconds since the Unix epoch for an ISO-8601 timestamp. Offsets are
/// honored; timestamps without one are taken as UTC.
pub fn parse_iso8601(s: &str) -> Option<f64> {
    let s = s.trim();
    let (secs, nanos) = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        (dt.timestamp(), dt.timestamp_subsec_nanos())
    } else {
        let naive = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").ok()?;
        let dt = Utc.from_utc_datetime(&naive);
        (dt.timestamp(), dt.timestamp_subsec_nanos())
    };
    Some(secs as f64 + nanos as f64 * 1e-9)
}

/// Inverse of [`parse_iso8601`]: re-parsing the output gives back `t` exactly.
/// Uses the fewest fractional digits (0, 3, 6 or 9) that achieve that.
pub fn format_iso8601(t: f64) -> String {
    let secs = t.floor();
    let frac = t - secs;
    for step in [1_000_000_000i64, 1_000_000, 1_000, 1] {
        let mut whole = secs as i64;
        let mut nanos = (frac * 1e9 / step as f64).round() as i64 * step;
        if nanos >= 1_000_000_000 {
            whole += 1;
            nanos -= 1_000_000_000;
        }
        if whole as f64 + nanos as f64 * 1e-9 == t || step == 1 {
            let dt = Utc
                .timestamp_opt(whole, nanos as u32)
                .single()
                .expect("timestamp in chrono range");
            return dt.to_rfc3339_opts(SecondsFormat::AutoSi, true);
        }
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// coordinates

/// Anchor of the local equirectangular projection: `(lat0, lon0)` maps to
/// planar `(0, 0)` meters, x east and y north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoAnchor {
    pub lat0: f64,
    pub lon0: f64,
}

impl Default for GeoAnchor {
    fn default() -> Self {
        GeoAnchor { lat0: 42.28, lon0: -83.74 }
    }
}

impl GeoAnchor {
    fn meters_per_radian_x(&self) -> f64 {
        EARTH_RADIUS_M * self.lat0.to_radians().cos()
    }

    pub fn x_of(&self, lon: f64) -> f64 {
        (lon - self.lon0).to_radians() * self.meters_per_radian_x()
    }

    pub fn y_of(&self, lat: f64) -> f64 {
        (lat - self.lat0).to_radians() * EARTH_RADIUS_M
    }

    pub fn to_xy(&self, lat: f64, lon: f64) -> Point {
        Point::new(self.x_of(lon), self.y_of(lat))
    }

    /// `(lat, lon)` of a planar point.
    pub fn to_latlon(&self, p: Point) -> (f64, f64) {
        (
            self.lat0 + (p.y / EARTH_RADIUS_M).to_degrees(),
            self.lon0 + (p.x / self.meters_per_radian_x()).to_degrees(),
        )
    }

    /// Like [`to_latlon`](Self::to_latlon) but searches neighboring floats so
    /// that converting back lands exactly on `p` whenever such a pair exists.
    pub fn to_latlon_exact(&self, p: Point) -> (f64, f64) {
        let (lat, lon) = self.to_latlon(p);
        (
            nudge(lat, p.y, |v| self.y_of(v)),
            nudge(lon, p.x, |v| self.x_of(v)),
        )
    }
}

fn nudge(start: f64, target: f64, f: impl Fn(f64) -> f64) -> f64 {
    if f(start) == target {
        return start;
    }
    let (mut up, mut down) = (start, start);
    for _ in 0..256 {
        up = up.next_up();
        if f(up) == target {
            return up;
        }
        down = down.next_down();
        if f(down) == target {
            return down;
        }
    }
    start
}

// ---------------------------------------------------------------------------
// shared line handling

fn schema_of(raw: &str) -> Option<&str> {
    let rest = raw.trim().strip_prefix('#')?.trim();
    Some(rest.strip_prefix("schema:")?.trim())
}

/// Iterate `(line_number, fields)` over data lines, checking an optional
/// `# schema: <name>` comment against `expected`.
fn data_lines<'a>(
    text: &'a str,
    source: &Path,
    expected: &str,
    header_first: &str,
) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(found) = schema_of(raw) {
            if found != expected {
                return Err(Error::SchemaVersion {
                    path: source.to_path_buf(),
                    expected: expected.to_string(),
                    found: found.to_string(),
                });
            }
            continue;
        }
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields[0] == header_first {
            continue;
        }
        out.push((i + 1, fields));
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

// ---------------------------------------------------------------------------
// radial scans

#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    /// Degrees clockwise from north, in `[0, 360)`.
    pub azimuth: f64,
    /// `(range m, intensity mm/h)` with strictly increasing range.
    pub gates: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialScan {
    pub station: Point,
    pub timestamp: f64,
    pub rays: Vec<Ray>,
}

impl RadialScan {
    /// Validates and sorts rays by azimuth.
    pub fn new(station: Point, timestamp: f64, mut rays: Vec<Ray>) -> Result<Self> {
        if !station.is_finite() || !timestamp.is_finite() {
            return Err(Error::invalid("scan station and time must be finite"));
        }
        for ray in &rays {
            if !(0.0..360.0).contains(&ray.azimuth) {
                return Err(Error::invalid(format!("azimuth {} outside [0, 360)", ray.azimuth)));
            }
            for w in ray.gates.windows(2) {
                if !(w[1].0 > w[0].0) {
                    return Err(Error::invalid(format!(
                        "ranges not strictly increasing on azimuth {}",
                        ray.azimuth
                    )));
                }
            }
            for &(r, v) in &ray.gates {
                if !(r >= 0.0 && r.is_finite()) || !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::invalid("gate range and intensity must be finite and >= 0"));
                }
            }
        }
        rays.sort_by(|a, b| a.azimuth.total_cmp(&b.azimuth));
        for w in rays.windows(2) {
            if w[0].azimuth == w[1].azimuth {
                return Err(Error::invalid(format!("duplicate azimuth {}", w[0].azimuth)));
            }
        }
        Ok(RadialScan { station, timestamp, rays })
    }

    pub fn gate_count(&self) -> usize {
        self.rays.iter().map(|r| r.gates.len()).sum()
    }

    /// Cartesian center of a gate (azimuth clockwise from north).
    pub fn gate_position(&self, azimuth: f64, range: f64) -> Point {
        let a = azimuth.to_radians();
        Point::new(self.station.x + range * a.sin(), self.station.y + range * a.cos())
    }

    /// Header line `station,<x>,<y>,<time>` followed by one row per gate.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut header: Option<(Point, f64)> = None;
        let mut rays: BTreeMap<u64, Ray> = BTreeMap::new();
        for (line, f) in data_lines(text, source, SCAN_SCHEMA, "azimuth_deg")? {
            if f[0] == "station" {
                if f.len() != 4 {
                    return Err(Error::parse(source, line, "station line needs x, y, time"));
                }
                let (Some(x), Some(y), Some(t)) = (finite(f[1]), finite(f[2]), parse_iso8601(f[3])) else {
                    return Err(Error::parse(source, line, "bad station line"));
                };
                header = Some((Point::new(x, y), t));
                continue;
            }
            if f.len() != 3 {
                return Err(Error::parse(source, line, "expected azimuth_deg, range_m, intensity_mm_h"));
            }
            let (Some(az), Some(r), Some(v)) = (finite(f[0]), finite(f[1]), finite(f[2])) else {
                return Err(Error::parse(source, line, "non-numeric gate"));
            };
            if !(0.0..360.0).contains(&az) || r < 0.0 || v < 0.0 {
                return Err(Error::parse(source, line, "gate outside valid ranges"));
            }
            let ray = rays.entry(az.to_bits()).or_insert_with(|| Ray { azimuth: az, gates: Vec::new() });
            if ray.gates.last().is_some_and(|&(prev, _)| r <= prev) {
                return Err(Error::parse(source, line, "ranges must increase along a ray"));
            }
            ray.gates.push((r, v));
        }
        let (station, t) = header.ok_or_else(|| Error::parse(source, 0, "missing station line"))?;
        RadialScan::new(station, t, rays.into_values().collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# schema: {SCAN_SCHEMA}\n");
        s += &format!(
            "station,{},{},{}\nazimuth_deg,range_m,intensity_mm_h\n",
            self.station.x,
            self.station.y,
            format_iso8601(self.timestamp)
        );
        for ray in &self.rays {
            for (r, v) in &ray.gates {
                s += &format!("{},{},{}\n", ray.azimuth, r, v);
            }
        }
        s
    }
}

/// A resampled scan and which cells the scan actually reaches.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledScan {
    pub field: RainField,
    pub coverage: Vec<bool>,
}

#[derive(Clone, Copy)]
struct Gate {
    p: Point,
    azimuth: f64,
    range: f64,
    value: f64,
}

fn closer(d2: f64, g: &Gate, best_d2: f64, best: &Gate) -> bool {
    let tol = 1e-9 * best_d2.max(1.0);
    if (d2 - best_d2).abs() <= tol {
        (g.azimuth, g.range) < (best.azimuth, best.range)
    } else {
        d2 < best_d2
    }
}

/// Spatial hash over gate centers for nearest-gate queries.
struct GateIndex {
    gates: Vec<Gate>,
    bucket: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    lo: (i64, i64),
    hi: (i64, i64),
}

impl GateIndex {
    fn new(gates: Vec<Gate>, bucket: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
        for (i, g) in gates.iter().enumerate() {
            let k = ((g.p.x / bucket).floor() as i64, (g.p.y / bucket).floor() as i64);
            lo = (lo.0.min(k.0), lo.1.min(k.1));
            hi = (hi.0.max(k.0), hi.1.max(k.1));
            cells.entry(k).or_default().push(i);
        }
        GateIndex { gates, bucket, cells, lo, hi }
    }

    fn nearest(&self, q: Point) -> &Gate {
        let k = ((q.x / self.bucket).floor() as i64, (q.y / self.bucket).floor() as i64);
        let max_ring = [
            (k.0 - self.lo.0).abs(),
            (self.hi.0 - k.0).abs(),
            (k.1 - self.lo.1).abs(),
            (self.hi.1 - k.1).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..=max_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    let Some(ids) = self.cells.get(&(k.0 + dx, k.1 + dy)) else { continue };
                    for &i in ids {
                        let g = &self.gates[i];
                        let d2 = q.distance_sq(&g.p);
                        match best {
                            Some((bd2, bi)) if !closer(d2, g, bd2, &self.gates[bi]) => {}
                            _ => best = Some((d2, i)),
                        }
                    }
                }
            }
            // every gate in ring + 1 or beyond is at least `ring * bucket` away
            if let Some((bd2, _)) = best {
                let reach = ring as f64 * self.bucket;
                if bd2.sqrt() * (1.0 + 1e-9) < reach {
                    break;
                }
            }
        }
        &self.gates[best.expect("index is non-empty").1]
    }
}

fn coverage_radius(scan: &RadialScan) -> f64 {
    let max_range = scan
        .rays
        .iter()
        .filter_map(|r| r.gates.last().map(|g| g.0))
        .fold(0.0, f64::max);
    let mut spacings: Vec<f64> = scan
        .rays
        .iter()
        .flat_map(|r| r.gates.windows(2).map(|w| w[1].0 - w[0].0))
        .collect();
    if spacings.is_empty() {
        return f64::INFINITY;
    }
    spacings.sort_by(f64::total_cmp);
    max_range + 0.5 * spacings[spacings.len() / 2]
}

/// Nearest-gate resampling of a polar scan onto a Cartesian grid.
///
/// Gate centers are converted to planar coordinates and every covered cell
/// takes the value of the closest one; exact distance ties go to the smaller
/// azimuth, then the smaller range. Cells farther from the station than the
/// last gate plus half a gate spacing are set to 0 and marked uncovered.
pub fn resample_radial(scan: &RadialScan, grid: &GridSpec) -> Result<ResampledScan> {
    grid.validate()?;
    let gates: Vec<Gate> = scan
        .rays
        .iter()
        .flat_map(|ray| {
            ray.gates.iter().map(move |&(range, value)| Gate {
                p: scan.gate_position(ray.azimuth, range),
                azimuth: ray.azimuth,
                range,
                value,
            })
        })
        .collect();
    if gates.is_empty() {
        return Err(Error::EmptyScan);
    }
    let index = GateIndex::new(gates, grid.cell_size);
    let reach = coverage_radius(scan);
    let mut values = Vec::with_capacity(grid.len());
    let mut coverage = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let c = grid.center_linear(i);
        if c.distance(&scan.station) > reach {
            values.push(0.0);
            coverage.push(false);
        } else {
            values.push(index.nearest(c).value);
            coverage.push(true);
        }
    }
    Ok(ResampledScan {
        field: RainField::new(*grid, scan.timestamp, values)?,
        coverage,
    })
}

/// Treat every cell center of `field` as a gate seen from `station`.
pub fn field_as_scan(field: &RainField, station: Point) -> Result<RadialScan> {
    let g = field.grid();
    let mut rays: BTreeMap<u64, Ray> = BTreeMap::new();
    for (i, &v) in field.values().iter().enumerate() {
        let c = g.center_linear(i);
        let (dx, dy) = (c.x - station.x, c.y - station.y);
        let mut az = dx.atan2(dy).to_degrees();
        if az < 0.0 {
            az += 360.0;
        }
        if az >= 360.0 {
            az = 0.0;
        }
        let r = dx.hypot(dy);
        let ray = rays.entry(az.to_bits()).or_insert_with(|| Ray { azimuth: az, gates: Vec::new() });
        ray.gates.push((r, v));
    }
    let rays = rays
        .into_values()
        .map(|mut r| {
            r.gates.sort_by(|a, b| a.0.total_cmp(&b.0));
            r
        })
        .collect();
    RadialScan::new(station, field.timestamp(), rays)
}

// ---------------------------------------------------------------------------
// vehicle traces

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QualityFlag {
    NonReporting,
    FlutterMalfunction,
    UnobservableModes,
}

impl QualityFlag {
    pub fn name(self) -> &'static str {
        match self {
            QualityFlag::NonReporting => "non_reporting",
            QualityFlag::FlutterMalfunction => "flutter_malfunction",
            QualityFlag::UnobservableModes => "unobservable_modes",
        }
    }
}

/// Data-quality findings for one vehicle. `intervals` is the sorted,
/// merged union of every flagged time span.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceQualityReport {
    pub vehicle_id: String,
    pub flags: BTreeSet<QualityFlag>,
    pub intervals: Vec<(f64, f64)>,
}

impl TraceQualityReport {
    pub fn new(vehicle_id: impl Into<String>) -> Self {
        TraceQualityReport {
            vehicle_id: vehicle_id.into(),
            ..Default::default()
        }
    }

    pub fn add(&mut self, flag: QualityFlag, intervals: &[(f64, f64)]) {
        if intervals.is_empty() {
            return;
        }
        self.flags.insert(flag);
        self.intervals.extend_from_slice(intervals);
        self.intervals = merge_intervals(std::mem::take(&mut self.intervals));
    }

    pub fn covers(&self, t: f64) -> bool {
        let i = self.intervals.partition_point(|iv| iv.1 < t);
        self.intervals.get(i).is_some_and(|iv| iv.0 <= t)
    }

    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

pub fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (s, e) in v {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTrace {
    pub observations: Vec<VehicleObservation>,
    /// One report per vehicle, ordered by vehicle id.
    pub reports: Vec<TraceQualityReport>,
    /// Line numbers of skipped rows.
    pub malformed: Vec<usize>,
}

impl ParsedTrace {
    pub fn report(&self, vehicle_id: &str) -> Option<&TraceQualityReport> {
        self.reports.iter().find(|r| r.vehicle_id == vehicle_id)
    }

    /// Observations outside every flagged interval of their vehicle.
    pub fn clean_observations(&self) -> Vec<VehicleObservation> {
        remove_flagged(&self.observations, &self.reports)
    }
}

pub fn remove_flagged(obs: &[VehicleObservation], reports: &[TraceQualityReport]) -> Vec<VehicleObservation> {
    let by_id: HashMap<&str, &TraceQualityReport> =
        reports.iter().map(|r| (r.vehicle_id.as_str(), r)).collect();
    obs.iter()
        .filter(|o| !by_id.get(o.vehicle_id.as_str()).is_some_and(|r| r.covers(o.timestamp)))
        .cloned()
        .collect()
}

fn parse_trace_row(f: &[&str], anchor: &GeoAnchor) -> Option<VehicleObservation> {
    if f.len() != 5 || f[0].is_empty() {
        return None;
    }
    let t = parse_iso8601(f[1])?;
    let lat = finite(f[2]).filter(|v| v.abs() <= 90.0)?;
    let lon = finite(f[3]).filter(|v| v.abs() <= 180.0)?;
    let level = WiperLevel::new(f[4].parse::<u8>().ok()?).ok()?;
    VehicleObservation::new(f[0], t, anchor.to_xy(lat, lon), level).ok()
}

/// Parse a wiper trace (`vehicle_id, iso8601_time, lat, lon, wiper_level`).
///
/// Malformed rows are skipped and their line numbers recorded. Observations
/// are returned sorted by vehicle and time; each vehicle's report carries
/// its flutter intervals.
pub fn parse_vehicle_trace(text: &str, source: &Path, anchor: &GeoAnchor) -> Result<ParsedTrace> {
    let mut parsed = ParsedTrace::default();
    for (line, f) in data_lines(text, source, TRACE_SCHEMA, "vehicle_id")? {
        match parse_trace_row(&f, anchor) {
            Some(o) => parsed.observations.push(o),
            None => parsed.malformed.push(line),
        }
    }
    sort_observations(&mut parsed.observations);
    for (id, trace) in by_vehicle(&parsed.observations) {
        let mut report = TraceQualityReport::new(id);
        report.add(QualityFlag::FlutterMalfunction, &detect_flutter(trace, &FlutterParams::default()));
        parsed.reports.push(report);
    }
    Ok(parsed)
}

pub fn load_vehicle_trace(path: &Path, anchor: &GeoAnchor) -> Result<ParsedTrace> {
    parse_vehicle_trace(&read(path)?, path, anchor)
}

pub fn sort_observations(obs: &mut [VehicleObservation]) {
    obs.sort_by(|a, b| {
        a.vehicle_id
            .cmp(&b.vehicle_id)
            .then(a.timestamp.total_cmp(&b.timestamp))
    });
}

/// Contiguous per-vehicle slices of observations sorted by vehicle.
pub fn by_vehicle(obs: &[VehicleObservation]) -> Vec<(&str, &[VehicleObservation])> {
    obs.chunk_by(|a, b| a.vehicle_id == b.vehicle_id)
        .map(|c| (c[0].vehicle_id.as_str(), c))
        .collect()
}

pub fn write_vehicle_trace(obs: &[VehicleObservation], anchor: &GeoAnchor) -> String {
    let mut s = format!("# schema: {TRACE_SCHEMA}\nvehicle_id,iso8601_time,lat,lon,wiper_level\n");
    for o in obs {
        let (lat, lon) = anchor.to_latlon_exact(o.position);
        s += &format!(
            "{},{},{},{},{}\n",
            o.vehicle_id,
            format_iso8601(o.timestamp),
            lat,
            lon,
            o.wiper_level
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlutterParams {
    /// Toggles per second at or above which switching counts as flutter.
    pub rate: f64,
    /// Shortest sustained stretch reported.
    pub min_duration: f64,
}

impl Default for FlutterParams {
    fn default() -> Self {
        FlutterParams { rate: 2.0, min_duration: 5.0 }
    }
}

/// Intervals where one vehicle's wiper toggles on/off at `rate` or faster for
/// at least `min_duration` seconds. Mister readings are ignored.
///
/// An interval starts at the reading before its first toggle and ends at its
/// last toggle.
pub fn detect_flutter(trace: &[VehicleObservation], params: &FlutterParams) -> Vec<(f64, f64)> {
    let states: Vec<(f64, bool)> = trace
        .iter()
        .filter_map(|o| o.wiper_on().map(|on| (o.timestamp, on)))
        .collect();
    let max_gap = 1.0 / params.rate;
    let mut out = Vec::new();
    // (start of the sustained stretch, last toggle)
    let mut run: Option<(f64, f64)> = None;
    let close = |run: Option<(f64, f64)>, out: &mut Vec<(f64, f64)>| {
        if let Some((s, last)) = run {
            if last - s >= params.min_duration {
                out.push((s, last));
            }
        }
    };
    for w in states.windows(2) {
        if w[0].1 == w[1].1 {
            continue;
        }
        let (prev_t, t) = (w[0].0, w[1].0);
        run = match run {
            Some((s, last)) if t - last <= max_gap => Some((s, t)),
            other => {
                close(other, &mut out);
                // a toggle right after the previous reading starts the stretch there
                Some((if t - prev_t <= max_gap { prev_t } else { t }, t))
            }
        };
    }
    close(run, &mut out);
    out
}

/// One vehicle's readings within one aggregation bin.
#[derive(Debug, Clone, PartialEq)]
pub struct WiperBin {
    pub vehicle_id: String,
    pub bin: TimeBin,
    /// `None` when the bin only holds mister readings.
    pub on: Option<bool>,
    pub modal_level: Option<WiperLevel>,
    /// Time and position of the last fix in the bin.
    pub timestamp: f64,
    pub position: Point,
    pub samples: usize,
}

impl WiperBin {
    /// Collapse to a single observation carrying the modal level (0 when off,
    /// the mister level when there is no rain evidence).
    pub fn to_observation(&self) -> VehicleObservation {
        let level = match self.on {
            Some(true) => self.modal_level.expect("on bins carry a level"),
            Some(false) => WiperLevel::OFF,
            None => WiperLevel::MISTER,
        };
        VehicleObservation::new(self.vehicle_id.clone(), self.timestamp, self.position, level)
            .expect("finite fix")
    }
}

/// Per-vehicle wiper aggregation over bins of `width` seconds. A bin is on
/// iff any non-mister reading has level >= 1. The modal level breaks ties
/// toward the lower level.
pub fn aggregate_wiper(trace: &[VehicleObservation], width: f64) -> Vec<WiperBin> {
    let mut sorted = trace.to_vec();
    sort_observations(&mut sorted);
    let mut out = Vec::new();
    for (id, obs) in by_vehicle(&sorted) {
        for chunk in obs.chunk_by(|a, b| bin_of(a.timestamp, width).index() == bin_of(b.timestamp, width).index()) {
            let mut counts = [0usize; 5];
            for o in chunk {
                counts[o.wiper_level.get() as usize] += 1;
            }
            let evidence = counts[..4].iter().sum::<usize>() > 0;
            let on = counts[1..4].iter().sum::<usize>() > 0;
            let modal = (1..4u8)
                .filter(|&l| counts[l as usize] > 0)
                .max_by(|&a, &b| counts[a as usize].cmp(&counts[b as usize]).then(b.cmp(&a)))
                .map(|l| WiperLevel::new(l).expect("1..=3"));
            let last = chunk.last().expect("chunks are non-empty");
            out.push(WiperBin {
                vehicle_id: id.to_string(),
                bin: bin_of(chunk[0].timestamp, width),
                on: evidence.then_some(on),
                modal_level: modal,
                timestamp: last.timestamp,
                position: last.position,
                samples: chunk.len(),
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// gages

/// Gage readings within `radius` meters (inclusive), nearest first.
pub fn nearest_gages(position: Point, gages: &[GageReading], radius: f64) -> Vec<&GageReading> {
    let mut hits: Vec<(f64, &GageReading)> = gages
        .iter()
        .map(|g| (g.position.distance(&position), g))
        .filter(|(d, _)| *d <= radius)
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.station_id.cmp(&b.1.station_id)));
    hits.into_iter().map(|(_, g)| g).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedGages {
    pub readings: Vec<GageReading>,
    pub malformed: Vec<usize>,
}

/// Parse a gage file (`station_id, lat, lon, iso8601_time, intensity_mm_h`).
/// Intensities are rain rates, not accumulations.
pub fn parse_gages(text: &str, source: &Path, anchor: &GeoAnchor) -> Result<ParsedGages> {
    let mut out = ParsedGages::default();
    for (line, f) in data_lines(text, source, GAGE_SCHEMA, "station_id")? {
        let row = (f.len() == 5 && !f[0].is_empty())
            .then(|| {
                let lat = finite(f[1]).filter(|v| v.abs() <= 90.0)?;
                let lon = finite(f[2]).filter(|v| v.abs() <= 180.0)?;
                let t = parse_iso8601(f[3])?;
                GageReading::new(f[0], anchor.to_xy(lat, lon), t, finite(f[4])?).ok()
            })
            .flatten();
        match row {
            Some(g) => out.readings.push(g),
            None => out.malformed.push(line),
        }
    }
    Ok(out)
}

pub fn load_gages(path: &Path, anchor: &GeoAnchor) -> Result<ParsedGages> {
    parse_gages(&read(path)?, path, anchor)
}

pub fn write_gages(gages: &[GageReading], anchor: &GeoAnchor) -> String {
    let mut s = format!("# schema: {GAGE_SCHEMA}\nstation_id,lat,lon,iso8601_time,intensity_mm_h\n");
    for g in gages {
        let (lat, lon) = anchor.to_latlon_exact(g.position);
        s += &format!("{},{},{},{},{}\n", g.station_id, lat, lon, format_iso8601(g.timestamp), g.intensity);
    }
    s
}

// ---------------------------------------------------------------------------
// ground-truth labels

/// Labeled raining state of one vehicle over `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLabel {
    pub vehicle_id: String,
    pub start: f64,
    pub end: f64,
    pub raining: bool,
}

/// Parse a label file (`vehicle_id, iso8601_start, iso8601_end, raining`).
/// Labels are hand-made, so any bad row is an error.
pub fn parse_labels(text: &str, source: &Path) -> Result<Vec<GroundTruthLabel>> {
    let mut out = Vec::new();
    for (line, f) in data_lines(text, source, LABEL_SCHEMA, "vehicle_id")? {
        let bad = |m: &str| Error::parse(source, line, m);
        if f.len() != 4 {
            return Err(bad("expected vehicle_id, iso8601_start, iso8601_end, raining"));
        }
        let start = parse_iso8601(f[1]).ok_or_else(|| bad("bad start time"))?;
        let end = parse_iso8601(f[2]).ok_or_else(|| bad("bad end time"))?;
        if end <= start {
            return Err(bad("label interval must have end > start"));
        }
        let raining = match f[3] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("raining must be 0 or 1")),
        };
        out.push(GroundTruthLabel { vehicle_id: f[0].to_string(), start, end, raining });
    }
    out.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id).then(a.start.total_cmp(&b.start)));
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<Vec<GroundTruthLabel>> {
    parse_labels(&read(path)?, path)
}

pub fn write_labels(labels: &[GroundTruthLabel]) -> String {
    let mut s = format!("# schema: {LABEL_SCHEMA}\nvehicle_id,iso8601_start,iso8601_end,raining\n");
    for l in labels {
        s += &format!(
            "{},{},{},{}\n",
            l.vehicle_id,
            format_iso8601(l.start),
            format_iso8601(l.end),
            u8::from(l.raining)
        );
    }
    s
}

/// Flags that need ground truth to see: a vehicle whose wiper never turns on
/// while labels say it drove through rain is non-reporting; a vehicle that
/// does use its wiper but stays off through a labeled-rain stretch of at
/// least `min_gap` seconds is in a mode the sensor cannot observe.
pub fn flag_against_labels(
    reports: &mut Vec<TraceQualityReport>,
    obs: &[VehicleObservation],
    labels: &[GroundTruthLabel],
    min_gap: f64,
) {
    let mut sorted = obs.to_vec();
    sort_observations(&mut sorted);
    for (id, trace) in by_vehicle(&sorted) {
        let rainy: Vec<&GroundTruthLabel> = labels.iter().filter(|l| l.vehicle_id == id && l.raining).collect();
        if rainy.is_empty() {
            continue;
        }
        let ever_on = trace.iter().any(|o| o.wiper_on() == Some(true));
        let mut silent = Vec::new();
        for l in &rainy {
            let inside: Vec<&VehicleObservation> =
                trace.iter().filter(|o| o.timestamp >= l.start && o.timestamp < l.end).collect();
            if inside.is_empty() || inside.iter().any(|o| o.wiper_on() == Some(true)) {
                continue;
            }
            silent.push((l.start, l.end));
        }
        let silent = merge_intervals(silent);
        let report = match reports.iter().position(|r| r.vehicle_id == id) {
            Some(i) => &mut reports[i],
            None => {
                reports.push(TraceQualityReport::new(id));
                reports.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id));
                let i = reports.iter().position(|r| r.vehicle_id == id).expect("just inserted");
                &mut reports[i]
            }
        };
        if !ever_on {
            if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                if !silent.is_empty() {
                    report.add(QualityFlag::NonReporting, &[(first.timestamp, last.timestamp)]);
                }
            }
        } else {
            let long: Vec<(f64, f64)> = silent.into_iter().filter(|(s, e)| e - s >= min_gap).collect();
            report.add(QualityFlag::UnobservableModes, &long);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(id: &str, t: f64, level: u8) -> VehicleObservation {
        VehicleObservation::new(id, t, Point::new(t, 0.0), WiperLevel::new(level).unwrap()).unwrap()
    }

    #[test]
    fn iso_round_trip() {
        for s in ["2014-08-11T21:00:00Z", "2014-08-11T21:00:00.002Z", "2014-08-11T21:00:59.123456Z"] {
            let t = parse_iso8601(s).unwrap();
            assert_eq!(format_iso8601(t), s);
        }
        assert_eq!(parse_iso8601("1970-01-01T00:01:00Z"), Some(60.0));
        assert_eq!(parse_iso8601("1970-01-01T01:00:00+01:00"), Some(0.0));
        assert_eq!(parse_iso8601("1970-01-01T00:00:30"), Some(30.0));
        assert_eq!(parse_iso8601("yesterday"), None);
    }

    #[test]
    fn equirectangular_scale() {
        let a = GeoAnchor::default();
        let north = a.to_xy(a.lat0 + 0.01, a.lon0);
        assert!((north.y - 1111.95).abs() < 0.1 && north.x == 0.0);
        let back = a.to_latlon(Point::new(1234.5, -987.0));
        let p = a.to_xy(back.0, back.1);
        assert!((p.x - 1234.5).abs() < 1e-6 && (p.y + 987.0).abs() < 1e-6);
    }

    fn one_gate_scan(az: f64, r: f64, v: f64) -> RadialScan {
        RadialScan::new(Point::new(0.0, 0.0), 0.0, vec![Ray { azimuth: az, gates: vec![(r, v)] }]).unwrap()
    }

    #[test]
    fn single_gate_fills_grid() {
        let grid = GridSpec::new(0.0, 0.0, 1000.0, 4, 3).unwrap();
        // gate due east at 1 km lands on cell (1, 0)
        let out = resample_radial(&one_gate_scan(90.0, 1000.0, 7.5), &grid).unwrap();
        assert!(out.field.values().iter().all(|v| *v == 7.5));
        assert!(out.coverage.iter().all(|c| *c));
    }

    #[test]
    fn equidistant_gates_take_smaller_azimuth() {
        let grid = GridSpec::new(0.0, 0.0, 1000.0, 1, 1).unwrap();
        let scan = RadialScan::new(
            Point::new(0.0, 0.0),
            0.0,
            vec![
                Ray { azimuth: 270.0, gates: vec![(500.0, 2.0)] },
                Ray { azimuth: 90.0, gates: vec![(500.0, 1.0)] },
            ],
        )
        .unwrap();
        assert_eq!(resample_radial(&scan, &grid).unwrap().field.values(), &[1.0]);
    }

    #[test]
    fn empty_scan_is_an_error() {
        let grid = GridSpec::new(0.0, 0.0, 1000.0, 2, 2).unwrap();
        let scan = RadialScan::new(Point::new(0.0, 0.0), 0.0, vec![]).unwrap();
        assert!(matches!(resample_radial(&scan, &grid), Err(Error::EmptyScan)));
    }

    #[test]
    fn coverage_mask_beyond_last_gate() {
        let grid = GridSpec::new(0.0, 0.0, 1000.0, 10, 1).unwrap();
        let gates: Vec<(f64, f64)> = (1..=8).map(|k| (k as f64 * 250.0, 1.0)).collect();
        let scan = RadialScan::new(Point::new(0.0, 0.0), 0.0, vec![Ray { azimuth: 90.0, gates }]).unwrap();
        let out = resample_radial(&scan, &grid).unwrap();
        // reach is 2000 + 125 m
        assert_eq!(&out.coverage[..4], &[true, true, true, false]);
        assert!(out.field.values()[3..].iter().all(|v| *v == 0.0));
    }

    fn brute_nearest(scan: &RadialScan, q: Point) -> f64 {
        let mut best: Option<(f64, Gate)> = None;
        for ray in &scan.rays {
            for &(r, v) in &ray.gates {
                let g = Gate { p: scan.gate_position(ray.azimuth, r), azimuth: ray.azimuth, range: r, value: v };
                let d2 = q.distance_sq(&g.p);
                if best.as_ref().is_none_or(|(bd, bg)| closer(d2, &g, *bd, bg)) {
                    best = Some((d2, g));
                }
            }
        }
        best.unwrap().1.value
    }

    #[test]
    fn linear_field_matches_brute_force() {
        let station = Point::new(-3000.0, -2000.0);
        let f = |p: Point| p.x / 10000.0;
        let probe = RadialScan::new(station, 0.0, vec![]).unwrap();
        let rays: Vec<Ray> = (0..720)
            .map(|k| {
                let az = k as f64 * 0.5;
                let gates = (1..=100)
                    .map(|j| {
                        let r = j as f64 * 250.0;
                        (r, f(probe.gate_position(az, r)).max(0.0))
                    })
                    .collect();
                Ray { azimuth: az, gates }
            })
            .collect();
        let scan = RadialScan::new(station, 0.0, rays).unwrap();
        let grid = GridSpec::new(0.0, 0.0, 1000.0, 12, 10).unwrap();
        let out = resample_radial(&scan, &grid).unwrap();
        for i in 0..grid.len() {
            let c = grid.center_linear(i);
            let got = out.field.values()[i];
            assert_eq!(got, brute_nearest(&scan, c));
            let r = c.distance(&station);
            let spacing = 250.0f64.max(r * 0.5f64.to_radians());
            assert!((got - f(c)).abs() <= spacing / 10000.0, "cell {i}");
        }
    }

    #[test]
    fn scan_text_round_trip() {
        let scan = RadialScan::new(
            Point::new(10.0, -5.5),
            1.4e9,
            vec![
                Ray { azimuth: 0.5, gates: vec![(250.0, 0.0), (500.0, 1.25)] },
                Ray { azimuth: 0.0, gates: vec![(250.0, 3.0)] },
            ],
        )
        .unwrap();
        assert_eq!(RadialScan::parse(&scan.to_text(), Path::new("s")).unwrap(), scan);
        let bad = "station,0,0,1970-01-01T00:00:00Z\n0,500,1\n0,250,1\n";
        assert!(matches!(RadialScan::parse(bad, Path::new("s")), Err(Error::Parse { line: 3, .. })));
    }

    proptest! {
        #[test]
        fn resampling_is_idempotent(
            values in proptest::collection::vec(0.0f64..50.0, 20),
            sx in -5000.0f64..10000.0,
            sy in -5000.0f64..10000.0,
        ) {
            let grid = GridSpec::new(500.0, 500.0, 1000.0, 5, 4).unwrap();
            let field = RainField::new(grid, 0.0, values).unwrap();
            let scan = field_as_scan(&field, Point::new(sx, sy)).unwrap();
            let again = resample_radial(&scan, &grid).unwrap();
            prop_assert_eq!(again.field, field);
        }
    }

    const TRACE: &str = "\
# schema: vehicle-trace/1
vehicle_id,iso8601_time,lat,lon,wiper_level
v2,2014-08-11T21:00:00Z,42.29,-83.73,0
v1,2014-08-11T21:00:00.002Z,42.28,-83.74,4
v1,2014-08-11T21:00:01Z,42.28,-83.74,7
v1,not-a-time,42.28,-83.74,1
v1,2014-08-11T21:00:02Z,42.28,-83.74,2
";

    #[test]
    fn trace_parsing_rules() {
        let a = GeoAnchor::default();
        let p = parse_vehicle_trace(TRACE, Path::new("t"), &a).unwrap();
        assert_eq!(p.observations.len(), 3);
        assert_eq!(p.malformed, vec![5, 6]);
        assert_eq!(p.observations[0].vehicle_id, "v1");
        assert!(p.observations[0].wiper_level.is_mister());
        assert_eq!(p.observations[0].position, Point::new(0.0, 0.0));
        assert_eq!(p.reports.len(), 2);
        assert!(p.reports.iter().all(|r| r.is_clean()));
    }

    #[test]
    fn empty_trace() {
        let p = parse_vehicle_trace("", Path::new("t"), &GeoAnchor::default()).unwrap();
        assert_eq!(p, ParsedTrace::default());
    }

    #[test]
    fn schema_mismatch() {
        let text = "# schema: vehicle-trace/2\n";
        match parse_vehicle_trace(text, Path::new("t"), &GeoAnchor::default()) {
            Err(Error::SchemaVersion { found, .. }) => assert_eq!(found, "vehicle-trace/2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_round_trip_is_bit_exact() {
        let a = GeoAnchor::default();
        let first = parse_vehicle_trace(TRACE, Path::new("t"), &a).unwrap();
        let text = write_vehicle_trace(&first.observations, &a);
        let second = parse_vehicle_trace(&text, Path::new("t"), &a).unwrap();
        assert_eq!(first.observations, second.observations);
        assert!(second.malformed.is_empty());
    }

    proptest! {
        #[test]
        fn arbitrary_traces_round_trip(
            rows in proptest::collection::vec((0u8..3, 0i64..100_000_000, -0.2f64..0.2, -0.2f64..0.2, 0u8..5), 1..30)
        ) {
            let a = GeoAnchor::default();
            let mut text = String::new();
            for (v, ms, dlat, dlon, lvl) in rows {
                let t = format_iso8601(1.4e9 + ms as f64 / 1000.0);
                text += &format!("v{v},{t},{},{},{lvl}\n", a.lat0 + dlat, a.lon0 + dlon);
            }
            let first = parse_vehicle_trace(&text, Path::new("t"), &a).unwrap();
            let again = parse_vehicle_trace(&write_vehicle_trace(&first.observations, &a), Path::new("t"), &a).unwrap();
            prop_assert_eq!(first.observations, again.observations);
        }
    }

    #[test]
    fn flutter_detection() {
        let p = FlutterParams::default();
        let steady: Vec<_> = (0..600).map(|k| obs("v", k as f64, 1)).collect();
        assert!(detect_flutter(&steady, &p).is_empty());

        let flutter: Vec<_> = (0..=1000).map(|k| obs("v", k as f64 * 0.01, (k % 2) as u8)).collect();
        let iv = detect_flutter(&flutter, &p);
        assert_eq!(iv.len(), 1);
        assert!(iv[0].0 <= 0.0 + 1e-9 && iv[0].1 >= 10.0 - 1e-9);

        let slow: Vec<_> = (0..30).map(|k| obs("v", k as f64 * 60.0, (k % 2) as u8)).collect();
        assert!(detect_flutter(&slow, &p).is_empty());

        // fast but too short
        let burst: Vec<_> = (0..=300).map(|k| obs("v", k as f64 * 0.01, (k % 2) as u8)).collect();
        assert!(detect_flutter(&burst, &p).is_empty());
    }

    #[test]
    fn flutter_is_flagged_and_removed() {
        let a = GeoAnchor::default();
        let mut text = String::new();
        for k in 0..=1000 {
            text += &format!("v,{},{},{},{}\n", format_iso8601(1000.0 + k as f64 * 0.01), a.lat0, a.lon0, k % 2);
        }
        text += &format!("v,{},{},{},1\n", format_iso8601(1100.0), a.lat0, a.lon0);
        let p = parse_vehicle_trace(&text, Path::new("t"), &a).unwrap();
        let r = p.report("v").unwrap();
        assert!(r.flags.contains(&QualityFlag::FlutterMalfunction));
        let clean = p.clean_observations();
        assert_eq!(clean.len(), 1);
        assert_eq!(clean[0].timestamp, 1100.0);
    }

    #[test]
    fn aggregation_examples() {
        let zeros: Vec<_> = (0..10).map(|k| obs("v", k as f64, 0)).collect();
        let b = aggregate_wiper(&zeros, 60.0);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].on, Some(false));

        let mut one = zeros.clone();
        one[4] = obs("v", 4.0, 2);
        let b = aggregate_wiper(&one, 60.0);
        assert_eq!((b[0].on, b[0].modal_level), (Some(true), Some(WiperLevel::new(2).unwrap())));

        let mixed = vec![obs("v", 1.0, 1), obs("v", 2.0, 1), obs("v", 3.0, 3)];
        let b = aggregate_wiper(&mixed, 60.0);
        assert_eq!(b[0].modal_level, Some(WiperLevel::new(1).unwrap()));
        assert_eq!(b[0].timestamp, 3.0);
        assert_eq!(b[0].position, Point::new(3.0, 0.0));

        let mister = vec![obs("v", 1.0, 4)];
        assert_eq!(aggregate_wiper(&mister, 60.0)[0].on, None);
    }

    proptest! {
        #[test]
        fn aggregation_partitions(times in proptest::collection::vec((0u8..3, 0.0f64..1000.0, 0u8..5), 0..80)) {
            let trace: Vec<_> = times.iter().map(|(v, t, l)| obs(&format!("v{v}"), *t, *l)).collect();
            let bins = aggregate_wiper(&trace, 60.0);
            prop_assert_eq!(bins.iter().map(|b| b.samples).sum::<usize>(), trace.len());
            let mut keys: Vec<_> = bins.iter().map(|b| (b.vehicle_id.clone(), b.bin.index())).collect();
            let n = keys.len();
            keys.dedup();
            prop_assert_eq!(keys.len(), n);
            for b in &bins {
                prop_assert!(b.bin.contains(b.timestamp));
            }
        }
    }

    fn gage(id: &str, x: f64) -> GageReading {
        GageReading::new(id, Point::new(x, 0.0), 0.0, 1.0).unwrap()
    }

    #[test]
    fn gage_colocation() {
        let here = Point::new(0.0, 0.0);
        assert!(nearest_gages(here, &[gage("far", 2500.0)], 2000.0).is_empty());
        let g = [gage("b", 1500.0), gage("a", -500.0)];
        let ids: Vec<_> = nearest_gages(here, &g, 2000.0).iter().map(|g| g.station_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(nearest_gages(here, &[gage("edge", 2000.0)], 2000.0).len(), 1);
    }

    #[test]
    fn gage_file_round_trip() {
        let a = GeoAnchor::default();
        let text = "station_id,lat,lon,iso8601_time,intensity_mm_h\ng1,42.3,-83.7,2014-08-11T21:00:00Z,2.5\ng2,42.3,-83.7,2014-08-11T21:00:00Z,-1\n";
        let p = parse_gages(text, Path::new("g"), &a).unwrap();
        assert_eq!(p.readings.len(), 1);
        assert_eq!(p.malformed, vec![3]);
        let again = parse_gages(&write_gages(&p.readings, &a), Path::new("g"), &a).unwrap();
        assert_eq!(again.readings, p.readings);
    }

    #[test]
    fn labels_parse_and_flag() {
        let text = "vehicle_id,iso8601_start,iso8601_end,raining\n\
                    quiet,1970-01-01T00:00:00Z,1970-01-01T00:10:00Z,1\n\
                    busy,1970-01-01T00:00:00Z,1970-01-01T00:10:00Z,1\n\
                    busy,1970-01-01T00:10:00Z,1970-01-01T00:20:00Z,1\n";
        let labels = parse_labels(text, Path::new("l")).unwrap();
        assert_eq!(labels.len(), 3);
        assert_eq!(parse_labels(&write_labels(&labels), Path::new("l")).unwrap(), labels);
        let mut trace: Vec<_> = (0..20).map(|k| obs("quiet", k as f64 * 60.0, 0)).collect();
        trace.extend((0..20).map(|k| obs("busy", k as f64 * 60.0, if k < 10 { 1 } else { 0 })));
        let mut reports = Vec::new();
        flag_against_labels(&mut reports, &trace, &labels, 300.0);
        let quiet = reports.iter().find(|r| r.vehicle_id == "quiet").unwrap();
        assert!(quiet.flags.contains(&QualityFlag::NonReporting));
        let busy = reports.iter().find(|r| r.vehicle_id == "busy").unwrap();
        assert_eq!(busy.intervals, vec![(600.0, 1200.0)]);
        assert!(busy.flags.contains(&QualityFlag::UnobservableModes));

        assert!(parse_labels("v,1970-01-01T00:00:00Z,1970-01-01T00:00:00Z,1\n", Path::new("l")).is_err());
    }

    #[test]
    fn report_intervals_merge() {
        let mut r = TraceQualityReport::new("v");
        r.add(QualityFlag::FlutterMalfunction, &[(5.0, 8.0), (0.0, 2.0)]);
        r.add(QualityFlag::UnobservableModes, &[(1.0, 3.0)]);
        assert_eq!(r.intervals, vec![(0.0, 3.0), (5.0, 8.0)]);
        assert!(r.covers(2.5) && !r.covers(4.0) && r.covers(8.0));
    }
}
