//! Domain types shared across the pipeline: grids, rainfall fields, vehicle and
//! gage observations, binary rain states and time bins.
//!
//! All coordinates are planar meters in a local projection. Timestamps are
//! seconds since the Unix epoch (UTC) stored as `f64`, which keeps millisecond
//! resolution for present-day epochs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in planar meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Column/row address of a grid cell. `ix` runs along x (east), `iy` along y (north).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub ix: usize,
    pub iy: usize,
}

impl CellIndex {
    pub const fn new(ix: usize, iy: usize) -> Self {
        CellIndex { ix, iy }
    }
}

/// Regular cartesian grid. Cell `(ix, iy)` is centered at
/// `(origin_x + ix * cell_size, origin_y + iy * cell_size)`.
///
/// Cells are stored row-major: the linear index of `(ix, iy)` is `iy * nx + ix`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// Default cell size, one kilometer.
    pub const DEFAULT_CELL_SIZE: f64 = 1000.0;

    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, nx: usize, ny: usize) -> Result<Self> {
        let grid = GridSpec {
            origin_x,
            origin_y,
            cell_size,
            nx,
            ny,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::invalid(format!(
                "grid cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid(format!(
                "grid must have at least one cell per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn linear(&self, cell: CellIndex) -> usize {
        cell.iy * self.nx + cell.ix
    }

    pub fn cell(&self, linear: usize) -> CellIndex {
        CellIndex::new(linear % self.nx, linear / self.nx)
    }

    pub fn center(&self, cell: CellIndex) -> Point {
        Point::new(
            self.origin_x + cell.ix as f64 * self.cell_size,
            self.origin_y + cell.iy as f64 * self.cell_size,
        )
    }

    pub fn center_linear(&self, linear: usize) -> Point {
        self.center(self.cell(linear))
    }

    /// Nearest cell to `p`, or `None` when `p` lies more than half a cell
    /// outside the hull of cell centers (i.e. outside the cell-edge envelope).
    pub fn cell_of(&self, p: Point) -> Option<CellIndex> {
        let fx = (p.x - self.origin_x) / self.cell_size;
        let fy = (p.y - self.origin_y) / self.cell_size;
        let ix = axis_index(fx, self.nx)?;
        let iy = axis_index(fy, self.ny)?;
        Some(CellIndex::new(ix, iy))
    }

    /// Linear indices of every cell whose center lies strictly within `radius` of `p`.
    pub fn cells_within(&self, p: Point, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !(radius > 0.0) || !p.is_finite() {
            return out;
        }
        let r2 = radius * radius;
        let lo_x = ((p.x - radius - self.origin_x) / self.cell_size).floor().max(0.0) as usize;
        let hi_x = ((p.x + radius - self.origin_x) / self.cell_size).ceil();
        let lo_y = ((p.y - radius - self.origin_y) / self.cell_size).floor().max(0.0) as usize;
        let hi_y = ((p.y + radius - self.origin_y) / self.cell_size).ceil();
        if hi_x < 0.0 || hi_y < 0.0 {
            return out;
        }
        let hi_x = (hi_x as usize).min(self.nx - 1);
        let hi_y = (hi_y as usize).min(self.ny - 1);
        for iy in lo_y..=hi_y {
            for ix in lo_x..=hi_x {
                let cell = CellIndex::new(ix, iy);
                if self.center(cell).distance_sq(&p) < r2 {
                    out.push(self.linear(cell));
                }
            }
        }
        out
    }

    /// Whether two grids describe the same cells (bitwise on all parameters).
    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.origin_x.to_bits() == other.origin_x.to_bits()
            && self.origin_y.to_bits() == other.origin_y.to_bits()
            && self.cell_size.to_bits() == other.cell_size.to_bits()
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{} cells of {} m at ({}, {})",
            self.nx, self.ny, self.cell_size, self.origin_x, self.origin_y
        )
    }
}

fn axis_index(f: f64, n: usize) -> Option<usize> {
    if !f.is_finite() || f < -0.5 || f > n as f64 - 0.5 {
        return None;
    }
    let i = f.round().max(0.0) as usize;
    Some(i.min(n - 1))
}

/// Gridded rainfall rate snapshot in mm/h.
#[derive(Debug, Clone, PartialEq)]
pub struct RainField {
    grid: GridSpec,
    timestamp: f64,
    intensity: Vec<f64>,
}

impl RainField {
    pub fn new(grid: GridSpec, timestamp: f64, intensity: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if intensity.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field has {} values but grid {} needs {}",
                intensity.len(),
                grid,
                grid.len()
            )));
        }
        if let Some((i, v)) = intensity
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::invalid(format!(
                "field value {v} at cell {i} is not a finite non-negative rate"
            )));
        }
        Ok(RainField {
            grid,
            timestamp,
            intensity,
        })
    }

    pub fn zeros(grid: GridSpec, timestamp: f64) -> Self {
        RainField {
            grid,
            timestamp,
            intensity: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn values(&self) -> &[f64] {
        &self.intensity
    }

    pub fn get(&self, cell: CellIndex) -> f64 {
        self.intensity[self.grid.linear(cell)]
    }

    /// Value at the cell nearest `p`, `None` outside the grid.
    pub fn sample(&self, p: Point) -> Option<f64> {
        self.grid.cell_of(p).map(|c| self.get(c))
    }

    pub fn max(&self) -> f64 {
        self.intensity.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.intensity.iter().sum::<f64>() / self.intensity.len() as f64
    }
}

/// Ordinal wiper setting: 0 off, 1..=3 increasing speed, 4 washer/mister.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WiperLevel(u8);

impl WiperLevel {
    pub const OFF: WiperLevel = WiperLevel(0);
    pub const MISTER: WiperLevel = WiperLevel(4);

    pub fn new(level: u8) -> Result<Self> {
        if level > 4 {
            return Err(Error::invalid(format!("wiper level {level} outside 0..=4")));
        }
        Ok(WiperLevel(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn is_mister(self) -> bool {
        self.0 == 4
    }

    /// Binary rain evidence: `Some(true)` for levels 1-3, `Some(false)` for 0,
    /// `None` for the mister which carries no rain information.
    pub fn rain_evidence(self) -> Option<bool> {
        match self.0 {
            0 => Some(false),
            1..=3 => Some(true),
            _ => None,
        }
    }
}

impl std::fmt::Display for WiperLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One timestamped wiper reading from one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleObservation {
    pub vehicle_id: String,
    pub timestamp: f64,
    pub position: Point,
    pub wiper_level: WiperLevel,
}

impl VehicleObservation {
    pub fn new(
        vehicle_id: impl Into<String>,
        timestamp: f64,
        position: Point,
        wiper_level: WiperLevel,
    ) -> Result<Self> {
        if !position.is_finite() || !timestamp.is_finite() {
            return Err(Error::invalid("observation position and time must be finite"));
        }
        Ok(VehicleObservation {
            vehicle_id: vehicle_id.into(),
            timestamp,
            position,
            wiper_level,
        })
    }

    pub fn wiper_on(&self) -> Option<bool> {
        self.wiper_level.rain_evidence()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GageReading {
    pub station_id: String,
    pub position: Point,
    pub timestamp: f64,
    pub intensity: f64,
}

impl GageReading {
    pub fn new(
        station_id: impl Into<String>,
        position: Point,
        timestamp: f64,
        intensity: f64,
    ) -> Result<Self> {
        if !(intensity.is_finite() && intensity >= 0.0) {
            return Err(Error::invalid(format!(
                "gage intensity {intensity} is not a finite non-negative rate"
            )));
        }
        Ok(GageReading {
            station_id: station_id.into(),
            position,
            timestamp,
            intensity,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateSource {
    Gage,
    Radar,
    Wiper,
    GroundTruth,
    Fused,
}

impl StateSource {
    pub fn name(self) -> &'static str {
        match self {
            StateSource::Gage => "gage",
            StateSource::Radar => "radar",
            StateSource::Wiper => "wiper",
            StateSource::GroundTruth => "ground_truth",
            StateSource::Fused => "fused",
        }
    }
}

/// Thresholded raining / not-raining state attributed to a subject (vehicle id)
/// at a place and time.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRainState {
    pub subject: String,
    pub raining: bool,
    pub source: StateSource,
    pub timestamp: f64,
    pub position: Point,
}

/// Half-open time interval `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBin {
    pub start: f64,
    pub width: f64,
}

impl TimeBin {
    /// Bin number counted from the epoch.
    pub fn index(&self) -> i64 {
        (self.start / self.width).round() as i64
    }

    pub fn end(&self) -> f64 {
        self.start + self.width
    }

    pub fn contains(&self, t: f64) -> bool {
        bin_of(t, self.width).index() == self.index()
    }

    pub fn next(&self) -> TimeBin {
        TimeBin {
            start: (self.index() + 1) as f64 * self.width,
            width: self.width,
        }
    }
}

/// The bin of width `width` (seconds) containing `t`.
pub fn bin_of(t: f64, width: f64) -> TimeBin {
    debug_assert!(width > 0.0);
    let mut k = (t / width).floor();
    // t / width can round across an integer boundary
    if k * width > t {
        k -= 1.0;
    } else if (k + 1.0) * width <= t {
        k += 1.0;
    }
    TimeBin {
        start: k * width,
        width,
    }
}

/// Whether `a` and `b` are within `radius` meters (inclusive).
pub fn within_range(a: Point, b: Point, radius: f64) -> bool {
    a.distance(&b) <= radius
}
