//! Binary wiper measurement likelihood and the empirical intensity
//! distributions used to propose rain where the radar prior is dry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{detection_probability, KernelParams};
use crate::model::Point;

/// Confusion characteristics of a wiper used as a rain detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WiperSensorModel {
    /// P(wiper on | raining, detected)
    pub tpr: f64,
    /// P(wiper off | dry, detected)
    pub tnr: f64,
    /// Intensity (mm/h) above which a cell counts as raining.
    pub rain_threshold: f64,
}

impl Default for WiperSensorModel {
    fn default() -> Self {
        WiperSensorModel {
            tpr: 0.931,
            tnr: 0.982,
            rain_threshold: 0.1,
        }
    }
}

impl WiperSensorModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tpr", self.tpr), ("tnr", self.tnr)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("sensor {name} must be in (0, 1], got {v}")));
            }
        }
        if !(self.rain_threshold >= 0.0 && self.rain_threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "rain threshold must be >= 0, got {}",
                self.rain_threshold
            )));
        }
        Ok(())
    }

    pub fn is_raining(&self, intensity: f64) -> bool {
        intensity > self.rain_threshold
    }
}

/// Likelihood of the wiper state given the sensor detected the target.
pub fn likelihood_given_detected(wiper_on: bool, intensity: f64, model: &WiperSensorModel) -> f64 {
    match (model.is_raining(intensity), wiper_on) {
        (true, true) => model.tpr,
        (true, false) => 1.0 - model.tpr,
        (false, true) => 1.0 - model.tnr,
        (false, false) => model.tnr,
    }
}

/// Likelihood marginalised over detection: undetected readings are a coin flip.
pub fn likelihood_total(
    wiper_on: bool,
    intensity: f64,
    target: Point,
    sensor: Point,
    kernel: &KernelParams,
    model: &WiperSensorModel,
) -> f64 {
    let p_d = detection_probability(target, sensor, kernel);
    likelihood_with_detection(wiper_on, intensity, p_d, model)
}

/// [`likelihood_total`] with the detection probability already evaluated.
pub fn likelihood_with_detection(
    wiper_on: bool,
    intensity: f64,
    p_d: f64,
    model: &WiperSensorModel,
) -> f64 {
    p_d * likelihood_given_detected(wiper_on, intensity, model) + (1.0 - p_d) * 0.5
}

/// One histogram bin. `lo == hi` encodes a point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityBin {
    pub lo: f64,
    pub hi: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bins: Vec<IntensityBin>,
    cumulative: Vec<f64>,
}

impl Histogram {
    pub fn new(bins: Vec<IntensityBin>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::invalid("histogram has no bins"));
        }
        let mut prev_hi = f64::NEG_INFINITY;
        for b in &bins {
            if !(b.lo >= 0.0 && b.hi >= b.lo && b.hi.is_finite()) {
                return Err(Error::invalid(format!("bad bin [{}, {}]", b.lo, b.hi)));
            }
            if b.lo < prev_hi || (b.lo == prev_hi && b.lo == b.hi) {
                return Err(Error::invalid(format!(
                    "bin edges must be increasing, [{}, {}] follows {prev_hi}",
                    b.lo, b.hi
                )));
            }
            if !(b.probability >= 0.0 && b.probability <= 1.0) {
                return Err(Error::invalid(format!("bad bin probability {}", b.probability)));
            }
            prev_hi = b.hi;
        }
        let total: f64 = bins.iter().map(|b| b.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("histogram probabilities sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = bins
            .iter()
            .map(|b| {
                acc += b.probability;
                acc
            })
            .collect();
        Ok(Histogram { bins, cumulative })
    }

    pub fn bins(&self) -> &[IntensityBin] {
        &self.bins
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let k = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.bins.len() - 1);
        let b = self.bins[k];
        if b.hi > b.lo {
            rng.random_range(b.lo..b.hi)
        } else {
            b.lo
        }
    }

    /// Probability mass strictly above `tau`, bins straddling `tau` split uniformly.
    pub fn prob_above(&self, tau: f64) -> f64 {
        self.bins
            .iter()
            .map(|b| {
                if b.lo > tau {
                    b.probability
                } else if b.hi <= tau {
                    0.0
                } else {
                    b.probability * (b.hi - tau) / (b.hi - b.lo)
                }
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| b.probability * 0.5 * (b.lo + b.hi))
            .sum()
    }
}

/// Per-wiper-level (1..=3) intensity histograms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmpiricalIntensityDistribution {
    levels: BTreeMap<u8, Histogram>,
}

impl EmpiricalIntensityDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_level(mut self, level: u8, hist: Histogram) -> Result<Self> {
        if !(1..=3).contains(&level) {
            return Err(Error::invalid(format!(
                "injection histograms exist for wiper levels 1-3, not {level}"
            )));
        }
        self.levels.insert(level, hist);
        Ok(self)
    }

    /// The same histogram for all three levels.
    pub fn uniform_levels(hist: Histogram) -> Self {
        let levels = (1..=3).map(|l| (l, hist.clone())).collect();
        EmpiricalIntensityDistribution { levels }
    }

    pub fn level(&self, level: u8) -> Option<&Histogram> {
        self.levels.get(&level)
    }

    pub fn levels(&self) -> impl Iterator<Item = (u8, &Histogram)> {
        self.levels.iter().map(|(l, h)| (*l, h))
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Draw from the pooled distribution: a level chosen uniformly among the
    /// available ones, then an intensity from that level's histogram.
    pub fn sample_pooled<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        if self.levels.is_empty() {
            return Err(Error::invalid("injection distribution has no levels"));
        }
        let k = rng.random_range(0..self.levels.len());
        let level = *self.levels.keys().nth(k).expect("index in range");
        sample_injection_intensity(level, self, rng)
    }

    /// Pooled probability of exceeding `tau`.
    pub fn pooled_prob_above(&self, tau: f64) -> f64 {
        if self.levels.is_empty() {
            return 0.0;
        }
        self.levels.values().map(|h| h.prob_above(tau)).sum::<f64>() / self.levels.len() as f64
    }

    /// Fit histograms from `(wiper_level, intensity)` pairs. Intensities at or
    /// below `dry_limit` go into a point-mass bin at zero; the rest are binned
    /// by `edges` (strictly increasing, first edge > `dry_limit`), and values
    /// beyond the last edge are clamped into the last bin.
    pub fn fit(samples: &[(u8, f64)], dry_limit: f64, edges: &[f64]) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("fit edges must be >= 2 strictly increasing values"));
        }
        let mut out = EmpiricalIntensityDistribution::new();
        for level in 1..=3u8 {
            let values: Vec<f64> = samples
                .iter()
                .filter(|(l, _)| *l == level)
                .map(|(_, v)| *v)
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mut counts = vec![0usize; edges.len()];
            for v in values {
                if v <= dry_limit {
                    counts[0] += 1;
                } else {
                    let k = edges[1..].partition_point(|&e| e <= v).min(edges.len() - 2);
                    counts[k + 1] += 1;
                }
            }
            let mut bins = Vec::new();
            if counts[0] > 0 {
                bins.push(IntensityBin {
                    lo: 0.0,
                    hi: 0.0,
                    probability: counts[0] as f64 / n,
                });
            }
            for k in 0..edges.len() - 1 {
                if counts[k + 1] > 0 {
                    bins.push(IntensityBin {
                        lo: edges[k],
                        hi: edges[k + 1],
                        probability: counts[k + 1] as f64 / n,
                    });
                }
            }
            normalize_bins(&mut bins);
            out.levels.insert(level, Histogram::new(bins)?);
        }
        Ok(out)
    }

    /// Parse the `wiper_level, bin_lo_mm_h, bin_hi_mm_h, probability` table.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut rows: BTreeMap<u8, Vec<IntensityBin>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() || line.starts_with("wiper_level") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::parse(source, i + 1, "expected 4 comma-separated fields"));
            }
            let level: u8 = fields[0]
                .parse()
                .map_err(|_| Error::parse(source, i + 1, "bad wiper level"))?;
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(source, i + 1, "bad number"))?;
            if !(1..=3).contains(&level) {
                return Err(Error::parse(source, i + 1, "wiper level must be 1-3"));
            }
            rows.entry(level).or_default().push(IntensityBin {
                lo: nums[0],
                hi: nums[1],
                probability: nums[2],
            });
        }
        let mut out = EmpiricalIntensityDistribution::new();
        for (level, bins) in rows {
            let hist = Histogram::new(bins)
                .map_err(|e| Error::parse(source, 0, format!("level {level}: {e}")))?;
            out.levels.insert(level, hist);
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("wiper_level,bin_lo_mm_h,bin_hi_mm_h,probability\n");
        for (level, h) in &self.levels {
            for b in h.bins() {
                let _ = writeln!(s, "{level},{},{},{}", b.lo, b.hi, b.probability);
            }
        }
        s
    }

    /// The distribution bundled with the crate, fitted from the default
    /// synthetic scenario.
    pub fn bundled() -> Self {
        Self::parse(crate::assets::DEFAULT_INJECTION, Path::new("<bundled injection>"))
            .expect("bundled injection table parses")
    }
}

fn normalize_bins(bins: &mut [IntensityBin]) {
    let total: f64 = bins.iter().map(|b| b.probability).sum();
    for b in bins.iter_mut() {
        b.probability /= total;
    }
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => line[..i].trim(),
        None => line.trim(),
    }
}

/// Intensity drawn from the histogram of `wiper_level` (1..=3).
pub fn sample_injection_intensity<R: Rng + ?Sized>(
    wiper_level: u8,
    dist: &EmpiricalIntensityDistribution,
    rng: &mut R,
) -> Result<f64> {
    let hist = dist
        .level(wiper_level)
        .ok_or(Error::MissingHistogram(wiper_level))?;
    Ok(hist.sample(rng))
}
