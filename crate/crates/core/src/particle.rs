//! Weighted intensity samples for a single grid cell and the sequential
//! importance resampling operations on them.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Posterior belief over one cell's rainfall rate (mm/h).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    values: Vec<f64>,
    weights: Vec<f64>,
    seed: u64,
}

impl ParticleSet {
    /// Equally weighted particles at `values`.
    pub fn from_values(values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("a particle set needs at least one particle"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("particle values must be finite and >= 0"));
        }
        let w = 1.0 / values.len() as f64;
        let weights = vec![w; values.len()];
        Ok(ParticleSet {
            values,
            weights,
            seed,
        })
    }

    pub fn from_weighted(values: Vec<f64>, weights: Vec<f64>, seed: u64) -> Result<Self> {
        let mut p = ParticleSet::from_values(values, seed)?;
        if weights.len() != p.values.len() {
            return Err(Error::invalid("values and weights differ in length"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        p.weights = weights;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Root seed of this cell's random streams.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Multiply weights by `likelihood(value)` and renormalise.
    pub fn reweight<F>(&self, likelihood: F) -> Result<ParticleSet>
    where
        F: Fn(f64) -> f64,
    {
        let mut out = self.clone();
        out.reweight_in_place(likelihood)?;
        Ok(out)
    }

    pub fn reweight_in_place<F>(&mut self, likelihood: F) -> Result<()>
    where
        F: Fn(f64) -> f64,
    {
        let mut new = Vec::with_capacity(self.len());
        let mut total = 0.0;
        for (&v, &w) in self.values.iter().zip(&self.weights) {
            let l = likelihood(v);
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::invalid(format!("likelihood {l} at intensity {v}")));
            }
            let nw = w * l;
            total += nw;
            new.push(nw);
        }
        if !(total > 0.0) {
            return Err(Error::DegenerateLikelihood);
        }
        for w in &mut new {
            *w /= total;
        }
        self.weights = new;
        Ok(())
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Number of copies of each particle selected by one systematic pass
    /// with offset `u` in `[0, 1)`.
    pub fn systematic_counts(&self, u: f64) -> Vec<usize> {
        let n = self.len();
        let nf = n as f64;
        let mut counts = vec![0usize; n];
        // Pointers sit at u + k for k = 0..n on the scale where total weight is n.
        let mut cum = 0.0;
        let mut k = 0usize;
        for (i, &w) in self.weights.iter().enumerate() {
            cum = if i + 1 == n { nf } else { cum + w * nf };
            while k < n && u + (k as f64) < cum {
                counts[i] += 1;
                k += 1;
            }
        }
        counts
    }

    /// Low-variance resampling with a single uniform offset.
    pub fn systematic_resample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParticleSet {
        let u: f64 = rng.random();
        let counts = self.systematic_counts(u);
        let mut values = Vec::with_capacity(self.len());
        for (&v, &c) in self.values.iter().zip(&counts) {
            values.extend(std::iter::repeat_n(v, c));
        }
        let w = 1.0 / values.len() as f64;
        ParticleSet {
            weights: vec![w; values.len()],
            values,
            seed: self.seed,
        }
    }

    /// Gaussian jitter on nonzero particles with standard deviation
    /// `fraction * (max - min)`. Zero particles stay dry, and no particle
    /// crosses `tau`: jitter reflects off `tau` and clamps at zero, so the
    /// mass above `tau` is unchanged.
    pub fn roughen<R: Rng + ?Sized>(&mut self, fraction: f64, tau: f64, rng: &mut R) {
        if !(fraction > 0.0) {
            return;
        }
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let sd = fraction * (hi - lo);
        if !(sd > 0.0) {
            return;
        }
        let normal = Normal::new(0.0, sd).expect("finite positive sd");
        for v in &mut self.values {
            if *v <= 0.0 {
                continue;
            }
            let moved = *v + normal.sample(rng);
            *v = if *v > tau {
                if moved > tau { moved } else { (2.0 * tau - moved).max(tau.next_up()) }
            } else if moved > tau {
                (2.0 * tau - moved).max(0.0)
            } else {
                moved.max(0.0)
            };
        }
    }

    pub fn posterior_mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Posterior probability that the intensity exceeds `tau`.
    pub fn prob_above(&self, tau: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .filter(|(v, _)| **v > tau)
            .map(|(_, w)| w)
            .sum()
    }
}

/// `n` i.i.d. draws from `sampler`, equally weighted.
pub fn init_particles<R, F>(mut sampler: F, n: usize, rng: &mut R, seed: u64) -> Result<ParticleSet>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> f64,
{
    if n == 0 {
        return Err(Error::invalid("particle count must be at least 1"));
    }
    let values = (0..n).map(|_| sampler(rng)).collect();
    ParticleSet::from_values(values, seed)
}
