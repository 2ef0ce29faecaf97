//! Profile-likelihood estimate of the detection efficiency for the
//! three-parameter protocol.
//!
//! Instead of a third particle dimension, η is set to the maximizer of its
//! profile likelihood evaluated at the current `(φ̂, r̂)`, and the particle
//! cloud is updated with the value from the previous step.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::quadrature::{variance_unchecked, QuadratureAngle};
use crate::smc::{Dimensions, ParticleCloud};

pub const DEFAULT_ETA_RANGE: (f64, f64) = (0.5, 1.0);
pub const DEFAULT_ETA_POINTS: usize = 101;

/// Sufficient statistic of one batch taken at a fixed LO phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStatistic {
    pub theta: f64,
    pub count: usize,
    pub sum_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaProfile {
    grid: Vec<f64>,
    log_profile: Vec<f64>,
    estimate: f64,
    low_information: bool,
    batches: Vec<BatchStatistic>,
}

impl EtaProfile {
    /// `grid` must be non-empty, ascending and inside `(0, 1]`. The initial
    /// estimate is the midpoint of the grid range.
    pub fn new(grid: Vec<f64>) -> Result<Self> {
        ensure(!grid.is_empty(), || "eta grid must not be empty".into())?;
        ensure(grid.windows(2).all(|w| w[0] < w[1]), || "eta grid must be ascending".into())?;
        ensure(grid.iter().all(|&e| e > 0.0 && e <= 1.0), || {
            "eta grid values must lie in (0, 1]".into()
        })?;
        let estimate = 0.5 * (grid[0] + grid[grid.len() - 1]);
        Ok(Self {
            log_profile: vec![0.0; grid.len()],
            grid,
            estimate,
            low_information: true,
            batches: Vec::new(),
        })
    }

    pub fn uniform(lo: f64, hi: f64, points: usize) -> Result<Self> {
        ensure(points >= 1, || "eta grid needs at least one point".into())?;
        if points == 1 {
            return Self::new(vec![lo]);
        }
        Self::new(
            (0..points)
                .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                .collect(),
        )
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn log_profile(&self) -> &[f64] {
        &self.log_profile
    }

    /// True when the last update could not discriminate between grid points.
    pub fn low_information(&self) -> bool {
        self.low_information
    }

    pub fn grid_step(&self) -> f64 {
        if self.grid.len() < 2 {
            0.0
        } else {
            (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
        }
    }

    pub fn batches(&self) -> &[BatchStatistic] {
        &self.batches
    }
}

impl Default for EtaProfile {
    fn default() -> Self {
        Self::uniform(DEFAULT_ETA_RANGE.0, DEFAULT_ETA_RANGE.1, DEFAULT_ETA_POINTS)
            .expect("default eta grid is valid")
    }
}

/// Adds a batch to the profile and re-maximizes it at the cloud's current
/// `(φ̂, r̂)`. The profile is re-evaluated over all batches seen so far.
/// Ties go to the larger η.
pub fn eta_ml_update(
    profile: &mut EtaProfile,
    theta: QuadratureAngle,
    batch: &[f64],
    cloud: &ParticleCloud,
) -> Result<()> {
    if cloud.dimensions() != Dimensions::PhaseSqueezing {
        return Err(Error::InvalidArgument("eta profile needs a joint (phase, squeezing) cloud".into()));
    }
    ensure(batch.iter().all(|x| x.is_finite()), || "batch contains non-finite samples".into())?;
    if !batch.is_empty() {
        profile.batches.push(BatchStatistic {
            theta: theta.radians(),
            count: batch.len(),
            sum_sq: batch.iter().map(|x| x * x).sum(),
        });
    }
    let summary = cloud.summarize();
    let phi = summary.phase_mean;
    let r = summary.squeezing_mean.unwrap_or_default();
    for (lp, &eta) in profile.log_profile.iter_mut().zip(&profile.grid) {
        *lp = profile
            .batches
            .iter()
            .map(|b| {
                let v = variance_unchecked(phi - b.theta, r, eta);
                -0.5 * b.count as f64 * (TAU * v).ln() - b.sum_sq / (2.0 * v)
            })
            .sum();
    }
    let (mut best, mut lo) = (0, f64::INFINITY);
    for (i, &v) in profile.log_profile.iter().enumerate() {
        if v >= profile.log_profile[best] {
            best = i;
        }
        lo = lo.min(v);
    }
    let hi = profile.log_profile[best];
    if !(hi.is_finite()) || hi - lo <= 1e-12 * (1.0 + hi.abs()) {
        profile.low_information = true;
    } else {
        profile.low_information = false;
        profile.estimate = profile.grid[best];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{draw_sample, ProbeParams};
    use crate::smc::PriorRanges;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point_cloud(phi: f64, r: f64) -> ParticleCloud {
        ParticleCloud::from_particles(vec![phi; 4], Some(vec![r; 4]), vec![1.0; 4], PriorRanges::default())
            .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(EtaProfile::new(vec![]).is_err());
        assert!(EtaProfile::new(vec![0.9, 0.8]).is_err());
        assert!(EtaProfile::new(vec![0.0, 0.5]).is_err());
        let p = EtaProfile::default();
        assert_eq!(p.grid().len(), 101);
        assert!((p.grid_step() - 0.005).abs() < 1e-15);
        assert_eq!(p.estimate(), 0.75);
    }

    #[test]
    fn single_point_grid_returns_it() {
        let mut p = EtaProfile::uniform(0.7, 0.7, 1).unwrap();
        eta_ml_update(&mut p, QuadratureAngle::new(0.3), &[0.1, -0.5], &point_cloud(1.0, 0.8)).unwrap();
        assert_eq!(p.estimate(), 0.7);
    }

    #[test]
    fn flat_profile_keeps_previous_estimate() {
        // squeezing 0 makes the variance independent of eta
        let mut p = EtaProfile::uniform(0.5, 1.0, 11).unwrap();
        eta_ml_update(&mut p, QuadratureAngle::new(0.3), &[0.4, -0.2], &point_cloud(1.0, 0.0)).unwrap();
        assert!(p.low_information());
        assert_eq!(p.estimate(), 0.75);
    }

    #[test]
    fn rejects_phase_only_cloud() {
        let c = ParticleCloud::from_particles(vec![1.0], None, vec![1.0], PriorRanges::default()).unwrap();
        let mut p = EtaProfile::default();
        assert!(eta_ml_update(&mut p, QuadratureAngle::new(0.0), &[0.1], &c).is_err());
    }

    #[test]
    fn converges_with_known_phase_and_squeezing() {
        let probe = ProbeParams::new(1.0, 0.8, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = point_cloud(1.0, 0.8);
        let mut p = EtaProfile::default();
        for theta in [1.0, 1.0 - 0.3, 1.0 - 0.1] {
            let th = QuadratureAngle::new(theta);
            let xs: Vec<f64> = (0..40_000).map(|_| draw_sample(&mut rng, &probe, th).0).collect();
            eta_ml_update(&mut p, th, &xs, &cloud).unwrap();
        }
        assert!(!p.low_information());
        assert!((p.estimate() - 0.8).abs() <= 0.02, "{}", p.estimate());
        assert_eq!(p.batches().len(), 3);
    }
}
