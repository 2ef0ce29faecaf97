//! Homodyne statistics of a lossy squeezed vacuum.
//!
//! Quadrature outcomes are zero-mean Gaussian. All variances are expressed in
//! shot-noise units where the vacuum variance is exactly 1/4.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Vacuum (shot-noise) quadrature variance.
pub const SHOT_NOISE_VARIANCE: f64 = 0.25;

/// Physical truth of the probe: phase, squeezing and detection efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub phase: f64,
    pub squeezing: f64,
    pub efficiency: f64,
}

impl ProbeParams {
    /// Validates the probe. The phase must already lie in `[0, π)`.
    pub fn new(phase: f64, squeezing: f64, efficiency: f64) -> Result<Self> {
        ensure(phase.is_finite() && (0.0..PI).contains(&phase), || {
            format!("phase must lie in [0, pi), got {phase}")
        })?;
        check_squeezing(squeezing)?;
        check_efficiency(efficiency)?;
        Ok(Self {
            phase,
            squeezing,
            efficiency,
        })
    }

    /// Like [`ProbeParams::new`] but folds any finite phase into `[0, π)`.
    pub fn with_wrapped_phase(phase: f64, squeezing: f64, efficiency: f64) -> Result<Self> {
        ensure(phase.is_finite(), || format!("phase must be finite, got {phase}"))?;
        Self::new(wrap_pi(phase), squeezing, efficiency)
    }

    pub fn effective_squeezing(&self) -> f64 {
        effective_squeezing_unchecked(self.squeezing, self.efficiency)
    }
}

/// Local-oscillator phase θ, stored reduced to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuadratureAngle(f64);

impl QuadratureAngle {
    pub fn new(theta: f64) -> Self {
        Self(theta.rem_euclid(TAU))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Relative angle `φ − θ` between the probe phase and this LO setting.
    pub fn relative_to(self, phase: f64) -> f64 {
        phase - self.0
    }
}

/// One homodyne outcome in shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuadratureSample(pub f64);

/// Noise power in dB relative to shot noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoisePowerDb(pub f64);

/// Folds an angle into `[0, π)`.
pub fn wrap_pi(angle: f64) -> f64 {
    let w = angle.rem_euclid(PI);
    // rem_euclid can round up to exactly PI for tiny negative inputs
    if w >= PI {
        0.0
    } else {
        w
    }
}

/// Reduces a relative angle to `[0, π/2]` without changing `cos²` or `sin²`.
fn fold_quarter(phi_rel: f64) -> f64 {
    let a = phi_rel.rem_euclid(PI);
    if a > FRAC_PI_2 {
        PI - a
    } else {
        a
    }
}

/// The two principal-axis variances (times 4): `(squeezed, anti-squeezed)`.
///
/// The squeezed axis mixes in `(1 − η)` vacuum while the anti-squeezed axis is
/// left unattenuated, exactly as in the homodyne model this crate reproduces.
#[inline]
pub fn axis_terms(r: f64, eta: f64) -> (f64, f64) {
    (eta * (-2.0 * r).exp() + (1.0 - eta), (2.0 * r).exp())
}

#[inline]
pub(crate) fn variance_from_terms(cos2: f64, sqz: f64, asqz: f64) -> f64 {
    0.25 * (sqz * cos2 + asqz * (1.0 - cos2))
}

/// Variance without argument validation. Used in the particle hot loops.
#[inline]
pub fn variance_unchecked(phi_rel: f64, r: f64, eta: f64) -> f64 {
    let c = fold_quarter(phi_rel).cos();
    let (sqz, asqz) = axis_terms(r, eta);
    variance_from_terms(c * c, sqz, asqz)
}

fn check_squeezing(r: f64) -> Result<()> {
    ensure(r.is_finite() && r >= 0.0, || {
        format!("squeezing must be finite and >= 0, got {r}")
    })
}

fn check_efficiency(eta: f64) -> Result<()> {
    ensure(eta.is_finite() && eta > 0.0 && eta <= 1.0, || {
        format!("efficiency must lie in (0, 1], got {eta}")
    })
}

/// Variance of the measured quadrature at relative angle `φ − θ`.
pub fn quadrature_variance(phi_rel: f64, r: f64, eta: f64) -> Result<f64> {
    ensure(phi_rel.is_finite(), || {
        format!("relative angle must be finite, got {phi_rel}")
    })?;
    check_squeezing(r)?;
    check_efficiency(eta)?;
    Ok(variance_unchecked(phi_rel, r, eta))
}

#[inline]
pub(crate) fn gaussian_log_pdf(x: f64, variance: f64) -> f64 {
    -0.5 * (TAU * variance).ln() - x * x / (2.0 * variance)
}

/// Homodyne probability density of outcome `x`.
pub fn likelihood_pdf(x: QuadratureSample, phi_rel: f64, r: f64, eta: f64) -> Result<f64> {
    Ok(log_likelihood(x, phi_rel, r, eta)?.exp())
}

pub fn log_likelihood(x: QuadratureSample, phi_rel: f64, r: f64, eta: f64) -> Result<f64> {
    ensure(x.0.is_finite(), || format!("sample must be finite, got {}", x.0))?;
    let var = quadrature_variance(phi_rel, r, eta)?;
    Ok(gaussian_log_pdf(x.0, var))
}

/// Simulated homodyne outcome for `probe` measured at LO phase `theta`.
pub fn draw_sample<R: Rng + ?Sized>(
    rng: &mut R,
    probe: &ProbeParams,
    theta: QuadratureAngle,
) -> QuadratureSample {
    let var = variance_unchecked(
        theta.relative_to(probe.phase),
        probe.squeezing,
        probe.efficiency,
    );
    let z: f64 = rng.sample(StandardNormal);
    QuadratureSample(z * var.sqrt())
}

pub fn db_to_variance(db: NoisePowerDb) -> Result<f64> {
    ensure(db.0.is_finite(), || format!("dB value must be finite, got {}", db.0))?;
    Ok(SHOT_NOISE_VARIANCE * 10f64.powf(db.0 / 10.0))
}

pub fn variance_to_db(variance: f64) -> Result<NoisePowerDb> {
    ensure(variance.is_finite() && variance > 0.0, || {
        format!("variance must be finite and > 0, got {variance}")
    })?;
    Ok(NoisePowerDb(10.0 * (variance / SHOT_NOISE_VARIANCE).log10()))
}

/// Effective squeezing folding loss into a single parameter.
pub fn effective_squeezing(r: f64, eta: f64) -> Result<f64> {
    check_squeezing(r)?;
    check_efficiency(eta)?;
    Ok(effective_squeezing_unchecked(r, eta))
}

pub(crate) fn effective_squeezing_unchecked(r: f64, eta: f64) -> f64 {
    let (sqz, asqz) = axis_terms(r, eta);
    effective_squeezing_from_variances(0.25 * asqz, 0.25 * sqz)
}

/// `r_eff = ½ ln[σ²_asqz / √(σ²_asqz σ²_sqz)] = ¼ ln(σ²_asqz / σ²_sqz)`.
pub fn effective_squeezing_from_variances(anti_squeezed: f64, squeezed: f64) -> f64 {
    0.25 * (anti_squeezed / squeezed).ln()
}
