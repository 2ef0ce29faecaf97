//! Browser bindings: noise and information curves for a squeezed probe, and
//! short simulated estimation runs.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use sqzadapt_core::geometry::{composite_fi_matrix, decorrelation_angle, fi_matrix_single_setting, phase_bounds};
use sqzadapt_core::protocol::{run_estimation_with, RunOptions, Simulator};
use sqzadapt_core::quadrature::{quadrature_variance, variance_to_db};
use sqzadapt_core::{Mode, ProbeParams, ProtocolConfig, QuadratureAngle, Result};
use wasm_bindgen::prelude::*;

fn js(e: sqzadapt_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn angle_grid(points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |k| k as f64 * PI / points as f64)
}

/// Homodyne noise in dB relative to shot noise at `points` relative angles
/// spread over `[0, π)`.
pub fn noise_curve(r: f64, eta: f64, points: usize) -> Result<Vec<f64>> {
    angle_grid(points)
        .map(|a| Ok(variance_to_db(quadrature_variance(a, r, eta)?)?.0))
        .collect()
}

/// For each fine LO angle over `[0, π)`: the single-setting `F_φφ` and the
/// `φφ` and `φr` entries of the inverse composite FI of the default
/// two-parameter schedule, flattened as `[F_φφ, V_φφ, V_φr]` per angle.
/// Singular points are `NaN`.
pub fn fine_angle_scan(phi: f64, r: f64, eta: f64, points: usize) -> Result<Vec<f64>> {
    let probe = ProbeParams::new(phi, r, eta)?;
    let rough = [0.0, FRAC_PI_4, FRAC_PI_2];
    let mut out = Vec::with_capacity(3 * points);
    for theta in angle_grid(points).map(QuadratureAngle::new) {
        let single = fi_matrix_single_setting(&probe, theta);
        let composite = composite_fi_matrix(&probe, theta, 1200, 20_000, &rough)?;
        let (vpp, vpr) = composite
            .inverse()
            .map_or((f64::NAN, f64::NAN), |v| (v.phase_phase, v.phase_squeezing));
        out.extend([single.phase_phase, vpp, vpr]);
    }
    Ok(out)
}

/// Posterior trajectory of one simulated run.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    samples: Vec<f64>,
    phase: Vec<f64>,
    phase_sd: Vec<f64>,
    lo_angles: Vec<f64>,
    qcrb: f64,
    coherent: f64,
}

#[wasm_bindgen]
impl Trace {
    /// Sample counts at which the posterior was read out.
    pub fn samples(&self) -> Vec<f64> {
        self.samples.clone()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.phase.clone()
    }

    pub fn phase_sd(&self) -> Vec<f64> {
        self.phase_sd.clone()
    }

    /// LO angle of each batch, in acquisition order.
    pub fn lo_angles(&self) -> Vec<f64> {
        self.lo_angles.clone()
    }

    /// Per-measurement squeezed QCRB; divide by the sample count.
    pub fn qcrb(&self) -> f64 {
        self.qcrb
    }

    /// Per-measurement lossless coherent bound.
    pub fn coherent(&self) -> f64 {
        self.coherent
    }
}

/// Runs the adaptive protocol on simulated data. `multi` selects joint
/// phase/squeezing estimation instead of the calibrated single mode.
pub fn simulate(multi: bool, phi: f64, r: f64, eta: f64, total: usize, seed: u64) -> Result<Trace> {
    let probe = ProbeParams::new(phi, r, eta)?;
    let base = if multi {
        ProtocolConfig::two_param(eta)
    } else {
        ProtocolConfig::single(r, eta)
    };
    let rough = (total / 10).max(3);
    let mut config = base.with_budget(total, rough).with_seed(seed);
    config.particles = if config.mode == Mode::Single { 4000 } else { 6000 };
    let mut checkpoints: Vec<usize> = (0..=24)
        .map(|k| (10.0 * (total as f64 / 10.0).powf(k as f64 / 24.0)).round() as usize)
        .filter(|&m| m >= 1 && m <= total)
        .collect();
    checkpoints.dedup();
    let options = RunOptions {
        checkpoints,
        rough_only: false,
    };
    let record = run_estimation_with(&config, &mut Simulator::new(probe, seed), &options)?;
    let bounds = phase_bounds(r, eta, None)?;
    Ok(Trace {
        samples: record.checkpoints.iter().map(|c| c.0 as f64).collect(),
        phase: record.checkpoints.iter().map(|c| c.1.phase_mean).collect(),
        phase_sd: record.checkpoints.iter().map(|c| c.1.phase_variance.sqrt()).collect(),
        lo_angles: record.batches.iter().map(|b| b.theta).collect(),
        qcrb: bounds.qcrb_phase_squeezed,
        coherent: bounds.qcrb_phase_coherent,
    })
}

#[wasm_bindgen(js_name = noiseCurve)]
pub fn noise_curve_js(r: f64, eta: f64, points: usize) -> std::result::Result<Vec<f64>, JsError> {
    noise_curve(r, eta, points).map_err(js)
}

#[wasm_bindgen(js_name = fineAngleScan)]
pub fn fine_angle_scan_js(phi: f64, r: f64, eta: f64, points: usize) -> std::result::Result<Vec<f64>, JsError> {
    fine_angle_scan(phi, r, eta, points).map_err(js)
}

/// Fine LO angle that decouples phase and squeezing errors.
#[wasm_bindgen(js_name = decorrelationAngle)]
pub fn decorrelation_angle_js(phi: f64, r: f64, eta: f64) -> f64 {
    (phi - decorrelation_angle(r, eta)).rem_euclid(PI)
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(multi: bool, phi: f64, r: f64, eta: f64, total: usize, seed: u32) -> std::result::Result<Trace, JsError> {
    simulate(multi, phi, r, eta, total, u64::from(seed)).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_curve_spans_squeezed_and_antisqueezed() {
        let c = noise_curve(0.8, 1.0, 180).unwrap();
        assert_eq!(c.len(), 180);
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let db = 10.0 * (1.6f64).exp().log10();
        assert!((hi - db).abs() < 1e-9 && (lo + db).abs() < 1e-2);
        assert!(noise_curve(-1.0, 1.0, 10).is_err());
    }

    #[test]
    fn scan_has_three_entries_per_angle() {
        let s = fine_angle_scan(1.0, 0.8, 0.8, 90).unwrap();
        assert_eq!(s.len(), 270);
        assert!(s.chunks(3).all(|c| c[0] >= 0.0 && c[1] > 0.0));
    }

    #[test]
    fn decorrelation_angle_is_wrapped() {
        let a = decorrelation_angle_js(0.0, 0.8, 0.8);
        assert!((0.0..PI).contains(&a));
    }

    #[test]
    fn short_run_tracks_truth() {
        let t = simulate(false, 1.0, 0.8, 0.8, 2000, 3).unwrap();
        assert_eq!(t.samples().last(), Some(&2000.0));
        assert_eq!(t.phase().len(), t.samples().len());
        let err = (t.phase().last().unwrap() - 1.0).abs();
        assert!(err < 5.0 * t.phase_sd().last().unwrap(), "error {err}");
        assert_eq!(t, simulate(false, 1.0, 0.8, 0.8, 2000, 3).unwrap());
        let m = simulate(true, 2.0, 0.8, 0.8, 3000, 4).unwrap();
        assert!(m.phase_sd().windows(2).last().is_some());
        assert!(simulate(false, 1.0, 0.8, 0.8, 5, 1).is_err());
    }
}
