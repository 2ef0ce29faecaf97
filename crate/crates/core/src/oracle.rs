//! Brute-force reference posterior on a dense grid, independent of the
//! particle engine. Used to validate SMC moments.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{ensure, Result};
use crate::quadrature::{variance_unchecked, wrap_pi, QuadratureAngle};
use crate::smc::{PosteriorSummary, PriorRanges};

pub const MIN_GRID_RESOLUTION: usize = 500;

/// `(θ, count, Σx²)` per distinct LO phase.
fn group_by_angle(data: &[(QuadratureAngle, f64)]) -> Vec<(f64, f64, f64)> {
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    for &(theta, x) in data {
        let t = theta.radians();
        match groups.iter_mut().find(|g| g.0 == t) {
            Some(g) => {
                g.1 += 1.0;
                g.2 += x * x;
            }
            None => groups.push((t, 1.0, x * x)),
        }
    }
    groups
}

fn log_lik(groups: &[(f64, f64, f64)], phi: f64, r: f64, eta: f64) -> f64 {
    groups
        .iter()
        .map(|&(t, n, s)| {
            let v = variance_unchecked(phi - t, r, eta);
            -0.5 * n * (TAU * v).ln() - s / (2.0 * v)
        })
        .sum()
}

fn trapezoid_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    w[0] = 0.5;
    w[n - 1] = 0.5;
    w
}

/// Dense-grid Bayes posterior under the flat prior. With `fixed_squeezing`
/// the grid is over φ only, otherwise over `(φ, r)` with `resolution`
/// points per axis.
pub fn grid_oracle(
    data: &[(QuadratureAngle, f64)],
    eta: f64,
    fixed_squeezing: Option<f64>,
    resolution: usize,
    ranges: PriorRanges,
) -> Result<PosteriorSummary> {
    ensure(resolution >= MIN_GRID_RESOLUTION, || {
        format!("grid resolution must be >= {MIN_GRID_RESOLUTION}, got {resolution}")
    })?;
    ensure(eta > 0.0 && eta <= 1.0, || format!("efficiency must lie in (0, 1], got {eta}"))?;
    let groups = group_by_angle(data);
    let (p0, p1) = ranges.phase;
    let (r0, r1) = ranges.squeezing;
    let phis: Vec<f64> = (0..resolution)
        .map(|i| p0 + (p1 - p0) * i as f64 / (resolution - 1) as f64)
        .collect();
    let tw = trapezoid_weights(resolution);

    // nodes as (φ, r, weight) with log-likelihood
    let mut nodes: Vec<(f64, f64, f64)> = Vec::new();
    let squeezing_axis: Option<Vec<f64>> = match fixed_squeezing {
        Some(r) => {
            for (i, &phi) in phis.iter().enumerate() {
                nodes.push((phi, r, tw[i].ln() + log_lik(&groups, phi, r, eta)));
            }
            None
        }
        None => {
            let rs: Vec<f64> = (0..resolution)
                .map(|j| r0 + (r1 - r0) * j as f64 / (resolution - 1) as f64)
                .collect();
            for (i, &phi) in phis.iter().enumerate() {
                for (j, &r) in rs.iter().enumerate() {
                    nodes.push((phi, r, (tw[i] * tw[j]).ln() + log_lik(&groups, phi, r, eta)));
                }
            }
            Some(rs)
        }
    };
    let max = nodes.iter().map(|n| n.2).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for n in nodes.iter_mut() {
        n.2 = (n.2 - max).exp();
        total += n.2;
    }
    for n in nodes.iter_mut() {
        n.2 /= total;
    }

    // seam handling: moments in the frame centred on the doubled-angle mean
    // when that frame is much tighter than the plain one
    let (mut c, mut s) = (0.0, 0.0);
    for &(phi, _, w) in &nodes {
        c += w * (2.0 * phi).cos();
        s += w * (2.0 * phi).sin();
    }
    let plain: f64 = nodes.iter().map(|n| n.2 * n.0).sum();
    let plain_var: f64 = nodes.iter().map(|n| n.2 * (n.0 - plain).powi(2)).sum();
    let centre = 0.5 * s.atan2(c);
    let unwrap = |phi: f64| centre + (phi - centre + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    let un_mean: f64 = nodes.iter().map(|n| n.2 * unwrap(n.0)).sum();
    let un_var: f64 = nodes.iter().map(|n| n.2 * (unwrap(n.0) - un_mean).powi(2)).sum();
    let use_unwrapped = (c * c + s * s).sqrt() > 1e-9 && un_var < 0.5 * plain_var;
    let frame = |phi: f64| if use_unwrapped { unwrap(phi) } else { phi };
    let (mean, var) = if use_unwrapped { (un_mean, un_var) } else { (plain, plain_var) };

    let ess = 1.0 / nodes.iter().map(|n| n.2 * n.2).sum::<f64>();
    match squeezing_axis {
        None => Ok(PosteriorSummary {
            phase_mean: wrap_pi(mean),
            phase_variance: var,
            squeezing_mean: None,
            squeezing_variance: None,
            covariance: None,
            effective_sample_size: ess,
        }),
        Some(_) => {
            let mr: f64 = nodes.iter().map(|n| n.2 * n.1).sum();
            let vr: f64 = nodes.iter().map(|n| n.2 * (n.1 - mr).powi(2)).sum();
            let cpr: f64 = nodes.iter().map(|n| n.2 * (n.1 - mr) * (frame(n.0) - mean)).sum();
            Ok(PosteriorSummary {
                phase_mean: wrap_pi(mean),
                phase_variance: var,
                squeezing_mean: Some(mr),
                squeezing_variance: Some(vr),
                covariance: Some([[var, cpr], [cpr, vr]]),
                effective_sample_size: ess,
            })
        }
    }
}
