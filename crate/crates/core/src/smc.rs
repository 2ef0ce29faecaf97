//! Sequential Monte Carlo approximation of the phase (and squeezing)
//! posterior.
//!
//! Weights are updated in log space and renormalized after every update.
//! When the effective sample size falls below half the particle count the
//! cloud is refreshed with a Liu–West kernel (shrinkage `a = 0.98`). Each
//! kernel move is a Metropolis–Hastings proposal checked against all data
//! absorbed so far, which keeps the cloud on curved or split posteriors
//! where plain shrinkage toward the mean would drag it off.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::quadrature::{axis_terms, variance_from_terms, wrap_pi, QuadratureAngle, QuadratureSample};

pub const DEFAULT_PHASE_PARTICLES: usize = 10_000;
pub const DEFAULT_JOINT_PARTICLES: usize = 20_000;
pub const LIU_WEST_SHRINKAGE: f64 = 0.98;
pub const RESAMPLE_ESS_FRACTION: f64 = 0.5;
pub const KERNEL_MOVES: usize = 1;

/// The unwrapped φ frame is used only if it at least halves the variance.
const DIRECTIONAL_GAIN: f64 = 0.5;

/// Flat-prior support. φ is π-periodic and wraps; r reflects at its ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorRanges {
    pub phase: (f64, f64),
    pub squeezing: (f64, f64),
}

impl Default for PriorRanges {
    fn default() -> Self {
        Self {
            phase: (0.0, PI),
            squeezing: (0.0, 3.0),
        }
    }
}

impl PriorRanges {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && hi > lo;
        ensure(ok(self.phase) && ok(self.squeezing), || {
            format!("degenerate prior ranges {self:?}")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimensions {
    /// φ only; r and η are supplied by calibration.
    Phase,
    /// Joint (φ, r).
    PhaseSqueezing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    dims: Dimensions,
    ranges: PriorRanges,
    phase: Vec<f64>,
    squeezing: Vec<f64>,
    weights: Vec<f64>,
    history: Vec<Absorbed>,
}

/// Sufficient statistic of everything absorbed under one set of conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Absorbed {
    theta: f64,
    efficiency: f64,
    fixed_squeezing: Option<f64>,
    count: f64,
    sum_sq: f64,
}

/// Measurement conditions shared by a batch of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions {
    pub theta: QuadratureAngle,
    pub efficiency: f64,
    /// Squeezing assumed for every particle; required in [`Dimensions::Phase`].
    pub fixed_squeezing: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplePolicy {
    pub shrinkage: f64,
    pub ess_fraction: f64,
    /// Kernel moves per resampling event when the data history is known.
    #[serde(default = "default_moves")]
    pub moves: usize,
}

fn default_moves() -> usize {
    KERNEL_MOVES
}

impl Default for ResamplePolicy {
    fn default() -> Self {
        Self {
            shrinkage: LIU_WEST_SHRINKAGE,
            ess_fraction: RESAMPLE_ESS_FRACTION,
            moves: KERNEL_MOVES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub phase_mean: f64,
    pub phase_variance: f64,
    pub squeezing_mean: Option<f64>,
    pub squeezing_variance: Option<f64>,
    /// Row-major `[[φφ, φr], [rφ, rr]]`; only for joint clouds.
    pub covariance: Option<[[f64; 2]; 2]>,
    pub effective_sample_size: f64,
}

/// Sets up the flat prior on a deterministic low-discrepancy layout: a
/// midpoint grid in 1-D and the R2 sequence in 2-D.
pub fn init_prior(dims: Dimensions, n_p: usize, ranges: PriorRanges) -> Result<ParticleCloud> {
    ensure(n_p >= 2, || format!("need at least 2 particles, got {n_p}"))?;
    ranges.validate()?;
    let (p0, p1) = ranges.phase;
    let (r0, r1) = ranges.squeezing;
    let (phase, squeezing) = match dims {
        Dimensions::Phase => (
            (0..n_p)
                .map(|k| p0 + (k as f64 + 0.5) / n_p as f64 * (p1 - p0))
                .collect(),
            Vec::new(),
        ),
        Dimensions::PhaseSqueezing => {
            // plastic number
            let g = 1.324_717_957_244_746_f64;
            let (a1, a2) = (1.0 / g, 1.0 / (g * g));
            let mut ph = Vec::with_capacity(n_p);
            let mut sq = Vec::with_capacity(n_p);
            for k in 0..n_p {
                let u = (0.5 + a1 * k as f64).fract();
                let v = (0.5 + a2 * k as f64).fract();
                ph.push(p0 + u * (p1 - p0));
                sq.push(r0 + v * (r1 - r0));
            }
            (ph, sq)
        }
    };
    Ok(ParticleCloud {
        dims,
        ranges,
        phase,
        squeezing,
        weights: vec![1.0 / n_p as f64; n_p],
        history: Vec::new(),
    })
}

impl ParticleCloud {
    /// Builds a cloud from explicit particles; weights are normalized. The
    /// cloud has no data history, so its resampling uses the plain kernel.
    pub fn from_particles(
        phase: Vec<f64>,
        squeezing: Option<Vec<f64>>,
        weights: Vec<f64>,
        ranges: PriorRanges,
    ) -> Result<Self> {
        ranges.validate()?;
        let n = phase.len();
        ensure(n >= 1 && weights.len() == n, || "particle and weight counts differ".into())?;
        let dims = match &squeezing {
            Some(s) => {
                ensure(s.len() == n, || "squeezing column length differs".into())?;
                Dimensions::PhaseSqueezing
            }
            None => Dimensions::Phase,
        };
        ensure(weights.iter().all(|w| w.is_finite() && *w >= 0.0), || {
            "weights must be finite and non-negative".into()
        })?;
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegeneratePosterior("zero total weight".into()));
        }
        Ok(Self {
            dims,
            ranges,
            phase,
            squeezing: squeezing.unwrap_or_default(),
            weights: weights.into_iter().map(|w| w / total).collect(),
            history: Vec::new(),
        })
    }

    pub fn dimensions(&self) -> Dimensions {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phase
    }

    /// Empty for phase-only clouds.
    pub fn squeezings(&self) -> &[f64] {
        &self.squeezing
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ranges(&self) -> PriorRanges {
        self.ranges
    }

    fn check_conditions(&self, cond: &Conditions) -> Result<()> {
        ensure(cond.efficiency.is_finite() && cond.efficiency > 0.0 && cond.efficiency <= 1.0, || {
            format!("efficiency must lie in (0, 1], got {}", cond.efficiency)
        })?;
        if self.dims == Dimensions::Phase {
            match cond.fixed_squeezing {
                Some(r) if r.is_finite() && r >= 0.0 => {}
                Some(r) => return Err(Error::InvalidArgument(format!("invalid fixed squeezing {r}"))),
                None => {
                    return Err(Error::InvalidArgument(
                        "phase-only cloud needs a fixed squeezing".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Per-particle `(ln 1/√(2πσ²), −1/(2σ²))`, so a batch of `n` outcomes
    /// with `Σx² = s` has log-likelihood `n·a + s·b`.
    fn gaussian_coefficients(&self, cond: &Conditions) -> (Vec<f64>, Vec<f64>) {
        let theta = cond.theta.radians();
        let eta = cond.efficiency;
        let n = self.len();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let fixed = cond.fixed_squeezing.map(|r| axis_terms(r, eta));
        for k in 0..n {
            let (sqz, asqz) = match fixed {
                Some(t) if self.dims == Dimensions::Phase => t,
                _ => axis_terms(self.squeezing[k], eta),
            };
            let c = (self.phase[k] - theta).cos();
            let var = variance_from_terms(c * c, sqz, asqz);
            a.push(-0.5 * (TAU * var).ln());
            b.push(-0.5 / var);
        }
        (a, b)
    }

    fn record(&mut self, cond: &Conditions, count: usize, sum_sq: f64) {
        if count == 0 {
            return;
        }
        let key = (cond.theta.radians(), cond.efficiency, cond.fixed_squeezing);
        match self
            .history
            .iter_mut()
            .find(|h| (h.theta, h.efficiency, h.fixed_squeezing) == key)
        {
            Some(h) => {
                h.count += count as f64;
                h.sum_sq += sum_sq;
            }
            None => self.history.push(Absorbed {
                theta: key.0,
                efficiency: key.1,
                fixed_squeezing: key.2,
                count: count as f64,
                sum_sq,
            }),
        }
    }

    /// Log-likelihood of all recorded data at one point.
    fn history_log_likelihood(&self, phase: f64, squeezing: f64) -> f64 {
        self.history
            .iter()
            .map(|h| {
                let r = match (self.dims, h.fixed_squeezing) {
                    (Dimensions::Phase, Some(r)) => r,
                    _ => squeezing,
                };
                let (sqz, asqz) = axis_terms(r, h.efficiency);
                let c = (phase - h.theta).cos();
                let var = variance_from_terms(c * c, sqz, asqz);
                -0.5 * h.count * (TAU * var).ln() - 0.5 * h.sum_sq / var
            })
            .sum()
    }

    /// Re-conditions the cloud on a new efficiency: every recorded batch is
    /// re-scored at `efficiency` and the weights corrected by the likelihood
    /// ratio, so the cloud targets `p(φ, r | data, η = efficiency)`.
    pub fn retarget_efficiency(&mut self, efficiency: f64) -> Result<()> {
        ensure(efficiency.is_finite() && efficiency > 0.0 && efficiency <= 1.0, || {
            format!("efficiency must lie in (0, 1], got {efficiency}")
        })?;
        if self.history.iter().all(|h| h.efficiency == efficiency) {
            return Ok(());
        }
        let old = self.clone();
        for h in self.history.iter_mut() {
            h.efficiency = efficiency;
        }
        let sq = |k: usize| self.squeezing.get(k).copied().unwrap_or(0.0);
        let mut lw: Vec<f64> = (0..self.len())
            .map(|k| {
                self.weights[k].ln() + self.history_log_likelihood(self.phase[k], sq(k))
                    - old.history_log_likelihood(self.phase[k], sq(k))
            })
            .collect();
        normalize_log(&mut lw)?;
        self.weights = lw;
        // batches at the same LO phase now share conditions
        let mut merged: Vec<Absorbed> = Vec::with_capacity(self.history.len());
        for h in std::mem::take(&mut self.history) {
            match merged
                .iter_mut()
                .find(|m| (m.theta, m.fixed_squeezing) == (h.theta, h.fixed_squeezing))
            {
                Some(m) => {
                    m.count += h.count;
                    m.sum_sq += h.sum_sq;
                }
                None => merged.push(h),
            }
        }
        self.history = merged;
        Ok(())
    }

    /// Weights after absorbing `count` outcomes with `Σx² = sum_sq`, without
    /// committing them.
    fn tentative(&self, coef: &(Vec<f64>, Vec<f64>), count: f64, sum_sq: f64) -> Result<Vec<f64>> {
        let (a, b) = coef;
        let mut lw: Vec<f64> = self
            .weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (ak, bk))| w.ln() + count * ak + sum_sq * bk)
            .collect();
        normalize_log(&mut lw)?;
        Ok(lw)
    }

    /// Bayes update with one homodyne outcome. No resampling is performed.
    pub fn update_weights(&mut self, x: QuadratureSample, cond: &Conditions) -> Result<()> {
        self.update_batch(&[x.0], cond)
    }

    /// Bayes update with several outcomes taken under the same conditions,
    /// equal to repeated [`ParticleCloud::update_weights`]. No resampling.
    pub fn update_batch(&mut self, xs: &[f64], cond: &Conditions) -> Result<()> {
        self.check_conditions(cond)?;
        check_samples(xs)?;
        let coef = self.gaussian_coefficients(cond);
        let s: f64 = xs.iter().map(|x| x * x).sum();
        self.weights = self.tentative(&coef, xs.len() as f64, s)?;
        self.record(cond, xs.len(), s);
        Ok(())
    }

    /// Sequentially absorbs `xs`, resampling whenever the ESS drops below
    /// `policy.ess_fraction · n_p`. Returns the number of resampling events.
    ///
    /// Outcomes are absorbed in geometrically growing blocks using the
    /// Gaussian sufficient statistic; when a block would push the ESS below
    /// the threshold the block is halved until the single outcome that
    /// crosses it is found, and the cloud is resampled right after it.
    pub fn assimilate<R: Rng + ?Sized>(
        &mut self,
        xs: &[f64],
        cond: &Conditions,
        policy: &ResamplePolicy,
        rng: &mut R,
    ) -> Result<usize> {
        self.check_conditions(cond)?;
        check_samples(xs)?;
        let threshold = policy.ess_fraction * self.len() as f64;
        let mut prefix = Vec::with_capacity(xs.len() + 1);
        prefix.push(0.0);
        for x in xs {
            prefix.push(prefix.last().unwrap() + x * x);
        }
        let mut coef = self.gaussian_coefficients(cond);
        let mut pos = 0;
        let mut recorded = 0;
        let mut block = 1;
        let mut resamples = 0;
        while pos < xs.len() {
            let len = block.min(xs.len() - pos);
            let w = self.tentative(&coef, len as f64, prefix[pos + len] - prefix[pos])?;
            let ess = ess_of(&w);
            if ess >= threshold {
                self.weights = w;
                pos += len;
                block = len * 2;
            } else if len > 1 {
                block = len / 2;
            } else {
                self.weights = w;
                pos += 1;
                self.record(cond, pos - recorded, prefix[pos] - prefix[recorded]);
                recorded = pos;
                self.resample(policy, rng)?;
                resamples += 1;
                coef = self.gaussian_coefficients(cond);
                block = 1;
            }
        }
        self.record(cond, pos - recorded, prefix[pos] - prefix[recorded]);
        Ok(resamples)
    }

    pub fn effective_sample_size(&self) -> f64 {
        ess_of(&self.weights)
    }

    /// φ coordinates in the frame used for moments: as stored, or unwrapped
    /// around the directional mean when the mass straddles the 0/π seam.
    fn phase_frame(&self) -> Vec<f64> {
        directional_frame(&self.phase, &self.weights).unwrap_or_else(|| self.phase.clone())
    }

    /// Weighted moments implementing the discrete posterior sums.
    pub fn summarize(&self) -> PosteriorSummary {
        let ph = self.phase_frame();
        let w = &self.weights;
        let mp = dot(w, &ph);
        let vp: f64 = w.iter().zip(&ph).map(|(w, p)| w * (p - mp).powi(2)).sum();
        let ess = self.effective_sample_size();
        match self.dims {
            Dimensions::Phase => PosteriorSummary {
                phase_mean: wrap_pi(mp),
                phase_variance: vp,
                squeezing_mean: None,
                squeezing_variance: None,
                covariance: None,
                effective_sample_size: ess,
            },
            Dimensions::PhaseSqueezing => {
                let mr = dot(w, &self.squeezing);
                let (mut vr, mut cpr) = (0.0, 0.0);
                for k in 0..w.len() {
                    let dr = self.squeezing[k] - mr;
                    vr += w[k] * dr * dr;
                    cpr += w[k] * dr * (ph[k] - mp);
                }
                PosteriorSummary {
                    phase_mean: wrap_pi(mp),
                    phase_variance: vp,
                    squeezing_mean: Some(mr),
                    squeezing_variance: Some(vr),
                    covariance: Some([[vp, cpr], [cpr, vr]]),
                    effective_sample_size: ess,
                }
            }
        }
    }

    /// Liu–West resampling: systematic selection by weight, then a kernel
    /// move `a·x + (1 − a)·μ + ε` with `ε ~ N(0, (1 − a²)Σ)`. With recorded
    /// data the move is accepted by Metropolis–Hastings against the current
    /// posterior and moves that leave the squeezing range are rejected;
    /// otherwise it is always taken and r reflects at the range ends.
    pub fn resample<R: Rng + ?Sized>(&mut self, policy: &ResamplePolicy, rng: &mut R) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegeneratePosterior(format!("total weight {total}")));
        }
        let a = policy.shrinkage;
        let h = (1.0 - a * a).max(0.0).sqrt();
        let n = self.len();
        let ph = self.phase_frame();
        let w = &self.weights;
        let mp = dot(w, &ph) / total;
        let vp: f64 = w.iter().zip(&ph).map(|(w, p)| w * (p - mp).powi(2)).sum::<f64>() / total;
        let joint = self.dims == Dimensions::PhaseSqueezing;
        let (mr, vr, cpr) = if joint {
            let mr = dot(w, &self.squeezing) / total;
            let (mut vr, mut cpr) = (0.0, 0.0);
            for k in 0..n {
                let dr = self.squeezing[k] - mr;
                vr += w[k] * dr * dr;
                cpr += w[k] * dr * (ph[k] - mp);
            }
            (mr, vr / total, cpr / total)
        } else {
            (0.0, 0.0, 0.0)
        };
        let [[l11, _], [l21, l22]] = cholesky2(vp, cpr, vr);
        let scale_ok = h > 0.0 && l11 > 0.0 && (!joint || l22 > 0.0);
        let corrected = !self.history.is_empty() && scale_ok;
        // squared Mahalanobis length of a kernel step
        let step_norm = |d1: f64, d2: f64| {
            let u1 = d1 / (h * l11);
            if joint {
                let u2 = (d2 - l21 * d1 / l11) / (h * l22);
                u1 * u1 + u2 * u2
            } else {
                u1 * u1
            }
        };

        let picks = systematic_indices(w, total, n, rng.gen::<f64>());
        let (r0, r1) = self.ranges.squeezing;
        let mut new_phase: Vec<f64> = picks.iter().map(|&i| ph[i]).collect();
        let mut new_sqz: Vec<f64> = if joint {
            picks.iter().map(|&i| self.squeezing[i]).collect()
        } else {
            Vec::new()
        };
        let mut log_lik: Vec<f64> = if corrected {
            (0..n)
                .map(|k| self.history_log_likelihood(new_phase[k], new_sqz.get(k).copied().unwrap_or(0.0)))
                .collect()
        } else {
            Vec::new()
        };
        let moves = if corrected { policy.moves.max(1) } else { 1 };
        for _ in 0..moves {
            for k in 0..n {
                let (x1, x2) = (new_phase[k], new_sqz.get(k).copied().unwrap_or(0.0));
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = if joint { rng.sample(StandardNormal) } else { 0.0 };
                let y1 = a * x1 + (1.0 - a) * mp + h * l11 * z1;
                let y2 = if joint { a * x2 + (1.0 - a) * mr + h * (l21 * z1 + l22 * z2) } else { 0.0 };
                let u: f64 = rng.gen();
                let (p, r) = if !corrected {
                    (y1, if joint { reflect(y2, r0, r1) } else { 0.0 })
                } else if joint && !(r0..=r1).contains(&y2) {
                    continue;
                } else {
                    let fwd = step_norm(y1 - a * x1 - (1.0 - a) * mp, y2 - a * x2 - (1.0 - a) * mr);
                    let rev = step_norm(x1 - a * y1 - (1.0 - a) * mp, x2 - a * y2 - (1.0 - a) * mr);
                    let proposed = self.history_log_likelihood(y1, y2);
                    if u.ln() >= proposed - log_lik[k] + 0.5 * (fwd - rev) {
                        continue;
                    }
                    log_lik[k] = proposed;
                    (y1, y2)
                };
                new_phase[k] = p;
                if joint {
                    new_sqz[k] = r;
                }
            }
        }
        let (p0, p1) = self.ranges.phase;
        for p in new_phase.iter_mut() {
            *p = p0 + (*p - p0).rem_euclid(p1 - p0);
            if *p >= p1 {
                *p = p0;
            }
        }
        self.phase = new_phase;
        self.squeezing = new_sqz;
        self.weights = vec![1.0 / n as f64; n];
        Ok(())
    }
}

/// Turns log-weights into normalized weights in place.
fn normalize_log(lw: &mut [f64]) -> Result<()> {
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegeneratePosterior(format!("maximum log-weight is {max}")));
    }
    let mut total = 0.0;
    for v in lw.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegeneratePosterior(format!("total weight {total}")));
    }
    for v in lw.iter_mut() {
        *v /= total;
    }
    Ok(())
}

fn check_samples(xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::InvalidArgument(format!("sample {i} is not finite: {}", xs[i]))),
        None => Ok(()),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ess_of(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    s * s / s2
}

/// Effective sample size `1 / Σ w²` of a cloud.
pub fn effective_sample_size(cloud: &ParticleCloud) -> f64 {
    cloud.effective_sample_size()
}

fn systematic_indices(w: &[f64], total: f64, n: usize, u0: f64) -> Vec<usize> {
    let step = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = w[0];
    let mut i = 0;
    for k in 0..n {
        let target = (u0 + k as f64) * step;
        while cum < target && i + 1 < w.len() {
            i += 1;
            cum += w[i];
        }
        out.push(i);
    }
    out
}

fn cholesky2(a: f64, b: f64, c: f64) -> [[f64; 2]; 2] {
    let l11 = a.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
    let l22 = (c - l21 * l21).max(0.0).sqrt();
    [[l11, 0.0], [l21, l22]]
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    // fold into one period of the reflected pattern, then mirror
    x = (x - lo).rem_euclid(2.0 * span);
    if x > span {
        x = 2.0 * span - x;
    }
    lo + x
}

/// Maps each φ to its representative within ±π/2 of the doubled-angle
/// directional mean, if that frame reduces the weighted variance by at
/// least [`DIRECTIONAL_GAIN`]. `None` means the plain frame is kept.
pub(crate) fn directional_frame(phase: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let (mut c, mut s, mut m) = (0.0, 0.0, 0.0);
    for (p, wk) in phase.iter().zip(w) {
        c += wk * (2.0 * p).cos();
        s += wk * (2.0 * p).sin();
        m += wk * p;
    }
    let total: f64 = w.iter().sum();
    m /= total;
    if (c * c + s * s).sqrt() < 1e-9 * total {
        return None;
    }
    let centre = 0.5 * s.atan2(c);
    let mut vu = 0.0;
    let mut mu = 0.0;
    let unwrapped: Vec<f64> = phase
        .iter()
        .map(|p| centre + (p - centre + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2)
        .collect();
    for (u, wk) in unwrapped.iter().zip(w) {
        mu += wk * u;
    }
    mu /= total;
    let mut vl = 0.0;
    for ((u, p), wk) in unwrapped.iter().zip(phase).zip(w) {
        vu += wk * (u - mu).powi(2);
        vl += wk * (p - m).powi(2);
    }
    if vu < DIRECTIONAL_GAIN * vl {
        Some(unwrapped)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cond(theta: f64, r: Option<f64>) -> Conditions {
        Conditions {
            theta: QuadratureAngle::new(theta),
            efficiency: 0.8,
            fixed_squeezing: r,
        }
    }

    fn cloud1(phases: &[f64], weights: &[f64]) -> ParticleCloud {
        ParticleCloud::from_particles(phases.to_vec(), None, weights.to_vec(), PriorRanges::default()).unwrap()
    }

    #[test]
    fn prior_layout() {
        let c = init_prior(Dimensions::Phase, 10_000, PriorRanges::default()).unwrap();
        assert!(c.weights().iter().all(|&w| w == 1e-4));
        assert_relative_eq!(c.summarize().phase_mean, FRAC_PI_2, epsilon = 1e-9);
        let c = init_prior(Dimensions::PhaseSqueezing, 20_000, PriorRanges::default()).unwrap();
        let s = c.summarize();
        assert!((s.phase_mean - FRAC_PI_2).abs() < 1e-2);
        assert!((s.squeezing_mean.unwrap() - 1.5).abs() < 1e-2);
        assert!(c.phases().iter().all(|p| (0.0..PI).contains(p)));
        assert!(c.squeezings().iter().all(|r| (0.0..=3.0).contains(r)));
        assert!(init_prior(Dimensions::Phase, 1, PriorRanges::default()).is_err());
        let bad = PriorRanges { phase: (1.0, 1.0), ..PriorRanges::default() };
        assert!(init_prior(Dimensions::Phase, 10, bad).is_err());
    }

    #[test]
    fn ess_examples() {
        let n = 8;
        let c = cloud1(&vec![0.5; n], &vec![1.0; n]);
        assert_relative_eq!(effective_sample_size(&c), n as f64, max_relative = 1e-14);
        let mut w = vec![0.0; n];
        w[3] = 1.0;
        assert_relative_eq!(cloud1(&vec![0.5; n], &w).effective_sample_size(), 1.0);
        w[5] = 1.0;
        assert_relative_eq!(cloud1(&vec![0.5; n], &w).effective_sample_size(), 2.0);
    }

    #[test]
    fn updates_normalize_and_compose() {
        let mut c = init_prior(Dimensions::PhaseSqueezing, 2000, PriorRanges::default()).unwrap();
        let mut d = c.clone();
        let xs = [0.3, -0.1, 0.72, 1e-3, -0.4];
        for &x in &xs {
            c.update_weights(QuadratureSample(x), &cond(0.4, None)).unwrap();
            assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        d.update_batch(&xs, &cond(0.4, None)).unwrap();
        for (a, b) in c.weights().iter().zip(d.weights()) {
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-300);
        }
        // extreme but finite outcome stays finite
        d.update_weights(QuadratureSample(1e6), &cond(0.4, None)).unwrap();
        assert!(d.weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn constant_likelihood_keeps_weights() {
        // r = 0 makes every phase equally likely
        let mut c = cloud1(&[0.1, 0.9, 2.0], &[0.2, 0.3, 0.5]);
        c.update_weights(QuadratureSample(0.37), &cond(0.0, Some(0.0))).unwrap();
        for (w, e) in c.weights().iter().zip([0.2, 0.3, 0.5]) {
            assert_relative_eq!(*w, e, max_relative = 1e-12);
        }
    }

    #[test]
    fn update_errors() {
        let mut c = init_prior(Dimensions::Phase, 10, PriorRanges::default()).unwrap();
        assert!(c.update_weights(QuadratureSample(0.1), &cond(0.0, None)).is_err());
        assert!(c.update_weights(QuadratureSample(f64::NAN), &cond(0.0, Some(0.5))).is_err());
        let bad = Conditions { efficiency: 0.0, ..cond(0.0, Some(0.5)) };
        assert!(c.update_weights(QuadratureSample(0.1), &bad).is_err());
        assert!(matches!(
            ParticleCloud::from_particles(vec![0.1, 0.2], None, vec![0.0, 0.0], PriorRanges::default()),
            Err(Error::DegeneratePosterior(_))
        ));
    }

    #[test]
    fn summary_examples() {
        let s = cloud1(&[0.2, 0.4], &[1.0, 1.0]).summarize();
        assert_relative_eq!(s.phase_mean, 0.3, epsilon = 1e-15);
        assert_relative_eq!(s.phase_variance, 0.01, epsilon = 1e-15);
        let s = cloud1(&[0.05, PI - 0.05], &[1.0, 1.0]).summarize();
        assert!(s.phase_mean.abs() < 1e-12 || (PI - s.phase_mean).abs() < 1e-12);
        assert_relative_eq!(s.phase_variance, 0.0025, epsilon = 1e-12);
        let c = ParticleCloud::from_particles(
            vec![1.0, 1.2],
            Some(vec![0.5, 0.9]),
            vec![1.0, 1.0],
            PriorRanges::default(),
        )
        .unwrap();
        let s = c.summarize();
        let cov = s.covariance.unwrap();
        assert_relative_eq!(cov[0][1], 0.02, epsilon = 1e-15);
        assert_relative_eq!(s.squeezing_variance.unwrap(), 0.04, epsilon = 1e-15);
        assert_eq!(cov[0][1], cov[1][0]);
    }

    #[test]
    fn resample_flattens_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = init_prior(Dimensions::PhaseSqueezing, 4000, PriorRanges::default()).unwrap();
        c.update_batch(&[0.1, 0.2, -0.3, 0.05], &cond(0.3, None)).unwrap();
        c.resample(&ResamplePolicy::default(), &mut rng).unwrap();
        assert!(c.weights().iter().all(|&w| w == 1.0 / 4000.0));
        assert_relative_eq!(c.effective_sample_size(), 4000.0, max_relative = 1e-12);
        assert!(c.phases().iter().all(|p| (0.0..PI).contains(p)));
        assert!(c.squeezings().iter().all(|r| (0.0..=3.0).contains(r)));
    }

    #[test]
    fn resample_preserves_moments() {
        // Gaussian-like 2-D cloud away from the prior edges
        let n = 5000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mut ph, mut sq, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..n {
            let u = (k as f64 + 0.5) / n as f64;
            ph.push(1.0 + 0.2 * (u - 0.5));
            sq.push(0.8 + 0.3 * ((k * 7919 % n) as f64 / n as f64 - 0.5));
            w.push((-((u - 0.5) * 4.0).powi(2)).exp());
        }
        let base = ParticleCloud::from_particles(ph, Some(sq), w, PriorRanges::default()).unwrap();
        let target = base.summarize();
        let reps = 100;
        let (mut means, mut vars) = (Vec::new(), Vec::new());
        for _ in 0..reps {
            let mut c = base.clone();
            c.resample(&ResamplePolicy::default(), &mut rng).unwrap();
            let s = c.summarize();
            means.push([s.phase_mean, s.squeezing_mean.unwrap()]);
            vars.push([s.phase_variance, s.squeezing_variance.unwrap()]);
        }
        let check = |vals: Vec<f64>, truth: f64| {
            let m = vals.iter().sum::<f64>() / reps as f64;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            let se = sd / (reps as f64).sqrt();
            assert!((m - truth).abs() < 3.0 * se + 1e-12, "{m} vs {truth} (se {se})");
        };
        check(means.iter().map(|m| m[0]).collect(), target.phase_mean);
        check(means.iter().map(|m| m[1]).collect(), target.squeezing_mean.unwrap());
        check(vars.iter().map(|m| m[0]).collect(), target.phase_variance);
        check(vars.iter().map(|m| m[1]).collect(), target.squeezing_variance.unwrap());
    }

    #[test]
    fn assimilate_respects_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = init_prior(Dimensions::Phase, 2000, PriorRanges::default()).unwrap();
        let xs: Vec<f64> = (0..300).map(|i| 0.2 * ((i as f64) * 0.7).sin()).collect();
        let n = c
            .assimilate(&xs, &cond(0.0, Some(0.8)), &ResamplePolicy::default(), &mut rng)
            .unwrap();
        assert!(n > 0);
        assert!(c.effective_sample_size() >= 1000.0);
        // uninformative data never triggers resampling
        let mut c = init_prior(Dimensions::Phase, 2000, PriorRanges::default()).unwrap();
        let n = c
            .assimilate(&xs, &cond(0.0, Some(0.0)), &ResamplePolicy::default(), &mut rng)
            .unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn retarget_matches_fresh_update() {
        let xs = [0.3, -0.9, 0.1, 0.62];
        let mut a = init_prior(Dimensions::PhaseSqueezing, 500, PriorRanges::default()).unwrap();
        let mut b = a.clone();
        let at = |eta: f64| Conditions { efficiency: eta, ..cond(0.4, None) };
        a.update_batch(&xs[..2], &at(0.7)).unwrap();
        a.update_batch(&xs[2..], &Conditions { theta: QuadratureAngle::new(1.1), ..at(0.6) }).unwrap();
        a.retarget_efficiency(0.9).unwrap();
        b.update_batch(&xs[..2], &at(0.9)).unwrap();
        b.update_batch(&xs[2..], &Conditions { theta: QuadratureAngle::new(1.1), ..at(0.9) }).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-12 * y.max(1e-200));
        }
        assert!(a.retarget_efficiency(1.2).is_err());
    }

    #[test]
    fn corrected_move_rejects_out_of_range_squeezing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut c = init_prior(Dimensions::PhaseSqueezing, 3000, PriorRanges::default()).unwrap();
        // vacuum-like data pushes mass against r = 0
        let xs: Vec<f64> = (0..200).map(|i| 0.5 * ((i as f64) * 1.3).sin()).collect();
        for _ in 0..5 {
            c.update_batch(&xs, &cond(0.0, None)).unwrap();
            c.resample(&ResamplePolicy::default(), &mut rng).unwrap();
        }
        assert!(c.squeezings().iter().all(|r| (0.0..=3.0).contains(r)));
    }

    #[test]
    fn reflection() {
        assert_relative_eq!(reflect(-0.2, 0.0, 3.0), 0.2);
        assert_relative_eq!(reflect(3.5, 0.0, 3.0), 2.5);
        assert_relative_eq!(reflect(1.0, 0.0, 3.0), 1.0);
        assert_relative_eq!(reflect(-6.5, 0.0, 3.0), 0.5, epsilon = 1e-12);
    }
}
