//! Stage planning and LO feedback for the single-, two- and three-parameter
//! adaptive protocols.
//!
//! Every protocol starts with a rough stage at fixed LO phases that breaks
//! the `φ ↔ π − φ` ambiguity, then runs a number of adaptive cycles. Each
//! cycle moves the LO according to the current posterior and acquires one
//! fine batch.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::eta::{eta_ml_update, EtaProfile, DEFAULT_ETA_POINTS, DEFAULT_ETA_RANGE};
use crate::geometry::{
    composite_fi_matrix, decorrelation_angle, optimal_angle_single, phase_bounds, BoundSet,
};
use crate::quadrature::{draw_sample, effective_squeezing, ProbeParams, QuadratureAngle};
use crate::smc::{
    init_prior, Conditions, Dimensions, ParticleCloud, PosteriorSummary, PriorRanges,
    ResamplePolicy, DEFAULT_JOINT_PARTICLES, DEFAULT_PHASE_PARTICLES,
};

/// Tolerance when matching recorded LO phases to planned ones.
pub const REPLAY_ANGLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Phase only; squeezing and efficiency are calibrated.
    Single,
    /// Joint phase and squeezing; efficiency is calibrated.
    TwoParam,
    /// Joint phase and squeezing, efficiency from its profile likelihood.
    ThreeParam,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::TwoParam => "two-param",
            Mode::ThreeParam => "three-param",
        }
    }

    pub fn dimensions(self) -> Dimensions {
        match self {
            Mode::Single => Dimensions::Phase,
            _ => Dimensions::PhaseSqueezing,
        }
    }

    fn rough_angle_count(self) -> usize {
        match self {
            Mode::Single => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Rough,
    Fine,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Rough => "rough",
            Stage::Fine => "fine",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for EtaGrid {
    fn default() -> Self {
        Self {
            min: DEFAULT_ETA_RANGE.0,
            max: DEFAULT_ETA_RANGE.1,
            points: DEFAULT_ETA_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub mode: Mode,
    pub total_samples: usize,
    pub rough_samples: usize,
    pub rough_angles: Vec<f64>,
    #[serde(default = "default_cycles")]
    pub adaptive_cycles: usize,
    pub particles: usize,
    #[serde(default)]
    pub prior: PriorRanges,
    /// Assumed squeezing; required in single mode.
    #[serde(default)]
    pub calibrated_squeezing: Option<f64>,
    /// Assumed efficiency; required unless the mode estimates it.
    #[serde(default)]
    pub calibrated_efficiency: Option<f64>,
    #[serde(default)]
    pub eta_grid: EtaGrid,
    #[serde(default)]
    pub resample: ResamplePolicy,
    #[serde(default)]
    pub seed: u64,
}

fn default_cycles() -> usize {
    3
}

impl ProtocolConfig {
    /// Pre-calibrated phase-only protocol: 5000 samples, 200 rough at
    /// `θ ∈ {0, π/4}`, 10 000 particles.
    pub fn single(squeezing: f64, efficiency: f64) -> Self {
        Self {
            mode: Mode::Single,
            total_samples: 5000,
            rough_samples: 200,
            rough_angles: vec![0.0, FRAC_PI_4],
            adaptive_cycles: 3,
            particles: DEFAULT_PHASE_PARTICLES,
            prior: PriorRanges::default(),
            calibrated_squeezing: Some(squeezing),
            calibrated_efficiency: Some(efficiency),
            eta_grid: EtaGrid::default(),
            resample: ResamplePolicy::default(),
            seed: 0,
        }
    }

    /// Joint phase/squeezing protocol: 20 000 samples, 1200 rough at
    /// `θ ∈ {0, π/4, π/2}`, 20 000 particles.
    pub fn two_param(efficiency: f64) -> Self {
        Self {
            mode: Mode::TwoParam,
            total_samples: 20_000,
            rough_samples: 1200,
            rough_angles: vec![0.0, FRAC_PI_4, FRAC_PI_2],
            particles: DEFAULT_JOINT_PARTICLES,
            calibrated_squeezing: None,
            calibrated_efficiency: Some(efficiency),
            ..Self::single(0.0, 1.0)
        }
    }

    pub fn three_param() -> Self {
        Self {
            mode: Mode::ThreeParam,
            calibrated_efficiency: None,
            ..Self::two_param(1.0)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_budget(mut self, total: usize, rough: usize) -> Self {
        self.total_samples = total;
        self.rough_samples = rough;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.rough_samples > 0 && self.rough_samples < self.total_samples, || {
            format!(
                "need 0 < rough_samples < total_samples, got {} and {}",
                self.rough_samples, self.total_samples
            )
        })?;
        ensure(self.rough_angles.len() == self.mode.rough_angle_count(), || {
            format!(
                "{} mode needs {} rough angles, got {}",
                self.mode.as_str(),
                self.mode.rough_angle_count(),
                self.rough_angles.len()
            )
        })?;
        ensure(self.rough_angles.iter().all(|a| a.is_finite()), || "rough angles must be finite".into())?;
        ensure(self.adaptive_cycles >= 1, || "adaptive_cycles must be >= 1".into())?;
        ensure(self.total_samples - self.rough_samples >= self.adaptive_cycles, || {
            "fewer fine samples than adaptive cycles".into()
        })?;
        ensure(self.particles >= 2, || "need at least 2 particles".into())?;
        let eta_ok = |e: f64| e.is_finite() && e > 0.0 && e <= 1.0;
        match self.mode {
            Mode::Single => {
                ensure(self.calibrated_squeezing.is_some_and(|r| r.is_finite() && r >= 0.0), || {
                    "single mode needs calibrated_squeezing >= 0".into()
                })?;
                ensure(self.calibrated_efficiency.is_some_and(eta_ok), || {
                    "single mode needs calibrated_efficiency in (0, 1]".into()
                })?;
            }
            Mode::TwoParam => ensure(self.calibrated_efficiency.is_some_and(eta_ok), || {
                "two-param mode needs calibrated_efficiency in (0, 1]".into()
            })?,
            Mode::ThreeParam => {
                let g = &self.eta_grid;
                ensure(g.points >= 1 && eta_ok(g.min) && eta_ok(g.max) && g.min <= g.max, || {
                    format!("invalid eta grid {g:?}")
                })?;
            }
        }
        Ok(())
    }
}

/// Batch layout of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    /// `(θ, count)` per rough setting, in acquisition order.
    pub rough: Vec<(f64, usize)>,
    /// Sample count of each adaptive cycle's fine batch.
    pub fine: Vec<usize>,
}

impl StagePlan {
    pub fn total(&self) -> usize {
        self.rough.iter().map(|r| r.1).sum::<usize>() + self.fine.iter().sum::<usize>()
    }
}

/// Splits the rough budget equally over the rough angles (remainder to the
/// earliest angles) and the fine budget equally over the adaptive cycles
/// (remainder to the last cycles).
pub fn plan_stages(config: &ProtocolConfig) -> Result<StagePlan> {
    config.validate()?;
    let k = config.rough_angles.len();
    let (q, rem) = (config.rough_samples / k, config.rough_samples % k);
    let rough = config
        .rough_angles
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, q + usize::from(i < rem)))
        .collect();
    let c = config.adaptive_cycles;
    let fine_total = config.total_samples - config.rough_samples;
    let (q, rem) = (fine_total / c, fine_total % c);
    let fine = (0..c).map(|i| q + usize::from(i >= c - rem)).collect();
    Ok(StagePlan { rough, fine })
}

/// LO phase for the next fine batch: the FI maximum in single mode, the
/// φ–r decorrelation point otherwise.
pub fn next_lo_phase(mode: Mode, phase_estimate: f64, squeezing: f64, efficiency: f64) -> QuadratureAngle {
    let offset = match mode {
        Mode::Single => optimal_angle_single(squeezing),
        Mode::TwoParam | Mode::ThreeParam => decorrelation_angle(squeezing, efficiency),
    };
    QuadratureAngle::new(phase_estimate - offset)
}

/// Supplies homodyne outcomes for requested LO settings.
pub trait DataSource {
    fn acquire(&mut self, stage: Stage, theta: QuadratureAngle, count: usize) -> Result<Vec<f64>>;

    /// Ground truth, when known.
    fn reference_probe(&self) -> Option<ProbeParams> {
        None
    }
}

/// Simulated detector. Draws from its own ChaCha stream, separate from the
/// estimator's resampling stream.
#[derive(Debug, Clone)]
pub struct Simulator {
    probe: ProbeParams,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(probe: ProbeParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self { probe, rng }
    }
}

impl DataSource for Simulator {
    fn acquire(&mut self, _stage: Stage, theta: QuadratureAngle, count: usize) -> Result<Vec<f64>> {
        Ok((0..count)
            .map(|_| draw_sample(&mut self.rng, &self.probe, theta).0)
            .collect())
    }

    fn reference_probe(&self) -> Option<ProbeParams> {
        Some(self.probe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordedSample {
    pub stage: Stage,
    pub theta: f64,
    pub x: f64,
}

/// Plays back a recorded stream in file order, refusing settings that
/// differ from the planned ones.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    samples: Vec<RecordedSample>,
    cursor: usize,
    reference: Option<ProbeParams>,
}

impl ReplaySource {
    pub fn new(samples: Vec<RecordedSample>) -> Self {
        Self {
            samples,
            cursor: 0,
            reference: None,
        }
    }

    /// Attaches calibration values used for the bounds in the run record.
    pub fn with_reference(mut self, probe: ProbeParams) -> Self {
        self.reference = Some(probe);
        self
    }

    pub fn remaining(&self) -> usize {
        self.samples.len() - self.cursor
    }
}

fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

impl DataSource for ReplaySource {
    fn acquire(&mut self, stage: Stage, theta: QuadratureAngle, count: usize) -> Result<Vec<f64>> {
        if self.remaining() < count {
            return Err(Error::SourceExhausted(self.samples.len()));
        }
        let mut out = Vec::with_capacity(count);
        for s in &self.samples[self.cursor..self.cursor + count] {
            if s.stage != stage || angle_distance(s.theta, theta.radians()) > REPLAY_ANGLE_TOLERANCE {
                return Err(Error::ScheduleMismatch {
                    index: self.cursor + out.len(),
                    planned: theta.radians(),
                    recorded: s.theta,
                });
            }
            out.push(s.x);
        }
        self.cursor += count;
        Ok(out)
    }

    fn reference_probe(&self) -> Option<ProbeParams> {
        self.reference
    }
}

/// LO change applied before a fine batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackUpdate {
    pub cycle: usize,
    pub previous_theta: f64,
    pub theta: f64,
    pub phase_estimate: f64,
    pub squeezing_estimate: Option<f64>,
    pub efficiency_estimate: f64,
}

/// Posterior after one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub stage: Stage,
    pub index: usize,
    pub theta: f64,
    pub samples_so_far: usize,
    pub efficiency_used: f64,
    pub posterior: PosteriorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: Mode,
    pub plan: StagePlan,
    pub samples: Vec<RecordedSample>,
    pub batches: Vec<BatchSummary>,
    pub feedback: Vec<FeedbackUpdate>,
    /// `(samples so far, posterior)` at each requested checkpoint.
    pub checkpoints: Vec<(usize, PosteriorSummary)>,
    pub final_posterior: PosteriorSummary,
    pub efficiency_estimate: Option<f64>,
    pub resample_count: usize,
    /// Bounds for the whole budget, at truth or calibration.
    pub bounds: Option<BoundSet>,
}

impl RunRecord {
    pub fn rough_posterior(&self) -> Option<&PosteriorSummary> {
        self.batches
            .iter()
            .filter(|b| b.stage == Stage::Rough)
            .last()
            .map(|b| &b.posterior)
    }
}

/// Options beyond the protocol config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Sample counts at which to snapshot the posterior.
    pub checkpoints: Vec<usize>,
    /// Stop after the rough stage.
    pub rough_only: bool,
}

struct Engine<'a> {
    config: &'a ProtocolConfig,
    cloud: ParticleCloud,
    rng: ChaCha8Rng,
    eta_profile: Option<EtaProfile>,
    samples: Vec<RecordedSample>,
    checkpoints: Vec<(usize, PosteriorSummary)>,
    pending: std::iter::Peekable<std::vec::IntoIter<usize>>,
    resamples: usize,
}

impl Engine<'_> {
    fn efficiency(&self) -> f64 {
        match &self.eta_profile {
            Some(p) => p.estimate(),
            None => self.config.calibrated_efficiency.unwrap_or(1.0),
        }
    }

    fn absorb(&mut self, stage: Stage, theta: QuadratureAngle, xs: &[f64]) -> Result<()> {
        let cond = Conditions {
            theta,
            efficiency: self.efficiency(),
            fixed_squeezing: self.config.calibrated_squeezing.filter(|_| self.config.mode == Mode::Single),
        };
        let mut start = 0;
        while start < xs.len() {
            let done = self.samples.len() + start;
            let end = match self.pending.peek() {
                Some(&c) if c > done && c - done < xs.len() - start => start + (c - done),
                _ => xs.len(),
            };
            self.resamples += self
                .cloud
                .assimilate(&xs[start..end], &cond, &self.config.resample, &mut self.rng)?;
            start = end;
            let done = self.samples.len() + start;
            while let Some(&c) = self.pending.peek() {
                if c > done {
                    break;
                }
                self.pending.next();
                if c == done {
                    self.checkpoints.push((c, self.cloud.summarize()));
                }
            }
        }
        if let Some(profile) = self.eta_profile.as_mut() {
            eta_ml_update(profile, theta, xs, &self.cloud)?;
            self.cloud.retarget_efficiency(profile.estimate())?;
        }
        self.samples.extend(xs.iter().map(|&x| RecordedSample {
            stage,
            theta: theta.radians(),
            x,
        }));
        Ok(())
    }
}

pub fn run_estimation(config: &ProtocolConfig, source: &mut dyn DataSource) -> Result<RunRecord> {
    run_estimation_with(config, source, &RunOptions::default())
}

/// Executes the planned schedule against `source`.
pub fn run_estimation_with(
    config: &ProtocolConfig,
    source: &mut dyn DataSource,
    options: &RunOptions,
) -> Result<RunRecord> {
    let plan = plan_stages(config)?;
    let mut cps = options.checkpoints.clone();
    cps.sort_unstable();
    cps.dedup();
    let eta_profile = match config.mode {
        Mode::ThreeParam => Some(EtaProfile::uniform(
            config.eta_grid.min,
            config.eta_grid.max,
            config.eta_grid.points,
        )?),
        _ => None,
    };
    let mut engine = Engine {
        config,
        cloud: init_prior(config.mode.dimensions(), config.particles, config.prior)?,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        eta_profile,
        samples: Vec::with_capacity(config.total_samples),
        checkpoints: Vec::new(),
        pending: cps.into_iter().peekable(),
        resamples: 0,
    };
    let mut batches = Vec::new();
    let mut feedback = Vec::new();

    let mut theta = QuadratureAngle::new(0.0);
    for (i, &(angle, count)) in plan.rough.iter().enumerate() {
        theta = QuadratureAngle::new(angle);
        let eta_used = engine.efficiency();
        let xs = source.acquire(Stage::Rough, theta, count)?;
        engine.absorb(Stage::Rough, theta, &xs)?;
        batches.push(BatchSummary {
            stage: Stage::Rough,
            index: i,
            theta: theta.radians(),
            samples_so_far: engine.samples.len(),
            efficiency_used: eta_used,
            posterior: engine.cloud.summarize(),
        });
    }

    if !options.rough_only {
        for (cycle, &count) in plan.fine.iter().enumerate() {
            let s = engine.cloud.summarize();
            let eta = engine.efficiency();
            let squeezing = match config.mode {
                Mode::Single => effective_squeezing(
                    config.calibrated_squeezing.unwrap_or_default(),
                    config.calibrated_efficiency.unwrap_or(1.0),
                )?,
                _ => s.squeezing_mean.unwrap_or_default(),
            };
            let next = next_lo_phase(config.mode, s.phase_mean, squeezing, eta);
            feedback.push(FeedbackUpdate {
                cycle,
                previous_theta: theta.radians(),
                theta: next.radians(),
                phase_estimate: s.phase_mean,
                squeezing_estimate: s.squeezing_mean,
                efficiency_estimate: eta,
            });
            theta = next;
            let xs = source.acquire(Stage::Fine, theta, count)?;
            engine.absorb(Stage::Fine, theta, &xs)?;
            batches.push(BatchSummary {
                stage: Stage::Fine,
                index: cycle,
                theta: theta.radians(),
                samples_so_far: engine.samples.len(),
                efficiency_used: eta,
                posterior: engine.cloud.summarize(),
            });
        }
    }

    let final_posterior = engine.cloud.summarize();
    let bounds = source
        .reference_probe()
        .map(|p| budget_bounds(config, &p, engine.samples.len()))
        .transpose()?;
    Ok(RunRecord {
        mode: config.mode,
        plan,
        samples: engine.samples,
        batches,
        feedback,
        checkpoints: engine.checkpoints,
        final_posterior,
        efficiency_estimate: engine.eta_profile.as_ref().map(EtaProfile::estimate),
        resample_count: engine.resamples,
        bounds,
    })
}

/// Bounds for `m` measurements of `probe`, with the composite CRB taken at
/// the fine setting the mode's feedback rule converges to.
pub fn budget_bounds(config: &ProtocolConfig, probe: &ProbeParams, m: usize) -> Result<BoundSet> {
    let per_sample = protocol_bounds(config, probe)?;
    Ok(per_sample.for_budget(m))
}

/// Per-measurement bounds for the schedule in `config` at `probe`.
pub fn protocol_bounds(config: &ProtocolConfig, probe: &ProbeParams) -> Result<BoundSet> {
    let (r, eta) = (probe.squeezing, probe.efficiency);
    let fine = match config.mode {
        Mode::Single => next_lo_phase(Mode::Single, probe.phase, effective_squeezing(r, eta)?, eta),
        _ => next_lo_phase(config.mode, probe.phase, r, eta),
    };
    let composite = composite_fi_matrix(
        probe,
        fine,
        config.rough_samples,
        config.total_samples,
        &config.rough_angles,
    )?;
    let mut bounds = phase_bounds(r, eta, Some(&composite))?;
    if config.mode == Mode::Single {
        // squeezing is calibrated, so only the φφ information counts
        bounds.crb_phase_adaptive = Some(1.0 / composite.phase_phase);
        bounds.crb_squeezing_adaptive = None;
    }
    Ok(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_examples() {
        let p = plan_stages(&ProtocolConfig::single(0.8, 0.8)).unwrap();
        assert_eq!(p.rough, vec![(0.0, 100), (FRAC_PI_4, 100)]);
        assert_eq!(p.fine, vec![1600; 3]);
        let p = plan_stages(&ProtocolConfig::two_param(0.8)).unwrap();
        assert_eq!(p.rough.iter().map(|r| r.1).collect::<Vec<_>>(), vec![400; 3]);
        assert_eq!(p.fine, vec![6266, 6267, 6267]);
        assert_eq!(p.total(), 20_000);
        let mut c = ProtocolConfig::single(0.8, 0.8).with_budget(1001, 201);
        c.adaptive_cycles = 1;
        let p = plan_stages(&c).unwrap();
        assert_eq!(p.rough, vec![(0.0, 101), (FRAC_PI_4, 100)]);
        assert_eq!(p.fine, vec![800]);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            ProtocolConfig::single(0.8, 0.8).with_budget(100, 100),
            ProtocolConfig::single(0.8, 0.8).with_budget(100, 0),
            ProtocolConfig { calibrated_squeezing: None, ..ProtocolConfig::single(0.8, 0.8) },
            ProtocolConfig { calibrated_efficiency: Some(1.5), ..ProtocolConfig::two_param(0.8) },
            ProtocolConfig { rough_angles: vec![0.0], ..ProtocolConfig::two_param(0.8) },
            ProtocolConfig { adaptive_cycles: 0, ..ProtocolConfig::three_param() },
            ProtocolConfig { particles: 1, ..ProtocolConfig::three_param() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))), "{c:?}");
        }
    }

    #[test]
    fn feedback_examples() {
        let r_eff = effective_squeezing(0.8, 0.8).unwrap();
        let t = next_lo_phase(Mode::Single, 1.0, r_eff, 0.8);
        assert!((t.radians() - (1.0 - optimal_angle_single(r_eff))).abs() < 1e-12);
        let t = next_lo_phase(Mode::TwoParam, FRAC_PI_4, 0.63, 0.85);
        assert!((t.radians() - (FRAC_PI_4 - 0.255787625986646)).abs() < 1e-12);
        // vanishing efficiency puts the LO on the phase estimate
        let t = next_lo_phase(Mode::ThreeParam, 1.2, 0.8, 1e-30);
        assert!((t.radians() - 1.2).abs() < 1e-12);
    }

    fn small(mode: Mode) -> ProtocolConfig {
        let base = match mode {
            Mode::Single => ProtocolConfig::single(0.8, 0.8),
            Mode::TwoParam => ProtocolConfig::two_param(0.8),
            Mode::ThreeParam => ProtocolConfig::three_param(),
        };
        ProtocolConfig { particles: 2000, ..base.with_budget(2000, 300) }.with_seed(17)
    }

    #[test]
    fn runs_are_deterministic_and_replayable() {
        let probe = ProbeParams::new(1.0, 0.8, 0.8).unwrap();
        for mode in [Mode::Single, Mode::TwoParam, Mode::ThreeParam] {
            let cfg = small(mode);
            let a = run_estimation(&cfg, &mut Simulator::new(probe, cfg.seed)).unwrap();
            let b = run_estimation(&cfg, &mut Simulator::new(probe, cfg.seed)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.samples.len(), 2000);
            assert_eq!(a.feedback.len(), 3);
            assert!(a.bounds.is_some());
            let mut replay = ReplaySource::new(a.samples.clone()).with_reference(probe);
            let c = run_estimation(&cfg, &mut replay).unwrap();
            assert_eq!(c.final_posterior, a.final_posterior);
            assert_eq!(replay.remaining(), 0);
        }
    }

    #[test]
    fn replay_detects_mismatch_and_exhaustion() {
        let probe = ProbeParams::new(1.0, 0.8, 0.8).unwrap();
        let cfg = small(Mode::Single);
        let rec = run_estimation(&cfg, &mut Simulator::new(probe, 3)).unwrap();
        let mut tampered = rec.samples.clone();
        tampered[1500].theta += 1e-3;
        let err = run_estimation(&cfg, &mut ReplaySource::new(tampered)).unwrap_err();
        assert!(matches!(err, Error::ScheduleMismatch { .. }), "{err}");
        let mut short = rec.samples.clone();
        short.truncate(1900);
        let err = run_estimation(&cfg, &mut ReplaySource::new(short)).unwrap_err();
        assert!(matches!(err, Error::SourceExhausted(1900)));
    }

    #[test]
    fn checkpoints_and_rough_only() {
        let probe = ProbeParams::new(1.0, 0.8, 0.8).unwrap();
        let cfg = small(Mode::Single);
        let opts = RunOptions { checkpoints: vec![50, 300, 1000, 2000], rough_only: false };
        let rec = run_estimation_with(&cfg, &mut Simulator::new(probe, 1), &opts).unwrap();
        let at: Vec<usize> = rec.checkpoints.iter().map(|c| c.0).collect();
        assert_eq!(at, vec![50, 300, 1000, 2000]);
        assert_eq!(rec.checkpoints[3].1, rec.final_posterior);
        let opts = RunOptions { rough_only: true, ..Default::default() };
        let rec = run_estimation_with(&cfg, &mut Simulator::new(probe, 1), &opts).unwrap();
        assert_eq!(rec.samples.len(), 300);
        assert!(rec.feedback.is_empty());
    }

    #[test]
    fn protocol_bounds_are_ordered() {
        let probe = ProbeParams::new(1.0, 0.8, 0.8).unwrap();
        for cfg in [ProtocolConfig::single(0.8, 0.8), ProtocolConfig::two_param(0.8)] {
            let b = budget_bounds(&cfg, &probe, cfg.total_samples).unwrap();
            let crb = b.crb_phase_adaptive.unwrap();
            assert!(crb >= b.qcrb_phase_squeezed * (1.0 - 1e-12));
            assert!(b.qcrb_phase_squeezed < b.qcrb_phase_coherent);
        }
    }
}
