//! Campaign orchestration. Independent runs go to a worker pool; results are
//! collected in task order so reports do not depend on the thread count.

use rayon::prelude::*;
use sqzadapt_core::protocol::{
    budget_bounds, run_estimation, run_estimation_with, Mode, RecordedSample, ReplaySource, RunOptions,
    Simulator,
};
use sqzadapt_core::{ProbeParams, ProtocolConfig, RunRecord};

use crate::error::{HarnessError, Result};
use crate::report::{bounds_row, point_rows, CampaignReport, PointInfo, RunResult};
use crate::spec::{run_seed, CampaignKind, CampaignSpec};

/// Environment variable selecting the worker count.
pub const THREADS_ENV: &str = "SQZADAPT_THREADS";

/// Worker count from [`THREADS_ENV`], or the available parallelism.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(HarnessError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {threads} workers: {e}")))
}

/// One simulated run.
#[derive(Debug, Clone)]
struct Task {
    point: PointInfo,
    config: ProtocolConfig,
    probe: ProbeParams,
    repetition: usize,
    seed: u64,
}

fn result_of(task: &Task, record: &RunRecord) -> RunResult {
    let p = &record.final_posterior;
    RunResult {
        repetition: task.repetition,
        seed: task.seed,
        phase_estimate: p.phase_mean,
        posterior_variance: p.phase_variance,
        squeezing_estimate: p.squeezing_mean,
        squeezing_variance: p.squeezing_variance,
        efficiency_estimate: record.efficiency_estimate,
    }
}

/// Points × protocols × repetitions, in report order.
fn expand(spec: &CampaignSpec, points: &[(PointInfo, ProbeParams)]) -> Vec<Vec<Task>> {
    let reps = spec.repetitions();
    let mut groups = Vec::new();
    for (point, probe) in points {
        for template in &spec.protocols {
            let mut config = template.clone();
            if spec.kind == CampaignKind::SqueezingSweep && config.mode == Mode::Single {
                config.calibrated_squeezing = Some(point.squeezing_true);
            }
            let group = (0..reps)
                .map(|rep| {
                    let seed = run_seed(spec.base_seed, point.point_index, rep);
                    let mut point = *point;
                    point.squeezing_calibrated = config.calibrated_squeezing;
                    Task {
                        point,
                        config: config.clone().with_seed(seed),
                        probe: *probe,
                        repetition: rep,
                        seed,
                    }
                })
                .collect();
            groups.push(group);
        }
    }
    groups
}

fn simulate(task: &Task, options: &RunOptions) -> Result<RunRecord> {
    let mut source = Simulator::new(task.probe, task.seed);
    Ok(run_estimation_with(&task.config, &mut source, options)?)
}

fn run_groups(
    groups: Vec<Vec<Task>>,
    threads: usize,
    options: &RunOptions,
) -> Result<Vec<(Vec<Task>, Vec<RunRecord>)>> {
    let flat: Vec<&Task> = groups.iter().flatten().collect();
    let records: Vec<Result<RunRecord>> =
        pool(threads)?.install(|| flat.par_iter().map(|t| simulate(t, options)).collect());
    let mut records = records.into_iter();
    let mut out = Vec::with_capacity(groups.len());
    for group in groups {
        let recs = records.by_ref().take(group.len()).collect::<Result<Vec<_>>>()?;
        out.push((group, recs));
    }
    Ok(out)
}

fn final_rows(kind: CampaignKind, groups: Vec<(Vec<Task>, Vec<RunRecord>)>) -> Result<CampaignReport> {
    let mut rows = Vec::new();
    for (tasks, records) in groups {
        let Some(first) = tasks.first() else { continue };
        let m = first.config.total_samples;
        let bounds = budget_bounds(&first.config, &first.probe, m)?;
        let results: Vec<RunResult> = tasks.iter().zip(&records).map(|(t, r)| result_of(t, r)).collect();
        rows.extend(point_rows(&first.point, first.config.mode.as_str(), m, &bounds, &results)?);
    }
    Ok(CampaignReport { kind, rows })
}

fn point(spec: &CampaignSpec, index: usize, phase: f64, squeezing: f64) -> Result<(PointInfo, ProbeParams)> {
    let info = PointInfo {
        campaign: spec.kind,
        point_index: index,
        phase_true: phase,
        squeezing_true: squeezing,
        efficiency_true: spec.truth.efficiency,
        squeezing_calibrated: None,
        squeezing_offset: None,
    };
    Ok((info, spec.truth.probe(phase, squeezing)?))
}

fn expect_kind(spec: &CampaignSpec, kind: CampaignKind) -> Result<()> {
    if spec.kind == kind {
        Ok(())
    } else {
        Err(HarnessError::Config(format!(
            "config describes a {} campaign, expected {}",
            spec.kind.as_str(),
            kind.as_str()
        )))
    }
}

/// Final-estimate statistics for each true phase in `grids.phases`.
pub fn run_phase_sweep(spec: &CampaignSpec, threads: usize) -> Result<CampaignReport> {
    expect_kind(spec, CampaignKind::PhaseSweep)?;
    let points = spec
        .grids
        .phases
        .iter()
        .enumerate()
        .map(|(i, &phi)| point(spec, i, phi, spec.truth.squeezing))
        .collect::<Result<Vec<_>>>()?;
    final_rows(spec.kind, run_groups(expand(spec, &points), threads, &RunOptions::default())?)
}

/// Posterior statistics at each sample count in `grids.checkpoints`, with
/// bounds for that many measurements.
pub fn run_scaling(spec: &CampaignSpec, threads: usize) -> Result<CampaignReport> {
    expect_kind(spec, CampaignKind::Scaling)?;
    let phase = spec.single_run_phase()?;
    let points = vec![point(spec, 0, phase, spec.truth.squeezing)?];
    let options = RunOptions {
        checkpoints: spec.grids.checkpoints.clone(),
        rough_only: false,
    };
    let mut rows = Vec::new();
    for (tasks, records) in run_groups(expand(spec, &points), threads, &options)? {
        let Some(first) = tasks.first() else { continue };
        for &m in &spec.grids.checkpoints {
            let bounds = budget_bounds(&first.config, &first.probe, m)?;
            let results: Vec<RunResult> = tasks
                .iter()
                .zip(&records)
                .map(|(t, r)| {
                    let (_, post) = r
                        .checkpoints
                        .iter()
                        .find(|c| c.0 == m)
                        .expect("every checkpoint is within the budget");
                    RunResult {
                        phase_estimate: post.phase_mean,
                        posterior_variance: post.phase_variance,
                        squeezing_estimate: post.squeezing_mean,
                        squeezing_variance: post.squeezing_variance,
                        ..result_of(t, r)
                    }
                })
                .collect();
            rows.extend(point_rows(&first.point, first.config.mode.as_str(), m, &bounds, &results)?);
        }
    }
    Ok(CampaignReport { kind: spec.kind, rows })
}

/// True squeezing moved by each of `grids.squeezing_offsets` while the
/// protocol templates keep their calibration.
pub fn run_robustness(spec: &CampaignSpec, threads: usize) -> Result<CampaignReport> {
    expect_kind(spec, CampaignKind::Robustness)?;
    let phase = spec.single_run_phase()?;
    let points = spec
        .grids
        .squeezing_offsets
        .iter()
        .enumerate()
        .map(|(i, &dr)| {
            let (mut info, probe) = point(spec, i, phase, spec.truth.squeezing + dr)?;
            info.squeezing_offset = Some(dr);
            Ok((info, probe))
        })
        .collect::<Result<Vec<_>>>()?;
    final_rows(spec.kind, run_groups(expand(spec, &points), threads, &RunOptions::default())?)
}

/// True squeezing set to each of `grids.squeezings`; single-mode templates
/// are recalibrated to the swept value.
pub fn run_squeezing_sweep(spec: &CampaignSpec, threads: usize) -> Result<CampaignReport> {
    expect_kind(spec, CampaignKind::SqueezingSweep)?;
    let phase = spec.single_run_phase()?;
    let points = spec
        .grids
        .squeezings
        .iter()
        .enumerate()
        .map(|(i, &r)| point(spec, i, phase, r))
        .collect::<Result<Vec<_>>>()?;
    final_rows(spec.kind, run_groups(expand(spec, &points), threads, &RunOptions::default())?)
}

/// Bounds for each `grids.squeezings` value at `truth.efficiency`, one row
/// per protocol template (or a single template-free row).
pub fn run_bounds(spec: &CampaignSpec) -> Result<CampaignReport> {
    expect_kind(spec, CampaignKind::Bounds)?;
    let eta = spec.truth.efficiency;
    let mut rows = Vec::new();
    for (i, &r) in spec.grids.squeezings.iter().enumerate() {
        rows.extend(bounds_rows(i, r, eta, &spec.protocols, None)?);
    }
    Ok(CampaignReport { kind: spec.kind, rows })
}

/// Bound rows at `(r, η)`. Each template contributes its composite CRB;
/// `budget` overrides the template budget (per-measurement values when no
/// template and no budget are given).
pub fn bounds_rows(
    index: usize,
    r: f64,
    eta: f64,
    templates: &[ProtocolConfig],
    budget: Option<usize>,
) -> Result<Vec<crate::report::ReportRow>> {
    let probe = ProbeParams::new(0.0, r, eta)?;
    if templates.is_empty() {
        let m = budget.unwrap_or(1);
        let b = sqzadapt_core::geometry::phase_bounds(r, eta, None)?.for_budget(m);
        return Ok(vec![bounds_row(index, r, eta, None, m, &b)]);
    }
    templates
        .iter()
        .map(|t| {
            let mut t = t.clone();
            if t.mode == Mode::Single {
                t.calibrated_squeezing = Some(r);
                t.calibrated_efficiency = Some(eta);
            }
            let m = budget.unwrap_or(t.total_samples);
            let b = budget_bounds(&t, &probe, m)?;
            Ok(bounds_row(index, r, eta, Some(t.mode.as_str()), m, &b))
        })
        .collect()
}

/// Runs whichever sweep the spec describes.
pub fn run_campaign(spec: &CampaignSpec, threads: usize) -> Result<CampaignReport> {
    match spec.kind {
        CampaignKind::PhaseSweep => run_phase_sweep(spec, threads),
        CampaignKind::Scaling => run_scaling(spec, threads),
        CampaignKind::Robustness => run_robustness(spec, threads),
        CampaignKind::SqueezingSweep => run_squeezing_sweep(spec, threads),
        CampaignKind::Bounds => run_bounds(spec),
        CampaignKind::Replay => Err(HarnessError::Config(
            "replay campaigns need recorded data; use the replay command".into(),
        )),
    }
}

/// The single run `simulate` performs: first template, `truth.phase`,
/// seed `base_seed`.
fn single_run_task(spec: &CampaignSpec) -> Result<(ProtocolConfig, ProbeParams, PointInfo)> {
    let phase = spec.single_run_phase()?;
    let (mut info, probe) = point(spec, 0, phase, spec.truth.squeezing)?;
    let config = spec
        .protocols
        .first()
        .ok_or_else(|| HarnessError::Config("no protocol template".into()))?
        .clone()
        .with_seed(spec.base_seed);
    info.squeezing_calibrated = config.calibrated_squeezing;
    Ok((config, probe, info))
}

fn single_report(
    kind: CampaignKind,
    config: &ProtocolConfig,
    probe: &ProbeParams,
    info: &PointInfo,
    record: &RunRecord,
) -> Result<CampaignReport> {
    let m = record.samples.len();
    let bounds = budget_bounds(config, probe, m)?;
    let p = &record.final_posterior;
    let result = RunResult {
        repetition: 0,
        seed: config.seed,
        phase_estimate: p.phase_mean,
        posterior_variance: p.phase_variance,
        squeezing_estimate: p.squeezing_mean,
        squeezing_variance: p.squeezing_variance,
        efficiency_estimate: record.efficiency_estimate,
    };
    let mut info = *info;
    info.campaign = kind;
    let mut rows = point_rows(&info, config.mode.as_str(), m, &bounds, &[result])?;
    rows.truncate(1);
    Ok(CampaignReport { kind, rows })
}

/// One simulated run; the record carries the raw samples.
pub fn simulate_single(spec: &CampaignSpec) -> Result<(CampaignReport, RunRecord)> {
    let (config, probe, info) = single_run_task(spec)?;
    let record = run_estimation(&config, &mut Simulator::new(probe, config.seed))?;
    let report = single_report(spec.kind, &config, &probe, &info, &record)?;
    Ok((report, record))
}

/// Re-runs the single-run protocol of `spec` on recorded samples.
pub fn replay(spec: &CampaignSpec, samples: Vec<RecordedSample>) -> Result<(CampaignReport, RunRecord)> {
    let (config, probe, info) = single_run_task(spec)?;
    let mut source = ReplaySource::new(samples).with_reference(probe);
    let record = run_estimation(&config, &mut source)?;
    if source.remaining() > 0 {
        return Err(HarnessError::Config(format!(
            "recorded data has {} samples beyond the {}-sample schedule",
            source.remaining(),
            config.total_samples
        )));
    }
    let report = single_report(CampaignKind::Replay, &config, &probe, &info, &record)?;
    Ok((report, record))
}
