//! Report rows, aggregation and the on-disk formats.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sqzadapt_core::geometry::{effective_phase_qfi, BoundSet};

use crate::error::{HarnessError, Result};
use crate::spec::{CampaignKind, CampaignSpec, SEED_SCHEME};

/// Version of the `report.csv` column layout and `meta.json` keys.
pub const SCHEMA_VERSION: u32 = 1;

/// Header of `report.csv`, in order.
pub const COLUMNS: &[&str] = &[
    "row_kind",
    "campaign",
    "mode",
    "point_index",
    "repetition",
    "seed",
    "phase_true",
    "squeezing_true",
    "efficiency_true",
    "squeezing_calibrated",
    "squeezing_offset",
    "samples",
    "phase_estimate",
    "phase_error",
    "posterior_variance",
    "estimator_variance",
    "mse",
    "normalized_variance",
    "normalized_mse",
    "squeezing_estimate",
    "squeezing_variance",
    "efficiency_estimate",
    "qcrb_phase_squeezed",
    "qcrb_phase_coherent",
    "crb_phase_adaptive",
    "crb_squeezing_adaptive",
    "mean_photon_number",
    "gain_db",
    "repetitions",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Run,
    Aggregate,
    Bounds,
}

/// One line of `report.csv`. Columns that do not apply are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub row_kind: RowKind,
    pub campaign: CampaignKind,
    pub mode: Option<String>,
    pub point_index: usize,
    pub repetition: Option<usize>,
    pub seed: Option<u64>,
    pub phase_true: Option<f64>,
    pub squeezing_true: f64,
    pub efficiency_true: f64,
    pub squeezing_calibrated: Option<f64>,
    pub squeezing_offset: Option<f64>,
    pub samples: usize,
    pub phase_estimate: Option<f64>,
    /// Estimate minus truth, wrapped into `[−π/2, π/2)`.
    pub phase_error: Option<f64>,
    pub posterior_variance: Option<f64>,
    /// Sample variance of the per-run phase errors (aggregate rows).
    pub estimator_variance: Option<f64>,
    pub mse: Option<f64>,
    /// Posterior variance times `M · F_Q` at the true squeezing and loss.
    pub normalized_variance: Option<f64>,
    pub normalized_mse: Option<f64>,
    pub squeezing_estimate: Option<f64>,
    pub squeezing_variance: Option<f64>,
    pub efficiency_estimate: Option<f64>,
    pub qcrb_phase_squeezed: f64,
    pub qcrb_phase_coherent: f64,
    pub crb_phase_adaptive: Option<f64>,
    pub crb_squeezing_adaptive: Option<f64>,
    pub mean_photon_number: f64,
    /// `10 log10(coherent bound / posterior variance)`.
    pub gain_db: Option<f64>,
    pub repetitions: usize,
}

pub fn wrap_error(estimate: f64, truth: f64) -> f64 {
    (estimate - truth + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2
}

pub fn gain_db(coherent: f64, achieved: f64) -> f64 {
    10.0 * (coherent / achieved).log10()
}

/// Columns shared by every row at one grid point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointInfo {
    pub campaign: CampaignKind,
    pub point_index: usize,
    pub phase_true: f64,
    pub squeezing_true: f64,
    pub efficiency_true: f64,
    pub squeezing_calibrated: Option<f64>,
    pub squeezing_offset: Option<f64>,
}

/// Estimates from one run at one sample count.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RunResult {
    pub repetition: usize,
    pub seed: u64,
    pub phase_estimate: f64,
    pub posterior_variance: f64,
    pub squeezing_estimate: Option<f64>,
    pub squeezing_variance: Option<f64>,
    pub efficiency_estimate: Option<f64>,
}

fn blank(point: &PointInfo, mode: &str, samples: usize, bounds: &BoundSet) -> ReportRow {
    ReportRow {
        row_kind: RowKind::Run,
        campaign: point.campaign,
        mode: Some(mode.to_string()),
        point_index: point.point_index,
        repetition: None,
        seed: None,
        phase_true: Some(point.phase_true),
        squeezing_true: point.squeezing_true,
        efficiency_true: point.efficiency_true,
        squeezing_calibrated: point.squeezing_calibrated,
        squeezing_offset: point.squeezing_offset,
        samples,
        phase_estimate: None,
        phase_error: None,
        posterior_variance: None,
        estimator_variance: None,
        mse: None,
        normalized_variance: None,
        normalized_mse: None,
        squeezing_estimate: None,
        squeezing_variance: None,
        efficiency_estimate: None,
        qcrb_phase_squeezed: bounds.qcrb_phase_squeezed,
        qcrb_phase_coherent: bounds.qcrb_phase_coherent,
        crb_phase_adaptive: bounds.crb_phase_adaptive,
        crb_squeezing_adaptive: bounds.crb_squeezing_adaptive,
        mean_photon_number: bounds.mean_photon_number,
        gain_db: None,
        repetitions: 1,
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Run rows for `runs` followed by their aggregate row. `bounds` are for
/// the budget `samples`.
pub(crate) fn point_rows(
    point: &PointInfo,
    mode: &str,
    samples: usize,
    bounds: &BoundSet,
    runs: &[RunResult],
) -> Result<Vec<ReportRow>> {
    let scale = samples as f64 * effective_phase_qfi(point.squeezing_true, point.efficiency_true)?;
    let coherent = bounds.qcrb_phase_coherent;
    let mut rows = Vec::with_capacity(runs.len() + 1);
    let mut errors = Vec::with_capacity(runs.len());
    for run in runs {
        let err = wrap_error(run.phase_estimate, point.phase_true);
        errors.push(err);
        let mut row = blank(point, mode, samples, bounds);
        row.repetition = Some(run.repetition);
        row.seed = Some(run.seed);
        row.phase_estimate = Some(run.phase_estimate);
        row.phase_error = Some(err);
        row.posterior_variance = Some(run.posterior_variance);
        row.mse = Some(err * err);
        row.normalized_variance = Some(run.posterior_variance * scale);
        row.normalized_mse = Some(err * err * scale);
        row.squeezing_estimate = run.squeezing_estimate;
        row.squeezing_variance = run.squeezing_variance;
        row.efficiency_estimate = run.efficiency_estimate;
        row.gain_db = Some(gain_db(coherent, run.posterior_variance));
        rows.push(row);
    }
    let n = runs.len();
    let mut agg = blank(point, mode, samples, bounds);
    agg.row_kind = RowKind::Aggregate;
    agg.repetitions = n;
    if n > 0 {
        let bias = mean(errors.iter().copied()).unwrap_or_default();
        let pv = mean(runs.iter().map(|r| r.posterior_variance)).unwrap_or_default();
        let mse = mean(errors.iter().map(|e| e * e)).unwrap_or_default();
        agg.phase_estimate = Some((point.phase_true + bias).rem_euclid(PI));
        agg.phase_error = Some(bias);
        agg.posterior_variance = Some(pv);
        agg.estimator_variance = (n > 1)
            .then(|| errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (n - 1) as f64);
        agg.mse = Some(mse);
        agg.normalized_variance = Some(pv * scale);
        agg.normalized_mse = Some(mse * scale);
        agg.squeezing_estimate = mean(runs.iter().filter_map(|r| r.squeezing_estimate));
        agg.squeezing_variance = mean(runs.iter().filter_map(|r| r.squeezing_variance));
        agg.efficiency_estimate = mean(runs.iter().filter_map(|r| r.efficiency_estimate));
        agg.gain_db = Some(gain_db(coherent, pv));
    }
    rows.push(agg);
    Ok(rows)
}

/// A bounds-only row (no estimation).
pub(crate) fn bounds_row(
    point_index: usize,
    squeezing: f64,
    efficiency: f64,
    mode: Option<&str>,
    samples: usize,
    bounds: &BoundSet,
) -> ReportRow {
    let point = PointInfo {
        campaign: CampaignKind::Bounds,
        point_index,
        phase_true: 0.0,
        squeezing_true: squeezing,
        efficiency_true: efficiency,
        squeezing_calibrated: None,
        squeezing_offset: None,
    };
    let mut row = blank(&point, mode.unwrap_or_default(), samples, bounds);
    row.row_kind = RowKind::Bounds;
    row.mode = mode.map(str::to_string);
    row.phase_true = None;
    row.repetitions = 0;
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub kind: CampaignKind,
    pub rows: Vec<ReportRow>,
}

impl CampaignReport {
    pub fn runs(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.row_kind == RowKind::Run)
    }

    pub fn aggregates(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.row_kind == RowKind::Aggregate)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.rows.is_empty() {
            w.write_record(COLUMNS)?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| HarnessError::io("report.csv", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

/// Sidecar describing how a report was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub campaign: CampaignKind,
    pub base_seed: u64,
    pub seed_scheme: String,
    pub repetitions: usize,
    pub threads: usize,
    pub rows: usize,
    pub started_at: String,
    pub finished_at: String,
    pub config: Option<CampaignSpec>,
}

impl Meta {
    pub fn new(command: &str, report: &CampaignReport, spec: Option<&CampaignSpec>, threads: usize) -> Self {
        let now = chrono::Utc::now().to_rfc3339();
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            campaign: report.kind,
            base_seed: spec.map_or(0, |s| s.base_seed),
            seed_scheme: SEED_SCHEME.to_string(),
            repetitions: spec.map_or(0, CampaignSpec::repetitions),
            threads,
            rows: report.rows.len(),
            started_at: now.clone(),
            finished_at: now,
            config: spec.cloned(),
        }
    }
}

/// Writes `report.csv` and `meta.json` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, report: &CampaignReport, meta: &Meta) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join("report.csv");
    let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    report.write_csv(std::io::BufWriter::new(file))?;
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use sqzadapt_core::geometry::phase_bounds;

    fn point() -> PointInfo {
        PointInfo {
            campaign: CampaignKind::PhaseSweep,
            point_index: 2,
            phase_true: 0.05,
            squeezing_true: 0.8,
            efficiency_true: 0.8,
            squeezing_calibrated: Some(0.8),
            squeezing_offset: None,
        }
    }

    fn run(rep: usize, est: f64, pv: f64) -> RunResult {
        RunResult {
            repetition: rep,
            seed: rep as u64,
            phase_estimate: est,
            posterior_variance: pv,
            squeezing_estimate: None,
            squeezing_variance: None,
            efficiency_estimate: None,
        }
    }

    #[test]
    fn aggregate_matches_run_rows() {
        let b = phase_bounds(0.8, 0.8, None).unwrap().for_budget(1000);
        // estimates straddle the 0/π seam
        let runs = [run(0, 0.06, 1e-4), run(1, PI - 0.01, 2e-4), run(2, 0.04, 3e-4)];
        let rows = point_rows(&point(), "single", 1000, &b, &runs).unwrap();
        assert_eq!(rows.len(), 4);
        let errs: Vec<f64> = rows[..3].iter().map(|r| r.phase_error.unwrap()).collect();
        assert!((errs[1] + 0.06).abs() < 1e-12);
        let agg = &rows[3];
        let m = errs.iter().sum::<f64>() / 3.0;
        let v = errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / 2.0;
        assert!((agg.estimator_variance.unwrap() - v).abs() < 1e-15);
        assert!((agg.posterior_variance.unwrap() - 2e-4).abs() < 1e-15);
        assert_eq!(agg.repetitions, 3);
        assert!(agg.crb_phase_adaptive.is_none() && agg.qcrb_phase_coherent > 0.0);
    }

    #[test]
    fn csv_has_header_and_empty_optionals() {
        let b = phase_bounds(0.8, 0.8, None).unwrap();
        let report = CampaignReport {
            kind: CampaignKind::Bounds,
            rows: vec![bounds_row(0, 0.8, 0.8, None, 1, &b)],
        };
        let text = report.to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        assert!(lines.next().unwrap().starts_with("bounds,bounds,,0,,,"));
        let empty = CampaignReport { kind: CampaignKind::Bounds, rows: vec![] };
        assert_eq!(empty.to_csv_string().unwrap().trim_end(), COLUMNS.join(","));
    }

    proptest! {
        #[test]
        fn gain_sign_matches_coherent_comparison(coh in 1e-6f64..1.0, achieved in 1e-6f64..1.0) {
            let g = gain_db(coh, achieved);
            prop_assert_eq!(g > 0.0, achieved < coh);
        }

        #[test]
        fn wrapped_error_is_small_and_consistent(truth in 0.0f64..PI, err in -1.5f64..1.5) {
            let est = (truth + err).rem_euclid(PI);
            prop_assert!((wrap_error(est, truth) - err).abs() < 1e-9);
        }
    }
}
