//! Campaign configuration: one JSON document per campaign.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqzadapt_core::protocol::ProtocolConfig;
use sqzadapt_core::ProbeParams;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CampaignKind {
    PhaseSweep,
    Scaling,
    Robustness,
    SqueezingSweep,
    Replay,
    Bounds,
}

impl CampaignKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PhaseSweep => "phase-sweep",
            Self::Scaling => "scaling",
            Self::Robustness => "robustness",
            Self::SqueezingSweep => "squeezing-sweep",
            Self::Replay => "replay",
            Self::Bounds => "bounds",
        }
    }

    pub fn default_repetitions(self) -> usize {
        match self {
            Self::Scaling => 50,
            _ => 10,
        }
    }
}

/// Parameters of the simulated probe. Sweeps override the swept coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    #[serde(default)]
    pub phase: Option<f64>,
    pub squeezing: f64,
    pub efficiency: f64,
}

impl Truth {
    pub fn probe(&self, phase: f64, squeezing: f64) -> Result<ProbeParams> {
        Ok(ProbeParams::new(phase, squeezing, self.efficiency)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// True phases for phase sweeps.
    #[serde(default)]
    pub phases: Vec<f64>,
    /// Sample counts at which scaling runs are read out, ascending.
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    /// Offsets of the true squeezing from the calibrated value.
    #[serde(default)]
    pub squeezing_offsets: Vec<f64>,
    /// Absolute squeezing values.
    #[serde(default)]
    pub squeezings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub kind: CampaignKind,
    /// Protocol templates; every grid point is run with each of them.
    pub protocols: Vec<ProtocolConfig>,
    pub truth: Truth,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub repetitions: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("sqzadapt-out")
}

/// Run seed for a grid point and repetition.
pub fn run_seed(base_seed: u64, point_index: usize, repetition: usize) -> u64 {
    base_seed
        .wrapping_add(point_index as u64 * 1_000_000)
        .wrapping_add(repetition as u64)
}

pub const SEED_SCHEME: &str = "base_seed + point_index * 1000000 + repetition";

impl CampaignSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions.unwrap_or(self.kind.default_repetitions())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.repetitions == Some(0) {
            return bad("repetitions must be >= 1".into());
        }
        if self.protocols.is_empty() && self.kind != CampaignKind::Bounds {
            return bad("at least one protocol template is required".into());
        }
        for (i, p) in self.protocols.iter().enumerate() {
            p.validate()
                .map_err(|e| HarnessError::Config(format!("protocols[{i}]: {e}")))?;
        }
        let t = &self.truth;
        if !(t.squeezing.is_finite() && t.squeezing >= 0.0) {
            return bad(format!("truth.squeezing must be >= 0, got {}", t.squeezing));
        }
        if !(t.efficiency.is_finite() && t.efficiency > 0.0 && t.efficiency <= 1.0) {
            return bad(format!("truth.efficiency must lie in (0, 1], got {}", t.efficiency));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let g = &self.grids;
        match self.kind {
            CampaignKind::PhaseSweep => {
                if g.phases.is_empty() || !finite(&g.phases) {
                    return bad("phase-sweep needs a non-empty, finite grids.phases".into());
                }
            }
            CampaignKind::Scaling => {
                if g.checkpoints.is_empty() || g.checkpoints.contains(&0) {
                    return bad("scaling needs non-empty, positive grids.checkpoints".into());
                }
                if !g.checkpoints.windows(2).all(|w| w[0] < w[1]) {
                    return bad("grids.checkpoints must be strictly ascending".into());
                }
                let last = *g.checkpoints.last().unwrap_or(&0);
                if let Some(p) = self.protocols.iter().find(|p| p.total_samples < last) {
                    return bad(format!(
                        "checkpoint {last} exceeds the {} budget of {}",
                        p.mode.as_str(),
                        p.total_samples
                    ));
                }
            }
            CampaignKind::Robustness => {
                if g.squeezing_offsets.is_empty() || !finite(&g.squeezing_offsets) {
                    return bad("robustness needs a non-empty grids.squeezing_offsets".into());
                }
                if let Some(d) = g.squeezing_offsets.iter().find(|d| t.squeezing + **d < 0.0) {
                    return bad(format!("offset {d} makes the true squeezing negative"));
                }
            }
            CampaignKind::SqueezingSweep | CampaignKind::Bounds => {
                if g.squeezings.is_empty() || g.squeezings.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                    return bad(format!("{} needs non-negative grids.squeezings", self.kind.as_str()));
                }
            }
            CampaignKind::Replay => {}
        }
        Ok(())
    }

    /// Phase of the probe in single-run commands.
    pub fn single_run_phase(&self) -> Result<f64> {
        self.truth
            .phase
            .or_else(|| self.grids.phases.first().copied())
            .ok_or_else(|| HarnessError::Config("truth.phase (or grids.phases) is required".into()))
    }
}
