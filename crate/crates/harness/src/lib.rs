//! Campaign runner for squeezed-vacuum adaptive phase estimation: JSON
//! campaign configs, parallel sweeps, CSV reports with a JSON sidecar, and
//! raw-data replay.

pub mod campaign;
pub mod error;
pub mod raw;
pub mod report;
pub mod spec;

pub use campaign::{run_campaign, threads_from_env};
pub use error::{HarnessError, Result};
pub use report::{CampaignReport, Meta, ReportRow, RowKind};
pub use spec::{CampaignKind, CampaignSpec};
