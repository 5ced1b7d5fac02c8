//! Scenario files, synthetic scene generation, the end-to-end pipeline and plots.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::occupancy::OccupancyError;

mod pipeline;
mod plot;
mod scenario;
mod synth;

pub use pipeline::{run_pipeline, PlanRecord, TrajectoryRecord};
pub use plot::{plot_svg, render_plot, PLOT_OVERLAYS};
pub use scenario::{
    load_scenario, save_scenario, EgoState, RasterDescriptor, Scenario, ScenarioDoc,
};
pub use synth::{generate_synthetic, ActorSpec, Archetype, GeneratorParams};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("parsing {}", path.display())]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("raster `{field}`")]
    Raster {
        field: &'static str,
        source: OccupancyError,
    },
    #[error("{stage} stage failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
    #[error("unknown archetype `{0}`")]
    UnknownArchetype(String),
}

impl HarnessError {
    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn stage(stage: &'static str, err: impl std::fmt::Display) -> Self {
        Self::Stage {
            stage,
            message: err.to_string(),
        }
    }
}
