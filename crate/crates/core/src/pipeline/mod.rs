//! Workflow-centric product-line assembly and execution: an application
//! request plus the available inputs resolve deterministically into an
//! ordered list of block parts (flexion, tracking, depth estimation,
//! completion, reconstruction), which then step over the frames of a
//! sequence.

mod line;
mod request;
mod run;

pub use line::{establish_product_line, Part, ProductLine};
pub use request::{Application, InputAvailability, PipelineConfig};
pub use run::{
    run_sequence, AppRequest, DatasetProvider, FlowProvider, MemoryProvider, PriorProvider,
    RunReport, StepProducts, WorldState,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unsatisfiable request: {0}")]
    UnsatisfiableRequest(String),
    #[error("{part:?} failed on frame {frame}: {message}")]
    PartFailure {
        part: Part,
        frame: usize,
        message: String,
    },
    #[error("frame ids must increase monotonically (got {got} after {last})")]
    NonMonotoneFrames { got: usize, last: usize },
    #[error(transparent)]
    Dataset(#[from] crate::geometry::DatasetError),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}
