//! GP-UCB over controller parameters `z` at a fixed context `θ`, with a
//! surrogate shared across contexts.

mod acquisition;
pub(crate) mod inner;
mod log;
mod surrogate;

pub use acquisition::{maximize_posterior_mean, optimize_acquisition, ucb, AcquisitionConfig};
pub use inner::{inner_bo, InnerBoResult, ObjectiveEvaluator};
pub use log::{write_run_log, IterationRecord};
pub use surrogate::{manage_dataset, SurrogateConfig, SurrogateModel, SurrogateState};
