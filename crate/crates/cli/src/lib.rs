//! Config-driven pipeline and SVG figures behind the `lpclip` binary.

pub mod config;
pub mod pipeline;
pub mod plot;

pub use config::{Overrides, PipelineConfig};
pub use pipeline::Pipeline;
pub use plot::{emit_plot, PlotReport};
