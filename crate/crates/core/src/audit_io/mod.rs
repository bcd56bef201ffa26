//! File formats, bundled datasets, rendering and the end-to-end audit.

pub mod csv_input;
pub mod fixtures;
pub mod format;
pub mod render;
pub mod report;

pub use csv_input::{load_counts_csv, load_estimates_csv, read_counts, read_estimates};
pub use format::sig6;
pub use render::{render_plot, PlotFormat, RenderOptions};
pub use report::{audit, run_audit, write_plots, AuditOptions, AuditOutput, AuditReport};
