//! Experiment drivers, configuration, report emission and the command line.

mod cli;
mod config;
mod coverage;
mod report;
mod stretch;

pub use cli::cli_main;
pub use config::{sample_field, ExperimentConfig, KEYS};
pub use coverage::{
    empty_square_counts, fit_coverage, run_coverage, CoveragePoint, CoverageReport, CoverageSeries, COVERAGE_CSV_HEADER,
};
pub use report::{
    from_json, render_svg, to_json, write_json, write_points, write_subnet_edges, write_subnet_nodes, Envelope,
    RunInfo, EDGES_CSV_HEADER, NODES_CSV_HEADER, SCHEMA_VERSION,
};
pub use stretch::{power_stretch, run_stretch, BinSummary, PairRecord, PowerStretch, StretchReport, STRETCH_CSV_HEADER};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
