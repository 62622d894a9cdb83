//! Statistical verification harness and parameter sweeps.

pub mod bounds;
pub mod contraction;
pub mod expansion;
pub mod hypergeom;
pub mod report;
pub mod stats;
pub mod suites;
pub mod sweep;
pub mod uniformity;

pub use bounds::TheoryBounds;
pub use contraction::{check_contraction, ContractionConfig, ContractionReport};
pub use expansion::{check_expansion_event, check_half_split, measure_expansion, ExpansionStats};
pub use hypergeom::{hypergeom_mean, hypergeom_pmf, hypergeom_sample};
pub use report::CheckRecord;
pub use suites::{Suite, SuiteConfig};
pub use sweep::{run_sweep, SweepConfig, SweepRow};
pub use uniformity::{check_uniformity, UniformityReport};
