//! Difference-in-differences estimation and specification tests for
//! heterogeneous adoption designs, where every unit is untreated at baseline
//! and receives a dose of varying intensity afterwards.
//!
//! The usual pipeline is: load a [`panel::Panel`], test for a quasi-untreated
//! group with [`qug::test_qug`], check pre-trends and linearity with
//! [`linearity`], then estimate the weighted average slope with
//! [`was::estimate_was`] or fall back to the TWFE slope in [`twfe`].

pub mod bandwidth;
pub mod error;
pub mod linalg;
pub mod linearity;
pub mod local_poly;
pub mod panel;
pub mod qug;
pub mod sim;
pub mod stats;
pub mod twfe;
pub mod was;

pub use bandwidth::{select_bandwidth, BandwidthSelection};
pub use error::{HadError, Result};
pub use local_poly::{make_kernel, Kernel, KernelSpec};
pub use panel::{difference, drop_untreated, load_panel, DifferencedSample, Panel, Schema};
pub use qug::{test_qug, QugReport};
pub use was::{estimate_mass_point, estimate_shifted, estimate_was, EstimationMode, WasEstimate};
