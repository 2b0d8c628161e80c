//! Hypothesis checks, parameter sweeps, and report output.

pub mod bounds;
pub mod cli;
pub mod report;
pub mod sweep;

pub use bounds::{check_hypotheses, BoundsReport, SampleBox, Verdict, Verdicts};
pub use report::{to_json, Report};
pub use sweep::{csv_string, refine_transitions, sweep, write_csv, RangeSpec, SweepRow, SweepTask, Transition};
