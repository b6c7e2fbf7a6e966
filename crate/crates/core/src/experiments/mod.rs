//! Error functionals along coupled paths, increment moments and rate fits.

mod errors;
mod fit;
mod moments;
mod suite;

pub use errors::{estimate_errors, ErrorReport, Estimate, Metric, MIN_PATHS};
pub use fit::{fit_loglog, fit_rate, RateFit};
pub use moments::{moment_check, MomentFit, MomentReport, MomentRow};
pub use suite::{
    default_thresholds, run_step, run_suite, validate_ladder, Band, DominanceCheck, FitStatus, MetricOutcome,
    StepFailure, SuiteConfig, SuiteReport, EXACT_FLOOR, with_threads,
};
