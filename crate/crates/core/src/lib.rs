//! Adaptive privacy budgeting under geo-privacy (GP) and concentrated
//! geo-privacy (CGP).
//!
//! The crate is organized around the lifecycle of a budgeted interaction
//! between an untrusted analyst and a set of users:
//!
//! * [`metric`] — metric spaces over user data, including the `dist_∞`
//!   product metric that unifies heterogeneous data components.
//! * [`mechanism`] — basic GP/CGP noise mechanisms, the Gaussian norm tail
//!   bound, variance-weighted averaging of repeated noisy estimates, and the
//!   two valid-triple constructions used by the elimination templates.
//! * [`filter`] — worst-case privacy accounting and the privacy-filter
//!   stopping rules (pure GP, CGP, approximate GP).
//! * [`protocol`] — the analyst/local-view protocol engine, per-component
//!   accounting and the multi-query budget scheduler.
//! * [`elimination`] — the two privacy-saving iterative elimination
//!   templates (threshold-based and top-k).
//! * [`apps`] — query applications built on the templates: range counting,
//!   Gaussian KDE, k nearest neighbors and a central-model threshold query.
//! * [`experiment`] — seeded experiment runner over synthetic or CSV data,
//!   emitting metric tables.
//!
//! All randomness flows through explicit [`rand_chacha::ChaCha8Rng`] handles
//! so per-user noise streams are independent, order-insensitive and
//! reproducible from a seed.

// Parameter validation deliberately uses `!(x > 0.0)` so NaN lands on the
// error path; the suggested `x <= 0.0` would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod elimination;
pub mod experiment;
pub mod filter;
pub mod mechanism;
pub mod metric;
pub mod protocol;

mod error;

pub use error::{Error, Result};

pub use apps::geometry::{eta_threshold, Rectangle};
pub use apps::{
    kde_estimate, knn_query, range_count, threshold_query, KdeResult, KnnResult, QueryMode,
    RangeCountResult, ThresholdResult,
};
pub use elimination::{pie_k, pie_ni, EliminationResultK, EliminationResultNi};
pub use filter::{
    cgp_to_approx_gp, filter_check, g_delta, gp_to_cgp, worst_case_cost, Decision, FilterKind,
    FilterSpec, FilterState,
};
pub use mechanism::{
    lambda_bound, sample_gaussian_mech, sample_laplace_gp, MechanismSpec, NoiseFamily,
    NoisyEstimateSeries, ValidTriple,
};
pub use metric::{distance, product_distance, ComponentSpec, DataTuple, MetricDescriptor, Point};
pub use protocol::{
    budget_schedule_next, split_budget, AnalystSession, ComponentRegistry, QueryDirective,
    SplitScheme, UserAgent,
};
