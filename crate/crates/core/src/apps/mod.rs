//! Query applications: range counting, Gaussian KDE, k nearest neighbors
//! (local model, euclidean data), and a central-model threshold query.
//!
//! Every query comes in four modes. The baseline modes privatize once with
//! the full per-user allocation — either the point itself (`bm_point`) or a
//! scalar distance (`bm_dist`). The saving modes (`pm_point`, `pm_dist`)
//! split the allocation across elimination rounds and let users drop out
//! early, keeping their unspent budget.

pub mod geometry;
pub mod kde;
pub mod knn;
pub mod range_count;
pub mod threshold;

use serde::{Deserialize, Serialize};

use crate::filter::FilterSpec;
use crate::metric::{ComponentId, DataTuple, Point};
use crate::protocol::{SplitScheme, UserAgent};
use crate::{Error, Result};

pub use kde::{kde_estimate, KdeResult};
pub use knn::{knn_query, KnnResult};
pub use range_count::{range_count, RangeCountResult};
pub use threshold::{threshold_query, ThresholdResult};

/// Component index used by the application helpers.
pub const QUERY_COMPONENT: ComponentId = 1;

/// Privatization route and budget strategy of a query run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    BmPoint,
    BmDist,
    PmPoint,
    PmDist,
}

impl QueryMode {
    pub fn uses_elimination(self) -> bool {
        matches!(self, QueryMode::PmPoint | QueryMode::PmDist)
    }

    pub fn privatizes_points(self) -> bool {
        matches!(self, QueryMode::BmPoint | QueryMode::PmPoint)
    }

    pub fn label(self) -> &'static str {
        match self {
            QueryMode::BmPoint => "bm_point",
            QueryMode::BmDist => "bm_dist",
            QueryMode::PmPoint => "pm_point",
            QueryMode::PmDist => "pm_dist",
        }
    }

    pub const ALL: [QueryMode; 4] = [
        QueryMode::BmPoint,
        QueryMode::BmDist,
        QueryMode::PmPoint,
        QueryMode::PmDist,
    ];
}

impl std::fmt::Display for QueryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Elimination settings for the saving modes.
///
/// The failure budget `beta` is split `β₀ = 0.25β` for the elimination phase
/// and `β₁ = 0.75β` for the postprocessing bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElimSettings {
    /// Number of rounds `c` the per-user allocation is split into.
    pub rounds: usize,
    pub split: SplitScheme,
    pub beta: f64,
}

impl ElimSettings {
    pub fn beta0(&self) -> f64 {
        0.25 * self.beta
    }

    pub fn beta1(&self) -> f64 {
        0.75 * self.beta
    }
}

/// Builds one agent per point over a single euclidean component, each with a
/// CGP filter at the given budget.
pub fn euclidean_agents(points: &[Vec<f64>], budgets: &[f64], seed: u64) -> Result<Vec<UserAgent>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    if budgets.len() != points.len() {
        return Err(Error::invalid("one budget per point required"));
    }
    let dim = points[0].len();
    points
        .iter()
        .zip(budgets)
        .enumerate()
        .map(|(i, (p, &b))| {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            Ok(UserAgent::new(
                i,
                DataTuple::single(QUERY_COMPONENT, Point::real(p.clone())),
                FilterSpec::cgp(b)?,
                seed,
            ))
        })
        .collect()
}

pub(crate) fn check_allocations(agents: &[UserAgent], rho: &[f64]) -> Result<()> {
    if rho.len() != agents.len() {
        return Err(Error::invalid("one allocation per agent required"));
    }
    if rho.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::invalid("allocations must be positive"));
    }
    Ok(())
}

/// Consumed-budget snapshot, for computing per-call spend ledgers.
pub(crate) fn consumed_snapshot(agents: &[UserAgent]) -> Vec<f64> {
    agents.iter().map(UserAgent::consumed_total).collect()
}

pub(crate) fn spent_since(agents: &[UserAgent], before: &[f64]) -> Vec<f64> {
    agents
        .iter()
        .zip(before)
        .map(|(a, b)| a.consumed_total() - b)
        .collect()
}
