//! Seeded experiment runner: synthetic or CSV data in, metric tables out.

pub mod data;
pub mod metrics;
pub mod runner;

use serde::{Deserialize, Serialize};

use crate::apps::QueryMode;
use crate::protocol::SplitScheme;
use crate::{Error, Result};

pub use data::{gen_points, gen_records, read_points_csv, DataSource};
pub use metrics::{count_err, dist_err, l1_err, percentile, priv_sav, MetricRow};
pub use runner::{multi_query_range, run_experiment, write_csv, MultiQueryOutcome, SummaryRow};

/// Which query family an experiment drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    RangeCount,
    Kde,
    Knn,
    Threshold,
    MultiQuery,
}

impl QueryKind {
    pub fn label(self) -> &'static str {
        match self {
            QueryKind::RangeCount => "range_count",
            QueryKind::Kde => "kde",
            QueryKind::Knn => "knn",
            QueryKind::Threshold => "threshold",
            QueryKind::MultiQuery => "multi_query",
        }
    }
}

fn default_dim() -> usize {
    2
}

fn default_rounds() -> usize {
    4
}

fn default_split() -> SplitScheme {
    SplitScheme::Even
}

fn default_m() -> usize {
    1
}

fn default_beta() -> f64 {
    0.1
}

fn default_shift() -> bool {
    true
}

/// Experiment description, loaded from a JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub query: QueryKind,
    pub modes: Vec<QueryMode>,
    /// Number of users (population size for the threshold query).
    pub n: usize,
    #[serde(default = "default_dim")]
    pub d: usize,
    /// Per-user privacy allocation for single-query experiments.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Total per-user budget `B` for multi-query experiments.
    #[serde(default)]
    pub budget: Option<f64>,
    /// Elimination rounds `c` for the saving modes.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_split")]
    pub split: SplitScheme,
    /// Number of sequential queries for multi-query experiments.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Square range side length for range counting.
    #[serde(default)]
    pub range_width: Option<f64>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    /// Threshold fraction for the central-model query.
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub trials: usize,
    pub seed: u64,
    pub data: DataSource,
    #[serde(default = "default_shift")]
    pub shift_threshold: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::config("at least one mode required"));
        }
        if self.n == 0 || self.trials == 0 || self.d == 0 || self.rounds == 0 {
            return Err(Error::config("n, d, rounds and trials must be positive"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config("beta must be in (0, 1)"));
        }
        let need_rho = |name: &str| -> Result<f64> {
            match self.rho {
                Some(r) if r > 0.0 => Ok(r),
                _ => Err(Error::config(format!("{name} requires a positive rho"))),
            }
        };
        let need_points = |name: &str| -> Result<()> {
            if matches!(self.data, DataSource::Bernoulli { .. }) {
                return Err(Error::config(format!(
                    "{name} requires a point data source"
                )));
            }
            Ok(())
        };
        let need_width = |name: &str| -> Result<f64> {
            match self.range_width {
                Some(w) if w > 0.0 => Ok(w),
                _ => Err(Error::config(format!(
                    "{name} requires a positive range_width"
                ))),
            }
        };
        match self.query {
            QueryKind::RangeCount => {
                need_rho("range_count")?;
                need_width("range_count")?;
                need_points("range_count")?;
                if self.d != 2 {
                    return Err(Error::config("range_count is planar (d = 2)"));
                }
            }
            QueryKind::Kde => {
                need_rho("kde")?;
                need_points("kde")?;
                if !matches!(self.bandwidth, Some(b) if b > 0.0) {
                    return Err(Error::config("kde requires a positive bandwidth"));
                }
            }
            QueryKind::Knn => {
                need_rho("knn")?;
                need_points("knn")?;
                match self.k {
                    Some(k) if k >= 1 && k < self.n => {}
                    _ => return Err(Error::config("knn requires 1 <= k < n")),
                }
            }
            QueryKind::Threshold => {
                need_rho("threshold")?;
                if !matches!(self.q, Some(q) if q > 0.0 && q < 1.0) {
                    return Err(Error::config("threshold requires q in (0, 1)"));
                }
                if !matches!(self.data, DataSource::Bernoulli { .. }) {
                    return Err(Error::config(
                        "threshold requires a bernoulli record source",
                    ));
                }
                if self
                    .modes
                    .iter()
                    .any(|m| matches!(m, QueryMode::BmPoint | QueryMode::PmPoint))
                {
                    return Err(Error::config(
                        "threshold privatizes a scalar count: use bm_dist/pm_dist",
                    ));
                }
            }
            QueryKind::MultiQuery => {
                if !matches!(self.budget, Some(b) if b > 0.0) {
                    return Err(Error::config("multi_query requires a positive budget"));
                }
                need_width("multi_query")?;
                need_points("multi_query")?;
                if self.d != 2 {
                    return Err(Error::config("multi_query is planar (d = 2)"));
                }
                if self.m == 0 {
                    return Err(Error::config("multi_query requires m >= 1"));
                }
            }
        }
        self.data.validate(self.d)?;
        Ok(())
    }

    /// Compact knob summary used in the output's `setting` column.
    pub fn setting_label(&self) -> String {
        let mut parts = vec![format!("n={}", self.n), format!("d={}", self.d)];
        if let Some(rho) = self.rho {
            parts.push(format!("rho={rho}"));
        }
        if let Some(budget) = self.budget {
            parts.push(format!("B={budget}"));
        }
        if self.query == QueryKind::MultiQuery {
            parts.push(format!("m={}", self.m));
        }
        if let Some(w) = self.range_width {
            parts.push(format!("w={w}"));
        }
        if let Some(b) = self.bandwidth {
            parts.push(format!("b={b}"));
        }
        if let Some(k) = self.k {
            parts.push(format!("k={k}"));
        }
        if let Some(q) = self.q {
            parts.push(format!("q={q}"));
        }
        parts.push(format!("c={}", self.rounds));
        parts.push(format!(
            "split={}",
            match self.split {
                SplitScheme::Even => "even",
                SplitScheme::Doubling => "doubling",
            }
        ));
        parts.join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "query": "range_count",
            "modes": ["bm_point", "pm_point"],
            "n": 100,
            "d": 2,
            "rho": 0.01,
            "range_width": 2.0,
            "trials": 3,
            "seed": 7,
            "data": {"kind": "uniform_box", "low": [-4.0, -4.0], "high": [4.0, 4.0]}
        })
    }

    #[test]
    fn parses_and_validates_range_config() {
        let config = ExperimentConfig::from_json(&base_json().to_string()).unwrap();
        assert_eq!(config.query, QueryKind::RangeCount);
        assert_eq!(config.rounds, 4);
        assert!(config.shift_threshold);
        assert!(config.setting_label().contains("w=2"));
    }

    #[test]
    fn rejects_missing_query_params() {
        let mut v = base_json();
        v["rho"] = serde_json::Value::Null;
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());

        let mut v = base_json();
        v["query"] = "kde".into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err()); // no bandwidth

        let mut v = base_json();
        v["query"] = "knn".into();
        v["k"] = 200.into(); // k >= n
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_modes() {
        let mut v = base_json();
        v["surprise"] = 1.into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());

        let mut v = base_json();
        v["query"] = "threshold".into();
        v["q"] = 0.3.into();
        v["data"] = serde_json::json!({"kind": "bernoulli", "p": 0.2});
        // bm_point is not a threshold mode
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        v["modes"] = serde_json::json!(["bm_dist", "pm_dist"]);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_ok());
    }
}
