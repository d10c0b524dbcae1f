//! Drives seeded experiment trials and aggregates metric tables.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::apps::geometry::Rectangle;
use crate::apps::kde::kde_truth;
use crate::apps::knn::knn_truth;
use crate::apps::{
    euclidean_agents, kde_estimate, knn_query, range_count, threshold_query, ElimSettings,
    QueryMode, QUERY_COMPONENT,
};
use crate::experiment::metrics::{count_err, dist_err, l1_err, percentile, priv_sav, MetricRow};
use crate::experiment::{data, ExperimentConfig, QueryKind};
use crate::protocol::budget_schedule_next;
use crate::{Error, Result};

// Dedicated rng streams; user agents occupy the low stream ids.
const DATA_STREAM: u64 = u64::MAX - 1;
const GEOM_STREAM: u64 = u64::MAX - 2;

/// One aggregated output row, CSV-ready.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub query: String,
    pub mode: String,
    pub setting: String,
    pub metric: String,
    pub mean: f64,
    pub p25: f64,
    pub p75: f64,
    pub trials: usize,
    pub seed: u64,
}

fn mix_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed
        .wrapping_add(trial.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn middle_point(low: &[f64], high: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    low.iter()
        .zip(high)
        .map(|(&l, &h)| l + (0.25 + 0.5 * rng.random_range(0.0..1.0)) * (h - l))
        .collect()
}

/// Outcome of one multi-query run over `m` sequential range queries.
#[derive(Debug, Clone)]
pub struct MultiQueryOutcome {
    pub per_query_err: Vec<f64>,
    /// Mean over the queries with a defined relative error.
    pub mean_err: f64,
    pub priv_sav: f64,
}

/// Runs one range counting query per rectangle against the same users,
/// allocating each query's budget from the remaining per-user budgets so
/// that savings from earlier queries boost later ones.
pub fn multi_query_range(
    points: &[Vec<f64>],
    budget: f64,
    mode: QueryMode,
    elim: &ElimSettings,
    shift_threshold: bool,
    rects: &[Rectangle],
    seed: u64,
) -> Result<MultiQueryOutcome> {
    let m = rects.len();
    if m == 0 {
        return Err(Error::invalid("at least one query rectangle required"));
    }
    if !(budget > 0.0) {
        return Err(Error::invalid("budget must be positive"));
    }
    let budgets = vec![budget; points.len()];
    let mut agents = euclidean_agents(points, &budgets, seed)?;
    let mut per_query_err = Vec::with_capacity(m);
    for (l, rect) in (1..=m).zip(rects) {
        let alloc: Vec<f64> = agents
            .iter()
            .map(|a| budget_schedule_next(l, m, budget, a.remaining()))
            .collect::<Result<_>>()?;
        if alloc.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::invalid("allocation underflow in schedule"));
        }
        let truth = points.iter().filter(|p| rect.proj_slice(p) < 0.0).count();
        let result = range_count(
            &mut agents,
            QUERY_COMPONENT,
            rect,
            &alloc,
            mode,
            elim,
            shift_threshold,
        )?;
        per_query_err.push(count_err(truth, result.count));
    }
    let defined: Vec<f64> = per_query_err
        .iter()
        .copied()
        .filter(|e| !e.is_nan())
        .collect();
    let mean_err = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let spent: Vec<f64> = agents.iter().map(|a| a.consumed_total()).collect();
    Ok(MultiQueryOutcome {
        per_query_err,
        mean_err,
        priv_sav: priv_sav(&spent, &budgets),
    })
}

fn run_trial(config: &ExperimentConfig, mode: QueryMode, trial: usize) -> Result<Vec<MetricRow>> {
    let tseed = mix_seed(config.seed, trial as u64);
    let elim = ElimSettings {
        rounds: config.rounds,
        split: config.split,
        beta: config.beta,
    };
    let row = |metric: &str, value: f64, savings: f64| MetricRow {
        trial,
        metric: metric.to_string(),
        value,
        savings,
    };

    match config.query {
        QueryKind::RangeCount => {
            let mut data_rng = stream_rng(tseed, DATA_STREAM);
            let points = data::gen_points(&config.data, config.n, config.d, &mut data_rng)?;
            let mut geom_rng = stream_rng(tseed, GEOM_STREAM);
            let (low, high) = config.data.domain_box(config.d, &points);
            let center = middle_point(&low, &high, &mut geom_rng);
            let w = config.range_width.expect("validated");
            let rect = Rectangle::axis_aligned([center[0], center[1]], w, w)?;
            let truth = points.iter().filter(|p| rect.proj_slice(p) < 0.0).count();
            let rho = config.rho.expect("validated");
            let budgets = vec![rho; config.n];
            let mut agents = euclidean_agents(&points, &budgets, tseed)?;
            let result = range_count(
                &mut agents,
                QUERY_COMPONENT,
                &rect,
                &budgets,
                mode,
                &elim,
                config.shift_threshold,
            )?;
            let savings = priv_sav(&result.spent, &budgets);
            Ok(vec![
                row("count_err", count_err(truth, result.count), savings),
                row("priv_sav", savings, savings),
            ])
        }
        QueryKind::Kde => {
            let mut data_rng = stream_rng(tseed, DATA_STREAM);
            let points = data::gen_points(&config.data, config.n, config.d, &mut data_rng)?;
            let mut geom_rng = stream_rng(tseed, GEOM_STREAM);
            let (low, high) = config.data.domain_box(config.d, &points);
            let p = middle_point(&low, &high, &mut geom_rng);
            let b = config.bandwidth.expect("validated");
            let truth = kde_truth(&points, &p, b);
            let rho = config.rho.expect("validated");
            let budgets = vec![rho; config.n];
            let mut agents = euclidean_agents(&points, &budgets, tseed)?;
            let result = kde_estimate(&mut agents, QUERY_COMPONENT, &p, b, &budgets, mode, &elim)?;
            let savings = priv_sav(&result.spent, &budgets);
            Ok(vec![
                row("l1_err", l1_err(truth, result.estimate), savings),
                row("priv_sav", savings, savings),
            ])
        }
        QueryKind::Knn => {
            let mut data_rng = stream_rng(tseed, DATA_STREAM);
            let points = data::gen_points(&config.data, config.n, config.d, &mut data_rng)?;
            let mut geom_rng = stream_rng(tseed, GEOM_STREAM);
            let (low, high) = config.data.domain_box(config.d, &points);
            let p = middle_point(&low, &high, &mut geom_rng);
            let k = config.k.expect("validated");
            let truth = knn_truth(&points, &p, k);
            let rho = config.rho.expect("validated");
            let budgets = vec![rho; config.n];
            let mut agents = euclidean_agents(&points, &budgets, tseed)?;
            let result = knn_query(&mut agents, QUERY_COMPONENT, &p, k, &budgets, mode, &elim)?;
            let savings = priv_sav(&result.spent, &budgets);
            Ok(vec![
                row(
                    "dist_err",
                    dist_err(&points, &p, &result.indices, &truth),
                    savings,
                ),
                row("priv_sav", savings, savings),
            ])
        }
        QueryKind::Threshold => {
            let mut data_rng = stream_rng(tseed, DATA_STREAM);
            let records = data::gen_records(&config.data, config.n, &mut data_rng)?;
            let q = config.q.expect("validated");
            let rho = config.rho.expect("validated");
            let qualifying = records.iter().filter(|&&r| r).count();
            let truth = (qualifying as f64) < q * config.n as f64;
            // The baseline is the one-round special case of the template.
            let rounds = if mode.uses_elimination() {
                config.rounds
            } else {
                1
            };
            let result =
                threshold_query(&records, q, rho, rounds, config.beta, config.split, tseed)?;
            let savings = ((rho - result.spent) / rho).clamp(0.0, 1.0);
            Ok(vec![
                row(
                    "err",
                    if result.answer == truth { 0.0 } else { 1.0 },
                    savings,
                ),
                row("priv_sav", savings, savings),
            ])
        }
        QueryKind::MultiQuery => {
            let mut data_rng = stream_rng(tseed, DATA_STREAM);
            let points = data::gen_points(&config.data, config.n, config.d, &mut data_rng)?;
            let mut geom_rng = stream_rng(tseed, GEOM_STREAM);
            let (low, high) = config.data.domain_box(config.d, &points);
            let w = config.range_width.expect("validated");
            let rects = (0..config.m)
                .map(|_| {
                    let center = middle_point(&low, &high, &mut geom_rng);
                    Rectangle::axis_aligned([center[0], center[1]], w, w)
                })
                .collect::<Result<Vec<_>>>()?;
            let budget = config.budget.expect("validated");
            let outcome = multi_query_range(
                &points,
                budget,
                mode,
                &elim,
                config.shift_threshold,
                &rects,
                tseed,
            )?;
            Ok(vec![
                row("count_err", outcome.mean_err, outcome.priv_sav),
                row("priv_sav", outcome.priv_sav, outcome.priv_sav),
            ])
        }
    }
}

fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let mut defined: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if defined.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    defined.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    (mean, percentile(&defined, 0.25), percentile(&defined, 0.75))
}

/// Runs every (mode, trial) cell and reports mean/p25/p75 per metric.
///
/// Trials are seeded by `(seed, trial)` only, so all modes see identical
/// data and query geometry, and the output is reproducible bit-for-bit.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    config.validate()?;
    let mut collected: Vec<(QueryMode, Vec<MetricRow>)> = Vec::new();
    for &mode in &config.modes {
        let mut rows = Vec::new();
        for trial in 0..config.trials {
            rows.extend(run_trial(config, mode, trial)?);
        }
        collected.push((mode, rows));
    }

    let setting = config.setting_label();
    let mut out = Vec::new();
    let metric_names: Vec<String> = collected
        .first()
        .map(|(_, rows)| {
            let mut names = Vec::new();
            for row in rows {
                if !names.contains(&row.metric) {
                    names.push(row.metric.clone());
                }
            }
            names
        })
        .unwrap_or_default();

    for (mode, rows) in &collected {
        for name in &metric_names {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| &r.metric == name)
                .map(|r| r.value)
                .collect();
            let (mean, p25, p75) = summarize(&values);
            out.push(SummaryRow {
                query: config.query.label().to_string(),
                mode: mode.label().to_string(),
                setting: setting.clone(),
                metric: name.clone(),
                mean,
                p25,
                p75,
                trials: config.trials,
                seed: config.seed,
            });
        }
    }

    // Paired per-trial improvement of each saving mode over its baseline.
    if config.query == QueryKind::MultiQuery {
        let err_series = |want: QueryMode| -> Option<Vec<f64>> {
            collected.iter().find(|(m, _)| *m == want).map(|(_, rows)| {
                rows.iter()
                    .filter(|r| r.metric == "count_err")
                    .map(|r| r.value)
                    .collect()
            })
        };
        for (pm, bm) in [
            (QueryMode::PmPoint, QueryMode::BmPoint),
            (QueryMode::PmDist, QueryMode::BmDist),
        ] {
            let (Some(pm_errs), Some(bm_errs)) = (err_series(pm), err_series(bm)) else {
                continue;
            };
            let deltas: Vec<f64> = bm_errs.iter().zip(&pm_errs).map(|(b, p)| b - p).collect();
            let (mean, p25, p75) = summarize(&deltas);
            out.push(SummaryRow {
                query: config.query.label().to_string(),
                mode: pm.label().to_string(),
                setting: setting.clone(),
                metric: "count_err_improvement".to_string(),
                mean,
                p25,
                p75,
                trials: config.trials,
                seed: config.seed,
            });
        }
    }
    Ok(out)
}

/// Writes summary rows as RFC-4180 CSV with the fixed header
/// `query,mode,setting,metric,mean,p25,p75,trials,seed`.
pub fn write_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    for row in rows {
        csv_writer.serialize(row)?;
    }
    csv_writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::DataSource;
    use crate::protocol::SplitScheme;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            query: QueryKind::RangeCount,
            modes: vec![QueryMode::BmPoint, QueryMode::PmPoint],
            n: 60,
            d: 2,
            rho: Some(0.05),
            budget: None,
            rounds: 4,
            split: SplitScheme::Even,
            m: 1,
            range_width: Some(4.0),
            bandwidth: None,
            k: None,
            q: None,
            beta: 0.1,
            trials: 5,
            seed: 11,
            data: DataSource::UniformBox {
                low: vec![-4.0, -4.0],
                high: vec![4.0, 4.0],
            },
            shift_threshold: true,
        }
    }

    #[test]
    fn csv_output_is_reproducible() {
        let config = small_config();
        let render = || {
            let rows = run_experiment(&config).unwrap();
            let mut buffer = Vec::new();
            write_csv(&rows, &mut buffer).unwrap();
            String::from_utf8(buffer).unwrap()
        };
        let a = render();
        assert_eq!(a, render());
        let mut lines = a.lines();
        assert_eq!(
            lines.next().unwrap(),
            "query,mode,setting,metric,mean,p25,p75,trials,seed"
        );
        // 2 modes x 2 metrics
        assert_eq!(a.lines().count(), 1 + 4);
    }

    #[test]
    fn single_trial_percentiles_equal_mean() {
        let mut config = small_config();
        config.trials = 1;
        let rows = run_experiment(&config).unwrap();
        for row in rows {
            assert_eq!(row.mean, row.p25);
            assert_eq!(row.mean, row.p75);
        }
    }

    #[test]
    fn bm_modes_report_zero_savings() {
        let rows = run_experiment(&small_config()).unwrap();
        let bm_sav = rows
            .iter()
            .find(|r| r.mode == "bm_point" && r.metric == "priv_sav")
            .unwrap();
        assert_eq!(bm_sav.mean, 0.0);
        let ledger_ok = rows
            .iter()
            .filter(|r| r.metric == "priv_sav")
            .all(|r| (0.0..=1.0).contains(&r.mean));
        assert!(ledger_ok);
    }

    #[test]
    fn multi_query_with_one_query_matches_single_run() {
        let points: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 8) as f64 - 4.0, (i / 8) as f64 - 2.0])
            .collect();
        let rect = Rectangle::axis_aligned([0.0, 0.0], 4.0, 4.0).unwrap();
        let elim = ElimSettings {
            rounds: 4,
            split: SplitScheme::Even,
            beta: 0.1,
        };
        let outcome =
            multi_query_range(&points, 0.2, QueryMode::PmDist, &elim, true, &[rect], 99).unwrap();

        // Same seed, same single allocation: identical to a direct call.
        let budgets = vec![0.2; points.len()];
        let mut agents = euclidean_agents(&points, &budgets, 99).unwrap();
        let direct = range_count(
            &mut agents,
            QUERY_COMPONENT,
            &rect,
            &budgets,
            QueryMode::PmDist,
            &elim,
            true,
        )
        .unwrap();
        let truth = points.iter().filter(|p| rect.proj_slice(p) < 0.0).count();
        assert_eq!(outcome.per_query_err[0], count_err(truth, direct.count));
    }

    #[test]
    fn csv_data_source_flows_through_runner() {
        let dir = std::env::temp_dir().join(format!("geopriv-runner-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("points.csv");
        let mut body = String::from("x1,x2\n");
        for i in 0..80 {
            body.push_str(&format!("{}.5,{}.25\n", i % 9, i % 7));
        }
        std::fs::write(&path, body).unwrap();

        let mut config = small_config();
        config.n = 50;
        config.data = DataSource::Csv {
            path: path.to_str().unwrap().to_string(),
        };
        config.range_width = Some(5.0);
        let rows = run_experiment(&config).unwrap();
        assert_eq!(rows.len(), 4);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn threshold_experiment_runs() {
        let config = ExperimentConfig {
            query: QueryKind::Threshold,
            modes: vec![QueryMode::BmDist, QueryMode::PmDist],
            n: 500,
            d: 2,
            rho: Some(0.5),
            budget: None,
            rounds: 4,
            split: SplitScheme::Even,
            m: 1,
            range_width: None,
            bandwidth: None,
            k: None,
            q: Some(0.3),
            beta: 0.1,
            trials: 10,
            seed: 5,
            data: DataSource::Bernoulli { p: 0.25 },
            shift_threshold: true,
        };
        let rows = run_experiment(&config).unwrap();
        assert_eq!(rows.len(), 4);
        let pm_sav = rows
            .iter()
            .find(|r| r.mode == "pm_dist" && r.metric == "priv_sav")
            .unwrap();
        assert!(pm_sav.mean >= 0.0);
    }
}
