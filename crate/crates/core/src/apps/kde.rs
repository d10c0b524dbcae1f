//! Private Gaussian kernel density estimation at a query point.

use std::collections::BTreeSet;

use crate::apps::{check_allocations, consumed_snapshot, spent_since, ElimSettings, QueryMode};
use crate::elimination::{pie_ni, PieNiParams};
use crate::filter::Decision;
use crate::mechanism::ValidTriple;
use crate::metric::{ComponentId, Point};
use crate::protocol::{split_budget, UserAgent};
use crate::{Error, Result};

/// Privatized KDE value with its spend ledger.
#[derive(Debug, Clone)]
pub struct KdeResult {
    pub estimate: f64,
    /// True when every point was eliminated as far and `Ã = 0` was returned.
    pub early_exit: bool,
    pub spent: Vec<f64>,
}

fn len_p(p: &[f64], x: &[f64]) -> f64 {
    p.iter()
        .zip(x)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn kernel(distance: f64, bandwidth: f64) -> f64 {
    (-distance * distance / (2.0 * bandwidth * bandwidth)).exp()
}

/// Exact (non-private) KDE value, used as ground truth by experiments.
pub fn kde_truth(points: &[Vec<f64>], p: &[f64], bandwidth: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points
        .iter()
        .map(|x| kernel(len_p(p, x), bandwidth))
        .sum::<f64>()
        / points.len() as f64
}

/// Estimates `(1/n)·Σ e^{−‖x_i−p‖²/(2b²)}` under the chosen mode.
///
/// Saving modes run one-sided elimination of far points (`ν_low = −∞`,
/// `ν_high = 6b`, where the kernel is below `e^{−18}`). If everyone is
/// eliminated the estimate is 0; otherwise the survivor sum gets a bias
/// credit of `|S0|·e^{−18}/n` for the eliminated mass, omitted when it would
/// exceed the survivor sum itself.
pub fn kde_estimate(
    agents: &mut [UserAgent],
    component: ComponentId,
    p: &[f64],
    bandwidth: f64,
    rho: &[f64],
    mode: QueryMode,
    elim: &ElimSettings,
) -> Result<KdeResult> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    check_allocations(agents, rho)?;
    let n = agents.len();
    if n == 0 {
        return Ok(KdeResult {
            estimate: 0.0,
            early_exit: false,
            spent: Vec::new(),
        });
    }
    let before = consumed_snapshot(agents);
    let query = p.to_vec();
    let dim = p.len();

    let point_triple = {
        let query = query.clone();
        ValidTriple::point(move |x: &[f64]| len_p(&query, x), dim)
    };
    let dist_triple = {
        let query = query.clone();
        ValidTriple::scalar(move |u: &Point| len_p(&query, u.as_real().expect("euclidean point")))
    };

    let estimate = match mode {
        QueryMode::BmPoint | QueryMode::BmDist => {
            let triple = if mode.privatizes_points() {
                &point_triple
            } else {
                &dist_triple
            };
            let mut sum = 0.0;
            for (i, agent) in agents.iter_mut().enumerate() {
                let (flag, out) = agent.receive_triple(triple, rho[i], component)?;
                if flag == Decision::Cont {
                    let out = out.expect("CONT carries an output");
                    let distance = if mode.privatizes_points() {
                        len_p(&query, &out)
                    } else {
                        out[0]
                    };
                    sum += kernel(distance, bandwidth);
                }
            }
            sum / n as f64
        }
        QueryMode::PmPoint | QueryMode::PmDist => {
            let triple = if mode.privatizes_points() {
                &point_triple
            } else {
                &dist_triple
            };
            let params: Vec<Vec<f64>> = rho
                .iter()
                .map(|&r| split_budget(r, elim.rounds, elim.split))
                .collect::<Result<_>>()?;
            let initial: BTreeSet<usize> = (0..n).collect();
            let result = pie_ni(
                agents,
                &initial,
                component,
                triple,
                &params,
                &PieNiParams {
                    rounds: elim.rounds,
                    beta0: elim.beta0(),
                    nu_low: f64::NEG_INFINITY,
                    nu_high: 6.0 * bandwidth,
                },
            )?;
            if result.survivors.is_empty() {
                let spent = spent_since(agents, &before);
                return Ok(KdeResult {
                    estimate: 0.0,
                    early_exit: true,
                    spent,
                });
            }
            let mut sum = 0.0;
            for &i in &result.survivors {
                let series = &result.transcripts[&i];
                if series.is_empty() {
                    continue;
                }
                let mean = series.weighted_prefix_mean(series.len())?;
                let distance = if mode.privatizes_points() {
                    len_p(&query, &mean)
                } else {
                    mean[0]
                };
                sum += kernel(distance, bandwidth);
            }
            let main = sum / n as f64;
            let bias = result.s0.len() as f64 * (-18.0f64).exp() / n as f64;
            if bias > main {
                main
            } else {
                main + bias
            }
        }
    };

    Ok(KdeResult {
        estimate,
        early_exit: false,
        spent: spent_since(agents, &before),
    })
}
