//! Private range counting over a planar rectangle.

use std::collections::BTreeSet;

use crate::apps::geometry::{eta_for_rho, Rectangle};
use crate::apps::{check_allocations, consumed_snapshot, spent_since, ElimSettings, QueryMode};
use crate::elimination::{pie_ni, PieNiParams};
use crate::filter::Decision;
use crate::mechanism::ValidTriple;
use crate::metric::{ComponentId, Point};
use crate::protocol::{split_budget, UserAgent};
use crate::Result;

/// Privatized count with its spend ledger.
#[derive(Debug, Clone)]
pub struct RangeCountResult {
    pub count: usize,
    /// True when elimination classified every user before the last round and
    /// the early path `C̃ = |S1|` was taken.
    pub early_exit: bool,
    pub spent: Vec<f64>,
}

fn point_triple(rect: Rectangle, dim: usize) -> ValidTriple {
    ValidTriple::point(move |x: &[f64]| rect.proj_slice(x), dim)
}

fn dist_triple(rect: Rectangle) -> ValidTriple {
    ValidTriple::scalar(move |p: &Point| rect.proj_slice(p.as_real().expect("euclidean point")))
}

/// Counts points inside the rectangle under the chosen privatization mode.
///
/// Baselines privatize once with the whole allocation: `bm_point` counts
/// privatized points with negative signed distance; `bm_dist` counts noisy
/// distances below the per-user threshold `η_i` (or 0 with the shift
/// disabled). Saving modes run threshold elimination at `ν_low = ν_high = 0`
/// and, if survivors remain after the last round, classify them by the
/// weighted prefix mean of their outputs.
pub fn range_count(
    agents: &mut [UserAgent],
    component: ComponentId,
    rect: &Rectangle,
    rho: &[f64],
    mode: QueryMode,
    elim: &ElimSettings,
    shift_threshold: bool,
) -> Result<RangeCountResult> {
    check_allocations(agents, rho)?;
    if agents.is_empty() {
        return Ok(RangeCountResult {
            count: 0,
            early_exit: false,
            spent: Vec::new(),
        });
    }
    let before = consumed_snapshot(agents);
    let dim = 2;
    let eta = |r: f64| -> Result<f64> {
        if shift_threshold {
            eta_for_rho(rect, r)
        } else {
            Ok(0.0)
        }
    };

    let count = match mode {
        QueryMode::BmPoint => {
            let triple = point_triple(*rect, dim);
            let mut count = 0;
            for (i, agent) in agents.iter_mut().enumerate() {
                let (flag, out) = agent.receive_triple(&triple, rho[i], component)?;
                if flag == Decision::Cont {
                    let noisy = out.expect("CONT carries an output");
                    if rect.proj_slice(&noisy) < 0.0 {
                        count += 1;
                    }
                }
            }
            count
        }
        QueryMode::BmDist => {
            let triple = dist_triple(*rect);
            let mut count = 0;
            for (i, agent) in agents.iter_mut().enumerate() {
                let (flag, out) = agent.receive_triple(&triple, rho[i], component)?;
                if flag == Decision::Cont && out.expect("CONT carries an output")[0] < eta(rho[i])?
                {
                    count += 1;
                }
            }
            count
        }
        QueryMode::PmPoint | QueryMode::PmDist => {
            let triple = if mode.privatizes_points() {
                point_triple(*rect, dim)
            } else {
                dist_triple(*rect)
            };
            let params: Vec<Vec<f64>> = rho
                .iter()
                .map(|&r| split_budget(r, elim.rounds, elim.split))
                .collect::<Result<_>>()?;
            let initial: BTreeSet<usize> = (0..agents.len()).collect();
            let result = pie_ni(
                agents,
                &initial,
                component,
                &triple,
                &params,
                &PieNiParams {
                    rounds: elim.rounds,
                    beta0: elim.beta0(),
                    nu_low: 0.0,
                    nu_high: 0.0,
                },
            )?;
            if result.survivors.is_empty() {
                let spent = spent_since(agents, &before);
                return Ok(RangeCountResult {
                    count: result.s1.len(),
                    early_exit: true,
                    spent,
                });
            }
            let mut count = result.s1.len();
            for &i in &result.survivors {
                let series = &result.transcripts[&i];
                if series.is_empty() {
                    continue; // halted before any output: counted as outside
                }
                let mean = series.weighted_prefix_mean(series.len())?;
                let inside = if mode.privatizes_points() {
                    rect.proj_slice(&mean) < 0.0
                } else {
                    mean[0] < eta(rho[i])?
                };
                if inside {
                    count += 1;
                }
            }
            count
        }
    };

    Ok(RangeCountResult {
        count,
        early_exit: false,
        spent: spent_since(agents, &before),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::euclidean_agents;
    use crate::protocol::SplitScheme;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn settings(rounds: usize) -> ElimSettings {
        ElimSettings {
            rounds,
            split: SplitScheme::Even,
            beta: 0.1,
        }
    }

    fn square(w: f64) -> Rectangle {
        Rectangle::axis_aligned([0.0, 0.0], w, w).unwrap()
    }

    fn run(
        points: &[Vec<f64>],
        rect: &Rectangle,
        mode: QueryMode,
        rho: f64,
        rounds: usize,
        seed: u64,
    ) -> RangeCountResult {
        let budgets = vec![rho; points.len()];
        let mut agents = euclidean_agents(points, &budgets, seed).unwrap();
        range_count(
            &mut agents,
            crate::apps::QUERY_COMPONENT,
            rect,
            &budgets,
            mode,
            &settings(rounds),
            true,
        )
        .unwrap()
    }

    fn true_count(points: &[Vec<f64>], rect: &Rectangle) -> usize {
        points.iter().filter(|p| rect.proj_slice(p) < 0.0).count()
    }

    #[test]
    fn zero_noise_limit_recovers_exact_count_in_all_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let points: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let rect = square(3.0);
        let truth = true_count(&points, &rect);
        for mode in QueryMode::ALL {
            let result = run(&points, &rect, mode, 1e11, 4, 2);
            assert_eq!(result.count, truth, "mode {mode}");
        }
    }

    #[test]
    fn empty_input_yields_zero() {
        let mut agents = Vec::new();
        let result = range_count(
            &mut agents,
            1,
            &square(1.0),
            &[],
            QueryMode::BmPoint,
            &settings(4),
            true,
        )
        .unwrap();
        assert_eq!(result.count, 0);
    }

    #[test]
    fn centered_points_early_exit_with_savings() {
        // Every point at the center: strongly inside, eliminated quickly.
        let points = vec![vec![0.0, 0.0]; 30];
        let rect = square(10.0);
        for mode in [QueryMode::PmPoint, QueryMode::PmDist] {
            let result = run(&points, &rect, mode, 4.0, 8, 3);
            assert_eq!(result.count, 30, "mode {mode}");
            assert!(result.early_exit, "mode {mode}");
            // Savings: nobody paid the full allocation.
            assert!(result.spent.iter().all(|&s| s < 4.0 - 1e-12));
        }
    }

    #[test]
    fn spend_ledger_bounded_by_allocation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let points: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        let rect = square(4.0);
        for mode in QueryMode::ALL {
            let result = run(&points, &rect, mode, 0.8, 4, 5);
            assert!(
                result.spent.iter().all(|&s| s <= 0.8 + 1e-12),
                "mode {mode}"
            );
            if !mode.uses_elimination() {
                assert!(result.spent.iter().all(|&s| (s - 0.8).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn zero_elimination_spends_exactly_like_baseline() {
        // All points exactly on the boundary: intervals always straddle the
        // thresholds, so elimination never fires and the full allocation is
        // consumed, with the final estimate using the full weighted mean.
        let points = vec![vec![1.0, 0.0]; 10]; // on the square of width 2
        let rect = square(2.0);
        let rho = 0.5;
        let result = run(&points, &rect, QueryMode::PmDist, rho, 4, 6);
        assert!(!result.early_exit);
        for &s in &result.spent {
            assert_eq!(s, rho, "survivors must consume the allocation exactly");
        }
    }

    #[test]
    fn pm_final_estimator_matches_bm_distribution() {
        // Boundary data keeps all survivors; the PM weighted mean then has
        // the same N(proj, 1/(2 rho)) law as the single BM privatization.
        let rect = square(2.0);
        let rho = 0.5;
        let trials = 4_000;
        let mut pm_means = Vec::with_capacity(trials);
        let mut bm_draws = Vec::with_capacity(trials);
        for t in 0..trials as u64 {
            let points = vec![vec![1.0, 0.0]];
            let budgets = vec![rho];
            let mut agents = euclidean_agents(&points, &budgets, 100 + t).unwrap();
            let triple = dist_triple(rect);
            let params = vec![split_budget(rho, 4, SplitScheme::Even).unwrap()];
            let result = pie_ni(
                &mut agents,
                &(0..1).collect(),
                crate::apps::QUERY_COMPONENT,
                &triple,
                &params,
                &PieNiParams {
                    rounds: 4,
                    beta0: 0.025,
                    nu_low: f64::NEG_INFINITY,
                    nu_high: f64::INFINITY,
                },
            )
            .unwrap();
            let series = &result.transcripts[&0];
            pm_means.push(series.weighted_prefix_mean(series.len()).unwrap()[0]);

            let mut agents = euclidean_agents(&points, &budgets, 9_000_000 + t).unwrap();
            let (_, out) = agents[0]
                .receive_triple(&triple, rho, crate::apps::QUERY_COMPONENT)
                .unwrap();
            bm_draws.push(out.unwrap()[0]);
        }
        let var = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
        };
        let (vp, vb) = (var(&pm_means), var(&bm_draws));
        let expected = 1.0 / (2.0 * rho);
        assert!((vp - expected).abs() / expected < 0.1, "pm var {vp}");
        assert!((vb - expected).abs() / expected < 0.1, "bm var {vb}");
    }
}
