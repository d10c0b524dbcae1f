//! Private k-nearest-neighbor selection among user points.

use std::collections::BTreeSet;

use crate::apps::{check_allocations, consumed_snapshot, spent_since, ElimSettings, QueryMode};
use crate::elimination::{pie_k, PieKParams};
use crate::filter::Decision;
use crate::mechanism::ValidTriple;
use crate::metric::{ComponentId, Point};
use crate::protocol::{split_budget, UserAgent};
use crate::{Error, Result};

/// Selected indices (ascending) with the spend ledger.
#[derive(Debug, Clone)]
pub struct KnnResult {
    pub indices: Vec<usize>,
    /// True when elimination shrank the survivor set to exactly `k` and no
    /// re-ranking was needed.
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

fn smallest_k(scored: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    let mut scored = scored;
    // Ties broken by lower user id.
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut ids: Vec<usize> = scored.into_iter().take(k).map(|(_, i)| i).collect();
    ids.sort_unstable();
    ids
}

/// Exact k nearest neighbor indices, ties by lower id.
pub fn knn_truth(points: &[Vec<f64>], p: &[f64], k: usize) -> Vec<usize> {
    smallest_k(
        points
            .iter()
            .enumerate()
            .map(|(i, x)| (len_p(p, x), i))
            .collect(),
        k,
    )
}

/// Finds the `k` users nearest to `p` under the chosen mode.
///
/// Baselines rank one privatization per user (noisy point distance or noisy
/// scalar distance). Saving modes run top-k interval elimination with
/// `φ = ‖·−p‖`; if more than `k` users survive the final round they are
/// re-ranked by the weighted prefix means of their outputs.
pub fn knn_query(
    agents: &mut [UserAgent],
    component: ComponentId,
    p: &[f64],
    k: usize,
    rho: &[f64],
    mode: QueryMode,
    elim: &ElimSettings,
) -> Result<KnnResult> {
    let n = agents.len();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "k must satisfy 1 <= k < n, got k={k}, n={n}"
        )));
    }
    check_allocations(agents, rho)?;
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
    let triple = if mode.privatizes_points() {
        &point_triple
    } else {
        &dist_triple
    };

    match mode {
        QueryMode::BmPoint | QueryMode::BmDist => {
            let mut scored = Vec::with_capacity(n);
            for (i, agent) in agents.iter_mut().enumerate() {
                let (flag, out) = agent.receive_triple(triple, rho[i], component)?;
                let score = match (flag, out) {
                    (Decision::Cont, Some(out)) => {
                        if mode.privatizes_points() {
                            len_p(&query, &out)
                        } else {
                            out[0]
                        }
                    }
                    // A silent user can never rank among the nearest.
                    _ => f64::INFINITY,
                };
                scored.push((score, i));
            }
            Ok(KnnResult {
                indices: smallest_k(scored, k),
                early_exit: false,
                spent: spent_since(agents, &before),
            })
        }
        QueryMode::PmPoint | QueryMode::PmDist => {
            let params: Vec<Vec<f64>> = rho
                .iter()
                .map(|&r| split_budget(r, elim.rounds, elim.split))
                .collect::<Result<_>>()?;
            let initial: BTreeSet<usize> = (0..n).collect();
            let result = pie_k(
                agents,
                &initial,
                component,
                triple,
                &params,
                &PieKParams {
                    k,
                    rounds: elim.rounds,
                    beta0: elim.beta0(),
                },
            )?;
            if result.survivors.len() == k {
                let spent = spent_since(agents, &before);
                return Ok(KnnResult {
                    indices: result.survivors.into_iter().collect(),
                    early_exit: true,
                    spent,
                });
            }
            let scored = result
                .survivors
                .iter()
                .map(|&i| {
                    let series = &result.transcripts[&i];
                    if series.is_empty() {
                        return Ok((f64::INFINITY, i));
                    }
                    let mean = series.weighted_prefix_mean(series.len())?;
                    let score = if mode.privatizes_points() {
                        len_p(&query, &mean)
                    } else {
                        mean[0]
                    };
                    Ok((score, i))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(KnnResult {
                indices: smallest_k(scored, k),
                early_exit: false,
                spent: spent_since(agents, &before),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::euclidean_agents;
    use crate::mechanism::lambda_bound;
    use crate::protocol::SplitScheme;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn settings() -> ElimSettings {
        ElimSettings {
            rounds: 10,
            split: SplitScheme::Doubling,
            beta: 0.1,
        }
    }

    fn run(
        points: &[Vec<f64>],
        p: &[f64],
        k: usize,
        mode: QueryMode,
        rho: f64,
        seed: u64,
    ) -> KnnResult {
        let budgets = vec![rho; points.len()];
        let mut agents = euclidean_agents(points, &budgets, seed).unwrap();
        knn_query(
            &mut agents,
            crate::apps::QUERY_COMPONENT,
            p,
            k,
            &budgets,
            mode,
            &settings(),
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_limit_finds_exact_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let points: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        let p = [0.3, -0.7];
        let truth = knn_truth(&points, &p, 4);
        for mode in QueryMode::ALL {
            let result = run(&points, &p, 4, mode, 1e11, 2);
            assert_eq!(result.indices, truth, "mode {mode}");
        }
    }

    #[test]
    fn rejects_out_of_range_k() {
        let points = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let budgets = vec![1.0; 2];
        let mut agents = euclidean_agents(&points, &budgets, 1).unwrap();
        assert!(knn_query(
            &mut agents,
            crate::apps::QUERY_COMPONENT,
            &[0.0, 0.0],
            2,
            &budgets,
            QueryMode::BmPoint,
            &settings(),
        )
        .is_err());
    }

    #[test]
    fn separated_clusters_exit_early_with_savings() {
        let mut points = vec![vec![0.0, 0.1], vec![0.1, 0.0], vec![-0.1, 0.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..27 {
            points.push(vec![
                rng.random_range(40.0..60.0),
                rng.random_range(40.0..60.0),
            ]);
        }
        let result = run(&points, &[0.0, 0.0], 3, QueryMode::PmDist, 2.0, 4);
        assert_eq!(result.indices, vec![0, 1, 2]);
        assert!(result.early_exit);
        assert!(result.spent.iter().all(|&s| s < 2.0 - 1e-12));
    }

    #[test]
    fn bm_excess_distance_bound_monte_carlo() {
        // Excess distance of selected neighbors stays within
        // sqrt(2/rho0) * lambda(d, beta/n) with frequency >= 1 - beta.
        let beta = 0.1;
        let (n, d, k, rho) = (40usize, 2usize, 3usize, 1.0);
        let trials = 400;
        for mode in [QueryMode::BmPoint, QueryMode::BmDist] {
            let lam_dim = if mode.privatizes_points() { d } else { 1 };
            let bound = (2.0f64 / rho).sqrt() * lambda_bound(lam_dim, beta / n as f64).unwrap();
            let mut violations = 0;
            let mut rng = ChaCha8Rng::seed_from_u64(50);
            for trial in 0..trials {
                let points: Vec<Vec<f64>> = (0..n)
                    .map(|_| vec![rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)])
                    .collect();
                let p = [0.0, 0.0];
                let truth = knn_truth(&points, &p, k);
                let result = run(&points, &p, k, mode, rho, 7_000 + trial);
                let mut sel: Vec<f64> = result
                    .indices
                    .iter()
                    .map(|&i| len_p(&p, &points[i]))
                    .collect();
                let mut t: Vec<f64> = truth.iter().map(|&i| len_p(&p, &points[i])).collect();
                sel.sort_by(|a, b| a.partial_cmp(b).unwrap());
                t.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let excess = sel
                    .iter()
                    .zip(&t)
                    .map(|(s, t)| s - t)
                    .fold(f64::NEG_INFINITY, f64::max);
                if excess > bound {
                    violations += 1;
                }
            }
            let freq = violations as f64 / trials as f64;
            let sigma = (beta * (1.0 - beta) / trials as f64).sqrt();
            assert!(freq <= beta + 3.0 * sigma, "mode {mode}: {freq}");
        }
    }

    #[test]
    fn heavy_noise_survivors_contain_true_set() {
        // k = n-1 with heavy noise: the true k-set stays among the
        // elimination survivors with frequency >= 1 - beta0.
        let beta0 = 0.025; // beta 0.1 quartered
        let trials = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut failures = 0;
        for trial in 0..trials {
            let n = 8;
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect();
            let p = [0.0, 0.0];
            let k = n - 1;
            let truth: BTreeSet<usize> = knn_truth(&points, &p, k).into_iter().collect();
            let rho = 0.05;
            let budgets = vec![rho; n];
            let mut agents = euclidean_agents(&points, &budgets, 8_000 + trial).unwrap();
            let triple =
                ValidTriple::scalar(move |u: &Point| len_p(&[0.0, 0.0], u.as_real().unwrap()));
            let params: Vec<Vec<f64>> = budgets
                .iter()
                .map(|&r| split_budget(r, 10, SplitScheme::Doubling).unwrap())
                .collect();
            let result = pie_k(
                &mut agents,
                &(0..n).collect(),
                crate::apps::QUERY_COMPONENT,
                &triple,
                &params,
                &PieKParams {
                    k,
                    rounds: 10,
                    beta0,
                },
            )
            .unwrap();
            if !truth.is_subset(&result.survivors) {
                failures += 1;
            }
        }
        let freq = failures as f64 / trials as f64;
        let sigma = (beta0 * (1.0 - beta0) / trials as f64).sqrt();
        assert!(freq <= beta0 + 3.0 * sigma, "containment failures {freq}");
    }
}
