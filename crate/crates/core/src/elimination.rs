//! Iterative elimination templates.
//!
//! Both templates repeatedly privatize a 1-Lipschitz score `φ(x_i)` for a
//! shrinking set of users, maintaining per-user confidence intervals
//! `[φ̄_i ± h̄_i]` from the accumulated output prefix. Users whose intervals
//! clear a decision boundary stop participating and keep their unspent
//! per-round budget — the privacy saving that later queries can recycle.
//!
//! The non-interactive template compares intervals against fixed thresholds
//! `ν_low ≤ ν_high`; the interactive template keeps the `k` users with the
//! smallest interval right endpoints plus everyone overlapping the `k`-th
//! such interval.

use std::collections::{BTreeMap, BTreeSet};

use crate::filter::Decision;
use crate::mechanism::{NoisyEstimateSeries, ValidTriple};
use crate::metric::ComponentId;
use crate::protocol::UserAgent;
use crate::{Error, Result};

/// Settings for [`pie_ni`].
#[derive(Debug, Clone, Copy)]
pub struct PieNiParams {
    /// Maximum number of rounds `c`.
    pub rounds: usize,
    /// Total failure probability budget `β₀` for the whole run.
    pub beta0: f64,
    pub nu_low: f64,
    pub nu_high: f64,
}

/// Settings for [`pie_k`].
#[derive(Debug, Clone, Copy)]
pub struct PieKParams {
    pub k: usize,
    pub rounds: usize,
    pub beta0: f64,
}

/// Outcome of the non-interactive template.
#[derive(Debug, Clone)]
pub struct EliminationResultNi {
    /// Users classified above `ν_high`.
    pub s0: BTreeSet<usize>,
    /// Users classified below `ν_low`.
    pub s1: BTreeSet<usize>,
    /// Users still undecided when the loop stopped (including users whose
    /// own filter halted mid-run).
    pub survivors: BTreeSet<usize>,
    /// Per-user privatized output series, variable length.
    pub transcripts: BTreeMap<usize, NoisyEstimateSeries>,
    /// Per-user budget spent inside this call.
    pub spent: BTreeMap<usize, f64>,
    /// Rounds actually executed (`ĵ`).
    pub rounds_completed: usize,
}

/// Outcome of the interactive (top-k) template.
#[derive(Debug, Clone)]
pub struct EliminationResultK {
    pub survivors: BTreeSet<usize>,
    pub transcripts: BTreeMap<usize, NoisyEstimateSeries>,
    pub spent: BTreeMap<usize, f64>,
    pub rounds_completed: usize,
}

fn validate_common(
    agents: &[UserAgent],
    initial: &BTreeSet<usize>,
    round_params: &[Vec<f64>],
    rounds: usize,
    beta0: f64,
) -> Result<()> {
    if rounds < 1 {
        return Err(Error::invalid("round count must be at least 1"));
    }
    if !(beta0 > 0.0 && beta0 < 1.0) {
        return Err(Error::invalid("beta0 must be in (0, 1)"));
    }
    if round_params.len() != agents.len() {
        return Err(Error::invalid("round_params must have one entry per agent"));
    }
    for &i in initial {
        if i >= agents.len() {
            return Err(Error::invalid(format!("unknown user {i} in initial set")));
        }
        if round_params[i].len() < rounds {
            return Err(Error::invalid(format!(
                "user {i} has {} round params, need {rounds}",
                round_params[i].len()
            )));
        }
    }
    Ok(())
}

/// Private non-interactive iterative elimination.
///
/// Runs at most `rounds` rounds. Each round privatizes every remaining user
/// once, re-estimates `φ̄_i` over the full prefix, computes the width at
/// confidence `β₀/(c·|G_{j−1}|)` with the survivor count entering the round,
/// and routes users to `s1` (`φ̄ < ν_low − h̄`), `s0` (`φ̄ > ν_high + h̄`) or
/// the next round. Users whose filter halts mid-run move to `survivors`
/// undecided, charged only for their accepted rounds.
pub fn pie_ni(
    agents: &mut [UserAgent],
    initial: &BTreeSet<usize>,
    component: ComponentId,
    triple: &ValidTriple,
    round_params: &[Vec<f64>],
    params: &PieNiParams,
) -> Result<EliminationResultNi> {
    if params.nu_low > params.nu_high {
        return Err(Error::invalid("nu_low must not exceed nu_high"));
    }
    validate_common(agents, initial, round_params, params.rounds, params.beta0)?;

    let spent_before: BTreeMap<usize, f64> = initial
        .iter()
        .map(|&i| (i, agents[i].consumed_total()))
        .collect();
    let mut transcripts: BTreeMap<usize, NoisyEstimateSeries> = initial
        .iter()
        .map(|&i| (i, NoisyEstimateSeries::new()))
        .collect();
    let mut s0 = BTreeSet::new();
    let mut s1 = BTreeSet::new();
    let mut halted = BTreeSet::new();
    let mut active: Vec<usize> = initial.iter().copied().collect();
    let mut completed = 0;

    while completed < params.rounds && !active.is_empty() {
        let beta_round = params.beta0 / (params.rounds as f64 * active.len() as f64);
        let mut next = Vec::with_capacity(active.len());
        for &i in &active {
            let r = round_params[i][completed];
            let (flag, output) = agents[i].receive_triple(triple, r, component)?;
            match flag {
                Decision::Halt => {
                    halted.insert(i);
                }
                Decision::Cont => {
                    let series = transcripts.get_mut(&i).expect("initialized above");
                    series.push(output.expect("CONT carries an output"), r)?;
                    let phi_bar = triple.estimate(series);
                    let h_bar = triple.width(series.params(), beta_round);
                    if phi_bar < -h_bar + params.nu_low {
                        s1.insert(i);
                    } else if phi_bar > h_bar + params.nu_high {
                        s0.insert(i);
                    } else {
                        next.push(i);
                    }
                }
            }
        }
        active = next;
        completed += 1;
    }

    let mut survivors: BTreeSet<usize> = active.into_iter().collect();
    survivors.extend(halted);
    let spent = spent_before
        .into_iter()
        .map(|(i, before)| (i, agents[i].consumed_total() - before))
        .collect();
    Ok(EliminationResultNi {
        s0,
        s1,
        survivors,
        transcripts,
        spent,
        rounds_completed: completed,
    })
}

/// Private interactive (top-k) iterative elimination.
///
/// While more than `k` users remain (and at most `rounds` rounds): privatize
/// every remaining user, rank interval right endpoints `φ̄_i + h̄_i` (ties by
/// lower user id), keep the `k` smallest plus every user whose interval
/// overlaps the `k`-th one. With `k ≥ |G₀|` the loop never runs and the
/// initial set is returned unchanged at zero cost. A user halting mid-run
/// keeps its latest interval (or survives unconditionally if it never
/// produced one).
pub fn pie_k(
    agents: &mut [UserAgent],
    initial: &BTreeSet<usize>,
    component: ComponentId,
    triple: &ValidTriple,
    round_params: &[Vec<f64>],
    params: &PieKParams,
) -> Result<EliminationResultK> {
    if params.k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    validate_common(agents, initial, round_params, params.rounds, params.beta0)?;

    let spent_before: BTreeMap<usize, f64> = initial
        .iter()
        .map(|&i| (i, agents[i].consumed_total()))
        .collect();
    let mut transcripts: BTreeMap<usize, NoisyEstimateSeries> = initial
        .iter()
        .map(|&i| (i, NoisyEstimateSeries::new()))
        .collect();
    let mut intervals: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut active: BTreeSet<usize> = initial.clone();
    let mut completed = 0;

    while completed < params.rounds && active.len() > params.k {
        let beta_round = params.beta0 / (params.rounds as f64 * active.len() as f64);
        for &i in active.clone().iter() {
            let r = round_params[i][completed];
            let (flag, output) = agents[i].receive_triple(triple, r, component)?;
            if flag == Decision::Cont {
                let series = transcripts.get_mut(&i).expect("initialized above");
                series.push(output.expect("CONT carries an output"), r)?;
                let phi_bar = triple.estimate(series);
                let h_bar = triple.width(series.params(), beta_round);
                intervals.insert(i, (phi_bar, h_bar));
            }
        }

        // k smallest right endpoints among users with an interval.
        let mut ranked: Vec<(f64, usize)> = active
            .iter()
            .filter_map(|&i| intervals.get(&i).map(|&(p, h)| (p + h, i)))
            .collect();
        completed += 1;
        if ranked.len() <= params.k {
            continue;
        }
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let (tk_phi, tk_h) = intervals[&ranked[params.k - 1].1];
        let (tk_lo, tk_hi) = (tk_phi - tk_h, tk_phi + tk_h);

        let mut next: BTreeSet<usize> = ranked[..params.k].iter().map(|&(_, i)| i).collect();
        for &i in &active {
            if next.contains(&i) {
                continue;
            }
            match intervals.get(&i) {
                // No interval yet (halted before producing one): undecided.
                None => {
                    next.insert(i);
                }
                Some(&(p, h)) => {
                    if (p - h).max(tk_lo) <= (p + h).min(tk_hi) {
                        next.insert(i);
                    }
                }
            }
        }
        active = next;
    }

    let spent = spent_before
        .into_iter()
        .map(|(i, before)| (i, agents[i].consumed_total() - before))
        .collect();
    Ok(EliminationResultK {
        survivors: active,
        transcripts,
        spent,
        rounds_completed: completed,
    })
}
