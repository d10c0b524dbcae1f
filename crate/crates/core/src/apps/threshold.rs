//! Central-model threshold query: does the qualifying-record count fall
//! below a fraction `q` of the population?
//!
//! A single curator holds the record multiset under the Hamming metric; the
//! qualifying count has sensitivity 1, so the scalar triple applies as-is.

use std::collections::BTreeSet;

use crate::elimination::{pie_ni, PieNiParams};
use crate::filter::FilterSpec;
use crate::mechanism::ValidTriple;
use crate::metric::{DataTuple, Point};
use crate::protocol::{split_budget, SplitScheme, UserAgent};
use crate::{Error, Result};

const CURATOR_COMPONENT: u32 = 1;

/// Answer to the threshold query with its spend ledger.
#[derive(Debug, Clone)]
pub struct ThresholdResult {
    /// True means "yes, fewer than `q·N` records qualify".
    pub answer: bool,
    /// True when elimination settled the answer before exhausting its rounds.
    pub early_exit: bool,
    pub spent: f64,
}

/// Runs the threshold query over qualifying flags (one per record).
///
/// The curator's count is repeatedly privatized against the two-sided
/// boundary `ν_low = ν_high = q·N`; landing below the boundary means yes.
/// If the interval never clears the boundary within `rounds` rounds, the
/// fallback compares the weighted mean of all estimates against `q·N`,
/// spending the same total budget as the single-shot baseline.
pub fn threshold_query(
    records: &[bool],
    q: f64,
    rho: f64,
    rounds: usize,
    beta0: f64,
    split: SplitScheme,
    seed: u64,
) -> Result<ThresholdResult> {
    if records.is_empty() {
        return Err(Error::invalid("dataset must be nonempty"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid("q must be in (0, 1)"));
    }
    if !(rho > 0.0) {
        return Err(Error::invalid("rho must be positive"));
    }
    let population = records.len() as f64;
    let boundary = q * population;

    let flags: Vec<u64> = records.iter().map(|&b| u64::from(b)).collect();
    let data = DataTuple::single(CURATOR_COMPONENT, Point::Records(flags));
    let mut agents = vec![UserAgent::new(0, data, FilterSpec::cgp(rho)?, seed)];

    // Qualifying-record count: 1-Lipschitz under the Hamming metric.
    let triple = ValidTriple::scalar(|p: &Point| match p {
        Point::Records(records) => records.iter().filter(|&&r| r == 1).count() as f64,
        _ => unreachable!("curator data is a record multiset"),
    });

    let params = vec![split_budget(rho, rounds, split)?];
    let initial: BTreeSet<usize> = [0].into_iter().collect();
    let result = pie_ni(
        &mut agents,
        &initial,
        CURATOR_COMPONENT,
        &triple,
        &params,
        &PieNiParams {
            rounds,
            beta0,
            nu_low: boundary,
            nu_high: boundary,
        },
    )?;
    let spent = result.spent[&0];

    if result.survivors.is_empty() {
        // s1 collects the low side (count below q*N), which is the yes case.
        return Ok(ThresholdResult {
            answer: result.s1.contains(&0),
            early_exit: true,
            spent,
        });
    }
    let series = &result.transcripts[&0];
    let mean = series.weighted_prefix_mean(series.len())?[0];
    Ok(ThresholdResult {
        answer: mean < boundary,
        early_exit: false,
        spent,
    })
}
