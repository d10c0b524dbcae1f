//! The analyst ↔ users protocol engine.
//!
//! Each user runs a local view guarded by their privacy filter: a received
//! mechanism is either executed (CONT, with its worst-case cost recorded) or
//! refused forever (HALT). The analyst drives rounds of directives against
//! subsets of users and maintains an independent mirror of every user's
//! remaining budget, which it can reconstruct at any time from the flags it
//! has seen.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::filter::{filter_check, worst_case_cost, Decision, FilterSpec, FilterState};
use crate::mechanism::{MechanismSpec, ValidTriple};
use crate::metric::{ComponentId, ComponentSpec, DataTuple, MetricDescriptor};
use crate::{Error, Result};

/// Session-wide registry of component metric spaces. A component is
/// specified once, the first time it is queried.
#[derive(Debug, Clone, Default)]
pub struct ComponentRegistry {
    specs: BTreeMap<ComponentId, MetricDescriptor>,
}

impl ComponentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, index: ComponentId, metric: MetricDescriptor) -> Result<()> {
        if self.specs.contains_key(&index) {
            return Err(Error::DuplicateComponent(index));
        }
        self.specs.insert(index, metric);
        Ok(())
    }

    pub fn get(&self, index: ComponentId) -> Result<&MetricDescriptor> {
        self.specs
            .get(&index)
            .ok_or(Error::UnregisteredComponent(index))
    }

    pub fn specs(&self) -> Vec<ComponentSpec> {
        self.specs
            .iter()
            .map(|(&index, &metric)| ComponentSpec { index, metric })
            .collect()
    }
}

/// One user's side of the protocol: data tuple, filter, and a private noise
/// stream derived from `(base_seed, id)` so streams are independent and
/// insensitive to query order across users.
#[derive(Debug)]
pub struct UserAgent {
    id: usize,
    data: DataTuple,
    filter: FilterSpec,
    state: FilterState,
    rng: ChaCha8Rng,
}

impl UserAgent {
    pub fn new(id: usize, data: DataTuple, filter: FilterSpec, base_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(id as u64);
        UserAgent {
            id,
            data,
            filter,
            state: FilterState::new(),
            rng,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn data(&self) -> &DataTuple {
        &self.data
    }

    pub fn filter(&self) -> &FilterSpec {
        &self.filter
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn budget(&self) -> f64 {
        self.filter.budget
    }

    pub fn consumed_total(&self) -> f64 {
        self.state.consumed_total()
    }

    pub fn remaining(&self) -> f64 {
        self.filter.budget - self.state.consumed_total()
    }

    pub fn halted(&self) -> bool {
        self.state.halted()
    }

    /// The local view on receiving a mechanism for one component.
    ///
    /// Halted agents answer `(HALT, NULL)` forever. A zero-cost mechanism
    /// returns `(CONT, NULL)` without touching the ledger. Otherwise the
    /// filter decides: on CONT the cost is recorded and the mechanism runs on
    /// the targeted component; on the first HALT the agent halts permanently.
    /// A missing component is an error, not a HALT.
    pub fn local_receive(
        &mut self,
        mech: &MechanismSpec,
        component: ComponentId,
    ) -> Result<(Decision, Option<Vec<f64>>)> {
        let cost = worst_case_cost(mech);
        self.receive_costed(cost, |data, rng| {
            let point = data.get(component)?;
            mech.apply(point, rng)
        })
    }

    /// Same local view, but the round runs one privatization of a valid
    /// triple at parameter `r` (cost `r`).
    pub fn receive_triple(
        &mut self,
        triple: &ValidTriple,
        r: f64,
        component: ComponentId,
    ) -> Result<(Decision, Option<Vec<f64>>)> {
        let cost = worst_case_cost(&triple.round_mechanism(r)?);
        self.receive_costed(cost, |data, rng| {
            let point = data.get(component)?;
            triple.privatize(point, r, rng)
        })
    }

    fn receive_costed(
        &mut self,
        cost: f64,
        produce: impl FnOnce(&DataTuple, &mut ChaCha8Rng) -> Result<Vec<f64>>,
    ) -> Result<(Decision, Option<Vec<f64>>)> {
        if self.state.halted() {
            return Ok((Decision::Halt, None));
        }
        if cost == 0.0 {
            return Ok((Decision::Cont, None));
        }
        match filter_check(&self.filter, &self.state, cost)? {
            Decision::Cont => {
                let output = produce(&self.data, &mut self.rng)?;
                self.state.record(cost)?;
                Ok((Decision::Cont, Some(output)))
            }
            Decision::Halt => {
                self.state.halt();
                Ok((Decision::Halt, None))
            }
        }
    }
}

/// A round's instruction: one mechanism, one component, a target subset.
#[derive(Debug, Clone)]
pub struct QueryDirective {
    pub mechanism: MechanismSpec,
    pub component: ComponentId,
    pub targets: BTreeSet<usize>,
}

/// Accounting for a directive that touches exactly one component: under
/// `dist_∞` the charge equals the component-level worst-case cost, no matter
/// how many other components exist.
pub fn account_component_query(directive: &QueryDirective) -> f64 {
    worst_case_cost(&directive.mechanism)
}

/// One transcript record: `(round, user, flag, cost, output digest)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub round: usize,
    pub user: usize,
    pub flag: Decision,
    pub cost: f64,
    pub output: String,
}

fn output_digest(output: &Option<Vec<f64>>) -> String {
    match output {
        None => "null".to_string(),
        Some(values) => {
            let mut hasher = Sha256::new();
            for v in values {
                hasher.update(v.to_le_bytes());
            }
            let digest = hasher.finalize();
            digest[..8].iter().map(|b| format!("{b:02x}")).collect()
        }
    }
}

/// The analyst's side: owns the agents, drives rounds, mirrors budgets.
#[derive(Debug)]
pub struct AnalystSession {
    registry: ComponentRegistry,
    agents: Vec<UserAgent>,
    mirror: Vec<f64>,
    transcript: Vec<TranscriptEntry>,
    round: usize,
    rng: ChaCha8Rng,
}

impl AnalystSession {
    pub fn new(agents: Vec<UserAgent>, registry: ComponentRegistry, seed: u64) -> Self {
        let mirror = agents.iter().map(UserAgent::budget).collect();
        // Analyst coins live on a stream no user id can reach.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        AnalystSession {
            registry,
            agents,
            mirror,
            transcript: Vec::new(),
            round: 0,
            rng,
        }
    }

    pub fn register_component(
        &mut self,
        index: ComponentId,
        metric: MetricDescriptor,
    ) -> Result<()> {
        self.registry.register(index, metric)
    }

    pub fn registry(&self) -> &ComponentRegistry {
        &self.registry
    }

    pub fn agents(&self) -> &[UserAgent] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [UserAgent] {
        &mut self.agents
    }

    pub fn rounds_run(&self) -> usize {
        self.round
    }

    /// Analyst coin toss for adaptive strategy decisions.
    pub fn coin(&mut self) -> u64 {
        self.rng.random()
    }

    /// The analyst's view of user `i`'s remaining budget.
    pub fn mirror_budget(&self, user: usize) -> f64 {
        self.mirror[user]
    }

    /// Runs one round: the directive is sent to every target, non-targets
    /// implicitly receive the null mechanism. On CONT the analyst decrements
    /// its mirror of that user's budget by the worst-case cost.
    pub fn analyst_round(
        &mut self,
        directive: &QueryDirective,
    ) -> Result<Vec<(Decision, Option<Vec<f64>>)>> {
        self.registry.get(directive.component)?;
        if let Some(&bad) = directive.targets.iter().find(|&&i| i >= self.agents.len()) {
            return Err(Error::invalid(format!("unknown target user {bad}")));
        }
        self.round += 1;
        let cost = worst_case_cost(&directive.mechanism);
        let mut results = Vec::with_capacity(self.agents.len());
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let (flag, output) = if directive.targets.contains(&i) {
                agent.local_receive(&directive.mechanism, directive.component)?
            } else if agent.halted() {
                (Decision::Halt, None)
            } else {
                (Decision::Cont, None)
            };
            let spent = match flag {
                Decision::Cont if directive.targets.contains(&i) => cost,
                _ => 0.0,
            };
            if spent != 0.0 {
                self.mirror[i] -= spent;
            }
            self.transcript.push(TranscriptEntry {
                round: self.round,
                user: i,
                flag,
                cost: spent,
                output: output_digest(&output),
            });
            results.push((flag, output));
        }
        Ok(results)
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// Line-delimited JSON log of the transcript so far.
    pub fn transcript_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for entry in &self.transcript {
            out.push_str(&serde_json::to_string(entry)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Ends the session at the analyst's chosen stopping time, releasing the
    /// final transcript.
    pub fn end(self) -> Vec<TranscriptEntry> {
        self.transcript
    }
}

/// Which way a per-query allocation is split across elimination rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Even,
    Doubling,
}

/// Splits `rho` into `c` positive parts summing to `rho` exactly (the last
/// part absorbs float residue).
pub fn split_budget(rho: f64, c: usize, scheme: SplitScheme) -> Result<Vec<f64>> {
    if c < 1 {
        return Err(Error::invalid("round count must be at least 1"));
    }
    if !(rho > 0.0) {
        return Err(Error::invalid("rho must be positive"));
    }
    let mut parts = match scheme {
        SplitScheme::Even => vec![rho / c as f64; c],
        SplitScheme::Doubling => {
            let denom = 2f64.powi(c as i32) - 1.0;
            (0..c).map(|j| 2f64.powi(j as i32) / denom * rho).collect()
        }
    };
    finalize_split(&mut parts, rho)?;
    Ok(parts)
}

/// Rewrites the last part so the left-fold sum of `parts` equals `rho`
/// exactly. Walking the last part by ulps usually suffices; when round-to-
/// even ties straddle `rho` (the reachable sums then skip it), nudging the
/// penultimate part realigns the lattice.
fn finalize_split(parts: &mut [f64], rho: f64) -> Result<()> {
    let c = parts.len();
    for nudge in 0..4 {
        if nudge > 0 {
            if c < 2 {
                break;
            }
            parts[c - 2] = f64::from_bits(parts[c - 2].to_bits() - 1);
        }
        let head: f64 = parts[..c - 1].iter().sum();
        let mut last = rho - head;
        for _ in 0..4 {
            if !(last > 0.0) {
                break;
            }
            if head + last == rho {
                parts[c - 1] = last;
                return Ok(());
            }
            last = if head + last > rho {
                f64::from_bits(last.to_bits() - 1)
            } else {
                f64::from_bits(last.to_bits() + 1)
            };
        }
    }
    Err(Error::invalid("split underflow: rho too small for c parts"))
}

/// Next per-user allocation when running query `l` of `m` under a shared
/// initial budget `initial` and this user's current remaining budget.
///
/// A `start_proportion` fraction of accumulated savings is released at the
/// second query, ramping linearly to the full savings at the last.
pub fn budget_schedule_next_with(
    l: usize,
    m: usize,
    initial: f64,
    remaining: f64,
    start_proportion: f64,
) -> Result<f64> {
    if l == 0 || l > m {
        return Err(Error::IndexOutOfRange { got: l, len: m });
    }
    if !(initial >= 0.0) {
        return Err(Error::invalid("initial budget must be nonnegative"));
    }
    if !(0.0..=1.0).contains(&start_proportion) {
        return Err(Error::invalid("start proportion must be in [0, 1]"));
    }
    let gamma = if m == 1 {
        1.0
    } else {
        (l - 1) as f64 / (m - 1) as f64 * (1.0 - start_proportion) + start_proportion
    };
    let planned_remaining = (m - (l - 1)) as f64 / m as f64 * initial;
    let r = gamma * (remaining - planned_remaining) + initial / m as f64;
    Ok(r.clamp(0.0, remaining.max(0.0)))
}

/// [`budget_schedule_next_with`] at the default 3/4 starting proportion.
pub fn budget_schedule_next(l: usize, m: usize, initial: f64, remaining: f64) -> Result<f64> {
    budget_schedule_next_with(l, m, initial, remaining, 0.75)
}
