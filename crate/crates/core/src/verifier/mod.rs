//! Liquidity and LTL model checking over the abstract semantics.
//!
//! Both checks run once per secret-length region (see [`regions`]) on the
//! explicit graph of configurations reachable through guaranteed and
//! adversarial moves. Regions are independent and checked in parallel; the
//! reported witness always comes from the first failing region in sampling
//! order.

pub mod buchi;
pub mod graph;
pub mod liquidity;
pub mod ltl;
pub mod modelcheck;
pub mod regions;
pub mod strategy;

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{ContractSpec, Satoshi};
use crate::semantics::{Configuration, IllegalMove, LengthAssignment, Lts, Move, TimePartition};

pub use graph::{reachable_states, StateGraph};
pub use ltl::Formula;
pub use regions::sample_secret_regions;
pub use strategy::{classify_move, Strategies, Strategy, StrategyError};

pub const DEFAULT_STATE_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Exploration stops with an error once a region has this many states.
    pub state_limit: usize,
    /// Forbid delays while some other guaranteed move is enabled, so that
    /// guaranteed moves happen before the next deadline passes.
    pub urgent: bool,
    /// Liquidity target: total active balance at most this amount.
    pub epsilon: Satoshi,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            state_limit: DEFAULT_STATE_LIMIT,
            urgent: false,
            epsilon: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("state limit of {limit} configurations exceeded")]
    StateLimitExceeded { limit: usize },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

/// An ultimately periodic trace `states[..loop_start] (states[loop_start..])^ω`.
///
/// `moves[i]` leads from `states[i]` to `states[i + 1]`, or back to
/// `states[loop_start]` for the last index. `None` is a stuttering step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lasso {
    pub states: Vec<Configuration>,
    pub moves: Vec<Option<Move>>,
    pub loop_start: usize,
}

impl Lasso {
    /// Re-executes every step with [`Lts::apply_move`].
    pub fn replay(&self, lts: &Lts<'_>) -> Result<(), ReplayError> {
        if self.states.first() != Some(&lts.initial()) {
            return Err(ReplayError::WrongInitialState);
        }
        let n = self.states.len();
        for (i, mv) in self.moves.iter().enumerate() {
            let to = if i + 1 < n { i + 1 } else { self.loop_start };
            let next = match mv {
                None => self.states[i].clone(),
                Some(m) => lts.apply_move(&self.states[i], m)?,
            };
            if next != self.states[to] {
                return Err(ReplayError::Diverged { step: i });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("witness does not start in the initial configuration")]
    WrongInitialState,
    #[error(transparent)]
    Illegal(#[from] IllegalMove),
    #[error("step {step} does not reach the recorded configuration")]
    Diverged { step: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// A reachable configuration from which no guaranteed path liquidates.
    Frozen {
        lengths: LengthAssignment,
        trace: Vec<Move>,
        state: Configuration,
    },
    /// A fair trace violating the formula.
    Lasso {
        lengths: LengthAssignment,
        lasso: Lasso,
    },
}

impl Witness {
    pub fn lengths(&self) -> &LengthAssignment {
        match self {
            Witness::Frozen { lengths, .. } | Witness::Lasso { lengths, .. } => lengths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub states_explored: usize,
    pub regions: usize,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationResult {
    pub verdict: bool,
    pub witness: Option<Witness>,
    pub stats: Stats,
}

/// The transition system checked for one region: the contract deadlines are
/// refined by the heights strategies wait for.
pub fn lts_for<'a>(
    spec: &'a ContractSpec,
    strategies: &Strategies,
    lengths: LengthAssignment,
) -> Lts<'a> {
    let partition = TimePartition::new(
        spec.deadlines
            .iter()
            .copied()
            .chain(strategies.time_thresholds()),
    );
    Lts::with_partition(spec, lengths, partition)
}

fn per_region<F>(
    spec: &ContractSpec,
    strategies: &Strategies,
    options: &VerifyOptions,
    check: F,
) -> Result<VerificationResult, VerifyError>
where
    F: Fn(&Lts<'_>, &StateGraph) -> Option<Witness> + Sync,
{
    let start = Instant::now();
    strategies.validate(spec)?;
    let regions = sample_secret_regions(spec);
    let results: Vec<Result<(usize, Option<Witness>), VerifyError>> = regions
        .par_iter()
        .map(|lengths| {
            let lts = lts_for(spec, strategies, lengths.clone());
            let g = reachable_states(&lts, strategies, options)?;
            Ok((g.len(), check(&lts, &g)))
        })
        .collect();
    let mut states_explored = 0;
    let mut witness = None;
    for r in results {
        let (n, w) = r?;
        states_explored += n;
        if witness.is_none() {
            witness = w;
        }
    }
    Ok(VerificationResult {
        verdict: witness.is_none(),
        witness,
        stats: Stats {
            states_explored,
            regions: regions.len(),
            wall_time: start.elapsed().as_secs_f64(),
        },
    })
}

/// Checks that from every reachable configuration the guaranteed moves alone
/// can bring the active balance down to `options.epsilon`.
pub fn check_liquidity(
    spec: &ContractSpec,
    strategies: &Strategies,
    options: &VerifyOptions,
) -> Result<VerificationResult, VerifyError> {
    per_region(spec, strategies, options, |lts, g| {
        liquidity::frozen_state(g, options.epsilon).map(|s| Witness::Frozen {
            lengths: lts.lengths().clone(),
            trace: g.trace_to(s),
            state: g.states[s].clone(),
        })
    })
}

/// Checks `formula` on every fair maximal trace.
pub fn check_ltl(
    spec: &ContractSpec,
    strategies: &Strategies,
    formula: &Formula,
    options: &VerifyOptions,
) -> Result<VerificationResult, VerifyError> {
    let negated = buchi::Buchi::from_formula(&Formula::not(formula.clone()));
    per_region(spec, strategies, options, |lts, g| {
        modelcheck::find_counterexample(g, &negated).map(|lasso| {
            debug_assert!(!formula.holds_on_lasso(&lasso.states, lasso.loop_start));
            Witness::Lasso {
                lengths: lts.lengths().clone(),
                lasso,
            }
        })
    })
}
