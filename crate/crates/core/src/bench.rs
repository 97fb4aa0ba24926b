//! Timing `rewrite_fixpoint` on random terms.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::differential::{case_rng, random_term_of_size};
use crate::rewrite::{rewrite_fixpoint, RewriteConfig, RewriteError, RuleSet};
use crate::term::AttributeInterpreter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub nodes: usize,
    pub trials: usize,
    pub seed: u64,
    pub rewrite: RewriteConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            nodes: 10_000,
            trials: 5,
            seed: 0,
            rewrite: RewriteConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("nodes must be at least 1")]
    NoNodes,
    #[error("the signature has no nullary operator")]
    NoLeafOperator,
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub nodes: usize,
    pub elapsed: Duration,
    pub fires: u64,
    pub traversals: u64,
    pub vm_steps: u64,
    pub non_terminating: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchReport {
    pub trials: Vec<Trial>,
}

impl BenchReport {
    pub fn median(&self) -> Duration {
        let mut times: Vec<Duration> = self.trials.iter().map(|t| t.elapsed).collect();
        times.sort();
        let n = times.len();
        if n % 2 == 1 {
            times[n / 2]
        } else {
            (times[n / 2 - 1] + times[n / 2]) / 2
        }
    }

    pub fn mean(&self) -> Duration {
        let total: Duration = self.trials.iter().map(|t| t.elapsed).sum();
        total / self.trials.len() as u32
    }

    pub fn fires(&self) -> u64 {
        self.trials.iter().map(|t| t.fires).sum()
    }
}

/// Trial `i` rewrites a fresh term drawn from `case_rng(seed, i)`; term
/// generation is not timed.
pub fn run_bench(
    rs: &RuleSet,
    interp: &dyn AttributeInterpreter,
    config: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    if config.trials == 0 {
        return Err(BenchError::NoTrials);
    }
    if config.nodes == 0 {
        return Err(BenchError::NoNodes);
    }
    if !rs.signature().iter().any(|(_, a)| a == 0) {
        return Err(BenchError::NoLeafOperator);
    }
    let mut trials = Vec::with_capacity(config.trials);
    for i in 0..config.trials {
        let term = random_term_of_size(rs.signature(), config.nodes, &mut case_rng(config.seed, i as u64));
        let start = Instant::now();
        let (_, stats) = rewrite_fixpoint(rs, interp, &term, config.rewrite)?;
        trials.push(Trial {
            nodes: term.size(),
            elapsed: start.elapsed(),
            fires: stats.total_fires(),
            traversals: stats.traversals,
            vm_steps: stats.vm_steps,
            non_terminating: stats.non_terminating,
        });
    }
    Ok(BenchReport { trials })
}
