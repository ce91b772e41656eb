//! Exact operation tallies for score evaluations and gradient applications.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point-in-time copy of a [`Counters`] tally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSet {
    pub score_evaluations: u64,
    pub gradient_steps: u64,
}

impl std::ops::Add for CounterSet {
    type Output = CounterSet;

    fn add(self, o: CounterSet) -> CounterSet {
        CounterSet {
            score_evaluations: self.score_evaluations + o.score_evaluations,
            gradient_steps: self.gradient_steps + o.gradient_steps,
        }
    }
}

impl std::ops::Sub for CounterSet {
    type Output = CounterSet;

    fn sub(self, o: CounterSet) -> CounterSet {
        CounterSet {
            score_evaluations: self.score_evaluations - o.score_evaluations,
            gradient_steps: self.gradient_steps - o.gradient_steps,
        }
    }
}

/// Thread-safe counter pair. Every score evaluation and every applied
/// parameter block update is recorded here.
#[derive(Debug, Default)]
pub struct Counters {
    score_evaluations: AtomicU64,
    gradient_steps: AtomicU64,
}

impl Counters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scores(&self, n: u64) {
        self.score_evaluations.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_gradient_steps(&self, n: u64) {
        self.gradient_steps.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> CounterSet {
        CounterSet {
            score_evaluations: self.score_evaluations.load(Ordering::Relaxed),
            gradient_steps: self.gradient_steps.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Offline,
    Init,
    ChangeSpecific,
    General,
    Validation,
    Evaluation,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Offline,
        Phase::Init,
        Phase::ChangeSpecific,
        Phase::General,
        Phase::Validation,
        Phase::Evaluation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Offline => "offline",
            Phase::Init => "init",
            Phase::ChangeSpecific => "change_specific",
            Phase::General => "general",
            Phase::Validation => "validation",
            Phase::Evaluation => "evaluation",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPhase(s.to_owned()))
    }
}

/// One [`Counters`] per algorithm phase.
#[derive(Debug)]
pub struct PhaseCounters {
    phases: BTreeMap<Phase, Counters>,
}

impl Default for PhaseCounters {
    fn default() -> Self {
        Self {
            phases: Phase::ALL
                .into_iter()
                .map(|p| (p, Counters::new()))
                .collect(),
        }
    }
}

impl PhaseCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phase(&self, p: Phase) -> &Counters {
        &self.phases[&p]
    }

    pub fn get(&self, p: Phase) -> CounterSet {
        self.phases[&p].get()
    }

    /// Lookup by phase name, e.g. `"general"`.
    pub fn counters(&self, name: &str) -> Result<CounterSet> {
        Ok(self.get(name.parse()?))
    }

    /// Training work: every phase except validation and evaluation.
    pub fn training_total(&self) -> CounterSet {
        [
            Phase::Offline,
            Phase::Init,
            Phase::ChangeSpecific,
            Phase::General,
        ]
        .into_iter()
        .map(|p| self.get(p))
        .fold(CounterSet::default(), |a, b| a + b)
    }

    pub fn snapshot(&self) -> BTreeMap<Phase, CounterSet> {
        self.phases.iter().map(|(p, c)| (*p, c.get())).collect()
    }
}
