//! Exhaustive traversal of domain spaces with constraint filtering.
//!
//! Enumeration order is deterministic: slots in declaration order, and a
//! canonical order within each slot kind (lexicographic index permutations,
//! odometer over assignment keys, lexicographic combinations, declared scalar
//! order). Pruned and unpruned search visit solutions in the same order.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Arrangement, DomainError, DomainSpec, SlotKind, SlotValue, DEFAULT_DOMAIN_CAP,
};
use crate::dsl::{eval, TypedExpr};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Refuse domains with more candidates than this.
    pub cap: u64,
    /// At most this many solutions are stored as samples; counting continues.
    pub sample_cap: usize,
    /// Wall budget; on expiry the result is returned with `exhausted: false`.
    pub timeout: Duration,
    /// Early constraint rejection during slot-by-slot construction.
    pub pruned: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            cap: DEFAULT_DOMAIN_CAP,
            sample_cap: 1000,
            timeout: Duration::from_secs(10),
            pruned: true,
        }
    }
}

/// The outcome of a traversal: how many arrangements satisfy the constraint
/// conjunction, out of how many candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSpace {
    pub solution_count: u64,
    pub domain_count: u64,
    pub samples: Vec<Arrangement>,
    /// True when the whole domain was traversed; otherwise `solution_count`
    /// is a lower bound.
    pub exhausted: bool,
}

impl SolutionSpace {
    /// Exact solution-space ratio; the theoretical random-guess probability.
    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.solution_count, self.domain_count)
    }
}

/// Streams every arrangement of the domain exactly once.
pub fn enumerate(domain: &DomainSpec) -> Result<Enumerator<'_>, DomainError> {
    domain.validate()?;
    domain.size(DEFAULT_DOMAIN_CAP)?;
    Ok(Enumerator::new(domain))
}

/// Counts and samples all arrangements satisfying every constraint.
pub fn solve(
    domain: &DomainSpec,
    constraints: &[TypedExpr],
    options: &SolveOptions,
) -> Result<SolutionSpace, DomainError> {
    solve_inner(domain, constraints, options, None)
}

/// True iff at least one satisfying arrangement exists; stops at the first.
pub fn is_solvable(
    domain: &DomainSpec,
    constraints: &[TypedExpr],
    options: &SolveOptions,
) -> Result<bool, DomainError> {
    let space = solve_inner(domain, constraints, options, Some(1))?;
    Ok(space.solution_count >= 1)
}

fn solve_inner(
    domain: &DomainSpec,
    constraints: &[TypedExpr],
    options: &SolveOptions,
    stop_after: Option<u64>,
) -> Result<SolutionSpace, DomainError> {
    domain.validate()?;
    let domain_count = domain.size(options.cap)?;

    // Constraints with no slot references are constant; one false among them
    // empties the solution space without any traversal.
    let empty = Arrangement {
        bindings: BTreeMap::new(),
    };
    let constants_hold = constraints
        .iter()
        .filter(|c| c.slots.is_empty())
        .all(|c| eval(c, domain, &empty));
    if !constants_hold {
        return Ok(SolutionSpace {
            solution_count: 0,
            domain_count,
            samples: Vec::new(),
            exhausted: true,
        });
    }

    // Group constraints by the level at which all their slots are bound.
    let mut by_level: Vec<Vec<&TypedExpr>> = vec![Vec::new(); domain.slots.len()];
    for c in constraints {
        if let Some(&max_slot) = c.slots.iter().max() {
            let level = if options.pruned {
                max_slot
            } else {
                domain.slots.len() - 1
            };
            by_level[level].push(c);
        }
    }

    let mut search = Search {
        domain,
        by_level,
        options,
        stop_after,
        started: Instant::now(),
        ticks: 0,
        timed_out: false,
        stopped: false,
        solution_count: 0,
        samples: Vec::new(),
        arrangement: Arrangement {
            bindings: BTreeMap::new(),
        },
    };
    search.descend(0);

    Ok(SolutionSpace {
        solution_count: search.solution_count,
        domain_count,
        samples: search.samples,
        exhausted: !search.timed_out && !search.stopped,
    })
}

struct Search<'a> {
    domain: &'a DomainSpec,
    by_level: Vec<Vec<&'a TypedExpr>>,
    options: &'a SolveOptions,
    stop_after: Option<u64>,
    started: Instant,
    ticks: u32,
    timed_out: bool,
    stopped: bool,
    solution_count: u64,
    samples: Vec<Arrangement>,
    arrangement: Arrangement,
}

impl<'a> Search<'a> {
    fn descend(&mut self, level: usize) {
        if self.timed_out || self.stopped {
            return;
        }
        if level == self.domain.slots.len() {
            self.solution_count += 1;
            if self.samples.len() < self.options.sample_cap {
                self.samples.push(self.arrangement.clone());
            }
            if let Some(limit) = self.stop_after {
                if self.solution_count >= limit {
                    self.stopped = true;
                }
            }
            return;
        }
        let slot = &self.domain.slots[level];
        let mut iter = SlotIter::new(&slot.kind);
        while let Some(value) = iter.next() {
            self.ticks = self.ticks.wrapping_add(1);
            if self.ticks % 4096 == 0 && self.started.elapsed() > self.options.timeout {
                self.timed_out = true;
            }
            if self.timed_out || self.stopped {
                break;
            }
            self.arrangement.bindings.insert(slot.name.clone(), value);
            let ok = self.by_level[level]
                .iter()
                .all(|c| eval(c, self.domain, &self.arrangement));
            if ok {
                self.descend(level + 1);
            }
        }
        self.arrangement.bindings.remove(&slot.name);
    }
}

/// Streaming iterator over the values of a single slot.
enum SlotIter<'a> {
    Perm {
        items: &'a [String],
        indices: Vec<usize>,
        state: IterState,
    },
    Assign {
        keys: &'a [String],
        values: &'a [String],
        counters: Vec<usize>,
        state: IterState,
    },
    Subset {
        items: &'a [String],
        indices: Vec<usize>,
        state: IterState,
    },
    Scalar {
        values: &'a [String],
        next: usize,
    },
}

#[derive(PartialEq)]
enum IterState {
    Fresh,
    Running,
    Done,
}

impl<'a> SlotIter<'a> {
    fn new(kind: &'a SlotKind) -> SlotIter<'a> {
        match kind {
            SlotKind::Permutation { items } => SlotIter::Perm {
                items,
                indices: (0..items.len()).collect(),
                state: IterState::Fresh,
            },
            SlotKind::Assignment { keys, values } => SlotIter::Assign {
                keys,
                values,
                counters: vec![0; keys.len()],
                state: IterState::Fresh,
            },
            SlotKind::Subset { items, cardinality } => SlotIter::Subset {
                items,
                indices: (0..*cardinality).collect(),
                state: IterState::Fresh,
            },
            SlotKind::Scalar { values } => SlotIter::Scalar { values, next: 0 },
        }
    }

    fn next(&mut self) -> Option<SlotValue> {
        match self {
            SlotIter::Perm {
                items,
                indices,
                state,
            } => {
                match state {
                    IterState::Fresh => *state = IterState::Running,
                    IterState::Running => {
                        if !next_permutation(indices) {
                            *state = IterState::Done;
                        }
                    }
                    IterState::Done => return None,
                }
                if *state == IterState::Done {
                    return None;
                }
                Some(SlotValue::Seq(
                    indices.iter().map(|&i| items[i].clone()).collect(),
                ))
            }
            SlotIter::Assign {
                keys,
                values,
                counters,
                state,
            } => {
                match state {
                    IterState::Fresh => *state = IterState::Running,
                    IterState::Running => {
                        // Odometer, first key most significant.
                        let mut pos = counters.len();
                        loop {
                            if pos == 0 {
                                *state = IterState::Done;
                                break;
                            }
                            pos -= 1;
                            counters[pos] += 1;
                            if counters[pos] < values.len() {
                                break;
                            }
                            counters[pos] = 0;
                        }
                    }
                    IterState::Done => return None,
                }
                if *state == IterState::Done {
                    return None;
                }
                Some(SlotValue::Map(
                    keys.iter()
                        .zip(counters.iter())
                        .map(|(k, &c)| (k.clone(), values[c].clone()))
                        .collect(),
                ))
            }
            SlotIter::Subset {
                items,
                indices,
                state,
            } => {
                match state {
                    IterState::Fresh => *state = IterState::Running,
                    IterState::Running => {
                        if !next_combination(indices, items.len()) {
                            *state = IterState::Done;
                        }
                    }
                    IterState::Done => return None,
                }
                if *state == IterState::Done {
                    return None;
                }
                Some(SlotValue::Set(
                    indices.iter().map(|&i| items[i].clone()).collect(),
                ))
            }
            SlotIter::Scalar { values, next } => {
                let value = values.get(*next)?;
                *next += 1;
                Some(SlotValue::Atom(value.clone()))
            }
        }
    }
}

/// Classic in-place next lexicographic permutation; false once exhausted.
fn next_permutation(indices: &mut [usize]) -> bool {
    if indices.len() < 2 {
        return false;
    }
    let mut i = indices.len() - 1;
    while i > 0 && indices[i - 1] >= indices[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = indices.len() - 1;
    while indices[j] <= indices[i - 1] {
        j -= 1;
    }
    indices.swap(i - 1, j);
    indices[i..].reverse();
    true
}

/// Next lexicographic k-combination of `0..n`; false once exhausted.
fn next_combination(indices: &mut [usize], n: usize) -> bool {
    let k = indices.len();
    let mut i = k;
    loop {
        if i == 0 {
            return false;
        }
        i -= 1;
        if indices[i] < n - (k - i) {
            break;
        }
    }
    indices[i] += 1;
    for j in i + 1..k {
        indices[j] = indices[j - 1] + 1;
    }
    true
}

pub struct Enumerator<'a> {
    domain: &'a DomainSpec,
    iters: Vec<SlotIter<'a>>,
    current: Vec<Option<SlotValue>>,
    done: bool,
    started: bool,
}

impl<'a> Enumerator<'a> {
    fn new(domain: &'a DomainSpec) -> Enumerator<'a> {
        let iters = domain
            .slots
            .iter()
            .map(|s| SlotIter::new(&s.kind))
            .collect();
        Enumerator {
            domain,
            iters,
            current: vec![None; domain.slots.len()],
            done: false,
            started: false,
        }
    }

    fn emit(&self) -> Arrangement {
        let bindings = self
            .domain
            .slots
            .iter()
            .zip(self.current.iter())
            .map(|(s, v)| (s.name.clone(), v.clone().expect("slot value present")))
            .collect();
        Arrangement { bindings }
    }
}

impl<'a> Iterator for Enumerator<'a> {
    type Item = Arrangement;

    fn next(&mut self) -> Option<Arrangement> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            for (i, iter) in self.iters.iter_mut().enumerate() {
                match iter.next() {
                    Some(v) => self.current[i] = Some(v),
                    None => {
                        self.done = true;
                        return None;
                    }
                }
            }
            return Some(self.emit());
        }
        // Advance the last slot first, carrying leftwards.
        let mut level = self.iters.len();
        loop {
            if level == 0 {
                self.done = true;
                return None;
            }
            level -= 1;
            if let Some(v) = self.iters[level].next() {
                self.current[level] = Some(v);
                break;
            }
            self.iters[level] = SlotIter::new(&self.domain.slots[level].kind);
            let v = self.iters[level].next().expect("non-empty slot");
            self.current[level] = Some(v);
        }
        Some(self.emit())
    }
}
