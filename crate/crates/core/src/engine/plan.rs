//! Greedy vertex-extension ordering and the step cost formulas.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use super::{Compiled, EngineError, Slot};
use crate::store::{Direction, Store, TermId};

/// Cost of one extension step: prefix cardinality times the smallest
/// average fan-out among the edges that can produce the new vertex.
pub fn wco_step_cost(prefix_card: f64, min_average: f64) -> f64 {
    prefix_card * min_average
}

/// Cost of a binary hash join of two inputs: build on the smaller side and
/// probe with the larger one. Reported for comparison only.
pub fn binary_join_cost(card1: f64, card2: f64) -> f64 {
    2.0 * card1.min(card2) + card1.max(card2)
}

/// One step of an evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Step {
    /// Pattern that produces rows; `None` for a step that starts from
    /// externally supplied bindings.
    pub generator: Option<usize>,
    /// Patterns fully bound after this step, checked by lookup.
    pub checks: Vec<usize>,
    pub min_average: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Order {
    pub steps: Vec<Step>,
    /// S/O vertices in the order they were first touched, as display text.
    pub vertices: Vec<String>,
}

/// Plan of a BGP with per-step cost estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BgpPlan {
    pub vertex_order: Vec<String>,
    pub per_step_cost: Vec<f64>,
    /// Estimated cardinality after each step.
    pub step_cardinality: Vec<f64>,
    pub estimated_result_size: f64,
}

impl BgpPlan {
    pub fn total_cost(&self) -> f64 {
        self.per_step_cost.iter().sum()
    }
}

fn pattern_at(c: &Compiled, i: usize) -> &[Slot; 3] {
    &c.patterns[i]
}

fn endpoint_bound(slot: &Slot, bound: &BTreeSet<usize>) -> bool {
    match slot {
        Slot::Const(_) => true,
        Slot::Var(v) => bound.contains(v),
    }
}

fn has_bound_var(slots: &[Slot; 3], bound: &BTreeSet<usize>) -> bool {
    [&slots[0], &slots[2]]
        .into_iter()
        .any(|s| matches!(s, Slot::Var(v) if bound.contains(v)))
}

fn all_bound(slots: &[Slot; 3], bound: &BTreeSet<usize>) -> bool {
    slots.iter().all(|s| endpoint_bound(s, bound))
}

fn average(store: &Store, p: &Slot, direction: Direction) -> f64 {
    match p {
        Slot::Const(id) => store.average_size(*id, direction),
        Slot::Var(_) => store.overall_average_size(direction),
    }
}

/// Fan-out of extending through this pattern from its bound endpoints.
fn extension_average(store: &Store, slots: &[Slot; 3], bound: &BTreeSet<usize>) -> f64 {
    let s_bound = endpoint_bound(&slots[0], bound);
    let o_bound = endpoint_bound(&slots[2], bound);
    if s_bound && o_bound {
        // only the predicate is open
        return 1.0;
    }
    let mut best = f64::INFINITY;
    if s_bound {
        best = best.min(average(store, &slots[1], Direction::BySubject));
    }
    if o_bound {
        best = best.min(average(store, &slots[1], Direction::ByObject));
    }
    best
}

fn exact_count(store: &Store, slots: &[Slot; 3]) -> usize {
    let c = |s: &Slot| match s {
        Slot::Const(id) => Some(*id),
        Slot::Var(_) => None,
    };
    store.count(c(&slots[0]), c(&slots[1]), c(&slots[2]))
}

pub(crate) fn seed_count(store: &Store, c: &Compiled, pattern: usize) -> usize {
    exact_count(store, pattern_at(c, pattern))
}

fn vertex_text(c: &Compiled, slot: &Slot, store: &Store) -> String {
    match slot {
        Slot::Var(v) => c.vars[*v].to_string(),
        Slot::Const(id) => store.decode(*id).to_string(),
    }
}

/// Fails when the patterns do not form one component through shared
/// subject/object variables.
pub(crate) fn check_connected(c: &Compiled) -> Result<(), EngineError> {
    let n = c.patterns.len();
    if n <= 1 {
        return Ok(());
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (i, slots) in c.patterns.iter().enumerate() {
        for slot in [&slots[0], &slots[2]] {
            if let Slot::Var(v) = slot {
                if let Some(&j) = owner.get(v) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                } else {
                    owner.insert(*v, i);
                }
            }
        }
    }
    // patterns without variables are plain existence checks
    let linked: Vec<usize> = (0..n).filter(|&i| !c.pattern_vars(i).is_empty()).collect();
    let Some(&first) = linked.first() else {
        return Ok(());
    };
    let root = find(&mut parent, first);
    if linked.iter().all(|&i| find(&mut parent, i) == root) {
        Ok(())
    } else {
        Err(EngineError::Disconnected)
    }
}

/// Greedy order. With an empty `initial` set the cheapest pattern by exact
/// count seeds the order; otherwise evaluation starts from rows binding
/// `initial`.
pub(crate) fn order(store: &Store, c: &Compiled, initial: &BTreeSet<usize>) -> Order {
    let n = c.patterns.len();
    let mut applied = vec![false; n];
    let mut bound = initial.clone();
    let mut steps = Vec::new();
    let mut vertices = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let touch = |slots: &[Slot; 3], seen: &mut BTreeSet<String>, vertices: &mut Vec<String>| {
        for slot in [&slots[0], &slots[2]] {
            let text = vertex_text(c, slot, store);
            if seen.insert(text.clone()) {
                vertices.push(text);
            }
        }
    };

    let take_checks = |applied: &mut [bool], bound: &BTreeSet<usize>| -> Vec<usize> {
        let mut checks = Vec::new();
        for i in 0..n {
            if !applied[i] && all_bound(pattern_at(c, i), bound) {
                applied[i] = true;
                checks.push(i);
            }
        }
        checks
    };

    if initial.is_empty() {
        let seed = (0..n)
            .min_by_key(|&i| (exact_count(store, pattern_at(c, i)), i))
            .expect("non-empty BGP");
        applied[seed] = true;
        bound.extend(c.pattern_vars(seed));
        touch(pattern_at(c, seed), &mut seen, &mut vertices);
        let checks = take_checks(&mut applied, &bound);
        for &i in &checks {
            touch(pattern_at(c, i), &mut seen, &mut vertices);
        }
        steps.push(Step {
            generator: Some(seed),
            checks,
            min_average: 0.0,
        });
    } else {
        for v in initial {
            let text = c.vars[*v].to_string();
            seen.insert(text.clone());
            vertices.push(text);
        }
        let checks = take_checks(&mut applied, &bound);
        steps.push(Step {
            generator: None,
            checks,
            min_average: 0.0,
        });
    }

    while applied.iter().any(|a| !a) {
        let next = (0..n)
            .filter(|&i| !applied[i] && has_bound_var(pattern_at(c, i), &bound))
            .map(|i| (extension_average(store, pattern_at(c, i), &bound), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((min_average, g)) = next else {
            // unreachable for connected BGPs; fall back to the first left
            let g = applied.iter().position(|a| !a).unwrap();
            applied[g] = true;
            bound.extend(c.pattern_vars(g));
            touch(pattern_at(c, g), &mut seen, &mut vertices);
            let checks = take_checks(&mut applied, &bound);
            steps.push(Step {
                generator: Some(g),
                checks,
                min_average: exact_count(store, pattern_at(c, g)) as f64,
            });
            continue;
        };
        applied[g] = true;
        bound.extend(c.pattern_vars(g));
        touch(pattern_at(c, g), &mut seen, &mut vertices);
        let checks = take_checks(&mut applied, &bound);
        for &i in &checks {
            touch(pattern_at(c, i), &mut seen, &mut vertices);
        }
        steps.push(Step {
            generator: Some(g),
            checks,
            min_average,
        });
    }
    Order { steps, vertices }
}

/// Identifier written into rows for not-yet-bound slots.
pub(crate) const UNBOUND: TermId = TermId(u32::MAX);
