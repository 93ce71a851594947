//! Single-BGP evaluation by vertex extension, with optional candidate
//! filters, plus the cost and cardinality estimates the optimizer reads.

mod estimate;
mod plan;

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::algebra::{Bag, Mapping};
use crate::sparql::{TermPattern, TriplePattern, Variable};
use crate::store::{Store, TermId};

pub use estimate::{scale_cardinality, CardEstimator, DEFAULT_SAMPLE_SIZE};
pub use plan::{binary_join_cost, wco_step_cost, BgpPlan};

use plan::UNBOUND;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("BGP patterns are not connected through shared subject/object variables")]
    Disconnected,
}

/// Bindings already known on some variables, used to restrict a BGP.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub variables: Vec<Variable>,
    /// Distinct rows projected onto `variables`. A row may leave variables
    /// unbound, which constrains nothing.
    pub rows: Bag,
}

impl CandidateSet {
    /// Projects `bag` onto `variables` and removes duplicates.
    pub fn from_bag(bag: &[Mapping], variables: Vec<Variable>) -> Self {
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        for m in bag {
            let p = m.project(&variables);
            if seen.insert(p.clone()) {
                rows.push(p);
            }
        }
        CandidateSet { variables, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Const(TermId),
    Var(usize),
}

/// BGP with constants encoded and variables numbered.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub vars: Vec<Variable>,
    pub patterns: Vec<[Slot; 3]>,
}

impl Compiled {
    /// `None` when some constant does not occur in the store.
    pub fn new(store: &Store, patterns: &[TriplePattern]) -> Option<Compiled> {
        let mut vars: Vec<Variable> = Vec::new();
        let mut out = Vec::with_capacity(patterns.len());
        for t in patterns {
            let mut slots = [Slot::Const(TermId(0)); 3];
            for (slot, pos) in slots.iter_mut().zip(t.positions()) {
                *slot = match pos {
                    TermPattern::Term(term) => Slot::Const(store.encode(term)?),
                    TermPattern::Var(v) => {
                        let index = vars.iter().position(|w| w == v).unwrap_or_else(|| {
                            vars.push(v.clone());
                            vars.len() - 1
                        });
                        Slot::Var(index)
                    }
                };
            }
            out.push(slots);
        }
        Some(Compiled {
            vars,
            patterns: out,
        })
    }

    pub fn pattern_vars(&self, i: usize) -> BTreeSet<usize> {
        self.patterns[i]
            .iter()
            .filter_map(|s| match s {
                Slot::Var(v) => Some(*v),
                Slot::Const(_) => None,
            })
            .collect()
    }
}

type Row = Vec<TermId>;

fn resolve(slot: &Slot, row: &Row) -> Option<TermId> {
    match slot {
        Slot::Const(id) => Some(*id),
        Slot::Var(v) if row[*v] != UNBOUND => Some(row[*v]),
        Slot::Var(_) => None,
    }
}

/// All extensions of `row` through `slots`.
pub(crate) fn extend_row(store: &Store, slots: &[Slot; 3], row: &Row, out: &mut Vec<Row>) {
    let (s, p, o) = (
        resolve(&slots[0], row),
        resolve(&slots[1], row),
        resolve(&slots[2], row),
    );
    'triples: for t in store.scan(s, p, o) {
        let mut next = row.clone();
        for (slot, value) in slots.iter().zip([t.s, t.p, t.o]) {
            if let Slot::Var(v) = slot {
                if next[*v] == UNBOUND {
                    next[*v] = value;
                } else if next[*v] != value {
                    // repeated variable inside the pattern
                    continue 'triples;
                }
            }
        }
        out.push(next);
    }
}

pub(crate) fn check_row(store: &Store, slots: &[Slot; 3], row: &Row) -> bool {
    match (
        resolve(&slots[0], row),
        resolve(&slots[1], row),
        resolve(&slots[2], row),
    ) {
        (Some(s), Some(p), Some(o)) => store.contains(crate::store::Triple { s, p, o }),
        _ => false,
    }
}

/// Membership and compatibility tests derived from a candidate set.
struct Filters {
    /// Per-variable value sets, for variables every candidate row binds.
    members: HashMap<usize, HashSet<TermId>>,
    /// Projected rows grouped by which shared variables they bind.
    by_domain: Vec<(Vec<usize>, HashSet<Vec<TermId>>)>,
    /// True when the per-variable sets alone decide compatibility.
    exact: bool,
    empty: bool,
}

impl Filters {
    fn new(c: &Compiled, cand: &CandidateSet) -> Option<Filters> {
        let shared: Vec<usize> = (0..c.vars.len())
            .filter(|&i| cand.variables.contains(&c.vars[i]))
            .collect();
        if cand.rows.is_empty() {
            return Some(Filters {
                members: HashMap::new(),
                by_domain: Vec::new(),
                exact: true,
                empty: true,
            });
        }
        if shared.is_empty() {
            return None;
        }
        let mut groups: HashMap<Vec<usize>, HashSet<Vec<TermId>>> = HashMap::new();
        for m in &cand.rows {
            let domain: Vec<usize> = shared
                .iter()
                .copied()
                .filter(|&i| m.get(&c.vars[i]).is_some())
                .collect();
            let values: Vec<TermId> = domain.iter().map(|&i| m.get(&c.vars[i]).unwrap()).collect();
            groups.entry(domain).or_default().insert(values);
        }
        if groups.contains_key(&Vec::new()) {
            // a row binding none of the shared variables accepts everything
            return None;
        }
        let mut members = HashMap::new();
        for &v in &shared {
            if groups.keys().all(|d| d.contains(&v)) {
                let set: HashSet<TermId> = cand
                    .rows
                    .iter()
                    .map(|m| m.get(&c.vars[v]).unwrap())
                    .collect();
                members.insert(v, set);
            }
        }
        let exact = groups.len() == 1 && groups.keys().next().unwrap().len() == 1;
        let mut by_domain: Vec<(Vec<usize>, HashSet<Vec<TermId>>)> = groups.into_iter().collect();
        by_domain.sort_by(|a, b| a.0.cmp(&b.0));
        Some(Filters {
            members,
            by_domain,
            exact,
            empty: false,
        })
    }

    fn admits_partial(&self, row: &Row) -> bool {
        self.members
            .iter()
            .all(|(v, set)| row[*v] == UNBOUND || set.contains(&row[*v]))
    }

    fn admits(&self, row: &Row) -> bool {
        if !self.admits_partial(row) {
            return false;
        }
        self.exact
            || self.by_domain.iter().any(|(domain, set)| {
                let key: Vec<TermId> = domain.iter().map(|&v| row[v]).collect();
                set.contains(&key)
            })
    }
}

/// Result of evaluating one BGP.
#[derive(Debug, Clone, Default)]
pub struct BgpOutput {
    pub bag: Bag,
    /// Intermediate rows produced across all extension steps.
    pub rows_materialized: u64,
    /// Whether a candidate set actually restricted the evaluation.
    pub pruned: bool,
}

/// Rows at which extension switches to the parallel path.
#[cfg(feature = "parallel")]
const PARALLEL_MIN_ROWS: usize = 512;

fn extend_all(store: &Store, slots: &[Slot; 3], rows: &[Row], parallel: bool) -> Vec<Row> {
    #[cfg(feature = "parallel")]
    if parallel && rows.len() >= PARALLEL_MIN_ROWS {
        use rayon::prelude::*;
        return rows
            .par_chunks(256)
            .flat_map_iter(|chunk| {
                let mut out = Vec::new();
                for row in chunk {
                    extend_row(store, slots, row, &mut out);
                }
                out
            })
            .collect();
    }
    let _ = parallel;
    let mut out = Vec::new();
    for row in rows {
        extend_row(store, slots, row, &mut out);
    }
    out
}

/// Evaluates a BGP. With `cand`, only rows compatible with some candidate
/// row are produced.
pub fn evaluate_bgp(
    store: &Store,
    patterns: &[TriplePattern],
    cand: Option<&CandidateSet>,
    parallel: bool,
) -> Result<BgpOutput, EngineError> {
    if patterns.is_empty() {
        let bag = vec![Mapping::new()];
        return Ok(match cand {
            Some(c) if c.is_empty() => BgpOutput {
                bag: Vec::new(),
                rows_materialized: 0,
                pruned: true,
            },
            _ => BgpOutput {
                bag,
                rows_materialized: 1,
                pruned: false,
            },
        });
    }
    let Some(c) = Compiled::new(store, patterns) else {
        return Ok(BgpOutput::default());
    };
    plan::check_connected(&c)?;
    let filters = cand.and_then(|cand| Filters::new(&c, cand));
    if let Some(f) = &filters {
        if f.empty {
            return Ok(BgpOutput {
                bag: Vec::new(),
                rows_materialized: 0,
                pruned: true,
            });
        }
    }

    // Start from the candidate values of one variable when that is smaller
    // than the cheapest pattern.
    let mut start: Option<(usize, Vec<TermId>)> = None;
    if let Some(f) = &filters {
        let cheapest = (0..c.patterns.len())
            .map(|i| plan::seed_count(store, &c, i))
            .min()
            .unwrap_or(0);
        if let Some((v, set)) = f.members.iter().min_by_key(|(v, set)| (set.len(), **v)) {
            if set.len() < cheapest {
                let mut values: Vec<TermId> = set.iter().copied().collect();
                values.sort();
                start = Some((*v, values));
            }
        }
    }

    let initial: BTreeSet<usize> = start.iter().map(|(v, _)| *v).collect();
    let order = plan::order(store, &c, &initial);
    let width = c.vars.len();
    let mut rows: Vec<Row> = match &start {
        Some((v, values)) => values
            .iter()
            .map(|id| {
                let mut row = vec![UNBOUND; width];
                row[*v] = *id;
                row
            })
            .collect(),
        None => vec![vec![UNBOUND; width]],
    };
    let mut materialized = 0u64;
    for step in &order.steps {
        if let Some(g) = step.generator {
            rows = extend_all(store, &c.patterns[g], &rows, parallel);
        }
        rows.retain(|row| {
            step.checks
                .iter()
                .all(|&i| check_row(store, &c.patterns[i], row))
        });
        if let Some(f) = &filters {
            rows.retain(|row| f.admits_partial(row));
        }
        materialized += rows.len() as u64;
        if rows.is_empty() {
            break;
        }
    }
    if let Some(f) = &filters {
        rows.retain(|row| f.admits(row));
    }
    let bag = rows
        .into_iter()
        .map(|row| Mapping::from_pairs(c.vars.iter().cloned().zip(row)))
        .collect();
    Ok(BgpOutput {
        bag,
        rows_materialized: materialized,
        pruned: filters.is_some(),
    })
}
