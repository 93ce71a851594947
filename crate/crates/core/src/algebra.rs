//! Mappings, bags and the bag operators, plus the reference evaluator.
//!
//! Everything here is quadratic on purpose. The reference evaluator is the
//! oracle the optimized engine is checked against, so it stays as close to
//! the textbook definitions as possible.

use std::fmt;

use crate::sparql::{GraphPattern, TermPattern, TriplePattern, Variable};
use crate::store::{Store, TermId};

/// A partial binding of variables, kept sorted by variable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mapping {
    bindings: Vec<(Variable, TermId)>,
}

/// A multiset of mappings; order carries no meaning.
pub type Bag = Vec<Mapping>;

impl Mapping {
    pub fn new() -> Self {
        Mapping::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Variable, TermId)>) -> Self {
        let mut m = Mapping::new();
        for (v, id) in pairs {
            m.insert(v, id);
        }
        m
    }

    pub fn get(&self, v: &Variable) -> Option<TermId> {
        self.bindings
            .binary_search_by(|(w, _)| w.cmp(v))
            .ok()
            .map(|i| self.bindings[i].1)
    }

    /// Binds `v`, replacing any previous value.
    pub fn insert(&mut self, v: Variable, id: TermId) {
        match self.bindings.binary_search_by(|(w, _)| w.cmp(&v)) {
            Ok(i) => self.bindings[i].1 = id,
            Err(i) => self.bindings.insert(i, (v, id)),
        }
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Variable, TermId)> {
        self.bindings.iter().map(|(v, id)| (v, *id))
    }

    pub fn domain(&self) -> impl Iterator<Item = &Variable> {
        self.bindings.iter().map(|(v, _)| v)
    }

    /// Union of two mappings. Values in `self` win on conflict, so callers
    /// check compatibility first.
    pub fn merge(&self, other: &Mapping) -> Mapping {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.bindings, &other.bindings);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i].clone());
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Mapping { bindings: out }
    }

    /// Restriction to the given variables.
    pub fn project<'a>(&self, vars: impl IntoIterator<Item = &'a Variable>) -> Mapping {
        let mut out = Mapping::new();
        for v in vars {
            if let Some(id) = self.get(v) {
                out.insert(v.clone(), id);
            }
        }
        out
    }
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, id)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}→{}", id.0)?;
        }
        f.write_str("}")
    }
}

pub fn compatible(m1: &Mapping, m2: &Mapping) -> bool {
    m1.iter()
        .all(|(v, id)| m2.get(v).is_none_or(|other| other == id))
}

/// The bag holding only the empty mapping; the unit of [`join`].
pub fn identity() -> Bag {
    vec![Mapping::new()]
}

pub fn join(o1: &[Mapping], o2: &[Mapping]) -> Bag {
    let mut out = Vec::new();
    for m1 in o1 {
        for m2 in o2 {
            if compatible(m1, m2) {
                out.push(m1.merge(m2));
            }
        }
    }
    out
}

pub fn union_bag(o1: &[Mapping], o2: &[Mapping]) -> Bag {
    o1.iter().chain(o2).cloned().collect()
}

/// Mappings of `o1` with no compatible partner in `o2`, at their original
/// multiplicity.
pub fn diff(o1: &[Mapping], o2: &[Mapping]) -> Bag {
    o1.iter()
        .filter(|m1| !o2.iter().any(|m2| compatible(m1, m2)))
        .cloned()
        .collect()
}

pub fn left_outer_join(o1: &[Mapping], o2: &[Mapping]) -> Bag {
    union_bag(&join(o1, o2), &diff(o1, o2))
}

/// Sorted copy, the canonical form for multiset comparison.
pub fn canonical(bag: &[Mapping]) -> Bag {
    let mut sorted = bag.to_vec();
    sorted.sort();
    sorted
}

pub fn bag_eq(a: &[Mapping], b: &[Mapping]) -> bool {
    a.len() == b.len() && canonical(a) == canonical(b)
}

/// Restricts every mapping to `vars`, keeping multiplicities.
pub fn project(bag: &[Mapping], vars: &[Variable]) -> Bag {
    bag.iter().map(|m| m.project(vars)).collect()
}

fn match_triple(store: &Store, t: &TriplePattern) -> Bag {
    let mut constants = [None; 3];
    for (slot, pos) in constants.iter_mut().zip(t.positions()) {
        if let TermPattern::Term(term) = pos {
            match store.encode(term) {
                Some(id) => *slot = Some(id),
                None => return Vec::new(),
            }
        }
    }
    let mut out = Vec::new();
    'triples: for triple in store.triples() {
        let mut m = Mapping::new();
        for ((pos, constant), value) in t
            .positions()
            .into_iter()
            .zip(constants)
            .zip([triple.s, triple.p, triple.o])
        {
            match pos {
                TermPattern::Term(_) => {
                    if constant != Some(value) {
                        continue 'triples;
                    }
                }
                TermPattern::Var(v) => match m.get(v) {
                    Some(bound) if bound != value => continue 'triples,
                    _ => m.insert(v.clone(), value),
                },
            }
        }
        out.push(m);
    }
    out
}

/// Evaluates the pattern tree bottom-up, operator by operator.
pub fn reference_evaluate(p: &GraphPattern, store: &Store) -> Bag {
    match p {
        GraphPattern::Bgp(triples) => triples
            .iter()
            .fold(identity(), |acc, t| join(&acc, &match_triple(store, t))),
        GraphPattern::Group(inner) => reference_evaluate(inner, store),
        GraphPattern::And(l, r) => {
            join(&reference_evaluate(l, store), &reference_evaluate(r, store))
        }
        GraphPattern::Union(l, r) => {
            union_bag(&reference_evaluate(l, store), &reference_evaluate(r, store))
        }
        GraphPattern::Optional(l, r) => {
            left_outer_join(&reference_evaluate(l, store), &reference_evaluate(r, store))
        }
    }
}
