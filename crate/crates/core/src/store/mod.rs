//! Dictionary-encoded in-memory triple store.
//!
//! Terms are interned into dense [`TermId`]s in first-seen order. Triples are
//! kept in three sorted permutations (SPO, POS, OSP), which together serve
//! every combination of bound positions as an index prefix. Per-predicate
//! statistics are computed once at load time and feed the cost model.

mod ntriples;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

pub use ntriples::LoadError;

/// An RDF term: IRI, blank node or literal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    BlankNode(String),
    Literal(Literal),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    lexical: String,
    language: Option<String>,
    datatype: Option<String>,
}

impl Literal {
    pub fn simple(lexical: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            language: None,
            datatype: None,
        }
    }

    pub fn lang(lexical: impl Into<String>, tag: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            language: Some(tag.into().to_ascii_lowercase()),
            datatype: None,
        }
    }

    pub fn typed(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            language: None,
            datatype: Some(datatype.into()),
        }
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn language(&self) -> Option<&str> {
        self.language.as_deref()
    }

    pub fn datatype(&self) -> Option<&str> {
        self.datatype.as_deref()
    }
}

impl Term {
    pub fn iri(iri: impl Into<String>) -> Self {
        Term::Iri(iri.into())
    }

    /// A plain literal.
    pub fn literal(lexical: impl Into<String>) -> Self {
        Term::Literal(Literal::simple(lexical))
    }

    pub fn blank(label: impl Into<String>) -> Self {
        Term::BlankNode(label.into())
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal(_))
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }
}

/// Formats the term in N-Triples syntax.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => write!(f, "<{iri}>"),
            Term::BlankNode(label) => write!(f, "_:{label}"),
            Term::Literal(lit) => {
                f.write_str("\"")?;
                for c in lit.lexical.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
                if let Some(tag) = &lit.language {
                    write!(f, "@{tag}")?;
                } else if let Some(dt) = &lit.datatype {
                    write!(f, "^^<{dt}>")?;
                }
                Ok(())
            }
        }
    }
}

/// Dense catalog identifier of a loaded term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub s: TermId,
    pub p: TermId,
    pub o: TermId,
}

/// Which endpoint of a predicate edge the fan-out is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    BySubject,
    ByObject,
}

#[derive(Debug, Clone, Copy, Default)]
struct PredicateStats {
    count: usize,
    distinct_subjects: usize,
    distinct_objects: usize,
}

impl PredicateStats {
    fn average(&self, direction: Direction) -> f64 {
        let distinct = match direction {
            Direction::BySubject => self.distinct_subjects,
            Direction::ByObject => self.distinct_objects,
        };
        if distinct == 0 {
            0.0
        } else {
            self.count as f64 / distinct as f64
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Order {
    Spo,
    Pos,
    Osp,
}

impl Order {
    fn key(self, t: Triple) -> [u32; 3] {
        let (s, p, o) = (t.s.0, t.p.0, t.o.0);
        match self {
            Order::Spo => [s, p, o],
            Order::Pos => [p, o, s],
            Order::Osp => [o, s, p],
        }
    }

    fn triple(self, k: [u32; 3]) -> Triple {
        let [a, b, c] = k;
        let (s, p, o) = match self {
            Order::Spo => (a, b, c),
            Order::Pos => (c, a, b),
            Order::Osp => (b, c, a),
        };
        Triple {
            s: TermId(s),
            p: TermId(p),
            o: TermId(o),
        }
    }
}

/// Immutable after construction; share it by reference across workers.
#[derive(Debug, Clone, Default)]
pub struct Store {
    terms: Vec<Term>,
    ids: HashMap<Term, TermId>,
    spo: Vec<[u32; 3]>,
    pos: Vec<[u32; 3]>,
    osp: Vec<[u32; 3]>,
    predicates: HashMap<TermId, PredicateStats>,
    overall: PredicateStats,
}

/// Iterator over an index range, decoding keys back into triples.
#[derive(Debug, Clone)]
pub struct Scan<'a> {
    keys: std::slice::Iter<'a, [u32; 3]>,
    order: Order,
}

impl Iterator for Scan<'_> {
    type Item = Triple;

    fn next(&mut self) -> Option<Triple> {
        self.keys.next().map(|k| self.order.triple(*k))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.keys.size_hint()
    }
}

impl ExactSizeIterator for Scan<'_> {}

impl Scan<'_> {
    /// Decodes the `index`-th triple of the range without advancing.
    pub fn nth_triple(&self, index: usize) -> Option<Triple> {
        self.keys
            .as_slice()
            .get(index)
            .map(|k| self.order.triple(*k))
    }
}

impl Store {
    pub fn load_ntriples<R: BufRead>(input: R) -> Result<Store, LoadError> {
        let mut builder = StoreBuilder::default();
        ntriples::parse_into(input, &mut builder)?;
        Ok(builder.build())
    }

    pub fn len(&self) -> usize {
        self.spo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spo.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn encode(&self, term: &Term) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub fn decode(&self, id: TermId) -> &Term {
        &self.terms[id.0 as usize]
    }

    pub fn triples(&self) -> Scan<'_> {
        self.scan(None, None, None)
    }

    /// Returns every triple matching the bound positions.
    pub fn scan(&self, s: Option<TermId>, p: Option<TermId>, o: Option<TermId>) -> Scan<'_> {
        let (order, index, prefix): (Order, &[[u32; 3]], Vec<u32>) = match (s, p, o) {
            (Some(s), Some(p), Some(o)) => (Order::Spo, &self.spo, vec![s.0, p.0, o.0]),
            (Some(s), Some(p), None) => (Order::Spo, &self.spo, vec![s.0, p.0]),
            (Some(s), None, None) => (Order::Spo, &self.spo, vec![s.0]),
            (None, Some(p), Some(o)) => (Order::Pos, &self.pos, vec![p.0, o.0]),
            (None, Some(p), None) => (Order::Pos, &self.pos, vec![p.0]),
            (Some(s), None, Some(o)) => (Order::Osp, &self.osp, vec![o.0, s.0]),
            (None, None, Some(o)) => (Order::Osp, &self.osp, vec![o.0]),
            (None, None, None) => (Order::Spo, &self.spo, Vec::new()),
        };
        let n = prefix.len();
        let lo = index.partition_point(|k| k[..n] < prefix[..]);
        let hi = lo + index[lo..].partition_point(|k| k[..n] == prefix[..]);
        Scan {
            keys: index[lo..hi].iter(),
            order,
        }
    }

    pub fn count(&self, s: Option<TermId>, p: Option<TermId>, o: Option<TermId>) -> usize {
        self.scan(s, p, o).len()
    }

    pub fn contains(&self, triple: Triple) -> bool {
        self.spo.binary_search(&Order::Spo.key(triple)).is_ok()
    }

    pub fn predicate_count(&self, p: TermId) -> usize {
        self.predicates.get(&p).map_or(0, |s| s.count)
    }

    /// Average number of `p`-edges per distinct subject (or object) of `p`;
    /// zero when `p` does not occur.
    pub fn average_size(&self, p: TermId, direction: Direction) -> f64 {
        self.predicates
            .get(&p)
            .map_or(0.0, |stats| stats.average(direction))
    }

    /// Fan-out averaged over all predicates, used for variable predicates.
    pub fn overall_average_size(&self, direction: Direction) -> f64 {
        self.overall.average(direction)
    }
}

/// Accumulates terms and triples, then sorts the indexes once.
#[derive(Debug, Default)]
pub struct StoreBuilder {
    terms: Vec<Term>,
    ids: HashMap<Term, TermId>,
    triples: HashSet<Triple>,
    order: Vec<Triple>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TripleError {
    #[error("subject must be an IRI or blank node, found {0}")]
    BadSubject(String),
    #[error("predicate must be an IRI, found {0}")]
    BadPredicate(String),
}

impl StoreBuilder {
    pub fn intern(&mut self, term: Term) -> TermId {
        if let Some(id) = self.ids.get(&term) {
            return *id;
        }
        let id = TermId(self.terms.len() as u32);
        self.terms.push(term.clone());
        self.ids.insert(term, id);
        id
    }

    pub fn insert(&mut self, s: Term, p: Term, o: Term) -> Result<bool, TripleError> {
        if s.is_literal() {
            return Err(TripleError::BadSubject(s.to_string()));
        }
        if !p.is_iri() {
            return Err(TripleError::BadPredicate(p.to_string()));
        }
        let triple = Triple {
            s: self.intern(s),
            p: self.intern(p),
            o: self.intern(o),
        };
        let fresh = self.triples.insert(triple);
        if fresh {
            self.order.push(triple);
        }
        Ok(fresh)
    }

    pub fn build(self) -> Store {
        let mut spo: Vec<[u32; 3]> = self.order.iter().map(|t| Order::Spo.key(*t)).collect();
        let mut pos: Vec<[u32; 3]> = self.order.iter().map(|t| Order::Pos.key(*t)).collect();
        let mut osp: Vec<[u32; 3]> = self.order.iter().map(|t| Order::Osp.key(*t)).collect();
        spo.sort_unstable();
        pos.sort_unstable();
        osp.sort_unstable();

        let mut subjects: HashMap<TermId, HashSet<TermId>> = HashMap::new();
        let mut objects: HashMap<TermId, HashSet<TermId>> = HashMap::new();
        let mut predicates: HashMap<TermId, PredicateStats> = HashMap::new();
        let mut all_subjects = HashSet::new();
        let mut all_objects = HashSet::new();
        for t in &self.order {
            predicates.entry(t.p).or_default().count += 1;
            subjects.entry(t.p).or_default().insert(t.s);
            objects.entry(t.p).or_default().insert(t.o);
            all_subjects.insert(t.s);
            all_objects.insert(t.o);
        }
        for (p, stats) in predicates.iter_mut() {
            stats.distinct_subjects = subjects[p].len();
            stats.distinct_objects = objects[p].len();
        }
        let overall = PredicateStats {
            count: self.order.len(),
            distinct_subjects: all_subjects.len(),
            distinct_objects: all_objects.len(),
        };

        Store {
            terms: self.terms,
            ids: self.ids,
            spo,
            pos,
            osp,
            predicates,
            overall,
        }
    }
}
