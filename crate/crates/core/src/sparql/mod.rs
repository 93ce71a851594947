//! SPARQL syntax tree for SELECT queries over BGP, AND, UNION, OPTIONAL and
//! groups, with a parser and a printer that round-trip.

mod parser;
mod printer;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::store::Term;

pub use parser::{parse_query, ParseError};
pub use printer::pattern_to_text;

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/// A query variable, stored without the leading `?`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable(Arc<str>);

impl Variable {
    pub fn new(name: &str) -> Self {
        assert!(!name.is_empty(), "variable name must be non-empty");
        Variable(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermPattern {
    Var(Variable),
    Term(Term),
}

impl TermPattern {
    pub fn var(name: &str) -> Self {
        TermPattern::Var(Variable::new(name))
    }

    pub fn iri(iri: &str) -> Self {
        TermPattern::Term(Term::iri(iri))
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            TermPattern::Var(v) => Some(v),
            TermPattern::Term(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriplePattern {
    pub s: TermPattern,
    pub p: TermPattern,
    pub o: TermPattern,
}

impl TriplePattern {
    pub fn new(s: TermPattern, p: TermPattern, o: TermPattern) -> Self {
        TriplePattern { s, p, o }
    }

    pub fn positions(&self) -> [&TermPattern; 3] {
        [&self.s, &self.p, &self.o]
    }

    pub fn variables(&self) -> impl Iterator<Item = &Variable> {
        self.positions().into_iter().filter_map(TermPattern::as_var)
    }

    /// Variables in subject or object position, the ones coalescing uses.
    pub fn node_variables(&self) -> impl Iterator<Item = &Variable> {
        [&self.s, &self.o]
            .into_iter()
            .filter_map(TermPattern::as_var)
    }

    pub fn coalescable(&self, other: &TriplePattern) -> bool {
        self.node_variables()
            .any(|v| other.node_variables().any(|w| v == w))
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |t: &TermPattern| match t {
            TermPattern::Var(v) => v.to_string(),
            TermPattern::Term(t) => t.to_string(),
        };
        write!(f, "{} {} {}", show(&self.s), show(&self.p), show(&self.o))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GraphPattern {
    Bgp(Vec<TriplePattern>),
    Group(Box<GraphPattern>),
    And(Box<GraphPattern>, Box<GraphPattern>),
    Union(Box<GraphPattern>, Box<GraphPattern>),
    Optional(Box<GraphPattern>, Box<GraphPattern>),
}

impl GraphPattern {
    pub fn group(inner: GraphPattern) -> Self {
        GraphPattern::Group(Box::new(inner))
    }

    pub fn and(l: GraphPattern, r: GraphPattern) -> Self {
        GraphPattern::And(Box::new(l), Box::new(r))
    }

    pub fn union(l: GraphPattern, r: GraphPattern) -> Self {
        GraphPattern::Union(Box::new(l), Box::new(r))
    }

    pub fn optional(l: GraphPattern, r: GraphPattern) -> Self {
        GraphPattern::Optional(Box::new(l), Box::new(r))
    }

    pub fn variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<Variable>) {
        match self {
            GraphPattern::Bgp(triples) => {
                for t in triples {
                    out.extend(t.variables().cloned());
                }
            }
            GraphPattern::Group(inner) => inner.collect_variables(out),
            GraphPattern::And(l, r) | GraphPattern::Union(l, r) | GraphPattern::Optional(l, r) => {
                l.collect_variables(out);
                r.collect_variables(out);
            }
        }
    }

    pub fn triple_count(&self) -> usize {
        match self {
            GraphPattern::Bgp(triples) => triples.len(),
            GraphPattern::Group(inner) => inner.triple_count(),
            GraphPattern::And(l, r) | GraphPattern::Union(l, r) | GraphPattern::Optional(l, r) => {
                l.triple_count() + r.triple_count()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projection {
    All,
    Vars(Vec<Variable>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    /// Declared prefixes, kept so that printing can abbreviate IRIs again.
    pub prefixes: Vec<(String, String)>,
    pub projection: Projection,
    /// Always a [`GraphPattern::Group`].
    pub body: GraphPattern,
}

impl Query {
    /// Variables in output order: the projection list, or every body variable
    /// sorted by name for `SELECT *`.
    pub fn output_variables(&self) -> Vec<Variable> {
        match &self.projection {
            Projection::All => self.body.variables().into_iter().collect(),
            Projection::Vars(vars) => vars.clone(),
        }
    }
}
