//! In-memory RDF store and SPARQL engine for queries built from basic graph
//! patterns, UNION and OPTIONAL.
//!
//! Queries are parsed into a [`sparql::GraphPattern`], turned into a
//! BGP-based evaluation tree ([`betree::BeTree`]), optionally rewritten by the
//! cost-driven [`optimizer`], and evaluated by the [`executor`]. The
//! [`algebra`] module holds a deliberately naive evaluator used as the
//! reference for everything else.

pub mod algebra;
pub mod betree;
pub mod engine;
pub mod executor;
pub mod optimizer;
pub mod sparql;
pub mod store;

pub use store::{Direction, Literal, Store, StoreBuilder, Term, TermId, Triple};
