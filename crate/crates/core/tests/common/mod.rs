//! Random workloads and synthetic stores shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sparql_uo::{Store, StoreBuilder, Term};

pub const EX: &str = "http://ex/";

fn node(i: usize) -> Term {
    Term::iri(format!("{EX}n{i}"))
}

fn pred(i: usize) -> Term {
    Term::iri(format!("{EX}p{i}"))
}

/// Up to 50 triples over 8 nodes and 4 predicates.
pub fn random_store(rng: &mut ChaCha8Rng) -> Store {
    let mut b = StoreBuilder::default();
    let n = rng.gen_range(0..=50);
    for _ in 0..n {
        b.insert(
            node(rng.gen_range(0..8)),
            pred(rng.gen_range(0..4)),
            node(rng.gen_range(0..8)),
        )
        .unwrap();
    }
    b.build()
}

const VARS: [&str; 4] = ["?a", "?b", "?c", "?d"];

struct QueryGen<'a> {
    rng: &'a mut ChaCha8Rng,
    budget: usize,
}

impl QueryGen<'_> {
    fn subject_object(&mut self) -> String {
        if self.rng.gen_bool(0.8) {
            VARS.choose(self.rng).unwrap().to_string()
        } else {
            format!("<{EX}n{}>", self.rng.gen_range(0..8))
        }
    }

    fn triple(&mut self) -> String {
        self.budget -= 1;
        let s = self.subject_object();
        let p = if self.rng.gen_bool(0.1) {
            VARS.choose(self.rng).unwrap().to_string()
        } else {
            format!("<{EX}p{}>", self.rng.gen_range(0..4))
        };
        let o = self.subject_object();
        format!("{s} {p} {o} .")
    }

    /// Body of a group, without braces.
    fn group(&mut self, depth: usize) -> String {
        let mut parts = vec![self.triple()];
        while self.budget > 0 && self.rng.gen_bool(0.75) {
            let choice = if depth == 0 {
                0
            } else {
                self.rng.gen_range(0..20)
            };
            let part = match choice {
                0..=6 => self.triple(),
                7..=11 => format!("OPTIONAL {{ {} }}", self.group(depth - 1)),
                12..=16 => {
                    let mut branches = vec![self.group(depth - 1)];
                    while self.budget > 0 && branches.len() < 3 && self.rng.gen_bool(0.5) {
                        branches.push(self.group(depth - 1));
                    }
                    if branches.len() == 1 && self.budget > 0 {
                        branches.push(self.group(depth - 1));
                    }
                    branches
                        .iter()
                        .map(|b| format!("{{ {b} }}"))
                        .collect::<Vec<_>>()
                        .join(" UNION ")
                }
                _ => format!("{{ {} }}", self.group(depth - 1)),
            };
            parts.push(part);
        }
        parts.join(" ")
    }
}

/// A SELECT * query of at most six triple patterns and nesting depth at
/// most three, mixing AND, UNION and OPTIONAL.
pub fn random_query(rng: &mut ChaCha8Rng) -> String {
    let budget = rng.gen_range(2..=6);
    let mut g = QueryGen { rng, budget };
    format!("SELECT * WHERE {{ {} }}", g.group(2))
}

pub const DBO: &str = "http://dbpedia.org/ontology/";
pub const DBR: &str = "http://dbpedia.org/resource/";
pub const DBP: &str = "http://dbpedia.org/property/";
pub const OWL: &str = "http://www.w3.org/2002/07/owl#";
pub const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";

pub const PREFIXES: &str = "PREFIX dbo: <http://dbpedia.org/ontology/>
PREFIX dbr: <http://dbpedia.org/resource/>
PREFIX dbp: <http://dbpedia.org/property/>
PREFIX owl: <http://www.w3.org/2002/07/owl#>
PREFIX rdfs: <http://www.w3.org/2000/01/rdf-schema#>
";

/// Encyclopedic store of about 5300 triples: 20 of 1500 entities link to
/// the presidency page, every entity has two sameAs aliases, one in three
/// has a birth date, and 300 share one nationality whose resource carries
/// ten labels and ten subdivisions.
pub fn encyclopedia() -> Store {
    let mut b = StoreBuilder::default();
    let r = |s: String| Term::iri(format!("{DBR}{s}"));
    let link = Term::iri(format!("{DBO}wikiPageWikiLink"));
    let same = Term::iri(format!("{OWL}sameAs"));
    let birth = Term::iri(format!("{DBP}birthDate"));
    let nationality = Term::iri(format!("{DBP}nationality"));
    let label = Term::iri(format!("{RDFS}label"));
    let subdivision = Term::iri(format!("{DBP}subdivision"));
    let usa = r("United_States".into());
    for i in 0..1500 {
        let e = r(format!("E{i}"));
        let page = if i < 20 {
            r("President_of_the_United_States".into())
        } else {
            r(format!("Page{}", i % 100))
        };
        b.insert(e.clone(), link.clone(), page).unwrap();
        for k in 0..2 {
            b.insert(
                e.clone(),
                same.clone(),
                Term::iri(format!("http://alias.example/{k}/E{i}")),
            )
            .unwrap();
        }
        if i % 3 == 0 {
            b.insert(
                e.clone(),
                birth.clone(),
                Term::literal(format!("19{:02}-01-01", i % 100)),
            )
            .unwrap();
        }
        if i % 5 == 1 {
            b.insert(e, nationality.clone(), usa.clone()).unwrap();
        }
    }
    for k in 0..10 {
        b.insert(
            usa.clone(),
            label.clone(),
            Term::literal(format!("United States {k}")),
        )
        .unwrap();
        b.insert(usa.clone(), subdivision.clone(), r(format!("State{k}")))
            .unwrap();
    }
    b.build()
}

/// A selective BGP followed by two OPTIONALs, the second one huge.
pub const INJECT_QUERY: &str = "SELECT * WHERE {
  ?x dbo:wikiPageWikiLink dbr:President_of_the_United_States .
  OPTIONAL { ?x dbp:birthDate ?d }
  OPTIONAL { ?x owl:sameAs ?y }
}";

/// An unselective BGP whose join with the UNION runs through one hub,
/// with an OPTIONAL sibling so the level is not left to pruning alone.
pub const MERGE_QUERY: &str = "SELECT * WHERE {
  ?x dbp:nationality ?n .
  { ?n rdfs:label ?l } UNION { ?n dbp:subdivision ?t }
  OPTIONAL { ?x dbp:birthDate ?d }
}";

/// A selective pattern on ?x before an OPTIONAL on ?x.
pub const PRUNE_QUERY: &str = "SELECT * WHERE {
  ?x dbo:wikiPageWikiLink dbr:President_of_the_United_States .
  OPTIONAL { ?x owl:sameAs ?y }
}";
