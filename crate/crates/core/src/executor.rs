//! Tree evaluation with optional candidate pruning.
//!
//! Children of a group are accumulated left to right into `r`: groups, BGPs
//! and UNIONs are joined in, OPTIONALs are left-outer-joined. Under the
//! pruning modes the bindings already in `r` are handed down as candidates.
//! A BGP is restricted by the candidates its level received, and nested
//! groups, UNION branches and OPTIONAL groups receive the current `r`.
//! Candidates from above never reach into an OPTIONAL: only rows that are
//! mandatory for the level may be dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::algebra::{compatible, Bag, Mapping};
use crate::betree::{join_space, path_key, BeNode, BeTree, GroupNode, JoinSpaceError, Metrics};
use crate::engine::{evaluate_bgp, CandidateSet, CardEstimator, EngineError};
use crate::optimizer::{self, TransformRecord};
use crate::sparql::{Projection, Query, Variable};
use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Plain evaluation of the constructed tree.
    Base,
    /// Tree transformations only.
    Tt,
    /// Candidate pruning only, with the fixed threshold.
    Cp,
    /// Transformations plus pruning with the adaptive threshold.
    Full,
}

impl Mode {
    pub fn transforms(self) -> bool {
        matches!(self, Mode::Tt | Mode::Full)
    }

    pub fn prunes(self) -> bool {
        matches!(self, Mode::Cp | Mode::Full)
    }

    pub fn policy(self) -> ThresholdPolicy {
        match self {
            Mode::Full => ThresholdPolicy::Adaptive,
            _ => ThresholdPolicy::Fixed,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Mode::Base),
            "tt" => Ok(Mode::Tt),
            "cp" => Ok(Mode::Cp),
            "full" => Ok(Mode::Full),
            other => Err(format!(
                "unknown mode '{other}' (expected base, tt, cp or full)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThresholdPolicy {
    /// A fixed fraction of the store size.
    Fixed,
    /// The BGP's own result-size estimate, or the fixed threshold without one.
    Adaptive,
}

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub mode: Mode,
    pub fixed_ratio: f64,
    pub parallel: bool,
    pub timeout: Option<Duration>,
    pub seed: u64,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            mode: Mode::Base,
            fixed_ratio: 0.01,
            parallel: false,
            timeout: None,
            seed: 0,
        }
    }
}

impl ExecOptions {
    pub fn with_mode(mode: Mode) -> Self {
        ExecOptions {
            mode,
            ..ExecOptions::default()
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExecStats {
    /// Result size of every evaluated BGP node, keyed by node path.
    pub per_bgp_result_size: BTreeMap<String, u64>,
    pub join_space: f64,
    pub wall_time_us: u64,
    pub transform_time_us: u64,
    pub pruned_bgp_count: usize,
    /// Intermediate rows produced inside BGP evaluation.
    pub bgp_rows_materialized: u64,
    pub result_size: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    JoinSpace(#[from] JoinSpaceError),
    #[error("query exceeded the time limit of {0} us")]
    Timeout(u128),
}

#[derive(Default)]
struct Collector {
    sizes: BTreeMap<String, u64>,
    pruned: usize,
    rows: u64,
}

struct Exec<'a> {
    store: &'a Store,
    opts: &'a ExecOptions,
    deadline: Option<Instant>,
    collector: Mutex<Collector>,
}

/// Evaluates a tree. The returned bag is not projected.
pub fn evaluate(
    store: &Store,
    tree: &BeTree,
    opts: &ExecOptions,
) -> Result<(Bag, ExecStats), ExecError> {
    let started = Instant::now();
    let exec = Exec {
        store,
        opts,
        deadline: opts.timeout.map(|t| started + t),
        collector: Mutex::new(Collector::default()),
    };
    let bag = exec.group(&tree.root, None, &mut Vec::new())?;
    let collected = exec.collector.into_inner().expect("collector poisoned");
    let mut stats = ExecStats {
        join_space: 0.0,
        wall_time_us: started.elapsed().as_micros() as u64,
        transform_time_us: 0,
        pruned_bgp_count: collected.pruned,
        bgp_rows_materialized: collected.rows,
        result_size: bag.len(),
        per_bgp_result_size: collected.sizes,
    };
    let sizes: HashMap<String, u64> = stats
        .per_bgp_result_size
        .iter()
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    stats.join_space = join_space(tree, &sizes)?;
    Ok((bag, stats))
}

fn domain_of(bag: &[Mapping]) -> BTreeSet<Variable> {
    bag.iter().flat_map(|m| m.domain().cloned()).collect()
}

fn candidates(r: &[Mapping], target: &BTreeSet<Variable>) -> Option<CandidateSet> {
    let shared: Vec<Variable> = domain_of(r).intersection(target).cloned().collect();
    if shared.is_empty() {
        return None;
    }
    Some(CandidateSet::from_bag(r, shared))
}

fn is_identity(bag: &[Mapping]) -> bool {
    bag.len() == 1 && bag[0].is_empty()
}

impl Exec<'_> {
    fn check_deadline(&self) -> Result<(), ExecError> {
        match (self.deadline, self.opts.timeout) {
            (Some(d), Some(t)) if Instant::now() > d => Err(ExecError::Timeout(t.as_micros())),
            _ => Ok(()),
        }
    }

    fn threshold(&self, estimate: Option<f64>) -> f64 {
        let fixed = self.opts.fixed_ratio * self.store.len() as f64;
        match (self.opts.mode.policy(), estimate) {
            (ThresholdPolicy::Adaptive, Some(est)) => est,
            _ => fixed,
        }
    }

    fn group(
        &self,
        g: &GroupNode,
        cand: Option<&CandidateSet>,
        path: &mut Vec<usize>,
    ) -> Result<Bag, ExecError> {
        let prunes = self.opts.mode.prunes();
        let mut r: Bag = vec![Mapping::new()];
        let mut accumulated = false;
        for (i, child) in g.children.iter().enumerate() {
            path.push(i);
            // candidates for nested levels: the current r, or what this
            // level received while nothing is accumulated yet
            let inner_cand = |vars: BTreeSet<Variable>| -> Option<CandidateSet> {
                if !prunes {
                    None
                } else if accumulated {
                    candidates(&r, &vars)
                } else {
                    cand.cloned()
                }
            };
            match child {
                BeNode::Bgp(b) => {
                    let result = self.bgp(b, if prunes { cand } else { None }, path)?;
                    r = hash_join(&r, &result);
                }
                BeNode::Group(inner) => {
                    let c = inner_cand(inner.variables());
                    let result = self.group(inner, c.as_ref(), path)?;
                    r = hash_join(&r, &result);
                }
                BeNode::Union(u) => {
                    let c = inner_cand(child.variables());
                    let result = self.union(&u.branches, c.as_ref(), path)?;
                    r = hash_join(&r, &result);
                }
                BeNode::Optional(o) => {
                    // never the level's own candidates
                    let c = if prunes && accumulated {
                        candidates(&r, &o.group.variables())
                    } else {
                        None
                    };
                    let result = self.group(&o.group, c.as_ref(), path)?;
                    r = left_outer_hash_join(&r, &result);
                }
            }
            accumulated = true;
            path.pop();
        }
        Ok(r)
    }

    fn union(
        &self,
        branches: &[GroupNode],
        cand: Option<&CandidateSet>,
        path: &[usize],
    ) -> Result<Bag, ExecError> {
        let run = |(j, branch): (usize, &GroupNode)| -> Result<Bag, ExecError> {
            let mut p = path.to_vec();
            p.push(j);
            self.group(branch, cand, &mut p)
        };
        #[cfg(feature = "parallel")]
        if self.opts.parallel {
            use rayon::prelude::*;
            let parts: Vec<Result<Bag, ExecError>> =
                branches.par_iter().enumerate().map(run).collect();
            let mut out = Vec::new();
            for part in parts {
                out.extend(part?);
            }
            return Ok(out);
        }
        let mut out = Vec::new();
        for part in branches.iter().enumerate() {
            out.extend(run(part)?);
        }
        Ok(out)
    }

    fn bgp(
        &self,
        node: &crate::betree::BgpNode,
        cand: Option<&CandidateSet>,
        path: &[usize],
    ) -> Result<Bag, ExecError> {
        self.check_deadline()?;
        let patterns: Vec<_> = node.bgp.patterns().cloned().collect();
        let applied = cand.filter(|c| (c.len() as f64) < self.threshold(node.estimate));
        let out = evaluate_bgp(self.store, &patterns, applied, self.opts.parallel)?;
        let mut collector = self.collector.lock().expect("collector poisoned");
        if !node.bgp.is_empty() {
            collector.sizes.insert(path_key(path), out.bag.len() as u64);
        }
        collector.rows += out.rows_materialized;
        if out.pruned {
            collector.pruned += 1;
        }
        Ok(out.bag)
    }
}

/// Variables bound in every mapping of the bag.
fn always_bound(bag: &[Mapping]) -> BTreeSet<Variable> {
    let mut iter = bag.iter();
    let Some(first) = iter.next() else {
        return BTreeSet::new();
    };
    let mut set: BTreeSet<Variable> = first.domain().cloned().collect();
    for m in iter {
        set.retain(|v| m.get(v).is_some());
    }
    set
}

type Key = Vec<crate::store::TermId>;

fn key_of(m: &Mapping, vars: &[Variable]) -> Key {
    vars.iter()
        .map(|v| m.get(v).expect("key variable bound"))
        .collect()
}

fn index(bag: &[Mapping], vars: &[Variable]) -> HashMap<Key, Vec<usize>> {
    let mut map: HashMap<Key, Vec<usize>> = HashMap::new();
    for (i, m) in bag.iter().enumerate() {
        map.entry(key_of(m, vars)).or_default().push(i);
    }
    map
}

fn join_keys(a: &[Mapping], b: &[Mapping]) -> Vec<Variable> {
    always_bound(a)
        .intersection(&always_bound(b))
        .cloned()
        .collect()
}

/// Bag join hashed on the variables bound on both sides in every row.
pub fn hash_join(a: &[Mapping], b: &[Mapping]) -> Bag {
    if is_identity(a) {
        return b.to_vec();
    }
    if is_identity(b) {
        return a.to_vec();
    }
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let keys = join_keys(a, b);
    let (build, probe, build_left) = if a.len() <= b.len() {
        (a, b, true)
    } else {
        (b, a, false)
    };
    let table = index(build, &keys);
    let mut out = Vec::new();
    for p in probe {
        if let Some(matches) = table.get(&key_of(p, &keys)) {
            for &i in matches {
                let m = &build[i];
                if compatible(m, p) {
                    out.push(if build_left { m.merge(p) } else { p.merge(m) });
                }
            }
        }
    }
    out
}

/// Left outer join with the same hashing as [`hash_join`].
pub fn left_outer_hash_join(a: &[Mapping], b: &[Mapping]) -> Bag {
    if b.is_empty() {
        return a.to_vec();
    }
    let keys = join_keys(a, b);
    let table = index(b, &keys);
    let mut out = Vec::new();
    for m in a {
        let mut matched = false;
        if let Some(candidates) = table.get(&key_of(m, &keys)) {
            for &i in candidates {
                if compatible(m, &b[i]) {
                    out.push(m.merge(&b[i]));
                    matched = true;
                }
            }
        }
        if !matched {
            out.push(m.clone());
        }
    }
    out
}

/// Restricts each mapping to the projected variables.
pub fn projection(bag: &[Mapping], projection: &Projection) -> Bag {
    match projection {
        Projection::All => bag.to_vec(),
        Projection::Vars(vars) => crate::algebra::project(bag, vars),
    }
}

/// Everything produced for one query.
#[derive(Debug, Clone)]
pub struct QueryRun {
    pub metrics: Metrics,
    pub before: BeTree,
    pub after: BeTree,
    pub transformations: Vec<TransformRecord>,
    /// Projected solutions.
    pub bag: Bag,
    pub stats: ExecStats,
}

/// Builds, optionally transforms, and evaluates a parsed query.
pub fn run_query(store: &Store, query: &Query, opts: &ExecOptions) -> Result<QueryRun, ExecError> {
    let before = crate::betree::build_betree(query);
    let metrics = Metrics::of_tree(&before);
    let mut after = before.clone();
    let started = Instant::now();
    let mut transformations = Vec::new();
    if opts.mode.transforms() {
        let mut estimator = CardEstimator::new(opts.seed);
        transformations = optimizer::multi_level_transform(store, &mut after, &mut estimator)?;
    }
    let transform_time = started.elapsed();
    let (bag, mut stats) = evaluate(store, &after, opts)?;
    stats.transform_time_us = transform_time.as_micros() as u64;
    let bag = projection(&bag, &query.projection);
    Ok(QueryRun {
        metrics,
        before,
        after,
        transformations,
        bag,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{bag_eq, join, left_outer_join, reference_evaluate};
    use crate::betree::build_betree;
    use crate::sparql::parse_query;
    use crate::store::TermId;
    use proptest::prelude::*;

    const FIG2A: &str = "PREFIX dbo: <http://dbpedia.org/ontology/>
PREFIX dbr: <http://dbpedia.org/resource/>
PREFIX dbp: <http://dbpedia.org/property/>
PREFIX foaf: <http://xmlns.com/foaf/0.1/>
PREFIX rdfs: <http://www.w3.org/2000/01/rdf-schema#>
PREFIX owl: <http://www.w3.org/2002/07/owl#>
SELECT * WHERE {
  ?v1 dbo:wikiPageWikiLink dbr:President_of_the_United_States .
  { ?v1 foaf:name ?v2 } UNION { ?v1 rdfs:label ?v2 }
  OPTIONAL { ?v1 owl:sameAs ?v3 . OPTIONAL { ?v3 dbo:wikiPageWikiLink ?v4 } }
  ?v1 dbp:birthDate ?v7 .
}";

    fn table1() -> Store {
        Store::load_ntriples(include_str!("../tests/fixtures/table1.nt").as_bytes()).unwrap()
    }

    fn arb_bag() -> impl Strategy<Value = Bag> {
        prop::collection::vec(
            prop::collection::vec((0usize..3, 0u32..3), 0..3).prop_map(|pairs| {
                Mapping::from_pairs(
                    pairs
                        .into_iter()
                        .map(|(v, id)| (Variable::new(["a", "b", "c"][v]), TermId(id))),
                )
            }),
            0..6,
        )
    }

    proptest! {
        #[test]
        fn hash_joins_match_naive(a in arb_bag(), b in arb_bag()) {
            prop_assert!(bag_eq(&hash_join(&a, &b), &join(&a, &b)));
            prop_assert!(bag_eq(&left_outer_hash_join(&a, &b), &left_outer_join(&a, &b)));
        }
    }

    #[test]
    fn optional_with_empty_right_keeps_left() {
        let store = table1();
        let q = parse_query("SELECT * { ?s <http://xmlns.com/foaf/0.1/name> ?n OPTIONAL { ?s <http://nowhere> ?z } }").unwrap();
        let (bag, _) = evaluate(&store, &build_betree(&q), &ExecOptions::default()).unwrap();
        assert_eq!(bag.len(), 2);
    }

    #[test]
    fn all_modes_match_reference_on_table1() {
        let store = table1();
        let q = parse_query(FIG2A).unwrap();
        let want = reference_evaluate(&q.body, &store);
        for mode in [Mode::Base, Mode::Tt, Mode::Cp, Mode::Full] {
            let run = run_query(&store, &q, &ExecOptions::with_mode(mode)).unwrap();
            assert!(bag_eq(&run.bag, &want), "{mode:?}");
        }
    }

    #[test]
    fn projection_examples() {
        let m = Mapping::from_pairs([
            (Variable::new("a"), TermId(1)),
            (Variable::new("b"), TermId(2)),
        ]);
        let bag = vec![m.clone(), m];
        assert_eq!(projection(&bag, &Projection::All), bag);
        let p = projection(&bag, &Projection::Vars(vec![Variable::new("z")]));
        assert_eq!(p, vec![Mapping::new(), Mapping::new()]);
        assert_eq!(
            projection(&bag, &Projection::Vars(vec![Variable::new("a")]))[0].len(),
            1
        );
    }

    #[test]
    fn timeout_reported() {
        let store = table1();
        let q = parse_query("SELECT * { ?s ?p ?o }").unwrap();
        let opts = ExecOptions {
            timeout: Some(Duration::ZERO),
            ..ExecOptions::default()
        };
        std::thread::sleep(Duration::from_millis(1));
        assert!(matches!(
            evaluate(&store, &build_betree(&q), &opts),
            Err(ExecError::Timeout(_))
        ));
    }
}
