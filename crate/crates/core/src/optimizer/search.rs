//! Greedy per-level decisions, applied bottom-up over the tree.

use std::fmt;

use serde::Serialize;

use super::cost::{delta_cost, inject_cost, merge_cost, Affected, LocalCost, Model};
use super::transform::{
    apply_inject, apply_merge, coalesce_choices, merge_position_ok, receivable, source_bgp, undo,
    TransformKind, Transformation,
};
use crate::betree::{path_key, BeNode, BeTree, GroupNode};
use crate::engine::{CardEstimator, EngineError};
use crate::store::Store;

/// An accepted transformation, for plan explanation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformRecord {
    pub kind: TransformKind,
    /// Path of the group whose children were transformed.
    pub level: String,
    pub source: String,
    pub target: String,
    /// Labels of the BGPs the source was coalesced into, after the change.
    pub coalesced: Vec<String>,
    pub before: LocalCost,
    pub after: LocalCost,
    pub delta_cost: f64,
}

impl fmt::Display for TransformRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} into {} at {}: {} (delta_cost={:.3})",
            self.kind,
            self.source,
            self.target,
            self.level,
            self.coalesced.join(", "),
            self.delta_cost
        )
    }
}

/// Outcome of trying one transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub transformation: Transformation,
    pub before: LocalCost,
    pub after: LocalCost,
}

impl Trial {
    pub fn delta(&self) -> f64 {
        delta_cost(&self.before, &self.after)
    }
}

fn affected_in(
    model: &mut Model<'_>,
    group: &GroupNode,
    choice: Option<usize>,
) -> Result<Affected, EngineError> {
    match choice {
        Some(k) => model.affected(group, k),
        None => Ok(Affected {
            right: model.group_size(group)?,
            ..Affected::EMPTY
        }),
    }
}

fn union_branches(level: &GroupNode, u: usize) -> &[GroupNode] {
    let BeNode::Union(node) = &level.children[u] else {
        unreachable!("checked UNION")
    };
    &node.branches
}

/// Local cost of a merge around the source at `source` and the UNION at
/// `target`. For a level that already has the merge applied, new BGPs sit
/// at index 0 of the branches that had no chosen child.
pub fn local_cost_merge(
    model: &mut Model<'_>,
    level: &GroupNode,
    t: &Transformation,
    applied: bool,
) -> Result<LocalCost, EngineError> {
    let source = model.affected(level, t.source)?;
    let mut bgps = Vec::new();
    let mut sizes = Vec::new();
    for (branch, choice) in union_branches(level, t.target).iter().zip(&t.choice) {
        // a branch without a chosen BGP receives the source at its front
        let at = match (choice, applied) {
            (Some(k), _) => Some(*k),
            (None, true) => Some(0),
            (None, false) => None,
        };
        bgps.push(affected_in(model, branch, at)?);
        sizes.push(model.group_size(branch)?);
    }
    Ok(merge_cost(&source, &bgps, &sizes))
}

/// Local cost of an inject of the source into the OPTIONAL at `target`.
pub fn local_cost_inject(
    model: &mut Model<'_>,
    level: &GroupNode,
    t: &Transformation,
) -> Result<LocalCost, EngineError> {
    let source = model.affected(level, t.source)?;
    let BeNode::Optional(o) = &level.children[t.target] else {
        unreachable!("checked OPTIONAL")
    };
    let k = t.choice[0].expect("inject has a chosen BGP");
    let target = model.affected(&o.group, k)?;
    let size = model.group_size(&o.group)?;
    Ok(inject_cost(&source, &target, size))
}

/// The branch choices a merge may take: per branch, every coalescable BGP
/// child, or `None` when there is none. Empty when the merge is not
/// allowed at all.
fn merge_choices(level: &GroupNode, source: usize, target: usize) -> Vec<Vec<Option<usize>>> {
    let Ok(src) = source_bgp(level, source) else {
        return Vec::new();
    };
    if !matches!(level.children.get(target), Some(BeNode::Union(_)))
        || !merge_position_ok(level, source, target)
    {
        return Vec::new();
    }
    let branches = union_branches(level, target);
    if !branches.iter().all(|b| receivable(b, src)) {
        return Vec::new();
    }
    let sets: Vec<Vec<Option<usize>>> = branches
        .iter()
        .map(|branch| {
            let found = coalesce_choices(branch, src);
            if found.is_empty() {
                vec![None]
            } else {
                found.into_iter().map(Some).collect()
            }
        })
        .collect();
    if sets.iter().all(|s| s == &[None]) {
        return Vec::new();
    }
    let mut tuples: Vec<Vec<Option<usize>>> = vec![Vec::new()];
    for set in &sets {
        tuples = tuples
            .into_iter()
            .flat_map(|prefix| {
                set.iter().map(move |c| {
                    let mut next = prefix.clone();
                    next.push(*c);
                    next
                })
            })
            .collect();
    }
    tuples
}

/// Tries every branch-choice tuple and returns the cheapest trial, or
/// `None` when the merge is not allowed. The level is left unchanged.
pub fn decide_merge(
    model: &mut Model<'_>,
    level: &mut GroupNode,
    source: usize,
    target: usize,
) -> Result<Option<Trial>, EngineError> {
    let mut best: Option<Trial> = None;
    for choice in merge_choices(level, source, target) {
        let t = Transformation {
            kind: TransformKind::Merge,
            source,
            target,
            choice,
        };
        let before = local_cost_merge(model, level, &t, false)?;
        let snapshot = apply_merge(level, &t).expect("choices satisfy the preconditions");
        let after = local_cost_merge(model, level, &t, true);
        undo(level, snapshot);
        let trial = Trial {
            transformation: t,
            before,
            after: after?,
        };
        if best.as_ref().is_none_or(|b| trial.delta() < b.delta()) {
            best = Some(trial);
        }
    }
    Ok(best)
}

/// Tries injecting the source into the OPTIONAL once per coalescable BGP of
/// its group, keeping each inject whose delta cost is negative.
pub fn decide_inject(
    model: &mut Model<'_>,
    level: &mut GroupNode,
    source: usize,
    target: usize,
) -> Result<Vec<Trial>, EngineError> {
    let mut kept = Vec::new();
    let choices = {
        let Ok(src) = source_bgp(level, source) else {
            return Ok(kept);
        };
        match level.children.get(target) {
            Some(BeNode::Optional(o)) if target > source && receivable(&o.group, src) => {
                coalesce_choices(&o.group, src)
            }
            _ => return Ok(kept),
        }
    };
    for k in choices {
        let t = Transformation {
            kind: TransformKind::Inject,
            source,
            target,
            choice: vec![Some(k)],
        };
        let before = local_cost_inject(model, level, &t)?;
        let Ok(snapshot) = apply_inject(level, &t) else {
            continue;
        };
        let after = match local_cost_inject(model, level, &t) {
            Ok(after) => after,
            Err(e) => {
                undo(level, snapshot);
                return Err(e);
            }
        };
        let trial = Trial {
            transformation: t,
            before,
            after,
        };
        if trial.delta() >= 0.0 {
            undo(level, snapshot);
        } else {
            kept.push(trial);
        }
    }
    Ok(kept)
}

/// A level holding one BGP followed by one UNION or OPTIONAL is left to
/// candidate pruning.
fn skipped(level: &GroupNode) -> bool {
    matches!(
        &level.children[..],
        [BeNode::Bgp(_), BeNode::Union(_) | BeNode::Optional(_)]
    )
}

fn describe(level: &GroupNode, t: &Transformation, path: &[usize]) -> (String, Vec<String>) {
    let mut target_path = path.to_vec();
    target_path.push(t.target);
    let mut coalesced = Vec::new();
    match &level.children[t.target] {
        BeNode::Union(u) => {
            for (branch, choice) in u.branches.iter().zip(&t.choice) {
                let k = choice.unwrap_or(0);
                if let BeNode::Bgp(b) = &branch.children[k] {
                    coalesced.push(b.bgp.label());
                }
            }
            (format!("UNION@{}", path_key(&target_path)), coalesced)
        }
        BeNode::Optional(o) => {
            if let Some(Some(k)) = t.choice.first() {
                if let BeNode::Bgp(b) = &o.group.children[*k] {
                    coalesced.push(b.bgp.label());
                }
            }
            (format!("OPTIONAL@{}", path_key(&target_path)), coalesced)
        }
        _ => unreachable!("transformation targets are UNION or OPTIONAL nodes"),
    }
}

fn record(
    level: &GroupNode,
    trial: &Trial,
    source_label: String,
    path: &[usize],
) -> TransformRecord {
    let (target, coalesced) = describe(level, &trial.transformation, path);
    TransformRecord {
        kind: trial.transformation.kind,
        level: path_key(path),
        source: source_label,
        target,
        coalesced,
        before: trial.before,
        after: trial.after,
        delta_cost: trial.delta(),
    }
}

/// Decides merges and injects among the children of one group.
pub fn single_level_transform(
    model: &mut Model<'_>,
    level: &mut GroupNode,
    path: &[usize],
    log: &mut Vec<TransformRecord>,
) -> Result<(), EngineError> {
    if skipped(level) {
        return Ok(());
    }
    for i in 0..level.children.len() {
        let Ok(src) = source_bgp(level, i) else {
            continue;
        };
        let label = src.label();
        let mut best: Option<Trial> = None;
        for u in 0..level.children.len() {
            if !matches!(level.children[u], BeNode::Union(_)) {
                continue;
            }
            if let Some(trial) = decide_merge(model, level, i, u)? {
                if trial.delta() < best.as_ref().map_or(0.0, Trial::delta) {
                    best = Some(trial);
                }
            }
        }
        if let Some(trial) = best {
            apply_merge(level, &trial.transformation).expect("trial was applicable");
            log.push(record(level, &trial, label, path));
            // merged away: nothing left to inject
            continue;
        }
        for o in i + 1..level.children.len() {
            if !matches!(level.children[o], BeNode::Optional(_)) {
                continue;
            }
            for trial in decide_inject(model, level, i, o)? {
                log.push(record(level, &trial, label.clone(), path));
            }
        }
    }
    Ok(())
}

fn post_order(
    model: &mut Model<'_>,
    g: &mut GroupNode,
    path: &mut Vec<usize>,
    log: &mut Vec<TransformRecord>,
) -> Result<(), EngineError> {
    for i in 0..g.children.len() {
        path.push(i);
        match &mut g.children[i] {
            BeNode::Group(inner) => post_order(model, inner, path, log)?,
            BeNode::Union(u) => {
                for (j, branch) in u.branches.iter_mut().enumerate() {
                    path.push(j);
                    post_order(model, branch, path, log)?;
                    path.pop();
                }
            }
            BeNode::Optional(o) => post_order(model, &mut o.group, path, log)?,
            BeNode::Bgp(_) => {}
        }
        path.pop();
    }
    single_level_transform(model, g, path, log)
}

/// Transforms the whole tree bottom-up and attaches result-size estimates
/// to every BGP node. Returns the accepted transformations in order.
pub fn multi_level_transform(
    store: &Store,
    tree: &mut BeTree,
    estimator: &mut CardEstimator,
) -> Result<Vec<TransformRecord>, EngineError> {
    let mut model = Model { store, estimator };
    let mut log = Vec::new();
    post_order(&mut model, &mut tree.root, &mut Vec::new(), &mut log)?;
    annotate(&mut model, &mut tree.root)?;
    Ok(log)
}

/// Sets the estimate of every non-empty BGP node.
pub fn annotate_estimates(
    store: &Store,
    tree: &mut BeTree,
    estimator: &mut CardEstimator,
) -> Result<(), EngineError> {
    annotate(&mut Model { store, estimator }, &mut tree.root)
}

fn annotate(model: &mut Model<'_>, g: &mut GroupNode) -> Result<(), EngineError> {
    let mut result = Ok(());
    g.visit_bgps_mut(&mut |b| {
        if result.is_err() || b.bgp.is_empty() {
            return;
        }
        match model.bgp_size(&b.bgp) {
            Ok(size) => b.estimate = Some(size),
            Err(e) => result = Err(e),
        }
    });
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{bag_eq, reference_evaluate};
    use crate::betree::{betree_to_pattern, build_betree};
    use crate::sparql::parse_query;
    use crate::store::{StoreBuilder, Term};

    const EX: &str = "PREFIX ex: <http://ex/>\n";

    /// 2000 people with an alias each, two of them presidents, and a hub
    /// every person links to.
    fn people() -> Store {
        let mut b = StoreBuilder::default();
        let iri = |s: String| Term::iri(format!("http://ex/{s}"));
        for i in 0..2000 {
            let x = iri(format!("p{i}"));
            b.insert(x.clone(), iri("sameAs".into()), iri(format!("alias{i}")))
                .unwrap();
            b.insert(x.clone(), iri("knows".into()), iri("hub".into()))
                .unwrap();
            if i % 10 == 0 {
                b.insert(
                    x.clone(),
                    iri("birth".into()),
                    Term::literal(format!("{}", 1900 + i % 100)),
                )
                .unwrap();
            }
            if i < 2 {
                b.insert(x, iri("type".into()), iri("President".into()))
                    .unwrap();
            }
        }
        for i in 0..50 {
            b.insert(
                iri("hub".into()),
                iri("label".into()),
                Term::literal(format!("l{i}")),
            )
            .unwrap();
            b.insert(
                iri("hub".into()),
                iri("comment".into()),
                Term::literal(format!("c{i}")),
            )
            .unwrap();
        }
        b.build()
    }

    fn transformed(store: &Store, text: &str) -> (BeTree, BeTree, Vec<TransformRecord>) {
        let q = parse_query(&format!("{EX}{text}")).unwrap();
        let before = build_betree(&q);
        let mut after = before.clone();
        let log = multi_level_transform(store, &mut after, &mut CardEstimator::new(1)).unwrap();
        (before, after, log)
    }

    fn same_answers(store: &Store, a: &BeTree, b: &BeTree) -> bool {
        bag_eq(
            &reference_evaluate(&betree_to_pattern(a), store),
            &reference_evaluate(&betree_to_pattern(b), store),
        )
    }

    #[test]
    fn flat_query_unchanged() {
        let store = people();
        let (before, after, log) = transformed(
            &store,
            "SELECT * { ?x ex:sameAs ?y . ?x ex:type ex:President }",
        );
        assert!(log.is_empty());
        assert_eq!(before.explain(), after.explain().replace("  est=2.0", ""));
    }

    #[test]
    fn selective_source_is_injected() {
        let store = people();
        let (before, after, log) = transformed(
            &store,
            "SELECT * { ?x ex:type ex:President OPTIONAL { ?x ex:birth ?d } OPTIONAL { ?x ex:sameAs ?y } }",
        );
        let into_aliases: Vec<_> = log.iter().filter(|r| r.target == "OPTIONAL@2").collect();
        assert_eq!(into_aliases.len(), 1, "{log:?}");
        assert!(into_aliases[0].delta_cost < 0.0);
        assert_eq!(into_aliases[0].kind, TransformKind::Inject);
        assert!(
            after.explain().contains("BGP{t1 . t3}"),
            "{}",
            after.explain()
        );
        assert!(same_answers(&store, &before, &after));
    }

    #[test]
    fn single_optional_level_is_skipped() {
        let store = people();
        let (_, _, log) = transformed(
            &store,
            "SELECT * { ?x ex:type ex:President OPTIONAL { ?x ex:sameAs ?y } }",
        );
        assert!(log.is_empty());
    }

    #[test]
    fn hub_join_merge_rejected() {
        let store = people();
        let q = parse_query(&format!(
            "{EX}SELECT * {{ ?x ex:knows ?h OPTIONAL {{ ?x ex:birth ?d }} {{ ?h ex:label ?l }} UNION {{ ?h ex:comment ?c }} }}"
        ))
        .unwrap();
        let mut tree = build_betree(&q);
        let copy = tree.clone();
        let mut estimator = CardEstimator::new(1);
        let mut model = Model {
            store: &store,
            estimator: &mut estimator,
        };
        // the OPTIONAL sits between source and UNION
        assert!(decide_merge(&mut model, &mut tree.root, 0, 2)
            .unwrap()
            .is_none());

        let q = parse_query(&format!(
            "{EX}SELECT * {{ OPTIONAL {{ ?x ex:birth ?d }} ?x ex:knows ?h {{ ?h ex:label ?l }} UNION {{ ?h ex:comment ?c }} }}"
        ))
        .unwrap();
        let mut tree = build_betree(&q);
        let copy2 = tree.clone();
        let trial = decide_merge(&mut model, &mut tree.root, 1, 2)
            .unwrap()
            .unwrap();
        assert!(trial.delta() >= 0.0, "{trial:?}");
        assert_eq!(tree, copy2, "trial merges are undone");
        assert_eq!(copy, build_betree(&parse_query(&format!(
            "{EX}SELECT * {{ ?x ex:knows ?h OPTIONAL {{ ?x ex:birth ?d }} {{ ?h ex:label ?l }} UNION {{ ?h ex:comment ?c }} }}"
        )).unwrap()));
    }

    #[test]
    fn selective_source_is_merged() {
        let store = people();
        let (before, after, log) = transformed(
            &store,
            "SELECT * { ?x ex:type ex:President { ?x ex:sameAs ?y } UNION { ?x ex:knows ?h } OPTIONAL { ?x ex:birth ?d } }",
        );
        let merges: Vec<_> = log
            .iter()
            .filter(|r| r.kind == TransformKind::Merge)
            .collect();
        assert_eq!(merges.len(), 1, "{log:?}");
        assert!(merges[0].delta_cost < 0.0);
        assert!(same_answers(&store, &before, &after));
    }

    #[test]
    fn inner_levels_first() {
        let store = people();
        let (before, after, log) = transformed(
            &store,
            "SELECT * { ?x ex:type ex:President . ?x ex:knows ?h OPTIONAL { ?x ex:sameAs ?y . ?y ex:x ?w OPTIONAL { ?x ex:birth ?d } OPTIONAL { ?x ex:knows ?v } } OPTIONAL { ?x ex:birth ?e } }",
        );
        let levels: Vec<&str> = log.iter().map(|r| r.level.as_str()).collect();
        let mut sorted = levels.clone();
        sorted.sort_by_key(|l| l == &"root");
        assert_eq!(levels, sorted, "{log:?}");
        assert!(levels.iter().any(|l| *l != "root"), "{log:?}");
        assert!(levels.contains(&"root"), "{log:?}");
        assert!(same_answers(&store, &before, &after));
    }

    #[test]
    fn every_bgp_gets_an_estimate() {
        let store = people();
        let (_, after, _) = transformed(
            &store,
            "SELECT * { ?x ex:type ex:President OPTIONAL { ?x ex:sameAs ?y } { ?x ex:knows ?h } UNION { ?x ex:birth ?h } }",
        );
        after.root.visit_bgps(&mut Vec::new(), &mut |_, b| {
            assert_eq!(b.estimate.is_some(), !b.bgp.is_empty());
        });
    }
}
