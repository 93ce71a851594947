//! Merge and inject on one level of the tree, with snapshot undo.

use std::fmt;

use crate::betree::{BeNode, Bgp, BgpNode, GroupNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Merge,
    Inject,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Merge => "merge",
            TransformKind::Inject => "inject",
        })
    }
}

/// A transformation of the BGP child `source` of a level. For a merge,
/// `choice` holds one entry per UNION branch: the index of the BGP child
/// the source is coalesced with, or `None` to insert it uncoalesced. For
/// an inject it holds the single chosen BGP child of the OPTIONAL group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transformation {
    pub kind: TransformKind,
    pub source: usize,
    pub target: usize,
    pub choice: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("child {0} is not a non-empty BGP node")]
    NotBgp(usize),
    #[error("child {0} is not a {1} node")]
    WrongTarget(usize, &'static str),
    #[error("an OPTIONAL lies between the source and the UNION")]
    OptionalBetween,
    #[error("the OPTIONAL is not to the right of the source")]
    NotRightOf,
    #[error("choice does not fit the target: {0}")]
    BadChoice(String),
    #[error("no branch has a BGP coalescable with the source")]
    NothingCoalescable,
    #[error("an OPTIONAL in the receiving group shares an unbound variable with the source")]
    NotReceivable,
}

/// State of a level before a transformation, for undo.
#[derive(Debug, Clone)]
pub struct Snapshot(GroupNode);

pub fn undo(level: &mut GroupNode, snapshot: Snapshot) {
    *level = snapshot.0;
}

pub(crate) fn source_bgp(level: &GroupNode, i: usize) -> Result<&Bgp, TransformError> {
    match level.children.get(i) {
        Some(BeNode::Bgp(b)) if !b.bgp.is_empty() => Ok(&b.bgp),
        _ => Err(TransformError::NotBgp(i)),
    }
}

/// Whether `group` can take `source` as its leftmost child without
/// changing what joining the two would give. Each OPTIONAL child must only
/// share variables with the source that the children before it bind for
/// certain; otherwise the OPTIONAL would see the source's bindings early.
pub(crate) fn receivable(group: &GroupNode, source: &Bgp) -> bool {
    let vars = source.variables();
    group
        .children
        .iter()
        .enumerate()
        .all(|(j, child)| match child {
            BeNode::Optional(_) => {
                let certain = group.certain_before(j);
                child
                    .variables()
                    .intersection(&vars)
                    .all(|v| certain.contains(v))
            }
            _ => true,
        })
}

/// BGP children of `group` the source could be coalesced with.
pub(crate) fn coalesce_choices(group: &GroupNode, source: &Bgp) -> Vec<usize> {
    group
        .children
        .iter()
        .enumerate()
        .filter_map(|(k, child)| match child {
            BeNode::Bgp(b) if !b.bgp.is_empty() && b.bgp.coalescable(source) => Some(k),
            _ => None,
        })
        .collect()
}

/// Positional check for a merge: only joins may separate source and UNION.
pub(crate) fn merge_position_ok(level: &GroupNode, source: usize, target: usize) -> bool {
    let (lo, hi) = if source < target {
        (source, target)
    } else {
        (target, source)
    };
    !level.children[lo + 1..hi]
        .iter()
        .any(|c| matches!(c, BeNode::Optional(_)))
}

fn coalesce_into(group: &mut GroupNode, choice: Option<usize>, source: &Bgp) {
    match choice {
        Some(k) => {
            let BeNode::Bgp(b) = &mut group.children[k] else {
                unreachable!("checked choice")
            };
            b.bgp.absorb(source);
            b.estimate = None;
        }
        None => group
            .children
            .insert(0, BeNode::Bgp(BgpNode::new(source.clone()))),
    }
}

fn check_choice(
    group: &GroupNode,
    choice: Option<usize>,
    source: &Bgp,
) -> Result<(), TransformError> {
    match choice {
        None => Ok(()),
        Some(k) if coalesce_choices(group, source).contains(&k) => Ok(()),
        Some(k) => Err(TransformError::BadChoice(format!(
            "child {k} cannot absorb the source"
        ))),
    }
}

/// Moves the source BGP into every branch of the UNION and leaves an empty
/// BGP at its old position.
pub fn apply_merge(level: &mut GroupNode, t: &Transformation) -> Result<Snapshot, TransformError> {
    let source = source_bgp(level, t.source)?.clone();
    let Some(BeNode::Union(u)) = level.children.get(t.target) else {
        return Err(TransformError::WrongTarget(t.target, "UNION"));
    };
    if !merge_position_ok(level, t.source, t.target) {
        return Err(TransformError::OptionalBetween);
    }
    if t.choice.len() != u.branches.len() {
        return Err(TransformError::BadChoice(format!(
            "{} entries for {} branches",
            t.choice.len(),
            u.branches.len()
        )));
    }
    if t.choice.iter().all(Option::is_none) {
        return Err(TransformError::NothingCoalescable);
    }
    for (branch, choice) in u.branches.iter().zip(&t.choice) {
        if !receivable(branch, &source) {
            return Err(TransformError::NotReceivable);
        }
        check_choice(branch, *choice, &source)?;
    }
    let snapshot = Snapshot(level.clone());
    let BeNode::Union(u) = &mut level.children[t.target] else {
        unreachable!()
    };
    for (branch, choice) in u.branches.iter_mut().zip(&t.choice) {
        coalesce_into(branch, *choice, &source);
    }
    level.children[t.source] = BeNode::Bgp(BgpNode::new(Bgp::default()));
    Ok(snapshot)
}

/// Copies the source BGP into the OPTIONAL group, coalesced with the
/// chosen child. The source stays in place.
pub fn apply_inject(level: &mut GroupNode, t: &Transformation) -> Result<Snapshot, TransformError> {
    let source = source_bgp(level, t.source)?.clone();
    let Some(BeNode::Optional(o)) = level.children.get(t.target) else {
        return Err(TransformError::WrongTarget(t.target, "OPTIONAL"));
    };
    if t.target <= t.source {
        return Err(TransformError::NotRightOf);
    }
    let [Some(k)] = t.choice[..] else {
        return Err(TransformError::BadChoice(
            "inject needs exactly one chosen BGP".into(),
        ));
    };
    if !receivable(&o.group, &source) {
        return Err(TransformError::NotReceivable);
    }
    check_choice(&o.group, Some(k), &source)?;
    let snapshot = Snapshot(level.clone());
    let BeNode::Optional(o) = &mut level.children[t.target] else {
        unreachable!()
    };
    coalesce_into(&mut o.group, Some(k), &source);
    Ok(snapshot)
}
