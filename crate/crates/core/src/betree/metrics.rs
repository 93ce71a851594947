use std::collections::HashMap;

use serde::Serialize;

use super::{path_key, BeNode, BeTree, GroupNode};
use crate::sparql::GraphPattern;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub count_bgp: usize,
    pub depth: usize,
}

impl Metrics {
    /// Metrics of the pattern the tree stands for, i.e. after coalescing.
    pub fn of_tree(t: &BeTree) -> Self {
        let p = super::betree_to_pattern(t);
        Metrics {
            count_bgp: count_bgp(&p),
            depth: depth(&p),
        }
    }
}

/// Number of BGPs; the empty BGP standing in for a missing OPTIONAL left
/// operand is not counted.
pub fn count_bgp(p: &GraphPattern) -> usize {
    match p {
        GraphPattern::Bgp(triples) => usize::from(!triples.is_empty()),
        GraphPattern::Group(inner) => count_bgp(inner),
        GraphPattern::And(l, r) | GraphPattern::Union(l, r) | GraphPattern::Optional(l, r) => {
            count_bgp(l) + count_bgp(r)
        }
    }
}

/// Maximum nesting of braced groups.
pub fn depth(p: &GraphPattern) -> usize {
    match p {
        GraphPattern::Bgp(_) => 0,
        GraphPattern::Group(inner) => depth(inner) + 1,
        GraphPattern::And(l, r) | GraphPattern::Union(l, r) | GraphPattern::Optional(l, r) => {
            depth(l).max(depth(r))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no result size recorded for BGP node at {0}")]
pub struct JoinSpaceError(pub String);

/// Join space: BGP result sizes multiplied across joins and OPTIONALs and
/// added across UNION branches. `sizes` is keyed by [`path_key`].
pub fn join_space(t: &BeTree, sizes: &HashMap<String, u64>) -> Result<f64, JoinSpaceError> {
    group_space(&t.root, &mut Vec::new(), sizes)
}

fn group_space(
    g: &GroupNode,
    path: &mut Vec<usize>,
    sizes: &HashMap<String, u64>,
) -> Result<f64, JoinSpaceError> {
    let mut product = 1.0;
    for (i, child) in g.children.iter().enumerate() {
        path.push(i);
        product *= node_space(child, path, sizes)?;
        path.pop();
    }
    Ok(product)
}

fn node_space(
    node: &BeNode,
    path: &mut Vec<usize>,
    sizes: &HashMap<String, u64>,
) -> Result<f64, JoinSpaceError> {
    match node {
        BeNode::Bgp(b) if b.bgp.is_empty() => Ok(1.0),
        BeNode::Bgp(_) => {
            let key = path_key(path);
            sizes
                .get(&key)
                .map(|n| *n as f64)
                .ok_or(JoinSpaceError(key))
        }
        BeNode::Group(g) => group_space(g, path, sizes),
        BeNode::Union(u) => {
            let mut sum = 0.0;
            for (j, branch) in u.branches.iter().enumerate() {
                path.push(j);
                sum += group_space(branch, path, sizes)?;
                path.pop();
            }
            Ok(sum)
        }
        BeNode::Optional(o) => group_space(&o.group, path, sizes),
    }
}
