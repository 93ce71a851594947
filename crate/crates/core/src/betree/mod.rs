//! The BGP-based evaluation tree: group, UNION and OPTIONAL nodes over BGP
//! leaves.

mod build;
mod metrics;

use std::collections::BTreeSet;
use std::fmt;

use crate::sparql::{Projection, TriplePattern, Variable};

pub use build::{betree_to_pattern, build_betree};
pub use metrics::{count_bgp, depth, join_space, JoinSpaceError, Metrics};

/// A triple pattern together with its 1-based position in the query text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledTriple {
    pub label: usize,
    pub pattern: TriplePattern,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Bgp {
    pub triples: Vec<LabeledTriple>,
}

impl Bgp {
    pub fn new(triples: Vec<LabeledTriple>) -> Self {
        Bgp { triples }
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn patterns(&self) -> impl Iterator<Item = &TriplePattern> {
        self.triples.iter().map(|t| &t.pattern)
    }

    pub fn variables(&self) -> BTreeSet<Variable> {
        self.patterns()
            .flat_map(|t| t.variables().cloned())
            .collect()
    }

    /// Shares a subject/object variable with `other`.
    pub fn coalescable(&self, other: &Bgp) -> bool {
        self.patterns()
            .any(|a| other.patterns().any(|b| a.coalescable(b)))
    }

    /// Adds the triples of `other` that are not already present.
    pub fn absorb(&mut self, other: &Bgp) {
        for t in &other.triples {
            if !self.triples.iter().any(|own| own.pattern == t.pattern) {
                self.triples.push(t.clone());
            }
        }
        self.triples.sort_by_key(|t| t.label);
    }

    /// Order-independent identity of the pattern set, used as a cache key.
    pub fn signature(&self) -> Vec<TriplePattern> {
        let mut sig: Vec<TriplePattern> = self.patterns().cloned().collect();
        sig.sort();
        sig.dedup();
        sig
    }

    pub fn label(&self) -> String {
        if self.triples.is_empty() {
            return "{}".to_string();
        }
        let labels: Vec<String> = self
            .triples
            .iter()
            .map(|t| format!("t{}", t.label))
            .collect();
        format!("BGP{{{}}}", labels.join(" . "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BgpNode {
    pub bgp: Bgp,
    /// Result-size estimate attached by the optimizer, if it ran.
    pub estimate: Option<f64>,
}

impl BgpNode {
    pub fn new(bgp: Bgp) -> Self {
        BgpNode {
            bgp,
            estimate: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupNode {
    pub children: Vec<BeNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnionNode {
    pub branches: Vec<GroupNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionalNode {
    pub group: GroupNode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BeNode {
    Group(GroupNode),
    Bgp(BgpNode),
    Union(UnionNode),
    Optional(OptionalNode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeTree {
    pub root: GroupNode,
    pub projection: Projection,
    /// Coalescing opportunities that were declined to preserve semantics.
    pub notes: Vec<String>,
}

impl BeNode {
    pub fn variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<Variable>) {
        match self {
            BeNode::Bgp(b) => out.extend(b.bgp.variables()),
            BeNode::Group(g) => g.collect_variables(out),
            BeNode::Union(u) => u.branches.iter().for_each(|g| g.collect_variables(out)),
            BeNode::Optional(o) => o.group.collect_variables(out),
        }
    }

    /// Variables bound in every solution of this node.
    pub fn certain_variables(&self) -> BTreeSet<Variable> {
        match self {
            BeNode::Bgp(b) => b.bgp.variables(),
            BeNode::Group(g) => g.certain_variables(),
            BeNode::Union(u) => {
                let mut branches = u.branches.iter().map(GroupNode::certain_variables);
                let first = branches.next().unwrap_or_default();
                branches.fold(first, |acc, b| acc.intersection(&b).cloned().collect())
            }
            BeNode::Optional(_) => BTreeSet::new(),
        }
    }

    pub fn as_bgp(&self) -> Option<&BgpNode> {
        match self {
            BeNode::Bgp(b) => Some(b),
            _ => None,
        }
    }
}

impl GroupNode {
    pub fn new(children: Vec<BeNode>) -> Self {
        GroupNode { children }
    }

    pub fn variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<Variable>) {
        self.children.iter().for_each(|c| c.collect_variables(out));
    }

    pub fn certain_variables(&self) -> BTreeSet<Variable> {
        self.certain_before(self.children.len())
    }

    /// Variables bound in every solution of the first `n` children.
    pub fn certain_before(&self, n: usize) -> BTreeSet<Variable> {
        self.children[..n]
            .iter()
            .flat_map(BeNode::certain_variables)
            .collect()
    }

    /// Calls `f` on every BGP node below this group together with its path.
    pub fn visit_bgps<'a>(
        &'a self,
        path: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize], &'a BgpNode),
    ) {
        for (i, child) in self.children.iter().enumerate() {
            path.push(i);
            match child {
                BeNode::Bgp(b) => f(path, b),
                BeNode::Group(g) => g.visit_bgps(path, f),
                BeNode::Union(u) => {
                    for (j, branch) in u.branches.iter().enumerate() {
                        path.push(j);
                        branch.visit_bgps(path, f);
                        path.pop();
                    }
                }
                BeNode::Optional(o) => o.group.visit_bgps(path, f),
            }
            path.pop();
        }
    }

    pub fn visit_bgps_mut(&mut self, f: &mut impl FnMut(&mut BgpNode)) {
        for child in &mut self.children {
            match child {
                BeNode::Bgp(b) => f(b),
                BeNode::Group(g) => g.visit_bgps_mut(f),
                BeNode::Union(u) => u.branches.iter_mut().for_each(|g| g.visit_bgps_mut(f)),
                BeNode::Optional(o) => o.group.visit_bgps_mut(f),
            }
        }
    }
}

/// Dotted path of a node: group child indexes, with a UNION contributing
/// the branch index and an OPTIONAL contributing nothing.
pub fn path_key(path: &[usize]) -> String {
    if path.is_empty() {
        return "root".to_string();
    }
    let parts: Vec<String> = path.iter().map(|i| i.to_string()).collect();
    parts.join(".")
}

impl BeTree {
    pub fn bgp_count(&self) -> usize {
        let mut n = 0;
        self.root.visit_bgps(&mut Vec::new(), &mut |_, b| {
            if !b.bgp.is_empty() {
                n += 1
            }
        });
        n
    }

    /// Indented plan text, one node per line.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        write_group(&self.root, 0, &mut out);
        out
    }
}

impl fmt::Display for BeTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.explain())
    }
}

fn write_group(g: &GroupNode, indent: usize, out: &mut String) {
    out.push_str(&"  ".repeat(indent));
    out.push_str("GROUP\n");
    for child in &g.children {
        write_node(child, indent + 1, out);
    }
}

fn write_node(node: &BeNode, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match node {
        BeNode::Group(g) => write_group(g, indent, out),
        BeNode::Bgp(b) => {
            out.push_str(&pad);
            out.push_str(&b.bgp.label());
            if let Some(est) = b.estimate {
                out.push_str(&format!("  est={est:.1}"));
            }
            out.push('\n');
        }
        BeNode::Union(u) => {
            out.push_str(&format!("{pad}UNION({} branches)\n", u.branches.len()));
            for g in &u.branches {
                write_group(g, indent + 1, out);
            }
        }
        BeNode::Optional(o) => {
            out.push_str(&pad);
            out.push_str("OPTIONAL\n");
            write_group(&o.group, indent + 1, out);
        }
    }
}
