use std::collections::BTreeSet;

use super::{BeNode, BeTree, Bgp, BgpNode, GroupNode, LabeledTriple, OptionalNode, UnionNode};
use crate::sparql::{GraphPattern, Query, Variable};

enum Element {
    Triple(LabeledTriple),
    Node(BeNode),
}

struct Builder {
    next_label: usize,
    notes: Vec<String>,
}

/// Builds the evaluation tree of a parsed query.
///
/// Within each group, triple patterns are coalesced into BGP nodes placed at
/// the leftmost constituent's position. A pattern is only moved left past a
/// UNION or OPTIONAL sibling when every variable it shares with that sibling
/// is already bound by the BGP it joins; otherwise it stays where it is and a
/// note records the declined move.
pub fn build_betree(q: &Query) -> BeTree {
    let mut builder = Builder {
        next_label: 1,
        notes: Vec::new(),
    };
    let root = match &q.body {
        GraphPattern::Group(inner) => builder.group(inner),
        other => builder.group(other),
    };
    let mut notes: Vec<String> = Vec::new();
    for note in builder.notes {
        if !notes.contains(&note) {
            notes.push(note);
        }
    }
    BeTree {
        root,
        projection: q.projection.clone(),
        notes,
    }
}

impl Builder {
    fn group(&mut self, inner: &GraphPattern) -> GroupNode {
        let mut elements = Vec::new();
        self.flatten(inner, &mut elements);
        let mut children: Vec<BeNode> = Vec::new();
        for element in elements {
            match element {
                Element::Node(node) => children.push(node),
                Element::Triple(t) => self.place(&mut children, t),
            }
        }
        GroupNode::new(children)
    }

    fn flatten(&mut self, p: &GraphPattern, out: &mut Vec<Element>) {
        match p {
            GraphPattern::Bgp(triples) => {
                for t in triples {
                    let label = self.next_label;
                    self.next_label += 1;
                    out.push(Element::Triple(LabeledTriple {
                        label,
                        pattern: t.clone(),
                    }));
                }
            }
            GraphPattern::And(l, r) => {
                self.flatten(l, out);
                self.flatten(r, out);
            }
            GraphPattern::Optional(l, r) => {
                self.flatten(l, out);
                let group = self.operand(r);
                out.push(Element::Node(BeNode::Optional(OptionalNode { group })));
            }
            GraphPattern::Group(inner) => {
                let g = self.group(inner);
                out.push(Element::Node(BeNode::Group(g)));
            }
            GraphPattern::Union(..) => {
                let mut operands = Vec::new();
                collect_union(p, &mut operands);
                let branches = operands.into_iter().map(|o| self.operand(o)).collect();
                out.push(Element::Node(BeNode::Union(UnionNode { branches })));
            }
        }
    }

    fn operand(&mut self, p: &GraphPattern) -> GroupNode {
        match p {
            GraphPattern::Group(inner) => self.group(inner),
            other => self.group(other),
        }
    }

    fn place(&mut self, children: &mut Vec<BeNode>, t: LabeledTriple) {
        let single = Bgp::new(vec![t]);
        let end = children.len();
        let mut target = None;
        for i in 0..end {
            let BeNode::Bgp(b) = &children[i] else {
                continue;
            };
            if !b.bgp.coalescable(&single) {
                continue;
            }
            match blocking_sibling(children, i, end, &single, &b.bgp.variables()) {
                None => {
                    target = Some(i);
                    break;
                }
                Some(reason) => self.notes.push(format!(
                    "{} not coalesced with {}: {reason}",
                    single.label(),
                    b.bgp.label()
                )),
            }
        }
        let Some(i) = target else {
            children.push(BeNode::Bgp(BgpNode::new(single)));
            return;
        };
        if let BeNode::Bgp(b) = &mut children[i] {
            b.bgp.absorb(&single);
        }
        // Later BGP siblings may now be reachable through the new triple.
        loop {
            let BeNode::Bgp(b) = &children[i] else {
                unreachable!()
            };
            let target_bgp = b.bgp.clone();
            let target_vars = target_bgp.variables();
            let mut merged = None;
            for j in i + 1..children.len() {
                let BeNode::Bgp(c) = &children[j] else {
                    continue;
                };
                if !c.bgp.coalescable(&target_bgp) {
                    continue;
                }
                match blocking_sibling(children, i, j, &c.bgp, &target_vars) {
                    None => {
                        merged = Some(j);
                        break;
                    }
                    Some(reason) => self.notes.push(format!(
                        "{} not coalesced with {}: {reason}",
                        c.bgp.label(),
                        target_bgp.label()
                    )),
                }
            }
            let Some(j) = merged else { break };
            let BeNode::Bgp(c) = children.remove(j) else {
                unreachable!()
            };
            if let BeNode::Bgp(b) = &mut children[i] {
                b.bgp.absorb(&c.bgp);
            }
        }
    }
}

/// First UNION/OPTIONAL strictly between `from` and `to` that shares a
/// variable of `moving` not bound by the target BGP.
fn blocking_sibling(
    children: &[BeNode],
    from: usize,
    to: usize,
    moving: &Bgp,
    target_vars: &BTreeSet<Variable>,
) -> Option<String> {
    let moving_vars = moving.variables();
    for child in &children[from + 1..to] {
        let kind = match child {
            BeNode::Union(_) => "UNION",
            BeNode::Optional(_) => "OPTIONAL",
            _ => continue,
        };
        let offending: Vec<String> = child
            .variables()
            .intersection(&moving_vars)
            .filter(|v| !target_vars.contains(*v))
            .map(|v| v.to_string())
            .collect();
        if !offending.is_empty() {
            return Some(format!("crossing {kind} shares {}", offending.join(", ")));
        }
    }
    None
}

fn collect_union<'a>(p: &'a GraphPattern, out: &mut Vec<&'a GraphPattern>) {
    match p {
        GraphPattern::Union(l, r) => {
            collect_union(l, out);
            collect_union(r, out);
        }
        other => out.push(other),
    }
}

/// Reads the tree back as a graph pattern with the same solutions.
pub fn betree_to_pattern(t: &BeTree) -> GraphPattern {
    group_pattern(&t.root)
}

fn group_pattern(g: &GroupNode) -> GraphPattern {
    let mut acc: Option<GraphPattern> = None;
    let join = |acc: Option<GraphPattern>, p: GraphPattern| match acc {
        Some(left) => GraphPattern::and(left, p),
        None => p,
    };
    for child in &g.children {
        match child {
            // empty BGPs are the join identity
            BeNode::Bgp(b) if b.bgp.is_empty() => {}
            BeNode::Bgp(b) => {
                acc = Some(join(
                    acc,
                    GraphPattern::Bgp(b.bgp.patterns().cloned().collect()),
                ))
            }
            BeNode::Group(inner) => acc = Some(join(acc, group_pattern(inner))),
            BeNode::Union(u) => {
                let mut branches = u.branches.iter().map(group_pattern);
                let first = branches.next().expect("UNION node without branches");
                let union = branches.fold(first, GraphPattern::union);
                acc = Some(join(acc, union));
            }
            BeNode::Optional(o) => {
                let left = acc.take().unwrap_or(GraphPattern::Bgp(Vec::new()));
                acc = Some(GraphPattern::optional(left, group_pattern(&o.group)));
            }
        }
    }
    GraphPattern::group(acc.unwrap_or(GraphPattern::Bgp(Vec::new())))
}
