//! Local cost of a merge or inject, and the size model it relies on.

use serde::Serialize;

use crate::betree::{BeNode, Bgp, GroupNode};
use crate::engine::{BgpPlan, CardEstimator, EngineError};
use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LocalCost {
    pub bgp_cost: f64,
    pub algebra_cost: f64,
}

impl LocalCost {
    pub fn total(&self) -> f64 {
        self.bgp_cost + self.algebra_cost
    }
}

pub fn f_and(args: &[f64]) -> f64 {
    args.iter().product()
}

pub fn f_union(args: &[f64]) -> f64 {
    args.iter().sum()
}

pub fn f_optional(left: f64, right: f64) -> f64 {
    left * right
}

pub fn delta_cost(before: &LocalCost, after: &LocalCost) -> f64 {
    after.total() - before.total()
}

/// A BGP node as seen by the cost formulas: its own cost and result size
/// plus the product of the sizes of its left and right siblings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affected {
    pub cost: f64,
    pub size: f64,
    pub left: f64,
    pub right: f64,
}

impl Affected {
    /// An absent BGP: free, and the join identity.
    pub const EMPTY: Affected = Affected {
        cost: 0.0,
        size: 1.0,
        left: 1.0,
        right: 1.0,
    };

    fn and_term(&self) -> f64 {
        f_and(&[self.size, self.left, self.right])
    }
}

/// Merge cost: the source, one affected BGP per branch, and the branch
/// group sizes for the UNION term.
pub fn merge_cost(source: &Affected, branch_bgps: &[Affected], branch_sizes: &[f64]) -> LocalCost {
    let bgp_cost = source.cost + branch_bgps.iter().map(|b| b.cost).sum::<f64>();
    let algebra_cost = source.and_term()
        + branch_bgps.iter().map(Affected::and_term).sum::<f64>()
        + f_union(branch_sizes);
    LocalCost {
        bgp_cost,
        algebra_cost,
    }
}

/// Inject cost: the source, the affected BGP of the OPTIONAL group, and
/// the size of that group for the OPTIONAL term.
pub fn inject_cost(source: &Affected, target: &Affected, optional_size: f64) -> LocalCost {
    LocalCost {
        bgp_cost: source.cost + target.cost,
        algebra_cost: source.and_term()
            + target.and_term()
            + f_optional(source.size, optional_size),
    }
}

/// Size and cost estimates over a tree, backed by the BGP estimator.
pub struct Model<'a> {
    pub store: &'a Store,
    pub estimator: &'a mut CardEstimator,
}

impl Model<'_> {
    pub fn plan(&mut self, bgp: &Bgp) -> Result<BgpPlan, EngineError> {
        let patterns: Vec<_> = bgp.patterns().cloned().collect();
        self.estimator.plan(self.store, &patterns)
    }

    pub fn bgp_size(&mut self, bgp: &Bgp) -> Result<f64, EngineError> {
        if bgp.is_empty() {
            return Ok(1.0);
        }
        Ok(self.plan(bgp)?.estimated_result_size)
    }

    pub fn bgp_cost(&mut self, bgp: &Bgp) -> Result<f64, EngineError> {
        if bgp.is_empty() {
            return Ok(0.0);
        }
        Ok(self.plan(bgp)?.total_cost())
    }

    pub fn node_size(&mut self, node: &BeNode) -> Result<f64, EngineError> {
        match node {
            BeNode::Bgp(b) => self.bgp_size(&b.bgp),
            BeNode::Group(g) => self.group_size(g),
            BeNode::Union(u) => {
                let mut sum = 0.0;
                for g in &u.branches {
                    sum += self.group_size(g)?;
                }
                Ok(sum)
            }
            BeNode::Optional(o) => self.group_size(&o.group),
        }
    }

    pub fn group_size(&mut self, g: &GroupNode) -> Result<f64, EngineError> {
        let mut product = 1.0;
        for child in &g.children {
            product *= self.node_size(child)?;
        }
        Ok(product)
    }

    /// The BGP child at `index` with its sibling products.
    pub fn affected(&mut self, g: &GroupNode, index: usize) -> Result<Affected, EngineError> {
        let BeNode::Bgp(b) = &g.children[index] else {
            panic!("child {index} is not a BGP node")
        };
        let mut left = 1.0;
        let mut right = 1.0;
        for (j, child) in g.children.iter().enumerate() {
            if j < index {
                left *= self.node_size(child)?;
            } else if j > index {
                right *= self.node_size(child)?;
            }
        }
        Ok(Affected {
            cost: self.bgp_cost(&b.bgp)?,
            size: self.bgp_size(&b.bgp)?,
            left,
            right,
        })
    }
}
