//! Sampling-based cardinality estimation along the greedy order.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::plan::{self, wco_step_cost, BgpPlan, UNBOUND};
use super::{check_row, extend_row, Compiled, EngineError, Row, Slot};
use crate::sparql::TriplePattern;
use crate::store::Store;

pub const DEFAULT_SAMPLE_SIZE: usize = 100;

/// Next estimate after extending a sample of `sampled` rows into `extended`
/// rows. Never drops below one once the base was non-empty.
pub fn scale_cardinality(prev: f64, extended: usize, sampled: usize) -> f64 {
    let ratio = if sampled == 0 {
        0.0
    } else {
        extended as f64 / sampled as f64
    };
    (ratio * prev).max(1.0)
}

/// Plans and cardinality estimates for the BGPs of one query, cached per
/// pattern set.
#[derive(Debug, Clone)]
pub struct CardEstimator {
    pub sample_size: usize,
    seed: u64,
    cache: HashMap<Vec<TriplePattern>, BgpPlan>,
}

fn fnv1a(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

impl CardEstimator {
    pub fn new(seed: u64) -> Self {
        CardEstimator {
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed,
            cache: HashMap::new(),
        }
    }

    /// Plan of the BGP with its estimated cost and result size.
    pub fn plan(
        &mut self,
        store: &Store,
        patterns: &[TriplePattern],
    ) -> Result<BgpPlan, EngineError> {
        let mut key: Vec<TriplePattern> = patterns.to_vec();
        key.sort();
        key.dedup();
        if let Some(p) = self.cache.get(&key) {
            return Ok(p.clone());
        }
        let text: Vec<String> = key.iter().map(|t| t.to_string()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(&text.join(" . ")));
        let plan = plan_with(store, &key, self.sample_size, &mut rng)?;
        self.cache.insert(key, plan.clone());
        Ok(plan)
    }

    pub fn estimate_cardinality(
        &mut self,
        store: &Store,
        patterns: &[TriplePattern],
    ) -> Result<f64, EngineError> {
        Ok(self.plan(store, patterns)?.estimated_result_size)
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }
}

fn sample_rows(rows: Vec<Row>, size: usize, rng: &mut ChaCha8Rng) -> Vec<Row> {
    if rows.len() <= size {
        return rows;
    }
    let mut picked: Vec<usize> = index::sample(rng, rows.len(), size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| rows[i].clone()).collect()
}

fn plan_with(
    store: &Store,
    patterns: &[TriplePattern],
    sample_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BgpPlan, EngineError> {
    if patterns.is_empty() {
        return Ok(BgpPlan {
            vertex_order: Vec::new(),
            per_step_cost: Vec::new(),
            step_cardinality: Vec::new(),
            estimated_result_size: 1.0,
        });
    }
    let Some(c) = Compiled::new(store, patterns) else {
        // a constant missing from the store: nothing can match
        return Ok(BgpPlan {
            vertex_order: Vec::new(),
            per_step_cost: vec![0.0],
            step_cardinality: vec![0.0],
            estimated_result_size: 0.0,
        });
    };
    plan::check_connected(&c)?;
    let order = plan::order(store, &c, &BTreeSet::new());
    let width = c.vars.len();

    let seed_step = &order.steps[0];
    let seed = seed_step.generator.expect("seeded order");
    let base = plan::seed_count(store, &c, seed);
    let mut costs = vec![base as f64];
    let mut cards = Vec::new();

    let mut card = base as f64;
    let mut sample: Vec<Row> = Vec::new();
    if base > 0 {
        let slots = &c.patterns[seed];
        let constant = |s: &Slot| match s {
            Slot::Const(id) => Some(*id),
            Slot::Var(_) => None,
        };
        let scan = store.scan(
            constant(&slots[0]),
            constant(&slots[1]),
            constant(&slots[2]),
        );
        let picks: Vec<usize> = if base <= sample_size {
            (0..base).collect()
        } else {
            let mut v = index::sample(rng, base, sample_size).into_vec();
            v.sort_unstable();
            v
        };
        let drawn = picks.len();
        for i in picks {
            let t = scan.nth_triple(i).expect("index within range");
            if let Some(row) = bind_triple(slots, [t.s, t.p, t.o], width) {
                sample.push(row);
            }
        }
        // patterns fully bound right after the seed are checked on the sample
        sample.retain(|row| {
            seed_step
                .checks
                .iter()
                .all(|&i| check_row(store, &c.patterns[i], row))
        });
        if sample.len() != drawn {
            card = scale_cardinality(card, sample.len(), drawn);
        }
    }
    cards.push(card);

    for step in &order.steps[1..] {
        let g = step.generator.expect("seeded order");
        costs.push(wco_step_cost(card, step.min_average));
        if base == 0 {
            cards.push(0.0);
            continue;
        }
        let mut extended = Vec::new();
        for row in &sample {
            extend_row(store, &c.patterns[g], row, &mut extended);
        }
        extended.retain(|row| {
            step.checks
                .iter()
                .all(|&i| check_row(store, &c.patterns[i], row))
        });
        card = scale_cardinality(card, extended.len(), sample.len());
        cards.push(card);
        sample = sample_rows(extended, sample_size, rng);
    }
    Ok(BgpPlan {
        vertex_order: order.vertices,
        per_step_cost: costs,
        estimated_result_size: if base == 0 { 0.0 } else { card },
        step_cardinality: cards,
    })
}

/// Binds a seed triple, rejecting it when a repeated variable disagrees.
fn bind_triple(slots: &[Slot; 3], values: [crate::store::TermId; 3], width: usize) -> Option<Row> {
    let mut row = vec![UNBOUND; width];
    for (slot, value) in slots.iter().zip(values) {
        if let Slot::Var(v) = slot {
            if row[*v] == UNBOUND {
                row[*v] = value;
            } else if row[*v] != value {
                return None;
            }
        }
    }
    Some(row)
}
