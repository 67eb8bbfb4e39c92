//! Layer planning: how many layers, which first-layer circuits, and the
//! photon-number budget of every node.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest input count and per-detector herald count of a first-layer
/// circuit.
pub const MAX_LEAF_INPUTS: usize = 4;
pub const MAX_HERALD_COUNT: usize = 4;
/// Deepest tree the planner builds.
pub const MAX_LAYERS: usize = 12;

/// Node `(layer, index)`. Layer 1 holds the first-layer circuits, the root
/// is `(n_layers, 0)`, and node `(j, k)` has children `(j−1, 2k)` and
/// `(j−1, 2k+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub layer: usize,
    pub index: usize,
}

impl NodeId {
    pub fn new(layer: usize, index: usize) -> Self {
        Self { layer, index }
    }

    pub fn children(&self) -> Option<(NodeId, NodeId)> {
        (self.layer > 1).then(|| (NodeId::new(self.layer - 1, 2 * self.index), NodeId::new(self.layer - 1, 2 * self.index + 1)))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.layer, self.index)
    }
}

/// A first-layer circuit: `inputs` modes, mode 0 is the output and modes
/// `1..inputs` are heralded on `herald[i−1]` photons.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafSpec {
    pub inputs: usize,
    pub herald: Vec<usize>,
}

impl LeafSpec {
    pub fn new(inputs: usize, herald: Vec<usize>) -> Result<Self> {
        let spec = Self { inputs, herald };
        spec.validate()?;
        Ok(spec)
    }

    /// Photon budget `Σ m_i` of the leaf.
    pub fn budget(&self) -> usize {
        self.herald.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if !(2..=MAX_LEAF_INPUTS).contains(&self.inputs) {
            return Err(Error::Planning(format!(
                "first-layer circuits take 2 to {MAX_LEAF_INPUTS} inputs, got {}",
                self.inputs
            )));
        }
        if self.herald.len() + 1 != self.inputs {
            return Err(Error::Planning(format!(
                "{} inputs need {} herald counts, got {}",
                self.inputs,
                self.inputs - 1,
                self.herald.len()
            )));
        }
        if let Some(m) = self.herald.iter().find(|&&m| m > MAX_HERALD_COUNT) {
            return Err(Error::Planning(format!("herald count {m} exceeds {MAX_HERALD_COUNT}")));
        }
        Ok(())
    }
}

/// Number of independent output coefficients an `l`-input circuit is
/// expected to control, capped by what its detectors can herald.
pub fn leaf_capacity(inputs: usize) -> usize {
    if inputs < 2 {
        return 0;
    }
    ((inputs + 2) * (inputs - 1) / 2 - 1).min(MAX_HERALD_COUNT * (inputs - 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanPolicy {
    pub leaf_inputs: usize,
    /// Forces the layer count instead of using the shallowest feasible one.
    pub n_layers: Option<usize>,
}

impl Default for PlanPolicy {
    fn default() -> Self {
        Self {
            leaf_inputs: 3,
            n_layers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub n_max: usize,
    pub n_layers: usize,
    pub leaves: Vec<LeafSpec>,
    /// `budgets[j−1][k]` is the budget of node `(j, k)`.
    pub budgets: Vec<Vec<usize>>,
}

impl LayerPlan {
    /// One first-layer circuit and no beam-splitter layers.
    pub fn single_leaf(leaf: LeafSpec) -> Result<Self> {
        Self::from_leaves(vec![leaf])
    }

    /// Balanced tree over the given first-layer circuits; their count must
    /// be a power of two.
    pub fn from_leaves(leaves: Vec<LeafSpec>) -> Result<Self> {
        if leaves.is_empty() || !leaves.len().is_power_of_two() {
            return Err(Error::Planning(format!(
                "a balanced tree needs a power-of-two number of first-layer circuits, got {}",
                leaves.len()
            )));
        }
        for leaf in &leaves {
            leaf.validate()?;
        }
        let n_layers = leaves.len().trailing_zeros() as usize + 1;
        if n_layers > MAX_LAYERS {
            return Err(Error::Planning(format!("{n_layers} layers exceed the limit of {MAX_LAYERS}")));
        }
        let mut budgets = vec![leaves.iter().map(LeafSpec::budget).collect::<Vec<_>>()];
        while budgets.last().map_or(0, Vec::len) > 1 {
            let below = budgets.last().expect("non-empty");
            budgets.push(below.chunks(2).map(|p| p[0] + p[1]).collect());
        }
        let plan = Self {
            n_max: budgets[n_layers - 1][0],
            n_layers,
            leaves,
            budgets,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn root(&self) -> NodeId {
        NodeId::new(self.n_layers, 0)
    }

    pub fn budget(&self, id: NodeId) -> usize {
        self.budgets[id.layer - 1][id.index]
    }

    /// Total capacity `Σ_k cap(l_k)` of the first layer.
    pub fn capacity(&self) -> usize {
        self.leaves.iter().map(|l| leaf_capacity(l.inputs)).sum()
    }

    /// All nodes, root first, then layer by layer.
    pub fn nodes(&self) -> Vec<NodeId> {
        (1..=self.n_layers)
            .rev()
            .flat_map(|j| (0..self.budgets[j - 1].len()).map(move |k| NodeId::new(j, k)))
            .collect()
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let broken = |what: String| Err(Error::Planning(what));
        if self.n_layers == 0 || self.budgets.len() != self.n_layers {
            return broken(format!("{} budget layers for {} layers", self.budgets.len(), self.n_layers));
        }
        if self.leaves.len() != 1 << (self.n_layers - 1) {
            return broken(format!("{} first-layer circuits for {} layers", self.leaves.len(), self.n_layers));
        }
        for leaf in &self.leaves {
            leaf.validate()?;
        }
        for (j, layer) in self.budgets.iter().enumerate() {
            if layer.len() != 1 << (self.n_layers - 1 - j) {
                return broken(format!("layer {} has {} nodes", j + 1, layer.len()));
            }
            if j == 0 {
                if let Some(k) = (0..layer.len()).find(|&k| layer[k] != self.leaves[k].budget()) {
                    return broken(format!("leaf {k} budget {} differs from its herald total", layer[k]));
                }
            } else if let Some(k) = (0..layer.len()).find(|&k| {
                let below = &self.budgets[j - 1];
                layer[k] != below[2 * k] + below[2 * k + 1]
            }) {
                return broken(format!("node ({},{k}) budget is not the sum of its children", j + 1));
            }
        }
        if self.budgets[self.n_layers - 1][0] != self.n_max {
            return broken(format!("root budget differs from n_max = {}", self.n_max));
        }
        if self.n_max > self.capacity() {
            return broken(format!(
                "n_max = {} exceeds the first-layer capacity {}",
                self.n_max,
                self.capacity()
            ));
        }
        Ok(())
    }
}

/// Balanced plan for `n_max`.
///
/// Uses the shallowest tree whose first layer can carry `n_max` (or the
/// policy's layer count), splits budgets top-down as `(⌈n/2⌉, ⌊n/2⌋)` and
/// spreads each leaf budget evenly over its detectors.
pub fn plan_layers(n_max: usize, policy: &PlanPolicy) -> Result<LayerPlan> {
    if n_max == 0 {
        return Err(Error::Planning("n_max must be at least 1".into()));
    }
    let l = policy.leaf_inputs;
    if !(2..=MAX_LEAF_INPUTS).contains(&l) {
        return Err(Error::Planning(format!("first-layer circuits take 2 to {MAX_LEAF_INPUTS} inputs, got {l}")));
    }
    let cap = leaf_capacity(l);
    let reach = |layers: usize| (1usize << (layers - 1)) * cap;
    let n_layers = match policy.n_layers {
        Some(layers) => {
            if !(1..=MAX_LAYERS).contains(&layers) {
                return Err(Error::Planning(format!("layer count must lie in 1..={MAX_LAYERS}, got {layers}")));
            }
            if n_max > reach(layers) {
                return Err(Error::Planning(format!(
                    "n_max = {n_max} is not reachable with {layers} layers of {l}-input circuits; feasible budgets are 1..={}, or use at least {} layers",
                    reach(layers),
                    (1..=MAX_LAYERS).find(|&j| reach(j) >= n_max).map_or("more".to_string(), |j| j.to_string())
                )));
            }
            layers
        }
        None => (1..=MAX_LAYERS).find(|&j| reach(j) >= n_max).ok_or_else(|| {
            Error::Planning(format!(
                "n_max = {n_max} exceeds the largest plan; feasible budgets are 1..={}",
                reach(MAX_LAYERS)
            ))
        })?,
    };
    let mut top_down = vec![vec![n_max]];
    for _ in 1..n_layers {
        let above = top_down.last().expect("non-empty");
        top_down.push(above.iter().flat_map(|&n| [n.div_ceil(2), n / 2]).collect());
    }
    let leaves = top_down
        .last()
        .expect("non-empty")
        .iter()
        .map(|&b| {
            let detectors = l - 1;
            let herald = (0..detectors).map(|i| b / detectors + usize::from(i < b % detectors)).collect();
            LeafSpec::new(l, herald)
        })
        .collect::<Result<Vec<_>>>()?;
    LayerPlan::from_leaves(leaves)
}
