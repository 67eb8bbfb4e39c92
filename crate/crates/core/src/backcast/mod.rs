//! Backward synthesis of a heralded circuit tree.
//!
//! 1. [`plan_layers`] fixes the tree: first-layer circuits with their
//!    herald patterns and a photon budget per node.
//! 2. [`split_target`] splits a node target into the two states that,
//!    coupled on a beam splitter with the second port heralded on vacuum,
//!    reproduce it.
//! 3. Sub-targets become the targets of the layer below, down to the first
//!    layer.
//! 4. [`solve_first_layer`] fits each first-layer Gaussian circuit to its
//!    sub-target.
//!
//! [`synthesize`] runs the whole procedure and [`forward_verify`]
//! re-simulates the assembled tree from the leaves up.

mod leaf;
mod plan;
pub mod roots;
mod split;
mod synth;

pub use leaf::{
    leaf_output, mesh_pairs, realize, solve_first_layer, CircuitParams, LeafLimits, LeafOutcome, LeafSettings,
    MeshElement,
};
pub use plan::{
    leaf_capacity, plan_layers, LayerPlan, LeafSpec, NodeId, PlanPolicy, MAX_HERALD_COUNT, MAX_LAYERS, MAX_LEAF_INPUTS,
};
pub use split::{split_target, SplitOutcome};
pub use synth::{
    forward_verify, node_seed, synthesize, ForwardReport, NodeFailure, NodeParams, NodeSolution, PostCorrection,
    SynthesisConfig, SynthesisResult, CONSISTENCY_TOL,
};
