//! Backward synthesis over a layer plan and forward verification of the
//! assembled tree.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::leaf::{leaf_output, solve_first_layer, CircuitParams, LeafLimits, LeafSettings};
use super::plan::{LayerPlan, NodeId};
use super::split::split_target;
use crate::error::{Error, Result};
use crate::fock::{
    apply_displacement_truncated, apply_squeezer_truncated, couple_and_herald_zero, fidelity, normalize, FockVector,
};
use crate::optimize::{maximize, Bound, OptTrace, OptimizerConfig};

/// Agreement required between recorded and re-simulated node values.
pub const CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub split: OptimizerConfig,
    pub leaf: OptimizerConfig,
    pub interior_floor: f64,
    pub leaf_floor: f64,
    pub limits: LeafLimits,
    /// Photon numbers computed past each leaf cutoff.
    pub guard: usize,
    pub split_seeds: usize,
    pub leaf_seeds: usize,
    /// Also fit a single-mode squeeze, rotation and displacement to the
    /// output and report the corrected fidelity separately.
    pub post_correction: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            split: OptimizerConfig {
                restarts: 8,
                max_evals: 4000,
                ..OptimizerConfig::default()
            },
            leaf: OptimizerConfig {
                restarts: 16,
                max_evals: 2000,
                hops: 8,
                ..OptimizerConfig::default()
            },
            interior_floor: 0.999,
            leaf_floor: 0.99,
            limits: LeafLimits::default(),
            guard: 4,
            split_seeds: 8,
            leaf_seeds: 8,
            post_correction: false,
        }
    }
}

impl SynthesisConfig {
    /// Sets the seed of both optimizers.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split.seed = seed;
        self.leaf.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeParams {
    Interior { theta: f64, split: (usize, usize) },
    Leaf { herald: Vec<usize>, circuit: CircuitParams },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSolution {
    pub id: NodeId,
    pub budget: usize,
    /// State this node was asked to produce.
    pub target: FockVector,
    pub params: NodeParams,
    /// Fidelity and herald probability from the backward solve, against
    /// exact inputs.
    pub local_fidelity: f64,
    pub local_probability: f64,
    /// Forward-assembled output of this node against its target, and the
    /// herald probability with the actual inputs.
    pub fidelity: f64,
    pub probability: f64,
    pub seed: u64,
    pub wall_time_s: f64,
    pub trace: OptTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFailure {
    pub id: NodeId,
    pub message: String,
    /// Best fidelity reached when the node kept a below-floor solution.
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostCorrection {
    /// `[r, φ, rotation, Re α, Im α]` of `D(α) R(rotation) S(r e^{iφ})`.
    pub params: [f64; 5],
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub plan: LayerPlan,
    pub target: FockVector,
    pub config: SynthesisConfig,
    /// Root first, then layer by layer.
    pub nodes: Vec<NodeSolution>,
    pub failures: Vec<NodeFailure>,
    pub end_to_end_fidelity: Option<f64>,
    /// Product of every node's herald probability.
    pub cumulative_success_probability: Option<f64>,
    /// Product over first-layer circuits only.
    pub first_layer_probability: Option<f64>,
    pub log_success_probability: Option<f64>,
    pub post_correction: Option<PostCorrection>,
    pub wall_time_s: f64,
}

impl SynthesisResult {
    /// Every node has a solution.
    pub fn is_complete(&self) -> bool {
        self.nodes.len() == self.plan.nodes().len()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSolution> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-node seed derived from the configured seed and the node position.
pub fn node_seed(seed: u64, id: NodeId) -> u64 {
    let mut z = seed ^ ((id.layer as u64) << 40) ^ (id.index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Solved {
    nodes: Vec<NodeSolution>,
    failures: Vec<NodeFailure>,
}

fn blank(id: NodeId, budget: usize, target: FockVector, params: NodeParams, seed: u64) -> NodeSolution {
    NodeSolution {
        id,
        budget,
        target,
        params,
        local_fidelity: 0.0,
        local_probability: 0.0,
        fidelity: 0.0,
        probability: 0.0,
        seed,
        wall_time_s: 0.0,
        trace: OptTrace {
            restarts: Vec::new(),
            best_restart: 0,
        },
    }
}

fn solve_node(id: NodeId, target: FockVector, plan: &LayerPlan, cfg: &SynthesisConfig) -> Solved {
    let started = Instant::now();
    let budget = plan.budget(id);
    let failure = |message: String, fidelity: Option<f64>| NodeFailure { id, message, fidelity };
    let Some((left, right)) = id.children() else {
        let spec = &plan.leaves[id.index];
        let opt = OptimizerConfig {
            seed: node_seed(cfg.leaf.seed, id),
            ..cfg.leaf.clone()
        };
        let settings = LeafSettings {
            limits: cfg.limits,
            guard: cfg.guard,
            seeds: cfg.leaf_seeds,
            floor: cfg.leaf_floor,
        };
        let (outcome, failures) = match solve_first_layer(&target, &spec.herald, &opt, &settings) {
            Ok(o) => (o, Vec::new()),
            Err(Error::Solver { fidelity, best, .. }) => {
                let e = failure(format!("first-layer fidelity {fidelity:.6} below floor {}", cfg.leaf_floor), Some(fidelity));
                (*best, vec![e])
            }
            Err(e) => {
                return Solved {
                    nodes: Vec::new(),
                    failures: vec![failure(e.to_string(), None)],
                }
            }
        };
        let mut node = blank(
            id,
            budget,
            target,
            NodeParams::Leaf {
                herald: spec.herald.clone(),
                circuit: outcome.params,
            },
            opt.seed,
        );
        node.local_fidelity = outcome.fidelity;
        node.local_probability = outcome.probability;
        node.trace = outcome.trace;
        node.wall_time_s = started.elapsed().as_secs_f64();
        return Solved {
            nodes: vec![node],
            failures,
        };
    };

    let opt = OptimizerConfig {
        seed: node_seed(cfg.split.seed, id),
        ..cfg.split.clone()
    };
    let split = (plan.budget(left), plan.budget(right));
    let (outcome, mut failures) = match split_target(&target, split, &opt, cfg.split_seeds, cfg.interior_floor) {
        Ok(o) => (o, Vec::new()),
        Err(Error::Split { fidelity, best, .. }) => {
            let e = failure(format!("split fidelity {fidelity:.6} below floor {}", cfg.interior_floor), Some(fidelity));
            (*best, vec![e])
        }
        Err(e) => {
            return Solved {
                nodes: Vec::new(),
                failures: vec![failure(e.to_string(), None)],
            }
        }
    };
    let mut node = blank(id, budget, target, NodeParams::Interior { theta: outcome.theta, split }, opt.seed);
    node.local_fidelity = outcome.fidelity;
    node.local_probability = outcome.probability;
    node.trace = outcome.trace;
    node.wall_time_s = started.elapsed().as_secs_f64();
    let (a, b) = rayon::join(
        || solve_node(left, outcome.sub_a, plan, cfg),
        || solve_node(right, outcome.sub_b, plan, cfg),
    );
    let mut nodes = vec![node];
    nodes.extend(a.nodes);
    nodes.extend(b.nodes);
    failures.extend(a.failures);
    failures.extend(b.failures);
    Solved { nodes, failures }
}

/// Forward re-simulation of a complete tree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForwardReport {
    pub fidelity: f64,
    pub success_probability: f64,
    pub first_layer_probability: f64,
    pub log_success_probability: f64,
    /// `(node, fidelity with its target, herald probability)`.
    pub nodes: Vec<(NodeId, f64, f64)>,
    #[serde(skip)]
    pub output: FockVector,
}

fn forward_pass(result: &SynthesisResult, target: &FockVector) -> Result<ForwardReport> {
    if !result.is_complete() {
        return Err(Error::Contract("forward verification needs a complete synthesis result".into()));
    }
    let by_id: BTreeMap<NodeId, &NodeSolution> = result.nodes.iter().map(|n| (n.id, n)).collect();
    let mut states: BTreeMap<NodeId, FockVector> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut log_p = 0.0;
    let mut log_first = 0.0;
    for layer in 1..=result.plan.n_layers {
        for index in 0..result.plan.budgets[layer - 1].len() {
            let id = NodeId::new(layer, index);
            let node = by_id
                .get(&id)
                .ok_or_else(|| Error::Contract(format!("node {id} is missing")))?;
            let (state, p) = match &node.params {
                NodeParams::Leaf { herald, circuit } => leaf_output(circuit, herald, node.budget + result.config.guard)?,
                NodeParams::Interior { theta, .. } => {
                    let (l, r) = id.children().expect("interior node");
                    couple_and_herald_zero(&states[&l], &states[&r], *theta)?
                }
            };
            log_p += p.ln();
            if layer == 1 {
                log_first += p.ln();
            }
            rows.push((id, fidelity(&state, &node.target), p));
            states.insert(id, state);
        }
    }
    let output = states.remove(&result.plan.root()).expect("root state");
    Ok(ForwardReport {
        fidelity: fidelity(&output, target),
        success_probability: log_p.exp(),
        first_layer_probability: log_first.exp(),
        log_success_probability: log_p,
        nodes: rows,
        output,
    })
}

/// Synthesizes `target` over `plan`.
///
/// Node failures do not abort the run: a node below its floor keeps its
/// best solution, a node that could not be solved at all drops its
/// subtree. Both are listed in `failures`, and the end-to-end figures are
/// only filled in for complete trees.
pub fn synthesize(target: &FockVector, plan: &LayerPlan, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    let started = Instant::now();
    plan.validate()?;
    let degree = target.effective_degree(1e-12);
    if degree > plan.n_max {
        return Err(Error::Contract(format!(
            "target reaches {degree} photons but the plan budget is {}",
            plan.n_max
        )));
    }
    let (target, _) = normalize(&target.truncated(plan.n_max))?;
    let solved = solve_node(plan.root(), target.clone(), plan, cfg);
    let mut nodes = solved.nodes;
    nodes.sort_by_key(|n| (std::cmp::Reverse(n.id.layer), n.id.index));
    let mut result = SynthesisResult {
        plan: plan.clone(),
        target: target.clone(),
        config: cfg.clone(),
        nodes,
        failures: solved.failures,
        end_to_end_fidelity: None,
        cumulative_success_probability: None,
        first_layer_probability: None,
        log_success_probability: None,
        post_correction: None,
        wall_time_s: 0.0,
    };
    if result.is_complete() {
        let report = forward_pass(&result, &target)?;
        for (id, f, p) in &report.nodes {
            let node = result.nodes.iter_mut().find(|n| n.id == *id).expect("node present");
            node.fidelity = *f;
            node.probability = *p;
        }
        result.end_to_end_fidelity = Some(report.fidelity);
        result.cumulative_success_probability = Some(report.success_probability);
        result.first_layer_probability = Some(report.first_layer_probability);
        result.log_success_probability = Some(report.log_success_probability);
        if cfg.post_correction {
            result.post_correction = Some(post_correct(&report.output, &target, &cfg.split)?);
        }
    }
    result.wall_time_s = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Re-simulates `result` forward and checks it against the recorded
/// per-node and end-to-end values.
///
/// The returned fidelity is against `target`; recorded values are compared
/// when `target` matches the synthesis target.
pub fn forward_verify(result: &SynthesisResult, target: &FockVector) -> Result<ForwardReport> {
    let report = forward_pass(result, target)?;
    let mismatch = |message: String, recorded: f64, recomputed: f64| {
        Err(Error::Consistency {
            message,
            recorded,
            recomputed,
        })
    };
    for (id, f, p) in &report.nodes {
        let node = result.node(*id).expect("complete tree");
        if (node.fidelity - f).abs() > CONSISTENCY_TOL {
            return mismatch(format!("fidelity of node {id}"), node.fidelity, *f);
        }
        if (node.probability - p).abs() > CONSISTENCY_TOL * node.probability.max(*p) {
            return mismatch(format!("herald probability of node {id}"), node.probability, *p);
        }
    }
    let same_target = fidelity(target, &result.target) > 1.0 - 1e-12;
    if let (true, Some(recorded)) = (same_target, result.end_to_end_fidelity) {
        if (recorded - report.fidelity).abs() > CONSISTENCY_TOL {
            return mismatch("end-to-end fidelity".into(), recorded, report.fidelity);
        }
    }
    if let Some(recorded) = result.log_success_probability {
        if (recorded - report.log_success_probability).abs() > 1e-9 * recorded.abs().max(1.0) {
            return mismatch("log success probability".into(), recorded, report.log_success_probability);
        }
    }
    Ok(report)
}

/// Best single-mode Gaussian correction `D(α) R(ϑ) S(r e^{iφ})` of `out`
/// towards `target`.
fn post_correct(out: &FockVector, target: &FockVector, opt: &OptimizerConfig) -> Result<PostCorrection> {
    let space = out.cutoff().max(target.cutoff()) + 24;
    let start = out.truncated(space).into_amplitudes();
    let target = target.clone();
    let apply = |x: &[f64]| -> FockVector {
        let squeezed = apply_squeezer_truncated(&start, x[0], x[1]);
        let rotated: Vec<Complex64> = squeezed
            .iter()
            .enumerate()
            .map(|(n, c)| c * Complex64::from_polar(1.0, x[2] * n as f64))
            .collect();
        FockVector::from_raw(apply_displacement_truncated(&rotated, Complex64::new(x[3], x[4])))
    };
    let bounds = vec![
        Bound::new(-1.0, 1.0),
        Bound::periodic(-PI, PI),
        Bound::periodic(-PI, PI),
        Bound::new(-1.0, 1.0),
        Bound::new(-1.0, 1.0),
    ];
    let best = maximize(|x: &[f64]| fidelity(&apply(x), &target), &opt.with_bounds(bounds))?;
    Ok(PostCorrection {
        params: [best.params[0], best.params[1], best.params[2], best.params[3], best.params[4]],
        fidelity: best.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backcast::plan::{plan_layers, LeafSpec, PlanPolicy};
    use std::f64::consts::FRAC_PI_4;

    fn quick() -> SynthesisConfig {
        let mut cfg = SynthesisConfig::default();
        cfg.split.restarts = 4;
        cfg.split.max_evals = 1500;
        cfg.leaf.restarts = 4;
        cfg.leaf.max_evals = 800;
        cfg.leaf.hops = 3;
        cfg
    }

    #[test]
    fn vacuum_tree_is_identity() {
        let plan = LayerPlan::single_leaf(LeafSpec::new(3, vec![0, 0]).unwrap()).unwrap();
        let r = synthesize(&FockVector::vacuum(), &plan, &quick()).unwrap();
        assert!(r.failures.is_empty());
        assert!((r.end_to_end_fidelity.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.cumulative_success_probability.unwrap() - 1.0).abs() < 1e-12);
        let NodeParams::Leaf { circuit, .. } = &r.nodes[0].params else {
            panic!("leaf expected")
        };
        assert!(circuit.to_vector().iter().all(|x| x.abs() < 1e-9));
        let report = forward_verify(&r, &FockVector::vacuum()).unwrap();
        assert!((report.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hom_tree() {
        let plan = LayerPlan::from_leaves(vec![LeafSpec::new(2, vec![1]).unwrap(); 2]).unwrap();
        let r = synthesize(&FockVector::basis(2), &plan, &quick()).unwrap();
        assert!(r.failures.is_empty(), "{:?}", r.failures);
        let root = r.node(plan.root()).unwrap();
        let NodeParams::Interior { theta, .. } = root.params else {
            panic!("interior expected")
        };
        assert!((theta.abs() - FRAC_PI_4).abs() < 1e-4);
        assert!((root.probability - 0.5).abs() < 1e-3, "{}", root.probability);
        assert!(r.end_to_end_fidelity.unwrap() > 0.999);
        let report = forward_verify(&r, &FockVector::basis(2)).unwrap();
        let product: f64 = r.nodes.iter().map(|n| n.probability).product();
        assert!((report.success_probability - product).abs() < 1e-12 * product);
    }

    #[test]
    fn tampering_is_detected() {
        let plan = LayerPlan::from_leaves(vec![LeafSpec::new(2, vec![1]).unwrap(); 2]).unwrap();
        let mut r = synthesize(&FockVector::basis(2), &plan, &quick()).unwrap();
        if let NodeParams::Interior { theta, .. } = &mut r.nodes[0].params {
            *theta += 0.2;
        }
        assert!(matches!(forward_verify(&r, &FockVector::basis(2)), Err(Error::Consistency { .. })));
    }

    #[test]
    fn results_roundtrip_and_repeat() {
        let plan = plan_layers(2, &PlanPolicy::default()).unwrap();
        let target = FockVector::normalized(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.3), Complex64::new(0.5, 0.0)]).unwrap();
        let a = synthesize(&target, &plan, &quick()).unwrap();
        let b = synthesize(&target, &plan, &quick()).unwrap();
        assert_eq!(a.end_to_end_fidelity, b.end_to_end_fidelity);
        assert_eq!(a.cumulative_success_probability, b.cumulative_success_probability);
        let back = SynthesisResult::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back.nodes.len(), a.nodes.len());
        forward_verify(&back, &target).unwrap();
    }

    #[test]
    fn oversized_target_is_rejected() {
        let plan = plan_layers(2, &PlanPolicy::default()).unwrap();
        assert!(matches!(synthesize(&FockVector::basis(3), &plan, &quick()), Err(Error::Contract(_))));
    }

    #[test]
    fn node_seeds_differ() {
        let a = node_seed(1, NodeId::new(1, 0));
        let b = node_seed(1, NodeId::new(1, 1));
        let c = node_seed(2, NodeId::new(1, 0));
        assert!(a != b && a != c && b != c);
    }
}
