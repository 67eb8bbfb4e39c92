//! Human-readable run report.

use std::fmt::Write;

use oqss_core::backcast::{ForwardReport, NodeParams, SynthesisResult};

fn opt(x: Option<f64>, fmt: impl Fn(f64) -> String) -> String {
    x.map_or_else(|| "n/a".to_string(), fmt)
}

fn params_summary(p: &NodeParams) -> String {
    match p {
        NodeParams::Interior { theta, split } => format!("theta={theta:+.6} split={}+{}", split.0, split.1),
        NodeParams::Leaf { herald, circuit } => format!("herald={herald:?} modes={}", circuit.modes()),
    }
}

/// Renders the report: headline figures, per-node table, failures, then
/// the full configuration.
pub fn render(
    result: &SynthesisResult,
    forward: Option<&ForwardReport>,
    floor: f64,
    config_toml: &str,
    target_label: &str,
) -> String {
    let mut s = String::new();
    let plan = &result.plan;
    let _ = writeln!(s, "oqss synthesis report");
    let _ = writeln!(s);
    let _ = writeln!(s, "target                 {target_label}");
    let _ = writeln!(
        s,
        "plan                   n_max={} layers={} leaves={}",
        plan.n_max,
        plan.n_layers,
        plan.leaves.len()
    );
    let _ = writeln!(s, "complete               {}", result.is_complete());
    let _ = writeln!(
        s,
        "end-to-end fidelity    {}",
        opt(result.end_to_end_fidelity, |f| format!("{f:.9}"))
    );
    let _ = writeln!(s, "fidelity floor         {floor}");
    let _ = writeln!(
        s,
        "P_suc (all heralds)    {}",
        opt(result.cumulative_success_probability, |p| format!("{p:.6e}"))
    );
    let _ = writeln!(
        s,
        "P_suc (first layer)    {}",
        opt(result.first_layer_probability, |p| format!("{p:.6e}"))
    );
    let _ = writeln!(
        s,
        "ln P_suc               {}",
        opt(result.log_success_probability, |p| format!("{p:.6}"))
    );
    if let Some(pc) = &result.post_correction {
        let _ = writeln!(s, "post-corrected F       {:.9}", pc.fidelity);
    }
    if let Some(f) = forward {
        let _ = writeln!(s, "forward check          F={:.9} P={:.6e}", f.fidelity, f.success_probability);
    }
    let _ = writeln!(s, "wall time              {:.3} s", result.wall_time_s);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<8} {:>6} {:>12} {:>12} {:>12} {:>9}  params",
        "node", "budget", "local F", "F", "P", "time/s"
    );
    for n in &result.nodes {
        let _ = writeln!(
            s,
            "{:<8} {:>6} {:>12.9} {:>12.9} {:>12.5e} {:>9.3}  {}",
            n.id.to_string(),
            n.budget,
            n.local_fidelity,
            n.fidelity,
            n.probability,
            n.wall_time_s,
            params_summary(&n.params)
        );
    }
    if !result.failures.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "failures");
        for f in &result.failures {
            let best = opt(f.fidelity, |x| format!(" (best F {x:.6})"));
            let _ = writeln!(s, "  {} {}{}", f.id, f.message, best);
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "configuration");
    let _ = writeln!(s, "-------------");
    s.push_str(config_toml);
    s
}
