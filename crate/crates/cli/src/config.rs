//! Run configuration for `oqss synthesize`.
//!
//! TOML with one table per concern:
//!
//! ```toml
//! seed = 5
//! output_dir = "runs"
//! fidelity_floor = 0.99
//! threads = 8            # optional, default: logical cores
//!
//! [target.gkp]           # or: [target] fock = "target.txt"
//! db = 7.0
//! logical = 0
//! n_max = 8
//!
//! [plan]                 # optional
//! leaf_inputs = 3
//! n_layers = 2
//! n_max = 8              # default: the target cutoff
//!
//! [synthesis]            # optional, see SynthesisConfig
//! interior_floor = 0.999
//! leaf_floor = 0.99
//! [synthesis.leaf]
//! restarts = 16
//! ```

use std::path::{Path, PathBuf};

use oqss_core::backcast::{PlanPolicy, SynthesisConfig};
use oqss_core::fock::FockVector;
use oqss_core::gkp::{gkp_coefficients, GkpParams};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSpec {
    Gkp {
        db: f64,
        #[serde(default)]
        logical: u8,
        n_max: usize,
    },
    Fock(PathBuf),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(flatten)]
    pub policy: PlanPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_floor")]
    pub fidelity_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub target: TargetSpec,
    #[serde(default)]
    pub plan: PlanSection,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_floor() -> f64 {
    0.99
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// The target state; relative Fock paths resolve against `base`.
    pub fn load_target(&self, base: &Path) -> oqss_core::Result<FockVector> {
        match &self.target {
            TargetSpec::Gkp { db, logical, n_max } => gkp_coefficients(&GkpParams::new(*db, *logical)?, *n_max),
            TargetSpec::Fock(path) => {
                let path = if path.is_absolute() { path.clone() } else { base.join(path) };
                let v = FockVector::read(&path)?;
                Ok(oqss_core::fock::normalize(&v)?.0)
            }
        }
    }

    /// Plan budget: explicit, else the GKP cutoff, else the highest
    /// populated Fock number of the target.
    pub fn n_max(&self, target: &FockVector) -> usize {
        self.plan.n_max.unwrap_or(match self.target {
            TargetSpec::Gkp { n_max, .. } => n_max,
            TargetSpec::Fock(_) => target.effective_degree(1e-12),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_gkp_config() {
        let c = RunConfig::parse("[target.gkp]\ndb = 7.0\nn_max = 8\n").unwrap();
        assert_eq!(c.target, TargetSpec::Gkp { db: 7.0, logical: 0, n_max: 8 });
        assert_eq!(c.synthesis, SynthesisConfig::default());
        assert_eq!(c.plan.policy, PlanPolicy::default());
        let back = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parses_nested_sections() {
        let text = r#"
seed = 3
[target]
fock = "t.txt"
[plan]
n_layers = 2
leaf_inputs = 3
[synthesis]
leaf_floor = 0.95
[synthesis.leaf]
restarts = 7
"#;
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.target, TargetSpec::Fock("t.txt".into()));
        assert_eq!(c.plan.policy.n_layers, Some(2));
        assert_eq!(c.synthesis.leaf.restarts, 7);
        assert_eq!(c.synthesis.leaf_floor, 0.95);
        assert_eq!(c.synthesis.split, SynthesisConfig::default().split);
    }

    #[test]
    fn rejects_zero_or_two_targets() {
        assert!(RunConfig::parse("seed = 1\n").is_err());
        assert!(RunConfig::parse("[target]\nfock = \"a\"\n[target.gkp]\ndb = 1.0\nn_max = 2\n").is_err());
        assert!(RunConfig::parse("[target.gkp]\ndb = 1.0\nn_max = 2\nbogus = 1\n").is_err());
    }
}
