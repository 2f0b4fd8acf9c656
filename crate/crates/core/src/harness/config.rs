//! JSON experiment configuration. Unknown keys are rejected so a recorded
//! config always means exactly one experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faultnet::{FaultBounds, MaskPlan};
use crate::graph::{Arc, Topology};
use crate::objectives::{NoiseModel, ObjectiveSuite, QuadraticObjective, SvmDataset, SvmObjective};
use crate::rng::{Role, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Cycle { n: usize, bidirectional: bool },
    Random { n: usize, p: f64 },
    Arcs { n: usize, arcs: Vec<[usize; 2]> },
}

impl TopologySpec {
    pub fn n(&self) -> usize {
        match *self {
            TopologySpec::Cycle { n, .. } | TopologySpec::Random { n, .. } | TopologySpec::Arcs { n, .. } => n,
        }
    }
}

fn default_c() -> f64 {
    500.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Explicit curvatures and centers, one per node.
    Quadratic { mu: Vec<f64>, centers: Vec<Vec<f64>> },
    /// Curvatures uniform on `mu_range`, centers uniform on `[-center_scale, center_scale]^dim`.
    RandomQuadratic { dim: usize, mu_range: [f64; 2], center_scale: f64 },
    /// Synthetic two-cluster SVM; `c` defaults to 500.
    Svm {
        #[serde(default = "default_c")]
        c: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Every node starts at `1_d`.
    #[default]
    Ones,
    Values { values: Vec<Vec<f64>> },
    /// Independent uniform draws per node and coordinate.
    Uniform { low: f64, high: f64, dim: usize },
}

fn default_runs() -> usize {
    1
}

fn default_batch() -> usize {
    10
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub faults: FaultBounds,
    /// Absent for pure averaging.
    #[serde(default)]
    pub objective: Option<ObjectiveSpec>,
    /// Width `b` of the per-coordinate noise support `[−b/2, b/2)`.
    #[serde(default)]
    pub noise_b: f64,
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub k0: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub mask: Option<MaskPlan>,
    #[serde(default)]
    pub initial: InitialSpec,
    /// Trace every run and cross-validate it against the linear system.
    #[serde(default)]
    pub verify: bool,
    /// Also run the centralized baseline.
    #[serde(default = "default_true")]
    pub baseline: bool,
    /// Write one raw CSV per run.
    #[serde(default = "default_true")]
    pub persist_raw: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.faults.validate()?;
        if self.runs < 1 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        NoiseModel::new(self.noise_b)?;
        if self.mask.is_some() && (self.faults.p_f != 0.0 || self.faults.l_f != 0) {
            return Err(Error::config("arc masks require lossless links (p_f = 0, l_f = 0)"));
        }
        if let Some(ObjectiveSpec::RandomQuadratic { dim, mu_range, center_scale }) = &self.objective {
            if *dim == 0 || !(mu_range[0] > 0.0 && mu_range[0] <= mu_range[1]) || !(*center_scale >= 0.0) {
                return Err(Error::config("random quadratic needs dim ≥ 1, 0 < mu_lo ≤ mu_hi, center_scale ≥ 0"));
            }
        }
        if let InitialSpec::Uniform { low, high, dim } = self.initial {
            if dim == 0 || !(low < high) {
                return Err(Error::config("uniform initial values need dim ≥ 1 and low < high"));
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel { b: self.noise_b }
    }

    pub fn build_topology(&self) -> Result<Topology> {
        match &self.topology {
            TopologySpec::Cycle { n, bidirectional } => Topology::cycle(*n, *bidirectional),
            TopologySpec::Random { n, p } => {
                Topology::random_strongly_connected(*n, *p, &mut Stream::for_role(self.seed, Role::Topology, 0))
            }
            TopologySpec::Arcs { n, arcs } => Topology::from_arcs(*n, arcs.iter().map(|a| Arc::new(a[0], a[1]))),
        }
    }

    /// The objective suite and, for the SVM, the dataset it was built from.
    /// Data depends only on the master seed, never on the run index.
    pub fn build_objective(&self) -> Result<Option<(ObjectiveSuite, Option<SvmDataset>)>> {
        let n = self.topology.n();
        let mut rng = Stream::for_role(self.seed, Role::Dataset, 0);
        Ok(match &self.objective {
            None => None,
            Some(ObjectiveSpec::Quadratic { mu, centers }) => {
                if mu.len() != n {
                    return Err(Error::config(format!("{} quadratic terms for {n} nodes", mu.len())));
                }
                Some((ObjectiveSuite::Quadratic(QuadraticObjective::new(mu.clone(), centers.clone())?), None))
            }
            Some(ObjectiveSpec::RandomQuadratic { dim, mu_range, center_scale }) => {
                let q = QuadraticObjective::random(n, *dim, *mu_range, *center_scale, &mut rng)?;
                Some((ObjectiveSuite::Quadratic(q), None))
            }
            Some(ObjectiveSpec::Svm { c }) => {
                let data = SvmDataset::generate(n, &mut rng)?;
                let svm = SvmObjective::new(&data, *c)?;
                Some((ObjectiveSuite::Svm(svm), Some(data)))
            }
        })
    }

    /// Initial values for run `run_key`; `dim` is used by `ones`.
    pub fn initial_values(&self, dim: usize, run_key: u64) -> Result<Vec<Vec<f64>>> {
        let n = self.topology.n();
        match &self.initial {
            InitialSpec::Ones => Ok(vec![vec![1.0; dim]; n]),
            InitialSpec::Values { values } => {
                if values.len() != n || values.iter().any(|v| v.len() != dim) {
                    return Err(Error::config(format!("initial values must be {n} vectors of length {dim}")));
                }
                Ok(values.clone())
            }
            InitialSpec::Uniform { low, high, dim: d } => {
                if *d != dim {
                    return Err(Error::config(format!("initial dim {d} does not match objective dim {dim}")));
                }
                Ok((0..n)
                    .map(|i| {
                        let mut rng = Stream::for_role(run_key, Role::InitialValues, i as u64);
                        (0..dim).map(|_| rng.uniform(*low, *high)).collect()
                    })
                    .collect())
            }
        }
    }

    /// Dimension of the iterates: the objective's, else the initial spec's.
    pub fn dim(&self) -> usize {
        match (&self.objective, &self.initial) {
            (Some(ObjectiveSpec::Quadratic { centers, .. }), _) => centers.first().map_or(1, Vec::len),
            (Some(ObjectiveSpec::RandomQuadratic { dim, .. }), _) => *dim,
            (Some(ObjectiveSpec::Svm { .. }), _) => 3,
            (None, InitialSpec::Uniform { dim, .. }) => *dim,
            (None, InitialSpec::Values { values }) => values.first().map_or(1, Vec::len),
            (None, InitialSpec::Ones) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "topology": {"kind": "cycle", "n": 3, "bidirectional": true},
        "faults": {"l_u": 3, "l_f": 3, "l_del": 3, "p_w": 0.5, "p_f": 0.3},
        "objective": {"kind": "svm"},
        "horizon": 100
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_json(SMALL).unwrap();
        assert_eq!(c.objective, Some(ObjectiveSpec::Svm { c: 500.0 }));
        assert_eq!((c.runs, c.batch_size, c.k0, c.seed), (1, 10, 0, 0));
        assert_eq!(c.initial, InitialSpec::Ones);
        assert!(c.baseline && c.persist_raw && !c.verify);
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected_everywhere() {
        let top = SMALL.replace("\"horizon\"", "\"bogus\": 1, \"horizon\"");
        assert!(ExperimentConfig::from_json(&top).unwrap_err().is_configuration());
        let tagged = SMALL.replace("\"bidirectional\": true", "\"bidirectional\": true, \"extra\": 2");
        assert!(ExperimentConfig::from_json(&tagged).is_err());
        let faults = SMALL.replace("\"p_f\": 0.3", "\"p_f\": 0.3, \"l_x\": 1");
        assert!(ExperimentConfig::from_json(&faults).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_json(&SMALL.replace("\"horizon\": 100", "\"horizon\": 0")).is_err());
        assert!(ExperimentConfig::from_json(&SMALL.replace("\"p_w\": 0.5", "\"p_w\": 0.0")).is_err());
        let masked = SMALL.replace("\"horizon\"", "\"mask\": {\"window\": 3, \"extra_probability\": 0.1}, \"horizon\"");
        assert!(ExperimentConfig::from_json(&masked).is_err());
    }

    #[test]
    fn dataset_depends_on_master_seed_only() {
        let c = ExperimentConfig::from_json(SMALL).unwrap();
        let (a, _) = c.build_objective().unwrap().unwrap();
        let (b, _) = c.build_objective().unwrap().unwrap();
        assert_eq!(a, b);
        let other = ExperimentConfig { seed: 1, ..c };
        assert_ne!(other.build_objective().unwrap().unwrap().0, a);
    }
}
