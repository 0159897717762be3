//! Experiment configuration: a JSON file describing one model, the
//! evaluation grid, and how results should be produced.
//!
//! Unknown fields are rejected rather than ignored — a typo in a tolerance
//! name should fail the run, not silently fall back to a default. Every
//! parsed config also passes [`ExperimentConfig::check`] before anything is
//! computed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use legendre_uq::{Atom, JointInputModel, QuadratureSpec};

/// Schema version this build understands.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub model: ModelSpec,
    /// Evaluation points, each strictly inside (-1, 1).
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    /// Truncation orders (table columns), strictly increasing.
    #[serde(default = "default_m_list")]
    pub m_list: Vec<usize>,
    /// Override of the model's default quadrature resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
    /// Relative tolerance for the truncation-stabilization verdicts.
    #[serde(default = "default_stabilization_tol")]
    pub stabilization_tol: f64,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Externally published values to annotate reports with (optional).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_t_grid() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

fn default_m_list() -> Vec<usize> {
    vec![10, 20, 40, 80]
}

fn default_stabilization_tol() -> f64 {
    1e-6
}

/// Which joint law to run. Mirrors the library constructors; the raw-density
/// model has no JSON form (closures don't serialize) and stays library-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Dirichlet {
        alphas: [f64; 4],
    },
    Multinomial {
        n: u32,
        probs: [f64; 3],
    },
    TruncatedMultinormal {
        mean: [f64; 3],
        covariance: [[f64; 3]; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_interval: Option<[f64; 2]>,
    },
    Discrete {
        atoms: Vec<AtomSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub a: f64,
    pub x0: f64,
    pub x1: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub nodes: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    /// Whether `run` also produces Monte Carlo columns. `compare` always
    /// samples, regardless of this flag.
    pub enabled: bool,
    pub samples: usize,
    pub seed: u64,
    pub evaluator: McEvaluator,
    /// Series order per sample (series evaluator).
    pub series_order: usize,
    /// Integrator tolerance (ode evaluator).
    pub ode_rel_tol: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            samples: 100_000,
            seed: 1,
            evaluator: McEvaluator::Series,
            series_order: legendre_uq::DEFAULT_MC_EVAL_ORDER.get(),
            ode_rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McEvaluator {
    Series,
    Ode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
        }
    }
}

/// Published values to hold the run against. Each present array must match
/// the `t_grid` length; `order` names the truncation column the engine
/// values refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub label: String,
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expectation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_expectation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_variance: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        config.check()?;
        Ok(config)
    }

    /// Structural validation beyond what serde can express.
    pub fn check(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!(
                "config version {} is not supported (this build expects {CONFIG_VERSION})",
                self.version
            );
        }
        if self.t_grid.is_empty() {
            bail!("t_grid must contain at least one evaluation point");
        }
        for &t in &self.t_grid {
            if !(t.is_finite() && t.abs() < 1.0) {
                bail!("t_grid entry {t} is outside the open interval (-1, 1)");
            }
        }
        if self.m_list.is_empty() {
            bail!("m_list must contain at least one truncation order");
        }
        if self.m_list.windows(2).any(|p| p[0] >= p[1]) {
            bail!("m_list must be strictly increasing, got {:?}", self.m_list);
        }
        if self.mc.samples < 2 {
            bail!("mc.samples must be at least 2");
        }
        if self.mc.series_order == 0 {
            bail!("mc.series_order must be at least 1");
        }
        if !(self.mc.ode_rel_tol.is_finite() && self.mc.ode_rel_tol > 0.0) {
            bail!("mc.ode_rel_tol must be finite and > 0");
        }
        if !(self.stabilization_tol.is_finite() && self.stabilization_tol >= 0.0) {
            bail!("stabilization_tol must be finite and >= 0");
        }
        if let Some(reference) = &self.reference {
            if !self.m_list.contains(&reference.order) {
                bail!(
                    "reference.order {} is not one of the m_list columns {:?}",
                    reference.order,
                    self.m_list
                );
            }
            let arrays = [
                ("expectation", &reference.expectation),
                ("variance", &reference.variance),
                ("mc_expectation", &reference.mc_expectation),
                ("mc_variance", &reference.mc_variance),
            ];
            for (name, values) in arrays {
                if let Some(values) = values {
                    if values.len() != self.t_grid.len() {
                        bail!(
                            "reference.{name} has {} entries but t_grid has {}",
                            values.len(),
                            self.t_grid.len()
                        );
                    }
                }
            }
        }
        Ok(())
    }

    /// Instantiate the model, applying the quadrature override and the
    /// unbounded gate override.
    pub fn build_model(&self, override_unbounded: bool) -> Result<JointInputModel> {
        let mut model = match &self.model {
            ModelSpec::Dirichlet { alphas } => JointInputModel::dirichlet(*alphas)?,
            ModelSpec::Multinomial { n, probs } => JointInputModel::multinomial(*n, *probs)?,
            ModelSpec::TruncatedMultinormal {
                mean,
                covariance,
                a_interval,
            } => JointInputModel::truncated_multinormal(*mean, *covariance, *a_interval)?,
            ModelSpec::Discrete { atoms } => JointInputModel::from_atoms(
                atoms
                    .iter()
                    .map(|at| Atom {
                        a: at.a,
                        x0: at.x0,
                        x1: at.x1,
                        p: at.p,
                    })
                    .collect(),
            )?,
        };
        if let Some(q) = self.quadrature {
            model = model.with_quadrature(QuadratureSpec {
                nodes: q.nodes,
                tol: q.tol,
            })?;
        }
        Ok(model.with_unbounded_override(override_unbounded))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> &'static str {
        r#"{ "model": { "type": "multinomial", "n": 10, "probs": [0.2, 0.3, 0.5] } }"#
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.check().unwrap();
        assert_eq!(cfg.version, CONFIG_VERSION);
        assert_eq!(cfg.t_grid.len(), 10);
        assert_eq!(cfg.m_list, vec![10, 20, 40, 80]);
        assert!(!cfg.mc.enabled);
        assert_eq!(cfg.mc.series_order, 120);
        assert_eq!(cfg.output.directory, PathBuf::from("out"));
    }

    #[test]
    fn serialization_round_trips() {
        let mut cfg: ExperimentConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.mc.enabled = true;
        cfg.mc.samples = 12_345;
        cfg.quadrature = Some(QuadratureConfig {
            nodes: 48,
            tol: 1e-9,
        });
        cfg.reference = Some(ReferenceConfig {
            label: "external table".into(),
            order: 80,
            expectation: Some(vec![0.0; 10]),
            variance: None,
            mc_expectation: None,
            mc_variance: None,
        });
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{
            "model": { "type": "multinomial", "n": 10, "probs": [0.2, 0.3, 0.5] },
            "stabilisation_tol": 1e-6
        }"#;
        let err = serde_json::from_str::<ExperimentConfig>(json).unwrap_err();
        assert!(err.to_string().contains("stabilisation_tol"), "{err}");
    }

    #[test]
    fn structural_checks_catch_bad_grids() {
        let mut cfg: ExperimentConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.t_grid = vec![];
        assert!(cfg.check().is_err());

        let mut cfg: ExperimentConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.t_grid = vec![0.5, 1.0];
        assert!(cfg.check().is_err());

        let mut cfg: ExperimentConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.m_list = vec![10, 10];
        assert!(cfg.check().is_err());

        let mut cfg: ExperimentConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.version = 2;
        assert!(cfg.check().is_err());
    }

    #[test]
    fn reference_lengths_must_match_the_grid() {
        let mut cfg: ExperimentConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.reference = Some(ReferenceConfig {
            label: "x".into(),
            order: 80,
            expectation: Some(vec![1.0, 2.0]),
            variance: None,
            mc_expectation: None,
            mc_variance: None,
        });
        assert!(cfg.check().is_err());
        // Wrong column name too.
        let mut cfg: ExperimentConfig = serde_json::from_str(minimal_json()).unwrap();
        cfg.reference = Some(ReferenceConfig {
            label: "x".into(),
            order: 30,
            expectation: None,
            variance: None,
            mc_expectation: None,
            mc_variance: None,
        });
        assert!(cfg.check().is_err());
    }

    #[test]
    fn models_build_from_specs() {
        let json = r#"{
            "model": {
                "type": "truncated_multinormal",
                "mean": [10, -2, 1],
                "covariance": [[1, 0.01, -0.02], [0.01, 4, 2], [-0.02, 2, 4]],
                "a_interval": [6, 14]
            }
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        let model = cfg.build_model(false).unwrap();
        assert_eq!(model.a_bound(), 14.0);

        let json = r#"{
            "model": { "type": "discrete", "atoms": [
                { "a": 2.0, "x0": 1.0, "x1": 0.0, "p": 0.5 },
                { "a": 3.0, "x0": 0.0, "x1": 1.0, "p": 0.5 }
            ] }
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert!(cfg.build_model(false).unwrap().is_exact());
    }
}
