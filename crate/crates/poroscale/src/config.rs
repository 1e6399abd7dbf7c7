//! Scenario configuration: JSON schema, exhaustive validation, and
//! resolution into the solver inputs. Physics functions are named entries
//! of a closed registry; there is no expression evaluation.

use crate::cell::Formulation;
use crate::error::{Error, Result};
use crate::la::Mat2;
use crate::physics::{
    check_sign_compliance, BodyForce, BoundaryPressure, FunctionSpec, InitialField,
    PhysicsFunctions, ReactionRate, SurfaceRate,
};
use crate::table::MicrostructureParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainConfig {
    pub ax: f64,
    pub ay: f64,
    pub bx: f64,
    pub by: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MacroMeshConfig {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_snapshot_every() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TableConfig {
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_cell_resolution")]
    pub cell_resolution: usize,
    #[serde(default = "default_formulation")]
    pub formulation: String,
}

fn default_n_samples() -> usize {
    17
}
fn default_cell_resolution() -> usize {
    32
}
fn default_formulation() -> String {
    "moving".to_string()
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            n_samples: default_n_samples(),
            cell_resolution: default_cell_resolution(),
            formulation: default_formulation(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MicrostructureConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub r_init: FunctionSpec,
    #[serde(default)]
    pub table: TableConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PhysicsConfig {
    #[serde(default = "default_diffusion")]
    pub d: [[f64; 2]; 2],
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "zero_spec")]
    pub f: FunctionSpec,
    #[serde(default = "zero_spec")]
    pub g: FunctionSpec,
    #[serde(default = "zero_spec")]
    pub h0: FunctionSpec,
    #[serde(default = "zero_spec")]
    pub p_b: FunctionSpec,
    pub u_init: FunctionSpec,
}

fn default_diffusion() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

fn zero_spec() -> FunctionSpec {
    FunctionSpec::new("zero", &[])
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputConfig {
    #[serde(default = "default_output_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_output_dir() -> String {
    "out".to_string()
}
fn default_formats() -> Vec<String> {
    vec!["csv".to_string()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_output_dir(),
            formats: default_formats(),
        }
    }
}

/// Full simulation description as read from the configuration file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    pub domain: DomainConfig,
    pub macro_mesh: MacroMeshConfig,
    pub time: TimeConfig,
    pub microstructure: MicrostructureConfig,
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Seed for randomized verification sweeps only; the solver itself is
    /// deterministic.
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    /// Parse and validate. All violated invariants are reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        let problems = cfg.validate();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(format!(
                "invalid config:\n  - {}",
                problems.join("\n  - ")
            )))
        }
    }

    pub fn parse_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Every violated invariant, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let d = &self.domain;
        if d.bx <= d.ax || d.by <= d.ay {
            problems.push(format!(
                "domain rectangle degenerate: ({}, {}) x ({}, {})",
                d.ax, d.bx, d.ay, d.by
            ));
        }
        if self.macro_mesh.nx < 2 || self.macro_mesh.ny < 2 {
            problems.push("macro mesh needs nx, ny >= 2".to_string());
        }
        if self.time.t_end <= 0.0 {
            problems.push(format!("time horizon must be positive, got {}", self.time.t_end));
        }
        if self.time.dt <= 0.0 {
            problems.push(format!("time step must be positive, got {}", self.time.dt));
        }
        if self.time.t_end > 0.0 && self.time.dt > 0.0 {
            let n = (self.time.t_end / self.time.dt).round();
            if n < 1.0 || (self.time.t_end - n * self.time.dt).abs() > 1e-9 * self.time.t_end {
                problems.push(format!(
                    "time horizon {} is not an integer multiple of dt = {}",
                    self.time.t_end, self.time.dt
                ));
            }
        }
        let ms = &self.microstructure;
        if !(0.0 < ms.r_min && ms.r_min < ms.r_max && ms.r_max < 0.5) {
            problems.push(format!(
                "radius bounds require 0 < R_min < R_max < 1/2, got R_min = {}, R_max = {}",
                ms.r_min, ms.r_max
            ));
        }
        if ms.table.n_samples < 4 {
            problems.push(format!(
                "coefficient table needs at least 4 samples, got {}",
                ms.table.n_samples
            ));
        }
        if ms.table.formulation.parse::<Formulation>().is_err() {
            problems.push(format!(
                "unknown cell-problem formulation '{}' (expected 'fixed' or 'moving')",
                ms.table.formulation
            ));
        }
        let dm = Mat2::new(
            self.physics.d[0][0],
            self.physics.d[0][1],
            self.physics.d[1][0],
            self.physics.d[1][1],
        );
        if (dm.m[0][1] - dm.m[1][0]).abs() > 1e-14 || !dm.is_spd() {
            problems.push("diffusion tensor D must be symmetric positive definite".to_string());
        }
        if let Err(e) = ReactionRate::resolve(&self.physics.f) {
            problems.push(e.to_string());
        }
        if let Err(e) = InitialField::resolve(&self.physics.u_init) {
            problems.push(e.to_string());
        }
        if let Err(e) = InitialField::resolve(&ms.r_init) {
            problems.push(e.to_string());
        }
        if let Err(e) = BodyForce::resolve(&self.physics.h0) {
            problems.push(e.to_string());
        }
        if let Err(e) = BoundaryPressure::resolve(&self.physics.p_b) {
            problems.push(e.to_string());
        }
        if 0.0 < ms.r_min && ms.r_min < ms.r_max && ms.r_max < 0.5 {
            match SurfaceRate::resolve(&self.physics.g, ms.r_min, ms.r_max) {
                Err(e) => problems.push(e.to_string()),
                Ok(g) => {
                    if let Err(violations) = check_sign_compliance(&g, ms.r_min, ms.r_max) {
                        let pts: Vec<String> = violations
                            .iter()
                            .map(|v| format!("g({:.3}, {:.4}) = {:.3e}", v.u, v.r, v.g))
                            .collect();
                        problems.push(format!(
                            "surface rate violates the sign conditions that confine the radii \
                             (g >= 0 at R <= R_min, g <= 0 at R >= R_max); offending samples: {}",
                            pts.join(", ")
                        ));
                    }
                }
            }
        }
        problems
    }

    /// Canonical normalized serialization (defaults filled, stable order).
    pub fn to_normalized_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Content hash of the scientific configuration: domain, mesh, time
    /// grid, microstructure and physics. Output plumbing and the
    /// test-sweep seed do not change what a run computes and are excluded,
    /// so runs into different directories carry identical hashes.
    pub fn content_hash(&self) -> String {
        let core = serde_json::json!({
            "domain": self.domain,
            "macro_mesh": self.macro_mesh,
            "time": self.time,
            "microstructure": self.microstructure,
            "physics": self.physics,
        });
        let mut hasher = Sha256::new();
        hasher.update(core.to_string().as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn rect(&self) -> [f64; 4] {
        [self.domain.ax, self.domain.ay, self.domain.bx, self.domain.by]
    }

    pub fn diffusion(&self) -> Mat2 {
        Mat2::new(
            self.physics.d[0][0],
            self.physics.d[0][1],
            self.physics.d[1][0],
            self.physics.d[1][1],
        )
    }

    pub fn table_params(&self) -> Result<MicrostructureParams> {
        Ok(MicrostructureParams {
            r_min: self.microstructure.r_min,
            r_max: self.microstructure.r_max,
            diffusion: self.diffusion(),
            n_samples: self.microstructure.table.n_samples,
            cell_resolution: self.microstructure.table.cell_resolution,
            formulation: self.microstructure.table.formulation.parse()?,
        })
    }

    pub fn resolve_physics(&self) -> Result<PhysicsFunctions> {
        let ms = &self.microstructure;
        let g = SurfaceRate::resolve(&self.physics.g, ms.r_min, ms.r_max)?;
        let c_g = g.bound(ms.r_min, ms.r_max);
        let l_g = g.lipschitz();
        Ok(PhysicsFunctions {
            f: ReactionRate::resolve(&self.physics.f)?,
            g,
            h0: BodyForce::resolve(&self.physics.h0)?,
            p_b: BoundaryPressure::resolve(&self.physics.p_b)?,
            rho: self.physics.rho,
            diffusion: self.diffusion(),
            c_g,
            l_g,
        })
    }

    /// Nodal initial fields on the macro mesh.
    pub fn initial_fields(&self, mesh: &crate::mesh::PeriodicMesh) -> Result<(Vec<f64>, Vec<f64>)> {
        let u_spec = InitialField::resolve(&self.physics.u_init)?;
        let r_spec = InitialField::resolve(&self.microstructure.r_init)?;
        let rect = self.rect();
        let (r_min, r_max) = (self.microstructure.r_min, self.microstructure.r_max);
        let u0: Vec<f64> = mesh.nodes.iter().map(|p| u_spec.eval(rect, *p)).collect();
        let r0: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|p| r_spec.eval(rect, *p).clamp(r_min, r_max))
            .collect();
        // homogeneous Dirichlet data: zero the boundary concentration
        let mut u0 = u0;
        for n in mesh.nodes_with_tag(crate::mesh::BoundaryTag::Outer) {
            u0[n] = 0.0;
        }
        Ok((u0, r0))
    }
}

/// A minimal valid configuration used by tests and as documentation of the
/// defaults.
pub fn example_config_json() -> String {
    r#"{
  "domain": {"ax": 0.0, "ay": 0.0, "bx": 1.0, "by": 1.0},
  "macro_mesh": {"nx": 16, "ny": 16},
  "time": {"t_end": 0.1, "dt": 0.01, "snapshot_every": 5},
  "microstructure": {
    "r_min": 0.1,
    "r_max": 0.25,
    "r_init": {"name": "constant", "params": {"c": 0.2}},
    "table": {"n_samples": 5, "cell_resolution": 16, "formulation": "moving"}
  },
  "physics": {
    "rho": 0.1,
    "f": {"name": "zero"},
    "g": {"name": "tapered_reaction", "params": {"k_p": 2.0, "k_d": 0.1}},
    "h0": {"name": "constant", "params": {"x": 0.5, "y": 0.0}},
    "p_b": {"name": "zero"},
    "u_init": {"name": "product_sine", "params": {"amp": 0.5}}
  },
  "output": {"dir": "out", "formats": ["csv"]},
  "seed": 7
}"#
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let text = r#"{
            "domain": {"ax": 0.0, "ay": 0.0, "bx": 1.0, "by": 1.0},
            "macro_mesh": {"nx": 4, "ny": 4},
            "time": {"t_end": 0.1, "dt": 0.05},
            "microstructure": {
                "r_min": 0.1, "r_max": 0.25,
                "r_init": {"name": "constant", "params": {"c": 0.2}}
            },
            "physics": {"u_init": {"name": "constant", "params": {"c": 0.0}}}
        }"#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.time.snapshot_every, 10);
        assert_eq!(cfg.microstructure.table.n_samples, 17);
        assert_eq!(cfg.microstructure.table.formulation, "moving");
        assert_eq!(cfg.output.dir, "out");
        assert_eq!(cfg.physics.d, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn inverted_radius_bounds_rejected() {
        let mut text: serde_json::Value = serde_json::from_str(&example_config_json()).unwrap();
        text["microstructure"]["r_min"] = serde_json::json!(0.3);
        text["microstructure"]["r_max"] = serde_json::json!(0.25);
        let err = ScenarioConfig::parse(&text.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0 < R_min < R_max < 1/2"), "message: {msg}");
    }

    #[test]
    fn constant_positive_g_rejected_with_samples() {
        let mut text: serde_json::Value = serde_json::from_str(&example_config_json()).unwrap();
        text["physics"]["g"] = serde_json::json!({"name": "constant", "params": {"c": 1.0}});
        let err = ScenarioConfig::parse(&text.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sign conditions"), "message: {msg}");
        assert!(msg.contains("offending samples"), "message: {msg}");
    }

    #[test]
    fn multiple_violations_reported_together() {
        let mut text: serde_json::Value = serde_json::from_str(&example_config_json()).unwrap();
        text["time"]["dt"] = serde_json::json!(-1.0);
        text["macro_mesh"]["nx"] = serde_json::json!(1);
        text["physics"]["f"] = serde_json::json!({"name": "mystery"});
        let err = ScenarioConfig::parse(&text.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("time step"));
        assert!(msg.contains("nx, ny"));
        assert!(msg.contains("mystery"));
    }

    #[test]
    fn normalization_is_a_fixed_point() {
        let cfg = ScenarioConfig::parse(&example_config_json()).unwrap();
        let once = cfg.to_normalized_json();
        let cfg2 = ScenarioConfig::parse(&once).unwrap();
        let twice = cfg2.to_normalized_json();
        assert_eq!(once, twice);
        assert_eq!(cfg.content_hash(), cfg2.content_hash());
    }
}
