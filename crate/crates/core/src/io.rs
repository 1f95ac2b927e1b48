//! Scenario files and result export.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DdtoError;
use crate::model::{double_integrator_discrete, DiscreteAffineSystem, Ellipsoid, Quadrotor};
use crate::oracle::GridSystem;
use crate::scenario::{InputConstraints, Scenario, StateBounds, TargetSet};
use crate::scp::{ScpConfig, ScpScenario};
use crate::tree::DdtoTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dynamics {
    /// Unit-mass 3-D point under gravity, sampled every `dt`.
    DoubleIntegrator { dt: f64, gravity: [f64; 3] },
    Affine { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<f64> },
    /// Continuous-time vehicle with quadratic drag and keep-out ellipsoids.
    Quadrotor {
        gravity: [f64; 3],
        drag: f64,
        #[serde(default)]
        obstacles: Vec<Ellipsoid>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub length: String,
    #[serde(default)]
    pub time: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcvxBlock {
    #[serde(default)]
    pub coincidence: crate::qcvx::Coincidence,
    #[serde(default)]
    pub margin: Option<f64>,
}

/// `"free"` or a 1-based target label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnchorSpec {
    Target(usize),
    Named(AnchorName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorName {
    Free,
}

impl AnchorSpec {
    pub fn parse(s: &str) -> Result<Self, DdtoError> {
        if s == "free" {
            return Ok(AnchorSpec::Named(AnchorName::Free));
        }
        s.parse::<usize>()
            .ok()
            .filter(|&i| i >= 1)
            .map(AnchorSpec::Target)
            .ok_or_else(|| DdtoError::invalid(format!("anchor must be a 1-based index or 'free', got '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicpBlock {
    #[serde(default = "default_anchor")]
    pub anchor: AnchorSpec,
    #[serde(default)]
    pub big_m: Option<f64>,
    /// `"1"`, `"2"` or `"inf"`.
    #[serde(default = "default_p")]
    pub p_norm: String,
    #[serde(default = "default_gap")]
    pub gap_tol: f64,
    #[serde(default)]
    pub node_limit: Option<usize>,
    #[serde(default)]
    pub time_limit_s: Option<f64>,
    #[serde(default = "default_true")]
    pub monotone_cuts: bool,
}

fn default_anchor() -> AnchorSpec {
    AnchorSpec::Target(1)
}
fn default_p() -> String {
    "2".into()
}
fn default_gap() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScpBlock {
    /// Total horizon `N` (odd).
    pub n: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub s_min: Option<f64>,
    #[serde(default)]
    pub s_max: Option<f64>,
    #[serde(default)]
    pub w_tr: Option<f64>,
    #[serde(default)]
    pub w_pen: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub tol_change: Option<f64>,
    #[serde(default)]
    pub tol_defect: Option<f64>,
    #[serde(default)]
    pub substeps: Option<usize>,
    /// Scale factor per path constraint.
    #[serde(default)]
    pub g_scale: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    #[serde(default)]
    pub instances: Vec<GridSystem>,
    #[serde(default)]
    pub random: Option<CorpusSpec>,
    #[serde(default)]
    pub convex: Option<CorpusSpec>,
    #[serde(default)]
    pub include_remark: bool,
    #[serde(default)]
    pub budget: Option<u128>,
}

impl OracleBlock {
    /// Explicit instances followed by the generated corpora.
    pub fn all_instances(&self) -> Vec<GridSystem> {
        let mut out = self.instances.clone();
        if self.include_remark {
            out.push(crate::oracle::remark_instance());
        }
        if let Some(c) = self.random {
            out.extend(crate::oracle::random_corpus(c.seed, c.count));
        }
        if let Some(c) = self.convex {
            out.extend(crate::oracle::convex_corpus(c.seed, c.count));
        }
        out
    }
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(default)]
    pub dynamics: Option<Dynamics>,
    #[serde(default)]
    pub z0: Vec<f64>,
    #[serde(default)]
    pub targets: Vec<TargetSet>,
    #[serde(default)]
    pub priorities: Vec<usize>,
    #[serde(default)]
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub inputs: InputConstraints,
    #[serde(default)]
    pub speed_max: Option<f64>,
    #[serde(default)]
    pub states: Option<StateBounds>,
    #[serde(default)]
    pub l_max: Option<f64>,
    #[serde(default)]
    pub qcvx: Option<QcvxBlock>,
    #[serde(default)]
    pub micp: Option<MicpBlock>,
    #[serde(default)]
    pub scp: Option<ScpBlock>,
    #[serde(default)]
    pub oracle: Option<OracleBlock>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, DdtoError> {
        serde_json::from_str(text).map_err(|e| {
            DdtoError::Scenario(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, DdtoError> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            DdtoError::Scenario(m) => DdtoError::Scenario(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    fn need<T: Clone>(v: &Option<T>, what: &str) -> Result<T, DdtoError> {
        v.clone().ok_or_else(|| DdtoError::Scenario(format!("missing field '{what}'")))
    }

    /// The discrete scenario (double-integrator or affine dynamics).
    pub fn scenario(&self) -> Result<Scenario, DdtoError> {
        let system = match self.dynamics.as_ref() {
            Some(Dynamics::DoubleIntegrator { dt, gravity }) => {
                if !(*dt >= 0.0) {
                    return Err(DdtoError::Scenario(format!("dt = {dt} must be nonnegative")));
                }
                double_integrator_discrete(*dt, *gravity)
            }
            Some(Dynamics::Affine { a, b, c }) => {
                let rows = |m: &Vec<Vec<f64>>| {
                    let nc = m.first().map(|r| r.len()).unwrap_or(0);
                    if m.iter().any(|r| r.len() != nc) {
                        return Err(DdtoError::Scenario("ragged matrix".into()));
                    }
                    Ok(nalgebra::DMatrix::from_fn(m.len(), nc, |i, j| m[i][j]))
                };
                DiscreteAffineSystem::new(rows(a)?, rows(b)?, nalgebra::DVector::from_vec(c.clone()))
                    .map_err(|e| DdtoError::Scenario(e.to_string()))?
            }
            Some(Dynamics::Quadrotor { .. }) => {
                return Err(DdtoError::Scenario("quadrotor dynamics need the scp method".into()))
            }
            None => return Err(DdtoError::Scenario("missing field 'dynamics'".into())),
        };
        let sc = Scenario {
            name: self.name.clone(),
            system,
            z0: self.z0.clone(),
            targets: self.targets.clone(),
            priorities: self.priorities.clone(),
            horizons: self.horizons.clone(),
            inputs: self.inputs.clone(),
            states: self.states.clone(),
            l_max: Self::need(&self.l_max, "l_max")?,
        };
        sc.validate()?;
        Ok(sc)
    }
}

impl ScenarioFile {
    /// The continuous-time scenario and its SCP settings.
    pub fn scp_problem(&self) -> Result<(ScpScenario, ScpConfig), DdtoError> {
        let Some(Dynamics::Quadrotor { gravity, drag, obstacles }) = self.dynamics.clone() else {
            return Err(DdtoError::Scenario("the scp method needs quadrotor dynamics".into()));
        };
        let blk = Self::need(&self.scp, "scp")?;
        let inp = &self.inputs;
        let axis = inp.axis_or_default(3);
        let ng = obstacles.len() + 5;
        let system = Quadrotor {
            gravity,
            drag,
            v_max: Self::need(&self.speed_max, "speed_max")?,
            u_max: Self::need(&inp.u_max, "inputs.u_max")?,
            u_min: inp.u_min.unwrap_or(0.0),
            axis: [axis[0], axis[1], axis[2]],
            delta_max: inp.delta_max_deg.unwrap_or(90.0).to_radians(),
            obstacles,
            g_scale: blk.g_scale.clone().unwrap_or_else(|| vec![1.0; ng]),
        };
        let mut targets = vec![];
        for t in &self.targets {
            match t {
                TargetSet::Point { z } => targets.push(z.clone()),
                _ => return Err(DdtoError::Scenario("the scp method supports point targets only".into())),
            }
        }
        let sc = ScpScenario {
            name: self.name.clone(),
            system,
            z0: self.z0.clone(),
            targets,
            priorities: self.priorities.clone(),
            horizon: blk.n,
            l_max: Self::need(&self.l_max, "l_max")?,
        };
        sc.validate()?;
        let d = ScpConfig::default();
        let cfg = ScpConfig {
            epsilon: blk.epsilon,
            s_min: blk.s_min.unwrap_or(d.s_min),
            s_max: blk.s_max.unwrap_or(d.s_max),
            w_tr: blk.w_tr.unwrap_or(d.w_tr),
            w_pen: blk.w_pen.unwrap_or(d.w_pen),
            max_iter: blk.max_iter.unwrap_or(d.max_iter),
            tol_change: blk.tol_change.unwrap_or(d.tol_change),
            tol_defect: blk.tol_defect.unwrap_or(d.tol_defect),
            substeps: blk.substeps.unwrap_or(d.substeps),
            ..d
        };
        cfg.validate()?;
        Ok((sc, cfg))
    }
}

/// JSON with shortest round-trip float formatting.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DdtoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_tree(path: &Path) -> Result<DdtoTree, DdtoError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes rows with a header to a CSV file.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), DdtoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioFile::from_json(r#"{"name": "x", "colour": 1}"#).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn anchor_parsing() {
        assert_eq!(AnchorSpec::parse("free").unwrap(), AnchorSpec::Named(AnchorName::Free));
        assert_eq!(AnchorSpec::parse("2").unwrap(), AnchorSpec::Target(2));
        assert!(AnchorSpec::parse("0").is_err());
        let a: AnchorSpec = serde_json::from_str("\"free\"").unwrap();
        assert_eq!(a, AnchorSpec::Named(AnchorName::Free));
    }
}
