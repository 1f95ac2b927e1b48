//! Problem data for the discrete convex methods.

use serde::{Deserialize, Serialize};

use crate::error::DdtoError;
use crate::model::DiscreteAffineSystem;

/// A target set `Z^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSet {
    Point { z: Vec<f64> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl TargetSet {
    pub fn dim(&self) -> usize {
        match self {
            TargetSet::Point { z } => z.len(),
            TargetSet::Box { lo, .. } => lo.len(),
            TargetSet::Ball { center, .. } => center.len(),
        }
    }

    /// Representative point (the point itself, box midpoint or ball center).
    pub fn center(&self) -> Vec<f64> {
        match self {
            TargetSet::Point { z } => z.clone(),
            TargetSet::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            TargetSet::Ball { center, .. } => center.clone(),
        }
    }

    /// Distance-like violation: `‖x − z‖∞` for points, box excess, radius excess.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            TargetSet::Point { z } => x.iter().zip(z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            TargetSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
                .fold(0.0, f64::max),
            TargetSet::Ball { center, radius } => {
                let d: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                (d - radius).max(0.0)
            }
        }
    }
}

/// Convex input constraints; absent fields are not enforced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConstraints {
    /// `‖u‖₂ ≤ u_max`
    #[serde(default)]
    pub u_max: Option<f64>,
    /// `êᵀu ≥ u_min`
    #[serde(default)]
    pub u_min: Option<f64>,
    /// Pointing axis `ê`, used by `u_min` and `delta_max_deg`.
    #[serde(default)]
    pub axis: Option<Vec<f64>>,
    /// `‖u‖ ≤ sec(δ) êᵀu`
    #[serde(default)]
    pub delta_max_deg: Option<f64>,
    /// `‖u‖∞ ≤ box`
    #[serde(default, rename = "box")]
    pub u_box: Option<f64>,
}

impl InputConstraints {
    pub fn axis_or_default(&self, nu: usize) -> Vec<f64> {
        self.axis.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; nu];
            if let Some(last) = e.last_mut() {
                *last = 1.0;
            }
            e
        })
    }

    /// Largest violation of the constraints at `u` (0 when satisfied).
    pub fn violation(&self, u: &[f64]) -> f64 {
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e = self.axis_or_default(u.len());
        let proj: f64 = e.iter().zip(u).map(|(a, b)| a * b).sum();
        let mut v: f64 = 0.0;
        if let Some(m) = self.u_max {
            v = v.max(norm - m);
        }
        if let Some(m) = self.u_min {
            v = v.max(m - proj);
        }
        if let Some(d) = self.delta_max_deg {
            v = v.max(norm - proj / d.to_radians().cos());
        }
        if let Some(b) = self.u_box {
            v = v.max(u.iter().map(|x| x.abs()).fold(0.0, f64::max) - b);
        }
        v
    }
}

/// Optional per-component state bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBounds {
    #[serde(default)]
    pub lo: Vec<Option<f64>>,
    #[serde(default)]
    pub hi: Vec<Option<f64>>,
}

impl StateBounds {
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for (i, xi) in x.iter().enumerate() {
            if let Some(Some(l)) = self.lo.get(i) {
                v = v.max(l - xi);
            }
            if let Some(Some(h)) = self.hi.get(i) {
                v = v.max(xi - h);
            }
        }
        v
    }
}

/// Discrete DDTO problem with stage cost `‖u‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub system: DiscreteAffineSystem,
    pub z0: Vec<f64>,
    pub targets: Vec<TargetSet>,
    /// `λ¹, …, λⁿ` as 1-based target labels, highest priority first.
    pub priorities: Vec<usize>,
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub inputs: InputConstraints,
    #[serde(default)]
    pub states: Option<StateBounds>,
    pub l_max: f64,
}

impl Scenario {
    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    /// 0-based target indices in priority order.
    pub fn priority_order(&self) -> Vec<usize> {
        self.priorities.iter().map(|p| p - 1).collect()
    }

    pub fn validate(&self) -> Result<(), DdtoError> {
        let err = |m: String| Err(DdtoError::Scenario(m));
        let nx = self.system.nx();
        let nu = self.system.nu();
        let n = self.targets.len();
        if n == 0 {
            return err("no targets".into());
        }
        if self.z0.len() != nx {
            return err(format!("z0 has {} entries, system has {nx} states", self.z0.len()));
        }
        if self.z0.iter().any(|v| !v.is_finite()) {
            return err("z0 not finite".into());
        }
        for (j, t) in self.targets.iter().enumerate() {
            if t.dim() != nx {
                return err(format!("target {} has dimension {}, expected {nx}", j + 1, t.dim()));
            }
            if let TargetSet::Ball { radius, .. } = t {
                if !(*radius >= 0.0) {
                    return err(format!("target {} has a negative radius", j + 1));
                }
            }
            if let TargetSet::Box { lo, hi } = t {
                if hi.len() != lo.len() || lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return err(format!("target {} box is empty", j + 1));
                }
            }
        }
        let mut seen = vec![false; n];
        if self.priorities.len() != n {
            return err(format!("{} priorities for {n} targets", self.priorities.len()));
        }
        for &p in &self.priorities {
            if p == 0 || p > n || seen[p - 1] {
                return err(format!("priorities {:?} are not a permutation of 1..{n}", self.priorities));
            }
            seen[p - 1] = true;
        }
        if self.horizons.len() != n {
            return err(format!("{} horizons for {n} targets", self.horizons.len()));
        }
        if self.horizons.iter().any(|&h| h < 2) {
            return err("horizons must be at least 2".into());
        }
        let ic = &self.inputs;
        if let (Some(lo), Some(hi)) = (ic.u_min, ic.u_max) {
            if lo > hi {
                return err(format!("u_min {lo} exceeds u_max {hi}"));
            }
        }
        if let Some(d) = ic.delta_max_deg {
            if !(d > 0.0 && d < 90.0) {
                return err(format!("delta_max {d} deg outside (0, 90)"));
            }
        }
        if let Some(e) = &ic.axis {
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if e.len() != nu || (norm - 1.0).abs() > 1e-9 {
                return err("axis must be a unit vector with one entry per input".into());
            }
        }
        if let Some(s) = &self.states {
            if s.lo.len() > nx || s.hi.len() > nx {
                return err("state bounds longer than the state".into());
            }
        }
        if !(self.l_max >= 0.0) {
            return err("l_max must be nonnegative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::double_integrator_discrete;

    fn base() -> Scenario {
        Scenario {
            name: "t".into(),
            system: double_integrator_discrete(0.5, [0.0, 0.0, -9.806]),
            z0: vec![0.0; 6],
            targets: vec![TargetSet::Point { z: vec![1.0; 6] }, TargetSet::Point { z: vec![2.0; 6] }],
            priorities: vec![2, 1],
            horizons: vec![5, 5],
            inputs: InputConstraints { u_max: Some(20.0), u_min: Some(8.0), ..Default::default() },
            states: None,
            l_max: 10.0,
        }
    }

    #[test]
    fn validation() {
        assert!(base().validate().is_ok());
        let mut s = base();
        s.inputs.u_min = Some(30.0);
        assert!(s.validate().is_err());
        let mut s = base();
        s.priorities = vec![1, 1];
        assert!(s.validate().is_err());
        let mut s = base();
        s.inputs.delta_max_deg = Some(90.0);
        assert!(s.validate().is_err());
        assert_eq!(base().priority_order(), vec![1, 0]);
    }
}
