//! The trunk/branch tree returned by every method.
//!
//! Target labels in a tree are 1-based.  Node indices are global and 1-based:
//! a segment covering `start..=end` holds `end − start + 1` states and one
//! input per interval.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::DiscreteAffineSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub states: Vec<Vec<f64>>,
    /// Zero-order-hold inputs, one per interval.
    pub inputs: Vec<Vec<f64>>,
    /// Physical times of the nodes (continuous-time methods only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Dilation factor per interval (continuous-time methods only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilation: Option<Vec<f64>>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub target: usize,
    /// Node index of the branch point.
    pub branch_time: usize,
    pub branch_point: Vec<f64>,
    pub segment: Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdtoTree {
    pub method: String,
    /// Priority order as target labels.
    pub priorities: Vec<usize>,
    pub trunks: Vec<Segment>,
    pub branches: Vec<Branch>,
    pub branch_times: BTreeMap<usize, usize>,
    /// Physical branch times (continuous-time methods only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub branch_clock: BTreeMap<usize, f64>,
}

/// A full root-to-target path.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub times: Option<Vec<f64>>,
    pub dilation: Option<Vec<f64>>,
}

impl Path {
    /// `Σ_k ‖u_k‖²`.
    pub fn input_energy(&self) -> f64 {
        self.inputs.iter().map(|u| u.iter().map(|v| v * v).sum::<f64>()).sum()
    }
}

fn append(path: &mut Path, seg: &Segment) {
    let skip = usize::from(!path.states.is_empty());
    path.states.extend(seg.states.iter().skip(skip).cloned());
    path.inputs.extend(seg.inputs.iter().cloned());
    if let (Some(t), Some(st)) = (path.times.as_mut(), seg.times.as_ref()) {
        t.extend(st.iter().skip(skip).copied());
    }
    if let (Some(d), Some(sd)) = (path.dilation.as_mut(), seg.dilation.as_ref()) {
        d.extend(sd.iter().copied());
    }
}

impl DdtoTree {
    pub fn n_targets(&self) -> usize {
        self.priorities.len()
    }

    pub fn branch(&self, target: usize) -> Option<&Branch> {
        self.branches.iter().find(|b| b.target == target)
    }

    /// Trunk prefix up to the branch point followed by the branch.
    pub fn path(&self, target: usize) -> Option<Path> {
        let br = self.branch(target)?;
        let continuous = br.segment.times.is_some();
        let mut p = Path {
            states: vec![],
            inputs: vec![],
            times: continuous.then(Vec::new),
            dilation: br.segment.dilation.as_ref().map(|_| Vec::new()),
        };
        for t in self.trunks.iter().filter(|t| t.end <= br.branch_time) {
            append(&mut p, t);
        }
        append(&mut p, &br.segment);
        Some(p)
    }

    pub fn paths(&self) -> BTreeMap<usize, Path> {
        self.branches.iter().filter_map(|b| self.path(b.target).map(|p| (b.target, p))).collect()
    }

    /// Largest `‖x_{k+1} − (A x_k + B u_k + c)‖∞` over all full paths.
    pub fn dynamics_defect(&self, sys: &DiscreteAffineSystem) -> f64 {
        let mut worst: f64 = 0.0;
        for p in self.paths().values() {
            for (k, u) in p.inputs.iter().enumerate() {
                let pred = sys.step(&p.states[k], u);
                for (a, b) in pred.iter().zip(&p.states[k + 1]) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }

    /// `J_k = { j : ‖x^j_k − x^i_k‖∞ ≤ tol }` over the anchor's horizon, as labels.
    pub fn coincidence_sets(&self, anchor: usize, tol: f64) -> Vec<Vec<usize>> {
        let paths = self.paths();
        let Some(xa) = paths.get(&anchor) else { return vec![] };
        (0..xa.states.len())
            .map(|k| {
                paths
                    .iter()
                    .filter(|(_, p)| {
                        p.states.get(k).is_some_and(|x| {
                            x.iter().zip(&xa.states[k]).all(|(a, b)| (a - b).abs() <= tol)
                        })
                    })
                    .map(|(j, _)| *j)
                    .collect()
            })
            .collect()
    }

    /// `Σ_k |J_k|`.
    pub fn coincidence_count(&self, anchor: usize, tol: f64) -> usize {
        self.coincidence_sets(anchor, tol).iter().map(|s| s.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(start: usize, xs: &[f64]) -> Segment {
        Segment {
            start,
            end: start + xs.len() - 1,
            states: xs.iter().map(|&x| vec![x]).collect(),
            inputs: xs.windows(2).map(|w| vec![w[1] - w[0]]).collect(),
            times: None,
            dilation: None,
        }
    }

    #[test]
    fn paths_concatenate_at_branch_points() {
        let tree = DdtoTree {
            method: "test".into(),
            priorities: vec![1, 2],
            trunks: vec![seg(1, &[0.0, 1.0])],
            branches: vec![
                Branch { target: 1, branch_time: 2, branch_point: vec![1.0], segment: seg(2, &[1.0, 2.0, 3.0]) },
                Branch { target: 2, branch_time: 2, branch_point: vec![1.0], segment: seg(2, &[1.0, 0.0, -1.0]) },
            ],
            branch_times: [(1, 2), (2, 2)].into_iter().collect(),
            branch_clock: BTreeMap::new(),
        };
        let p = tree.path(2).unwrap();
        assert_eq!(p.states, vec![vec![0.0], vec![1.0], vec![0.0], vec![-1.0]]);
        assert_eq!(p.inputs.len(), 3);
        assert_eq!(tree.dynamics_defect(&DiscreteAffineSystem::integrator(1)), 0.0);
        assert_eq!(tree.coincidence_count(1, 1e-9), 2 + 2 + 1 + 1);
    }
}
