//! Mapping between the flat decision vector and per-DOF node arrays.
//!
//! Each DOF owns one contiguous block `[free positions..., velocities...]`.
//! The start position is always clamped; the goal position is clamped when
//! requested. In finite-difference mode the block holds free positions only
//! and velocities are derived from them.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityMode {
    /// Velocity nodes are decision variables.
    Decision,
    /// Velocities are finite differences of the positions.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofLayout {
    pub name: String,
    pub start: f64,
    pub goal: f64,
    pub clamp_goal: bool,
}

/// Full per-DOF position and velocity arrays, clamped nodes included.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryView {
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
}

impl TrajectoryView {
    pub fn zeros(dofs: usize, nodes: usize) -> Self {
        Self {
            positions: vec![DVector::zeros(nodes); dofs],
            velocities: vec![DVector::zeros(nodes); dofs],
        }
    }

    pub fn dofs(&self) -> usize {
        self.positions.len()
    }

    pub fn nodes(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    pub fn add_assign(&mut self, other: &TrajectoryView, scale: f64) {
        for (a, b) in self.positions.iter_mut().zip(&other.positions) {
            a.axpy(scale, b, 1.0);
        }
        for (a, b) in self.velocities.iter_mut().zip(&other.velocities) {
            a.axpy(scale, b, 1.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLayout {
    dofs: Vec<DofLayout>,
    nodes: usize,
    dt: f64,
    mode: VelocityMode,
}

impl TrajectoryLayout {
    pub fn new(dofs: Vec<DofLayout>, nodes: usize, dt: f64, mode: VelocityMode) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::Config(format!("trajectory needs at least 3 nodes (got {nodes})")));
        }
        if dofs.is_empty() {
            return Err(Error::Config("trajectory needs at least one DOF".to_string()));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be > 0 (got {dt})")));
        }
        Ok(Self { dofs, nodes, dt, mode })
    }

    pub fn dofs(&self) -> &[DofLayout] {
        &self.dofs
    }

    pub fn dof_count(&self) -> usize {
        self.dofs.len()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mode(&self) -> VelocityMode {
        self.mode
    }

    /// Same DOFs and grid with another velocity mode.
    pub fn with_mode(&self, mode: VelocityMode) -> Self {
        Self { mode, ..self.clone() }
    }

    /// Node range of free positions for DOF `k`.
    pub fn free_nodes(&self, k: usize) -> std::ops::Range<usize> {
        let end = if self.dofs[k].clamp_goal { self.nodes - 1 } else { self.nodes };
        1..end
    }

    pub fn free_count(&self, k: usize) -> usize {
        self.free_nodes(k).len()
    }

    pub fn block_len(&self, k: usize) -> usize {
        match self.mode {
            VelocityMode::Decision => self.free_count(k) + self.nodes,
            VelocityMode::FiniteDifference => self.free_count(k),
        }
    }

    pub fn block_offset(&self, k: usize) -> usize {
        (0..k).map(|j| self.block_len(j)).sum()
    }

    pub fn dim(&self) -> usize {
        (0..self.dofs.len()).map(|k| self.block_len(k)).sum()
    }

    /// Decision index of position node `t` of DOF `k`, if free.
    pub fn position_index(&self, k: usize, t: usize) -> Option<usize> {
        let free = self.free_nodes(k);
        free.contains(&t).then(|| self.block_offset(k) + t - free.start)
    }

    /// Decision index of velocity node `t` of DOF `k` (decision mode only).
    pub fn velocity_index(&self, k: usize, t: usize) -> Option<usize> {
        match self.mode {
            VelocityMode::Decision if t < self.nodes => {
                Some(self.block_offset(k) + self.free_count(k) + t)
            }
            _ => None,
        }
    }

    /// Indices of the decision block of DOF `k` inside the stacked
    /// `[x(t_0..); v(t_0..)]` vector of that DOF's joint prior.
    pub fn joint_free_indices(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self.free_nodes(k).collect();
        if self.mode == VelocityMode::Decision {
            idx.extend(self.nodes..2 * self.nodes);
        }
        idx
    }

    /// Adds `value` to `column` at the decision entry of position node `t`
    /// of DOF `k`; clamped nodes are ignored.
    pub fn add_position_partial(&self, column: &mut DVector<f64>, k: usize, t: usize, value: f64) {
        if let Some(i) = self.position_index(k, t) {
            column[i] += value;
        }
    }

    /// Adds a partial derivative with respect to velocity node `t` of DOF `k`,
    /// spreading it over the difference stencil in finite-difference mode.
    pub fn add_velocity_partial(&self, column: &mut DVector<f64>, k: usize, t: usize, value: f64) {
        match self.mode {
            VelocityMode::Decision => {
                if let Some(i) = self.velocity_index(k, t) {
                    column[i] += value;
                }
            }
            VelocityMode::FiniteDifference => {
                let n = self.nodes;
                let (lo, hi, h) = if t == 0 {
                    (0, 1, self.dt)
                } else if t == n - 1 {
                    (n - 2, n - 1, self.dt)
                } else {
                    (t - 1, t + 1, 2.0 * self.dt)
                };
                self.add_position_partial(column, k, hi, value / h);
                self.add_position_partial(column, k, lo, -value / h);
            }
        }
    }

    fn check(&self, xi: &DVector<f64>) -> Result<()> {
        if xi.len() != self.dim() {
            return Err(Error::Dimension {
                context: "decision vector",
                expected: self.dim(),
                got: xi.len(),
            });
        }
        Ok(())
    }

    pub fn unflatten(&self, xi: &DVector<f64>) -> Result<TrajectoryView> {
        self.check(xi)?;
        let n = self.nodes;
        let mut view = TrajectoryView::zeros(self.dofs.len(), n);
        for (k, dof) in self.dofs.iter().enumerate() {
            let off = self.block_offset(k);
            let free = self.free_nodes(k);
            let q = &mut view.positions[k];
            q[0] = dof.start;
            q[n - 1] = dof.goal;
            for t in free.clone() {
                q[t] = xi[off + t - free.start];
            }
            match self.mode {
                VelocityMode::Decision => {
                    let v0 = off + free.len();
                    view.velocities[k].copy_from(&xi.rows(v0, n));
                }
                VelocityMode::FiniteDifference => {
                    view.velocities[k] = self.finite_difference(q);
                }
            }
        }
        Ok(view)
    }

    /// Decision vector of a view; clamped nodes (and derived velocities) are dropped.
    pub fn flatten(&self, view: &TrajectoryView) -> DVector<f64> {
        let mut xi = DVector::zeros(self.dim());
        for k in 0..self.dofs.len() {
            let off = self.block_offset(k);
            let free = self.free_nodes(k);
            for t in free.clone() {
                xi[off + t - free.start] = view.positions[k][t];
            }
            if self.mode == VelocityMode::Decision {
                xi.rows_mut(off + free.len(), self.nodes).copy_from(&view.velocities[k]);
            }
        }
        xi
    }

    /// Chain rule from view-space gradients to the decision vector.
    pub fn pullback(&self, grad: &TrajectoryView) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for k in 0..self.dofs.len() {
            let off = self.block_offset(k);
            let free = self.free_nodes(k);
            let mut gq = grad.positions[k].clone();
            match self.mode {
                VelocityMode::Decision => {
                    out.rows_mut(off + free.len(), self.nodes).copy_from(&grad.velocities[k]);
                }
                VelocityMode::FiniteDifference => {
                    gq += self.finite_difference_transpose(&grad.velocities[k]);
                }
            }
            for t in free.clone() {
                out[off + t - free.start] = gq[t];
            }
        }
        out
    }

    /// One-sided differences at the ends, central differences inside.
    pub fn finite_difference(&self, q: &DVector<f64>) -> DVector<f64> {
        let n = q.len();
        let h = self.dt;
        DVector::from_fn(n, |t, _| {
            if t == 0 {
                (q[1] - q[0]) / h
            } else if t == n - 1 {
                (q[n - 1] - q[n - 2]) / h
            } else {
                (q[t + 1] - q[t - 1]) / (2.0 * h)
            }
        })
    }

    fn finite_difference_transpose(&self, g: &DVector<f64>) -> DVector<f64> {
        let n = g.len();
        let h = self.dt;
        let mut out = DVector::zeros(n);
        out[1] += g[0] / h;
        out[0] -= g[0] / h;
        out[n - 1] += g[n - 1] / h;
        out[n - 2] -= g[n - 1] / h;
        for t in 1..n - 1 {
            out[t + 1] += g[t] / (2.0 * h);
            out[t - 1] -= g[t] / (2.0 * h);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(mode: VelocityMode) -> TrajectoryLayout {
        let dofs = vec![
            DofLayout { name: "x".into(), start: 0.0, goal: 1.0, clamp_goal: true },
            DofLayout { name: "y".into(), start: 2.0, goal: -1.0, clamp_goal: false },
        ];
        TrajectoryLayout::new(dofs, 5, 0.25, mode).unwrap()
    }

    #[test]
    fn dimensions() {
        let l = layout(VelocityMode::Decision);
        assert_eq!(l.block_len(0), 3 + 5);
        assert_eq!(l.block_len(1), 4 + 5);
        assert_eq!(l.dim(), 17);
        assert_eq!(l.position_index(0, 0), None);
        assert_eq!(l.position_index(0, 4), None);
        assert_eq!(l.position_index(1, 4), Some(8 + 3));
        assert_eq!(l.velocity_index(1, 0), Some(8 + 4));
        assert_eq!(l.joint_free_indices(0), vec![1, 2, 3, 5, 6, 7, 8, 9]);
        assert_eq!(layout(VelocityMode::FiniteDifference).dim(), 7);
    }

    #[test]
    fn clamped_nodes_fixed() {
        let l = layout(VelocityMode::Decision);
        let xi = DVector::from_fn(l.dim(), |i, _| i as f64);
        let v = l.unflatten(&xi).unwrap();
        assert_eq!(v.positions[0][0], 0.0);
        assert_eq!(v.positions[0][4], 1.0);
        assert_eq!(v.positions[1][0], 2.0);
        assert_eq!(v.positions[1][4], 11.0);
        assert_eq!(l.flatten(&v), xi);
    }

    #[test]
    fn finite_differences_of_line() {
        let l = layout(VelocityMode::FiniteDifference);
        let q = DVector::from_fn(5, |t, _| 3.0 * t as f64 * 0.25);
        assert!(l.finite_difference(&q).iter().all(|v| (v - 3.0).abs() < 1e-14));
    }

    #[test]
    fn wrong_length_rejected() {
        let l = layout(VelocityMode::Decision);
        assert!(matches!(l.unflatten(&DVector::zeros(3)), Err(Error::Dimension { .. })));
    }
}
