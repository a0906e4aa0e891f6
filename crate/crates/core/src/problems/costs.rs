//! Task costs over trajectory views. Each returns its value and the gradient
//! in view space; [`TrajectoryLayout::pullback`](super::TrajectoryLayout::pullback)
//! maps it onto the decision vector.

use serde::{Deserialize, Serialize};

use super::layout::TrajectoryView;
use super::scene::Scene2D;

/// Smoothing inside the path-length norm.
pub const LENGTH_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// `exp(−d)` per node.
    #[default]
    Exp,
    /// `max(0, margin − d)` per node.
    Hinge,
}

/// Obstacle cost over the planar position nodes (DOFs 0 and 1).
pub fn obstacle_cost(
    view: &TrajectoryView,
    scene: &Scene2D,
    mode: CostMode,
    safety_margin: f64,
) -> (f64, TrajectoryView) {
    let n = view.nodes();
    let mut grad = TrajectoryView::zeros(view.dofs(), n);
    let mut value = 0.0;
    if scene.is_empty() {
        return (0.0, grad);
    }
    for t in 0..n {
        let p = [view.positions[0][t], view.positions[1][t]];
        let (d, g) = scene.signed_distance_grad(p);
        let slope = match mode {
            CostMode::Exp => {
                let e = (-d).exp();
                value += e;
                -e
            }
            CostMode::Hinge => {
                if d < safety_margin {
                    value += safety_margin - d;
                    -1.0
                } else {
                    0.0
                }
            }
        };
        grad.positions[0][t] = slope * g[0];
        grad.positions[1][t] = slope * g[1];
    }
    (value, grad)
}

/// `Σ_t √(|q_{t+1} − q_t|² + ε²)` over the first `spatial` DOFs.
pub fn path_length_cost(view: &TrajectoryView, spatial: usize) -> (f64, TrajectoryView) {
    let n = view.nodes();
    let spatial = spatial.min(view.dofs());
    let mut grad = TrajectoryView::zeros(view.dofs(), n);
    let mut value = 0.0;
    for t in 0..n.saturating_sub(1) {
        let sq: f64 = (0..spatial)
            .map(|k| (view.positions[k][t + 1] - view.positions[k][t]).powi(2))
            .sum();
        let len = (sq + LENGTH_EPS * LENGTH_EPS).sqrt();
        value += len;
        for k in 0..spatial {
            let u = (view.positions[k][t + 1] - view.positions[k][t]) / len;
            grad.positions[k][t + 1] += u;
            grad.positions[k][t] -= u;
        }
    }
    (value, grad)
}

/// `weight · Σ (max(0, q − hi)² + max(0, lo − q)²)` over every position node.
pub fn joint_limit_penalty(
    view: &TrajectoryView,
    bounds: &[[f64; 2]],
    weight: f64,
) -> (f64, TrajectoryView) {
    let n = view.nodes();
    let mut grad = TrajectoryView::zeros(view.dofs(), n);
    let mut value = 0.0;
    for (k, b) in bounds.iter().enumerate().take(view.dofs()) {
        for t in 0..n {
            let q = view.positions[k][t];
            let over = (q - b[1]).max(0.0);
            let under = (b[0] - q).max(0.0);
            value += weight * (over * over + under * under);
            grad.positions[k][t] = 2.0 * weight * (over - under);
        }
    }
    (value, grad)
}

/// Sum of segment norms of the planar path, without smoothing.
pub fn path_length(view: &TrajectoryView, spatial: usize) -> f64 {
    let n = view.nodes();
    let spatial = spatial.min(view.dofs());
    (0..n.saturating_sub(1))
        .map(|t| {
            (0..spatial)
                .map(|k| (view.positions[k][t + 1] - view.positions[k][t]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Mean over node pairs of `|v_{t+1} − v_t|²` summed across DOFs.
pub fn velocity_roughness(view: &TrajectoryView) -> f64 {
    let n = view.nodes();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = (0..n - 1)
        .map(|t| {
            view.velocities
                .iter()
                .map(|v| (v[t + 1] - v[t]).powi(2))
                .sum::<f64>()
        })
        .sum();
    total / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::scene::Circle;

    fn line_view(n: usize, a: [f64; 2], b: [f64; 2]) -> TrajectoryView {
        let mut v = TrajectoryView::zeros(2, n);
        for t in 0..n {
            let s = t as f64 / (n - 1) as f64;
            for k in 0..2 {
                v.positions[k][t] = a[k] + s * (b[k] - a[k]);
                v.velocities[k][t] = b[k] - a[k];
            }
        }
        v
    }

    #[test]
    fn empty_scene_has_zero_cost() {
        let v = line_view(6, [0.0, 0.0], [1.0, 1.0]);
        for mode in [CostMode::Exp, CostMode::Hinge] {
            let (c, g) = obstacle_cost(&v, &Scene2D::default(), mode, 0.5);
            assert_eq!(c, 0.0);
            assert_eq!(g.positions[0].amax(), 0.0);
        }
    }

    #[test]
    fn inactive_hinge() {
        let v = line_view(6, [0.0, 0.0], [1.0, 0.0]);
        let scene = Scene2D::new(vec![Circle { center: [0.5, 5.0], radius: 1.0 }], vec![]);
        let (c, g) = obstacle_cost(&v, &scene, CostMode::Hinge, 0.5);
        assert_eq!(c, 0.0);
        assert_eq!(g.positions[1].amax(), 0.0);
    }

    #[test]
    fn straight_length() {
        let v = line_view(11, [1.0, -1.0], [4.0, 3.0]);
        let (len, _) = path_length_cost(&v, 2);
        assert_close!(len, 5.0, 1e-12);
        assert_close!(path_length(&v, 2), 5.0, 1e-12);
        assert_eq!(velocity_roughness(&v), 0.0);
    }

    #[test]
    fn repeated_node_floor() {
        let v = line_view(10, [1.0, 1.0], [1.0, 1.0]);
        assert_close!(path_length_cost(&v, 2).0, 9.0 * LENGTH_EPS, 1e-20);
    }

    #[test]
    fn limit_penalty_formula() {
        let mut v = line_view(4, [0.0, 0.0], [0.0, 0.0]);
        v.positions[1][2] = 1.1;
        let bounds = [[-1.0, 1.0], [-1.0, 1.0]];
        let (c, g) = joint_limit_penalty(&v, &bounds, 100.0);
        assert_close!(c, 1.0, 1e-12);
        assert_close!(g.positions[1][2], 20.0, 1e-10);
        v.positions[1][2] = 0.3;
        assert_eq!(joint_limit_penalty(&v, &bounds, 100.0).0, 0.0);
    }
}
