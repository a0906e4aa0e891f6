use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::PlanResult;
use crate::problems::{path_length, velocity_roughness, TrajectoryView};
use crate::stein::{trajectory_kernel, TrajectoryKernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    /// Sum of planar segment norms.
    pub length: f64,
    /// Mean squared velocity difference between consecutive nodes.
    pub smoothness: f64,
    /// Mean squared equality residual.
    pub violation_mse: f64,
}

pub fn trajectory_metrics(view: &TrajectoryView, h: &DVector<f64>) -> TrajectoryMetrics {
    TrajectoryMetrics {
        length: path_length(view, 2),
        smoothness: velocity_roughness(view),
        violation_mse: if h.is_empty() {
            0.0
        } else {
            h.norm_squared() / h.len() as f64
        },
    }
}

/// Lowest objective among particles with violation within `feasibility_tol`;
/// otherwise the smallest violation, ties broken by objective.
pub fn select_best_by(objectives: &[f64], violations: &[f64], feasibility_tol: f64) -> usize {
    let feasible = (0..objectives.len())
        .filter(|&i| violations[i] <= feasibility_tol)
        .min_by(|&a, &b| objectives[a].total_cmp(&objectives[b]));
    feasible.unwrap_or_else(|| {
        (0..objectives.len())
            .min_by(|&a, &b| {
                violations[a]
                    .total_cmp(&violations[b])
                    .then(objectives[a].total_cmp(&objectives[b]))
            })
            .unwrap_or(0)
    })
}

pub fn select_best(result: &PlanResult, feasibility_tol: f64) -> usize {
    select_best_by(&result.objectives, &result.violations, feasibility_tol)
}

/// Greedy clustering: a particle opens a new cluster when its kernel value
/// against every existing representative is below `threshold`. Returns the
/// representative indices.
pub fn count_clusters(particles: &[DVector<f64>], spec: &TrajectoryKernelSpec, threshold: f64) -> Vec<usize> {
    let mut reps: Vec<usize> = Vec::new();
    for (i, x) in particles.iter().enumerate() {
        let joins = reps.iter().any(|&r| {
            trajectory_kernel(&particles[r], x, spec)
                .map(|(k, _)| k >= threshold)
                .unwrap_or(false)
        });
        if !joins {
            reps.push(i);
        }
    }
    reps
}
