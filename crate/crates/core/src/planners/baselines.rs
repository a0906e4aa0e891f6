//! Penalty-method baselines on the positions-only layout.
//!
//! Both minimize `w·½Σ|D q|² + c·L + ρ Σ h²` per particle, without particle
//! interaction. CHOMP uses first differences and the covariant step
//! `ξ ← ξ − η A⁻¹ ∇f`; GPMP uses second differences (a constant-velocity
//! prior) and plain gradient steps.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::select_best_by;
use super::{trace_row, PlanResult, PlannerConfig, PlannerKind, TraceRow};
use crate::constraints::ConstraintEval;
use crate::error::{Error, Result};
use crate::problems::{ProblemSpec, TaskModel, TrajectoryView};
use crate::stein::ParticleSet;

pub const DEFAULT_PENALTY: f64 = 100.0;

const BEST_FEASIBILITY_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselinePriorSpec {
    /// Finite-difference order of the smoothness term (1 or 2).
    pub order: usize,
    pub weight: f64,
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    /// Multiplier on the task cost.
    #[serde(default = "one")]
    pub cost_scale: f64,
    /// Standard deviation of the smooth initial perturbation.
    #[serde(default)]
    pub perturbation: f64,
    /// Replace the CHOMP metric by the identity.
    #[serde(default)]
    pub identity_metric: bool,
}

fn default_penalty() -> f64 {
    DEFAULT_PENALTY
}

fn one() -> f64 {
    1.0
}

impl BaselinePriorSpec {
    pub fn chomp(weight: f64) -> Self {
        Self {
            order: 1,
            weight,
            penalty: DEFAULT_PENALTY,
            cost_scale: 1.0,
            perturbation: 0.0,
            identity_metric: false,
        }
    }

    pub fn gpmp(weight: f64) -> Self {
        Self {
            order: 2,
            ..Self::chomp(weight)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(1..=2).contains(&self.order) {
            problems.push(format!("baseline order must be 1 or 2 (got {})", self.order));
        }
        for (name, v) in [
            ("weight", self.weight),
            ("penalty", self.penalty),
            ("cost_scale", self.cost_scale),
            ("perturbation", self.perturbation),
        ] {
            if !(v >= 0.0) {
                problems.push(format!("baseline {name} must be >= 0 (got {v})"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// `(n − order) × n` finite-difference matrix.
fn difference_matrix(order: usize, n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n - order, n);
    for r in 0..n - order {
        if order == 1 {
            d[(r, r)] = -1.0;
            d[(r, r + 1)] = 1.0;
        } else {
            d[(r, r)] = 1.0;
            d[(r, r + 1)] = -2.0;
            d[(r, r + 2)] = 1.0;
        }
    }
    d
}

pub struct BaselineEval {
    pub objective: f64,
    pub gradient: DVector<f64>,
    pub task_cost: f64,
    pub constraints: ConstraintEval,
}

/// Penalized objective of the baselines.
#[derive(Debug, Clone)]
pub struct BaselineObjective {
    task: TaskModel,
    prior: BaselinePriorSpec,
    gram: DMatrix<f64>,
}

impl BaselineObjective {
    pub fn new(spec: ProblemSpec, prior: BaselinePriorSpec) -> Result<Self> {
        prior.validate()?;
        let task = TaskModel::clamped_positions(spec)?;
        let d = difference_matrix(prior.order, task.layout().nodes());
        Ok(Self {
            gram: d.transpose() * d,
            task,
            prior,
        })
    }

    pub fn task(&self) -> &TaskModel {
        &self.task
    }

    pub fn prior(&self) -> &BaselinePriorSpec {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.task.dim()
    }

    pub fn view(&self, xi: &DVector<f64>) -> Result<TrajectoryView> {
        self.task.view(xi)
    }

    pub fn evaluate(&self, xi: &DVector<f64>) -> Result<BaselineEval> {
        let view = self.task.view(xi)?;
        let (cost, cost_grad) = self.task.cost_view(&view);
        let constraints = self.task.constraints_view(&view)?;
        let mut grad = TrajectoryView::zeros(view.dofs(), view.nodes());
        grad.add_assign(&cost_grad, self.prior.cost_scale);
        let mut smooth = 0.0;
        for (q, g) in view.positions.iter().zip(grad.positions.iter_mut()) {
            let gq = &self.gram * q;
            smooth += 0.5 * self.prior.weight * q.dot(&gq);
            g.axpy(self.prior.weight, &gq, 1.0);
        }
        let mut gradient = self.task.layout().pullback(&grad);
        let rho = self.prior.penalty;
        if constraints.n_eq() > 0 && rho > 0.0 {
            gradient.gemv(2.0 * rho, &constraints.jac_h, &constraints.h, 1.0);
        }
        Ok(BaselineEval {
            objective: smooth + self.prior.cost_scale * cost + rho * constraints.h.norm_squared(),
            gradient,
            task_cost: cost,
            constraints,
        })
    }

    /// First-difference metric restricted to free nodes, block-diagonal over DOFs.
    pub fn smoothness_metric(&self) -> DMatrix<f64> {
        let layout = self.task.layout();
        let d1 = difference_matrix(1, layout.nodes());
        let a = d1.transpose() * d1;
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for k in 0..layout.dof_count() {
            let off = layout.block_offset(k);
            let free: Vec<usize> = layout.free_nodes(k).collect();
            for (i, &ti) in free.iter().enumerate() {
                for (j, &tj) in free.iter().enumerate() {
                    m[(off + i, off + j)] = a[(ti, tj)];
                }
            }
        }
        m
    }
}

/// Straight lines from start to goal plus a smooth Gaussian perturbation
/// `σ · N(0, A⁻¹ / max diag A⁻¹)`.
pub fn straight_line_init(objective: &BaselineObjective, n: usize, sigma: f64, seed: u64) -> Result<ParticleSet> {
    let task = objective.task();
    let layout = task.layout();
    let nodes = layout.nodes();
    let mut base = DVector::zeros(layout.dim());
    for (k, dof) in layout.dofs().iter().enumerate() {
        for t in layout.free_nodes(k) {
            let s = t as f64 / (nodes - 1) as f64;
            layout.add_position_partial(&mut base, k, t, dof.start + s * (dof.goal - dof.start));
        }
    }
    let metric = objective.smoothness_metric();
    let cov = metric
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("smoothness metric is singular".to_string()))?
        .inverse();
    let scale = cov.diagonal().max();
    let factor = Cholesky::new(cov / scale)
        .ok_or_else(|| Error::Numerical("perturbation covariance is singular".to_string()))?
        .l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let particles = (0..n)
        .map(|_| {
            let z = DVector::from_fn(base.len(), |_, _| StandardNormal.sample(&mut rng));
            &base + (&factor * z) * sigma
        })
        .collect();
    Ok(ParticleSet::from_vectors(particles, base.len()))
}

pub fn plan_chomp(objective: &BaselineObjective, config: &PlannerConfig) -> Result<PlanResult> {
    if config.kind != PlannerKind::Chomp {
        return Err(Error::Config(format!("plan_chomp called with {} config", config.kind)));
    }
    let precond = if objective.prior.identity_metric {
        None
    } else {
        Some(
            objective
                .smoothness_metric()
                .cholesky()
                .ok_or_else(|| Error::Numerical("smoothness metric is singular".to_string()))?,
        )
    };
    run(objective, config, precond.as_ref())
}

pub fn plan_gpmp(objective: &BaselineObjective, config: &PlannerConfig) -> Result<PlanResult> {
    if config.kind != PlannerKind::Gpmp {
        return Err(Error::Config(format!("plan_gpmp called with {} config", config.kind)));
    }
    run(objective, config, None)
}

fn run(
    objective: &BaselineObjective,
    config: &PlannerConfig,
    precond: Option<&Cholesky<f64, Dyn>>,
) -> Result<PlanResult> {
    config.validate()?;
    let clock = Instant::now();
    let init = straight_line_init(objective, config.particles, objective.prior.perturbation, config.seed)?;
    let d = init.dim();
    let mut xs = init.into_vec();
    let mut evals: Vec<BaselineEval> = xs.par_iter().map(|x| objective.evaluate(x)).collect::<Result<_>>()?;
    let eta = config.step_size;
    let mut trace: Vec<TraceRow> = Vec::with_capacity(config.iterations);
    for it in 1..=config.iterations {
        evals = xs
            .par_iter_mut()
            .zip(evals.par_iter())
            .map(|(x, e)| {
                let dir = match precond {
                    Some(c) => c.solve(&e.gradient),
                    None => e.gradient.clone(),
                };
                x.axpy(-eta, &dir, 1.0);
                objective.evaluate(x)
            })
            .collect::<Result<_>>()?;
        let objectives: Vec<f64> = evals.iter().map(|e| e.objective).collect();
        let costs: Vec<f64> = evals.iter().map(|e| e.task_cost).collect();
        let h_abs: Vec<(f64, f64)> = evals
            .iter()
            .map(|e| (e.constraints.mean_abs_h(), e.constraints.max_abs_h()))
            .collect();
        trace.push(trace_row(it, &objectives, &costs, &h_abs, None, None));
    }
    let objectives: Vec<f64> = evals.iter().map(|e| e.objective).collect();
    let violations: Vec<f64> = evals.iter().map(|e| e.constraints.max_abs_h()).collect();
    let best = select_best_by(&objectives, &violations, BEST_FEASIBILITY_TOL);
    Ok(PlanResult {
        planner: config.kind,
        particles: ParticleSet::from_vectors(xs, d),
        trace,
        task_costs: evals.iter().map(|e| e.task_cost).collect(),
        objectives,
        violations,
        best,
        wall_time: clock.elapsed().as_secs_f64(),
        kernel: None,
        aborted: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{CostWeights, RobotKind, Scene2D};

    fn free_space(weights: CostWeights) -> ProblemSpec {
        ProblemSpec {
            robot: RobotKind::PointMass,
            scene: Scene2D::default(),
            start: vec![0.0, 0.0],
            goal: vec![3.0, 1.0],
            horizon: 3.0,
            nodes: 8,
            weights,
            cost_mode: Default::default(),
            safety_margin: 0.3,
            joint_limits: None,
            constraints: None,
        }
    }

    #[test]
    fn chomp_recovers_straight_line() {
        let mut prior = BaselinePriorSpec::chomp(1.0);
        prior.perturbation = 0.5;
        let obj = BaselineObjective::new(
            free_space(CostWeights { obstacle: 0.0, length: 0.0, ..CostWeights::default() }),
            prior,
        )
        .unwrap();
        let line = straight_line_init(&obj, 1, 0.0, 0).unwrap().into_vec().remove(0);
        let cfg = PlannerConfig::new(PlannerKind::Chomp, 3, 200).with_step(0.5);
        let res = plan_chomp(&obj, &cfg).unwrap();
        for x in res.particles.iter() {
            assert!((x - &line).amax() < 1e-8);
        }
        assert_eq!(res.trace.len(), 200);
    }

    #[test]
    fn identity_metric_is_plain_gradient() {
        let mut prior = BaselinePriorSpec::chomp(1.0);
        prior.identity_metric = true;
        prior.perturbation = 0.3;
        let obj = BaselineObjective::new(free_space(CostWeights::default()), prior).unwrap();
        let mut chomp = PlannerConfig::new(PlannerKind::Chomp, 2, 1).with_step(1e-2);
        chomp.seed = 4;
        let a = plan_chomp(&obj, &chomp).unwrap();
        let init = straight_line_init(&obj, 2, 0.3, 4).unwrap();
        for (x0, x1) in init.iter().zip(a.particles.iter()) {
            let g = obj.evaluate(x0).unwrap().gradient;
            assert!((x0 - g * 1e-2 - x1).amax() < 1e-14);
        }
    }

    #[test]
    fn gpmp_without_costs_reaches_prior_mode() {
        let mut prior = BaselinePriorSpec::gpmp(1.0);
        prior.perturbation = 0.2;
        let obj = BaselineObjective::new(
            free_space(CostWeights { obstacle: 0.0, length: 0.0, ..CostWeights::default() }),
            prior,
        )
        .unwrap();
        let line = straight_line_init(&obj, 1, 0.0, 0).unwrap().into_vec().remove(0);
        let cfg = PlannerConfig::new(PlannerKind::Gpmp, 2, 20000).with_step(0.1);
        let res = plan_gpmp(&obj, &cfg).unwrap();
        for x in res.particles.iter() {
            assert!((x - &line).amax() < 1e-6);
        }
    }
}
