//! Unnormalized posteriors the planners sample from.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layout::{TrajectoryView, VelocityMode};
use super::task::{ProblemSpec, TaskModel};
use crate::constraints::ConstraintEval;
use crate::error::{Error, Result};
use crate::gp_prior::{
    build_joint_prior, condition_prior, BoundaryCondition, Gaussian, HsgpSpec, KernelFamily, Observation,
    TimeGrid,
};
use crate::stein::{KernelBlock, MetricKind, ParticleSet, TrajectoryKernelSpec};

/// Log density, score, and the part of the score not covered by the exact
/// Gaussian Hessian.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub log_p: f64,
    pub score: DVector<f64>,
    /// `∇ log l`, the gradient of the non-Gaussian factor.
    pub likelihood_score: DVector<f64>,
    /// Task cost `L` without the prior term.
    pub task_cost: f64,
}

pub trait TargetProblem: Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, xi: &DVector<f64>) -> Result<Evaluation>;

    fn constraints(&self, xi: &DVector<f64>) -> Result<ConstraintEval>;

    /// Exact Hessian of the Gaussian factor of `−log p`.
    fn gaussian_hessian(&self) -> &DMatrix<f64>;

    /// `(offset, metric)` per kernel block.
    fn kernel_metrics(&self, kind: MetricKind) -> Vec<(usize, DMatrix<f64>)>;

    fn sample_initial(&self, n: usize, seed: u64) -> ParticleSet;

    /// Kernel with bandwidths calibrated so the median pairwise block term
    /// over `particles` equals `median`.
    fn kernel_spec(&self, kind: MetricKind, particles: &ParticleSet, median: f64) -> Result<TrajectoryKernelSpec> {
        let blocks = self
            .kernel_metrics(kind)
            .into_iter()
            .map(|(offset, metric)| KernelBlock {
                offset,
                metric,
                bandwidth: 1.0,
            })
            .collect();
        let mut spec = TrajectoryKernelSpec::new(blocks, true)?;
        spec.calibrate_bandwidths_to(particles, median);
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub variance: f64,
    pub noise: f64,
    pub features: usize,
    /// Defaults to 1.25 × horizon.
    pub radius: Option<f64>,
    pub start_var: f64,
    /// Observation noise used to pull an unclamped goal towards its target.
    pub goal_noise: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern32,
            lengthscale: 1.0,
            variance: 1.0,
            noise: 0.1,
            features: 64,
            radius: None,
            start_var: 1e-4,
            goal_noise: 1e-4,
        }
    }
}

impl PriorConfig {
    pub fn hsgp(&self, grid: &TimeGrid) -> HsgpSpec {
        HsgpSpec::new(self.family, self.lengthscale, self.variance, self.noise)
            .with_features(self.features)
            .with_radius(self.radius.unwrap_or_else(|| grid.default_radius()))
    }
}

#[derive(Debug, Clone)]
struct DofPrior {
    offset: usize,
    mean: DVector<f64>,
    gaussian: Gaussian,
    precision: DMatrix<f64>,
}

/// GP-regularized trajectory posterior
/// `log p = −½ w_prior ‖ξ − μ‖²_𝒦 − L(ξ)` over the joint position/velocity layout.
#[derive(Debug, Clone)]
pub struct TrajectoryProblem {
    task: TaskModel,
    prior_config: PriorConfig,
    dofs: Vec<DofPrior>,
    hessian: DMatrix<f64>,
}

impl TrajectoryProblem {
    pub fn new(spec: ProblemSpec, prior: PriorConfig) -> Result<Self> {
        let task = TaskModel::new(spec, VelocityMode::Decision)?;
        let spec = task.spec();
        let layout = task.layout();
        let grid = TimeGrid::uniform(spec.horizon, spec.nodes)?;
        let hsgp = prior.hsgp(&grid);
        hsgp.validate()?;
        let n = spec.nodes;
        let d = layout.dim();
        let mut hessian = DMatrix::zeros(d, d);
        let mut dofs = Vec::with_capacity(layout.dof_count());
        for k in 0..layout.dof_count() {
            let bc = BoundaryCondition::new(spec.start[k], prior.start_var, spec.goal[k]);
            let joint = build_joint_prior(&hsgp, &grid, &bc)?;
            let goal_noise = if spec.clamps_goal() { 0.0 } else { prior.goal_noise };
            let conditioned = condition_prior(
                &joint,
                &[
                    Observation::position(0, spec.start[k], 0.0),
                    Observation::position(n - 1, spec.goal[k], goal_noise),
                ],
            )?;
            let gaussian = conditioned.gaussian().marginal(&layout.joint_free_indices(k))?;
            let precision = gaussian.precision();
            let offset = layout.block_offset(k);
            let len = layout.block_len(k);
            hessian
                .view_mut((offset, offset), (len, len))
                .copy_from(&(&precision * spec.weights.prior));
            dofs.push(DofPrior {
                offset,
                mean: gaussian.mean().clone(),
                gaussian,
                precision,
            });
        }
        Ok(Self {
            task,
            prior_config: prior,
            dofs,
            hessian,
        })
    }

    pub fn task(&self) -> &TaskModel {
        &self.task
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.task.spec()
    }

    pub fn prior_config(&self) -> &PriorConfig {
        &self.prior_config
    }

    pub fn view(&self, xi: &DVector<f64>) -> Result<TrajectoryView> {
        self.task.view(xi)
    }

    /// Decision vector of a full trajectory view; inverse of [`Self::view`]
    /// on the free nodes.
    pub fn decision(&self, view: &TrajectoryView) -> DVector<f64> {
        self.task.layout().flatten(view)
    }

    /// Prior mean of the decision vector.
    pub fn prior_mean(&self) -> DVector<f64> {
        let mut mu = DVector::zeros(self.dim());
        for p in &self.dofs {
            mu.rows_mut(p.offset, p.mean.len()).copy_from(&p.mean);
        }
        mu
    }

    /// Block-diagonal prior covariance of the decision vector (unweighted).
    pub fn prior_covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut c = DMatrix::zeros(d, d);
        for p in &self.dofs {
            let len = p.mean.len();
            c.view_mut((p.offset, p.offset), (len, len)).copy_from(p.gaussian.cov());
        }
        c
    }

    /// `½ w_prior (ξ−μ)ᵀ 𝒦⁻¹ (ξ−μ)` and its gradient.
    pub fn prior_term(&self, xi: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if xi.len() != self.dim() {
            return Err(Error::Dimension {
                context: "decision vector",
                expected: self.dim(),
                got: xi.len(),
            });
        }
        let w = self.spec().weights.prior;
        let mut value = 0.0;
        let mut grad = DVector::zeros(self.dim());
        for p in &self.dofs {
            let len = p.mean.len();
            let r = xi.rows(p.offset, len) - &p.mean;
            let pr = &p.precision * &r;
            value += 0.5 * w * r.dot(&pr);
            grad.rows_mut(p.offset, len).copy_from(&(pr * w));
        }
        Ok((value, grad))
    }

    /// `log p(ξ) l(ξ)` up to a constant and its gradient.
    pub fn log_likelihood(&self, xi: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let e = self.evaluate(xi)?;
        Ok((e.log_p, e.score))
    }
}

impl TargetProblem for TrajectoryProblem {
    fn dim(&self) -> usize {
        self.task.dim()
    }

    fn evaluate(&self, xi: &DVector<f64>) -> Result<Evaluation> {
        let (prior, prior_grad) = self.prior_term(xi)?;
        let (cost, cost_grad) = self.task.cost(xi)?;
        Ok(Evaluation {
            log_p: -prior - cost,
            score: -(prior_grad + &cost_grad),
            likelihood_score: -cost_grad,
            task_cost: cost,
        })
    }

    fn constraints(&self, xi: &DVector<f64>) -> Result<ConstraintEval> {
        self.task.constraints(xi)
    }

    fn gaussian_hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    fn kernel_metrics(&self, kind: MetricKind) -> Vec<(usize, DMatrix<f64>)> {
        self.dofs
            .iter()
            .map(|p| {
                let len = p.mean.len();
                let m = match kind {
                    MetricKind::Covariance => p.gaussian.cov().clone(),
                    MetricKind::Precision => p.precision.clone(),
                    MetricKind::Identity => DMatrix::identity(len, len),
                };
                (p.offset, m)
            })
            .collect()
    }

    fn sample_initial(&self, n: usize, seed: u64) -> ParticleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![DVector::zeros(self.dim()); n];
        for p in &self.dofs {
            for (dst, s) in out.iter_mut().zip(p.gaussian.sample(n, &mut rng)) {
                dst.rows_mut(p.offset, s.len()).copy_from(&s);
            }
        }
        ParticleSet::from_vectors(out, self.dim())
    }
}

/// Correlated 2D Gaussian restricted to an axis-aligned ellipse
/// `((x−c_x)/a)² + ((y−c_y)/b)² = 1`.
#[derive(Debug, Clone)]
pub struct ToyGaussian {
    mean: DVector<f64>,
    gaussian: Gaussian,
    precision: DMatrix<f64>,
    center: [f64; 2],
    radii: [f64; 2],
    /// Isotropic initial distribution `(mean, std)`; `None` samples the target.
    init: Option<([f64; 2], f64)>,
}

impl ToyGaussian {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2], center: [f64; 2], radii: [f64; 2]) -> Result<Self> {
        if !(radii[0] > 0.0 && radii[1] > 0.0) {
            return Err(Error::Config("ellipse radii must be > 0".to_string()));
        }
        let mean = DVector::from_vec(mean.to_vec());
        let cov = DMatrix::from_row_slice(2, 2, &[cov[0][0], cov[0][1], cov[1][0], cov[1][1]]);
        let gaussian = Gaussian::new(mean.clone(), cov)?;
        let precision = gaussian.precision();
        Ok(Self {
            mean,
            gaussian,
            precision,
            center,
            radii,
            init: None,
        })
    }

    /// Draws initial particles from `N(mean, std² I)` instead of the target.
    pub fn with_initial(mut self, mean: [f64; 2], std: f64) -> Result<Self> {
        if !(std >= 0.0) || !std.is_finite() {
            return Err(Error::Config(format!("initial std must be >= 0 (got {std})")));
        }
        self.init = Some((mean, std));
        Ok(self)
    }

    pub fn gaussian(&self) -> &Gaussian {
        &self.gaussian
    }
}

impl TargetProblem for ToyGaussian {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, xi: &DVector<f64>) -> Result<Evaluation> {
        if xi.len() != 2 {
            return Err(Error::Dimension {
                context: "toy point",
                expected: 2,
                got: xi.len(),
            });
        }
        let r = xi - &self.mean;
        let pr = &self.precision * &r;
        Ok(Evaluation {
            log_p: -0.5 * r.dot(&pr),
            score: -pr,
            likelihood_score: DVector::zeros(2),
            task_cost: 0.0,
        })
    }

    fn constraints(&self, xi: &DVector<f64>) -> Result<ConstraintEval> {
        let u = (xi[0] - self.center[0]) / self.radii[0];
        let w = (xi[1] - self.center[1]) / self.radii[1];
        let h = DVector::from_element(1, u * u + w * w - 1.0);
        let jac = DMatrix::from_column_slice(2, 1, &[2.0 * u / self.radii[0], 2.0 * w / self.radii[1]]);
        Ok(ConstraintEval::equality(h, jac))
    }

    fn gaussian_hessian(&self) -> &DMatrix<f64> {
        &self.precision
    }

    fn kernel_metrics(&self, kind: MetricKind) -> Vec<(usize, DMatrix<f64>)> {
        let m = match kind {
            MetricKind::Covariance => self.gaussian.cov().clone(),
            MetricKind::Precision => self.precision.clone(),
            MetricKind::Identity => DMatrix::identity(2, 2),
        };
        vec![(0, m)]
    }

    fn sample_initial(&self, n: usize, seed: u64) -> ParticleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = match self.init {
            Some((m, std)) => (0..n)
                .map(|_| {
                    let z: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
                    DVector::from_vec(vec![m[0] + std * z[0], m[1] + std * z[1]])
                })
                .collect(),
            None => self.gaussian.sample(n, &mut rng),
        };
        ParticleSet::from_vectors(samples, 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::costs::CostMode;
    use crate::problems::scene::{Circle, Scene2D};
    use crate::problems::task::{CostWeights, RobotKind};

    fn pointmass(weights: CostWeights) -> TrajectoryProblem {
        let spec = ProblemSpec {
            robot: RobotKind::PointMass,
            scene: Scene2D::new(vec![Circle { center: [2.0, 2.5], radius: 0.7 }], vec![]),
            start: vec![0.0, 0.0],
            goal: vec![5.0, 5.0],
            horizon: 5.0,
            nodes: 8,
            weights,
            cost_mode: CostMode::Exp,
            safety_margin: 0.3,
            joint_limits: None,
            constraints: None,
        };
        TrajectoryProblem::new(spec, PriorConfig { lengthscale: 1.5, ..PriorConfig::default() }).unwrap()
    }

    #[test]
    fn prior_only_mode_is_stationary() {
        let p = pointmass(CostWeights { obstacle: 0.0, length: 0.0, ..CostWeights::default() });
        let (v, g) = p.log_likelihood(&p.prior_mean()).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.amax() < 1e-12);
    }

    #[test]
    fn obstacle_weight_is_linear() {
        let base = CostWeights { obstacle: 1.0, ..CostWeights::default() };
        let p1 = pointmass(base);
        let p2 = pointmass(CostWeights { obstacle: 2.0, ..base });
        let p0 = pointmass(CostWeights { obstacle: 0.0, ..base });
        let xi = p1.sample_initial(1, 3).into_vec().remove(0);
        let (v0, _) = p0.log_likelihood(&xi).unwrap();
        let (v1, _) = p1.log_likelihood(&xi).unwrap();
        let (v2, _) = p2.log_likelihood(&xi).unwrap();
        assert_close!(v2 - v0, 2.0 * (v1 - v0), 1e-12 * v0.abs().max(1.0));
    }

    #[test]
    fn samples_respect_start() {
        let p = pointmass(CostWeights::default());
        let set = p.sample_initial(4, 1);
        assert_eq!(set.len(), 4);
        // the start node is clamped so every sample's first free node stays near it
        for xi in set.iter() {
            let v = p.view(xi).unwrap();
            assert_eq!(v.positions[0][0], 0.0);
        }
    }

    #[test]
    fn toy_constraint() {
        let toy = ToyGaussian::new([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], [0.0, 0.0], [2.0, 1.0]).unwrap();
        let c = toy.constraints(&DVector::from_vec(vec![2.0, 0.0])).unwrap();
        assert_close!(c.h[0], 0.0, 1e-15);
        assert_close!(c.jac_h[(0, 0)], 1.0, 1e-15);
    }
}
