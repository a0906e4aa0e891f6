//! Joint Gaussian prior over a single degree of freedom's position and
//! velocity trajectory, obtained by integrating the reduced-rank velocity GP.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::hsgp::{basis_unchecked, integrated_unchecked, HsgpSpec, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, subvector, submatrix, symmetrized};
use crate::stein::ParticleSet;

/// Start distribution and goal used by the linear mean function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub x0_mean: f64,
    pub x0_var: f64,
    pub goal: f64,
}

impl BoundaryCondition {
    pub fn new(x0_mean: f64, x0_var: f64, goal: f64) -> Self {
        Self {
            x0_mean,
            x0_var,
            goal,
        }
    }

    /// Zero-mean velocity prior anchored at `x0_mean`.
    pub fn zero_velocity(x0_mean: f64, x0_var: f64) -> Self {
        Self::new(x0_mean, x0_var, x0_mean)
    }
}

/// Covariance blocks of the stacked `[x; v]` trajectory.
#[derive(Debug, Clone)]
pub struct CovarianceBlocks {
    pub xx: DMatrix<f64>,
    pub xv: DMatrix<f64>,
    pub vv: DMatrix<f64>,
}

impl CovarianceBlocks {
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.xx.nrows();
        let mut full = DMatrix::zeros(2 * n, 2 * n);
        full.view_mut((0, 0), (n, n)).copy_from(&self.xx);
        full.view_mut((0, n), (n, n)).copy_from(&self.xv);
        full.view_mut((n, 0), (n, n)).copy_from(&self.xv.transpose());
        full.view_mut((n, n), (n, n)).copy_from(&self.vv);
        full
    }
}

/// Feature matrices at the grid: integrated features (position) and plain
/// features (velocity), both `n_t × m`.
fn feature_matrices(spec: &HsgpSpec, grid: &TimeGrid) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let l = spec.radius;
    let start = grid.to_domain(0.0);
    for &t in [0.0, grid.horizon()].iter() {
        let u = grid.to_domain(t);
        if u.abs() >= l {
            return Err(Error::Domain {
                what: "mapped grid time",
                value: u,
                radius: l,
            });
        }
    }
    let n = grid.len();
    let m = spec.features;
    let mut ix = DMatrix::zeros(n, m);
    let mut phi = DMatrix::zeros(n, m);
    for (i, &t) in grid.nodes().iter().enumerate() {
        let u = grid.to_domain(t);
        for j in 1..=m {
            ix[(i, j - 1)] = integrated_unchecked(j, u, l) - integrated_unchecked(j, start, l);
            phi[(i, j - 1)] = basis_unchecked(j, u, l);
        }
    }
    Ok((ix, phi))
}

/// Position/velocity covariance blocks on the grid.
///
/// `Cov(x,x) = var(x0) + Σ_j S_j I_j(t) I_j(s) + min(t,s) σ_n²`,
/// `Cov(x,v) = Σ_j S_j I_j(t) φ_j(s)`, `Cov(v,v) = k(t,s) + σ_n² 1[t=s]`,
/// where `I_j` integrates `φ_j` from the start of the horizon.
pub fn joint_covariance(
    spec: &HsgpSpec,
    grid: &TimeGrid,
    bc: &BoundaryCondition,
) -> Result<CovarianceBlocks> {
    spec.validate()?;
    if !(bc.x0_var >= 0.0) {
        return Err(Error::Config(format!("x0_var must be >= 0 (got {})", bc.x0_var)));
    }
    let (ix, phi) = feature_matrices(spec, grid)?;
    let weights = DVector::from_vec(spec.spectral_weights());
    let mut ix_w = ix.clone();
    let mut phi_w = phi.clone();
    for (j, w) in weights.iter().enumerate() {
        ix_w.column_mut(j).scale_mut(*w);
        phi_w.column_mut(j).scale_mut(*w);
    }
    let n = grid.len();
    let nodes = grid.nodes();
    let mut xx = &ix_w * ix.transpose();
    let xv = &ix_w * phi.transpose();
    let mut vv = &phi_w * phi.transpose();
    for i in 0..n {
        for j in 0..n {
            xx[(i, j)] += bc.x0_var + nodes[i].min(nodes[j]) * spec.noise;
        }
        vv[(i, i)] += spec.noise;
    }
    Ok(CovarianceBlocks {
        xx: symmetrized(&xx),
        xv,
        vv: symmetrized(&vv),
    })
}

/// Gaussian with a cached Cholesky factor of its covariance.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if mean.len() != cov.nrows() || cov.nrows() != cov.ncols() {
            return Err(Error::Dimension {
                context: "gaussian covariance",
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        let cov = symmetrized(&cov);
        let (chol, jitter) = cholesky_with_jitter(&cov)?;
        Ok(Self {
            mean,
            cov,
            chol,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower-triangular factor `Λ` with `Λ Λᵀ = cov + jitter I`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Inverse covariance (dense). Used for kernel metrics and Hessians.
    pub fn precision(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `(½ rᵀ Σ⁻¹ r, Σ⁻¹ r)` with `r = ξ − μ`.
    pub fn quadratic_form(&self, xi: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if xi.len() != self.dim() {
            return Err(Error::Dimension {
                context: "prior quadratic form",
                expected: self.dim(),
                got: xi.len(),
            });
        }
        let r = xi - &self.mean;
        let g = self.chol.solve(&r);
        Ok((0.5 * r.dot(&g), g))
    }

    /// Marginal over a subset of coordinates.
    pub fn marginal(&self, idx: &[usize]) -> Result<Gaussian> {
        Gaussian::new(subvector(&self.mean, idx), submatrix(&self.cov, idx, idx))
    }

    /// Gaussian conditioning on linear point observations `y_k = ξ[idx_k] + ε_k`.
    pub fn condition(&self, idx: &[usize], values: &[f64], noise: &[f64]) -> Result<Gaussian> {
        if idx.is_empty() {
            return Ok(self.clone());
        }
        let k_oo = submatrix(&self.cov, idx, idx);
        let mut gram = k_oo;
        for (i, nv) in noise.iter().enumerate() {
            gram[(i, i)] += nv;
        }
        let all: Vec<usize> = (0..self.dim()).collect();
        let k_ao = submatrix(&self.cov, &all, idx);
        let gram_chol = Cholesky::new(symmetrized(&gram)).ok_or_else(|| {
            Error::Numerical("observation Gram matrix is singular".to_string())
        })?;
        let resid = DVector::from_fn(idx.len(), |i, _| values[i] - self.mean[idx[i]]);
        let mean = &self.mean + &k_ao * gram_chol.solve(&resid);
        let gain_t = gram_chol.solve(&k_ao.transpose());
        let cov = &self.cov - &k_ao * gain_t;
        Gaussian::new(mean, cov)
    }

    /// `n` draws `μ + Λ z` from a seeded generator.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let l = self.chol.l();
        (0..n)
            .map(|_| {
                let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
                &self.mean + &l * z
            })
            .collect()
    }
}

/// Joint prior of `[x(t_0..t_n); v(t_0..t_n)]` for one degree of freedom.
#[derive(Debug, Clone)]
pub struct JointGpPrior {
    grid: TimeGrid,
    gaussian: Gaussian,
}

/// Which half of the stacked trajectory an observation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Position,
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub kind: ObservationKind,
    pub node: usize,
    pub value: f64,
    pub noise_var: f64,
}

impl Observation {
    pub fn position(node: usize, value: f64, noise_var: f64) -> Self {
        Self {
            kind: ObservationKind::Position,
            node,
            value,
            noise_var,
        }
    }

    pub fn velocity(node: usize, value: f64, noise_var: f64) -> Self {
        Self {
            kind: ObservationKind::Velocity,
            node,
            value,
            noise_var,
        }
    }
}

/// Builds the joint prior with the linear mean `x0 + (x_T − x0) t / T` and
/// constant velocity mean `(x_T − x0) / T`.
pub fn build_joint_prior(
    spec: &HsgpSpec,
    grid: &TimeGrid,
    bc: &BoundaryCondition,
) -> Result<JointGpPrior> {
    let blocks = joint_covariance(spec, grid, bc)?;
    let n = grid.len();
    let slope = (bc.goal - bc.x0_mean) / grid.horizon();
    let mean = DVector::from_fn(2 * n, |i, _| {
        if i < n {
            bc.x0_mean + slope * grid.nodes()[i]
        } else {
            slope
        }
    });
    let gaussian = Gaussian::new(mean, blocks.assemble())?;
    Ok(JointGpPrior {
        grid: grid.clone(),
        gaussian,
    })
}

impl JointGpPrior {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn gaussian(&self) -> &Gaussian {
        &self.gaussian
    }

    pub fn node_count(&self) -> usize {
        self.grid.len()
    }

    pub fn dim(&self) -> usize {
        self.gaussian.dim()
    }

    pub fn mean(&self) -> &DVector<f64> {
        self.gaussian.mean()
    }

    pub fn position_mean(&self) -> DVector<f64> {
        self.mean().rows(0, self.node_count()).into_owned()
    }

    pub fn velocity_mean(&self) -> DVector<f64> {
        let n = self.node_count();
        self.mean().rows(n, n).into_owned()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        self.gaussian.cov()
    }

    pub fn blocks(&self) -> CovarianceBlocks {
        let n = self.node_count();
        let c = self.covariance();
        CovarianceBlocks {
            xx: c.view((0, 0), (n, n)).into_owned(),
            xv: c.view((0, n), (n, n)).into_owned(),
            vv: c.view((n, n), (n, n)).into_owned(),
        }
    }

    /// Marginal standard deviations of positions and velocities.
    pub fn marginal_std(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.node_count();
        let c = self.covariance();
        let pos = (0..n).map(|i| c[(i, i)].max(0.0).sqrt()).collect();
        let vel = (0..n).map(|i| c[(n + i, n + i)].max(0.0).sqrt()).collect();
        (pos, vel)
    }

    /// Index of an observation in the stacked vector.
    pub fn stacked_index(&self, kind: ObservationKind, node: usize) -> usize {
        match kind {
            ObservationKind::Position => node,
            ObservationKind::Velocity => self.node_count() + node,
        }
    }

    pub fn quadratic_form(&self, xi: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.gaussian.quadratic_form(xi)
    }
}

/// `n` i.i.d. draws from the prior; deterministic in `seed`.
pub fn sample_prior(prior: &JointGpPrior, n: usize, seed: u64) -> ParticleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ParticleSet::from_vectors(prior.gaussian.sample(n, &mut rng), prior.dim())
}

/// Gaussian conditioning of the joint prior on position/velocity observations.
pub fn condition_prior(prior: &JointGpPrior, observations: &[Observation]) -> Result<JointGpPrior> {
    let n = prior.node_count();
    let mut idx = Vec::with_capacity(observations.len());
    let mut values = Vec::with_capacity(observations.len());
    let mut noise = Vec::with_capacity(observations.len());
    for obs in observations {
        if obs.node >= n {
            return Err(Error::Config(format!(
                "observation node {} outside grid of {} nodes",
                obs.node, n
            )));
        }
        if !(obs.noise_var >= 0.0) {
            return Err(Error::Config(format!(
                "observation noise must be >= 0 (got {})",
                obs.noise_var
            )));
        }
        idx.push(prior.stacked_index(obs.kind, obs.node));
        values.push(obs.value);
        noise.push(obs.noise_var);
    }
    Ok(JointGpPrior {
        grid: prior.grid.clone(),
        gaussian: prior.gaussian.condition(&idx, &values, &noise)?,
    })
}

/// `(½ (ξ−μ)ᵀ 𝒦⁻¹ (ξ−μ), 𝒦⁻¹ (ξ−μ))`.
pub fn prior_quadratic_form(prior: &JointGpPrior, xi: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    prior.quadratic_form(xi)
}
