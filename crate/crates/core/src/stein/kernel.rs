//! Generalized RBF kernel over flattened trajectories.
//!
//! Each degree of freedom owns a contiguous block of the decision vector and a
//! metric matrix `M`; the kernel is the (optionally averaged) sum of
//! `exp(-Δᵀ M Δ / σ²)` over blocks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ParticleSet;
use crate::error::{Error, Result};

/// Which matrix induces the distance inside each block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// The prior covariance block itself.
    #[default]
    Covariance,
    /// The inverse of the prior covariance block.
    Precision,
    /// Plain Euclidean distance.
    Identity,
}

#[derive(Debug, Clone)]
pub struct KernelBlock {
    pub offset: usize,
    pub metric: DMatrix<f64>,
    pub bandwidth: f64,
}

impl KernelBlock {
    pub fn len(&self) -> usize {
        self.metric.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.metric.nrows() == 0
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryKernelSpec {
    blocks: Vec<KernelBlock>,
    normalize: bool,
    dim: usize,
}

impl TrajectoryKernelSpec {
    pub fn new(blocks: Vec<KernelBlock>, normalize: bool) -> Result<Self> {
        let mut dim = 0;
        let mut problems = Vec::new();
        for (k, b) in blocks.iter().enumerate() {
            if b.offset != dim {
                problems.push(format!("block {k} starts at {} instead of {dim}", b.offset));
            }
            if b.metric.nrows() != b.metric.ncols() {
                problems.push(format!("block {k} metric is not square"));
            }
            if !(b.bandwidth > 0.0) {
                problems.push(format!("block {k} bandwidth must be > 0 (got {})", b.bandwidth));
            }
            dim += b.len();
        }
        if blocks.is_empty() {
            problems.push("kernel needs at least one block".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            blocks,
            normalize,
            dim,
        })
    }

    /// Single block with identity metric over `dim` coordinates.
    pub fn isotropic(dim: usize, bandwidth: f64) -> Result<Self> {
        Self::new(
            vec![KernelBlock {
                offset: 0,
                metric: DMatrix::identity(dim, dim),
                bandwidth,
            }],
            true,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[KernelBlock] {
        &self.blocks
    }

    pub fn is_normalized(&self) -> bool {
        self.normalize
    }

    fn scale(&self) -> f64 {
        if self.normalize {
            1.0 / self.blocks.len() as f64
        } else {
            1.0
        }
    }

    /// Replaces every block bandwidth so that the median pairwise block term
    /// over `particles` equals 1/2. Degenerate blocks (all particles equal)
    /// keep their bandwidth.
    pub fn calibrate_bandwidths(&mut self, particles: &ParticleSet) {
        self.calibrate_bandwidths_to(particles, 0.5);
    }

    /// As [`calibrate_bandwidths`](Self::calibrate_bandwidths) with the
    /// median block term set to `target` in (0, 1).
    pub fn calibrate_bandwidths_to(&mut self, particles: &ParticleSet, target: f64) {
        let n = particles.len();
        if n < 2 || !(target > 0.0 && target < 1.0) {
            return;
        }
        for b in &mut self.blocks {
            let mx: Vec<DVector<f64>> = particles
                .iter()
                .map(|p| &b.metric * p.rows(b.offset, b.len()))
                .collect();
            let mut q = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    let delta = particles.get(i).rows(b.offset, b.len()) - particles.get(j).rows(b.offset, b.len());
                    let m_delta = &mx[i] - &mx[j];
                    q.push(delta.dot(&m_delta).max(0.0));
                }
            }
            q.sort_by(f64::total_cmp);
            let median = if q.len() % 2 == 1 {
                q[q.len() / 2]
            } else {
                0.5 * (q[q.len() / 2 - 1] + q[q.len() / 2])
            };
            if median > 0.0 {
                b.bandwidth = (median / -target.ln()).sqrt();
            }
        }
    }

    fn check(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension {
                context: "trajectory kernel input",
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// `k(ξ_i, ξ_j)` and its gradient with respect to `ξ_j`.
pub fn trajectory_kernel(
    xi_i: &DVector<f64>,
    xi_j: &DVector<f64>,
    spec: &TrajectoryKernelSpec,
) -> Result<(f64, DVector<f64>)> {
    spec.check(xi_i)?;
    spec.check(xi_j)?;
    let scale = spec.scale();
    let mut value = 0.0;
    let mut grad = DVector::zeros(spec.dim);
    for b in &spec.blocks {
        let delta = xi_i.rows(b.offset, b.len()) - xi_j.rows(b.offset, b.len());
        let m_delta = &b.metric * &delta;
        let s2 = b.bandwidth * b.bandwidth;
        let e = (-delta.dot(&m_delta) / s2).exp() * scale;
        value += e;
        grad.rows_mut(b.offset, b.len())
            .axpy(2.0 * e / s2, &m_delta, 0.0);
    }
    Ok((value, grad))
}

/// Pairwise kernel values and first-argument gradients for a particle set.
///
/// `value(i, j) = k(x_i, x_j)` and `grad(i, j) = ∇_{x_i} k(x_i, x_j)`.
#[derive(Debug, Clone)]
pub struct KernelGram {
    n: usize,
    values: DMatrix<f64>,
    grads: Vec<DVector<f64>>,
}

impl KernelGram {
    pub fn compute(particles: &[DVector<f64>], spec: &TrajectoryKernelSpec) -> Self {
        let n = particles.len();
        let scale = spec.scale();
        let mx: Vec<Vec<DVector<f64>>> = particles
            .iter()
            .map(|p| {
                spec.blocks
                    .iter()
                    .map(|b| &b.metric * p.rows(b.offset, b.len()))
                    .collect()
            })
            .collect();
        let mut values = DMatrix::zeros(n, n);
        let mut grads = vec![DVector::zeros(spec.dim); n * n];
        for i in 0..n {
            values[(i, i)] = spec.blocks.len() as f64 * scale;
            for j in (i + 1)..n {
                let mut v = 0.0;
                let mut g = DVector::zeros(spec.dim);
                for (bi, b) in spec.blocks.iter().enumerate() {
                    let delta = particles[i].rows(b.offset, b.len()) - particles[j].rows(b.offset, b.len());
                    let m_delta = &mx[i][bi] - &mx[j][bi];
                    let s2 = b.bandwidth * b.bandwidth;
                    let e = (-delta.dot(&m_delta) / s2).exp() * scale;
                    v += e;
                    g.rows_mut(b.offset, b.len()).axpy(-2.0 * e / s2, &m_delta, 0.0);
                }
                values[(i, j)] = v;
                values[(j, i)] = v;
                grads[j * n + i] = -&g;
                grads[i * n + j] = g;
            }
        }
        Self { n, values, grads }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// `∇_{x_i} k(x_i, x_j)`.
    pub fn grad(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.grads[i * self.n + j]
    }

    /// Mean over particles of `ln((1/n) Σ_j k(x_i, x_j))`, the log of a
    /// kernel density estimate evaluated at the particles.
    pub fn mean_log_density(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let n = self.n as f64;
        (0..self.n)
            .map(|i| (self.values.row(i).sum() / n).ln())
            .sum::<f64>()
            / n
    }
}
