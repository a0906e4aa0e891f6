use nalgebra::DVector;

use super::kernel::TrajectoryKernelSpec;
use crate::error::{Error, Result};

/// Squared kernelized Stein discrepancy (V-statistic) of a particle set.
///
/// Uses the Stein kernel
/// `u(x, x') = s(x)ᵀs(x') k + s(x)ᵀ∇_{x'}k + s(x')ᵀ∇_x k + tr ∇_x∇_{x'} k`.
pub fn ksd(particles: &[DVector<f64>], scores: &[DVector<f64>], spec: &TrajectoryKernelSpec) -> Result<f64> {
    let n = particles.len();
    if n < 2 {
        return Err(Error::Config("KSD needs at least two particles".to_string()));
    }
    if scores.len() != n {
        return Err(Error::Dimension {
            context: "ksd scores",
            expected: n,
            got: scores.len(),
        });
    }
    let scale = if spec.is_normalized() {
        1.0 / spec.blocks().len() as f64
    } else {
        1.0
    };
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (xi, xj) = (&particles[i], &particles[j]);
            let (si, sj) = (&scores[i], &scores[j]);
            let mut k_total = 0.0;
            let mut u = 0.0;
            for b in spec.blocks() {
                let (o, l) = (b.offset, b.len());
                let delta = xi.rows(o, l) - xj.rows(o, l);
                let m_delta = &b.metric * &delta;
                let s2 = b.bandwidth * b.bandwidth;
                let kb = (-delta.dot(&m_delta) / s2).exp() * scale;
                k_total += kb;
                // ∇_x k_b = −(2/σ²) MΔ k_b, ∇_{x'} k_b = +(2/σ²) MΔ k_b
                let c = 2.0 / s2;
                let trace = c * b.metric.trace() - c * c * m_delta.norm_squared();
                u += kb * (c * si.rows(o, l).dot(&m_delta) - c * sj.rows(o, l).dot(&m_delta) + trace);
            }
            u += k_total * si.dot(sj);
            total += u;
        }
    }
    Ok((total / (n * n) as f64).max(0.0))
}
