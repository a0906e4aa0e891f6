//! Reduced-rank (Hilbert-space) approximation of a stationary velocity kernel
//! on `[-L, L]` with zero-value boundary conditions.
//!
//! The kernel is written as `k(t, t') = Σ_j S(√λ_j) φ_j(t) φ_j(t')` where the
//! `φ_j` are Laplacian eigenfunctions of the interval, `λ_j` their
//! eigenvalues and `S` the spectral density of the stationary kernel. Since the
//! time dependence is separated, integrals of the kernel over time reduce to
//! integrals of the individual basis functions, which are available in closed
//! form.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Matern32,
    SquaredExponential,
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matern32" | "matern_32" | "matern-3/2" => Ok(Self::Matern32),
            "squared_exponential" | "se" | "rbf" => Ok(Self::SquaredExponential),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Matern32 => write!(f, "matern32"),
            Self::SquaredExponential => write!(f, "squared_exponential"),
        }
    }
}

/// Hyper-parameters of the reduced-rank velocity prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsgpSpec {
    pub family: KernelFamily,
    /// Lengthscale in time units.
    pub lengthscale: f64,
    /// Kernel variance σ².
    pub variance: f64,
    /// White velocity noise σ_n² (enters position covariance as a Brownian term).
    pub noise: f64,
    /// Number of basis functions m.
    pub features: usize,
    /// Half-width L of the approximation domain, in time units.
    pub radius: f64,
}

impl HsgpSpec {
    pub fn new(family: KernelFamily, lengthscale: f64, variance: f64, noise: f64) -> Self {
        Self {
            family,
            lengthscale,
            variance,
            noise,
            features: 64,
            radius: 1.0,
        }
    }

    pub fn with_features(mut self, m: usize) -> Self {
        self.features = m;
        self
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lengthscale > 0.0) {
            problems.push(format!("lengthscale must be > 0 (got {})", self.lengthscale));
        }
        if !(self.variance >= 0.0) {
            problems.push(format!("variance must be >= 0 (got {})", self.variance));
        }
        if !(self.noise >= 0.0) {
            problems.push(format!("noise must be >= 0 (got {})", self.noise));
        }
        if self.features == 0 {
            problems.push("features must be >= 1".to_string());
        }
        if !(self.radius > 0.0) {
            problems.push(format!("radius must be > 0 (got {})", self.radius));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// `√λ_j = π j / (2L)`.
    pub fn frequency(&self, j: usize) -> f64 {
        PI * j as f64 / (2.0 * self.radius)
    }

    /// Spectral weights `S(√λ_j)` for `j = 1..=m`.
    pub fn spectral_weights(&self) -> Vec<f64> {
        (1..=self.features)
            .map(|j| spectral_density(self, self.frequency(j)))
            .collect()
    }

    /// Closed-form stationary kernel at lag `r` (what the basis expansion approximates).
    pub fn stationary_kernel(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.family {
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() * r / self.lengthscale;
                self.variance * (1.0 + a) * (-a).exp()
            }
            KernelFamily::SquaredExponential => {
                self.variance * (-0.5 * r * r / (self.lengthscale * self.lengthscale)).exp()
            }
        }
    }
}

/// One-dimensional spectral density of the configured stationary kernel.
pub fn spectral_density(spec: &HsgpSpec, omega: f64) -> f64 {
    let ell = spec.lengthscale;
    match spec.family {
        KernelFamily::Matern32 => {
            let lam = 3f64.sqrt() / ell;
            let denom = lam * lam + omega * omega;
            spec.variance * 4.0 * lam.powi(3) / (denom * denom)
        }
        KernelFamily::SquaredExponential => {
            spec.variance * (2.0 * PI).sqrt() * ell * (-0.5 * ell * ell * omega * omega).exp()
        }
    }
}

fn check_domain(t: f64, radius: f64) -> Result<()> {
    // a few ulps of slack so that grid endpoints computed in floating point pass
    if t.abs() > radius * (1.0 + 1e-12) || !t.is_finite() {
        return Err(Error::Domain {
            what: "t",
            value: t,
            radius,
        });
    }
    Ok(())
}

/// `φ_j(t) = √(1/L) sin(π j (t + L) / (2L))`.
pub fn basis_function(j: usize, t: f64, radius: f64) -> Result<f64> {
    check_domain(t, radius)?;
    Ok(basis_unchecked(j, t, radius))
}

#[inline]
pub(crate) fn basis_unchecked(j: usize, t: f64, radius: f64) -> f64 {
    let arg = PI * j as f64 * (t + radius) / (2.0 * radius);
    arg.sin() / radius.sqrt()
}

/// `∫_0^t φ_j(τ) dτ` in closed form.
pub fn integrated_basis(j: usize, t: f64, radius: f64) -> Result<f64> {
    check_domain(t, radius)?;
    Ok(integrated_unchecked(j, t, radius))
}

#[inline]
pub(crate) fn integrated_unchecked(j: usize, t: f64, radius: f64) -> f64 {
    let w = PI * j as f64 / (2.0 * radius);
    let c = 1.0 / w;
    let lower = (PI * j as f64 / 2.0).cos();
    let upper = (w * (t + radius)).cos();
    c * (lower - upper) / radius.sqrt()
}

/// Reduced-rank velocity kernel between two domain coordinates.
pub fn velocity_kernel(spec: &HsgpSpec, t: f64, t_prime: f64) -> Result<f64> {
    check_domain(t, spec.radius)?;
    check_domain(t_prime, spec.radius)?;
    Ok((1..=spec.features)
        .map(|j| {
            spectral_density(spec, spec.frequency(j))
                * basis_unchecked(j, t, spec.radius)
                * basis_unchecked(j, t_prime, spec.radius)
        })
        .sum())
}

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, node_count: usize) -> Result<Self> {
        if !(horizon > 0.0) || node_count < 2 {
            return Err(Error::Config(format!(
                "time grid needs horizon > 0 and at least 2 nodes (got T={horizon}, n={node_count})"
            )));
        }
        let step = horizon / (node_count - 1) as f64;
        let mut nodes: Vec<f64> = (0..node_count).map(|i| i as f64 * step).collect();
        nodes[node_count - 1] = horizon;
        Ok(Self { horizon, nodes })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn step(&self) -> f64 {
        self.horizon / (self.nodes.len() - 1) as f64
    }

    /// Maps grid time into the kernel domain, centering the horizon at 0.
    pub fn to_domain(&self, t: f64) -> f64 {
        t - 0.5 * self.horizon
    }

    /// Default domain radius: `[0, T]` occupies the middle 80% of `[-L, L]`.
    pub fn default_radius(&self) -> f64 {
        1.25 * self.horizon
    }
}
