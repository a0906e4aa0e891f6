//! Inference loops over particle sets: constrained SVN and SVGD on a
//! [`TargetProblem`](crate::problems::TargetProblem), penalty-method CHOMP and
//! GPMP baselines on the positions-only layout, and result bookkeeping.

mod baselines;
mod metrics;
mod stein_loop;

pub use baselines::{
    plan_chomp, plan_gpmp, straight_line_init, BaselineObjective, BaselinePriorSpec, DEFAULT_PENALTY,
};
pub use metrics::{count_clusters, select_best, select_best_by, trajectory_metrics, TrajectoryMetrics};
pub use stein_loop::{plan_csvgd, plan_csvn, plan_stein};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::stein::{MetricKind, ParticleSet, TrajectoryKernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Csvn,
    Csvgd,
    Chomp,
    Gpmp,
}

impl PlannerKind {
    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Csvn => "csvn",
            PlannerKind::Csvgd => "csvgd",
            PlannerKind::Chomp => "chomp",
            PlannerKind::Gpmp => "gpmp",
        }
    }

    pub fn is_stein(self) -> bool {
        matches!(self, PlannerKind::Csvn | PlannerKind::Csvgd)
    }

    /// Default update rate.
    pub fn default_step(self) -> f64 {
        match self {
            PlannerKind::Csvn => 1.0,
            PlannerKind::Csvgd => 0.5,
            PlannerKind::Chomp | PlannerKind::Gpmp => 1e-4,
        }
    }

    pub fn default_iterations(self) -> usize {
        if self.is_stein() {
            4000
        } else {
            22000
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csvn" => Ok(PlannerKind::Csvn),
            "csvgd" => Ok(PlannerKind::Csvgd),
            "chomp" => Ok(PlannerKind::Chomp),
            "gpmp" => Ok(PlannerKind::Gpmp),
            other => Err(Error::Config(format!(
                "unknown planner '{other}' (expected csvn, csvgd, chomp or gpmp)"
            ))),
        }
    }
}

/// Early stop once both the mean constraint residual and the mean update
/// norm fall below these values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub constraint: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    pub particles: usize,
    pub iterations: usize,
    pub step_size: f64,
    #[serde(default)]
    pub warmup: usize,
    /// Fixed Levenberg damping; `None` uses `1e-3 · trace(H) / d`.
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default = "default_retries")]
    pub damping_retries: usize,
    /// Slack drift weight; `None` ties it to the damping.
    #[serde(default)]
    pub slack_beta: Option<f64>,
    #[serde(default)]
    pub metric: MetricKind,
    /// Median pairwise kernel block value at initialization.
    #[serde(default = "default_kernel_median")]
    pub kernel_median: f64,
    /// Initial BFGS scale; `None` uses the likelihood score norm at the first iterate.
    #[serde(default)]
    pub bfgs_init_scale: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<Tolerance>,
    #[serde(default)]
    pub record_ksd: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_retries() -> usize {
    5
}

fn default_kernel_median() -> f64 {
    0.5
}

impl PlannerConfig {
    pub fn new(kind: PlannerKind, particles: usize, iterations: usize) -> Self {
        Self {
            kind,
            particles,
            iterations,
            step_size: kind.default_step(),
            warmup: 0,
            damping: None,
            damping_retries: default_retries(),
            slack_beta: None,
            metric: MetricKind::Covariance,
            kernel_median: default_kernel_median(),
            bfgs_init_scale: None,
            tolerance: None,
            record_ksd: false,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step_size = step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.particles < 1 {
            problems.push("particles must be >= 1".to_string());
        }
        if self.iterations < 1 {
            problems.push("iterations must be >= 1".to_string());
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            problems.push(format!("step_size must be > 0 (got {})", self.step_size));
        }
        if let Some(mu) = self.damping {
            if !(mu >= 0.0) {
                problems.push(format!("damping must be >= 0 (got {mu})"));
            }
        }
        if !(self.kernel_median > 0.0 && self.kernel_median < 1.0) {
            problems.push(format!("kernel_median must be in (0, 1) (got {})", self.kernel_median));
        }
        if let Some(b) = self.slack_beta {
            if !(b >= 0.0) {
                problems.push(format!("slack_beta must be >= 0 (got {b})"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// One row per iteration, describing the particle set after that update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub mean_objective: f64,
    pub mean_abs_h: f64,
    pub best_objective: f64,
    pub max_abs_h: f64,
    pub mean_task_objective: f64,
    /// Mean objective plus the mean log kernel density of the particles
    /// (Stein planners only).
    pub kl_surrogate: Option<f64>,
    pub ksd: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub planner: PlannerKind,
    pub particles: ParticleSet,
    pub trace: Vec<TraceRow>,
    /// Final objective per particle (the planner's own scaling).
    pub objectives: Vec<f64>,
    /// Final task cost per particle.
    pub task_costs: Vec<f64>,
    /// Final `max |h|` per particle.
    pub violations: Vec<f64>,
    pub best: usize,
    pub wall_time: f64,
    /// Kernel used by the Stein planners.
    pub kernel: Option<TrajectoryKernelSpec>,
    /// Set when the run stopped early on a solver failure.
    pub aborted: Option<String>,
}

impl PlanResult {
    pub fn final_row(&self) -> Option<&TraceRow> {
        self.trace.last()
    }

    /// First iteration whose mean objective is at or below `level`.
    pub fn first_reaching(&self, level: f64) -> Option<usize> {
        self.trace
            .iter()
            .find(|r| r.mean_objective <= level)
            .map(|r| r.iteration)
    }

    /// First iteration whose KL surrogate is at or below `level`.
    pub fn first_reaching_kl(&self, level: f64) -> Option<usize> {
        self.trace
            .iter()
            .find(|r| r.kl_surrogate.is_some_and(|v| v <= level))
            .map(|r| r.iteration)
    }

    pub fn max_violation(&self) -> f64 {
        self.violations.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean_violation(&self) -> f64 {
        if self.violations.is_empty() {
            0.0
        } else {
            self.violations.iter().sum::<f64>() / self.violations.len() as f64
        }
    }
}

/// Snapshot statistics shared by every planner's trace.
pub(crate) fn trace_row(
    iteration: usize,
    objectives: &[f64],
    task_costs: &[f64],
    h_abs: &[(f64, f64)],
    log_density: Option<f64>,
    ksd: Option<f64>,
) -> TraceRow {
    let n = objectives.len().max(1) as f64;
    let mean_objective = objectives.iter().sum::<f64>() / n;
    TraceRow {
        iteration,
        mean_objective,
        mean_abs_h: h_abs.iter().map(|p| p.0).sum::<f64>() / n,
        best_objective: objectives.iter().cloned().fold(f64::INFINITY, f64::min),
        max_abs_h: h_abs.iter().map(|p| p.1).fold(0.0, f64::max),
        mean_task_objective: task_costs.iter().sum::<f64>() / n,
        kl_surrogate: log_density.map(|l| mean_objective + l),
        ksd,
    }
}
