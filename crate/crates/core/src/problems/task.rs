//! Problem description and the task part of the objective: weighted costs
//! and the non-holonomic constraint, on either velocity layout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::costs::{joint_limit_penalty, obstacle_cost, path_length_cost, CostMode};
use super::layout::{DofLayout, TrajectoryLayout, TrajectoryView, VelocityMode};
use super::scene::Scene2D;
use crate::constraints::ConstraintEval;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotKind {
    /// Planar point, DOFs `(x, y)`.
    PointMass,
    /// Planar unicycle, DOFs `(x, y, θ)`.
    Unicycle,
}

impl RobotKind {
    pub fn dof_names(self) -> &'static [&'static str] {
        match self {
            RobotKind::PointMass => &["x", "y"],
            RobotKind::Unicycle => &["x", "y", "theta"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintSet {
    None,
    /// No lateral slip: `ẏ cos θ − ẋ sin θ = 0` at interior nodes.
    Nonholonomic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub obstacle: f64,
    pub prior: f64,
    pub length: f64,
    pub limit: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            obstacle: 1.0,
            prior: 1e-2,
            length: 1.0,
            limit: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub robot: RobotKind,
    #[serde(default)]
    pub scene: Scene2D,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub horizon: f64,
    pub nodes: usize,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub cost_mode: CostMode,
    #[serde(default = "default_margin")]
    pub safety_margin: f64,
    #[serde(default)]
    pub joint_limits: Option<Vec<[f64; 2]>>,
    /// Defaults to the robot's natural constraint set.
    #[serde(default)]
    pub constraints: Option<ConstraintSet>,
}

/// Clearance below which the obstacle cost is active.
pub const DEFAULT_SAFETY_MARGIN: f64 = 0.3;

fn default_margin() -> f64 {
    DEFAULT_SAFETY_MARGIN
}

impl ProblemSpec {
    pub fn dof_count(&self) -> usize {
        self.robot.dof_names().len()
    }

    pub fn constraint_set(&self) -> ConstraintSet {
        self.constraints.unwrap_or(match self.robot {
            RobotKind::PointMass => ConstraintSet::None,
            RobotKind::Unicycle => ConstraintSet::Nonholonomic,
        })
    }

    /// The goal pose is clamped for the unicycle; the point mass reaches it
    /// through prior conditioning.
    pub fn clamps_goal(&self) -> bool {
        self.robot == RobotKind::Unicycle
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let d = self.dof_count();
        if self.start.len() != d || self.goal.len() != d {
            problems.push(format!("start and goal need {d} entries for {:?}", self.robot));
        }
        if !(self.horizon > 0.0) {
            problems.push(format!("horizon must be > 0 (got {})", self.horizon));
        }
        if self.nodes < 3 {
            problems.push(format!("nodes must be >= 3 (got {})", self.nodes));
        }
        let w = &self.weights;
        for (name, v) in [
            ("weights.obstacle", w.obstacle),
            ("weights.prior", w.prior),
            ("weights.length", w.length),
            ("weights.limit", w.limit),
        ] {
            if !(v >= 0.0) {
                problems.push(format!("{name} must be >= 0 (got {v})"));
            }
        }
        if let Err(Error::Validation(v)) = self.scene.validate() {
            problems.extend(v);
        }
        if self.start.len() >= 2 && self.goal.len() >= 2 {
            for (name, p) in [("start", &self.start), ("goal", &self.goal)] {
                if !self.scene.bounds.contains([p[0], p[1]]) {
                    problems.push(format!("{name} lies outside the workspace bounds"));
                }
            }
        }
        if let Some(limits) = &self.joint_limits {
            if limits.len() != d || limits.iter().any(|b| !(b[0] < b[1])) {
                problems.push(format!("joint_limits needs {d} increasing pairs"));
            }
        }
        if self.constraint_set() == ConstraintSet::Nonholonomic && self.robot != RobotKind::Unicycle {
            problems.push("nonholonomic constraints require the unicycle robot".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn layout(&self, mode: VelocityMode) -> Result<TrajectoryLayout> {
        self.layout_with(mode, self.clamps_goal())
    }

    pub fn layout_with(&self, mode: VelocityMode, clamp_goal: bool) -> Result<TrajectoryLayout> {
        let dofs = self
            .robot
            .dof_names()
            .iter()
            .enumerate()
            .map(|(k, name)| DofLayout {
                name: name.to_string(),
                start: self.start[k],
                goal: self.goal[k],
                clamp_goal,
            })
            .collect();
        TrajectoryLayout::new(dofs, self.nodes, self.horizon / (self.nodes - 1) as f64, mode)
    }
}

/// Unweighted cost terms of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CostBreakdown {
    pub obstacle: f64,
    pub length: f64,
    pub limit: f64,
}

/// Non-holonomic residuals `h_t = ẏ_t cos θ_t − ẋ_t sin θ_t` at interior
/// nodes with the Jacobian over the layout's decision vector.
pub fn unicycle_constraint(layout: &TrajectoryLayout, view: &TrajectoryView) -> Result<ConstraintEval> {
    if layout.dof_count() != 3 || view.dofs() != 3 {
        return Err(Error::Config(format!(
            "unicycle constraint needs DOFs (x, y, theta), layout has {}",
            layout.dof_count()
        )));
    }
    let n = layout.nodes();
    let m = n - 2;
    let mut h = DVector::zeros(m);
    let mut jac = DMatrix::zeros(layout.dim(), m);
    for (c, t) in (1..n - 1).enumerate() {
        let (vx, vy, th) = (view.velocities[0][t], view.velocities[1][t], view.positions[2][t]);
        let (s, co) = th.sin_cos();
        h[c] = vy * co - vx * s;
        let mut col = DVector::zeros(layout.dim());
        layout.add_velocity_partial(&mut col, 0, t, -s);
        layout.add_velocity_partial(&mut col, 1, t, co);
        layout.add_position_partial(&mut col, 2, t, -vy * s - vx * co);
        jac.set_column(c, &col);
    }
    Ok(ConstraintEval::equality(h, jac))
}

/// Weighted task cost `L` and constraints on a given layout.
#[derive(Debug, Clone)]
pub struct TaskModel {
    spec: ProblemSpec,
    layout: TrajectoryLayout,
}

impl TaskModel {
    pub fn new(spec: ProblemSpec, mode: VelocityMode) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout(mode)?;
        Ok(Self { spec, layout })
    }

    /// Positions-only model with both endpoints clamped, as used by the
    /// penalty baselines.
    pub fn clamped_positions(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout_with(VelocityMode::FiniteDifference, true)?;
        Ok(Self { spec, layout })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn layout(&self) -> &TrajectoryLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn view(&self, xi: &DVector<f64>) -> Result<TrajectoryView> {
        self.layout.unflatten(xi)
    }

    pub fn breakdown(&self, view: &TrajectoryView) -> CostBreakdown {
        let s = &self.spec;
        CostBreakdown {
            obstacle: obstacle_cost(view, &s.scene, s.cost_mode, s.safety_margin).0,
            length: path_length_cost(view, 2).0,
            limit: s
                .joint_limits
                .as_ref()
                .map_or(0.0, |b| joint_limit_penalty(view, b, 1.0).0),
        }
    }

    /// `L = w_obs·obstacle + w_len·length + w_lim·limits` with its view-space gradient.
    pub fn cost_view(&self, view: &TrajectoryView) -> (f64, TrajectoryView) {
        let s = &self.spec;
        let w = &s.weights;
        let mut grad = TrajectoryView::zeros(view.dofs(), view.nodes());
        let mut value = 0.0;
        if w.obstacle > 0.0 {
            let (c, g) = obstacle_cost(view, &s.scene, s.cost_mode, s.safety_margin);
            value += w.obstacle * c;
            grad.add_assign(&g, w.obstacle);
        }
        if w.length > 0.0 {
            let (c, g) = path_length_cost(view, 2);
            value += w.length * c;
            grad.add_assign(&g, w.length);
        }
        if let (Some(bounds), true) = (&s.joint_limits, w.limit > 0.0) {
            let (c, g) = joint_limit_penalty(view, bounds, w.limit);
            value += c;
            grad.add_assign(&g, 1.0);
        }
        (value, grad)
    }

    /// `L(ξ)` and `∇L(ξ)` on the decision vector.
    pub fn cost(&self, xi: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let view = self.view(xi)?;
        let (c, g) = self.cost_view(&view);
        Ok((c, self.layout.pullback(&g)))
    }

    pub fn constraints_view(&self, view: &TrajectoryView) -> Result<ConstraintEval> {
        match self.spec.constraint_set() {
            ConstraintSet::None => Ok(ConstraintEval::empty(self.layout.dim())),
            ConstraintSet::Nonholonomic => unicycle_constraint(&self.layout, view),
        }
    }

    pub fn constraints(&self, xi: &DVector<f64>) -> Result<ConstraintEval> {
        self.constraints_view(&self.view(xi)?)
    }
}
