//! Planning problems: planar scenes with exact signed distances, the
//! trajectory decision layout, task costs, the unicycle constraint, and the
//! posteriors handed to the planners.

mod costs;
mod layout;
mod scene;
mod target;
mod task;

pub use costs::{
    joint_limit_penalty, obstacle_cost, path_length, path_length_cost, velocity_roughness, CostMode,
    LENGTH_EPS,
};
pub use layout::{DofLayout, TrajectoryLayout, TrajectoryView, VelocityMode};
pub use scene::{signed_distance, AxisBox, Bounds, Circle, Scene2D};
pub use target::{Evaluation, PriorConfig, TargetProblem, ToyGaussian, TrajectoryProblem};
pub use task::{
    unicycle_constraint, ConstraintSet, CostBreakdown, CostWeights, ProblemSpec, DEFAULT_SAFETY_MARGIN, RobotKind, TaskModel,
};
