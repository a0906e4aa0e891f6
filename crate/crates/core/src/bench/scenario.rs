use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planners::{BaselinePriorSpec, PlannerConfig, PlannerKind, Tolerance, DEFAULT_PENALTY};
use crate::problems::{
    ConstraintSet, CostMode, CostWeights, PriorConfig, ProblemSpec, RobotKind, Scene2D, ToyGaussian,
    DEFAULT_SAFETY_MARGIN,
};
use crate::stein::MetricKind;

/// Benchmark scenario as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    /// Signed so that a negative count is reported by validation.
    pub particles: i64,
    /// Number of runs per planner; seeds default to `0..repetitions`.
    #[serde(default)]
    pub repetitions: Option<usize>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub planners: Vec<PlannerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    ToyGaussian(ToyConfig),
    Unicycle(PlanarConfig),
    Pointmass(PlanarConfig),
}

/// Correlated 2D Gaussian on an ellipse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub center: [f64; 2],
    pub radii: [f64; 2],
    /// Isotropic initial distribution; absent means sampling the Gaussian.
    #[serde(default)]
    pub init_mean: Option<[f64; 2]>,
    #[serde(default)]
    pub init_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarConfig {
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
    #[serde(default)]
    pub constraints: Option<ConstraintSet>,
}

fn default_margin() -> f64 {
    DEFAULT_SAFETY_MARGIN
}

/// Kernel settings shared by the Stein planners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub metric: MetricKind,
    /// Median pairwise block value at initialization.
    pub median: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            metric: MetricKind::Covariance,
            median: 0.5,
        }
    }
}

/// One planner of the comparison. Stein-only and baseline-only fields are
/// ignored by the other family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerEntry {
    pub kind: PlannerKind,
    /// Output name; defaults to the planner kind.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub warmup: usize,
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub slack_beta: Option<f64>,
    #[serde(default)]
    pub bfgs_init_scale: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<Tolerance>,
    #[serde(default)]
    pub record_ksd: bool,
    /// Baseline smoothness weight.
    #[serde(default)]
    pub weight: Option<f64>,
    #[serde(default)]
    pub penalty: Option<f64>,
    #[serde(default)]
    pub cost_scale: Option<f64>,
    #[serde(default)]
    pub perturbation: Option<f64>,
    #[serde(default)]
    pub identity_metric: bool,
}

impl PlannerEntry {
    pub fn new(kind: PlannerKind) -> Self {
        Self {
            kind,
            label: None,
            iterations: None,
            step_size: None,
            warmup: 0,
            damping: None,
            slack_beta: None,
            bfgs_init_scale: None,
            tolerance: None,
            record_ksd: false,
            weight: None,
            penalty: None,
            cost_scale: None,
            perturbation: None,
            identity_metric: false,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    /// Baseline smoothness weight when none is given.
    pub const DEFAULT_WEIGHT: f64 = 100.0;

    pub fn baseline_prior(&self) -> BaselinePriorSpec {
        let weight = self.weight.unwrap_or(Self::DEFAULT_WEIGHT);
        let mut spec = match self.kind {
            PlannerKind::Gpmp => BaselinePriorSpec::gpmp(weight),
            _ => BaselinePriorSpec::chomp(weight),
        };
        spec.penalty = self.penalty.unwrap_or(DEFAULT_PENALTY);
        spec.cost_scale = self.cost_scale.unwrap_or(1.0);
        spec.perturbation = self.perturbation.unwrap_or(0.0);
        spec.identity_metric = self.identity_metric;
        spec
    }
}

impl ScenarioFile {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "scenario".to_string())
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.repetitions.unwrap_or(1) as u64).collect(),
        }
    }

    pub fn particle_count(&self) -> usize {
        self.particles.max(0) as usize
    }

    pub fn problem_spec(&self) -> Option<ProblemSpec> {
        let (robot, p) = match &self.problem {
            ProblemConfig::ToyGaussian(_) => return None,
            ProblemConfig::Unicycle(p) => (RobotKind::Unicycle, p),
            ProblemConfig::Pointmass(p) => (RobotKind::PointMass, p),
        };
        Some(ProblemSpec {
            robot,
            scene: p.scene.clone(),
            start: p.start.clone(),
            goal: p.goal.clone(),
            horizon: p.horizon,
            nodes: p.nodes,
            weights: p.weights,
            cost_mode: p.cost_mode,
            safety_margin: p.safety_margin,
            joint_limits: p.joint_limits.clone(),
            constraints: p.constraints,
        })
    }

    pub fn toy(&self) -> Result<Option<ToyGaussian>> {
        let ProblemConfig::ToyGaussian(t) = &self.problem else {
            return Ok(None);
        };
        let toy = ToyGaussian::new(t.mean, t.cov, t.center, t.radii)?;
        Ok(Some(match (t.init_mean, t.init_std) {
            (Some(m), Some(s)) => toy.with_initial(m, s)?,
            _ => toy,
        }))
    }

    /// Planner configuration of one run.
    pub fn planner_config(&self, entry: &PlannerEntry, seed: u64) -> PlannerConfig {
        let kind = entry.kind;
        let mut cfg = PlannerConfig::new(
            kind,
            self.particle_count(),
            entry.iterations.unwrap_or(kind.default_iterations()),
        )
        .with_seed(seed);
        if let Some(s) = entry.step_size {
            cfg.step_size = s;
        }
        cfg.warmup = entry.warmup;
        cfg.damping = entry.damping;
        cfg.slack_beta = entry.slack_beta;
        cfg.metric = self.kernel.metric;
        cfg.kernel_median = self.kernel.median;
        cfg.bfgs_init_scale = entry.bfgs_init_scale;
        cfg.tolerance = entry.tolerance;
        cfg.record_ksd = entry.record_ksd;
        cfg
    }

    /// Collects every violation instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.particles < 1 {
            problems.push(format!("particles must be >= 1 (got {})", self.particles));
        }
        if let (Some(r), Some(s)) = (self.repetitions, &self.seeds) {
            if r != s.len() {
                problems.push(format!("repetitions = {r} but {} seeds are listed", s.len()));
            }
        }
        let seeds = self.seeds();
        if seeds.is_empty() {
            problems.push("at least one seed is required".to_string());
        }
        if seeds.iter().collect::<HashSet<_>>().len() != seeds.len() {
            problems.push("seeds must be distinct".to_string());
        }
        if self.planners.is_empty() {
            problems.push("planners must list at least one planner".to_string());
        }
        let mut labels = HashSet::new();
        for (i, entry) in self.planners.iter().enumerate() {
            if !labels.insert(entry.label()) {
                problems.push(format!("planners[{i}]: duplicate label '{}'", entry.label()));
            }
            if let Err(Error::Validation(v)) = self.planner_config(entry, 0).validate() {
                problems.extend(v.into_iter().map(|m| format!("planners[{i}]: {m}")));
            }
            if !entry.kind.is_stein() {
                if matches!(self.problem, ProblemConfig::ToyGaussian(_)) {
                    problems.push(format!("planners[{i}]: {} needs a trajectory problem", entry.kind));
                }
                if let Err(Error::Validation(v)) = entry.baseline_prior().validate() {
                    problems.extend(v.into_iter().map(|m| format!("planners[{i}]: {m}")));
                }
            }
        }
        match &self.problem {
            ProblemConfig::ToyGaussian(t) => {
                if let Err(e) = self.toy() {
                    problems.push(format!("problem: {e}"));
                }
                if t.init_mean.is_some() != t.init_std.is_some() {
                    problems.push("problem: init_mean and init_std must be given together".to_string());
                }
            }
            _ => {
                if let Some(spec) = self.problem_spec() {
                    if let Err(e) = spec.validate() {
                        match e {
                            Error::Validation(v) => problems.extend(v.into_iter().map(|m| format!("problem: {m}"))),
                            other => problems.push(format!("problem: {other}")),
                        }
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Parse("scenario file is empty".to_string()));
        }
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Reads and validates a scenario file. Unknown keys are rejected.
pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)?;
    let scenario = ScenarioFile::from_toml_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
particles = 8
seeds = [3, 4]

[problem]
kind = "toy_gaussian"
mean = [1.0, 0.5]
cov = [[13.0, 12.0], [12.0, 13.0]]
center = [0.0, 0.0]
radii = [4.0, 2.0]

[[planners]]
kind = "csvn"
iterations = 10
"#;

    #[test]
    fn parses_toy() {
        let s = ScenarioFile::from_toml_str(TOY).unwrap();
        s.validate().unwrap();
        assert_eq!(s.seeds(), vec![3, 4]);
        assert!(s.toy().unwrap().is_some());
        assert!(s.problem_spec().is_none());
    }

    #[test]
    fn empty_file_is_parse_error() {
        assert!(matches!(ScenarioFile::from_toml_str("  \n"), Err(Error::Parse(_))));
    }

    #[test]
    fn negative_particles_named() {
        let s = ScenarioFile::from_toml_str(&TOY.replace("particles = 8", "particles = -5")).unwrap();
        let Err(Error::Validation(v)) = s.validate() else {
            panic!("expected validation error");
        };
        assert!(v.iter().any(|m| m.contains("particles")));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = TOY.replace("iterations = 10", "iterations = 10\nspeed = 3");
        assert!(ScenarioFile::from_toml_str(&text).is_err());
        let text = TOY.replace("radii = [4.0, 2.0]", "radii = [4.0, 2.0]\nfoo = 1");
        assert!(ScenarioFile::from_toml_str(&text).is_err());
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let s = ScenarioFile::from_toml_str(&TOY.replace("[3, 4]", "[3, 3]")).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn baseline_on_toy_rejected() {
        let s = ScenarioFile::from_toml_str(&TOY.replace("\"csvn\"", "\"chomp\"")).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn repetitions_default_seeds() {
        let text = TOY.replace("seeds = [3, 4]", "repetitions = 3");
        let s = ScenarioFile::from_toml_str(&text).unwrap();
        assert_eq!(s.seeds(), vec![0, 1, 2]);
    }

    #[test]
    fn toml_round_trip() {
        let s = ScenarioFile::from_toml_str(TOY).unwrap();
        let back = ScenarioFile::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(s, back);
    }
}
