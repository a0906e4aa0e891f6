use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::scenario::{PlannerEntry, ScenarioFile};
use crate::error::{Error, Result};
use crate::planners::{
    plan_chomp, plan_gpmp, plan_stein, select_best, trajectory_metrics, BaselineObjective, PlanResult,
    PlannerKind, TraceRow,
};
use crate::problems::{ProblemSpec, TargetProblem, TrajectoryProblem, TrajectoryView};

/// Largest `|h|` counted as satisfied.
pub const SUCCESS_VIOLATION: f64 = 1e-4;
/// Allowed distance of the trajectory endpoints from start and goal.
pub const SUCCESS_ENDPOINT: f64 = 1e-3;

/// Summary of one `(planner, seed)` run, measured on the best particle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub planner: String,
    pub seed: u64,
    pub length: Option<f64>,
    pub smoothness: Option<f64>,
    pub violation_mse: Option<f64>,
    pub success: bool,
    pub wall_time: f64,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub error: Option<String>,
}

/// Final particles in a plottable form.
#[derive(Debug, Clone)]
pub enum FinalState {
    Trajectories {
        times: Vec<f64>,
        dof_names: Vec<String>,
        views: Vec<TrajectoryView>,
    },
    Points(Vec<DVector<f64>>),
    None,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub row: RunRow,
    pub trace: Vec<TraceRow>,
    pub final_state: FinalState,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub planner: String,
    pub runs: usize,
    pub failures: usize,
    pub length: Option<Stat>,
    pub smoothness: Option<Stat>,
    pub violation_mse: Option<Stat>,
    pub success_rate: f64,
    pub wall_time: Option<Stat>,
}

/// Per-planner aggregates in order of first appearance. Failed runs count
/// towards `runs` and `failures` only.
pub fn aggregate(rows: &[RunRow]) -> Vec<Aggregate> {
    let mut planners: Vec<&str> = Vec::new();
    for r in rows {
        if !planners.contains(&r.planner.as_str()) {
            planners.push(&r.planner);
        }
    }
    planners
        .into_iter()
        .map(|p| {
            let all: Vec<&RunRow> = rows.iter().filter(|r| r.planner == p).collect();
            let ok: Vec<&RunRow> = all.iter().copied().filter(|r| r.error.is_none()).collect();
            let collect = |f: fn(&RunRow) -> Option<f64>| -> Option<Stat> {
                Stat::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            Aggregate {
                planner: p.to_string(),
                runs: all.len(),
                failures: all.len() - ok.len(),
                length: collect(|r| r.length),
                smoothness: collect(|r| r.smoothness),
                violation_mse: collect(|r| r.violation_mse),
                success_rate: all.iter().filter(|r| r.success).count() as f64 / all.len() as f64,
                wall_time: collect(|r| Some(r.wall_time)),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub scenario: String,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl BenchReport {
    pub fn rows(&self) -> Vec<RunRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    scenario: &'a str,
    rows: Vec<RunRow>,
    aggregates: &'a [Aggregate],
}

pub fn trace_file_name(planner: &str, seed: u64) -> String {
    format!("{planner}_seed{seed}.csv")
}

/// Writes a trace as CSV with one row per iteration.
pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if trace.is_empty() {
        w.write_record([
            "iteration",
            "mean_objective",
            "mean_abs_h",
            "best_objective",
            "max_abs_h",
            "mean_task_objective",
            "kl_surrogate",
            "ksd",
        ])?;
    }
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Success on a trajectory: small residual, every node outside the
/// obstacles, endpoints on start and goal.
fn trajectory_success(spec: &ProblemSpec, view: &TrajectoryView, max_violation: f64) -> bool {
    let n = view.nodes();
    let collision_free = (0..n).all(|t| {
        let p = [view.positions[0][t], view.positions[1][t]];
        spec.scene.signed_distance_grad(p).0 > 0.0
    });
    let endpoints = (0..view.dofs()).all(|k| {
        (view.positions[k][0] - spec.start[k]).abs() <= SUCCESS_ENDPOINT
            && (view.positions[k][n - 1] - spec.goal[k]).abs() <= SUCCESS_ENDPOINT
    });
    max_violation <= SUCCESS_VIOLATION && collision_free && endpoints
}

fn node_times(spec: &ProblemSpec) -> Vec<f64> {
    let dt = spec.horizon / (spec.nodes - 1) as f64;
    (0..spec.nodes).map(|t| t as f64 * dt).collect()
}

fn dof_names(spec: &ProblemSpec) -> Vec<String> {
    spec.robot.dof_names().iter().map(|s| s.to_string()).collect()
}

fn failed_row(label: String, seed: u64, err: String) -> RunRecord {
    RunRecord {
        row: RunRow {
            planner: label,
            seed,
            length: None,
            smoothness: None,
            violation_mse: None,
            success: false,
            wall_time: 0.0,
            iterations: 0,
            final_objective: None,
            error: Some(err),
        },
        trace: Vec::new(),
        final_state: FinalState::None,
    }
}

fn base_row(label: String, seed: u64, result: &PlanResult) -> RunRow {
    RunRow {
        planner: label,
        seed,
        length: None,
        smoothness: None,
        violation_mse: None,
        success: false,
        wall_time: result.wall_time,
        iterations: result.trace.len(),
        final_objective: result.final_row().map(|r| r.mean_objective),
        error: result.aborted.clone(),
    }
}

/// Metrics of the best particle given a decision-to-view map.
fn trajectory_row(
    mut row: RunRow,
    spec: &ProblemSpec,
    result: &PlanResult,
    view_of: impl Fn(&DVector<f64>) -> Result<TrajectoryView>,
    constraints_of: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
) -> Result<(RunRow, FinalState)> {
    let best = select_best(result, SUCCESS_VIOLATION);
    let x = result.particles.get(best);
    let view = view_of(x)?;
    let m = trajectory_metrics(&view, &constraints_of(x)?);
    row.length = Some(m.length);
    row.smoothness = Some(m.smoothness);
    row.violation_mse = Some(m.violation_mse);
    row.success = row.error.is_none() && trajectory_success(spec, &view, result.violations[best]);
    let views = result.particles.iter().map(view_of).collect::<Result<Vec<_>>>()?;
    let state = FinalState::Trajectories {
        times: node_times(spec),
        dof_names: dof_names(spec),
        views,
    };
    Ok((row, state))
}

/// Runs one planner on one seed.
pub fn run_single(scenario: &ScenarioFile, entry: &PlannerEntry, seed: u64) -> Result<RunRecord> {
    let label = entry.label();
    let config = scenario.planner_config(entry, seed);
    if let Some(toy) = scenario.toy()? {
        let result = plan_stein(&toy, &config, toy.sample_initial(config.particles, seed))?;
        let mut row = base_row(label, seed, &result);
        let best = select_best(&result, SUCCESS_VIOLATION);
        let h = toy.constraints(result.particles.get(best))?.h;
        row.violation_mse = Some(h.norm_squared() / h.len().max(1) as f64);
        row.success = row.error.is_none() && result.violations[best] <= SUCCESS_VIOLATION;
        let points = result.particles.iter().cloned().collect();
        return Ok(RunRecord {
            row,
            trace: result.trace,
            final_state: FinalState::Points(points),
        });
    }
    let spec = scenario
        .problem_spec()
        .ok_or_else(|| Error::Config("scenario has no problem".to_string()))?;
    let (result, row, state) = if entry.kind.is_stein() {
        let problem = TrajectoryProblem::new(spec.clone(), scenario.prior)?;
        let result = plan_stein(&problem, &config, problem.sample_initial(config.particles, seed))?;
        let row = base_row(label, seed, &result);
        let (row, state) = trajectory_row(row, &spec, &result, |x| problem.view(x), |x| Ok(problem.constraints(x)?.h))?;
        (result, row, state)
    } else {
        let objective = BaselineObjective::new(spec.clone(), entry.baseline_prior())?;
        let result = match entry.kind {
            PlannerKind::Chomp => plan_chomp(&objective, &config)?,
            _ => plan_gpmp(&objective, &config)?,
        };
        let row = base_row(label, seed, &result);
        let (row, state) = trajectory_row(
            row,
            &spec,
            &result,
            |x| objective.view(x),
            |x| Ok(objective.evaluate(x)?.constraints.h),
        )?;
        (result, row, state)
    };
    Ok(RunRecord {
        row,
        trace: result.trace,
        final_state: state,
    })
}

/// Runs every `(planner, seed)` pair without writing anything. A failed run
/// is recorded with its error and the others continue.
pub fn execute(scenario: &ScenarioFile) -> BenchReport {
    let pairs: Vec<(&PlannerEntry, u64)> = scenario
        .planners
        .iter()
        .flat_map(|e| scenario.seeds().into_iter().map(move |s| (e, s)))
        .collect();
    let runs: Vec<RunRecord> = pairs
        .par_iter()
        .map(|&(entry, seed)| {
            info!("running {} seed {seed}", entry.label());
            run_single(scenario, entry, seed).unwrap_or_else(|e| {
                warn!("{} seed {seed} failed: {e}", entry.label());
                failed_row(entry.label(), seed, e.to_string())
            })
        })
        .collect();
    let rows: Vec<RunRow> = runs.iter().map(|r| r.row.clone()).collect();
    BenchReport {
        scenario: scenario.name(),
        aggregates: aggregate(&rows),
        runs,
    }
}

/// Writes per-run traces under `traces/` plus `summary.csv` and
/// `summary.json`.
pub fn write_report(report: &BenchReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let trace_dir = out_dir.join("traces");
    fs::create_dir_all(&trace_dir)?;
    let mut written = Vec::new();
    for run in &report.runs {
        let path = trace_dir.join(trace_file_name(&run.row.planner, run.row.seed));
        write_trace(&path, &run.trace)?;
        written.push(path);
    }
    let csv_path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for run in &report.runs {
        w.serialize(&run.row)?;
    }
    w.flush()?;
    written.push(csv_path);
    let json_path = out_dir.join("summary.json");
    let summary = SummaryJson {
        scenario: &report.scenario,
        rows: report.rows(),
        aggregates: &report.aggregates,
    };
    fs::write(&json_path, serde_json::to_string_pretty(&summary)?)?;
    written.push(json_path);
    Ok(written)
}

/// Executes the scenario and writes its traces and summary to `out_dir`.
pub fn run_benchmark(scenario: &ScenarioFile, out_dir: &Path) -> Result<BenchReport> {
    scenario.validate()?;
    let report = execute(scenario);
    write_report(&report, out_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(planner: &str, length: f64, ok: bool) -> RunRow {
        RunRow {
            planner: planner.to_string(),
            seed: 0,
            length: Some(length),
            smoothness: Some(1.0),
            violation_mse: Some(0.0),
            success: ok,
            wall_time: 1.0,
            iterations: 1,
            final_objective: None,
            error: None,
        }
    }

    #[test]
    fn stat_sample_std() {
        let s = Stat::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_close!(s.mean, 2.0, 1e-15);
        assert_close!(s.std, 1.0, 1e-15);
        assert_eq!(Stat::of(&[4.0]).unwrap().std, 0.0);
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn aggregate_groups_by_planner() {
        let rows = vec![row("a", 1.0, true), row("b", 5.0, false), row("a", 3.0, false)];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].planner, "a");
        assert_eq!(agg[0].runs, 2);
        assert_close!(agg[0].length.unwrap().mean, 2.0, 1e-15);
        assert_close!(agg[0].success_rate, 0.5, 1e-15);
        assert_eq!(agg[1].length.unwrap().std, 0.0);
    }

    #[test]
    fn failures_excluded_from_stats() {
        let mut bad = row("a", 100.0, false);
        bad.error = Some("boom".to_string());
        bad.length = None;
        let agg = aggregate(&[row("a", 1.0, true), bad]);
        assert_eq!(agg[0].failures, 1);
        assert_close!(agg[0].length.unwrap().mean, 1.0, 1e-15);
    }
}
