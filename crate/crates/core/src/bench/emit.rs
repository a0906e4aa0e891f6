use std::fs;
use std::path::{Path, PathBuf};

use super::runner::{BenchReport, FinalState, RunRecord};
use crate::error::Result;
use crate::gp_prior::{
    build_joint_prior, condition_prior, BoundaryCondition, JointGpPrior, Observation, ObservationKind, TimeGrid,
};
use crate::problems::PriorConfig;

/// Mean and standard deviation across runs of one trace column.
fn spread(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn write_convergence(path: &Path, runs: &[&RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration",
        "runs",
        "mean_objective",
        "mean_objective_std",
        "mean_abs_h",
        "mean_abs_h_std",
        "best_objective",
    ])?;
    let len = runs.iter().map(|r| r.trace.len()).max().unwrap_or(0);
    for i in 0..len {
        let rows: Vec<_> = runs.iter().filter_map(|r| r.trace.get(i)).collect();
        let (obj, obj_sd) = spread(&rows.iter().map(|r| r.mean_objective).collect::<Vec<_>>());
        let (h, h_sd) = spread(&rows.iter().map(|r| r.mean_abs_h).collect::<Vec<_>>());
        let best = rows.iter().map(|r| r.best_objective).fold(f64::INFINITY, f64::min);
        w.write_record([
            rows[0].iteration.to_string(),
            rows.len().to_string(),
            obj.to_string(),
            obj_sd.to_string(),
            h.to_string(),
            h_sd.to_string(),
            best.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per node: time, then position and velocity of every DOF for
/// every particle.
fn write_trajectories(path: &Path, times: &[f64], names: &[String], views: &[crate::problems::TrajectoryView]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    for i in 0..views.len() {
        for name in names {
            header.push(format!("p{i}_{name}"));
            header.push(format!("p{i}_d{name}"));
        }
    }
    w.write_record(&header)?;
    for (t, time) in times.iter().enumerate() {
        let mut rec = vec![time.to_string()];
        for v in views {
            for k in 0..v.dofs() {
                rec.push(v.positions[k][t].to_string());
                rec.push(v.velocities[k][t].to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_points(path: &Path, points: &[nalgebra::DVector<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = points.first().map_or(0, |p| p.len());
    let mut header = vec!["particle".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `plot/convergence_<planner>.csv` per planner and the final
/// particles of every run for external plotting.
pub fn emit_plot_data(report: &BenchReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = out_dir.join("plot");
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for agg in &report.aggregates {
        let runs: Vec<&RunRecord> = report
            .runs
            .iter()
            .filter(|r| r.row.planner == agg.planner && !r.trace.is_empty())
            .collect();
        if runs.is_empty() {
            continue;
        }
        let path = dir.join(format!("convergence_{}.csv", agg.planner));
        write_convergence(&path, &runs)?;
        written.push(path);
    }
    for run in &report.runs {
        let stem = format!("{}_seed{}", run.row.planner, run.row.seed);
        match &run.final_state {
            FinalState::Trajectories { times, dof_names, views } => {
                let path = dir.join(format!("trajectories_{stem}.csv"));
                write_trajectories(&path, times, dof_names, views)?;
                written.push(path);
            }
            FinalState::Points(points) => {
                let path = dir.join(format!("points_{stem}.csv"));
                write_points(&path, points)?;
                written.push(path);
            }
            FinalState::None => {}
        }
    }
    Ok(written)
}

/// Prior and posterior of the demo: a one-dimensional trajectory on
/// `[0, 10]` conditioned on two positions and one velocity.
pub fn prior_demo() -> Result<(JointGpPrior, JointGpPrior, Vec<Observation>)> {
    let config = PriorConfig {
        lengthscale: 2.0,
        ..PriorConfig::default()
    };
    let grid = TimeGrid::uniform(10.0, 101)?;
    let prior = build_joint_prior(&config.hsgp(&grid), &grid, &BoundaryCondition::new(0.0, 1e-2, 1.0))?;
    let observations = vec![
        Observation::position(0, 0.0, 1e-4),
        Observation::position(40, 1.5, 1e-3),
        Observation::velocity(70, -0.5, 1e-3),
        Observation::position(100, 1.0, 1e-3),
    ];
    let posterior = condition_prior(&prior, &observations)?;
    Ok((prior, posterior, observations))
}

/// Writes `prior_demo.csv` (mean ± 2σ of position and velocity before and
/// after conditioning) and `prior_observations.csv`.
pub fn emit_prior_demo(out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let (prior, posterior, observations) = prior_demo()?;
    let path = out_dir.join("prior_demo.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "t",
        "prior_x_mean",
        "prior_x_std",
        "prior_v_mean",
        "prior_v_std",
        "post_x_mean",
        "post_x_std",
        "post_v_mean",
        "post_v_std",
    ])?;
    let (px, pv) = (prior.position_mean(), prior.velocity_mean());
    let (qx, qv) = (posterior.position_mean(), posterior.velocity_mean());
    let (psx, psv) = prior.marginal_std();
    let (qsx, qsv) = posterior.marginal_std();
    for (i, t) in prior.grid().nodes().iter().enumerate() {
        w.write_record(
            [*t, px[i], psx[i], pv[i], psv[i], qx[i], qsx[i], qv[i], qsv[i]]
                .iter()
                .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    let obs_path = out_dir.join("prior_observations.csv");
    let mut w = csv::Writer::from_path(&obs_path)?;
    w.write_record(["t", "kind", "value", "noise_var"])?;
    for o in &observations {
        let kind = match o.kind {
            ObservationKind::Position => "position",
            ObservationKind::Velocity => "velocity",
        };
        w.write_record([
            prior.grid().nodes()[o.node].to_string(),
            kind.to_string(),
            o.value.to_string(),
            o.noise_var.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![path, obs_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditioning_shrinks_observed_variance() {
        let (prior, posterior, obs) = prior_demo().unwrap();
        let (psx, psv) = prior.marginal_std();
        let (qsx, qsv) = posterior.marginal_std();
        for o in obs {
            let (p, q) = match o.kind {
                ObservationKind::Position => (psx[o.node], qsx[o.node]),
                ObservationKind::Velocity => (psv[o.node], qsv[o.node]),
            };
            assert!(q < p, "node {} {:?}: {q} !< {p}", o.node, o.kind);
            assert!(q * q <= o.noise_var + 1e-9);
        }
    }

    #[test]
    fn prior_demo_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_prior_demo(dir.path()).unwrap();
        let text = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().count(), 102);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 9);
    }
}
