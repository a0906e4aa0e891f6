use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::metrics::select_best_by;
use super::{trace_row, PlanResult, PlannerConfig, PlannerKind, TraceRow};
use crate::constraints::{
    csvgd_step, csvn_kkt_solve, init_slack, slack_kkt_solve, ConstraintEval, SlackState, PINV_RTOL,
};
use crate::error::{Error, KktError, Result};
use crate::problems::{Evaluation, TargetProblem};
use crate::stein::{anneal_scale, ksd, svgd_directions, svn_hessian_at, BfgsState, KernelGram, ParticleSet};

/// BFGS blocks are reset after more damping retries than this.
const BFGS_RESET_RETRIES: usize = 3;

/// Feasibility threshold used to pick the best particle.
const BEST_FEASIBILITY_TOL: f64 = 1e-4;

struct State {
    eval: Evaluation,
    cons: ConstraintEval,
}

impl State {
    fn abs_h(&self) -> (f64, f64) {
        let viol_g = self.cons.max_violation_g();
        (self.cons.mean_abs_h(), self.cons.max_abs_h().max(viol_g))
    }
}

struct Step {
    delta_x: DVector<f64>,
    delta_s: DVector<f64>,
    retries: usize,
}

fn evaluate_all<P: TargetProblem>(problem: &P, xs: &[DVector<f64>]) -> Result<Vec<State>> {
    xs.par_iter()
        .map(|x| {
            Ok(State {
                eval: problem.evaluate(x)?,
                cons: problem.constraints(x)?,
            })
        })
        .collect()
}

/// Damped KKT solve with the doubling retry protocol.
fn solve_with_retries(
    h: &DMatrix<f64>,
    phi: &DVector<f64>,
    cons: &ConstraintEval,
    slack: Option<&DVector<f64>>,
    config: &PlannerConfig,
) -> std::result::Result<Step, KktError> {
    let d = h.nrows().max(1) as f64;
    let base = config.damping.unwrap_or(1e-3 * h.trace() / d);
    let floor = 1e-10 * (h.trace().abs() / d).max(1.0);
    let mut mu = base;
    let mut last_err = KktError::Factorization { damping: mu };
    for retry in 0..=config.damping_retries {
        let sol = match slack {
            Some(s) => {
                let beta = config.slack_beta.unwrap_or(mu);
                slack_kkt_solve(h, phi, cons, &SlackState::new(s.clone(), beta), mu)
            }
            None => csvn_kkt_solve(h, phi, cons, mu),
        };
        match sol {
            Ok(sol) => {
                return Ok(Step {
                    delta_x: sol.delta_x,
                    delta_s: sol.delta_s,
                    retries: retry,
                })
            }
            Err(e @ (KktError::SingularSchur { .. } | KktError::Factorization { .. })) => {
                last_err = e;
                mu = (2.0 * mu).max(floor);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err)
}

/// Constrained SVN with the default update rate of 1.
pub fn plan_csvn<P: TargetProblem>(problem: &P, config: &PlannerConfig) -> Result<PlanResult> {
    if config.kind != PlannerKind::Csvn {
        return Err(Error::Config(format!("plan_csvn called with {} config", config.kind)));
    }
    let init = problem.sample_initial(config.particles, config.seed);
    plan_stein(problem, config, init)
}

/// Constrained SVGD with the default update rate of 0.5.
pub fn plan_csvgd<P: TargetProblem>(problem: &P, config: &PlannerConfig) -> Result<PlanResult> {
    if config.kind != PlannerKind::Csvgd {
        return Err(Error::Config(format!("plan_csvgd called with {} config", config.kind)));
    }
    let init = problem.sample_initial(config.particles, config.seed);
    plan_stein(problem, config, init)
}

/// Runs the constrained Stein loop from the given particles.
pub fn plan_stein<P: TargetProblem>(problem: &P, config: &PlannerConfig, init: ParticleSet) -> Result<PlanResult> {
    config.validate()?;
    if !config.kind.is_stein() {
        return Err(Error::Config(format!("{} is not a Stein planner", config.kind)));
    }
    if init.is_empty() || init.dim() != problem.dim() {
        return Err(Error::Dimension {
            context: "initial particles",
            expected: problem.dim(),
            got: init.dim(),
        });
    }
    let clock = Instant::now();
    let d = problem.dim();
    let n = init.len();
    let spec = problem.kernel_spec(config.metric, &init, config.kernel_median)?;
    let mut xs = init.into_vec();
    let mut states = evaluate_all(problem, &xs)?;
    if config.kind == PlannerKind::Csvgd && states.iter().any(|s| s.cons.n_ineq() > 0) {
        return Err(Error::Config("cSVGD handles equality constraints only".to_string()));
    }
    let mut bfgs: Vec<BfgsState> = states
        .iter()
        .map(|s| match config.bfgs_init_scale {
            Some(scale) => BfgsState::with_scale(d, scale),
            None => BfgsState::with_scale(d, s.eval.likelihood_score.norm()),
        })
        .collect();
    let mut slacks: Vec<Option<DVector<f64>>> = states
        .iter()
        .map(|s| (s.cons.n_ineq() > 0).then(|| init_slack(&s.cons.g)))
        .collect();
    let gaussian = problem.gaussian_hessian();
    let eta = config.step_size;
    let mut trace: Vec<TraceRow> = Vec::with_capacity(config.iterations);
    let mut aborted = None;
    let mut gram = KernelGram::compute(&xs, &spec);

    for it in 1..=config.iterations {
        let gamma = anneal_scale(it, config.warmup);
        let scores: Vec<DVector<f64>> = states.iter().map(|s| s.eval.score.clone()).collect();
        let phis = svgd_directions(&gram, &scores, gamma);

        let steps: Vec<std::result::Result<Step, KktError>> = match config.kind {
            PlannerKind::Csvn => {
                for (b, (x, s)) in bfgs.iter_mut().zip(xs.iter().zip(&states)) {
                    b.observe(x, &s.eval.likelihood_score);
                }
                let hessians: Vec<DMatrix<f64>> = bfgs.iter().map(|b| gaussian + b.hessian()).collect();
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let h = svn_hessian_at(&gram, &hessians, i, gamma);
                        solve_with_retries(&h, &phis[i], &states[i].cons, slacks[i].as_ref(), config)
                    })
                    .collect()
            }
            _ => (0..n)
                .into_par_iter()
                .map(|i| {
                    csvgd_step(&phis[i], &states[i].cons, PINV_RTOL)
                        .map(|delta_x| Step {
                            delta_x,
                            delta_s: DVector::zeros(0),
                            retries: 0,
                        })
                        .map_err(|e| KktError::Shape(e.to_string()))
                })
                .collect(),
        };

        let mut step_norm = 0.0;
        let mut failure = None;
        let mut accepted = Vec::with_capacity(n);
        for (i, s) in steps.into_iter().enumerate() {
            match s {
                Ok(step) => accepted.push(step),
                Err(e) => {
                    failure = Some(format!("particle {i} at iteration {it}: {e}"));
                    break;
                }
            }
        }
        if let Some(msg) = failure {
            aborted = Some(msg);
            break;
        }
        for (i, step) in accepted.into_iter().enumerate() {
            if step.retries > BFGS_RESET_RETRIES {
                bfgs[i].reset();
            }
            xs[i].axpy(eta, &step.delta_x, 1.0);
            if let Some(s) = slacks[i].as_mut() {
                s.axpy(eta, &step.delta_s, 1.0);
            }
            step_norm += eta * step.delta_x.norm() / n as f64;
        }

        states = evaluate_all(problem, &xs)?;
        gram = KernelGram::compute(&xs, &spec);
        let objectives: Vec<f64> = states.iter().map(|s| -s.eval.log_p).collect();
        let task_costs: Vec<f64> = states.iter().map(|s| s.eval.task_cost).collect();
        let h_abs: Vec<(f64, f64)> = states.iter().map(State::abs_h).collect();
        let k = if config.record_ksd && n > 1 {
            let scores: Vec<DVector<f64>> = states.iter().map(|s| s.eval.score.clone()).collect();
            Some(ksd(&xs, &scores, &spec)?)
        } else {
            None
        };
        let row = trace_row(it, &objectives, &task_costs, &h_abs, Some(gram.mean_log_density()), k);
        let converged = config
            .tolerance
            .is_some_and(|tol| row.mean_abs_h <= tol.constraint && step_norm <= tol.step);
        trace.push(row);
        if converged {
            break;
        }
    }

    let objectives: Vec<f64> = states.iter().map(|s| -s.eval.log_p).collect();
    let violations: Vec<f64> = states.iter().map(|s| s.abs_h().1).collect();
    let best = select_best_by(&objectives, &violations, BEST_FEASIBILITY_TOL);
    Ok(PlanResult {
        planner: config.kind,
        particles: ParticleSet::from_vectors(xs, d),
        trace,
        task_costs: states.iter().map(|s| s.eval.task_cost).collect(),
        objectives,
        violations,
        best,
        wall_time: clock.elapsed().as_secs_f64(),
        kernel: Some(spec),
        aborted,
    })
}
