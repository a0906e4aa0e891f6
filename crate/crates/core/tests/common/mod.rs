//! Independent oracles shared by the integration tests: finite differences,
//! adaptive quadrature, dense linear solves and Monte Carlo statistics.
#![allow(dead_code, clippy::excessive_precision)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use steinplan::constraints::{
    csvn_kkt_solve, nullspace_projection, slack_kkt_solve, ConstraintEval, SlackState, PINV_RTOL,
};
use steinplan::gp_prior::{
    build_joint_prior, condition_prior, joint_covariance, sample_prior, velocity_kernel, BoundaryCondition,
    HsgpSpec, KernelFamily, Observation, TimeGrid,
};
use steinplan::problems::{
    CostWeights, ProblemSpec, RobotKind, Scene2D, TrajectoryView,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random symmetric positive definite matrix with eigenvalues spread over a
/// few decades.
pub fn spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = normal_mat(rng, d, d);
    let q = a.qr().q();
    let eig = DVector::from_fn(d, |_, _| 10f64.powf(rng.gen_range(-1.0..2.0)));
    &q * DMatrix::from_diagonal(&eig) * q.transpose()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-8)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-8)
}

/// Central differences with step `h · max(1, |x_i|)`.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let step = h * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        (f(&xp) - f(&xm)) / (2.0 * step)
    })
}

/// Central-difference Jacobian stored column-per-output (`d × m`).
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(x.len(), m);
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        let d = (f(&xp) - f(&xm)) / (2.0 * step);
        jac.row_mut(i).copy_from(&d.transpose());
    }
    jac
}

/// Flattens a view as `[positions of every DOF; velocities of every DOF]`.
pub fn view_to_vec(view: &TrajectoryView) -> DVector<f64> {
    let parts: Vec<f64> = view
        .positions
        .iter()
        .chain(&view.velocities)
        .flat_map(|v| v.iter().cloned())
        .collect();
    DVector::from_vec(parts)
}

pub fn vec_to_view(x: &DVector<f64>, dofs: usize, nodes: usize) -> TrajectoryView {
    let mut v = TrajectoryView::zeros(dofs, nodes);
    for k in 0..dofs {
        v.positions[k] = x.rows(k * nodes, nodes).into_owned();
        v.velocities[k] = x.rows((dofs + k) * nodes, nodes).into_owned();
    }
    v
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod-15 estimate and its difference from the embedded Gauss-7 rule.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(c);
    let mut k = K15_WEIGHTS[7] * fc;
    let mut g = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let pair = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        k += K15_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            g += G7_WEIGHTS[i / 2] * pair;
        }
    }
    (k * h, (k - g).abs() * h)
}

fn gk_recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return value;
    }
    let m = 0.5 * (a + b);
    gk_recurse(f, a, m, 0.5 * tol, depth - 1) + gk_recurse(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Kronrod (7/15) quadrature with bisection.
pub fn adaptive_quadrature(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    gk_recurse(f, a, b, tol, 30)
}

/// Dense solve of `[[Ĥ, Ĵ], [Ĵᵀ, 0]] [z; λ] = [r₁; r₂]` over the primal
/// space `z = [δx; δs]` with `Ĥ = diag(H + μI, μI)`.
pub fn dense_kkt(
    h: &DMatrix<f64>,
    phi: &DVector<f64>,
    eval: &ConstraintEval,
    slack: Option<&SlackState>,
    mu: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let d = h.nrows();
    let mh = eval.n_eq();
    let mg = slack.map_or(0, |s| s.s.len());
    let dz = d + mg;
    let m = mh + mg;
    let mut k = DMatrix::zeros(dz + m, dz + m);
    let mut rhs = DVector::zeros(dz + m);
    k.view_mut((0, 0), (d, d)).copy_from(&(h + DMatrix::identity(d, d) * mu));
    for i in 0..mg {
        k[(d + i, d + i)] = mu;
    }
    let mut jac = DMatrix::zeros(dz, m);
    jac.view_mut((0, 0), (d, mh)).copy_from(&eval.jac_h);
    rhs.rows_mut(0, d).copy_from(phi);
    rhs.rows_mut(dz, mh).copy_from(&(-&eval.h));
    if let Some(s) = slack {
        jac.view_mut((0, mh), (d, mg)).copy_from(&eval.jac_g);
        for i in 0..mg {
            jac[(d + i, mh + i)] = s.s[i];
            rhs[d + i] = -s.beta * s.s[i];
            rhs[dz + mh + i] = -eval.g[i] - 0.5 * s.s[i] * s.s[i];
        }
    }
    k.view_mut((0, dz), (dz, m)).copy_from(&jac);
    k.view_mut((dz, 0), (m, dz)).copy_from(&jac.transpose());
    let sol = k.lu().solve(&rhs).expect("KKT matrix is nonsingular");
    (
        sol.rows(0, d).into_owned(),
        sol.rows(d, mg).into_owned(),
        sol.rows(dz, m).into_owned(),
    )
}

/// Worst discrepancies of the Schur-complement solvers against dense solves
/// and of the projector identities over `instances` random problems:
/// `(equality, slack, ‖P² − P‖, ‖∇hᵀ P‖)`.
pub fn kkt_oracle_errors(instances: usize, seed: u64) -> (f64, f64, f64, f64) {
    let mut r = rng(seed);
    let (mut eq, mut sl, mut idem, mut orth) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..instances {
        let d = r.gen_range(2..12);
        let mh = r.gen_range(0..d.min(5));
        let mg = r.gen_range(1..4);
        let h = spd(&mut r, d);
        let phi = normal_vec(&mut r, d, 1.0);
        let mu = 10f64.powf(r.gen_range(-3.0..0.0));
        let eval = ConstraintEval::equality(normal_vec(&mut r, mh, 1.0), normal_mat(&mut r, d, mh));

        let sol = csvn_kkt_solve(&h, &phi, &eval, mu).expect("equality solve");
        let (dx, _, lam) = dense_kkt(&h, &phi, &eval, None, mu);
        eq = eq.max(rel_err(&sol.delta_x, &dx)).max(rel_err(&sol.lambda_h, &lam));

        let ineq = eval
            .clone()
            .with_inequalities(normal_vec(&mut r, mg, 1.0), normal_mat(&mut r, d, mg));
        let slack = SlackState::new(DVector::from_fn(mg, |_, _| r.gen_range(0.1..2.0)), mu);
        let sol = slack_kkt_solve(&h, &phi, &ineq, &slack, mu).expect("slack solve");
        let (dx, ds, lam) = dense_kkt(&h, &phi, &ineq, Some(&slack), mu);
        let lam_s = sol.lambda_h.iter().chain(sol.lambda_g.iter()).cloned().collect::<Vec<_>>();
        sl = sl
            .max(rel_err(&sol.delta_x, &dx))
            .max(rel_err(&sol.delta_s, &ds))
            .max(rel_err(&DVector::from_vec(lam_s), &lam));

        if mh > 0 {
            let p = nullspace_projection(&eval.jac_h, PINV_RTOL);
            idem = idem.max((&p * &p - &p).amax());
            orth = orth.max((eval.jac_h.transpose() * &p).amax());
        }
    }
    (eq, sl, idem, orth)
}

pub fn matern(lengthscale: f64) -> HsgpSpec {
    HsgpSpec::new(KernelFamily::Matern32, lengthscale, 1.0, 0.0)
}

/// HSGP fidelity on a horizon-10 grid with lengthscale 2 and 64 features:
/// `(max |k̃ − k| / σ², max relative error of Cov(x,x) and Cov(x,v))`.
/// The covariance blocks are checked against nested adaptive Gauss-Kronrod quadrature of
/// the reduced-rank velocity kernel.
pub fn hsgp_fidelity() -> (f64, f64) {
    let horizon = 10.0;
    let grid = TimeGrid::uniform(horizon, 6).unwrap();
    let spec = matern(2.0).with_features(64).with_radius(grid.default_radius());
    let mut recon: f64 = 0.0;
    let fine = TimeGrid::uniform(horizon, 101).unwrap();
    for &t in fine.nodes() {
        for &s in fine.nodes() {
            let (a, b) = (fine.to_domain(t), fine.to_domain(s));
            let approx = velocity_kernel(&spec, a, b).unwrap();
            recon = recon.max((approx - spec.stationary_kernel(a - b)).abs() / spec.variance);
        }
    }

    let x0_var = 0.3;
    let bc = BoundaryCondition::new(0.0, x0_var, 1.0);
    let blocks = joint_covariance(&spec, &grid, &bc).unwrap();
    let kv = |u: f64, w: f64| velocity_kernel(&spec, grid.to_domain(u), grid.to_domain(w)).unwrap();
    let tol = 1e-12;
    let mut cov: f64 = 0.0;
    let nodes = grid.nodes();
    for (i, &t) in nodes.iter().enumerate() {
        for (j, &s) in nodes.iter().enumerate() {
            let xv = adaptive_quadrature(&|u| kv(u, s), 0.0, t, tol);
            if j >= i {
                let inner = |u: f64| adaptive_quadrature(&|w| kv(u, w), 0.0, s, tol);
                let xx = x0_var + adaptive_quadrature(&inner, 0.0, t, tol);
                cov = cov.max((blocks.xx[(i, j)] - xx).abs() / xx.abs());
            }
            if t > 0.0 {
                cov = cov.max((blocks.xv[(i, j)] - xv).abs() / xv.abs().max(1e-9));
            }
        }
    }
    (recon, cov)
}

/// Monte Carlo check of the joint prior: `(max |mean z-score|, relative
/// Frobenius error of the sample covariance, conditioning shrinks every
/// observed marginal)`.
pub fn prior_statistics(samples: usize) -> (f64, f64, bool) {
    let grid = TimeGrid::uniform(10.0, 16).unwrap();
    let spec = matern(2.0).with_radius(grid.default_radius());
    let spec = HsgpSpec { noise: 0.01, ..spec };
    let prior = build_joint_prior(&spec, &grid, &BoundaryCondition::new(0.5, 1e-2, 3.0)).unwrap();
    let draws = sample_prior(&prior, samples, 7);
    let n = samples as f64;
    let dim = prior.dim();
    let mut mean = DVector::zeros(dim);
    for x in draws.iter() {
        mean += x;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(dim, dim);
    for x in draws.iter() {
        let r = x - &mean;
        cov.ger(1.0, &r, &r, 1.0);
    }
    cov /= n - 1.0;
    let target = prior.covariance();
    let z = (0..dim)
        .map(|i| (mean[i] - prior.mean()[i]).abs() / (target[(i, i)] / n).sqrt().max(1e-300))
        .fold(0.0, f64::max);
    let frob = (&cov - target).norm() / target.norm();

    let obs = [
        Observation::position(0, 0.5, 1e-4),
        Observation::position(6, 1.7, 1e-3),
        Observation::velocity(10, 0.0, 1e-3),
        Observation::position(15, 3.0, 1e-3),
    ];
    let post = condition_prior(&prior, &obs).unwrap();
    let shrinks = obs.iter().all(|o| {
        let idx = prior.stacked_index(o.kind, o.node);
        post.covariance()[(idx, idx)] < prior.covariance()[(idx, idx)]
    });
    (z, frob, shrinks)
}

/// Small unicycle problem among two discs.
pub fn unicycle_spec(nodes: usize) -> ProblemSpec {
    ProblemSpec {
        robot: RobotKind::Unicycle,
        scene: Scene2D::new(
            vec![
                steinplan::problems::Circle {
                    center: [2.2, 2.8],
                    radius: 0.8,
                },
                steinplan::problems::Circle {
                    center: [4.0, 1.0],
                    radius: 0.5,
                },
            ],
            vec![],
        ),
        start: vec![0.0, 0.0, 0.0],
        goal: vec![5.0, 5.0, std::f64::consts::FRAC_PI_2],
        horizon: 10.0,
        nodes,
        weights: CostWeights {
            obstacle: 5.0,
            prior: 1e-2,
            length: 0.2,
            limit: 0.0,
        },
        cost_mode: Default::default(),
        safety_margin: 0.3,
        joint_limits: None,
        constraints: None,
    }
}

pub fn pointmass_spec(nodes: usize) -> ProblemSpec {
    ProblemSpec {
        robot: RobotKind::PointMass,
        start: vec![0.0, 0.0],
        goal: vec![6.0, 6.0],
        ..unicycle_spec(nodes)
    }
}

/// Random trajectory near the straight line from start to goal, in view form.
fn random_view(r: &mut ChaCha8Rng, spec: &ProblemSpec) -> TrajectoryView {
    let (d, n) = (spec.dof_count(), spec.nodes);
    let mut v = TrajectoryView::zeros(d, n);
    for k in 0..d {
        for t in 0..n {
            let s = t as f64 / (n - 1) as f64;
            v.positions[k][t] = spec.start[k] + s * (spec.goal[k] - spec.start[k]) + r.gen_range(-1.0..1.0);
            v.velocities[k][t] = r.gen_range(-1.0..1.0);
        }
    }
    v
}

/// Largest relative error per analytic derivative against central finite
/// differences over `points` random evaluation points each.
pub fn gradient_suite(points: usize) -> Vec<(&'static str, f64)> {
    use steinplan::gp_prior::JointGpPrior;
    use steinplan::planners::{BaselineObjective, BaselinePriorSpec};
    use steinplan::problems::{
        joint_limit_penalty, obstacle_cost, path_length_cost, CostMode, PriorConfig, TargetProblem, TaskModel,
        ToyGaussian, TrajectoryProblem, VelocityMode,
    };
    use steinplan::stein::{trajectory_kernel, KernelBlock, TrajectoryKernelSpec};

    const H: f64 = 1e-6;
    let mut r = rng(2024);
    let mut out: Vec<(&'static str, f64)> = Vec::new();
    let mut worst = |name: &'static str, e: f64| match out.iter_mut().find(|(n, _)| *n == name) {
        Some(entry) => entry.1 = entry.1.max(e),
        None => out.push((name, e)),
    };
    let uni = unicycle_spec(12);
    let pm = pointmass_spec(12);
    let (dofs, nodes) = (uni.dof_count(), uni.nodes);
    let limits = [[-0.5, 4.0], [-0.5, 4.0], [-1.0, 1.0]];
    let problems = [
        TrajectoryProblem::new(uni.clone(), PriorConfig { lengthscale: 2.0, ..PriorConfig::default() }).unwrap(),
        TrajectoryProblem::new(pm.clone(), PriorConfig { lengthscale: 2.0, ..PriorConfig::default() }).unwrap(),
    ];
    let tasks = [
        TaskModel::new(uni.clone(), VelocityMode::Decision).unwrap(),
        TaskModel::new(uni.clone(), VelocityMode::FiniteDifference).unwrap(),
    ];
    let baselines = [
        BaselineObjective::new(uni.clone(), BaselinePriorSpec::chomp(100.0)).unwrap(),
        BaselineObjective::new(pm.clone(), BaselinePriorSpec::gpmp(30.0)).unwrap(),
    ];
    let toy = ToyGaussian::new([1.0, 0.5], [[13.0, 12.0], [12.0, 13.0]], [0.0, 0.0], [4.0, 2.0]).unwrap();
    let grid = TimeGrid::uniform(10.0, 12).unwrap();
    let joint: JointGpPrior = build_joint_prior(
        &matern(2.0).with_radius(grid.default_radius()),
        &grid,
        &BoundaryCondition::new(0.0, 1e-2, 2.0),
    )
    .unwrap();

    for p in 0..points {
        // kernel, gradient in its second argument
        let dim = 9;
        let blocks = vec![
            KernelBlock { offset: 0, metric: spd(&mut r, 4) * 0.1, bandwidth: r.gen_range(0.5..2.0) },
            KernelBlock { offset: 4, metric: spd(&mut r, 5) * 0.1, bandwidth: r.gen_range(0.5..2.0) },
        ];
        let kspec = TrajectoryKernelSpec::new(blocks, p % 2 == 0).unwrap();
        let xi = normal_vec(&mut r, dim, 1.0);
        let xj = &xi + normal_vec(&mut r, dim, 0.5);
        let (_, g) = trajectory_kernel(&xi, &xj, &kspec).unwrap();
        let fd = fd_gradient(|x| trajectory_kernel(&xi, x, &kspec).unwrap().0, &xj, H);
        worst("trajectory kernel", rel_err(&g, &fd));

        // view-space costs
        let view = random_view(&mut r, &uni);
        let x = view_to_vec(&view);
        for (name, mode) in [("obstacle cost (exp)", CostMode::Exp), ("obstacle cost (hinge)", CostMode::Hinge)] {
            let (_, g) = obstacle_cost(&view, &uni.scene, mode, 0.3);
            let fd = fd_gradient(|x| obstacle_cost(&vec_to_view(x, dofs, nodes), &uni.scene, mode, 0.3).0, &x, H);
            worst(name, rel_err(&view_to_vec(&g), &fd));
        }
        let (_, g) = path_length_cost(&view, 2);
        let fd = fd_gradient(|x| path_length_cost(&vec_to_view(x, dofs, nodes), 2).0, &x, H);
        worst("path length", rel_err(&view_to_vec(&g), &fd));
        let (_, g) = joint_limit_penalty(&view, &limits, 3.0);
        let fd = fd_gradient(|x| joint_limit_penalty(&vec_to_view(x, dofs, nodes), &limits, 3.0).0, &x, H);
        worst("joint limits", rel_err(&view_to_vec(&g), &fd));

        // task cost and constraint on both decision layouts
        for task in &tasks {
            let xi = task.layout().flatten(&random_view(&mut r, &uni));
            let (_, g) = task.cost(&xi).unwrap();
            let fd = fd_gradient(|x| task.cost(x).unwrap().0, &xi, H);
            worst("task cost", rel_err(&g, &fd));
            let c = task.constraints(&xi).unwrap();
            let fd = fd_jacobian(|x| task.constraints(x).unwrap().h, &xi, H);
            worst("nonholonomic constraint", rel_err_mat(&c.jac_h, &fd));
        }

        // prior quadratic form
        let xi = joint.mean() + normal_vec(&mut r, joint.dim(), 0.5);
        let (_, g) = joint.quadratic_form(&xi).unwrap();
        let fd = fd_gradient(|x| joint.quadratic_form(x).unwrap().0, &xi, H);
        worst("prior quadratic form", rel_err(&g, &fd));

        // posteriors
        for prob in &problems {
            let xi = prob.decision(&random_view(&mut r, prob.spec()));
            let (_, g) = prob.prior_term(&xi).unwrap();
            let fd = fd_gradient(|x| prob.prior_term(x).unwrap().0, &xi, H);
            worst("weighted prior term", rel_err(&g, &fd));
            let e = prob.evaluate(&xi).unwrap();
            let fd = fd_gradient(|x| prob.evaluate(x).unwrap().log_p, &xi, H);
            worst("trajectory posterior score", rel_err(&e.score, &fd));
        }
        let xi = normal_vec(&mut r, 2, 3.0);
        let e = toy.evaluate(&xi).unwrap();
        let fd = fd_gradient(|x| toy.evaluate(x).unwrap().log_p, &xi, H);
        worst("toy posterior score", rel_err(&e.score, &fd));
        let c = toy.constraints(&xi).unwrap();
        let fd = fd_jacobian(|x| toy.constraints(x).unwrap().h, &xi, H);
        worst("ellipse constraint", rel_err_mat(&c.jac_h, &fd));

        // baseline objectives
        for obj in &baselines {
            let xi = obj.task().layout().flatten(&random_view(&mut r, obj.task().spec()));
            let e = obj.evaluate(&xi).unwrap();
            let fd = fd_gradient(|x| obj.evaluate(x).unwrap().objective, &xi, H);
            worst("baseline objective", rel_err(&e.gradient, &fd));
        }
    }
    out
}
