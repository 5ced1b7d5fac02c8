//! Damped Gauss-Newton refinement over the decision vector `[s_1..s_T, d_1..d_T]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{
    assemble_residuals, safety_term, CostContext, CostError, CostTerm, InitialState, Trajectory,
};
use crate::frenet::{CartesianPoint, FrenetError, ReferenceRoute};

/// Damping used when the undamped normal matrix cannot be factorized.
const MIN_DAMPING: f64 = 1e-10;
/// Give up once the damping grows past this without finding a descent step.
const MAX_DAMPING: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid initialization: {0}")]
    InvalidInitialization(String),
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Frenet(#[from] FrenetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    /// Stop when the step norm (meters) falls below this.
    pub step_tolerance: f64,
    /// Starting Levenberg damping; zero makes the first attempt a plain Gauss-Newton step.
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Clamp every `s_t` into `[0, route length]` after each step.
    pub clamp_to_route: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            cost_tolerance: 1e-6,
            step_tolerance: 1e-8,
            initial_damping: 1e-4,
            damping_up: 10.0,
            damping_down: 0.5,
            clamp_to_route: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |what: &str| Err(SolveError::InvalidConfig(what.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.cost_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.initial_damping.is_finite() && self.initial_damping >= 0.0) {
            return bad("initial_damping must be a nonnegative number");
        }
        if !(self.damping_up > 1.0) {
            return bad("damping_up must exceed 1");
        }
        if !(self.damping_down > 0.0 && self.damping_down < 1.0) {
            return bad("damping_down must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ZeroCost,
    CostTolerance,
    StepTolerance,
    MaxIterations,
    DampingSaturated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_trace: Vec<f64>,
    pub termination: Termination,
}

/// One stage-1 plan: world-frame points at the plan rate and its mode probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub probability: f64,
    pub points: Vec<CartesianPoint>,
}

/// Index of the most probable candidate; ties go to the lowest index.
pub fn top_candidate(candidates: &[Candidate]) -> Result<usize, SolveError> {
    if candidates.is_empty() {
        return Err(SolveError::InvalidInput("no candidate plans".into()));
    }
    if let Some(k) = candidates.iter().position(|c| !c.probability.is_finite()) {
        return Err(SolveError::InvalidInput(format!(
            "candidate {k} has a non-finite probability"
        )));
    }
    let mut best = 0;
    for (k, c) in candidates.iter().enumerate().skip(1) {
        if c.probability > candidates[best].probability {
            best = k;
        }
    }
    Ok(best)
}

/// Pick the top-scoring candidate and express it in the route frame.
pub fn select_initial(
    candidates: &[Candidate],
    route: &ReferenceRoute,
    dt: f64,
    initial: InitialState,
) -> Result<(usize, Trajectory), SolveError> {
    let k = top_candidate(candidates)?;
    let points = candidates[k]
        .points
        .iter()
        .map(|p| route.to_frenet(*p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((k, Trajectory::from_points(&points, dt, initial)?))
}

/// Backward-difference operator `(x_k - x_{k-1}) / dt` raised to `order`.
fn difference_operator(n: usize, dt: f64, order: u32) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    for k in 0..n {
        d[(k, k)] = 1.0 / dt;
        if k > 0 {
            d[(k, k - 1)] = -1.0 / dt;
        }
    }
    let mut out = DMatrix::identity(n, n);
    for _ in 0..order {
        out = &d * out;
    }
    out
}

/// Analytic Jacobian of the stacked residuals with respect to `[s, d]`.
///
/// Rows follow [`CostTerm::ALL`], `T` rows per block.
pub fn jacobian(traj: &Trajectory, ctx: &CostContext) -> DMatrix<f64> {
    let n = traj.len();
    let w = &ctx.model.weights;
    let mut jac = DMatrix::zeros(CostTerm::ALL.len() * n, 2 * n);
    let row = |term: CostTerm| term.index() * n;

    let d1 = difference_operator(n, traj.dt(), 1);
    let d2 = &d1 * &d1;
    let d3 = &d2 * &d1;

    jac.view_mut((row(CostTerm::Progress), 0), (n, n))
        .copy_from(&(&d1 * w.progress));
    jac.view_mut((row(CostTerm::ComfortSAcc), 0), (n, n))
        .copy_from(&(&d2 * w.comfort_s_acc));
    jac.view_mut((row(CostTerm::ComfortDAcc), n), (n, n))
        .copy_from(&(&d2 * w.comfort_d_acc));
    jac.view_mut((row(CostTerm::ComfortSJerk), 0), (n, n))
        .copy_from(&(&d3 * w.comfort_s_jerk));

    let red = ctx.model.active_red();
    for k in 0..n {
        jac[(row(CostTerm::Route) + k, n + k)] = w.route;
        let s = traj.s()[k];
        if red.is_some_and(|s_red| s > s_red) {
            jac[(row(CostTerm::TrafficLight) + k, k)] = w.traffic_light;
        }
        let frame = ctx.field.frame_for_time(traj.time_of(k));
        let (_, slope) = safety_term(s, frame, &ctx.field, &ctx.safe, &ctx.model);
        jac[(row(CostTerm::Safety) + k, k)] = w.safety * slope;
    }
    jac
}

/// Step `delta` minimizing `||J delta + r||^2 + damping * ||delta||^2`, i.e. the
/// solution of `(J^T J + damping I) delta = -J^T r`.
///
/// Solved by QR of the stacked system `[J; sqrt(damping) I]`, which avoids
/// squaring the condition number of `J`. `None` when the system is singular.
pub fn gauss_newton_step(
    jac: &DMatrix<f64>,
    r: &DVector<f64>,
    damping: f64,
) -> Option<DVector<f64>> {
    let (m, n) = jac.shape();
    let mut stacked = DMatrix::zeros(m + n, n);
    stacked.view_mut((0, 0), (m, n)).copy_from(jac);
    let root = damping.max(0.0).sqrt();
    for i in 0..n {
        stacked[(m + i, i)] = root;
    }
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(&(-r));

    let qr = stacked.qr();
    let upper = qr.r();
    let scale = upper
        .diagonal()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(scale > 0.0) || upper.diagonal().iter().any(|v| v.abs() <= 1e-12 * scale) {
        return None;
    }
    let qt_rhs = qr.q().tr_mul(&rhs);
    upper.solve_upper_triangular(&qt_rhs)
}

fn clamp_s(x: &mut [f64], n: usize, bounds: Option<(f64, f64)>) {
    if let Some((lo, hi)) = bounds {
        for s in &mut x[..n] {
            *s = s.clamp(lo, hi);
        }
    }
}

/// Refine `initial` by damped Gauss-Newton. `s_bounds` is the admissible arc-length
/// range used when `config.clamp_to_route` is set.
///
/// Steps that raise the cost are rejected and the damping is increased, so the
/// returned trajectory is the best one seen.
pub fn solve(
    initial: &Trajectory,
    ctx: &CostContext,
    config: &SolverConfig,
    s_bounds: Option<(f64, f64)>,
) -> Result<(Trajectory, SolveReport), SolveError> {
    config.validate()?;
    let n = initial.len();
    let bounds = s_bounds.filter(|_| config.clamp_to_route);

    let mut x = initial.to_vector();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::InvalidInitialization(
            "initial trajectory has non-finite states".into(),
        ));
    }
    clamp_s(&mut x, n, bounds);
    let mut traj = initial.with_vector(&x);
    let mut residuals = assemble_residuals(&traj, ctx);
    if !residuals.is_finite() {
        return Err(SolveError::InvalidInitialization(
            "residuals are not finite at the initial trajectory".into(),
        ));
    }
    let mut cost = residuals.total_cost();
    let initial_cost = cost;
    let mut trace = vec![cost];
    let mut damping = config.initial_damping;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        if cost == 0.0 {
            termination = Termination::ZeroCost;
            break;
        }
        iterations += 1;

        let jac = jacobian(&traj, ctx);
        let r = DVector::from_vec(residuals.flatten());

        let step = loop {
            if let Some(step) = gauss_newton_step(&jac, &r, damping) {
                break Some(step);
            }
            damping = (damping * config.damping_up).max(MIN_DAMPING);
            if damping > MAX_DAMPING {
                break None;
            }
        };
        let Some(step) = step else {
            termination = Termination::DampingSaturated;
            break;
        };

        let mut candidate: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        clamp_s(&mut candidate, n, bounds);
        let step_norm = candidate
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let next = initial.with_vector(&candidate);
        let next_residuals = assemble_residuals(&next, ctx);
        let next_cost = next_residuals.total_cost();

        if next_residuals.is_finite() && next_cost <= cost {
            let decrease = (cost - next_cost) / cost;
            x = candidate;
            traj = next;
            residuals = next_residuals;
            cost = next_cost;
            trace.push(cost);
            damping *= config.damping_down;
            if decrease < config.cost_tolerance {
                termination = Termination::CostTolerance;
                break;
            }
            if step_norm < config.step_tolerance {
                termination = Termination::StepTolerance;
                break;
            }
        } else {
            if step_norm < config.step_tolerance {
                termination = Termination::StepTolerance;
                break;
            }
            damping = (damping * config.damping_up).max(MIN_DAMPING);
            if damping > MAX_DAMPING {
                termination = Termination::DampingSaturated;
                break;
            }
        }
    }

    let report = SolveReport {
        converged: !matches!(
            termination,
            Termination::MaxIterations | Termination::DampingSaturated
        ),
        iterations,
        initial_cost,
        final_cost: cost,
        cost_trace: trace,
        termination,
    };
    Ok((traj, report))
}
