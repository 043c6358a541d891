//! Distributed solver: dual-consensus ADMM on the convexified game, wrapped in an
//! iterative convexify / solve / line-search loop.

mod graph;
mod vertex;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Vector2, Vector4};
use serde::{Deserialize, Serialize};

pub use graph::{convexify_edge, selector_apply, selector_scatter, Edge, EdgeKind, EdgeModel, InteractionGraph, EDGE_ROWS};
pub use vertex::{
    convexify_vertex, solve_lqr_subproblem, subproblem_objective, vertex_iteration, AdmmParams, AdmmVertexState,
    FeedbackPolicy, LqrFactor, SlotView, VertexModel, LOCK_PENALTY,
};

use crate::dynamics::{Control, State, Trajectory};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::game::{potential, GameSpec, JointStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub admm: AdmmParams,
    /// ADMM iterations per convexification.
    pub admm_iterations: usize,
    /// When set, ADMM runs until all residuals fall below this value (capped by
    /// `max_inner_iterations`) instead of the fixed count.
    pub inner_tolerance: Option<f64>,
    pub max_inner_iterations: usize,
    /// Converged once an accepted step lowers the potential by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Consecutive iterations without an accepted step before giving up.
    pub max_stall: usize,
    pub line_search: Vec<f64>,
    /// Keep ADMM variables across convexifications.
    pub warm_start: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            admm: AdmmParams::default(),
            admm_iterations: 3,
            inner_tolerance: None,
            max_inner_iterations: 10_000,
            tolerance: 0.1,
            max_iterations: 200,
            max_stall: 5,
            line_search: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            warm_start: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        self.admm.validate().map_err(|e| e.within("admm"))?;
        if self.admm_iterations == 0 {
            return Err(Error::config("admm_iterations", "must be >= 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("tolerance", "must be >= 0"));
        }
        if self.line_search.is_empty() || self.line_search.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::config("line_search", "step sizes must lie in (0, 1]"));
        }
        if self.max_stall == 0 {
            return Err(Error::config("max_stall", "must be >= 1"));
        }
        Ok(())
    }
}

/// All vertex and edge models of one convexification.
#[derive(Debug, Clone, PartialEq)]
pub struct Convexified {
    pub vertices: Vec<VertexModel>,
    pub edges: Vec<EdgeModel>,
}

impl Convexified {
    pub fn slots<'a>(&'a self, graph: &InteractionGraph, v: usize) -> Vec<SlotView<'a>> {
        graph
            .adjacent(v)
            .iter()
            .map(|&e| {
                let side = graph.edges[e].endpoint(v).expect("adjacent edge");
                SlotView {
                    coeff: &self.edges[e].coeff[side],
                    offset: &self.edges[e].offset,
                }
            })
            .collect()
    }

    /// Convexified potential at perturbation `(dx, du)` (indexed by vertex).
    pub fn objective(&self, graph: &InteractionGraph, dx: &[Vec<Vector4<f64>>], du: &[Vec<Vector2<f64>>]) -> f64 {
        let own: f64 = self.vertices.iter().enumerate().map(|(v, m)| m.value(&dx[v], &du[v])).sum();
        let coupled: f64 = graph
            .edges
            .iter()
            .zip(&self.edges)
            .map(|(e, m)| m.value(&dx[e.a], &dx[e.b]))
            .sum();
        own + coupled
    }
}

pub fn convexify<E: Executor>(
    game: &GameSpec,
    graph: &InteractionGraph,
    x: &JointStrategy,
    exec: &E,
) -> Result<Convexified> {
    let vertices = exec
        .map(game.num_vertices(), |v| convexify_vertex(game, x, v))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let edges = exec
        .map(graph.edges.len(), |e| convexify_edge(game, &graph.edges[e], x))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Convexified { vertices, edges })
}

/// One bulk-synchronous ADMM round: every vertex reads the `y` snapshot of its
/// neighbors, then all vertices update independently.
pub fn admm_round<E: Executor>(
    graph: &InteractionGraph,
    problem: &Convexified,
    states: &[AdmmVertexState],
    params: &AdmmParams,
    exec: &E,
) -> Result<Vec<AdmmVertexState>> {
    exec.map(states.len(), |v| {
        let st = &states[v];
        let slots = problem.slots(graph, v);
        let mut messages = Vec::with_capacity(st.edges.len());
        for &e in &st.edges {
            let u = graph.edges[e].other(v);
            let k = graph.slot(u, e)?;
            messages.push(states[u].message(k));
        }
        vertex_iteration(st, &problem.vertices[v], &slots, &messages, params)
    })
    .into_iter()
    .collect()
}

/// Optimality diagnostics of the convexified problem at the current ADMM iterate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// Largest reduced-gradient entry of any vertex Lagrangian.
    pub stationarity: f64,
    /// Largest `|sum_v Q_{v,e} dX_v - w_e|` entry.
    pub primal: f64,
    /// Largest `|E_{v,e} y_v - E_{v',e} y_v'|` entry.
    pub consensus: f64,
    /// Largest `|y_v - z_v|` entry.
    pub dual: f64,
    /// Largest `|sum_{v in e} lambda_{v,e}|` entry.
    pub lambda_sum: f64,
}

impl Residuals {
    pub fn max_kkt(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.consensus).max(self.dual)
    }
}

fn vertex_stationarity(model: &VertexModel, slots: &[SlotView], st: &AdmmVertexState) -> f64 {
    let n = model.horizon();
    let gx = |t: usize| {
        let mut g = model.weight * model.ego.state_hessian() * (model.ego.state_err[t] + st.dx[t]);
        for (s, y) in slots.iter().zip(&st.y) {
            if let Some(c) = s.coeff.get(t) {
                g += c.transpose() * y[t];
            }
        }
        g
    };
    let mut adj = gx(n);
    let mut worst: f64 = 0.0;
    for t in (0..n).rev() {
        let mut gu = model.weight * model.ego.control_hessian() * (model.ego.controls[t] + st.du[t])
            + model.dynamics.b[t].transpose() * adj;
        if let Some(l) = model.locked.get(t) {
            for i in 0..2 {
                if l[i] {
                    gu[i] += LOCK_PENALTY * st.du[t][i];
                }
            }
        }
        worst = worst.max(gu.amax());
        adj = gx(t) + model.dynamics.a[t].transpose() * adj;
    }
    worst
}

pub fn residuals(graph: &InteractionGraph, problem: &Convexified, states: &[AdmmVertexState]) -> Residuals {
    let mut out = Residuals::default();
    for (v, st) in states.iter().enumerate() {
        let slots = problem.slots(graph, v);
        out.stationarity = out.stationarity.max(vertex_stationarity(&problem.vertices[v], &slots, st));
        for k in 0..st.edges.len() {
            for (y, z) in st.y[k].iter().zip(&st.z[k]) {
                out.dual = out.dual.max((y - z).amax());
            }
        }
    }
    for (id, (e, m)) in graph.edges.iter().zip(&problem.edges).enumerate() {
        let (sa, sb) = (&states[e.a], &states[e.b]);
        let ka = graph.slot(e.a, id).expect("adjacent");
        let kb = graph.slot(e.b, id).expect("adjacent");
        for t in 0..m.offset.len() {
            let w = sa.s[ka][t] + sb.s[kb][t];
            let lhs = m.coeff[0][t] * sa.dx[t] + m.coeff[1][t] * sb.dx[t];
            out.primal = out.primal.max((lhs - w).amax());
            out.consensus = out.consensus.max((sa.y[ka][t] - sb.y[kb][t]).amax());
            out.lambda_sum = out.lambda_sum.max((sa.lambda[ka][t] + sb.lambda[kb][t]).amax());
        }
    }
    out
}

/// Result of running ADMM on one fixed convexification.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub states: Vec<AdmmVertexState>,
    pub iterations: usize,
    pub residuals: Residuals,
    /// Largest multiplier-sum violation seen over all iterations.
    pub max_lambda_sum: f64,
}

impl InnerSolution {
    pub fn dx(&self) -> Vec<Vec<Vector4<f64>>> {
        self.states.iter().map(|s| s.dx.clone()).collect()
    }

    pub fn du(&self) -> Vec<Vec<Vector2<f64>>> {
        self.states.iter().map(|s| s.du.clone()).collect()
    }
}

/// Runs ADMM from `states` until every KKT residual is below `tol` or `max_iter` rounds.
pub fn solve_inner<E: Executor>(
    graph: &InteractionGraph,
    problem: &Convexified,
    mut states: Vec<AdmmVertexState>,
    params: &AdmmParams,
    min_iter: usize,
    max_iter: usize,
    tol: Option<f64>,
    exec: &E,
) -> Result<InnerSolution> {
    let mut max_lambda_sum: f64 = 0.0;
    let mut res = Residuals::default();
    let mut it = 0;
    while it < max_iter {
        states = admm_round(graph, problem, &states, params, exec)?;
        it += 1;
        res = residuals(graph, problem, &states);
        max_lambda_sum = max_lambda_sum.max(res.lambda_sum);
        if it >= min_iter && tol.is_none_or(|t| res.max_kkt() <= t) {
            break;
        }
    }
    Ok(InnerSolution {
        states,
        iterations: it,
        residuals: res,
        max_lambda_sum,
    })
}

/// Fresh ADMM state for every vertex.
pub fn initial_states(graph: &InteractionGraph, horizon: usize) -> Vec<AdmmVertexState> {
    (0..graph.num_vertices)
        .map(|v| AdmmVertexState::new(graph, v, horizon))
        .collect()
}

/// Rolls out `u = u_nom + alpha k + K (x - x_nom)` from the nominal initial state.
pub fn line_search_update(
    game: &GameSpec,
    nominal: &Trajectory,
    policy: &FeedbackPolicy,
    alpha: f64,
) -> Result<Trajectory> {
    let n = nominal.horizon();
    if policy.feedforward.len() != n || policy.gain.len() != n {
        return Err(Error::LengthMismatch {
            what: "feedback policy",
            expected: n,
            found: policy.feedforward.len(),
        });
    }
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    let mut x = nominal.states[0];
    states.push(x);
    for t in 0..n {
        let dev = x.to_vector() - nominal.states[t].to_vector();
        let u = nominal.controls[t].to_vector() + alpha * policy.feedforward[t] + policy.gain[t] * dev;
        let u = game.limits.clamp(Control::from_vector(&u));
        x = game.model.step(&x, &u).map_err(|_| Error::InfeasibleStep {
            step: t,
            v: x.v,
            steer: u.steer,
        })?;
        controls.push(u);
        states.push(x);
    }
    Ok(Trajectory { states, controls })
}

/// Zero-control rollout of every type-player.
pub fn zero_control_init(game: &GameSpec) -> Result<JointStrategy> {
    (0..game.num_vertices())
        .map(|v| {
            game.model
                .rollout(game.initial_state(v), &vec![Control::default(); game.horizon])
        })
        .collect::<Result<Vec<_>>>()
        .map(JointStrategy::new)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Stalled,
    MaxIterations,
}

/// One diagnostics record per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub potential: f64,
    /// Accepted step size; `None` when no step was accepted.
    pub alpha: Option<f64>,
    pub kkt_residual: f64,
    pub consensus_residual: f64,
    pub admm_iterations: usize,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub strategy: JointStrategy,
    pub potential: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub policies: Vec<FeedbackPolicy>,
}

fn check_strategy(game: &GameSpec, x: &JointStrategy) -> Result<()> {
    if x.trajectories.len() != game.num_vertices() {
        return Err(Error::LengthMismatch {
            what: "initial strategy",
            expected: game.num_vertices(),
            found: x.trajectories.len(),
        });
    }
    for t in &x.trajectories {
        if t.horizon() != game.horizon || t.states.len() != game.horizon + 1 {
            return Err(Error::LengthMismatch {
                what: "initial trajectory horizon",
                expected: game.horizon,
                found: t.horizon(),
            });
        }
    }
    Ok(())
}

/// Locks every control component that sits on its limit while the last step pushed it
/// further out, so the next inner solve optimizes the free components only. Returns
/// whether any new lock was added.
fn lock_saturated(game: &GameSpec, x: &JointStrategy, problem: &mut Convexified, states: &[AdmmVertexState]) -> bool {
    let bounds = game.limits.bounds();
    let mut changed = false;
    for (v, model) in problem.vertices.iter_mut().enumerate() {
        let n = model.horizon();
        for t in 0..n {
            let u = x.trajectories[v].controls[t].to_vector();
            let du = states[v].du[t];
            for i in 0..2 {
                let saturated = u[i].abs() >= bounds[i] - 1e-9;
                if saturated && du[i] * u[i] > 0.0 {
                    if model.locked.is_empty() {
                        model.locked = vec![[false; 2]; n];
                    }
                    if !model.locked[t][i] {
                        model.locked[t][i] = true;
                        changed = true;
                    }
                }
            }
        }
    }
    changed
}

/// Iterated convexify / ADMM / line search until the potential stops decreasing.
pub fn solve<E: Executor>(
    game: &GameSpec,
    graph: &InteractionGraph,
    init: &JointStrategy,
    params: &SolverParams,
    exec: &E,
) -> Result<SolveOutput> {
    game.validate()?;
    graph.validate_against(game)?;
    params.validate()?;
    check_strategy(game, init)?;

    let started = exec.now_ms();
    let elapsed = || match (started, exec.now_ms()) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };

    let mut x = init.clone();
    let mut p = potential(game, &x)?;
    let mut states = initial_states(graph, game.horizon);
    let mut history = vec![IterationRecord {
        iteration: 0,
        potential: p,
        alpha: None,
        kkt_residual: 0.0,
        consensus_residual: 0.0,
        admm_iterations: 0,
        wall_ms: elapsed(),
    }];
    let mut termination = Termination::MaxIterations;
    let mut stalls = 0;
    let mut iterations = 0;

    // Inner iterations per outer step; doubled after every rejected step, since the
    // nominal is unchanged and only a more accurate inner solve can produce descent.
    let mut budget = params.admm_iterations;
    let mut problem = None;
    for it in 1..=params.max_iterations {
        iterations = it;
        if problem.is_none() {
            problem = Some(convexify(game, graph, &x, exec)?);
            for st in states.iter_mut() {
                st.lqr = None;
                if !params.warm_start {
                    st.reset_duals();
                }
            }
        }
        let problem_ref = problem.as_ref().expect("convexified above");
        let (min_iter, max_iter) = match params.inner_tolerance {
            Some(_) => (budget, params.max_inner_iterations.max(budget)),
            None => (budget, budget),
        };
        let inner = solve_inner(
            graph,
            problem_ref,
            states,
            &params.admm,
            min_iter,
            max_iter,
            params.inner_tolerance,
            exec,
        )?;
        let res = inner.residuals;
        let admm_iterations = inner.iterations;
        states = inner.states;

        let mut accepted = None;
        for &alpha in &params.line_search {
            let candidate: Result<Vec<Trajectory>> = exec
                .map(game.num_vertices(), |v| {
                    line_search_update(game, &x.trajectories[v], &states[v].policy, alpha)
                })
                .into_iter()
                .collect();
            let Ok(trajs) = candidate else { continue };
            let y = JointStrategy::new(trajs);
            let pn = potential(game, &y)?;
            if pn.is_finite() && pn < p {
                accepted = Some((alpha, y, pn));
                break;
            }
        }

        let record = |potential: f64, alpha: Option<f64>| IterationRecord {
            iteration: it,
            potential,
            alpha,
            kkt_residual: res.max_kkt(),
            consensus_residual: res.consensus,
            admm_iterations,
            wall_ms: elapsed(),
        };
        match accepted {
            Some((alpha, y, pn)) => {
                let decrease = p - pn;
                x = y;
                p = pn;
                stalls = 0;
                budget = params.admm_iterations;
                problem = None;
                history.push(record(p, Some(alpha)));
                if decrease < params.tolerance {
                    termination = Termination::Converged;
                    break;
                }
            }
            None => {
                history.push(record(p, None));
                let null_step = states
                    .iter()
                    .all(|s| s.policy.feedforward.iter().all(|k| k.amax() <= 1e-12));
                if null_step {
                    termination = Termination::Converged;
                    break;
                }
                stalls += 1;
                budget = (budget * 2).min(params.max_inner_iterations.max(params.admm_iterations));
                if let Some(pr) = problem.as_mut() {
                    if lock_saturated(game, &x, pr, &states) {
                        states.iter_mut().for_each(|st| st.lqr = None);
                    }
                }
                if stalls >= params.max_stall {
                    termination = Termination::Stalled;
                    break;
                }
            }
        }
    }

    Ok(SolveOutput {
        strategy: x,
        potential: p,
        termination,
        iterations,
        history,
        policies: states.into_iter().map(|s| s.policy).collect(),
    })
}

/// Shifts a plan one step forward, repeating the last control, and re-rolls it from `x0`.
pub fn shift_plan(game: &GameSpec, plan: &Trajectory, x0: State) -> Result<Trajectory> {
    let mut controls: Vec<Control> = plan.controls.iter().skip(1).copied().collect();
    controls.push(plan.controls.last().copied().unwrap_or_default());
    controls.truncate(game.horizon);
    while controls.len() < game.horizon {
        controls.push(Control::default());
    }
    game.model.rollout(x0, &controls)
}

#[cfg(test)]
mod tests;
