//! Reference solvers that share the model code but none of the distributed solver.
//!
//! * [`dense_qp_solve`] solves a convexified inner problem through one dense KKT system.
//! * [`centralized_solve`] runs iLQR on the stacked state of all type-players.
//! * The `enumerated_*` functions evaluate expectations by summing over full joint type
//!   profiles instead of pairwise marginals.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix4, Vector2, Vector4};

use crate::admm::{IterationRecord, Termination, SolverParams};
use crate::costs::{convexify_coupling, convexify_ego, EgoQuadratic, GaussNewtonCoupling};
use crate::dynamics::{Control, LinearizedDynamics, State, Trajectory};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::game::{potential, GameSpec, JointModel, JointStrategy};

const SX: usize = 4;
const SU: usize = 2;

/// Convexified potential of a game around a nominal, assembled directly from the cost
/// models.
#[derive(Debug, Clone)]
pub struct ConvexProblem {
    pub horizon: usize,
    pub weights: Vec<f64>,
    pub ego: Vec<EgoQuadratic>,
    pub dynamics: Vec<LinearizedDynamics>,
    /// `(u, v, p(u, v), model)` for every coupled pair.
    pub couplings: Vec<(usize, usize, f64, GaussNewtonCoupling)>,
    /// Pre-branch state gaps `x_a - x_b` of the contingency agent's plan pairs.
    pub consensus: Vec<(usize, usize, Vec<Vector4<f64>>)>,
    pub consensus_weights: [f64; 4],
}

impl ConvexProblem {
    pub fn assemble(game: &GameSpec, x: &JointStrategy) -> Result<Self> {
        let n = game.num_vertices();
        let mut ego = Vec::with_capacity(n);
        let mut dynamics = Vec::with_capacity(n);
        for v in 0..n {
            let p = &game.players[v];
            let traj = x.get(v)?;
            ego.push(convexify_ego(traj, &p.reference, &p.weights)?);
            dynamics.push(game.model.linearize(traj)?);
        }
        let mut couplings = Vec::new();
        for (u, v) in game.coupled_pairs() {
            let gn = convexify_coupling(x.get(u)?, x.get(v)?, &game.footprint, &game.collision)?;
            couplings.push((u, v, game.prior.pair(u, v), gn));
        }
        let mut consensus = Vec::new();
        let mut consensus_weights = [0.0; 4];
        if let Some(c) = &game.contingency {
            consensus_weights = c.weights;
            let vs = game.vertices_of(c.agent.0);
            for a in vs.clone() {
                for b in a + 1..vs.end {
                    let gaps = (0..c.t_b)
                        .map(|t| x.trajectories[a].states[t].to_vector() - x.trajectories[b].states[t].to_vector())
                        .collect();
                    consensus.push((a, b, gaps));
                }
            }
        }
        Ok(ConvexProblem {
            horizon: game.horizon,
            weights: (0..n).map(|v| game.marginal(v)).collect(),
            ego,
            dynamics,
            couplings,
            consensus,
            consensus_weights,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.ego.len()
    }

    pub fn objective(&self, dx: &[Vec<Vector4<f64>>], du: &[Vec<Vector2<f64>>]) -> f64 {
        let mut total: f64 = (0..self.num_vertices())
            .map(|v| self.weights[v] * self.ego[v].value(&dx[v], &du[v]))
            .sum();
        for (u, v, p, gn) in &self.couplings {
            total += p * gn.value(&dx[*u], &dx[*v]);
        }
        for (a, b, gaps) in &self.consensus {
            for (t, g) in gaps.iter().enumerate() {
                let d = g + dx[*a][t] - dx[*b][t];
                let w: f64 = (0..4).map(|i| self.consensus_weights[i] * d[i] * d[i]).sum();
                total += 2.0 * w;
            }
        }
        total
    }

    /// Joint stage curvature and gradient over the stacked state at step `t`, in the
    /// `1/2 x'Hx + g'x` convention.
    fn stage_state(&self, t: usize) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.num_vertices();
        let mut h = DMatrix::zeros(SX * n, SX * n);
        let mut g = DVector::zeros(SX * n);
        for v in 0..n {
            let p = self.weights[v];
            let o = SX * v;
            let hv = p * self.ego[v].state_hessian();
            let gv = p * self.ego[v].state_gradient(t);
            add_block(&mut h, o, o, &hv);
            add_segment(&mut g, o, &gv);
        }
        for (u, v, p, gn) in &self.couplings {
            let s = &gn.steps[t];
            let (ra, rb, l) = (s.rows_a, s.rows_b, s.offset);
            let (ou, ov) = (SX * u, SX * v);
            add_block(&mut h, ou, ou, &(2.0 * p * ra.transpose() * ra));
            add_block(&mut h, ov, ov, &(2.0 * p * rb.transpose() * rb));
            let cross = 2.0 * p * ra.transpose() * rb;
            add_block(&mut h, ou, ov, &cross);
            add_block(&mut h, ov, ou, &cross.transpose());
            add_segment(&mut g, ou, &(2.0 * p * ra.transpose() * l));
            add_segment(&mut g, ov, &(2.0 * p * rb.transpose() * l));
        }
        let qc = Matrix4::from_diagonal(&Vector4::from(self.consensus_weights));
        for (a, b, gaps) in &self.consensus {
            if t >= gaps.len() {
                continue;
            }
            let (oa, ob) = (SX * a, SX * b);
            let w = 4.0 * qc;
            add_block(&mut h, oa, oa, &w);
            add_block(&mut h, ob, ob, &w);
            add_block(&mut h, oa, ob, &(-w));
            add_block(&mut h, ob, oa, &(-w));
            add_segment(&mut g, oa, &(w * gaps[t]));
            add_segment(&mut g, ob, &(-w * gaps[t]));
        }
        (h, g)
    }

    fn stage_control(&self, t: usize) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.num_vertices();
        let mut h = DMatrix::zeros(SU * n, SU * n);
        let mut g = DVector::zeros(SU * n);
        for v in 0..n {
            let p = self.weights[v];
            let o = SU * v;
            let hv = p * self.ego[v].control_hessian();
            let gv = p * self.ego[v].control_gradient(t);
            for i in 0..SU {
                for j in 0..SU {
                    h[(o + i, o + j)] += hv[(i, j)];
                }
                g[o + i] += gv[i];
            }
        }
        (h, g)
    }

    fn stacked_dynamics(&self, t: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.num_vertices();
        let mut a = DMatrix::zeros(SX * n, SX * n);
        let mut b = DMatrix::zeros(SX * n, SU * n);
        for v in 0..n {
            let (av, bv) = (&self.dynamics[v].a[t], &self.dynamics[v].b[t]);
            for i in 0..SX {
                for j in 0..SX {
                    a[(SX * v + i, SX * v + j)] = av[(i, j)];
                }
                for j in 0..SU {
                    b[(SX * v + i, SU * v + j)] = bv[(i, j)];
                }
            }
        }
        (a, b)
    }
}

fn add_block(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Matrix4<f64>) {
    for i in 0..SX {
        for j in 0..SX {
            m[(r + i, c + j)] += b[(i, j)];
        }
    }
}

fn add_segment(g: &mut DVector<f64>, o: usize, s: &Vector4<f64>) {
    for i in 0..SX {
        g[o + i] += s[i];
    }
}

/// Minimizer of a [`ConvexProblem`] from one dense KKT solve.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub dx: Vec<Vec<Vector4<f64>>>,
    pub du: Vec<Vec<Vector2<f64>>>,
    pub objective: f64,
    /// True when the KKT matrix had to be regularized.
    pub regularized: bool,
}

/// Variables per vertex: `du_0..du_{T-1}` then `dx_1..dx_T`.
pub fn dense_qp_solve(problem: &ConvexProblem) -> Result<DenseSolution> {
    let n = problem.num_vertices();
    let t_len = problem.horizon;
    let per = (SU + SX) * t_len;
    let nz = per * n;
    let neq = SX * t_len * n;
    let ui = |v: usize, t: usize| v * per + SU * t;
    let xi = |v: usize, t: usize| v * per + SU * t_len + SX * (t - 1);

    let mut kkt = DMatrix::<f64>::zeros(nz + neq, nz + neq);
    let mut rhs = DVector::<f64>::zeros(nz + neq);

    for t in 1..=t_len {
        let (h, g) = problem.stage_state(t);
        for va in 0..n {
            for i in 0..SX {
                rhs[xi(va, t) + i] -= g[SX * va + i];
                for vb in 0..n {
                    for j in 0..SX {
                        kkt[(xi(va, t) + i, xi(vb, t) + j)] += h[(SX * va + i, SX * vb + j)];
                    }
                }
            }
        }
    }
    for t in 0..t_len {
        let (h, g) = problem.stage_control(t);
        for v in 0..n {
            for i in 0..SU {
                rhs[ui(v, t) + i] -= g[SU * v + i];
                for j in 0..SU {
                    kkt[(ui(v, t) + i, ui(v, t) + j)] += h[(SU * v + i, SU * v + j)];
                }
            }
        }
    }
    // dx_{t+1} - A dx_t - B du_t = 0, with dx_0 = 0
    let mut row = nz;
    for v in 0..n {
        for t in 0..t_len {
            let a = &problem.dynamics[v].a[t];
            let b = &problem.dynamics[v].b[t];
            for i in 0..SX {
                let r = row + i;
                let mut put = |c: usize, val: f64| {
                    kkt[(r, c)] += val;
                    kkt[(c, r)] += val;
                };
                put(xi(v, t + 1) + i, 1.0);
                if t > 0 {
                    for j in 0..SX {
                        put(xi(v, t) + j, -a[(i, j)]);
                    }
                }
                for j in 0..SU {
                    put(ui(v, t) + j, -b[(i, j)]);
                }
            }
            row += SX;
        }
    }

    let mut regularized = false;
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|x| x.is_finite()) => s,
        _ => {
            regularized = true;
            for i in 0..nz {
                kkt[(i, i)] += 1e-9;
            }
            for i in nz..nz + neq {
                kkt[(i, i)] -= 1e-9;
            }
            kkt.lu().solve(&rhs).ok_or(Error::Singular)?
        }
    };

    let mut dx = vec![vec![Vector4::zeros(); t_len + 1]; n];
    let mut du = vec![vec![Vector2::zeros(); t_len]; n];
    for v in 0..n {
        for t in 0..t_len {
            du[v][t] = Vector2::new(sol[ui(v, t)], sol[ui(v, t) + 1]);
            dx[v][t + 1] = Vector4::from_fn(|i, _| sol[xi(v, t + 1) + i]);
        }
    }
    let objective = problem.objective(&dx, &du);
    Ok(DenseSolution {
        dx,
        du,
        objective,
        regularized,
    })
}

/// Output of [`centralized_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedOutput {
    pub strategy: JointStrategy,
    pub potential: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

struct JointPolicy {
    feedforward: Vec<DVector<f64>>,
    gain: Vec<DMatrix<f64>>,
}

fn joint_riccati(problem: &ConvexProblem) -> Result<JointPolicy> {
    let t_len = problem.horizon;
    let (mut vxx, mut vx) = problem.stage_state(t_len);
    let mut feedforward = vec![DVector::zeros(0); t_len];
    let mut gain = vec![DMatrix::zeros(0, 0); t_len];
    for t in (0..t_len).rev() {
        let (a, b) = problem.stacked_dynamics(t);
        let (hxx, gx) = problem.stage_state(t);
        let (huu, gu) = problem.stage_control(t);
        let bt_v = b.transpose() * &vxx;
        let quu = &huu + &bt_v * &b;
        let qux = &bt_v * &a;
        let qu = &gu + b.transpose() * &vx;
        let chol = quu.cholesky().ok_or(Error::NotPositiveDefinite(t))?;
        let k_gain = -chol.solve(&qux);
        let k_ff = -chol.solve(&qu);
        let next_v = &hxx + a.transpose() * &vxx * &a + qux.transpose() * &k_gain;
        vxx = 0.5 * (&next_v + next_v.transpose());
        vx = &gx + a.transpose() * &vx + qux.transpose() * &k_ff;
        feedforward[t] = k_ff;
        gain[t] = k_gain;
    }
    Ok(JointPolicy { feedforward, gain })
}

fn joint_rollout(game: &GameSpec, nominal: &JointStrategy, policy: &JointPolicy, alpha: f64) -> Result<JointStrategy> {
    let n = game.num_vertices();
    let t_len = game.horizon;
    let mut x: Vec<State> = nominal.trajectories.iter().map(|t| t.states[0]).collect();
    let mut out: Vec<Trajectory> = x
        .iter()
        .map(|s| Trajectory {
            states: vec![*s],
            controls: Vec::with_capacity(t_len),
        })
        .collect();
    for t in 0..t_len {
        let mut dev = DVector::zeros(SX * n);
        for v in 0..n {
            let d = x[v].to_vector() - nominal.trajectories[v].states[t].to_vector();
            for i in 0..SX {
                dev[SX * v + i] = d[i];
            }
        }
        let du = alpha * &policy.feedforward[t] + &policy.gain[t] * dev;
        for v in 0..n {
            let base = nominal.trajectories[v].controls[t];
            let u = game.limits.clamp(Control::new(base.steer + du[SU * v], base.accel + du[SU * v + 1]));
            x[v] = game.model.step(&x[v], &u).map_err(|_| Error::InfeasibleStep {
                step: t,
                v: x[v].v,
                steer: u.steer,
            })?;
            out[v].controls.push(u);
            out[v].states.push(x[v]);
        }
    }
    Ok(JointStrategy::new(out))
}

/// iLQR on the stacked system of all type-players, minimizing the same potential with
/// the same line search and stopping rule as the distributed solver.
pub fn centralized_solve<E: Executor>(
    game: &GameSpec,
    init: &JointStrategy,
    params: &SolverParams,
    clock: &E,
) -> Result<CentralizedOutput> {
    game.validate()?;
    params.validate()?;
    if init.trajectories.len() != game.num_vertices() {
        return Err(Error::LengthMismatch {
            what: "initial strategy",
            expected: game.num_vertices(),
            found: init.trajectories.len(),
        });
    }
    let started = clock.now_ms();
    let elapsed = || match (started, clock.now_ms()) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    let mut x = init.clone();
    let mut p = potential(game, &x)?;
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
    for it in 1..=params.max_iterations {
        iterations = it;
        let problem = ConvexProblem::assemble(game, &x)?;
        let policy = joint_riccati(&problem)?;
        let mut accepted = None;
        for &alpha in &params.line_search {
            let Ok(y) = joint_rollout(game, &x, &policy, alpha) else {
                continue;
            };
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
            kkt_residual: 0.0,
            consensus_residual: 0.0,
            admm_iterations: 0,
            wall_ms: elapsed(),
        };
        match accepted {
            Some((alpha, y, pn)) => {
                let decrease = p - pn;
                x = y;
                p = pn;
                stalls = 0;
                history.push(record(p, Some(alpha)));
                if decrease < params.tolerance {
                    termination = Termination::Converged;
                    break;
                }
            }
            None => {
                history.push(record(p, None));
                if policy.feedforward.iter().all(|k| k.amax() <= 1e-12) {
                    termination = Termination::Converged;
                    break;
                }
                stalls += 1;
                if stalls >= params.max_stall {
                    termination = Termination::Stalled;
                    break;
                }
            }
        }
    }
    Ok(CentralizedOutput {
        strategy: x,
        potential: p,
        termination,
        iterations,
        history,
    })
}

fn for_each_profile(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; sizes.len()];
    loop {
        f(&idx);
        let mut k = 0;
        loop {
            if k == sizes.len() {
                return;
            }
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn profile_sizes(game: &GameSpec) -> Result<Vec<usize>> {
    if matches!(game.prior.joint, JointModel::Table { .. }) {
        return Err(Error::InvalidPrior("a pairwise table does not define a full joint".into()));
    }
    Ok(game.prior.marginals.iter().map(Vec::len).collect())
}

/// `E[c_v + sum_{j != i} c_{v, t_j} | t_i = v]` by enumerating every rival type profile.
pub fn enumerated_expected_cost(game: &GameSpec, x: &JointStrategy, v: usize) -> Result<f64> {
    let sizes = profile_sizes(game)?;
    let (agent, k) = game.prior.locate(v);
    let own = game.ego_cost(x, v)?;
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut err = None;
    for_each_profile(&sizes, |types| {
        if types[agent] != k || err.is_some() {
            return;
        }
        let p = game.prior.full_joint(types).unwrap_or(0.0);
        if p == 0.0 {
            return;
        }
        let mut c = own;
        for (j, tj) in types.iter().enumerate() {
            if j == agent {
                continue;
            }
            let u = game.vertices_of(j).start + tj;
            match game.pair_cost(x, v, u) {
                Ok(pc) => c += pc,
                Err(e) => err = Some(e),
            }
        }
        total += p * c;
        mass += p;
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(total / mass)
}

/// `E_t[sum_i c_{t_i} + sum_{i<j} c_{t_i t_j}]` over full type profiles, plus any
/// contingency penalty.
pub fn enumerated_potential(game: &GameSpec, x: &JointStrategy) -> Result<f64> {
    let sizes = profile_sizes(game)?;
    let n = game.num_vertices();
    let ego: Vec<f64> = (0..n).map(|v| game.ego_cost(x, v)).collect::<Result<_>>()?;
    let mut pair = vec![0.0; n * n];
    for u in 0..n {
        for v in u + 1..n {
            if game.agent_of(u) != game.agent_of(v) {
                pair[u * n + v] = game.pair_cost(x, u, v)?;
            }
        }
    }
    let mut total = 0.0;
    for_each_profile(&sizes, |types| {
        let p = game.prior.full_joint(types).unwrap_or(0.0);
        if p == 0.0 {
            return;
        }
        let vs: Vec<usize> = types
            .iter()
            .enumerate()
            .map(|(i, k)| game.vertices_of(i).start + k)
            .collect();
        let mut c = 0.0;
        for (a, &u) in vs.iter().enumerate() {
            c += ego[u];
            for &v in &vs[a + 1..] {
                c += pair[u * n + v];
            }
        }
        total += p * c;
    });
    Ok(total + game.contingency_cost(x)?)
}
