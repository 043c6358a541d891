//! Randomized property suites shared by the test harness and the `verify` command.
//!
//! Every suite is seeded and deterministic.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::{convexify, initial_states, solve_inner, AdmmParams, InteractionGraph};
use crate::contingency::{build_contingency_game, contingency_identity_residual, ContingencyConfig, HypothesisSet, Perturbation};
use crate::costs::{circle_centers, collision_cost, convexify_coupling, CollisionSpec, Footprint, TrackingWeights};
use crate::dynamics::{BicycleModel, Control, ControlLimits, State, Trajectory};
use crate::error::Result;
use crate::exec::Executor;
use crate::game::{bayesian_potential, potential_identity_residual, AgentId, BeliefPrior, GameSpec, JointStrategy, TypePlayer};
use crate::oracle::{dense_qp_solve, ConvexProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest normalized error seen; passing requires `worst <= tolerance`.
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    fn new(name: &str, tolerance: f64) -> Self {
        SuiteReport {
            name: name.into(),
            cases: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, err: f64) {
        self.cases += 1;
        if !(err <= self.tolerance) {
            self.failures += 1;
        }
        if err.is_nan() || err > self.worst {
            self.worst = err;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn random_state(rng: &mut ChaCha8Rng, spread: f64) -> State {
    State::new(
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
        rng.random_range(-3.0..3.0),
        rng.random_range(0.0..4.0),
    )
}

fn random_weights(rng: &mut ChaCha8Rng) -> TrackingWeights {
    TrackingWeights::new(
        [0; 4].map(|_| rng.random_range(0.0..2.0)),
        [0; 2].map(|_| rng.random_range(0.1..2.0)),
    )
}

/// Arbitrary (not necessarily dynamically consistent) trajectory with states near the origin.
pub fn random_trajectory(rng: &mut ChaCha8Rng, horizon: usize, spread: f64) -> Trajectory {
    Trajectory {
        states: (0..=horizon).map(|_| random_state(rng, spread)).collect(),
        controls: (0..horizon)
            .map(|_| Control::new(rng.random_range(-0.5..0.5), rng.random_range(-2.0..2.0)))
            .collect(),
    }
}

fn random_base(rng: &mut ChaCha8Rng, agents: usize, horizon: usize) -> GameSpec {
    let b = rng.random_range(0.5..3.0);
    GameSpec {
        players: vec![],
        prior: BeliefPrior::independent(vec![vec![1.0]]).expect("trivial prior"),
        initial_states: (0..agents).map(|_| random_state(rng, 3.0)).collect(),
        horizon,
        model: BicycleModel::new(b, 0.1),
        footprint: Footprint::for_wheelbase(b),
        collision: CollisionSpec::new(rng.random_range(2.0..5.0), rng.random_range(0.5..2.0)),
        limits: ControlLimits::default(),
        contingency: None,
    }
}

fn random_player(rng: &mut ChaCha8Rng, agent: usize, k: usize, horizon: usize) -> TypePlayer {
    TypePlayer {
        agent: AgentId(agent),
        type_index: k,
        reference: (0..=horizon).map(|_| random_state(rng, 3.0)).collect(),
        weights: random_weights(rng),
        label: String::new(),
    }
}

/// Random Bayesian game with independent priors.
pub fn random_game(rng: &mut ChaCha8Rng, max_agents: usize, max_types: usize, max_horizon: usize) -> GameSpec {
    let agents = rng.random_range(1..=max_agents);
    let horizon = rng.random_range(1..=max_horizon);
    let mut g = random_base(rng, agents, horizon);
    let marginals: Vec<Vec<f64>> = (0..agents)
        .map(|_| {
            let k = rng.random_range(1..=max_types);
            random_simplex(rng, k)
        })
        .collect();
    for (i, m) in marginals.iter().enumerate() {
        for k in 0..m.len() {
            g.players.push(random_player(rng, i, k, horizon));
        }
    }
    g.prior = BeliefPrior::independent(marginals).expect("valid simplex");
    g
}

/// Random contingency game: 2 or 3 agents, agent 0 is the ego.
pub fn random_contingency_game(rng: &mut ChaCha8Rng, max_hypotheses: usize, max_horizon: usize) -> (GameSpec, InteractionGraph) {
    let agents = rng.random_range(2..=3);
    let horizon = rng.random_range(1..=max_horizon);
    let base = random_base(rng, agents, horizon);
    let n = rng.random_range(1..=max_hypotheses);
    let h = HypothesisSet {
        probabilities: random_simplex(rng, n),
        labels: vec![],
        types: (0..agents)
            .map(|i| (0..n).map(|k| random_player(rng, i, k, horizon)).collect())
            .collect(),
    };
    let cfg = ContingencyConfig {
        ego: AgentId(0),
        t_b: rng.random_range(0..=horizon),
        weights: [0; 4].map(|_| rng.random_range(0.0..100.0)),
    };
    build_contingency_game(&h, &cfg, &base).expect("valid contingency game")
}

pub fn random_strategy(rng: &mut ChaCha8Rng, g: &GameSpec) -> JointStrategy {
    JointStrategy::new((0..g.num_vertices()).map(|_| random_trajectory(rng, g.horizon, 3.0)).collect())
}

/// Potential identity `dP = p(v) dC_v` under random unilateral deviations.
pub fn potential_identity_suite(draws: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("potential identity", 1e-8);
    for _ in 0..draws {
        let g = random_game(&mut rng, 4, 3, 10);
        let x = random_strategy(&mut rng, &g);
        let v = rng.random_range(0..g.num_vertices());
        let alt = random_trajectory(&mut rng, g.horizon, 3.0);
        let y = x.with_replaced(v, alt.clone());
        let err = (|| -> Result<f64> {
            let dp = bayesian_potential(&g, &x)? - bayesian_potential(&g, &y)?;
            Ok(potential_identity_residual(&g, &x, v, &alt)? / (1.0 + dp.abs()))
        })()
        .unwrap_or(f64::INFINITY);
        report.record(err);
    }
    report
}

/// Contingency identity for ego-stack and single type-player deviations.
pub fn contingency_identity_suite(draws: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("contingency identity", 1e-8);
    for i in 0..draws {
        let (g, _) = random_contingency_game(&mut rng, 3, 10);
        let x = random_strategy(&mut rng, &g);
        let n = g.vertices_of(0).len();
        let pert = if i % 2 == 0 {
            Perturbation::EgoStack((0..n).map(|_| random_trajectory(&mut rng, g.horizon, 3.0)).collect())
        } else {
            let agent = rng.random_range(1..g.num_agents());
            Perturbation::Single {
                agent: AgentId(agent),
                hypothesis: rng.random_range(0..n),
                trajectory: random_trajectory(&mut rng, g.horizon, 3.0),
            }
        };
        let mut y = x.clone();
        match &pert {
            Perturbation::EgoStack(plans) => {
                for (v, p) in g.vertices_of(0).zip(plans) {
                    y.trajectories[v] = p.clone();
                }
            }
            Perturbation::Single {
                agent,
                hypothesis,
                trajectory,
            } => y.trajectories[g.vertices_of(agent.0).start + hypothesis] = trajectory.clone(),
        }
        let err = (|| -> Result<f64> {
            let dp = bayesian_potential(&g, &x)? - bayesian_potential(&g, &y)?;
            Ok(contingency_identity_residual(&g, &x, &pert)? / (1.0 + dp.abs()))
        })()
        .unwrap_or(f64::INFINITY);
        report.record(err);
    }
    report
}

/// Outcome of [`inner_exactness_suite`]; each part has its own tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerReport {
    pub objective: SuiteReport,
    pub lambda_sum: SuiteReport,
    pub consensus: SuiteReport,
    pub max_iterations_used: usize,
}

impl InnerReport {
    pub fn passed(&self) -> bool {
        self.objective.passed() && self.lambda_sum.passed() && self.consensus.passed()
    }
}

/// Feasible random game small enough for the dense KKT oracle.
fn random_inner_instance(rng: &mut ChaCha8Rng, contingency: bool) -> (GameSpec, InteractionGraph, JointStrategy) {
    let (g, graph) = if contingency {
        random_contingency_game(rng, 2, 5)
    } else {
        loop {
            let g = random_game(rng, 3, 2, 5);
            if g.num_vertices() <= 4 {
                let graph = InteractionGraph::from_game(&g);
                break (g, graph);
            }
        }
    };
    let x = JointStrategy::new(
        (0..g.num_vertices())
            .map(|v| {
                let controls: Vec<Control> = (0..g.horizon)
                    .map(|_| Control::new(rng.random_range(-0.3..0.3), rng.random_range(-1.0..1.0)))
                    .collect();
                g.model.rollout(g.initial_state(v), &controls).expect("small steering is feasible")
            })
            .collect(),
    );
    (g, graph, x)
}

/// Distributed inner solve vs dense KKT solve of the same convexified problem.
pub fn inner_exactness_suite<E: Executor>(cases: usize, seed: u64, exec: &E) -> InnerReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objective = SuiteReport::new("inner objective vs dense KKT", 1e-4);
    let mut lambda_sum = SuiteReport::new("multiplier balance", 1e-10);
    let mut consensus = SuiteReport::new("consensus residual", 1e-4);
    let mut max_iterations_used = 0;
    let params = AdmmParams::default();
    for i in 0..cases {
        let (g, graph, x) = random_inner_instance(&mut rng, i % 4 == 3);
        let run = (|| -> Result<(f64, f64, f64, usize)> {
            let problem = convexify(&g, &graph, &x, exec)?;
            let sol = solve_inner(
                &graph,
                &problem,
                initial_states(&graph, g.horizon),
                &params,
                1,
                200_000,
                Some(1e-9),
                exec,
            )?;
            let admm_obj = problem.objective(&graph, &sol.dx(), &sol.du());
            let dense = dense_qp_solve(&ConvexProblem::assemble(&g, &x)?)?;
            let rel = (admm_obj - dense.objective).abs() / (1.0 + dense.objective.abs());
            Ok((rel, sol.max_lambda_sum, sol.residuals.consensus, sol.iterations))
        })();
        match run {
            Ok((rel, lam, cons, its)) => {
                objective.record(rel);
                lambda_sum.record(lam);
                consensus.record(cons);
                max_iterations_used = max_iterations_used.max(its);
            }
            Err(_) => {
                objective.record(f64::INFINITY);
                lambda_sum.record(f64::INFINITY);
                consensus.record(f64::INFINITY);
            }
        }
    }
    InnerReport {
        objective,
        lambda_sum,
        consensus,
        max_iterations_used,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Analytic bicycle Jacobians vs central differences.
pub fn jacobian_suite(points: usize, seed: u64) -> SuiteReport {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("dynamics Jacobians vs finite differences", 1e-5);
    for _ in 0..points {
        let m = BicycleModel::new(rng.random_range(0.5..3.0), rng.random_range(0.05..0.2));
        let x = random_state(&mut rng, 10.0);
        let u = Control::new(rng.random_range(-0.6..0.6), rng.random_range(-2.0..2.0));
        let Ok((a, b)) = m.jacobians(&x, &u) else {
            report.record(f64::INFINITY);
            continue;
        };
        let mut worst: f64 = 0.0;
        for j in 0..4 {
            let mut hi = x.to_vector();
            let mut lo = x.to_vector();
            hi[j] += H;
            lo[j] -= H;
            let fd = (m.step(&State::from_vector(&hi), &u).map(|s| s.to_vector()).unwrap_or_default()
                - m.step(&State::from_vector(&lo), &u).map(|s| s.to_vector()).unwrap_or_default())
                / (2.0 * H);
            for i in 0..4 {
                worst = worst.max(rel_err(a[(i, j)], fd[i]));
            }
        }
        for j in 0..2 {
            let mut hi = u.to_vector();
            let mut lo = u.to_vector();
            hi[j] += H;
            lo[j] -= H;
            let fd = (m.step(&x, &Control::from_vector(&hi)).map(|s| s.to_vector()).unwrap_or_default()
                - m.step(&x, &Control::from_vector(&lo)).map(|s| s.to_vector()).unwrap_or_default())
                / (2.0 * H);
            for i in 0..4 {
                worst = worst.max(rel_err(b[(i, j)], fd[i]));
            }
        }
        report.record(worst);
    }
    report
}

fn margin_ok(a: &State, b: &State, fp: &Footprint, spec: &CollisionSpec) -> (bool, bool) {
    let (ca, cb) = (circle_centers(a, fp), circle_centers(b, fp));
    let mut violating = false;
    for p in &ca {
        for q in &cb {
            let d = crate::math::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]));
            if (d - spec.d_safe).abs() < 1e-3 || d < 1e-3 {
                return (false, false);
            }
            violating |= d < spec.d_safe;
        }
    }
    (true, violating)
}

/// Gauss-Newton coupling gradient at zero vs central differences of the collision cost,
/// over configurations with at least one violating circle pair.
pub fn coupling_gradient_suite(points: usize, seed: u64) -> SuiteReport {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("Gauss-Newton gradient vs finite differences", 1e-4);
    while report.cases < points {
        let b = rng.random_range(0.5..3.0);
        let fp = Footprint::for_wheelbase(b);
        let spec = CollisionSpec::new(rng.random_range(2.0..5.0), rng.random_range(0.5..2.0));
        let xa = random_state(&mut rng, 2.0);
        let xb = random_state(&mut rng, 2.0);
        let (smooth, violating) = margin_ok(&xa, &xb, &fp, &spec);
        if !smooth || !violating {
            continue;
        }
        let one = |x: State| Trajectory {
            states: vec![x],
            controls: vec![],
        };
        let gn = convexify_coupling(&one(xa), &one(xb), &fp, &spec).expect("equal horizons");
        let step = gn.steps[0];
        let grad_a: Vector4<f64> = 2.0 * step.rows_a.transpose() * step.offset;
        let grad_b: Vector4<f64> = 2.0 * step.rows_b.transpose() * step.offset;
        let cost = |a: State, b: State| collision_cost(&one(a), &one(b), &fp, &spec).expect("equal horizons");
        let mut worst: f64 = 0.0;
        for j in 0..4 {
            let shift = |x: &State, h: f64| {
                let mut v = x.to_vector();
                v[j] += h;
                State::from_vector(&v)
            };
            let fd_a = (cost(shift(&xa, H), xb) - cost(shift(&xa, -H), xb)) / (2.0 * H);
            let fd_b = (cost(xa, shift(&xb, H)) - cost(xa, shift(&xb, -H))) / (2.0 * H);
            worst = worst.max(rel_err(grad_a[j], fd_a)).max(rel_err(grad_b[j], fd_b));
        }
        report.record(worst);
    }
    report
}
