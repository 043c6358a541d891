use super::*;
use crate::costs::{CollisionSpec, Footprint, TrackingWeights};
use crate::dynamics::{BicycleModel, ControlLimits};
use crate::exec::Sequential;
use crate::game::{AgentId, BeliefPrior, TypePlayer};
use alloc::string::String;

fn lane(y: f64, x0: f64, v: f64, dt: f64, t: usize) -> Vec<State> {
    (0..=t).map(|k| State::new(x0 + v * dt * k as f64, y, 0.0, v)).collect()
}

/// Two agents on nearby lanes; agent 1 has two speed hypotheses.
fn two_agent_game(t: usize) -> GameSpec {
    let dt = 0.1;
    let prior = BeliefPrior::independent(vec![vec![1.0], vec![0.6, 0.4]]).unwrap();
    let w = TrackingWeights::new([0.0, 1.0, 0.0, 2.0], [10.0, 0.1]);
    let refs = [lane(0.0, 0.0, 3.0, dt, t), lane(1.0, 0.5, 3.5, dt, t), lane(1.0, 0.5, 2.5, dt, t)];
    let players = refs
        .into_iter()
        .enumerate()
        .map(|(v, reference)| TypePlayer {
            agent: AgentId(if v == 0 { 0 } else { 1 }),
            type_index: v.saturating_sub(1),
            reference,
            weights: w,
            label: String::new(),
        })
        .collect();
    GameSpec {
        players,
        prior,
        initial_states: vec![State::new(0.0, 0.0, 0.0, 3.0), State::new(0.5, 1.0, 0.0, 3.0)],
        horizon: t,
        model: BicycleModel::new(2.5, dt),
        footprint: Footprint::for_wheelbase(2.5),
        collision: CollisionSpec::new(4.5, 1.4),
        limits: ControlLimits::default(),
        contingency: None,
    }
}

#[test]
fn graph_from_game_links_cross_agent_types() {
    let g = two_agent_game(5);
    let graph = InteractionGraph::from_game(&g);
    assert_eq!(graph.edges.len(), 2);
    assert_eq!(graph.degree(0), 2);
    assert_eq!(graph.degree(1), 1);
    graph.validate_against(&g).unwrap();
}

#[test]
fn convexified_objective_matches_potential_at_zero() {
    let g = two_agent_game(10);
    let graph = InteractionGraph::from_game(&g);
    let x = zero_control_init(&g).unwrap();
    let c = convexify(&g, &graph, &x, &Sequential::new()).unwrap();
    let dx = vec![vec![Vector4::zeros(); 11]; 3];
    let du = vec![vec![Vector2::zeros(); 10]; 3];
    let p = potential(&g, &x).unwrap();
    assert!((c.objective(&graph, &dx, &du) - p).abs() <= 1e-9 * p);
}

#[test]
fn inner_admm_converges_with_exact_multiplier_balance() {
    let g = two_agent_game(8);
    let graph = InteractionGraph::from_game(&g);
    let x = zero_control_init(&g).unwrap();
    let exec = Sequential::new();
    let c = convexify(&g, &graph, &x, &exec).unwrap();
    let sol = solve_inner(
        &graph,
        &c,
        initial_states(&graph, 8),
        &AdmmParams::default(),
        1,
        20_000,
        Some(1e-8),
        &exec,
    )
    .unwrap();
    assert!(sol.residuals.max_kkt() <= 1e-8, "{:?} after {}", sol.residuals, sol.iterations);
    assert_eq!(sol.max_lambda_sum, 0.0);
}

#[test]
fn zero_step_reproduces_nominal() {
    let g = two_agent_game(6);
    let x = zero_control_init(&g).unwrap();
    let mut pol = FeedbackPolicy::zeros(6);
    pol.gain.iter_mut().for_each(|k| *k = nalgebra::Matrix2x4::from_element(0.3));
    let t = line_search_update(&g, &x.trajectories[0], &pol, 1.0).unwrap();
    assert_eq!(t, x.trajectories[0]);
    pol.feedforward.iter_mut().for_each(|k| *k = Vector2::new(0.1, 1.0));
    let t = line_search_update(&g, &x.trajectories[0], &pol, 0.0).unwrap();
    assert_eq!(t, x.trajectories[0]);
}

#[test]
fn single_agent_iteration_decreases_potential() {
    let mut g = two_agent_game(10);
    g.players.truncate(1);
    g.prior = BeliefPrior::independent(vec![vec![1.0]]).unwrap();
    g.initial_states.truncate(1);
    g.initial_states[0] = State::new(0.0, 1.0, 0.0, 2.0);
    let graph = InteractionGraph::from_game(&g);
    let x = zero_control_init(&g).unwrap();
    let p0 = potential(&g, &x).unwrap();
    let params = SolverParams {
        max_iterations: 1,
        ..SolverParams::default()
    };
    let out = solve(&g, &graph, &x, &params, &Sequential::new()).unwrap();
    assert!(out.potential < p0);
}

#[test]
fn full_solve_descends_monotonically() {
    let g = two_agent_game(20);
    let graph = InteractionGraph::from_game(&g);
    let x = zero_control_init(&g).unwrap();
    let out = solve(&g, &graph, &x, &SolverParams::default(), &Sequential::new()).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    for w in out.history.windows(2) {
        assert!(w[1].potential <= w[0].potential);
    }
    assert!(out.potential < out.history[0].potential);
    for t in &out.strategy.trajectories {
        assert!(t.dynamics_residual(&g.model).unwrap() == 0.0);
    }
}

#[test]
fn already_optimal_start_converges_without_stall() {
    let mut g = two_agent_game(5);
    g.players.truncate(1);
    g.prior = BeliefPrior::independent(vec![vec![1.0]]).unwrap();
    g.initial_states.truncate(1);
    let graph = InteractionGraph::from_game(&g);
    let x = zero_control_init(&g).unwrap();
    g.players[0].reference = x.trajectories[0].states.clone();
    let out = solve(&g, &graph, &x, &SolverParams::default(), &Sequential::new()).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    assert_eq!(out.potential, 0.0);
}

#[test]
fn rejects_bad_parameters() {
    let g = two_agent_game(5);
    let graph = InteractionGraph::from_game(&g);
    let x = zero_control_init(&g).unwrap();
    let mut p = SolverParams::default();
    p.admm.sigma = 0.0;
    assert!(matches!(
        solve(&g, &graph, &x, &p, &Sequential::new()),
        Err(Error::Config { .. })
    ));
}
