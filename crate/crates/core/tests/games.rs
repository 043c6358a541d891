use potgame_core::admm::{self, SolverParams};
use potgame_core::contingency::{build_contingency_game, contingency_identity_residual, ContingencyConfig, HypothesisSet, Perturbation};
use potgame_core::costs::{circle_centers, collision_cost, ego_cost, CollisionSpec, Footprint, TrackingWeights};
use potgame_core::dynamics::{BicycleModel, Control, ControlLimits, State, Trajectory};
use potgame_core::exec::Sequential;
use potgame_core::game::{
    bayesian_potential, expected_type_cost, potential, potential_identity_residual, AgentId, BeliefPrior, GameSpec,
    JointStrategy, TypePlayer,
};
use potgame_core::oracle::{centralized_solve, enumerated_expected_cost};
use potgame_core::verify::{random_contingency_game, random_game, random_strategy, random_trajectory};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every term of the potential that involves vertex `v`, summed by hand.
fn terms_with(g: &GameSpec, x: &JointStrategy, v: usize) -> f64 {
    let mut s = g.marginal(v) * g.ego_cost(x, v).unwrap();
    for u in 0..g.num_vertices() {
        if g.agent_of(u) != g.agent_of(v) {
            s += g.prior.pair(u, v) * g.pair_cost(x, u, v).unwrap();
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn unilateral_change_moves_potential_by_weighted_cost(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_game(&mut r, 4, 3, 10);
        let x = random_strategy(&mut r, &g);
        let v = r.random_range(0..g.num_vertices());
        let alt = random_trajectory(&mut r, g.horizon, 3.0);
        let y = x.with_replaced(v, alt.clone());
        let (px, py) = (bayesian_potential(&g, &x).unwrap(), bayesian_potential(&g, &y).unwrap());
        let res = potential_identity_residual(&g, &x, v, &alt).unwrap();
        prop_assert!(res <= 1e-8 * (1.0 + (px - py).abs()), "residual {res}");
        // terms without v are untouched
        let rest_x = px - terms_with(&g, &x, v);
        let rest_y = py - terms_with(&g, &y, v);
        prop_assert!((rest_x - rest_y).abs() <= 1e-9 * (1.0 + rest_x.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn contingency_deviations_move_reduced_potential(seed in any::<u64>(), ego_stack in any::<bool>()) {
        let mut r = rng(seed);
        let (g, _) = random_contingency_game(&mut r, 3, 10);
        let x = random_strategy(&mut r, &g);
        let n = g.vertices_of(0).len();
        let mut y = x.clone();
        let pert = if ego_stack {
            let plans: Vec<Trajectory> = (0..n).map(|_| random_trajectory(&mut r, g.horizon, 3.0)).collect();
            for (v, p) in g.vertices_of(0).zip(&plans) {
                y.trajectories[v] = p.clone();
            }
            Perturbation::EgoStack(plans)
        } else {
            let agent = r.random_range(1..g.num_agents());
            let hypothesis = r.random_range(0..n);
            let trajectory = random_trajectory(&mut r, g.horizon, 3.0);
            y.trajectories[g.vertices_of(agent).start + hypothesis] = trajectory.clone();
            Perturbation::Single { agent: AgentId(agent), hypothesis, trajectory }
        };
        let dp = bayesian_potential(&g, &x).unwrap() - bayesian_potential(&g, &y).unwrap();
        let res = contingency_identity_residual(&g, &x, &pert).unwrap();
        prop_assert!(res <= 1e-8 * (1.0 + dp.abs()), "residual {res}");
    }

    #[test]
    fn hypothesis_pairs_marginalize(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (g, _) = random_contingency_game(&mut r, 3, 3);
        for u in 0..g.num_vertices() {
            for agent in 0..g.num_agents() {
                if agent == g.agent_of(u) {
                    continue;
                }
                let s: f64 = g.vertices_of(agent).map(|v| g.prior.pair(u, v)).sum();
                prop_assert!((s - g.marginal(u)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expected_cost_matches_profile_enumeration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_game(&mut r, 3, 3, 4);
        let x = random_strategy(&mut r, &g);
        for v in 0..g.num_vertices() {
            let a = expected_type_cost(&g, &x, v).unwrap();
            let b = enumerated_expected_cost(&g, &x, v).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn collision_cost_is_symmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_trajectory(&mut r, 4, 3.0);
        let b = random_trajectory(&mut r, 4, 3.0);
        let fp = Footprint::for_wheelbase(r.random_range(0.5..3.0));
        let spec = CollisionSpec::new(4.5, 1.4);
        prop_assert_eq!(collision_cost(&a, &b, &fp, &spec).unwrap(), collision_cost(&b, &a, &fp, &spec).unwrap());
    }

    #[test]
    fn circle_centers_rotate_with_heading(x in -5.0..5.0f64, y in -5.0..5.0f64, th in -3.2..3.2f64, b in 0.5..4.0f64) {
        let fp = Footprint::for_wheelbase(b);
        let c = circle_centers(&State::new(x, y, th, 1.0), &fp);
        for (center, off) in c.iter().zip(fp.offsets()) {
            // rotate (off, 0) by th
            let (ex, ey) = (x + off * th.cos(), y + off * th.sin());
            prop_assert!((center[0] - ex).abs() < 1e-12 && (center[1] - ey).abs() < 1e-12);
        }
    }

    #[test]
    fn rollout_is_iterated_step(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = BicycleModel::new(r.random_range(0.5..3.0), 0.1);
        let controls: Vec<Control> = (0..8).map(|_| Control::new(r.random_range(-0.4..0.4), r.random_range(-2.0..2.0))).collect();
        let x0 = State::new(1.0, -2.0, 0.3, 2.0);
        let traj = m.rollout(x0, &controls).unwrap();
        let mut x = x0;
        for u in &controls {
            x = m.step(&x, u).unwrap();
        }
        prop_assert_eq!(traj.states.last().copied().unwrap(), x);
    }

    #[test]
    fn doubling_weights_doubles_tracking_cost(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = random_trajectory(&mut r, 5, 3.0);
        let reference = random_trajectory(&mut r, 5, 3.0).states;
        let w = TrackingWeights::new([1.0, 0.5, 0.2, 2.0], [10.0, 0.1]);
        let c1 = ego_cost(&t, &reference, &w).unwrap();
        let c2 = ego_cost(&t, &reference, &w.scaled(2.0)).unwrap();
        prop_assert!((c2 - 2.0 * c1).abs() <= 1e-12 * (1.0 + c1));
    }
}

#[test]
fn empty_rollout_is_the_initial_state() {
    let x0 = State::new(1.0, 2.0, 0.5, 3.0);
    let t = BicycleModel::new(2.0, 0.1).rollout(x0, &[]).unwrap();
    assert_eq!(t.states, vec![x0]);
    assert!(t.controls.is_empty());
}

fn base(agents: usize, horizon: usize) -> GameSpec {
    GameSpec {
        players: vec![],
        prior: BeliefPrior::independent(vec![vec![1.0]]).unwrap(),
        initial_states: (0..agents).map(|i| State::new(0.0, 3.0 * i as f64, 0.0, 1.0)).collect(),
        horizon,
        model: BicycleModel::new(1.0, 0.1),
        footprint: Footprint::for_wheelbase(1.0),
        collision: CollisionSpec::new(4.5, 1.4),
        limits: ControlLimits::default(),
        contingency: None,
    }
}

fn player(rng: &mut ChaCha8Rng, agent: usize, horizon: usize) -> TypePlayer {
    TypePlayer {
        agent: AgentId(agent),
        type_index: 0,
        reference: random_trajectory(rng, horizon, 3.0).states,
        weights: TrackingWeights::new([1.0, 1.0, 0.5, 1.0], [1.0, 1.0]),
        label: String::new(),
    }
}

fn two_hypothesis_game(r: &mut ChaCha8Rng, weights: [f64; 4]) -> GameSpec {
    let horizon = 4;
    let h = HypothesisSet {
        probabilities: vec![0.35, 0.65],
        labels: vec![],
        types: (0..2).map(|i| (0..2).map(|_| player(r, i, horizon)).collect()).collect(),
    };
    let cfg = ContingencyConfig {
        ego: AgentId(0),
        t_b: 2,
        weights,
    };
    build_contingency_game(&h, &cfg, &base(2, horizon)).unwrap().0
}

#[test]
fn contingency_potential_expands_by_hypothesis() {
    let mut r = rng(11);
    let q = [50.0, 50.0, 100.0, 10.0];
    let g = two_hypothesis_game(&mut r, q);
    let x = random_strategy(&mut r, &g);
    // vertices: ego h0, ego h1, rival h0, rival h1
    let mut expected = 0.0;
    for (h, p) in [(0, 0.35), (1, 0.65)] {
        let (e, o) = (h, 2 + h);
        expected += p * (g.ego_cost(&x, e).unwrap() + g.ego_cost(&x, o).unwrap() + g.pair_cost(&x, e, o).unwrap());
    }
    let mut penalty = 0.0;
    for t in 0..2 {
        let d = x.trajectories[0].states[t].to_vector() - x.trajectories[1].states[t].to_vector();
        penalty += 2.0 * (0..4).map(|i| q[i] * d[i] * d[i]).sum::<f64>();
    }
    let p = potential(&g, &x).unwrap();
    assert!((p - expected - penalty).abs() <= 1e-10 * p.abs(), "{p} vs {}", expected + penalty);
}

#[test]
fn zero_branch_weights_leave_the_reduced_potential() {
    let mut r = rng(12);
    let g = two_hypothesis_game(&mut r, [0.0; 4]);
    let x = random_strategy(&mut r, &g);
    assert_eq!(potential(&g, &x).unwrap(), bayesian_potential(&g, &x).unwrap());
}

#[test]
fn null_contingency_perturbation_has_zero_residual() {
    let mut r = rng(13);
    let g = two_hypothesis_game(&mut r, [50.0, 50.0, 100.0, 10.0]);
    let x = random_strategy(&mut r, &g);
    let pert = Perturbation::Single {
        agent: AgentId(1),
        hypothesis: 1,
        trajectory: x.trajectories[3].clone(),
    };
    assert_eq!(contingency_identity_residual(&g, &x, &pert).unwrap(), 0.0);
}

fn single_tracking_game() -> GameSpec {
    let horizon = 30;
    let mut g = base(1, horizon);
    g.players.push(TypePlayer {
        agent: AgentId(0),
        type_index: 0,
        reference: (0..=horizon).map(|t| State::new(0.25 * t as f64, 1.0, 0.0, 2.5)).collect(),
        weights: TrackingWeights::new([0.0, 1.0, 0.0, 2.0], [10.0, 0.1]),
        label: String::new(),
    });
    g
}

#[test]
fn single_player_distributed_and_centralized_agree() {
    let g = single_tracking_game();
    let graph = admm::InteractionGraph::from_game(&g);
    let init = admm::zero_control_init(&g).unwrap();
    let mut params = SolverParams {
        tolerance: 1e-10,
        ..SolverParams::default()
    };
    params.max_iterations = 500;
    let d = admm::solve(&g, &graph, &init, &params, &Sequential::new()).unwrap();
    let c = centralized_solve(&g, &init, &params, &Sequential::new()).unwrap();
    assert!((d.potential - c.potential).abs() <= 1e-6, "{} vs {}", d.potential, c.potential);
    assert!(d.potential < potential(&g, &init).unwrap());
}

#[test]
fn centralized_descends_on_random_toys() {
    let mut r = rng(14);
    for _ in 0..10 {
        let g = random_game(&mut r, 3, 2, 6);
        let init = admm::zero_control_init(&g).unwrap();
        let out = centralized_solve(&g, &init, &SolverParams::default(), &Sequential::new()).unwrap();
        assert!(out.potential <= potential(&g, &init).unwrap());
        for w in out.history.windows(2) {
            assert!(w[1].potential <= w[0].potential);
        }
    }
}
