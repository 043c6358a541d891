use potgame_core::dynamics::State;
use potgame_core::exec::Sequential;
use potgame_core::simulation::{
    bayes_update, closed_loop_run, monte_carlo, open_loop_run, presets, sample_types, ClosedLoopParams, IntentModel,
    MonteCarloParams, ObservationModel, RunStatus, Setting,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn two_mode_merging_types_follow_mixture_density() {
    // normalized mixture density on both sigma grids, evaluated independently
    let expected = [
        (3.1, 0.029345432928780748),
        (3.3, 0.12160767984432565),
        (3.5, 0.20038708465873567),
        (3.7, 0.12154046076870174),
        (3.9, 0.027119341799456288),
        (2.1, 0.027119341799456288),
        (2.3, 0.12154046076870174),
        (2.5, 0.20038708465873567),
        (2.7, 0.12160767984432565),
        (2.9, 0.029345432928780748),
    ];
    let cfg = presets::merging([0.5, 0.5], 5);
    let types = sample_types(&cfg.agents[1].intent, cfg.samples_per_mode).unwrap();
    assert_eq!(types.len(), 10);
    for (t, (v, p)) in types.iter().zip(expected) {
        assert!((t.v_ref - v).abs() < 1e-12, "{} vs {v}", t.v_ref);
        assert!((t.probability - p).abs() < 1e-12, "{} vs {p}", t.probability);
    }
}

#[test]
fn degenerate_std_is_rejected() {
    let intent = IntentModel::bimodal([0.5, 0.5], [3.0, 2.0], 0.0);
    assert!(sample_types(&intent, 5).is_err());
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[test]
fn filter_concentrates_on_generating_type() {
    let cfg = presets::merging([0.5, 0.5], 1);
    let out = open_loop_run(&cfg, None, &Sequential::new()).unwrap();
    let plans: Vec<Vec<State>> = out
        .game
        .vertices_of(1)
        .map(|v| out.solution.strategy.trajectories[v].states.clone())
        .collect();
    let model = ObservationModel::default();
    for (truth, seed) in [(0, 1), (1, 2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut belief = vec![0.5, 0.5];
        let mut reached = None;
        for t in 1..=5 {
            let mut obs = plans[truth][t];
            obs.px += gaussian(&mut rng, model.position_std);
            obs.py += gaussian(&mut rng, model.position_std);
            let pred: Vec<State> = plans.iter().map(|p| p[t]).collect();
            belief = bayes_update(&belief, &obs, &pred, &model).unwrap().probabilities;
            assert!((belief.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if belief[truth] > 0.9 && reached.is_none() {
                reached = Some(t);
            }
        }
        assert!(reached.is_some(), "posterior {belief:?} after 5 updates");
    }
}

fn short_params(steps: usize) -> ClosedLoopParams {
    ClosedLoopParams {
        steps,
        ..ClosedLoopParams::default()
    }
}

#[test]
fn certainty_collapses_all_settings() {
    let mut cfg = presets::merging([0.5, 0.5], 2);
    cfg.agents[1].intent = IntentModel::Fixed { v_ref: 2.5 };
    let runs: Vec<_> = Setting::ALL
        .iter()
        .map(|&s| closed_loop_run(&cfg, s, &[3.0, 2.5], &short_params(15), &Sequential::new()).unwrap())
        .collect();
    for r in &runs[1..] {
        assert_eq!(r.status, RunStatus::Completed);
        assert_eq!(r.trace, runs[0].trace);
        assert_eq!(r.metrics, runs[0].metrics);
    }
}

#[test]
fn bayesian_plan_brakes_less_than_point_estimate() {
    // near-even prior, slow rival: the point estimate bets on the fast mode
    let cfg = presets::merging([0.51, 0.49], 5);
    let run = |s| closed_loop_run(&cfg, s, &[3.0, 2.5], &ClosedLoopParams::default(), &Sequential::new()).unwrap();
    let (mle, bne) = (run(Setting::Mle), run(Setting::Bne));
    assert_eq!(mle.status, RunStatus::Completed);
    assert_eq!(bne.status, RunStatus::Completed);
    assert!(
        bne.metrics.max_abs_accel < mle.metrics.max_abs_accel,
        "BNE {} vs MLE {}",
        bne.metrics.max_abs_accel,
        mle.metrics.max_abs_accel
    );
}

#[test]
fn closed_loop_controls_are_feasible() {
    let cfg = presets::intersection([0.5, 0.5], [0.3, 0.7], 1);
    let out = closed_loop_run(&cfg, Setting::BneUpdate, &[3.0, 2.4, 3.6], &short_params(20), &Sequential::new()).unwrap();
    let model = cfg.model();
    for w in out.trace.windows(cfg.agents.len() + 1) {
        let (a, b) = (&w[0], &w[cfg.agents.len()]);
        if let Some(u) = a.control {
            assert_eq!(a.agent, b.agent);
            let next = model.step(&a.state, &u).unwrap();
            assert!((next.px - b.state.px).abs() < 1e-12 && (next.v - b.state.v).abs() < 1e-12);
        }
    }
    for b in &out.beliefs {
        for p in &b.agents {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }
}

fn tiny_study(settings: Vec<Setting>) -> MonteCarloParams {
    MonteCarloParams {
        conditions: 2,
        draws: 1,
        seed: 7,
        settings,
        closed_loop: short_params(8),
        ..MonteCarloParams::default()
    }
}

#[test]
fn monte_carlo_is_reproducible_and_order_free() {
    let cfg = presets::intersection([0.5, 0.5], [0.5, 0.5], 1);
    let a = monte_carlo(&cfg, &tiny_study(Setting::ALL.to_vec()), &Sequential::new()).unwrap();
    let b = monte_carlo(&cfg, &tiny_study(Setting::ALL.to_vec()), &Sequential::new()).unwrap();
    assert_eq!(a, b);
    let rev = monte_carlo(&cfg, &tiny_study(vec![Setting::BneUpdate, Setting::Mle]), &Sequential::new()).unwrap();
    for r in &rev.runs {
        let same = a
            .runs
            .iter()
            .find(|x| x.condition == r.condition && x.draw == r.draw && x.setting == r.setting)
            .unwrap();
        assert_eq!(same, r);
    }
}
