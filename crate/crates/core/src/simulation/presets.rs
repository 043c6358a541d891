//! Built-in scenarios. Horizon, timestep and wheelbase of the merging and intersection
//! scenarios are not published; the defaults below were chosen so the open-loop cost of
//! the smallest instances lands on the published values.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::scenario::{
    AgentConfig, ContingencySettings, HypothesisSpec, IntentModel, Lane, ScenarioConfig, ScenarioKind, TypeSpec,
};
use crate::admm::SolverParams;
use crate::costs::{CollisionSpec, TrackingWeights};
use crate::dynamics::{ControlLimits, State};

pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_WHEELBASE: f64 = 6.85;
pub const MODE_STD: f64 = 0.2;

fn agent(name: &str, initial: State, weights: TrackingWeights, lane: Lane, intent: IntentModel) -> AgentConfig {
    AgentConfig {
        name: String::from(name),
        initial,
        weights,
        lane,
        intent,
    }
}

/// Ego on the main lane, other agent merging from `p_y = 4` with a bimodal speed intent.
pub fn merging(w: [f64; 2], samples_per_mode: usize) -> ScenarioConfig {
    let weights = TrackingWeights::new([0.0, 1.0, 0.0, 2.0], [10.0, 0.1]);
    let lane = Lane::horizontal(0.0);
    ScenarioConfig {
        name: format!("merging_w{:.2}", w[0]),
        kind: ScenarioKind::Merging,
        horizon: DEFAULT_HORIZON,
        dt: DEFAULT_DT,
        wheelbase: DEFAULT_WHEELBASE,
        footprint: None,
        collision: CollisionSpec::new(4.5, 1.4),
        limits: ControlLimits::default(),
        agents: vec![
            agent("ego", State::new(0.0, 0.0, 0.0, 3.0), weights, lane, IntentModel::Fixed { v_ref: 3.0 }),
            agent(
                "merging",
                State::new(0.0, 4.0, 0.0, 3.0),
                weights,
                lane,
                IntentModel::bimodal(w, [3.5, 2.5], MODE_STD),
            ),
        ],
        ego: 0,
        samples_per_mode,
        seed: 0,
        solver: SolverParams::default(),
        contingency: None,
    }
}

/// Ego crossing bottom to top, two other agents crossing left-right and right-left.
// headings are two-decimal values, not pi multiples
#[allow(clippy::approx_constant)]
pub fn intersection(w1: [f64; 2], w2: [f64; 2], samples_per_mode: usize) -> ScenarioConfig {
    let weights = TrackingWeights::new([1.0, 1.0, 0.0, 0.0], [10.0, 0.1]);
    let ego = State::new(3.0, -18.0, 1.57, 3.0);
    let oa1 = State::new(-12.0, -3.0, 0.0, 3.0);
    let oa2 = State::new(24.0, 3.0, 3.14, 3.0);
    ScenarioConfig {
        name: format!("intersection_w{:.2}_{:.2}", w1[0], w2[0]),
        kind: ScenarioKind::Intersection,
        horizon: DEFAULT_HORIZON,
        dt: DEFAULT_DT,
        wheelbase: DEFAULT_WHEELBASE,
        footprint: None,
        collision: CollisionSpec::new(6.5, 1.4),
        limits: ControlLimits::default(),
        agents: vec![
            agent("ego", ego, weights, Lane::through(&ego), IntentModel::Fixed { v_ref: 3.0 }),
            agent("left", oa1, weights, Lane::through(&oa1), IntentModel::bimodal(w1, [3.6, 2.4], MODE_STD)),
            agent("right", oa2, weights, Lane::through(&oa2), IntentModel::bimodal(w2, [3.6, 2.4], MODE_STD)),
        ],
        ego: 0,
        samples_per_mode,
        seed: 0,
        solver: SolverParams::default(),
        contingency: None,
    }
}

pub const OVERTAKING_LANES: [f64; 2] = [0.0, 0.5];
pub const OVERTAKING_SPEEDS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn overtaking_base(hypotheses: Vec<HypothesisSpec>) -> ScenarioConfig {
    let weights = TrackingWeights::new([0.0, 0.5, 0.25, 1.0], [0.5, 1.0]);
    ScenarioConfig {
        name: format!("overtaking_{}h", hypotheses.len()),
        kind: ScenarioKind::Overtaking,
        horizon: 25,
        dt: 0.1,
        wheelbase: 0.5,
        footprint: None,
        collision: CollisionSpec::new(0.5, 1.4),
        limits: ControlLimits::default(),
        agents: vec![
            agent(
                "ego",
                State::new(-4.0, 0.5, 0.0, 1.0),
                weights,
                Lane::horizontal(0.5),
                IntentModel::Fixed { v_ref: 1.0 },
            ),
            agent(
                "lead",
                State::new(-2.9, 0.5, 0.0, 0.75),
                weights,
                Lane::horizontal(0.5),
                IntentModel::Fixed { v_ref: 0.5 },
            ),
        ],
        ego: 0,
        samples_per_mode: 1,
        seed: 0,
        solver: SolverParams::default(),
        contingency: Some(ContingencySettings {
            ego: 0,
            t_b: 5,
            weights: [50.0, 50.0, 100.0, 10.0],
            hypotheses,
        }),
    }
}

/// Hypothesis where the lead agent keeps lane `lead_y` at `lead_v`; the ego plans to pass
/// on the other lane.
pub fn overtaking_hypothesis(probability: f64, lead_y: f64, lead_v: f64) -> HypothesisSpec {
    let ego_y = if lead_y == OVERTAKING_LANES[0] {
        OVERTAKING_LANES[1]
    } else {
        OVERTAKING_LANES[0]
    };
    HypothesisSpec {
        probability,
        label: format!("lead_y={lead_y},lead_v={lead_v}"),
        agents: vec![
            TypeSpec {
                lane: Lane::horizontal(ego_y),
                v_ref: 1.0,
            },
            TypeSpec {
                lane: Lane::horizontal(lead_y),
                v_ref: lead_v,
            },
        ],
    }
}

/// Two hypotheses: the lead agent moves to the upper lane with probability `p_up`.
pub fn overtaking(p_up: f64) -> ScenarioConfig {
    overtaking_base(vec![
        overtaking_hypothesis(1.0 - p_up, OVERTAKING_LANES[0], 0.5),
        overtaking_hypothesis(p_up, OVERTAKING_LANES[1], 0.5),
    ])
}

/// `2 * n_speeds` uniform hypotheses over the first `n_speeds` lead speeds and both lanes.
pub fn overtaking_grid(n_speeds: usize) -> ScenarioConfig {
    let n = n_speeds.clamp(1, OVERTAKING_SPEEDS.len());
    let p = 1.0 / (2 * n) as f64;
    let mut hyps = Vec::new();
    for &v in &OVERTAKING_SPEEDS[..n] {
        for &y in &OVERTAKING_LANES {
            hyps.push(overtaking_hypothesis(p, y, v));
        }
    }
    overtaking_base(hyps)
}
