use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::admm::{InteractionGraph, SolverParams};
use crate::contingency::{build_contingency_game, ContingencyConfig, HypothesisSet};
use crate::costs::{CollisionSpec, Footprint, TrackingWeights};
use crate::dynamics::{BicycleModel, ControlLimits, State};
use crate::error::{Error, Result};
use crate::game::{AgentId, BeliefPrior, GameSpec, TypePlayer};
use crate::math::{cos, exp, sin, sqrt, PI};

/// Straight lane through `origin` with direction `heading`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub origin: [f64; 2],
    pub heading: f64,
}

impl Lane {
    pub fn horizontal(y: f64) -> Self {
        Lane {
            origin: [0.0, y],
            heading: 0.0,
        }
    }

    /// Lane through a pose, along its heading.
    pub fn through(x: &State) -> Self {
        Lane {
            origin: [x.px, x.py],
            heading: x.heading,
        }
    }

    fn direction(&self) -> [f64; 2] {
        [cos(self.heading), sin(self.heading)]
    }

    /// Arc-length coordinate of the projection of `(px, py)`.
    pub fn station(&self, px: f64, py: f64) -> f64 {
        let d = self.direction();
        (px - self.origin[0]) * d[0] + (py - self.origin[1]) * d[1]
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        let d = self.direction();
        [self.origin[0] + s * d[0], self.origin[1] + s * d[1]]
    }

    /// Constant-speed reference starting at `station` at step `start`, for `len` states.
    pub fn reference(&self, station: f64, v_ref: f64, dt: f64, start: usize, len: usize) -> Vec<State> {
        (start..start + len)
            .map(|k| {
                let p = self.point(station + v_ref * dt * k as f64);
                State::new(p[0], p[1], self.heading, v_ref)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMode {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// Distribution of an agent's reference speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntentModel {
    Fixed { v_ref: f64 },
    Mixture { modes: Vec<GaussianMode> },
}

impl IntentModel {
    pub fn bimodal(weights: [f64; 2], means: [f64; 2], std: f64) -> Self {
        IntentModel::Mixture {
            modes: vec![
                GaussianMode {
                    weight: weights[0],
                    mean: means[0],
                    std,
                },
                GaussianMode {
                    weight: weights[1],
                    mean: means[1],
                    std,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            IntentModel::Fixed { v_ref } if v_ref.is_finite() => Ok(()),
            IntentModel::Fixed { .. } => Err(Error::config("intent.v_ref", "must be finite")),
            IntentModel::Mixture { modes } => {
                if modes.is_empty() {
                    return Err(Error::config("intent.modes", "at least one mode required"));
                }
                for (k, m) in modes.iter().enumerate() {
                    if !(m.std > 0.0) || !m.std.is_finite() {
                        return Err(Error::config(format!("intent.modes[{k}].std"), "must be > 0"));
                    }
                    if !(m.weight > 0.0) {
                        return Err(Error::config(format!("intent.modes[{k}].weight"), "must be > 0"));
                    }
                }
                let s: f64 = modes.iter().map(|m| m.weight).sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::config("intent.modes", format!("weights sum to {s}")));
                }
                Ok(())
            }
        }
    }

    pub fn density(&self, v: f64) -> f64 {
        match self {
            IntentModel::Fixed { v_ref } => {
                if v == *v_ref {
                    1.0
                } else {
                    0.0
                }
            }
            IntentModel::Mixture { modes } => modes
                .iter()
                .map(|m| {
                    let z = (v - m.mean) / m.std;
                    m.weight * exp(-0.5 * z * z) / (m.std * sqrt(2.0 * PI))
                })
                .sum(),
        }
    }
}

/// One sampled type of an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledType {
    pub v_ref: f64,
    pub probability: f64,
    /// Mixture mode the sample was drawn around.
    pub mode: usize,
    pub label: String,
}

/// `samples_per_mode` evenly spaced points on `[mean - 2 std, mean + 2 std]` for every
/// mode (the mean alone for one sample), weighted by the mixture density and normalized.
pub fn sample_types(intent: &IntentModel, samples_per_mode: usize) -> Result<Vec<SampledType>> {
    intent.validate()?;
    if samples_per_mode == 0 {
        return Err(Error::config("samples_per_mode", "must be >= 1"));
    }
    let mut out = Vec::new();
    match intent {
        IntentModel::Fixed { v_ref } => out.push(SampledType {
            v_ref: *v_ref,
            probability: 1.0,
            mode: 0,
            label: format!("v_ref={v_ref}"),
        }),
        IntentModel::Mixture { modes } => {
            for (k, m) in modes.iter().enumerate() {
                for j in 0..samples_per_mode {
                    let offset = if samples_per_mode == 1 {
                        0.0
                    } else {
                        -2.0 + 4.0 * j as f64 / (samples_per_mode - 1) as f64
                    };
                    let v = m.mean + offset * m.std;
                    out.push(SampledType {
                        v_ref: v,
                        probability: intent.density(v),
                        mode: k,
                        label: format!("v_ref={v:.3}"),
                    });
                }
            }
            let total: f64 = out.iter().map(|t| t.probability).sum();
            if !(total > 0.0) {
                return Err(Error::config("intent", "mixture density vanishes on every sample"));
            }
            out.iter_mut().for_each(|t| t.probability /= total);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub name: String,
    pub initial: State,
    pub weights: TrackingWeights,
    pub lane: Lane,
    pub intent: IntentModel,
}

/// Per-agent lane and speed under one contingency hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub lane: Lane,
    pub v_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub probability: f64,
    #[serde(default)]
    pub label: String,
    /// One entry per agent.
    pub agents: Vec<TypeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencySettings {
    #[serde(default)]
    pub ego: usize,
    pub t_b: usize,
    pub weights: [f64; 4],
    pub hypotheses: Vec<HypothesisSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Merging,
    Intersection,
    Overtaking,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    pub horizon: usize,
    pub dt: f64,
    pub wheelbase: f64,
    /// Defaults to circles at `+-b/4`.
    #[serde(default)]
    pub footprint: Option<Footprint>,
    pub collision: CollisionSpec,
    #[serde(default)]
    pub limits: ControlLimits,
    pub agents: Vec<AgentConfig>,
    /// Agent whose plan is executed and scored.
    #[serde(default)]
    pub ego: usize,
    pub samples_per_mode: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub contingency: Option<ContingencySettings>,
}

impl ScenarioConfig {
    pub fn model(&self) -> BicycleModel {
        BicycleModel::new(self.wheelbase, self.dt)
    }

    pub fn footprint(&self) -> Footprint {
        self.footprint.unwrap_or_else(|| Footprint::for_wheelbase(self.wheelbase))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("horizon", "must be >= 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", "must be > 0"));
        }
        if !(self.wheelbase > 0.0) {
            return Err(Error::config("wheelbase", "must be > 0"));
        }
        if self.samples_per_mode == 0 {
            return Err(Error::config("samples_per_mode", "must be >= 1"));
        }
        self.collision.validate()?;
        self.solver.validate().map_err(|e| e.within("solver"))?;
        if self.agents.is_empty() {
            return Err(Error::config("agents", "at least one agent required"));
        }
        if self.ego >= self.agents.len() {
            return Err(Error::config("ego", "no such agent"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            a.intent
                .validate()
                .map_err(|e| e.within(&format!("agents[{i}]")))?;
            a.weights
                .validate()
                .map_err(|_| Error::config(format!("agents[{i}].weights"), "must be finite and nonnegative"))?;
            if !a.initial.is_finite() {
                return Err(Error::config(format!("agents[{i}].initial"), "must be finite"));
            }
        }
        if let Some(c) = &self.contingency {
            if c.t_b > self.horizon {
                return Err(Error::config("contingency.t_b", format!("must be <= horizon {}", self.horizon)));
            }
            if c.ego >= self.agents.len() {
                return Err(Error::config("contingency.ego", "no such agent"));
            }
            if c.hypotheses.is_empty() {
                return Err(Error::config("contingency.hypotheses", "at least one hypothesis required"));
            }
            for (k, h) in c.hypotheses.iter().enumerate() {
                if h.agents.len() != self.agents.len() {
                    return Err(Error::config(
                        format!("contingency.hypotheses[{k}].agents"),
                        format!("expected {} entries", self.agents.len()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Sampled types of every agent under its configured intent model.
    pub fn sampled_types(&self) -> Result<Vec<Vec<SampledType>>> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| sample_types(&a.intent, self.samples_per_mode).map_err(|e| e.within(&format!("agents[{i}]"))))
            .collect()
    }
}

/// Type-player of `agent` tracking `lane` at `v_ref`, with the reference anchored at the
/// lane station of `anchor` and offset by `start` steps.
pub fn type_player(cfg: &ScenarioConfig, agent: usize, k: usize, v_ref: f64, lane: &Lane, anchor: &State, start: usize, label: String) -> TypePlayer {
    let a = &cfg.agents[agent];
    let station = lane.station(anchor.px, anchor.py);
    TypePlayer {
        agent: AgentId(agent),
        type_index: k,
        reference: lane.reference(station, v_ref, cfg.dt, start, cfg.horizon + 1),
        weights: a.weights,
        label,
    }
}

/// Per-agent type lists: `(v_ref, probability, label)`.
pub type TypeTable = Vec<Vec<(f64, f64, String)>>;

/// Builds the Bayesian game from explicit type tables.
///
/// `current` are the agents' present states (the game's initial states); references are
/// anchored at `anchors` and shifted by `start` steps so they stay time-indexed in closed loop.
pub fn game_from_types(cfg: &ScenarioConfig, types: &TypeTable, current: &[State], anchors: &[State], start: usize) -> Result<GameSpec> {
    let mut players = Vec::new();
    let mut marginals = Vec::new();
    for (i, ts) in types.iter().enumerate() {
        let mut m = Vec::new();
        for (k, (v, p, label)) in ts.iter().enumerate() {
            players.push(type_player(cfg, i, k, *v, &cfg.agents[i].lane, &anchors[i], start, label.clone()));
            m.push(*p);
        }
        marginals.push(m);
    }
    let game = GameSpec {
        players,
        prior: BeliefPrior::independent(marginals)?,
        initial_states: current.to_vec(),
        horizon: cfg.horizon,
        model: cfg.model(),
        footprint: cfg.footprint(),
        collision: cfg.collision,
        limits: cfg.limits,
        contingency: None,
    };
    game.validate()?;
    Ok(game)
}

/// The open-loop Bayesian game of a scenario.
pub fn build_game(cfg: &ScenarioConfig) -> Result<(GameSpec, InteractionGraph)> {
    cfg.validate()?;
    let types: TypeTable = cfg
        .sampled_types()?
        .into_iter()
        .map(|ts| ts.into_iter().map(|t| (t.v_ref, t.probability, t.label)).collect())
        .collect();
    let starts: Vec<State> = cfg.agents.iter().map(|a| a.initial).collect();
    let game = game_from_types(cfg, &types, &starts, &starts, 0)?;
    let graph = InteractionGraph::from_game(&game);
    Ok((game, graph))
}

/// The contingency game of a scenario with a `contingency` section.
pub fn build_contingency_scenario(cfg: &ScenarioConfig) -> Result<(GameSpec, InteractionGraph)> {
    cfg.validate()?;
    let c = cfg
        .contingency
        .as_ref()
        .ok_or(Error::config("contingency", "section missing"))?;
    let types = (0..cfg.agents.len())
        .map(|i| {
            c.hypotheses
                .iter()
                .enumerate()
                .map(|(k, h)| {
                    let t = &h.agents[i];
                    type_player(cfg, i, k, t.v_ref, &t.lane, &cfg.agents[i].initial, 0, h.label.clone())
                })
                .collect()
        })
        .collect();
    let h = HypothesisSet {
        probabilities: c.hypotheses.iter().map(|h| h.probability).collect(),
        labels: c.hypotheses.iter().map(|h| h.label.clone()).collect(),
        types,
    };
    let base = GameSpec {
        players: vec![],
        prior: BeliefPrior::independent(vec![vec![1.0]])?,
        initial_states: cfg.agents.iter().map(|a| a.initial).collect(),
        horizon: cfg.horizon,
        model: cfg.model(),
        footprint: cfg.footprint(),
        collision: cfg.collision,
        limits: cfg.limits,
        contingency: None,
    };
    let cc = ContingencyConfig {
        ego: AgentId(c.ego),
        t_b: c.t_b,
        weights: c.weights,
    };
    build_contingency_game(&h, &cc, &base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_grid() {
        let t = sample_types(&IntentModel::bimodal([1.0 - 1e-9, 1e-9], [3.0, 10.0], 0.2), 5).unwrap();
        let v: Vec<f64> = t.iter().take(5).map(|t| t.v_ref).collect();
        for (a, b) in v.iter().zip([2.6, 2.8, 3.0, 3.2, 3.4]) {
            assert!((a - b).abs() < 1e-12);
        }
        // symmetric about the mean
        assert!((t[0].probability - t[4].probability).abs() < 1e-12);
        assert!((t[1].probability - t[3].probability).abs() < 1e-12);
        assert!(t[2].probability > t[1].probability);
    }

    #[test]
    fn one_sample_per_mode_is_the_mean() {
        let t = sample_types(&IntentModel::bimodal([0.5, 0.5], [3.5, 2.5], 0.2), 1).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].v_ref, t[1].v_ref), (3.5, 2.5));
        assert!((t[0].probability - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_std() {
        let bad = IntentModel::bimodal([0.5, 0.5], [3.5, 2.5], 0.0);
        assert!(matches!(sample_types(&bad, 5), Err(Error::Config { .. })));
    }

    #[test]
    fn lane_reference_is_uniform_motion() {
        let lane = Lane::through(&State::new(3.0, -18.0, PI / 2.0, 3.0));
        let r = lane.reference(0.0, 3.0, 0.1, 0, 3);
        assert!((r[2].py - (-17.4)).abs() < 1e-12);
        assert!((r[2].px - 3.0).abs() < 1e-12);
        let shifted = lane.reference(0.0, 3.0, 0.1, 2, 1);
        assert_eq!(shifted[0], r[2]);
        assert_eq!(Lane::horizontal(0.0).station(5.0, 4.0), 5.0);
    }
}
