//! Contingency planning as a Bayesian game with a fully correlated prior.
//!
//! Each agent gets one type-player per hypothesis. Types of different agents only meet
//! under the same hypothesis, so cross-hypothesis collision terms carry zero weight. The
//! ego agent's plans are tied together before the branching step by a quadratic penalty.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::admm::InteractionGraph;
use crate::dynamics::{Control, Trajectory};
use crate::error::{Error, Result};
use crate::game::{bayesian_potential, expected_type_cost, AgentId, BeliefPrior, ContingencyTerm, GameSpec, JointStrategy, TypePlayer};
use crate::math::sqrt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub probabilities: Vec<f64>,
    #[serde(default)]
    pub labels: Vec<String>,
    /// `types[agent][hypothesis]`.
    pub types: Vec<Vec<TypePlayer>>,
}

impl HypothesisSet {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidPrior("no hypotheses".into()));
        }
        for (i, ts) in self.types.iter().enumerate() {
            if ts.len() != self.len() {
                return Err(Error::config(
                    format!("hypotheses.types[{i}]"),
                    format!("expected {} types, found {}", self.len(), ts.len()),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContingencyConfig {
    pub ego: AgentId,
    pub t_b: usize,
    pub weights: [f64; 4],
}

pub fn build_correlated_prior(h: &HypothesisSet) -> Result<BeliefPrior> {
    h.validate()?;
    BeliefPrior::correlated(h.probabilities.clone(), h.types.len())
}

/// Builds the contingency game on top of `base`, which supplies the initial states,
/// horizon, dynamics and collision model.
pub fn build_contingency_game(
    h: &HypothesisSet,
    cfg: &ContingencyConfig,
    base: &GameSpec,
) -> Result<(GameSpec, InteractionGraph)> {
    let prior = build_correlated_prior(h)?;
    if cfg.ego.0 >= h.types.len() {
        return Err(Error::config("contingency.ego", "ego agent has no hypotheses"));
    }
    if cfg.t_b > base.horizon {
        return Err(Error::BranchOutOfRange {
            t_b: cfg.t_b,
            horizon: base.horizon,
        });
    }
    let mut players = Vec::new();
    for (i, ts) in h.types.iter().enumerate() {
        for (k, t) in ts.iter().enumerate() {
            let mut p = t.clone();
            p.agent = AgentId(i);
            p.type_index = k;
            players.push(p);
        }
    }
    let game = GameSpec {
        players,
        prior,
        initial_states: base.initial_states.clone(),
        horizon: base.horizon,
        model: base.model,
        footprint: base.footprint,
        collision: base.collision,
        limits: base.limits,
        contingency: Some(ContingencyTerm {
            agent: cfg.ego,
            t_b: cfg.t_b,
            weights: cfg.weights,
        }),
    };
    game.validate()?;
    let graph = InteractionGraph::from_game(&game);
    Ok((game, graph))
}

/// A unilateral deviation for the contingency identity.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// New plans for every hypothesis of the ego agent.
    EgoStack(Vec<Trajectory>),
    /// New trajectory for one non-ego agent under one hypothesis.
    Single {
        agent: AgentId,
        hypothesis: usize,
        trajectory: Trajectory,
    },
}

/// `|dP' - sum p(h) dC|`, with `P'` the potential without the branch penalty.
pub fn contingency_identity_residual(game: &GameSpec, x: &JointStrategy, perturbation: &Perturbation) -> Result<f64> {
    let ego = game
        .contingency
        .as_ref()
        .ok_or(Error::config("contingency", "game has no contingency term"))?
        .agent
        .0;
    let mut y = x.clone();
    let touched: Vec<usize> = match perturbation {
        Perturbation::EgoStack(plans) => {
            let vs = game.vertices_of(ego);
            if plans.len() != vs.len() {
                return Err(Error::LengthMismatch {
                    what: "ego plan stack",
                    expected: vs.len(),
                    found: plans.len(),
                });
            }
            for (v, p) in vs.clone().zip(plans) {
                check_shape(x.get(v)?, p)?;
                y.trajectories[v] = p.clone();
            }
            vs.collect()
        }
        Perturbation::Single {
            agent,
            hypothesis,
            trajectory,
        } => {
            if agent.0 == ego {
                return Err(Error::config("perturbation.agent", "use EgoStack for the ego agent"));
            }
            if agent.0 >= game.num_agents() || *hypothesis >= game.vertices_of(agent.0).len() {
                return Err(Error::config("perturbation", "no such type-player"));
            }
            let v = game.vertices_of(agent.0).start + hypothesis;
            check_shape(x.get(v)?, trajectory)?;
            y.trajectories[v] = trajectory.clone();
            alloc::vec![v]
        }
    };
    let dp = bayesian_potential(game, x)? - bayesian_potential(game, &y)?;
    let mut rhs = 0.0;
    for v in touched {
        rhs += game.marginal(v) * (expected_type_cost(game, x, v)? - expected_type_cost(game, &y, v)?);
    }
    Ok((dp - rhs).abs())
}

fn check_shape(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.states.len() != b.states.len() || a.controls.len() != b.controls.len() {
        return Err(Error::LengthMismatch {
            what: "perturbed trajectory",
            expected: a.states.len(),
            found: b.states.len(),
        });
    }
    Ok(())
}

/// Largest planar distance between any two ego plans before the branching step.
pub fn pre_branch_gap(game: &GameSpec, x: &JointStrategy) -> f64 {
    let Some(c) = &game.contingency else {
        return 0.0;
    };
    let vs = game.vertices_of(c.agent.0);
    let mut worst: f64 = 0.0;
    for a in vs.clone() {
        for b in a + 1..vs.end {
            for t in 0..c.t_b {
                let (sa, sb) = (&x.trajectories[a].states[t], &x.trajectories[b].states[t]);
                let (dx, dy) = (sa.px - sb.px, sa.py - sb.py);
                worst = worst.max(sqrt(dx * dx + dy * dy));
            }
        }
    }
    worst
}

/// Replaces the ego's pre-branch controls by their probability-weighted mean and
/// re-rolls every ego plan, so all plans share one executable prefix.
pub fn snap_pre_branch(game: &GameSpec, x: &JointStrategy) -> Result<JointStrategy> {
    let Some(c) = &game.contingency else {
        return Ok(x.clone());
    };
    let vs = game.vertices_of(c.agent.0);
    let mut mean = alloc::vec![Control::default(); c.t_b];
    for v in vs.clone() {
        let p = game.marginal(v);
        for (t, m) in mean.iter_mut().enumerate() {
            let u = x.trajectories[v].controls[t];
            m.steer += p * u.steer;
            m.accel += p * u.accel;
        }
    }
    let mut out = x.clone();
    for v in vs {
        let mut controls = x.trajectories[v].controls.clone();
        controls[..c.t_b].copy_from_slice(&mean);
        out.trajectories[v] = game.model.rollout(game.initial_state(v), &controls)?;
    }
    Ok(out)
}
