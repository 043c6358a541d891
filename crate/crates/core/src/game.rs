//! Bayesian trajectory game in agent form.
//!
//! Every (agent, type) pair is a vertex ("type-player"). Vertices are stored flat and
//! ordered by `(agent, type_index)`; a vertex id is the position in that list.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::costs::{collision_cost, contingency_penalty, ego_cost, CollisionSpec, Footprint, TrackingWeights};
use crate::dynamics::{BicycleModel, ControlLimits, State, Trajectory};
use crate::error::{Error, Result};

/// Marginal probabilities below this are rejected rather than clamped.
pub const MIN_PROBABILITY: f64 = 1e-12;
const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypePlayer {
    pub agent: AgentId,
    pub type_index: usize,
    /// Reference states, one per time step including the initial one.
    pub reference: Vec<State>,
    pub weights: TrackingWeights,
    #[serde(default)]
    pub label: String,
}

/// How pairwise type probabilities are derived from the marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JointModel {
    /// `p(t_i, t_j) = p(t_i) p(t_j)`.
    Independent,
    /// Every agent has one type per hypothesis; types of different agents co-occur only
    /// under the same hypothesis.
    Correlated { hypotheses: Vec<f64> },
    /// Dense symmetric `V x V` table over vertex ids.
    Table { pairwise: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefPrior {
    /// `marginals[i][k] = p(t_i = k)`.
    pub marginals: Vec<Vec<f64>>,
    pub joint: JointModel,
}

impl BeliefPrior {
    pub fn independent(marginals: Vec<Vec<f64>>) -> Result<Self> {
        let p = BeliefPrior {
            marginals,
            joint: JointModel::Independent,
        };
        p.validate()?;
        Ok(p)
    }

    /// Fully correlated prior over hypotheses shared by `num_agents` agents.
    pub fn correlated(hypotheses: Vec<f64>, num_agents: usize) -> Result<Self> {
        let p = BeliefPrior {
            marginals: vec![hypotheses.clone(); num_agents],
            joint: JointModel::Correlated { hypotheses },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_agents(&self) -> usize {
        self.marginals.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.marginals.iter().map(Vec::len).sum()
    }

    /// Vertex id range of one agent.
    pub fn vertices_of(&self, agent: usize) -> Range<usize> {
        let start: usize = self.marginals[..agent].iter().map(Vec::len).sum();
        start..start + self.marginals[agent].len()
    }

    /// `(agent, type_index)` of a vertex id.
    pub fn locate(&self, vertex: usize) -> (usize, usize) {
        let mut rest = vertex;
        for (i, m) in self.marginals.iter().enumerate() {
            if rest < m.len() {
                return (i, rest);
            }
            rest -= m.len();
        }
        panic!("vertex {vertex} out of range");
    }

    pub fn marginal(&self, vertex: usize) -> f64 {
        let (i, k) = self.locate(vertex);
        self.marginals[i][k]
    }

    /// Flat vector of marginals in vertex order.
    pub fn vertex_marginals(&self) -> Vec<f64> {
        self.marginals.iter().flatten().copied().collect()
    }

    /// `p(t_u, t_v)` for vertices of different agents, zero for vertices of one agent.
    pub fn pair(&self, u: usize, v: usize) -> f64 {
        let (iu, ku) = self.locate(u);
        let (iv, kv) = self.locate(v);
        if iu == iv {
            return 0.0;
        }
        match &self.joint {
            JointModel::Independent => self.marginals[iu][ku] * self.marginals[iv][kv],
            JointModel::Correlated { hypotheses } => {
                if ku == kv {
                    hypotheses[ku]
                } else {
                    0.0
                }
            }
            JointModel::Table { pairwise } => pairwise[u * self.num_vertices() + v],
        }
    }

    /// `p(t_u | t_v)`.
    pub fn conditional(&self, u: usize, given: usize) -> f64 {
        self.pair(u, given) / self.marginal(given)
    }

    /// Probability of a full joint type profile, when the model defines one.
    pub fn full_joint(&self, types: &[usize]) -> Option<f64> {
        match &self.joint {
            JointModel::Independent => Some(types.iter().zip(&self.marginals).map(|(k, m)| m[*k]).product()),
            JointModel::Correlated { hypotheses } => {
                let first = *types.first()?;
                Some(if types.iter().all(|k| *k == first) {
                    hypotheses[first]
                } else {
                    0.0
                })
            }
            JointModel::Table { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginals.is_empty() {
            return Err(Error::InvalidPrior("no agents".into()));
        }
        for (i, m) in self.marginals.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::NoTypes(i));
            }
            check_simplex(m, &format!("agent {i}"))?;
        }
        let n = self.num_vertices();
        match &self.joint {
            JointModel::Independent => {}
            JointModel::Correlated { hypotheses } => {
                check_simplex(hypotheses, "hypotheses")?;
                for (i, m) in self.marginals.iter().enumerate() {
                    if m.len() != hypotheses.len()
                        || m.iter().zip(hypotheses).any(|(a, b)| (a - b).abs() > PROB_TOL)
                    {
                        return Err(Error::InvalidPrior(format!(
                            "agent {i} marginals differ from the hypothesis probabilities"
                        )));
                    }
                }
            }
            JointModel::Table { pairwise } => {
                if pairwise.len() != n * n {
                    return Err(Error::LengthMismatch {
                        what: "pairwise prior table",
                        expected: n * n,
                        found: pairwise.len(),
                    });
                }
                for u in 0..n {
                    for v in 0..n {
                        let p = pairwise[u * n + v];
                        if !(p >= 0.0) || !p.is_finite() {
                            return Err(Error::InvalidPrior(format!("entry ({u}, {v}) = {p}")));
                        }
                        if (p - pairwise[v * n + u]).abs() > PROB_TOL {
                            return Err(Error::InvalidPrior(format!("table not symmetric at ({u}, {v})")));
                        }
                    }
                }
                for i in 0..self.num_agents() {
                    for j in 0..self.num_agents() {
                        if i == j {
                            continue;
                        }
                        for u in self.vertices_of(i) {
                            let row: f64 = self.vertices_of(j).map(|v| pairwise[u * n + v]).sum();
                            if (row - self.marginal(u)).abs() > PROB_TOL {
                                return Err(Error::InvalidPrior(format!(
                                    "pairwise table does not marginalize at vertex {u} against agent {j}"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if let Some(x) = p.iter().find(|x| !(**x > MIN_PROBABILITY) || !x.is_finite()) {
        return Err(Error::InvalidPrior(format!("{what}: probability {x} is not strictly positive")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidPrior(format!("{what}: probabilities sum to {s}")));
    }
    Ok(())
}

/// Branch-consistency penalty over the type-players of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTerm {
    pub agent: AgentId,
    pub t_b: usize,
    pub weights: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    /// Sorted by `(agent, type_index)`, matching the prior's vertex order.
    pub players: Vec<TypePlayer>,
    pub prior: BeliefPrior,
    /// Initial state of every agent (shared by all of its types).
    pub initial_states: Vec<State>,
    pub horizon: usize,
    pub model: BicycleModel,
    pub footprint: Footprint,
    pub collision: CollisionSpec,
    #[serde(default)]
    pub limits: ControlLimits,
    #[serde(default)]
    pub contingency: Option<ContingencyTerm>,
}

/// One trajectory per vertex, in vertex order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointStrategy {
    pub trajectories: Vec<Trajectory>,
}

impl JointStrategy {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        JointStrategy { trajectories }
    }

    pub fn get(&self, v: usize) -> Result<&Trajectory> {
        self.trajectories.get(v).ok_or(Error::MissingTrajectory(v))
    }

    pub fn with_replaced(&self, v: usize, traj: Trajectory) -> Self {
        let mut out = self.clone();
        out.trajectories[v] = traj;
        out
    }
}

impl GameSpec {
    pub fn num_agents(&self) -> usize {
        self.prior.num_agents()
    }

    pub fn num_vertices(&self) -> usize {
        self.players.len()
    }

    pub fn agent_of(&self, v: usize) -> usize {
        self.players[v].agent.0
    }

    pub fn vertices_of(&self, agent: usize) -> Range<usize> {
        self.prior.vertices_of(agent)
    }

    pub fn marginal(&self, v: usize) -> f64 {
        self.prior.marginal(v)
    }

    /// Cross-agent vertex pairs `u < v` with positive joint probability.
    pub fn coupled_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.num_vertices();
        let mut out = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if self.agent_of(u) != self.agent_of(v) && self.prior.pair(u, v) > 0.0 {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn initial_state(&self, v: usize) -> State {
        self.initial_states[self.agent_of(v)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("horizon", "must be >= 1"));
        }
        if !(self.model.dt > 0.0) {
            return Err(Error::config("dt", "must be > 0"));
        }
        if !(self.model.wheelbase > 0.0) {
            return Err(Error::config("wheelbase", "must be > 0"));
        }
        self.collision.validate()?;
        self.prior.validate()?;
        if self.initial_states.len() != self.num_agents() {
            return Err(Error::LengthMismatch {
                what: "initial states",
                expected: self.num_agents(),
                found: self.initial_states.len(),
            });
        }
        if self.players.len() != self.prior.num_vertices() {
            return Err(Error::LengthMismatch {
                what: "type-players",
                expected: self.prior.num_vertices(),
                found: self.players.len(),
            });
        }
        for (v, p) in self.players.iter().enumerate() {
            let (agent, k) = self.prior.locate(v);
            if p.agent.0 != agent || p.type_index != k {
                return Err(Error::config(
                    format!("players[{v}]"),
                    format!("expected agent {agent} type {k}, found agent {} type {}", p.agent.0, p.type_index),
                ));
            }
            if p.reference.len() != self.horizon + 1 {
                return Err(Error::config(
                    format!("players[{v}].reference"),
                    format!("length {} != horizon + 1 = {}", p.reference.len(), self.horizon + 1),
                ));
            }
            p.weights
                .validate()
                .map_err(|_| Error::config(format!("players[{v}].weights"), "must be finite and nonnegative"))?;
        }
        if let Some(c) = &self.contingency {
            if c.t_b > self.horizon {
                return Err(Error::BranchOutOfRange {
                    t_b: c.t_b,
                    horizon: self.horizon,
                });
            }
            if c.agent.0 >= self.num_agents() {
                return Err(Error::config("contingency.agent", "no such agent"));
            }
        }
        Ok(())
    }

    fn check_complete(&self, x: &JointStrategy) -> Result<()> {
        if x.trajectories.len() < self.num_vertices() {
            return Err(Error::MissingTrajectory(x.trajectories.len()));
        }
        if x.trajectories.len() > self.num_vertices() {
            return Err(Error::LengthMismatch {
                what: "joint strategy",
                expected: self.num_vertices(),
                found: x.trajectories.len(),
            });
        }
        Ok(())
    }

    /// Own tracking cost `c_v`.
    pub fn ego_cost(&self, x: &JointStrategy, v: usize) -> Result<f64> {
        let p = &self.players[v];
        ego_cost(x.get(v)?, &p.reference, &p.weights)
    }

    /// Pairwise collision cost `c_uv`.
    pub fn pair_cost(&self, x: &JointStrategy, u: usize, v: usize) -> Result<f64> {
        collision_cost(x.get(u)?, x.get(v)?, &self.footprint, &self.collision)
    }

    /// The contingency penalty, zero when the game has none.
    pub fn contingency_cost(&self, x: &JointStrategy) -> Result<f64> {
        let Some(c) = &self.contingency else {
            return Ok(0.0);
        };
        let plans: Vec<Trajectory> = self.vertices_of(c.agent.0).map(|v| x.trajectories[v].clone()).collect();
        contingency_penalty(&plans, c.t_b, &c.weights)
    }
}

/// `C_v = c_v + sum_{u of other agents} p(u | v) c_uv`.
pub fn expected_type_cost(game: &GameSpec, x: &JointStrategy, v: usize) -> Result<f64> {
    game.check_complete(x)?;
    let mut total = game.ego_cost(x, v)?;
    let agent = game.agent_of(v);
    for u in 0..game.num_vertices() {
        if game.agent_of(u) == agent {
            continue;
        }
        let w = game.prior.conditional(u, v);
        if w > 0.0 {
            total += w * game.pair_cost(x, v, u)?;
        }
    }
    Ok(total)
}

/// Potential without the contingency penalty.
pub fn bayesian_potential(game: &GameSpec, x: &JointStrategy) -> Result<f64> {
    game.check_complete(x)?;
    let mut total = 0.0;
    for v in 0..game.num_vertices() {
        total += game.marginal(v) * game.ego_cost(x, v)?;
    }
    for (u, v) in game.coupled_pairs() {
        total += game.prior.pair(u, v) * game.pair_cost(x, u, v)?;
    }
    Ok(total)
}

/// Full potential minimized by the solver: the Bayesian potential plus any contingency penalty.
pub fn potential(game: &GameSpec, x: &JointStrategy) -> Result<f64> {
    Ok(bayesian_potential(game, x)? + game.contingency_cost(x)?)
}

/// `|dP - p(v) dC_v|` for replacing vertex `v`'s trajectory with `alt`.
pub fn potential_identity_residual(game: &GameSpec, x: &JointStrategy, v: usize, alt: &Trajectory) -> Result<f64> {
    game.check_complete(x)?;
    let current = x.get(v)?;
    if alt.states.len() != current.states.len() || alt.controls.len() != current.controls.len() {
        return Err(Error::LengthMismatch {
            what: "perturbed trajectory",
            expected: current.states.len(),
            found: alt.states.len(),
        });
    }
    let y = x.with_replaced(v, alt.clone());
    let dp = bayesian_potential(game, x)? - bayesian_potential(game, &y)?;
    let dc = expected_type_cost(game, x, v)? - expected_type_cost(game, &y, v)?;
    Ok((dp - game.marginal(v) * dc).abs())
}

/// Vertex of `agent` with the lowest expected cost; ties go to the lowest type index.
pub fn best_type(game: &GameSpec, x: &JointStrategy, agent: AgentId) -> Result<usize> {
    if agent.0 >= game.num_agents() {
        return Err(Error::NoTypes(agent.0));
    }
    let mut best: Option<(usize, f64)> = None;
    for v in game.vertices_of(agent.0) {
        let c = expected_type_cost(game, x, v)?;
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v).ok_or(Error::NoTypes(agent.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Control;

    fn still(x: State, t: usize) -> Trajectory {
        Trajectory {
            states: vec![x; t + 1],
            controls: vec![Control::default(); t],
        }
    }

    fn game(marginals: Vec<Vec<f64>>, starts: Vec<State>, t: usize) -> GameSpec {
        let prior = BeliefPrior::independent(marginals).unwrap();
        let mut players = Vec::new();
        for v in 0..prior.num_vertices() {
            let (i, k) = prior.locate(v);
            players.push(TypePlayer {
                agent: AgentId(i),
                type_index: k,
                reference: vec![State::default(); t + 1],
                weights: TrackingWeights::new([0.0, 1.0, 0.0, 2.0], [10.0, 0.1]),
                label: String::new(),
            });
        }
        GameSpec {
            players,
            prior,
            initial_states: starts,
            horizon: t,
            model: BicycleModel::new(2.5, 0.1),
            footprint: Footprint::new(0.0, 0.0),
            collision: CollisionSpec::new(4.5, 1.4),
            limits: ControlLimits::default(),
            contingency: None,
        }
    }

    #[test]
    fn prior_rejects_bad_marginals() {
        assert!(BeliefPrior::independent(vec![vec![0.5, 0.6]]).is_err());
        assert!(BeliefPrior::independent(vec![vec![1.0, 0.0]]).is_err());
        assert!(matches!(BeliefPrior::independent(vec![vec![]]), Err(Error::NoTypes(0))));
        assert!(BeliefPrior::independent(vec![vec![0.25, 0.75], vec![1.0]]).is_ok());
    }

    #[test]
    fn table_prior_must_marginalize() {
        let good = BeliefPrior {
            marginals: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            joint: JointModel::Table {
                pairwise: vec![
                    0.0, 0.0, 0.4, 0.1, //
                    0.0, 0.0, 0.1, 0.4, //
                    0.4, 0.1, 0.0, 0.0, //
                    0.1, 0.4, 0.0, 0.0,
                ],
            },
        };
        good.validate().unwrap();
        assert!((good.conditional(2, 0) - 0.8).abs() < 1e-15);
        let mut bad = good.clone();
        if let JointModel::Table { pairwise } = &mut bad.joint {
            pairwise[2] = 0.3;
            pairwise[8] = 0.3;
        }
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_type_potential_is_ego_cost() {
        let g = game(vec![vec![1.0]], vec![State::default()], 3);
        let x = JointStrategy::new(vec![still(State::new(0.0, 1.0, 0.0, 0.0), 3)]);
        let c = g.ego_cost(&x, 0).unwrap();
        assert_eq!(potential(&g, &x).unwrap(), c);
        assert_eq!(expected_type_cost(&g, &x, 0).unwrap(), c);
        assert_eq!(best_type(&g, &x, AgentId(0)).unwrap(), 0);
    }

    #[test]
    fn uniform_conditionals_weight_couplings_by_half() {
        // point footprints, all four circle pairs at d = 3.5 -> pair cost 4 * 1.4 per step
        let t = 0;
        let g = game(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![State::default(); 2], t);
        let a = still(State::default(), t);
        let b = still(State::new(3.5, 0.0, 0.0, 0.0), t);
        let x = JointStrategy::new(vec![a.clone(), a, b.clone(), b]);
        let pair = g.pair_cost(&x, 0, 2).unwrap();
        assert!((pair - 5.6).abs() < 1e-12);
        let c = expected_type_cost(&g, &x, 0).unwrap();
        assert!((c - pair).abs() < 1e-12);
        // four cross pairs at joint probability 0.25 each
        assert!((potential(&g, &x).unwrap() - pair).abs() < 1e-12);
    }

    #[test]
    fn best_type_argmin_and_ties() {
        let g = game(vec![vec![0.5, 0.5]], vec![State::default()], 0);
        let x = JointStrategy::new(vec![
            still(State::new(0.0, 3.0, 0.0, 0.0), 0),
            still(State::new(0.0, 2.0, 0.0, 0.0), 0),
        ]);
        assert_eq!(best_type(&g, &x, AgentId(0)).unwrap(), 1);
        let tie = JointStrategy::new(vec![still(State::default(), 0); 2]);
        assert_eq!(best_type(&g, &tie, AgentId(0)).unwrap(), 0);
        assert!(best_type(&g, &tie, AgentId(1)).is_err());
    }

    #[test]
    fn missing_trajectory_is_reported() {
        let g = game(vec![vec![0.5, 0.5]], vec![State::default()], 0);
        let x = JointStrategy::new(vec![still(State::default(), 0)]);
        assert!(matches!(potential(&g, &x), Err(Error::MissingTrajectory(1))));
    }

    #[test]
    fn identity_zero_for_null_perturbation() {
        let g = game(vec![vec![0.3, 0.7], vec![1.0]], vec![State::default(); 2], 2);
        let x = JointStrategy::new(vec![
            still(State::new(0.0, 1.0, 0.0, 1.0), 2),
            still(State::new(1.0, 0.0, 0.0, 2.0), 2),
            still(State::new(2.0, 0.5, 0.0, 1.0), 2),
        ]);
        let r = potential_identity_residual(&g, &x, 1, &x.trajectories[1]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn validate_catches_reference_length() {
        let mut g = game(vec![vec![1.0]], vec![State::default()], 3);
        g.validate().unwrap();
        g.players[0].reference.pop();
        assert!(matches!(g.validate(), Err(Error::Config { .. })));
    }
}
