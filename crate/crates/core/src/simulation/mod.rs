//! Scenarios, intent sampling, open-loop solves and closed-loop receding-horizon runs.

mod closed_loop;
mod filter;
pub mod presets;
mod scenario;

pub use closed_loop::*;
pub use filter::*;
pub use scenario::*;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::admm::{self, InteractionGraph, SolveOutput};
use crate::contingency::{pre_branch_gap, snap_pre_branch};
use crate::error::Result;
use crate::exec::Executor;
use crate::game::{GameSpec, JointStrategy};

/// One output row per (timestep, type-player). Controls are absent on the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub agent: usize,
    #[serde(rename = "type")]
    pub type_index: usize,
    pub p_x: f64,
    pub p_y: f64,
    pub theta: f64,
    pub v: f64,
    pub delta: Option<f64>,
    pub a: Option<f64>,
    pub probability: f64,
}

pub fn trajectory_rows(game: &GameSpec, x: &JointStrategy) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for t in 0..=game.horizon {
        for (v, p) in game.players.iter().enumerate() {
            let traj = &x.trajectories[v];
            let s = traj.states[t];
            let u = traj.controls.get(t);
            rows.push(TrajectoryRow {
                t,
                agent: p.agent.0,
                type_index: p.type_index,
                p_x: s.px,
                p_y: s.py,
                theta: s.heading,
                v: s.v,
                delta: u.map(|u| u.steer),
                a: u.map(|u| u.accel),
                probability: game.marginal(v),
            });
        }
    }
    rows
}

#[derive(Debug, Clone)]
pub struct OpenLoopOutput {
    pub game: GameSpec,
    pub graph: InteractionGraph,
    pub solution: SolveOutput,
}

impl OpenLoopOutput {
    pub fn rows(&self) -> Vec<TrajectoryRow> {
        trajectory_rows(&self.game, &self.solution.strategy)
    }

    /// Mean speed of `agent`'s most probable type over the plan.
    pub fn mean_speed(&self, agent: usize) -> f64 {
        let vs = self.game.vertices_of(agent);
        let v = vs
            .clone()
            .fold(vs.start, |best, v| if self.game.marginal(v) > self.game.marginal(best) { v } else { best });
        let states = &self.solution.strategy.trajectories[v].states;
        states.iter().map(|s| s.v).sum::<f64>() / states.len() as f64
    }
}

/// Solves the scenario's Bayesian game from a zero-control start. `marginals` overrides
/// the sampled type probabilities when given.
pub fn open_loop_run<E: Executor>(cfg: &ScenarioConfig, marginals: Option<&Belief>, exec: &E) -> Result<OpenLoopOutput> {
    let (mut game, graph) = build_game(cfg)?;
    if let Some(b) = marginals {
        game.prior = b.to_prior()?;
        game.validate()?;
    }
    let init = admm::zero_control_init(&game)?;
    let solution = admm::solve(&game, &graph, &init, &cfg.solver, exec)?;
    Ok(OpenLoopOutput { game, graph, solution })
}

#[derive(Debug, Clone)]
pub struct ContingencyOutput {
    pub game: GameSpec,
    pub graph: InteractionGraph,
    pub solution: SolveOutput,
    /// Solution with the ego's pre-branch controls averaged into one shared prefix.
    pub executable: JointStrategy,
    /// Pre-branch gap of the raw solution.
    pub gap: f64,
}

impl ContingencyOutput {
    /// Probability-weighted mean lateral position of the ego plans before the branch.
    pub fn mean_pre_branch_lateral(&self) -> f64 {
        let Some(c) = &self.game.contingency else {
            return 0.0;
        };
        let mut acc = 0.0;
        for v in self.game.vertices_of(c.agent.0) {
            let st = &self.solution.strategy.trajectories[v].states[..c.t_b.max(1)];
            acc += self.game.marginal(v) * st.iter().map(|s| s.py).sum::<f64>() / st.len() as f64;
        }
        acc
    }
}

pub fn contingency_run<E: Executor>(cfg: &ScenarioConfig, exec: &E) -> Result<ContingencyOutput> {
    let (game, graph) = build_contingency_scenario(cfg)?;
    let init = admm::zero_control_init(&game)?;
    let solution = admm::solve(&game, &graph, &init, &cfg.solver, exec)?;
    let gap = pre_branch_gap(&game, &solution.strategy);
    let executable = snap_pre_branch(&game, &solution.strategy)?;
    Ok(ContingencyOutput {
        game,
        graph,
        solution,
        executable,
        gap,
    })
}
