use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::filter::{bayes_update, Belief, ObservationModel};
use super::scenario::{game_from_types, IntentModel, ScenarioConfig, TypeTable};
use crate::admm::{self, shift_plan, InteractionGraph, Termination};
use crate::costs::circle_centers;
use crate::dynamics::{Control, State};
use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::game::{best_type, AgentId, GameSpec, JointStrategy};
use crate::math::{cos, ln, sqrt, PI};

/// How the ego agent treats the other agents' intents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Single-hypothesis game on the most likely types of the initial belief.
    Mle,
    /// Bayesian game on the initial belief.
    Bne,
    /// Single-hypothesis game on the most likely types of the filtered belief.
    MleUpdate,
    /// Bayesian game on the filtered belief.
    BneUpdate,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Mle, Setting::Bne, Setting::MleUpdate, Setting::BneUpdate];

    pub fn name(&self) -> &'static str {
        match self {
            Setting::Mle => "mle",
            Setting::Bne => "bne",
            Setting::MleUpdate => "mle_update",
            Setting::BneUpdate => "bne_update",
        }
    }

    fn filters(&self) -> bool {
        matches!(self, Setting::MleUpdate | Setting::BneUpdate)
    }

    fn plans_with_mle(&self) -> bool {
        matches!(self, Setting::Mle | Setting::MleUpdate)
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Setting::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::config("setting", format!("unknown setting '{s}' (mle, bne, mle_update, bne_update)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosedLoopParams {
    /// Simulated steps.
    pub steps: usize,
    /// Planning horizon of every replan, in steps.
    pub horizon: usize,
    /// Steps executed between replans.
    pub replan_period: usize,
    pub observation: ObservationModel,
}

impl Default for ClosedLoopParams {
    fn default() -> Self {
        ClosedLoopParams {
            steps: 100,
            horizon: 20,
            replan_period: 1,
            observation: ObservationModel {
                position_std: 0.1,
                speed_std: Some(0.1),
            },
        }
    }
}

impl ClosedLoopParams {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("closed_loop.steps", "must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("closed_loop.horizon", "must be >= 1"));
        }
        if self.replan_period == 0 || self.replan_period > self.horizon {
            return Err(Error::config("closed_loop.replan_period", "must be in [1, horizon]"));
        }
        self.observation.validate()
    }
}

/// Ego-centric run metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mean_speed_error: f64,
    pub mean_position_error: f64,
    pub mean_abs_steer: f64,
    pub mean_abs_accel: f64,
    pub max_abs_accel: f64,
    /// Smallest circle-center distance between the ego and any other agent.
    pub min_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub agent: usize,
    pub state: State,
    /// Control applied from this state; absent on the final row.
    pub control: Option<Control>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The solver stalled while replanning at `step`.
    Failed { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopOutput {
    pub status: RunStatus,
    /// Metrics over the executed prefix; meaningful only for completed runs.
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRow>,
    /// Belief after every replan.
    pub beliefs: Vec<Belief>,
}

struct WarmGame {
    last: Option<JointStrategy>,
}

impl WarmGame {
    fn new() -> Self {
        WarmGame { last: None }
    }

    fn solve<E: Executor>(&mut self, game: &GameSpec, cfg: &ScenarioConfig, shift: usize, exec: &E) -> Result<admm::SolveOutput> {
        let graph = InteractionGraph::from_game(game);
        let init = match &self.last {
            Some(prev) if prev.trajectories.len() == game.num_vertices() => {
                let mut out = Vec::with_capacity(prev.trajectories.len());
                for (v, plan) in prev.trajectories.iter().enumerate() {
                    let mut p = plan.clone();
                    for _ in 0..shift {
                        p = shift_plan(game, &p, game.initial_state(v))?;
                    }
                    out.push(p);
                }
                JointStrategy::new(out)
            }
            _ => admm::zero_control_init(game)?,
        };
        let out = admm::solve(game, &graph, &init, &cfg.solver, exec)?;
        self.last = Some(out.strategy.clone());
        Ok(out)
    }
}

fn table_from_belief(types: &[Vec<f64>], belief: &Belief) -> TypeTable {
    types
        .iter()
        .zip(&belief.agents)
        .map(|(vs, ps)| vs.iter().zip(ps).map(|(v, p)| (*v, *p, format!("v_ref={v:.3}"))).collect())
        .collect()
}

fn table_single(v_refs: &[f64]) -> TypeTable {
    v_refs.iter().map(|v| vec![(*v, 1.0, format!("v_ref={v:.3}"))]).collect()
}

fn ego_reference(cfg: &ScenarioConfig, ego_v: f64, step: usize) -> State {
    let a = &cfg.agents[cfg.ego];
    let station = a.lane.station(a.initial.px, a.initial.py);
    a.lane.reference(station, ego_v, cfg.dt, step, 1)[0]
}

fn min_circle_distance(a: &State, b: &State, cfg: &ScenarioConfig) -> f64 {
    let fp = cfg.footprint();
    let (ca, cb) = (circle_centers(a, &fp), circle_centers(b, &fp));
    let mut d = f64::INFINITY;
    for p in &ca {
        for q in &cb {
            let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
            d = d.min(sqrt(dx * dx + dy * dy));
        }
    }
    d
}

fn metrics(cfg: &ScenarioConfig, ego_v: f64, states: &[Vec<State>], controls: &[Control]) -> RunMetrics {
    let ego = cfg.ego;
    let n = states.len();
    let mut m = RunMetrics {
        min_distance: f64::INFINITY,
        ..RunMetrics::default()
    };
    for (k, xs) in states.iter().enumerate() {
        let x = xs[ego];
        let r = ego_reference(cfg, ego_v, k);
        m.mean_speed_error += (x.v - ego_v).abs() / n as f64;
        m.mean_position_error += sqrt((x.px - r.px) * (x.px - r.px) + (x.py - r.py) * (x.py - r.py)) / n as f64;
        for (i, other) in xs.iter().enumerate() {
            if i != ego {
                m.min_distance = m.min_distance.min(min_circle_distance(&x, other, cfg));
            }
        }
    }
    if !controls.is_empty() {
        let c = controls.len() as f64;
        m.mean_abs_steer = controls.iter().map(|u| u.steer.abs()).sum::<f64>() / c;
        m.mean_abs_accel = controls.iter().map(|u| u.accel.abs()).sum::<f64>() / c;
        m.max_abs_accel = controls.iter().map(|u| u.accel.abs()).fold(0.0, f64::max);
    }
    m
}

/// Receding-horizon run of one setting. `true_v_ref[i]` is agent `i`'s actual reference
/// speed; the other agents know all of them and follow the equilibrium of that game.
pub fn closed_loop_run<E: Executor>(
    cfg: &ScenarioConfig,
    setting: Setting,
    true_v_ref: &[f64],
    params: &ClosedLoopParams,
    exec: &E,
) -> Result<ClosedLoopOutput> {
    cfg.validate()?;
    params.validate()?;
    if true_v_ref.len() != cfg.agents.len() {
        return Err(Error::LengthMismatch {
            what: "true reference speeds",
            expected: cfg.agents.len(),
            found: true_v_ref.len(),
        });
    }
    let mut cfg_h = cfg.clone();
    cfg_h.horizon = params.horizon;
    let cfg = &cfg_h;
    let ego = cfg.ego;
    let sampled = cfg.sampled_types()?;
    let type_speeds: Vec<Vec<f64>> = sampled.iter().map(|ts| ts.iter().map(|t| t.v_ref).collect()).collect();
    let mut belief = Belief::new(sampled.iter().map(|ts| ts.iter().map(|t| t.probability).collect()).collect())?;
    // the ego knows its own intent
    let ego_v = true_v_ref[ego];
    let mut beliefs = vec![belief.clone()];

    let anchors: Vec<State> = cfg.agents.iter().map(|a| a.initial).collect();
    let mut current = anchors.clone();
    let mut states = vec![current.clone()];
    let mut ego_controls = Vec::new();
    let mut trace = Vec::new();
    let (mut oa_warm, mut bne_warm, mut mle_warm) = (WarmGame::new(), WarmGame::new(), WarmGame::new());

    let mut step = 0;
    let mut status = RunStatus::Completed;
    while step < params.steps {
        let shift = if step == 0 { 0 } else { params.replan_period };
        let stalled = |what: &str| RunStatus::Failed {
            step,
            reason: format!("{what} solve stalled"),
        };

        let mut true_table = table_single(true_v_ref);
        true_table[ego] = vec![(ego_v, 1.0, format!("v_ref={ego_v:.3}"))];
        let oa_game = game_from_types(cfg, &true_table, &current, &anchors, step)?;
        let oa = oa_warm.solve(&oa_game, cfg, shift, exec)?;
        if oa.termination == Termination::Stalled {
            status = stalled("other-agent");
            break;
        }

        let mut own = type_speeds.clone();
        own[ego] = vec![ego_v];
        let mut own_belief = belief.clone();
        own_belief.agents[ego] = vec![1.0];

        let bne = if !setting.plans_with_mle() || setting.filters() {
            let game = game_from_types(cfg, &table_from_belief(&own, &own_belief), &current, &anchors, step)?;
            let out = bne_warm.solve(&game, cfg, shift, exec)?;
            if out.termination == Termination::Stalled {
                status = stalled("Bayesian");
                break;
            }
            Some((game, out))
        } else {
            None
        };

        let ego_plan = if setting.plans_with_mle() {
            let mle: Vec<f64> = own.iter().enumerate().map(|(i, vs)| vs[own_belief.mle(i)]).collect();
            let game = game_from_types(cfg, &table_single(&mle), &current, &anchors, step)?;
            let out = mle_warm.solve(&game, cfg, shift, exec)?;
            if out.termination == Termination::Stalled {
                status = stalled("most-likely");
                break;
            }
            let v = best_type(&game, &out.strategy, AgentId(ego))?;
            out.strategy.trajectories[v].clone()
        } else {
            let (game, out) = bne.as_ref().expect("Bayesian game solved for this setting");
            let v = best_type(game, &out.strategy, AgentId(ego))?;
            out.strategy.trajectories[v].clone()
        };

        let run = params.replan_period.min(params.steps - step);
        for j in 0..run {
            let mut next = current.clone();
            for (i, x) in current.iter().enumerate() {
                let u = if i == ego {
                    ego_plan.controls[j]
                } else {
                    oa.strategy.trajectories[oa_game.vertices_of(i).start].controls[j]
                };
                next[i] = cfg.model().step(x, &cfg.limits.clamp(u))?;
                trace.push(TraceRow {
                    step: step + j,
                    agent: i,
                    state: *x,
                    control: Some(u),
                });
                if i == ego {
                    ego_controls.push(u);
                }
            }
            current = next;
            states.push(current.clone());
        }

        if setting.filters() {
            let (game, out) = bne.as_ref().expect("Bayesian game solved for filtering");
            for i in 0..cfg.agents.len() {
                if i == ego || belief.is_degenerate(i) {
                    continue;
                }
                let predicted: Vec<State> = game
                    .vertices_of(i)
                    .map(|v| out.strategy.trajectories[v].states[run])
                    .collect();
                let u = bayes_update(&belief.agents[i], &current[i], &predicted, &params.observation)?;
                belief.agents[i] = u.probabilities;
            }
            beliefs.push(belief.clone());
        }
        step += run;
    }
    for (i, x) in current.iter().enumerate() {
        trace.push(TraceRow {
            step,
            agent: i,
            state: *x,
            control: None,
        });
    }
    Ok(ClosedLoopOutput {
        status,
        metrics: metrics(cfg, ego_v, &states, &ego_controls),
        trace,
        beliefs,
    })
}

/// Standard normal draw by Box-Muller.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    sqrt(-2.0 * ln(u1)) * cos(2.0 * PI * u2)
}

/// Draws an actual reference speed from an intent model.
pub fn draw_v_ref(intent: &IntentModel, rng: &mut ChaCha8Rng) -> f64 {
    match intent {
        IntentModel::Fixed { v_ref } => *v_ref,
        IntentModel::Mixture { modes } => {
            let mut u: f64 = rng.random::<f64>();
            let mut pick = modes.len() - 1;
            for (k, m) in modes.iter().enumerate() {
                if u < m.weight {
                    pick = k;
                    break;
                }
                u -= m.weight;
            }
            let m = &modes[pick];
            m.mean + m.std * standard_normal(rng)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloParams {
    pub conditions: usize,
    pub draws: usize,
    pub seed: u64,
    /// Half-width of the uniform jitter on initial positions.
    pub position_jitter: f64,
    /// Half-width of the uniform jitter on initial speeds.
    pub speed_jitter: f64,
    /// Range of the first mixture weight of every bimodal intent.
    pub weight_range: [f64; 2],
    pub settings: Vec<Setting>,
    pub closed_loop: ClosedLoopParams,
}

impl Default for MonteCarloParams {
    fn default() -> Self {
        MonteCarloParams {
            conditions: 50,
            draws: 2,
            seed: 0,
            position_jitter: 1.0,
            speed_jitter: 0.3,
            weight_range: [0.1, 0.9],
            settings: Setting::ALL.to_vec(),
            closed_loop: ClosedLoopParams::default(),
        }
    }
}

impl MonteCarloParams {
    pub fn validate(&self) -> Result<()> {
        if self.conditions == 0 || self.draws == 0 {
            return Err(Error::config("monte_carlo", "conditions and draws must be >= 1"));
        }
        let [lo, hi] = self.weight_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::config("monte_carlo.weight_range", "need 0 < lo <= hi < 1"));
        }
        if !(self.position_jitter >= 0.0 && self.speed_jitter >= 0.0) {
            return Err(Error::config("monte_carlo", "jitter must be >= 0"));
        }
        if self.settings.is_empty() {
            return Err(Error::config("monte_carlo.settings", "at least one setting required"));
        }
        self.closed_loop.validate()
    }
}

/// A sampled initial condition with its true-type draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub config: ScenarioConfig,
    pub draws: Vec<Vec<f64>>,
}

/// Conditions depend only on the seed, so the settings list never changes them.
pub fn sample_conditions(cfg: &ScenarioConfig, p: &MonteCarloParams) -> Result<Vec<Condition>> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut out = Vec::with_capacity(p.conditions);
    for _ in 0..p.conditions {
        let mut c = cfg.clone();
        for a in c.agents.iter_mut() {
            if p.position_jitter > 0.0 {
                a.initial.px += rng.random_range(-p.position_jitter..=p.position_jitter);
                a.initial.py += rng.random_range(-p.position_jitter..=p.position_jitter);
            }
            if p.speed_jitter > 0.0 {
                a.initial.v += rng.random_range(-p.speed_jitter..=p.speed_jitter);
            }
            if let IntentModel::Mixture { modes } = &mut a.intent {
                if modes.len() == 2 {
                    let w: f64 = rng.random_range(p.weight_range[0]..=p.weight_range[1]);
                    modes[0].weight = w;
                    modes[1].weight = 1.0 - w;
                }
            }
        }
        let draws = (0..p.draws)
            .map(|_| c.agents.iter().map(|a| draw_v_ref(&a.intent, &mut rng)).collect())
            .collect();
        out.push(Condition { config: c, draws });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub condition: usize,
    pub draw: usize,
    pub setting: Setting,
    pub status: RunStatus,
    pub metrics: RunMetrics,
}

/// Per-setting means over completed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: Setting,
    pub runs: usize,
    pub failures: usize,
    pub mean: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOutput {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl MonteCarloOutput {
    /// Min distances of completed runs for `setting`, keyed by (condition, draw).
    pub fn min_distances(&self, setting: Setting) -> Vec<((usize, usize), f64)> {
        self.runs
            .iter()
            .filter(|r| r.setting == setting && r.status == RunStatus::Completed)
            .map(|r| ((r.condition, r.draw), r.metrics.min_distance))
            .collect()
    }
}

pub fn summarize(runs: &[RunRecord], settings: &[Setting]) -> Vec<SummaryRow> {
    settings
        .iter()
        .map(|&s| {
            let ok: Vec<&RunMetrics> = runs
                .iter()
                .filter(|r| r.setting == s && r.status == RunStatus::Completed)
                .map(|r| &r.metrics)
                .collect();
            let failures = runs.iter().filter(|r| r.setting == s).count() - ok.len();
            let n = ok.len().max(1) as f64;
            let mut mean = RunMetrics::default();
            for m in &ok {
                mean.mean_speed_error += m.mean_speed_error / n;
                mean.mean_position_error += m.mean_position_error / n;
                mean.mean_abs_steer += m.mean_abs_steer / n;
                mean.mean_abs_accel += m.mean_abs_accel / n;
                mean.max_abs_accel += m.max_abs_accel / n;
                mean.min_distance += m.min_distance / n;
            }
            SummaryRow {
                setting: s,
                runs: ok.len(),
                failures,
                mean,
            }
        })
        .collect()
}

/// Runs every (condition, draw, setting) triple on `exec`; each run solves sequentially.
pub fn monte_carlo<E: Executor>(cfg: &ScenarioConfig, p: &MonteCarloParams, exec: &E) -> Result<MonteCarloOutput> {
    cfg.validate()?;
    let conditions = sample_conditions(cfg, p)?;
    let mut jobs = Vec::new();
    for (c, cond) in conditions.iter().enumerate() {
        for d in 0..cond.draws.len() {
            for &s in &p.settings {
                jobs.push((c, d, s));
            }
        }
    }
    let results = exec.map(jobs.len(), |k| {
        let (c, d, s) = jobs[k];
        let cond = &conditions[c];
        let out = closed_loop_run(&cond.config, s, &cond.draws[d], &p.closed_loop, &Sequential::new());
        let (status, metrics) = match out {
            Ok(o) => (o.status, o.metrics),
            Err(e) => (
                RunStatus::Failed {
                    step: 0,
                    reason: e.to_string(),
                },
                RunMetrics::default(),
            ),
        };
        RunRecord {
            condition: c,
            draw: d,
            setting: s,
            status,
            metrics,
        }
    });
    let summary = summarize(&results, &p.settings);
    Ok(MonteCarloOutput { runs: results, summary })
}

/// One-sided paired bootstrap: fraction of resamples whose mean of `a - b` is >= 0.
/// Pairs are matched by key; unmatched entries are dropped.
pub fn paired_bootstrap_confidence(a: &[((usize, usize), f64)], b: &[((usize, usize), f64)], resamples: usize, seed: u64) -> f64 {
    let diffs: Vec<f64> = a
        .iter()
        .filter_map(|(k, x)| b.iter().find(|(kb, _)| kb == k).map(|(_, y)| x - y))
        .collect();
    if diffs.is_empty() || resamples == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = diffs.len();
    let mut hits = 0;
    for _ in 0..resamples {
        let s: f64 = (0..n).map(|_| diffs[rng.random_range(0..n)]).sum();
        if s >= 0.0 {
            hits += 1;
        }
    }
    hits as f64 / resamples as f64
}
