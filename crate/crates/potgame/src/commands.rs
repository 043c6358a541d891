//! Subcommand implementations. Each writes its files under `out` and returns an error
//! whose [`CliError::exit_code`] is the process status.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use potgame_core::admm::Termination;
use potgame_core::exec::Sequential;
use potgame_core::game::{bayesian_potential, potential_identity_residual};
use potgame_core::simulation::{contingency_run, monte_carlo, open_loop_run, trajectory_rows, Setting};
use potgame_core::verify::{
    contingency_identity_suite, coupling_gradient_suite, inner_exactness_suite, jacobian_suite, potential_identity_suite,
    random_trajectory, SuiteReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::run_bench;
use crate::config::{load, RunConfig};
use crate::error::CliError;
use crate::exec::Parallel;
use crate::output::{ensure_dir, write_csv, write_diagnostics, write_json, write_jsonl, write_trajectories, MetricsRow, RunRow};

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub workers: usize,
    pub seed: Option<u64>,
    pub settings: Vec<Setting>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub json_diagnostics: bool,
}

impl Options {
    pub fn new(config: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Options {
            config: Some(config.into()),
            out: out.into(),
            workers: 1,
            seed: None,
            settings: vec![],
            sigma: None,
            rho: None,
            json_diagnostics: false,
        }
    }

    /// Loads the config and applies the command-line overrides.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| CliError::config("--config", "required for this command"))?;
        let mut cfg = load(path)?;
        if let Some(s) = self.sigma {
            cfg.scenario.solver.admm.sigma = s;
        }
        if let Some(r) = self.rho {
            cfg.scenario.solver.admm.rho = r;
        }
        if let Some(seed) = self.seed {
            cfg.scenario.seed = seed;
            cfg.monte_carlo.seed = seed;
        }
        if !self.settings.is_empty() {
            cfg.monte_carlo.settings = self.settings.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn executor(&self) -> Result<Parallel, CliError> {
        Parallel::new(self.workers)
    }
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    scenario: String,
    type_players: usize,
    potential: f64,
    termination: Termination,
    iterations: usize,
    ego_mean_speed: f64,
}

fn print_diagnostics<T: Serialize>(records: &[T]) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    write_jsonl(&mut lock, records)?;
    lock.flush().map_err(|e| CliError::io("<stdout>", e))
}

/// Open-loop Bayesian game solve: `trajectories.csv`, `diagnostics.jsonl`, `summary.json`.
pub fn solve(opts: &Options) -> Result<(), CliError> {
    let cfg = opts.run_config()?;
    let exec = opts.executor()?;
    let out = open_loop_run(&cfg.scenario, None, &exec)?;
    ensure_dir(&opts.out)?;
    write_trajectories(&opts.out.join("trajectories.csv"), &out.rows())?;
    write_diagnostics(&opts.out.join("diagnostics.jsonl"), &out.solution.history)?;
    let summary = SolveSummary {
        scenario: cfg.scenario.name.clone(),
        type_players: out.game.num_vertices(),
        potential: out.solution.potential,
        termination: out.solution.termination,
        iterations: out.solution.iterations,
        ego_mean_speed: out.mean_speed(cfg.scenario.ego),
    };
    write_json(&opts.out.join("summary.json"), &summary)?;
    if opts.json_diagnostics {
        print_diagnostics(&out.solution.history)?;
    }
    info!(
        "{}: potential {:.4} after {} iterations ({:?})",
        summary.scenario, summary.potential, summary.iterations, summary.termination
    );
    if out.solution.termination == Termination::Stalled {
        return Err(CliError::Stalled(format!("{} after {} iterations", summary.scenario, summary.iterations)));
    }
    Ok(())
}

/// Closed-loop Monte Carlo study: `metrics.csv` (one row per setting) and `runs.csv`.
pub fn simulate(opts: &Options) -> Result<(), CliError> {
    let cfg = opts.run_config()?;
    let exec = opts.executor()?;
    let out = monte_carlo(&cfg.scenario, &cfg.monte_carlo, &exec)?;
    ensure_dir(&opts.out)?;
    let metrics: Vec<MetricsRow> = out.summary.iter().map(MetricsRow::from).collect();
    write_csv(&opts.out.join("metrics.csv"), &metrics)?;
    let runs: Vec<RunRow> = out.runs.iter().map(RunRow::from).collect();
    write_csv(&opts.out.join("runs.csv"), &runs)?;
    for m in &metrics {
        println!(
            "{:<11} runs {:>4} failed {:>3}  dV {:.3}  dX {:.3}  |delta| {:.3}  |a| {:.3}  d {:.3}",
            m.setting, m.runs, m.failures, m.mean_speed_error, m.mean_position_error, m.mean_abs_steer, m.mean_abs_accel, m.min_distance
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ContingencySummary {
    scenario: String,
    hypotheses: usize,
    potential: f64,
    termination: Termination,
    iterations: usize,
    pre_branch_gap: f64,
    mean_pre_branch_lateral: f64,
}

/// Contingency solve: `plans/hypothesis_<k>.csv` per hypothesis, `executable.csv` with the
/// shared pre-branch prefix, `diagnostics.jsonl` and `summary.json`.
pub fn contingency(opts: &Options) -> Result<(), CliError> {
    let cfg = opts.run_config()?;
    let exec = opts.executor()?;
    let out = contingency_run(&cfg.scenario, &exec)?;
    let plans = opts.out.join("plans");
    ensure_dir(&plans)?;
    let rows = trajectory_rows(&out.game, &out.solution.strategy);
    let hypotheses = cfg.scenario.contingency.as_ref().map_or(0, |c| c.hypotheses.len());
    for k in 0..hypotheses {
        let mine: Vec<_> = rows.iter().filter(|r| r.type_index == k).cloned().collect();
        write_trajectories(&plans.join(format!("hypothesis_{k}.csv")), &mine)?;
    }
    write_trajectories(&opts.out.join("executable.csv"), &trajectory_rows(&out.game, &out.executable))?;
    write_diagnostics(&opts.out.join("diagnostics.jsonl"), &out.solution.history)?;
    let summary = ContingencySummary {
        scenario: cfg.scenario.name.clone(),
        hypotheses,
        potential: out.solution.potential,
        termination: out.solution.termination,
        iterations: out.solution.iterations,
        pre_branch_gap: out.gap,
        mean_pre_branch_lateral: out.mean_pre_branch_lateral(),
    };
    write_json(&opts.out.join("summary.json"), &summary)?;
    if opts.json_diagnostics {
        print_diagnostics(&out.solution.history)?;
    }
    if out.solution.termination == Termination::Stalled {
        return Err(CliError::Stalled(format!("{} after {} iterations", summary.scenario, summary.iterations)));
    }
    Ok(())
}

/// Timing table over type counts: `bench.csv`.
pub fn bench(opts: &Options) -> Result<(), CliError> {
    let cfg = opts.run_config()?;
    let table = run_bench(&cfg.scenario, &cfg.bench, opts.workers)?;
    ensure_dir(&opts.out)?;
    table.write_csv(&opts.out.join("bench.csv"))?;
    print!("{:<16}", "solver");
    for n in &table.type_counts {
        print!("{:>10}", format!("{n} types"));
    }
    println!("{:>10}", "growth");
    for r in &table.rows {
        print!("{:<16}", r.variant.label());
        for t in &r.medians {
            print!("{t:>10.4}");
        }
        println!("{:>9.1}x", r.growth());
    }
    Ok(())
}

fn report_line(r: &SuiteReport) -> String {
    format!(
        "{} {}: {} cases, worst {:.3e} (tolerance {:.0e})",
        if r.passed() { "PASS" } else { "FAIL" },
        r.name,
        r.cases,
        r.worst,
        r.tolerance
    )
}

/// Checks on a solved scenario: monotone potential, potential identity at the
/// solution, and identical results across worker counts.
fn scenario_checks(cfg: &RunConfig, workers: usize, seed: u64) -> Result<Vec<(bool, String)>, CliError> {
    let mut lines = Vec::new();
    let seq = open_loop_run(&cfg.scenario, None, &Sequential::new())?;
    let hist = &seq.solution.history;
    let monotone = hist.windows(2).all(|w| w[1].potential <= w[0].potential);
    lines.push((
        monotone && seq.solution.termination != Termination::Stalled,
        format!(
            "{}: {} iterations, potential {:.4} ({:?}), monotone {monotone}",
            cfg.scenario.name, seq.solution.iterations, seq.solution.potential, seq.solution.termination
        ),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, x) = (&seq.game, &seq.solution.strategy);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let v = rng.random_range(0..g.num_vertices());
        let alt = random_trajectory(&mut rng, g.horizon, 3.0);
        let y = x.with_replaced(v, alt.clone());
        let dp = bayesian_potential(g, x)? - bayesian_potential(g, &y)?;
        worst = worst.max(potential_identity_residual(g, x, v, &alt)? / (1.0 + dp.abs()));
    }
    lines.push((worst <= 1e-8, format!("potential identity at solution: worst {worst:.3e} (tolerance 1e-8)")));

    let par = open_loop_run(&cfg.scenario, None, &Parallel::new(workers.max(2))?)?;
    let same = par.solution.strategy == seq.solution.strategy && par.solution.potential == seq.solution.potential;
    lines.push((same, format!("worker-count invariance (1 vs {}): {same}", workers.max(2))));
    Ok(lines)
}

/// Runs the randomized property suites, plus scenario checks when a config is given.
pub fn verify(opts: &Options) -> Result<(), CliError> {
    let seed = opts.seed.unwrap_or(0);
    let exec = opts.executor()?;
    let mut results: Vec<(bool, String)> = Vec::new();
    for r in [
        potential_identity_suite(1000, seed),
        contingency_identity_suite(500, seed),
        jacobian_suite(100, seed),
        coupling_gradient_suite(100, seed),
    ] {
        results.push((r.passed(), report_line(&r)));
    }
    let inner = inner_exactness_suite(50, seed, &exec);
    for r in [&inner.objective, &inner.lambda_sum, &inner.consensus] {
        results.push((r.passed(), report_line(r)));
    }
    if opts.config.is_some() {
        let cfg = opts.run_config()?;
        for (ok, line) in scenario_checks(&cfg, opts.workers, seed)? {
            results.push((ok, format!("{} {line}", if ok { "PASS" } else { "FAIL" })));
        }
    }
    for (_, line) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|(ok, _)| !ok).count();
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} check(s) failed")));
    }
    Ok(())
}

/// Path of the shipped config `name` inside this crate.
pub fn shipped_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}
