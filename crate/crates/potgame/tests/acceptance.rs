//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits non-zero if
//! any fails. Timing criteria use the worker count from `POTGAME_WORKERS` or the
//! available parallelism.

use std::process::ExitCode;
use std::time::Instant;

use potgame::bench::{median, run_bench, Variant};
use potgame::config::{shipped, BenchParams};
use potgame::exec::{default_workers, Parallel};
use potgame_core::admm::{self, Termination};
use potgame_core::exec::Sequential;
use potgame_core::oracle::centralized_solve;
use potgame_core::simulation::{
    build_contingency_scenario, build_game, contingency_run, monte_carlo, open_loop_run, paired_bootstrap_confidence, presets,
    ScenarioConfig, Setting,
};
use potgame_core::verify::{
    contingency_identity_suite, coupling_gradient_suite, inner_exactness_suite, jacobian_suite, potential_identity_suite,
};

type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn potential_identity() -> Outcome {
    let start = Instant::now();
    let r = potential_identity_suite(1000, 1);
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        r.passed() && secs < 30.0,
        format!("{} draws, worst {:.2e} <= 1e-8, {secs:.1} s < 30 s", r.cases, r.worst),
    )
}

fn contingency_identity() -> Outcome {
    let start = Instant::now();
    let r = contingency_identity_suite(500, 2);
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        r.passed() && secs < 30.0,
        format!("{} draws, worst {:.2e} <= 1e-8, {secs:.1} s < 30 s", r.cases, r.worst),
    )
}

/// Relative distance from `p` to the interval `[lo, hi]`.
fn band_error(p: f64, [lo, hi]: [f64; 2]) -> f64 {
    if p < lo {
        (lo - p) / lo
    } else if p > hi {
        (p - hi) / hi
    } else {
        0.0
    }
}

fn cost_parity() -> Outcome {
    let cases: [(&str, ScenarioConfig, [f64; 2]); 2] = [
        ("merging", presets::merging([0.5, 0.5], 1), [645.9, 647.0]),
        ("intersection", presets::intersection([0.5, 0.5], [0.5, 0.5], 1), [918.3, 919.9]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, cfg, band) in cases {
        let start = Instant::now();
        let (game, graph) = build_game(&cfg).expect("preset builds");
        let init = admm::zero_control_init(&game).expect("zero controls are feasible");
        let exec = Parallel::new(default_workers()).expect("worker pool");
        let dist = admm::solve(&game, &graph, &init, &cfg.solver, &exec).expect("solve");
        let cent = centralized_solve(&game, &init, &cfg.solver, &Sequential::new()).expect("oracle");
        let secs = start.elapsed().as_secs_f64();
        let gap = (dist.potential - cent.potential).abs() / cent.potential.abs();
        let (ed, ec) = (band_error(dist.potential, band), band_error(cent.potential, band));
        pass &= gap <= 0.02 && ed <= 0.05 && ec <= 0.05 && secs < 120.0;
        parts.push(format!(
            "{name} ({} types): distributed {:.2} vs centralized {:.2} (gap {:.2}%), band [{}, {}] off by {:.2}%/{:.2}%, {secs:.1} s",
            game.num_vertices(),
            dist.potential,
            cent.potential,
            100.0 * gap,
            band[0],
            band[1],
            100.0 * ed,
            100.0 * ec
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn inner_exactness() -> Outcome {
    let r = inner_exactness_suite(50, 4, &Sequential::new());
    Outcome::new(
        r.passed(),
        format!(
            "{} cases: objective {:.2e} <= 1e-4, lambda sum {:.2e} <= 1e-10, consensus {:.2e} <= 1e-4",
            r.objective.cases, r.objective.worst, r.lambda_sum.worst, r.consensus.worst
        ),
    )
}

fn gradient_checks() -> Outcome {
    let j = jacobian_suite(100, 5);
    let g = coupling_gradient_suite(100, 5);
    Outcome::new(
        j.passed() && g.passed(),
        format!(
            "Jacobians {} points worst {:.2e} <= 1e-5; gradients {} points worst {:.2e} <= 1e-4",
            j.cases, j.worst, g.cases, g.worst
        ),
    )
}

fn belief_response() -> Outcome {
    let exec = Sequential::new();
    let speed = |w: [f64; 2]| {
        let cfg = presets::merging(w, 1);
        let out = open_loop_run(&cfg, None, &exec).expect("merging solves");
        out.mean_speed(cfg.ego)
    };
    let (even, fast, slow) = (speed([0.5, 0.5]), speed([0.9, 0.1]), speed([0.1, 0.9]));
    Outcome::new(
        (even - 3.0).abs() <= 0.15 && fast < 3.0 && slow > 3.0,
        format!("ego mean speed {even:.3} (|x-3| <= 0.15), {fast:.3} (< 3), {slow:.3} (> 3)"),
    )
}

fn scalability(workers: usize) -> Outcome {
    let start = Instant::now();
    let cfg = shipped("intersection").expect("shipped").scenario;
    let params = BenchParams {
        samples_per_mode: (1..=6).collect(),
        repetitions: 5,
    };
    let table = match run_bench(&cfg, &params, workers) {
        Ok(t) => t,
        Err(e) => return Outcome::new(false, format!("bench failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let central = table.row(Variant::Centralized).expect("centralized row").growth();
    let dist = table.row(Variant::Distributed { workers }).expect("distributed row").growth();
    let monotone = table
        .rows
        .iter()
        .all(|r| r.medians.windows(2).all(|w| w[1] >= w[0]));
    let fmt = |v: Variant| {
        let r = table.row(v).expect("bench row");
        r.medians.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>().join("/")
    };
    Outcome::new(
        dist < central && dist <= 8.0 && secs < 900.0,
        format!(
            "{} to {} types: distributed-{workers} growth {dist:.1}x {} centralized {central:.1}x, {} 8x; monotone columns {monotone}; medians [s] centralized {} distributed {}; {secs:.0} s",
            table.type_counts[0],
            table.type_counts[table.type_counts.len() - 1],
            if dist < central { "<" } else { ">=" },
            if dist <= 8.0 { "<=" } else { ">" },
            fmt(Variant::Centralized),
            fmt(Variant::Distributed { workers })
        ),
    )
}

fn contingency_behavior(workers: usize) -> Outcome {
    let exec = Parallel::new(workers).expect("worker pool");
    let mut lateral = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for p_up in [0.1, 0.5, 0.9] {
        let out = contingency_run(&presets::overtaking(p_up), &exec).expect("overtaking solves");
        lateral.push(out.mean_pre_branch_lateral());
        worst_gap = worst_gap.max(out.gap);
    }
    let monotone =
        lateral.windows(2).all(|w| w[1] < w[0]) || lateral.windows(2).all(|w| w[1] > w[0]);

    let time = |n_speeds: usize| {
        let cfg = presets::overtaking_grid(n_speeds);
        let (game, graph) = build_contingency_scenario(&cfg).expect("grid builds");
        let init = admm::zero_control_init(&game).expect("zero controls are feasible");
        let times: Vec<f64> = (0..15)
            .map(|_| {
                let start = Instant::now();
                let out = admm::solve(&game, &graph, &init, &cfg.solver, &exec).expect("grid solves");
                assert_ne!(out.termination, Termination::Stalled);
                start.elapsed().as_secs_f64()
            })
            .collect();
        median(&times)
    };
    let (t2, t10) = (time(1), time(5));
    let ratio = t10 / t2;
    Outcome::new(
        monotone && worst_gap <= 0.1 && ratio <= 4.0,
        format!(
            "lateral {:.4}/{:.4}/{:.4} monotone {monotone}; gap {worst_gap:.1e} (limit 0.1); 10 vs 2 hypotheses {:.4} s / {:.4} s = {ratio:.1}x {} 4x ({workers} worker(s))",
            lateral[0],
            lateral[1],
            lateral[2],
            t10,
            t2,
            if ratio <= 4.0 { "<=" } else { ">" }
        ),
    )
}

fn safety_ordering(workers: usize) -> Outcome {
    let start = Instant::now();
    let mut cfg = shipped("intersection").expect("shipped");
    cfg.monte_carlo.settings = vec![Setting::Mle, Setting::BneUpdate];
    let exec = Parallel::new(workers).expect("worker pool");
    let out = match monte_carlo(&cfg.scenario, &cfg.monte_carlo, &exec) {
        Ok(o) => o,
        Err(e) => return Outcome::new(false, format!("monte carlo failed: {e}")),
    };
    let bne = out.min_distances(Setting::BneUpdate);
    let mle = out.min_distances(Setting::Mle);
    let conf = paired_bootstrap_confidence(&bne, &mle, 10_000, 9);
    let mean = |xs: &[((usize, usize), f64)]| xs.iter().map(|x| x.1).sum::<f64>() / xs.len() as f64;
    let failures: usize = out.summary.iter().map(|s| s.failures).sum();
    Outcome::new(
        conf >= 0.9 && bne.len() >= 100 && mle.len() >= 100,
        format!(
            "{}x{} runs: BNE-Update {:.3} m vs MLE {:.3} m, confidence {conf:.3} >= 0.9, {failures} failed runs, {:.0} s",
            cfg.monte_carlo.conditions,
            cfg.monte_carlo.draws,
            mean(&bne),
            mean(&mle),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn determinism() -> Outcome {
    let pools: Vec<Parallel> = [1, 2, 4].into_iter().map(|w| Parallel::new(w).expect("worker pool")).collect();
    let mut pass = true;

    let merging = presets::merging([0.5, 0.5], 2);
    let reference = open_loop_run(&merging, None, &Sequential::new()).expect("merging solves");
    for pool in &pools {
        for _ in 0..2 {
            let out = open_loop_run(&merging, None, pool).expect("merging solves");
            pass &= out.solution.strategy == reference.solution.strategy;
            pass &= out.solution.potential.to_bits() == reference.solution.potential.to_bits();
            pass &= out.solution.iterations == reference.solution.iterations;
        }
    }

    let overtaking = presets::overtaking_grid(3);
    let reference = contingency_run(&overtaking, &Sequential::new()).expect("overtaking solves");
    for pool in &pools {
        let out = contingency_run(&overtaking, pool).expect("overtaking solves");
        pass &= out.solution.strategy == reference.solution.strategy && out.executable == reference.executable;
    }

    let toy = shipped("toy").expect("shipped");
    let reference = monte_carlo(&toy.scenario, &toy.monte_carlo, &Sequential::new()).expect("toy monte carlo");
    for pool in &pools {
        pass &= monte_carlo(&toy.scenario, &toy.monte_carlo, pool).expect("toy monte carlo") == reference;
    }
    Outcome::new(pass, "open-loop, contingency and Monte Carlo outputs bit-identical across repeats and 1/2/4 workers")
}

fn main() -> ExitCode {
    let workers = default_workers();
    let criteria: [Criterion; 10] = [
        ("potential identity", Box::new(potential_identity)),
        ("contingency identity", Box::new(contingency_identity)),
        ("oracle cost parity", Box::new(cost_parity)),
        ("inner-problem exactness", Box::new(inner_exactness)),
        ("dynamics and gradient checks", Box::new(gradient_checks)),
        ("belief response", Box::new(belief_response)),
        ("scalability ordering", Box::new(move || scalability(workers))),
        ("contingency behavior", Box::new(move || contingency_behavior(workers))),
        ("closed-loop safety ordering", Box::new(move || safety_ordering(workers))),
        ("determinism", Box::new(determinism)),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let o = run();
        println!("{} {n:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
