//! Wall-clock timing of the centralized and distributed solvers over growing type counts.

use std::path::Path;
use std::time::Instant;

use potgame_core::admm::{self, Termination};
use potgame_core::exec::Sequential;
use potgame_core::oracle::centralized_solve;
use potgame_core::simulation::{build_game, ScenarioConfig};

use crate::config::BenchParams;
use crate::error::CliError;
use crate::exec::Parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Centralized,
    Distributed { workers: usize },
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::Centralized => "centralized".into(),
            Variant::Distributed { workers } => format!("distributed-{workers}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: Variant,
    /// Median wall time in seconds, one per column.
    pub medians: Vec<f64>,
    pub potentials: Vec<f64>,
}

impl BenchRow {
    /// Median time of the last column over the first.
    pub fn growth(&self) -> f64 {
        self.medians[self.medians.len() - 1] / self.medians[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    /// Total type-players of each column.
    pub type_counts: Vec<usize>,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn row(&self, variant: Variant) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["solver".to_string()];
        header.extend(self.type_counts.iter().map(|n| format!("types_{n}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.variant.label()];
            rec.extend(r.medians.iter().map(|t| format!("{t:.6}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn stalled(name: &str, types: usize) -> CliError {
    CliError::Stalled(format!("{name} solve with {types} type-players"))
}

/// Times every variant on `cfg` at each configured samples-per-mode count.
pub fn run_bench(cfg: &ScenarioConfig, params: &BenchParams, workers: usize) -> Result<BenchTable, CliError> {
    params.validate()?;
    let mut variants = vec![Variant::Centralized, Variant::Distributed { workers: 1 }];
    if workers > 1 {
        variants.push(Variant::Distributed { workers });
    }
    let mut rows: Vec<BenchRow> = variants
        .iter()
        .map(|&variant| BenchRow {
            variant,
            medians: vec![],
            potentials: vec![],
        })
        .collect();
    let mut type_counts = Vec::new();
    for &k in &params.samples_per_mode {
        let mut c = cfg.clone();
        c.samples_per_mode = k;
        let (game, graph) = build_game(&c)?;
        let init = admm::zero_control_init(&game)?;
        type_counts.push(game.num_vertices());
        for row in rows.iter_mut() {
            let mut times = Vec::with_capacity(params.repetitions);
            let mut p = f64::NAN;
            for _ in 0..params.repetitions {
                let (elapsed, potential, termination) = match row.variant {
                    Variant::Centralized => {
                        let clock = Sequential::new();
                        let start = Instant::now();
                        let out = centralized_solve(&game, &init, &c.solver, &clock)?;
                        (start.elapsed().as_secs_f64(), out.potential, out.termination)
                    }
                    Variant::Distributed { workers } => {
                        let exec = Parallel::new(workers)?;
                        let start = Instant::now();
                        let out = admm::solve(&game, &graph, &init, &c.solver, &exec)?;
                        (start.elapsed().as_secs_f64(), out.potential, out.termination)
                    }
                };
                if termination == Termination::Stalled {
                    return Err(stalled(&row.variant.label(), game.num_vertices()));
                }
                times.push(elapsed);
                p = potential;
            }
            row.medians.push(median(&times));
            row.potentials.push(p);
        }
    }
    Ok(BenchTable { type_counts, rows })
}
