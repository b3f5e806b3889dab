//! Execution of experiment cells.

use std::time::Instant;

use hems_core::agent::{derive_seed, evaluate, train, EpisodeLog};
use hems_core::baselines::{dp_oracle, run_baseline1, run_baseline2};
use hems_core::TraceSet;
use rayon::prelude::*;

use crate::spec::{Cell, ExperimentSpec, PolicyId};
use crate::{HarnessError, Result};

/// Seed stream for evaluation-time disturbances. It depends only on the
/// cell seed so every policy in a row sees the same realization.
const STREAM_EVAL: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub policy: PolicyId,
    pub seed: u64,
    pub beta: f64,
    pub disturbance: f64,
    pub total_energy_cost: f64,
    pub total_temp_deviation: f64,
    pub wall_time_s: f64,
}

/// Everything one cell produced.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub summary: RunSummary,
    pub log: EpisodeLog,
    /// Per-episode training reward and its moving average, for learned policies.
    pub curve: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: std::result::Result<CellRun, String>,
}

/// Training and test traces loaded once per experiment.
#[derive(Debug, Clone)]
pub struct Workload {
    pub train: TraceSet,
    pub test: TraceSet,
}

impl Workload {
    pub fn load(spec: &ExperimentSpec) -> Result<Self> {
        Ok(Self {
            train: spec.train_traces.load(&spec.base_dir)?,
            test: spec.test_traces.load(&spec.base_dir)?,
        })
    }
}

/// Evaluation window `(start, n_slots)` on the test traces.
pub fn eval_window(spec: &ExperimentSpec, test: &TraceSet) -> Result<(usize, usize)> {
    let len = test.horizon_len();
    if spec.eval_start_slot >= len {
        return Err(HarnessError::Spec(format!(
            "eval_start_slot {} is past the test trace ({len} slots)",
            spec.eval_start_slot
        )));
    }
    let n = if spec.eval_slots == 0 {
        len - spec.eval_start_slot
    } else {
        spec.eval_slots
    };
    Ok((spec.eval_start_slot, n))
}

pub fn eval_disturbance_seed(seed: u64) -> u64 {
    derive_seed(seed, STREAM_EVAL)
}

/// Run a single cell. The result depends only on the spec, the traces and
/// the cell itself.
pub fn run_cell(spec: &ExperimentSpec, work: &Workload, cell: &Cell) -> Result<CellRun> {
    let started = Instant::now();
    let home = cell.home(&spec.home);
    let tc = cell.train_config(&spec.train);
    let (start, n) = eval_window(spec, &work.test)?;
    let dseed = eval_disturbance_seed(cell.seed);
    let (log, curve) = match cell.policy {
        PolicyId::Proposed => {
            let report = train(&work.train, &home, &tc)?;
            let log = evaluate(
                &report.actor,
                &report.norm_stats,
                &work.test,
                &home,
                start,
                n,
                dseed,
            )?;
            (log, Some((report.episode_rewards, report.moving_avg)))
        }
        PolicyId::Baseline1 => (run_baseline1(&work.test, &home, start, n, dseed)?, None),
        PolicyId::Baseline2 => {
            let (log, report) =
                run_baseline2(&work.train, &work.test, &home, &tc, start, n, dseed)?;
            (log, Some((report.episode_rewards, report.moving_avg)))
        }
        PolicyId::Oracle => (
            dp_oracle(&work.test, &home, &spec.oracle, start, n)?.schedule,
            None,
        ),
    };
    Ok(CellRun {
        summary: RunSummary {
            policy: cell.policy,
            seed: cell.seed,
            beta: cell.beta,
            disturbance: cell.disturbance,
            total_energy_cost: log.total_cost,
            total_temp_deviation: log.total_deviation,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        log,
        curve,
    })
}

/// Run every cell of the spec, in parallel, in the order of
/// [`ExperimentSpec::cells`]. A failing cell is recorded and the rest still run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<CellOutcome>> {
    spec.validate()?;
    let work = Workload::load(spec)?;
    eval_window(spec, &work.test)?;
    Ok(run_cells(spec, &work, &spec.cells()))
}

pub fn run_cells(spec: &ExperimentSpec, work: &Workload, cells: &[Cell]) -> Vec<CellOutcome> {
    cells
        .par_iter()
        .map(|cell| CellOutcome {
            cell: *cell,
            result: run_cell(spec, work, cell).map_err(|e| e.to_string()),
        })
        .collect()
}
