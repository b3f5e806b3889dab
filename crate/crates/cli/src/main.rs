use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hems_cli::run::{eval_disturbance_seed, eval_window};
use hems_cli::{
    emit_report, read_runs_csv, run_experiment, summarize, write_summary_csv, ExperimentSpec,
    Workload,
};
use hems_core::agent::{evaluate, train};
use hems_core::baselines::{dp_oracle, run_baseline1, run_baseline2};
use hems_core::{Mlp, NormStats};

#[derive(Parser)]
#[command(
    name = "hems",
    version,
    about = "Home energy management with DDPG: training, baselines and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment spec (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seed list with one seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated reward weights.
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    /// Comma-separated disturbance half-widths (F).
    #[arg(long, value_delimiter = ',')]
    disturbance: Vec<f64>,
    /// Training episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Baseline1,
    Baseline2,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training and test traces as CSV.
    GenTraces(Common),
    /// Train the agent; writes weights, normalization bounds and the reward curve.
    Train(Common),
    /// Roll out trained weights on the test traces.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Run a baseline on the test traces.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "baseline1")]
        which: Baseline,
    },
    /// Solve the perfect-information schedule for the test window.
    Oracle(Common),
    /// Run the full policy x seed x beta x disturbance grid.
    Experiment(Common),
    /// Recompute summary.csv from the runs.csv in `--out`.
    Report(Common),
}

impl Common {
    fn spec(&self) -> anyhow::Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => ExperimentSpec::load(p)?,
            None => ExperimentSpec::default(),
        };
        if let Some(s) = self.seed {
            spec.seeds = vec![s];
        }
        if !self.beta.is_empty() {
            spec.betas = self.beta.clone();
        }
        if !self.disturbance.is_empty() {
            spec.disturbances = self.disturbance.clone();
        }
        if let Some(m) = self.episodes {
            spec.train.episodes = m;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

/// Single-run commands use the first entry of each list.
fn first_cell(spec: &ExperimentSpec) -> (u64, hems_core::HomeConfig) {
    let home = hems_core::HomeConfig {
        beta: spec.betas[0],
        ..spec.home.clone()
    }
    .with_disturbance(spec.disturbances[0]);
    (spec.seeds[0], home)
}

fn print_totals(log: &hems_core::EpisodeLog) {
    println!("total_energy_cost {}", log.total_cost);
    println!("total_temp_deviation {}", log.total_deviation);
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::GenTraces(c) => {
            let spec = c.spec()?;
            let out = c.out_dir()?;
            let work = Workload::load(&spec)?;
            work.train.write_csv(out.join("train_traces.csv"))?;
            work.test.write_csv(out.join("test_traces.csv"))?;
        }
        Command::Train(c) => {
            let spec = c.spec()?;
            let out = c.out_dir()?;
            let (seed, home) = first_cell(&spec);
            let work = Workload::load(&spec)?;
            let cfg = hems_core::TrainConfig {
                seed,
                ..spec.train.clone()
            };
            let report = train(&work.train, &home, &cfg)?;
            report.actor.save(out.join("actor.txt"))?;
            report.critic.save(out.join("critic.txt"))?;
            report.norm_stats.write_csv(out.join("norm_stats.csv"))?;
            report.write_csv(out.join("training.csv"))?;
            println!("episodes {}", report.episode_rewards.len());
            if let Some(m) = report.moving_avg.last() {
                println!("final_moving_avg {m}");
            }
        }
        Command::Evaluate { common: c, model } => {
            let spec = c.spec()?;
            let out = c.out_dir()?;
            let (seed, home) = first_cell(&spec);
            let actor = Mlp::load(model.join("actor.txt"))?;
            let stats = NormStats::read_csv(model.join("norm_stats.csv"))?;
            let work = Workload::load(&spec)?;
            let (start, n) = eval_window(&spec, &work.test)?;
            let log = evaluate(
                &actor,
                &stats,
                &work.test,
                &home,
                start,
                n,
                eval_disturbance_seed(seed),
            )?;
            log.write_csv(out.join("evaluation.csv"))?;
            print_totals(&log);
        }
        Command::Baseline { common: c, which } => {
            let spec = c.spec()?;
            let out = c.out_dir()?;
            let (seed, home) = first_cell(&spec);
            let work = Workload::load(&spec)?;
            let (start, n) = eval_window(&spec, &work.test)?;
            let dseed = eval_disturbance_seed(seed);
            let (log, name) = match which {
                Baseline::Baseline1 => (
                    run_baseline1(&work.test, &home, start, n, dseed)?,
                    "baseline1",
                ),
                Baseline::Baseline2 => {
                    let cfg = hems_core::TrainConfig {
                        seed,
                        ..spec.train.clone()
                    };
                    let (log, report) =
                        run_baseline2(&work.train, &work.test, &home, &cfg, start, n, dseed)?;
                    report.write_csv(out.join("baseline2_training.csv"))?;
                    (log, "baseline2")
                }
            };
            log.write_csv(out.join(format!("{name}.csv")))?;
            print_totals(&log);
        }
        Command::Oracle(c) => {
            let spec = c.spec()?;
            let out = c.out_dir()?;
            let (_, home) = first_cell(&spec);
            let work = Workload::load(&spec)?;
            let (start, n) = eval_window(&spec, &work.test)?;
            let res = dp_oracle(&work.test, &home, &spec.oracle, start, n)?;
            res.write_schedule_csv(out.join("oracle_schedule.csv"))?;
            print_totals(&res.schedule);
        }
        Command::Experiment(c) => {
            let spec = c.spec()?;
            let out = c.out_dir()?;
            let outcomes = run_experiment(&spec)?;
            emit_report(&outcomes, out)?;
            let mut all_ok = true;
            for o in &outcomes {
                match &o.result {
                    Ok(r) => eprintln!(
                        "{}: cost {:.4} deviation {:.4} ({:.1}s)",
                        o.cell.stem(),
                        r.summary.total_energy_cost,
                        r.summary.total_temp_deviation,
                        r.summary.wall_time_s
                    ),
                    Err(e) => {
                        all_ok = false;
                        eprintln!("{}: FAILED: {e}", o.cell.stem());
                    }
                }
            }
            return Ok(all_ok);
        }
        Command::Report(c) => {
            let runs = c.out.join(hems_cli::report::RUNS_FILE);
            if !runs.exists() {
                bail!("{} not found; run `experiment` first", runs.display());
            }
            let table = summarize(&read_runs_csv(&runs)?);
            write_summary_csv(&table, c.out.join(hems_cli::report::SUMMARY_FILE))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
