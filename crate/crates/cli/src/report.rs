//! CSV report emission and re-reading.
//!
//! Wall time is left out of every file so identical specs give
//! byte-identical reports.

use std::fs;
use std::path::{Path, PathBuf};

use crate::run::{CellOutcome, RunSummary};
use crate::spec::PolicyId;
use crate::stats::{summarize, MetricStats, StatsRow};
use crate::{HarnessError, Result};

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const HOURLY_FILE: &str = "hourly.csv";
pub const LOG_DIR: &str = "logs";

pub const RUNS_HEADER: [&str; 8] = [
    "policy",
    "seed",
    "beta",
    "disturbance",
    "status",
    "total_energy_cost",
    "total_temp_deviation",
    "error",
];
pub const SUMMARY_HEADER: [&str; 12] = [
    "policy",
    "beta",
    "disturbance",
    "runs",
    "cost_mean",
    "cost_std",
    "cost_ci_low",
    "cost_ci_high",
    "deviation_mean",
    "deviation_std",
    "deviation_ci_low",
    "deviation_ci_high",
];
pub const CURVES_HEADER: [&str; 7] = [
    "policy",
    "seed",
    "beta",
    "disturbance",
    "episode",
    "reward",
    "moving_avg",
];
pub const HOURLY_HEADER: [&str; 10] = [
    "policy",
    "seed",
    "beta",
    "disturbance",
    "slot",
    "hour",
    "price",
    "hvac_kw",
    "ess_kwh",
    "indoor_f",
];

/// Marker for statistics that need at least two runs.
const UNAVAILABLE: &str = "NA";

struct Table {
    path: PathBuf,
    w: csv::Writer<fs::File>,
}

impl Table {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::csv(&path, e))?;
        w.write_record(header)
            .map_err(|e| HarnessError::csv(&path, e))?;
        Ok(Self { path, w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w
            .write_record(fields)
            .map_err(|e| HarnessError::csv(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| UNAVAILABLE.to_string(), |v| v.to_string())
}

fn key_fields(policy: PolicyId, seed: u64, beta: f64, disturbance: f64) -> [String; 4] {
    [
        policy.to_string(),
        seed.to_string(),
        beta.to_string(),
        disturbance.to_string(),
    ]
}

pub fn write_summary_csv(rows: &[StatsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut t = Table::create(path.as_ref().to_path_buf(), &SUMMARY_HEADER)?;
    for r in rows {
        let m = |s: &MetricStats| {
            [
                s.mean.to_string(),
                opt(s.std),
                opt(s.ci.map(|c| c.0)),
                opt(s.ci.map(|c| c.1)),
            ]
        };
        let mut fields = vec![
            r.policy.to_string(),
            r.beta.to_string(),
            r.disturbance.to_string(),
            r.runs.to_string(),
        ];
        fields.extend(m(&r.cost));
        fields.extend(m(&r.deviation));
        t.row(fields)?;
    }
    t.finish()
}

/// Write `runs.csv`, `summary.csv`, `curves.csv`, `hourly.csv` and one
/// episode log per successful cell under `logs/`.
pub fn emit_report(outcomes: &[CellOutcome], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let logs = dir.join(LOG_DIR);
    fs::create_dir_all(&logs).map_err(|e| HarnessError::io(&logs, e))?;

    let mut runs = Table::create(dir.join(RUNS_FILE), &RUNS_HEADER)?;
    let mut curves = Table::create(dir.join(CURVES_FILE), &CURVES_HEADER)?;
    let mut hourly = Table::create(dir.join(HOURLY_FILE), &HOURLY_HEADER)?;
    let mut ok = Vec::new();
    for o in outcomes {
        let c = &o.cell;
        let key = key_fields(c.policy, c.seed, c.beta, c.disturbance);
        match &o.result {
            Ok(run) => {
                let s = &run.summary;
                runs.row(key.iter().cloned().chain([
                    "ok".into(),
                    s.total_energy_cost.to_string(),
                    s.total_temp_deviation.to_string(),
                    String::new(),
                ]))?;
                if let Some((rewards, avg)) = &run.curve {
                    for (i, (r, m)) in rewards.iter().zip(avg).enumerate() {
                        curves.row(key.iter().cloned().chain([
                            i.to_string(),
                            r.to_string(),
                            m.to_string(),
                        ]))?;
                    }
                }
                for r in &run.log.records {
                    hourly.row(key.iter().cloned().chain([
                        r.slot.to_string(),
                        r.hour.to_string(),
                        r.price.to_string(),
                        r.e.to_string(),
                        r.soc_kwh.to_string(),
                        r.indoor_f.to_string(),
                    ]))?;
                }
                run.log.write_csv(logs.join(format!("{}.csv", c.stem())))?;
                ok.push(s.clone());
            }
            Err(msg) => {
                runs.row(key.iter().cloned().chain([
                    "failed".into(),
                    String::new(),
                    String::new(),
                    msg.clone(),
                ]))?;
            }
        }
    }
    runs.finish()?;
    curves.finish()?;
    hourly.finish()?;
    write_summary_csv(&summarize(&ok), dir.join(SUMMARY_FILE))
}

fn open(path: &Path, header: &[&str]) -> Result<csv::Reader<fs::File>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let got: Vec<String> = r
        .headers()
        .map_err(|e| HarnessError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(HarnessError::Parse {
            path: path.to_path_buf(),
            row: 0,
            message: format!("expected header {}", header.join(",")),
        });
    }
    Ok(r)
}

struct Fields<'a> {
    path: &'a Path,
    row: usize,
    rec: csv::StringRecord,
}

impl Fields<'_> {
    fn str(&self, i: usize) -> &str {
        self.rec.get(i).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.str(i).parse().map_err(|_| HarnessError::Parse {
            path: self.path.to_path_buf(),
            row: self.row,
            message: format!("cannot parse field {i} ({:?})", self.str(i)),
        })
    }

    fn opt(&self, i: usize) -> Result<Option<f64>> {
        if self.str(i) == UNAVAILABLE {
            Ok(None)
        } else {
            self.parse(i).map(Some)
        }
    }
}

fn rows<'a>(path: &'a Path, header: &[&str]) -> Result<Vec<Fields<'a>>> {
    open(path, header)?
        .records()
        .enumerate()
        .map(|(i, rec)| {
            Ok(Fields {
                path,
                row: i + 1,
                rec: rec.map_err(|e| HarnessError::csv(path, e))?,
            })
        })
        .collect()
}

/// Successful runs from a `runs.csv`. Wall time is not stored and reads as zero.
pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Vec<RunSummary>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for f in rows(path, &RUNS_HEADER)? {
        if f.str(4) != "ok" {
            continue;
        }
        let policy: PolicyId = f.str(0).parse()?;
        out.push(RunSummary {
            policy,
            seed: f.parse(1)?,
            beta: f.parse(2)?,
            disturbance: f.parse(3)?,
            total_energy_cost: f.parse(5)?,
            total_temp_deviation: f.parse(6)?,
            wall_time_s: 0.0,
        });
    }
    Ok(out)
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<StatsRow>> {
    let path = path.as_ref();
    rows(path, &SUMMARY_HEADER)?
        .iter()
        .map(|f| {
            let metric = |at: usize| -> Result<MetricStats> {
                let lo = f.opt(at + 2)?;
                let hi = f.opt(at + 3)?;
                Ok(MetricStats {
                    mean: f.parse(at)?,
                    std: f.opt(at + 1)?,
                    ci: lo.zip(hi),
                })
            };
            Ok(StatsRow {
                policy: f.str(0).parse()?,
                beta: f.parse(1)?,
                disturbance: f.parse(2)?,
                runs: f.parse(3)?,
                cost: metric(4)?,
                deviation: metric(8)?,
            })
        })
        .collect()
}
