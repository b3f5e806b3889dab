//! Experiment specification read from TOML.
//!
//! ```toml
//! policies = ["proposed", "baseline1"]
//! seeds = [1, 2, 3]
//! betas = [0.6]
//! disturbances = [0.0, 1.8]
//!
//! [train_traces]
//! kind = "synthetic"
//! seed = 100
//!
//! [test_traces]
//! kind = "file"
//! path = "month.csv"
//!
//! [train]
//! episodes = 300
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hems_core::baselines::OracleGrid;
use hems_core::traces::{gen_synthetic, load_trace};
use hems_core::{HomeConfig, SyntheticTraceSpec, TraceSet, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyId {
    Proposed,
    Baseline1,
    Baseline2,
    Oracle,
}

impl PolicyId {
    pub const ALL: [PolicyId; 4] = [
        Self::Proposed,
        Self::Baseline1,
        Self::Baseline2,
        Self::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Baseline1 => "baseline1",
            Self::Baseline2 => "baseline2",
            Self::Oracle => "oracle",
        }
    }

    /// Whether running this policy involves training a network.
    pub fn is_learned(self) -> bool {
        matches!(self, Self::Proposed | Self::Baseline2)
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| HarnessError::Spec(format!("unknown policy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceSource {
    File { path: PathBuf },
    Synthetic(SyntheticTraceSpec),
}

impl TraceSource {
    pub fn synthetic(seed: u64) -> Self {
        Self::Synthetic(SyntheticTraceSpec {
            seed,
            ..SyntheticTraceSpec::default()
        })
    }

    /// Relative file paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<TraceSet> {
        Ok(match self {
            Self::File { path } => load_trace(base.join(path))?,
            Self::Synthetic(spec) => gen_synthetic(spec)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainPreset {
    /// 500 episodes with small networks.
    #[default]
    Desk,
    /// 3000 episodes with the full-size networks.
    Full,
}

impl TrainPreset {
    pub fn config(self) -> TrainConfig {
        match self {
            Self::Desk => TrainConfig::desk_scale(),
            Self::Full => TrainConfig::default(),
        }
    }
}

/// As written in the file. `train` keys override the chosen preset.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSpec {
    train_traces: TraceSource,
    test_traces: TraceSource,
    home: HomeConfig,
    train_preset: TrainPreset,
    train: toml::Table,
    oracle: OracleGrid,
    eval_start_slot: usize,
    eval_slots: usize,
    policies: Vec<PolicyId>,
    seeds: Vec<u64>,
    betas: Vec<f64>,
    disturbances: Vec<f64>,
}

impl Default for RawSpec {
    fn default() -> Self {
        let spec = ExperimentSpec::default();
        Self {
            train_traces: spec.train_traces,
            test_traces: spec.test_traces,
            home: spec.home,
            train_preset: TrainPreset::Desk,
            train: toml::Table::new(),
            oracle: spec.oracle,
            eval_start_slot: spec.eval_start_slot,
            eval_slots: spec.eval_slots,
            policies: spec.policies,
            seeds: spec.seeds,
            betas: spec.betas,
            disturbances: spec.disturbances,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub train_traces: TraceSource,
    pub test_traces: TraceSource,
    /// Base home; each cell replaces `beta` and the disturbance bounds.
    pub home: HomeConfig,
    /// Base training settings; each cell replaces `seed`.
    pub train: TrainConfig,
    pub oracle: OracleGrid,
    pub eval_start_slot: usize,
    /// Slots to evaluate; 0 means through the end of the test trace.
    pub eval_slots: usize,
    pub policies: Vec<PolicyId>,
    pub seeds: Vec<u64>,
    pub betas: Vec<f64>,
    /// Half-widths: level `x` draws the disturbance from `[-x, x]`.
    pub disturbances: Vec<f64>,
    /// Directory that relative trace paths resolve against.
    pub base_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            train_traces: TraceSource::synthetic(100),
            test_traces: TraceSource::synthetic(200),
            home: HomeConfig::default(),
            train: TrainConfig::desk_scale(),
            oracle: OracleGrid::default(),
            eval_start_slot: 0,
            eval_slots: 0,
            policies: vec![PolicyId::Proposed, PolicyId::Baseline1],
            seeds: vec![1, 2, 3, 4, 5],
            betas: vec![0.6],
            disturbances: vec![0.0],
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        let mut train = toml::Table::try_from(raw.train_preset.config())
            .map_err(|e| HarnessError::Spec(e.to_string()))?;
        train.extend(raw.train);
        let train: TrainConfig = train
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Spec(format!("[train]: {e}")))?;
        let spec = Self {
            train_traces: raw.train_traces,
            test_traces: raw.test_traces,
            home: raw.home,
            train,
            oracle: raw.oracle,
            eval_start_slot: raw.eval_start_slot,
            eval_slots: raw.eval_slots,
            policies: raw.policies,
            seeds: raw.seeds,
            betas: raw.betas,
            disturbances: raw.disturbances,
            base_dir: base_dir.to_path_buf(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            HarnessError::Spec(m) => HarnessError::Spec(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(HarnessError::Spec(m.into()));
        if self.seeds.is_empty() {
            return fail("at least one seed is required");
        }
        if self.policies.is_empty() {
            return fail("at least one policy is required");
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return fail("betas must be a nonempty list of positive numbers");
        }
        if self.disturbances.is_empty()
            || self
                .disturbances
                .iter()
                .any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return fail("disturbances must be a nonempty list of nonnegative half-widths");
        }
        self.home.validate()?;
        self.train.validate()?;
        self.oracle.validate()?;
        Ok(())
    }

    /// All (policy, seed, beta, disturbance) cells in row-major order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(
            self.policies.len() * self.seeds.len() * self.betas.len() * self.disturbances.len(),
        );
        for &policy in &self.policies {
            for &seed in &self.seeds {
                for &beta in &self.betas {
                    for &disturbance in &self.disturbances {
                        out.push(Cell {
                            policy,
                            seed,
                            beta,
                            disturbance,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub policy: PolicyId,
    pub seed: u64,
    pub beta: f64,
    pub disturbance: f64,
}

impl Cell {
    /// Home with this cell's weight and disturbance.
    pub fn home(&self, base: &HomeConfig) -> HomeConfig {
        HomeConfig {
            beta: self.beta,
            ..base.clone()
        }
        .with_disturbance(self.disturbance)
    }

    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..base.clone()
        }
    }

    /// File-name stem such as `proposed_s3_b0.6_d1.8`.
    pub fn stem(&self) -> String {
        format!(
            "{}_s{}_b{}_d{}",
            self.policy, self.seed, self.beta, self.disturbance
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let spec = ExperimentSpec::from_toml_str("", Path::new(".")).unwrap();
        assert_eq!(spec.train, TrainConfig::desk_scale());
        assert_eq!(spec.seeds.len(), 5);
        assert_eq!(spec.betas, vec![0.6]);
    }

    #[test]
    fn train_overrides_apply_on_top_of_preset() {
        let spec =
            ExperimentSpec::from_toml_str("[train]\nepisodes = 7\n", Path::new(".")).unwrap();
        assert_eq!(spec.train.episodes, 7);
        assert_eq!(
            spec.train.actor_hidden,
            TrainConfig::desk_scale().actor_hidden
        );
        let full =
            ExperimentSpec::from_toml_str("train_preset = \"full\"\n", Path::new(".")).unwrap();
        assert_eq!(full.train, TrainConfig::default());
    }

    #[test]
    fn trace_sources_parse() {
        let text = "[train_traces]\nkind = \"file\"\npath = \"a.csv\"\n[test_traces]\nkind = \"synthetic\"\nseed = 9\ndays = 3\n";
        let spec = ExperimentSpec::from_toml_str(text, Path::new(".")).unwrap();
        assert_eq!(
            spec.train_traces,
            TraceSource::File {
                path: "a.csv".into()
            }
        );
        match spec.test_traces {
            TraceSource::Synthetic(s) => {
                assert_eq!(s.seed, 9);
                assert_eq!(s.days, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for text in [
            "seeds = []",
            "betas = [0.0]",
            "betas = [-1.0]",
            "disturbances = [-1.8]",
            "policies = []",
            "policies = [\"greedy\"]",
            "unknown = 1",
            "[train]\nbatch_size = 0",
            "[train]\nbogus = 1",
        ] {
            assert!(
                ExperimentSpec::from_toml_str(text, Path::new(".")).is_err(),
                "{text}"
            );
        }
    }

    #[test]
    fn cells_cover_product() {
        let spec = ExperimentSpec {
            policies: vec![PolicyId::Proposed, PolicyId::Baseline1],
            seeds: vec![1, 2, 3],
            betas: vec![0.6],
            ..ExperimentSpec::default()
        };
        let cells = spec.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0].policy, PolicyId::Proposed);
        assert_eq!(cells[5].policy, PolicyId::Baseline1);
        assert_eq!(cells[5].seed, 3);
    }

    #[test]
    fn cell_home_sets_symmetric_disturbance() {
        let cell = Cell {
            policy: PolicyId::Baseline1,
            seed: 1,
            beta: 0.2,
            disturbance: 1.8,
        };
        let home = cell.home(&HomeConfig::default());
        assert_eq!(home.beta, 0.2);
        assert_eq!((home.disturbance_low, home.disturbance_high), (-1.8, 1.8));
    }
}
