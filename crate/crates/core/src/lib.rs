//! Smart-home energy management: an ESS + HVAC environment, a DDPG agent
//! trained against it, and the comparison baselines.

pub mod agent;
pub mod baselines;
pub mod config;
pub mod env;
pub mod error;
pub mod nn;
pub mod traces;

pub use agent::{evaluate, train, DdpgAgent, EpisodeLog, TrainConfig, TrainReport};
pub use baselines::{dp_oracle, OnOffPolicy, OracleGrid, OracleResult};
pub use env::{EnvState, FeasibleAction, HomeConfig, RawAction, StepOutcome};
pub use error::{Error, Result};
pub use nn::{Activation, Mlp, MlpSpec};
pub use traces::{NormStats, SyntheticTraceSpec, TraceSet};
