//! DDPG training and greedy execution.
//!
//! The actor maps a normalized state to a normalized action
//! `(f / max(c_max, d_max), e / e_max)`; the critic scores a normalized
//! state concatenated with a normalized action. Exploration swaps the actor
//! output for a uniform random action with probability `xi`.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvState, HomeConfig, RawAction};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpSpec};
use crate::traces::{channel, compute_norm_stats, preprocess, NormStats, TraceSet, HOURS_PER_DAY};

pub const STATE_DIM: usize = channel::COUNT;
pub const ACTION_DIM: usize = 2;

/// Moving-average window for training curves.
pub const REWARD_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: [f64; STATE_DIM],
    /// Normalized, unclipped action.
    pub action: [f64; ACTION_DIM],
    pub reward: f64,
    pub next_state: [f64; STATE_DIM],
}

/// Fixed-capacity ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            next: 0,
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total pushes, including evicted ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, tr: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(tr);
        } else {
            self.items[self.next] = tr;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity {
            0
        } else {
            self.next
        };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// `k` transitions drawn uniformly with replacement.
    pub fn sample(&self, k: usize, rng: &mut impl Rng) -> Result<Vec<Transition>> {
        if self.items.len() < k || self.items.is_empty() {
            return Err(Error::Underfull {
                len: self.items.len(),
                requested: k,
            });
        }
        Ok((0..k)
            .map(|_| self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Training episodes (M).
    pub episodes: usize,
    /// Slots per episode (P).
    pub slots_per_episode: usize,
    /// Mini-batch size (K).
    pub batch_size: usize,
    /// Replay capacity (N).
    pub buffer_capacity: usize,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Per-episode decay of the exploration probability.
    pub zeta: f64,
    pub xi_min: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Full-size settings: 3000 episodes, 300/600 actor, 300/600/600/600 critic.
    fn default() -> Self {
        Self {
            episodes: 3000,
            slots_per_episode: 24,
            batch_size: 120,
            buffer_capacity: 24_000,
            gamma: 0.995,
            tau: 0.001,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            zeta: 0.0005,
            xi_min: 0.1,
            actor_hidden: vec![300, 600],
            critic_hidden: vec![300, 600, 600, 600],
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// 500 episodes with 64-wide networks. The replay capacity and decay rate
    /// are rescaled so exploration starts falling after the same fraction of
    /// training and reaches its floor before the end.
    pub fn desk_scale() -> Self {
        Self {
            episodes: 500,
            buffer_capacity: 4_000,
            zeta: 0.003,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64, 64, 64],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.slots_per_episode == 0 || !HOURS_PER_DAY.is_multiple_of(self.slots_per_episode) {
            return bad(format!(
                "slots_per_episode {} must divide 24",
                self.slots_per_episode
            ));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.buffer_capacity
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0,1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0,1]", self.tau));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.zeta >= 0.0 && (0.0..=1.0).contains(&self.xi_min)) {
            return bad("need zeta >= 0 and xi_min in [0,1]".into());
        }
        if self.actor_hidden.is_empty() || self.critic_hidden.is_empty() {
            return bad("actor and critic need hidden layers".into());
        }
        Ok(())
    }

    pub fn actor_spec(&self, seed: u64) -> MlpSpec {
        let mut sizes = vec![STATE_DIM];
        sizes.extend(&self.actor_hidden);
        sizes.push(ACTION_DIM);
        MlpSpec {
            layer_sizes: sizes,
            hidden_activation: Activation::Relu,
            output_activations: vec![Activation::Tanh, Activation::Sigmoid],
            seed,
        }
    }

    pub fn critic_spec(&self, seed: u64) -> MlpSpec {
        let mut sizes = vec![STATE_DIM + ACTION_DIM];
        sizes.extend(&self.critic_hidden);
        sizes.push(1);
        MlpSpec {
            layer_sizes: sizes,
            hidden_activation: Activation::Relu,
            output_activations: vec![Activation::Identity],
            seed,
        }
    }
}

/// Exploration probability: 1 until the replay memory could have filled
/// (`episode <= N/P`), then linear decay by `zeta` per episode down to `xi_min`.
pub fn exploration_prob(episode: usize, config: &TrainConfig) -> f64 {
    let fill = config.buffer_capacity as f64 / config.slots_per_episode as f64;
    let past = (episode as f64 - fill).max(0.0);
    (1.0 - config.zeta * past).clamp(config.xi_min, 1.0)
}

/// Scaling between normalized network actions and physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionScale {
    /// `max(c_max, d_max)`.
    pub f_scale: f64,
    pub e_scale: f64,
    /// Bounds of the random normalized battery action.
    pub f_lo: f64,
    pub f_hi: f64,
}

impl ActionScale {
    pub fn new(home: &HomeConfig) -> Self {
        let f_scale = home.c_max.max(home.d_max);
        let (f_lo, f_hi) = if f_scale > 0.0 {
            (-home.d_max / f_scale, home.c_max / f_scale)
        } else {
            (0.0, 0.0)
        };
        Self {
            f_scale,
            e_scale: home.e_max,
            f_lo,
            f_hi,
        }
    }

    pub fn to_raw(&self, normalized: [f64; ACTION_DIM]) -> RawAction {
        RawAction {
            f: normalized[0] * self.f_scale,
            e: normalized[1] * self.e_scale,
        }
    }

    pub fn random_normalized(&self, rng: &mut impl RngCore) -> [f64; ACTION_DIM] {
        let u1 = open_unit(rng);
        let u2 = open_unit(rng);
        [self.f_lo + (self.f_hi - self.f_lo) * u1, u2]
    }
}

/// Uniform draw on the open interval (0, 1).
fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionChoice {
    pub raw: RawAction,
    pub normalized: [f64; ACTION_DIM],
    pub explored: bool,
}

fn actor_action(actor: &Mlp, s_norm: &[f64; STATE_DIM]) -> Result<[f64; ACTION_DIM]> {
    let out = actor.predict_one(s_norm)?;
    Ok([out[0], out[1]])
}

/// Training-time action: the actor's output with probability `1 - xi`,
/// otherwise a uniform random action.
pub fn select_action_train(
    actor: &Mlp,
    s_norm: &[f64; STATE_DIM],
    episode: usize,
    rng: &mut impl RngCore,
    config: &TrainConfig,
    scale: &ActionScale,
) -> Result<ActionChoice> {
    let xi = exploration_prob(episode, config);
    select_with_prob(actor, s_norm, xi, rng, scale)
}

pub fn select_with_prob(
    actor: &Mlp,
    s_norm: &[f64; STATE_DIM],
    xi: f64,
    rng: &mut impl RngCore,
    scale: &ActionScale,
) -> Result<ActionChoice> {
    let omega = open_unit(rng);
    let (normalized, explored) = if omega > xi {
        (actor_action(actor, s_norm)?, false)
    } else {
        (scale.random_normalized(rng), true)
    };
    Ok(ActionChoice {
        raw: scale.to_raw(normalized),
        normalized,
        explored,
    })
}

fn batch_matrices(batch: &[Transition]) -> (Array2<f64>, Array2<f64>, Array1<f64>, Array2<f64>) {
    let k = batch.len();
    let mut s = Array2::zeros((k, STATE_DIM));
    let mut a = Array2::zeros((k, ACTION_DIM));
    let mut r = Array1::zeros(k);
    let mut s2 = Array2::zeros((k, STATE_DIM));
    for (i, tr) in batch.iter().enumerate() {
        s.row_mut(i).assign(&ndarray::aview1(&tr.state));
        a.row_mut(i).assign(&ndarray::aview1(&tr.action));
        r[i] = tr.reward;
        s2.row_mut(i).assign(&ndarray::aview1(&tr.next_state));
    }
    (s, a, r, s2)
}

fn concat(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    let mut x = Array2::zeros((states.nrows(), STATE_DIM + ACTION_DIM));
    x.slice_mut(s![.., ..STATE_DIM]).assign(&states);
    x.slice_mut(s![.., STATE_DIM..]).assign(&actions);
    x
}

/// Bootstrapped targets `y = r + gamma * Q'(s', mu'(s'))`, using target
/// networks only.
pub fn critic_targets(
    critic_target: &Mlp,
    actor_target: &Mlp,
    batch: &[Transition],
    gamma: f64,
) -> Result<Array1<f64>> {
    let (_, _, r, s2) = batch_matrices(batch);
    let a2 = actor_target.predict(s2.view())?;
    let q2 = critic_target.predict(concat(s2.view(), a2.view()).view())?;
    Ok(&r + &(q2.column(0).to_owned() * gamma))
}

/// One Adam step on the mean-squared Bellman error. Returns the loss
/// before the step.
pub fn critic_update(
    critic: &mut Mlp,
    critic_target: &Mlp,
    actor_target: &Mlp,
    batch: &[Transition],
    config: &TrainConfig,
) -> Result<f64> {
    let y = critic_targets(critic_target, actor_target, batch, config.gamma)?;
    let (s, a, _, _) = batch_matrices(batch);
    let (q, cache) = critic.forward(concat(s.view(), a.view()).view())?;
    let k = batch.len() as f64;
    let err = &q.column(0) - &y;
    let loss = err.mapv(|e| e * e).sum() / k;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "critic loss {loss} (max |y| {:.3e}, max |q| {:.3e})",
            y.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            q.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        )));
    }
    let grad_out = err.mapv(|e| 2.0 * e / k).insert_axis(ndarray::Axis(1));
    let (grads, _) = critic.backward(&cache, grad_out.view())?;
    critic.adam_update(&grads, config.critic_lr)?;
    Ok(loss)
}

/// One Adam step of ascent on `mean Q(s, mu(s))`. Returns that mean before
/// the step.
pub fn actor_update(
    actor: &mut Mlp,
    critic: &Mlp,
    batch: &[Transition],
    config: &TrainConfig,
) -> Result<f64> {
    let (s, _, _, _) = batch_matrices(batch);
    let (a, actor_cache) = actor.forward(s.view())?;
    let (q, critic_cache) = critic.forward(concat(s.view(), a.view()).view())?;
    let k = batch.len() as f64;
    let mean_q = q.sum() / k;
    // minimize -mean Q
    let dq = Array2::from_elem((batch.len(), 1), -1.0 / k);
    let (_, dx) = critic.backward(&critic_cache, dq.view())?;
    let da = dx.slice(s![.., STATE_DIM..]).to_owned();
    let (grads, _) = actor.backward(&actor_cache, da.view())?;
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite policy gradient".into()));
    }
    actor.adam_update(&grads, config.actor_lr)?;
    Ok(mean_q)
}

/// splitmix64 step; derives independent stream seeds from one run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_ACTOR: u64 = 1;
const STREAM_CRITIC: u64 = 2;
const STREAM_ENV: u64 = 3;
const STREAM_AGENT: u64 = 4;

/// Online and target networks plus replay memory.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub buffer: ReplayBuffer,
    pub config: TrainConfig,
    updates: u64,
}

impl DdpgAgent {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let actor = Mlp::init(&config.actor_spec(derive_seed(config.seed, STREAM_ACTOR)))?;
        let critic = Mlp::init(&config.critic_spec(derive_seed(config.seed, STREAM_CRITIC)))?;
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            updates: 0,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Critic step, actor step, then both target blends. Returns the critic loss.
    pub fn learn(&mut self, batch: &[Transition]) -> Result<f64> {
        let loss = critic_update(
            &mut self.critic,
            &self.critic_target,
            &self.actor_target,
            batch,
            &self.config,
        )?;
        actor_update(&mut self.actor, &self.critic, batch, &self.config)?;
        self.critic_target
            .soft_update(&self.critic, self.config.tau)?;
        self.actor_target
            .soft_update(&self.actor, self.config.tau)?;
        self.updates += 1;
        Ok(loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub episode_rewards: Vec<f64>,
    /// Mean of up to the last [`REWARD_WINDOW`] episode rewards.
    pub moving_avg: Vec<f64>,
    pub actor: Mlp,
    pub critic: Mlp,
    pub norm_stats: NormStats,
    pub updates: u64,
}

impl TrainReport {
    /// `episode,reward,moving_avg`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["episode", "reward", "moving_avg"])
            .map_err(|e| Error::csv(path, e))?;
        for (i, (r, m)) in self
            .episode_rewards
            .iter()
            .zip(&self.moving_avg)
            .enumerate()
        {
            w.write_record([i.to_string(), r.to_string(), m.to_string()])
                .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &xs[lo..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

fn with_context(episode: usize, slot: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(m) => Error::Numeric(format!("episode {episode}, slot {slot}: {m}")),
        other => other,
    }
}

/// Train actor and critic on `traces`. Episodes start at day boundaries
/// taken round-robin; updates begin once the memory holds a full batch.
pub fn train(traces: &TraceSet, home: &HomeConfig, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    home.validate()?;
    let stats = compute_norm_stats(traces, home);
    let scale = ActionScale::new(home);
    let mut agent = DdpgAgent::new(config.clone())?;
    let mut env = Env::new(home.clone(), traces, derive_seed(config.seed, STREAM_ENV))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_AGENT));

    let days = traces.days();
    let mut episode_rewards = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let start = (episode % days) * HOURS_PER_DAY;
        let mut state = env.reset(start, config.slots_per_episode)?;
        let mut total = 0.0;
        for slot in 0..config.slots_per_episode {
            let ctx = with_context(episode, slot);
            let s_norm = preprocess(&state, &stats);
            let choice =
                select_action_train(&agent.actor, &s_norm, episode, &mut rng, config, &scale)
                    .map_err(&ctx)?;
            let out = env.step(choice.raw).map_err(&ctx)?;
            total += out.reward;
            agent.buffer.push(Transition {
                state: s_norm,
                action: choice.normalized,
                reward: out.reward,
                next_state: preprocess(&out.next_state, &stats),
            });
            if agent.buffer.len() >= config.batch_size {
                let batch = agent.buffer.sample(config.batch_size, &mut rng)?;
                agent.learn(&batch).map_err(&ctx)?;
            }
            state = out.next_state;
        }
        episode_rewards.push(total);
    }

    let moving_avg = moving_average(&episode_rewards, REWARD_WINDOW);
    Ok(TrainReport {
        episode_rewards,
        moving_avg,
        updates: agent.updates(),
        actor: agent.actor,
        critic: agent.critic,
        norm_stats: stats,
    })
}

/// One executed slot of a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub hour: usize,
    pub price: f64,
    pub solar_kw: f64,
    pub demand_kw: f64,
    pub outdoor_f: f64,
    pub soc_kwh: f64,
    pub indoor_f: f64,
    pub f: f64,
    pub e: f64,
    pub g: f64,
    pub next_soc_kwh: f64,
    pub next_indoor_f: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub records: Vec<SlotRecord>,
    /// Sum of energy and depreciation cost ($).
    pub total_cost: f64,
    /// Sum of comfort deviation (F·slots).
    pub total_deviation: f64,
    pub total_reward: f64,
}

impl EpisodeLog {
    pub fn push(&mut self, rec: SlotRecord) {
        self.total_cost += rec.c1 + rec.c2;
        self.total_deviation += rec.c3;
        self.total_reward += rec.reward;
        self.records.push(rec);
    }

    pub fn from_records(records: Vec<SlotRecord>) -> Self {
        let mut log = Self::default();
        for r in records {
            log.push(r);
        }
        log
    }

    pub const CSV_HEADER: [&'static str; 17] = [
        "slot",
        "hour",
        "price",
        "solar_kw",
        "demand_kw",
        "outdoor_f",
        "soc_kwh",
        "indoor_f",
        "f",
        "e",
        "g",
        "next_soc_kwh",
        "next_indoor_f",
        "c1",
        "c2",
        "c3",
        "reward",
    ];

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(Self::CSV_HEADER)
            .map_err(|e| Error::csv(path, e))?;
        for r in &self.records {
            let nums = [
                r.price,
                r.solar_kw,
                r.demand_kw,
                r.outdoor_f,
                r.soc_kwh,
                r.indoor_f,
                r.f,
                r.e,
                r.g,
                r.next_soc_kwh,
                r.next_indoor_f,
                r.c1,
                r.c2,
                r.c3,
                r.reward,
            ];
            let mut row = vec![r.slot.to_string(), r.hour.to_string()];
            row.extend(nums.iter().map(|x| x.to_string()));
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut records = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            if rec.len() != Self::CSV_HEADER.len() {
                return Err(Error::Schema(format!("row {row}: {} fields", rec.len())));
            }
            let int = |i: usize| -> Result<usize> {
                rec[i].parse().map_err(|_| Error::Validation {
                    row,
                    message: format!("bad {}", Self::CSV_HEADER[i]),
                })
            };
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Validation {
                    row,
                    message: format!("bad {}", Self::CSV_HEADER[i]),
                })
            };
            records.push(SlotRecord {
                slot: int(0)?,
                hour: int(1)?,
                price: num(2)?,
                solar_kw: num(3)?,
                demand_kw: num(4)?,
                outdoor_f: num(5)?,
                soc_kwh: num(6)?,
                indoor_f: num(7)?,
                f: num(8)?,
                e: num(9)?,
                g: num(10)?,
                next_soc_kwh: num(11)?,
                next_indoor_f: num(12)?,
                c1: num(13)?,
                c2: num(14)?,
                c3: num(15)?,
                reward: num(16)?,
            });
        }
        Ok(Self::from_records(records))
    }
}

/// Anything that picks an action from the raw environment state.
pub trait Policy {
    fn act(&mut self, state: &EnvState) -> Result<RawAction>;
}

/// Noise-free actor execution.
#[derive(Debug, Clone)]
pub struct GreedyPolicy<'a> {
    actor: &'a Mlp,
    stats: &'a NormStats,
    scale: ActionScale,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(actor: &'a Mlp, stats: &'a NormStats, home: &HomeConfig) -> Self {
        Self {
            actor,
            stats,
            scale: ActionScale::new(home),
        }
    }
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, state: &EnvState) -> Result<RawAction> {
        let s = preprocess(state, self.stats);
        Ok(self.scale.to_raw(actor_action(self.actor, &s)?))
    }
}

/// Run `policy` for `n_slots` from day boundary `start_slot`.
/// `disturbance_seed` drives the thermal disturbance when it is enabled.
pub fn rollout(
    policy: &mut dyn Policy,
    traces: &TraceSet,
    home: &HomeConfig,
    start_slot: usize,
    n_slots: usize,
    disturbance_seed: u64,
) -> Result<EpisodeLog> {
    let mut env = Env::new(home.clone(), traces, disturbance_seed)?;
    let mut state = env.reset(start_slot, n_slots)?;
    let mut log = EpisodeLog::default();
    while !env.is_done() {
        let raw = policy.act(&state)?;
        let out = env.step(raw)?;
        log.push(SlotRecord {
            slot: state.slot,
            hour: state.hour,
            price: state.price,
            solar_kw: state.solar_kw,
            demand_kw: state.demand_kw,
            outdoor_f: state.outdoor_f,
            soc_kwh: state.soc_kwh,
            indoor_f: state.indoor_f,
            f: out.action.f(),
            e: out.action.e(),
            g: out.g,
            next_soc_kwh: out.next_state.soc_kwh,
            next_indoor_f: out.next_state.indoor_f,
            c1: out.c1,
            c2: out.c2,
            c3: out.c3,
            reward: out.reward,
        });
        state = out.next_state;
    }
    Ok(log)
}

/// Greedy rollout of a trained actor.
pub fn evaluate(
    actor: &Mlp,
    stats: &NormStats,
    traces: &TraceSet,
    home: &HomeConfig,
    start_slot: usize,
    n_slots: usize,
    disturbance_seed: u64,
) -> Result<EpisodeLog> {
    let mut policy = GreedyPolicy::new(actor, stats, home);
    rollout(
        &mut policy,
        traces,
        home,
        start_slot,
        n_slots,
        disturbance_seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(x: f64) -> Transition {
        Transition {
            state: [x; STATE_DIM],
            action: [0.0, x],
            reward: -x,
            next_state: [x; STATE_DIM],
        }
    }

    #[test]
    fn buffer_ring_semantics() {
        let mut b = ReplayBuffer::new(3);
        b.push(tr(0.0));
        assert_eq!(b.len(), 1);
        for i in 1..4 {
            b.push(tr(i as f64));
        }
        assert_eq!(b.len(), 3);
        let rewards: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![-1.0, -2.0, -3.0]);
        assert_eq!(b.pushed(), 4);
    }

    #[test]
    fn buffer_retrieves_bit_exact() {
        let mut b = ReplayBuffer::new(4);
        let t = tr(0.123_456_789_012_345_6);
        b.push(t);
        assert_eq!(*b.iter().next().unwrap(), t);
    }

    #[test]
    fn buffer_sampling() {
        let mut b = ReplayBuffer::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            b.sample(1, &mut rng),
            Err(Error::Underfull {
                len: 0,
                requested: 1
            })
        ));
        for i in 0..4 {
            b.push(tr(i as f64));
        }
        assert!(matches!(
            b.sample(5, &mut rng),
            Err(Error::Underfull { .. })
        ));
        let s = b.sample(4, &mut rng).unwrap();
        assert!(s.iter().all(|t| (0.0..4.0).contains(&t.state[0])));
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(b.sample(4, &mut r1).unwrap(), b.sample(4, &mut r2).unwrap());
    }

    #[test]
    fn exploration_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(exploration_prob(0, &cfg), 1.0);
        assert_eq!(exploration_prob(1000, &cfg), 1.0);
        // 1 - 0.0005 * 1800 = 0.1
        assert!((exploration_prob(2800, &cfg) - 0.1).abs() < 1e-12);
        assert_eq!(exploration_prob(2999, &cfg), 0.1);
        assert!((exploration_prob(1400, &cfg) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn moving_average_window() {
        let xs: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert_eq!(moving_average(&xs, 2), vec![0.0, 0.5, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn derive_seed_streams_differ() {
        assert_ne!(derive_seed(1, STREAM_ACTOR), derive_seed(1, STREAM_CRITIC));
        assert_ne!(derive_seed(1, STREAM_ACTOR), derive_seed(2, STREAM_ACTOR));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            slots_per_episode: 7,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 30_000,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            gamma: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
