//! Smart-home MDP: battery and HVAC dynamics, power balance, costs and reward.
//!
//! Sign conventions: `f > 0` charges the battery, `f < 0` discharges it;
//! grid power `g > 0` is bought at `v`, `g < 0` is sold at `delta_sell * v`.
//! All temperatures are in degrees Fahrenheit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traces::{TraceSet, HOURS_PER_DAY};

/// Home, battery, HVAC and reward parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomeConfig {
    /// Charging efficiency.
    pub eta_c: f64,
    /// Discharging efficiency.
    pub eta_d: f64,
    /// Battery energy bounds and initial level (kWh).
    pub b_min: f64,
    pub b_max: f64,
    pub b_0: f64,
    /// Charge / discharge power limits (kW).
    pub c_max: f64,
    pub d_max: f64,
    /// HVAC rated input power (kW).
    pub e_max: f64,
    /// Comfort band (F).
    pub t_min: f64,
    pub t_max: f64,
    /// Thermal inertia of the first-order room model.
    pub epsilon: f64,
    /// HVAC coefficient of performance.
    pub eta_hvac: f64,
    /// Thermal conductivity (kW/F).
    pub conductivity: f64,
    /// Battery depreciation ($/kW).
    pub psi: f64,
    /// Weight of money against comfort in the reward.
    pub beta: f64,
    /// Sell price as a fraction of the buy price.
    pub delta_sell: f64,
    /// Bounds of the uniform additive thermal disturbance (F). Both zero disables it.
    pub disturbance_low: f64,
    pub disturbance_high: f64,
    /// Indoor temperature at the start of every episode (F).
    pub t_in_0: f64,
    /// Margin around the comfort band for indoor-temperature normalization (F).
    pub norm_temp_margin_f: f64,
}

impl Default for HomeConfig {
    fn default() -> Self {
        Self {
            eta_c: 0.95,
            eta_d: 0.95,
            b_min: 0.6,
            b_max: 6.0,
            b_0: 1.2,
            c_max: 3.0,
            d_max: 3.0,
            e_max: 2.0,
            t_min: 66.2,
            t_max: 75.2,
            epsilon: 0.7,
            eta_hvac: 2.5,
            conductivity: 0.14,
            psi: 0.01,
            beta: 1.0,
            delta_sell: 0.9,
            disturbance_low: 0.0,
            disturbance_high: 0.0,
            t_in_0: 70.7,
            norm_temp_margin_f: 15.0,
        }
    }
}

impl HomeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        let all = [
            self.eta_c,
            self.eta_d,
            self.b_min,
            self.b_max,
            self.b_0,
            self.c_max,
            self.d_max,
            self.e_max,
            self.t_min,
            self.t_max,
            self.epsilon,
            self.eta_hvac,
            self.conductivity,
            self.psi,
            self.beta,
            self.delta_sell,
            self.disturbance_low,
            self.disturbance_high,
            self.t_in_0,
            self.norm_temp_margin_f,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return bad("all home parameters must be finite".into());
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0 && self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return bad(format!(
                "efficiencies must lie in (0,1]: eta_c={}, eta_d={}",
                self.eta_c, self.eta_d
            ));
        }
        if !(self.b_min < self.b_max && self.b_min <= self.b_0 && self.b_0 <= self.b_max) {
            return bad(format!(
                "need b_min < b_max and b_0 within: {} {} {}",
                self.b_min, self.b_max, self.b_0
            ));
        }
        if self.c_max < 0.0 || self.d_max < 0.0 || self.e_max < 0.0 {
            return bad("power limits must be nonnegative".into());
        }
        if self.t_min >= self.t_max {
            return bad(format!(
                "empty comfort band [{}, {}]",
                self.t_min, self.t_max
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0,1), got {}", self.epsilon));
        }
        if self.conductivity <= 0.0 {
            return bad("conductivity must be positive".into());
        }
        if self.psi < 0.0 || self.beta < 0.0 {
            return bad("psi and beta must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.delta_sell) {
            return bad(format!(
                "delta_sell must lie in [0,1], got {}",
                self.delta_sell
            ));
        }
        if !(self.disturbance_low <= 0.0 && 0.0 <= self.disturbance_high) {
            return bad("disturbance bounds must straddle zero".into());
        }
        if self.norm_temp_margin_f < 0.0 {
            return bad("norm_temp_margin_f must be nonnegative".into());
        }
        Ok(())
    }

    pub fn disturbance_enabled(&self) -> bool {
        self.disturbance_low != 0.0 || self.disturbance_high != 0.0
    }

    /// Symmetric disturbance `[-level, level]`.
    pub fn with_disturbance(mut self, level: f64) -> Self {
        self.disturbance_low = -level;
        self.disturbance_high = level;
        self
    }

    /// Same home with the battery disabled.
    pub fn without_storage(mut self) -> Self {
        self.c_max = 0.0;
        self.d_max = 0.0;
        self
    }
}

/// MDP state at the start of a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub slot: usize,
    pub solar_kw: f64,
    pub demand_kw: f64,
    pub soc_kwh: f64,
    pub outdoor_f: f64,
    pub indoor_f: f64,
    pub price: f64,
    pub hour: usize,
}

/// Unconstrained action proposed by a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawAction {
    /// Battery power (kW), positive charges.
    pub f: f64,
    /// HVAC input power (kW).
    pub e: f64,
}

/// Action after feasibility clipping against the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleAction {
    f: f64,
    e: f64,
}

impl FeasibleAction {
    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    /// Charging power `c = max(f, 0)`.
    pub fn charge(&self) -> f64 {
        self.f.max(0.0)
    }

    /// Discharging power `d = min(f, 0)`, nonpositive.
    pub fn discharge(&self) -> f64 {
        self.f.min(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub action: FeasibleAction,
    pub reward: f64,
    /// Energy cost ($).
    pub c1: f64,
    /// Battery depreciation ($).
    pub c2: f64,
    /// Comfort deviation at the new indoor temperature (F).
    pub c3: f64,
    /// Grid power (kW).
    pub g: f64,
    pub disturbance: f64,
}

/// Initial state of an episode beginning at `start_slot`.
pub fn reset(config: &HomeConfig, traces: &TraceSet, start_slot: usize) -> Result<EnvState> {
    if !start_slot.is_multiple_of(HOURS_PER_DAY)
        || start_slot + HOURS_PER_DAY > traces.horizon_len()
    {
        return Err(Error::Range(format!(
            "start slot {start_slot} must be a day boundary with a full day left in a {}-slot trace",
            traces.horizon_len()
        )));
    }
    Ok(exogenous_state(
        traces,
        start_slot,
        config.b_0,
        config.t_in_0,
    ))
}

fn exogenous_state(traces: &TraceSet, slot: usize, soc_kwh: f64, indoor_f: f64) -> EnvState {
    // past the end of the trace the last row is held
    let k = slot.min(traces.horizon_len() - 1);
    EnvState {
        slot,
        solar_kw: traces.solar_kw()[k],
        demand_kw: traces.demand_kw()[k],
        soc_kwh,
        outdoor_f: traces.outdoor_f()[k],
        indoor_f,
        price: traces.price_buy()[k],
        hour: slot % HOURS_PER_DAY,
    }
}

/// Clip a raw action into the feasible set at `state`.
pub fn clip_action(
    raw: RawAction,
    state: &EnvState,
    config: &HomeConfig,
) -> Result<FeasibleAction> {
    if !raw.f.is_finite() || !raw.e.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite action f={} e={}",
            raw.f, raw.e
        )));
    }
    let e = if state.indoor_f < config.t_min {
        0.0
    } else {
        raw.e.clamp(0.0, config.e_max)
    };
    let b = state.soc_kwh;
    let f = if raw.f >= 0.0 {
        let hi = config.c_max.min((config.b_max - b) / config.eta_c).max(0.0);
        raw.f.min(hi)
    } else {
        // less negative of the two lower bounds, so the battery never drops below b_min
        let lo = (-config.d_max)
            .max((config.b_min - b) * config.eta_d)
            .min(0.0);
        raw.f.max(lo)
    };
    Ok(FeasibleAction { f, e })
}

/// Battery energy after one slot at power `f`.
pub fn ess_step(soc_kwh: f64, f: f64, config: &HomeConfig) -> f64 {
    let next = soc_kwh + config.eta_c * f.max(0.0) + f.min(0.0) / config.eta_d;
    next.clamp(config.b_min, config.b_max)
}

/// First-order room model plus an additive disturbance.
pub fn thermal_step(
    indoor_f: f64,
    outdoor_f: f64,
    e: f64,
    config: &HomeConfig,
    disturbance: f64,
) -> f64 {
    let eps = config.epsilon;
    eps * indoor_f
        + (1.0 - eps) * (outdoor_f - config.eta_hvac / config.conductivity * e)
        + disturbance
}

/// Grid exchange from the power balance `g + p - d = b + e + c`.
pub fn grid_power(state: &EnvState, act: &FeasibleAction) -> f64 {
    state.demand_kw + act.e() + act.charge() + act.discharge() - state.solar_kw
}

/// Buy at `v` when `g >= 0`, sell at `delta_sell * v` otherwise.
pub fn energy_cost(g: f64, v: f64, config: &HomeConfig) -> f64 {
    let u = config.delta_sell * v;
    (v - u) / 2.0 * g.abs() + (v + u) / 2.0 * g
}

pub fn depreciation_cost(f: f64, config: &HomeConfig) -> f64 {
    config.psi * (f.max(0.0).abs() + f.min(0.0).abs())
}

/// Linear excursion outside the comfort band.
pub fn comfort_penalty(indoor_f: f64, config: &HomeConfig) -> f64 {
    (indoor_f - config.t_max).max(0.0) + (config.t_min - indoor_f).max(0.0)
}

pub fn reward(c1: f64, c2: f64, c3: f64, beta: f64) -> f64 {
    -beta * (c1 + c2) - c3
}

/// Draw one thermal disturbance. Always consumes exactly one draw so that
/// different policies see the same realization sequence.
pub fn draw_disturbance(config: &HomeConfig, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    if config.disturbance_enabled() {
        config.disturbance_low + (config.disturbance_high - config.disturbance_low) * u
    } else {
        0.0
    }
}

/// One transition. Fails when `state.slot` is already past the trace.
pub fn step(
    state: &EnvState,
    raw: RawAction,
    traces: &TraceSet,
    config: &HomeConfig,
    rng: &mut impl Rng,
) -> Result<StepOutcome> {
    if state.slot >= traces.horizon_len() {
        return Err(Error::Range(format!(
            "slot {} is past the {}-slot trace",
            state.slot,
            traces.horizon_len()
        )));
    }
    let action = clip_action(raw, state, config)?;
    let disturbance = draw_disturbance(config, rng);
    let soc = ess_step(state.soc_kwh, action.f(), config);
    let indoor = thermal_step(
        state.indoor_f,
        state.outdoor_f,
        action.e(),
        config,
        disturbance,
    );
    let g = grid_power(state, &action);
    let c1 = energy_cost(g, state.price, config);
    let c2 = depreciation_cost(action.f(), config);
    let c3 = comfort_penalty(indoor, config);
    Ok(StepOutcome {
        next_state: exogenous_state(traces, state.slot + 1, soc, indoor),
        action,
        reward: reward(c1, c2, c3, config.beta),
        c1,
        c2,
        c3,
        g,
        disturbance,
    })
}

/// Stateful environment over a window of a trace, owning its disturbance
/// generator.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    config: HomeConfig,
    traces: &'a TraceSet,
    rng: ChaCha8Rng,
    state: EnvState,
    end_slot: usize,
}

impl<'a> Env<'a> {
    pub fn new(config: HomeConfig, traces: &'a TraceSet, seed: u64) -> Result<Self> {
        config.validate()?;
        let state = reset(&config, traces, 0)?;
        Ok(Self {
            config,
            traces,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state,
            end_slot: HOURS_PER_DAY,
        })
    }

    pub fn config(&self) -> &HomeConfig {
        &self.config
    }

    pub fn traces(&self) -> &TraceSet {
        self.traces
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Begin an episode of `n_slots` at day boundary `start_slot`.
    pub fn reset(&mut self, start_slot: usize, n_slots: usize) -> Result<EnvState> {
        if n_slots == 0 || start_slot + n_slots > self.traces.horizon_len() {
            return Err(Error::Range(format!(
                "window {start_slot}+{n_slots} exceeds the {}-slot trace",
                self.traces.horizon_len()
            )));
        }
        self.state = reset(&self.config, self.traces, start_slot)?;
        self.end_slot = start_slot + n_slots;
        Ok(self.state)
    }

    pub fn is_done(&self) -> bool {
        self.state.slot >= self.end_slot
    }

    pub fn step(&mut self, raw: RawAction) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::Range(format!(
                "episode ended at slot {}",
                self.end_slot
            )));
        }
        let out = step(&self.state, raw, self.traces, &self.config, &mut self.rng)?;
        self.state = out.next_state;
        Ok(out)
    }
}
