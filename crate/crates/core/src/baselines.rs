//! Comparison policies: thermostatic ON/OFF control, DDPG without storage,
//! and a perfect-information dynamic-programming oracle.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{
    evaluate, rollout, train, EpisodeLog, Policy, SlotRecord, TrainConfig, TrainReport,
};
use crate::env::{
    clip_action, comfort_penalty, depreciation_cost, energy_cost, ess_step, step, thermal_step,
    EnvState, HomeConfig, RawAction,
};
use crate::error::{Error, Result};
use crate::traces::TraceSet;

/// Hysteresis thermostat: switches on above the band, off below it, and
/// keeps its mode inside. Never touches the battery.
#[derive(Debug, Clone, Default)]
pub struct OnOffPolicy {
    on: bool,
    e_max: f64,
    t_min: f64,
    t_max: f64,
}

impl OnOffPolicy {
    /// Starts in the off mode.
    pub fn new(home: &HomeConfig) -> Self {
        Self {
            on: false,
            e_max: home.e_max,
            t_min: home.t_min,
            t_max: home.t_max,
        }
    }

    pub fn is_on(&self) -> bool {
        self.on
    }

    pub fn decide(&mut self, indoor_f: f64) -> RawAction {
        if indoor_f > self.t_max {
            self.on = true;
        } else if indoor_f < self.t_min {
            self.on = false;
        }
        RawAction {
            f: 0.0,
            e: if self.on { self.e_max } else { 0.0 },
        }
    }
}

impl Policy for OnOffPolicy {
    fn act(&mut self, state: &EnvState) -> Result<RawAction> {
        Ok(self.decide(state.indoor_f))
    }
}

pub fn run_baseline1(
    traces: &TraceSet,
    home: &HomeConfig,
    start_slot: usize,
    n_slots: usize,
    disturbance_seed: u64,
) -> Result<EpisodeLog> {
    let mut policy = OnOffPolicy::new(home);
    rollout(
        &mut policy,
        traces,
        home,
        start_slot,
        n_slots,
        disturbance_seed,
    )
}

/// Train and evaluate DDPG on the same home with the battery disabled.
pub fn run_baseline2(
    train_traces: &TraceSet,
    test_traces: &TraceSet,
    home: &HomeConfig,
    config: &TrainConfig,
    start_slot: usize,
    n_slots: usize,
    disturbance_seed: u64,
) -> Result<(EpisodeLog, TrainReport)> {
    let home = home.clone().without_storage();
    let report = train(train_traces, &home, config)?;
    let log = evaluate(
        &report.actor,
        &report.norm_stats,
        test_traces,
        &home,
        start_slot,
        n_slots,
        disturbance_seed,
    )?;
    Ok((log, report))
}

/// Discretization used by [`dp_oracle`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleGrid {
    /// Battery-energy node spacing (kWh).
    pub soc_step: f64,
    /// Indoor-temperature node spacing (F).
    pub temp_step: f64,
    /// Temperature axis covers the comfort band widened by this much (F).
    pub temp_margin: f64,
    /// Battery power levels spanning `[-d_max, c_max]`.
    pub f_levels: usize,
    /// HVAC power levels spanning `[0, e_max]`.
    pub e_levels: usize,
    /// Cost per F of comfort violation; large enough to act as a hard constraint.
    pub comfort_weight: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            soc_step: 0.1,
            temp_step: 0.5,
            temp_margin: 10.0,
            f_levels: 13,
            e_levels: 9,
            comfort_weight: 1e6,
        }
    }
}

impl OracleGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.soc_step > 0.0 && self.temp_step > 0.0) {
            return Err(Error::Parameter("grid steps must be positive".into()));
        }
        if self.temp_margin < 0.0 || self.comfort_weight < 0.0 {
            return Err(Error::Parameter(
                "temp_margin and comfort_weight must be nonnegative".into(),
            ));
        }
        if self.f_levels < 1 || self.e_levels < 1 {
            return Err(Error::Parameter(
                "need at least one action level per axis".into(),
            ));
        }
        Ok(())
    }

    /// Halve both state steps and double the action resolution. The coarse
    /// action levels stay members of the refined set.
    pub fn refined(&self) -> Self {
        Self {
            soc_step: self.soc_step / 2.0,
            temp_step: self.temp_step / 2.0,
            f_levels: self.f_levels.max(1) * 2 - 1,
            e_levels: self.e_levels.max(1) * 2 - 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Sum of energy and depreciation cost ($).
    pub total_cost: f64,
    /// Sum of comfort deviation (F·slots).
    pub total_deviation: f64,
    /// Optimal objective at the initial node, as estimated by the backward pass.
    pub planned_objective: f64,
    pub schedule: EpisodeLog,
}

impl OracleResult {
    /// `slot,f,e,g,B,T_in,c1,c2,c3` with `B`, `T_in` at the start of the slot.
    pub fn write_schedule_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["slot", "f", "e", "g", "B", "T_in", "c1", "c2", "c3"])
            .map_err(|e| Error::csv(path, e))?;
        for r in &self.schedule.records {
            let vals = [r.f, r.e, r.g, r.soc_kwh, r.indoor_f, r.c1, r.c2, r.c3];
            let mut row = vec![r.slot.to_string()];
            row.extend(vals.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Evenly spaced nodes from `lo` to `hi` with spacing at most `step`.
fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let n = ((hi - lo) / step - 1e-9).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

fn levels(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![if lo <= 0.0 && 0.0 <= hi { 0.0 } else { lo }];
    }
    if hi <= lo {
        return vec![lo];
    }
    let mut v: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    // snap the level nearest zero so "idle" is always available when in range
    if let Some(k) = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(k, _)| k)
    {
        if v[k].abs() < 1e-12 {
            v[k] = 0.0;
        }
    }
    v
}

/// Linear-interpolation coordinate: lower node index and weight of the upper node.
#[derive(Debug, Clone, Copy)]
struct Coord {
    idx: usize,
    w: f64,
}

fn locate(nodes: &[f64], x: f64) -> Coord {
    let n = nodes.len();
    if n == 1 || x <= nodes[0] {
        return Coord { idx: 0, w: 0.0 };
    }
    if x >= nodes[n - 1] {
        return Coord { idx: n - 2, w: 1.0 };
    }
    let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    let mut i = (((x - nodes[0]) / h).floor() as usize).min(n - 2);
    // guard against rounding at node boundaries
    while i > 0 && x < nodes[i] {
        i -= 1;
    }
    while i + 2 < n && x >= nodes[i + 1] {
        i += 1;
    }
    Coord {
        idx: i,
        w: (x - nodes[i]) / (nodes[i + 1] - nodes[i]),
    }
}

struct ValueTable {
    n_t: usize,
    data: Vec<f64>,
}

impl ValueTable {
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_t + j]
    }

    fn interp(&self, b: Coord, t: Coord) -> f64 {
        let b1 = (b.idx + 1).min(self.data.len() / self.n_t - 1);
        let t1 = (t.idx + 1).min(self.n_t - 1);
        let v00 = self.get(b.idx, t.idx);
        let v01 = self.get(b.idx, t1);
        let v10 = self.get(b1, t.idx);
        let v11 = self.get(b1, t1);
        let lo = v00 + t.w * (v01 - v00);
        let hi = v10 + t.w * (v11 - v10);
        lo + b.w * (hi - lo)
    }
}

const COMFORT_TOL: f64 = 1e-9;

/// Perfect-information cost minimizer over `horizon` slots from `start_slot`.
///
/// Backward induction over a `(battery energy, indoor temperature)` grid with
/// bilinear interpolation of the value function, minimizing
/// `sum(C1 + C2) + comfort_weight * sum(C3)`. The schedule is then rolled out
/// on the continuous nominal dynamics, choosing at each slot the grid action
/// that minimizes stage cost plus interpolated cost-to-go.
///
/// Returns [`Error::ComfortInfeasible`] if the rolled-out schedule leaves the
/// comfort band, which only happens when no action can keep it there.
pub fn dp_oracle(
    traces: &TraceSet,
    home: &HomeConfig,
    grid: &OracleGrid,
    start_slot: usize,
    horizon: usize,
) -> Result<OracleResult> {
    grid.validate()?;
    home.validate()?;
    if horizon == 0 || start_slot + horizon > traces.horizon_len() {
        return Err(Error::Range(format!(
            "oracle window {start_slot}+{horizon} exceeds the {}-slot trace",
            traces.horizon_len()
        )));
    }
    // nominal dynamics only
    let home = &home.clone().with_disturbance(0.0);

    let socs = axis(home.b_min, home.b_max, grid.soc_step);
    let temps = axis(
        home.t_min - grid.temp_margin,
        home.t_max + grid.temp_margin,
        grid.temp_step,
    );
    let fs = levels(-home.d_max, home.c_max, grid.f_levels);
    let es = levels(0.0, home.e_max, grid.e_levels);
    let (n_b, n_t) = (socs.len(), temps.len());

    // Battery transitions depend only on (node, level); precompute them.
    struct SocMove {
        f: f64,
        next: Coord,
        wear: f64,
    }
    let probe = |soc: f64, temp: f64| EnvState {
        slot: 0,
        solar_kw: 0.0,
        demand_kw: 0.0,
        soc_kwh: soc,
        outdoor_f: 0.0,
        indoor_f: temp,
        price: 0.0,
        hour: 0,
    };
    let mut soc_moves: Vec<Vec<SocMove>> = Vec::with_capacity(n_b);
    for &b in &socs {
        let mut moves = Vec::with_capacity(fs.len());
        for &f in &fs {
            let act = clip_action(RawAction { f, e: 0.0 }, &probe(b, home.t_max), home)?;
            let nb = ess_step(b, act.f(), home);
            moves.push(SocMove {
                f: act.f(),
                next: locate(&socs, nb),
                wear: depreciation_cost(act.f(), home),
            });
        }
        soc_moves.push(moves);
    }

    let mut values: Vec<ValueTable> = Vec::with_capacity(horizon + 1);
    values.push(ValueTable {
        n_t,
        data: vec![0.0; n_b * n_t],
    });

    struct TempMove {
        e: f64,
        next: Coord,
        penalty: f64,
    }
    let mut temp_moves: Vec<Vec<TempMove>> =
        (0..n_t).map(|_| Vec::with_capacity(es.len())).collect();

    for k in (0..horizon).rev() {
        let slot = start_slot + k;
        let (p, b_load, t_out, v) = (
            traces.solar_kw()[slot],
            traces.demand_kw()[slot],
            traces.outdoor_f()[slot],
            traces.price_buy()[slot],
        );
        for (j, &temp) in temps.iter().enumerate() {
            let moves = &mut temp_moves[j];
            moves.clear();
            for &e in &es {
                let act = clip_action(RawAction { f: 0.0, e }, &probe(home.b_min, temp), home)?;
                let nt = thermal_step(temp, t_out, act.e(), home, 0.0);
                moves.push(TempMove {
                    e: act.e(),
                    next: locate(&temps, nt),
                    penalty: grid.comfort_weight * comfort_penalty(nt, home),
                });
            }
        }
        let next = values.last().unwrap();
        let mut data = vec![0.0; n_b * n_t];
        for i in 0..n_b {
            for j in 0..n_t {
                let mut best = f64::INFINITY;
                for sm in &soc_moves[i] {
                    for tm in &temp_moves[j] {
                        let g = b_load + tm.e + sm.f - p;
                        let cost = energy_cost(g, v, home)
                            + sm.wear
                            + tm.penalty
                            + next.interp(sm.next, tm.next);
                        if cost < best {
                            best = cost;
                        }
                    }
                }
                data[i * n_t + j] = best;
            }
        }
        values.push(ValueTable { n_t, data });
    }
    values.reverse();

    // Forward pass on continuous dynamics.
    let mut state = crate::env::reset(home, traces, start_slot)?;
    let planned_objective =
        values[0].interp(locate(&socs, state.soc_kwh), locate(&temps, state.indoor_f));
    // disturbance is disabled; the generator is never consulted for a value
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut schedule = EpisodeLog::default();
    for k in 0..horizon {
        let next = &values[k + 1];
        let mut best: Option<(f64, RawAction)> = None;
        for &f in &fs {
            for &e in &es {
                let raw = RawAction { f, e };
                let act = clip_action(raw, &state, home)?;
                let nb = ess_step(state.soc_kwh, act.f(), home);
                let nt = thermal_step(state.indoor_f, state.outdoor_f, act.e(), home, 0.0);
                let g = state.demand_kw + act.e() + act.f() - state.solar_kw;
                let cost = energy_cost(g, state.price, home)
                    + depreciation_cost(act.f(), home)
                    + grid.comfort_weight * comfort_penalty(nt, home)
                    + next.interp(locate(&socs, nb), locate(&temps, nt));
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, raw));
                }
            }
        }
        let raw = best.expect("action grid is nonempty").1;
        let out = step(&state, raw, traces, home, &mut rng)?;
        if out.c3 > COMFORT_TOL {
            return Err(Error::ComfortInfeasible {
                slot: state.slot,
                deviation: out.c3,
            });
        }
        schedule.push(SlotRecord {
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
    Ok(OracleResult {
        total_cost: schedule.total_cost,
        total_deviation: schedule.total_deviation,
        planned_objective,
        schedule,
    })
}
