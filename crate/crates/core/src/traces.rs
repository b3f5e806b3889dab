//! Exogenous hourly series: solar output, household demand, outdoor
//! temperature and buying price.
//!
//! Traces come either from a CSV file (`hour,solar_kw,demand_kw,outdoor_f,price_buy`)
//! or from [`gen_synthetic`]. Network inputs are min-max normalized with
//! [`NormStats`] computed over the training traces.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvState, HomeConfig};
use crate::error::{Error, Result};

pub const HOURS_PER_DAY: usize = 24;

/// Column order of the trace CSV format.
pub const TRACE_HEADER: [&str; 5] = ["hour", "solar_kw", "demand_kw", "outdoor_f", "price_buy"];

/// Time-aligned hourly exogenous series.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    solar_kw: Vec<f64>,
    demand_kw: Vec<f64>,
    outdoor_f: Vec<f64>,
    price_buy: Vec<f64>,
}

impl TraceSet {
    /// Slot duration in hours. Fixed.
    pub const SLOT_DURATION_H: f64 = 1.0;

    pub fn new(
        solar_kw: Vec<f64>,
        demand_kw: Vec<f64>,
        outdoor_f: Vec<f64>,
        price_buy: Vec<f64>,
    ) -> Result<Self> {
        let len = solar_kw.len();
        if demand_kw.len() != len || outdoor_f.len() != len || price_buy.len() != len {
            return Err(Error::Schema(format!(
                "series lengths differ: solar {}, demand {}, outdoor {}, price {}",
                len,
                demand_kw.len(),
                outdoor_f.len(),
                price_buy.len()
            )));
        }
        for row in 0..len {
            validate_row(
                row,
                solar_kw[row],
                demand_kw[row],
                outdoor_f[row],
                price_buy[row],
            )?;
        }
        if len == 0 || !len.is_multiple_of(HOURS_PER_DAY) {
            return Err(Error::Length { len });
        }
        Ok(Self {
            solar_kw,
            demand_kw,
            outdoor_f,
            price_buy,
        })
    }

    pub fn horizon_len(&self) -> usize {
        self.solar_kw.len()
    }

    pub fn days(&self) -> usize {
        self.horizon_len() / HOURS_PER_DAY
    }

    pub fn solar_kw(&self) -> &[f64] {
        &self.solar_kw
    }

    pub fn demand_kw(&self) -> &[f64] {
        &self.demand_kw
    }

    pub fn outdoor_f(&self) -> &[f64] {
        &self.outdoor_f
    }

    pub fn price_buy(&self) -> &[f64] {
        &self.price_buy
    }

    /// Contiguous whole-day window `[start_day, start_day + days)`.
    pub fn slice_days(&self, start_day: usize, days: usize) -> Result<TraceSet> {
        let lo = start_day * HOURS_PER_DAY;
        let hi = lo + days * HOURS_PER_DAY;
        if days == 0 || hi > self.horizon_len() {
            return Err(Error::Range(format!(
                "days {start_day}..{} outside trace of {} days",
                start_day + days,
                self.days()
            )));
        }
        Ok(TraceSet {
            solar_kw: self.solar_kw[lo..hi].to_vec(),
            demand_kw: self.demand_kw[lo..hi].to_vec(),
            outdoor_f: self.outdoor_f[lo..hi].to_vec(),
            price_buy: self.price_buy[lo..hi].to_vec(),
        })
    }

    /// Write the trace in the CSV format read by [`load_trace`].
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(TRACE_HEADER)
            .map_err(|e| Error::csv(path, e))?;
        for t in 0..self.horizon_len() {
            w.write_record([
                t.to_string(),
                self.solar_kw[t].to_string(),
                self.demand_kw[t].to_string(),
                self.outdoor_f[t].to_string(),
                self.price_buy[t].to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn validate_row(row: usize, solar: f64, demand: f64, outdoor: f64, price: f64) -> Result<()> {
    let fail = |message: String| Err(Error::Validation { row, message });
    if !(solar.is_finite() && demand.is_finite() && outdoor.is_finite() && price.is_finite()) {
        return fail("non-finite value".into());
    }
    if solar < 0.0 {
        return fail(format!("negative solar_kw {solar}"));
    }
    if demand < 0.0 {
        return fail(format!("negative demand_kw {demand}"));
    }
    if price <= 0.0 {
        return fail(format!("nonpositive price_buy {price}"));
    }
    Ok(())
}

/// Load and validate a trace CSV. Rows keep file order; `hour` must count 0, 1, 2, ...
pub fn load_trace(path: impl AsRef<Path>) -> Result<TraceSet> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;

    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != TRACE_HEADER {
        return Err(Error::Schema(format!(
            "expected columns {:?}, found {:?}",
            TRACE_HEADER, names
        )));
    }

    let mut cols: [Vec<f64>; 4] = Default::default();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() != TRACE_HEADER.len() {
            return Err(Error::Schema(format!(
                "row {row} has {} fields, expected {}",
                record.len(),
                TRACE_HEADER.len()
            )));
        }
        let hour: usize = record[0].parse().map_err(|_| Error::Validation {
            row,
            message: format!("hour {:?} is not a slot index", &record[0]),
        })?;
        if hour != row {
            return Err(Error::Validation {
                row,
                message: format!("hour column not contiguous: expected {row}, found {hour}"),
            });
        }
        let mut vals = [0.0; 4];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = record[k + 1].parse().map_err(|_| Error::Validation {
                row,
                message: format!(
                    "{} value {:?} is not a number",
                    TRACE_HEADER[k + 1],
                    &record[k + 1]
                ),
            })?;
        }
        validate_row(row, vals[0], vals[1], vals[2], vals[3])?;
        for (col, v) in cols.iter_mut().zip(vals) {
            col.push(v);
        }
    }
    let [solar, demand, outdoor, price] = cols;
    TraceSet::new(solar, demand, outdoor, price)
}

/// Parameters of the synthetic trace generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTraceSpec {
    pub days: i64,
    pub solar_peak_kw: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub demand_base_kw: f64,
    pub demand_peak_kw: f64,
    /// Center of the evening demand bump.
    pub demand_peak_hour: f64,
    pub outdoor_mean_f: f64,
    pub outdoor_amplitude_f: f64,
    /// Hour of the daily outdoor maximum.
    pub outdoor_peak_hour: f64,
    pub price_off_peak: f64,
    pub price_on_peak: f64,
    pub on_peak_start_hour: u32,
    pub on_peak_end_hour: u32,
    pub solar_noise_kw: f64,
    pub demand_noise_kw: f64,
    pub outdoor_noise_f: f64,
    pub price_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticTraceSpec {
    /// A hot-summer month under a two-level time-of-use tariff.
    fn default() -> Self {
        Self {
            days: 31,
            solar_peak_kw: 2.0,
            sunrise_hour: 6.0,
            sunset_hour: 20.0,
            demand_base_kw: 0.6,
            demand_peak_kw: 2.0,
            demand_peak_hour: 19.0,
            outdoor_mean_f: 85.0,
            outdoor_amplitude_f: 9.0,
            outdoor_peak_hour: 15.0,
            price_off_peak: 0.08,
            price_on_peak: 0.25,
            on_peak_start_hour: 14,
            on_peak_end_hour: 20,
            solar_noise_kw: 0.3,
            demand_noise_kw: 0.2,
            outdoor_noise_f: 1.5,
            price_noise: 0.0,
            seed: 1,
        }
    }
}

impl SyntheticTraceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.days <= 0 {
            return Err(Error::Parameter(format!(
                "days must be positive, got {}",
                self.days
            )));
        }
        let nonneg = [
            ("solar_peak_kw", self.solar_peak_kw),
            ("demand_base_kw", self.demand_base_kw),
            ("demand_peak_kw", self.demand_peak_kw),
            ("outdoor_amplitude_f", self.outdoor_amplitude_f),
            ("solar_noise_kw", self.solar_noise_kw),
            ("demand_noise_kw", self.demand_noise_kw),
            ("outdoor_noise_f", self.outdoor_noise_f),
            ("price_noise", self.price_noise),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.price_off_peak > 0.0 && self.price_on_peak > 0.0) {
            return Err(Error::Parameter("prices must be positive".into()));
        }
        if self.on_peak_start_hour > self.on_peak_end_hour || self.on_peak_end_hour > 24 {
            return Err(Error::Parameter(format!(
                "on-peak window {}..{} not inside [0,24)",
                self.on_peak_start_hour, self.on_peak_end_hour
            )));
        }
        if !(0.0..=24.0).contains(&self.sunrise_hour) || self.sunset_hour <= self.sunrise_hour {
            return Err(Error::Parameter(
                "daylight window must satisfy 0 <= sunrise < sunset".into(),
            ));
        }
        Ok(())
    }

    fn is_on_peak(&self, hour: usize) -> bool {
        (self.on_peak_start_hour as usize..self.on_peak_end_hour as usize).contains(&hour)
    }
}

/// Smallest price the generator emits after noise.
const PRICE_FLOOR: f64 = 1e-3;

/// Deterministic synthetic traces: half-sine daylight solar, base plus
/// evening-bump demand, sinusoidal outdoor temperature, two-level price.
pub fn gen_synthetic(spec: &SyntheticTraceSpec) -> Result<TraceSet> {
    spec.validate()?;
    let len = spec.days as usize * HOURS_PER_DAY;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // symmetric uniform noise of half-width `amp`
    let mut noise = |amp: f64| amp * (2.0 * rng.random::<f64>() - 1.0);

    let mut solar = Vec::with_capacity(len);
    let mut demand = Vec::with_capacity(len);
    let mut outdoor = Vec::with_capacity(len);
    let mut price = Vec::with_capacity(len);

    let daylight = spec.sunset_hour - spec.sunrise_hour;
    for t in 0..len {
        let hour = t % HOURS_PER_DAY;
        let h = hour as f64;

        let ns = noise(spec.solar_noise_kw);
        let nd = noise(spec.demand_noise_kw);
        let no = noise(spec.outdoor_noise_f);
        let np = noise(spec.price_noise);

        let solar_base = if h > spec.sunrise_hour && h < spec.sunset_hour {
            spec.solar_peak_kw * (PI * (h - spec.sunrise_hour) / daylight).sin()
        } else {
            0.0
        };
        // night stays dark
        solar.push(if solar_base > 0.0 {
            (solar_base + ns).max(0.0)
        } else {
            0.0
        });

        let z = (h - spec.demand_peak_hour) / 2.5;
        let demand_base =
            spec.demand_base_kw + (spec.demand_peak_kw - spec.demand_base_kw) * (-z * z).exp();
        demand.push((demand_base + nd).max(0.0));

        let phase = 2.0 * PI * (h - spec.outdoor_peak_hour) / HOURS_PER_DAY as f64;
        outdoor.push(spec.outdoor_mean_f + spec.outdoor_amplitude_f * phase.cos() + no);

        let level = if spec.is_on_peak(hour) {
            spec.price_on_peak
        } else {
            spec.price_off_peak
        };
        price.push((level + np).max(PRICE_FLOOR));
    }
    TraceSet::new(solar, demand, outdoor, price)
}

/// Index of each state channel in a normalized state vector.
pub mod channel {
    pub const SOLAR: usize = 0;
    pub const DEMAND: usize = 1;
    pub const SOC: usize = 2;
    pub const OUTDOOR: usize = 3;
    pub const INDOOR: usize = 4;
    pub const PRICE: usize = 5;
    pub const HOUR: usize = 6;
    pub const COUNT: usize = 7;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRange {
    pub min: f64,
    pub max: f64,
}

impl ChannelRange {
    fn of(xs: &[f64]) -> Self {
        let (min, max) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        Self { min, max }
    }

    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    /// Min-max scale into [0,1] with clamping; constant channels map to 0.5.
    pub fn scale(&self, x: f64) -> f64 {
        if self.is_constant() {
            0.5
        } else {
            ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        }
    }
}

/// Per-channel normalization bounds for the 7-component state.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub ranges: [ChannelRange; channel::COUNT],
}

impl NormStats {
    pub fn constant_channels(&self) -> Vec<usize> {
        (0..channel::COUNT)
            .filter(|&c| self.ranges[c].is_constant())
            .collect()
    }

    /// `channel,min,max`, one row per channel in state order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["channel", "min", "max"])
            .map_err(|e| Error::csv(path, e))?;
        for (c, r) in self.ranges.iter().enumerate() {
            w.write_record([c.to_string(), r.min.to_string(), r.max.to_string()])
                .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let header = r.headers().map_err(|e| Error::csv(path, e))?;
        if header.iter().collect::<Vec<_>>() != ["channel", "min", "max"] {
            return Err(Error::Schema(format!(
                "{}: expected header channel,min,max",
                path.display()
            )));
        }
        let mut ranges = [ChannelRange { min: 0.0, max: 0.0 }; channel::COUNT];
        let mut seen = 0;
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Validation {
                        row,
                        message: format!("bad field {i}"),
                    })
            };
            if row >= channel::COUNT || field(0)? != row as f64 {
                return Err(Error::Validation {
                    row,
                    message: "channels must be listed 0..7 in order".into(),
                });
            }
            ranges[row] = ChannelRange {
                min: field(1)?,
                max: field(2)?,
            };
            seen += 1;
        }
        if seen != channel::COUNT {
            return Err(Error::Schema(format!(
                "{}: expected {} channels, found {seen}",
                path.display(),
                channel::COUNT
            )));
        }
        Ok(Self { ranges })
    }
}

/// Normalization bounds from training traces. SoC uses the battery limits,
/// indoor temperature the comfort band widened by the configured margin,
/// and hour-of-day `[0, 23]`.
pub fn compute_norm_stats(traces: &TraceSet, home: &HomeConfig) -> NormStats {
    use channel::*;
    let mut ranges = [ChannelRange { min: 0.0, max: 0.0 }; COUNT];
    ranges[SOLAR] = ChannelRange::of(traces.solar_kw());
    ranges[DEMAND] = ChannelRange::of(traces.demand_kw());
    ranges[SOC] = ChannelRange {
        min: home.b_min,
        max: home.b_max,
    };
    ranges[OUTDOOR] = ChannelRange::of(traces.outdoor_f());
    ranges[INDOOR] = ChannelRange {
        min: home.t_min - home.norm_temp_margin_f,
        max: home.t_max + home.norm_temp_margin_f,
    };
    ranges[PRICE] = ChannelRange::of(traces.price_buy());
    ranges[HOUR] = ChannelRange {
        min: 0.0,
        max: (HOURS_PER_DAY - 1) as f64,
    };
    NormStats { ranges }
}

/// Raw 7-component state vector in channel order.
pub fn state_vector(state: &EnvState) -> [f64; channel::COUNT] {
    [
        state.solar_kw,
        state.demand_kw,
        state.soc_kwh,
        state.outdoor_f,
        state.indoor_f,
        state.price,
        state.hour as f64,
    ]
}

/// Map a state into `[0,1]^7`.
pub fn preprocess(state: &EnvState, stats: &NormStats) -> [f64; channel::COUNT] {
    let raw = state_vector(state);
    std::array::from_fn(|c| stats.ranges[c].scale(raw[c]))
}
