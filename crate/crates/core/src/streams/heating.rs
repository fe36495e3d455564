//! Synthetic smart-home heating streams driven by a shared weather series.
//!
//! Features per half-hour sample: hour of day, day of week, external
//! temperature (°C), rainfall (mm) and a daylight flag. The target is the
//! desired room temperature of the active heating schedule.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Instance, StreamConfig, StreamError};

pub const SAMPLES_PER_DAY: usize = 48;
pub const HEATING_FEATURES: [&str; 5] = ["hour", "weekday", "ext_temp", "rain", "daylight"];

const WEATHER_SALT: u64 = 0x5151_a7e3_0c0f_fee5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    /// Occupied hours `[start, end)` on weekdays and at weekends.
    pub weekday: (f64, f64),
    pub weekend: (f64, f64),
    pub comfort: f64,
    /// Degrees added per degree of outside temperature below 15 °C.
    pub cold_gain: f64,
    pub rain_bonus: f64,
    pub setback: f64,
}

impl Schedule {
    pub fn occupied(&self, hour: f64, weekday: usize) -> bool {
        let (start, end) = if weekday >= 5 { self.weekend } else { self.weekday };
        hour >= start && hour < end
    }

    pub fn target(&self, hour: f64, weekday: usize, ext_temp: f64, rain: f64) -> f64 {
        if !self.occupied(hour, weekday) {
            return self.setback;
        }
        let cold = (15.0 - ext_temp).max(0.0);
        let wet = if rain > 0.0 { self.rain_bonus } else { 0.0 };
        (self.comfort + self.cold_gain * cold + wet).min(25.0)
    }
}

pub const SCHEDULES: [Schedule; 4] = [
    Schedule { weekday: (6.5, 22.5), weekend: (8.0, 23.0), comfort: 19.0, cold_gain: 0.10, rain_bonus: 0.5, setback: 12.0 },
    Schedule { weekday: (17.0, 23.0), weekend: (9.0, 23.5), comfort: 20.5, cold_gain: 0.15, rain_bonus: 0.0, setback: 14.0 },
    Schedule { weekday: (5.5, 9.0), weekend: (7.0, 21.0), comfort: 21.5, cold_gain: 0.05, rain_bonus: 1.0, setback: 10.0 },
    Schedule { weekday: (0.0, 24.0), weekend: (0.0, 24.0), comfort: 18.0, cold_gain: 0.20, rain_bonus: 0.3, setback: 16.0 },
];

/// Daily weather state shared by every stream built from the same seed.
#[derive(Debug, Clone)]
struct Weather {
    rng: ChaCha8Rng,
    day: usize,
    anomaly: f64,
    wet: bool,
    rain_today: [f64; SAMPLES_PER_DAY],
}

impl Weather {
    fn new(seed: u64) -> Self {
        let mut w = Self {
            rng: ChaCha8Rng::seed_from_u64(seed ^ WEATHER_SALT),
            day: 0,
            anomaly: 0.0,
            wet: false,
            rain_today: [0.0; SAMPLES_PER_DAY],
        };
        w.roll_day();
        w
    }

    fn roll_day(&mut self) {
        let noise = Normal::new(0.0, 1.5).expect("valid normal");
        self.anomaly = 0.7 * self.anomaly + noise.sample(&mut self.rng);
        let p_wet = if self.wet { 0.6 } else { 0.3 };
        self.wet = self.rng.random_bool(p_wet);
        self.rain_today = [0.0; SAMPLES_PER_DAY];
        if self.wet {
            let bursts = self.rng.random_range(1..=3);
            for _ in 0..bursts {
                let start = self.rng.random_range(0..SAMPLES_PER_DAY);
                let len = self.rng.random_range(1..=6);
                let rate = self.rng.random_range(0.2..3.0);
                for s in start..(start + len).min(SAMPLES_PER_DAY) {
                    self.rain_today[s] += rate;
                }
            }
        }
    }

    fn advance_day(&mut self) {
        self.day += 1;
        self.roll_day();
    }

    fn temperature(&self, sample: usize) -> f64 {
        let day = self.day as f64;
        let hour = sample as f64 / 2.0;
        let seasonal = 10.0 - 8.0 * (2.0 * PI * (day + 10.0) / 365.0).cos();
        let daily = 4.0 * (2.0 * PI * (hour - 9.0) / 24.0).sin();
        seasonal + daily + self.anomaly
    }

    fn daylight(&self, sample: usize) -> bool {
        let day = self.day as f64;
        let hour = sample as f64 / 2.0;
        let half_len = 6.0 - 2.5 * (2.0 * PI * (day + 10.0) / 365.0).cos();
        (hour - 12.5).abs() < half_len
    }
}

#[derive(Debug, Clone)]
pub struct HeatingStream {
    weather: Weather,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    drift_every: usize,
    length: usize,
    t: usize,
}

pub fn heating_stream(config: &StreamConfig) -> Result<HeatingStream, StreamError> {
    config.validate()?;
    let mut weather = Weather::new(config.shared_seed());
    for _ in 0..config.offset_days {
        weather.advance_day();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..SCHEDULES.len()).collect();
    order.shuffle(&mut rng);
    let drift_every = if config.drifts == 0 {
        usize::MAX
    } else {
        (config.length / (config.drifts + 1)).max(1)
    };
    Ok(HeatingStream { weather, rng, order, drift_every, length: config.length, t: 0 })
}

impl Iterator for HeatingStream {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        if self.t >= self.length {
            return None;
        }
        let sample = self.t % SAMPLES_PER_DAY;
        if self.t > 0 && sample == 0 {
            self.weather.advance_day();
        }
        let hour = sample as f64 / 2.0;
        let weekday = self.weather.day % 7;
        // Local sensor noise on top of the shared weather.
        let ext_temp = self.weather.temperature(sample) + self.rng.random_range(-0.3..0.3);
        let rain = self.weather.rain_today[sample];
        let daylight = self.weather.daylight(sample);
        let segment = self.t / self.drift_every;
        let schedule_id = self.order[segment % self.order.len()];
        let target = SCHEDULES[schedule_id].target(hour, weekday, ext_temp, rain);
        let features = vec![hour, weekday as f64, ext_temp, rain, if daylight { 1.0 } else { 0.0 }];
        let inst = Instance::new(features, target, self.t).with_concept(schedule_id as u32);
        self.t += 1;
        Some(inst)
    }
}
