//! Synthetic express series with planted feature couplings.
//!
//! `y_t = base + weekly[dow] + temp_effect + weather_effect + holiday_t
//!        + Σⱼ lead[j]·holiday_{t+j} + Σⱼ lag[j]·holiday_{t−j} + ar_noise`,
//! floored at zero and rounded. On weekends the temperature effect is
//! `coef·(temp − center)²`; on workdays it is `slope·(temp − center)`.

use std::f64::consts::PI;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::KeyValues;
use crate::data::dataset::{day_of_week, DayRecord, SeriesDataset, HOLIDAY_CLASSES, WEATHER_CLASSES};
use crate::error::{Error, Result};
use crate::hfr::{is_weekend, DAYS_PER_WEEK};
use crate::layers::seeded_rng;

pub const TEMPERATURE_RANGE: (f64, f64) = (-5.0, 40.0);

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub length: usize,
    pub start: NaiveDate,
    pub base: f64,
    pub weekly: [f64; DAYS_PER_WEEK],
    pub temp_mean: f64,
    pub temp_amplitude: f64,
    /// Day of year of the seasonal peak.
    pub temp_peak_day: f64,
    pub temp_noise: f64,
    pub weekend_temp_coef: f64,
    pub workday_temp_slope: f64,
    pub temp_center: f64,
    /// Relative frequencies of weather categories.
    pub weather_weights: [f64; WEATHER_CLASSES],
    /// Probability that a day repeats the previous day's weather.
    pub weather_persistence: f64,
    pub weather_effects: [f64; WEATHER_CLASSES],
    /// Daily probability that a non-ordinary holiday occurs.
    pub holiday_rate: f64,
    /// Same-day effect per holiday id; id 0 is the ordinary day.
    pub holiday_effects: [f64; HOLIDAY_CLASSES],
    /// `lead[j−1]` scales the effect of a holiday `j` days ahead.
    pub lead_kernel: Vec<f64>,
    /// `lag[j−1]` scales the effect of a holiday `j` days back.
    pub lag_kernel: Vec<f64>,
    pub ar_coef: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            length: 730,
            start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            base: 1000.0,
            weekly: [40.0, 60.0, 50.0, 30.0, 0.0, -180.0, -260.0],
            temp_mean: 16.0,
            temp_amplitude: 13.0,
            temp_peak_day: 200.0,
            temp_noise: 4.0,
            weekend_temp_coef: -1.6,
            workday_temp_slope: 5.0,
            temp_center: 18.0,
            weather_weights: [
                30.0, 20.0, 12.0, 8.0, 4.0, 2.0, 2.0, 4.0, 1.5, 3.0, 1.5, 1.0, 4.0, 5.0, 1.0,
            ],
            weather_persistence: 0.5,
            weather_effects: [
                0.0, -10.0, -25.0, -60.0, -120.0, -220.0, -180.0, -80.0, -150.0, -130.0, -240.0, -360.0, -70.0,
                -40.0, -300.0,
            ],
            holiday_rate: 0.05,
            holiday_effects: [0.0, 600.0, 300.0, -350.0, 200.0],
            lead_kernel: vec![0.7, 0.4, 0.2],
            lag_kernel: vec![0.6, 0.3, 0.15],
            ar_coef: 0.5,
            noise_scale: 25.0,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    /// Constant series at `base`: every effect and the noise switched off.
    pub fn flat(length: usize, base: f64) -> Self {
        Self {
            length,
            base,
            weekly: [0.0; DAYS_PER_WEEK],
            temp_noise: 0.0,
            weekend_temp_coef: 0.0,
            workday_temp_slope: 0.0,
            weather_effects: [0.0; WEATHER_CLASSES],
            holiday_effects: [0.0; HOLIDAY_CLASSES],
            lead_kernel: Vec::new(),
            lag_kernel: Vec::new(),
            ar_coef: 0.0,
            noise_scale: 0.0,
            ..Self::default()
        }
    }

    pub const KEYS: &'static [&'static str] = &[
        "length",
        "start",
        "base",
        "weekly",
        "temp_mean",
        "temp_amplitude",
        "temp_peak_day",
        "temp_noise",
        "weekend_temp_coef",
        "workday_temp_slope",
        "temp_center",
        "weather_weights",
        "weather_persistence",
        "weather_effects",
        "holiday_rate",
        "holiday_effects",
        "lead_kernel",
        "lag_kernel",
        "ar_coef",
        "noise_scale",
        "seed",
    ];

    /// Defaults overridden by any keys present in `kv`.
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(Self::KEYS)?;
        let d = Self::default();
        fn array<const N: usize>(kv: &KeyValues, key: &str, default: [f64; N]) -> Result<[f64; N]> {
            match kv.get_list::<f64>(key)? {
                None => Ok(default),
                Some(v) => v.try_into().map_err(|v: Vec<f64>| {
                    Error::InvalidConfig(format!("`{key}` needs {N} values, got {}", v.len()))
                }),
            }
        }
        let kernel = |key: &str, default: Vec<f64>| -> Result<Vec<f64>> {
            match kv.raw(key) {
                Some("") | Some("none") => Ok(Vec::new()),
                _ => Ok(kv.get_list(key)?.unwrap_or(default)),
            }
        };
        let start = match kv.raw("start") {
            None => d.start,
            Some(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|_| Error::InvalidConfig(format!("`start` is not a YYYY-MM-DD date: `{s}`")))?,
        };
        let spec = Self {
            length: kv.get_or("length", d.length)?,
            start,
            base: kv.get_or("base", d.base)?,
            weekly: array(kv, "weekly", d.weekly)?,
            temp_mean: kv.get_or("temp_mean", d.temp_mean)?,
            temp_amplitude: kv.get_or("temp_amplitude", d.temp_amplitude)?,
            temp_peak_day: kv.get_or("temp_peak_day", d.temp_peak_day)?,
            temp_noise: kv.get_or("temp_noise", d.temp_noise)?,
            weekend_temp_coef: kv.get_or("weekend_temp_coef", d.weekend_temp_coef)?,
            workday_temp_slope: kv.get_or("workday_temp_slope", d.workday_temp_slope)?,
            temp_center: kv.get_or("temp_center", d.temp_center)?,
            weather_weights: array(kv, "weather_weights", d.weather_weights)?,
            weather_persistence: kv.get_or("weather_persistence", d.weather_persistence)?,
            weather_effects: array(kv, "weather_effects", d.weather_effects)?,
            holiday_rate: kv.get_or("holiday_rate", d.holiday_rate)?,
            holiday_effects: array(kv, "holiday_effects", d.holiday_effects)?,
            lead_kernel: kernel("lead_kernel", d.lead_kernel)?,
            lag_kernel: kernel("lag_kernel", d.lag_kernel)?,
            ar_coef: kv.get_or("ar_coef", d.ar_coef)?,
            noise_scale: kv.get_or("noise_scale", d.noise_scale)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.length == 0 {
            return bad("length must be at least 1");
        }
        let scalars = [
            self.base,
            self.temp_mean,
            self.temp_amplitude,
            self.temp_peak_day,
            self.temp_noise,
            self.weekend_temp_coef,
            self.workday_temp_slope,
            self.temp_center,
            self.weather_persistence,
            self.holiday_rate,
            self.ar_coef,
            self.noise_scale,
        ];
        let all = scalars
            .iter()
            .chain(&self.weekly)
            .chain(&self.weather_weights)
            .chain(&self.weather_effects)
            .chain(&self.holiday_effects)
            .chain(&self.lead_kernel)
            .chain(&self.lag_kernel);
        if all.clone().any(|v| !v.is_finite()) {
            return bad("all generator parameters must be finite");
        }
        if self.noise_scale < 0.0 || self.temp_noise < 0.0 {
            return bad("noise scales must be nonnegative");
        }
        if self.ar_coef.abs() >= 1.0 {
            return bad("ar_coef must lie in (-1, 1)");
        }
        if !(0.0..=1.0).contains(&self.weather_persistence) || !(0.0..=1.0).contains(&self.holiday_rate) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.weather_weights.iter().any(|&w| w < 0.0) || self.weather_weights.iter().sum::<f64>() <= 0.0 {
            return bad("weather weights must be nonnegative with a positive sum");
        }
        Ok(())
    }

    pub fn to_config(&self) -> KeyValues {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let mut kv = KeyValues::default();
        kv.insert("length", self.length);
        kv.insert("start", self.start);
        kv.insert("base", self.base);
        kv.insert("weekly", list(&self.weekly));
        kv.insert("temp_mean", self.temp_mean);
        kv.insert("temp_amplitude", self.temp_amplitude);
        kv.insert("temp_peak_day", self.temp_peak_day);
        kv.insert("temp_noise", self.temp_noise);
        kv.insert("weekend_temp_coef", self.weekend_temp_coef);
        kv.insert("workday_temp_slope", self.workday_temp_slope);
        kv.insert("temp_center", self.temp_center);
        kv.insert("weather_weights", list(&self.weather_weights));
        kv.insert("weather_persistence", self.weather_persistence);
        kv.insert("weather_effects", list(&self.weather_effects));
        kv.insert("holiday_rate", self.holiday_rate);
        kv.insert("holiday_effects", list(&self.holiday_effects));
        kv.insert("lead_kernel", if self.lead_kernel.is_empty() { "none".into() } else { list(&self.lead_kernel) });
        kv.insert("lag_kernel", if self.lag_kernel.is_empty() { "none".into() } else { list(&self.lag_kernel) });
        kv.insert("ar_coef", self.ar_coef);
        kv.insert("noise_scale", self.noise_scale);
        kv.insert("seed", self.seed);
        kv
    }
}

/// Every additive term of one generated day.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DayEffects {
    pub base: f64,
    pub weekly: f64,
    pub temperature: f64,
    pub weather: f64,
    pub holiday: f64,
    pub lead: f64,
    pub lag: f64,
    pub noise: f64,
}

impl DayEffects {
    /// Sum of the terms before flooring and rounding.
    pub fn total(&self) -> f64 {
        self.base + self.weekly + self.temperature + self.weather + self.holiday + self.lead + self.lag + self.noise
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub dataset: SeriesDataset,
    pub effects: Vec<DayEffects>,
}

pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let n = spec.length;
    let standard = Normal::new(0.0, 1.0).expect("unit normal");

    let dates: Vec<NaiveDate> = (0..n)
        .map(|i| spec.start + chrono::Days::new(i as u64))
        .collect();

    let temperatures: Vec<f64> = dates
        .iter()
        .map(|d| {
            let doy = chrono::Datelike::ordinal0(d) as f64;
            let seasonal = spec.temp_mean + spec.temp_amplitude * (2.0 * PI * (doy - spec.temp_peak_day) / 365.25 + PI / 2.0).sin();
            let t = seasonal + spec.temp_noise * standard.sample(&mut rng);
            t.clamp(TEMPERATURE_RANGE.0, TEMPERATURE_RANGE.1)
        })
        .collect();

    let total_weight: f64 = spec.weather_weights.iter().sum();
    let mut weather = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.random::<f64>() < spec.weather_persistence {
            weather.push(weather[i - 1]);
            continue;
        }
        let mut u = rng.random::<f64>() * total_weight;
        let mut pick = WEATHER_CLASSES - 1;
        for (c, w) in spec.weather_weights.iter().enumerate() {
            if u < *w {
                pick = c;
                break;
            }
            u -= w;
        }
        weather.push(pick);
    }

    let holidays: Vec<usize> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < spec.holiday_rate {
                rng.random_range(1..HOLIDAY_CLASSES)
            } else {
                0
            }
        })
        .collect();
    let holiday_amp = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            spec.holiday_effects[holidays[i as usize]]
        }
    };

    let mut ar = 0.0;
    let mut records = Vec::with_capacity(n);
    let mut effects = Vec::with_capacity(n);
    for i in 0..n {
        let dow = day_of_week(dates[i]);
        let temp = temperatures[i];
        let dev = temp - spec.temp_center;
        ar = spec.ar_coef * ar + spec.noise_scale * standard.sample(&mut rng);
        let lead = spec
            .lead_kernel
            .iter()
            .enumerate()
            .map(|(j, k)| k * holiday_amp(i as isize + j as isize + 1))
            .sum();
        let lag = spec
            .lag_kernel
            .iter()
            .enumerate()
            .map(|(j, k)| k * holiday_amp(i as isize - j as isize - 1))
            .sum();
        let e = DayEffects {
            base: spec.base,
            weekly: spec.weekly[dow],
            temperature: if is_weekend(dow) {
                spec.weekend_temp_coef * dev * dev
            } else {
                spec.workday_temp_slope * dev
            },
            weather: spec.weather_effects[weather[i]],
            holiday: holiday_amp(i as isize),
            lead,
            lag,
            noise: ar,
        };
        records.push(DayRecord {
            date: dates[i],
            y: e.total().max(0.0).round(),
            temperature: temp,
            weather: weather[i],
            holiday: holidays[i],
            week: dow,
        });
        effects.push(e);
    }
    Ok(Synthetic {
        dataset: SeriesDataset::new(records)?,
        effects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_spec_is_constant() {
        let s = generate_synthetic(&GeneratorSpec::flat(50, 321.0)).unwrap();
        assert!(s.dataset.records().iter().all(|r| r.y == 321.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = GeneratorSpec {
            length: 120,
            seed: 9,
            ..GeneratorSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&GeneratorSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn series_is_rounded_floored_sum_of_effects() {
        let s = generate_synthetic(&GeneratorSpec::default()).unwrap();
        for (r, e) in s.dataset.records().iter().zip(&s.effects) {
            let sum = e.base + e.weekly + e.temperature + e.weather + e.holiday + e.lead + e.lag + e.noise;
            assert_eq!(sum, e.total());
            assert_eq!(r.y, sum.max(0.0).round());
            assert!((TEMPERATURE_RANGE.0..=TEMPERATURE_RANGE.1).contains(&r.temperature));
            assert_eq!(r.week, day_of_week(r.date));
        }
    }

    #[test]
    fn weekend_quadratic_sign_recovered() {
        let spec = GeneratorSpec {
            weekend_temp_coef: -2.0,
            noise_scale: 5.0,
            seed: 4,
            ..GeneratorSpec::flat(730, 2000.0)
        };
        let s = generate_synthetic(&spec).unwrap();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (r, e) in s.dataset.records().iter().zip(&s.effects) {
            if is_weekend(r.week) {
                let dev = r.temperature - spec.temp_center;
                xs.push(dev * dev);
                ys.push(r.y);
                assert_eq!(e.temperature, spec.weekend_temp_coef * dev * dev);
            } else {
                assert_eq!(e.temperature, 0.0);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(&xs), mean(&ys));
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        assert!(cov < 0.0);
    }

    #[test]
    fn holiday_kernels_spread_effects() {
        let spec = GeneratorSpec {
            holiday_rate: 0.03,
            holiday_effects: [0.0, 100.0, 100.0, 100.0, 100.0],
            lead_kernel: vec![0.5],
            lag_kernel: vec![0.25, 0.125],
            ..GeneratorSpec::flat(400, 500.0)
        };
        let s = generate_synthetic(&spec).unwrap();
        let hol: Vec<f64> = s.dataset.records().iter().map(|r| if r.holiday > 0 { 100.0 } else { 0.0 }).collect();
        let at = |i: isize| if i < 0 || i as usize >= hol.len() { 0.0 } else { hol[i as usize] };
        assert!(hol.iter().any(|&h| h > 0.0));
        for (i, e) in s.effects.iter().enumerate() {
            let i = i as isize;
            assert_eq!(e.lead, 0.5 * at(i + 1));
            assert_eq!(e.lag, 0.25 * at(i - 1) + 0.125 * at(i - 2));
        }
    }

    #[test]
    fn config_roundtrip_and_validation() {
        let spec = GeneratorSpec {
            seed: 77,
            lead_kernel: Vec::new(),
            ..GeneratorSpec::default()
        };
        let kv = KeyValues::parse(&spec.to_config().render()).unwrap();
        assert_eq!(GeneratorSpec::from_config(&kv).unwrap(), spec);
        let bad = KeyValues::parse("noise_scale = -1\n").unwrap();
        assert!(GeneratorSpec::from_config(&bad).is_err());
        let bad = KeyValues::parse("weekly = 1, 2\n").unwrap();
        assert!(GeneratorSpec::from_config(&bad).is_err());
        let bad = KeyValues::parse("colour = blue\n").unwrap();
        assert!(GeneratorSpec::from_config(&bad).is_err());
    }
}
