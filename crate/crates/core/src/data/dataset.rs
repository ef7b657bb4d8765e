use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::hfr::{FeatureValue, DAYS_PER_WEEK};

pub const WEATHER_CLASSES: usize = 15;
pub const HOLIDAY_CLASSES: usize = 5;

const DEFAULT_WEATHER: [&str; WEATHER_CLASSES] = [
    "sunny",
    "cloudy",
    "overcast",
    "light_rain",
    "moderate_rain",
    "heavy_rain",
    "thunderstorm",
    "shower",
    "sleet",
    "light_snow",
    "moderate_snow",
    "heavy_snow",
    "fog",
    "haze",
    "sandstorm",
];

const DEFAULT_HOLIDAY: [&str; HOLIDAY_CLASSES] = ["ordinary", "ecommerce", "festival", "statutory", "special"];

/// String labels for the categorical columns. Holiday id 0 is the ordinary day.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    weather: Vec<String>,
    holiday: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self {
            weather: DEFAULT_WEATHER.iter().map(|s| s.to_string()).collect(),
            holiday: DEFAULT_HOLIDAY.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Vocabulary {
    pub fn new(weather: Vec<String>, holiday: Vec<String>) -> Result<Self> {
        for (name, list, n) in [("weather", &weather, WEATHER_CLASSES), ("holiday", &holiday, HOLIDAY_CLASSES)] {
            if list.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "{name} vocabulary needs {n} labels, got {}",
                    list.len()
                )));
            }
            let mut sorted = list.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != n {
                return Err(Error::InvalidConfig(format!("{name} vocabulary has duplicate labels")));
            }
        }
        Ok(Self { weather, holiday })
    }

    /// Reads optional `weather` and `holiday` list keys.
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let base = Self::default();
        Self::new(
            kv.get_list("weather")?.unwrap_or(base.weather),
            kv.get_list("holiday")?.unwrap_or(base.holiday),
        )
    }

    pub fn weather(&self) -> &[String] {
        &self.weather
    }

    pub fn holiday(&self) -> &[String] {
        &self.holiday
    }

    pub fn weather_id(&self, label: &str) -> Option<usize> {
        self.weather.iter().position(|w| w == label)
    }

    pub fn holiday_id(&self, label: &str) -> Option<usize> {
        self.holiday.iter().position(|h| h == label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DayRecord {
    pub date: NaiveDate,
    pub y: f64,
    pub temperature: f64,
    pub weather: usize,
    pub holiday: usize,
    /// Monday = 0.
    pub week: usize,
}

impl DayRecord {
    /// Raw features in schema order: temperature, weather, holiday, week.
    pub fn features(&self) -> Vec<FeatureValue> {
        vec![
            FeatureValue::Numerical(self.temperature),
            FeatureValue::Categorical(self.weather),
            FeatureValue::Categorical(self.holiday),
            FeatureValue::Categorical(self.week),
        ]
    }
}

pub fn day_of_week(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

/// Consecutive daily records.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesDataset {
    records: Vec<DayRecord>,
}

impl SeriesDataset {
    pub fn new(records: Vec<DayRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            let bad = |message: String| Error::Csv { row, message };
            if !(r.y.is_finite() && r.y >= 0.0) {
                return Err(bad(format!("y must be a nonnegative number, got {}", r.y)));
            }
            if !r.temperature.is_finite() {
                return Err(bad(format!("temperature must be finite, got {}", r.temperature)));
            }
            for (name, v, n) in [
                ("weather", r.weather, WEATHER_CLASSES),
                ("holiday", r.holiday, HOLIDAY_CLASSES),
                ("week", r.week, DAYS_PER_WEEK),
            ] {
                if v >= n {
                    return Err(bad(format!("{name} id {v} outside 0..{n}")));
                }
            }
            if i > 0 {
                let prev = records[i - 1].date;
                if r.date == prev {
                    return Err(bad(format!("duplicate date {}", r.date)));
                }
                if r.date < prev {
                    return Err(bad(format!("date {} precedes {prev}", r.date)));
                }
                if r.date != prev.succ_opt().expect("date in range") {
                    return Err(bad(format!("gap in dates between {prev} and {}", r.date)));
                }
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[DayRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &DayRecord {
        &self.records[i]
    }

    pub fn ys(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.records[i].date
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let first = self.records.first()?.date;
        let offset = (date - first).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    /// Copy with the given records' features replaced; targets untouched.
    pub fn with_features_from(&self, other: &[DayRecord]) -> Result<Self> {
        if other.len() != self.len() {
            return Err(Error::Length {
                expected: self.len(),
                found: other.len(),
            });
        }
        let records = self
            .records
            .iter()
            .zip(other)
            .map(|(r, o)| DayRecord {
                temperature: o.temperature,
                weather: o.weather,
                holiday: o.holiday,
                week: o.week,
                ..*r
            })
            .collect();
        Self::new(records)
    }

    pub fn read_csv<R: Read>(reader: R, vocab: &Vocabulary) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Csv {
            row: 0,
            message: e.to_string(),
        })?;
        let expected = ["date", "y", "temperature", "weather", "holiday", "week"];
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Csv {
                row: 0,
                message: format!("header must be `{}`", expected.join(",")),
            });
        }
        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Csv {
                row,
                message: e.to_string(),
            })?;
            let bad = |message: String| Error::Csv { row, message };
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|_| bad(format!("invalid date `{}`", &rec[0])))?;
            let number = |col: usize, name: &str| -> Result<f64> {
                rec[col]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Csv {
                        row,
                        message: format!("non-numeric {name} `{}`", &rec[col]),
                    })
            };
            let y = number(1, "y")?;
            let temperature = number(2, "temperature")?;
            let weather = vocab
                .weather_id(&rec[3])
                .ok_or_else(|| bad(format!("unknown weather `{}`", &rec[3])))?;
            let holiday = vocab
                .holiday_id(&rec[4])
                .ok_or_else(|| bad(format!("unknown holiday `{}`", &rec[4])))?;
            let week = rec[5]
                .parse::<usize>()
                .map_err(|_| bad(format!("invalid week `{}`", &rec[5])))?;
            records.push(DayRecord {
                date,
                y,
                temperature,
                weather,
                holiday,
                week,
            });
        }
        Self::new(records)
    }

    pub fn load_csv(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_csv(file, vocab)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, vocab: &Vocabulary) -> Result<()> {
        writeln!(out, "date,y,temperature,weather,holiday,week")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.date, r.y, r.temperature, vocab.weather[r.weather], vocab.holiday[r.holiday], r.week
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out, vocab)?;
        out.flush().map_err(|e| Error::file(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "date,y,temperature,weather,holiday,week\n";

    fn parse(body: &str) -> Result<SeriesDataset> {
        SeriesDataset::read_csv(format!("{HEADER}{body}").as_bytes(), &Vocabulary::default())
    }

    #[test]
    fn three_rows() {
        let ds = parse(
            "2021-03-01,120,8.5,sunny,ordinary,0\n2021-03-02,95,7.0,light_rain,ordinary,1\n2021-03-03,130,9.5,cloudy,festival,2\n",
        )
        .unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.record(1).weather, 3);
        assert_eq!(ds.record(2).holiday, 2);
        assert_eq!(ds.index_of(ds.date(2)), Some(2));
    }

    #[test]
    fn duplicated_date_is_named() {
        let err = parse("2021-03-01,1,8,sunny,ordinary,0\n2021-03-01,1,8,sunny,ordinary,0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("2021-03-01"), "{msg}");
    }

    #[test]
    fn unknown_weather_names_row_and_value() {
        let err = parse("2021-03-01,1,8,sunny,ordinary,0\n2021-03-02,1,8,hail,ordinary,1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("hail"), "{msg}");
    }

    #[test]
    fn gaps_and_bad_numbers_rejected() {
        assert!(parse("2021-03-01,1,8,sunny,ordinary,0\n2021-03-03,1,8,sunny,ordinary,2\n")
            .unwrap_err()
            .to_string()
            .contains("gap"));
        assert!(parse("2021-03-01,many,8,sunny,ordinary,0\n")
            .unwrap_err()
            .to_string()
            .contains("non-numeric y"));
        assert!(parse("2021-03-01,1,warm,sunny,ordinary,0\n").is_err());
        assert!(parse("2021-03-01,1,8,sunny,ordinary,7\n").is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let vocab = Vocabulary::default();
        let ds = parse("2021-03-01,120,8.25,haze,special,0\n2021-03-02,0,-3.5,sandstorm,ecommerce,1\n").unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, &vocab).unwrap();
        assert_eq!(SeriesDataset::read_csv(buf.as_slice(), &vocab).unwrap(), ds);
    }

    #[test]
    fn vocabulary_override() {
        let kv = KeyValues::parse("holiday = none, a, b, c, d\n").unwrap();
        let vocab = Vocabulary::from_config(&kv).unwrap();
        assert_eq!(vocab.holiday_id("c"), Some(3));
        assert_eq!(vocab.weather_id("fog"), Some(12));
        let short = KeyValues::parse("holiday = a, b\n").unwrap();
        assert!(Vocabulary::from_config(&short).is_err());
    }
}
