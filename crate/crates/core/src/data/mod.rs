//! Daily series, scaling, windowing and the synthetic generator.

pub mod dataset;
pub mod scaler;
pub mod synth;
pub mod windows;

pub use dataset::{day_of_week, DayRecord, SeriesDataset, Vocabulary, HOLIDAY_CLASSES, WEATHER_CLASSES};
pub use scaler::{MinMaxScaler, ScalerState};
pub use synth::{generate_synthetic, DayEffects, GeneratorSpec, Synthetic};
pub use windows::{make_horizon_windows, make_windows, sample_at, split_dataset, split_sizes, Sample, Split};
