use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::KeyValues;
use crate::data::{Sample, SeriesDataset};
use crate::error::{Error, Result};
use crate::eval::baselines::{seasonal_naive, LinearAr};
use crate::eval::experiment::{horizon_samples, score, score_model, ExperimentData, Scored};
use crate::eval::report::{EvalReport, SeedRun};
use crate::hfr::FeatureSchema;
use crate::model::{DeepExpressModel, ModelConfig, Scalers, Variant};
use crate::training::{train, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Contender {
    Model(Variant),
    SeasonalNaive,
    LinearAr,
}

impl Contender {
    pub const DEFAULT: [Contender; 8] = [
        Contender::Model(Variant::Full),
        Contender::Model(Variant::NoHfr),
        Contender::Model(Variant::NoJta),
        Contender::Model(Variant::NoBoth),
        Contender::Model(Variant::PlainSeq2seq),
        Contender::Model(Variant::AttSeq2seq),
        Contender::SeasonalNaive,
        Contender::LinearAr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Contender::Model(v) => v.name(),
            Contender::SeasonalNaive => "seasonal_naive",
            Contender::LinearAr => "linear_ar",
        }
    }
}

impl fmt::Display for Contender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Contender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seasonal_naive" => Ok(Contender::SeasonalNaive),
            "linear_ar" => Ok(Contender::LinearAr),
            other => other.parse().map(Contender::Model),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub contenders: Vec<Contender>,
    /// Each contender is scored at every horizon listed.
    pub horizons: Vec<usize>,
    pub season: usize,
    pub ar_order: usize,
}

impl AblationConfig {
    pub const KEYS: &'static [&'static str] = &["seeds", "contenders", "eval_horizons", "season", "ar_order"];

    pub fn new(model: ModelConfig, train: TrainConfig) -> Self {
        Self {
            horizons: vec![model.horizon],
            model,
            train,
            seeds: vec![0, 1, 2, 3, 4],
            contenders: Contender::DEFAULT.to_vec(),
            season: 7,
            ar_order: 7,
        }
    }

    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::new(ModelConfig::from_config(kv)?, TrainConfig::from_config(kv)?);
        if let Some(s) = kv.get_list("seeds")? {
            cfg.seeds = s;
        }
        if let Some(c) = kv.get_list("contenders")? {
            cfg.contenders = c;
        }
        if let Some(h) = kv.get_list("eval_horizons")? {
            cfg.horizons = h;
        }
        cfg.season = kv.get_or("season", cfg.season)?;
        cfg.ar_order = kv.get_or("ar_order", cfg.ar_order)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() || self.contenders.is_empty() || self.horizons.is_empty() {
            return Err(Error::InvalidConfig("seeds, contenders and horizons must be nonempty".into()));
        }
        if self.horizons.contains(&0) || self.season == 0 || self.ar_order == 0 {
            return Err(Error::InvalidConfig("horizons, season and ar_order must be at least 1".into()));
        }
        if self.ar_order > self.model.history {
            return Err(Error::InvalidConfig(format!(
                "ar_order ({}) exceeds history ({})",
                self.ar_order, self.model.history
            )));
        }
        Ok(())
    }

    fn echo(&self) -> String {
        let mut kv = self.model.to_config();
        kv.insert("epochs", self.train.epochs);
        kv.insert("batch_size", self.train.batch_size);
        kv.insert("learning_rate", self.train.adam.learning_rate);
        kv.render().lines().collect::<Vec<_>>().join("; ")
    }
}

/// Train and score a single model variant for one seed.
pub fn train_variant(
    data: &ExperimentData,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    variant: Variant,
    seed: u64,
) -> Result<DeepExpressModel> {
    let cfg = ModelConfig {
        variant,
        ..model_cfg.clone()
    };
    let tcfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let model = DeepExpressModel::init(&cfg, seed)?;
    Ok(train(model, &data.train, &data.validation, &tcfg)?.model)
}

fn run_baseline(
    contender: Contender,
    cfg: &AblationConfig,
    data: &ExperimentData,
    tests: &[Vec<Sample>],
) -> Result<Vec<Scored>> {
    let scalers = Scalers::fit(&FeatureSchema::express(cfg.model.embedding_dim), &data.train)?;
    let target = scalers.target;
    let forecast: Box<dyn Fn(&Sample, usize) -> Result<Vec<f64>> + Sync> = match contender {
        Contender::SeasonalNaive => Box::new(|s: &Sample, k| seasonal_naive(&s.history, cfg.season, k)),
        Contender::LinearAr => {
            let scaled: Vec<(Vec<f64>, f64)> = data
                .train
                .iter()
                .map(|s| Ok((target.apply_all(&s.history)?, target.apply(s.targets[0])?)))
                .collect::<Result<_>>()?;
            let rows: Vec<(&[f64], f64)> = scaled.iter().map(|(h, y)| (h.as_slice(), *y)).collect();
            let ar = LinearAr::fit(&rows, cfg.ar_order)?;
            Box::new(move |s: &Sample, k| target.invert_all(&ar.forecast(&target.apply_all(&s.history)?, k)?))
        }
        Contender::Model(_) => unreachable!("models are trained, not forecast directly"),
    };
    cfg.horizons
        .iter()
        .zip(tests)
        .map(|(&k, samples)| {
            let preds = samples.iter().map(|s| forecast(s, k)).collect::<Result<Vec<_>>>()?;
            score(samples, &preds, &target)
        })
        .collect()
}

/// Train every requested contender for every seed and score each at every
/// horizon on the test split. Failures are recorded in the report.
pub fn run_ablation(ds: &SeriesDataset, cfg: &AblationConfig) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let (h, l) = (cfg.model.history, cfg.model.half_window);
    let data = ExperimentData::prepare(ds, h, l)?;
    let tests: Vec<Vec<Sample>> = cfg
        .horizons
        .iter()
        .map(|&k| horizon_samples(ds, &data.test_anchors, h, l, k))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, u64)> = (0..cfg.contenders.len())
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<Result<Vec<Scored>>> = jobs
        .par_iter()
        .map(|&(c, seed)| match cfg.contenders[c] {
            Contender::Model(v) => {
                let model = train_variant(&data, &cfg.model, &cfg.train, v, seed)?;
                cfg.horizons
                    .iter()
                    .zip(&tests)
                    .map(|(&k, samples)| score_model(&model, samples, k))
                    .collect()
            }
            other => run_baseline(other, cfg, &data, &tests),
        })
        .collect();

    let echo = cfg.echo();
    let mut reports = Vec::new();
    for (c, contender) in cfg.contenders.iter().enumerate() {
        let per_seed: Vec<(u64, &Result<Vec<Scored>>)> = jobs
            .iter()
            .zip(&results)
            .filter(|((jc, _), _)| *jc == c)
            .map(|((_, s), r)| (*s, r))
            .collect();
        let failure = per_seed.iter().find_map(|(s, r)| r.as_ref().err().map(|e| format!("seed {s}: {e}")));
        for (hi, &k) in cfg.horizons.iter().enumerate() {
            if let Some(err) = &failure {
                reports.push(EvalReport::failed(contender.name(), k, cfg.seeds.clone(), echo.clone(), err.clone()));
                continue;
            }
            let runs = per_seed
                .iter()
                .map(|(seed, r)| SeedRun {
                    seed: *seed,
                    scored: r.as_ref().expect("checked above")[hi].clone(),
                })
                .collect();
            reports.push(EvalReport::from_runs(contender.name(), k, runs, echo.clone()));
        }
    }
    Ok(reports)
}
