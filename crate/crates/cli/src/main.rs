use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use deepexpress::config::KeyValues;
use deepexpress::data::{generate_synthetic, GeneratorSpec, SeriesDataset, Vocabulary};
use deepexpress::eval::{
    horizon_samples, render_csv, render_table, run_ablation, score, score_model, seasonal_naive, AblationConfig,
    EvalReport, ExperimentData, LinearAr, SeedRun,
};
use deepexpress::model::{DeepExpressModel, ModelConfig, SeriesProvider};
use deepexpress::training::{
    grid_search, load_checkpoint, render_grid_csv, render_grid_table, save_checkpoint, train, GridSpec, TrainConfig,
};

#[derive(Parser)]
#[command(name = "deepexpress", version, about = "Express delivery volume forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic daily series with planted feature effects.
    GenData {
        /// Generator settings; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the per-day effect decomposition.
        #[arg(long)]
        effects: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss history as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Forecast the next days after an anchor date.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
        /// Last observed day (YYYY-MM-DD); defaults to the latest day whose
        /// forecast windows are fully covered by the data.
        #[arg(long)]
        from: Option<String>,
        /// Vocabulary overrides for the data file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a checkpoint and the classical baselines on the test split.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rank hyperparameter combinations by validation RMSE.
    GridSearch {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train and score every variant and baseline over several seeds.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        report: PathBuf,
    },
}

const VOCAB_KEYS: [&str; 2] = ["weather", "holiday"];

fn keys(groups: &[&[&str]]) -> Vec<String> {
    groups.iter().flat_map(|g| g.iter().map(|k| k.to_string())).collect()
}

fn load_config(path: Option<&Path>, allowed: &[String]) -> Result<KeyValues> {
    let Some(path) = path else {
        return Ok(KeyValues::default());
    };
    let kv = KeyValues::load(path)?;
    if let Some(k) = kv.keys().find(|k| !allowed.iter().any(|a| a == k)) {
        bail!("{}: unknown config key `{k}`", path.display());
    }
    Ok(kv)
}

fn load_data(path: &Path, kv: &KeyValues) -> Result<(SeriesDataset, Vocabulary)> {
    let vocab = Vocabulary::from_config(kv)?;
    let ds = SeriesDataset::load_csv(path, &vocab)?;
    Ok((ds, vocab))
}

/// Report table to `path`, long-format CSV next to it.
fn write_report(path: &Path, table: &str, csv: &str) -> Result<PathBuf> {
    fs::write(path, table).with_context(|| format!("cannot write {}", path.display()))?;
    let csv_path = path.with_extension("csv");
    if csv_path == path {
        bail!("report path {} must not end in .csv", path.display());
    }
    fs::write(&csv_path, csv).with_context(|| format!("cannot write {}", csv_path.display()))?;
    Ok(csv_path)
}

fn gen_data(spec: Option<&Path>, out: &Path, seed: Option<u64>, effects: Option<&Path>) -> Result<()> {
    let kv = load_config(spec, &keys(&[GeneratorSpec::KEYS]))?;
    let mut spec = GeneratorSpec::from_config(&kv)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let synth = generate_synthetic(&spec)?;
    synth.dataset.save_csv(out, &Vocabulary::default())?;
    if let Some(path) = effects {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(["date", "base", "weekly", "temperature", "weather", "holiday", "lead", "lag", "noise"])?;
        for (i, e) in synth.effects.iter().enumerate() {
            let mut row = vec![synth.dataset.date(i).to_string()];
            row.extend(
                [e.base, e.weekly, e.temperature, e.weather, e.holiday, e.lead, e.lag, e.noise]
                    .iter()
                    .map(f64::to_string),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    println!("wrote {} days to {}", synth.dataset.len(), out.display());
    Ok(())
}

fn train_cmd(data: &Path, config: Option<&Path>, out: &Path, history: Option<&Path>) -> Result<()> {
    let kv = load_config(config, &keys(&[ModelConfig::KEYS, TrainConfig::KEYS, &VOCAB_KEYS]))?;
    let (ds, _) = load_data(data, &kv)?;
    let model_cfg = ModelConfig::from_config(&kv)?;
    let train_cfg = TrainConfig::from_config(&kv)?;
    let split = ExperimentData::prepare(&ds, model_cfg.history, model_cfg.half_window)?;
    let model = DeepExpressModel::init(&model_cfg, train_cfg.seed)?;
    let outcome = train(model, &split.train, &split.validation, &train_cfg)?;
    save_checkpoint(&outcome.model, out)?;
    if let Some(path) = history {
        let mut text = String::from("epoch,train_loss,val_loss\n");
        for r in &outcome.history {
            text += &format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss);
        }
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    println!(
        "trained {} for {} epochs; best epoch {} with validation loss {:.6}; checkpoint {}",
        model_cfg.variant,
        outcome.history.len(),
        outcome.best_epoch,
        outcome.best_val_loss(),
        out.display()
    );
    Ok(())
}

fn predict(ckpt: &Path, data: &Path, k: usize, out: &Path, from: Option<&str>, config: Option<&Path>) -> Result<()> {
    if k == 0 {
        bail!("--horizon must be at least 1");
    }
    let kv = load_config(config, &keys(&[&VOCAB_KEYS]))?;
    let model = load_checkpoint(ckpt)?;
    let (ds, _) = load_data(data, &kv)?;
    let (h, l) = (model.config().history, model.config().half_window);
    let anchor = match from {
        Some(s) => {
            let date = s.parse().with_context(|| format!("--from `{s}` is not a YYYY-MM-DD date"))?;
            ds.index_of(date).with_context(|| format!("--from {s} is not in {}", data.display()))?
        }
        None => ds
            .len()
            .checked_sub(k + l + 1)
            .with_context(|| format!("{} days cannot cover horizon {k} with half window {l}", ds.len()))?,
    };
    if anchor + 1 < h {
        bail!("anchor {} has fewer than {h} days of history", ds.date(anchor));
    }
    let history: Vec<f64> = ds.records()[anchor + 1 - h..=anchor].iter().map(|r| r.y).collect();
    let provider = SeriesProvider { dataset: &ds, anchor };
    let preds = model.predict_sequence(&history, &provider, k)?;
    let mut w = csv::Writer::from_path(out).with_context(|| format!("cannot write {}", out.display()))?;
    w.write_record(["date", "y_true", "y_pred"])?;
    for (j, p) in preds.iter().enumerate() {
        let date = ds.date(anchor) + chrono::Days::new(j as u64 + 1);
        let truth = ds.index_of(date).map(|i| ds.record(i).y.to_string()).unwrap_or_default();
        w.write_record([date.to_string(), truth, p.to_string()])?;
    }
    w.flush()?;
    println!("wrote {k} forecasts from {} to {}", ds.date(anchor), out.display());
    Ok(())
}

fn evaluate(ckpt: &Path, data: &Path, report: &Path, config: Option<&Path>) -> Result<()> {
    let kv = load_config(config, &keys(&[&VOCAB_KEYS]))?;
    let model = load_checkpoint(ckpt)?;
    let (ds, _) = load_data(data, &kv)?;
    let cfg = model.config().clone();
    let (h, l, k) = (cfg.history, cfg.half_window, cfg.horizon);
    let split = ExperimentData::prepare(&ds, h, l)?;
    let test = horizon_samples(&ds, &split.test_anchors, h, l, k)?;
    let target = &model.scalers().target;
    let echo = cfg.to_config().render().lines().collect::<Vec<_>>().join("; ");
    let run = |scored| vec![SeedRun { seed: 0, scored }];

    let mut reports = vec![EvalReport::from_runs(cfg.variant.name(), k, run(score_model(&model, &test, k)?), echo.clone())];
    let naive: Vec<Vec<f64>> = test.iter().map(|s| seasonal_naive(&s.history, 7, k)).collect::<Result<_, _>>()?;
    reports.push(EvalReport::from_runs("seasonal_naive", k, run(score(&test, &naive, target)?), echo.clone()));
    let order = 7.min(h);
    let scaled_rows: Vec<(Vec<f64>, f64)> = split
        .train
        .iter()
        .map(|s| Ok((target.apply_all(&s.history)?, target.apply(s.targets[0])?)))
        .collect::<Result<_, deepexpress::Error>>()?;
    let rows: Vec<(&[f64], f64)> = scaled_rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
    let ar = LinearAr::fit(&rows, order)?;
    let ar_preds: Vec<Vec<f64>> = test
        .iter()
        .map(|s| target.invert_all(&ar.forecast(&target.apply_all(&s.history)?, k)?))
        .collect::<Result<_, _>>()?;
    reports.push(EvalReport::from_runs("linear_ar", k, run(score(&test, &ar_preds, target)?), echo));

    let table = render_table(&reports);
    let csv_path = write_report(report, &table, &render_csv(&reports))?;
    print!("{table}");
    println!("report {} and {}", report.display(), csv_path.display());
    Ok(())
}

fn grid_cmd(data: &Path, grid: &Path, report: &Path) -> Result<()> {
    let mut allowed = keys(&[ModelConfig::KEYS, TrainConfig::KEYS, &VOCAB_KEYS]);
    allowed.extend(GridSpec::KEYS.iter().map(|k| format!("grid.{k}")));
    let kv = load_config(Some(grid), &allowed)?;
    let (ds, _) = load_data(data, &kv)?;
    let model_cfg = ModelConfig::from_config(&kv)?;
    let train_cfg = TrainConfig::from_config(&kv)?;
    let spec = GridSpec::from_config(&kv, &model_cfg, &train_cfg)?;
    let rows = grid_search(&ds, &spec, &model_cfg, &train_cfg)?;
    let table = render_grid_table(&rows);
    let csv_path = write_report(report, &table, &render_grid_csv(&rows))?;
    print!("{table}");
    println!("report {} and {}", report.display(), csv_path.display());
    Ok(())
}

fn ablate(data: &Path, config: Option<&Path>, seeds: Option<Vec<u64>>, report: &Path) -> Result<()> {
    let allowed = keys(&[ModelConfig::KEYS, TrainConfig::KEYS, &VOCAB_KEYS, AblationConfig::KEYS]);
    let kv = load_config(config, &allowed)?;
    let (ds, _) = load_data(data, &kv)?;
    let mut cfg = AblationConfig::from_config(&kv)?;
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    let reports = run_ablation(&ds, &cfg)?;
    let table = render_table(&reports);
    let csv_path = write_report(report, &table, &render_csv(&reports))?;
    print!("{table}");
    println!("report {} and {}", report.display(), csv_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { spec, out, seed, effects } => gen_data(spec.as_deref(), &out, seed, effects.as_deref()),
        Command::Train {
            data,
            config,
            out,
            history,
        } => train_cmd(&data, config.as_deref(), &out, history.as_deref()),
        Command::Predict {
            ckpt,
            data,
            horizon,
            out,
            from,
            config,
        } => predict(&ckpt, &data, horizon, &out, from.as_deref(), config.as_deref()),
        Command::Evaluate {
            ckpt,
            data,
            report,
            config,
        } => evaluate(&ckpt, &data, &report, config.as_deref()),
        Command::GridSearch { data, grid, report } => grid_cmd(&data, &grid, &report),
        Command::Ablate {
            data,
            config,
            seeds,
            report,
        } => ablate(&data, config.as_deref(), seeds, &report),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
