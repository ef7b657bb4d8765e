use rayon::prelude::*;

use crate::config::KeyValues;
use crate::data::SeriesDataset;
use crate::error::{Error, Result};
use crate::eval::experiment::{horizon_samples, score_model, ExperimentData};
use crate::model::{DeepExpressModel, ModelConfig};
use crate::training::trainer::{train, TrainConfig};

/// Candidate values per hyperparameter. The grid is their Cartesian product.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub history: Vec<usize>,
    pub half_window: Vec<usize>,
    pub horizon: Vec<usize>,
    pub hidden: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl GridSpec {
    pub const KEYS: &'static [&'static str] = &["history", "half_window", "horizon", "hidden", "batch_size", "epochs"];

    /// Single-cell grid at the given base configuration.
    pub fn single(model: &ModelConfig, train: &TrainConfig) -> Self {
        Self {
            history: vec![model.history],
            half_window: vec![model.half_window],
            horizon: vec![model.horizon],
            hidden: vec![model.enc_hidden],
            batch_size: vec![train.batch_size],
            epochs: vec![train.epochs],
        }
    }

    /// Lists given under `grid.<key>` override the base values.
    pub fn from_config(kv: &KeyValues, model: &ModelConfig, train: &TrainConfig) -> Result<Self> {
        let mut g = Self::single(model, train);
        for key in Self::KEYS {
            if let Some(list) = kv.get_list::<usize>(&format!("grid.{key}"))? {
                *g.list_mut(key) = list;
            }
        }
        g.validate()?;
        Ok(g)
    }

    fn list_mut(&mut self, key: &str) -> &mut Vec<usize> {
        match key {
            "history" => &mut self.history,
            "half_window" => &mut self.half_window,
            "horizon" => &mut self.horizon,
            "hidden" => &mut self.hidden,
            "batch_size" => &mut self.batch_size,
            "epochs" => &mut self.epochs,
            _ => unreachable!("unknown grid key {key}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for key in Self::KEYS {
            let list = match *key {
                "history" => &self.history,
                "half_window" => &self.half_window,
                "horizon" => &self.horizon,
                "hidden" => &self.hidden,
                "batch_size" => &self.batch_size,
                _ => &self.epochs,
            };
            if list.is_empty() {
                return Err(Error::InvalidConfig(format!("grid.{key} must list at least one value")));
            }
        }
        Ok(())
    }

    /// Cells in row-major order, `history` varying slowest.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::new();
        for &history in &self.history {
            for &half_window in &self.half_window {
                for &horizon in &self.horizon {
                    for &hidden in &self.hidden {
                        for &batch_size in &self.batch_size {
                            for &epochs in &self.epochs {
                                out.push(GridCell {
                                    history,
                                    half_window,
                                    horizon,
                                    hidden,
                                    batch_size,
                                    epochs,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridCell {
    pub history: usize,
    pub half_window: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub epochs: usize,
}

impl GridCell {
    pub fn apply(&self, model: &ModelConfig, train: &TrainConfig) -> (ModelConfig, TrainConfig) {
        let m = ModelConfig {
            history: self.history,
            half_window: self.half_window,
            horizon: self.horizon,
            enc_hidden: self.hidden,
            dec_hidden: self.hidden,
            ..model.clone()
        };
        let t = TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            ..train.clone()
        };
        (m, t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    /// Position in [`GridSpec::cells`].
    pub index: usize,
    pub cell: GridCell,
    pub val_rmse: f64,
    pub val_mae: f64,
    pub skipped: Option<String>,
}

fn run_cell(ds: &SeriesDataset, cell: &GridCell, model: &ModelConfig, train_cfg: &TrainConfig) -> Result<(f64, f64)> {
    let (m, t) = cell.apply(model, train_cfg);
    m.validate()?;
    t.validate()?;
    let data = ExperimentData::prepare(ds, m.history, m.half_window)?;
    let val = horizon_samples(ds, &data.validation_anchors, m.history, m.half_window, m.horizon)?;
    let trained = train(DeepExpressModel::init(&m, t.seed)?, &data.train, &data.validation, &t)?.model;
    let scored = score_model(&trained, &val, m.horizon)?;
    Ok((scored.scaled.rmse, scored.scaled.mae))
}

/// Train every cell with the base seed and rank by scaled validation RMSE of
/// the `k`-step rollout. Cells that fail are listed last with their reason.
pub fn grid_search(ds: &SeriesDataset, grid: &GridSpec, model: &ModelConfig, train: &TrainConfig) -> Result<Vec<GridRow>> {
    grid.validate()?;
    let cells = grid.cells();
    let mut rows: Vec<GridRow> = cells
        .par_iter()
        .enumerate()
        .map(|(index, cell)| match run_cell(ds, cell, model, train) {
            Ok((val_rmse, val_mae)) => GridRow {
                index,
                cell: *cell,
                val_rmse,
                val_mae,
                skipped: None,
            },
            Err(e) => GridRow {
                index,
                cell: *cell,
                val_rmse: f64::NAN,
                val_mae: f64::NAN,
                skipped: Some(e.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.skipped.is_some(), a.val_rmse, a.index)
            .partial_cmp(&(b.skipped.is_some(), b.val_rmse, b.index))
            .unwrap_or_else(|| a.index.cmp(&b.index))
    });
    Ok(rows)
}

const GRID_HEADER: [&str; 10] = [
    "rank", "history", "half_window", "horizon", "hidden", "batch_size", "epochs", "val_rmse", "val_mae", "status",
];

fn grid_cells(rank: usize, r: &GridRow, metric: impl Fn(f64) -> String) -> Vec<String> {
    let c = &r.cell;
    let mut row: Vec<String> = [rank, c.history, c.half_window, c.horizon, c.hidden, c.batch_size, c.epochs]
        .iter()
        .map(usize::to_string)
        .collect();
    row.push(metric(r.val_rmse));
    row.push(metric(r.val_mae));
    row.push(r.skipped.as_ref().map_or("ok".into(), |e| format!("skipped: {e}")));
    row
}

/// Aligned text table of ranked grid rows.
pub fn render_grid_table(rows: &[GridRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| grid_cells(i + 1, r, |v| if v.is_nan() { "-".into() } else { format!("{v:.6}") }))
        .collect();
    crate::eval::report::align(&GRID_HEADER, &body)
}

pub fn render_grid_csv(rows: &[GridRow]) -> String {
    let mut out = GRID_HEADER.join(",") + "\n";
    for (i, r) in rows.iter().enumerate() {
        let mut cells = grid_cells(i + 1, r, |v| v.to_string());
        if let Some(status) = cells.last_mut() {
            *status = format!("\"{}\"", status.replace('"', "'"));
        }
        out += &cells.join(",");
        out.push('\n');
    }
    out
}
