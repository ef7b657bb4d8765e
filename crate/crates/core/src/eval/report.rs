use std::fmt::Write as _;

use crate::eval::experiment::Scored;
use crate::eval::metrics::Metrics;

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub scored: Scored,
}

/// Results of one forecaster at one horizon, averaged over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub name: String,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedRun>,
    /// Mean over seeds; `None` when the forecaster failed.
    pub scaled: Option<Metrics>,
    pub unscaled: Option<Metrics>,
    pub samples: usize,
    pub config: String,
    pub error: Option<String>,
}

impl EvalReport {
    pub fn from_runs(name: &str, horizon: usize, runs: Vec<SeedRun>, config: String) -> Self {
        let seeds = runs.iter().map(|r| r.seed).collect();
        let scaled: Vec<Metrics> = runs.iter().map(|r| r.scored.scaled.clone()).collect();
        let unscaled: Vec<Metrics> = runs.iter().map(|r| r.scored.unscaled.clone()).collect();
        Self {
            name: name.to_string(),
            horizon,
            seeds,
            samples: runs.first().map(|r| r.scored.samples).unwrap_or(0),
            scaled: Metrics::mean(&scaled).ok(),
            unscaled: Metrics::mean(&unscaled).ok(),
            runs,
            config,
            error: None,
        }
    }

    pub fn failed(name: &str, horizon: usize, seeds: Vec<u64>, config: String, error: String) -> Self {
        Self {
            name: name.to_string(),
            horizon,
            seeds,
            runs: Vec::new(),
            scaled: None,
            unscaled: None,
            samples: 0,
            config,
            error: Some(error),
        }
    }

    /// Mean scaled RMSE, NaN when failed.
    pub fn rmse(&self) -> f64 {
        self.scaled.as_ref().map_or(f64::NAN, |m| m.rmse)
    }

    pub fn mae(&self) -> f64 {
        self.scaled.as_ref().map_or(f64::NAN, |m| m.mae)
    }
}

fn fmt_opt(m: Option<&Metrics>, f: impl Fn(&Metrics) -> f64) -> String {
    m.map_or_else(|| "-".to_string(), |m| format!("{:.6}", f(m)))
}

/// Aligned text table, one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let header = ["model", "k", "samples", "seeds", "rmse_scaled", "mae_scaled", "rmse", "mae", "status"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.horizon.to_string(),
                r.samples.to_string(),
                r.seeds.len().to_string(),
                fmt_opt(r.scaled.as_ref(), |m| m.rmse),
                fmt_opt(r.scaled.as_ref(), |m| m.mae),
                fmt_opt(r.unscaled.as_ref(), |m| m.rmse),
                fmt_opt(r.unscaled.as_ref(), |m| m.mae),
                r.error.clone().map_or("ok".into(), |e| format!("failed: {e}")),
            ]
        })
        .collect();
    align(&header, &rows)
}

pub(crate) fn align(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// Long-format CSV: one row per model, horizon, seed (or `mean`) and step
/// (or `all`).
pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,horizon,seed,step,rmse_scaled,mae_scaled,rmse,mae\n");
    let mut emit = |name: &str, k: usize, seed: &str, s: &Metrics, u: &Metrics| {
        let _ = writeln!(out, "{name},{k},{seed},all,{},{},{},{}", s.rmse, s.mae, u.rmse, u.mae);
        for j in 0..s.per_step_rmse.len() {
            let _ = writeln!(
                out,
                "{name},{k},{seed},{},{},{},{},{}",
                j + 1,
                s.per_step_rmse[j],
                s.per_step_mae[j],
                u.per_step_rmse[j],
                u.per_step_mae[j]
            );
        }
    };
    for r in reports {
        if let (Some(s), Some(u)) = (&r.scaled, &r.unscaled) {
            emit(&r.name, r.horizon, "mean", s, u);
        }
        for run in &r.runs {
            emit(&r.name, r.horizon, &run.seed.to_string(), &run.scored.scaled, &run.scored.unscaled);
        }
    }
    out
}
