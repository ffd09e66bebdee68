//! Metrics CSV rows and the long-format plot export.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Seconds since the run started; always 0 under [`Clock::Frozen`].
    pub wall_time: f64,
    pub global_step: u64,
    pub env_episodes: u64,
    pub success_rate_eval: f64,
    /// Mean training loss since the previous row.
    pub loss: f64,
    /// Mean predicted value since the previous row.
    pub mean_q: f64,
    /// `sim:<n>;train:<n>` occupancy of the two buffers.
    pub buffer_sizes: String,
}

/// Source of the `wall_time` column.
#[derive(Debug, Clone, Copy)]
pub enum Clock {
    Wall(Instant),
    /// Keeps metrics files reproducible byte for byte.
    Frozen,
}

impl Clock {
    pub fn start_wall() -> Self {
        Clock::Wall(Instant::now())
    }

    pub fn seconds(&self) -> f64 {
        match self {
            Clock::Wall(t) => t.elapsed().as_secs_f64(),
            Clock::Frozen => 0.0,
        }
    }
}

/// Running means of loss and predicted value between two metric rows.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    loss: f64,
    q: f64,
    n: u64,
}

impl Accumulator {
    pub fn add(&mut self, loss: f64, mean_q: f64) {
        self.loss += loss;
        self.q += mean_q;
        self.n += 1;
    }

    /// Means since the last call (NaN when nothing was added).
    pub fn take(&mut self) -> (f64, f64) {
        let out = if self.n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (self.loss / self.n as f64, self.q / self.n as f64)
        };
        *self = Self::default();
        out
    }
}

pub fn buffer_sizes(sim: usize, train: usize) -> String {
    format!("sim:{sim};train:{train}")
}

pub fn to_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Metrics(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record([
            "wall_time",
            "global_step",
            "env_episodes",
            "success_rate_eval",
            "loss",
            "mean_q",
            "buffer_sizes",
        ])
        .map_err(|e| Error::Metrics(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Metrics(e.to_string()))
}

pub fn write_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    std::fs::write(path, to_csv(rows)?).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Metrics(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Metrics(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub run: String,
    pub step: u64,
    pub episodes: u64,
    pub success_rate: f64,
}

/// Merges the metrics of several run directories into one long table,
/// labelled by directory path. Rows are kept as recorded.
pub fn plot_export(run_dirs: &[PathBuf]) -> Result<Vec<PlotRow>> {
    if run_dirs.is_empty() {
        return Err(Error::Metrics("no run directories given".into()));
    }
    let mut out = Vec::new();
    for dir in run_dirs {
        let path = dir.join(METRICS_FILE);
        if !path.is_file() {
            return Err(Error::Metrics(format!("{} not found", path.display())));
        }
        let run = dir.display().to_string();
        for r in read_csv(&path)? {
            out.push(PlotRow {
                run: run.clone(),
                step: r.global_step,
                episodes: r.env_episodes,
                success_rate: r.success_rate_eval,
            });
        }
    }
    Ok(out)
}

pub fn plot_csv(rows: &[PlotRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Metrics(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Metrics(e.to_string()))
}
