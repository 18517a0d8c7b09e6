//! Report rows, aggregates and atomic CSV/JSON output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Study};
use super::fit::{fit_loglog, median, LogLogFit};
use crate::error::{Error, Result};

/// One CSV row. The meaning of `aux1`/`aux2` depends on the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub run_id: String,
    pub study: Study,
    pub n: usize,
    pub eps: f64,
    pub trial: usize,
    pub seed: u64,
    pub lambda_rel_err: f64,
    pub l2_err: f64,
    pub h1_err: f64,
    #[serde(rename = "E_l")]
    pub e_l: f64,
    pub aux1: f64,
    pub aux2: f64,
    pub wall_ms: u64,
}

impl CsvRow {
    /// Value of a metric column by its CSV name.
    pub fn metric(&self, column: &str) -> Option<f64> {
        Some(match column {
            "lambda_rel_err" => self.lambda_rel_err,
            "l2_err" => self.l2_err,
            "h1_err" => self.h1_err,
            "E_l" => self.e_l,
            "aux1" => self.aux1,
            "aux2" => self.aux2,
            _ => return None,
        })
    }

    /// True when every column except the wall-clock time matches.
    pub fn same_result(&self, other: &CsvRow) -> bool {
        let strip = |r: &CsvRow| CsvRow {
            wall_ms: 0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

/// Metric columns in CSV order.
pub const METRICS: [&str; 6] = ["lambda_rel_err", "l2_err", "h1_err", "E_l", "aux1", "aux2"];

/// Stable identifier of one run: a hash of the configuration fields that
/// determine it plus its sample size, scale, trial and seed.
pub fn run_id(cfg: &ExperimentConfig, n: usize, eps: f64, trial: usize, seed: u64) -> String {
    let key = format!(
        "{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}",
        cfg.study,
        cfg.manifold,
        cfg.density,
        cfg.kernel,
        cfg.l,
        n,
        eps,
        trial,
        seed,
        cfg.mc_points,
        cfg.grid,
        cfg.c_bw
    );
    hex::encode(&Sha256::digest(key.as_bytes())[..8])
}

/// Per-x summary across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// The abscissa: `n`, `ε` or `m` depending on the study.
    pub x: f64,
    pub count: usize,
    pub median: BTreeMap<String, f64>,
    pub mean: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub study: Study,
    pub version: String,
    pub config: ExperimentConfig,
    /// Name of the abscissa of aggregates and fits.
    pub x_label: String,
    pub rows: Vec<CsvRow>,
    pub aggregates: Vec<Aggregate>,
    /// Log-log fits of the median of each metric against `x`.
    pub fits: BTreeMap<String, LogLogFit>,
    pub attempted: usize,
    pub failures: usize,
    /// Study-specific scalar summaries.
    pub summary: BTreeMap<String, f64>,
    pub wall_ms: u64,
}

/// Groups rows by the abscissa chosen by `x_of` (ascending).
pub fn aggregate(rows: &[CsvRow], x_of: impl Fn(&CsvRow) -> f64) -> Vec<Aggregate> {
    let mut xs: Vec<f64> = rows.iter().map(&x_of).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.into_iter()
        .map(|x| {
            let group: Vec<&CsvRow> = rows.iter().filter(|r| x_of(r) == x).collect();
            let mut med = BTreeMap::new();
            let mut mean = BTreeMap::new();
            for m in METRICS {
                let vals: Vec<f64> = group.iter().filter_map(|r| r.metric(m)).collect();
                med.insert(m.to_string(), median(&vals));
                mean.insert(m.to_string(), vals.iter().sum::<f64>() / vals.len() as f64);
            }
            Aggregate {
                x,
                count: group.len(),
                median: med,
                mean,
            }
        })
        .collect()
}

/// Fits of `median(metric)` against `x` for the requested metrics. Metrics
/// with fewer than three positive medians are skipped.
pub fn fit_medians(aggs: &[Aggregate], metrics: &[&str]) -> BTreeMap<String, LogLogFit> {
    let mut out = BTreeMap::new();
    for &m in metrics {
        let (xs, ys): (Vec<f64>, Vec<f64>) = aggs
            .iter()
            .filter_map(|a| a.median.get(m).map(|&y| (a.x, y)))
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
            .unzip();
        if let Ok(fit) = fit_loglog(&xs, &ys) {
            out.insert(m.to_string(), fit);
        }
    }
    out
}

impl ConvergenceReport {
    /// Medians of a metric in ascending `x` order.
    pub fn medians(&self, metric: &str) -> Vec<f64> {
        self.aggregates
            .iter()
            .map(|a| a.median.get(metric).copied().unwrap_or(f64::NAN))
            .collect()
    }

    pub fn fit(&self, metric: &str) -> Option<LogLogFit> {
        self.fits.get(metric).copied()
    }

    pub fn csv_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.csv", self.study))
    }

    pub fn json_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.json", self.study))
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Io(std::io::Error::other(e)))
    }

    /// Writes `<study>.csv` and `<study>.json` under `dir`, each through a
    /// temporary file renamed into place.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = self.csv_path(dir);
        let json = self.json_path(dir);
        write_atomic(&csv, self.to_csv()?.as_bytes())?;
        write_atomic(&json, self.to_json()?.as_bytes())?;
        Ok((csv, json))
    }
}

pub fn rows_to_csv(rows: &[CsvRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "run_id",
            "study",
            "n",
            "eps",
            "trial",
            "seed",
            "lambda_rel_err",
            "l2_err",
            "h1_err",
            "E_l",
            "aux1",
            "aux2",
            "wall_ms",
        ])
        .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
