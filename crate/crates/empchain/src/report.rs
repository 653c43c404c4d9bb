//! Report types emitted by the experiment harness.
//!
//! Every report renders to CSV (one row per grid point) and to a JSON summary
//! that embeds the resolved configuration, the seed and the crate version.
//! Given the same config and seed the rendered bytes are identical across
//! runs and thread counts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error writing report: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn crate_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// A sweep over one axis with any number of named series.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub axis_name: String,
    pub axis: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
    pub metadata: Value,
}

impl SweepReport {
    pub fn new(axis_name: &str, axis: Vec<f64>) -> Self {
        assert!(
            axis.windows(2).all(|w| w[0] < w[1]),
            "axis must be strictly increasing"
        );
        Self {
            axis_name: axis_name.to_string(),
            axis,
            series: Vec::new(),
            metadata: Value::Null,
        }
    }

    pub fn push_series(&mut self, name: &str, values: Vec<f64>) {
        assert_eq!(
            values.len(),
            self.axis.len(),
            "series `{name}` length must match the axis"
        );
        self.series.push((name.to_string(), values));
    }

    pub fn series_named(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.axis_name);
        for (name, _) in &self.series {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, x) in self.axis.iter().enumerate() {
            let _ = write!(out, "{x}");
            for (_, values) in &self.series {
                let _ = write!(out, ",{}", values[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Finite-dimensional CLT test summary.
#[derive(Debug, Clone, Serialize)]
pub struct CltReport {
    /// Tested members, as class indices.
    pub subset: Vec<usize>,
    pub n: usize,
    pub replicates: usize,
    /// One KS statistic per tested function (standardized marginal).
    pub ks_statistics: Vec<f64>,
    /// Asymptotic critical value at the configured level.
    pub ks_critical: f64,
    /// Max entrywise relative error of the empirical covariance against the
    /// exact bridge covariance.
    pub cov_error: f64,
    pub cov_error_threshold: f64,
    pub pass: bool,
}

impl CltReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("function_index,ks_statistic,ks_critical\n");
        for (f, ks) in self.subset.iter().zip(&self.ks_statistics) {
            let _ = writeln!(out, "{f},{ks},{}", self.ks_critical);
        }
        let _ = writeln!(out, "cov_error,{},{}", self.cov_error, self.cov_error_threshold);
        out
    }
}

/// JSON summary wrapper: config + version + payload.
pub fn summary_json<T: Serialize>(
    config: &Value,
    seed: u64,
    payload: &T,
) -> Result<Value, ReportError> {
    Ok(serde_json::json!({
        "version": crate_version(),
        "seed": seed,
        "config": config,
        "result": serde_json::to_value(payload)?,
    }))
}

/// Write a CSV and a JSON summary into `dir` under the given stem.
pub fn write_report_files(
    dir: &Path,
    stem: &str,
    csv: &str,
    summary: &Value,
) -> Result<(), ReportError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    let pretty = serde_json::to_string_pretty(summary)?;
    fs::write(dir.join(format!("{stem}.json")), pretty)?;
    Ok(())
}
