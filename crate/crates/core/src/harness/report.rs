use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::Result;

/// One table row: independent variable, series name, metric and its
/// standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub x: f64,
    pub series: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub scenario: String,
    /// Name of the independent variable and of the metric.
    pub x_label: String,
    pub metric: String,
    pub rows: Vec<ResultRow>,
    pub config_hash: String,
    pub version: String,
    pub wall_time: Duration,
}

pub fn version_string() -> String {
    format!("arraysel {}", env!("CARGO_PKG_VERSION"))
}

impl ExperimentResult {
    pub fn value(&self, x: f64, series: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.x == x && r.series == series).map(|r| r.value)
    }

    /// CSV text: a `#` metadata line, the header and one line per row.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = format!(
            "# scenario={} x={} metric={} config_hash={} version={}\n",
            self.scenario, self.x_label, self.metric, self.config_hash, self.version
        );
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(["x", "series", "value", "stderr"])?;
        for r in &self.rows {
            w.write_record([r.x.to_string(), r.series.clone(), r.value.to_string(), r.stderr.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is UTF-8"));
        Ok(out)
    }

    /// Writes `<dir>/<scenario>.csv` and a `.meta` sidecar with the wall
    /// time, which is kept out of the CSV so reruns compare byte for byte.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.scenario));
        fs::write(&csv_path, self.to_csv()?)?;
        let mut meta = fs::File::create(dir.join(format!("{}.meta", self.scenario)))?;
        writeln!(meta, "config_hash={}", self.config_hash)?;
        writeln!(meta, "version={}", self.version)?;
        writeln!(meta, "wall_time_s={:.3}", self.wall_time.as_secs_f64())?;
        Ok(csv_path)
    }
}
