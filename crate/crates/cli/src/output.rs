//! Report files and their manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sumprod_core::experiments::{Calibration, CdfExport, SweepGrid, SweepRow};
use sumprod_core::{DistSpec, ScenarioConfig};

use crate::args::OutputFormat;
use crate::error::CliError;

pub const CSV_HEADER: [&str; 8] = ["model", "dist", "param_name", "param_value", "std_db", "ks", "n", "seed"];

/// Everything needed to re-run a command bit-identically. Output paths are
/// relative to the output directory so the manifest does not depend on
/// where the files were written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub timestamp: String,
    pub format: OutputFormat,
    /// Scenario of a single-cell command, or the base of a sweep.
    pub scenario: ScenarioConfig,
    pub grid: Option<SweepGrid>,
    pub calibration: Option<CalibrationPlan>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPlan {
    pub candidates: Vec<usize>,
    pub ray_counts: Vec<usize>,
    pub q: usize,
}

impl RunManifest {
    pub fn new(command: String, scenario: ScenarioConfig, format: OutputFormat) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            master_seed: scenario.seed,
            timestamp: timestamp(),
            format,
            scenario,
            grid: None,
            calibration: None,
            outputs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// RFC 3339 UTC time, taken from `SOURCE_DATE_EPOCH` when it is set so that
/// manifests can be made byte-reproducible.
pub fn timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    fixed
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Directory named by `--out-dir`, the config file, `$SUMPROD_OUT_DIR`, or
/// the working directory, in that order.
pub fn resolve_out_dir(explicit: Option<&str>) -> PathBuf {
    explicit
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("SUMPROD_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// `beta:1,1` becomes `beta-1-1`.
pub fn sanitize_dist(dist: &DistSpec) -> String {
    dist.to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' })
        .collect()
}

pub fn cdf_file_name(config: &ScenarioConfig) -> String {
    format!("cdf_{}_{}_k{}.csv", config.model, sanitize_dist(&config.dist_s), config.k)
}

fn csv_writer() -> csv::WriterBuilder {
    let mut builder = csv::WriterBuilder::new();
    builder.terminator(csv::Terminator::Any(b'\n'));
    builder
}

fn finish_csv(writer: csv::Writer<Vec<u8>>) -> Vec<u8> {
    writer.into_inner().expect("in-memory writer cannot fail")
}

fn row_record(row: &SweepRow) -> [String; 8] {
    [
        row.model.to_string(),
        row.dist.to_string(),
        row.param_name.to_string(),
        row.param_value.to_string(),
        format!("{:.6}", row.std_db),
        format!("{:.6}", row.ks),
        row.n.to_string(),
        row.seed.to_string(),
    ]
}

pub fn rows_csv(rows: &[SweepRow]) -> Vec<u8> {
    let mut w = csv_writer().from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(row_record(row)).expect("in-memory write");
    }
    finish_csv(w)
}

pub fn cdf_csv(export: &CdfExport) -> Vec<u8> {
    let mut w = csv_writer().from_writer(Vec::new());
    w.write_record(["db", "empirical", "normal"]).expect("in-memory write");
    for p in &export.points {
        w.write_record([format!("{:.6}", p.db), format!("{:.6}", p.empirical), format!("{:.6}", p.normal)])
            .expect("in-memory write");
    }
    finish_csv(w)
}

pub fn calibration_csv(cal: &Calibration) -> Vec<u8> {
    let mut w = csv_writer().from_writer(Vec::new());
    w.write_record(["k", "rms_rel_error", "best", "q"]).expect("in-memory write");
    for s in &cal.scores {
        w.write_record([
            s.k.to_string(),
            format!("{:.6}", s.rms_rel_error),
            (s.k == cal.best_k).to_string(),
            cal.q.to_string(),
        ])
        .expect("in-memory write");
    }
    finish_csv(w)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

/// Collects output files, then writes them together with the manifest.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new(dir: PathBuf) -> Self {
        OutputSet { dir, files: Vec::new() }
    }

    pub fn add(&mut self, name: String, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    pub fn insert_front(&mut self, name: String, bytes: Vec<u8>) {
        self.files.insert(0, (name, bytes));
    }

    /// Writes every file plus `<stem>.manifest.json`; returns the paths.
    pub fn write(self, stem: &str, mut manifest: RunManifest) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let manifest_name = format!("{stem}.manifest.json");
        manifest.outputs = self.files.iter().map(|(n, _)| n.clone()).collect();
        let mut written = Vec::new();
        for (name, bytes) in self.files.iter().chain(std::iter::once(&(manifest_name, manifest.to_json().into_bytes())))
        {
            let path = self.dir.join(name);
            write_file(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sumprod_core::experiments::SweptParam;
    use sumprod_core::ModelKind;

    fn row() -> SweepRow {
        SweepRow {
            model: ModelKind::SumProd,
            dist: DistSpec::beta(1.0, 1.0).unwrap(),
            param_name: SweptParam::K,
            param_value: 5,
            std_db: 3.123_456_789,
            ks: 0.01,
            n: 1000,
            seed: 7,
        }
    }

    #[test]
    fn csv_layout() {
        let text = String::from_utf8(rows_csv(&[row()])).unwrap();
        assert_eq!(
            text,
            "model,dist,param_name,param_value,std_db,ks,n,seed\nsumprod,\"beta:1,1\",K,5,3.123457,0.010000,1000,7\n"
        );
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new("run".into(), ScenarioConfig::new(ModelKind::Los, 4, 3, DistSpec::uniform()), OutputFormat::Json);
        m.outputs = vec!["run.json".into()];
        m.calibration = Some(CalibrationPlan { candidates: vec![1, 5], ray_counts: vec![5], q: 10 });
        assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn file_names() {
        let mut cfg = ScenarioConfig::new(ModelKind::Prod, 10, 5, DistSpec::l_inv(1.0, 0.5).unwrap());
        assert_eq!(cdf_file_name(&cfg), "cdf_prod_l-1-0.5_k5.csv");
        cfg.dist_s = DistSpec::r_inv(10.0).unwrap();
        assert_eq!(cdf_file_name(&cfg), "cdf_prod_r-10_k5.csv");
    }
}
