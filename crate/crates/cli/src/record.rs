//! Run records, hashing and CSV files.

use std::fs;
use std::path::{Path, PathBuf};

use gravojcm::config::RunConfig;
use gravojcm::observables::{ObservableSeries, Origin};
use gravojcm::oracle::{CostEstimate, NodeSummary, Regime};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::format::{opt12, sig12};
use crate::CliError;

pub const OBSERVABLES_CSV: &str = "observables.csv";
pub const PHOTONS_CSV: &str = "photon_distribution.csv";
pub const RECORD_JSON: &str = "run_record.json";
pub const CSV_HEADER: [&str; 10] = ["lambda_t", "W", "F1", "F2", "delta_p", "Q", "S1", "S2", "trace", "k_max_used"];

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the full resolved config.
pub fn config_hash(cfg: &RunConfig) -> String {
    let v = serde_json::to_value(cfg).expect("config serializes");
    sha256_hex(v.to_string().as_bytes())
}

/// Digest of the physics and grid only. Formula and trace modes and the
/// oracle tolerances are left out so that runs differing only in method
/// can be compared.
pub fn param_hash(cfg: &RunConfig) -> String {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Value::Object(m) = &mut v {
        m.remove("oracle");
        if let Some(Value::Object(n)) = m.get_mut("numerics") {
            n.remove("mode");
            n.remove("trace_mode");
        }
    }
    sha256_hex(v.to_string().as_bytes())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_mode: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleSection {
    pub cost: Value,
    pub nodes: Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub origin: String,
    pub config_path: String,
    pub config: Value,
    pub param_hash: String,
    pub config_hash: String,
    pub mode: String,
    pub trace_mode: String,
    pub overrides: Overrides,
    pub regime: Regime,
    pub threads: Option<usize>,
    pub lambda_t: Vec<f64>,
    pub seconds: Vec<f64>,
    /// Per-time diagnostics; non-finite values serialize as null.
    pub diagnostics: Value,
    pub all_converged: bool,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    pub manifest: Vec<ManifestEntry>,
    pub wall_seconds: f64,
}

impl RunRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        command: &str,
        cfg: &RunConfig,
        config_path: &Path,
        overrides: Overrides,
        regime: Regime,
        threads: Option<usize>,
        series: &ObservableSeries,
    ) -> Self {
        let origin = match series.origin {
            Origin::Analytic => "analytic",
            Origin::Oracle => "oracle",
        };
        let name = |v: Value| v.as_str().unwrap_or_default().to_string();
        let all_converged = series.diagnostics.iter().all(|d| d.converged);
        let mut warnings = Vec::new();
        if !all_converged {
            let n = series.diagnostics.iter().filter(|d| !d.converged).count();
            warnings.push(format!(
                "series did not converge within k_max = {} at {n} time point(s)",
                cfg.numerics.k_max
            ));
        }
        let patho = series.diagnostics.iter().filter(|d| d.momentum_pathology).count();
        if patho > 0 {
            warnings.push(format!("negative momentum variance at {patho} time point(s); delta_p reported as NaN"));
        }
        RunRecord {
            tool: "gravojcm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            origin: origin.into(),
            config_path: config_path.display().to_string(),
            config: serde_json::to_value(cfg).expect("config serializes"),
            param_hash: param_hash(cfg),
            config_hash: config_hash(cfg),
            mode: name(serde_json::to_value(cfg.numerics.mode).unwrap()),
            trace_mode: name(serde_json::to_value(cfg.numerics.trace_mode).unwrap()),
            overrides,
            regime,
            threads,
            lambda_t: series.lambda_t.clone(),
            seconds: series.seconds.clone(),
            diagnostics: serde_json::to_value(&series.diagnostics).expect("diagnostics serialize"),
            all_converged,
            warnings,
            oracle: None,
            manifest: vec![],
            wall_seconds: 0.0,
        }
    }

    pub fn with_oracle(mut self, cost: &CostEstimate, nodes: &[NodeSummary]) -> Self {
        self.oracle = Some(OracleSection {
            cost: serde_json::to_value(cost).unwrap(),
            nodes: serde_json::to_value(nodes).unwrap(),
        });
        self
    }
}

pub fn observables_csv(series: &ObservableSeries) -> String {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(CSV_HEADER).unwrap();
    for i in 0..series.len() {
        let d = &series.diagnostics[i];
        w.write_record([
            sig12(series.lambda_t[i]),
            sig12(series.w[i]),
            sig12(series.f1[i]),
            sig12(series.f2[i]),
            sig12(series.delta_p[i]),
            opt12(series.q[i]),
            sig12(series.s1[i]),
            sig12(series.s2[i]),
            sig12(d.trace),
            d.k_max_used.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn photons_csv(series: &ObservableSeries) -> String {
    let len = series.pn.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(vec![]);
    let header: Vec<String> =
        std::iter::once("lambda_t".to_string()).chain((0..len).map(|n| format!("P{n}"))).collect();
    w.write_record(&header).unwrap();
    for (lt, pn) in series.lambda_t.iter().zip(&series.pn) {
        let row: Vec<String> = std::iter::once(sig12(*lt)).chain(pn.iter().map(|&p| sig12(p))).collect();
        w.write_record(&row).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Writes files into `dir` and returns their manifest entries.
pub fn write_files(dir: &Path, files: &[(&str, &str)]) -> Result<Vec<ManifestEntry>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
            Ok(ManifestEntry { file: name.to_string(), sha256: sha256_hex(body.as_bytes()), bytes: body.len() as u64 })
        })
        .collect()
}

pub fn write_record(dir: &Path, record: &RunRecord) -> Result<PathBuf, CliError> {
    let path = dir.join(RECORD_JSON);
    let body = serde_json::to_string_pretty(record).expect("record serializes");
    fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// A run directory: its record plus the observable columns from its CSV.
pub struct LoadedRun {
    pub record: RunRecord,
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl LoadedRun {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, CliError> {
    let rec_path = dir.join(RECORD_JSON);
    let text = fs::read_to_string(&rec_path).map_err(|e| CliError::io(&rec_path, e))?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not a run record: {e}", rec_path.display())))?;
    let csv_path = dir.join(OBSERVABLES_CSV);
    let mut rdr = csv::Reader::from_path(&csv_path).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for row in rdr.records() {
        let row = row.map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
        for (c, cell) in columns.iter_mut().zip(row.iter()) {
            c.push(crate::format::parse_cell(cell));
        }
    }
    Ok(LoadedRun { record, header, columns })
}
