//! Experiment reports: per-replication records, aggregates and tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Outcome of one replication. Squared errors are stored under
/// `sqerr_<block>_<estimator>` so aggregates can be recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub group: String,
    pub index: usize,
    pub seed: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub estimates: BTreeMap<String, Vec<f64>>,
}

impl ReplicationRecord {
    pub fn new(group: &str, index: usize, seed: u64) -> Self {
        ReplicationRecord {
            group: group.to_string(),
            index,
            seed,
            ok: true,
            error: None,
            values: BTreeMap::new(),
            estimates: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: impl Into<String>, v: f64) {
        self.values.insert(key.into(), v);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub values: Vec<f64>,
}

/// A table laid out like the corresponding published table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub name: String,
    /// Value column names; the label column comes first in CSV output.
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl ReportTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        ReportTable {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<f64>) {
        self.rows.push(TableRow {
            label: label.into(),
            values,
        });
    }

    pub fn value(&self, label: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.label == label).map(|r| r.values[c])
    }

    pub fn column(&self, column: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|x| x == column)?;
        Some(self.rows.iter().map(|r| r.values[c]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub version: String,
    /// The resolved configuration.
    pub config: serde_json::Value,
    pub records: Vec<ReplicationRecord>,
    /// Keyed `<group>/<name>`.
    pub aggregates: BTreeMap<String, f64>,
    pub tables: Vec<ReportTable>,
    /// Failed replications and violated invariants, one line each.
    pub failures: Vec<String>,
}

impl ExperimentReport {
    pub fn new(scenario: &str) -> Self {
        ExperimentReport {
            scenario: scenario.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::Value::Null,
            records: Vec::new(),
            aggregates: BTreeMap::new(),
            tables: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn aggregate(&self, group: &str, name: &str) -> Option<f64> {
        self.aggregates.get(&format!("{}/{}", group, name)).copied()
    }

    pub fn set_aggregate(&mut self, group: &str, name: &str, v: f64) {
        self.aggregates.insert(format!("{}/{}", group, name), v);
    }

    pub fn table(&self, name: &str) -> Option<&ReportTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Successful records of a group.
    pub fn group_records<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a ReplicationRecord> + 'a {
        self.records.iter().filter(move |r| r.group == group && r.ok)
    }

    /// Move records in, logging failures.
    pub fn absorb(&mut self, records: Vec<ReplicationRecord>) {
        for r in &records {
            if let Some(e) = &r.error {
                self.failures.push(format!("{} replication {}: {}", r.group, r.index, e));
            }
        }
        self.records.extend(records);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Write `report.json` and one CSV per table; returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()?)?;
        out.push(json);
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["label".to_string()];
            header.extend(t.columns.iter().cloned());
            w.write_record(&header)?;
            for r in &t.rows {
                let mut rec = vec![r.label.clone()];
                rec.extend(r.values.iter().map(|v| format!("{}", v)));
                w.write_record(&rec)?;
            }
            w.flush()?;
            out.push(path);
        }
        Ok(out)
    }
}

/// `√(mean of key)` over the successful records of `group`, the key holding
/// squared Euclidean errors. `NaN` when no record carries the key.
pub fn rmse_from_records(records: &[ReplicationRecord], group: &str, key: &str) -> f64 {
    mean_from_records(records, group, key).sqrt()
}

/// Mean of `key` over the successful records of `group`.
pub fn mean_from_records(records: &[ReplicationRecord], group: &str, key: &str) -> f64 {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.ok && r.group == group)
        .filter_map(|r| r.get(key))
        .collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean and Monte Carlo standard error of a sample.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
