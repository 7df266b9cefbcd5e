//! Estimator reports: one JSON document per estimator plus a CSV twin, and the
//! per-figure CSV bundle assembled from a set of reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Figure-equivalent data files produced by a full report.
pub const FIGURES: [&str; 10] = [
    "fig2c", "fig2d", "fig3a", "fig3d", "fig4a", "fig4b", "fig4c", "fig4d", "fig4e", "fig4f",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportAxis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl ReportAxis {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub seed: u64,
    /// Hash of the manifest of the run that produced the report.
    pub manifest: String,
}

/// Non-finite numbers are stored as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub estimator: String,
    /// Unique within a run; used as the file stem.
    pub id: String,
    pub figure: Option<String>,
    pub params: BTreeMap<String, Value>,
    /// Values are row-major over the axes.
    pub axes: Vec<ReportAxis>,
    pub values: Vec<Option<f64>>,
    pub stderr: Vec<Option<f64>>,
    /// Extra columns aligned with `values`.
    pub series: BTreeMap<String, Vec<Option<f64>>>,
    pub scalars: BTreeMap<String, Option<f64>>,
    pub metadata: ReportMetadata,
}

pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn finite_vec(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|&x| finite(x)).collect()
}

impl Report {
    pub fn new(estimator: &str, id: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            estimator: estimator.into(),
            id: id.into(),
            figure: None,
            params: BTreeMap::new(),
            axes: Vec::new(),
            values: Vec::new(),
            stderr: Vec::new(),
            series: BTreeMap::new(),
            scalars: BTreeMap::new(),
            metadata: ReportMetadata::default(),
        }
    }

    pub fn figure(mut self, f: &str) -> Self {
        self.figure = Some(f.into());
        self
    }

    pub fn param(mut self, k: &str, v: impl Into<Value>) -> Self {
        self.params.insert(k.into(), v.into());
        self
    }

    pub fn axis(mut self, name: &str, unit: &str, values: Vec<f64>) -> Self {
        self.axes.push(ReportAxis::new(name, unit, values));
        self
    }

    pub fn data(mut self, values: &[f64], stderr: &[f64]) -> Self {
        self.values = finite_vec(values);
        self.stderr = finite_vec(stderr);
        self
    }

    pub fn series(mut self, name: &str, values: &[f64]) -> Self {
        self.series.insert(name.into(), finite_vec(values));
        self
    }

    pub fn scalar(mut self, name: &str, v: f64) -> Self {
        self.scalars.insert(name.into(), finite(v));
        self
    }

    /// Shape of `values` implied by the axes.
    pub fn check_shape(&self) -> Result<()> {
        let n: usize = self.axes.iter().map(|a| a.values.len()).product();
        let n = if self.axes.is_empty() { 0 } else { n };
        let ok = self.values.len() == n
            && (self.stderr.is_empty() || self.stderr.len() == n)
            && self.series.values().all(|s| s.len() == n);
        if ok {
            Ok(())
        } else {
            Err(Error::Schema(format!(
                "report {}: values do not match axes",
                self.id
            )))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Parses a report, rejecting other schema versions before anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        match v.get("schema_version").and_then(Value::as_u64) {
            Some(x) if x == SCHEMA_VERSION as u64 => {}
            Some(x) => {
                return Err(Error::Schema(format!(
                    "schema version {x} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::Schema("missing schema_version".into())),
        }
        let r: Report = serde_json::from_value(v)?;
        r.check_shape()?;
        Ok(r)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {} manifest {}", self.id, self.metadata.manifest)?;
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        if self.axes.is_empty() {
            writeln!(w, "name,value")?;
            for (k, v) in &self.scalars {
                writeln!(w, "{k},{}", cell(*v))?;
            }
            return Ok(());
        }
        let mut header: Vec<String> = self
            .axes
            .iter()
            .map(|a| {
                if a.unit.is_empty() {
                    a.name.clone()
                } else {
                    format!("{}_{}", a.name, a.unit)
                }
            })
            .collect();
        header.push("value".into());
        header.push("stderr".into());
        header.extend(self.series.keys().cloned());
        writeln!(w, "{}", header.join(","))?;
        let dims: Vec<usize> = self.axes.iter().map(|a| a.values.len()).collect();
        for flat in 0..self.values.len() {
            let mut rem = flat;
            let mut idx = vec![0; dims.len()];
            for k in (0..dims.len()).rev() {
                idx[k] = rem % dims[k];
                rem /= dims[k];
            }
            let mut row: Vec<String> = idx
                .iter()
                .zip(&self.axes)
                .map(|(&i, a)| a.values[i].to_string())
                .collect();
            row.push(cell(self.values[flat]));
            row.push(cell(self.stderr.get(flat).copied().flatten()));
            row.extend(self.series.values().map(|s| cell(s[flat])));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Writes `<id>.json` and `<id>.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        self.check_shape()?;
        let json = dir.join(format!("{}.json", self.id));
        std::fs::write(&json, self.to_json()?)?;
        let csv = dir.join(format!("{}.csv", self.id));
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(&csv, buf)?;
        Ok(vec![json, csv])
    }
}

/// Writes one CSV per figure present among `reports` (blocks ordered by id)
/// and a `table.csv` with every scalar.
pub fn write_bundle(reports: &[Report], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut by_figure: BTreeMap<&str, Vec<&Report>> = BTreeMap::new();
    for r in reports {
        if let Some(f) = &r.figure {
            by_figure.entry(f.as_str()).or_default().push(r);
        }
    }
    let mut out = Vec::new();
    for (fig, mut rs) in by_figure {
        rs.sort_by(|a, b| a.id.cmp(&b.id));
        let mut buf = Vec::new();
        for r in rs {
            r.write_csv(&mut buf)?;
        }
        let path = dir.join(format!("{fig}.csv"));
        std::fs::write(&path, buf)?;
        out.push(path);
    }
    let mut sorted: Vec<&Report> = reports.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut table = String::from("report,name,value\n");
    for r in sorted {
        for (k, v) in &r.scalars {
            table.push_str(&format!(
                "{},{k},{}\n",
                r.id,
                v.map_or(String::new(), |x| x.to_string())
            ));
        }
    }
    let path = dir.join("table.csv");
    std::fs::write(&path, table)?;
    out.push(path);
    Ok(out)
}
