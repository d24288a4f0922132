//! The IR table: total IR per (trajectory, IRF, checkpoint step, k), with the
//! trajectory's scene features repeated on every row.
//!
//! CSV layout: an optional `# config_hash=<hex>` comment line, then the header
//! `trajectory_id,scenario,irf,ckpt_step,k,total_ir,<feature catalog…>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::features::{FeatureVector, CATALOG};
use crate::sim::Scenario;
use crate::{Error, Result};

const KIND: &str = "IR table";
const FIXED: [&str; 6] = [
    "trajectory_id",
    "scenario",
    "irf",
    "ckpt_step",
    "k",
    "total_ir",
];

#[derive(Clone, Debug, PartialEq)]
pub struct IrRow {
    pub trajectory_id: String,
    pub irf: String,
    pub ckpt_step: u64,
    pub k: usize,
    pub total_ir: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StimulusInfo {
    pub trajectory_id: String,
    pub scenario: Scenario,
    pub features: FeatureVector,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IrTable {
    pub config_hash: Option<String>,
    /// One entry per trajectory, in table order.
    pub stimuli: Vec<StimulusInfo>,
    pub rows: Vec<IrRow>,
}

impl IrTable {
    /// Values of one IRF column keyed by trajectory id.
    pub fn column(&self, irf: &str, step: u64, k: usize) -> BTreeMap<&str, f64> {
        self.rows
            .iter()
            .filter(|r| r.irf == irf && r.ckpt_step == step && r.k == k)
            .map(|r| (r.trajectory_id.as_str(), r.total_ir))
            .collect()
    }

    /// Distinct `(irf, step, k)` columns in first-appearance order.
    pub fn columns(&self) -> Vec<(String, u64, usize)> {
        let mut seen = Vec::new();
        for r in &self.rows {
            let key = (r.irf.clone(), r.ckpt_step, r.k);
            if !seen.contains(&key) {
                seen.push(key);
            }
        }
        seen
    }

    pub fn stimulus(&self, id: &str) -> Option<&StimulusInfo> {
        self.stimuli.iter().find(|s| s.trajectory_id == id)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.config_hash {
            let _ = writeln!(out, "# config_hash={h}");
        }
        let header: Vec<&str> = FIXED.iter().chain(CATALOG.iter()).copied().collect();
        out.push_str(&header.join(","));
        out.push('\n');
        let info: BTreeMap<&str, &StimulusInfo> = self
            .stimuli
            .iter()
            .map(|s| (s.trajectory_id.as_str(), s))
            .collect();
        for r in &self.rows {
            let s = info[r.trajectory_id.as_str()];
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                r.trajectory_id, s.scenario, r.irf, r.ckpt_step, r.k, r.total_ir
            );
            for v in &s.features.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn bad(line: usize, reason: impl std::fmt::Display) -> Error {
    Error::format(KIND, format!("line {line}: {reason}"))
}

fn number<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| bad(line, format!("{what} `{field}` is not a valid number")))
}

pub fn parse_ir_table(text: &str) -> Result<IrTable> {
    let mut table = IrTable::default();
    let mut body = text;
    if let Some(rest) = text.strip_prefix("# config_hash=") {
        let (hash, tail) = rest.split_once('\n').unwrap_or((rest, ""));
        let hash = hash.trim_end_matches('\r');
        if hash.len() != 64 || hex::decode(hash).is_err() {
            return Err(bad(1, "config hash is not 64 hex digits"));
        }
        table.config_hash = Some(hash.to_string());
        body = tail;
    }
    let offset = usize::from(table.config_hash.is_some());
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let header = rdr.headers()?.clone();
    let expected: Vec<&str> = FIXED.iter().chain(CATALOG.iter()).copied().collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(bad(offset + 1, "header does not match the IR table schema"));
    }
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = offset + rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != expected.len() {
            return Err(bad(
                line,
                format!("expected {} fields, found {}", expected.len(), rec.len()),
            ));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(bad(line, "empty trajectory_id"));
        }
        let scenario: Scenario = rec[1].parse().map_err(|e| bad(line, e))?;
        let irf = rec[2].to_string();
        if irf.is_empty() {
            return Err(bad(line, "empty irf name"));
        }
        let total_ir: f64 = number(line, &rec[5], "total_ir")?;
        let mut values = Vec::with_capacity(CATALOG.len());
        for (field, name) in rec.iter().skip(FIXED.len()).zip(CATALOG) {
            values.push(number::<f64>(line, field, name)?);
        }
        if !total_ir.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(bad(line, "non-finite value"));
        }
        let info = StimulusInfo {
            trajectory_id: id.clone(),
            scenario,
            features: FeatureVector { values },
        };
        match index.get(&id) {
            Some(&i) if table.stimuli[i] != info => {
                return Err(bad(
                    line,
                    format!("features of `{id}` differ from an earlier row"),
                ));
            }
            Some(_) => {}
            None => {
                index.insert(id.clone(), table.stimuli.len());
                table.stimuli.push(info);
            }
        }
        table.rows.push(IrRow {
            trajectory_id: id,
            irf,
            ckpt_step: number(line, &rec[3], "ckpt_step")?,
            k: number(line, &rec[4], "k")?,
            total_ir,
        });
    }
    Ok(table)
}

pub fn write_ir_table(path: &Path, table: &IrTable) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, table.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_ir_table(path: &Path) -> Result<IrTable> {
    parse_ir_table(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
