//! Run files, the normalized-cost table and plot data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lazydrd_core::dataset::write_atomic;
use lazydrd_core::tree::TreeStats;
use lazydrd_core::{Error, Result};

use crate::bootstrap::{normalized_cost, NormalizedCost};
use crate::harness::{PolicyId, RunSummary, SplitSel, WorldRun};
use crate::sweep::Sweep;

pub const RUNS_FORMAT: &str = "lazydrd-runs";
pub const REPORT_FORMAT: &str = "lazydrd-report";
pub const SCHEMA_VERSION: u32 = 1;

pub const STATISTIC: &str =
    "mean over paired feasible worlds of cost(policy)/cost(reference) - 1; percentile bootstrap over worlds, 2.5/97.5 linear-interpolated percentiles";
pub const LAZYSP_SELECTOR: &str = "forward";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeInfo {
    pub eta: f64,
    pub alpha: f64,
    pub train_size: usize,
    pub stats: TreeStats,
}

/// All traces of one policy on one dataset split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub format: String,
    pub schema_version: u32,
    /// Short dataset label used as the report column prefix.
    pub dataset: String,
    pub dataset_hash: String,
    pub policy: PolicyId,
    pub split: SplitSel,
    pub seed: u64,
    /// Parameters the run was invoked with.
    pub config: serde_json::Value,
    pub tree: Option<TreeInfo>,
    pub summary: RunSummary,
    pub runs: Vec<WorldRun>,
}

impl RunFile {
    pub fn file_name(&self) -> String {
        format!("{}.{}.json", self.dataset, self.policy)
    }

    pub fn save_in(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        write_atomic(&path, &to_json(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: RunFile = serde_json::from_slice(&std::fs::read(path)?)?;
        if f.format != RUNS_FORMAT {
            return Err(Error::Parse(format!("{} is not a run file", path.display())));
        }
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: f.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(f)
    }

    fn costs(&self) -> Vec<(usize, f64)> {
        self.runs
            .iter()
            .filter(|r| r.feasible)
            .map(|r| (r.trace.world, r.trace.total_cost))
            .collect()
    }
}

/// Every `*.json` run file in `dir`, in file-name order.
pub fn load_runs_dir(dir: &Path) -> Result<Vec<RunFile>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| RunFile::load(p)).collect()
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub ci: NormalizedCost,
    pub mean_cost: f64,
    pub failure_rate: f64,
    pub infeasible_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub policy: PolicyId,
    /// One entry per dataset column; `None` if the policy was not run there.
    pub cells: Vec<Option<Cell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub reference: PolicyId,
    pub bootstrap: usize,
    pub seed: u64,
    pub statistic: String,
    pub lazysp_selector: String,
    pub datasets: Vec<DatasetInfo>,
    /// Config and tree of every contributing run, keyed `dataset.policy`.
    pub runs: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub schema_version: u32,
    pub meta: ReportMeta,
    pub rows: Vec<Row>,
}

pub fn build_report(files: &[RunFile], reference: PolicyId, bootstrap: usize, seed: u64) -> Result<Report> {
    let mut by_key: BTreeMap<(String, PolicyId), &RunFile> = BTreeMap::new();
    let mut datasets: BTreeMap<String, String> = BTreeMap::new();
    for f in files {
        if let Some(h) = datasets.insert(f.dataset.clone(), f.dataset_hash.clone()) {
            if h != f.dataset_hash {
                return Err(Error::Contract(format!("run files disagree on the hash of dataset {}", f.dataset)));
            }
        }
        if by_key.insert((f.dataset.clone(), f.policy), f).is_some() {
            return Err(Error::Contract(format!("two run files for {} on {}", f.policy, f.dataset)));
        }
    }
    if datasets.is_empty() {
        return Err(Error::Contract("no run files".into()));
    }
    let mut runs_meta = BTreeMap::new();
    for ((d, p), f) in &by_key {
        runs_meta.insert(
            format!("{d}.{p}"),
            serde_json::json!({ "config": f.config, "tree": f.tree, "split": f.split, "seed": f.seed }),
        );
    }
    let mut rows = Vec::new();
    for policy in PolicyId::ALL {
        if !by_key.keys().any(|(_, p)| *p == policy) {
            continue;
        }
        let mut cells = Vec::new();
        for d in datasets.keys() {
            let cell = match (by_key.get(&(d.clone(), policy)), by_key.get(&(d.clone(), reference))) {
                (Some(f), Some(r)) => Some(Cell {
                    ci: normalized_cost(&f.costs(), &r.costs(), bootstrap, seed)?,
                    mean_cost: f.summary.mean_cost,
                    failure_rate: f.summary.failure_rate,
                    infeasible_rate: f.summary.infeasible_rate,
                }),
                (Some(_), None) => {
                    return Err(Error::Contract(format!("no {reference} runs for dataset {d}")));
                }
                _ => None,
            };
            cells.push(cell);
        }
        rows.push(Row { policy, cells });
    }
    Ok(Report {
        format: REPORT_FORMAT.into(),
        schema_version: SCHEMA_VERSION,
        meta: ReportMeta {
            reference,
            bootstrap,
            seed,
            statistic: STATISTIC.into(),
            lazysp_selector: LAZYSP_SELECTOR.into(),
            datasets: datasets.into_iter().map(|(name, hash)| DatasetInfo { name, hash }).collect(),
            runs: runs_meta,
        },
        rows,
    })
}

impl Report {
    /// `policy,<dataset>_low,<dataset>_high,...`; missing cells are empty.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["policy".to_string()];
        for d in &self.meta.datasets {
            header.push(format!("{}_low", d.name));
            header.push(format!("{}_high", d.name));
        }
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![row.policy.to_string()];
            for c in &row.cells {
                match c {
                    Some(c) => {
                        rec.push(c.ci.low.to_string());
                        rec.push(c.ci.high.to_string());
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Parse(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Parsed CSV table: dataset names and per-policy `(low, high)` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub datasets: Vec<String>,
    pub rows: Vec<(PolicyId, Vec<Option<(f64, f64)>>)>,
}

impl Table {
    pub fn from_report(r: &Report) -> Self {
        Table {
            datasets: r.meta.datasets.iter().map(|d| d.name.clone()).collect(),
            rows: r
                .rows
                .iter()
                .map(|row| (row.policy, row.cells.iter().map(|c| c.as_ref().map(|c| (c.ci.low, c.ci.high))).collect()))
                .collect(),
        }
    }
}

pub fn parse_csv(bytes: &[u8]) -> Result<Table> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("policy") || header.len() % 2 != 1 {
        return Err(Error::Parse("unexpected table header".into()));
    }
    let datasets = (1..header.len())
        .step_by(2)
        .map(|i| {
            header[i]
                .strip_suffix("_low")
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("bad column {}", &header[i])))
        })
        .collect::<Result<Vec<_>>>()?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let policy: PolicyId = rec[0].parse()?;
        let mut cells = Vec::new();
        for i in (1..rec.len()).step_by(2) {
            cells.push(if rec[i].is_empty() {
                None
            } else {
                Some((num(&rec[i])?, num(&rec[i + 1])?))
            });
        }
        rows.push((policy, cells));
    }
    Ok(Table { datasets, rows })
}

/// Writes the CSV table at `csv_path` and the full report next to it with a
/// `.json` extension.
pub fn emit_report(report: &Report, csv_path: &Path) -> Result<PathBuf> {
    write_atomic(csv_path, &report.to_csv()?)?;
    let json = csv_path.with_extension("json");
    write_atomic(&json, &to_json(report)?)?;
    Ok(json)
}

/// `x,y,err` rows.
pub fn plot_data(points: &[(f64, f64, f64)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "err"]).map_err(csv_err)?;
    for (x, y, e) in points {
        w.write_record([x.to_string(), y.to_string(), e.to_string()]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

/// Writes `sweep.json` plus plot data for cost and both failure curves.
pub fn emit_sweep(sweep: &Sweep, config: &serde_json::Value, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let x = |p: &crate::sweep::SweepPoint| p.train_size as f64;
    let files = [
        (
            "sweep_cost.csv",
            sweep.points.iter().map(|p| (x(p), p.mean_cost, p.variance.sqrt())).collect::<Vec<_>>(),
        ),
        (
            "sweep_failure_direct_only.csv",
            sweep.points.iter().map(|p| (x(p), p.direct_only_failure, p.direct_only_failure_stderr)).collect(),
        ),
        (
            "sweep_failure_direct_bisect.csv",
            sweep.points.iter().map(|p| (x(p), p.direct_bisect_failure, 0.0)).collect(),
        ),
    ];
    let mut out = Vec::new();
    for (name, pts) in files {
        let path = dir.join(name);
        write_atomic(&path, &plot_data(&pts)?)?;
        out.push(path);
    }
    let path = dir.join("sweep.json");
    write_atomic(&path, &to_json(&serde_json::json!({ "config": config, "sweep": sweep }))?)?;
    out.push(path);
    Ok(out)
}
