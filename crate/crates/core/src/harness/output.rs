//! Result files, per-point averages and the summary checks drawn from them.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ConfigFile, Format};
use super::sweep::{Failure, ResultRow, SweepResult};
use crate::error::{Error, Result};
use crate::estimators::csv_io;
use crate::risk::Task;

pub const CSV_HEADER: [&str; 14] = [
    "case",
    "seed",
    "estimator",
    "lambda",
    "tau",
    "task",
    "method",
    "value",
    "se",
    "bias_thetac",
    "term_zeta1",
    "term_zeta2",
    "term_sigma",
    "term_sigma_tilde",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row_record(r: &ResultRow) -> [String; 14] {
    [
        r.case.clone(),
        r.seed.to_string(),
        r.estimator.clone(),
        cell(r.lambda),
        cell(r.tau),
        r.task.label().to_string(),
        r.method.clone(),
        r.value.to_string(),
        cell(r.se),
        cell(r.bias_thetac),
        cell(r.term_zeta1),
        cell(r.term_zeta2),
        cell(r.term_sigma),
        cell(r.term_sigma_tilde),
    ]
}

pub fn write_results(rows: &[ResultRow], path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
            w.write_record(CSV_HEADER).map_err(|e| csv_io(path, e))?;
            for r in rows {
                w.write_record(row_record(r)).map_err(|e| csv_io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        Format::Json => {
            let text = serde_json::to_string_pretty(rows).expect("rows serialize");
            std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
        }
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_results(path: &Path, format: Format) -> Result<Vec<ResultRow>> {
    match format {
        Format::Json => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
        }
        Format::Csv => {
            let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
            let header = rdr.headers().map_err(|e| csv_io(path, e))?.clone();
            if header.iter().ne(CSV_HEADER) {
                return Err(parse_err(path, "unexpected header"));
            }
            let mut rows = Vec::new();
            for (line, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| csv_io(path, e))?;
                let at = |msg: String| parse_err(path, format!("record {}: {msg}", line + 1));
                let num = |i: usize| -> Result<Option<f64>> {
                    let s = &rec[i];
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        s.parse().map(Some).map_err(|_| at(format!("bad number `{s}` in {}", CSV_HEADER[i])))
                    }
                };
                let task = match &rec[5] {
                    "pre" => Task::Pre,
                    "ft" => Task::Ft,
                    other => return Err(at(format!("bad task `{other}`"))),
                };
                rows.push(ResultRow {
                    case: rec[0].to_string(),
                    seed: rec[1].parse().map_err(|_| at("bad seed".into()))?,
                    estimator: rec[2].to_string(),
                    lambda: num(3)?,
                    tau: num(4)?,
                    task,
                    method: rec[6].to_string(),
                    value: num(7)?.ok_or_else(|| at("empty value".into()))?,
                    se: num(8)?,
                    bias_thetac: num(9)?,
                    term_zeta1: num(10)?,
                    term_zeta2: num(11)?,
                    term_sigma: num(12)?,
                    term_sigma_tilde: num(13)?,
                });
            }
            Ok(rows)
        }
    }
}

/// Side file written next to every result file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub case: String,
    pub replicates: usize,
    pub master_seed: u64,
    pub rows: usize,
    pub config: ConfigFile,
    pub failures: Vec<Failure>,
}

impl RunMetadata {
    pub fn of(result: &SweepResult) -> Self {
        RunMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            case: result.config.case.clone(),
            replicates: result.config.replicates,
            master_seed: result.config.master_seed,
            rows: result.rows.len(),
            config: result.config.to_file(),
            failures: result.failures.clone(),
        }
    }
}

pub fn write_metadata(result: &SweepResult, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&RunMetadata::of(result)).expect("metadata serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Replicate-averaged risks of one estimator point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub estimator: String,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub pre: f64,
    pub ft: f64,
    pub replicates: usize,
}

/// Average the rows of one method per estimator point, in first-seen order.
pub fn mean_curves(rows: &[ResultRow], method: &str) -> Vec<CurvePoint> {
    type Key = (String, Option<u64>, Option<u64>);
    let mut order: Vec<Key> = Vec::new();
    let mut acc: HashMap<Key, ([f64; 2], [usize; 2])> = HashMap::new();
    for r in rows.iter().filter(|r| r.method == method) {
        let key = (r.estimator.clone(), r.lambda.map(f64::to_bits), r.tau.map(f64::to_bits));
        let slot = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            ([0.0; 2], [0; 2])
        });
        let t = match r.task {
            Task::Pre => 0,
            Task::Ft => 1,
        };
        slot.0[t] += r.value;
        slot.1[t] += 1;
    }
    order
        .into_iter()
        .map(|key| {
            let (sum, count) = acc[&key];
            CurvePoint {
                estimator: key.0,
                lambda: key.1.map(f64::from_bits),
                tau: key.2.map(f64::from_bits),
                pre: sum[0] / count[0].max(1) as f64,
                ft: sum[1] / count[1].max(1) as f64,
                replicates: count[0].max(count[1]),
            }
        })
        .collect()
}

fn is_family(p: &CurvePoint) -> bool {
    matches!(p.estimator.as_str(), "ridgeless_ft" | "ridge_ft")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoSummary {
    pub ensemble_points: usize,
    pub undominated: usize,
    pub fraction: f64,
}

/// Share of ensemble points that no fine-tuned family point dominates in
/// `(L_pre, L_ft)`.
pub fn pareto_summary(points: &[CurvePoint]) -> ParetoSummary {
    let family: Vec<&CurvePoint> = points.iter().filter(|p| is_family(p)).collect();
    let ens: Vec<&CurvePoint> = points.iter().filter(|p| p.estimator == "ensemble").collect();
    let dominated = |e: &CurvePoint| {
        family
            .iter()
            .any(|f| f.pre <= e.pre && f.ft <= e.ft && (f.pre < e.pre || f.ft < e.ft))
    };
    let undominated = ens.iter().filter(|e| !dominated(e)).count();
    ParetoSummary {
        ensemble_points: ens.len(),
        undominated,
        fraction: if ens.is_empty() { 0.0 } else { undominated as f64 / ens.len() as f64 },
    }
}

/// Fine-tuning risks of the best ensemble, ridge at `lambda`, ridgeless and
/// pretrained, and whether they are strictly increasing in that order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FtOrdering {
    pub best_tau: f64,
    pub ensemble: f64,
    pub ridge: f64,
    pub ridgeless: f64,
    pub pretrained: f64,
    pub holds: bool,
}

pub fn ft_ordering(points: &[CurvePoint], lambda: f64) -> Result<FtOrdering> {
    let find = |name: &str, lam: Option<f64>| {
        points
            .iter()
            .find(|p| p.estimator == name && (lam.is_none() || p.lambda == lam))
            .map(|p| p.ft)
            .ok_or_else(|| Error::MissingSeries(name.to_string()))
    };
    let best = points
        .iter()
        .filter(|p| p.estimator == "ensemble" && p.lambda == Some(lambda))
        .min_by(|a, b| a.ft.total_cmp(&b.ft))
        .ok_or_else(|| Error::MissingSeries("ensemble".to_string()))?;
    let ridge = find("ridge_ft", Some(lambda))?;
    let ridgeless = find("ridgeless_ft", None)?;
    let pretrained = find("pretrained", None)?;
    Ok(FtOrdering {
        best_tau: best.tau.unwrap_or(f64::NAN),
        ensemble: best.ft,
        ridge,
        ridgeless,
        pretrained,
        holds: best.ft < ridge && ridge < ridgeless && ridgeless < pretrained,
    })
}
