//! CSV training and evaluation logs.
//!
//! Training log columns: `round, cum_input_steps, task_sampled, nu,
//! raw_reward, scaled_reward, policy_entropy, pi_1..pi_N, loss_on_x`.
//! Tasks are numbered from 1. Gain columns are empty for baseline runs.
//!
//! Evaluation log columns: `round, cum_input_steps, loss_1..loss_N, L_MT,
//! L_TT, complexity`. Losses are per output (summed loss over unmasked target
//! steps divided by their count); columns not measured are empty.
//!
//! Floats are written in Rust's shortest round-trip form, so logs are
//! byte-identical across repeated runs.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const TRAIN_LOG: &str = "train.csv";
pub const EVAL_LOG: &str = "eval.csv";
pub const TIMING_LOG: &str = "timing.csv";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub round: u64,
    pub cum_input_steps: u64,
    /// Zero-based; written one-based.
    pub task: usize,
    pub nu: Option<f64>,
    pub raw_reward: Option<f64>,
    pub scaled_reward: Option<f64>,
    pub policy_entropy: f64,
    pub policy: Vec<f64>,
    pub loss_on_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub round: u64,
    pub cum_input_steps: u64,
    pub losses: Vec<Option<f64>>,
    pub l_mt: Option<f64>,
    pub l_tt: f64,
    pub complexity: Option<f64>,
}

pub fn train_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "round",
        "cum_input_steps",
        "task_sampled",
        "nu",
        "raw_reward",
        "scaled_reward",
        "policy_entropy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=n).map(|i| format!("pi_{i}")));
    h.push("loss_on_x".into());
    h
}

pub fn eval_header(n: usize) -> Vec<String> {
    let mut h = vec!["round".to_string(), "cum_input_steps".to_string()];
    h.extend((1..=n).map(|i| format!("loss_{i}")));
    h.extend(["L_MT", "L_TT", "complexity"].iter().map(|s| s.to_string()));
    h
}

impl TrainRow {
    pub fn to_record(&self) -> Vec<String> {
        let mut r = vec![
            self.round.to_string(),
            self.cum_input_steps.to_string(),
            (self.task + 1).to_string(),
            fmt_opt(self.nu),
            fmt_opt(self.raw_reward),
            fmt_opt(self.scaled_reward),
            fmt_f64(self.policy_entropy),
        ];
        r.extend(self.policy.iter().map(|p| fmt_f64(*p)));
        r.push(fmt_f64(self.loss_on_x));
        r
    }
}

impl EvalRow {
    pub fn to_record(&self) -> Vec<String> {
        let mut r = vec![self.round.to_string(), self.cum_input_steps.to_string()];
        r.extend(self.losses.iter().map(|l| fmt_opt(*l)));
        r.push(fmt_opt(self.l_mt));
        r.push(fmt_f64(self.l_tt));
        r.push(fmt_opt(self.complexity));
        r
    }
}

/// Appending CSV writer that writes its header only into an empty file.
pub struct CsvLog {
    inner: csv::Writer<File>,
}

impl CsvLog {
    pub fn open(path: &Path, header: &[String]) -> Result<Self> {
        let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            inner.write_record(header)?;
        }
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &[String]) -> Result<()> {
        self.inner.write_record(record)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// A CSV file read as strings, with typed accessors that report the
/// offending line.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// 1-based file line of each row.
    pub lines: Vec<usize>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(bytes.as_slice());
        let mut headers = Vec::new();
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Log {
                path: path.into(),
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                msg: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
            let fields: Vec<String> = rec.iter().map(str::to_string).collect();
            if i == 0 {
                headers = fields;
                continue;
            }
            if fields.len() != headers.len() {
                return Err(Error::Log {
                    path: path.into(),
                    line,
                    msg: format!("{} fields, header has {}", fields.len(), headers.len()),
                });
            }
            rows.push(fields);
            lines.push(line);
        }
        Ok(Self {
            path: path.into(),
            headers,
            rows,
            lines,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| Error::Log {
            path: self.path.clone(),
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    }

    /// Parsed cell; `None` for an empty cell.
    pub fn f64_at(&self, row: usize, col: usize) -> Result<Option<f64>> {
        let s = &self.rows[row][col];
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(Some).map_err(|_| Error::Log {
            path: self.path.clone(),
            line: self.lines[row],
            msg: format!("column {:?}: {s:?} is not a number", self.headers[col]),
        })
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let c = self.require_column(name)?;
        (0..self.rows.len()).map(|r| self.f64_at(r, c)).collect()
    }

    /// Columns named `prefix1..prefixN`, in order.
    pub fn numbered_columns(&self, prefix: &str) -> Vec<usize> {
        let mut cols = Vec::new();
        while let Some(c) = self.column(&format!("{prefix}{}", cols.len() + 1)) {
            cols.push(c);
        }
        cols
    }
}

/// Drops rows whose `round` exceeds `round`, keeping the bytes of the
/// remaining lines. Used when resuming from a checkpoint.
pub fn truncate_after_round(path: &Path, round: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let table = Table::read(path)?;
    if table.headers.is_empty() {
        return Ok(());
    }
    let col = table.require_column("round")?;
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    out.write_record(&table.headers)?;
    for (i, row) in table.rows.iter().enumerate() {
        let r: u64 = row[col].parse().map_err(|_| Error::Log {
            path: path.into(),
            line: table.lines[i],
            msg: "bad round".into(),
        })?;
        if r <= round {
            out.write_record(row)?;
        }
    }
    let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let mut f = File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}
