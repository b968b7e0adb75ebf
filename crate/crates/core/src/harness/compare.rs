//! Steps-to-threshold comparison across run directories.
//!
//! A run reaches the threshold at the first evaluation whose metric is
//! strictly below it; the time is that row's `cum_input_steps`. Runs that
//! never cross are censored at their last logged `cum_input_steps` and enter
//! the group statistics at that (lower-bound) value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use super::logs::{Table, EVAL_LOG};
use super::run::CONFIG_FILE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "steps", rename_all = "snake_case")]
pub enum Outcome {
    Reached(u64),
    Censored(u64),
}

impl Outcome {
    pub fn steps(self) -> u64 {
        match self {
            Outcome::Reached(s) | Outcome::Censored(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub group: String,
    pub seed: Option<u64>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub group: String,
    pub runs: usize,
    pub reached: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Median divided by the Uniform group's median, when there is one.
    pub ratio_to_uniform: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub metric: String,
    pub threshold: f64,
    pub runs: Vec<RunOutcome>,
    pub groups: Vec<GroupStats>,
}

pub fn steps_to_threshold(table: &Table, metric: &str, threshold: f64) -> Result<Outcome> {
    let steps = table.f64_column("cum_input_steps")?;
    let values = table.f64_column(metric)?;
    let mut last = 0;
    for (s, v) in steps.iter().zip(&values) {
        let s = s.unwrap_or(0.0) as u64;
        last = s;
        if matches!(v, Some(v) if *v < threshold) {
            return Ok(Outcome::Reached(s));
        }
    }
    Ok(Outcome::Censored(last))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(runs: &[RunOutcome]) -> Vec<GroupStats> {
    let mut groups: BTreeMap<&str, Vec<Outcome>> = BTreeMap::new();
    for r in runs {
        groups.entry(&r.group).or_default().push(r.outcome);
    }
    let mut stats: Vec<GroupStats> = groups
        .into_iter()
        .map(|(g, outs)| {
            let mut v: Vec<f64> = outs.iter().map(|o| o.steps() as f64).collect();
            v.sort_by(f64::total_cmp);
            GroupStats {
                group: g.to_string(),
                runs: outs.len(),
                reached: outs.iter().filter(|o| matches!(o, Outcome::Reached(_))).count(),
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                ratio_to_uniform: None,
            }
        })
        .collect();
    let uniform = stats
        .iter()
        .find(|s| s.group.eq_ignore_ascii_case("uniform"))
        .map(|s| s.median)
        .filter(|m| *m > 0.0);
    if let Some(u) = uniform {
        for s in &mut stats {
            s.ratio_to_uniform = Some(s.median / u);
        }
    }
    stats
}

/// Group label and seed from the run's `config.json`, falling back to the
/// directory name.
fn describe(dir: &Path) -> Result<(String, Option<u64>)> {
    let path = dir.join(CONFIG_FILE);
    if path.exists() {
        let cfg = RunConfig::load(&path)?;
        return Ok((cfg.gain.to_string(), Some(cfg.seed)));
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((name, None))
}

pub fn compare_runs(dirs: &[PathBuf], metric: &str, threshold: f64) -> Result<Comparison> {
    if dirs.is_empty() {
        return Err(Error::Config("no run directories to compare".into()));
    }
    let mut runs = Vec::new();
    for d in dirs {
        let table = Table::read(&d.join(EVAL_LOG))?;
        let (group, seed) = describe(d)?;
        runs.push(RunOutcome {
            dir: d.clone(),
            group,
            seed,
            outcome: steps_to_threshold(&table, metric, threshold)?,
        });
    }
    let groups = summarize(&runs);
    Ok(Comparison {
        metric: metric.to_string(),
        threshold,
        runs,
        groups,
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps until {} < {}", self.metric, self.threshold);
        let _ = writeln!(s, "\nrun,group,seed,status,steps");
        for r in &self.runs {
            let (status, steps) = match r.outcome {
                Outcome::Reached(x) => ("reached", x),
                Outcome::Censored(x) => ("censored", x),
            };
            let _ = writeln!(
                s,
                "{},{},{},{status},{steps}",
                r.dir.display(),
                r.group,
                r.seed.map(|x| x.to_string()).unwrap_or_default()
            );
        }
        let _ = writeln!(s, "\ngroup,runs,reached,q1,median,q3,ratio_to_uniform");
        for g in &self.groups {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                g.group,
                g.runs,
                g.reached,
                g.q1,
                g.median,
                g.q3,
                g.ratio_to_uniform.map(|r| format!("{r:.4}")).unwrap_or_default()
            );
        }
        s
    }
}
