//! Seed × gain grid, one child process per run.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;

use anyhow::Context;
use syllabus::harness::RunConfig;
use syllabus::signals::GainKind;
use syllabus::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub gain: GainKind,
    pub seed: u64,
    pub dir: PathBuf,
    pub config: RunConfig,
}

/// `"a..b"` (half-open) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Config(format!("bad seed list {s:?}; use a..b or a,b,c"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

/// Run directories are `out/<gain>/seed-<seed>`. Gains that need a training
/// mode get it; baselines keep the base config's mode.
pub fn plan(base: &RunConfig, gains: &[GainKind], seeds: &[u64], out: &Path) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &gain in gains {
        for &seed in seeds {
            let dir = out.join(gain.name()).join(format!("seed-{seed}"));
            let mut config = base.clone();
            config.gain = gain;
            config.mode = gain.required_mode().unwrap_or(base.mode);
            config.seed = seed;
            config.out_dir = dir.clone();
            jobs.push(Job { gain, seed, dir, config });
        }
    }
    jobs
}

/// Runs every job as `exe run --config <dir>/sweep-config.json`, `jobs` at a
/// time. Returns each job's exit code.
pub fn execute(exe: &Path, jobs: &[Job], parallel: usize) -> anyhow::Result<Vec<i32>> {
    let next = Mutex::new(0usize);
    let codes = Mutex::new(vec![-1; jobs.len()]);
    thread::scope(|s| {
        let workers: Vec<_> = (0..parallel.max(1))
            .map(|_| {
                s.spawn(|| -> anyhow::Result<()> {
                    loop {
                        let i = {
                            let mut n = next.lock().unwrap();
                            let i = *n;
                            *n += 1;
                            i
                        };
                        let Some(job) = jobs.get(i) else { return Ok(()) };
                        fs::create_dir_all(&job.dir)?;
                        let cfg_path = job.dir.join("sweep-config.json");
                        fs::write(&cfg_path, job.config.to_json())?;
                        let log = File::create(job.dir.join("stderr.log"))?;
                        let status = Command::new(exe)
                            .arg("run")
                            .arg("--config")
                            .arg(&cfg_path)
                            .stdout(Stdio::null())
                            .stderr(log)
                            .status()
                            .with_context(|| format!("launching {}", exe.display()))?;
                        let code = status.code().unwrap_or(-1);
                        eprintln!("{} seed {}: exit {code}", job.gain, job.seed);
                        codes.lock().unwrap()[i] = code;
                    }
                })
            })
            .collect();
        for w in workers {
            w.join().expect("sweep worker panicked")?;
        }
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(codes.into_inner().unwrap())
}
