use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandit::BanditConfig;
use crate::error::{Error, Result};
use crate::nn::OptConfig;
use crate::scaler::ScalerConfig;
use crate::signals::{check_mode, GainKind, TrainingMode};
use crate::tasks::CurriculumSpec;
use crate::variational::VariationalConfig;

/// Which tasks an evaluation point measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalScope {
    All,
    /// Only the target task; the other loss columns stay empty.
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub curriculum: CurriculumSpec,
    pub gain: GainKind,
    pub mode: TrainingMode,
    /// `n_arms` is ignored; it is always the curriculum size.
    pub bandit: BanditConfig,
    pub scaler: ScalerConfig,
    pub hidden_sizes: Vec<usize>,
    pub optimizer: OptConfig,
    pub variational: VariationalConfig,
    /// α of the L2 mode's (α/2)‖θ‖² term.
    pub l2_alpha: f64,
    pub batch_size: usize,
    /// Number of rounds (training batches).
    pub total_steps: u64,
    /// Optional cap on cumulative input steps; the run stops at the first
    /// round reaching it.
    pub max_input_steps: Option<u64>,
    pub eval_every: u64,
    pub eval_batches: usize,
    pub eval_scope: EvalScope,
    /// Stop once the target task's per-output eval loss drops below this.
    pub stop_below: Option<f64>,
    /// Write every n-th training row.
    pub log_every: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            curriculum: CurriculumSpec::default(),
            gain: GainKind::PG,
            mode: TrainingMode::ML,
            bandit: BanditConfig::default(),
            scaler: ScalerConfig::default(),
            hidden_sizes: vec![64],
            optimizer: OptConfig::default(),
            variational: VariationalConfig::default(),
            l2_alpha: 1e-4,
            batch_size: 16,
            total_steps: 10_000,
            max_input_steps: None,
            eval_every: 1000,
            eval_batches: 20,
            eval_scope: EvalScope::All,
            stop_below: None,
            log_every: 1,
            seed: 0,
            out_dir: PathBuf::from("runs/run"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Rejects incompatible or out-of-range settings before any work.
    pub fn validate(&self) -> Result<()> {
        check_mode(self.gain, self.mode)?;
        self.curriculum.validate()?;
        let mut bandit = self.bandit.clone();
        bandit.n_arms = 1;
        bandit.validate()?;
        self.scaler.validate()?;
        self.optimizer.validate()?;
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden_sizes needs at least one layer, all >= 1".into()));
        }
        if !(self.l2_alpha >= 0.0 && self.l2_alpha.is_finite()) {
            return Err(Error::Config("l2_alpha must be finite and >= 0".into()));
        }
        if let Some(s) = self.variational.samples {
            if !(s > 0.0) {
                return Err(Error::Config("variational.samples must be > 0".into()));
            }
        }
        if !(self.variational.posterior_sigma_fraction > 0.0 && self.variational.prior_sigma > 0.0)
        {
            return Err(Error::Config("variational sigmas must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be >= 1".into()));
        }
        if self.eval_every == 0 || self.eval_batches == 0 || self.log_every == 0 {
            return Err(Error::Config(
                "eval_every, eval_batches and log_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}
