//! The training loop: policy, task draw, one optimiser step, gain, reward
//! scaling and bandit update, once per round.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{self, EvalParams, EvalReport};
use super::logs::{self, CsvLog, TrainRow};
use crate::bandit::{entropy, mixed_softmax, sample_categorical, Bandit};
use crate::error::{Error, Result};
use crate::nn::{self, checkpoint::write_model, clip_global_norm, Layout, Model, NetSpec, RmsProp};
use crate::rng::{self, derive_seed, Rng};
use crate::scaler::RewardScaler;
use crate::signals::{self, raw_reward, Extra, ExtraSource, GainContext, GainKind, NetLoss};
use crate::signals::{TrainingMode, ViSnapshots};
use crate::tasks::{Curriculum, Stream};
use crate::variational::VariationalState;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const ABORT_CHECKPOINT_FILE: &str = "abort.ckpt";
pub const MODEL_FILE: &str = "model.bin";
pub const SUMMARY_FILE: &str = "summary.json";

// Seed-derivation tags, one per independent random stream.
pub(super) const SEED_INIT: u64 = 1;
pub(super) const SEED_SCHEDULE: u64 = 2;
pub(super) const SEED_NOISE: u64 = 3;
pub(super) const SEED_SCALER: u64 = 4;
pub(super) const SEED_DATA: u64 = 5;
pub(super) const SEED_EVAL_NOISE: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Params {
    Point(Vec<f64>),
    Variational(VariationalState),
}

impl Params {
    /// Flat vector the optimiser steps on.
    pub fn to_vector(&self) -> Vec<f64> {
        match self {
            Params::Point(t) => t.clone(),
            Params::Variational(s) => s.to_vector(),
        }
    }

    /// Deterministic network weights: θ, or μ_φ.
    pub fn mean_weights(&self) -> &[f64] {
        match self {
            Params::Point(t) => t,
            Params::Variational(s) => &s.mu_phi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    TotalSteps,
    MaxInputSteps,
    BelowThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rounds: u64,
    pub cum_input_steps: u64,
    pub stop_reason: StopReason,
    pub final_eval: EvalReport,
    /// First evaluation point with target per-output loss below `stop_below`.
    pub threshold_reached_at: Option<u64>,
}

struct RunLogs {
    train: CsvLog,
    eval: CsvLog,
    timing: CsvLog,
    clock: Instant,
}

impl RunLogs {
    fn flush(&mut self) -> Result<()> {
        self.train.flush()?;
        self.eval.flush()?;
        self.timing.flush()
    }
}

/// All state of one run.
pub struct Trainer {
    pub(super) config: RunConfig,
    pub(super) curriculum: Curriculum,
    pub(super) spec: NetSpec,
    pub(super) layout: Layout,
    pub(super) params: Params,
    pub(super) opt: RmsProp,
    pub(super) bandit: Option<Bandit>,
    pub(super) scaler: RewardScaler,
    pub(super) sched_rng: Rng,
    pub(super) noise_rng: Rng,
    pub(super) round: u64,
    pub(super) cum_input_steps: u64,
    pub(super) evals_done: u64,
    pub(super) last_eval: Option<EvalReport>,
    pub(super) threshold_reached_at: Option<u64>,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("gain", &self.config.gain)
            .field("round", &self.round)
            .field("cum_input_steps", &self.cum_input_steps)
            .finish()
    }
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let suite = config.curriculum.build(seed)?;
        let curriculum =
            Curriculum::new(suite, config.batch_size, derive_seed(seed, &[SEED_DATA]))?;
        let n = curriculum.num_tasks();
        let spec = curriculum.suite().net_spec(config.hidden_sizes.clone());
        let model = Model::init(spec.clone(), &mut rng::stream(seed, &[SEED_INIT]))?;
        let layout = model.layout().clone();
        let params = match config.mode {
            TrainingMode::VI => {
                let samples = config.variational.samples.unwrap_or(n as f64 * 1e4);
                Params::Variational(VariationalState::from_model(
                    &model,
                    &config.variational,
                    samples,
                )?)
            }
            TrainingMode::ML | TrainingMode::L2 => Params::Point(model.clone_params()),
        };
        let opt = RmsProp::new(config.optimizer.clone(), params.to_vector().len());
        let bandit = if config.gain.is_baseline() {
            None
        } else {
            let mut b = config.bandit.clone();
            b.n_arms = n;
            Some(Bandit::new(b)?)
        };
        let scaler = RewardScaler::new(config.scaler.clone(), derive_seed(seed, &[SEED_SCALER]))?;
        Ok(Self {
            curriculum,
            spec,
            layout,
            params,
            opt,
            bandit,
            scaler,
            sched_rng: rng::stream(seed, &[SEED_SCHEDULE]),
            noise_rng: rng::stream(seed, &[SEED_NOISE]),
            round: 0,
            cum_input_steps: 0,
            evals_done: 0,
            last_eval: None,
            threshold_reached_at: None,
            config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn curriculum(&self) -> &Curriculum {
        &self.curriculum
    }

    pub fn net_spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn bandit(&self) -> Option<&Bandit> {
        self.bandit.as_ref()
    }

    pub fn scaler(&self) -> &RewardScaler {
        &self.scaler
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn cum_input_steps(&self) -> u64 {
        self.cum_input_steps
    }

    /// Syllabus for the next round.
    pub fn current_policy(&self) -> Vec<f64> {
        let n = self.curriculum.num_tasks();
        match (self.config.gain, &self.bandit) {
            (GainKind::TargetOnly, _) => {
                let mut p = vec![0.0; n];
                p[n - 1] = 1.0;
                p
            }
            (_, Some(b)) => mixed_softmax(&b.state().weights, b.config().epsilon),
            (_, None) => vec![1.0 / n as f64; n],
        }
    }

    /// One round of the curriculum loop.
    pub fn step(&mut self) -> Result<TrainRow> {
        let n = self.curriculum.num_tasks();
        let target = self.curriculum.target();
        let gain = self.config.gain;
        let policy = match &mut self.bandit {
            Some(b) => b.policy().to_vec(),
            None => self.current_policy(),
        };
        let task = match gain {
            GainKind::TargetOnly => target,
            _ => sample_categorical(&policy, &mut self.sched_rng),
        };
        let x = self.curriculum.draw(Stream::Train, task)?;

        let extra = match gain.extra_source() {
            None => None,
            Some(source) => {
                let k = match source {
                    ExtraSource::SameTask => task,
                    ExtraSource::Target => target,
                    ExtraSource::UniformTask => self.sched_rng.gen_range(0..n),
                };
                Some((self.curriculum.draw(Stream::Extra, k)?, k, source))
            }
        };

        let f = NetLoss {
            spec: &self.spec,
            layout: &self.layout,
        };
        let clip = self.config.optimizer.clip_norm;
        let mode = self.config.mode;
        let (loss_on_x, nu) = match &mut self.params {
            Params::Point(theta) => {
                let (loss, grad) = nn::loss_and_grad_with(&self.spec, &self.layout, theta, &x)?;
                let mut step_grad = grad.clone();
                if mode == TrainingMode::L2 {
                    let a = self.config.l2_alpha;
                    step_grad.iter_mut().zip(theta.iter()).for_each(|(g, t)| *g += a * t);
                }
                if let Some(c) = clip {
                    clip_global_norm(&mut step_grad, c);
                }
                let before = theta.clone();
                self.opt.step(theta, &step_grad)?;
                let nu = if gain.is_baseline() {
                    None
                } else {
                    let mut ctx = GainContext::new(mode, &x, &before, theta);
                    ctx.x_task = task;
                    ctx.target_task = target;
                    ctx.loss_before = Some(loss);
                    ctx.grad = Some(&grad);
                    ctx.extra = extra.as_ref().map(|(b, k, s)| Extra {
                        sample: b,
                        task: *k,
                        source: *s,
                    });
                    Some(signals::gain(gain, &f, &ctx)?)
                };
                (loss, nu)
            }
            Params::Variational(state) => {
                let (vi, _noise) =
                    state.vi_loss_and_grads(&self.spec, &self.layout, &x, &mut self.noise_rng)?;
                let mut step_grad = vi.grads.flatten();
                if let Some(c) = clip {
                    clip_global_norm(&mut step_grad, c);
                }
                let mut v = state.to_vector();
                self.opt.step(&mut v, &step_grad)?;
                let before = state.clone();
                state.set_vector(&v)?;
                let nu = if gain.is_baseline() {
                    None
                } else {
                    let mut ctx = GainContext::new(mode, &x, &before.mu_phi, &state.mu_phi);
                    ctx.x_task = task;
                    ctx.target_task = target;
                    ctx.vi = Some(ViSnapshots {
                        before: &before,
                        after: state,
                        data_grad_mu: &vi.data_mu_phi,
                        data_grad_rho: &vi.data_rho_phi,
                    });
                    ctx.extra = extra.as_ref().map(|(b, k, s)| Extra {
                        sample: b,
                        task: *k,
                        source: *s,
                    });
                    Some(signals::gain(gain, &f, &ctx)?)
                };
                (vi.data_loss, nu)
            }
        };
        if !loss_on_x.is_finite() {
            return Err(Error::NonFinite(format!("training loss {loss_on_x} at round {}", self.round + 1)));
        }

        // ν → r̂ = ν/τ → scale against the history so far → record r̂ → bandit.
        let tau = x.tau();
        let (raw, scaled) = match nu {
            Some(nu) => {
                let raw = raw_reward(nu, tau)?;
                let scaled = self.scaler.scale(raw);
                self.scaler.observe(raw)?;
                if let Some(b) = &mut self.bandit {
                    b.update(task, scaled)?;
                }
                (Some(raw), Some(scaled))
            }
            None => (None, None),
        };

        self.round += 1;
        self.cum_input_steps += tau as u64;
        Ok(TrainRow {
            round: self.round,
            cum_input_steps: self.cum_input_steps,
            task,
            nu,
            raw_reward: raw,
            scaled_reward: scaled,
            policy_entropy: entropy(&policy),
            policy,
            loss_on_x,
        })
    }

    /// Evaluation point on fresh held-out batches.
    pub fn evaluate(&mut self) -> Result<EvalReport> {
        let noise_seed = derive_seed(self.config.seed, &[SEED_EVAL_NOISE, self.evals_done]);
        let params = match &self.params {
            Params::Point(t) => EvalParams::Point(t),
            Params::Variational(s) => EvalParams::Variational(s),
        };
        let measured = eval::evaluate(
            &self.spec,
            &self.layout,
            params,
            &mut self.curriculum,
            self.config.eval_scope,
            self.config.eval_batches,
            noise_seed,
        )?;
        let complexity = match &self.params {
            Params::Variational(s) => Some(s.kl()),
            Params::Point(_) => None,
        };
        self.evals_done += 1;
        let report = eval::report(
            self.round,
            self.cum_input_steps,
            measured,
            self.current_policy(),
            complexity,
        );
        if let Some(th) = self.config.stop_below {
            if report.l_tt < th && self.threshold_reached_at.is_none() {
                self.threshold_reached_at = Some(self.cum_input_steps);
            }
        }
        self.last_eval = Some(report.clone());
        Ok(report)
    }

    fn stop_reason(&self) -> Option<StopReason> {
        if self.threshold_reached_at.is_some() {
            return Some(StopReason::BelowThreshold);
        }
        if let Some(m) = self.config.max_input_steps {
            if self.cum_input_steps >= m {
                return Some(StopReason::MaxInputSteps);
            }
        }
        if self.round >= self.config.total_steps {
            return Some(StopReason::TotalSteps);
        }
        None
    }

    /// Model holding the deterministic weights (θ, or μ_φ in VI mode).
    pub fn mean_model(&self) -> Result<Model> {
        Model::from_params(self.spec.clone(), self.params.mean_weights().to_vec())
    }

    fn write_eval(&mut self, logs: &mut RunLogs) -> Result<()> {
        let report = self.evaluate()?;
        logs.eval.write(&report.to_row().to_record())?;
        logs.timing.write(&[
            self.round.to_string(),
            self.cum_input_steps.to_string(),
            format!("{:.3}", logs.clock.elapsed().as_secs_f64()),
        ])?;
        Ok(())
    }

    fn drive(&mut self, dir: &Path, logs: &mut RunLogs) -> Result<()> {
        if self.round == 0 {
            self.write_eval(logs)?;
        }
        while self.stop_reason().is_none() {
            let row = self.step()?;
            if row.round % self.config.log_every == 0 {
                logs.train.write(&row.to_record())?;
            }
            let at_cap = self
                .config
                .max_input_steps
                .is_some_and(|m| self.cum_input_steps >= m);
            if self.round % self.config.eval_every == 0
                || self.round >= self.config.total_steps
                || at_cap
            {
                self.write_eval(logs)?;
                logs.flush()?;
                self.save_checkpoint(&dir.join(CHECKPOINT_FILE))?;
                log::info!(
                    "round {} steps {} L_TT {:.4}",
                    self.round,
                    self.cum_input_steps,
                    self.last_eval.as_ref().map(|r| r.l_tt).unwrap_or(f64::NAN)
                );
            }
        }
        Ok(())
    }

    /// Runs to completion, writing logs, checkpoints and a summary into
    /// `config.out_dir`. Picks up where a loaded checkpoint left off.
    pub fn run_to_end(&mut self) -> Result<RunSummary> {
        let dir = self.config.out_dir.clone();
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(CONFIG_FILE), self.config.to_json())?;
        for name in [logs::TRAIN_LOG, logs::EVAL_LOG, logs::TIMING_LOG] {
            let path = dir.join(name);
            if self.round == 0 {
                if path.exists() {
                    fs::remove_file(&path)?;
                }
            } else {
                logs::truncate_after_round(&path, self.round)?;
            }
        }
        let n = self.curriculum.num_tasks();
        let train_log = CsvLog::open(&dir.join(logs::TRAIN_LOG), &logs::train_header(n))?;
        let eval_log = CsvLog::open(&dir.join(logs::EVAL_LOG), &logs::eval_header(n))?;
        let timing_header: Vec<String> = ["round", "cum_input_steps", "wall_seconds"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let timing_log = CsvLog::open(&dir.join(logs::TIMING_LOG), &timing_header)?;
        let mut logs = RunLogs {
            train: train_log,
            eval: eval_log,
            timing: timing_log,
            clock: Instant::now(),
        };
        if let Err(e) = self.drive(&dir, &mut logs) {
            if e.is_numerical() {
                logs.flush()?;
                if let Err(ce) = self.save_checkpoint(&dir.join(ABORT_CHECKPOINT_FILE)) {
                    log::error!("writing abort checkpoint failed: {ce}");
                }
            }
            return Err(e);
        }
        logs.flush()?;
        let mut model_file = fs::File::create(dir.join(MODEL_FILE))?;
        write_model(&self.mean_model()?, &mut model_file)?;
        let summary = RunSummary {
            rounds: self.round,
            cum_input_steps: self.cum_input_steps,
            stop_reason: self.stop_reason().expect("loop ended on a stop condition"),
            final_eval: self.last_eval.clone().expect("evaluated at least once"),
            threshold_reached_at: self.threshold_reached_at,
        };
        fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
        Ok(summary)
    }
}

/// Runs `config` from scratch.
pub fn run(config: RunConfig) -> Result<RunSummary> {
    Trainer::new(config)?.run_to_end()
}

/// Continues the run whose checkpoint lives in `dir`.
pub fn resume(dir: &Path) -> Result<RunSummary> {
    resume_with(dir, |_| {})
}

/// [`resume`] after `adjust` edits the stored config. Only the stopping
/// fields (`total_steps`, `max_input_steps`, `stop_below`) and logging
/// cadence can change without breaking the run's continuity.
pub fn resume_with(dir: &Path, adjust: impl FnOnce(&mut RunConfig)) -> Result<RunSummary> {
    let mut t = Trainer::load_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    adjust(&mut t.config);
    t.config.out_dir = PathBuf::from(dir);
    t.config.validate()?;
    t.run_to_end()
}
