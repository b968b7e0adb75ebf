use serde::{Deserialize, Serialize};

use super::config::EvalScope;
use super::logs::EvalRow;
use crate::bandit::entropy;
use crate::error::Result;
use crate::nn::{self, Layout, NetSpec};
use crate::rng;
use crate::tasks::{Curriculum, Stream};
use crate::variational::VariationalState;

/// Parameters under evaluation.
#[derive(Debug, Clone, Copy)]
pub enum EvalParams<'a> {
    Point(&'a [f64]),
    /// One posterior sample per evaluation batch.
    Variational(&'a VariationalState),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskLoss {
    /// Monte-Carlo estimate of L_k: mean summed loss per batch.
    pub batch_loss: f64,
    /// Summed loss over all unmasked target steps divided by their count.
    pub per_output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub round: u64,
    pub cum_input_steps: u64,
    /// `None` for tasks outside the evaluation scope.
    pub tasks: Vec<Option<TaskLoss>>,
    /// Mean per-output loss over all tasks; `None` unless all were measured.
    pub l_mt: Option<f64>,
    /// Per-output loss of the target task.
    pub l_tt: f64,
    pub policy: Vec<f64>,
    pub policy_entropy: f64,
    /// KL(P_φ ‖ Q_ψ) in VI mode, i.e. S times the per-sample weight 1/S
    /// times the KL.
    pub complexity: Option<f64>,
}

impl EvalReport {
    pub fn to_row(&self) -> EvalRow {
        EvalRow {
            round: self.round,
            cum_input_steps: self.cum_input_steps,
            losses: self.tasks.iter().map(|t| t.map(|t| t.per_output)).collect(),
            l_mt: self.l_mt,
            l_tt: self.l_tt,
            complexity: self.complexity,
        }
    }
}

/// Losses on fresh evaluation-stream batches. Nothing here reaches the
/// optimiser or the reward scaler.
pub fn evaluate(
    spec: &NetSpec,
    layout: &Layout,
    params: EvalParams<'_>,
    curriculum: &mut Curriculum,
    scope: EvalScope,
    eval_batches: usize,
    noise_seed: u64,
) -> Result<(Vec<Option<TaskLoss>>, Option<f64>, f64)> {
    let n = curriculum.num_tasks();
    let target = curriculum.target();
    let mut tasks = vec![None; n];
    for (k, slot) in tasks.iter_mut().enumerate() {
        if scope == EvalScope::Target && k != target {
            continue;
        }
        let (mut total, mut steps) = (0.0, 0usize);
        for _ in 0..eval_batches {
            let index = curriculum.count(Stream::Eval, k)?;
            let batch = curriculum.draw(Stream::Eval, k)?;
            let loss = match params {
                EvalParams::Point(theta) => nn::loss_with(spec, layout, theta, &batch)?,
                EvalParams::Variational(state) => {
                    let mut r = rng::stream(noise_seed, &[k as u64, index]);
                    let (theta, _) = state.sample_weights(&mut r);
                    nn::loss_with(spec, layout, &theta, &batch)?
                }
            };
            total += loss;
            steps += batch.target_steps();
        }
        *slot = Some(TaskLoss {
            batch_loss: total / eval_batches as f64,
            per_output: total / steps.max(1) as f64,
        });
    }
    let l_mt = if tasks.iter().all(Option::is_some) {
        Some(tasks.iter().map(|t| t.unwrap().per_output).sum::<f64>() / n as f64)
    } else {
        None
    };
    let l_tt = tasks[target].expect("target always evaluated").per_output;
    Ok((tasks, l_mt, l_tt))
}

pub(crate) fn report(
    round: u64,
    cum_input_steps: u64,
    measured: (Vec<Option<TaskLoss>>, Option<f64>, f64),
    policy: Vec<f64>,
    complexity: Option<f64>,
) -> EvalReport {
    let (tasks, l_mt, l_tt) = measured;
    EvalReport {
        round,
        cum_input_steps,
        tasks,
        l_mt,
        l_tt,
        policy_entropy: entropy(&policy),
        policy,
        complexity,
    }
}
