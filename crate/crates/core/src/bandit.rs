//! Exp3 and Exp3.S (Fixed Share) adversarial bandits over curriculum tasks.
//!
//! Arms are 0-based. The bandit keeps its weights in log space; the policy is
//! the ε-mixed softmax of the weights and is cached as `last_policy` so that
//! the importance weight used in [`Bandit::update`] is exactly the
//! probability the arm was sampled with.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights are rebased (shifted by their midpoint) once any magnitude exceeds
/// this. The policy is invariant to the shift.
const REBASE_THRESHOLD: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Exp3,
    #[serde(rename = "Exp3S")]
    Exp3S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BanditConfig {
    pub n_arms: usize,
    /// Step size η.
    pub eta: f64,
    /// Exploration bonus β added to every arm's reward estimate.
    pub beta: f64,
    /// Uniform mixing weight ε.
    pub epsilon: f64,
    pub variant: Variant,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            n_arms: 1,
            eta: 1e-3,
            beta: 0.0,
            epsilon: 0.05,
            variant: Variant::Exp3S,
        }
    }
}

impl BanditConfig {
    pub fn new(n_arms: usize) -> Self {
        Self {
            n_arms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_arms == 0 {
            return Err(Error::Config("bandit needs at least one arm".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Serializable bandit state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub weights: Vec<f64>,
    /// Current round, starting at 1.
    pub t: u64,
    pub last_policy: Vec<f64>,
}

impl BanditState {
    pub fn new(n_arms: usize) -> Self {
        Self {
            weights: vec![0.0; n_arms],
            t: 1,
            last_policy: vec![1.0 / n_arms as f64; n_arms],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandit {
    config: BanditConfig,
    state: BanditState,
}

/// `(1 - ε) softmax(w) + ε / N`.
pub fn mixed_softmax(weights: &[f64], epsilon: f64) -> Vec<f64> {
    let n = weights.len() as f64;
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter()
        .map(|e| (1.0 - epsilon) * e / total + epsilon / n)
        .collect()
}

/// Shannon entropy in nats.
pub fn entropy(policy: &[f64]) -> f64 {
    -policy
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

impl Bandit {
    pub fn new(config: BanditConfig) -> Result<Self> {
        config.validate()?;
        let state = BanditState::new(config.n_arms);
        Ok(Self { config, state })
    }

    pub fn from_state(config: BanditConfig, state: BanditState) -> Result<Self> {
        config.validate()?;
        if state.weights.len() != config.n_arms || state.last_policy.len() != config.n_arms {
            return Err(Error::Shape(format!(
                "bandit state has {} weights, config has {} arms",
                state.weights.len(),
                config.n_arms
            )));
        }
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &BanditConfig {
        &self.config
    }

    pub fn state(&self) -> &BanditState {
        &self.state
    }

    pub fn n_arms(&self) -> usize {
        self.config.n_arms
    }

    /// Compute the sampling distribution for the current round and cache it.
    pub fn policy(&mut self) -> &[f64] {
        self.state.last_policy = mixed_softmax(&self.state.weights, self.config.epsilon);
        &self.state.last_policy
    }

    pub fn last_policy(&self) -> &[f64] {
        &self.state.last_policy
    }

    /// Draw an arm from the cached policy by inverse CDF on one uniform draw.
    pub fn sample_arm<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.state.last_policy, rng)
    }

    /// Feed back the scaled reward of `arm` for the current round. Weights
    /// after the call define the policy of the next round.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        let n = self.config.n_arms;
        if arm >= n {
            return Err(Error::ArmOutOfRange { arm, n_arms: n });
        }
        if !(-1.0..=1.0).contains(&reward) {
            return Err(Error::RewardOutOfRange(reward));
        }
        let eta = self.config.eta;
        let beta = self.config.beta;
        let pi = &self.state.last_policy;
        // w + η r̃ for every arm; r̃ carries β on all arms.
        let shifted: Vec<f64> = (0..n)
            .map(|i| {
                let r = if i == arm { reward } else { 0.0 };
                self.state.weights[i] + eta * (r + beta) / pi[i]
            })
            .collect();

        match self.config.variant {
            Variant::Exp3 => self.state.weights = shifted,
            Variant::Exp3S => {
                let alpha = 1.0 / (self.state.t + 1) as f64;
                self.state.weights = fixed_share(&shifted, alpha);
            }
        }
        self.state.t += 1;
        self.rebase();
        Ok(())
    }

    fn rebase(&mut self) {
        let w = &mut self.state.weights;
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = w.iter().copied().fold(f64::INFINITY, f64::min);
        if max.abs() > REBASE_THRESHOLD || min.abs() > REBASE_THRESHOLD {
            let mid = 0.5 * (max + min);
            w.iter_mut().for_each(|x| *x -= mid);
        }
    }
}

/// Log-space Fixed Share mixing:
/// `w_i = log[(1 - α) e^{z_i} + α/(N-1) Σ_{j≠i} e^{z_j}]`.
///
/// The sum over other arms is built from prefix and suffix sums, so there is
/// no cancellation. With a single arm the sharing term is zero.
pub fn fixed_share(z: &[f64], alpha: f64) -> Vec<f64> {
    let n = z.len();
    if n == 1 {
        return vec![z[0] + (1.0 - alpha).ln()];
    }
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + e[i];
    }
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + e[i];
    }
    let share = alpha / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let others = prefix[i] + suffix[i + 1];
            m + ((1.0 - alpha) * e[i] + share * others).ln()
        })
        .collect()
}

pub fn sample_categorical<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
