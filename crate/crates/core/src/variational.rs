//! Diagonal-Gaussian posterior over network weights with an adaptive
//! Gaussian prior.
//!
//! Posterior `P_φ = N(μ_φ, σ_φ²)` per weight, prior `Q_ψ = N(μ_ψ, σ_ψ²)`
//! shared across a group of weights (the whole network, or one group per
//! layer). Scales are parameterised through softplus, `σ = ln(1 + e^ρ)`.
//!
//! The training loss for one sample is `KL(P_φ ‖ Q_ψ) / S + L(x, θ)` with
//! `θ = μ_φ + σ_φ ⊙ ε`, `ε ~ N(0, I)`, a single reparameterised draw.

use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Batch, Layout, Model, NetSpec, INIT_SCALE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorGranularity {
    /// One (μ_ψ, σ_ψ) pair for every weight.
    Shared,
    /// One pair per LSTM layer and one for the output layer.
    PerLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationalConfig {
    /// Total sample count S; `None` means tasks x 10^4.
    pub samples: Option<f64>,
    pub prior: PriorGranularity,
    /// Initial σ_φ as a fraction of the weight-init scale.
    pub posterior_sigma_fraction: f64,
    pub prior_sigma: f64,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        Self {
            samples: None,
            prior: PriorGranularity::Shared,
            posterior_sigma_fraction: 0.01,
            prior_sigma: 0.1,
        }
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of softplus for `y > 0`.
#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Closed-form `KL(N(mu_p, sd_p²) ‖ N(mu_q, sd_q²))`.
#[inline]
pub fn gaussian_kl(mu_p: f64, sd_p: f64, mu_q: f64, sd_q: f64) -> f64 {
    let d = mu_p - mu_q;
    (d * d + sd_p * sd_p - sd_q * sd_q) / (2.0 * sd_q * sd_q) + (sd_q / sd_p).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub mu_phi: Vec<f64>,
    pub rho_phi: Vec<f64>,
    pub mu_psi: Vec<f64>,
    pub rho_psi: Vec<f64>,
    /// Parameter ranges sharing each prior entry.
    pub groups: Vec<Range<usize>>,
    /// Sample count S in the complexity weight 1/S.
    pub samples: f64,
}

/// Gradient blocks matching the four parameter vectors of a
/// [`VariationalState`].
#[derive(Debug, Clone, PartialEq)]
pub struct VarGrads {
    pub mu_phi: Vec<f64>,
    pub rho_phi: Vec<f64>,
    pub mu_psi: Vec<f64>,
    pub rho_psi: Vec<f64>,
}

impl VarGrads {
    pub fn flatten(&self) -> Vec<f64> {
        [&self.mu_phi[..], &self.rho_phi, &self.mu_psi, &self.rho_psi].concat()
    }
}

#[derive(Debug, Clone)]
pub struct ViStep {
    /// `KL / S + L(x, θ)`.
    pub loss: f64,
    pub data_loss: f64,
    pub kl: f64,
    /// Gradient of `loss` for all four blocks.
    pub grads: VarGrads,
    /// Data-term gradient w.r.t. μ_φ and ρ_φ only.
    pub data_mu_phi: Vec<f64>,
    pub data_rho_phi: Vec<f64>,
}

impl VariationalState {
    /// Posterior centred on `model`'s parameters with σ_φ a small fraction of
    /// the init scale; prior N(0, prior_sigma²).
    pub fn from_model(model: &Model, config: &VariationalConfig, samples: f64) -> Result<Self> {
        if !(samples > 0.0) {
            return Err(Error::Config(format!("sample count S must be > 0, got {samples}")));
        }
        let n = model.num_params();
        let groups = match config.prior {
            PriorGranularity::Shared => vec![0..n],
            PriorGranularity::PerLayer => model.layout().groups(),
        };
        let rho0 = softplus_inv(config.posterior_sigma_fraction * INIT_SCALE);
        Ok(Self {
            mu_phi: model.clone_params(),
            rho_phi: vec![rho0; n],
            mu_psi: vec![0.0; groups.len()],
            rho_psi: vec![softplus_inv(config.prior_sigma); groups.len()],
            groups,
            samples,
        })
    }

    pub fn num_weights(&self) -> usize {
        self.mu_phi.len()
    }

    /// Flat `[μ_φ, ρ_φ, μ_ψ, ρ_ψ]`, the optimiser's view of the state.
    pub fn to_vector(&self) -> Vec<f64> {
        [&self.mu_phi[..], &self.rho_phi, &self.mu_psi, &self.rho_psi].concat()
    }

    pub fn set_vector(&mut self, v: &[f64]) -> Result<()> {
        let (n, g) = (self.mu_phi.len(), self.mu_psi.len());
        if v.len() != 2 * n + 2 * g {
            return Err(Error::Shape(format!(
                "variational vector of length {} for {n} weights and {g} prior groups",
                v.len()
            )));
        }
        self.mu_phi.copy_from_slice(&v[..n]);
        self.rho_phi.copy_from_slice(&v[n..2 * n]);
        self.mu_psi.copy_from_slice(&v[2 * n..2 * n + g]);
        self.rho_psi.copy_from_slice(&v[2 * n + g..]);
        Ok(())
    }

    fn for_each_weight(&self, mut f: impl FnMut(usize, usize)) {
        for (gi, range) in self.groups.iter().enumerate() {
            for i in range.clone() {
                f(gi, i);
            }
        }
    }

    pub fn kl(&self) -> f64 {
        let mut total = 0.0;
        self.for_each_weight(|g, i| {
            total += gaussian_kl(
                self.mu_phi[i],
                softplus(self.rho_phi[i]),
                self.mu_psi[g],
                softplus(self.rho_psi[g]),
            );
        });
        total
    }

    /// Analytic partials of [`Self::kl`].
    pub fn kl_grads(&self) -> VarGrads {
        let n = self.mu_phi.len();
        let g = self.mu_psi.len();
        let mut out = VarGrads {
            mu_phi: vec![0.0; n],
            rho_phi: vec![0.0; n],
            mu_psi: vec![0.0; g],
            rho_psi: vec![0.0; g],
        };
        let sd_q: Vec<f64> = self.rho_psi.iter().map(|&r| softplus(r)).collect();
        self.for_each_weight(|gi, i| {
            let sq = sd_q[gi];
            let sp = softplus(self.rho_phi[i]);
            let d = self.mu_phi[i] - self.mu_psi[gi];
            let d_mu = d / (sq * sq);
            out.mu_phi[i] = d_mu;
            out.mu_psi[gi] -= d_mu;
            out.rho_phi[i] = (sp / (sq * sq) - 1.0 / sp) * sigmoid(self.rho_phi[i]);
            out.rho_psi[gi] += 1.0 / sq - (d * d + sp * sp) / (sq * sq * sq);
        });
        for (gr, &r) in out.rho_psi.iter_mut().zip(&self.rho_psi) {
            *gr *= sigmoid(r);
        }
        out
    }

    pub fn draw_noise<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.mu_phi.len())
            .map(|_| StandardNormal.sample(rng))
            .collect()
    }

    /// `θ = μ_φ + softplus(ρ_φ) ⊙ noise`.
    pub fn weights_from_noise(&self, noise: &[f64]) -> Vec<f64> {
        self.mu_phi
            .iter()
            .zip(&self.rho_phi)
            .zip(noise)
            .map(|((m, r), e)| m + softplus(*r) * e)
            .collect()
    }

    /// A reparameterised weight sample and the noise that produced it.
    pub fn sample_weights<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let noise = self.draw_noise(rng);
        (self.weights_from_noise(&noise), noise)
    }

    /// Single-sample VI loss and gradients for fixed `noise`.
    pub fn loss_and_grads(
        &self,
        spec: &NetSpec,
        layout: &Layout,
        batch: &Batch,
        noise: &[f64],
    ) -> Result<ViStep> {
        if noise.len() != self.mu_phi.len() || layout.total != self.mu_phi.len() {
            return Err(Error::Shape("noise/posterior/net sizes disagree".into()));
        }
        let theta = self.weights_from_noise(noise);
        let (data_loss, g) = nn::loss_and_grad_with(spec, layout, &theta, batch)?;
        Ok(self.combine(data_loss, g, noise))
    }

    /// VI loss and gradients from the data loss and its gradient `g` at the
    /// weights `weights_from_noise(noise)`. Works for any differentiable
    /// data term.
    pub fn combine(&self, data_loss: f64, g: Vec<f64>, noise: &[f64]) -> ViStep {
        let kl = self.kl();
        let mut grads = self.kl_grads();
        let inv_s = 1.0 / self.samples;
        grads.mu_phi.iter_mut().for_each(|x| *x *= inv_s);
        grads.rho_phi.iter_mut().for_each(|x| *x *= inv_s);
        grads.mu_psi.iter_mut().for_each(|x| *x *= inv_s);
        grads.rho_psi.iter_mut().for_each(|x| *x *= inv_s);

        let data_rho_phi: Vec<f64> = g
            .iter()
            .zip(noise)
            .zip(&self.rho_phi)
            .map(|((gi, e), r)| gi * e * sigmoid(*r))
            .collect();
        for i in 0..g.len() {
            grads.mu_phi[i] += g[i];
            grads.rho_phi[i] += data_rho_phi[i];
        }
        ViStep {
            loss: kl * inv_s + data_loss,
            data_loss,
            kl,
            grads,
            data_mu_phi: g,
            data_rho_phi,
        }
    }

    /// [`Self::loss_and_grads`] with noise drawn from `rng`; also returns the
    /// noise for reuse.
    pub fn vi_loss_and_grads<R: rand::Rng + ?Sized>(
        &self,
        spec: &NetSpec,
        layout: &Layout,
        batch: &Batch,
        rng: &mut R,
    ) -> Result<(ViStep, Vec<f64>)> {
        let noise = self.draw_noise(rng);
        let step = self.loss_and_grads(spec, layout, batch, &noise)?;
        Ok((step, noise))
    }
}
