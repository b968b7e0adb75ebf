//! Central finite-difference checks of the network and variational
//! gradients, shared by the test suites and the `gradcheck` command.
//!
//! Relative error is `|a - n| / max(|a|, |n|, FLOOR)`, so coordinates whose
//! gradients are both below `FLOOR` are compared absolutely.

use std::ops::Range;

use rand::Rng as _;

use crate::error::Result;
use crate::nn::{self, Batch, Head, Layout, Model, NetSpec};
use crate::rng;
use crate::variational::{softplus_inv, VariationalState};

pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn worst(&self) -> Option<Check> {
        self.checks
            .iter()
            .copied()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn max_rel_err(&self) -> f64 {
        self.worst().map_or(0.0, |c| c.rel_err)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.rel_err < TOLERANCE)
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn central(f: &mut dyn FnMut(&[f64]) -> Result<f64>, x: &[f64], i: usize) -> Result<f64> {
    let mut p = x.to_vec();
    p[i] += STEP;
    let up = f(&p)?;
    p[i] = x[i] - STEP;
    let down = f(&p)?;
    Ok((up - down) / (2.0 * STEP))
}

fn check_all(
    x: &[f64],
    grad: &[f64],
    coords: &[usize],
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
) -> Result<Report> {
    let mut checks = Vec::with_capacity(coords.len());
    for &i in coords {
        let numeric = central(f, x, i)?;
        checks.push(Check {
            index: i,
            analytic: grad[i],
            numeric,
            rel_err: rel_err(grad[i], numeric),
        });
    }
    Ok(Report { checks })
}

/// Backpropagated gradient of the summed loss against finite differences.
pub fn check_network(model: &Model, batch: &Batch, coords: &[usize]) -> Result<Report> {
    let (_, grad) = model.loss_and_grad(batch)?;
    let (spec, layout) = (model.spec(), model.layout());
    check_all(model.params(), &grad, coords, &mut |p| {
        nn::loss_with(spec, layout, p, batch)
    })
}

/// Gradients of the single-sample VI loss, with the noise held fixed,
/// over the flattened `[μ_φ, ρ_φ, μ_ψ, ρ_ψ]` vector.
pub fn check_variational(
    state: &VariationalState,
    spec: &NetSpec,
    batch: &Batch,
    noise: &[f64],
    coords: &[usize],
) -> Result<Report> {
    let layout = Layout::new(spec);
    let step = state.loss_and_grads(spec, &layout, batch, noise)?;
    let grad = step.grads.flatten();
    let mut probe = state.clone();
    check_all(&state.to_vector(), &grad, coords, &mut |v| {
        probe.set_vector(v)?;
        Ok(probe.loss_and_grads(spec, &layout, batch, noise)?.loss)
    })
}

/// Block ranges of the flattened variational vector.
pub fn variational_blocks(state: &VariationalState) -> [Range<usize>; 4] {
    let n = state.mu_phi.len();
    let g = state.mu_psi.len();
    [0..n, n..2 * n, 2 * n..2 * n + g, 2 * n + g..2 * n + 2 * g]
}

/// Random batch with inputs in [-1, 1], random targets and ~20% masked steps.
pub fn random_batch(spec: &NetSpec, lengths: Vec<usize>, seed: u64) -> Batch {
    let mut r = rng::stream(seed, &[0xba7c]);
    let mut batch = Batch::zeros(0, lengths.clone(), spec.input_size, spec.output_size);
    for (b, &len) in lengths.iter().enumerate() {
        for t in 0..len {
            for x in batch.input_mut(t, b) {
                *x = r.gen_range(-1.0..1.0);
            }
            match spec.head {
                Head::Softmax => {
                    let k = r.gen_range(0..spec.output_size);
                    batch.target_mut(t, b)[k] = 1.0;
                }
                Head::Sigmoid => {
                    for y in batch.target_mut(t, b) {
                        *y = if r.gen::<bool>() { 1.0 } else { 0.0 };
                    }
                }
            }
            batch.set_mask(t, b, if r.gen::<f64>() < 0.8 { 1.0 } else { 0.0 });
        }
    }
    batch
}

/// A random small network, parameters uniform in ±0.5, and a random batch.
pub fn random_problem(seed: u64) -> Result<(Model, Batch)> {
    let mut r = rng::stream(seed, &[0x9c4e]);
    let layers = r.gen_range(1..=2);
    let hidden = (0..layers).map(|_| r.gen_range(2..=10)).collect();
    let head = if r.gen::<bool>() { Head::Softmax } else { Head::Sigmoid };
    let spec = NetSpec::new(r.gen_range(1..=5), hidden, r.gen_range(2..=5), head);
    let mut model = Model::zeros(spec.clone())?;
    for x in model.params_mut() {
        *x = r.gen_range(-0.5..0.5);
    }
    let lengths = (0..r.gen_range(1..=3)).map(|_| r.gen_range(1..=6)).collect();
    let batch = random_batch(&spec, lengths, seed);
    Ok((model, batch))
}

/// Posterior around `model` with σ_φ in [0.05, 0.4], per-layer priors and a
/// small sample count so the complexity term matters.
pub fn random_posterior(model: &Model, seed: u64) -> VariationalState {
    let mut r = rng::stream(seed, &[0x7a11]);
    let groups = model.layout().groups();
    let n = model.num_params();
    VariationalState {
        mu_phi: model.params().to_vec(),
        rho_phi: (0..n).map(|_| softplus_inv(r.gen_range(0.05..0.4))).collect(),
        mu_psi: (0..groups.len()).map(|_| r.gen_range(-0.2..0.2)).collect(),
        rho_psi: (0..groups.len())
            .map(|_| softplus_inv(r.gen_range(0.2..1.0)))
            .collect(),
        groups,
        samples: 20.0,
    }
}

/// `count` coordinates drawn uniformly from `range`.
pub fn pick(range: Range<usize>, count: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::stream(seed, &[0xc0de]);
    (0..count).map(|_| r.gen_range(range.clone())).collect()
}
