//! Stacked LSTM sequence model with softmax or sigmoid output heads.
//!
//! Parameters live in one flat vector. Per LSTM layer the layout is
//! `W (4H x in)`, `U (4H x H)`, `b (4H)`, all row-major, with gate rows
//! ordered input, forget, candidate, output. The output projection
//! `V (out x H_last)` and its bias follow the last layer.

mod batch;
pub mod checkpoint;
mod gemm;
mod lstm;
mod optim;

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::Batch;
pub use lstm::{backward, forward, Cache};
pub use optim::{clip_global_norm, OptConfig, RmsProp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Categorical targets, one-hot per timestep.
    Softmax,
    /// Independent Bernoulli targets per channel.
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_size: usize,
    pub head: Head,
}

impl NetSpec {
    pub fn new(input_size: usize, hidden_sizes: Vec<usize>, output_size: usize, head: Head) -> Self {
        Self {
            input_size,
            hidden_sizes,
            output_size,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 {
            return Err(Error::Config("net input/output sizes must be >= 1".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config(
                "net needs at least one LSTM layer and all widths >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub input: usize,
    pub hidden: usize,
    pub w: usize,
    pub u: usize,
    pub b: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub layers: Vec<LayerLayout>,
    pub out_w: usize,
    pub out_b: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(spec: &NetSpec) -> Self {
        let mut offset = 0;
        let mut input = spec.input_size;
        let mut layers = Vec::with_capacity(spec.hidden_sizes.len());
        for &hidden in &spec.hidden_sizes {
            let w = offset;
            let u = w + 4 * hidden * input;
            let b = u + 4 * hidden * hidden;
            let end = b + 4 * hidden;
            layers.push(LayerLayout {
                input,
                hidden,
                w,
                u,
                b,
                end,
            });
            offset = end;
            input = hidden;
        }
        let out_w = offset;
        let out_b = out_w + spec.output_size * input;
        Self {
            layers,
            out_w,
            out_b,
            total: out_b + spec.output_size,
        }
    }

    /// One contiguous parameter range per LSTM layer, then the output layer.
    pub fn groups(&self) -> Vec<Range<usize>> {
        let mut groups: Vec<Range<usize>> = self
            .layers
            .iter()
            .map(|l| l.w..l.end)
            .collect();
        groups.push(self.out_w..self.total);
        groups
    }

    /// Ranges holding bias terms (LSTM gate biases and output bias).
    pub fn bias_ranges(&self) -> Vec<Range<usize>> {
        let mut r: Vec<Range<usize>> = self.layers.iter().map(|l| l.b..l.end).collect();
        r.push(self.out_b..self.total);
        r
    }
}

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Weight initialisation scale: uniform(-INIT_SCALE, INIT_SCALE).
pub const INIT_SCALE: f64 = 0.1;

/// Network parameters plus their spec.
#[derive(Debug, Clone)]
pub struct Model {
    spec: NetSpec,
    layout: Layout,
    theta: Vec<f64>,
    // Identifies the current parameter values; clones share it.
    generation: u64,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.theta == other.theta
    }
}

impl Model {
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        Ok(Self {
            theta: vec![0.0; layout.total],
            spec,
            layout,
            generation: next_generation(),
        })
    }

    /// Uniform(-0.1, 0.1) weights, zero biases, forget-gate bias 1.
    pub fn init<R: rand::Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        let layout = model.layout.clone();
        for x in model.theta.iter_mut() {
            *x = rng.gen_range(-INIT_SCALE..INIT_SCALE);
        }
        for r in layout.bias_ranges() {
            model.theta[r].iter_mut().for_each(|x| *x = 0.0);
        }
        for l in &layout.layers {
            model.theta[l.b + l.hidden..l.b + 2 * l.hidden]
                .iter_mut()
                .for_each(|x| *x = 1.0);
        }
        Ok(model)
    }

    pub fn from_params(spec: NetSpec, theta: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        model.apply_params(&theta)?;
        Ok(model)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn clone_params(&self) -> Vec<f64> {
        self.theta.clone()
    }

    pub fn apply_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.layout.total,
                theta.len()
            )));
        }
        if let Some(i) = theta.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} is {}", theta[i])));
        }
        self.theta.copy_from_slice(theta);
        self.generation = next_generation();
        Ok(())
    }

    /// Mutable access to the parameters; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation = next_generation();
        &mut self.theta
    }

    pub fn forward(&self, batch: &Batch) -> Result<(Vec<f64>, Cache)> {
        let (losses, mut cache) = forward(&self.spec, &self.layout, &self.theta, batch)?;
        cache.generation = self.generation;
        Ok((losses, cache))
    }

    pub fn backward(&self, batch: &Batch, cache: &Cache) -> Result<Vec<f64>> {
        if cache.generation != self.generation {
            return Err(Error::Shape(
                "stale cache: parameters changed since forward".into(),
            ));
        }
        backward(&self.spec, &self.layout, &self.theta, batch, cache)
    }

    /// Summed loss over the batch.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        Ok(self.forward(batch)?.0.iter().sum())
    }

    /// Summed loss and its gradient.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        let (losses, cache) = self.forward(batch)?;
        let grad = self.backward(batch, &cache)?;
        Ok((losses.iter().sum(), grad))
    }
}

/// Summed batch loss under explicit parameters.
pub fn loss_with(spec: &NetSpec, layout: &Layout, theta: &[f64], batch: &Batch) -> Result<f64> {
    Ok(forward(spec, layout, theta, batch)?.0.iter().sum())
}

/// Summed batch loss and gradient under explicit parameters.
pub fn loss_and_grad_with(
    spec: &NetSpec,
    layout: &Layout,
    theta: &[f64],
    batch: &Batch,
) -> Result<(f64, Vec<f64>)> {
    let (losses, cache) = forward(spec, layout, theta, batch)?;
    let grad = backward(spec, layout, theta, batch, &cache)?;
    Ok((losses.iter().sum(), grad))
}
