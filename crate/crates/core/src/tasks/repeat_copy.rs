//! Repeat copy: read `l` random bit vectors, then write them out `r` times
//! followed by an end marker.
//!
//! Channel layout for bit width `W`:
//!
//! | input channel | meaning                              |
//! |---------------|--------------------------------------|
//! | 0..W-1        | payload bits                         |
//! | W             | start marker                         |
//! | W+1           | repeat count, `r / max_repeats`      |
//!
//! | target channel | meaning    |
//! |----------------|------------|
//! | 0..W-1         | payload    |
//! | W              | end marker |
//!
//! Timesteps: `0` start marker, `1..=l` payload, `l+1` repeat count, then
//! `l*r + 1` blank input steps carrying the targets (the payload `r` times,
//! then the end marker). So `tau = l + 2 + l*r + 1` and only the final
//! `l*r + 1` steps are unmasked.

use serde::{Deserialize, Serialize};

use super::{DrawKey, TaskSuite};
use crate::error::{Error, Result};
use crate::nn::{Batch, Head};
use crate::rng;

const STREAM_TAG: u64 = 0x5245_5043;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepeatCopySpec {
    pub max_length: usize,
    pub max_repeats: usize,
    pub bit_width: usize,
}

impl Default for RepeatCopySpec {
    fn default() -> Self {
        Self {
            max_length: 6,
            max_repeats: 6,
            bit_width: 3,
        }
    }
}

impl RepeatCopySpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_length == 0 || self.max_repeats == 0 || self.bit_width == 0 {
            return Err(Error::Config(
                "repeat copy max_length, max_repeats and bit_width must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RepeatCopy {
    spec: RepeatCopySpec,
}

impl RepeatCopy {
    pub fn new(spec: RepeatCopySpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &RepeatCopySpec {
        &self.spec
    }

    /// Task index for `(l, r)`, both 1-based; length-major.
    pub fn task_index(&self, l: usize, r: usize) -> Result<usize> {
        self.check(l, r)?;
        Ok((l - 1) * self.spec.max_repeats + (r - 1))
    }

    /// `(l, r)` for a task index.
    pub fn task_params(&self, task: usize) -> Result<(usize, usize)> {
        if task >= self.num_tasks() {
            return Err(Error::TaskOutOfRange {
                task: format!("{task} (grid has {})", self.num_tasks()),
            });
        }
        Ok((task / self.spec.max_repeats + 1, task % self.spec.max_repeats + 1))
    }

    pub fn tau(l: usize, r: usize) -> usize {
        l + 2 + l * r + 1
    }

    fn check(&self, l: usize, r: usize) -> Result<()> {
        if l == 0 || r == 0 || l > self.spec.max_length || r > self.spec.max_repeats {
            return Err(Error::TaskOutOfRange {
                task: format!(
                    "(l={l}, r={r}) in a {}x{} grid",
                    self.spec.max_length, self.spec.max_repeats
                ),
            });
        }
        Ok(())
    }

    /// Batch for task `(l, r)` with random payload bits.
    pub fn sample_lr<R: rand::Rng + ?Sized>(
        &self,
        l: usize,
        r: usize,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Batch> {
        self.check(l, r)?;
        let w = self.spec.bit_width;
        let bits: Vec<Vec<Vec<bool>>> = (0..batch_size)
            .map(|_| (0..l).map(|_| (0..w).map(|_| rng.gen::<bool>()).collect()).collect())
            .collect();
        self.with_bits(l, r, &bits)
    }

    /// Batch for task `(l, r)` from explicit payloads, `bits[b][step][channel]`.
    pub fn with_bits(&self, l: usize, r: usize, bits: &[Vec<Vec<bool>>]) -> Result<Batch> {
        self.check(l, r)?;
        let w = self.spec.bit_width;
        if bits.is_empty()
            || bits
                .iter()
                .any(|seq| seq.len() != l || seq.iter().any(|v| v.len() != w))
        {
            return Err(Error::Shape(format!("payload must be B x {l} x {w} bits")));
        }
        let tau = Self::tau(l, r);
        let task = self.task_index(l, r)?;
        let mut batch = Batch::zeros(task, vec![tau; bits.len()], w + 2, w + 1);
        let out_start = l + 2;
        for (b, seq) in bits.iter().enumerate() {
            batch.input_mut(0, b)[w] = 1.0;
            for (i, v) in seq.iter().enumerate() {
                let x = batch.input_mut(1 + i, b);
                for (c, &bit) in v.iter().enumerate() {
                    x[c] = if bit { 1.0 } else { 0.0 };
                }
            }
            batch.input_mut(l + 1, b)[w + 1] = r as f64 / self.spec.max_repeats as f64;
            for rep in 0..r {
                for (i, v) in seq.iter().enumerate() {
                    let y = batch.target_mut(out_start + rep * l + i, b);
                    for (c, &bit) in v.iter().enumerate() {
                        y[c] = if bit { 1.0 } else { 0.0 };
                    }
                }
            }
            batch.target_mut(tau - 1, b)[w] = 1.0;
            for t in out_start..tau {
                batch.set_mask(t, b, 1.0);
            }
        }
        Ok(batch)
    }
}

impl TaskSuite for RepeatCopy {
    fn num_tasks(&self) -> usize {
        self.spec.max_length * self.spec.max_repeats
    }

    fn task_name(&self, task: usize) -> String {
        match self.task_params(task) {
            Ok((l, r)) => format!("l{l}_r{r}"),
            Err(_) => format!("task{task}"),
        }
    }

    fn input_size(&self) -> usize {
        self.spec.bit_width + 2
    }

    fn output_size(&self) -> usize {
        self.spec.bit_width + 1
    }

    fn head(&self) -> Head {
        Head::Sigmoid
    }

    fn sample(&self, key: DrawKey, batch_size: usize, seed: u64) -> Result<Batch> {
        let (l, r) = self.task_params(key.task)?;
        let mut rng = rng::stream(
            seed,
            &[STREAM_TAG, key.stream.tag(), key.task as u64, key.index],
        );
        self.sample_lr(l, r, batch_size, &mut rng)
    }
}
