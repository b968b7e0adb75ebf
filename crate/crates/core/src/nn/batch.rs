use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training sample: `batch_size` sequences from a single task, padded
/// to a common length and stored time-major (`[t][b][channel]`).
///
/// Padded steps have zero input and zero mask. `mask[t][b]` weights the loss
/// of each step; loss-free steps (burn-in, input phase) carry 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub task_id: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub input_size: usize,
    pub output_size: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub mask: Vec<f64>,
    pub lengths: Vec<usize>,
}

impl Batch {
    pub fn zeros(
        task_id: usize,
        lengths: Vec<usize>,
        input_size: usize,
        output_size: usize,
    ) -> Self {
        let batch_size = lengths.len();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        Self {
            task_id,
            batch_size,
            steps,
            input_size,
            output_size,
            inputs: vec![0.0; steps * batch_size * input_size],
            targets: vec![0.0; steps * batch_size * output_size],
            mask: vec![0.0; steps * batch_size],
            lengths,
        }
    }

    /// Processing time: the longest input sequence.
    pub fn tau(&self) -> usize {
        self.steps
    }

    pub fn input_mut(&mut self, t: usize, b: usize) -> &mut [f64] {
        let at = (t * self.batch_size + b) * self.input_size;
        &mut self.inputs[at..at + self.input_size]
    }

    pub fn target_mut(&mut self, t: usize, b: usize) -> &mut [f64] {
        let at = (t * self.batch_size + b) * self.output_size;
        &mut self.targets[at..at + self.output_size]
    }

    pub fn input(&self, t: usize, b: usize) -> &[f64] {
        let at = (t * self.batch_size + b) * self.input_size;
        &self.inputs[at..at + self.input_size]
    }

    pub fn target(&self, t: usize, b: usize) -> &[f64] {
        let at = (t * self.batch_size + b) * self.output_size;
        &self.targets[at..at + self.output_size]
    }

    pub fn set_mask(&mut self, t: usize, b: usize, w: f64) {
        self.mask[t * self.batch_size + b] = w;
    }

    pub fn mask_at(&self, t: usize, b: usize) -> f64 {
        self.mask[t * self.batch_size + b]
    }

    /// Number of loss-bearing timesteps over the whole batch.
    pub fn target_steps(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.0).count()
    }

    /// Mask out every step; keeps inputs so the forward pass is unchanged.
    pub fn masked_out(mut self) -> Self {
        self.mask.iter_mut().for_each(|m| *m = 0.0);
        self
    }

    /// Concatenate batches along the sequence axis.
    pub fn concat(parts: &[Batch]) -> Result<Batch> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("cannot concatenate zero batches".into()))?;
        let lengths: Vec<usize> = parts.iter().flat_map(|p| p.lengths.clone()).collect();
        let mut out = Batch::zeros(first.task_id, lengths, first.input_size, first.output_size);
        let mut b_out = 0;
        for p in parts {
            if p.input_size != first.input_size || p.output_size != first.output_size {
                return Err(Error::Shape("batches with different channel counts".into()));
            }
            for b in 0..p.batch_size {
                for t in 0..p.steps {
                    out.input_mut(t, b_out).copy_from_slice(p.input(t, b));
                    out.target_mut(t, b_out).copy_from_slice(p.target(t, b));
                    out.set_mask(t, b_out, p.mask_at(t, b));
                }
                b_out += 1;
            }
        }
        Ok(out)
    }

    /// Single-sequence sub-batch.
    pub fn sequence(&self, b: usize) -> Batch {
        let len = self.lengths[b];
        let mut out = Batch::zeros(self.task_id, vec![len], self.input_size, self.output_size);
        for t in 0..len {
            out.input_mut(t, 0).copy_from_slice(self.input(t, b));
            out.target_mut(t, 0).copy_from_slice(self.target(t, b));
            out.set_mask(t, 0, self.mask_at(t, b));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let (t, b) = (self.steps, self.batch_size);
        if b == 0 {
            return Err(Error::Shape("batch has no sequences".into()));
        }
        if self.lengths.len() != b
            || self.inputs.len() != t * b * self.input_size
            || self.targets.len() != t * b * self.output_size
            || self.mask.len() != t * b
        {
            return Err(Error::Shape("batch buffers inconsistent with dims".into()));
        }
        if self.lengths.iter().copied().max() != Some(t) {
            return Err(Error::Shape("steps must equal the longest sequence".into()));
        }
        for (bi, &len) in self.lengths.iter().enumerate() {
            for ti in len..t {
                if self.mask_at(ti, bi) != 0.0 {
                    return Err(Error::Shape(format!(
                        "sequence {bi} has loss weight on padded step {ti}"
                    )));
                }
            }
        }
        Ok(())
    }
}
