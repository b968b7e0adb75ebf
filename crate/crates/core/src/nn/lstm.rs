//! Batched LSTM forward pass and backpropagation through time.

use super::gemm::{gemm, View};
use super::{Batch, Head, Layout, NetSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct LayerCache {
    /// Post-activation gates `[t*B + b][4H]`, ordered i, f, g, o.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Activations from [`forward`] needed by [`backward`].
#[derive(Debug, Clone)]
pub struct Cache {
    layers: Vec<LayerCache>,
    /// Output probabilities `[t*B + b][out]`.
    probs: Vec<f64>,
    steps: usize,
    batch_size: usize,
    pub(crate) generation: u64,
}

impl Cache {
    /// Output distribution at `(t, b)`: softmax probabilities or per-channel
    /// Bernoulli means.
    pub fn output(&self, t: usize, b: usize) -> &[f64] {
        let out = self.probs.len() / (self.steps * self.batch_size).max(1);
        let at = (t * self.batch_size + b) * out;
        &self.probs[at..at + out]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn check_batch(spec: &NetSpec, layout: &Layout, theta: &[f64], batch: &Batch) -> Result<()> {
    if theta.len() != layout.total {
        return Err(Error::Shape(format!(
            "expected {} parameters, got {}",
            layout.total,
            theta.len()
        )));
    }
    if batch.input_size != spec.input_size || batch.output_size != spec.output_size {
        return Err(Error::Shape(format!(
            "batch has {} -> {} channels, net expects {} -> {}",
            batch.input_size, batch.output_size, spec.input_size, spec.output_size
        )));
    }
    batch.validate()
}

/// Per-sequence negative log-likelihoods plus the activation cache.
pub fn forward(
    spec: &NetSpec,
    layout: &Layout,
    theta: &[f64],
    batch: &Batch,
) -> Result<(Vec<f64>, Cache)> {
    check_batch(spec, layout, theta, batch)?;
    let (steps, bs) = (batch.steps, batch.batch_size);
    let rows = steps * bs;

    let mut layers: Vec<LayerCache> = Vec::with_capacity(layout.layers.len());
    for (li, l) in layout.layers.iter().enumerate() {
        let hid = l.hidden;
        let g4 = 4 * hid;
        let x: &[f64] = match layers.last() {
            Some(prev) => &prev.h,
            None => &batch.inputs,
        };
        let w = View::new(&theta[l.w..l.u], g4, l.input);
        let u = View::new(&theta[l.u..l.b], g4, hid);
        let bias = &theta[l.b..l.end];

        let mut gates = vec![0.0; rows * g4];
        for row in gates.chunks_exact_mut(g4) {
            row.copy_from_slice(bias);
        }
        gemm(View::new(x, rows, l.input), w.t(), 1.0, &mut gates);

        let mut c = vec![0.0; rows * hid];
        let mut tanh_c = vec![0.0; rows * hid];
        let mut h = vec![0.0; rows * hid];
        for t in 0..steps {
            let cur = t * bs..(t + 1) * bs;
            if t > 0 {
                let (h_prev, _) = h.split_at((t * bs) * hid);
                let h_prev = &h_prev[(t - 1) * bs * hid..];
                gemm(
                    View::new(h_prev, bs, hid),
                    u.t(),
                    1.0,
                    &mut gates[cur.start * g4..cur.end * g4],
                );
            }
            for r in cur {
                let g = &mut gates[r * g4..(r + 1) * g4];
                for j in 0..hid {
                    g[j] = sigmoid(g[j]);
                    g[hid + j] = sigmoid(g[hid + j]);
                    g[2 * hid + j] = g[2 * hid + j].tanh();
                    g[3 * hid + j] = sigmoid(g[3 * hid + j]);
                }
                for j in 0..hid {
                    let c_prev = if t > 0 { c[(r - bs) * hid + j] } else { 0.0 };
                    let cj = g[hid + j] * c_prev + g[j] * g[2 * hid + j];
                    let tc = cj.tanh();
                    c[r * hid + j] = cj;
                    tanh_c[r * hid + j] = tc;
                    h[r * hid + j] = g[3 * hid + j] * tc;
                }
            }
            let span = &h[t * bs * hid..(t + 1) * bs * hid];
            if span.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "hidden state of layer {li} at timestep {t}"
                )));
            }
        }
        layers.push(LayerCache {
            gates,
            c,
            tanh_c,
            h,
        });
    }

    let hid = layout.layers.last().map(|l| l.hidden).unwrap_or(0);
    let out = spec.output_size;
    let top = &layers.last().expect("at least one layer").h;
    let mut probs = vec![0.0; rows * out];
    for row in probs.chunks_exact_mut(out) {
        row.copy_from_slice(&theta[layout.out_b..layout.total]);
    }
    gemm(
        View::new(top, rows, hid),
        View::new(&theta[layout.out_w..layout.out_b], out, hid).t(),
        1.0,
        &mut probs,
    );

    let mut losses = vec![0.0; bs];
    for r in 0..rows {
        let b = r % bs;
        let m = batch.mask[r];
        let z = &mut probs[r * out..(r + 1) * out];
        let y = &batch.targets[r * out..(r + 1) * out];
        match spec.head {
            Head::Sigmoid => {
                if m != 0.0 {
                    let l: f64 = z.iter().zip(y).map(|(&zi, &yi)| softplus(zi) - yi * zi).sum();
                    losses[b] += m * l;
                }
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            Head::Softmax => {
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                let lse = max + sum.ln();
                if m != 0.0 {
                    let l: f64 = z.iter().zip(y).map(|(&zi, &yi)| yi * (lse - zi)).sum();
                    losses[b] += m * l;
                }
                z.iter_mut().for_each(|v| *v = (*v - lse).exp());
            }
        }
    }
    if let Some(b) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::NonFinite(format!("loss of sequence {b}")));
    }

    Ok((
        losses,
        Cache {
            layers,
            probs,
            steps,
            batch_size: bs,
            generation: 0,
        },
    ))
}

/// Gradient of the summed batch loss with respect to `theta`.
pub fn backward(
    spec: &NetSpec,
    layout: &Layout,
    theta: &[f64],
    batch: &Batch,
    cache: &Cache,
) -> Result<Vec<f64>> {
    check_batch(spec, layout, theta, batch)?;
    if cache.steps != batch.steps
        || cache.batch_size != batch.batch_size
        || cache.layers.len() != layout.layers.len()
    {
        return Err(Error::Shape("stale cache: batch differs from forward".into()));
    }
    let (steps, bs) = (batch.steps, batch.batch_size);
    let rows = steps * bs;
    let out = spec.output_size;
    let mut grad = vec![0.0; layout.total];

    // d loss / d logits
    let mut dlogits = vec![0.0; rows * out];
    for r in 0..rows {
        let m = batch.mask[r];
        if m == 0.0 {
            continue;
        }
        let p = &cache.probs[r * out..(r + 1) * out];
        let y = &batch.targets[r * out..(r + 1) * out];
        let d = &mut dlogits[r * out..(r + 1) * out];
        match spec.head {
            Head::Sigmoid => {
                for k in 0..out {
                    d[k] = m * (p[k] - y[k]);
                }
            }
            Head::Softmax => {
                let ysum: f64 = y.iter().sum();
                for k in 0..out {
                    d[k] = m * (p[k] * ysum - y[k]);
                }
            }
        }
    }

    let top = layout.layers.last().expect("at least one layer");
    let top_h = &cache.layers.last().expect("at least one layer").h;
    {
        let (head, rest) = grad[layout.out_w..].split_at_mut(layout.out_b - layout.out_w);
        gemm(
            View::new(&dlogits, rows, out).t(),
            View::new(top_h, rows, top.hidden),
            0.0,
            head,
        );
        for row in dlogits.chunks_exact(out) {
            for (g, d) in rest.iter_mut().zip(row) {
                *g += d;
            }
        }
    }
    // d loss / d h of the top layer
    let mut dh_above = vec![0.0; rows * top.hidden];
    gemm(
        View::new(&dlogits, rows, out),
        View::new(&theta[layout.out_w..layout.out_b], out, top.hidden),
        0.0,
        &mut dh_above,
    );

    for (li, l) in layout.layers.iter().enumerate().rev() {
        let hid = l.hidden;
        let g4 = 4 * hid;
        let lc = &cache.layers[li];
        let u = View::new(&theta[l.u..l.b], g4, hid);

        let mut dpre = vec![0.0; rows * g4];
        let mut dh_next = vec![0.0; bs * hid];
        let mut dc_next = vec![0.0; bs * hid];
        for t in (0..steps).rev() {
            for b in 0..bs {
                let r = t * bs + b;
                let g = &lc.gates[r * g4..(r + 1) * g4];
                let dp = &mut dpre[r * g4..(r + 1) * g4];
                for j in 0..hid {
                    let (i, f, gg, o) = (g[j], g[hid + j], g[2 * hid + j], g[3 * hid + j]);
                    let tc = lc.tanh_c[r * hid + j];
                    let c_prev = if t > 0 { lc.c[(r - bs) * hid + j] } else { 0.0 };
                    let dh = dh_above[r * hid + j] + dh_next[b * hid + j];
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[b * hid + j];
                    dc_next[b * hid + j] = dc * f;
                    dp[j] = dc * gg * i * (1.0 - i);
                    dp[hid + j] = dc * c_prev * f * (1.0 - f);
                    dp[2 * hid + j] = dc * i * (1.0 - gg * gg);
                    dp[3 * hid + j] = dh * tc * o * (1.0 - o);
                }
            }
            if t > 0 {
                gemm(
                    View::new(&dpre[t * bs * g4..(t + 1) * bs * g4], bs, g4),
                    u,
                    0.0,
                    &mut dh_next,
                );
            }
        }

        let x: &[f64] = if li == 0 {
            &batch.inputs
        } else {
            &cache.layers[li - 1].h
        };
        let (gw, rest) = grad[l.w..l.end].split_at_mut(l.u - l.w);
        let (gu, gb) = rest.split_at_mut(l.b - l.u);
        gemm(
            View::new(&dpre, rows, g4).t(),
            View::new(x, rows, l.input),
            0.0,
            gw,
        );
        if steps > 1 {
            gemm(
                View::new(&dpre[bs * g4..], rows - bs, g4).t(),
                View::new(&lc.h[..(rows - bs) * hid], rows - bs, hid),
                0.0,
                gu,
            );
        }
        for row in dpre.chunks_exact(g4) {
            for (g, d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        if li > 0 {
            let mut dx = vec![0.0; rows * l.input];
            gemm(
                View::new(&dpre, rows, g4),
                View::new(&theta[l.w..l.u], g4, l.input),
                0.0,
                &mut dx,
            );
            dh_above = dx;
        }
    }
    Ok(grad)
}
