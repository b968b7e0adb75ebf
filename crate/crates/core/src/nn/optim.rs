use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub ms_decay: f64,
    pub eps: f64,
    /// Global-norm gradient clip applied before each step; `None` disables.
    pub clip_norm: Option<f64>,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            ms_decay: 0.95,
            eps: 1e-8,
            clip_norm: Some(10.0),
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && (0.0..1.0).contains(&self.ms_decay)
            && self.eps > 0.0
            && self.clip_norm.map_or(true, |c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimiser settings {self:?}")))
        }
    }
}

/// RMSProp with momentum on the normalised update:
///
/// ```text
/// ms  <- d * ms + (1 - d) * g^2
/// mom <- m * mom - lr * g / sqrt(ms + eps)
/// θ   <- θ + mom
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub config: OptConfig,
    pub mean_square: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl RmsProp {
    pub fn new(config: OptConfig, n: usize) -> Self {
        Self {
            config,
            mean_square: vec![0.0; n],
            momentum: vec![0.0; n],
        }
    }

    /// Apply one update to `params` in place. The step is computed in full
    /// before anything is written, so a rejected step leaves all state intact.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        let n = params.len();
        if grad.len() != n || self.mean_square.len() != n {
            return Err(Error::Shape(format!(
                "optimiser sized {} got params {} grad {}",
                self.mean_square.len(),
                n,
                grad.len()
            )));
        }
        let OptConfig {
            learning_rate: lr,
            momentum: mu,
            ms_decay: d,
            eps,
            ..
        } = self.config;
        let mut ms = self.mean_square.clone();
        let mut mom = self.momentum.clone();
        for i in 0..n {
            let g = grad[i];
            ms[i] = d * ms[i] + (1.0 - d) * g * g;
            mom[i] = mu * mom[i] - lr * g / (ms[i] + eps).sqrt();
            if !(mom[i].is_finite() && (params[i] + mom[i]).is_finite()) {
                return Err(Error::NonFinite(format!("optimiser update of parameter {i}")));
            }
        }
        for (p, m) in params.iter_mut().zip(&mom) {
            *p += m;
        }
        self.mean_square = ms;
        self.momentum = mom;
        Ok(())
    }
}

/// Rescale `grad` so its Euclidean norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(n: usize) -> RmsProp {
        RmsProp::new(OptConfig::default(), n)
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut o = opt(3);
        let mut p = vec![1.0, -2.0, 3.0];
        o.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn single_step_closed_form() {
        let mut o = opt(1);
        let (theta, g) = (0.7, 0.3);
        let mut p = vec![theta];
        o.step(&mut p, &[g]).unwrap();
        let expect = theta - 1e-3 * g / ((1.0 - 0.95) * g * g + 1e-8f64).sqrt();
        assert_eq!(p[0], expect);
    }

    #[test]
    fn two_steps_match_unrolled_trace() {
        let mut o = opt(1);
        let g = -1.5;
        let mut p = vec![0.25];
        o.step(&mut p, &[g]).unwrap();
        o.step(&mut p, &[g]).unwrap();

        let (lr, mu, d, eps) = (1e-3, 0.9, 0.95, 1e-8);
        let ms1 = (1.0 - d) * g * g;
        let m1 = -lr * g / (ms1 + eps).sqrt();
        let ms2 = d * ms1 + (1.0 - d) * g * g;
        let m2 = mu * m1 - lr * g / (ms2 + eps).sqrt();
        let expect = 0.25 + m1 + m2;
        assert!((p[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn non_finite_update_is_rejected_without_side_effects() {
        let mut o = opt(2);
        let mut p = vec![1.0, 2.0];
        let before = o.clone();
        assert!(o.step(&mut p, &[0.5, f64::NAN]).is_err());
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(o, before);
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.3, 0.4];
        clip_global_norm(&mut g, 1.0);
        assert_eq!(g, vec![0.3, 0.4]);
    }
}
