//! Learning-progress gains ν and the raw reward r̂ = ν / τ(x).
//!
//! Loss-driven gains compare a loss before and after one optimiser step
//! (θ → θ′) on a training sample x; complexity-driven gains look at how the
//! model-description cost changes. Gains are generic over [`LossFn`] so the
//! same code drives the LSTM and small analytic test models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Batch, Layout, NetSpec};
use crate::variational::VariationalState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GainKind {
    PG,
    GPG,
    SPG,
    TPG,
    MPG,
    VCG,
    GVCG,
    L2G,
    GL2G,
    /// Baseline: fixed uniform syllabus, no gain computed.
    Uniform,
    /// Baseline: always train on the target task.
    TargetOnly,
}

impl GainKind {
    pub const ALL: [GainKind; 11] = [
        GainKind::PG,
        GainKind::GPG,
        GainKind::SPG,
        GainKind::TPG,
        GainKind::MPG,
        GainKind::VCG,
        GainKind::GVCG,
        GainKind::L2G,
        GainKind::GL2G,
        GainKind::Uniform,
        GainKind::TargetOnly,
    ];

    pub fn is_baseline(self) -> bool {
        matches!(self, GainKind::Uniform | GainKind::TargetOnly)
    }

    /// Training mode the gain is defined under; `None` for baselines, which
    /// run under any mode.
    pub fn required_mode(self) -> Option<TrainingMode> {
        use GainKind::*;
        match self {
            PG | GPG | SPG | TPG | MPG => Some(TrainingMode::ML),
            VCG | GVCG => Some(TrainingMode::VI),
            L2G | GL2G => Some(TrainingMode::L2),
            Uniform | TargetOnly => None,
        }
    }

    /// Which second sample x′ the gain evaluates on, if any.
    pub fn extra_source(self) -> Option<ExtraSource> {
        match self {
            GainKind::SPG => Some(ExtraSource::SameTask),
            GainKind::TPG => Some(ExtraSource::Target),
            GainKind::MPG => Some(ExtraSource::UniformTask),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        use GainKind::*;
        match self {
            PG => "PG",
            GPG => "GPG",
            SPG => "SPG",
            TPG => "TPG",
            MPG => "MPG",
            VCG => "VCG",
            GVCG => "GVCG",
            L2G => "L2G",
            GL2G => "GL2G",
            Uniform => "Uniform",
            TargetOnly => "TargetOnly",
        }
    }
}

impl std::str::FromStr for GainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GainKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown gain kind {s:?}")))
    }
}

impl std::fmt::Display for GainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainingMode {
    /// Maximum likelihood on L(x, θ).
    ML,
    /// Variational posterior trained on KL/S + E L(x, θ).
    VI,
    /// L(x, θ) + (α/2)‖θ‖².
    L2,
}

impl TrainingMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainingMode::ML => "ML",
            TrainingMode::VI => "VI",
            TrainingMode::L2 => "L2",
        }
    }
}

impl std::str::FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [TrainingMode::ML, TrainingMode::VI, TrainingMode::L2]
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown training mode {s:?}")))
    }
}

impl std::fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Errors if `kind` is not defined under `mode`.
pub fn check_mode(kind: GainKind, mode: TrainingMode) -> Result<()> {
    match kind.required_mode() {
        Some(req) if req != mode => Err(Error::ModeMismatch {
            kind: kind.name(),
            required: req.name(),
            actual: mode.name(),
        }),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtraSource {
    /// x′ ~ D_k for the trained-on task k.
    SameTask,
    /// x′ ~ D_N.
    Target,
    /// x′ ~ D_j with j ~ U_N.
    UniformTask,
}

/// Loss of a parameter vector on one sample.
pub trait LossFn {
    type Sample;
    fn loss(&self, theta: &[f64], x: &Self::Sample) -> Result<f64>;
}

/// The LSTM's summed batch loss.
#[derive(Debug, Clone, Copy)]
pub struct NetLoss<'a> {
    pub spec: &'a NetSpec,
    pub layout: &'a Layout,
}

impl LossFn for NetLoss<'_> {
    type Sample = Batch;

    fn loss(&self, theta: &[f64], x: &Batch) -> Result<f64> {
        nn::loss_with(self.spec, self.layout, theta, x)
    }
}

/// Second sample x′ used only for evaluation.
#[derive(Debug)]
pub struct Extra<'a, S> {
    pub sample: &'a S,
    pub task: usize,
    pub source: ExtraSource,
}

/// Variational snapshots around one step, plus the data-term φ-gradient of
/// that step (same noise sample).
#[derive(Debug, Clone, Copy)]
pub struct ViSnapshots<'a> {
    pub before: &'a VariationalState,
    pub after: &'a VariationalState,
    pub data_grad_mu: &'a [f64],
    pub data_grad_rho: &'a [f64],
}

/// Everything a gain may need, captured around one optimiser step on `x`.
#[derive(Debug)]
pub struct GainContext<'a, S> {
    pub mode: TrainingMode,
    pub x: &'a S,
    pub x_task: usize,
    pub target_task: usize,
    pub theta_before: &'a [f64],
    pub theta_after: &'a [f64],
    /// L(x, θ) if already known from the training forward pass.
    pub loss_before: Option<f64>,
    /// ∇_θ L(x, θ), data term only.
    pub grad: Option<&'a [f64]>,
    pub extra: Option<Extra<'a, S>>,
    pub vi: Option<ViSnapshots<'a>>,
}

impl<S> Clone for Extra<'_, S> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<S> Copy for Extra<'_, S> {}

impl<S> Clone for GainContext<'_, S> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<S> Copy for GainContext<'_, S> {}

impl<'a, S> GainContext<'a, S> {
    pub fn new(
        mode: TrainingMode,
        x: &'a S,
        theta_before: &'a [f64],
        theta_after: &'a [f64],
    ) -> Self {
        Self {
            mode,
            x,
            x_task: 0,
            target_task: 0,
            theta_before,
            theta_after,
            loss_before: None,
            grad: None,
            extra: None,
            vi: None,
        }
    }

    fn require_grad(&self, kind: GainKind) -> Result<&'a [f64]> {
        self.grad
            .ok_or_else(|| Error::Missing(format!("{kind} needs the training gradient")))
    }

    fn require_vi(&self, kind: GainKind) -> Result<ViSnapshots<'a>> {
        self.vi
            .ok_or_else(|| Error::Missing(format!("{kind} needs variational snapshots")))
    }

    fn require_extra(&self, kind: GainKind) -> Result<Extra<'a, S>> {
        let extra = self
            .extra
            .ok_or_else(|| Error::Missing(format!("{kind} needs an extra sample x'")))?;
        let want = kind.extra_source().expect("gain with an extra sample");
        let ok = extra.source == want
            && match want {
                ExtraSource::SameTask => extra.task == self.x_task,
                ExtraSource::Target => extra.task == self.target_task,
                ExtraSource::UniformTask => true,
            };
        if !ok {
            return Err(Error::WrongSource(format!(
                "{kind} got task {} via {:?}, expected {want:?}",
                extra.task, extra.source
            )));
        }
        Ok(extra)
    }
}

/// Computes ν for `kind`. Baselines have no gain and are rejected.
pub fn gain<F: LossFn>(kind: GainKind, f: &F, ctx: &GainContext<'_, F::Sample>) -> Result<f64> {
    if kind.is_baseline() {
        return Err(Error::Config(format!("{kind} is a baseline and has no gain")));
    }
    check_mode(kind, ctx.mode)?;
    let nu = match kind {
        GainKind::PG => {
            let before = match ctx.loss_before {
                Some(l) => l,
                None => f.loss(ctx.theta_before, ctx.x)?,
            };
            pg(before, f.loss(ctx.theta_after, ctx.x)?)
        }
        GainKind::GPG => gpg(ctx.require_grad(kind)?),
        GainKind::SPG | GainKind::TPG | GainKind::MPG => {
            let extra = ctx.require_extra(kind)?;
            pg(
                f.loss(ctx.theta_before, extra.sample)?,
                f.loss(ctx.theta_after, extra.sample)?,
            )
        }
        GainKind::VCG => {
            let vi = ctx.require_vi(kind)?;
            vcg(vi.before, vi.after)
        }
        GainKind::GVCG => {
            let vi = ctx.require_vi(kind)?;
            gvcg(vi.before, vi.data_grad_mu, vi.data_grad_rho)?
        }
        GainKind::L2G => l2g(ctx.theta_before, ctx.theta_after)?,
        GainKind::GL2G => gl2g(ctx.theta_before, ctx.require_grad(kind)?)?,
        GainKind::Uniform | GainKind::TargetOnly => unreachable!(),
    };
    if !nu.is_finite() {
        return Err(Error::NonFinite(format!("{kind} gain is {nu}")));
    }
    Ok(nu)
}

/// Loss drop `L(θ) − L(θ′)` on one sample.
#[inline]
pub fn pg(loss_before: f64, loss_after: f64) -> f64 {
    loss_before - loss_after
}

/// `‖∇L‖²`.
pub fn gpg(grad: &[f64]) -> f64 {
    grad.iter().map(|g| g * g).sum()
}

/// `KL(P_φ′ ‖ Q_ψ′) − KL(P_φ ‖ Q_ψ)`.
pub fn vcg(before: &VariationalState, after: &VariationalState) -> f64 {
    after.kl() - before.kl()
}

/// First-order change of the KL along the descent direction of the data
/// term: `−∇_φ KL · ∇_φ E L`. The ψ block of the KL gradient pairs with a
/// zero data gradient and drops out.
pub fn gvcg(state: &VariationalState, data_grad_mu: &[f64], data_grad_rho: &[f64]) -> Result<f64> {
    let n = state.num_weights();
    if data_grad_mu.len() != n || data_grad_rho.len() != n {
        return Err(Error::Shape(format!(
            "data gradient blocks of length {}/{} for {n} weights",
            data_grad_mu.len(),
            data_grad_rho.len()
        )));
    }
    let k = state.kl_grads();
    Ok(-(dot(&k.mu_phi, data_grad_mu) + dot(&k.rho_phi, data_grad_rho)))
}

/// `‖θ′‖² − ‖θ‖²`.
pub fn l2g(theta_before: &[f64], theta_after: &[f64]) -> Result<f64> {
    same_len(theta_before, theta_after)?;
    Ok(dot(theta_after, theta_after) - dot(theta_before, theta_before))
}

/// First-order change of `‖θ‖²/2` along the data descent direction:
/// `−θ · ∇L`.
pub fn gl2g(theta: &[f64], grad: &[f64]) -> Result<f64> {
    same_len(theta, grad)?;
    Ok(-dot(theta, grad))
}

/// `r̂ = ν / τ`.
pub fn raw_reward(nu: f64, tau: usize) -> Result<f64> {
    if tau < 1 {
        return Err(Error::Shape("processing time tau must be >= 1".into()));
    }
    Ok(nu / tau as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Head, Model, OptConfig, RmsProp};
    use crate::rng;
    use crate::variational::{softplus_inv, VariationalConfig};
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    /// L(x, θ) = ½‖θ − x‖².
    struct Quadratic;

    impl LossFn for Quadratic {
        type Sample = Vec<f64>;
        fn loss(&self, theta: &[f64], x: &Vec<f64>) -> Result<f64> {
            Ok(0.5 * theta.iter().zip(x).map(|(t, x)| (t - x).powi(2)).sum::<f64>())
        }
    }

    fn ml_ctx<'a>(x: &'a Vec<f64>, a: &'a [f64], b: &'a [f64]) -> GainContext<'a, Vec<f64>> {
        GainContext::new(TrainingMode::ML, x, a, b)
    }

    #[test]
    fn no_step_means_no_gain() {
        let x = vec![1.0, -2.0];
        let theta = vec![0.3, 0.4];
        let mut ctx = ml_ctx(&x, &theta, &theta);
        assert_eq!(gain(GainKind::PG, &Quadratic, &ctx).unwrap(), 0.0);
        for (kind, source, task) in [
            (GainKind::SPG, ExtraSource::SameTask, 0),
            (GainKind::TPG, ExtraSource::Target, 0),
            (GainKind::MPG, ExtraSource::UniformTask, 3),
        ] {
            ctx.extra = Some(Extra { sample: &x, task, source });
            assert_eq!(gain(kind, &Quadratic, &ctx).unwrap(), 0.0);
        }
        assert_eq!(l2g(&theta, &theta).unwrap(), 0.0);
    }

    #[test]
    fn pg_matches_quadratic_closed_form() {
        let x = vec![1.0, -2.0, 0.5];
        let theta = vec![0.3, 0.4, -0.1];
        let alpha = 0.1;
        let g: Vec<f64> = theta.iter().zip(&x).map(|(t, x)| t - x).collect();
        let after: Vec<f64> = theta.iter().zip(&g).map(|(t, g)| t - alpha * g).collect();
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let closed = (alpha - alpha * alpha / 2.0) * g2;
        let nu = gain(GainKind::PG, &Quadratic, &ml_ctx(&x, &theta, &after)).unwrap();
        assert!((nu - closed).abs() < 1e-10);
    }

    #[test]
    fn extra_sample_source_is_checked() {
        let x = vec![0.0];
        let theta = vec![1.0];
        let mut ctx = ml_ctx(&x, &theta, &theta);
        ctx.x_task = 2;
        ctx.target_task = 5;
        assert!(matches!(gain(GainKind::SPG, &Quadratic, &ctx), Err(Error::Missing(_))));
        ctx.extra = Some(Extra { sample: &x, task: 3, source: ExtraSource::SameTask });
        assert!(gain(GainKind::SPG, &Quadratic, &ctx).is_err());
        ctx.extra = Some(Extra { sample: &x, task: 2, source: ExtraSource::SameTask });
        assert!(gain(GainKind::SPG, &Quadratic, &ctx).is_ok());
        assert!(gain(GainKind::TPG, &Quadratic, &ctx).is_err());
        ctx.extra = Some(Extra { sample: &x, task: 4, source: ExtraSource::Target });
        assert!(gain(GainKind::TPG, &Quadratic, &ctx).is_err());
        ctx.extra = Some(Extra { sample: &x, task: 5, source: ExtraSource::Target });
        assert!(gain(GainKind::TPG, &Quadratic, &ctx).is_ok());
    }

    #[test]
    fn mode_gating() {
        let x = vec![0.0];
        let theta = vec![1.0];
        let ctx = ml_ctx(&x, &theta, &theta);
        for kind in [GainKind::VCG, GainKind::GVCG, GainKind::L2G, GainKind::GL2G] {
            assert!(matches!(
                gain(kind, &Quadratic, &ctx),
                Err(Error::ModeMismatch { .. })
            ));
        }
        let vi = GainContext { mode: TrainingMode::VI, ..ctx };
        assert!(matches!(gain(GainKind::PG, &Quadratic, &vi), Err(Error::ModeMismatch { .. })));
        assert!(gain(GainKind::Uniform, &Quadratic, &ctx).is_err());
        assert!(check_mode(GainKind::TargetOnly, TrainingMode::VI).is_ok());
        assert_eq!("gvcg".parse::<GainKind>().unwrap(), GainKind::GVCG);
        assert!("nope".parse::<GainKind>().is_err());
    }

    #[test]
    fn gradient_gains() {
        assert_eq!(gpg(&[3.0, 4.0]), 25.0);
        assert_eq!(gpg(&[0.0; 4]), 0.0);
        let mut r = rng::stream(1, &[]);
        let v: Vec<f64> = (0..10).map(|_| r.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..10).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut naive = 0.0;
        for i in 0..10 {
            naive += v[i] * v[i];
        }
        assert!((gpg(&v) - naive).abs() < 1e-12);
        let mut naive_dot = 0.0;
        for i in 0..10 {
            naive_dot += v[i] * w[i];
        }
        assert!((gl2g(&v, &w).unwrap() + naive_dot).abs() < 1e-12);
        let w3: Vec<f64> = w.iter().map(|x| 3.0 * x).collect();
        assert_eq!(gl2g(&v, &w3).unwrap(), 3.0 * gl2g(&v, &w).unwrap());
        assert_eq!(l2g(&[1.0, 2.0], &[2.0, 2.0]).unwrap(), 3.0);
    }

    #[test]
    fn raw_reward_divides_by_tau() {
        assert_eq!(raw_reward(10.0, 5).unwrap(), 2.0);
        assert_eq!(raw_reward(0.0, 3).unwrap(), 0.0);
        assert!(raw_reward(1.0, 0).is_err());
    }

    fn one_param(mu_p: f64, sd_p: f64, mu_q: f64, sd_q: f64) -> VariationalState {
        VariationalState {
            mu_phi: vec![mu_p],
            rho_phi: vec![softplus_inv(sd_p)],
            mu_psi: vec![mu_q],
            rho_psi: vec![softplus_inv(sd_q)],
            groups: vec![0..1],
            samples: 1.0,
        }
    }

    #[test]
    fn complexity_gains() {
        let a = one_param(1.0, 0.5, 0.0, 1.0);
        assert_eq!(vcg(&a, &a), 0.0);
        let b = one_param(1.2, 0.4, 0.1, 0.9);
        assert_eq!(vcg(&a, &b), b.kl() - a.kl());

        // moving the prior mean toward the posterior mean lowers the KL
        let c = one_param(1.0, 0.5, 0.3, 1.0);
        assert!(vcg(&a, &c) < 0.0);

        let same = one_param(0.4, 0.7, 0.4, 0.7);
        assert_eq!(gvcg(&same, &[2.0], &[-1.5]).unwrap(), 0.0);

        // directional finite difference along the descent step
        let (gm, gr) = (0.8, -0.3);
        let nu = gvcg(&a, &[gm], &[gr]).unwrap();
        let h = 1e-7;
        let mut stepped = a.clone();
        stepped.mu_phi[0] -= h * gm;
        stepped.rho_phi[0] -= h * gr;
        let fd = (stepped.kl() - a.kl()) / h;
        assert!((fd - nu).abs() < 1e-5, "fd {fd} gvcg {nu}");

        let scaled = gvcg(&a, &[2.5 * gm], &[2.5 * gr]).unwrap();
        assert!((scaled - 2.5 * nu).abs() < 1e-15);
    }

    #[test]
    fn prediction_gain_bias_decomposition() {
        // x ~ N(m, I) in 5 dims, θ = 0, one SGD step of size alpha.
        let d = 5;
        let m = vec![0.5; d];
        let alpha = 1e-3;
        let theta = vec![0.0; d];
        let mut r = rng::stream(11, &[]);
        let draw = |r: &mut crate::rng::Rng| -> Vec<f64> {
            m.iter()
                .map(|mu| mu + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, r))
                .collect()
        };
        let trials = 10_000;
        let (mut spg, mut diff) = (Vec::new(), Vec::new());
        for _ in 0..trials {
            let x = draw(&mut r);
            let x2 = draw(&mut r);
            let after: Vec<f64> = theta
                .iter()
                .zip(&x)
                .map(|(t, x)| t - alpha * (t - x))
                .collect();
            let mut ctx = ml_ctx(&x, &theta, &after);
            ctx.extra = Some(Extra { sample: &x2, task: 0, source: ExtraSource::SameTask });
            let p = gain(GainKind::PG, &Quadratic, &ctx).unwrap();
            let s = gain(GainKind::SPG, &Quadratic, &ctx).unwrap();
            spg.push(s);
            diff.push(p - s);
        }
        let mean_se = |v: &[f64]| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        };
        let norm_mean_grad: f64 = m.iter().map(|v| v * v).sum();
        let grad_var = d as f64;
        let (ms, ses) = mean_se(&spg);
        let (md, sed) = mean_se(&diff);
        assert!((ms - alpha * norm_mean_grad).abs() < 3.0 * ses, "{ms} vs {}", alpha * norm_mean_grad);
        assert!((md - alpha * grad_var).abs() < 3.0 * sed, "{md} vs {}", alpha * grad_var);
    }

    #[test]
    fn lstm_step_usually_has_positive_prediction_gain() {
        let spec = NetSpec::new(3, vec![8], 4, Head::Softmax);
        let layout = Layout::new(&spec);
        let f = NetLoss { spec: &spec, layout: &layout };
        let mut positive = 0;
        for trial in 0..1000u64 {
            let model = Model::init(spec.clone(), &mut rng::stream(trial, &[1])).unwrap();
            let batch = nn::tests::random_batch(&spec, vec![5, 5, 5, 5], trial);
            let (loss, grad) = model.loss_and_grad(&batch).unwrap();
            let mut after = model.clone_params();
            let mut opt = RmsProp::new(OptConfig::default(), after.len());
            opt.step(&mut after, &grad).unwrap();
            let mut ctx = GainContext::new(TrainingMode::ML, &batch, model.params(), &after);
            ctx.loss_before = Some(loss);
            if gain(GainKind::PG, &f, &ctx).unwrap() > 0.0 {
                positive += 1;
            }
        }
        assert!(positive >= 950, "{positive}/1000");
    }

    #[test]
    fn vi_step_gains() {
        let spec = NetSpec::new(2, vec![4], 3, Head::Softmax);
        let layout = Layout::new(&spec);
        let model = Model::init(spec.clone(), &mut rng::stream(2, &[])).unwrap();
        let before = VariationalState::from_model(&model, &VariationalConfig::default(), 100.0).unwrap();
        let batch = nn::tests::random_batch(&spec, vec![4, 4], 3);
        let (step, _) = before
            .vi_loss_and_grads(&spec, &layout, &batch, &mut rng::stream(4, &[]))
            .unwrap();
        let mut v = before.to_vector();
        let mut opt = RmsProp::new(OptConfig::default(), v.len());
        opt.step(&mut v, &step.grads.flatten()).unwrap();
        let mut after = before.clone();
        after.set_vector(&v).unwrap();
        let f = NetLoss { spec: &spec, layout: &layout };
        let mut ctx = GainContext::new(TrainingMode::VI, &batch, &before.mu_phi, &after.mu_phi);
        ctx.vi = Some(ViSnapshots {
            before: &before,
            after: &after,
            data_grad_mu: &step.data_mu_phi,
            data_grad_rho: &step.data_rho_phi,
        });
        let nu = gain(GainKind::VCG, &f, &ctx).unwrap();
        assert_eq!(nu, after.kl() - before.kl());
        assert!(gain(GainKind::GVCG, &f, &ctx).unwrap().is_finite());
    }
}
