//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! `cargo test --release --test acceptance` runs everything (criteria 6 and
//! 7 train dozens of networks and take tens of minutes). Pass criterion
//! numbers to run a subset: `cargo test --release --test acceptance -- 1 2 8`.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use syllabus::bandit::{Bandit, BanditConfig, BanditState, Variant};
use syllabus::gradcheck;
use syllabus::harness::logs::{Table, EVAL_LOG, TRAIN_LOG};
use syllabus::harness::{self, EvalScope, RunConfig};
use syllabus::rng;
use syllabus::scaler::{RewardScaler, ScalerConfig};
use syllabus::signals::{self, Extra, ExtraSource, GainContext, GainKind, LossFn, TrainingMode};
use syllabus::tasks::{CurriculumSpec, NGramSuiteSpec, RepeatCopySpec};
use syllabus::variational::{softplus_inv, VariationalState};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 8] = [
    (1, "bandit update oracle and piecewise-stationary Bernoulli", bandit_correctness),
    (2, "reward scaler contract", scaler_contract),
    (3, "LSTM and variational gradients vs finite differences", gradient_suite),
    (4, "KL closed form vs quadrature", kl_oracle),
    (5, "prediction gain bias decomposition", bias_decomposition),
    (6, "repeat copy desk-scale reproduction", repeat_copy_reproduction),
    (7, "n-gram desk-scale reproduction", ngram_reproduction),
    (8, "determinism of training logs", determinism),
];

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, f) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !res.pass {
            failed += 1;
        }
        println!(
            "criterion {n} {} [{name}] {} ({:.1} s)",
            if res.pass { "PASS" } else { "FAIL" },
            res.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1 ----

/// Double-double arithmetic: value = hi + lo with |lo| ≤ ulp(hi)/2.
#[derive(Debug, Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn from(x: f64) -> Self {
        Dd(x, 0.0)
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.0, o.0);
        let t = Dd::two_sum(self.1, o.1);
        let s = Dd::two_sum(s.0, s.1 + t.0);
        Dd::two_sum(s.0, s.1 + t.1)
    }

    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        Dd::two_sum(p, e + self.0 * o.1 + self.1 * o.0)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.0 / o.0;
        Dd::two_sum(q1, q2).add(Dd::from(q3))
    }

    fn scale2(self, k: i32) -> Dd {
        let f = 2f64.powi(k);
        Dd(self.0 * f, self.1 * f)
    }

    const LN2: Dd = Dd(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);

    fn exp(self) -> Dd {
        let n = (self.0 / std::f64::consts::LN_2).round();
        let r = self.sub(Dd::LN2.mul(Dd::from(n))).scale2(-10);
        let mut term = Dd::from(1.0);
        let mut sum = Dd::from(1.0);
        for k in 1..=22 {
            term = term.mul(r).div(Dd::from(k as f64));
            sum = sum.add(term);
        }
        for _ in 0..10 {
            sum = sum.mul(sum);
        }
        sum.scale2(n as i32)
    }

    fn ln(self) -> Dd {
        let mut x = Dd::from(self.0.ln());
        for _ in 0..3 {
            x = x.add(self.mul(x.neg().exp())).sub(Dd::from(1.0));
        }
        x
    }
}

/// Fixed Share update and ε-mixed policy evaluated term by term in
/// double-double.
fn oracle_update(w: &[f64], eps: f64, eta: f64, t: u64, arm: usize, reward: f64) -> Vec<f64> {
    let n = w.len();
    let e: Vec<Dd> = w.iter().map(|&x| Dd::from(x).exp()).collect();
    let total = e.iter().fold(Dd::from(0.0), |a, b| a.add(*b));
    let pi: Vec<Dd> = e
        .iter()
        .map(|ei| {
            Dd::from(1.0 - eps)
                .mul(ei.div(total))
                .add(Dd::from(eps).div(Dd::from(n as f64)))
        })
        .collect();
    let z: Vec<Dd> = (0..n)
        .map(|i| {
            let r = if i == arm { reward } else { 0.0 };
            Dd::from(w[i]).add(Dd::from(eta).mul(Dd::from(r)).div(pi[i]))
        })
        .collect();
    let ez: Vec<Dd> = z.iter().map(|x| x.exp()).collect();
    let alpha = Dd::from(1.0).div(Dd::from((t + 1) as f64));
    let share = alpha.div(Dd::from((n - 1) as f64));
    (0..n)
        .map(|i| {
            let others = (0..n)
                .filter(|&j| j != i)
                .fold(Dd::from(0.0), |a, j| a.add(ez[j]));
            Dd::from(1.0)
                .sub(alpha)
                .mul(ez[i])
                .add(share.mul(others))
                .ln()
                .0
        })
        .collect()
}

fn bandit_correctness() -> Outcome {
    let mut r = rng::stream(2024, &[1]);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = r.gen_range(2..=20);
        let cfg = BanditConfig {
            n_arms: n,
            eta: 10f64.powf(r.gen_range(-4.0..-1.0)),
            beta: 0.0,
            epsilon: r.gen_range(0.01..0.2),
            variant: Variant::Exp3S,
        };
        let w: Vec<f64> = (0..n).map(|_| r.gen_range(-30.0..30.0)).collect();
        let t = r.gen_range(1..100_000u64);
        let state = BanditState {
            weights: w.clone(),
            t,
            last_policy: vec![1.0 / n as f64; n],
        };
        let mut b = Bandit::from_state(cfg.clone(), state).unwrap();
        b.policy();
        let arm = r.gen_range(0..n);
        let reward = r.gen_range(-1.0..=1.0);
        b.update(arm, reward).unwrap();
        let expect = oracle_update(&w, cfg.epsilon, cfg.eta, t, arm, reward);
        // the implementation may rebase; compare weight differences
        let got = &b.state().weights;
        for i in 1..n {
            let err = ((got[i] - got[0]) - (expect[i] - expect[0])).abs();
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
    }
    let oracle_ok = worst < 1e-10;

    // two arms with Bernoulli rewards whose means swap every 2,000 rounds
    let mut min_mass = f64::INFINITY;
    let mut masses = Vec::new();
    for seed in 0..20 {
        let mut r = rng::stream(seed, &[2]);
        let mut b = Bandit::new(BanditConfig {
            n_arms: 2,
            eta: 0.05,
            beta: 0.0,
            epsilon: 0.05,
            variant: Variant::Exp3S,
        })
        .unwrap();
        let mut seg_mass = vec![0.0; 5];
        for round in 0..10_000 {
            let seg = round / 2000;
            let best = seg % 2;
            let p = b.policy().to_vec();
            if round % 2000 >= 1000 {
                seg_mass[seg] += p[best] / 1000.0;
            }
            let arm = b.sample_arm(&mut r);
            let mean = if arm == best { 0.8 } else { 0.2 };
            let reward = if r.gen::<f64>() < mean { 1.0 } else { 0.0 };
            b.update(arm, reward).unwrap();
        }
        masses.push(seg_mass);
    }
    for seg in 0..5 {
        let m = masses.iter().map(|s| s[seg]).sum::<f64>() / 20.0;
        min_mass = min_mass.min(m);
    }
    outcome(
        oracle_ok && min_mass >= 0.6,
        format!(
            "max weight error {worst:.2e} over 10^4 states; worst segment best-arm mass {min_mass:.3}"
        ),
    )
}

// ---------------------------------------------------------------- 2 ----

fn scaler_contract() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let samplers: [(&str, fn(&mut rng::Rng) -> f64); 3] = [
        ("normal", |r| StandardNormal.sample(r)),
        ("exponential", |r| -(1.0 - r.gen::<f64>()).ln() * 1e-4),
        ("cauchy", |r| (std::f64::consts::PI * (r.gen::<f64>() - 0.5)).tan() * 1e3),
    ];
    for (name, draw) in samplers {
        let mut r = rng::stream(7, &[name.len() as u64]);
        let mut s = RewardScaler::new(ScalerConfig::default(), 3).unwrap();
        let (mut lo, mut hi, mut counted) = (0usize, 0usize, 0usize);
        for i in 0..10_000 {
            let x = draw(&mut r);
            let y = s.scale(x);
            ok &= (-1.0..=1.0).contains(&y);
            if i >= 1000 {
                counted += 1;
                lo += (y == -1.0) as usize;
                hi += (y == 1.0) as usize;
            }
            s.observe(x).unwrap();
            if i % 997 == 0 {
                // monotone in the raw reward for a fixed reservoir
                let mut probe: Vec<f64> = (0..200).map(|_| draw(&mut r)).collect();
                probe.sort_by(f64::total_cmp);
                let ys: Vec<f64> = probe.iter().map(|&p| s.scale(p)).collect();
                ok &= ys.windows(2).all(|w| w[0] <= w[1]);
            }
        }
        let (flo, fhi) = (lo as f64 / counted as f64, hi as f64 / counted as f64);
        ok &= (flo - 0.2).abs() <= 0.03 && (fhi - 0.2).abs() <= 0.03;
        notes.push(format!("{name}: clipped low {flo:.3} high {fhi:.3}"));
    }
    outcome(ok, notes.join("; "))
}

// ---------------------------------------------------------------- 3 ----

fn gradient_suite() -> Outcome {
    let mut net = gradcheck::Report::default();
    let mut var = gradcheck::Report::default();
    for case in 0..10u64 {
        let (model, batch) = gradcheck::random_problem(100 + case).unwrap();
        let coords = gradcheck::pick(0..model.num_params(), 20, case);
        net.extend(gradcheck::check_network(&model, &batch, &coords).unwrap());

        let state = gradcheck::random_posterior(&model, case);
        let noise = state.draw_noise(&mut rng::stream(case, &[3]));
        let mut picks = Vec::new();
        for (b, block) in gradcheck::variational_blocks(&state).into_iter().enumerate() {
            picks.extend(gradcheck::pick(block, 5, case * 8 + b as u64));
        }
        var.extend(
            gradcheck::check_variational(&state, model.spec(), &batch, &noise, &picks).unwrap(),
        );
    }
    outcome(
        net.passed() && var.passed() && net.checks.len() == 200 && var.checks.len() == 200,
        format!(
            "network {} coords max rel err {:.2e}; variational {} coords (50 per block) max rel err {:.2e}",
            net.checks.len(),
            net.max_rel_err(),
            var.checks.len(),
            var.max_rel_err()
        ),
    )
}

// ---------------------------------------------------------------- 4 ----

/// ∫ p ln(p/q) by composite Simpson over ±16 posterior standard deviations.
fn kl_simpson(mu_p: f64, sd_p: f64, mu_q: f64, sd_q: f64) -> f64 {
    let log_n = |x: f64, m: f64, s: f64| {
        -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    };
    let (a, b) = (mu_p - 16.0 * sd_p, mu_p + 16.0 * sd_p);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let lp = log_n(x, mu_p, sd_p);
        lp.exp() * (lp - log_n(x, mu_q, sd_q))
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn one_weight(mu_p: f64, sd_p: f64, mu_q: f64, sd_q: f64) -> VariationalState {
    VariationalState {
        mu_phi: vec![mu_p],
        rho_phi: vec![softplus_inv(sd_p)],
        mu_psi: vec![mu_q],
        rho_psi: vec![softplus_inv(sd_q)],
        groups: vec![0..1],
        samples: 1.0,
    }
}

fn kl_oracle() -> Outcome {
    let mut r = rng::stream(4, &[]);
    let (mut worst, mut worst_self) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let mu_p = r.gen_range(-2.0..2.0);
        let mu_q = r.gen_range(-2.0..2.0);
        let sd_p = r.gen_range(0.05..2.0);
        let sd_q = r.gen_range(0.1..2.0);
        let s = one_weight(mu_p, sd_p, mu_q, sd_q);
        // the state stores softplus⁻¹(σ); quadrature uses the σ it round-trips to
        let sp = syllabus::variational::softplus(s.rho_phi[0]);
        let sq = syllabus::variational::softplus(s.rho_psi[0]);
        worst = worst.max((s.kl() - kl_simpson(mu_p, sp, mu_q, sq)).abs());
        worst_self = worst_self.max(one_weight(mu_p, sd_p, mu_p, sd_p).kl().abs());
    }
    outcome(
        worst < 1e-6 && worst_self < 1e-12,
        format!("max |KL - quadrature| {worst:.2e} over 100 states; max |KL(P||P)| {worst_self:.1e}"),
    )
}

// ---------------------------------------------------------------- 5 ----

/// L(θ, x) = ½‖θ − x‖².
struct Quadratic;

impl LossFn for Quadratic {
    type Sample = Vec<f64>;

    fn loss(&self, theta: &[f64], x: &Vec<f64>) -> syllabus::Result<f64> {
        Ok(0.5 * theta.iter().zip(x).map(|(t, x)| (t - x).powi(2)).sum::<f64>())
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn bias_decomposition() -> Outcome {
    // x ~ N(c, s² I); θ fixed; one SGD step of size α on a single sample.
    let (alpha, d, s) = (1e-3, 5, 0.5);
    let c: Vec<f64> = (0..d).map(|i| 0.3 * i as f64 - 0.4).collect();
    let theta: Vec<f64> = vec![1.0; d];
    let mut r = rng::stream(5, &[]);
    let mut draw = || -> Vec<f64> {
        c.iter()
            .map(|ci| { let z: f64 = StandardNormal.sample(&mut r); ci + s * z })
            .collect()
    };
    let (mut spg, mut diff) = (Vec::new(), Vec::new());
    for _ in 0..10_000 {
        let x = draw();
        let x2 = draw();
        let after: Vec<f64> = theta.iter().zip(&x).map(|(t, xi)| t - alpha * (t - xi)).collect();
        let mut ctx = GainContext::new(TrainingMode::ML, &x, &theta, &after);
        let pg = signals::gain(GainKind::PG, &Quadratic, &ctx).unwrap();
        ctx.extra = Some(Extra {
            sample: &x2,
            task: 0,
            source: ExtraSource::SameTask,
        });
        let sp = signals::gain(GainKind::SPG, &Quadratic, &ctx).unwrap();
        spg.push(sp);
        diff.push(pg - sp);
    }
    // E∇L = θ − c; V(∇L) = trace Cov(x) = d s²
    let mean_grad_sq: f64 = theta.iter().zip(&c).map(|(t, ci)| (t - ci).powi(2)).sum();
    let (want_spg, want_diff) = (alpha * mean_grad_sq, alpha * d as f64 * s * s);
    let n = spg.len() as f64;
    let (m1, sd1) = mean_sd(&spg);
    let (m2, sd2) = mean_sd(&diff);
    let (se1, se2) = (sd1 / n.sqrt(), sd2 / n.sqrt());
    outcome(
        (m1 - want_spg).abs() < 3.0 * se1 && (m2 - want_diff).abs() < 3.0 * se2,
        format!(
            "mean SPG {m1:.4e} vs {want_spg:.4e} (SE {se1:.1e}); mean PG-SPG {m2:.4e} vs {want_diff:.4e} (SE {se2:.1e})"
        ),
    )
}

// ---------------------------------------------------------------- 6 ----

/// Input-step budget per repeat-copy run. Every Uniform and PG seed reaches
/// the threshold inside it. TargetOnly is not hopeless at this grid size:
/// given more steps it does learn (one seed crosses 0.05 near 3.8e5, another
/// near 9.7e5), so (a) is a statement about this budget.
const RC_BUDGET: u64 = 300_000;
const RC_THRESHOLD: f64 = 0.05;
const RC_SEEDS: u64 = 5;

fn repeat_copy_config(gain: GainKind, seed: u64, out: &Path) -> RunConfig {
    RunConfig {
        curriculum: CurriculumSpec::RepeatCopy(RepeatCopySpec {
            max_length: 6,
            max_repeats: 6,
            bit_width: 3,
        }),
        gain,
        mode: gain.required_mode().unwrap_or(TrainingMode::ML),
        hidden_sizes: vec![64],
        batch_size: 16,
        total_steps: u64::MAX,
        max_input_steps: Some(RC_BUDGET),
        eval_every: 250,
        eval_batches: 10,
        eval_scope: EvalScope::Target,
        stop_below: Some(RC_THRESHOLD),
        log_every: 10,
        seed,
        out_dir: out.to_path_buf(),
        ..Default::default()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    syllabus::harness::compare::quantile(&v, 0.5)
}

fn repeat_copy_reproduction() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let gains = [GainKind::TargetOnly, GainKind::Uniform, GainKind::PG, GainKind::SPG, GainKind::GVCG];
    let mut medians = Vec::new();
    let mut target_only_min = f64::INFINITY;
    let mut detail = Vec::new();
    for gain in gains {
        let mut steps = Vec::new();
        for seed in 0..RC_SEEDS {
            let dir = root.path().join(format!("{gain}-{seed}"));
            let summary = harness::run(repeat_copy_config(gain, seed, &dir)).unwrap();
            // runs that never cross count at the budget (a lower bound)
            steps.push(summary.threshold_reached_at.unwrap_or(summary.cum_input_steps) as f64);
            if gain == GainKind::TargetOnly {
                let ltt = Table::read(&dir.join(EVAL_LOG)).unwrap().f64_column("L_TT").unwrap();
                for v in ltt.into_iter().flatten() {
                    target_only_min = target_only_min.min(v);
                }
            }
        }
        let m = median(steps.clone());
        detail.push(format!("{gain} median {m:.0} {steps:?}"));
        medians.push((gain, m));
    }
    let med = |g: GainKind| medians.iter().find(|(k, _)| *k == g).unwrap().1;
    let uniform = med(GainKind::Uniform);
    let a = target_only_min > 0.5 * 2f64.ln();
    let b1 = med(GainKind::PG) <= 1.25 * uniform;
    let b2 = [GainKind::PG, GainKind::SPG, GainKind::GVCG].iter().any(|g| med(*g) < uniform);
    outcome(
        a && b1 && b2,
        format!(
            "(a) TargetOnly min L_TT {target_only_min:.3} > {:.3}: {a}; (b) PG/Uniform {:.2} <= 1.25: {b1}, some gain beats Uniform: {b2}; {}",
            0.5 * 2f64.ln(),
            med(GainKind::PG) / uniform,
            detail.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- 7 ----

const NGRAM_BUDGET: u64 = 1_000_000;
/// 10^6 input steps of length-150 sequences is only ~6,700 bandit rounds.
/// At the default η = 1e-3 the weights move too little in that many rounds
/// to separate the arms much, so the bandit steps ten times harder.
const NGRAM_ETA: f64 = 0.01;
const NGRAM_SEEDS: u64 = 3;

fn corpus_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/gutenberg_mix.txt")
}

fn ngram_config(gain: GainKind, seed: u64, out: &Path, cache: &Path) -> RunConfig {
    RunConfig {
        curriculum: CurriculumSpec::Ngram(NGramSuiteSpec {
            corpus: corpus_path(),
            max_order: 6,
            cache_dir: Some(cache.to_path_buf()),
            ..Default::default()
        }),
        gain,
        mode: gain.required_mode().unwrap_or(TrainingMode::ML),
        bandit: BanditConfig {
            eta: NGRAM_ETA,
            ..Default::default()
        },
        hidden_sizes: vec![64],
        batch_size: 16,
        total_steps: u64::MAX,
        max_input_steps: Some(NGRAM_BUDGET),
        eval_every: 1000,
        eval_batches: 2,
        eval_scope: EvalScope::Target,
        seed,
        out_dir: out.to_path_buf(),
        ..Default::default()
    }
}

/// Mean of π_6 + π_7 (orders 5 and 6) over rows in the final quarter of the
/// run's input steps.
fn top_order_mass(train: &Path) -> f64 {
    let t = Table::read(train).unwrap();
    let steps = t.f64_column("cum_input_steps").unwrap();
    let p5 = t.f64_column("pi_6").unwrap();
    let p6 = t.f64_column("pi_7").unwrap();
    let end = steps.last().unwrap().unwrap();
    let vals: Vec<f64> = (0..t.rows.len())
        .filter(|&i| steps[i].unwrap() > 0.75 * end)
        .map(|i| p5[i].unwrap() + p6[i].unwrap())
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn ngram_reproduction() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let cache = root.path().join("cache");
    let mut ok = true;
    let mut detail = Vec::new();
    for gain in [GainKind::GVCG, GainKind::L2G] {
        let mut masses = Vec::new();
        for seed in 0..NGRAM_SEEDS {
            let dir = root.path().join(format!("{gain}-{seed}"));
            harness::run(ngram_config(gain, seed, &dir, &cache)).unwrap();
            masses.push(top_order_mass(&dir.join(TRAIN_LOG)));
        }
        let mean = masses.iter().sum::<f64>() / masses.len() as f64;
        ok &= mean > 4.0 / 7.0;
        detail.push(format!("{gain} mass on orders 5-6 {mean:.3} {masses:.3?}"));
    }
    outcome(ok, format!("{} (need > {:.3})", detail.join("; "), 4.0 / 7.0))
}

// ---------------------------------------------------------------- 8 ----

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(corpus_path()).unwrap();
    let small: String = text.chars().take(60_000).collect();
    let corpus = root.path().join("small.txt");
    fs::write(&corpus, small).unwrap();

    let rc = CurriculumSpec::RepeatCopy(RepeatCopySpec {
        max_length: 3,
        max_repeats: 3,
        bit_width: 3,
    });
    let ng = CurriculumSpec::Ngram(NGramSuiteSpec {
        corpus: corpus.clone(),
        max_order: 3,
        chars_per_task: 20_000,
        ..Default::default()
    });
    let cases = [
        (rc.clone(), GainKind::PG),
        (rc.clone(), GainKind::MPG),
        (rc.clone(), GainKind::GVCG),
        (rc, GainKind::Uniform),
        (ng.clone(), GainKind::SPG),
        (ng, GainKind::GL2G),
    ];
    let mut identical = 0;
    for (i, (curriculum, gain)) in cases.iter().enumerate() {
        let mut logs = Vec::new();
        for rep in 0..2 {
            let dir = root.path().join(format!("{i}-{rep}"));
            let cfg = RunConfig {
                curriculum: curriculum.clone(),
                gain: *gain,
                mode: gain.required_mode().unwrap_or(TrainingMode::ML),
                hidden_sizes: vec![16],
                batch_size: 4,
                total_steps: 150,
                eval_every: 50,
                eval_batches: 2,
                seed: 77,
                out_dir: dir.clone(),
                ..Default::default()
            };
            harness::run(cfg).unwrap();
            logs.push(fs::read(dir.join(TRAIN_LOG)).unwrap());
        }
        if logs[0] == logs[1] && !logs[0].is_empty() {
            identical += 1;
        }
    }
    outcome(
        identical == cases.len(),
        format!("{identical}/{} configurations byte-identical on repeat", cases.len()),
    )
}
