use criterion::{black_box, criterion_group, criterion_main, Criterion};
use syllabus::bandit::{Bandit, BanditConfig};
use syllabus::nn::{Batch, Head, Model, NetSpec};
use syllabus::rng;
use syllabus::scaler::{RewardScaler, ScalerConfig};

fn filled_batch(t: usize, inp: usize, out: usize) -> Batch {
    let mut b = Batch::zeros(0, vec![t; 16], inp, out);
    for (i, x) in b.inputs.iter_mut().enumerate() {
        *x = if i % 3 == 0 { 1.0 } else { 0.0 };
    }
    for (i, y) in b.targets.iter_mut().enumerate() {
        *y = if i % out == 0 { 1.0 } else { 0.0 };
    }
    for m in b.mask.iter_mut() {
        *m = 1.0;
    }
    b
}

fn lstm(c: &mut Criterion) {
    // repeat copy (width 3, l = r = 6) and n-gram (≈90 symbols) shapes
    for (name, inp, out, head, t) in [
        ("repeat_copy", 5, 4, Head::Sigmoid, 45),
        ("ngram", 90, 90, Head::Softmax, 150),
    ] {
        let spec = NetSpec::new(inp, vec![64], out, head);
        let model = Model::init(spec, &mut rng::stream(1, &[])).unwrap();
        let batch = filled_batch(t, inp, out);
        c.bench_function(&format!("lstm64_{name}_loss"), |b| {
            b.iter(|| model.loss(black_box(&batch)).unwrap())
        });
        c.bench_function(&format!("lstm64_{name}_loss_and_grad"), |b| {
            b.iter(|| model.loss_and_grad(black_box(&batch)).unwrap())
        });
    }
}

fn bandit(c: &mut Criterion) {
    let mut band = Bandit::new(BanditConfig::new(36)).unwrap();
    let mut i = 0usize;
    c.bench_function("exp3s_update_36_arms", |b| {
        b.iter(|| {
            band.policy();
            i = (i + 7) % 36;
            band.update(i, black_box(0.3)).unwrap();
        })
    });
}

fn scaler(c: &mut Criterion) {
    let mut s = RewardScaler::new(ScalerConfig::default(), 1).unwrap();
    let mut x = 0.0f64;
    c.bench_function("scaler_scale_then_observe", |b| {
        b.iter(|| {
            x = (x + 0.618).fract();
            let y = s.scale(black_box(x));
            s.observe(x).unwrap();
            y
        })
    });
}

criterion_group!(benches, lstm, bandit, scaler);
criterion_main!(benches);
