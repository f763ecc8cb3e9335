use criterion::{criterion_group, criterion_main, Criterion};
use otfuse_bench::{fusion_inputs, rng};
use otfuse_core::fusion::DEFAULT_EPS_NORM;
use otfuse_core::{fuse, predict_mask, FusionConfig, SinkhornConfig};

fn fusion(c: &mut Criterion) {
    let mut group = c.benchmark_group("fuse");
    for (h, w) in [(16, 16), (32, 32)] {
        let x = fusion_inputs(&mut rng(3), h, w, 16, 2);
        for eps in [0.01, 0.05] {
            let cfg = FusionConfig { sinkhorn: SinkhornConfig::default().with_epsilon(eps), ..FusionConfig::default() };
            group.bench_function(format!("{h}x{w}/eps{eps}"), |b| {
                b.iter(|| fuse(&x.image, &x.normal, &x.probs_image, &x.probs_normal, &x.anchors, &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn masks(c: &mut Criterion) {
    let x = fusion_inputs(&mut rng(4), 32, 32, 16, 2);
    c.bench_function("predict_mask/32x32", |b| {
        b.iter(|| predict_mask(&x.anchors, &x.image, DEFAULT_EPS_NORM).unwrap())
    });
}

criterion_group!(benches, fusion, masks);
criterion_main!(benches);
