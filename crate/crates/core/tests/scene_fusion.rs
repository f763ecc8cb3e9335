//! Scene posterior, anchor synthesis, head training, fusion and metrics.

use otfuse_core::metrics::segmentation_metrics;
use otfuse_core::oracle::count_confusion;
use otfuse_core::scene::{attribute_accuracy, head_loss_and_gradient, train_heads, LabeledEmbedding, LinearHead};
use otfuse_core::tensor::tensor_product_joint;
use otfuse_core::{
    fuse, infer_scene_posterior, synthesize_anchor, AttributeSpace, DiscreteDistribution, FeatureMap, FusionConfig,
    Matrix, PreSegProbs, PrototypeTable, SceneCombination, SceneHeads, ScenePosterior,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn space(w: usize, d: usize, r: usize) -> AttributeSpace {
    AttributeSpace::new(names("w", w), names("d", d), names("r", r)).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> DiscreteDistribution {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    DiscreteDistribution::from_weights(&w).unwrap()
}

fn random_table(rng: &mut ChaCha8Rng, space: AttributeSpace, dim: usize) -> PrototypeTable {
    let prototypes = (0..space.combination_count()).map(|_| random_matrix(rng, 2, dim)).collect();
    let meta = random_matrix(rng, 2, dim);
    PrototypeTable::new(space, vec!["t".into(), "n".into()], prototypes, meta, None).unwrap()
}

#[test]
fn joint_re_marginalises_to_its_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let (nw, nd, nr) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
        let (w, d, r) = (random_dist(&mut rng, nw), random_dist(&mut rng, nd), random_dist(&mut rng, nr));
        let joint = tensor_product_joint(&w, &d, &r).unwrap();
        let mut sums = (vec![0.0; nw], vec![0.0; nd], vec![0.0; nr]);
        for (idx, p) in joint.as_slice().iter().enumerate() {
            sums.0[idx / (nd * nr)] += p;
            sums.1[(idx / nr) % nd] += p;
            sums.2[idx % nr] += p;
        }
        for (got, want) in [(&sums.0, &w), (&sums.1, &d), (&sums.2, &r)] {
            for (g, x) in got.iter().zip(want.as_slice()) {
                assert!((g - x).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn anchor_is_linear_in_the_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let table = random_table(&mut rng, space(2, 3, 2), 6);
    let draw = |rng: &mut ChaCha8Rng| {
        ScenePosterior::from_marginals(random_dist(rng, 2), random_dist(rng, 3), random_dist(rng, 2)).unwrap()
    };
    for _ in 0..20 {
        let (p, q) = (draw(&mut rng), draw(&mut rng));
        let alpha = rng.gen_range(0.0..=1.0);
        let mixed: Vec<f64> =
            p.joint.as_slice().iter().zip(q.joint.as_slice()).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let mut mixed_post = p.clone();
        mixed_post.joint = DiscreteDistribution::new(mixed).unwrap();
        let lhs = synthesize_anchor(&mixed_post, &table).unwrap();
        let (ap, aq) = (synthesize_anchor(&p, &table).unwrap(), synthesize_anchor(&q, &table).unwrap());
        for ((l, x), y) in lhs.as_slice().iter().zip(ap.as_slice()).zip(aq.as_slice()) {
            assert!((l - (alpha * x + (1.0 - alpha) * y)).abs() <= 1e-10);
        }
    }
}

#[test]
fn every_one_hot_combination_has_an_anchor() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let sp = space(3, 2, 4);
    let table = random_table(&mut rng, sp.clone(), 5);
    for c in sp.combinations() {
        let anchor = synthesize_anchor(&ScenePosterior::one_hot(&sp, c).unwrap(), &table).unwrap();
        assert_eq!(&anchor, table.prototype(c).unwrap());
    }
}

#[test]
fn heads_learn_separable_clusters_and_gradients_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let dim = 12;
    // Category centres on distinct coordinate axes, scaled so clusters sit
    // at least 1 apart after noise.
    let centre = |slot: usize| -> Vec<f64> { (0..dim).map(|i| if i == slot { 2.0 } else { 0.0 }).collect() };
    let data: Vec<LabeledEmbedding> = (0..120)
        .map(|_| {
            let c = SceneCombination {
                weather: rng.gen_range(0..2),
                time_of_day: rng.gen_range(0..2),
                road_type: rng.gen_range(0..3),
            };
            let mut cls = vec![0.0; dim];
            for slot in [c.weather, 2 + c.time_of_day, 4 + c.road_type] {
                cls.iter_mut().zip(centre(slot)).for_each(|(x, v)| *x += v);
            }
            cls.iter_mut().for_each(|x| *x += rng.gen_range(-0.2..0.2));
            LabeledEmbedding { cls, labels: c }
        })
        .collect();
    let head = |rng: &mut ChaCha8Rng, k| LinearHead::new(random_matrix(rng, k, dim), 0.07).unwrap();
    let heads = SceneHeads { weather: head(&mut rng, 2), time_of_day: head(&mut rng, 2), road_type: head(&mut rng, 3) };
    let trained = train_heads(&data, &heads, 500, 0.1).unwrap();
    for acc in attribute_accuracy(&trained.heads, &data).unwrap() {
        assert!(acc >= 0.95, "{acc}");
    }

    let small = head(&mut rng, 3);
    let samples: Vec<(&[f64], usize)> = data[..5].iter().map(|s| (s.cls.as_slice(), s.labels.road_type)).collect();
    let (_, grad) = head_loss_and_gradient(&small, &samples).unwrap();
    let h = 1e-6;
    for idx in 0..grad.as_slice().len() {
        let shifted = |delta: f64| {
            let mut t = small.text_embeddings.as_slice().to_vec();
            t[idx] += delta;
            let head = LinearHead::new(Matrix::new(3, dim, t).unwrap(), small.tau).unwrap();
            head_loss_and_gradient(&head, &samples).unwrap().0
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        assert!((fd - grad.as_slice()[idx]).abs() <= 1e-6, "{idx}: {fd} vs {}", grad.as_slice()[idx]);
    }
}

#[test]
fn posterior_from_trained_heads_factorises() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let head = |rng: &mut ChaCha8Rng, k| LinearHead::new(random_matrix(rng, k, 4), 0.07).unwrap();
    let heads = SceneHeads { weather: head(&mut rng, 2), time_of_day: head(&mut rng, 3), road_type: head(&mut rng, 2) };
    let cls: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let post = infer_scene_posterior(&cls, &heads).unwrap();
    assert_eq!(post.joint.len(), 12);
    let direct = tensor_product_joint(&post.weather, &post.time_of_day, &post.road_type).unwrap();
    assert_eq!(post.joint, direct);
}

struct Branches {
    img: FeatureMap,
    normal: FeatureMap,
    probs_img: PreSegProbs,
    probs_normal: PreSegProbs,
    anchors: Matrix,
}

fn asymmetric_branches(seed: u64) -> Branches {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, dim) = (4, 5, 6);
    let map = |rng: &mut ChaCha8Rng| {
        FeatureMap::new(h, w, dim, (0..h * w * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    let labels = |rng: &mut ChaCha8Rng| (0..h * w).map(|_| rng.gen_range(0..2)).collect::<Vec<usize>>();
    Branches {
        img: map(&mut rng),
        normal: map(&mut rng),
        probs_img: PreSegProbs::from_labels(h, w, 2, &labels(&mut rng)).unwrap(),
        probs_normal: PreSegProbs::from_labels(h, w, 2, &labels(&mut rng)).unwrap(),
        anchors: random_matrix(&mut rng, 2, dim),
    }
}

#[test]
fn swapping_modalities_with_complementary_weight_is_bit_exact() {
    let b = asymmetric_branches(26);
    for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let cfg = FusionConfig { lambda, ..FusionConfig::default() };
        let swapped = FusionConfig { lambda: 1.0 - lambda, ..cfg };
        let a = fuse(&b.img, &b.normal, &b.probs_img, &b.probs_normal, &b.anchors, &cfg).unwrap();
        let s = fuse(&b.normal, &b.img, &b.probs_normal, &b.probs_img, &b.anchors, &swapped).unwrap();
        assert_eq!(a.fused, s.fused, "lambda {lambda}");
    }
}

#[test]
fn endpoint_weights_select_one_branch() {
    let b = asymmetric_branches(27);
    let run = |lambda| {
        let cfg = FusionConfig { lambda, ..FusionConfig::default() };
        fuse(&b.img, &b.normal, &b.probs_img, &b.probs_normal, &b.anchors, &cfg).unwrap()
    };
    let (one, zero) = (run(1.0), run(0.0));
    assert_eq!(one.fused.to_matrix(), one.projected_image);
    assert_eq!(zero.fused.to_matrix(), zero.projected_normal);
    assert_ne!(one.fused, zero.fused);
}

#[test]
fn metrics_agree_with_an_independent_counter() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for _ in 0..50 {
        let n = rng.gen_range(1..200);
        let pred: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let target: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let counts = count_confusion(&pred, &target).unwrap();
        let m = segmentation_metrics(&pred, &target).unwrap();
        let iou = |tp: u64, fp: u64, fn_: u64| {
            if tp + fp + fn_ == 0 {
                100.0
            } else {
                100.0 * tp as f64 / (tp + fp + fn_) as f64
            }
        };
        let expected =
            (iou(counts[1][1], counts[0][1], counts[1][0]) + iou(counts[0][0], counts[1][0], counts[0][1])) / 2.0;
        assert_eq!(m.miou, expected);
    }
    let m = segmentation_metrics(&[true, false, false, false], &[true, true, false, false]).unwrap();
    assert!((m.miou - 58.333).abs() < 0.01);
}
