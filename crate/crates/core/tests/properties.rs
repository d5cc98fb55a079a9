//! Randomised invariants across the public API.

use proptest::prelude::*;
use puffnet_core::extractors::{ContentExtractorConfig, StyleExtractorConfig};
use puffnet_core::imageio::nearest_multiple;
use puffnet_core::losses::{channel_stats, content_loss, style_loss, total_loss, LossParts};
use puffnet_core::mac;
use puffnet_core::stylizer::{attention_cost, attention_pass, EncoderLayer};
use puffnet_core::trainer::checkpoint::{decode, encode, Record};
use puffnet_core::trainer::lr_at;
use puffnet_core::{
    AttentionMode, ContentExtractor, LossWeights, ModelConfig, Parameters, PerceptualNet, PuffNetModel, Rng,
    StyleExtractor, Tensor, TrainConfig,
};

fn tensor(shape: Vec<usize>, seed: u64, lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, Rng::new(seed).uniform_vec(n, lo, hi)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_matches_naive(m in 1usize..8, k in 1usize..8, n in 1usize..8, seed in any::<u64>()) {
        let a = tensor(vec![m, k], seed, -1.0, 1.0);
        let b = tensor(vec![k, n], seed ^ 1, -1.0, 1.0);
        let (c, counts) = mac::count(|| a.matmul(&b).unwrap());
        prop_assert_eq!(counts.total(), (m * k * n) as u64);
        for i in 0..m {
            for j in 0..n {
                let want: f32 = (0..k).map(|t| a.data()[i * k + t] * b.data()[t * n + j]).sum();
                prop_assert!((c.data()[i * n + j] - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn inn_core_inverts(seed in any::<u64>(), blocks in 1usize..4) {
        let ex = ContentExtractor::new(&mut Rng::new(seed), ContentExtractorConfig { blocks });
        let y = tensor(vec![1, 16, 8, 8], seed.wrapping_add(7), -1.0, 1.0);
        let back = ex.inn_inverse(&ex.inn_forward(&y).unwrap()).unwrap();
        let err = back.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        prop_assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn extractors_keep_shape_and_range(seed in any::<u64>(), gh in 1usize..4, gw in 1usize..4) {
        let img = tensor(vec![1, 3, 8 * gh, 8 * gw], seed, 0.0, 1.0);
        let c = ContentExtractor::new(&mut Rng::new(seed), ContentExtractorConfig::default());
        let s = StyleExtractor::new(&mut Rng::new(seed), StyleExtractorConfig::default()).unwrap();
        for out in [c.forward(&img).unwrap(), s.forward(&img).unwrap()] {
            prop_assert_eq!(out.shape(), img.shape());
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn concat_self_quadratic_is_four_times_cross(len in 1usize..40, heads in 1usize..4, per_head in 1usize..6) {
        let width = heads * per_head;
        let cross = attention_cost(len, width, AttentionMode::Cross);
        let concat = attention_cost(len, width, AttentionMode::ConcatSelf);
        prop_assert_eq!(concat.quadratic, 4 * cross.quadratic);
        let layer = EncoderLayer::new(&mut Rng::new(len as u64), width, heads).unwrap();
        let x = tensor(vec![len, width], 1, -1.0, 1.0);
        let s = tensor(vec![len, width], 2, -1.0, 1.0);
        let pos = tensor(vec![len, width], 3, -1.0, 1.0);
        for (mode, want) in [(AttentionMode::Cross, cross), (AttentionMode::ConcatSelf, concat)] {
            let (_, got) = mac::count(|| attention_pass(&layer, &x, &s, &pos, mode).unwrap());
            prop_assert_eq!((got.quadratic, got.projection), (want.quadratic, want.projection));
        }
    }

    #[test]
    fn style_stats_ignore_spatial_order(seed in any::<u64>()) {
        let f = tensor(vec![1, 4, 3, 5], seed, -2.0, 2.0);
        let mut order: Vec<usize> = (0..15).collect();
        Rng::new(seed).shuffle(&mut order);
        let mut shuffled = vec![0.0; 60];
        for c in 0..4 {
            for (dst, &src) in order.iter().enumerate() {
                shuffled[c * 15 + dst] = f.data()[c * 15 + src];
            }
        }
        let g = Tensor::new(vec![1, 4, 3, 5], shuffled).unwrap();
        let ((m1, v1), (m2, v2)) = (channel_stats(&f).unwrap(), channel_stats(&g).unwrap());
        for (a, b) in m1.data().iter().chain(v1.data()).zip(m2.data().iter().chain(v2.data())) {
            prop_assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn losses_are_nonnegative(seed in any::<u64>()) {
        let net = PerceptualNet::seeded(seed % 4);
        let a = tensor(vec![1, 3, 32, 32], seed, 0.0, 1.0);
        let b = tensor(vec![1, 3, 32, 32], seed ^ 9, 0.0, 1.0);
        prop_assert!(content_loss(&a, &b, &net).unwrap().item() >= 0.0);
        prop_assert!(style_loss(&a, &b, &net).unwrap().item() >= 0.0);
    }

    #[test]
    fn total_loss_is_linear_per_component(vals in prop::array::uniform5(0.0f32..10.0), k in 0usize..5, d in 0.1f32..5.0) {
        let w = LossWeights::default();
        let lambdas = [w.lambda_c, w.lambda_s, w.lambda_fe, w.lambda_id1, w.lambda_id2];
        let base = total_loss(&LossParts::from_values(vals), &w).unwrap().item();
        let mut bumped = vals;
        bumped[k] += d;
        let moved = total_loss(&LossParts::from_values(bumped), &w).unwrap().item();
        prop_assert!(((moved - base) - lambdas[k] * d).abs() < 1e-3 * (1.0 + base.abs()));
    }

    #[test]
    fn lr_schedule_is_monotone_and_capped(total in 10u64..2000, t in 0u64..2000) {
        let cfg = TrainConfig::with_iters(total);
        let (a, b) = (lr_at(t, &cfg), lr_at(t + 1, &cfg));
        prop_assert!(a <= b + 1e-15);
        prop_assert!(b <= cfg.base_lr + 1e-15);
        if cfg.warmup_steps > 0 {
            prop_assert!(b - a <= cfg.base_lr / cfg.warmup_steps as f64 + 1e-12);
        }
    }

    #[test]
    fn nearest_multiple_is_closest(n in 1usize..5000) {
        let m = nearest_multiple(n, 8);
        prop_assert!(m.is_multiple_of(8) && m > 0);
        prop_assert!(m.abs_diff(n) <= 4 || n < 4);
    }

    #[test]
    fn checkpoint_records_roundtrip(
        dims in prop::collection::vec(1usize..5, 0..4),
        name in "[a-z][a-z0-9_.]{0,20}",
        seed in any::<u64>(),
    ) {
        let n = dims.iter().product();
        let data: Vec<f32> = Rng::new(seed).uniform_vec(n, -1e3, 1e3);
        let rec = Record { name, dims, data };
        let back = decode(&encode(std::slice::from_ref(&rec)).unwrap()).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(&back[0].name, &rec.name);
        prop_assert_eq!(&back[0].dims, &rec.dims);
        prop_assert!(back[0].data.iter().zip(&rec.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn zero_weight_encoder_layer_is_identity() {
    let mut layer = EncoderLayer::new(&mut Rng::new(3), 16, 2).unwrap();
    layer.attn.visit_params_mut("", &mut |_, t| *t = Tensor::zeros(t.shape().to_vec()));
    layer.ffn.visit_params_mut("", &mut |_, t| *t = Tensor::zeros(t.shape().to_vec()));
    let x = tensor(vec![5, 16], 1, -1.0, 1.0);
    let y = layer
        .forward(&x, &tensor(vec![5, 16], 2, -1.0, 1.0), &tensor(vec![5, 16], 3, -1.0, 1.0))
        .unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn same_seed_same_everything() {
    let a = PuffNetModel::new(ModelConfig::default(), 11).unwrap();
    let b = PuffNetModel::new(ModelConfig::default(), 11).unwrap();
    let c = PuffNetModel::new(ModelConfig::default(), 12).unwrap();
    let flat = |m: &PuffNetModel| m.named_params().into_iter().flat_map(|(_, t)| t.to_vec()).collect::<Vec<_>>();
    assert_eq!(flat(&a), flat(&b));
    assert_ne!(flat(&a), flat(&c));
}
