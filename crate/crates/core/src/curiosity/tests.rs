use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::grad_check;

const SIZE: usize = 42;
const ACT: usize = 4;
const TOUCH: usize = 10;

fn config(variant: Variant) -> CuriosityConfig {
    CuriosityConfig::new(variant, SIZE, ACT)
}

fn model(variant: Variant, seed: u64) -> CuriosityModel {
    CuriosityModel::new(config(variant), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_batch(n: usize, seed: u64) -> CuriosityBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |len: usize, lo: f64, hi: f64| -> Vec<f64> { (0..len).map(|_| rng.random_range(lo..hi)).collect() };
    CuriosityBatch {
        n,
        images: v(n * SIZE * SIZE, 0.0, 1.0),
        next_images: v(n * SIZE * SIZE, 0.0, 1.0),
        touch: v(n * TOUCH, -2.0, 2.0),
        next_touch: v(n * TOUCH, -2.0, 2.0),
        actions: v(n * ACT, -1.0, 1.0),
    }
}

/// Makes the last dense layer of `net` emit `bias` regardless of input.
fn pin_output(net: &mut Network, bias: &[f64]) {
    let params = net.params_mut();
    let k = params.arrays.len();
    params.arrays[k - 2].data.iter_mut().for_each(|w| *w = 0.0);
    params.arrays[k - 1].data.copy_from_slice(bias);
}

fn straight_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |acc, (x, y)| acc.hypot(x - y))
}

#[test]
fn full_size_encoder_parameter_count() {
    let spec = encoder_spec(84).unwrap();
    // Independent tally over the valid-convolution shape walk.
    let mut size = 84;
    let mut cin = 1;
    let mut total = 0;
    for (cout, k, s) in [(32, 8, 4), (64, 4, 2), (124, 3, 1), (256, 2, 1)] {
        total += (cin * k * k + 1) * cout;
        size = (size - k) / s + 1;
        cin = cout;
    }
    assert_eq!(size, 6);
    total += (cin * size * size + 1) * 256;
    assert_eq!(total, FULL_ENCODER_PARAMS);
    assert_eq!(spec.parameter_count().unwrap(), total);
    assert_eq!(spec.layers.len(), 5);
}

#[test]
fn desk_encoder_drops_the_last_conv() {
    let spec = encoder_spec(42).unwrap();
    assert_eq!(spec.layers.len(), 4);
    assert!(matches!(encoder_spec(4), Err(CuriosityError::ImageSize(4))));
}

#[test]
fn zero_image_gives_zero_latent() {
    let net = Network::new(encoder_spec(84).unwrap(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let z = net.predict(&vec![0.0; 84 * 84], 1).unwrap();
    assert_eq!(z.len(), 256);
    assert!(z.iter().all(|&v| v == 0.0));
}

#[test]
fn encoding_is_deterministic() {
    let m = model(Variant::Toc, 1);
    let b = random_batch(1, 2);
    assert_eq!(encode(&m, &b.images).unwrap(), encode(&m, &b.images).unwrap());
}

#[test]
fn random_fixed_encoder_never_moves() {
    let mut cfg = config(Variant::Toc);
    cfg.feature_mode = FeatureMode::RandomFixed;
    let mut m = CuriosityModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let probe = random_batch(1, 99);
    let before = encode(&m, &probe.images).unwrap();
    let enc_before = m.enc.net.clone();
    for i in 0..1000 {
        curiosity_update(&mut m, &random_batch(4, i)).unwrap();
    }
    assert_eq!(encode(&m, &probe.images).unwrap(), before);
    assert_eq!(m.enc.net, enc_before);
}

#[test]
fn touch_loss_cases() {
    let mut m = model(Variant::Toc, 4);
    let b = random_batch(1, 5);
    let z = encode(&m, &b.images).unwrap();
    let pred = m.dec.net.predict(&z, 1).unwrap();
    assert_eq!(touch_loss(&m, &b.images, &pred).unwrap(), 0.0);
    let got = touch_loss(&m, &b.images, &b.touch).unwrap();
    assert!((got - straight_norm(&pred, &b.touch)).abs() <= 1e-12);

    let mut unit = vec![0.0; TOUCH];
    unit[0] = 1.0;
    pin_output(&mut m.dec.net, &unit);
    assert_eq!(touch_loss(&m, &b.images, &[0.0; TOUCH]).unwrap(), 1.0);
}

#[test]
fn fdm_loss_cases() {
    let mut m = model(Variant::Icm, 6);
    let b = random_batch(1, 7);
    let z = encode(&m, &b.images).unwrap();
    let z1 = encode(&m, &b.next_images).unwrap();
    let mut input = z.clone();
    input.extend_from_slice(&b.actions);
    let pred = m.fdm.net.predict(&input, 1).unwrap();
    let got = fdm_loss(&m, &b.images, &b.actions, &b.next_images).unwrap();
    assert!((got - straight_norm(&pred, &z1)).abs() <= 1e-12);

    pin_output(&mut m.fdm.net, &z1);
    assert_eq!(fdm_loss(&m, &b.images, &b.actions, &b.next_images).unwrap(), 0.0);
}

#[test]
fn fdm_overfits_a_static_scene() {
    let mut cfg = config(Variant::Icm);
    cfg.adam = AdamConfig::with_lr(1e-3);
    let mut m = CuriosityModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let mut b = random_batch(1, 9);
    b.next_images = b.images.clone();
    b.actions = vec![0.0; ACT];
    let initial = fdm_loss(&m, &b.images, &b.actions, &b.next_images).unwrap();
    for _ in 0..1000 {
        curiosity_update(&mut m, &b).unwrap();
    }
    let last = fdm_loss(&m, &b.images, &b.actions, &b.next_images).unwrap();
    assert!(last <= 1e-2 * initial, "{initial} -> {last}");
}

#[test]
fn intrinsic_reward_examples() {
    assert_eq!(intrinsic_reward(0.0, 0.0, 0.5).unwrap(), 0.0);
    assert_eq!(intrinsic_reward(2.0, 7.3, 0.0).unwrap(), 2.0);
    assert_eq!(intrinsic_reward(1.0, 3.0, 0.25).unwrap(), 1.5);
    assert!(matches!(intrinsic_reward(1.0, 1.0, 1.5), Err(CuriosityError::Lambda(_))));
    assert!(matches!(intrinsic_reward(1.0, 1.0, -0.1), Err(CuriosityError::Lambda(_))));
    let mut cfg = config(Variant::Toc);
    cfg.lambda = 2.0;
    assert!(CuriosityModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn fixed_batch_losses_halve() {
    let mut m = model(Variant::Toc, 10);
    let b = random_batch(8, 11);
    let first = curiosity_update(&mut m, &b).unwrap().losses;
    let mut last = first;
    for _ in 0..199 {
        last = curiosity_update(&mut m, &b).unwrap().losses;
    }
    let (a, z) = (first.l_touch + first.l_fdm, last.l_touch + last.l_fdm);
    assert!(z <= 0.5 * a, "{a} -> {z}");
}

#[test]
fn perfect_predictions_leave_parameters_unchanged() {
    let mut m = model(Variant::Toc, 12);
    let mut b = random_batch(1, 13);
    b.next_images = b.images.clone();
    b.next_touch = b.touch.clone();
    let z1 = encode(&m, &b.next_images).unwrap();
    pin_output(&mut m.dec.net, &b.touch);
    pin_output(&mut m.fdm.net, &z1);
    let before = m.clone();
    let rep = curiosity_update(&mut m, &b).unwrap();
    assert_eq!(rep.losses.l_touch, 0.0);
    assert_eq!(rep.losses.l_fdm, 0.0);
    assert!(m.enc.net.params().bit_eq(before.enc.net.params()));
    assert!(m.dec.net.params().bit_eq(before.dec.net.params()));
    assert!(m.fdm.net.params().bit_eq(before.fdm.net.params()));
}

#[test]
fn update_reports_pre_update_rewards() {
    let mut m = model(Variant::Toc, 14);
    let b = random_batch(6, 15);
    let ev = evaluate(&m, &b).unwrap();
    let rep = curiosity_update(&mut m, &b).unwrap();
    assert_eq!(rep.evaluation, ev);
    assert_ne!(evaluate(&m, &b).unwrap().records, ev.records);
}

#[test]
fn idf_only_in_idf_mode() {
    let m = model(Variant::Toc, 16);
    let b = random_batch(1, 17);
    assert!(matches!(
        inverse_dynamics_loss(&m, &b.images, &b.next_images, &b.actions),
        Err(CuriosityError::WrongMode { .. })
    ));
}

#[test]
fn idf_loss_cases_and_gradient() {
    let mut cfg = config(Variant::Toc);
    cfg.feature_mode = FeatureMode::Idf;
    let mut m = CuriosityModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(18)).unwrap();
    let b = random_batch(1, 19);
    let z = encode(&m, &b.images).unwrap();
    let z1 = encode(&m, &b.next_images).unwrap();
    let mut zz = z.clone();
    zz.extend_from_slice(&z1);
    let idf = &m.idf.as_ref().unwrap().net;
    let pred = idf.predict(&zz, 1).unwrap();
    let got = inverse_dynamics_loss(&m, &b.images, &b.next_images, &b.actions).unwrap();
    assert!((got - straight_norm(&pred, &b.actions)).abs() <= 1e-12);
    let rep = grad_check(idf, &zz, 1, 1e-4).unwrap();
    assert!(rep.passed, "{rep:?}");

    pin_output(&mut m.idf.as_mut().unwrap().net, &b.actions);
    assert_eq!(inverse_dynamics_loss(&m, &b.images, &b.next_images, &b.actions).unwrap(), 0.0);
}

/// Transitions where the gripper moves by the commanded offset, so the
/// action is recoverable from the image pair.
fn scripted_idf_dataset(n: usize, seed: u64) -> CuriosityBatch {
    use crate::env::{self, EnvConfig, Task};
    let cfg = EnvConfig::new(Task::Playing, SIZE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = CuriosityBatch {
        n,
        ..CuriosityBatch::default()
    };
    let (mut s, mut obs) = env::reset(&cfg, seed);
    for _ in 0..n {
        if s.done || s.step > 150 {
            (s, obs) = env::reset(&cfg, rng.random());
        }
        let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0, 0.0];
        let out = env::step(&mut s, &a).unwrap();
        obs.image.write_unit_into(&mut b.images);
        out.observation.image.write_unit_into(&mut b.next_images);
        b.touch.extend_from_slice(&obs.touch);
        b.next_touch.extend_from_slice(&out.observation.touch);
        b.actions.extend_from_slice(&a);
        obs = out.observation;
    }
    b
}

#[test]
fn idf_head_beats_chance_on_scripted_moves() {
    let mut cfg = config(Variant::Toc);
    cfg.feature_mode = FeatureMode::Idf;
    cfg.adam = AdamConfig::with_lr(1e-3);
    let mut m = CuriosityModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(20)).unwrap();
    let data = scripted_idf_dataset(256, 21);
    // Chance: always predicting the mean action.
    let mut mean_a = [0.0; ACT];
    for row in data.actions.chunks(ACT) {
        for j in 0..ACT {
            mean_a[j] += row[j] / data.n as f64;
        }
    }
    let chance: f64 = data.actions.chunks(ACT).map(|a| straight_norm(a, &mean_a)).sum::<f64>() / data.n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..500 {
        let idx: Vec<usize> = (0..32).map(|_| rng.random_range(0..data.n)).collect();
        curiosity_update(&mut m, &subset(&data, &idx)).unwrap();
    }
    let loss: f64 = (0..data.n)
        .map(|i| {
            let s = subset(&data, &[i]);
            inverse_dynamics_loss(&m, &s.images, &s.next_images, &s.actions).unwrap()
        })
        .sum::<f64>()
        / data.n as f64;
    assert!(loss < 0.75 * chance, "idf {loss} vs chance {chance}");
}

fn subset(b: &CuriosityBatch, idx: &[usize]) -> CuriosityBatch {
    let pick = |v: &[f64], d: usize| -> Vec<f64> { idx.iter().flat_map(|&i| v[i * d..(i + 1) * d].iter().copied()).collect() };
    let px = SIZE * SIZE;
    CuriosityBatch {
        n: idx.len(),
        images: pick(&b.images, px),
        next_images: pick(&b.next_images, px),
        touch: pick(&b.touch, TOUCH),
        next_touch: pick(&b.next_touch, TOUCH),
        actions: pick(&b.actions, ACT),
    }
}

#[test]
fn identical_ensemble_has_no_disagreement() {
    let mut m = model(Variant::Disagreement, 24);
    let first = m.ensemble[0].clone();
    for member in m.ensemble.iter_mut() {
        *member = first.clone();
    }
    let ev = evaluate(&m, &random_batch(5, 25)).unwrap();
    assert!(ev.records.iter().all(|r| r.r_int == 0.0));
}

#[test]
fn rnd_with_copied_target_is_silent() {
    let mut m = model(Variant::Rnd, 26);
    let r = m.rnd.as_mut().unwrap();
    let target = r.target.clone();
    *r.predictor.net.params_mut() = target.params().clone();
    let ev = evaluate(&m, &random_batch(5, 27)).unwrap();
    assert!(ev.records.iter().all(|r| r.r_int == 0.0));
}

#[test]
fn icm_matches_lambda_one() {
    let m = model(Variant::Icm, 28);
    let b = random_batch(3, 29);
    for r in evaluate(&m, &b).unwrap().records {
        assert_eq!(r.r_int, intrinsic_reward(r.l_touch, r.l_fdm, 1.0).unwrap());
    }
    let r = variant_reward(&m, &b.images[..SIZE * SIZE], &b.touch[..TOUCH], &b.actions[..ACT], &b.next_images[..SIZE * SIZE], &b.next_touch[..TOUCH]).unwrap();
    assert_eq!(r, evaluate(&m, &subset(&b, &[0])).unwrap().records[0].r_int);
}

#[test]
fn toc_future_averages_in_touch_forward_error() {
    let m = model(Variant::TocFuture, 30);
    let b = random_batch(2, 31);
    let ev = evaluate(&m, &b).unwrap();
    let t = m.tfm.as_ref().unwrap();
    for (i, r) in ev.records.iter().enumerate() {
        let mut ha = b.touch[i * TOUCH..(i + 1) * TOUCH].to_vec();
        ha.extend_from_slice(&b.actions[i * ACT..(i + 1) * ACT]);
        let p = t.net.predict(&ha, 1).unwrap();
        let l_tfm = straight_norm(&p, &b.next_touch[i * TOUCH..(i + 1) * TOUCH]);
        let expected = ((0.5 * r.l_touch + 0.5 * r.l_fdm) + l_tfm) / 2.0;
        assert!((r.r_int - expected).abs() <= 1e-12);
    }
}

#[test]
fn every_network_passes_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let specs = [
        encoder_spec(12).unwrap(),
        decoder_spec(TOUCH),
        fdm_spec(ACT),
        idf_spec(ACT),
        rnd_spec(),
        tfm_spec(TOUCH, ACT),
    ];
    for spec in specs {
        let net = Network::new(spec, &mut rng).unwrap();
        let x: Vec<f64> = (0..2 * net.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rep = grad_check(&net, &x, 2, 1e-4).unwrap();
        assert!(rep.passed, "{rep:?}");
    }
}

#[test]
fn mean_norm_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (n, d) = (3, 5);
    let pred: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |p: &[f64]| mean(&row_norms(p, &target, d));
    let g = mean_norm_grad(&pred, &target, &row_norms(&pred, &target, d), d);
    for j in 0..n * d {
        let mut hi = pred.clone();
        let mut lo = pred.clone();
        hi[j] += 1e-6;
        lo[j] -= 1e-6;
        let num = (loss(&hi) - loss(&lo)) / 2e-6;
        assert!((num - g[j]).abs() <= 1e-8, "{j}: {num} vs {}", g[j]);
    }
}

#[test]
fn names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    for f in [FeatureMode::Learned, FeatureMode::RandomFixed, FeatureMode::Idf] {
        assert_eq!(f.name().parse::<FeatureMode>().unwrap(), f);
    }
    assert!("curious".parse::<Variant>().is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reward_lies_between_losses(lt in 0.0f64..100.0, lf in 0.0f64..100.0, lambda in 0.0f64..=1.0) {
            let r = intrinsic_reward(lt, lf, lambda).unwrap();
            prop_assert!(r >= 0.0);
            prop_assert!(r >= lt.min(lf) * (1.0 - 1e-15) && r <= lt.max(lf) * (1.0 + 1e-15));
        }

        #[test]
        fn reward_increases_with_lambda(lt in 0.0f64..10.0, gap in 1e-3f64..10.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let lf = lt + gap;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(intrinsic_reward(lt, lf, lo).unwrap() < intrinsic_reward(lt, lf, hi).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn endpoints_are_bit_equal(seed in 0u64..1000) {
            let b = random_batch(4, seed);
            let mut c0 = config(Variant::Toc);
            c0.lambda = 0.0;
            let mut c1 = config(Variant::Toc);
            c1.lambda = 1.0;
            let build = |c: CuriosityConfig| CuriosityModel::new(c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let r0 = evaluate(&build(c0), &b).unwrap().records;
            let r1 = evaluate(&build(c1), &b).unwrap().records;
            let pure = evaluate(&build(config(Variant::TocPure)), &b).unwrap().records;
            let icm = evaluate(&build(config(Variant::Icm)), &b).unwrap().records;
            for i in 0..4 {
                prop_assert_eq!(r0[i].r_int.to_bits(), pure[i].r_int.to_bits());
                prop_assert_eq!(r1[i].r_int.to_bits(), icm[i].r_int.to_bits());
            }
        }

        #[test]
        fn every_variant_is_nonnegative(seed in 0u64..1000) {
            let b = random_batch(3, seed);
            for v in Variant::ALL {
                let m = model(v, seed);
                for r in evaluate(&m, &b).unwrap().records {
                    prop_assert!(r.r_int >= 0.0 && r.r_int.is_finite());
                }
            }
        }
    }
}

