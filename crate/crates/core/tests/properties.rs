use proptest::prelude::*;

use mrbm::data::container::{Container, StoredModel};
use mrbm::data::pgm::{level_to_unit, unit_to_level, GrayImage};
use mrbm::eval::{derangement, fit_probe_traced, match_rate, seg_accuracy, wilson_interval, ProbeConfig};
use mrbm::masked::{GibbsConfig, MaskedModel, OutlierConfig};
use mrbm::rbm::{BetaRbmParams, BinaryShapeParams, MixedRbmParams};
use mrbm::rng::stream;
use mrbm::EPS_BETA;

const N_PIX: usize = 4;
const N_HID: usize = 3;

fn floats(n: usize, scale: f32) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-scale..scale, n)
}

fn beta_params(scale: f32) -> impl Strategy<Value = BetaRbmParams> {
    (
        floats(N_PIX * N_HID, scale),
        floats(N_PIX * N_HID, scale),
        floats(N_PIX, scale),
        floats(N_PIX, scale),
        floats(N_HID, scale),
    )
        .prop_map(|(u, v, a, c, b)| BetaRbmParams::from_parts(N_PIX, N_HID, u, v, a, c, b).unwrap())
}

fn masked_model() -> impl Strategy<Value = MaskedModel> {
    (beta_params(3.0), beta_params(3.0), floats(N_PIX * N_HID, 3.0), floats(N_PIX, 3.0)).prop_map(|(app, bg, w, b)| {
        let shape = BinaryShapeParams::from_parts(N_PIX, N_HID, w, b).unwrap();
        MaskedModel::new(MixedRbmParams::new(shape, app).unwrap(), bg).unwrap()
    })
}

fn image() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..0.99, N_PIX)
}

fn binary_h() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| b as u8 as f64), N_HID)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn visible_shapes_respect_the_floor(p in beta_params(50.0), h in binary_h()) {
        let s = p.visible_conditional(&h).unwrap();
        prop_assert!(s.alpha.iter().chain(&s.beta).all(|&x| x >= EPS_BETA && x.is_finite()));
    }

    #[test]
    fn hidden_means_are_probabilities(p in beta_params(5.0), x in image()) {
        prop_assert!(p.hidden_conditional(&x).unwrap().iter().all(|&q| (0.0..=1.0).contains(&q)));
    }

    #[test]
    fn sweeps_keep_the_observation_constraints(
        model in masked_model(),
        x in image(),
        seed in any::<u64>(),
        outliers in any::<bool>(),
    ) {
        let out = if outliers { OutlierConfig::enabled(0.3).unwrap() } else { OutlierConfig::disabled() };
        let mut rng = stream(seed, &[]);
        let mut s = model.init_state(&x, &out, &mut rng).unwrap();
        prop_assert!(s.satisfies_constraints(&x));
        for _ in 0..5 {
            s = model.gibbs_sweep(&s, &x, &out, &mut rng).unwrap();
            prop_assert!(s.satisfies_constraints(&x));
            if !outliers {
                prop_assert!(s.outlier.iter().all(|&o| !o));
            }
        }
    }

    #[test]
    fn disabled_outliers_equal_zero_prior(model in masked_model(), x in image(), hf in binary_h(), hb in binary_h()) {
        let off = model.mask_posterior(&hf, &hb, &x, &OutlierConfig::disabled()).unwrap();
        let zero = model.mask_posterior(&hf, &hb, &x, &OutlierConfig::enabled(0.0).unwrap()).unwrap();
        prop_assert_eq!(off, zero);
    }

    #[test]
    fn outlier_prior_one_never_uses_background(model in masked_model(), x in image(), hf in binary_h(), hb in binary_h()) {
        let post = model.outlier_posterior(&hb, &x, &vec![false; N_PIX], &OutlierConfig::enabled(1.0).unwrap()).unwrap();
        prop_assert!(post.iter().all(|&p| p == 1.0));
        let m = model.mask_posterior(&hf, &hb, &x, &OutlierConfig::enabled(0.5).unwrap()).unwrap();
        prop_assert!(m.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn segmentation_is_seeded(model in masked_model(), x in image(), seed in any::<u64>()) {
        let cfg = GibbsConfig::new(6, 3, seed).unwrap();
        let out = OutlierConfig::enabled(0.3).unwrap();
        let a = model.segment_batch(&[x.clone(), x.clone()], &out, &cfg).unwrap();
        let b = model.segment_batch(&[x.clone(), x], &out, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a[0].mask_probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn accuracy_symmetric_under_joint_complement(
        pair in prop::collection::vec((any::<bool>(), any::<bool>()), 1..300),
    ) {
        let (a, b): (Vec<bool>, Vec<bool>) = pair.into_iter().unzip();
        let na: Vec<bool> = a.iter().map(|x| !x).collect();
        let nb: Vec<bool> = b.iter().map(|x| !x).collect();
        prop_assert_eq!(seg_accuracy(&a, &b).unwrap(), seg_accuracy(&na, &nb).unwrap());
        prop_assert_eq!(seg_accuracy(&a, &b).unwrap(), seg_accuracy(&b, &a).unwrap());
    }

    #[test]
    fn match_rate_invariant_under_common_permutation(
        feats in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 2..20),
        noise in prop::collection::vec(-0.3f64..0.3, 60),
        seed in any::<u64>(),
    ) {
        let n = feats.len();
        let b: Vec<Vec<f64>> = feats
            .iter()
            .enumerate()
            .map(|(i, f)| f.iter().enumerate().map(|(j, v)| v + noise[(3 * i + j) % 60]).collect())
            .collect();
        let perm = derangement(n, &mut stream(seed, &[])).unwrap();
        let pa: Vec<Vec<f64>> = perm.iter().map(|&k| feats[k].clone()).collect();
        let pb: Vec<Vec<f64>> = perm.iter().map(|&k| b[k].clone()).collect();
        prop_assert_eq!(match_rate(&feats, &b).unwrap().value, match_rate(&pa, &pb).unwrap().value);
    }

    #[test]
    fn probe_loss_never_increases(
        xs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 4..30),
        lambda in 0.0f64..1.0,
    ) {
        let labels: Vec<bool> = (0..xs.len()).map(|i| i % 2 == 0).collect();
        let cfg = ProbeConfig { l2_lambda: lambda, iterations: 200, ..ProbeConfig::default() };
        let (_, losses) = fit_probe_traced(&xs, &labels, &cfg).unwrap();
        for w in losses.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn derangements_have_no_fixed_points(n in 2usize..200, seed in any::<u64>()) {
        let p = derangement(n, &mut stream(seed, &[])).unwrap();
        let mut sorted = p.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        prop_assert!(p.iter().enumerate().all(|(i, &j)| i != j));
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(k in 0usize..500, extra in 1usize..500) {
        let n = k + extra;
        let p = k as f64 / n as f64;
        let (lo, hi) = wilson_interval(p, n);
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }

    #[test]
    fn containers_round_trip_bit_exactly(model in masked_model()) {
        let stored = StoredModel::Masked(model);
        let bytes = stored.to_container(Default::default()).to_bytes().unwrap();
        let back = StoredModel::from_container(&Container::from_bytes(&bytes).unwrap()).unwrap();
        prop_assert_eq!(&back, &stored);
        prop_assert_eq!(back.to_container(Default::default()).to_bytes().unwrap(), bytes);
    }

    #[test]
    fn images_round_trip_through_quantisation(levels in prop::collection::vec(any::<u8>(), 12)) {
        let img = GrayImage::new(4, 3, levels.clone()).unwrap();
        let back = GrayImage::decode(&img.encode()).unwrap();
        prop_assert_eq!(&back, &img);
        let again = GrayImage::from_unit(4, 3, &back.to_unit()).unwrap();
        prop_assert_eq!(&again, &img);
        for &k in &levels {
            prop_assert_eq!(level_to_unit(k), (k as f64 + 0.5) / 256.0);
            prop_assert_eq!(unit_to_level(level_to_unit(k)), k);
        }
    }

    #[test]
    fn masks_round_trip(mask in prop::collection::vec(any::<bool>(), 20)) {
        let img = GrayImage::from_mask(5, 4, &mask).unwrap();
        prop_assert!(img.pixels.iter().all(|&p| p == 0 || p == 255));
        prop_assert_eq!(GrayImage::decode(&img.encode()).unwrap().to_mask(), mask);
    }
}
