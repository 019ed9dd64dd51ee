mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xctrl::gmm::{GaussianComponent, MixtureModel};
use xctrl::intent::{euclidean_delta, expected_distance, mean_xctrl, posterior, score_pitch};

fn model_and_pitch(seed: u64, k: usize, pick: usize, ox: f64, oz: f64) -> (MixtureModel, (f64, f64)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = common::random_model(&mut rng, k);
    let c = &m.components[pick % k];
    (m.clone(), (c.mean.0 + ox, c.mean.1 + oz))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn posterior_is_a_distribution_matching_bayes(seed in any::<u64>(), k in 1usize..7, pick in 0usize..7,
                                                  ox in -12.0f64..12.0, oz in -12.0f64..12.0) {
        let (m, p) = model_and_pitch(seed, k, pick, ox, oz);
        let post = posterior(p, &m).unwrap();
        let s: f64 = post.probabilities.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
        prop_assert!(post.probabilities.iter().all(|&q| (0.0..=1.0).contains(&q)));
        for (a, b) in post.probabilities.iter().zip(common::bayes_fraction(p, &m)) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn xctrl_between_nearest_and_farthest_target(seed in any::<u64>(), k in 1usize..7, pick in 0usize..7,
                                                 ox in -30.0f64..30.0, oz in -30.0f64..30.0) {
        let (m, p) = model_and_pitch(seed, k, pick, ox, oz);
        let s = score_pitch(p, &m).unwrap();
        let d = &s.posterior.distances;
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(0.0, f64::max);
        prop_assert!(s.xctrl >= lo - 1e-9 && s.xctrl <= hi + 1e-9);
        prop_assert!(s.xctrl >= 0.0);
    }

    #[test]
    fn xctrl_is_translation_invariant(seed in any::<u64>(), k in 1usize..5, pick in 0usize..5,
                                      ox in -6.0f64..6.0, oz in -6.0f64..6.0,
                                      tx in -20.0f64..20.0, tz in -20.0f64..20.0) {
        let (m, p) = model_and_pitch(seed, k, pick, ox, oz);
        let shifted = MixtureModel::from_components(
            m.components.iter().map(|c| GaussianComponent { mean: (c.mean.0 + tx, c.mean.1 + tz), ..c.clone() }).collect(),
        );
        let a = score_pitch(p, &m).unwrap().xctrl;
        let b = score_pitch((p.0 + tx, p.1 + tz), &shifted).unwrap().xctrl;
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a), "{a} vs {b}");
    }

    #[test]
    fn single_target_xctrl_is_distance(seed in any::<u64>(), ox in -20.0f64..20.0, oz in -20.0f64..20.0) {
        let (m, p) = model_and_pitch(seed, 1, 0, ox, oz);
        let s = score_pitch(p, &m).unwrap();
        prop_assert_eq!(s.posterior.probabilities.clone(), vec![1.0]);
        prop_assert!((s.xctrl - euclidean_delta(p, m.components[0].mean)).abs() < 1e-12);
    }
}

#[test]
fn far_pitch_keeps_finite_posterior() {
    // every density underflows in linear space here
    let (m, _) = model_and_pitch(3, 3, 0, 0.0, 0.0);
    let post = posterior((500.0, -400.0), &m).unwrap();
    assert!((post.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(post.xctrl().is_finite());
}

#[test]
fn mean_xctrl_averages_pitches() {
    let (m, _) = model_and_pitch(9, 2, 0, 0.0, 0.0);
    let pts = [(0.0, 30.0), (4.0, 26.0), (-8.0, 40.0)];
    let direct: f64 = pts.iter().map(|&p| score_pitch(p, &m).unwrap().xctrl).sum::<f64>() / 3.0;
    assert!((mean_xctrl(&pts, &m).unwrap() - direct).abs() < 1e-12);
    assert!(mean_xctrl(&[], &m).is_err());
    assert_eq!(expected_distance(&[0.25, 0.75], &[4.0, 8.0]), 7.0);
}
