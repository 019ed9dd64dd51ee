mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xctrl::gmm::{em_fit, em_fit_traced, em_run, select_k, EmConfig, MixtureModel};
use xctrl::Point;

fn draw(model: &MixtureModel, n: usize, seed: u64) -> Vec<Point> {
    model.sample(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn cfg() -> EmConfig {
    EmConfig { min_points: 0, restarts: 3, ..EmConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_never_decreases(seed in any::<u64>(), k in 1usize..6, n in 40usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = common::random_model(&mut rng, 3);
        let pts = draw(&truth, n, seed ^ 1);
        let fit = em_run(&pts, k, None, seed, &cfg()).unwrap();
        for w in fit.loglik_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fitted_models_are_valid(seed in any::<u64>(), k in 1usize..6, n in 30usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = draw(&common::random_model(&mut rng, 2), n, seed ^ 2);
        let cfg = cfg();
        let m = em_fit(&pts, k, None, seed, &cfg).unwrap();
        prop_assert!(m.validate().is_ok());
        prop_assert_eq!(m.components.len(), k);
        let wsum: f64 = m.components.iter().map(|c| c.weight).sum();
        prop_assert!((wsum - 1.0).abs() < 1e-9);
        for c in &m.components {
            let (lo, _) = c.cov.eigenvalues();
            prop_assert!(lo >= cfg.reg_floor * (1.0 - 1e-9));
        }
    }

    #[test]
    fn scaling_all_weights_changes_nothing(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = draw(&common::random_model(&mut rng, 2), 150, seed ^ 3);
        let w: Vec<f64> = (0..pts.len()).map(|i| 0.5 + (i % 3) as f64).collect();
        let ws: Vec<f64> = w.iter().map(|x| x * scale).collect();
        let a = em_fit(&pts, 2, Some(&w), seed, &cfg()).unwrap();
        let b = em_fit(&pts, 2, Some(&ws), seed, &cfg()).unwrap();
        for (ca, cb) in a.components.iter().zip(&b.components) {
            prop_assert!((ca.weight - cb.weight).abs() < 1e-6);
            prop_assert!((ca.mean.0 - cb.mean.0).abs() < 1e-6 && (ca.mean.1 - cb.mean.1).abs() < 1e-6);
        }
    }
}

#[test]
fn same_seed_same_fit() {
    let pts = draw(&common::planted(2, 3.0), 400, 5);
    let a = em_fit(&pts, 2, None, 11, &cfg()).unwrap();
    let b = em_fit(&pts, 2, None, 11, &cfg()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn recovers_well_separated_components() {
    let truth = common::planted(3, 3.0);
    let pts = draw(&truth, 1500, 8);
    let m = em_fit(&pts, 3, None, 4, &cfg()).unwrap();
    for t in &truth.components {
        let best = m
            .components
            .iter()
            .min_by(|a, b| {
                let d = |c: &xctrl::gmm::GaussianComponent| (c.mean.0 - t.mean.0).hypot(c.mean.1 - t.mean.1);
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        assert!((best.mean.0 - t.mean.0).hypot(best.mean.1 - t.mean.1) < 1.0);
        assert!((best.weight - t.weight).abs() < 0.05);
    }
}

#[test]
fn traced_fit_reports_final_likelihood() {
    let pts = draw(&common::planted(2, 3.0), 300, 2);
    let fit = em_fit_traced(&pts, 2, None, 9, &cfg()).unwrap();
    let last = *fit.loglik_trace.last().unwrap();
    let direct = fit.model.mean_log_likelihood(&pts, None).unwrap();
    assert!((last - direct).abs() < 1e-6, "{last} vs {direct}");
}

#[test]
fn select_k_prefers_one_for_a_single_blob() {
    let pts = draw(&common::planted(1, 4.0), 600, 3);
    let sel = select_k(&pts, None, 1, &EmConfig { k_max: 4, ..cfg() }).unwrap();
    assert_eq!(sel.model.components.len(), 1);
    assert_eq!(sel.candidates.len(), 4);
}
