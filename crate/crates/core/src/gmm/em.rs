//! Expectation-maximisation for bivariate Gaussian mixtures with optional
//! fixed per-point sample weights.

use rand::Rng;

use super::{prepare, sort_components, Cov2, EmConfig, GaussianComponent, MixtureModel};
use crate::error::{Error, Result};
use crate::seed;
use crate::Point;

/// Outcome of one EM run from one initialisation.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: MixtureModel,
    /// Mean per-point log-likelihood before each M-step, then at the end.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Slack allowed on the per-iteration likelihood check.
pub(crate) const MONOTONE_SLACK: f64 = 1e-8;

fn check_inputs(points: &[Point], k: usize, weights: Option<&[f64]>) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints { required: k, got: points.len() });
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::InvalidInput("non-finite location".into()));
    }
    if let Some(w) = weights {
        if w.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} points",
                w.len(),
                points.len()
            )));
        }
        if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput("sample weights must be positive".into()));
        }
    }
    if k >= 2 {
        let mut distinct: Vec<(u64, u64)> = points.iter().map(|p| (p.0.to_bits(), p.1.to_bits())).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < k {
            return Err(Error::DegenerateFit(format!(
                "{} distinct locations cannot support {k} components",
                distinct.len()
            )));
        }
    }
    Ok(())
}

fn weighted_cov(points: &[Point], w: &[f64]) -> (Point, Cov2) {
    let total: f64 = w.iter().sum();
    let (mut mx, mut mz) = (0.0, 0.0);
    for (p, &wi) in points.iter().zip(w) {
        mx += wi * p.0;
        mz += wi * p.1;
    }
    mx /= total;
    mz /= total;
    let (mut sxx, mut sxz, mut szz) = (0.0, 0.0, 0.0);
    for (p, &wi) in points.iter().zip(w) {
        let (dx, dz) = (p.0 - mx, p.1 - mz);
        sxx += wi * dx * dx;
        sxz += wi * dx * dz;
        szz += wi * dz * dz;
    }
    ((mx, mz), Cov2::new(sxx / total, sxz / total, szz / total))
}

/// k-means++ style seeding: first centre drawn by weight, the rest by
/// weight × squared distance to the nearest chosen centre.
fn seed_means<R: Rng>(points: &[Point], w: &[f64], k: usize, rng: &mut R) -> Vec<Point> {
    let draw = |scores: &[f64], rng: &mut R| -> Option<usize> {
        let total: f64 = scores.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        for (i, &s) in scores.iter().enumerate() {
            if s > 0.0 {
                if u < s {
                    return Some(i);
                }
                u -= s;
            }
        }
        scores.iter().rposition(|&s| s > 0.0)
    };
    let mut means = Vec::with_capacity(k);
    let first = draw(w, rng).unwrap_or(0);
    means.push(points[first]);
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| (p.0 - means[0].0).powi(2) + (p.1 - means[0].1).powi(2))
        .collect();
    while means.len() < k {
        let scores: Vec<f64> = d2.iter().zip(w).map(|(d, wi)| d * wi).collect();
        // Only reachable when fewer distinct points than k, which check_inputs rejects.
        let Some(i) = draw(&scores, rng) else { break };
        let c = points[i];
        means.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2));
        }
    }
    means
}

/// One EM run from one random initialisation.
pub fn em_run(
    points: &[Point],
    k: usize,
    weights: Option<&[f64]>,
    seed: u64,
    config: &EmConfig,
) -> Result<EmFit> {
    check_inputs(points, k, weights)?;
    let n = points.len();
    let ones;
    let w: &[f64] = match weights {
        Some(w) => w,
        None => {
            ones = vec![1.0; n];
            &ones
        }
    };
    let total_w: f64 = w.iter().sum();
    let mut rng = seed::rng(seed);

    // Work in coordinates centred on the weighted mean so the raw second
    // moments below do not lose precision.
    let (centre, pooled) = weighted_cov(points, w);
    let centred: Vec<Point> = points.iter().map(|p| (p.0 - centre.0, p.1 - centre.1)).collect();
    let pooled = pooled.clamp_eigenvalues(config.reg_floor);
    let mut comps: Vec<GaussianComponent> = seed_means(&centred, w, k, &mut rng)
        .into_iter()
        .map(|mean| GaussianComponent {
            weight: 1.0 / k as f64,
            mean,
            cov: pooled,
        })
        .collect();

    let mut logp = vec![0.0; k];
    // per component: Σr, Σr·x, Σr·z, Σr·x², Σr·xz, Σr·z²
    let mut stats = vec![[0.0f64; 6]; k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        // E-step, accumulating the sufficient statistics for the next M-step
        let prep = prepare(&comps)?;
        for s in stats.iter_mut() {
            *s = [0.0; 6];
        }
        let mut ll = 0.0;
        for (&p, &wi) in centred.iter().zip(w) {
            let mut m = f64::NEG_INFINITY;
            for (lp, c) in logp.iter_mut().zip(&prep) {
                *lp = c.log_weighted(p);
                m = m.max(*lp);
            }
            let mut sum = 0.0;
            for lp in logp.iter_mut() {
                *lp = (*lp - m).exp();
                sum += *lp;
            }
            ll += wi * (m + sum.ln());
            let scale = wi / sum;
            for (st, &e) in stats.iter_mut().zip(&logp) {
                let r = e * scale;
                let (rx, rz) = (r * p.0, r * p.1);
                st[0] += r;
                st[1] += rx;
                st[2] += rz;
                st[3] += rx * p.0;
                st[4] += rx * p.1;
                st[5] += rz * p.1;
            }
        }
        let ll = ll / total_w;
        if !ll.is_finite() {
            return Err(Error::DegenerateFit("log-likelihood is not finite".into()));
        }
        if let Some(&prev) = trace.last() {
            debug_assert!(
                ll >= prev - MONOTONE_SLACK,
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
            if ll - prev < config.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations == config.max_iter {
            break;
        }

        // M-step
        iterations += 1;
        for (j, (c, st)) in comps.iter_mut().zip(&stats).enumerate() {
            let nk = st[0];
            if !(nk > 1e-10 * total_w) {
                return Err(Error::DegenerateFit(format!("component {j} lost all mass")));
            }
            let (mx, mz) = (st[1] / nk, st[2] / nk);
            let scatter = Cov2::new(st[3] / nk - mx * mx, st[4] / nk - mx * mz, st[5] / nk - mz * mz);
            *c = GaussianComponent {
                weight: nk / total_w,
                mean: (mx, mz),
                cov: scatter.clamp_eigenvalues(config.reg_floor),
            };
        }
        // weights drift from 1 by rounding only
        let wsum: f64 = comps.iter().map(|c| c.weight).sum();
        for c in &mut comps {
            c.weight /= wsum;
        }
    }

    for c in &mut comps {
        c.mean = (c.mean.0 + centre.0, c.mean.1 + centre.1);
    }
    sort_components(&mut comps);
    let model = MixtureModel {
        bin: None,
        k,
        components: comps,
        n_fit: n,
        train_loglik: *trace.last().expect("at least one E-step"),
        valid_loglik: None,
        seed,
    };
    Ok(EmFit {
        model,
        loglik_trace: trace,
        iterations,
        converged,
    })
}

/// Best of `config.restarts` EM runs by training log-likelihood, with the
/// trace of the winning run.
pub fn em_fit_traced(
    points: &[Point],
    k: usize,
    weights: Option<&[f64]>,
    seed: u64,
    config: &EmConfig,
) -> Result<EmFit> {
    check_inputs(points, k, weights)?;
    let mut best: Option<EmFit> = None;
    let mut last_err = None;
    for r in 0..config.restarts.max(1) {
        let sub = seed::derive(seed, &[seed::TAG_RESTART, r as u64]);
        match em_run(points, k, weights, sub, config) {
            Ok(fit) => {
                if best
                    .as_ref()
                    .is_none_or(|b| fit.model.train_loglik > b.model.train_loglik)
                {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let mut best = best.ok_or_else(|| last_err.expect("at least one restart"))?;
    best.model.seed = seed;
    Ok(best)
}

/// Fit a `k`-component mixture by EM, keeping the best of `config.restarts`
/// initialisations. Deterministic in `seed`.
pub fn em_fit(
    points: &[Point],
    k: usize,
    weights: Option<&[f64]>,
    seed: u64,
    config: &EmConfig,
) -> Result<MixtureModel> {
    em_fit_traced(points, k, weights, seed, config).map(|f| f.model)
}
