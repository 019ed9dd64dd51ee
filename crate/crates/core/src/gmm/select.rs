//! Choosing the number of components by validation log-likelihood.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{em_fit, log_density_prepared, EmConfig, KRule, MixtureModel};
use crate::error::{Error, Result};
use crate::seed;
use crate::Point;

/// Per-point validation likelihoods closer than this count as a tie; the
/// smaller `k` wins.
const TIE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KCandidate {
    pub k: usize,
    pub train_loglik: f64,
    pub valid_loglik: f64,
}

#[derive(Debug, Clone)]
pub struct KSelection {
    /// Refit on all points with the chosen `k`.
    pub model: MixtureModel,
    pub candidates: Vec<KCandidate>,
}

fn weighted_mean(values: &[f64], weights: Option<&[f64]>) -> f64 {
    match weights {
        Some(w) => values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / w.iter().sum::<f64>(),
        None => values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Weighted mean and its standard error (Kish effective sample size).
fn weighted_mean_se(values: &[f64], weights: Option<&[f64]>) -> (f64, f64) {
    let mean = weighted_mean(values, weights);
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (mut sw, mut sw2, mut ss) = (0.0, 0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let wi = w(i);
        sw += wi;
        sw2 += wi * wi;
        ss += wi * (v - mean) * (v - mean);
    }
    let n_eff = sw * sw / sw2;
    (mean, (ss / sw / n_eff).sqrt())
}

/// Randomly split into train/validation, fit every `k` in `1..=k_max` on the
/// training part and keep the `k` with the best validation likelihood, then
/// refit that `k` on all points.
///
/// Under [`KRule::OneStandardError`] the smallest `k` whose validation
/// shortfall against the best is within one paired standard error is kept.
pub fn select_k(
    points: &[Point],
    weights: Option<&[f64]>,
    seed: u64,
    config: &EmConfig,
) -> Result<KSelection> {
    let n = points.len();
    if n < config.min_points.max(2) {
        return Err(Error::TooFewPoints {
            required: config.min_points.max(2),
            got: n,
        });
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::InvalidInput(format!("{} weights for {n} points", w.len())));
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed::derive(seed, &[seed::TAG_SPLIT])));
    let n_train = ((n as f64 * config.split_fraction).round() as usize).clamp(1, n - 1);
    let (train_idx, valid_idx) = idx.split_at(n_train);
    let gather = |ix: &[usize]| -> (Vec<Point>, Option<Vec<f64>>) {
        (
            ix.iter().map(|&i| points[i]).collect(),
            weights.map(|w| ix.iter().map(|&i| w[i]).collect()),
        )
    };
    let (train, train_w) = gather(train_idx);
    let (valid, valid_w) = gather(valid_idx);

    let k_max = config.k_max.max(1).min(train.len());
    let fits: Vec<Option<(KCandidate, Vec<f64>)>> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let sub = seed::derive(seed, &[seed::TAG_K, k as u64]);
            let model = em_fit(&train, k, train_w.as_deref(), sub, config).ok()?;
            let prep = model.prepared().ok()?;
            let mut buf = vec![0.0; k];
            let dens: Vec<f64> = valid.iter().map(|&p| log_density_prepared(&prep, p, &mut buf)).collect();
            let valid_loglik = weighted_mean(&dens, valid_w.as_deref());
            valid_loglik.is_finite().then_some((
                KCandidate {
                    k,
                    train_loglik: model.train_loglik,
                    valid_loglik,
                },
                dens,
            ))
        })
        .collect();
    let fits: Vec<(KCandidate, Vec<f64>)> = fits.into_iter().flatten().collect();

    let mut best: Option<usize> = None;
    for (i, (c, _)) in fits.iter().enumerate() {
        if best.is_none_or(|b| c.valid_loglik > fits[b].0.valid_loglik + TIE_TOL) {
            best = Some(i);
        }
    }
    let mut chosen =
        best.ok_or_else(|| Error::DegenerateFit("no component count produced a valid fit".into()))?;
    if config.k_rule == KRule::OneStandardError {
        let best_dens = &fits[chosen].1;
        // smallest k whose shortfall against the best is within one paired
        // standard error
        if let Some(i) = fits.iter().position(|(_, dens)| {
            let diff: Vec<f64> = best_dens.iter().zip(dens).map(|(b, d)| b - d).collect();
            let (mean, se) = weighted_mean_se(&diff, valid_w.as_deref());
            mean <= se + TIE_TOL
        }) {
            chosen = chosen.min(i);
        }
    }
    let best = fits[chosen].0.clone();
    let candidates: Vec<KCandidate> = fits.into_iter().map(|(c, _)| c).collect();

    let refit_seed = seed::derive(seed, &[seed::TAG_REFIT]);
    let mut model = em_fit(points, best.k, weights, refit_seed, config)?;
    model.valid_loglik = Some(best.valid_loglik);
    model.seed = seed;
    Ok(KSelection { model, candidates })
}
