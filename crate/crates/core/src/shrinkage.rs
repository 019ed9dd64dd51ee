//! Count-specific intent densities for sparse bins.
//!
//! The count-agnostic mixture acts as a prior: synthetic pitches drawn from it
//! are appended to the real count-specific pitches with sample weight `omega`
//! and the combined set is fit by weighted EM. Larger `omega` pulls the fit
//! toward the prior. `omega` is chosen on a mesh by held-out likelihood of
//! real pitches.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{summarize, BootstrapSummary, Replicate};
use crate::error::{Error, Result};
use crate::gmm::{select_k, EmConfig, MixtureModel};
use crate::ingest::BinKey;
use crate::intent::mean_xctrl;
use crate::{seed, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShrinkageConfig {
    pub n_synthetic: usize,
    /// Candidate synthetic weights, strictly increasing inside (0, 1).
    pub omega_mesh: Vec<f64>,
    /// Densities produced after `omega` is chosen.
    pub replicates: usize,
    /// Restarts per replicate; the best held-out likelihood wins.
    pub restarts: usize,
    /// Real-pitch training share when building densities.
    pub split_fraction: f64,
    /// Cross-validation folds over the real pitches when choosing `omega`.
    pub selection_folds: usize,
    /// Below this many real pitches the prior is returned unchanged.
    pub min_real: usize,
    /// Reuse one synthetic draw for every mesh point during selection.
    pub freeze_synthetic: bool,
    /// Attempts per replicate before it counts as failed.
    pub max_retries: usize,
    pub em: EmConfig,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        ShrinkageConfig {
            n_synthetic: 250,
            omega_mesh: (1..=9).map(|i| i as f64 / 10.0).collect(),
            replicates: 100,
            restarts: 5,
            split_fraction: 0.8,
            selection_folds: 5,
            min_real: 20,
            freeze_synthetic: false,
            max_retries: 3,
            em: EmConfig::default(),
        }
    }
}

impl ShrinkageConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_synthetic == 0 {
            return bad("n_synthetic must be positive".into());
        }
        if self.omega_mesh.is_empty() {
            return bad("empty omega mesh".into());
        }
        if self.omega_mesh.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
            return bad(format!("omega mesh {:?} must lie inside (0, 1)", self.omega_mesh));
        }
        if self.omega_mesh.windows(2).any(|p| p[1] <= p[0]) {
            return bad(format!("omega mesh {:?} must be strictly increasing", self.omega_mesh));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction {} must lie inside (0, 1)", self.split_fraction));
        }
        if self.selection_folds < 2 {
            return bad("selection_folds must be >= 2".into());
        }
        if self.replicates == 0 || self.restarts == 0 {
            return bad("replicates and restarts must be positive".into());
        }
        Ok(())
    }

    /// EM options for fits on combined data: no pitch minimum, one
    /// initialisation per `k` (restarts happen at the replicate level).
    fn inner_em(&self, restarts: usize) -> EmConfig {
        EmConfig {
            min_points: 0,
            restarts,
            ..self.em.clone()
        }
    }
}

/// I.i.d. draws from the prior mixture.
pub fn synthesize_prior_samples(prior: &MixtureModel, n: usize, seed: u64) -> Result<Vec<Point>> {
    prior.sample(n, &mut seed::rng(seed))
}

fn split_real(points: &[Point], fraction: f64, seed: u64) -> (Vec<Point>, Vec<Point>) {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.shuffle(&mut seed::rng(seed));
    let n_train = ((points.len() as f64 * fraction).round() as usize).clamp(1, points.len().saturating_sub(1).max(1));
    let (a, b) = idx.split_at(n_train);
    (a.iter().map(|&i| points[i]).collect(), b.iter().map(|&i| points[i]).collect())
}

/// Weighted fit of real pitches (weight 1) plus synthetic pitches (weight
/// `omega`), with `k` chosen by `select_k` on the combined set.
pub fn fit_combined(
    real: &[Point],
    synthetic: &[Point],
    omega: f64,
    seed: u64,
    em: &EmConfig,
) -> Result<MixtureModel> {
    let mut points = real.to_vec();
    points.extend_from_slice(synthetic);
    let mut weights = vec![1.0; real.len()];
    weights.resize(points.len(), omega);
    Ok(select_k(&points, Some(&weights), seed, em)?.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaScore {
    pub omega: f64,
    /// Mean log-density of held-out real pitches; `None` if every fit failed.
    pub heldout_loglik: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaSelection {
    pub omega: f64,
    pub scores: Vec<OmegaScore>,
}

/// Choose `omega` from the mesh by cross-validated log-likelihood of the
/// real pitches: each fold is held out once while the rest, plus the
/// synthetic draws, are fit. The fold assignment is shared by every `omega`.
pub fn select_omega(
    count_pitches: &[Point],
    prior: &MixtureModel,
    config: &ShrinkageConfig,
    seed: u64,
) -> Result<OmegaSelection> {
    config.validate()?;
    let n = count_pitches.len();
    if n < 2 {
        return Err(Error::TooFewPoints { required: 2, got: n });
    }
    let folds = config.selection_folds.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, &[seed::TAG_SPLIT])));
    let mut fold_of = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        fold_of[i] = rank % folds;
    }
    let em = config.inner_em(config.restarts);
    let scores: Vec<OmegaScore> = config
        .omega_mesh
        .par_iter()
        .enumerate()
        .map(|(i, &omega)| {
            let syn_seed = if config.freeze_synthetic {
                seed::derive(seed, &[seed::TAG_SYNTHETIC])
            } else {
                seed::derive(seed, &[seed::TAG_SYNTHETIC, i as u64])
            };
            let score = || -> Result<f64> {
                let syn = synthesize_prior_samples(prior, config.n_synthetic, syn_seed)?;
                let mut total = 0.0;
                for f in 0..folds {
                    let (test, train): (Vec<(usize, Point)>, Vec<(usize, Point)>) =
                        count_pitches.iter().copied().enumerate().partition(|(j, _)| fold_of[*j] == f);
                    let train: Vec<Point> = train.into_iter().map(|(_, p)| p).collect();
                    let test: Vec<Point> = test.into_iter().map(|(_, p)| p).collect();
                    let fit_seed = seed::derive(seed, &[seed::TAG_OMEGA, f as u64]);
                    let m = fit_combined(&train, &syn, omega, fit_seed, &em)?;
                    total += m.mean_log_likelihood(&test, None)? * test.len() as f64;
                }
                Ok(total / n as f64)
            };
            OmegaScore { omega, heldout_loglik: score().ok().filter(|v| v.is_finite()) }
        })
        .collect();
    let mut best: Option<&OmegaScore> = None;
    for s in &scores {
        if let Some(v) = s.heldout_loglik {
            if best.is_none_or(|b| v > b.heldout_loglik.expect("scored")) {
                best = Some(s);
            }
        }
    }
    let omega = best
        .ok_or_else(|| Error::DegenerateFit("no omega produced a valid fit".into()))?
        .omega;
    Ok(OmegaSelection { omega, scores })
}

/// `config.replicates` shrunken densities at a fixed `omega`, each from fresh
/// synthetic draws and a fresh real train/test split, best of
/// `config.restarts` by held-out likelihood. xCTRL is the mean over all real
/// count pitches; the summary follows the bootstrap conventions.
pub fn shrunken_density(
    count_pitches: &[Point],
    prior: &MixtureModel,
    omega: f64,
    bin: Option<&BinKey>,
    config: &ShrinkageConfig,
    seed: u64,
) -> Result<BootstrapSummary> {
    config.validate()?;
    if count_pitches.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            got: count_pitches.len(),
        });
    }
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InvalidInput(format!("omega {omega} must lie in (0, 1]")));
    }
    let em = config.inner_em(1);
    let results: Vec<Option<Replicate>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            (0..=config.max_retries).find_map(|attempt| {
                let base = seed::derive(seed, &[seed::TAG_REPLICATE, r as u64, attempt as u64]);
                let syn =
                    synthesize_prior_samples(prior, config.n_synthetic, seed::derive(base, &[seed::TAG_SYNTHETIC]))
                        .ok()?;
                let (train, test) = split_real(count_pitches, config.split_fraction, seed::derive(base, &[seed::TAG_SPLIT]));
                let best = (0..config.restarts)
                    .filter_map(|restart| {
                        let s = seed::derive(base, &[seed::TAG_RESTART, restart as u64]);
                        let m = fit_combined(&train, &syn, omega, s, &em).ok()?;
                        let ll = m.mean_log_likelihood(&test, None).ok().filter(|v| v.is_finite())?;
                        Some((ll, m))
                    })
                    .fold(None::<(f64, MixtureModel)>, |acc, cand| match acc {
                        Some(a) if a.0 >= cand.0 => Some(a),
                        _ => Some(cand),
                    })?;
                let x = mean_xctrl(count_pitches, &best.1).ok()?;
                Some((x, best.1))
            })
        })
        .collect();
    let min_ok = (config.replicates * 9).div_ceil(10);
    summarize(bin.cloned(), results, min_ok)
}

/// Full shrinkage run for one count-specific bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageResult {
    pub bin: Option<BinKey>,
    pub n_real: usize,
    pub n_synthetic: usize,
    /// `None` when the prior was passed through.
    pub omega: Option<f64>,
    pub omega_scores: Vec<OmegaScore>,
    /// Too few real pitches; `model` is the prior.
    pub passthrough: bool,
    pub median_xctrl: f64,
    pub ci90: Option<(f64, f64)>,
    pub model: MixtureModel,
}

impl ShrinkageResult {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Select `omega`, then build the shrunken densities. Bins with fewer than
/// `config.min_real` pitches return the prior unchanged, flagged.
pub fn shrink(
    count_pitches: &[Point],
    prior: &MixtureModel,
    bin: Option<&BinKey>,
    config: &ShrinkageConfig,
    seed: u64,
) -> Result<ShrinkageResult> {
    config.validate()?;
    if count_pitches.len() < config.min_real.max(2) {
        let mut model = prior.clone();
        model.bin = bin.cloned();
        let median_xctrl = if count_pitches.is_empty() {
            f64::NAN
        } else {
            mean_xctrl(count_pitches, prior)?
        };
        return Ok(ShrinkageResult {
            bin: bin.cloned(),
            n_real: count_pitches.len(),
            n_synthetic: 0,
            omega: None,
            omega_scores: Vec::new(),
            passthrough: true,
            median_xctrl,
            ci90: None,
            model,
        });
    }
    let selection = select_omega(count_pitches, prior, config, seed)?;
    let summary = shrunken_density(
        count_pitches,
        prior,
        selection.omega,
        bin,
        config,
        seed::derive(seed, &[seed::TAG_REFIT]),
    )?;
    Ok(ShrinkageResult {
        bin: bin.cloned(),
        n_real: count_pitches.len(),
        n_synthetic: config.n_synthetic,
        omega: Some(selection.omega),
        omega_scores: selection.scores,
        passthrough: false,
        median_xctrl: summary.median_xctrl,
        ci90: Some(summary.ci90),
        model: summary.median_model,
    })
}

/// Total-variation distance between two mixtures, midpoint rule on a grid.
pub fn grid_tv_distance(
    a: &MixtureModel,
    b: &MixtureModel,
    x_range: (f64, f64),
    z_range: (f64, f64),
    cells: usize,
) -> Result<f64> {
    let ga = crate::intent::density_grid(a, x_range, z_range, (cells, cells))?;
    let gb = crate::intent::density_grid(b, x_range, z_range, (cells, cells))?;
    let l1: f64 = ga.values.iter().zip(&gb.values).map(|(p, q)| (p - q).abs()).sum();
    Ok(0.5 * l1 * ga.cell_area)
}
