//! Percentile bootstrap over pitches for per-bin xCTRL.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{select_k, EmConfig, MixtureModel};
use crate::ingest::{iqr_mask, BinKey, BinnedData};
use crate::intent::mean_xctrl;
use crate::stats::percentile_sorted;
use crate::{seed, Point};

/// Which pitches a replicate's model scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// The replicate's own resampled pitches.
    #[default]
    Resample,
    /// The bin's original pitches.
    Original,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub mode: ScoreMode,
    /// Extra attempts with fresh sub-seeds when a replicate fit fails.
    pub max_retries: usize,
    /// Fewest successful replicates before the bin is abandoned.
    pub min_successful: usize,
    /// Fitting options. `min_points` is checked once on the bin, not on each
    /// resample.
    pub em: EmConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 100,
            mode: ScoreMode::default(),
            max_retries: 3,
            min_successful: 90,
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub bin: Option<BinKey>,
    /// Mean xCTRL per successful replicate, in replicate order.
    pub replicates: Vec<f64>,
    /// Replicate index of each entry in `replicates`.
    pub replicate_ids: Vec<usize>,
    pub n_failed: usize,
    pub median_xctrl: f64,
    /// 5th and 95th percentiles.
    pub ci90: (f64, f64),
    /// Model of the replicate at the median (lower middle for even counts).
    pub median_model: MixtureModel,
}

impl BootstrapSummary {
    pub fn n_ok(&self) -> usize {
        self.replicates.len()
    }

    /// Replicate values present in both summaries, matched by replicate index.
    pub fn paired(&self, other: &BootstrapSummary) -> Vec<(f64, f64)> {
        let theirs: std::collections::HashMap<usize, f64> =
            other.replicate_ids.iter().copied().zip(other.replicates.iter().copied()).collect();
        self.replicate_ids
            .iter()
            .zip(&self.replicates)
            .filter_map(|(i, &x)| theirs.get(i).map(|&y| (x, y)))
            .collect()
    }
}

/// Outcome of one replicate: its score and fitted model.
pub type Replicate = (f64, MixtureModel);

/// Median, 90% interval and median model from per-replicate results.
pub fn summarize(
    bin: Option<BinKey>,
    results: Vec<Option<Replicate>>,
    min_successful: usize,
) -> Result<BootstrapSummary> {
    let total = results.len();
    let (replicate_ids, ok): (Vec<usize>, Vec<Replicate>) = results
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .unzip();
    if ok.len() < min_successful.max(1) {
        return Err(Error::BootstrapFailed {
            ok: ok.len(),
            total,
            required: min_successful.max(1),
        });
    }
    let replicates: Vec<f64> = ok.iter().map(|r| r.0).collect();
    let mut order: Vec<usize> = (0..ok.len()).collect();
    order.sort_by(|&a, &b| replicates[a].total_cmp(&replicates[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| replicates[i]).collect();
    let median_xctrl = percentile_sorted(&sorted, 50.0);
    let ci90 = (percentile_sorted(&sorted, 5.0), percentile_sorted(&sorted, 95.0));
    let mut median_model = ok[order[(ok.len() - 1) / 2]].1.clone();
    median_model.bin = bin.clone();
    Ok(BootstrapSummary {
        bin,
        n_failed: total - replicates.len(),
        replicates,
        replicate_ids,
        median_xctrl,
        ci90,
        median_model,
    })
}

fn resample<R: Rng>(points: &[Point], rng: &mut R) -> Vec<Point> {
    (0..points.len())
        .map(|_| points[rng.random_range(0..points.len())])
        .collect()
}

/// Bootstrap a set of pitch locations. Each replicate resamples with
/// replacement, re-applies the IQR mask, selects `k` and fits, then scores
/// according to `config.mode`.
pub fn bootstrap_points(
    points: &[Point],
    bin: Option<&BinKey>,
    config: &BootstrapConfig,
    seed: u64,
) -> Result<BootstrapSummary> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no pitches to bootstrap".into()));
    }
    let bin_tag = bin.map_or(0, |b| seed::hash_str(&b.to_string()));
    let em = EmConfig {
        min_points: 0,
        ..config.em.clone()
    };
    let results: Vec<Option<Replicate>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            (0..=config.max_retries).find_map(|attempt| {
                let sub = seed::derive(seed, &[seed::TAG_REPLICATE, bin_tag, r as u64, attempt as u64]);
                let mut rng = seed::rng(sub);
                let sample = resample(points, &mut rng);
                let fit: Vec<Point> = sample
                    .iter()
                    .zip(iqr_mask(&sample))
                    .filter_map(|(p, keep)| keep.then_some(*p))
                    .collect();
                let model = select_k(&fit, None, sub, &em).ok()?.model;
                let scored = match config.mode {
                    ScoreMode::Resample => &sample,
                    ScoreMode::Original => points,
                };
                let x = mean_xctrl(scored, &model).ok()?;
                Some((x, model))
            })
        })
        .collect();
    summarize(bin.cloned(), results, config.min_successful)
}

/// Bootstrap a bin that already passes the fitting threshold.
pub fn bootstrap_bin(bin: &BinnedData, config: &BootstrapConfig, seed: u64) -> Result<BootstrapSummary> {
    let points = bin.locations();
    let eligible = iqr_mask(&points).iter().filter(|&&k| k).count();
    if eligible < config.em.min_points {
        return Err(Error::TooFewPoints {
            required: config.em.min_points,
            got: eligible,
        });
    }
    bootstrap_points(&points, Some(&bin.key), config, seed)
}

/// Summary CSV: bin fields, median_xctrl, ci_low, ci_high, n_replicates_ok.
pub fn write_summaries_csv<W: Write>(w: W, summaries: &[BootstrapSummary]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record([
        "pitcher_id",
        "season",
        "pitch_type",
        "batter_hand",
        "count_group",
        "median_xctrl",
        "ci_low",
        "ci_high",
        "n_replicates_ok",
    ])?;
    for s in summaries {
        let (id, season, ptype, hand, count) = match &s.bin {
            Some(b) => (
                b.pitcher_id.clone(),
                b.season.to_string(),
                b.pitch_type.clone(),
                b.batter_hand.to_string(),
                b.count_group.to_string(),
            ),
            None => Default::default(),
        };
        out.write_record([
            id,
            season,
            ptype,
            hand,
            count,
            s.median_xctrl.to_string(),
            s.ci90.0.to_string(),
            s.ci90.1.to_string(),
            s.n_ok().to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}
