//! Per-pitch intent posteriors and xCTRL scores, bin aggregates, rankings
//! and density grids.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{log_density_prepared, MixtureModel, Prepared};
use crate::ingest::{BatterHand, BinKey, BinnedData};
use crate::Point;

/// Straight-line distance between two plate locations, inches.
pub fn euclidean_delta(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPosterior {
    /// Probability the pitch was aimed at each component, in model order.
    pub probabilities: Vec<f64>,
    /// Distance from the pitch to each component centre, inches.
    pub distances: Vec<f64>,
    pub pitch: Point,
}

impl IntentPosterior {
    pub fn xctrl(&self) -> f64 {
        expected_distance(&self.probabilities, &self.distances)
    }
}

/// Probability-weighted execution distance.
pub fn expected_distance(probabilities: &[f64], distances: &[f64]) -> f64 {
    probabilities.iter().zip(distances).map(|(p, d)| p * d).sum()
}

fn posterior_prepared(pitch: Point, model: &MixtureModel, prep: &[Prepared]) -> IntentPosterior {
    let logs: Vec<f64> = prep.iter().map(|c| c.log_weighted(pitch)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(m.is_finite(), "every component log-density is -inf at {pitch:?}");
    let mut probabilities: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = probabilities.iter().sum();
    for p in &mut probabilities {
        *p /= s;
    }
    let distances = model
        .components
        .iter()
        .map(|c| euclidean_delta(pitch, c.mean))
        .collect();
    IntentPosterior {
        probabilities,
        distances,
        pitch,
    }
}

/// Bayes' rule over targets: p_k ∝ π_k N(pitch; μ_k, Σ_k), evaluated in log
/// space with the largest term shifted to zero.
pub fn posterior(pitch: Point, model: &MixtureModel) -> Result<IntentPosterior> {
    let prep = model.prepared()?;
    Ok(posterior_prepared(pitch, model, &prep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchScore {
    /// Inches; lower is better.
    pub xctrl: f64,
    pub posterior: IntentPosterior,
    pub was_fit_outlier: bool,
}

pub fn score_pitch(pitch: Point, model: &MixtureModel) -> Result<PitchScore> {
    let posterior = posterior(pitch, model)?;
    Ok(PitchScore {
        xctrl: posterior.xctrl(),
        posterior,
        was_fit_outlier: false,
    })
}

/// Mean xCTRL over `points`.
pub fn mean_xctrl(points: &[Point], model: &MixtureModel) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no pitches to score".into()));
    }
    let prep = model.prepared()?;
    let total: f64 = points
        .iter()
        .map(|&p| posterior_prepared(p, model, &prep).xctrl())
        .sum();
    Ok(total / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScore {
    pub bin: BinKey,
    /// Mean over every pitch in the bin, fit outliers included.
    pub mean_xctrl: f64,
    pub n_scored: usize,
    pub per_pitch: Option<Vec<PitchScore>>,
}

/// Score every pitch in the bin (IQR outliers too) and average.
pub fn score_bin(bin: &BinnedData, model: &MixtureModel, keep_per_pitch: bool) -> Result<BinScore> {
    if bin.is_empty() {
        return Err(Error::InvalidInput(format!("bin {} is empty", bin.key)));
    }
    let prep = model.prepared()?;
    let mut total = 0.0;
    let mut per_pitch = keep_per_pitch.then(|| Vec::with_capacity(bin.len()));
    for (rec, &fit) in bin.pitches.iter().zip(&bin.fit_mask) {
        let post = posterior_prepared(rec.location(), model, &prep);
        let xctrl = post.xctrl();
        total += xctrl;
        if let Some(v) = per_pitch.as_mut() {
            v.push(PitchScore {
                xctrl,
                posterior: post,
                was_fit_outlier: !fit,
            });
        }
    }
    Ok(BinScore {
        bin: bin.key.clone(),
        mean_xctrl: total / bin.len() as f64,
        n_scored: bin.len(),
        per_pitch,
    })
}

/// How the left- and right-handed bins combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverallWeighting {
    #[default]
    Unweighted,
    PitchCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallScore {
    pub xctrl: f64,
    pub n: usize,
    /// Only one batter hand was available.
    pub partial: bool,
}

/// A pitcher's overall score from the two batter-hand bins: `(xctrl, n)` per
/// side. One missing side gives the other side's value flagged partial.
pub fn pitcher_overall(
    left: Option<(f64, usize)>,
    right: Option<(f64, usize)>,
    weighting: OverallWeighting,
) -> Option<OverallScore> {
    match (left, right) {
        (Some((l, nl)), Some((r, nr))) => {
            let xctrl = match weighting {
                OverallWeighting::Unweighted => 0.5 * (l + r),
                OverallWeighting::PitchCount => (l * nl as f64 + r * nr as f64) / (nl + nr) as f64,
            };
            Some(OverallScore {
                xctrl,
                n: nl + nr,
                partial: false,
            })
        }
        (Some((x, n)), None) | (None, Some((x, n))) => Some(OverallScore {
            xctrl: x,
            n,
            partial: true,
        }),
        (None, None) => None,
    }
}

/// One row of a ranking table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub pitcher_id: String,
    pub season: i32,
    pub pitch_type: String,
    /// `None` for hand-averaged rows.
    pub batter_hand: Option<BatterHand>,
    pub xctrl: f64,
    pub ci: Option<(f64, f64)>,
    pub n: usize,
    pub partial: bool,
}

/// Best control first: ascending xCTRL, then larger samples, then pitcher id.
pub fn rank_bins(mut entries: Vec<RankEntry>) -> Vec<RankEntry> {
    entries.sort_by(|a, b| {
        a.xctrl
            .partial_cmp(&b.xctrl)
            .unwrap_or(Ordering::Equal)
            .then(b.n.cmp(&a.n))
            .then_with(|| a.pitcher_id.cmp(&b.pitcher_id))
            .then(a.season.cmp(&b.season))
            .then_with(|| a.pitch_type.cmp(&b.pitch_type))
            .then(a.batter_hand.cmp(&b.batter_hand))
    });
    entries
}

fn two_dp(v: f64) -> String {
    format!("{v:.2}")
}

/// Ranking CSV: pitcher_id, season, pitch_type, xctrl_in, ci_low, ci_high, n,
/// then batter_hand (empty when averaged over hands) and partial.
pub fn write_rankings_csv<W: Write>(w: W, ranked: &[RankEntry]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record([
        "pitcher_id",
        "season",
        "pitch_type",
        "xctrl_in",
        "ci_low",
        "ci_high",
        "n",
        "batter_hand",
        "partial",
    ])?;
    for e in ranked {
        let (lo, hi) = e.ci.map_or((String::new(), String::new()), |(a, b)| (two_dp(a), two_dp(b)));
        out.write_record([
            e.pitcher_id.clone(),
            e.season.to_string(),
            e.pitch_type.clone(),
            two_dp(e.xctrl),
            lo,
            hi,
            e.n.to_string(),
            e.batter_hand.map(|h| h.to_string()).unwrap_or_default(),
            e.partial.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<rankings>", e))?;
    Ok(())
}

/// The rule-book zone drawn over heatmaps, inches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrikeZone {
    pub left: f64,
    pub right: f64,
    pub bottom: f64,
    pub top: f64,
}

impl Default for StrikeZone {
    fn default() -> Self {
        StrikeZone {
            left: -8.5,
            right: 8.5,
            bottom: 18.0,
            top: 42.0,
        }
    }
}

/// Mixture density on a regular grid of cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub x_centers: Vec<f64>,
    pub z_centers: Vec<f64>,
    /// Row-major: `values[iz * nx + ix]`.
    pub values: Vec<f64>,
    pub cell_area: f64,
}

impl DensityGrid {
    pub fn get(&self, ix: usize, iz: usize) -> f64 {
        self.values[iz * self.x_centers.len() + ix]
    }

    /// Probability mass inside the window (midpoint rule).
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area
    }

    /// `(ix, iz)` of the largest cell; first one on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        let nx = self.x_centers.len();
        (best % nx, best / nx)
    }

    /// Rows of `x_in,z_in,density`, x varying fastest.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["x_in", "z_in", "density"])?;
        for (iz, z) in self.z_centers.iter().enumerate() {
            for (ix, x) in self.x_centers.iter().enumerate() {
                out.write_record([x.to_string(), z.to_string(), self.get(ix, iz).to_string()])?;
            }
        }
        out.flush().map_err(|e| Error::io("<grid>", e))?;
        Ok(())
    }
}

fn centers(range: (f64, f64), n: usize) -> Vec<f64> {
    let step = (range.1 - range.0) / n as f64;
    (0..n).map(|i| range.0 + (i as f64 + 0.5) * step).collect()
}

/// Evaluate the mixture density at the centres of an `nx` by `nz` grid over
/// `x_range` by `z_range`.
pub fn density_grid(
    model: &MixtureModel,
    x_range: (f64, f64),
    z_range: (f64, f64),
    resolution: (usize, usize),
) -> Result<DensityGrid> {
    let (nx, nz) = resolution;
    if nx < 2 || nz < 2 {
        return Err(Error::InvalidInput(format!("grid resolution {nx}x{nz}; need at least 2 per axis")));
    }
    let ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.1 > r.0;
    if !ok(x_range) || !ok(z_range) {
        return Err(Error::InvalidInput(format!("degenerate window {x_range:?} x {z_range:?}")));
    }
    let prep = model.prepared()?;
    let mut buf = vec![0.0; prep.len()];
    let x_centers = centers(x_range, nx);
    let z_centers = centers(z_range, nz);
    let mut values = Vec::with_capacity(nx * nz);
    for &z in &z_centers {
        for &x in &x_centers {
            values.push(log_density_prepared(&prep, (x, z), &mut buf).exp());
        }
    }
    let cell_area = (x_range.1 - x_range.0) / nx as f64 * ((z_range.1 - z_range.0) / nz as f64);
    Ok(DensityGrid {
        x_centers,
        z_centers,
        values,
        cell_area,
    })
}
