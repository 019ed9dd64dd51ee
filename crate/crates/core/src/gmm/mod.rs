//! Bivariate Gaussian mixtures: density, EM fitting and component-count
//! selection.

mod em;
mod select;

pub use em::{em_fit, em_fit_traced, em_run, EmFit};
pub use select::{select_k, KCandidate, KSelection};

use std::path::Path;

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BinKey;
use crate::Point;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Symmetric 2x2 covariance, inches².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Cov2 {
    pub xx: f64,
    pub xz: f64,
    pub zz: f64,
}

impl From<[f64; 3]> for Cov2 {
    fn from([xx, xz, zz]: [f64; 3]) -> Self {
        Cov2 { xx, xz, zz }
    }
}

impl From<Cov2> for [f64; 3] {
    fn from(c: Cov2) -> Self {
        [c.xx, c.xz, c.zz]
    }
}

impl Cov2 {
    pub const fn new(xx: f64, xz: f64, zz: f64) -> Self {
        Cov2 { xx, xz, zz }
    }

    pub const fn isotropic(var: f64) -> Self {
        Cov2 { xx: var, xz: 0.0, zz: var }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.zz - self.xz * self.xz
    }

    /// Eigenvalues, larger first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * (self.xx + self.zz);
        let half_diff = 0.5 * (self.xx - self.zz);
        let r = half_diff.hypot(self.xz);
        (half_tr + r, half_tr - r)
    }

    /// Raise every eigenvalue below `floor` to `floor`, keeping eigenvectors.
    ///
    /// This is the covariance that maximises the Gaussian log-likelihood of a
    /// scatter matrix `self` subject to `min eigenvalue >= floor`.
    pub fn clamp_eigenvalues(&self, floor: f64) -> Cov2 {
        let (l1, l2) = self.eigenvalues();
        if l2 >= floor {
            return *self;
        }
        if l1 <= floor {
            return Cov2::isotropic(floor);
        }
        if self.xz == 0.0 {
            return Cov2::new(self.xx.max(floor), 0.0, self.zz.max(floor));
        }
        // eigenvector of l2; pick the better conditioned of the two forms
        let a = (self.xz, l2 - self.xx);
        let b = (l2 - self.zz, self.xz);
        let (vx, vz) = if a.0.hypot(a.1) >= b.0.hypot(b.1) { a } else { b };
        let norm2 = vx * vx + vz * vz;
        let bump = (floor - l2) / norm2;
        Cov2::new(
            self.xx + bump * vx * vx,
            self.xz + bump * vx * vz,
            self.zz + bump * vz * vz,
        )
    }

    /// Lower Cholesky factor `(l11, l21, l22)`.
    pub fn cholesky(&self) -> Option<(f64, f64, f64)> {
        if self.xx <= 0.0 {
            return None;
        }
        let l11 = self.xx.sqrt();
        let l21 = self.xz / l11;
        let rem = self.zz - l21 * l21;
        if rem <= 0.0 {
            return None;
        }
        Some((l11, l21, rem.sqrt()))
    }
}

/// One target: weight, centre (inches) and spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ComponentRepr", into = "ComponentRepr")]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Point,
    pub cov: Cov2,
}

#[derive(Serialize, Deserialize)]
struct ComponentRepr {
    weight: f64,
    mean_x: f64,
    mean_z: f64,
    cov: [f64; 3],
}

impl From<ComponentRepr> for GaussianComponent {
    fn from(r: ComponentRepr) -> Self {
        GaussianComponent {
            weight: r.weight,
            mean: (r.mean_x, r.mean_z),
            cov: r.cov.into(),
        }
    }
}

impl From<GaussianComponent> for ComponentRepr {
    fn from(c: GaussianComponent) -> Self {
        ComponentRepr {
            weight: c.weight,
            mean_x: c.mean.0,
            mean_z: c.mean.1,
            cov: c.cov.into(),
        }
    }
}

/// Precomputed inverse and normaliser for fast density evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Prepared {
    mx: f64,
    mz: f64,
    ixx: f64,
    ixz: f64,
    izz: f64,
    /// log(weight) - log(2 pi) - log|Σ| / 2
    log_norm: f64,
}

impl Prepared {
    fn new(c: &GaussianComponent) -> Option<Self> {
        let det = c.cov.det();
        if !(det > 0.0 && c.cov.xx > 0.0) || !det.is_finite() {
            return None;
        }
        Some(Prepared {
            mx: c.mean.0,
            mz: c.mean.1,
            ixx: c.cov.zz / det,
            ixz: -c.cov.xz / det,
            izz: c.cov.xx / det,
            log_norm: c.weight.ln() - LN_2PI - 0.5 * det.ln(),
        })
    }

    /// log(weight * N(p; mean, cov))
    #[inline]
    pub(crate) fn log_weighted(&self, p: Point) -> f64 {
        let dx = p.0 - self.mx;
        let dz = p.1 - self.mz;
        let q = dx * (self.ixx * dx + self.ixz * dz) + dz * (self.ixz * dx + self.izz * dz);
        self.log_norm - 0.5 * q
    }
}

pub(crate) fn prepare(components: &[GaussianComponent]) -> Result<Vec<Prepared>> {
    components
        .iter()
        .map(|c| {
            Prepared::new(c).ok_or_else(|| {
                Error::DegenerateFit(format!("covariance {:?} is not positive definite", c.cov))
            })
        })
        .collect()
}

/// log of the sum of exponentials, shifted by the max.
#[inline]
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl GaussianComponent {
    pub fn log_pdf(&self, p: Point) -> Result<f64> {
        let unit = GaussianComponent { weight: 1.0, ..*self };
        Ok(prepare(&[unit])?[0].log_weighted(p))
    }

    /// Bivariate normal density at `p`, inches⁻². Ignores `weight`.
    pub fn pdf(&self, p: Point) -> Result<f64> {
        self.log_pdf(p).map(f64::exp)
    }
}

/// Density of one component at a point: (2π)⁻¹ |Σ|^(-1/2) exp(-dᵀΣ⁻¹d / 2).
pub fn gaussian_pdf(point: Point, component: &GaussianComponent) -> Result<f64> {
    component.pdf(point)
}

/// A pitcher's intent distribution for one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub bin: Option<BinKey>,
    pub k: usize,
    /// Sorted by descending weight.
    pub components: Vec<GaussianComponent>,
    pub n_fit: usize,
    /// Mean per-point log-likelihood (nats) on the fitting data.
    pub train_loglik: f64,
    /// Mean per-point log-likelihood on the validation split used to pick `k`.
    pub valid_loglik: Option<f64>,
    pub seed: u64,
}

impl MixtureModel {
    /// Build from components; sorts them and normalises nothing.
    pub fn from_components(mut components: Vec<GaussianComponent>) -> Self {
        sort_components(&mut components);
        MixtureModel {
            bin: None,
            k: components.len(),
            components,
            n_fit: 0,
            train_loglik: f64::NAN,
            valid_loglik: None,
            seed: 0,
        }
    }

    pub fn with_bin(mut self, bin: BinKey) -> Self {
        self.bin = Some(bin);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.components.is_empty() || self.k != self.components.len() {
            return bad(format!("k = {} with {} components", self.k, self.components.len()));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {total}"));
        }
        for c in &self.components {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return bad(format!("weight {} outside (0, 1]", c.weight));
            }
            if !(c.mean.0.is_finite() && c.mean.1.is_finite()) {
                return bad("non-finite mean".into());
            }
            if c.cov.xx <= 0.0 || c.cov.det() <= 0.0 {
                return bad(format!("covariance {:?} not positive definite", c.cov));
            }
        }
        Ok(())
    }

    pub(crate) fn prepared(&self) -> Result<Vec<Prepared>> {
        prepare(&self.components)
    }

    pub fn log_density(&self, p: Point) -> Result<f64> {
        let prep = self.prepared()?;
        let mut buf = vec![0.0; prep.len()];
        Ok(log_density_prepared(&prep, p, &mut buf))
    }

    pub fn density(&self, p: Point) -> Result<f64> {
        self.log_density(p).map(f64::exp)
    }

    /// Weighted mean log-density over `points`.
    pub fn mean_log_likelihood(&self, points: &[Point], weights: Option<&[f64]>) -> Result<f64> {
        let prep = self.prepared()?;
        let mut buf = vec![0.0; prep.len()];
        let mut total = 0.0;
        let mut wsum = 0.0;
        for (i, &p) in points.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            total += w * log_density_prepared(&prep, p, &mut buf);
            wsum += w;
        }
        Ok(total / wsum)
    }

    /// I.i.d. draws: pick a component by weight, then a bivariate normal.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Point>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let pick = WeightedIndex::new(self.components.iter().map(|c| c.weight))
            .map_err(|e| Error::InvalidInput(format!("component weights: {e}")))?;
        let chol: Vec<(f64, f64, f64)> = self
            .components
            .iter()
            .map(|c| {
                c.cov.cholesky().ok_or_else(|| {
                    Error::DegenerateFit(format!("covariance {:?} is not positive definite", c.cov))
                })
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let k = pick.sample(rng);
            let (l11, l21, l22) = chol[k];
            let u: f64 = StandardNormal.sample(rng);
            let v: f64 = StandardNormal.sample(rng);
            let m = self.components[k].mean;
            out.push((m.0 + l11 * u, m.1 + l21 * u + l22 * v));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MixtureModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub(crate) fn log_density_prepared(prep: &[Prepared], p: Point, buf: &mut [f64]) -> f64 {
    for (b, c) in buf.iter_mut().zip(prep) {
        *b = c.log_weighted(p);
    }
    log_sum_exp(buf)
}

/// Canonical order: descending weight, then mean for exact ties.
pub(crate) fn sort_components(components: &mut [GaussianComponent]) {
    components.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then(a.mean.0.total_cmp(&b.mean.0))
            .then(a.mean.1.total_cmp(&b.mean.1))
    });
}

/// Options for EM and model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Stop when the mean per-point log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest allowed covariance eigenvalue, inches².
    pub reg_floor: f64,
    /// Random initialisations per fit; the best training likelihood wins.
    pub restarts: usize,
    pub k_max: usize,
    /// Training share of the split used to choose `k`.
    pub split_fraction: f64,
    /// Fewest points `select_k` accepts.
    pub min_points: usize,
    pub k_rule: KRule,
}

/// How `select_k` turns validation likelihoods into a choice of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    /// Smallest `k` within one paired standard error of the best.
    #[default]
    OneStandardError,
    /// Best validation likelihood; near-ties go to the smaller `k`.
    MaxLikelihood,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-6,
            max_iter: 500,
            reg_floor: 1e-3,
            restarts: 5,
            k_max: 6,
            split_fraction: 0.8,
            min_points: 250,
            k_rule: KRule::default(),
        }
    }
}
