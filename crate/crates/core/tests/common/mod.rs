#![allow(dead_code)]

use rand::Rng;
use xctrl::gmm::{Cov2, GaussianComponent, MixtureModel};
use xctrl::Point;

/// Random valid mixture with `k` components inside the extended zone.
pub fn random_model<R: Rng>(rng: &mut R, k: usize) -> MixtureModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps = raw
        .iter()
        .map(|w| {
            let sx: f64 = rng.random_range(1.0..8.0);
            let sz: f64 = rng.random_range(1.0..8.0);
            let rho: f64 = rng.random_range(-0.8..0.8);
            GaussianComponent {
                weight: w / total,
                mean: (rng.random_range(-15.0..15.0), rng.random_range(15.0..45.0)),
                cov: Cov2 { xx: sx * sx, xz: rho * sx * sz, zz: sz * sz },
            }
        })
        .collect();
    MixtureModel::from_components(comps)
}

/// Textbook bivariate normal density, no shared code with the library.
pub fn direct_pdf(p: Point, c: &GaussianComponent) -> f64 {
    let (a, b, d) = (c.cov.xx, c.cov.xz, c.cov.zz);
    let det = a * d - b * b;
    let (dx, dz) = (p.0 - c.mean.0, p.1 - c.mean.1);
    let q = (d * dx * dx - 2.0 * b * dx * dz + a * dz * dz) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

/// π_k N_k / Σ_j π_j N_j.
pub fn bayes_fraction(p: Point, m: &MixtureModel) -> Vec<f64> {
    let num: Vec<f64> = m.components.iter().map(|c| c.weight * direct_pdf(p, c)).collect();
    let den: f64 = num.iter().sum();
    num.iter().map(|v| v / den).collect()
}

/// Well-separated planted mixture: isotropic components, std `sd`.
pub fn planted(k: usize, sd: f64) -> MixtureModel {
    let (means, weights): (Vec<Point>, Vec<f64>) = match k {
        1 => (vec![(0.0, 30.0)], vec![1.0]),
        2 => (vec![(-9.0, 28.0), (9.0, 32.0)], vec![0.6, 0.4]),
        3 => (vec![(-12.0, 22.0), (12.0, 22.0), (0.0, 42.0)], vec![0.45, 0.35, 0.2]),
        _ => panic!("planted mixtures defined for k <= 3"),
    };
    MixtureModel::from_components(
        means
            .into_iter()
            .zip(weights)
            .map(|(mean, weight)| GaussianComponent { weight, mean, cov: Cov2::isotropic(sd * sd) })
            .collect(),
    )
}
