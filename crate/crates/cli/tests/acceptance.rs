//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary always prints;
//! exits non-zero if any criterion fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use xctrl::bootstrap::{bootstrap_points, BootstrapConfig, ScoreMode};
use xctrl::gmm::{em_fit_traced, select_k, Cov2, EmConfig, GaussianComponent, MixtureModel};
use xctrl::intent::{expected_distance, mean_xctrl, posterior, score_pitch};
use xctrl::shrinkage::{grid_tv_distance, shrunken_density, synthesize_prior_samples, ShrinkageConfig};
use xctrl::sim::{belief_loss_curve, run_curve, ZoneOutcomeModel};
use xctrl::stats::spearman;
use xctrl::Point;

type Outcome = Result<String, String>;

fn comp(weight: f64, mean: Point, var: f64) -> GaussianComponent {
    GaussianComponent { weight, mean, cov: Cov2::isotropic(var) }
}

fn random_model<R: Rng>(rng: &mut R) -> MixtureModel {
    let k = rng.random_range(1..=6);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    MixtureModel::from_components(
        raw.iter()
            .map(|w| {
                let (sx, sz): (f64, f64) = (rng.random_range(1.0..8.0), rng.random_range(1.0..8.0));
                let rho: f64 = rng.random_range(-0.8..0.8);
                GaussianComponent {
                    weight: w / total,
                    mean: (rng.random_range(-15.0..15.0), rng.random_range(15.0..45.0)),
                    cov: Cov2 { xx: sx * sx, xz: rho * sx * sz, zz: sz * sz },
                }
            })
            .collect(),
    )
}

/// Textbook bivariate normal density.
fn direct_pdf(p: Point, c: &GaussianComponent) -> f64 {
    let (a, b, d) = (c.cov.xx, c.cov.xz, c.cov.zz);
    let det = a * d - b * b;
    let (dx, dz) = (p.0 - c.mean.0, p.1 - c.mean.1);
    let q = (d * dx * dx - 2.0 * b * dx * dz + a * dz * dz) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

fn worked_example() -> Outcome {
    let probs = [0.90, 0.01, 0.09];
    let dists = [8.40, 17.82, 11.33];
    let x = expected_distance(&probs, &dists);
    let ok = (x - 8.7579).abs() < 1e-12 && format!("{x:.2}") == "8.76";
    let single = MixtureModel::from_components(vec![comp(1.0, (0.0, 30.0), 4.0)]);
    let s = score_pitch((8.4, 30.0), &single).map_err(|e| e.to_string())?;
    let msg = format!("xctrl = {x:.4} (rounds to {x:.2}); one-target score {:.2}", s.xctrl);
    if ok && (s.xctrl - 8.4).abs() < 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn posterior_oracle() -> Outcome {
    let mut rng = xctrl::seed::rng(2024);
    let mut worst = 0.0f64;
    let mut worst_sum = 0.0f64;
    for _ in 0..1000 {
        let m = random_model(&mut rng);
        let c = &m.components[rng.random_range(0..m.components.len())];
        let p = (c.mean.0 + rng.random_range(-10.0..10.0), c.mean.1 + rng.random_range(-10.0..10.0));
        let post = posterior(p, &m).map_err(|e| e.to_string())?;
        let num: Vec<f64> = m.components.iter().map(|c| c.weight * direct_pdf(p, c)).collect();
        let den: f64 = num.iter().sum();
        for (a, n) in post.probabilities.iter().zip(&num) {
            worst = worst.max((a - n / den).abs());
        }
        worst_sum = worst_sum.max((post.probabilities.iter().sum::<f64>() - 1.0).abs());
    }
    let msg = format!("1000 pairs: max |posterior - Bayes| = {worst:.1e}, max |sum - 1| = {worst_sum:.1e}");
    if worst < 1e-9 && worst_sum < 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn planted(k: usize) -> MixtureModel {
    // std 3 in; nearest centres are >= 18 in (6 std) apart
    match k {
        2 => MixtureModel::from_components(vec![comp(0.6, (-9.0, 28.0), 9.0), comp(0.4, (9.0, 32.0), 9.0)]),
        _ => MixtureModel::from_components(vec![
            comp(0.45, (-12.0, 22.0), 9.0),
            comp(0.35, (12.0, 22.0), 9.0),
            comp(0.2, (0.0, 42.0), 9.0),
        ]),
    }
}

fn recovered(fit: &MixtureModel, truth: &MixtureModel) -> bool {
    fit.components.len() == truth.components.len()
        && truth.components.iter().all(|t| {
            fit.components.iter().any(|c| {
                (c.mean.0 - t.mean.0).hypot(c.mean.1 - t.mean.1) < 1.0 && (c.weight - t.weight).abs() < 0.05
            })
        })
}

fn em_recovery(traces: &mut Vec<Vec<f64>>) -> Outcome {
    let em = EmConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for k in [2, 3] {
        let truth = planted(k);
        let mut hits = 0;
        for seed in 0..10u64 {
            let pts = truth.sample(1500, &mut xctrl::seed::rng(100 * k as u64 + seed)).unwrap();
            let sel = select_k(&pts, None, seed, &em).map_err(|e| e.to_string())?;
            if recovered(&sel.model, &truth) {
                hits += 1;
            }
            for kk in 1..=4 {
                let f = em_fit_traced(&pts, kk, None, seed, &em).map_err(|e| e.to_string())?;
                traces.push(f.loglik_trace);
            }
        }
        ok &= hits >= 9;
        parts.push(format!("K={k}: {hits}/10"));
    }
    let msg = format!("planted K chosen and recovered (means < 1 in, weights < 0.05): {}", parts.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn monotone_em(traces: &[Vec<f64>]) -> Outcome {
    let steps: usize = traces.iter().map(|t| t.len().saturating_sub(1)).sum();
    let worst = traces
        .iter()
        .flat_map(|t| t.windows(2).map(|w| w[0] - w[1]))
        .fold(f64::NEG_INFINITY, f64::max);
    let msg = format!(
        "{} traced fits, {steps} iterations, largest drop {:.1e} (every EM step in the suites is also checked in-loop)",
        traces.len(),
        worst.max(0.0)
    );
    if worst <= 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn bootstrap_calibration() -> Outcome {
    let truth = MixtureModel::from_components(vec![comp(0.6, (6.0, 32.0), 9.0), comp(0.4, (-6.0, 24.0), 9.0)]);
    let big = truth.sample(400_000, &mut xctrl::seed::rng(1)).unwrap();
    let target = mean_xctrl(&big, &truth).map_err(|e| e.to_string())?;
    let config = BootstrapConfig {
        replicates: 100,
        mode: ScoreMode::Resample,
        em: EmConfig { k_max: 3, restarts: 2, min_points: 0, ..EmConfig::default() },
        ..BootstrapConfig::default()
    };
    let mut covered = 0;
    for trial in 0..100u64 {
        let pts = truth.sample(500, &mut xctrl::seed::rng(1000 + trial)).unwrap();
        let s = bootstrap_points(&pts, None, &config, trial).map_err(|e| e.to_string())?;
        if s.ci90.0 <= target && target <= s.ci90.1 {
            covered += 1;
        }
    }
    let msg = format!("truth {target:.3} in; covered by the 90% interval in {covered}/100 trials");
    if covered >= 80 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn shrinkage_limit() -> Outcome {
    let prior = MixtureModel::from_components(vec![comp(0.6, (6.0, 32.0), 16.0), comp(0.4, (-6.0, 26.0), 16.0)]);
    let truth = MixtureModel::from_components(vec![comp(0.5, (2.0, 36.0), 16.0), comp(0.5, (-9.0, 22.0), 16.0)]);
    let mesh: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let cfg = ShrinkageConfig {
        replicates: 5,
        restarts: 2,
        em: EmConfig { k_max: 4, ..EmConfig::default() },
        ..ShrinkageConfig::default()
    };
    let mut mean_tv = vec![0.0; mesh.len()];
    let mut rhos = Vec::new();
    for seed in 0..10u64 {
        let real = synthesize_prior_samples(&truth, 30, 500 + seed).map_err(|e| e.to_string())?;
        let tv: Vec<f64> = mesh
            .iter()
            .map(|&w| {
                let s = shrunken_density(&real, &prior, w, None, &cfg, seed).map_err(|e| e.to_string())?;
                grid_tv_distance(&s.median_model, &prior, (-30.0, 30.0), (0.0, 60.0), 120).map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        rhos.push(spearman(&mesh, &tv));
        for (m, t) in mean_tv.iter_mut().zip(&tv) {
            *m += t / 10.0;
        }
    }
    let rho = spearman(&mesh, &mean_tv);
    let per_seed = rhos.iter().sum::<f64>() / rhos.len() as f64;
    let msg = format!(
        "Spearman(omega, mean TV) = {rho:.3}, mean per-seed Spearman = {per_seed:.3}; TV {:.3} at 0.1 -> {:.3} at 0.9",
        mean_tv[0], mean_tv[8]
    );
    if rho <= 0.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

const SIGMA_F: [f64; 7] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0];

fn simulation_consistency() -> Outcome {
    let zones = ZoneOutcomeModel::synthetic();
    let loss = belief_loss_curve(&zones, 4.0, &SIGMA_F, 10_000, 7).map_err(|e| e.to_string())?;
    let at_truth = loss.iter().find(|l| l.sigma_f == 4.0).unwrap();
    let zero_ok = at_truth.loss == 0.0 && at_truth.stderr == 0.0;
    let loss_ok = loss.iter().all(|l| l.loss >= -2.0 * l.stderr);
    let curve = run_curve(&zones, &[1.0, 2.0, 4.0, 6.0, 8.0], 10_000, 7).map_err(|e| e.to_string())?;
    let curve_ok = curve
        .windows(2)
        .all(|w| w[1].mean_runs >= w[0].mean_runs - 2.0 * w[0].stderr.hypot(w[1].stderr));
    let runs: Vec<String> = curve.iter().map(|c| format!("{:.3}", c.mean_runs)).collect();
    let min_z = loss
        .iter()
        .filter(|l| l.stderr > 0.0)
        .map(|l| l.loss / l.stderr)
        .fold(f64::INFINITY, f64::min);
    let msg = format!(
        "loss at sigma_F = sigma_T: {}; smallest loss/SE {min_z:.1}; runs/inning over sigma 1,2,4,6,8: {}",
        at_truth.loss,
        runs.join(", ")
    );
    if zero_ok && loss_ok && curve_ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn overconfidence_asymmetry() -> Outcome {
    let zones = ZoneOutcomeModel::synthetic();
    let mut wins = 0;
    for seed in 0..10u64 {
        let loss = belief_loss_curve(&zones, 4.0, &[2.0, 8.0], 10_000, 900 + seed).map_err(|e| e.to_string())?;
        if loss[0].loss > loss[1].loss {
            wins += 1;
        }
    }
    let msg = format!("sigma_T = 4: loss(2 in) > loss(8 in) in {wins}/10 seeds");
    if wins >= 7 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn not_reproducible() -> Outcome {
    Ok("stated: real-pitcher rankings and named-pitcher values, the Location+ and year-over-year \
        correlations and all outcome regressions need real MLB and proprietary data; covered instead \
        by criteria 1-8 and the module invariant suites"
        .into())
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn fixture(dir: &Path) -> PathBuf {
    let mut s = String::from("pitcher,game_year,pitch_type,stand,balls,strikes,plate_x,plate_z,delta_run_exp\n");
    let bins = [("100", "R", 400, 0.0), ("100", "L", 350, 1.5), ("200", "R", 300, -1.0), ("300", "L", 120, 0.0)];
    for (j, (pitcher, hand, n, shift)) in bins.into_iter().enumerate() {
        let m = MixtureModel::from_components(vec![
            comp(0.6, (6.0 + shift, 32.0), 9.0),
            comp(0.4, (-6.0 + shift, 24.0), 9.0 + shift.abs()),
        ]);
        for (i, (x, z)) in m.sample(n, &mut xctrl::seed::rng(j as u64)).unwrap().into_iter().enumerate() {
            let (b, st) = (i % 4, (i / 4) % 3);
            writeln!(s, "{pitcher},2023,FF,{hand},{b},{st},{:.5},{:.5},0.01", x / 12.0, z / 12.0).unwrap();
        }
    }
    let path = dir.join("pitches.csv");
    fs::write(&path, s).unwrap();
    path
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_xctrl");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = fixture(dir.path());
    let input = input.to_str().unwrap();
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let out = out.to_str().unwrap();
        let common = ["--seed", "42", "--out", out];
        let data = ["--input", input, "--k-max", "4", "--restarts", "2"];
        let steps: Vec<Vec<&str>> = vec![
            [&["fit"][..], &common, &data].concat(),
            [&["score", "--replicates", "20", "--per-pitch"][..], &common, &data].concat(),
            [&["heatmap", "--bin", "100/2023/FF/R", "--resolution", "40"][..], &common].concat(),
            [&["shrink", "--bin", "100/2023/FF/L", "--count-group", "early", "--replicates", "5"][..], &common, &data]
                .concat(),
            [&["simulate", "--innings", "2000"][..], &common].concat(),
        ];
        for args in steps {
            let run = Command::new(bin).args(&args).output().map_err(|e| e.to_string())?;
            if !run.status.success() {
                let err = String::from_utf8_lossy(&run.stderr);
                return Err(format!("`xctrl {}` exited with {}: {err}", args.join(" "), run.status));
            }
        }
        trees.push(tree(Path::new(out)));
    }
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();
    let differing: Vec<&str> = trees[0]
        .iter()
        .zip(&trees[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let msg = format!("fit, score, heatmap, shrink, simulate run twice: {} files, {bytes} bytes", trees[0].len());
    if trees[0].len() == trees[1].len() && differing.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; differing: {differing:?}"))
    }
}

fn main() {
    let mut traces = Vec::new();
    let mut checks: Vec<(&str, Box<dyn FnMut() -> Outcome>)> = vec![
        ("worked example", Box::new(worked_example)),
        ("posterior", Box::new(posterior_oracle)),
        ("EM recovery", Box::new(|| em_recovery(&mut traces))),
    ];
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        let (tag, msg) = match r {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("criterion {n:>2} {tag} [{name}, {secs:.1}s] {msg}");
    };
    for (i, (name, f)) in checks.iter_mut().enumerate() {
        report(i + 1, name, f.as_mut());
    }
    drop(checks);
    report(4, "monotone EM", &mut || monotone_em(&traces));
    report(5, "bootstrap calibration", &mut bootstrap_calibration);
    report(6, "shrinkage limit", &mut shrinkage_limit);
    report(7, "simulation consistency", &mut simulation_consistency);
    report(8, "overconfidence asymmetry", &mut overconfidence_asymmetry);
    report(9, "out of scope", &mut not_reproducible);
    report(10, "determinism", &mut determinism);
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
