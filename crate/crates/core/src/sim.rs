//! Inning simulation on a 5×5 extended strike zone.
//!
//! A pitcher aims at one cell centre per base-out-count state; the pitch lands
//! at the target plus isotropic Gaussian noise (σ_T). The landing cell's
//! outcome distribution decides what happens. Landings off the grid are balls.
//!
//! Optimal policies are computed exactly by value iteration over the 288
//! non-terminal states, using closed-form landing probabilities for the
//! believed noise σ_F. Simulation is Monte Carlo with one derived seed per
//! inning, so curves over σ share random numbers.

use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::StrikeZone;
use crate::{seed, Point};

pub const GRID: usize = 5;
pub const N_CELLS: usize = GRID * GRID;
pub const N_STATES: usize = 3 * 8 * 4 * 3;
pub const PA_CAP: usize = 500;

const SYNTHETIC_ZONES: &str = include_str!("../data/synthetic_zones.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ball,
    Strike,
    Foul,
    OutInPlay,
    Single,
    Double,
    Triple,
    HomeRun,
}

impl Outcome {
    pub const ALL: [Outcome; 8] = [
        Outcome::Ball,
        Outcome::Strike,
        Outcome::Foul,
        Outcome::OutInPlay,
        Outcome::Single,
        Outcome::Double,
        Outcome::Triple,
        Outcome::HomeRun,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Ball => "ball",
            Outcome::Strike => "strike",
            Outcome::Foul => "foul",
            Outcome::OutInPlay => "out_in_play",
            Outcome::Single => "single",
            Outcome::Double => "double",
            Outcome::Triple => "triple",
            Outcome::HomeRun => "home_run",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outs, base occupancy (bit 0 = first, bit 1 = second, bit 2 = third) and count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct GameState {
    pub outs: u8,
    pub bases: u8,
    pub balls: u8,
    pub strikes: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub next: GameState,
    pub runs: u32,
    pub pa_over: bool,
}

impl GameState {
    pub fn is_terminal(&self) -> bool {
        self.outs >= 3
    }

    /// Dense index over non-terminal states.
    pub fn index(&self) -> usize {
        debug_assert!(!self.is_terminal());
        ((self.outs as usize * 8 + self.bases as usize) * 4 + self.balls as usize) * 3 + self.strikes as usize
    }

    pub fn from_index(i: usize) -> GameState {
        GameState {
            strikes: (i % 3) as u8,
            balls: (i / 3 % 4) as u8,
            bases: (i / 12 % 8) as u8,
            outs: (i / 96) as u8,
        }
    }

    fn new_pa(self, outs: u8, bases: u8) -> GameState {
        GameState { outs, bases, balls: 0, strikes: 0 }
    }

    /// One pitch outcome under the fixed advancement rules: walks force
    /// runners, hits move everyone the hit's number of bases, in-play outs
    /// never advance runners, fouls cannot produce strike three.
    pub fn apply(self, outcome: Outcome) -> Transition {
        let b = self.bases;
        let step = |next, runs, pa_over| Transition { next, runs, pa_over };
        match outcome {
            Outcome::Ball if self.balls < 3 => step(GameState { balls: self.balls + 1, ..self }, 0, false),
            Outcome::Ball => {
                let (bases, runs) = if b & 1 == 0 {
                    (b | 1, 0)
                } else if b & 2 == 0 {
                    (b | 2, 0)
                } else if b & 4 == 0 {
                    (b | 4, 0)
                } else {
                    (b, 1)
                };
                step(self.new_pa(self.outs, bases), runs, true)
            }
            Outcome::Strike if self.strikes < 2 => step(GameState { strikes: self.strikes + 1, ..self }, 0, false),
            Outcome::Strike | Outcome::OutInPlay => step(self.new_pa(self.outs + 1, b), 0, true),
            Outcome::Foul => step(GameState { strikes: (self.strikes + 1).min(2), ..self }, 0, false),
            Outcome::Single => step(self.new_pa(self.outs, ((b << 1) & 0b110) | 1), (b >> 2 & 1) as u32, true),
            Outcome::Double => step(self.new_pa(self.outs, ((b << 2) & 0b100) | 0b010), (b & 0b110).count_ones(), true),
            Outcome::Triple => step(self.new_pa(self.outs, 0b100), b.count_ones(), true),
            Outcome::HomeRun => step(self.new_pa(self.outs, 0), b.count_ones() + 1, true),
        }
    }
}

/// Extended-zone rectangle, split into 5×5 equal cells. Row 0 is the top row,
/// column 0 the catcher's left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneGeometry {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for ZoneGeometry {
    fn default() -> Self {
        ZoneGeometry::around(&StrikeZone::default())
    }
}

impl ZoneGeometry {
    /// The strike zone as the inner 3×3 block plus one ring of border cells.
    pub fn around(zone: &StrikeZone) -> ZoneGeometry {
        let w = (zone.right - zone.left) / 3.0;
        let h = (zone.top - zone.bottom) / 3.0;
        ZoneGeometry {
            x_min: zone.left - w,
            x_max: zone.right + w,
            z_min: zone.bottom - h,
            z_max: zone.top + h,
        }
    }

    pub fn cell_width(&self) -> f64 {
        (self.x_max - self.x_min) / GRID as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.z_max - self.z_min) / GRID as f64
    }

    pub fn center(&self, cell: usize) -> Point {
        let (row, col) = (cell / GRID, cell % GRID);
        (
            self.x_min + (col as f64 + 0.5) * self.cell_width(),
            self.z_max - (row as f64 + 0.5) * self.cell_height(),
        )
    }

    /// Cell containing `p`, or `None` off the grid.
    pub fn locate(&self, p: Point) -> Option<usize> {
        if !(p.0 >= self.x_min && p.0 < self.x_max && p.1 > self.z_min && p.1 <= self.z_max) {
            return None;
        }
        let col = (((p.0 - self.x_min) / self.cell_width()) as usize).min(GRID - 1);
        let row = (((self.z_max - p.1) / self.cell_height()) as usize).min(GRID - 1);
        Some(row * GRID + col)
    }

    fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min && self.z_max > self.z_min) || !(self.x_min.is_finite() && self.x_max.is_finite() && self.z_min.is_finite() && self.z_max.is_finite()) {
            return Err(Error::ZoneModel(format!("degenerate geometry {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneOutcomeModel {
    pub geometry: ZoneGeometry,
    /// `probs[cell][outcome]`, outcomes in `Outcome::ALL` order.
    pub probs: Vec<[f64; 8]>,
}

const ROW_SUM_TOL: f64 = 1e-6;

impl ZoneOutcomeModel {
    pub fn new(geometry: ZoneGeometry, probs: Vec<[f64; 8]>) -> Result<Self> {
        geometry.validate()?;
        if probs.len() != N_CELLS {
            return Err(Error::ZoneModel(format!("expected {N_CELLS} cells, got {}", probs.len())));
        }
        let mut probs = probs;
        for (cell, p) in probs.iter_mut().enumerate() {
            if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::ZoneModel(format!("cell {cell}: probabilities must be finite and >= 0")));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::ZoneModel(format!("cell {cell}: probabilities sum to {s}")));
            }
            p.iter_mut().for_each(|v| *v /= s);
        }
        Ok(ZoneOutcomeModel { geometry, probs })
    }

    /// Same outcome vector in every cell.
    pub fn uniform(p: [f64; 8]) -> Result<Self> {
        Self::new(ZoneGeometry::default(), vec![p; N_CELLS])
    }

    /// The bundled synthetic model: contact in the middle, called strikes on
    /// the inner corners, balls in the outer ring.
    pub fn synthetic() -> Self {
        Self::from_reader(SYNTHETIC_ZONES.as_bytes(), ZoneGeometry::default()).expect("bundled zone model is valid")
    }

    pub fn load(path: &Path, geometry: ZoneGeometry) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(f, geometry)
    }

    /// CSV with columns `row, col` and one column per outcome name; exactly 25
    /// rows covering every cell once.
    pub fn from_reader<R: Read>(reader: R, geometry: ZoneGeometry) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::ZoneModel(format!("missing column '{name}'")))
        };
        let (ri, ci) = (col("row")?, col("col")?);
        let oi: Vec<usize> = Outcome::ALL.iter().map(|o| col(o.name())).collect::<Result<_>>()?;
        let mut cells: Vec<Option<[f64; 8]>> = vec![None; N_CELLS];
        let mut n_rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 1;
            n_rows += 1;
            let field = |j: usize| rec.get(j).unwrap_or("");
            let idx = |j: usize| -> Result<usize> {
                field(j)
                    .parse::<usize>()
                    .ok()
                    .filter(|v| *v < GRID)
                    .ok_or_else(|| Error::ZoneModel(format!("row {line}: bad cell index '{}'", field(j))))
            };
            let cell = idx(ri)? * GRID + idx(ci)?;
            let mut p = [0.0; 8];
            for (k, &j) in oi.iter().enumerate() {
                p[k] = field(j)
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| Error::ZoneModel(format!("row {line}: bad probability '{}'", field(j))))?;
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::ZoneModel(format!("row {line}: probabilities sum to {s}")));
            }
            if cells[cell].replace(p).is_some() {
                return Err(Error::ZoneModel(format!("row {line}: duplicate cell ({}, {})", cell / GRID, cell % GRID)));
            }
        }
        if n_rows != N_CELLS {
            return Err(Error::ZoneModel(format!("expected {N_CELLS} rows, got {n_rows}")));
        }
        Self::new(geometry, cells.into_iter().map(|c| c.expect("all cells seen")).collect())
    }

    /// Outcome distribution of a pitch aimed at `cell` with noise `sigma`.
    pub fn aimed_outcomes(&self, cell: usize, sigma: f64) -> [f64; 8] {
        let g = &self.geometry;
        let (cx, cz) = g.center(cell);
        let mut out = [0.0; 8];
        if sigma == 0.0 {
            return self.probs[cell];
        }
        let phi = |t: f64| 0.5 * libm::erfc(-t / (sigma * std::f64::consts::SQRT_2));
        let (w, h) = (g.cell_width(), g.cell_height());
        let px: Vec<f64> = (0..GRID)
            .map(|c| {
                let lo = g.x_min + c as f64 * w;
                phi(lo + w - cx) - phi(lo - cx)
            })
            .collect();
        let pz: Vec<f64> = (0..GRID)
            .map(|r| {
                let hi = g.z_max - r as f64 * h;
                phi(hi - cz) - phi(hi - h - cz)
            })
            .collect();
        let mut on_grid = 0.0;
        for r in 0..GRID {
            for c in 0..GRID {
                let m = pz[r] * px[c];
                on_grid += m;
                for (o, v) in out.iter_mut().zip(&self.probs[r * GRID + c]) {
                    *o += m * v;
                }
            }
        }
        out[0] += (1.0 - on_grid).max(0.0);
        out
    }

    fn aimed_table(&self, sigma: f64) -> Vec<[f64; 8]> {
        (0..N_CELLS).map(|c| self.aimed_outcomes(c, sigma)).collect()
    }

    /// Sample the outcome of a pitch that lands at `p`.
    pub fn sample_outcome<R: Rng + ?Sized>(&self, p: Point, rng: &mut R) -> Outcome {
        let u: f64 = rng.random();
        let Some(cell) = self.geometry.locate(p) else {
            return Outcome::Ball;
        };
        let probs = &self.probs[cell];
        let mut acc = 0.0;
        for (o, &q) in Outcome::ALL.iter().zip(probs) {
            acc += q;
            if u < acc {
                return *o;
            }
        }
        // rounding: fall back to the last outcome with positive mass
        Outcome::ALL[probs.iter().rposition(|&q| q > 0.0).unwrap_or(0)]
    }
}

pub fn perturb_target<R: Rng + ?Sized>(intended: Point, sigma: f64, rng: &mut R) -> Point {
    let ex: f64 = rng.sample(StandardNormal);
    let ez: f64 = rng.sample(StandardNormal);
    (intended.0 + sigma * ex, intended.1 + sigma * ez)
}

/// Target cell for every non-terminal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Noise the policy was optimised for.
    pub sigma: f64,
    pub cells: Vec<usize>,
    /// Expected runs to the end of the inning under `sigma`.
    pub values: Vec<f64>,
}

impl Policy {
    pub fn target(&self, s: GameState) -> usize {
        self.cells[s.index()]
    }

    /// Always aim at `cell`.
    pub fn constant(cell: usize) -> Policy {
        Policy { sigma: f64::NAN, cells: vec![cell; N_STATES], values: vec![f64::NAN; N_STATES] }
    }

    /// Expected runs from the start of an inning, as computed at build time.
    pub fn inning_value(&self) -> f64 {
        self.values[GameState::default().index()]
    }
}

struct Edges {
    /// `(next index or None when the inning ends, runs)` per state and outcome.
    to: Vec<[(Option<usize>, f64); 8]>,
}

impl Edges {
    fn build() -> Edges {
        let to = (0..N_STATES)
            .map(|i| {
                let s = GameState::from_index(i);
                Outcome::ALL.map(|o| {
                    let t = s.apply(o);
                    ((!t.next.is_terminal()).then(|| t.next.index()), t.runs as f64)
                })
            })
            .collect();
        Edges { to }
    }

    fn q(&self, state: usize, aimed: &[f64; 8], v: &[f64]) -> f64 {
        self.to[state]
            .iter()
            .zip(aimed)
            .map(|(&(next, r), &p)| p * (r + next.map_or(0.0, |n| v[n])))
            .sum()
    }
}

const VI_TOL: f64 = 1e-12;
const VI_MAX_SWEEPS: usize = 100_000;
/// Expected runs beyond this mean outs are (nearly) unreachable.
const VI_MAX_RUNS: f64 = 1e3;

/// Bellman sweeps until the largest update is below tolerance. `choose`
/// returns the new value and chosen cell for one state.
fn iterate<F>(mut choose: F) -> Result<(Vec<f64>, Vec<usize>)>
where
    F: FnMut(usize, &[f64]) -> (f64, usize),
{
    let mut v = vec![0.0; N_STATES];
    let mut cells = vec![0; N_STATES];
    for _ in 0..VI_MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        // later states first: outs and counts only move forward within a PA
        for i in (0..N_STATES).rev() {
            let (nv, c) = choose(i, &v);
            delta = delta.max((nv - v[i]).abs() / (1.0 + nv.abs()));
            v[i] = nv;
            cells[i] = c;
        }
        if !v.iter().all(|x| x.is_finite() && *x < VI_MAX_RUNS) {
            break;
        }
        if delta < VI_TOL {
            return Ok((v, cells));
        }
    }
    Err(Error::ZoneModel("expected runs do not converge; outs are (nearly) impossible".into()))
}

/// Run-minimising target per state for a pitcher with noise `sigma`. Ties go
/// to the lower cell index.
pub fn optimal_policy(zones: &ZoneOutcomeModel, sigma: f64) -> Result<Policy> {
    check_sigma(sigma)?;
    let table = zones.aimed_table(sigma);
    let edges = Edges::build();
    let (values, cells) = iterate(|i, v| {
        let mut best = (f64::INFINITY, 0);
        for (c, aimed) in table.iter().enumerate() {
            let q = edges.q(i, aimed, v);
            if q < best.0 {
                best = (q, c);
            }
        }
        best
    })?;
    Ok(Policy { sigma, cells, values })
}

/// Exact expected runs per state when `policy` is followed with true noise `sigma`.
pub fn evaluate_policy(policy: &Policy, zones: &ZoneOutcomeModel, sigma: f64) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let table = zones.aimed_table(sigma);
    let edges = Edges::build();
    let (v, _) = iterate(|i, v| (edges.q(i, &table[policy.cells[i]], v), policy.cells[i]))?;
    Ok(v)
}

/// One-step lookahead value of aiming at each cell from `state`, given
/// continuation values `v`.
pub fn action_values(zones: &ZoneOutcomeModel, sigma: f64, state: GameState, v: &[f64]) -> Vec<f64> {
    let edges = Edges::build();
    zones.aimed_table(sigma).iter().map(|a| edges.q(state.index(), a, v)).collect()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InningResult {
    pub runs: u32,
    pub plate_appearances: usize,
    pub pitches: usize,
}

/// Simulate pitches until three outs.
pub fn simulate_inning<R: Rng + ?Sized>(
    policy: &Policy,
    zones: &ZoneOutcomeModel,
    sigma_t: f64,
    rng: &mut R,
) -> Result<InningResult> {
    let mut s = GameState::default();
    let mut res = InningResult::default();
    while !s.is_terminal() {
        let target = zones.geometry.center(policy.target(s));
        let landed = perturb_target(target, sigma_t, rng);
        let t = s.apply(zones.sample_outcome(landed, rng));
        res.runs += t.runs;
        res.pitches += 1;
        if t.pa_over {
            res.plate_appearances += 1;
            if res.plate_appearances >= PA_CAP && !t.next.is_terminal() {
                return Err(Error::PlateAppearanceCap(PA_CAP));
            }
        }
        s = t.next;
    }
    Ok(res)
}

/// Runs in each of `innings` innings; inning `i` always uses the same
/// derived seed, whatever the policy or noise.
pub fn simulate_innings(
    policy: &Policy,
    zones: &ZoneOutcomeModel,
    sigma_t: f64,
    innings: usize,
    seed: u64,
) -> Result<Vec<u32>> {
    check_sigma(sigma_t)?;
    (0..innings)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed::derive(seed, &[seed::TAG_INNING, i as u64]));
            simulate_inning(policy, zones, sigma_t, &mut rng).map(|r| r.runs)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sigma: f64,
    pub mean_runs: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub sigma_f: f64,
    pub loss: f64,
    /// Standard error of the paired per-inning differences.
    pub stderr: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = crate::stats::mean(xs);
    let se = if xs.len() > 1 { crate::stats::std_dev(xs) / n.sqrt() } else { 0.0 };
    (m, se)
}

fn check_innings(innings: usize) -> Result<()> {
    if innings == 0 {
        return Err(Error::InvalidInput("innings must be >= 1".into()));
    }
    Ok(())
}

/// Mean runs per inning when the policy matches the true noise, per σ.
pub fn run_curve(zones: &ZoneOutcomeModel, sigmas: &[f64], innings: usize, seed: u64) -> Result<Vec<CurvePoint>> {
    check_innings(innings)?;
    if sigmas.is_empty() {
        return Err(Error::InvalidInput("empty sigma list".into()));
    }
    sigmas
        .iter()
        .map(|&sigma| {
            let policy = optimal_policy(zones, sigma)?;
            let runs: Vec<f64> = simulate_innings(&policy, zones, sigma, innings, seed)?
                .into_iter()
                .map(f64::from)
                .collect();
            let (mean_runs, stderr) = mean_se(&runs);
            Ok(CurvePoint { sigma, mean_runs, stderr })
        })
        .collect()
}

/// Extra runs per inning from planning for noise σ_F while the true noise
/// is `sigma_t`. Both policies face the same innings (common random numbers).
pub fn belief_loss_curve(
    zones: &ZoneOutcomeModel,
    sigma_t: f64,
    sigma_f: &[f64],
    innings: usize,
    seed: u64,
) -> Result<Vec<LossPoint>> {
    check_innings(innings)?;
    let truth = optimal_policy(zones, sigma_t)?;
    let base = simulate_innings(&truth, zones, sigma_t, innings, seed)?;
    sigma_f
        .iter()
        .map(|&sf| {
            let policy = optimal_policy(zones, sf)?;
            let diffs: Vec<f64> = if policy.cells == truth.cells {
                vec![0.0; innings]
            } else {
                simulate_innings(&policy, zones, sigma_t, innings, seed)?
                    .iter()
                    .zip(&base)
                    .map(|(&a, &b)| f64::from(a) - f64::from(b))
                    .collect()
            };
            let (loss, stderr) = mean_se(&diffs);
            Ok(LossPoint { sigma_f: sf, loss, stderr })
        })
        .collect()
}

pub fn write_run_curve_csv<W: std::io::Write>(w: W, curve: &[CurvePoint]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(["sigma", "mean_runs", "stderr"])?;
    for p in curve {
        wr.write_record([p.sigma.to_string(), format!("{:.6}", p.mean_runs), format!("{:.6}", p.stderr)])?;
    }
    wr.flush().map_err(|e| Error::io("<run curve>", e))
}

pub fn write_loss_curve_csv<W: std::io::Write>(w: W, sigma_t: f64, curve: &[LossPoint]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(["sigma_t", "sigma_f", "loss", "stderr"])?;
    for p in curve {
        wr.write_record([
            sigma_t.to_string(),
            p.sigma_f.to_string(),
            format!("{:.6}", p.loss),
            format!("{:.6}", p.stderr),
        ])?;
    }
    wr.flush().map_err(|e| Error::io("<loss curve>", e))
}
