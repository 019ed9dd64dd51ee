//! `xctrl` command-line front-end.
//!
//! Exit codes: 0 success, 1 output I/O, 2 configuration, 3 input data,
//! 4 fitting.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use xctrl::ingest::{CountGroup, CountGrouping};

pub mod commands;
pub mod config;
pub mod output;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Config(String),
    Data(String),
    Fit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fit(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Io(m) => ("i/o error", m),
            CliError::Config(m) => ("config error", m),
            CliError::Data(m) => ("data error", m),
            CliError::Fit(m) => ("fit error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl From<xctrl::Error> for CliError {
    fn from(e: xctrl::Error) -> Self {
        use xctrl::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidInput(_) => CliError::Config(msg),
            E::Io { .. }
            | E::Csv(_)
            | E::Json(_)
            | E::MissingColumn(_)
            | E::NoValidRows
            | E::BadRow { .. }
            | E::ZoneModel(_) => CliError::Data(msg),
            E::TooFewPoints { .. } | E::DegenerateFit(_) | E::BootstrapFailed { .. } | E::PlateAppearanceCap(_) => {
                CliError::Fit(msg)
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "xctrl", version, about = "Pitch control (xCTRL) from inferred intended targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixture per qualifying bin; writes models/.
    Fit(FitArgs),
    /// Score bins against fitted models, with bootstrap intervals; writes scores/.
    Score(ScoreArgs),
    /// Density grid and strike-zone sidecar for one bin; writes grids/.
    Heatmap(HeatmapArgs),
    /// Count-specific density shrunk toward the bin's count-agnostic model.
    Shrink(ShrinkArgs),
    /// Run-value simulation curves; writes sim/.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Base RNG seed (required, here or in the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
    /// TOML config; its keys override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Pitch CSV (repeatable).
    #[arg(long = "input", short)]
    pub inputs: Vec<PathBuf>,
    /// Locations are already in inches (default: feet, converted).
    #[arg(long)]
    pub inches: bool,
    /// Count handling: ignore, grouped or exact.
    #[arg(long, value_parser = parse_grouping)]
    pub count_grouping: Option<CountGrouping>,
    /// Minimum fit-eligible pitches per bin.
    #[arg(long)]
    pub min_pitches: Option<usize>,
    /// Largest component count tried
    #[arg(long)]
    pub k_max: Option<usize>,
    /// EM initialisations per component count.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Training share for component-count selection.
    #[arg(long)]
    pub split_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Point estimates only; CI columns left empty.
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Bootstrap replicates per bin.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Score the original pitches in each replicate instead of the resample.
    #[arg(long)]
    pub score_original: bool,
    /// Fit models that are missing instead of failing.
    #[arg(long)]
    pub fit: bool,
    /// Also write per-pitch scores.
    #[arg(long)]
    pub per_pitch: bool,
    /// Weight the batter-hand average by pitch counts.
    #[arg(long)]
    pub weighted_overall: bool,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub common: Common,
    /// Bin as pitcher/season/pitch_type/hand[/count_group].
    #[arg(long)]
    pub bin: Option<String>,
    /// Cells per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Horizontal window, `lo,hi` inches.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub x_range: Option<(f64, f64)>,
    /// Vertical window, `lo,hi` inches.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub z_range: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct ShrinkArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Count-agnostic bin as pitcher/season/pitch_type/hand.
    #[arg(long)]
    pub bin: Option<String>,
    /// early, hitter_friendly, pitcher_friendly or an exact count like 1-2.
    #[arg(long, value_parser = parse_count_group)]
    pub count_group: Option<CountGroup>,
    /// Candidate synthetic weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub omega_mesh: Option<Vec<f64>>,
    /// Draws from the count-agnostic model per fit
    #[arg(long)]
    pub n_synthetic: Option<usize>,
    /// Densities built after omega is chosen.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Zone outcome CSV (default: bundled synthetic model).
    #[arg(long)]
    pub zones: Option<PathBuf>,
    /// True-noise values for the run curve, inches.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// True noise for the loss curve.
    #[arg(long)]
    pub sigma_t: Option<f64>,
    /// Believed-noise values for the loss curve.
    #[arg(long, value_delimiter = ',')]
    pub sigma_f: Option<Vec<f64>>,
    /// Innings per curve point
    #[arg(long)]
    pub innings: Option<usize>,
}

fn parse_grouping(s: &str) -> Result<CountGrouping, String> {
    match s {
        "ignore" => Ok(CountGrouping::Ignore),
        "grouped" => Ok(CountGrouping::Grouped),
        "exact" => Ok(CountGrouping::Exact),
        _ => Err("expected ignore, grouped or exact".into()),
    }
}

fn parse_count_group(s: &str) -> Result<CountGroup, String> {
    s.parse().map_err(|e: xctrl::Error| e.to_string())
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn base_config(common: &Common) -> RunConfig {
    RunConfig {
        seed: common.seed,
        out_dir: common.out.clone(),
        ..RunConfig::default()
    }
}

fn apply_data(c: &mut RunConfig, d: &DataArgs) {
    c.inputs = d.inputs.clone();
    if d.inches {
        c.ingest.feet_to_inches = false;
    }
    if let Some(g) = d.count_grouping {
        c.count_grouping = g;
    }
    if let Some(v) = d.min_pitches {
        c.em.min_points = v;
    }
    if let Some(v) = d.k_max {
        c.em.k_max = v;
    }
    if let Some(v) = d.restarts {
        c.em.restarts = v;
    }
    if let Some(v) = d.split_fraction {
        c.em.split_fraction = v;
    }
}

fn finalize(c: RunConfig, common: &Common) -> Result<RunConfig, CliError> {
    match &common.config {
        Some(p) => c.merge_file(p),
        None => Ok(c),
    }
}

/// Resolve flags and config file into a run configuration.
pub fn resolve(command: &Command) -> Result<RunConfig, CliError> {
    match command {
        Command::Fit(a) => {
            let mut c = base_config(&a.common);
            apply_data(&mut c, &a.data);
            finalize(c, &a.common)
        }
        Command::Score(a) => {
            let mut c = base_config(&a.common);
            apply_data(&mut c, &a.data);
            c.bootstrap.enabled = !a.no_bootstrap;
            if let Some(b) = a.replicates {
                c.bootstrap.replicates = b;
                c.bootstrap.min_successful = c.bootstrap.min_successful.min((b * 9).div_ceil(10));
            }
            if a.score_original {
                c.bootstrap.mode = xctrl::bootstrap::ScoreMode::Original;
            }
            c.fit_inline = a.fit;
            c.per_pitch = a.per_pitch;
            if a.weighted_overall {
                c.overall_weighting = xctrl::intent::OverallWeighting::PitchCount;
            }
            finalize(c, &a.common)
        }
        Command::Heatmap(a) => {
            let mut c = base_config(&a.common);
            c.heatmap.bin = a.bin.clone();
            if let Some(r) = a.resolution {
                c.heatmap.resolution = r;
            }
            if let Some(r) = a.x_range {
                c.heatmap.x_range = r;
            }
            if let Some(r) = a.z_range {
                c.heatmap.z_range = r;
            }
            finalize(c, &a.common)
        }
        Command::Shrink(a) => {
            let mut c = base_config(&a.common);
            apply_data(&mut c, &a.data);
            c.shrink.bin = a.bin.clone();
            c.shrink.count_group = a.count_group;
            if let Some(m) = &a.omega_mesh {
                c.shrink.omega_mesh = m.clone();
            }
            if let Some(n) = a.n_synthetic {
                c.shrink.n_synthetic = n;
            }
            if let Some(b) = a.replicates {
                c.shrink.replicates = b;
            }
            finalize(c, &a.common)
        }
        Command::Simulate(a) => {
            let mut c = base_config(&a.common);
            if a.zones.is_some() {
                c.sim.zones = a.zones.clone();
            }
            if let Some(s) = &a.sigmas {
                c.sim.sigmas = s.clone();
            }
            if let Some(s) = a.sigma_t {
                c.sim.sigma_t = s;
            }
            if let Some(s) = &a.sigma_f {
                c.sim.sigma_f = s.clone();
            }
            if let Some(n) = a.innings {
                c.sim.innings = n;
            }
            finalize(c, &a.common)
        }
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = resolve(&cli.command).and_then(|cfg| match &cli.command {
        Command::Fit(_) => commands::fit(&cfg),
        Command::Score(_) => commands::score(&cfg),
        Command::Heatmap(_) => commands::heatmap(&cfg),
        Command::Shrink(_) => commands::shrink(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("xctrl: {e}");
            e.exit_code()
        }
    }
}
