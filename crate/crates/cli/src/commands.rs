//! Subcommand implementations. Each one reads inputs, writes its outputs
//! atomically under the output directory and records itself in the manifest.

use std::collections::BTreeMap;

use xctrl::bootstrap::{bootstrap_bin, write_summaries_csv, BootstrapSummary};
use xctrl::gmm::{select_k, MixtureModel};
use xctrl::ingest::{apply_iqr_mask, bin_pitches, ingest_csv, select_bin, BinKey, BinnedData, CountGroup, PitchRecord};
use xctrl::intent::{density_grid, pitcher_overall, rank_bins, score_bin, write_rankings_csv, OverallWeighting, RankEntry};
use xctrl::sim::{belief_loss_curve, run_curve, write_loss_curve_csv, write_run_curve_csv, ZoneGeometry, ZoneOutcomeModel};
use xctrl::{seed, stats};

use crate::config::RunConfig;
use crate::output::{sha256_file, InputRecord, OutputTree, GRIDS, MODELS, SCORES, SIM};
use crate::CliError;

struct Loaded {
    records: Vec<PitchRecord>,
    inputs: Vec<InputRecord>,
}

fn load(cfg: &RunConfig) -> Result<Loaded, CliError> {
    if cfg.inputs.is_empty() {
        return Err(CliError::Config("no input files (--input)".into()));
    }
    let mut records = Vec::new();
    let mut inputs = Vec::new();
    for path in &cfg.inputs {
        let report = ingest_csv(path, &cfg.ingest)?;
        let dropped = report.dropped_missing_location + report.dropped_incomplete;
        if dropped > 0 {
            eprintln!(
                "{}: kept {} rows, dropped {} without location, {} incomplete",
                path.display(),
                report.records.len(),
                report.dropped_missing_location,
                report.dropped_incomplete
            );
        }
        records.extend(report.records);
        inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
    }
    Ok(Loaded { records, inputs })
}

fn masked_bins(cfg: &RunConfig, records: &[PitchRecord]) -> Vec<BinnedData> {
    bin_pitches(records, cfg.count_grouping).into_values().map(apply_iqr_mask).collect()
}

fn bin_seed(seed: u64, key: &BinKey) -> u64 {
    seed::derive(seed, &[seed::hash_str(&key.to_string())])
}

fn model_rel(key: &BinKey) -> String {
    format!("{MODELS}/{}.json", key.slug())
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf)
}

fn csv_bytes<F>(header: &[&str], rows: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        let fill = |w: &mut csv::Writer<&mut Vec<u8>>| -> csv::Result<()> {
            w.write_record(header)?;
            rows(w)?;
            w.flush()?;
            Ok(())
        };
        fill(&mut w).map_err(|e| CliError::Io(format!("csv: {e}")))?;
    }
    Ok(buf)
}

fn key_fields(k: &BinKey) -> [String; 5] {
    [
        k.pitcher_id.clone(),
        k.season.to_string(),
        k.pitch_type.clone(),
        k.batter_hand.to_string(),
        k.count_group.to_string(),
    ]
}

const KEY_HEADER: [&str; 5] = ["pitcher_id", "season", "pitch_type", "batter_hand", "count_group"];

fn with_key<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    KEY_HEADER.iter().copied().chain(extra.iter().copied()).collect()
}

/// Fit every bin that meets the threshold; write models, fits.csv and
/// skipped.csv. Errors when nothing qualifies.
fn fit_bins(cfg: &RunConfig, seed: u64, bins: &[BinnedData], out: &mut OutputTree) -> Result<BTreeMap<BinKey, MixtureModel>, CliError> {
    let mut models = BTreeMap::new();
    let mut skipped: Vec<(&BinnedData, String)> = Vec::new();
    for bin in bins {
        if bin.n_fit() < cfg.em.min_points {
            skipped.push((bin, format!("below {}-pitch threshold", cfg.em.min_points)));
            continue;
        }
        match select_k(&bin.fit_points(), None, bin_seed(seed, &bin.key), &cfg.em) {
            Ok(sel) => {
                let model = sel.model.with_bin(bin.key.clone());
                out.write(&model_rel(&bin.key), model.to_json()?.as_bytes())?;
                models.insert(bin.key.clone(), model);
            }
            Err(e) => skipped.push((bin, format!("fit failed: {e}"))),
        }
    }
    let skip_csv = csv_bytes(&with_key(&["n_pitches", "n_fit", "reason"]), |w| {
        for (bin, reason) in &skipped {
            let mut row = key_fields(&bin.key).to_vec();
            row.extend([bin.len().to_string(), bin.n_fit().to_string(), reason.clone()]);
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    out.write(&format!("{MODELS}/skipped.csv"), &skip_csv)?;
    let fits_csv = csv_bytes(&with_key(&["k", "n_fit", "train_loglik", "valid_loglik", "model_file"]), |w| {
        for (key, m) in &models {
            let mut row = key_fields(key).to_vec();
            row.extend([
                m.k.to_string(),
                m.n_fit.to_string(),
                m.train_loglik.to_string(),
                m.valid_loglik.map(|v| v.to_string()).unwrap_or_default(),
                format!("{}.json", key.slug()),
            ]);
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    out.write(&format!("{MODELS}/fits.csv"), &fits_csv)?;
    for (bin, reason) in &skipped {
        eprintln!("skipped {}: {reason}", bin.key);
    }
    if models.is_empty() {
        return Err(CliError::Fit(format!("no qualifying bins ({} skipped)", skipped.len())));
    }
    Ok(models)
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let data = load(cfg)?;
    let bins = masked_bins(cfg, &data.records);
    let mut out = OutputTree::new(&cfg.out_dir);
    let models = fit_bins(cfg, seed, &bins, &mut out)?;
    eprintln!("fitted {} of {} bins", models.len(), bins.len());
    out.finish("fit", seed, cfg.hash(), data.inputs)
}

fn load_model(out: &OutputTree, key: &BinKey) -> Result<Option<MixtureModel>, CliError> {
    let path = out.path(&model_rel(key));
    if !path.exists() {
        return Ok(None);
    }
    let model = MixtureModel::load(&path)?;
    if model.bin.as_ref().is_some_and(|b| b != key) {
        return Err(CliError::Data(format!("{} holds a model for a different bin", path.display())));
    }
    Ok(Some(model))
}

struct Scored {
    entry: RankEntry,
    summary: Option<BootstrapSummary>,
}

fn entry_for(key: &BinKey, xctrl: f64, ci: Option<(f64, f64)>, n: usize) -> RankEntry {
    RankEntry {
        pitcher_id: key.pitcher_id.clone(),
        season: key.season,
        pitch_type: key.pitch_type.clone(),
        batter_hand: Some(key.batter_hand),
        xctrl,
        ci,
        n,
        partial: false,
    }
}

fn combine(l: f64, nl: usize, r: f64, nr: usize, w: OverallWeighting) -> f64 {
    pitcher_overall(Some((l, nl)), Some((r, nr)), w).expect("both sides").xctrl
}

/// Hand-averaged rows from the count-agnostic bins. With bootstrap
/// summaries the headline and interval come from per-replicate averages of
/// the two sides.
fn overall_entries(scored: &BTreeMap<BinKey, Scored>, weighting: OverallWeighting) -> Vec<RankEntry> {
    let mut groups: BTreeMap<(String, i32, String), Vec<&Scored>> = BTreeMap::new();
    for (k, s) in scored {
        if k.count_group == CountGroup::All {
            groups.entry((k.pitcher_id.clone(), k.season, k.pitch_type.clone())).or_default().push(s);
        }
    }
    groups
        .into_iter()
        .filter_map(|((pitcher_id, season, pitch_type), sides)| {
            let side = |h: xctrl::ingest::BatterHand| sides.iter().find(|s| s.entry.batter_hand == Some(h)).copied();
            let (l, r) = (side(xctrl::ingest::BatterHand::L), side(xctrl::ingest::BatterHand::R));
            let point = pitcher_overall(
                l.map(|s| (s.entry.xctrl, s.entry.n)),
                r.map(|s| (s.entry.xctrl, s.entry.n)),
                weighting,
            )?;
            let (xctrl, ci) = match (l.and_then(|s| s.summary.as_ref()), r.and_then(|s| s.summary.as_ref())) {
                (Some(a), Some(b)) => {
                    let (nl, nr) = (l.map_or(0, |s| s.entry.n), r.map_or(0, |s| s.entry.n));
                    let both: Vec<f64> = a.paired(b).into_iter().map(|(x, y)| combine(x, nl, y, nr, weighting)).collect();
                    if both.is_empty() {
                        (point.xctrl, None)
                    } else {
                        (
                            stats::percentile(&both, 50.0),
                            Some((stats::percentile(&both, 5.0), stats::percentile(&both, 95.0))),
                        )
                    }
                }
                (Some(s), None) | (None, Some(s)) if point.partial => (s.median_xctrl, Some(s.ci90)),
                _ => (point.xctrl, None),
            };
            Some(RankEntry {
                pitcher_id,
                season,
                pitch_type,
                batter_hand: None,
                xctrl,
                ci,
                n: point.n,
                partial: point.partial,
            })
        })
        .collect()
}

pub fn score(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let data = load(cfg)?;
    let bins = masked_bins(cfg, &data.records);
    let mut out = OutputTree::new(&cfg.out_dir);
    let models: BTreeMap<BinKey, MixtureModel> = if cfg.fit_inline {
        fit_bins(cfg, seed, &bins, &mut out)?
    } else {
        let mut m = BTreeMap::new();
        for bin in &bins {
            if let Some(model) = load_model(&out, &bin.key)? {
                m.insert(bin.key.clone(), model);
            }
        }
        m
    };
    if models.is_empty() {
        return Err(CliError::Fit(format!(
            "no fitted models for these bins under {}; run `xctrl fit` first or pass --fit",
            out.path(MODELS).display()
        )));
    }
    let bcfg = cfg.bootstrap_config();
    let mut scored: BTreeMap<BinKey, Scored> = BTreeMap::new();
    let mut per_pitch_rows: Vec<Vec<String>> = Vec::new();
    for bin in bins.iter().filter(|b| models.contains_key(&b.key)) {
        let model = &models[&bin.key];
        let point = score_bin(bin, model, cfg.per_pitch)?;
        if let Some(pp) = &point.per_pitch {
            for (rec, s) in bin.pitches.iter().zip(pp) {
                let mut row = key_fields(&bin.key).to_vec();
                row.extend([
                    rec.plate_x.to_string(),
                    rec.plate_z.to_string(),
                    format!("{:.4}", s.xctrl),
                    s.was_fit_outlier.to_string(),
                ]);
                per_pitch_rows.push(row);
            }
        }
        let item = if cfg.bootstrap.enabled {
            let summary = bootstrap_bin(bin, &bcfg, bin_seed(seed, &bin.key))?;
            Scored {
                entry: entry_for(&bin.key, summary.median_xctrl, Some(summary.ci90), bin.len()),
                summary: Some(summary),
            }
        } else {
            Scored {
                entry: entry_for(&bin.key, point.mean_xctrl, None, bin.len()),
                summary: None,
            }
        };
        scored.insert(bin.key.clone(), item);
    }

    let mut bin_csv = Vec::new();
    write_rankings_csv(&mut bin_csv, &rank_bins(scored.values().map(|s| s.entry.clone()).collect()))?;
    out.write(&format!("{SCORES}/bin_rankings.csv"), &bin_csv)?;
    let mut overall_csv = Vec::new();
    write_rankings_csv(&mut overall_csv, &rank_bins(overall_entries(&scored, cfg.overall_weighting)))?;
    out.write(&format!("{SCORES}/rankings.csv"), &overall_csv)?;
    if cfg.bootstrap.enabled {
        let summaries: Vec<BootstrapSummary> = scored.values().filter_map(|s| s.summary.clone()).collect();
        let mut buf = Vec::new();
        write_summaries_csv(&mut buf, &summaries)?;
        out.write(&format!("{SCORES}/bootstrap_summary.csv"), &buf)?;
        for s in &summaries {
            let key = s.bin.as_ref().expect("bin summaries carry their key");
            out.write(
                &format!("{SCORES}/median_models/{}.json", key.slug()),
                s.median_model.to_json()?.as_bytes(),
            )?;
        }
    }
    if cfg.per_pitch {
        let buf = csv_bytes(&with_key(&["plate_x_in", "plate_z_in", "xctrl_in", "fit_outlier"]), |w| {
            per_pitch_rows.iter().try_for_each(|r| w.write_record(r))
        })?;
        out.write(&format!("{SCORES}/per_pitch.csv"), &buf)?;
    }
    eprintln!("scored {} bins", scored.len());
    out.finish("score", seed, cfg.hash(), data.inputs)
}

fn parse_bin(s: Option<&String>, what: &str) -> Result<BinKey, CliError> {
    let s = s.ok_or_else(|| CliError::Config(format!("{what} needs --bin pitcher/season/pitch_type/hand")))?;
    s.parse().map_err(CliError::from)
}

pub fn heatmap(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let key = parse_bin(cfg.heatmap.bin.as_ref(), "heatmap")?;
    let mut out = OutputTree::new(&cfg.out_dir);
    let model = load_model(&out, &key)?.ok_or_else(|| {
        CliError::Data(format!("unknown bin {key}: no model at {}", out.path(&model_rel(&key)).display()))
    })?;
    let h = &cfg.heatmap;
    let grid = density_grid(&model, h.x_range, h.z_range, (h.resolution, h.resolution))?;
    let mut buf = Vec::new();
    grid.write_csv(&mut buf)?;
    out.write(&format!("{GRIDS}/{}.csv", key.slug()), &buf)?;
    let sidecar = serde_json::json!({
        "bin": key.to_string(),
        "strike_zone": cfg.zone,
        "x_range": h.x_range,
        "z_range": h.z_range,
        "resolution": h.resolution,
        "k": model.k,
    });
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    out.write(&format!("{GRIDS}/{}.zone.json", key.slug()), text.as_bytes())?;
    out.finish("heatmap", seed, cfg.hash(), Vec::new())
}

pub fn shrink(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let parent = parse_bin(cfg.shrink.bin.as_ref(), "shrink")?.with_count(CountGroup::All);
    let group = match cfg.shrink.count_group {
        Some(CountGroup::All) | None => {
            return Err(CliError::Config("shrink needs --count-group (early, hitter_friendly, pitcher_friendly or b-s)".into()))
        }
        Some(g) => g,
    };
    let mut out = OutputTree::new(&cfg.out_dir);
    let prior = load_model(&out, &parent)?.ok_or_else(|| {
        CliError::Fit(format!("no count-agnostic model for {parent}; run `xctrl fit` first"))
    })?;
    let data = load(cfg)?;
    let key = parent.with_count(group);
    let bin = apply_iqr_mask(select_bin(&data.records, &key));
    let points = bin.fit_points();
    let result = xctrl::shrinkage::shrink(&points, &prior, Some(&key), &cfg.shrinkage_config(), bin_seed(seed, &key))?;
    if result.passthrough {
        eprintln!("{key}: {} pitches (< {}), prior passed through", points.len(), cfg.shrink.min_real);
    }
    out.write(&format!("{MODELS}/{}.shrunk.json", key.slug()), result.to_json()?.as_bytes())?;
    let buf = csv_bytes(&["omega", "heldout_loglik", "selected"], |w| {
        for s in &result.omega_scores {
            w.write_record([
                s.omega.to_string(),
                s.heldout_loglik.map(|v| v.to_string()).unwrap_or_default(),
                (Some(s.omega) == result.omega).to_string(),
            ])?;
        }
        Ok(())
    })?;
    out.write(&format!("{SCORES}/shrink_{}.csv", key.slug()), &buf)?;
    out.finish("shrink", seed, cfg.hash(), data.inputs)
}

fn zones(cfg: &RunConfig) -> Result<(ZoneOutcomeModel, Vec<InputRecord>), CliError> {
    let geometry = ZoneGeometry::around(&cfg.zone);
    match &cfg.sim.zones {
        Some(p) => Ok((
            ZoneOutcomeModel::load(p, geometry)?,
            vec![InputRecord { path: p.display().to_string(), sha256: sha256_file(p)? }],
        )),
        None => Ok((ZoneOutcomeModel::new(geometry, ZoneOutcomeModel::synthetic().probs)?, Vec::new())),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let (zones, inputs) = zones(cfg)?;
    let s = &cfg.sim;
    let mut sigma_f = s.sigma_f.clone();
    if !sigma_f.contains(&s.sigma_t) {
        sigma_f.push(s.sigma_t);
        sigma_f.sort_by(f64::total_cmp);
    }
    let curve = run_curve(&zones, &s.sigmas, s.innings, seed)?;
    let loss = belief_loss_curve(&zones, s.sigma_t, &sigma_f, s.innings, seed)?;
    let mut out = OutputTree::new(&cfg.out_dir);
    let mut buf = Vec::new();
    write_run_curve_csv(&mut buf, &curve)?;
    out.write(&format!("{SIM}/run_curve.csv"), &buf)?;
    let mut buf = Vec::new();
    write_loss_curve_csv(&mut buf, s.sigma_t, &loss)?;
    out.write(&format!("{SIM}/loss_curve.csv"), &buf)?;
    out.finish("simulate", seed, cfg.hash(), inputs)
}

