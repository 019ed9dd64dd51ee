//! Pitch CSV ingest, covariate binning and the IQR outlier mask.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::stats::percentile_sorted;
use crate::Point;

const FEET_TO_INCHES: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BatterHand {
    L,
    R,
}

impl FromStr for BatterHand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L" | "l" => Ok(BatterHand::L),
            "R" | "r" => Ok(BatterHand::R),
            other => Err(Error::InvalidInput(format!("batter hand `{other}`"))),
        }
    }
}

impl fmt::Display for BatterHand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BatterHand::L => "L",
            BatterHand::R => "R",
        })
    }
}

/// One pitch. Locations are inches on the strike-zone plane, catcher's view:
/// `plate_x` is 0 at the centre of the plate and negative to the catcher's
/// left, `plate_z` is height above the ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchRecord {
    pub pitcher_id: String,
    pub season: i32,
    pub pitch_type: String,
    pub batter_hand: BatterHand,
    pub balls: Option<u8>,
    pub strikes: Option<u8>,
    pub plate_x: f64,
    pub plate_z: f64,
    /// Carried through untouched.
    pub run_value_delta: Option<f64>,
}

impl PitchRecord {
    pub fn location(&self) -> Point {
        (self.plate_x, self.plate_z)
    }

    pub fn count(&self) -> Option<(u8, u8)> {
        Some((self.balls?, self.strikes?))
    }
}

/// Ball-strike count aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CountGroup {
    All,
    /// 0-0, 0-1, 1-0, 1-1
    Early,
    /// 2-0, 2-1, 3-1
    HitterFriendly,
    /// 0-2, 1-2, 2-2
    PitcherFriendly,
    Exact(u8, u8),
}

impl CountGroup {
    /// The named group a count belongs to. 3-0 and 3-2 belong to none.
    pub fn group_of(balls: u8, strikes: u8) -> Option<CountGroup> {
        match (balls, strikes) {
            (0, 0) | (0, 1) | (1, 0) | (1, 1) => Some(CountGroup::Early),
            (2, 0) | (2, 1) | (3, 1) => Some(CountGroup::HitterFriendly),
            (0, 2) | (1, 2) | (2, 2) => Some(CountGroup::PitcherFriendly),
            _ => None,
        }
    }

    pub fn contains(&self, balls: u8, strikes: u8) -> bool {
        match *self {
            CountGroup::All => true,
            CountGroup::Exact(b, s) => b == balls && s == strikes,
            group => CountGroup::group_of(balls, strikes) == Some(group),
        }
    }
}

impl fmt::Display for CountGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountGroup::All => f.write_str("all"),
            CountGroup::Early => f.write_str("early"),
            CountGroup::HitterFriendly => f.write_str("hitter_friendly"),
            CountGroup::PitcherFriendly => f.write_str("pitcher_friendly"),
            CountGroup::Exact(b, s) => write!(f, "{b}-{s}"),
        }
    }
}

impl FromStr for CountGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s.to_ascii_lowercase().as_str() {
            "all" => CountGroup::All,
            "early" => CountGroup::Early,
            "hitter_friendly" | "hitter-friendly" => CountGroup::HitterFriendly,
            "pitcher_friendly" | "pitcher-friendly" => CountGroup::PitcherFriendly,
            other => {
                let bad = || Error::InvalidInput(format!("count group `{s}`"));
                let (b, k) = other.split_once('-').ok_or_else(bad)?;
                let b: u8 = b.parse().map_err(|_| bad())?;
                let k: u8 = k.parse().map_err(|_| bad())?;
                if b > 3 || k > 2 {
                    return Err(bad());
                }
                CountGroup::Exact(b, k)
            }
        })
    }
}

impl Serialize for CountGroup {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CountGroup {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The covariate tuple a mixture is fit for.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinKey {
    pub pitcher_id: String,
    pub season: i32,
    pub pitch_type: String,
    pub batter_hand: BatterHand,
    pub count_group: CountGroup,
}

impl BinKey {
    /// Same pitcher/season/pitch type/hand with a different count group.
    pub fn with_count(&self, count_group: CountGroup) -> BinKey {
        BinKey {
            count_group,
            ..self.clone()
        }
    }

    /// File-name safe identifier.
    pub fn slug(&self) -> String {
        let clean = |s: &str| {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                .collect::<String>()
        };
        format!(
            "{}_{}_{}_{}_{}",
            clean(&self.pitcher_id),
            self.season,
            clean(&self.pitch_type),
            self.batter_hand,
            self.count_group
        )
    }
}

impl fmt::Display for BinKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}",
            self.pitcher_id, self.season, self.pitch_type, self.batter_hand, self.count_group
        )
    }
}

/// `pitcher/season/pitch_type/hand[/count_group]`; the count group defaults
/// to `all`.
impl FromStr for BinKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("bin `{s}`: expected pitcher/season/pitch_type/hand[/count_group]"));
        let parts: Vec<&str> = s.trim().split('/').map(str::trim).collect();
        if !(4..=5).contains(&parts.len()) || parts[..3].iter().any(|p| p.is_empty()) {
            return Err(bad());
        }
        Ok(BinKey {
            pitcher_id: parts[0].to_string(),
            season: parts[1].parse().map_err(|_| bad())?,
            pitch_type: parts[2].to_string(),
            batter_hand: parts[3].parse().map_err(|_| bad())?,
            count_group: parts.get(4).map_or(Ok(CountGroup::All), |c| c.parse())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedData {
    pub key: BinKey,
    /// Ingest order.
    pub pitches: Vec<PitchRecord>,
    /// `true` = used for fitting, `false` = IQR outlier.
    pub fit_mask: Vec<bool>,
}

impl BinnedData {
    pub fn new(key: BinKey, pitches: Vec<PitchRecord>) -> Self {
        let fit_mask = vec![true; pitches.len()];
        BinnedData {
            key,
            pitches,
            fit_mask,
        }
    }

    pub fn len(&self) -> usize {
        self.pitches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitches.is_empty()
    }

    pub fn locations(&self) -> Vec<Point> {
        self.pitches.iter().map(PitchRecord::location).collect()
    }

    pub fn fit_points(&self) -> Vec<Point> {
        self.pitches
            .iter()
            .zip(&self.fit_mask)
            .filter(|(_, &keep)| keep)
            .map(|(p, _)| p.location())
            .collect()
    }

    pub fn n_fit(&self) -> usize {
        self.fit_mask.iter().filter(|&&k| k).count()
    }
}

/// Column names in the input CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub pitcher: String,
    pub season: String,
    pub pitch_type: String,
    pub batter_hand: String,
    pub balls: Option<String>,
    pub strikes: Option<String>,
    pub plate_x: String,
    pub plate_z: String,
    pub run_value: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            pitcher: "pitcher".into(),
            season: "game_year".into(),
            pitch_type: "pitch_type".into(),
            batter_hand: "stand".into(),
            balls: Some("balls".into()),
            strikes: Some("strikes".into()),
            plate_x: "plate_x".into(),
            plate_z: "plate_z".into(),
            run_value: Some("delta_run_exp".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    pub columns: ColumnMapping,
    /// Multiply locations by 12 (raw Statcast exports are in feet).
    pub feet_to_inches: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            columns: ColumnMapping::default(),
            feet_to_inches: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub records: Vec<PitchRecord>,
    /// Rows without a plate location.
    pub dropped_missing_location: usize,
    /// Rows with an empty pitcher, season, pitch type or batter hand.
    pub dropped_incomplete: usize,
}

pub fn ingest_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<IngestReport> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, opts)
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL" | "None")
}

pub fn ingest_reader<R: Read>(reader: R, opts: &IngestOptions) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let cols = &opts.columns;
    let c_pitcher = find(&cols.pitcher)?;
    let c_season = find(&cols.season)?;
    let c_type = find(&cols.pitch_type)?;
    let c_hand = find(&cols.batter_hand)?;
    let c_x = find(&cols.plate_x)?;
    let c_z = find(&cols.plate_z)?;
    let c_balls = cols.balls.as_deref().map(find).transpose()?;
    let c_strikes = cols.strikes.as_deref().map(find).transpose()?;
    let c_rv = cols.run_value.as_deref().and_then(|n| find(n).ok());
    let scale = if opts.feet_to_inches { FEET_TO_INCHES } else { 1.0 };

    let mut report = IngestReport::default();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        // 1-based, header is line 1
        let line = i + 2;
        let get = |c: usize| row.get(c).unwrap_or("");
        let bad = |message: String| Error::BadRow { row: line, message };

        let (raw_x, raw_z) = (get(c_x), get(c_z));
        if is_missing(raw_x) || is_missing(raw_z) {
            report.dropped_missing_location += 1;
            continue;
        }
        let parse_loc = |s: &str, name: &str| -> Result<f64> {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| bad(format!("{name} `{s}` is not numeric")))?;
            if v.is_finite() {
                Ok(v * scale)
            } else {
                Err(bad(format!("{name} `{s}` is not finite")))
            }
        };
        let plate_x = parse_loc(raw_x, "plate_x")?;
        let plate_z = parse_loc(raw_z, "plate_z")?;

        let (pitcher, season, ptype, hand) = (get(c_pitcher), get(c_season), get(c_type), get(c_hand));
        if [pitcher, season, ptype, hand].iter().any(|s| is_missing(s)) {
            report.dropped_incomplete += 1;
            continue;
        }
        let season: i32 = season
            .trim()
            .parse()
            .map_err(|_| bad(format!("season `{season}` is not an integer")))?;
        let batter_hand: BatterHand = hand.parse().map_err(|e: Error| bad(e.to_string()))?;

        let parse_count = |c: Option<usize>, name: &str, max: u8| -> Result<Option<u8>> {
            let Some(c) = c else { return Ok(None) };
            let s = get(c);
            if is_missing(s) {
                return Ok(None);
            }
            let v: u8 = s
                .trim()
                .parse()
                .map_err(|_| bad(format!("{name} `{s}` is not a count")))?;
            if v > max {
                return Err(bad(format!("{name} {v} out of range 0..={max}")));
            }
            Ok(Some(v))
        };
        let balls = parse_count(c_balls, "balls", 3)?;
        let strikes = parse_count(c_strikes, "strikes", 2)?;
        let run_value_delta = c_rv
            .map(get)
            .filter(|s| !is_missing(s))
            .and_then(|s| s.trim().parse().ok());

        report.records.push(PitchRecord {
            pitcher_id: pitcher.trim().to_string(),
            season,
            pitch_type: ptype.trim().to_string(),
            batter_hand,
            balls,
            strikes,
            plate_x,
            plate_z,
            run_value_delta,
        });
    }
    if report.records.is_empty() {
        return Err(Error::NoValidRows);
    }
    Ok(report)
}

/// How ball-strike counts split bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountGrouping {
    /// One bin per pitcher/season/pitch type/hand.
    #[default]
    Ignore,
    /// Early / hitter-friendly / pitcher-friendly; 3-0 and 3-2 dropped.
    Grouped,
    /// One bin per exact count.
    Exact,
}

/// Partition records into covariate bins. Records whose count is unknown (or
/// outside every group) are left out under the count-aware modes.
pub fn bin_pitches(records: &[PitchRecord], grouping: CountGrouping) -> BTreeMap<BinKey, BinnedData> {
    let mut bins: BTreeMap<BinKey, Vec<PitchRecord>> = BTreeMap::new();
    for r in records {
        let count_group = match grouping {
            CountGrouping::Ignore => Some(CountGroup::All),
            CountGrouping::Grouped => r.count().and_then(|(b, s)| CountGroup::group_of(b, s)),
            CountGrouping::Exact => r.count().map(|(b, s)| CountGroup::Exact(b, s)),
        };
        let Some(count_group) = count_group else { continue };
        let key = BinKey {
            pitcher_id: r.pitcher_id.clone(),
            season: r.season,
            pitch_type: r.pitch_type.clone(),
            batter_hand: r.batter_hand,
            count_group,
        };
        bins.entry(key).or_default().push(r.clone());
    }
    bins.into_iter()
        .map(|(k, v)| (k.clone(), BinnedData::new(k, v)))
        .collect()
}

/// Pitches from `records` matching `key` (count group applied as a filter).
pub fn select_bin(records: &[PitchRecord], key: &BinKey) -> BinnedData {
    let pitches = records
        .iter()
        .filter(|r| {
            r.pitcher_id == key.pitcher_id
                && r.season == key.season
                && r.pitch_type == key.pitch_type
                && r.batter_hand == key.batter_hand
                && match key.count_group {
                    CountGroup::All => true,
                    g => r.count().is_some_and(|(b, s)| g.contains(b, s)),
                }
        })
        .cloned()
        .collect();
    BinnedData::new(key.clone(), pitches)
}

/// Below this many points quartiles are not meaningful and nothing is masked.
pub const IQR_MIN_POINTS: usize = 4;

/// `true` for points within 1.5 IQR of the mean on both axes.
pub fn iqr_mask(points: &[Point]) -> Vec<bool> {
    if points.len() < IQR_MIN_POINTS {
        return vec![true; points.len()];
    }
    let axis = |f: fn(&Point) -> f64| {
        let mut v: Vec<f64> = points.iter().map(f).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.sort_by(f64::total_cmp);
        let iqr = percentile_sorted(&v, 75.0) - percentile_sorted(&v, 25.0);
        (mean, 1.5 * iqr)
    };
    let (mx, lim_x) = axis(|p| p.0);
    let (mz, lim_z) = axis(|p| p.1);
    points
        .iter()
        .map(|&(x, z)| (x - mx).abs() <= lim_x && (z - mz).abs() <= lim_z)
        .collect()
}

/// Flag location outliers. Outliers stay in the bin; only `fit_mask` changes.
pub fn apply_iqr_mask(mut bin: BinnedData) -> BinnedData {
    bin.fit_mask = iqr_mask(&bin.locations());
    bin
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pitcher: &str, season: i32, hand: BatterHand, count: (u8, u8)) -> PitchRecord {
        PitchRecord {
            pitcher_id: pitcher.into(),
            season,
            pitch_type: "FF".into(),
            batter_hand: hand,
            balls: Some(count.0),
            strikes: Some(count.1),
            plate_x: 0.0,
            plate_z: 24.0,
            run_value_delta: None,
        }
    }

    const CSV_HEAD: &str = "pitcher,game_year,pitch_type,stand,balls,strikes,plate_x,plate_z,delta_run_exp\n";

    #[test]
    fn converts_feet_to_inches() {
        let data = format!("{CSV_HEAD}100,2023,FF,R,0,0,-0.5,2.0,0.01\n");
        let rep = ingest_reader(data.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.records[0].plate_x, -6.0);
        assert_eq!(rep.records[0].plate_z, 24.0);
        assert_eq!(rep.records[0].run_value_delta, Some(0.01));
    }

    #[test]
    fn conversion_disabled_is_identity() {
        let data = format!("{CSV_HEAD}100,2023,FF,R,0,0,-6.25,24.5,\n");
        let opts = IngestOptions {
            feet_to_inches: false,
            ..Default::default()
        };
        let rep = ingest_reader(data.as_bytes(), &opts).unwrap();
        assert_eq!(rep.records[0].location(), (-6.25, 24.5));
        assert_eq!(rep.records[0].run_value_delta, None);
    }

    #[test]
    fn missing_location_is_dropped_and_counted() {
        let data = format!("{CSV_HEAD}100,2023,FF,R,0,0,-0.5,,\n100,2023,FF,R,0,0,0.1,2.1,\n");
        let rep = ingest_reader(data.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.dropped_missing_location, 1);
    }

    #[test]
    fn header_only_is_an_error() {
        let err = ingest_reader(CSV_HEAD.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoValidRows));
        assert_eq!(err.to_string(), "zero valid rows");
    }

    #[test]
    fn unmapped_column_is_an_error() {
        let data = "pitcher,game_year,pitch_type,stand,balls,strikes,px,plate_z\n";
        let err = ingest_reader(data.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "plate_x"));
    }

    #[test]
    fn non_numeric_location_is_an_error() {
        let data = format!("{CSV_HEAD}100,2023,FF,R,0,0,left,2.0,\n");
        let err = ingest_reader(data.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::BadRow { row: 2, .. }));
    }

    #[test]
    fn missing_file_is_an_error() {
        let err = ingest_csv("/nonexistent/pitches.csv", &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn bins_partition_by_pitcher_and_hand() {
        let recs = vec![
            rec("a", 2023, BatterHand::L, (0, 0)),
            rec("a", 2023, BatterHand::R, (0, 0)),
            rec("b", 2023, BatterHand::L, (0, 0)),
            rec("b", 2023, BatterHand::R, (0, 0)),
            rec("b", 2023, BatterHand::R, (1, 0)),
        ];
        let bins = bin_pitches(&recs, CountGrouping::Ignore);
        assert_eq!(bins.len(), 4);
        assert_eq!(bins.values().map(BinnedData::len).sum::<usize>(), recs.len());
    }

    #[test]
    fn seasons_are_never_mixed() {
        let recs = vec![rec("a", 2022, BatterHand::R, (0, 0)), rec("a", 2023, BatterHand::R, (0, 0))];
        let bins = bin_pitches(&recs, CountGrouping::Ignore);
        assert_eq!(bins.len(), 2);
        assert!(bins.values().all(|b| b.pitches.iter().all(|p| p.season == b.key.season)));
    }

    #[test]
    fn full_count_is_outside_every_group() {
        let recs = vec![
            rec("a", 2023, BatterHand::R, (0, 0)),
            rec("a", 2023, BatterHand::R, (3, 2)),
            rec("a", 2023, BatterHand::R, (3, 0)),
            rec("a", 2023, BatterHand::R, (2, 1)),
        ];
        let bins = bin_pitches(&recs, CountGrouping::Grouped);
        let early = &bins[&BinKey {
            pitcher_id: "a".into(),
            season: 2023,
            pitch_type: "FF".into(),
            batter_hand: BatterHand::R,
            count_group: CountGroup::Early,
        }];
        assert_eq!(early.len(), 1);
        assert_eq!(bins.values().map(BinnedData::len).sum::<usize>(), 2);
        assert!(!CountGroup::Early.contains(3, 2));

        let exact = bin_pitches(&recs, CountGrouping::Exact);
        assert_eq!(exact.len(), 4);
    }

    #[test]
    fn count_group_parses_and_prints() {
        for g in [
            CountGroup::All,
            CountGroup::Early,
            CountGroup::HitterFriendly,
            CountGroup::PitcherFriendly,
            CountGroup::Exact(1, 2),
        ] {
            assert_eq!(g.to_string().parse::<CountGroup>().unwrap(), g);
        }
        assert!("4-0".parse::<CountGroup>().is_err());
    }

    #[test]
    fn iqr_flags_far_point() {
        // x: nine zeros and 100. mean = 10, Q1 = Q3 = 0, IQR = 0, so the limit
        // is |x - 10| <= 0: 100 is 90 away and flagged.
        let pts: Vec<Point> = (0..10)
            .map(|i| (if i == 9 { 100.0 } else { 0.0 }, 20.0 + i as f64))
            .collect();
        let mask = iqr_mask(&pts);
        assert!(!mask[9]);
        // With a zero IQR every point off the mean is flagged as well.
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn iqr_keeps_spread_data_and_flags_outlier() {
        // x: 0..9 repeated, mean ~4.85 with the outlier, IQR ~5, limit ~7.5
        let mut pts: Vec<Point> = (0..100).map(|i| ((i % 10) as f64, 24.0 + (i % 5) as f64)).collect();
        pts.push((40.0, 26.0));
        let mask = iqr_mask(&pts);
        assert!(!mask[100]);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 100);
    }

    #[test]
    fn iqr_identical_points_all_kept() {
        let pts = vec![(1.5, 24.0); 12];
        assert!(iqr_mask(&pts).iter().all(|&m| m));
    }

    #[test]
    fn iqr_skips_tiny_bins() {
        let pts = vec![(0.0, 0.0), (100.0, 0.0), (0.0, 50.0)];
        assert!(iqr_mask(&pts).iter().all(|&m| m));
    }

    #[test]
    fn masked_pitch_stays_in_bin() {
        let mut recs: Vec<PitchRecord> = (0..100)
            .map(|i| {
                let mut r = rec("a", 2023, BatterHand::R, (0, 0));
                r.plate_x = (i % 10) as f64;
                r.plate_z = 24.0 + (i % 4) as f64;
                r
            })
            .collect();
        recs[7].plate_x = 40.0;
        let bin = BinnedData::new(
            BinKey {
                pitcher_id: "a".into(),
                season: 2023,
                pitch_type: "FF".into(),
                batter_hand: BatterHand::R,
                count_group: CountGroup::All,
            },
            recs,
        );
        let masked = apply_iqr_mask(bin);
        assert_eq!(masked.len(), 100);
        assert!(!masked.fit_mask[7]);
        assert_eq!(masked.pitches[7].plate_x, 40.0);
        assert_eq!(masked.n_fit(), 99);
    }

    #[test]
    fn bin_key_parses_display_form() {
        let k: BinKey = "605400/2022/FF/R/early".parse().unwrap();
        assert_eq!(k.to_string(), "605400/2022/FF/R/early");
        let k: BinKey = "605400/2022/FF/L".parse().unwrap();
        assert_eq!(k.count_group, CountGroup::All);
        for bad in ["", "a/b/c/d", "605400/2022/FF", "605400/2022/FF/X", "1/2022//R", "1/2022/FF/R/9-9"] {
            assert!(bad.parse::<BinKey>().is_err(), "{bad}");
        }
    }
}
