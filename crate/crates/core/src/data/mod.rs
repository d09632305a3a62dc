//! Fire records, per-fire raster stacks, and the curation protocol applied
//! before any model sees the data.

mod io;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

pub use io::{load_dataset, read_raster, save_dataset, write_raster, DatasetLoader, MANIFEST_FILE};
pub use synthetic::{generate_synthetic, planted_duration, Geometry, GridSpec, SyntheticConfig, SyntheticDataset};

/// Inclusive bounding box of the study region, degrees.
pub const TARGET_LAT: (f64, f64) = (32.7, 42.0);
pub const TARGET_LON: (f64, f64) = (-124.26, -93.5);

/// Fires lasting at most this many days are "small" for downsampling.
pub const SMALL_FIRE_DAYS: f64 = 1.0;

/// Default train/test boundary: train is strictly before this year.
pub const DEFAULT_BOUNDARY_YEAR: i32 = 2013;

/// The five landscape layers, in the fixed order used for feature vectors
/// and image channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Tc,
    Gc,
    Slope,
    Windu,
    Windv,
}

impl Feature {
    pub const ALL: [Feature; 5] = [
        Feature::Tc,
        Feature::Gc,
        Feature::Slope,
        Feature::Windu,
        Feature::Windv,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Tc => "tc",
            Feature::Gc => "gc",
            Feature::Slope => "slope",
            Feature::Windu => "windu",
            Feature::Windv => "windv",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown feature `{s}` (expected tc, gc, slope, windu or windv)")))
    }
}

/// Parses a comma-separated channel list such as `tc,gc,slope`.
pub fn parse_feature_list(s: &str) -> Result<Vec<Feature>> {
    let list = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(Feature::from_str)
        .collect::<Result<Vec<_>>>()?;
    if list.is_empty() {
        return Err(Error::invalid("empty channel list"));
    }
    Ok(list)
}

/// One fire event. `duration_days` is the regression label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireRecord {
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
    pub start_year: i32,
    pub duration_days: f64,
}

impl FireRecord {
    pub fn new(id: u64, lat: f64, lon: f64, start_year: i32, duration_days: f64) -> Result<Self> {
        let record = FireRecord {
            id,
            lat,
            lon,
            start_year,
            duration_days,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(Error::invalid(format!("fire {}: non-finite coordinates", self.id)));
        }
        if !(self.duration_days.is_finite() && self.duration_days >= 0.0) {
            return Err(Error::invalid(format!(
                "fire {}: duration_days must be a finite non-negative number, got {}",
                self.id, self.duration_days
            )));
        }
        Ok(())
    }
}

/// A single-feature 2-D grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    feature: Feature,
    resolution_m: f64,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl RasterGrid {
    pub fn new(feature: Feature, resolution_m: f64, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if !(resolution_m.is_finite() && resolution_m > 0.0) {
            return Err(Error::invalid(format!("{feature}: resolution_m must be positive, got {resolution_m}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("{feature}: empty grid {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(Error::invalid(format!(
                "{feature}: {} values for a {height}x{width} grid",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "{feature}: non-finite value at row {}, col {}",
                pos / width,
                pos % width
            )));
        }
        Ok(RasterGrid {
            feature,
            resolution_m,
            height,
            width,
            values,
        })
    }

    /// Builds a grid from values already known to satisfy the invariants.
    pub(crate) fn from_parts(feature: Feature, resolution_m: f64, height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        RasterGrid {
            feature,
            resolution_m,
            height,
            width,
            values,
        }
    }

    pub fn feature(&self) -> Feature {
        self.feature
    }

    pub fn resolution_m(&self) -> f64 {
        self.resolution_m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// The five rasters of one fire, stored in [`Feature::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    fire_id: u64,
    rasters: Vec<RasterGrid>,
}

impl FeatureStack {
    /// Accepts the rasters in any order; each feature must appear exactly once.
    pub fn new(fire_id: u64, rasters: Vec<RasterGrid>) -> Result<Self> {
        let mut slots: [Option<RasterGrid>; Feature::COUNT] = Default::default();
        for raster in rasters {
            let slot = &mut slots[raster.feature().index()];
            if slot.is_some() {
                return Err(Error::invalid(format!("fire {fire_id}: duplicate raster for {}", raster.feature())));
            }
            *slot = Some(raster);
        }
        let rasters = slots
            .into_iter()
            .zip(Feature::ALL)
            .map(|(slot, f)| slot.ok_or_else(|| Error::invalid(format!("fire {fire_id}: missing raster for {f}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureStack { fire_id, rasters })
    }

    pub fn fire_id(&self) -> u64 {
        self.fire_id
    }

    pub fn raster(&self, feature: Feature) -> &RasterGrid {
        &self.rasters[feature.index()]
    }

    pub fn rasters(&self) -> &[RasterGrid] {
        &self.rasters
    }
}

/// Anything that can hand out the raster stack for a fire id.
pub trait StackSource {
    fn load_stack(&self, fire_id: u64) -> Result<FeatureStack>;
}

/// Whether a coordinate lies in the study region. All four edges inclusive.
pub fn in_target_area(lat: f64, lon: f64) -> Result<bool> {
    if !lat.is_finite() || !lon.is_finite() {
        return Err(Error::invalid(format!("non-finite coordinate ({lat}, {lon})")));
    }
    Ok((TARGET_LAT.0..=TARGET_LAT.1).contains(&lat) && (TARGET_LON.0..=TARGET_LON.1).contains(&lon))
}

/// Keeps only records inside the study region.
pub fn filter_target_area(records: &[FireRecord]) -> Result<Vec<FireRecord>> {
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        if in_target_area(r.lat, r.lon)? {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

/// Drops `floor(n_small / 2)` of the fires lasting at most one day.
///
/// The victims are the first half of a seeded shuffle of the small-fire
/// positions; survivors keep their input order.
pub fn downsample_small_fires(records: &[FireRecord], seed: u64) -> Vec<FireRecord> {
    let mut small: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.duration_days <= SMALL_FIRE_DAYS)
        .map(|(i, _)| i)
        .collect();
    let n_drop = small.len() / 2;
    small.shuffle(&mut rng::stream(seed, 0));
    let mut dropped = vec![false; records.len()];
    for &i in &small[..n_drop] {
        dropped[i] = true;
    }
    records
        .iter()
        .zip(dropped)
        .filter(|(_, d)| !d)
        .map(|(r, _)| r.clone())
        .collect()
}

/// Splits on `start_year < boundary` (train) versus the rest (test).
pub fn split_by_year(records: &[FireRecord], boundary: i32) -> (Vec<FireRecord>, Vec<FireRecord>) {
    records.iter().cloned().partition(|r| r.start_year < boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, year: i32, days: f64) -> FireRecord {
        FireRecord::new(id, 37.0, -110.0, year, days).unwrap()
    }

    #[test]
    fn target_area_examples() {
        assert!(in_target_area(37.0, -110.0).unwrap());
        assert!(in_target_area(32.7, -124.26).unwrap());
        assert!(in_target_area(42.0, -93.5).unwrap());
        assert!(!in_target_area(45.0, -100.0).unwrap());
        assert!(!in_target_area(37.0, -93.4).unwrap());
        assert!(matches!(in_target_area(f64::NAN, 0.0), Err(Error::InvalidArgument(_))));
        assert!(in_target_area(37.0, f64::INFINITY).is_err());
    }

    #[test]
    fn filter_keeps_in_region_only() {
        let records = vec![
            FireRecord::new(1, 37.0, -110.0, 2005, 2.0).unwrap(),
            FireRecord::new(2, 45.0, -100.0, 2005, 2.0).unwrap(),
        ];
        let kept = filter_target_area(&records).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, 1);
    }

    #[test]
    fn downsample_without_small_fires_keeps_everything() {
        let records: Vec<_> = (0..10).map(|i| rec(i, 2005, 5.0)).collect();
        assert_eq!(downsample_small_fires(&records, 3), records);
    }

    #[test]
    fn downsample_drops_half_of_small() {
        let records = vec![
            rec(0, 2005, 0.5),
            rec(1, 2005, 3.0),
            rec(2, 2005, 1.0),
            rec(3, 2005, 0.2),
            rec(4, 2005, 9.0),
            rec(5, 2005, 0.0),
        ];
        let out = downsample_small_fires(&records, 11);
        assert_eq!(out.len(), 4);
        assert_eq!(out.iter().filter(|r| r.duration_days <= 1.0).count(), 2);
        assert!(out.iter().any(|r| r.id == 1) && out.iter().any(|r| r.id == 4));
        let ids: Vec<_> = out.iter().map(|r| r.id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted, "survivor order preserved");
        assert_eq!(downsample_small_fires(&records, 11), out);
    }

    #[test]
    fn downsample_odd_small_count_and_empty() {
        let records: Vec<_> = (0..5).map(|i| rec(i, 2005, 0.5)).collect();
        assert_eq!(downsample_small_fires(&records, 0).len(), 3);
        assert!(downsample_small_fires(&[], 0).is_empty());
    }

    #[test]
    fn split_examples() {
        let records: Vec<_> = (2003..=2016).map(|y| rec(y as u64, y, 2.0)).collect();
        let (train, test) = split_by_year(&records, 2013);
        assert_eq!(train.iter().map(|r| r.start_year).collect::<Vec<_>>(), (2003..=2012).collect::<Vec<_>>());
        assert_eq!(test.iter().map(|r| r.start_year).collect::<Vec<_>>(), (2013..=2016).collect::<Vec<_>>());

        let same_year: Vec<_> = (0..4).map(|i| rec(i, 2010, 2.0)).collect();
        let (train, test) = split_by_year(&same_year, 2013);
        assert_eq!(train.len(), 4);
        assert!(test.is_empty());
    }

    #[test]
    fn split_counts_match_direct_count() {
        // 100 records cycling through 2003..=2016.
        let records: Vec<_> = (0..100u64).map(|i| rec(i, 2003 + (i % 14) as i32, 2.0)).collect();
        let expected_train = records.iter().filter(|r| r.start_year < 2013).count();
        let (train, test) = split_by_year(&records, 2013);
        assert_eq!(expected_train, 72);
        assert_eq!(train.len(), expected_train);
        assert_eq!(test.len(), 100 - expected_train);
    }

    #[test]
    fn record_invariants() {
        assert!(FireRecord::new(1, 37.0, -110.0, 2005, -0.1).is_err());
        assert!(FireRecord::new(1, 37.0, -110.0, 2005, f64::NAN).is_err());
        assert!(FireRecord::new(1, 37.0, -110.0, 2005, 0.0).is_ok());
    }

    #[test]
    fn raster_invariants() {
        assert!(RasterGrid::new(Feature::Tc, 100.0, 2, 2, vec![0.0; 3]).is_err());
        assert!(RasterGrid::new(Feature::Tc, 0.0, 2, 2, vec![0.0; 4]).is_err());
        assert!(RasterGrid::new(Feature::Tc, 100.0, 0, 2, vec![]).is_err());
        assert!(RasterGrid::new(Feature::Tc, 100.0, 1, 2, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn stack_requires_each_feature_once() {
        let grid = |f| RasterGrid::new(f, 100.0, 1, 1, vec![0.0]).unwrap();
        let mut rasters: Vec<_> = Feature::ALL.iter().rev().map(|&f| grid(f)).collect();
        let stack = FeatureStack::new(3, rasters.clone()).unwrap();
        assert_eq!(stack.rasters()[0].feature(), Feature::Tc);
        rasters.pop();
        assert!(FeatureStack::new(3, rasters.clone()).is_err());
        rasters.push(grid(Feature::Gc));
        assert!(FeatureStack::new(3, rasters).is_err());
    }

    #[test]
    fn feature_names_round_trip() {
        for f in Feature::ALL {
            assert_eq!(f.name().parse::<Feature>().unwrap(), f);
        }
        assert_eq!(parse_feature_list("tc, slope").unwrap(), vec![Feature::Tc, Feature::Slope]);
        assert!(parse_feature_list("tc,biomass").is_err());
        assert!(parse_feature_list("").is_err());
    }
}
