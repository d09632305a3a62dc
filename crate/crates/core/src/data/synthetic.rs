//! Synthetic fires with a planted duration signal.
//!
//! Each raster is a smooth field: an offset plus five separable Gaussian
//! bumps with random centres, widths and signed amplitudes, scaled to
//! plausible units for its layer and rounded to `f32` so the on-disk format
//! reproduces it exactly. The label of every fire is
//!
//! ```text
//! duration = max(0, planted_duration(m) + noise * u),   u ~ U(-1, 1)
//! planted_duration(m) = 0.5 + 25 m_tc^2 + 8 m_gc (1 - m_slope) + 3 m_windu
//! ```
//!
//! where `m` is the tabular feature vector of the stack (normalise, crop,
//! mean) at `reference_radius_km`.

use rand::Rng as _;

use super::{Feature, FeatureStack, FireRecord, RasterGrid, StackSource, TARGET_LAT, TARGET_LON};
use crate::preprocess::to_tabular;
use crate::{rng, Error, Result};

const BUMPS: usize = 5;
const FIRST_YEAR: i32 = 2003;
const LAST_YEAR: i32 = 2016;

/// Planted duration for a tabular feature vector in `[tc, gc, slope, windu, windv]` order.
pub fn planted_duration(m: &[f64; Feature::COUNT]) -> f64 {
    0.5 + 25.0 * m[0] * m[0] + 8.0 * m[1] * (1.0 - m[2]) + 3.0 * m[3]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
    pub resolution_m: f64,
}

impl GridSpec {
    pub fn new(height: usize, width: usize, resolution_m: f64) -> Self {
        GridSpec {
            height,
            width,
            resolution_m,
        }
    }
}

/// Grid geometry per feature, indexed in [`Feature::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub grids: [GridSpec; Feature::COUNT],
}

impl Default for Geometry {
    /// Land cover 600x600 at 100 m, slope 200x200 at 270 m, wind 4x4 at 27830 m.
    fn default() -> Self {
        Geometry::uniform_by_kind(
            GridSpec::new(600, 600, 100.0),
            GridSpec::new(200, 200, 270.0),
            GridSpec::new(4, 4, 27_830.0),
        )
    }
}

impl Geometry {
    pub fn uniform_by_kind(land: GridSpec, slope: GridSpec, wind: GridSpec) -> Self {
        Geometry {
            grids: [land, land, slope, wind, wind],
        }
    }

    pub fn grid(&self, feature: Feature) -> GridSpec {
        self.grids[feature.index()]
    }

    fn validate(&self) -> Result<()> {
        for (g, f) in self.grids.iter().zip(Feature::ALL) {
            if g.height == 0 || g.width == 0 || !(g.resolution_m.is_finite() && g.resolution_m > 0.0) {
                return Err(Error::invalid(format!(
                    "{f}: invalid geometry {}x{} at {} m",
                    g.height, g.width, g.resolution_m
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    /// Half-width of the uniform label noise, days.
    pub noise_amplitude: f64,
    pub reference_radius_km: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            noise_amplitude: 2.0,
            reference_radius_km: 5.0,
        }
    }
}

/// Generated records; stacks are regenerated on demand from the seed.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    records: Vec<FireRecord>,
    geometry: Geometry,
    config: SyntheticConfig,
}

impl SyntheticDataset {
    pub fn records(&self) -> &[FireRecord] {
        &self.records
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn stack(&self, fire_id: u64) -> Result<FeatureStack> {
        if fire_id as usize >= self.records.len() {
            return Err(Error::invalid(format!("synthetic dataset has no fire {fire_id}")));
        }
        Ok(generate_stack(fire_id, &self.geometry, self.config.seed))
    }
}

impl StackSource for SyntheticDataset {
    fn load_stack(&self, fire_id: u64) -> Result<FeatureStack> {
        self.stack(fire_id)
    }
}

/// Layer-specific offset and spread, to give rasters realistic units.
fn layer_scale(feature: Feature) -> (f64, f64) {
    match feature {
        Feature::Tc => (40.0, 30.0),
        Feature::Gc => (30.0, 25.0),
        Feature::Slope => (0.0, 40.0),
        Feature::Windu | Feature::Windv => (0.0, 4.0),
    }
}

fn gaussian_profile(len: usize, centre: f64, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let d = (i as f64 - centre) / sigma;
            (-0.5 * d * d).exp()
        })
        .collect()
}

fn generate_field(feature: Feature, spec: GridSpec, rng: &mut rng::Rng) -> RasterGrid {
    let (offset, spread) = layer_scale(feature);
    let (h, w) = (spec.height, spec.width);
    let base = offset + spread * rng.gen_range(-0.5..0.5);
    let mut values = vec![base; h * w];
    for _ in 0..BUMPS {
        let amplitude = spread * rng.gen_range(-1.0..1.0);
        let ci = rng.gen_range(0.2..0.8) * h as f64;
        let cj = rng.gen_range(0.2..0.8) * w as f64;
        let sigma = rng.gen_range(0.05..0.25);
        let rows = gaussian_profile(h, ci, sigma * h as f64);
        let cols = gaussian_profile(w, cj, sigma * w as f64);
        for (row, &ri) in values.chunks_exact_mut(w).zip(&rows) {
            let a = amplitude * ri;
            for (v, &cj) in row.iter_mut().zip(&cols) {
                *v += a * cj;
            }
        }
    }
    for v in &mut values {
        *v = *v as f32 as f64;
    }
    RasterGrid::from_parts(feature, spec.resolution_m, h, w, values)
}

fn generate_stack(fire_id: u64, geometry: &Geometry, seed: u64) -> FeatureStack {
    let mut rng = rng::stream(seed, fire_id + 1);
    let rasters = Feature::ALL
        .iter()
        .map(|&f| generate_field(f, geometry.grid(f), &mut rng))
        .collect();
    FeatureStack::new(fire_id, rasters).expect("one raster per feature")
}

/// Generates `n_fires` fires with ids `0..n_fires`.
///
/// Locations are uniform in the study region and start years uniform over
/// 2003..=2016. The result is a pure function of the arguments.
pub fn generate_synthetic(n_fires: usize, geometry: &Geometry, config: &SyntheticConfig) -> Result<SyntheticDataset> {
    if n_fires == 0 {
        return Err(Error::invalid("n_fires must be at least 1"));
    }
    geometry.validate()?;
    if !(config.noise_amplitude.is_finite() && config.noise_amplitude >= 0.0) {
        return Err(Error::invalid("noise amplitude must be finite and non-negative"));
    }
    let mut meta = rng::stream(config.seed, 0);
    let mut records = Vec::with_capacity(n_fires);
    for i in 0..n_fires as u64 {
        let lat = meta.gen_range(TARGET_LAT.0..=TARGET_LAT.1);
        let lon = meta.gen_range(TARGET_LON.0..=TARGET_LON.1);
        let start_year = meta.gen_range(FIRST_YEAR..=LAST_YEAR);
        let u: f64 = meta.gen_range(-1.0..=1.0);
        let stack = generate_stack(i, geometry, config.seed);
        let sample = to_tabular(&stack, 0.0, config.reference_radius_km)?;
        let duration = (planted_duration(&sample.features) + config.noise_amplitude * u).max(0.0);
        records.push(FireRecord::new(i, lat, lon, start_year, duration)?);
    }
    Ok(SyntheticDataset {
        records,
        geometry: geometry.clone(),
        config: config.clone(),
    })
}
