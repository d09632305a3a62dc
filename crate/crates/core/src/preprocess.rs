//! Raster preprocessing: min-max normalisation, radius crop, mean reduction
//! and bilinear resize, plus the two compositions that feed the models.
//!
//! Order is always normalise -> crop -> reduce (tabular) or resize (image).
//! Normalisation statistics are per raster, over the full grid.

use serde::{Deserialize, Serialize};

use crate::data::{Feature, FeatureStack, RasterGrid};
use crate::{Error, Result};

/// Per-fire feature vector: mean of each normalised, cropped layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSample {
    pub fire_id: u64,
    /// `[tc, gc, slope, windu, windv]`
    pub features: [f64; Feature::COUNT],
    pub radius_km: f64,
    pub label: f64,
}

/// Channel-major image, `values[c][row][col]` flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

/// Maps the grid onto `[0, 1]`; a constant grid maps to all zeros.
pub fn minmax_normalize(grid: &RasterGrid) -> RasterGrid {
    let (min, max) = grid
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = max - min;
    let values = if range > 0.0 {
        grid.values()
            .iter()
            .map(|&v| ((v - min) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; grid.values().len()]
    };
    RasterGrid::from_parts(grid.feature(), grid.resolution_m(), grid.height(), grid.width(), values)
}

/// Half-width in pixels for a radius: `floor(radius_km * 1000 / resolution_m)`.
///
/// Ratios within 1e-9 below an integer round up to it, so radii like
/// 0.29 km at 10 m are not lost to representation error.
pub fn half_width_px(radius_km: f64, resolution_m: f64) -> Result<usize> {
    if !(radius_km.is_finite() && radius_km > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius_km}")));
    }
    let ratio = radius_km * 1000.0 / resolution_m;
    Ok((ratio + 1e-9).floor() as usize)
}

/// Square `(2h+1)x(2h+1)` window centred on `(floor(H/2), floor(W/2))`.
pub fn crop_radius(grid: &RasterGrid, radius_km: f64) -> Result<RasterGrid> {
    let h = half_width_px(radius_km, grid.resolution_m())?;
    let (rows, cols) = (grid.height(), grid.width());
    let (cr, cc) = (rows / 2, cols / 2);
    if h > cr || h > cc || cr + h >= rows || cc + h >= cols {
        return Err(Error::OutOfRange {
            half_width: h,
            height: rows,
            width: cols,
        });
    }
    let side = 2 * h + 1;
    let mut values = Vec::with_capacity(side * side);
    for r in cr - h..=cr + h {
        let start = r * cols + cc - h;
        values.extend_from_slice(&grid.values()[start..start + side]);
    }
    Ok(RasterGrid::from_parts(grid.feature(), grid.resolution_m(), side, side, values))
}

pub fn mean_feature(grid: &RasterGrid) -> f64 {
    grid.values().iter().sum::<f64>() / grid.values().len() as f64
}

/// Source coordinate of an output index under the align-corners mapping.
fn source_coord(out_idx: usize, in_size: usize, out_size: usize) -> (usize, f64) {
    if in_size == 1 {
        return (0, 0.0);
    }
    let src = if out_size == 1 {
        (in_size - 1) as f64 / 2.0
    } else {
        out_idx as f64 * (in_size - 1) as f64 / (out_size - 1) as f64
    };
    let i = (src.floor() as usize).min(in_size - 2);
    (i, src - i as f64)
}

/// Bilinear resize with align-corners sampling.
///
/// Each output pixel is
/// `[(1-p) x[i,j] + p x[i+1,j]](1-q) + [(1-p) x[i,j+1] + p x[i+1,j+1]] q`
/// where `p`, `q` are the row and column fractions, clamped to the range of
/// the four neighbours.
pub fn bilinear_resize(grid: &RasterGrid, out_h: usize, out_w: usize) -> Result<RasterGrid> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!("resize target {out_h}x{out_w} is empty")));
    }
    let (in_h, in_w) = (grid.height(), grid.width());
    let cols: Vec<(usize, f64)> = (0..out_w).map(|j| source_coord(j, in_w, out_w)).collect();
    let mut values = Vec::with_capacity(out_h * out_w);
    for oi in 0..out_h {
        let (i, p) = source_coord(oi, in_h, out_h);
        let i1 = (i + 1).min(in_h - 1);
        for &(j, q) in &cols {
            let j1 = (j + 1).min(in_w - 1);
            let (a, b, c, d) = (grid.get(i, j), grid.get(i1, j), grid.get(i, j1), grid.get(i1, j1));
            let x = ((1.0 - p) * a + p * b) * (1.0 - q) + ((1.0 - p) * c + p * d) * q;
            let lo = a.min(b).min(c).min(d);
            let hi = a.max(b).max(c).max(d);
            values.push(x.clamp(lo, hi));
        }
    }
    Ok(RasterGrid::from_parts(grid.feature(), grid.resolution_m(), out_h, out_w, values))
}

/// Normalise -> crop -> mean for every layer, in [`Feature::ALL`] order.
pub fn to_tabular(stack: &FeatureStack, label: f64, radius_km: f64) -> Result<TabularSample> {
    let mut features = [0.0; Feature::COUNT];
    for (slot, grid) in features.iter_mut().zip(stack.rasters()) {
        *slot = mean_feature(&crop_radius(&minmax_normalize(grid), radius_km)?);
    }
    Ok(TabularSample {
        fire_id: stack.fire_id(),
        features,
        radius_km,
        label,
    })
}

/// Normalise -> crop -> resize each selected layer, stacked in `channels` order.
pub fn to_image(
    stack: &FeatureStack,
    radius_km: f64,
    target: (usize, usize),
    channels: &[Feature],
) -> Result<ImageTensor> {
    if channels.is_empty() {
        return Err(Error::invalid("channel subset is empty"));
    }
    let (height, width) = target;
    let mut values = Vec::with_capacity(channels.len() * height * width);
    for &f in channels {
        let cropped = crop_radius(&minmax_normalize(stack.raster(f)), radius_km)?;
        values.extend(bilinear_resize(&cropped, height, width)?.into_values());
    }
    Ok(ImageTensor {
        channels: channels.len(),
        height,
        width,
        values,
    })
}
