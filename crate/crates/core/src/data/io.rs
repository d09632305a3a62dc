//! On-disk dataset layout.
//!
//! Raster file: one UTF-8 JSON header line
//! `{"feature":"tc","resolution_m":100.0,"height":600,"width":600}` followed
//! by `height * width` little-endian `f32` values, row-major.
//!
//! Manifest (`manifest.csv`): UTF-8, one record per line as
//! `id,lat,lon,start_year,duration_days,stack_dir`. `stack_dir` is relative
//! to the manifest and holds one `<feature>.bin` raster per feature. Lines
//! starting with `#` carry metadata (`# split_boundary_year=2013`,
//! `# provenance=...`); a leading `id,lat,...` header line is optional.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::{FeatureStack, Feature, FireRecord, RasterGrid, StackSource};
use crate::fsutil::{read, write_atomic};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
const MANIFEST_COLUMNS: &str = "id,lat,lon,start_year,duration_days,stack_dir";
const MAX_HEADER_BYTES: usize = 4096;

fn header_error(path: &Path, field: &str, message: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        field: field.to_string(),
        message: message.into(),
    }
}

/// Serialises a raster. Values are narrowed to `f32`.
pub fn write_raster(path: &Path, grid: &RasterGrid) -> Result<()> {
    let header = serde_json::json!({
        "feature": grid.feature().name(),
        "resolution_m": grid.resolution_m(),
        "height": grid.height(),
        "width": grid.width(),
    });
    let mut bytes = header.to_string().into_bytes();
    bytes.push(b'\n');
    bytes.reserve(grid.values().len() * 4);
    for (i, &v) in grid.values().iter().enumerate() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(Error::invalid(format!(
                "{}: value {v} at index {i} overflows f32",
                path.display()
            )));
        }
        bytes.extend_from_slice(&narrowed.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_raster(path: &Path) -> Result<RasterGrid> {
    let bytes = read(path)?;
    let newline = bytes
        .iter()
        .take(MAX_HEADER_BYTES)
        .position(|&b| b == b'\n')
        .ok_or_else(|| header_error(path, "<header>", "no header line terminator"))?;
    let text = std::str::from_utf8(&bytes[..newline]).map_err(|_| header_error(path, "<header>", "not UTF-8"))?;
    let header: Value = serde_json::from_str(text).map_err(|e| header_error(path, "<header>", e.to_string()))?;
    let obj = header
        .as_object()
        .ok_or_else(|| header_error(path, "<header>", "expected a JSON object"))?;

    let field = |name: &str| obj.get(name).ok_or_else(|| header_error(path, name, "missing"));
    let feature: Feature = field("feature")?
        .as_str()
        .ok_or_else(|| header_error(path, "feature", "expected a string"))?
        .parse()
        .map_err(|e: Error| header_error(path, "feature", e.to_string()))?;
    let resolution_m = field("resolution_m")?
        .as_f64()
        .filter(|r| r.is_finite() && *r > 0.0)
        .ok_or_else(|| header_error(path, "resolution_m", "expected a positive number"))?;
    let dim = |name: &str| -> Result<usize> {
        field(name)?
            .as_u64()
            .filter(|&d| d >= 1)
            .map(|d| d as usize)
            .ok_or_else(|| header_error(path, name, "expected an integer >= 1"))
    };
    let height = dim("height")?;
    let width = dim("width")?;

    let payload = &bytes[newline + 1..];
    let expected = height
        .checked_mul(width)
        .ok_or_else(|| header_error(path, "height", "grid size overflows"))?;
    if payload.len() % 4 != 0 || payload.len() / 4 != expected {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            expected,
            found: payload.len() / 4,
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    RasterGrid::new(feature, resolution_m, height, width, values).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::invalid(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parsed manifest plus the directory it was read from. Loads stacks lazily.
#[derive(Debug, Clone)]
pub struct DatasetLoader {
    root: PathBuf,
    stack_paths: BTreeMap<u64, PathBuf>,
    split_boundary_year: Option<i32>,
    provenance: Vec<String>,
}

impl DatasetLoader {
    pub fn stack_dir(&self, fire_id: u64) -> Option<PathBuf> {
        self.stack_paths.get(&fire_id).map(|p| self.root.join(p))
    }

    pub fn split_boundary_year(&self) -> Option<i32> {
        self.split_boundary_year
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    fn raster_path(&self, fire_id: u64, feature: Feature) -> Result<PathBuf> {
        let dir = self
            .stack_dir(fire_id)
            .ok_or_else(|| Error::invalid(format!("fire {fire_id} is not in the manifest")))?;
        Ok(dir.join(format!("{}.bin", feature.name())))
    }
}

impl StackSource for DatasetLoader {
    fn load_stack(&self, fire_id: u64) -> Result<FeatureStack> {
        let mut rasters = Vec::with_capacity(Feature::COUNT);
        for feature in Feature::ALL {
            let path = self.raster_path(fire_id, feature)?;
            if !path.is_file() {
                return Err(Error::MissingFile { fire_id, path });
            }
            let grid = read_raster(&path)?;
            if grid.feature() != feature {
                return Err(header_error(
                    &path,
                    "feature",
                    format!("file holds `{}`, expected `{feature}`", grid.feature()),
                ));
            }
            rasters.push(grid);
        }
        FeatureStack::new(fire_id, rasters)
    }
}

/// Reads a manifest (or a dataset directory containing `manifest.csv`).
///
/// Every referenced raster file must exist; contents are read on demand.
pub fn load_dataset(manifest_path: &Path) -> Result<(Vec<FireRecord>, DatasetLoader)> {
    let manifest_path = if manifest_path.is_dir() {
        manifest_path.join(MANIFEST_FILE)
    } else {
        manifest_path.to_path_buf()
    };
    let bytes = read(&manifest_path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        path: manifest_path.clone(),
        line: 0,
        field: "<file>".into(),
        message: "not UTF-8".into(),
    })?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    let mut records = Vec::new();
    let mut stack_paths = BTreeMap::new();
    let mut split_boundary_year = None;
    let mut provenance = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        let perr = |field: &str, message: String| Error::Parse {
            path: manifest_path.clone(),
            line: line_no,
            field: field.to_string(),
            message,
        };
        if line.is_empty() || line == MANIFEST_COLUMNS {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some(v) = meta.strip_prefix("split_boundary_year=") {
                split_boundary_year = Some(
                    v.trim()
                        .parse()
                        .map_err(|e| perr("split_boundary_year", format!("{e}")))?,
                );
            } else if let Some(v) = meta.strip_prefix("provenance=") {
                provenance.push(v.trim().to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(perr("<line>", format!("expected 6 columns ({MANIFEST_COLUMNS}), found {}", cols.len())));
        }
        let id: u64 = cols[0].parse().map_err(|e| perr("id", format!("{e}")))?;
        let lat: f64 = cols[1].parse().map_err(|e| perr("lat", format!("{e}")))?;
        let lon: f64 = cols[2].parse().map_err(|e| perr("lon", format!("{e}")))?;
        let start_year: i32 = cols[3].parse().map_err(|e| perr("start_year", format!("{e}")))?;
        let duration_days: f64 = cols[4].parse().map_err(|e| perr("duration_days", format!("{e}")))?;
        if cols[5].is_empty() {
            return Err(perr("stack_dir", "empty".into()));
        }
        if !lat.is_finite() {
            return Err(perr("lat", "not finite".into()));
        }
        if !lon.is_finite() {
            return Err(perr("lon", "not finite".into()));
        }
        let record =
            FireRecord::new(id, lat, lon, start_year, duration_days).map_err(|e| perr("duration_days", e.to_string()))?;
        if stack_paths.insert(id, PathBuf::from(cols[5])).is_some() {
            return Err(perr("id", format!("duplicate fire id {id}")));
        }
        records.push(record);
    }

    let loader = DatasetLoader {
        root,
        stack_paths,
        split_boundary_year,
        provenance,
    };
    for r in &records {
        for feature in Feature::ALL {
            let path = loader.raster_path(r.id, feature)?;
            if !path.is_file() {
                return Err(Error::MissingFile { fire_id: r.id, path });
            }
        }
    }
    Ok((records, loader))
}

/// Writes `manifest.csv` plus `stacks/<id>/<feature>.bin` under `dir`.
/// Returns the manifest path.
pub fn save_dataset(
    dir: &Path,
    records: &[FireRecord],
    stacks: &dyn StackSource,
    split_boundary_year: Option<i32>,
    provenance: &[String],
) -> Result<PathBuf> {
    let mut manifest = String::new();
    if let Some(year) = split_boundary_year {
        writeln!(manifest, "# split_boundary_year={year}").unwrap();
    }
    for p in provenance {
        writeln!(manifest, "# provenance={p}").unwrap();
    }
    writeln!(manifest, "{MANIFEST_COLUMNS}").unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for r in records {
        r.validate()?;
        if !seen.insert(r.id) {
            return Err(Error::invalid(format!("duplicate fire id {}", r.id)));
        }
        let rel = format!("stacks/{}", r.id);
        let stack = stacks.load_stack(r.id)?;
        for grid in stack.rasters() {
            write_raster(&dir.join(&rel).join(format!("{}.bin", grid.feature().name())), grid)?;
        }
        writeln!(
            manifest,
            "{},{},{},{},{},{rel}",
            r.id, r.lat, r.lon, r.start_year, r.duration_days
        )
        .unwrap();
    }
    let path = dir.join(MANIFEST_FILE);
    write_atomic(&path, manifest.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    struct MapSource(HashMap<u64, FeatureStack>);

    impl StackSource for MapSource {
        fn load_stack(&self, fire_id: u64) -> Result<FeatureStack> {
            self.0
                .get(&fire_id)
                .cloned()
                .ok_or_else(|| Error::invalid("no such fire"))
        }
    }

    fn stack(id: u64, base: f32) -> FeatureStack {
        let rasters = Feature::ALL
            .iter()
            .enumerate()
            .map(|(k, &f)| {
                let values = (0..6).map(|i| (base + k as f32 * 0.5 + i as f32 * 0.25) as f64).collect();
                RasterGrid::new(f, 100.0 * (k + 1) as f64, 2, 3, values).unwrap()
            })
            .collect();
        FeatureStack::new(id, rasters).unwrap()
    }

    fn three_fire_dataset(dir: &Path) -> (Vec<FireRecord>, MapSource) {
        let records = vec![
            FireRecord::new(1, 37.25, -110.5, 2004, 0.5).unwrap(),
            FireRecord::new(7, 33.1, -120.75, 2013, 12.0).unwrap(),
            FireRecord::new(9, 41.9, -95.0, 2016, 1.0 / 3.0).unwrap(),
        ];
        let source = MapSource(records.iter().map(|r| (r.id, stack(r.id, r.id as f32))).collect());
        save_dataset(dir, &records, &source, Some(2013), &["unit test".to_string()]).unwrap();
        (records, source)
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (records, source) = three_fire_dataset(dir.path());
        let (loaded, loader) = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded, records);
        assert_eq!(loader.split_boundary_year(), Some(2013));
        assert_eq!(loader.provenance(), ["unit test"]);
        for r in &records {
            assert_eq!(loader.load_stack(r.id).unwrap(), source.load_stack(r.id).unwrap());
        }
    }

    #[test]
    fn missing_stack_file_names_fire() {
        let dir = tempfile::tempdir().unwrap();
        three_fire_dataset(dir.path());
        std::fs::remove_file(dir.path().join("stacks/7/slope.bin")).unwrap();
        match load_dataset(&dir.path().join(MANIFEST_FILE)) {
            Err(Error::MissingFile { fire_id, .. }) => assert_eq!(fire_id, 7),
            other => panic!("expected missing-file error, got {other:?}"),
        }
    }

    #[test]
    fn short_payload_is_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.bin");
        let mut bytes = br#"{"feature":"tc","resolution_m":100.0,"height":10,"width":10}"#.to_vec();
        bytes.push(b'\n');
        for _ in 0..99 {
            bytes.extend_from_slice(&1.0f32.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        match read_raster(&path) {
            Err(Error::DimensionMismatch { expected, found, .. }) => {
                assert_eq!((expected, found), (100, 99));
            }
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn malformed_headers_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.bin");
        let cases = [
            (r#"{"feature":"tc","resolution_m":100.0,"width":1}"#, "height"),
            (r#"{"feature":"biomass","resolution_m":100.0,"height":1,"width":1}"#, "feature"),
            (r#"{"feature":"tc","resolution_m":-1,"height":1,"width":1}"#, "resolution_m"),
            (r#"{"feature":"tc","resolution_m":1,"height":0,"width":1}"#, "height"),
            (r#"not json"#, "<header>"),
        ];
        for (header, expected_field) in cases {
            let mut bytes = header.as_bytes().to_vec();
            bytes.push(b'\n');
            bytes.extend_from_slice(&0f32.to_le_bytes());
            std::fs::write(&path, bytes).unwrap();
            match read_raster(&path) {
                Err(Error::MalformedHeader { field, .. }) => assert_eq!(field, expected_field, "{header}"),
                other => panic!("expected malformed header for {header}, got {other:?}"),
            }
        }
    }

    #[test]
    fn non_finite_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.bin");
        let mut bytes = br#"{"feature":"gc","resolution_m":100.0,"height":1,"width":2}"#.to_vec();
        bytes.push(b'\n');
        bytes.extend_from_slice(&1f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_raster(&path), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn manifest_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        three_fire_dataset(dir.path());
        let manifest = dir.path().join(MANIFEST_FILE);
        let original = std::fs::read_to_string(&manifest).unwrap();

        let cases = [
            ("1,abc,-110.5,2004,0.5,stacks/1", "lat"),
            ("1,37.0,-110.5,20x4,0.5,stacks/1", "start_year"),
            ("1,37.0,-110.5,2004,-2,stacks/1", "duration_days"),
            ("1,37.0,-110.5,2004", "<line>"),
            ("7,37.0,-110.5,2004,1,stacks/1", "id"),
        ];
        for (line, field) in cases {
            std::fs::write(&manifest, format!("{original}{line}\n")).unwrap();
            match load_dataset(&manifest) {
                Err(Error::Parse { field: f, .. }) => assert_eq!(f, field, "{line}"),
                other => panic!("expected parse error for {line}, got {other:?}"),
            }
        }
    }
}
