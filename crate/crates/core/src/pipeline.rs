//! End-to-end glue: model families, preprocessing for each family, fitting,
//! prediction and the model file.
//!
//! Model file: one UTF-8 JSON header line describing the family, its
//! configuration, the preprocessing and (for tabular families) the fitted
//! model itself. Image families append the network file bytes after it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{self, Feature, FireRecord, StackSource};
use crate::fsutil::{read, write_atomic};
use crate::nn::{self, Example, Network, OptimizerKind, Shape, TrainConfig};
use crate::preprocess::{to_image, to_tabular, TabularSample};
use crate::tabular::{fit_gbt, fit_knn, fit_random_forest, ForestParams, GbtParams, TabularModel};
use crate::{rng, Error, Result};

pub const MODEL_FORMAT: &str = "wildfire-duration-model";
const MODEL_VERSION: u32 = 1;
const MAX_HEADER_BYTES: usize = 64 << 20;

const INIT_SALT: u64 = 0x494e_4954;
const TRAIN_SALT: u64 = 0x5452_4149;
const DOWNSAMPLE_SALT: u64 = 0x444f_574e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Rf,
    Knn,
    #[serde(alias = "gbt")]
    Xgboost,
    CnnMulti,
    CnnEncoder,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Rf, Family::Knn, Family::Xgboost, Family::CnnMulti, Family::CnnEncoder];

    pub fn name(self) -> &'static str {
        match self {
            Family::Rf => "rf",
            Family::Knn => "knn",
            Family::Xgboost => "xgboost",
            Family::CnnMulti => "cnn_multi",
            Family::CnnEncoder => "cnn_encoder",
        }
    }

    pub fn is_image(self) -> bool {
        matches!(self, Family::CnnMulti | Family::CnnEncoder)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rf" => Ok(Family::Rf),
            "knn" => Ok(Family::Knn),
            "xgboost" | "gbt" => Ok(Family::Xgboost),
            "cnn_multi" => Ok(Family::CnnMulti),
            "cnn_encoder" => Ok(Family::CnnEncoder),
            other => Err(Error::invalid(format!(
                "unknown model family {other:?} (expected rf, knn, xgboost, cnn_multi or cnn_encoder)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnnParams {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
}

impl Default for CnnParams {
    fn default() -> Self {
        CnnParams {
            batch_size: 128,
            epochs: 50,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
        }
    }
}

/// Hyperparameters of one family. Defaults are the grid-search optima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    Rf(ForestParams),
    Knn { k: usize },
    Xgboost(GbtParams),
    CnnMulti(CnnParams),
    CnnEncoder(CnnParams),
}

fn parse_value<T: FromStr>(name: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for parameter {name}")))
}

impl ModelConfig {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Rf => ModelConfig::Rf(ForestParams::default()),
            Family::Knn => ModelConfig::Knn { k: 10 },
            Family::Xgboost => ModelConfig::Xgboost(GbtParams::default()),
            Family::CnnMulti => ModelConfig::CnnMulti(CnnParams::default()),
            Family::CnnEncoder => ModelConfig::CnnEncoder(CnnParams::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelConfig::Rf(_) => Family::Rf,
            ModelConfig::Knn { .. } => Family::Knn,
            ModelConfig::Xgboost(_) => Family::Xgboost,
            ModelConfig::CnnMulti(_) => Family::CnnMulti,
            ModelConfig::CnnEncoder(_) => Family::CnnEncoder,
        }
    }

    /// Tunable parameter names for a family.
    pub fn param_names(family: Family) -> &'static [&'static str] {
        match family {
            Family::Rf => &["n_estimators", "max_depth", "min_samples_leaf", "bootstrap"],
            Family::Knn => &["k"],
            Family::Xgboost => &["n_estimators", "learning_rate", "max_depth", "lambda", "min_samples_leaf"],
            Family::CnnMulti | Family::CnnEncoder => &["batch_size", "epochs", "optimizer", "learning_rate"],
        }
    }

    /// Sets one parameter from its text form.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        match (self, name) {
            (ModelConfig::Rf(p), "n_estimators") => p.n_estimators = parse_value(name, value)?,
            (ModelConfig::Rf(p), "max_depth") => p.max_depth = parse_value(name, value)?,
            (ModelConfig::Rf(p), "min_samples_leaf") => p.min_samples_leaf = parse_value(name, value)?,
            (ModelConfig::Rf(p), "bootstrap") => p.bootstrap = parse_value(name, value)?,
            (ModelConfig::Knn { k }, "k") => *k = parse_value(name, value)?,
            (ModelConfig::Xgboost(p), "n_estimators") => p.n_estimators = parse_value(name, value)?,
            (ModelConfig::Xgboost(p), "learning_rate") => p.learning_rate = parse_value(name, value)?,
            (ModelConfig::Xgboost(p), "max_depth") => p.max_depth = parse_value(name, value)?,
            (ModelConfig::Xgboost(p), "lambda") => p.lambda = parse_value(name, value)?,
            (ModelConfig::Xgboost(p), "min_samples_leaf") => p.min_samples_leaf = parse_value(name, value)?,
            (ModelConfig::CnnMulti(p) | ModelConfig::CnnEncoder(p), "batch_size") => p.batch_size = parse_value(name, value)?,
            (ModelConfig::CnnMulti(p) | ModelConfig::CnnEncoder(p), "epochs") => p.epochs = parse_value(name, value)?,
            (ModelConfig::CnnMulti(p) | ModelConfig::CnnEncoder(p), "optimizer") => p.optimizer = value.parse()?,
            (ModelConfig::CnnMulti(p) | ModelConfig::CnnEncoder(p), "learning_rate") => {
                p.learning_rate = parse_value(name, value)?
            }
            (this, _) => {
                return Err(Error::invalid(format!(
                    "unknown parameter {name:?} for family {} (expected one of {})",
                    this.family(),
                    Self::param_names(this.family()).join(", ")
                )))
            }
        }
        Ok(())
    }
}

/// How raster stacks become model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub radius_km: f64,
    /// Target size of the main image input.
    pub image_size: (usize, usize),
    /// Target size of the second encoder input.
    pub branch_b_size: (usize, usize),
    /// Multilayer CNN: stacked channels. Encoder CNN: exactly two, the first
    /// feeding the large branch and the second the small one.
    pub channels: Vec<Feature>,
}

pub const DEFAULT_RADIUS_KM: f64 = 5.0;
pub const DEFAULT_IMAGE_SIZE: (usize, usize) = (100, 100);
pub const DEFAULT_BRANCH_B_SIZE: (usize, usize) = (30, 30);

impl PrepConfig {
    pub fn default_for(family: Family) -> Self {
        let channels = match family {
            Family::CnnEncoder => vec![Feature::Tc, Feature::Slope],
            _ => Feature::ALL.to_vec(),
        };
        PrepConfig {
            radius_km: DEFAULT_RADIUS_KM,
            image_size: DEFAULT_IMAGE_SIZE,
            branch_b_size: DEFAULT_BRANCH_B_SIZE,
            channels,
        }
    }

    fn validate(&self, family: Family) -> Result<()> {
        if !(self.radius_km.is_finite() && self.radius_km > 0.0) {
            return Err(Error::invalid(format!("radius must be positive, got {}", self.radius_km)));
        }
        if !family.is_image() {
            return Ok(());
        }
        let (h, w) = self.image_size;
        let (bh, bw) = self.branch_b_size;
        if h == 0 || w == 0 || bh == 0 || bw == 0 {
            return Err(Error::invalid("image sizes must be positive"));
        }
        if self.channels.is_empty() {
            return Err(Error::invalid("channel subset is empty"));
        }
        if family == Family::CnnEncoder && self.channels.len() != 2 {
            return Err(Error::invalid(format!(
                "cnn_encoder takes exactly two channels (large branch, small branch), got {}",
                self.channels.len()
            )));
        }
        Ok(())
    }

    /// Network input shapes for an image family.
    pub fn input_shapes(&self, family: Family) -> Vec<Shape> {
        let (h, w) = self.image_size;
        match family {
            Family::CnnEncoder => {
                let (bh, bw) = self.branch_b_size;
                vec![Shape::Image { c: 1, h, w }, Shape::Image { c: 1, h: bh, w: bw }]
            }
            _ => vec![Shape::Image { c: self.channels.len(), h, w }],
        }
    }
}

/// Model inputs for a set of fires.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Tabular(Vec<TabularSample>),
    Images(Vec<Example>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSet {
    pub fire_ids: Vec<u64>,
    pub labels: Vec<f64>,
    pub inputs: Inputs,
}

impl PreparedSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Loads each record's stack and turns it into the family's input form.
pub fn prepare(family: Family, prep: &PrepConfig, records: &[FireRecord], source: &dyn StackSource) -> Result<PreparedSet> {
    prep.validate(family)?;
    let mut tabular = Vec::new();
    let mut images = Vec::new();
    for r in records {
        let stack = source.load_stack(r.id)?;
        match family {
            Family::Rf | Family::Knn | Family::Xgboost => tabular.push(to_tabular(&stack, r.duration_days, prep.radius_km)?),
            Family::CnnMulti => {
                let img = to_image(&stack, prep.radius_km, prep.image_size, &prep.channels)?;
                images.push(Example { inputs: vec![img.values], target: r.duration_days });
            }
            Family::CnnEncoder => {
                let a = to_image(&stack, prep.radius_km, prep.image_size, &prep.channels[..1])?;
                let b = to_image(&stack, prep.radius_km, prep.branch_b_size, &prep.channels[1..2])?;
                images.push(Example { inputs: vec![a.values, b.values], target: r.duration_days });
            }
        }
    }
    Ok(PreparedSet {
        fire_ids: records.iter().map(|r| r.id).collect(),
        labels: records.iter().map(|r| r.duration_days).collect(),
        inputs: if family.is_image() { Inputs::Images(images) } else { Inputs::Tabular(tabular) },
    })
}

/// Standard curation: keep the study region, split on `start_year < boundary`,
/// then halve the small fires of the training side only.
pub fn standard_split(records: &[FireRecord], boundary_year: i32, seed: u64) -> Result<(Vec<FireRecord>, Vec<FireRecord>)> {
    let kept = data::filter_target_area(records)?;
    let (train, test) = data::split_by_year(&kept, boundary_year);
    Ok((data::downsample_small_fires(&train, rng::mix(seed, DOWNSAMPLE_SALT)), test))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Tabular(TabularModel),
    Network(Network),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub config: ModelConfig,
    pub prep: PrepConfig,
    pub seed: u64,
    pub body: ModelBody,
}

/// Training diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitLog {
    /// Per-epoch loss for networks, per-round loss for boosting, else empty.
    pub loss_history: Vec<f64>,
    pub warnings: Vec<String>,
}

fn tabular_inputs(set: &PreparedSet) -> Result<&[TabularSample]> {
    match &set.inputs {
        Inputs::Tabular(s) => Ok(s),
        Inputs::Images(_) => Err(Error::invalid("tabular model given image inputs")),
    }
}

fn image_inputs(set: &PreparedSet) -> Result<&[Example]> {
    match &set.inputs {
        Inputs::Images(e) => Ok(e),
        Inputs::Tabular(_) => Err(Error::invalid("network model given tabular inputs")),
    }
}

pub fn fit(config: &ModelConfig, prep: &PrepConfig, train: &PreparedSet, seed: u64) -> Result<(FittedModel, FitLog)> {
    let family = config.family();
    prep.validate(family)?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut log = FitLog::default();
    let body = match *config {
        ModelConfig::Rf(p) => ModelBody::Tabular(TabularModel::Forest(fit_random_forest(tabular_inputs(train)?, p, seed)?)),
        ModelConfig::Knn { k } => ModelBody::Tabular(TabularModel::Knn(fit_knn(tabular_inputs(train)?, k)?)),
        ModelConfig::Xgboost(p) => {
            let model = fit_gbt(tabular_inputs(train)?, p)?;
            log.loss_history = model.train_loss.clone();
            ModelBody::Tabular(TabularModel::Gbt(model))
        }
        ModelConfig::CnnMulti(p) | ModelConfig::CnnEncoder(p) => {
            let shapes = prep.input_shapes(family);
            let spec = if family == Family::CnnMulti {
                nn::build_multilayer_cnn(shapes[0])
            } else {
                nn::build_encoder_cnn(shapes[0], shapes[1])
            };
            let mut net = Network::new(spec, rng::mix(seed, INIT_SALT))?;
            let cfg = TrainConfig {
                batch_size: p.batch_size,
                epochs: p.epochs,
                optimizer: p.optimizer,
                learning_rate: p.learning_rate,
                seed: rng::mix(seed, TRAIN_SALT),
            };
            let report = nn::train(&mut net, image_inputs(train)?, &cfg)?;
            log.loss_history = report.loss_history;
            log.warnings = report.warnings;
            ModelBody::Network(net)
        }
    };
    Ok((
        FittedModel {
            config: *config,
            prep: prep.clone(),
            seed,
            body,
        },
        log,
    ))
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    features: Vec<String>,
    config: ModelConfig,
    prep: PrepConfig,
    seed: u64,
    tabular: Option<TabularModel>,
}

impl FittedModel {
    pub fn family(&self) -> Family {
        self.config.family()
    }

    /// Predictions in set order, clipped at zero.
    pub fn predict(&self, set: &PreparedSet) -> Result<Vec<f64>> {
        match &self.body {
            ModelBody::Tabular(m) => Ok(tabular_inputs(set)?.iter().map(|s| m.predict(&s.features)).collect()),
            ModelBody::Network(net) => {
                let raw = nn::predict_examples(net, image_inputs(set)?)?;
                Ok(raw.into_iter().map(|p| p.max(0.0)).collect())
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ModelHeader {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            features: Feature::ALL.iter().map(|f| f.name().to_string()).collect(),
            config: self.config,
            prep: self.prep.clone(),
            seed: self.seed,
            tabular: match &self.body {
                ModelBody::Tabular(m) => Some(m.clone()),
                ModelBody::Network(_) => None,
            },
        };
        let mut bytes = serde_json::to_vec(&header).expect("model header serialises");
        bytes.push(b'\n');
        if let ModelBody::Network(net) = &self.body {
            bytes.extend(nn::encode_network(net));
        }
        bytes
    }

    /// Parses [`FittedModel::to_bytes`] output; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let header_err = |field: &str, message: String| Error::MalformedHeader {
            path: path.to_path_buf(),
            field: field.to_string(),
            message,
        };
        let newline = bytes
            .iter()
            .take(MAX_HEADER_BYTES)
            .position(|&b| b == b'\n')
            .ok_or_else(|| header_err("<header>", "no header line terminator".into()))?;
        let header: ModelHeader =
            serde_json::from_slice(&bytes[..newline]).map_err(|e| header_err("<header>", e.to_string()))?;
        if header.format != MODEL_FORMAT {
            return Err(header_err("format", format!("expected {MODEL_FORMAT:?}, got {:?}", header.format)));
        }
        if header.version != MODEL_VERSION {
            return Err(header_err("version", format!("unsupported version {}", header.version)));
        }
        let expected: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
        if header.features != expected {
            return Err(header_err(
                "features",
                format!("model was trained on feature order {:?}, this build uses {:?}", header.features, expected),
            ));
        }
        let family = header.config.family();
        let rest = &bytes[newline + 1..];
        let body = match (family.is_image(), header.tabular) {
            (false, Some(m)) => {
                let matches = matches!(
                    (&m, family),
                    (TabularModel::Forest(_), Family::Rf) | (TabularModel::Knn(_), Family::Knn) | (TabularModel::Gbt(_), Family::Xgboost)
                );
                if !matches || !rest.is_empty() {
                    return Err(header_err("tabular", format!("stored model does not match family {family}")));
                }
                ModelBody::Tabular(m)
            }
            (true, None) => {
                let net = nn::decode_network(rest, path)?;
                if net.input_shapes() != header.prep.input_shapes(family) {
                    return Err(header_err("prep", "network inputs disagree with the preprocessing settings".into()));
                }
                ModelBody::Network(net)
            }
            _ => return Err(header_err("tabular", format!("family {family} stored with the wrong model body"))),
        };
        Ok(FittedModel {
            config: header.config,
            prep: header.prep,
            seed: header.seed,
            body,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read(path)?, path)
    }
}

/// Predicts the training-label mean for every fire.
pub fn constant_mean_baseline(train_labels: &[f64], n: usize) -> Result<Vec<f64>> {
    if train_labels.is_empty() {
        return Err(Error::invalid("baseline needs at least one training label"));
    }
    let mean = train_labels.iter().sum::<f64>() / train_labels.len() as f64;
    Ok(vec![mean.max(0.0); n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert_eq!("gbt".parse::<Family>().unwrap(), Family::Xgboost);
        assert!("svm".parse::<Family>().is_err());
    }

    #[test]
    fn defaults_are_grid_optima() {
        match ModelConfig::default_for(Family::Rf) {
            ModelConfig::Rf(p) => assert_eq!((p.n_estimators, p.max_depth), (50, 5)),
            other => panic!("{other:?}"),
        }
        assert_eq!(ModelConfig::default_for(Family::Knn), ModelConfig::Knn { k: 10 });
        match ModelConfig::default_for(Family::Xgboost) {
            ModelConfig::Xgboost(p) => assert_eq!((p.n_estimators, p.learning_rate, p.max_depth), (50, 0.1, 5)),
            other => panic!("{other:?}"),
        }
        let cnn = CnnParams::default();
        assert_eq!((cnn.batch_size, cnn.epochs, cnn.optimizer), (128, 50, OptimizerKind::Adam));
    }

    #[test]
    fn set_rejects_unknown_names_and_bad_values() {
        let mut c = ModelConfig::default_for(Family::Knn);
        c.set("k", "3").unwrap();
        assert_eq!(c, ModelConfig::Knn { k: 3 });
        assert!(matches!(c.set("depth", "3"), Err(Error::InvalidArgument(_))));
        assert!(c.set("k", "three").is_err());
        let mut c = ModelConfig::default_for(Family::CnnEncoder);
        c.set("optimizer", "SGD").unwrap();
        c.set("epochs", "4").unwrap();
        assert_eq!(
            c,
            ModelConfig::CnnEncoder(CnnParams { optimizer: OptimizerKind::Sgd, epochs: 4, ..CnnParams::default() })
        );
    }

    #[test]
    fn encoder_needs_two_channels() {
        let mut prep = PrepConfig::default_for(Family::CnnEncoder);
        assert!(prep.validate(Family::CnnEncoder).is_ok());
        prep.channels.push(Feature::Gc);
        assert!(prep.validate(Family::CnnEncoder).is_err());
        assert_eq!(PrepConfig::default_for(Family::CnnMulti).input_shapes(Family::CnnMulti), vec![nn::MULTILAYER_INPUT]);
    }
}
