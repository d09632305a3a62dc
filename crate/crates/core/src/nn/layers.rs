use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1`.
    Valid,
    /// Zero padding of `kernel / 2`; spatial size preserved (odd kernels).
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1 cross-correlation.
    Conv2d {
        kernel: usize,
        out_channels: usize,
        padding: Padding,
    },
    /// Non-overlapping max pooling. With `ceil_mode` a trailing partial
    /// window is kept (25 -> 13); otherwise it is dropped (47 -> 23).
    MaxPool2d { window: usize, ceil_mode: bool },
    Dense { units: usize },
    Relu,
    LeakyRelu { alpha: f64 },
    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`.
    Dropout { rate: f64 },
    Flatten,
    /// Joins the flat outputs of all branches; only valid as the first head layer.
    Concatenate,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Concatenate => "concatenate",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    /// Output shape for one sample, or a shape error naming `layer`.
    pub fn output_shape(&self, input: Shape, layer: &str) -> Result<Shape> {
        let err = |message: String| Error::Shape {
            layer: layer.to_string(),
            message,
        };
        match (*self, input) {
            (LayerSpec::Conv2d { kernel, out_channels, padding }, Shape::Image { h, w, .. }) => {
                if kernel == 0 || out_channels == 0 {
                    return Err(err("kernel and out_channels must be positive".into()));
                }
                match padding {
                    Padding::Same if kernel % 2 == 0 => Err(err("same padding needs an odd kernel".into())),
                    Padding::Same => Ok(Shape::Image { c: out_channels, h, w }),
                    Padding::Valid if h < kernel || w < kernel => {
                        Err(err(format!("{h}x{w} input is smaller than a {kernel}x{kernel} kernel")))
                    }
                    Padding::Valid => Ok(Shape::Image {
                        c: out_channels,
                        h: h - kernel + 1,
                        w: w - kernel + 1,
                    }),
                }
            }
            (LayerSpec::MaxPool2d { window, ceil_mode }, Shape::Image { c, h, w }) => {
                if window == 0 {
                    return Err(err("pool window must be positive".into()));
                }
                let out = |n: usize| if ceil_mode { n.div_ceil(window) } else { n / window };
                let (oh, ow) = (out(h), out(w));
                if oh == 0 || ow == 0 {
                    return Err(err(format!("{h}x{w} input is smaller than the {window}x{window} window")));
                }
                Ok(Shape::Image { c, h: oh, w: ow })
            }
            (LayerSpec::Conv2d { .. } | LayerSpec::MaxPool2d { .. }, Shape::Flat(_)) => {
                Err(err("expects an image input, got a flat vector".into()))
            }
            (LayerSpec::Dense { units }, Shape::Flat(_)) => {
                if units == 0 {
                    return Err(err("dense layer needs at least one unit".into()));
                }
                Ok(Shape::Flat(units))
            }
            (LayerSpec::Dense { .. }, Shape::Image { .. }) => Err(err("expects a flat input; add a flatten layer".into())),
            (LayerSpec::LeakyRelu { alpha }, s) => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(err(format!("leaky alpha must be positive, got {alpha}")));
                }
                Ok(s)
            }
            (LayerSpec::Dropout { rate }, s) => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(err(format!("dropout rate must be in [0, 1), got {rate}")));
                }
                Ok(s)
            }
            (LayerSpec::Relu, s) => Ok(s),
            (LayerSpec::Flatten, s) => Ok(Shape::Flat(s.len())),
            (LayerSpec::Concatenate, _) => Err(err("concatenate is only valid as the first head layer".into())),
        }
    }
}

/// Per-sample activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Image { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Image { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    /// Height-width-channel order, as Keras-style summaries print it.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Image { c, h, w } => write!(f, "({h}, {w}, {c})"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(c: usize, h: usize, w: usize) -> Shape {
        Shape::Image { c, h, w }
    }

    #[test]
    fn conv_shapes() {
        let valid = LayerSpec::Conv2d { kernel: 3, out_channels: 32, padding: Padding::Valid };
        assert_eq!(valid.output_shape(img(5, 100, 100), "c").unwrap(), img(32, 98, 98));
        let same = LayerSpec::Conv2d { kernel: 3, out_channels: 16, padding: Padding::Same };
        assert_eq!(same.output_shape(img(32, 25, 25), "c").unwrap(), img(16, 25, 25));
        assert!(valid.output_shape(img(1, 2, 9), "c").is_err());
        assert!(valid.output_shape(Shape::Flat(9), "c").is_err());
        let even = LayerSpec::Conv2d { kernel: 2, out_channels: 1, padding: Padding::Same };
        assert!(even.output_shape(img(1, 4, 4), "c").is_err());
    }

    #[test]
    fn pool_floor_and_ceil() {
        let floor = LayerSpec::MaxPool2d { window: 2, ceil_mode: false };
        let ceil = LayerSpec::MaxPool2d { window: 2, ceil_mode: true };
        assert_eq!(floor.output_shape(img(64, 47, 47), "p").unwrap(), img(64, 23, 23));
        assert_eq!(ceil.output_shape(img(16, 25, 25), "p").unwrap(), img(16, 13, 13));
        assert_eq!(ceil.output_shape(img(16, 15, 15), "p").unwrap(), img(16, 8, 8));
        assert!(floor.output_shape(img(1, 1, 1), "p").is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(LayerSpec::Dropout { rate: 1.0 }.output_shape(Shape::Flat(3), "d").is_err());
        assert!(LayerSpec::Dropout { rate: 0.0 }.output_shape(Shape::Flat(3), "d").is_ok());
        assert!(LayerSpec::LeakyRelu { alpha: 0.0 }.output_shape(Shape::Flat(3), "l").is_err());
        assert!(LayerSpec::Dense { units: 4 }.output_shape(img(1, 2, 2), "d").is_err());
        assert_eq!(LayerSpec::Flatten.output_shape(img(64, 23, 23), "f").unwrap(), Shape::Flat(33856));
        match LayerSpec::Concatenate.output_shape(Shape::Flat(3), "head/0") {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, "head/0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn display_is_hwc() {
        assert_eq!(img(32, 98, 97).to_string(), "(98, 97, 32)");
        assert_eq!(Shape::Flat(128).to_string(), "128");
    }
}
