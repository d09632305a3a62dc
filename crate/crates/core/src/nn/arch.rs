//! The two image architectures: a single-input multilayer CNN and a
//! two-encoder CNN for inputs of different sizes.

use super::layers::{LayerSpec, Padding, Shape};
use super::network::{BranchSpec, NetworkSpec};

pub const MULTILAYER_INPUT: Shape = Shape::Image { c: 5, h: 100, w: 100 };
pub const ENCODER_A_INPUT: Shape = Shape::Image { c: 1, h: 100, w: 100 };
pub const ENCODER_B_INPUT: Shape = Shape::Image { c: 1, h: 30, w: 30 };

fn conv(out_channels: usize, padding: Padding) -> LayerSpec {
    LayerSpec::Conv2d {
        kernel: 3,
        out_channels,
        padding,
    }
}

fn pool(ceil_mode: bool) -> LayerSpec {
    LayerSpec::MaxPool2d { window: 2, ceil_mode }
}

/// Valid 3x3 convolutions with floor pooling; on a 100x100x5 input the
/// flatten width is 23 * 23 * 64 = 33856.
pub fn build_multilayer_cnn(input: Shape) -> NetworkSpec {
    NetworkSpec::sequential(
        input,
        vec![
            conv(32, Padding::Valid),
            LayerSpec::Relu,
            pool(false),
            conv(64, Padding::Valid),
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.25 },
            pool(false),
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 128 },
            LayerSpec::LeakyRelu { alpha: 0.2 },
            LayerSpec::Dropout { rate: 0.25 },
            LayerSpec::Dense { units: 1 },
        ],
    )
}

fn encoder_tail(hidden: usize, out: usize) -> [LayerSpec; 5] {
    [
        LayerSpec::Flatten,
        LayerSpec::LeakyRelu { alpha: 0.3 },
        LayerSpec::Dense { units: hidden },
        LayerSpec::LeakyRelu { alpha: 0.2 },
        LayerSpec::Dense { units: out },
    ]
}

/// Encoder A (three same-padded conv blocks, 20 features) and encoder B
/// (two blocks, 10 features), concatenated into a 30-wide vector and
/// regressed through dense(50, ReLU) and dense(1).
pub fn build_encoder_cnn(input_a: Shape, input_b: Shape) -> NetworkSpec {
    let mut a = vec![
        conv(32, Padding::Same),
        LayerSpec::Relu,
        pool(true),
        conv(16, Padding::Same),
        LayerSpec::Relu,
        pool(true),
        conv(16, Padding::Same),
        LayerSpec::Relu,
        pool(true),
    ];
    a.extend(encoder_tail(169, 20));
    let mut b = vec![
        conv(32, Padding::Same),
        LayerSpec::Relu,
        pool(true),
        conv(16, Padding::Same),
        LayerSpec::Relu,
        pool(true),
    ];
    b.extend(encoder_tail(64, 10));
    NetworkSpec {
        branches: vec![
            BranchSpec { input: input_a, layers: a },
            BranchSpec { input: input_b, layers: b },
        ],
        head: vec![
            LayerSpec::Concatenate,
            LayerSpec::Dense { units: 50 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 1 },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, c: usize) -> Shape {
        Shape::Image { c, h, w }
    }

    #[test]
    fn multilayer_shapes() {
        let layers = build_multilayer_cnn(MULTILAYER_INPUT).layers().unwrap();
        let outputs: Vec<Shape> = layers.iter().map(|l| l.output).collect();
        assert_eq!(
            outputs,
            vec![
                img(98, 98, 32),
                img(98, 98, 32),
                img(49, 49, 32),
                img(47, 47, 64),
                img(47, 47, 64),
                img(47, 47, 64),
                img(23, 23, 64),
                Shape::Flat(33856),
                Shape::Flat(128),
                Shape::Flat(128),
                Shape::Flat(128),
                Shape::Flat(1),
            ]
        );
    }

    #[test]
    fn encoder_shapes() {
        let spec = build_encoder_cnn(ENCODER_A_INPUT, ENCODER_B_INPUT);
        let layers = spec.layers().unwrap();
        let out = |label: &str| layers.iter().find(|l| l.label == label).unwrap().output;
        assert_eq!(out("branch 0 layer 2"), img(50, 50, 32));
        assert_eq!(out("branch 0 layer 5"), img(25, 25, 16));
        assert_eq!(out("branch 0 layer 8"), img(13, 13, 16));
        assert_eq!(out("branch 0 layer 9"), Shape::Flat(2704));
        assert_eq!(out("branch 0 layer 13"), Shape::Flat(20));
        assert_eq!(out("branch 1 layer 2"), img(15, 15, 32));
        assert_eq!(out("branch 1 layer 5"), img(8, 8, 16));
        assert_eq!(out("branch 1 layer 6"), Shape::Flat(1024));
        assert_eq!(out("branch 1 layer 10"), Shape::Flat(10));
        let first_head = layers.iter().find(|l| l.label == "head layer 1").unwrap();
        assert_eq!(first_head.input, Shape::Flat(30));
        assert_eq!(spec.output_shape().unwrap(), Shape::Flat(1));
    }
}
