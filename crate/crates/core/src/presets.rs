//! Ready-made layer stacks shared by the command-line tools and the test
//! suites.

use crate::error::Result;
use crate::linalg::Shape;
use crate::network::{LayerSpec, Network};

/// Small dense net for 2-D point clouds. The feature dimension is 2, so
/// features can be scattered directly against 2-D anchors.
pub fn toy2d(seed: u64) -> Result<Network> {
    Network::new(
        Shape::Flat(2),
        vec![
            LayerSpec::Dense {
                input: 2,
                output: 32,
            },
            LayerSpec::ReLU,
            LayerSpec::Dense {
                input: 32,
                output: 32,
            },
            LayerSpec::ReLU,
            LayerSpec::Dense {
                input: 32,
                output: 2,
            },
        ],
        seed,
    )
}

fn digit_stack(feature_dim: usize, dropout: f64, seed: u64) -> Result<Network> {
    Network::new(
        Shape::Image {
            channels: 1,
            height: 28,
            width: 28,
        },
        vec![
            LayerSpec::Conv3x3 {
                in_channels: 1,
                out_channels: 16,
            },
            LayerSpec::BatchNorm { channels: 16 },
            LayerSpec::ReLU,
            LayerSpec::MaxPool2x2,
            LayerSpec::Dropout { p: dropout },
            LayerSpec::Conv3x3 {
                in_channels: 16,
                out_channels: 16,
            },
            LayerSpec::BatchNorm { channels: 16 },
            LayerSpec::ReLU,
            LayerSpec::Conv3x3 {
                in_channels: 16,
                out_channels: 16,
            },
            LayerSpec::BatchNorm { channels: 16 },
            LayerSpec::ReLU,
            LayerSpec::MaxPool2x2,
            LayerSpec::Dropout { p: dropout },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                input: 784,
                output: feature_dim,
            },
        ],
        seed,
    )
}

/// Miniature 28×28 digit net: a conv block, pool, dropout, two conv blocks,
/// pool, dropout, then a dense layer into a 64-dimensional feature space.
/// Dropout sits after each pooling stage; `dropout` is the shared ratio.
pub fn mnist_mini(dropout: f64, seed: u64) -> Result<Network> {
    digit_stack(64, dropout, seed)
}

/// [`mnist_mini`] with a 2-dimensional feature layer, for scatter plots of
/// the learned embedding.
pub fn mnist_2dviz(dropout: f64, seed: u64) -> Result<Network> {
    digit_stack(2, dropout, seed)
}
