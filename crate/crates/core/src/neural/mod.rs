//! From-scratch feed-forward networks (dense and convolutional) trained as
//! siamese embeddings with triplet loss.
//!
//! Gradients are reverse-mode, written out by hand per layer; there is no
//! autodiff. Training is single-threaded and bit-deterministic per seed.

pub(crate) mod io;
pub(crate) mod model;
pub(crate) mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model::{init_network, EmbeddingModel};
pub use train::{
    embed_all, sample_triplets, train_siamese, triplet_batch_gradients, triplet_batch_loss,
    triplet_batch_loss_fingerprint, triplet_loss, OptimizerKind, TrainConfig, TrainingSet,
    TripletBatch,
};

/// Shape of the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShape {
    /// Flat feature vector of the given dimensionality.
    Flat { dim: usize },
    /// Channel-first image tensor.
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

/// One declared layer. Shapes are inferred, so layers carry only their
/// free hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fully connected, `y = Wx + b`. A spatial input is flattened first.
    Dense { units: usize },
    /// Elementwise `max(0, ·)`.
    Relu,
    /// Valid (no padding) cross-correlation, stride 1; output channels =
    /// `round(growth · input channels)`, half up.
    Conv { kernel: usize, growth: f64 },
    /// Max pooling with stride = kernel; odd remainders are dropped.
    MaxPool { kernel: usize },
}

/// Declarative network description: input shape, hidden layers, and the
/// dimensionality of the linear embedding head that is always appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
    /// Units of the final linear layer (no activation after it).
    pub output_dim: usize,
}

/// Half-up rounding of the conv channel progression: 3 → 5 → 8 → 12 → …
fn half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Shape of the value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Shape {
    Flat(usize),
    Spatial { c: usize, h: usize, w: usize },
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Flat(d) => d,
            Shape::Spatial { c, h, w } => c * h * w,
        }
    }
}

/// A layer with all shapes resolved; what the runtime executes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum PlannedLayer {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Relu,
    Conv {
        in_c: usize,
        out_c: usize,
        kernel: usize,
        in_h: usize,
        in_w: usize,
    },
    MaxPool {
        kernel: usize,
    },
    Flatten,
}

#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub layers: Vec<PlannedLayer>,
}

impl NetworkSpec {
    /// Dense embedding network: each hidden layer is `dense(units)` + relu,
    /// followed by the linear head.
    pub fn dense(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() * 2);
        for &units in hidden {
            layers.push(LayerSpec::Dense { units });
            layers.push(LayerSpec::Relu);
        }
        NetworkSpec {
            input: InputShape::Flat { dim: input_dim },
            layers,
            output_dim,
        }
    }

    /// Convolutional image embedding: six 3×3 convolutions growing channels
    /// by ×1.5 (3→5→8→12→18→27→41), relu after each, 2×2 max pooling after
    /// every second convolution, then two dense(100)+relu blocks and the
    /// linear head.
    pub fn image_embedding(height: usize, width: usize, output_dim: usize) -> Self {
        let mut layers = Vec::new();
        for i in 0..6 {
            layers.push(LayerSpec::Conv {
                kernel: 3,
                growth: 1.5,
            });
            layers.push(LayerSpec::Relu);
            if i % 2 == 1 {
                layers.push(LayerSpec::MaxPool { kernel: 2 });
            }
        }
        for _ in 0..2 {
            layers.push(LayerSpec::Dense { units: 100 });
            layers.push(LayerSpec::Relu);
        }
        NetworkSpec {
            input: InputShape::Image {
                height,
                width,
                channels: 3,
            },
            layers,
            output_dim,
        }
    }

    /// Resolves all shapes, inserting the implicit flatten and the final
    /// linear head. Fails when a convolution or pool meets a spatial extent
    /// smaller than its kernel, or a convolution follows a flattened value.
    pub(crate) fn plan(&self) -> Result<Plan> {
        let input = match self.input {
            InputShape::Flat { dim } => {
                if dim == 0 {
                    return Err(Error::spec("input dimensionality must be positive"));
                }
                Shape::Flat(dim)
            }
            InputShape::Image {
                height,
                width,
                channels,
            } => {
                if height == 0 || width == 0 || channels == 0 {
                    return Err(Error::spec("image input must have positive extent"));
                }
                Shape::Spatial {
                    c: channels,
                    h: height,
                    w: width,
                }
            }
        };
        if self.output_dim == 0 {
            return Err(Error::spec("output dimensionality must be positive"));
        }

        let mut layers = Vec::new();
        let mut shape = input;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return Err(Error::spec(format!("layer {i}: dense needs ≥ 1 unit")));
                    }
                    if let Shape::Spatial { .. } = shape {
                        layers.push(PlannedLayer::Flatten);
                        shape = Shape::Flat(shape.len());
                    }
                    layers.push(PlannedLayer::Dense {
                        in_dim: shape.len(),
                        out_dim: units,
                    });
                    shape = Shape::Flat(units);
                }
                LayerSpec::Relu => layers.push(PlannedLayer::Relu),
                LayerSpec::Conv { kernel, growth } => {
                    let Shape::Spatial { c, h, w } = shape else {
                        return Err(Error::spec(format!(
                            "layer {i}: convolution cannot follow a flattened value"
                        )));
                    };
                    if kernel == 0 {
                        return Err(Error::spec(format!("layer {i}: conv kernel must be ≥ 1")));
                    }
                    if !(growth.is_finite() && growth > 0.0) {
                        return Err(Error::spec(format!(
                            "layer {i}: conv growth must be positive, got {growth}"
                        )));
                    }
                    if h < kernel || w < kernel {
                        return Err(Error::spec(format!(
                            "layer {i}: conv kernel {kernel} exceeds spatial extent {h}x{w}"
                        )));
                    }
                    let out_c = half_up(c as f64 * growth).max(1);
                    layers.push(PlannedLayer::Conv {
                        in_c: c,
                        out_c,
                        kernel,
                        in_h: h,
                        in_w: w,
                    });
                    shape = Shape::Spatial {
                        c: out_c,
                        h: h - kernel + 1,
                        w: w - kernel + 1,
                    };
                }
                LayerSpec::MaxPool { kernel } => {
                    let Shape::Spatial { c, h, w } = shape else {
                        return Err(Error::spec(format!(
                            "layer {i}: max pooling cannot follow a flattened value"
                        )));
                    };
                    if kernel == 0 {
                        return Err(Error::spec(format!("layer {i}: pool kernel must be ≥ 1")));
                    }
                    if h < kernel || w < kernel {
                        return Err(Error::spec(format!(
                            "layer {i}: pool kernel {kernel} exceeds spatial extent {h}x{w}"
                        )));
                    }
                    layers.push(PlannedLayer::MaxPool { kernel });
                    shape = Shape::Spatial {
                        c,
                        h: h / kernel,
                        w: w / kernel,
                    };
                }
            }
        }
        if let Shape::Spatial { .. } = shape {
            layers.push(PlannedLayer::Flatten);
            shape = Shape::Flat(shape.len());
        }
        layers.push(PlannedLayer::Dense {
            in_dim: shape.len(),
            out_dim: self.output_dim,
        });
        Ok(Plan { layers })
    }

    /// Total number of trainable parameters (weights + biases).
    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self
            .plan()?
            .layers
            .iter()
            .map(|l| match *l {
                PlannedLayer::Dense { in_dim, out_dim } => in_dim * out_dim + out_dim,
                PlannedLayer::Conv {
                    in_c,
                    out_c,
                    kernel,
                    ..
                } => out_c * in_c * kernel * kernel + out_c,
                _ => 0,
            })
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_stack_parameter_count() {
        // 768→100→100→100→50: 76,900 + 2·10,100 + 5,050 = 102,150.
        let spec = NetworkSpec::dense(768, &[100, 100, 100], 50);
        assert_eq!(spec.parameter_count().unwrap(), 102_150);
    }

    #[test]
    fn conv_channel_progression_rounds_half_up() {
        let spec = NetworkSpec::image_embedding(58, 100, 100);
        let plan = spec.plan().unwrap();
        let channels: Vec<usize> = plan
            .layers
            .iter()
            .filter_map(|l| match l {
                PlannedLayer::Conv { out_c, .. } => Some(*out_c),
                _ => None,
            })
            .collect();
        assert_eq!(channels, vec![5, 8, 12, 18, 27, 41]);
    }

    #[test]
    fn image_plan_shapes() {
        // 58×100 input: three pool stages end at 3×9 spatial, 41 channels.
        let spec = NetworkSpec::image_embedding(58, 100, 100);
        let plan = spec.plan().unwrap();
        let dense_dims: Vec<(usize, usize)> = plan
            .layers
            .iter()
            .filter_map(|l| match l {
                PlannedLayer::Dense { in_dim, out_dim } => Some((*in_dim, *out_dim)),
                _ => None,
            })
            .collect();
        assert_eq!(dense_dims, vec![(41 * 3 * 9, 100), (100, 100), (100, 100)]);
    }

    #[test]
    fn undersized_input_is_a_spec_error() {
        // 8×8 input: the pools and valid convs exhaust the spatial extent.
        let spec = NetworkSpec::image_embedding(8, 8, 10);
        assert!(matches!(spec.plan(), Err(Error::Spec(_))));
    }

    #[test]
    fn conv_after_dense_is_a_spec_error() {
        let spec = NetworkSpec {
            input: InputShape::Image {
                height: 16,
                width: 16,
                channels: 3,
            },
            layers: vec![
                LayerSpec::Dense { units: 10 },
                LayerSpec::Conv {
                    kernel: 3,
                    growth: 1.5,
                },
            ],
            output_dim: 4,
        };
        assert!(matches!(spec.plan(), Err(Error::Spec(_))));
    }

    #[test]
    fn head_is_always_linear_dense() {
        let spec = NetworkSpec::dense(10, &[], 4);
        let plan = spec.plan().unwrap();
        assert_eq!(
            plan.layers,
            vec![PlannedLayer::Dense {
                in_dim: 10,
                out_dim: 4
            }]
        );
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = NetworkSpec::image_embedding(58, 100, 100);
        let json = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
