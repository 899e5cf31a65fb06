use serde::{Deserialize, Serialize};

use super::NnError;

/// One layer of a feed-forward network.
///
/// Activation shapes are `[features]` for vectors and `[channels, height, width]`
/// for feature maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        size: usize,
    },
    Flatten,
    /// Marks the logits layer; softmax is applied by the losses, not in the forward pass.
    SoftmaxOutput,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    /// Output shape for a given input shape, or a description of why they are incompatible.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err("dense layer with zero units".into());
                }
                if input.len() != 1 {
                    return Err(format!("dense layer needs a flat input, got {input:?}"));
                }
                Ok(vec![units])
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return Err("conv2d with zero filters, kernel or stride".into());
                }
                let [_, h, w] = chw(input)?;
                let (hp, wp) = (h + 2 * padding, w + 2 * padding);
                if hp < kernel || wp < kernel {
                    return Err(format!("kernel {kernel} larger than padded input {input:?}"));
                }
                Ok(vec![filters, (hp - kernel) / stride + 1, (wp - kernel) / stride + 1])
            }
            LayerSpec::MaxPool2d { size } => {
                let [c, h, w] = chw(input)?;
                if size == 0 || h < size || w < size {
                    return Err(format!("pool size {size} does not fit input {input:?}"));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::SoftmaxOutput => {
                if input.len() != 1 || input[0] < 2 {
                    return Err(format!("output layer needs at least two logits, got {input:?}"));
                }
                Ok(input.to_vec())
            }
        }
    }
}

fn chw(shape: &[usize]) -> Result<[usize; 3], String> {
    match shape {
        &[c, h, w] => Ok([c, h, w]),
        _ => Err(format!("expected a [channels, height, width] input, got {shape:?}")),
    }
}

/// Validates a layer stack against an input shape and returns every layer's output shape.
pub fn infer_shapes(input: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>, NnError> {
    if input.is_empty() || input.contains(&0) {
        return Err(NnError::InvalidSpec(format!("bad input shape {input:?}")));
    }
    let outputs = layers
        .iter()
        .filter(|l| matches!(l, LayerSpec::SoftmaxOutput))
        .count();
    if outputs != 1 || layers.last() != Some(&LayerSpec::SoftmaxOutput) {
        return Err(NnError::InvalidSpec(
            "exactly one softmax-output layer is required, placed last".into(),
        ));
    }
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        current = layer
            .output_shape(&current)
            .map_err(|msg| NnError::InvalidSpec(format!("layer {i}: {msg}")))?;
        shapes.push(current.clone());
    }
    Ok(shapes)
}

/// Indices of layers whose outputs form an activation trace: the end of every
/// nonlinearity/pool block plus the logits layer.
pub fn capture_points(layers: &[LayerSpec]) -> Vec<usize> {
    let is_block = |l: &LayerSpec| matches!(l, LayerSpec::Relu | LayerSpec::MaxPool2d { .. });
    let mut points = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        if is_block(layer) && !layers.get(i + 1).is_some_and(is_block) {
            points.push(i);
        }
    }
    // logits are the input of the output layer
    if layers.len() >= 2 {
        points.push(layers.len() - 2);
    }
    points.dedup();
    points
}

/// Named architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    MnistFc,
    MnistConv,
    CifarVgg,
}

impl Architecture {
    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            Architecture::MnistFc | Architecture::MnistConv => vec![1, 28, 28],
            Architecture::CifarVgg => vec![3, 32, 32],
        }
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        use LayerSpec::*;
        let conv = |filters| Conv2d {
            filters,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        match self {
            Architecture::MnistFc => vec![
                Flatten,
                Dense { units: 128 },
                Relu,
                Dense { units: 128 },
                Relu,
                Dense { units: 10 },
                SoftmaxOutput,
            ],
            // max-pool and ReLU commute, so pooling first halves the ReLU work
            Architecture::MnistConv => vec![
                conv(16),
                MaxPool2d { size: 2 },
                Relu,
                conv(16),
                MaxPool2d { size: 2 },
                Relu,
                Flatten,
                Dense { units: 10 },
                SoftmaxOutput,
            ],
            Architecture::CifarVgg => {
                let mut layers = Vec::new();
                for filters in [32, 64, 128] {
                    layers.extend([conv(filters), Relu, conv(filters), Relu, MaxPool2d { size: 2 }]);
                }
                layers.extend([Flatten, Dense { units: 256 }, Relu, Dense { units: 10 }, SoftmaxOutput]);
                layers
            }
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Architecture::MnistFc => "mnist-fc",
            Architecture::MnistConv => "mnist-conv",
            Architecture::CifarVgg => "cifar-vgg",
        }
    }
}
