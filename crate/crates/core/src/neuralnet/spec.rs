use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{WINDOW_AXES, WINDOW_LEN};

/// One layer of a network description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Layer {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
    },
    Relu,
    MaxPool1d {
        width: usize,
    },
    GlobalAveragePool,
    /// Fully connected; flattens a `channels × length` input channel-major.
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Sigmoid,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Layer::Conv1d { in_channels, out_channels, kernel_size, stride } => {
                write!(f, "conv1d({in_channels}->{out_channels}, k={kernel_size}, s={stride})")
            }
            Layer::Relu => f.write_str("relu"),
            Layer::MaxPool1d { width } => write!(f, "maxpool({width})"),
            Layer::GlobalAveragePool => f.write_str("global_avg_pool"),
            Layer::Dense { in_dim, out_dim } => write!(f, "dense({in_dim}->{out_dim})"),
            Layer::Sigmoid => f.write_str("sigmoid"),
        }
    }
}

impl Layer {
    /// `(weight_len, bias_len)` for parameterized layers.
    pub fn param_sizes(&self) -> Option<(usize, usize)> {
        match *self {
            Layer::Conv1d { in_channels, out_channels, kernel_size, .. } => {
                Some((out_channels * in_channels * kernel_size, out_channels))
            }
            Layer::Dense { in_dim, out_dim } => Some((in_dim * out_dim, out_dim)),
            _ => None,
        }
    }

    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            Layer::Conv1d { in_channels, kernel_size, .. } => Some(in_channels * kernel_size),
            Layer::Dense { in_dim, .. } => Some(in_dim),
            _ => None,
        }
    }
}

/// Activation shape for a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub length: usize,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.channels, self.length)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("{from} -> layer {index} ({layer}): {detail}")]
    Incompatible {
        index: usize,
        from: String,
        layer: String,
        detail: String,
    },
    #[error("network must end with a single sigmoid over one output")]
    MissingSigmoid,
    #[error("unparseable layer `{0}`")]
    Parse(String),
}

/// Ordered layer list plus the input shape it expects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_length: usize,
    pub layers: Vec<Layer>,
}

/// Offsets of one parameterized layer inside the flat parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    pub weight_offset: usize,
    pub weight_len: usize,
    pub bias_offset: usize,
    pub bias_len: usize,
}

impl NetworkSpec {
    /// Default classifier for 3×600 windows:
    /// conv(3→32,k7,s2) → relu → maxpool(2) → conv(32→64,k5,s2) → relu → gap → dense(64→1) → sigmoid.
    pub fn reference() -> Self {
        NetworkSpec {
            input_channels: WINDOW_AXES,
            input_length: WINDOW_LEN,
            layers: vec![
                Layer::Conv1d { in_channels: 3, out_channels: 32, kernel_size: 7, stride: 2 },
                Layer::Relu,
                Layer::MaxPool1d { width: 2 },
                Layer::Conv1d { in_channels: 32, out_channels: 64, kernel_size: 5, stride: 2 },
                Layer::Relu,
                Layer::GlobalAveragePool,
                Layer::Dense { in_dim: 64, out_dim: 1 },
                Layer::Sigmoid,
            ],
        }
    }

    pub fn input_shape(&self) -> Shape {
        Shape { channels: self.input_channels, length: self.input_length }
    }

    /// Output shape of every layer, checking that adjacent layers fit.
    pub fn shapes(&self) -> Result<Vec<Shape>, SpecError> {
        let mut shape = self.input_shape();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            let incompatible = |detail: String| SpecError::Incompatible {
                index,
                from: match index {
                    0 => format!("input ({shape})"),
                    i => format!("layer {} ({})", i - 1, self.layers[i - 1]),
                },
                layer: layer.to_string(),
                detail,
            };
            if shape.channels == 0 || shape.length == 0 {
                return Err(incompatible(format!("empty input shape {shape}")));
            }
            shape = match *layer {
                Layer::Conv1d { in_channels, out_channels, kernel_size, stride } => {
                    if in_channels != shape.channels {
                        return Err(incompatible(format!(
                            "expected {in_channels} input channels, got {}",
                            shape.channels
                        )));
                    }
                    if kernel_size == 0 || stride == 0 || out_channels == 0 {
                        return Err(incompatible("kernel, stride and channels must be positive".into()));
                    }
                    if kernel_size > shape.length {
                        return Err(incompatible(format!(
                            "kernel {kernel_size} longer than input length {}",
                            shape.length
                        )));
                    }
                    Shape {
                        channels: out_channels,
                        length: (shape.length - kernel_size) / stride + 1,
                    }
                }
                Layer::Relu => shape,
                Layer::MaxPool1d { width } => {
                    if width == 0 || width > shape.length {
                        return Err(incompatible(format!(
                            "pool width {width} invalid for input length {}",
                            shape.length
                        )));
                    }
                    Shape { channels: shape.channels, length: shape.length / width }
                }
                Layer::GlobalAveragePool => Shape { channels: shape.channels, length: 1 },
                Layer::Dense { in_dim, out_dim } => {
                    if in_dim != shape.channels * shape.length {
                        return Err(incompatible(format!(
                            "expected {in_dim} inputs, got {} ({shape})",
                            shape.channels * shape.length
                        )));
                    }
                    if out_dim == 0 {
                        return Err(incompatible("output dimension must be positive".into()));
                    }
                    Shape { channels: out_dim, length: 1 }
                }
                Layer::Sigmoid => {
                    if index + 1 != self.layers.len() {
                        return Err(incompatible("sigmoid must be the final layer".into()));
                    }
                    if shape != (Shape { channels: 1, length: 1 }) {
                        return Err(incompatible(format!("sigmoid needs a 1x1 input, got {shape}")));
                    }
                    shape
                }
            };
            shapes.push(shape);
        }
        if self.layers.last() != Some(&Layer::Sigmoid) {
            return Err(SpecError::MissingSigmoid);
        }
        Ok(shapes)
    }

    /// Parameter slots in declaration order (`None` for parameter-free layers).
    pub fn param_layout(&self) -> Vec<Option<ParamSlot>> {
        let mut offset = 0;
        self.layers
            .iter()
            .map(|layer| {
                layer.param_sizes().map(|(weight_len, bias_len)| {
                    let slot = ParamSlot {
                        weight_offset: offset,
                        weight_len,
                        bias_offset: offset + weight_len,
                        bias_len,
                    };
                    offset += weight_len + bias_len;
                    slot
                })
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::param_sizes)
            .map(|(w, b)| w + b)
            .sum()
    }

    /// Compact text form, e.g. `conv1d:3:32:7:2, relu, maxpool:2, gap, dense:32:1, sigmoid`.
    pub fn to_compact(&self) -> String {
        self.layers
            .iter()
            .map(|l| match *l {
                Layer::Conv1d { in_channels, out_channels, kernel_size, stride } => {
                    format!("conv1d:{in_channels}:{out_channels}:{kernel_size}:{stride}")
                }
                Layer::Relu => "relu".into(),
                Layer::MaxPool1d { width } => format!("maxpool:{width}"),
                Layer::GlobalAveragePool => "gap".into(),
                Layer::Dense { in_dim, out_dim } => format!("dense:{in_dim}:{out_dim}"),
                Layer::Sigmoid => "sigmoid".into(),
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Parses the form produced by [`NetworkSpec::to_compact`] for the given input shape.
    pub fn from_compact(text: &str, input_channels: usize, input_length: usize) -> Result<Self, SpecError> {
        let layers = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_layer)
            .collect::<Result<Vec<_>, _>>()?;
        let spec = NetworkSpec { input_channels, input_length, layers };
        spec.shapes()?;
        Ok(spec)
    }
}

fn parse_layer(token: &str) -> Result<Layer, SpecError> {
    let err = || SpecError::Parse(token.to_string());
    let mut parts = token.split(':');
    let name = parts.next().ok_or_else(err)?.to_lowercase();
    let args = parts
        .map(|p| p.trim().parse::<usize>().map_err(|_| err()))
        .collect::<Result<Vec<_>, _>>()?;
    let layer = match (name.as_str(), args.as_slice()) {
        ("conv1d", &[i, o, k, s]) => Layer::Conv1d { in_channels: i, out_channels: o, kernel_size: k, stride: s },
        ("relu", []) => Layer::Relu,
        ("maxpool", &[w]) => Layer::MaxPool1d { width: w },
        ("gap", []) => Layer::GlobalAveragePool,
        ("dense", &[i, o]) => Layer::Dense { in_dim: i, out_dim: o },
        ("sigmoid", []) => Layer::Sigmoid,
        _ => return Err(err()),
    };
    Ok(layer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shapes() {
        let shapes = NetworkSpec::reference().shapes().unwrap();
        let lengths: Vec<usize> = shapes.iter().map(|s| s.length).collect();
        assert_eq!(lengths, vec![297, 297, 148, 72, 72, 1, 1, 1]);
        assert_eq!(shapes[3].channels, 64);
    }

    #[test]
    fn shape_algebra() {
        for (len, k, s) in [(600, 7, 2), (20, 3, 1), (20, 5, 3), (9, 9, 4)] {
            let spec = NetworkSpec {
                input_channels: 3,
                input_length: len,
                layers: vec![
                    Layer::Conv1d { in_channels: 3, out_channels: 2, kernel_size: k, stride: s },
                    Layer::MaxPool1d { width: 1 },
                    Layer::GlobalAveragePool,
                    Layer::Dense { in_dim: 2, out_dim: 1 },
                    Layer::Sigmoid,
                ],
            };
            assert_eq!(spec.shapes().unwrap()[0].length, (len - k) / s + 1);
        }
    }

    #[test]
    fn incompatible_pair_is_named() {
        let mut spec = NetworkSpec::reference();
        spec.layers[3] = Layer::Conv1d { in_channels: 16, out_channels: 64, kernel_size: 5, stride: 2 };
        let err = spec.shapes().unwrap_err().to_string();
        assert!(err.contains("layer 2 (maxpool(2))"), "{err}");
        assert!(err.contains("layer 3 (conv1d(16->64"), "{err}");

        let mut spec = NetworkSpec::reference();
        spec.layers.pop();
        assert_eq!(spec.shapes(), Err(SpecError::MissingSigmoid));
    }

    #[test]
    fn compact_round_trip() {
        let spec = NetworkSpec::reference();
        let text = spec.to_compact();
        assert_eq!(NetworkSpec::from_compact(&text, 3, 600).unwrap(), spec);
        assert!(NetworkSpec::from_compact("conv1d:3:4, sigmoid", 3, 600).is_err());
    }

    #[test]
    fn layout_is_contiguous() {
        let spec = NetworkSpec::reference();
        let slots: Vec<ParamSlot> = spec.param_layout().into_iter().flatten().collect();
        assert_eq!(slots[0].weight_len, 32 * 3 * 7);
        assert_eq!(slots[1].weight_offset, 32 * 3 * 7 + 32);
        let last = slots.last().unwrap();
        assert_eq!(last.bias_offset + last.bias_len, spec.param_count());
    }
}
