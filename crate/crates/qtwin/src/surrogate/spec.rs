//! Network architecture descriptions.
//!
//! A network is an ordered layer list operating on an encoded pulse tensor of
//! shape (L_max, 3). Sequence layers (padding, convolutions, batch norm) are
//! followed by a recurrent layer that reduces the sequence to its last hidden
//! state, a dense head, and an output clip to [0, 1]. The two outputs are the
//! predicted measurement mean and standard error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input channels: normalized detuning, gradient, and the active-segment mask.
pub const INPUT_CHANNELS: usize = 3;

/// Network outputs: (p̄, Δp).
pub const OUTPUTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Selu,
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Zero rows prepended and appended to the sequence.
    ZeroPad { pad: usize },
    /// 1-D convolution over time, length-preserving (zero padded at the
    /// edges for width > 1).
    Conv {
        width: usize,
        channels: usize,
        activation: Activation,
    },
    /// Per-channel batch normalization over (batch × time).
    BatchNorm,
    /// Recurrent layer consuming the full sequence; only the last hidden
    /// state is passed on.
    Lstm { units: usize },
    Dense {
        units: usize,
        activation: Activation,
    },
    /// Clamp every output into [0, 1].
    Clip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Maximum pulse length (segments) the encoder accepts.
    pub l_max: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Architecture used for the general device (83,562 trainable
    /// parameters at any `l_max`).
    pub fn general(l_max: usize) -> Self {
        use Activation::*;
        use LayerSpec::*;
        NetworkSpec {
            l_max,
            layers: vec![
                ZeroPad { pad: 1 },
                Conv { width: 3, channels: 16, activation: Selu },
                Conv { width: 3, channels: 32, activation: Selu },
                BatchNorm,
                Conv { width: 3, channels: 64, activation: Selu },
                Conv { width: 1, channels: 70, activation: Sine },
                BatchNorm,
                Conv { width: 1, channels: 50, activation: Sine },
                Conv { width: 1, channels: 20, activation: Sine },
                Lstm { units: 100 },
                Dense { units: 100, activation: Relu },
                Dense { units: 70, activation: Relu },
                Dense { units: 10, activation: Relu },
                Dense { units: 2, activation: Linear },
                Clip,
            ],
        }
    }

    /// Larger architecture used for the specific device, without batch
    /// normalization (195,962 trainable parameters).
    pub fn specific(l_max: usize) -> Self {
        use Activation::*;
        use LayerSpec::*;
        NetworkSpec {
            l_max,
            layers: vec![
                ZeroPad { pad: 1 },
                Conv { width: 3, channels: 30, activation: Selu },
                Conv { width: 3, channels: 50, activation: Selu },
                Conv { width: 3, channels: 80, activation: Selu },
                Conv { width: 1, channels: 90, activation: Sine },
                Conv { width: 1, channels: 80, activation: Sine },
                Conv { width: 1, channels: 50, activation: Sine },
                Lstm { units: 150 },
                Dense { units: 150, activation: Relu },
                Dense { units: 100, activation: Relu },
                Dense { units: 20, activation: Relu },
                Dense { units: 2, activation: Linear },
                Clip,
            ],
        }
    }

    /// Reduced architecture for desk-scale runs: three width-3 convolutions
    /// (8, 16, 32 kernels), a 48-unit recurrent layer, and a 48/24/8/2 head.
    pub fn reduced(l_max: usize) -> Self {
        use Activation::*;
        use LayerSpec::*;
        NetworkSpec {
            l_max,
            layers: vec![
                ZeroPad { pad: 1 },
                Conv { width: 3, channels: 8, activation: Selu },
                Conv { width: 3, channels: 16, activation: Selu },
                Conv { width: 3, channels: 32, activation: Selu },
                Lstm { units: 48 },
                Dense { units: 48, activation: Relu },
                Dense { units: 24, activation: Relu },
                Dense { units: 8, activation: Relu },
                Dense { units: 2, activation: Linear },
                Clip,
            ],
        }
    }

    pub fn by_name(name: &str, l_max: usize) -> Result<Self> {
        match name {
            "general" => Ok(Self::general(l_max)),
            "specific" => Ok(Self::specific(l_max)),
            "reduced" => Ok(Self::reduced(l_max)),
            other => Err(Error::config(format!(
                "unknown network preset '{other}' (expected general, specific, or reduced)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_max == 0 {
            return Err(Error::config("l_max must be >= 1"));
        }
        if self.layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        let mut seen_lstm = false;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::ZeroPad { pad } => {
                    if seen_lstm {
                        return Err(Error::config("padding must precede the recurrent layer"));
                    }
                    if *pad == 0 {
                        return Err(Error::config("zero_pad pad must be >= 1"));
                    }
                }
                LayerSpec::Conv { width, channels, .. } => {
                    if seen_lstm {
                        return Err(Error::config("convolutions must precede the recurrent layer"));
                    }
                    if *channels == 0 || (*width != 1 && *width != 3) {
                        return Err(Error::config(format!(
                            "layer {i}: conv width must be 1 or 3 with channels >= 1"
                        )));
                    }
                }
                LayerSpec::BatchNorm => {
                    if seen_lstm {
                        return Err(Error::config(
                            "batch norm after the recurrent layer is not supported",
                        ));
                    }
                }
                LayerSpec::Lstm { units } => {
                    if seen_lstm {
                        return Err(Error::config("only one recurrent layer is supported"));
                    }
                    if *units == 0 {
                        return Err(Error::config("lstm units must be >= 1"));
                    }
                    seen_lstm = true;
                }
                LayerSpec::Dense { units, .. } => {
                    if !seen_lstm {
                        return Err(Error::config("dense layers must follow the recurrent layer"));
                    }
                    if *units == 0 {
                        return Err(Error::config("dense units must be >= 1"));
                    }
                }
                LayerSpec::Clip => {
                    if i != self.layers.len() - 1 {
                        return Err(Error::config("clip must be the final layer"));
                    }
                }
            }
        }
        if !seen_lstm {
            return Err(Error::config("network needs a recurrent layer"));
        }
        match self.layers.last() {
            Some(LayerSpec::Clip) => {}
            _ => return Err(Error::config("network must end with a clip layer")),
        }
        if self.output_width() != OUTPUTS {
            return Err(Error::config(format!(
                "final dense layer must have {OUTPUTS} units, got {}",
                self.output_width()
            )));
        }
        Ok(())
    }

    fn output_width(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Dense { units, .. } => Some(*units),
                LayerSpec::Lstm { units } => Some(*units),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Trainable parameter count (batch-norm scale and shift included,
    /// running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        let mut width = INPUT_CHANNELS;
        let mut total = 0;
        for layer in &self.layers {
            match layer {
                LayerSpec::ZeroPad { .. } | LayerSpec::Clip => {}
                LayerSpec::Conv { width: w, channels, .. } => {
                    total += channels * (width * w + 1);
                    width = *channels;
                }
                LayerSpec::BatchNorm => total += 2 * width,
                LayerSpec::Lstm { units } => {
                    total += 4 * (units * (width + units) + units);
                    width = *units;
                }
                LayerSpec::Dense { units, .. } => {
                    total += units * (width + 1);
                    width = *units;
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        NetworkSpec::general(50).validate().unwrap();
        NetworkSpec::specific(70).validate().unwrap();
        NetworkSpec::reduced(50).validate().unwrap();
    }

    #[test]
    fn preset_parameter_counts() {
        assert_eq!(NetworkSpec::general(50).parameter_count(), 83_562);
        assert_eq!(NetworkSpec::specific(70).parameter_count(), 195_962);
    }

    #[test]
    fn rejects_missing_clip_or_wrong_head() {
        let mut spec = NetworkSpec::reduced(50);
        spec.layers.pop();
        assert!(spec.validate().is_err());

        let mut spec = NetworkSpec::reduced(50);
        let n = spec.layers.len();
        spec.layers[n - 2] = LayerSpec::Dense {
            units: 3,
            activation: Activation::Linear,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn rejects_dense_before_lstm() {
        let spec = NetworkSpec {
            l_max: 10,
            layers: vec![
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::Linear,
                },
                LayerSpec::Lstm { units: 4 },
                LayerSpec::Clip,
            ],
        };
        assert!(spec.validate().is_err());
    }
}
