//! Pulse encoding: maps a control pulse onto the fixed-shape input tensor
//! (L_max, 3) the network consumes.
//!
//! Channel 0 carries the detuning voltages scaled by the normalization
//! constant, channel 1 the gradient ΔB_Z in rad/ns, channel 2 the mask that
//! is 1 on active segments and 0 on padding. Rows past the pulse length are
//! all zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{ControlPulse, QubitConfig};
use crate::surrogate::network::SeqBatch;
use crate::surrogate::spec::INPUT_CHANNELS;

/// Input normalization constants; stored in every checkpoint so predictions
/// are reproducible independent of the config used at training time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderNorm {
    /// The ε channel is ε / eps_scale; by default the magnitude of the most
    /// negative sampled voltage, putting the channel roughly into [-1, 1].
    pub eps_scale: f64,
}

impl EncoderNorm {
    pub fn from_config(cfg: &QubitConfig) -> Self {
        EncoderNorm {
            eps_scale: cfg.eps_min_mv.abs().max(1e-9),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_scale.is_finite() && self.eps_scale > 0.0 {
            Ok(())
        } else {
            Err(Error::config("eps_scale must be finite and > 0"))
        }
    }
}

/// Encodes one pulse into `out` (length l_max·3, row-major over segments).
pub fn encode_into(
    pulse: &ControlPulse,
    l_max: usize,
    norm: &EncoderNorm,
    out: &mut [f64],
) -> Result<()> {
    if pulse.len() > l_max {
        return Err(Error::domain(format!(
            "pulse with {} segments exceeds encoder capacity {l_max}",
            pulse.len()
        )));
    }
    debug_assert_eq!(out.len(), l_max * INPUT_CHANNELS);
    out.iter_mut().for_each(|v| *v = 0.0);
    for (t, &eps) in pulse.epsilons.iter().enumerate() {
        out[t * INPUT_CHANNELS] = eps / norm.eps_scale;
        out[t * INPUT_CHANNELS + 1] = pulse.dbz;
        out[t * INPUT_CHANNELS + 2] = 1.0;
    }
    Ok(())
}

pub fn encode_input(pulse: &ControlPulse, l_max: usize, norm: &EncoderNorm) -> Result<Vec<f64>> {
    let mut out = vec![0.0; l_max * INPUT_CHANNELS];
    encode_into(pulse, l_max, norm, &mut out)?;
    Ok(out)
}

/// Encodes a batch of pulses into one (B, L_max, 3) tensor.
pub fn encode_batch<'a>(
    pulses: impl ExactSizeIterator<Item = &'a ControlPulse>,
    l_max: usize,
    norm: &EncoderNorm,
) -> Result<SeqBatch> {
    let b = pulses.len();
    let mut batch = SeqBatch::zeros(b, l_max, INPUT_CHANNELS);
    let stride = l_max * INPUT_CHANNELS;
    for (i, pulse) in pulses.enumerate() {
        encode_into(pulse, l_max, norm, &mut batch.data[i * stride..(i + 1) * stride])?;
    }
    Ok(batch)
}
