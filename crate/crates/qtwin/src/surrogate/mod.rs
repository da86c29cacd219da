//! Differentiable surrogate of the qubit's measurement response.
//!
//! A fixed-topology sequence network maps an encoded control pulse to the
//! predicted measurement pair (p̄, Δp). Reverse-mode gradients are available
//! with respect to the trainable parameters (for training on probe data) and
//! with respect to the input voltages (for pulse optimization through the
//! frozen model).

pub mod checkpoint;
pub mod encode;
pub mod gradcheck;
pub mod metrics;
pub mod network;
pub mod spec;
pub mod train;

pub use checkpoint::Checkpoint;
pub use encode::{encode_batch, encode_input, EncoderNorm};
pub use metrics::{evaluate, length_generalization_report, LengthRow, Metrics};
pub use network::{BnState, Mode, Network, Parameters, SeqBatch, VecBatch};
pub use spec::{Activation, LayerSpec, NetworkSpec, INPUT_CHANNELS, OUTPUTS};
pub use train::{train, EpochStats, TrainConfig, TrainOutput};

use crate::error::Result;
use crate::qsim::ControlPulse;

/// A trained (or freshly initialized) model bundled with everything needed
/// to evaluate it: parameters, batch-norm running statistics, and the input
/// normalization. Inference is read-only and safe to share across threads.
pub struct Surrogate {
    pub network: Network,
    pub params: Parameters,
    pub bn: BnState,
    pub norm: EncoderNorm,
    /// Pulse-length window seen during training (for reporting only).
    pub training_window: (usize, usize),
}

impl Surrogate {
    pub fn l_max(&self) -> usize {
        self.network.spec.l_max
    }

    /// Predicted (p̄, Δp) per pulse, inference mode.
    pub fn predict(&self, pulses: &[ControlPulse]) -> Result<Vec<(f64, f64)>> {
        let batch = encode_batch(pulses.iter(), self.l_max(), &self.norm)?;
        let out = self
            .network
            .forward(&self.params, &self.bn, &batch, Mode::Eval, false)?
            .output;
        Ok((0..out.b).map(|i| (out.row(i)[0], out.row(i)[1])).collect())
    }

    /// Predictions plus the gradient of `Σ_i upstream_i · output_i` with
    /// respect to each pulse's raw voltages (mV). Gradients on padded
    /// segments are structurally zero and are not returned.
    pub fn predict_with_input_grad(
        &self,
        pulses: &[ControlPulse],
        upstream: &[(f64, f64)],
    ) -> Result<(Vec<(f64, f64)>, Vec<Vec<f64>>)> {
        assert_eq!(pulses.len(), upstream.len());
        let upstream = upstream.to_vec();
        self.predict_and_backprop(pulses, move |_| upstream)
    }

    /// Like [`Self::predict_with_input_grad`], but the upstream gradient is
    /// computed from the predictions themselves (one forward pass instead of
    /// two when the loss depends on the outputs).
    pub fn predict_and_backprop<F>(
        &self,
        pulses: &[ControlPulse],
        upstream_from: F,
    ) -> Result<(Vec<(f64, f64)>, Vec<Vec<f64>>)>
    where
        F: FnOnce(&[(f64, f64)]) -> Vec<(f64, f64)>,
    {
        let batch = encode_batch(pulses.iter(), self.l_max(), &self.norm)?;
        let pass = self
            .network
            .forward(&self.params, &self.bn, &batch, Mode::Eval, true)?;
        let preds: Vec<(f64, f64)> = (0..pass.output.b)
            .map(|i| (pass.output.row(i)[0], pass.output.row(i)[1]))
            .collect();
        let upstream = upstream_from(&preds);
        assert_eq!(upstream.len(), pulses.len());
        let mut dout = VecBatch::zeros(pulses.len(), OUTPUTS);
        for (i, &(dp, ddp)) in upstream.iter().enumerate() {
            dout.row_mut(i)[0] = dp;
            dout.row_mut(i)[1] = ddp;
        }
        let grads = self.network.backward(
            &self.params,
            pass.trace.as_ref().expect("trace requested"),
            &dout,
            false,
            true,
        );
        let dinput = grads.input.expect("input gradient requested");
        // Chain through the encoder: channel 0 is ε/eps_scale, so
        // d/dε = d/d(channel0) / eps_scale. Padded rows are dropped.
        let per_pulse = pulses
            .iter()
            .enumerate()
            .map(|(i, pulse)| {
                (0..pulse.len())
                    .map(|t| dinput.row(i, t)[0] / self.norm.eps_scale)
                    .collect()
            })
            .collect();
        Ok((preds, per_pulse))
    }
}

/// Weighted mean absolute error over both outputs:
/// L = (1/B) · Σ_b w_b · ½ (|p̄_b − t̄_b| + |Δp_b − Δt_b|).
///
/// The gradient is linear in the weights; the subgradient at zero residual
/// is taken as 0.
pub fn weighted_mae(pred: &VecBatch, target: &VecBatch, weights: &[f64]) -> f64 {
    debug_assert_eq!(pred.b, target.b);
    debug_assert_eq!(pred.b, weights.len());
    let mut loss = 0.0;
    for b in 0..pred.b {
        let e: f64 = pred
            .row(b)
            .iter()
            .zip(target.row(b))
            .map(|(p, t)| (p - t).abs())
            .sum();
        loss += weights[b] * e / OUTPUTS as f64;
    }
    loss / pred.b as f64
}

/// Loss value plus its gradient with respect to the predictions.
pub fn weighted_mae_grad(
    pred: &VecBatch,
    target: &VecBatch,
    weights: &[f64],
) -> (f64, VecBatch) {
    let mut dout = VecBatch::zeros(pred.b, pred.c);
    let scale = 1.0 / (pred.b as f64 * OUTPUTS as f64);
    for b in 0..pred.b {
        for j in 0..pred.c {
            let r = pred.row(b)[j] - target.row(b)[j];
            dout.row_mut(b)[j] = weights[b] * scale * if r > 0.0 { 1.0 } else if r < 0.0 { -1.0 } else { 0.0 };
        }
    }
    (weighted_mae(pred, target, weights), dout)
}

/// Plain (unweighted) MAE, used for validation tracking.
pub fn unweighted_mae(pred: &VecBatch, target: &VecBatch) -> f64 {
    let ones = vec![1.0; pred.b];
    weighted_mae(pred, target, &ones)
}
