//! Gate-set pulse optimization through the frozen surrogate.
//!
//! K candidate gate sets are optimized in parallel by stochastic gradient
//! descent on the calibration loss: for every candidate, all syndrome
//! sequences are concatenated from its gate pulses, the surrogate predicts
//! (p̄, Δp) per sequence, and the loss
//!
//!   L = (1/N_seq)·Σ_i |p̄_i − R⁰_i|^e + γ·(1/N_seq)·Σ_i Δp_i²
//!
//! is differentiated back to the per-segment gate voltages. A staged schedule
//! controls iteration counts, learning rates, the maximal sequence length,
//! the loss exponent, mini-batch gradient mixing, and the Δp regularization.
//! Finished candidates are scored against the ground-truth simulator.

pub mod report;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsc::{concat_pulses, GateLabel, GateSet, HoldSpec, SyndromeSet};
use crate::qsim::{
    entanglement_fidelity, global_z_correct, propagate, ControlPulse, NoiseRealization,
    QubitConfig, TransferKernel, Unitary2,
};
use crate::rng::{substream, StreamKind};
use crate::surrogate::Surrogate;

/// One stage of the optimization schedule. In config files later stages may
/// omit fields to inherit them from the previous stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Only syndrome sequences of at most this many gates participate.
    pub max_seq_len: usize,
    /// Calibration-loss exponent, 2 or 4.
    pub loss_exponent: u32,
    /// Mini-batch size K_b for gradient mixing.
    pub minibatch: usize,
    /// Weight of the Δp² regularization.
    pub gamma: f64,
    /// Mixing factor toward the mini-batch mean gradient.
    pub delta: f64,
}

/// Stage entry as written in config files: absent fields inherit from the
/// previous stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartialStage {
    pub iterations: usize,
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seq_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_exponent: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minibatch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Hold-segment protocol for devices that need settle time between gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldConfig {
    /// Fixed segments at the end of every gate pulse.
    pub per_gate_segments: usize,
    /// Fixed segments appended after each full sequence.
    pub tail_segments: usize,
    pub voltage_mv: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeConfig {
    /// Number of gate-set candidates K.
    pub n_gatesets: usize,
    /// Free (optimizable) segments per gate pulse.
    pub gate_segments: usize,
    /// Longest syndrome sequence in the full set.
    pub max_syndrome_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<HoldConfig>,
    pub stages: Vec<PartialStage>,
    /// Voltage bounds for the optimized segments; defaults to the qubit
    /// config range when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage_bounds: Option<(f64, f64)>,
    /// Gradient value written into candidate pulses; defaults to the value
    /// assumed when probing the device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_dbz: Option<f64>,
    /// Monte Carlo samples for the final noisy scoring.
    pub eval_noise_samples: usize,
    pub seed: u64,
}

impl OptimizeConfig {
    /// The full published schedule: 256 candidates, six stages from
    /// (6000 iterations, lr 0.5, L_S 3, exponent 2) down to
    /// (10000 iterations, lr 0.03, exponent 2, K_b 8, δ 0.05, γ 2).
    pub fn paper(seed: u64) -> Self {
        OptimizeConfig {
            n_gatesets: 256,
            gate_segments: 12,
            max_syndrome_len: 4,
            hold: None,
            stages: paper_stages(1),
            voltage_bounds: None,
            pulse_dbz: None,
            eval_noise_samples: 60,
            seed,
        }
    }

    /// Desk-scale schedule: the same stage structure with iteration counts
    /// divided by 10 and 32 candidates.
    pub fn desk(seed: u64) -> Self {
        OptimizeConfig {
            n_gatesets: 32,
            stages: paper_stages(10),
            ..Self::paper(seed)
        }
    }

    /// Resolves stage inheritance. The first stage must be fully specified
    /// by the defaults it starts from: L_S = max_syndrome_len, exponent 2,
    /// K_b 1, γ 0, δ 0.
    pub fn resolve_stages(&self) -> Result<Vec<Stage>> {
        let mut resolved = Vec::with_capacity(self.stages.len());
        let mut current = Stage {
            iterations: 0,
            learning_rate: 0.0,
            max_seq_len: self.max_syndrome_len,
            loss_exponent: 2,
            minibatch: 1,
            gamma: 0.0,
            delta: 0.0,
        };
        for partial in &self.stages {
            current.iterations = partial.iterations;
            current.learning_rate = partial.learning_rate;
            if let Some(v) = partial.max_seq_len {
                current.max_seq_len = v;
            }
            if let Some(v) = partial.loss_exponent {
                current.loss_exponent = v;
            }
            if let Some(v) = partial.minibatch {
                current.minibatch = v;
            }
            if let Some(v) = partial.gamma {
                current.gamma = v;
            }
            if let Some(v) = partial.delta {
                current.delta = v;
            }
            resolved.push(current);
        }
        self.validate_stages(&resolved)?;
        Ok(resolved)
    }

    fn validate_stages(&self, stages: &[Stage]) -> Result<()> {
        if stages.is_empty() {
            return Err(Error::config("optimization needs at least one stage"));
        }
        if self.n_gatesets == 0 || self.gate_segments == 0 {
            return Err(Error::config("n_gatesets and gate_segments must be >= 1"));
        }
        if self.eval_noise_samples == 0 {
            return Err(Error::config("eval_noise_samples must be >= 1"));
        }
        for (i, s) in stages.iter().enumerate() {
            if s.minibatch == 0 || self.n_gatesets % s.minibatch != 0 {
                return Err(Error::config(format!(
                    "stage {i}: minibatch {} must divide n_gatesets {}",
                    s.minibatch, self.n_gatesets
                )));
            }
            if s.loss_exponent != 2 && s.loss_exponent != 4 {
                return Err(Error::config(format!("stage {i}: loss exponent must be 2 or 4")));
            }
            if !(0.0..=1.0).contains(&s.delta) {
                return Err(Error::config(format!("stage {i}: delta must be in [0, 1]")));
            }
            if s.gamma < 0.0 || s.learning_rate <= 0.0 {
                return Err(Error::config(format!(
                    "stage {i}: gamma must be >= 0 and learning_rate > 0"
                )));
            }
            if s.max_seq_len == 0 || s.max_seq_len > self.max_syndrome_len {
                return Err(Error::config(format!(
                    "stage {i}: max_seq_len must be in 1..={}",
                    self.max_syndrome_len
                )));
            }
        }
        Ok(())
    }

    pub fn hold_spec(&self) -> HoldSpec {
        match &self.hold {
            Some(h) => HoldSpec {
                tail_segments: h.tail_segments,
                voltage_mv: h.voltage_mv,
            },
            None => HoldSpec::none(),
        }
    }

    /// Total stored segments per gate pulse (free plus per-gate hold).
    pub fn pulse_segments(&self) -> usize {
        self.gate_segments + self.hold.as_ref().map_or(0, |h| h.per_gate_segments)
    }
}

fn paper_stages(divisor: usize) -> Vec<PartialStage> {
    let it = |n: usize| n / divisor;
    vec![
        PartialStage {
            iterations: it(6000),
            learning_rate: 0.5,
            max_seq_len: Some(3),
            loss_exponent: Some(2),
            minibatch: Some(1),
            gamma: Some(0.0),
            delta: Some(0.0),
        },
        PartialStage {
            iterations: it(6000),
            learning_rate: 0.5,
            max_seq_len: Some(4),
            loss_exponent: Some(4),
            minibatch: None,
            gamma: None,
            delta: None,
        },
        PartialStage {
            iterations: it(22500),
            learning_rate: 0.05,
            max_seq_len: None,
            loss_exponent: Some(2),
            minibatch: Some(8),
            gamma: None,
            delta: Some(0.05),
        },
        PartialStage {
            iterations: it(10000),
            learning_rate: 0.03,
            max_seq_len: None,
            loss_exponent: None,
            minibatch: None,
            gamma: None,
            delta: None,
        },
        PartialStage {
            iterations: it(22500),
            learning_rate: 0.04,
            max_seq_len: None,
            loss_exponent: None,
            minibatch: None,
            gamma: Some(2.0),
            delta: None,
        },
        PartialStage {
            iterations: it(10000),
            learning_rate: 0.03,
            max_seq_len: None,
            loss_exponent: None,
            minibatch: None,
            gamma: None,
            delta: None,
        },
    ]
}

/// Ground-truth scoring of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEval {
    /// Global-Z gauge angle removed before scoring.
    pub theta: f64,
    /// Noise-free infidelity per gate (X, Y) after gauge correction.
    pub coherent: [f64; 2],
    /// Monte Carlo mean infidelity per gate under the device noise.
    pub incoherent: [f64; 2],
    /// Standard error of the incoherent means.
    pub incoherent_stderr: [f64; 2],
}

impl CandidateEval {
    pub fn coherent_mean(&self) -> f64 {
        0.5 * (self.coherent[0] + self.coherent[1])
    }

    pub fn incoherent_mean(&self) -> f64 {
        0.5 * (self.incoherent[0] + self.incoherent[1])
    }
}

/// One optimized gate-set candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateSetCandidate {
    pub index: usize,
    pub gate_set: GateSet,
    pub initial_gate_set: GateSet,
    /// Final calibration loss (exponent 2, full syndrome set, surrogate).
    pub gsc_loss: f64,
    /// Calibration loss of the random initialization.
    pub initial_gsc_loss: f64,
    /// Per-iteration optimization loss L = L_GSC + γ·L_std.
    pub history: Vec<f64>,
    /// Set when the optimization hit a non-finite loss; the candidate stops
    /// updating but stays in the batch.
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<CandidateEval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_eval: Option<CandidateEval>,
}

/// Gauge-corrected scoring of a realized gate pair against the ideal
/// {X_π/2, Y_π/2}: removes the global-Z rotation, then reports the
/// entanglement infidelity per gate.
pub fn score_gate_pair(x: &Unitary2, y: &Unitary2) -> (f64, [f64; 2]) {
    let (theta, corrected) = global_z_correct(x, y);
    let infid = [
        (1.0 - entanglement_fidelity(&GateLabel::XHalf.ideal_unitary(), &corrected[0]))
            .clamp(0.0, 1.0),
        (1.0 - entanglement_fidelity(&GateLabel::YHalf.ideal_unitary(), &corrected[1]))
            .clamp(0.0, 1.0),
    ];
    (theta, infid)
}

/// Scores a gate set against the ground-truth simulator: coherent infidelity
/// from the noise-free propagation (with the gauge correction θ estimated
/// there), incoherent infidelity averaged over `n_noise` Monte Carlo noise
/// realizations with the same θ applied.
pub fn evaluate_candidate(
    gate_set: &GateSet,
    cfg: &QubitConfig,
    n_noise: usize,
    seed: u64,
    candidate_id: u64,
) -> Result<CandidateEval> {
    let kernel = TransferKernel::build(&cfg.kernel)?;
    // The device's noise-free gradient is its configured mean, independent of
    // what the pulses assumed.
    let quiet = |pulse: &ControlPulse| {
        propagate(
            pulse,
            &cfg.exchange,
            &kernel,
            &NoiseRealization::quiet(cfg.noise.dbz_mean, pulse.len()),
        )
    };
    let x_u = quiet(&gate_set.x_pulse)?;
    let y_u = quiet(&gate_set.y_pulse)?;
    let (theta, coherent) = score_gate_pair(&x_u, &y_u);

    if !cfg.noise.enabled {
        return Ok(CandidateEval {
            theta,
            coherent,
            incoherent: coherent,
            incoherent_stderr: [0.0, 0.0],
        });
    }

    let pre = Unitary2::rz(theta);
    let post = Unitary2::rz(-theta);
    let mut incoherent = [0.0; 2];
    let mut incoherent_stderr = [0.0; 2];
    for (gi, (pulse, ideal)) in [
        (&gate_set.x_pulse, GateLabel::XHalf.ideal_unitary()),
        (&gate_set.y_pulse, GateLabel::YHalf.ideal_unitary()),
    ]
    .into_iter()
    .enumerate()
    {
        let mut infids = Vec::with_capacity(n_noise);
        for n in 0..n_noise {
            let mut rng = substream(
                seed,
                StreamKind::CandidateEval,
                candidate_id * 2 + gi as u64,
                n as u64,
            );
            let realization =
                NoiseRealization::draw(&cfg.noise, cfg.noise.dbz_mean, pulse.len(), &mut rng);
            let u = propagate(pulse, &cfg.exchange, &kernel, &realization)?;
            let corrected = pre.mul(&u).mul(&post);
            infids.push((1.0 - entanglement_fidelity(&ideal, &corrected)).clamp(0.0, 1.0));
        }
        let mean = infids.iter().sum::<f64>() / n_noise as f64;
        let var = infids.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (n_noise as f64 - 1.0).max(1.0);
        incoherent[gi] = mean;
        incoherent_stderr[gi] = (var / n_noise as f64).sqrt();
    }

    Ok(CandidateEval {
        theta,
        coherent,
        incoherent,
        incoherent_stderr,
    })
}

/// Internal per-candidate optimization state.
struct CandidateState {
    gate_set: GateSet,
    history: Vec<f64>,
    failed: bool,
}

/// Per-gate voltage gradients for one candidate.
type GateGrads = [Vec<f64>; 2];

/// Runs the staged optimization for all K candidates and returns them with
/// surrogate losses and histories filled in (ground-truth scoring is done
/// separately by [`evaluate_candidate`]).
pub fn optimize_gatesets(
    model: &Surrogate,
    syndromes: &SyndromeSet,
    cfg: &OptimizeConfig,
    bounds: (f64, f64),
    pulse_dbz: f64,
) -> Result<Vec<GateSetCandidate>> {
    let stages = cfg.resolve_stages()?;
    let hold = cfg.hold_spec();
    let pulse_len = cfg.pulse_segments();
    let (lo, hi) = cfg.voltage_bounds.unwrap_or(bounds);
    if !(lo < hi) {
        return Err(Error::config("voltage bounds must satisfy lo < hi"));
    }

    // Capacity check against the longest sequence up front.
    let longest = cfg.max_syndrome_len * pulse_len + hold.tail_segments;
    if longest > model.l_max() {
        return Err(Error::domain(format!(
            "longest syndrome pulse ({longest} segments) exceeds surrogate capacity {}",
            model.l_max()
        )));
    }

    // Random initialization; hold segments pinned to the hold voltage.
    let mut states: Vec<CandidateState> = (0..cfg.n_gatesets)
        .map(|n| {
            let mut rng = substream(cfg.seed, StreamKind::GateSetInit, n as u64, 0);
            let mut draw_pulse = || {
                let mut eps: Vec<f64> = (0..pulse_len).map(|_| rng.gen_range(lo..=hi)).collect();
                if let Some(h) = &cfg.hold {
                    for v in &mut eps[cfg.gate_segments..] {
                        *v = h.voltage_mv;
                    }
                }
                ControlPulse::new(eps, pulse_dbz).expect("valid pulse")
            };
            CandidateState {
                gate_set: GateSet {
                    x_pulse: draw_pulse(),
                    y_pulse: draw_pulse(),
                },
                history: Vec::new(),
                failed: false,
            }
        })
        .collect();

    let initial_losses: Vec<f64> = states
        .iter()
        .map(|s| surrogate_gsc_loss(model, &s.gate_set, syndromes, &hold, 2, 0.0).map(|(l, _)| l))
        .collect::<Result<_>>()?;
    let initial_sets: Vec<GateSet> = states.iter().map(|s| s.gate_set.clone()).collect();

    for stage in &stages {
        let subset = syndromes.truncated(stage.max_seq_len);
        for _iter in 0..stage.iterations {
            for batch_start in (0..cfg.n_gatesets).step_by(stage.minibatch) {
                let batch = &mut states[batch_start..batch_start + stage.minibatch];

                // Loss and per-gate gradients, candidates independent.
                let results: Vec<Option<(f64, GateGrads)>> = batch
                    .par_iter()
                    .map(|state| {
                        if state.failed {
                            return Ok(None);
                        }
                        candidate_loss_and_grads(model, state, &subset, &hold, stage, cfg)
                    })
                    .collect::<Result<_>>()?;

                // Mini-batch mean gradient, folded in candidate order.
                let mut mean: Option<GateGrads> = None;
                let mut live = 0usize;
                if stage.delta > 0.0 {
                    for r in results.iter().flatten() {
                        live += 1;
                        match mean.as_mut() {
                            None => mean = Some(r.1.clone()),
                            Some(m) => {
                                for g in 0..2 {
                                    for (a, b) in m[g].iter_mut().zip(&r.1[g]) {
                                        *a += b;
                                    }
                                }
                            }
                        }
                    }
                    if let Some(m) = mean.as_mut() {
                        for g in m.iter_mut() {
                            g.iter_mut().for_each(|v| *v /= live.max(1) as f64);
                        }
                    }
                }

                for (state, result) in batch.iter_mut().zip(results) {
                    let Some((loss, mut grads)) = result else {
                        if !state.failed {
                            state.failed = true;
                        }
                        // Failed candidates keep their last loss in the log.
                        let last = state.history.last().copied().unwrap_or(f64::NAN);
                        state.history.push(last);
                        continue;
                    };
                    if !loss.is_finite() {
                        state.failed = true;
                        state.history.push(f64::NAN);
                        continue;
                    }
                    state.history.push(loss);
                    if let Some(m) = &mean {
                        for g in 0..2 {
                            for (gv, mv) in grads[g].iter_mut().zip(&m[g]) {
                                *gv = (1.0 - stage.delta) * *gv + stage.delta * mv;
                            }
                        }
                    }
                    // Plain SGD step, clamped to bounds; hold segments carry
                    // no gradient and stay pinned.
                    for (g, pulse) in [
                        (&grads[0], &mut state.gate_set.x_pulse),
                        (&grads[1], &mut state.gate_set.y_pulse),
                    ] {
                        for k in 0..cfg.gate_segments {
                            let v = pulse.epsilons[k] - stage.learning_rate * g[k];
                            pulse.epsilons[k] = v.clamp(lo, hi);
                        }
                    }
                }
            }
        }
    }

    // Final calibration loss on the full syndrome set, exponent 2.
    states
        .into_iter()
        .zip(initial_losses)
        .zip(initial_sets)
        .enumerate()
        .map(|(index, ((state, initial_gsc_loss), initial_gate_set))| {
            let gsc_loss = if state.failed {
                f64::INFINITY
            } else {
                surrogate_gsc_loss(model, &state.gate_set, syndromes, &hold, 2, 0.0)?.0
            };
            Ok(GateSetCandidate {
                index,
                gate_set: state.gate_set,
                initial_gate_set,
                gsc_loss,
                initial_gsc_loss,
                history: state.history,
                failed: state.failed,
                eval: None,
                initial_eval: None,
            })
        })
        .collect()
}

/// Calibration loss of a gate set as seen by the surrogate (optionally with
/// the Δp regularization), plus the per-sequence predictions.
pub fn surrogate_gsc_loss(
    model: &Surrogate,
    gate_set: &GateSet,
    syndromes: &SyndromeSet,
    hold: &HoldSpec,
    exponent: u32,
    gamma: f64,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let pulses: Vec<ControlPulse> = syndromes
        .sequences
        .iter()
        .map(|seq| concat_pulses(gate_set, seq, hold, model.l_max()))
        .collect::<Result<_>>()?;
    let preds = model.predict(&pulses)?;
    let n = syndromes.len() as f64;
    let mut loss = 0.0;
    for (i, &(p, dp)) in preds.iter().enumerate() {
        loss += (p - syndromes.ideal[i]).abs().powi(exponent as i32) / n;
        loss += gamma * dp * dp / n;
    }
    Ok((loss, preds))
}

/// Loss and voltage gradients for one candidate under the active stage.
fn candidate_loss_and_grads(
    model: &Surrogate,
    state: &CandidateState,
    subset: &SyndromeSet,
    hold: &HoldSpec,
    stage: &Stage,
    cfg: &OptimizeConfig,
) -> Result<Option<(f64, GateGrads)>> {
    let pulses: Vec<ControlPulse> = subset
        .sequences
        .iter()
        .map(|seq| concat_pulses(&state.gate_set, seq, hold, model.l_max()))
        .collect::<Result<_>>()?;
    let n = subset.len() as f64;
    let e = stage.loss_exponent;
    let gamma = stage.gamma;
    let ideal = &subset.ideal;

    let (preds, seq_grads) = model.predict_and_backprop(&pulses, |outs| {
        outs.iter()
            .enumerate()
            .map(|(i, &(p, dp))| {
                let d = p - ideal[i];
                let dp_grad = 2.0 * gamma * dp / n;
                let p_grad = match e {
                    2 => 2.0 * d / n,
                    _ => 4.0 * d * d * d / n,
                };
                (p_grad, dp_grad)
            })
            .collect()
    })?;

    let mut loss = 0.0;
    for (i, &(p, dp)) in preds.iter().enumerate() {
        loss += (p - ideal[i]).abs().powi(e as i32) / n + gamma * dp * dp / n;
    }
    if !loss.is_finite() {
        return Ok(None);
    }

    // Scatter sequence gradients back onto the two gate pulses. Only the
    // free segments receive gradient; per-gate hold segments and the tail
    // are fixed.
    let pulse_len = cfg.pulse_segments();
    let mut grads: GateGrads = [vec![0.0; pulse_len], vec![0.0; pulse_len]];
    for (seq, dseq) in subset.sequences.iter().zip(&seq_grads) {
        for (pos, label) in seq.iter().enumerate() {
            let base = pos * pulse_len;
            let g = &mut grads[label.index()];
            for k in 0..cfg.gate_segments {
                g[k] += dseq[base + k];
            }
        }
    }
    Ok(Some((loss, grads)))
}

/// The k candidates with the smallest final calibration loss; ties broken by
/// candidate index. Failed candidates (infinite loss) sort last.
pub fn select_top(candidates: &[GateSetCandidate], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[a]
            .gsc_loss
            .partial_cmp(&candidates[b].gsc_loss)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Pearson correlation coefficient; 0 when either side has no variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.is_empty() {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_schedule_resolves_like_the_table() {
        let cfg = OptimizeConfig::paper(1);
        let stages = cfg.resolve_stages().unwrap();
        assert_eq!(stages.len(), 6);
        assert_eq!(
            (stages[0].iterations, stages[0].max_seq_len, stages[0].loss_exponent),
            (6000, 3, 2)
        );
        assert_eq!(
            (stages[1].max_seq_len, stages[1].loss_exponent, stages[1].minibatch),
            (4, 4, 1)
        );
        // Stage 3 switches to exponent 2, K_b 8, delta 0.05 and later stages
        // inherit those.
        assert_eq!(
            (stages[2].loss_exponent, stages[2].minibatch, stages[2].delta),
            (2, 8, 0.05)
        );
        assert_eq!(stages[3].delta, 0.05);
        assert_eq!(stages[3].gamma, 0.0);
        assert_eq!(stages[4].gamma, 2.0);
        assert_eq!(stages[5].gamma, 2.0);
        assert_eq!(stages[5].learning_rate, 0.03);
    }

    #[test]
    fn desk_schedule_is_a_tenth() {
        let cfg = OptimizeConfig::desk(1);
        let stages = cfg.resolve_stages().unwrap();
        assert_eq!(cfg.n_gatesets, 32);
        assert_eq!(stages[0].iterations, 600);
        assert_eq!(stages[2].iterations, 2250);
    }

    #[test]
    fn minibatch_must_divide_candidates() {
        let mut cfg = OptimizeConfig::desk(1);
        cfg.n_gatesets = 30;
        assert!(cfg.resolve_stages().is_err());
    }

    #[test]
    fn select_top_orders_by_loss_then_index() {
        let mk = |index: usize, loss: f64| GateSetCandidate {
            index,
            gate_set: GateSet {
                x_pulse: ControlPulse::new(vec![0.0; 4], 0.2).unwrap(),
                y_pulse: ControlPulse::new(vec![0.0; 4], 0.2).unwrap(),
            },
            initial_gate_set: GateSet {
                x_pulse: ControlPulse::new(vec![0.0; 4], 0.2).unwrap(),
                y_pulse: ControlPulse::new(vec![0.0; 4], 0.2).unwrap(),
            },
            gsc_loss: loss,
            initial_gsc_loss: 1.0,
            history: vec![],
            failed: false,
            eval: None,
            initial_eval: None,
        };
        let candidates = vec![mk(0, 0.5), mk(1, 0.1), mk(2, 0.5), mk(3, f64::INFINITY)];
        assert_eq!(select_top(&candidates, 3), vec![1, 0, 2]);
        // All-equal losses: first k by index.
        let equal = vec![mk(0, 0.2), mk(1, 0.2), mk(2, 0.2)];
        assert_eq!(select_top(&equal, 2), vec![0, 1]);

        // Brute-force oracle on distinct losses.
        let distinct = vec![mk(0, 0.9), mk(1, 0.3), mk(2, 0.7), mk(3, 0.05)];
        let mut sorted: Vec<usize> = (0..4).collect();
        sorted.sort_by(|&a, &b| distinct[a].gsc_loss.partial_cmp(&distinct[b].gsc_loss).unwrap());
        assert_eq!(select_top(&distinct, 4), sorted);
    }

    #[test]
    fn pearson_handles_degenerate_inputs() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[0.1, 0.2, 0.3]), 0.0);
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.0, 6.0, 8.0];
        assert!((pearson(&xs, &ys) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
        assert!((pearson(&xs, &neg) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_off_evaluation_reports_incoherent_equal_to_coherent() {
        let mut cfg = crate::qsim::QubitConfig::general();
        cfg.noise.enabled = false;
        let gate_set = GateSet {
            x_pulse: ControlPulse::new(vec![0.4; 12], crate::qsim::DBZ_DEFAULT).unwrap(),
            y_pulse: ControlPulse::new(vec![-0.9; 12], crate::qsim::DBZ_DEFAULT).unwrap(),
        };
        let eval = evaluate_candidate(&gate_set, &cfg, 16, 3, 0).unwrap();
        assert_eq!(eval.coherent, eval.incoherent);
        assert_eq!(eval.incoherent_stderr, [0.0, 0.0]);
        assert!(eval.coherent.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn constructed_gauge_pair_scores_near_zero_infidelity() {
        // A pair realizing exactly {R_Z(-θ)X R_Z(θ), R_Z(-θ)Y R_Z(θ)} is
        // perfect up to the unobservable gauge.
        for theta in [-1.2, 0.4, 2.0] {
            let conj = |g: &Unitary2| Unitary2::rz(-theta).mul(g).mul(&Unitary2::rz(theta));
            let x = conj(&GateLabel::XHalf.ideal_unitary());
            let y = conj(&GateLabel::YHalf.ideal_unitary());
            let (theta_est, infid) = score_gate_pair(&x, &y);
            assert!((theta_est - theta).abs() < 1e-9);
            assert!(infid[0] < 1e-8 && infid[1] < 1e-8, "{infid:?}");
        }
    }
}
