//! Transfer-function kernels.
//!
//! The control hardware distorts programmed voltage pulses; this is modeled
//! as a discrete linear convolution with a kernel sampled at the 1 ns segment
//! spacing. Voltages outside the programmed pulse are treated as zero, so the
//! convolution exposes the rise/fall transients at the pulse edges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::ControlPulse;

/// Ringing amplitude of the parametric measured-cable stand-in, relative to
/// the settled step level.
const CAUSAL_RING_AMPLITUDE: f64 = 0.1;

/// Kernel parameterization as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelSpec {
    /// No distortion.
    Identity,
    /// Symmetric Gaussian of width `sigma` (ns); models a plain bandwidth
    /// limitation.
    Gaussian { sigma: f64 },
    /// Causal stand-in for a measured cable response: a delayed exponential
    /// rise (time constant `rise_time` ns) with a damped cosine ripple
    /// (period `osc_period` ns, decay `osc_decay` ns), normalized to
    /// `dc_gain`.
    CausalMeasured {
        rise_time: f64,
        osc_period: f64,
        osc_decay: f64,
        dc_gain: f64,
    },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Identity => Ok(()),
            KernelSpec::Gaussian { sigma } => {
                if sigma.is_finite() && sigma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("gaussian kernel sigma must be > 0"))
                }
            }
            KernelSpec::CausalMeasured {
                rise_time,
                osc_period,
                osc_decay,
                dc_gain,
            } => {
                if rise_time > 0.0 && osc_period > 0.0 && osc_decay > 0.0 && dc_gain.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config(
                        "causal kernel requires rise_time, osc_period, osc_decay > 0",
                    ))
                }
            }
        }
    }
}

/// A built kernel: discrete taps `k(τ)` at 1 ns spacing, with `t0` the index
/// of the τ = 0 tap inside `taps`.
#[derive(Debug, Clone)]
pub struct TransferKernel {
    pub spec: KernelSpec,
    taps: Vec<f64>,
    t0: usize,
}

impl TransferKernel {
    pub fn identity() -> Self {
        TransferKernel {
            spec: KernelSpec::Identity,
            taps: vec![1.0],
            t0: 0,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::build(&KernelSpec::Gaussian { sigma })
    }

    pub fn build(spec: &KernelSpec) -> Result<Self> {
        spec.validate()?;
        match *spec {
            KernelSpec::Identity => Ok(Self::identity()),
            KernelSpec::Gaussian { sigma } => {
                // Support out to 4σ captures all but ~6e-5 of the mass; the
                // renormalization below restores exact unit DC gain.
                let half = (4.0 * sigma).ceil() as usize;
                let mut taps: Vec<f64> = (-(half as isize)..=half as isize)
                    .map(|tau| (-0.5 * (tau as f64 / sigma).powi(2)).exp())
                    .collect();
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|t| *t /= sum);
                Ok(TransferKernel {
                    spec: spec.clone(),
                    taps,
                    t0: half,
                })
            }
            KernelSpec::CausalMeasured {
                rise_time,
                osc_period,
                osc_decay,
                dc_gain,
            } => {
                // Kernel taps are the first difference of the parametric step
                // response, so a long constant input settles to dc_gain.
                let step = |t: f64| -> f64 {
                    if t < 0.0 {
                        return 0.0;
                    }
                    let rise = 1.0 - (-(t + 1.0) / rise_time).exp();
                    let ring = CAUSAL_RING_AMPLITUDE
                        * (-t / osc_decay).exp()
                        * (2.0 * std::f64::consts::PI * t / osc_period).cos();
                    rise * (1.0 + ring)
                };
                let support = ((rise_time.max(osc_decay) * 30.0).ceil() as usize).clamp(8, 256);
                let mut taps: Vec<f64> = (0..support)
                    .map(|tau| {
                        let t = tau as f64;
                        step(t) - if tau == 0 { 0.0 } else { step(t - 1.0) }
                    })
                    .collect();
                let sum: f64 = taps.iter().sum();
                if sum.abs() < 1e-12 {
                    return Err(Error::config("causal kernel has vanishing DC gain"));
                }
                let scale = dc_gain / sum;
                taps.iter_mut().for_each(|t| *t *= scale);
                Ok(TransferKernel {
                    spec: spec.clone(),
                    taps,
                    t0: 0,
                })
            }
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Sum of all taps.
    pub fn dc_gain(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// How far the kernel reaches before τ = 0 (non-causal extent).
    pub fn left_reach(&self) -> usize {
        self.t0
    }

    /// How far the kernel reaches past τ = 0.
    pub fn right_reach(&self) -> usize {
        self.taps.len() - 1 - self.t0
    }

    /// Distorted voltage at output index `t` (may lie outside the pulse),
    /// with zero voltage assumed outside the programmed segments.
    fn output_at(&self, eps: &[f64], t: isize) -> f64 {
        let mut acc = 0.0;
        for (j, &k) in self.taps.iter().enumerate() {
            let tau = t - (j as isize - self.t0 as isize);
            if tau >= 0 && (tau as usize) < eps.len() {
                acc += k * eps[tau as usize];
            }
        }
        acc
    }

    /// Distorted voltages over exactly the programmed window `0..L`. This is
    /// the trace the simulator evolves under; kernel tails outside the window
    /// fall outside the evolution time `T = L·Δt`.
    pub fn distort_in_window(&self, eps: &[f64]) -> Vec<f64> {
        if matches!(self.spec, KernelSpec::Identity) {
            return eps.to_vec();
        }
        (0..eps.len() as isize).map(|t| self.output_at(eps, t)).collect()
    }
}

/// Full distorted trace including `pre_pad` segments before and `post_pad`
/// after the pulse, exposing the edge transients.
///
/// The pads must cover the kernel reach on each side so no transient is
/// silently truncated.
pub fn apply_transfer(
    kernel: &TransferKernel,
    pulse: &ControlPulse,
    pre_pad: usize,
    post_pad: usize,
) -> Result<Vec<f64>> {
    if pre_pad < kernel.left_reach() || post_pad < kernel.right_reach() {
        return Err(Error::domain(format!(
            "apply_transfer: pads ({pre_pad}, {post_pad}) smaller than kernel reach ({}, {})",
            kernel.left_reach(),
            kernel.right_reach()
        )));
    }
    let len = pulse.len() as isize;
    Ok((-(pre_pad as isize)..len + post_pad as isize)
        .map(|t| kernel.output_at(&pulse.epsilons, t))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_pulse(len: usize, level: f64) -> ControlPulse {
        ControlPulse::new(vec![level; len], 0.0).unwrap()
    }

    #[test]
    fn identity_kernel_is_a_no_op() {
        let kernel = TransferKernel::identity();
        let pulse = ControlPulse::new(vec![0.4, -1.2, 0.9], 0.0).unwrap();
        assert_eq!(kernel.distort_in_window(&pulse.epsilons), pulse.epsilons);
        let padded = apply_transfer(&kernel, &pulse, 0, 0).unwrap();
        assert_eq!(padded, pulse.epsilons);
    }

    #[test]
    fn gaussian_is_symmetric_with_unit_dc_gain() {
        let kernel = TransferKernel::gaussian(1.0).unwrap();
        let taps = kernel.taps();
        assert!((kernel.dc_gain() - 1.0).abs() < 1e-9);
        for i in 0..taps.len() {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_step_response_matches_tap_partial_sums() {
        // On a unit step the output at offset d past the step edge is the
        // partial sum of taps with τ <= d: the discrete Gaussian CDF.
        let kernel = TransferKernel::gaussian(1.0).unwrap();
        let pulse = step_pulse(20, 1.0);
        let pad = kernel.left_reach();
        let out = apply_transfer(&kernel, &pulse, pad, pad).unwrap();
        let taps = kernel.taps();
        for d in -(pad as isize)..=pad as isize {
            let expected: f64 = taps
                .iter()
                .enumerate()
                .filter(|(j, _)| (*j as isize - kernel.t0 as isize) <= d)
                .map(|(_, &k)| k)
                .sum();
            let got = out[(pad as isize + d) as usize];
            assert!(
                (got - expected).abs() < 1e-12,
                "offset {d}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn causal_kernel_is_strictly_causal_and_settles() {
        let kernel = TransferKernel::build(&KernelSpec::CausalMeasured {
            rise_time: 1.0,
            osc_period: 4.0,
            osc_decay: 2.0,
            dc_gain: 1.0,
        })
        .unwrap();
        assert_eq!(kernel.left_reach(), 0);
        assert!((kernel.dc_gain() - 1.0).abs() < 1e-9);

        let len = kernel.right_reach() + 40;
        let pulse = step_pulse(len, 1.0);
        let pre = 4;
        let out = apply_transfer(&kernel, &pulse, pre, kernel.right_reach()).unwrap();

        // Before the step: exactly zero.
        for t in 0..pre {
            assert_eq!(out[t], 0.0, "non-causal response at t={}", t as isize - pre as isize);
        }
        // Deep inside the step the response has settled to dc_gain.
        let settled = out[pre + kernel.right_reach() + 10];
        assert!((settled - 1.0).abs() < 1e-9);

        // Transient deviation decays: window-max |out - dc_gain| shrinks.
        let window = 4;
        let mut prev = f64::INFINITY;
        for w in 0..6 {
            let start = pre + w * window;
            let peak = (start..start + window)
                .map(|t| (out[t] - 1.0).abs())
                .fold(0.0_f64, f64::max);
            assert!(peak <= prev + 1e-12, "transient grew in window {w}");
            prev = peak;
        }
    }

    #[test]
    fn interior_of_long_constant_pulse_reproduces_level_times_gain() {
        for spec in [
            KernelSpec::Gaussian { sigma: 1.0 },
            KernelSpec::CausalMeasured {
                rise_time: 1.0,
                osc_period: 4.0,
                osc_decay: 2.0,
                dc_gain: 0.85,
            },
        ] {
            let kernel = TransferKernel::build(&spec).unwrap();
            let reach = kernel.left_reach().max(kernel.right_reach());
            let pulse = step_pulse(2 * reach + 30, -1.7);
            let out = kernel.distort_in_window(&pulse.epsilons);
            let mid = out[pulse.len() / 2];
            assert!(
                (mid - -1.7 * kernel.dc_gain()).abs() < 1e-9,
                "{spec:?}: interior {mid}"
            );
        }
    }

    #[test]
    fn insufficient_pads_are_rejected() {
        let kernel = TransferKernel::gaussian(1.0).unwrap();
        let pulse = step_pulse(10, 1.0);
        assert!(apply_transfer(&kernel, &pulse, 0, 4).is_err());
        assert!(apply_transfer(&kernel, &pulse, 4, 0).is_err());
        assert!(apply_transfer(&kernel, &pulse, 4, 4).is_ok());
    }
}
