//! Ground-truth physics of the simulated singlet-triplet qubit.
//!
//! A control pulse is a sequence of detuning voltages on a fixed 1 ns grid.
//! Each segment evolves the qubit under
//! H = J(ε'_t)/2 · σ_Z + ΔB_Z/2 · σ_X, where ε'_t is the programmed voltage
//! after the hardware transfer function and J is the exchange interaction.
//! Measurements return the |0⟩ survival probability averaged over Monte Carlo
//! noise samples together with its standard error.

pub mod exchange;
pub mod kernel;
pub mod noise;
pub mod unitary;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamKind};

pub use exchange::{exchange_rate, ExchangeModel, MEGA_CYCLES_TO_RAD_PER_NS};
pub use kernel::{apply_transfer, KernelSpec, TransferKernel};
pub use noise::{expected_fast_noise_variance, sample_fast_noise, NoiseConfig, NoiseRealization};
pub use unitary::{
    entanglement_fidelity, euler_zxz, global_z_correct, propagate, Unitary2, DT_NS, IDEAL_X_ZXZ,
    IDEAL_Y_ZXZ,
};

/// Magnetic-field gradient set on the simulated devices, rad/ns
/// (42.1 · 2π·10⁶ 1/s).
pub const DBZ_DEFAULT: f64 = 42.1 * MEGA_CYCLES_TO_RAD_PER_NS;

/// Slightly offset gradient assumed when generating probe pulses for the
/// specific device (42.096 · 2π·10⁶ 1/s): the probing step does not know the
/// device value exactly.
pub const DBZ_ASSUMED_SPECIFIC: f64 = 42.096 * MEGA_CYCLES_TO_RAD_PER_NS;

/// A piecewise-constant control pulse: one detuning voltage (mV) per 1 ns
/// segment, plus the magnetic-field gradient the pulse is programmed against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPulse {
    /// Detuning voltages, mV, one per segment.
    pub epsilons: Vec<f64>,
    /// Gradient ΔB_Z in rad/ns, constant across the pulse.
    pub dbz: f64,
}

impl ControlPulse {
    pub fn new(epsilons: Vec<f64>, dbz: f64) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(Error::domain("pulse must have at least one segment"));
        }
        if !epsilons.iter().all(|e| e.is_finite()) || !dbz.is_finite() {
            return Err(Error::domain("pulse voltages and dbz must be finite"));
        }
        Ok(ControlPulse { epsilons, dbz })
    }

    /// Segment count L; the pulse duration is T = L · 1 ns.
    pub fn len(&self) -> usize {
        self.epsilons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilons.is_empty()
    }
}

/// Measurement statistics over Monte Carlo noise samples:
/// p̄ = (1/N)·Σ_n |⟨0|U_n|0⟩|² and Δp = (1/N)·sqrt(Σ_n (p_n − p̄)²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementStats {
    pub p_mean: f64,
    pub p_stderr: f64,
}

/// Full description of a simulated device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitConfig {
    pub exchange: ExchangeModel,
    pub kernel: KernelSpec,
    pub noise: NoiseConfig,
    /// Voltage range probe pulses are sampled from and optimized pulses are
    /// clamped to, mV.
    pub eps_min_mv: f64,
    pub eps_max_mv: f64,
}

impl QubitConfig {
    /// The approximate device: exponential exchange, Gaussian transfer kernel
    /// of width 1 ns, standard noise. The voltage range is chosen so the
    /// exchange spans roughly [0.05, 10] · 2π·10⁸ 1/s (the exact range is not
    /// a published number).
    pub fn general() -> Self {
        QubitConfig {
            exchange: ExchangeModel::general_default(),
            kernel: KernelSpec::Gaussian { sigma: 1.0 },
            noise: NoiseConfig {
                sigma_eps_quasistatic: 8.0e-3,
                sigma_dbz: 2.8 * MEGA_CYCLES_TO_RAD_PER_NS,
                dbz_mean: DBZ_DEFAULT,
                fast_psd: noise::FastNoisePsd::standard(),
                n_samples: 60,
                enabled: true,
                shots_per_sample: None,
            },
            eps_min_mv: -2.4,
            eps_max_mv: 1.27,
        }
    }

    /// The measured-device stand-in: crossover exchange fit, causal transfer
    /// kernel with transients and sub-5 ns ringing, slightly different
    /// gradient noise. The voltage range reaches into the regime where the
    /// exponential approximation breaks down and includes the −3.18 mV hold
    /// voltage.
    pub fn specific() -> Self {
        QubitConfig {
            exchange: ExchangeModel::specific_default(),
            kernel: KernelSpec::CausalMeasured {
                rise_time: 1.0,
                osc_period: 4.0,
                osc_decay: 2.0,
                dc_gain: 1.0,
            },
            noise: NoiseConfig {
                sigma_eps_quasistatic: 8.0e-3,
                sigma_dbz: 2.801 * MEGA_CYCLES_TO_RAD_PER_NS,
                dbz_mean: DBZ_DEFAULT,
                fast_psd: noise::FastNoisePsd::standard(),
                n_samples: 60,
                enabled: true,
                shots_per_sample: None,
            },
            eps_min_mv: -3.5,
            eps_max_mv: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.exchange.validate()?;
        self.kernel.validate()?;
        self.noise.validate()?;
        if !(self.eps_min_mv < self.eps_max_mv) {
            return Err(Error::config("eps_min_mv must be < eps_max_mv"));
        }
        // The exchange must stay non-negative over the configured range.
        for i in 0..=1000 {
            let eps = self.eps_min_mv
                + (self.eps_max_mv - self.eps_min_mv) * i as f64 / 1000.0;
            if exchange_rate(&self.exchange, eps)? < 0.0 {
                return Err(Error::config(format!(
                    "exchange is negative at eps = {eps} mV"
                )));
            }
        }
        Ok(())
    }

    /// Stable fingerprint of the configuration (SHA-256 of its canonical
    /// JSON form), used to tie artifacts to the config that produced them.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Measures a pulse: propagates `noise.n_samples` Monte Carlo realizations
/// and reduces them to (p̄, Δp).
///
/// Randomness is keyed by `(master_seed, pulse_id, sample_index)`, so results
/// are independent of evaluation order and thread count. With noise disabled
/// the measurement is deterministic and Δp = 0.
pub fn measure(
    pulse: &ControlPulse,
    cfg: &QubitConfig,
    master_seed: u64,
    pulse_id: u64,
) -> Result<MeasurementStats> {
    if cfg.noise.n_samples < 1 {
        return Err(Error::config("measure requires noise.n_samples >= 1"));
    }
    let kernel = TransferKernel::build(&cfg.kernel)?;

    let sample_p = |n: u64| -> Result<f64> {
        let mut rng = substream(master_seed, StreamKind::Measurement, pulse_id, n);
        let realization = NoiseRealization::draw(&cfg.noise, pulse.dbz, pulse.len(), &mut rng);
        let u = propagate(pulse, &cfg.exchange, &kernel, &realization)?;
        let mut p = u.p0().clamp(0.0, 1.0);
        if let Some(shots) = cfg.noise.shots_per_sample {
            if shots > 0 {
                let hits = Binomial::new(shots, p).unwrap().sample(&mut rng);
                p = hits as f64 / shots as f64;
            }
        }
        Ok(p)
    };

    if !cfg.noise.enabled {
        return Ok(MeasurementStats {
            p_mean: sample_p(0)?,
            p_stderr: 0.0,
        });
    }

    let n = cfg.noise.n_samples;
    let mut probs = Vec::with_capacity(n);
    for i in 0..n {
        probs.push(sample_p(i as u64)?);
    }
    let p_mean = probs.iter().sum::<f64>() / n as f64;
    let p_stderr =
        probs.iter().map(|p| (p - p_mean).powi(2)).sum::<f64>().sqrt() / n as f64;
    Ok(MeasurementStats { p_mean, p_stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noiseless_general() -> QubitConfig {
        let mut cfg = QubitConfig::general();
        cfg.noise.enabled = false;
        cfg.noise.n_samples = 1;
        cfg
    }

    #[test]
    fn presets_validate() {
        QubitConfig::general().validate().unwrap();
        QubitConfig::specific().validate().unwrap();
    }

    #[test]
    fn rabi_oracle_over_all_lengths() {
        // With the exchange forced to zero the qubit Rabi-oscillates under
        // ΔB_Z alone: p̄ = cos²(ΔB_Z·T/2).
        let mut cfg = noiseless_general();
        cfg.exchange = ExchangeModel::General { j0: 0.0, eps0: 1.0 };
        cfg.kernel = KernelSpec::Identity;
        let dbz = DBZ_DEFAULT;
        for t in 1..=50usize {
            let pulse = ControlPulse::new(vec![0.0; t], dbz).unwrap();
            let stats = measure(&pulse, &cfg, 0, 0).unwrap();
            let expect = (dbz * t as f64 / 2.0).cos().powi(2);
            assert!(
                (stats.p_mean - expect).abs() < 1e-9,
                "T={t}: {} vs {expect}",
                stats.p_mean
            );
            assert_eq!(stats.p_stderr, 0.0);
        }
    }

    #[test]
    fn propagation_is_unitary_on_random_pulses() {
        let cfg = QubitConfig::general();
        let kernel = TransferKernel::build(&cfg.kernel).unwrap();
        let mut rng = substream(100, StreamKind::ProbePulse, 0, 0);
        for _ in 0..500 {
            let len = rng.gen_range(10..=50);
            let eps: Vec<f64> = (0..len)
                .map(|_| rng.gen_range(cfg.eps_min_mv..cfg.eps_max_mv))
                .collect();
            let pulse = ControlPulse::new(eps, DBZ_DEFAULT).unwrap();
            let u = propagate(
                &pulse,
                &cfg.exchange,
                &kernel,
                &NoiseRealization::quiet(pulse.dbz, len),
            )
            .unwrap();
            assert!(u.unitarity_deviation() < 1e-12);
        }
    }

    #[test]
    fn composition_property_with_identity_kernel() {
        let mut cfg = noiseless_general();
        cfg.kernel = KernelSpec::Identity;
        let kernel = TransferKernel::identity();
        let mut rng = substream(7, StreamKind::ProbePulse, 0, 0);
        for _ in 0..100 {
            let la = rng.gen_range(2..12);
            let lb = rng.gen_range(2..12);
            let eps_a: Vec<f64> = (0..la).map(|_| rng.gen_range(-2.4..1.27)).collect();
            let eps_b: Vec<f64> = (0..lb).map(|_| rng.gen_range(-2.4..1.27)).collect();
            let quiet = |n| NoiseRealization::quiet(DBZ_DEFAULT, n);

            let a = ControlPulse::new(eps_a.clone(), DBZ_DEFAULT).unwrap();
            let b = ControlPulse::new(eps_b.clone(), DBZ_DEFAULT).unwrap();
            let mut joined = eps_a;
            joined.extend_from_slice(&eps_b);
            let ab = ControlPulse::new(joined, DBZ_DEFAULT).unwrap();

            let ua = propagate(&a, &cfg.exchange, &kernel, &quiet(la)).unwrap();
            let ub = propagate(&b, &cfg.exchange, &kernel, &quiet(lb)).unwrap();
            let uab = propagate(&ab, &cfg.exchange, &kernel, &quiet(la + lb)).unwrap();

            let composed = ub.mul(&ua);
            let dev: f64 = (0..2)
                .flat_map(|r| (0..2).map(move |c| (r, c)))
                .map(|(r, c)| (uab.m[r][c] - composed.m[r][c]).norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-10);
        }
    }

    #[test]
    fn measurement_bounds_and_noiseless_determinism() {
        let cfg = QubitConfig::general();
        let quiet_cfg = noiseless_general();
        let mut rng = substream(8, StreamKind::ProbePulse, 0, 0);
        for id in 0..20u64 {
            let len = rng.gen_range(10..=30);
            let eps: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.4..1.27)).collect();
            let pulse = ControlPulse::new(eps, DBZ_DEFAULT).unwrap();

            let noisy = measure(&pulse, &cfg, 5, id).unwrap();
            assert!((0.0..=1.0).contains(&noisy.p_mean));
            assert!((0.0..=0.5).contains(&noisy.p_stderr));

            let q1 = measure(&pulse, &quiet_cfg, 5, id).unwrap();
            let q2 = measure(&pulse, &quiet_cfg, 99, id).unwrap();
            assert_eq!(q1.p_mean.to_bits(), q2.p_mean.to_bits());
            assert_eq!(q1.p_stderr, 0.0);
        }
    }

    #[test]
    fn measurement_is_reproducible_under_same_seed() {
        let cfg = QubitConfig::general();
        let pulse = ControlPulse::new(vec![0.3; 12], DBZ_DEFAULT).unwrap();
        let a = measure(&pulse, &cfg, 21, 3).unwrap();
        let b = measure(&pulse, &cfg, 21, 3).unwrap();
        assert_eq!(a.p_mean.to_bits(), b.p_mean.to_bits());
        assert_eq!(a.p_stderr.to_bits(), b.p_stderr.to_bits());
        let c = measure(&pulse, &cfg, 22, 3).unwrap();
        assert_ne!(a.p_mean.to_bits(), c.p_mean.to_bits());
    }

    #[test]
    fn config_hash_changes_with_content() {
        let a = QubitConfig::general();
        let mut b = QubitConfig::general();
        b.noise.n_samples = 61;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), QubitConfig::general().hash());
    }
}
