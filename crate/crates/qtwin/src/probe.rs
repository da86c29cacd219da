//! Probe-pulse sampling and dataset generation.
//!
//! The device is probed with random pulses drawn from a mix of strategies:
//! fully random voltages, constant-voltage stretches whose rotation angle
//! under the assumed exchange model lands in a useful window, and stretches
//! whose rotation-axis angle is sampled uniformly. Records pair each pulse
//! with the simulated measurement statistics and are persisted as
//! newline-delimited JSON plus a sidecar manifest.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{
    self, exchange_rate, ControlPulse, ExchangeModel, MeasurementStats, QubitConfig,
};
use crate::rng::{substream, StreamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyTag {
    UniformRandom,
    RotationWindow,
    UniformAngle,
}

impl StrategyTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyTag::UniformRandom => "uniform_random",
            StrategyTag::RotationWindow => "rotation_window",
            StrategyTag::UniformAngle => "uniform_angle",
        }
    }
}

/// Mixing fractions of the three sampling strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyFractions {
    pub uniform_random: f64,
    pub rotation_window: f64,
    pub uniform_angle: f64,
}

/// Rotation-angle window J(ε)·T targeted by the rotation_window strategy.
pub const ROTATION_WINDOW: (f64, f64) = (std::f64::consts::FRAC_PI_2, 4.0 * std::f64::consts::PI);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingStrategy {
    pub fractions: StrategyFractions,
    /// Inclusive segment-count range of generated pulses.
    pub length_range: (usize, usize),
    /// Voltage range pulses are sampled from, mV.
    pub voltage_range: (f64, f64),
    /// Coarse exchange knowledge used by the model-based strategies.
    /// Only the exponential (General) form is permitted here: the probing
    /// step deliberately does not know the real device.
    pub assumed_exchange: ExchangeModel,
    /// Gradient value the probing step assumes, rad/ns; written into each
    /// generated pulse.
    pub assumed_dbz: f64,
}

impl SamplingStrategy {
    /// Default mix for the general device: 60% uniform random, 10% rotation
    /// window, 30% uniform axis angle; lengths 10..=50.
    pub fn general(cfg: &QubitConfig) -> Self {
        SamplingStrategy {
            fractions: StrategyFractions {
                uniform_random: 0.60,
                rotation_window: 0.10,
                uniform_angle: 0.30,
            },
            length_range: (10, 50),
            voltage_range: (cfg.eps_min_mv, cfg.eps_max_mv),
            assumed_exchange: ExchangeModel::general_default(),
            assumed_dbz: qsim::DBZ_DEFAULT,
        }
    }

    /// Default mix for the specific device: the exchange model differs enough
    /// from the exponential assumption that the model-based fractions are
    /// reduced to 5% / 15%. Lengths reach 70 segments so full syndrome
    /// sequences with hold tails stay inside the training window.
    pub fn specific(cfg: &QubitConfig) -> Self {
        SamplingStrategy {
            fractions: StrategyFractions {
                uniform_random: 0.80,
                rotation_window: 0.05,
                uniform_angle: 0.15,
            },
            length_range: (10, 70),
            voltage_range: (cfg.eps_min_mv, cfg.eps_max_mv),
            assumed_exchange: ExchangeModel::general_default(),
            assumed_dbz: qsim::DBZ_ASSUMED_SPECIFIC,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.fractions;
        for (name, v) in [
            ("uniform_random", f.uniform_random),
            ("rotation_window", f.rotation_window),
            ("uniform_angle", f.uniform_angle),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("fraction {name} must be in [0, 1]")));
            }
        }
        let sum = f.uniform_random + f.rotation_window + f.uniform_angle;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("fractions must sum to 1, got {sum}")));
        }
        if self.length_range.0 < 1 || self.length_range.0 > self.length_range.1 {
            return Err(Error::config("invalid length_range"));
        }
        if !(self.voltage_range.0 < self.voltage_range.1) {
            return Err(Error::config("invalid voltage_range"));
        }
        match self.assumed_exchange {
            ExchangeModel::General { j0, .. } if j0 > 0.0 => {}
            _ => {
                return Err(Error::config(
                    "assumed_exchange must be a General model with j0 > 0",
                ))
            }
        }
        if !(self.assumed_dbz.is_finite() && self.assumed_dbz > 0.0) {
            return Err(Error::config("assumed_dbz must be finite and > 0"));
        }
        Ok(())
    }

    fn j_at(&self, eps: f64) -> f64 {
        exchange_rate(&self.assumed_exchange, eps).expect("finite detuning")
    }

    fn eps_for_j(&self, j: f64) -> f64 {
        let (lo, hi) = self.voltage_range;
        self.assumed_exchange
            .invert_general(j)
            .unwrap_or(lo)
            .clamp(lo, hi)
    }
}

/// One constant-voltage stretch of a structured probe pulse. The fields are
/// read by the distribution tests.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct Stretch {
    pub len: usize,
    pub eps: f64,
}

const STRETCH_RETRIES: usize = 16;

/// Draws a probe pulse; the tag reports which strategy actually produced it
/// (a structured strategy that cannot satisfy its constraints falls back to
/// uniform random and is tagged as such).
pub fn sample_probe_pulse_tagged(
    strategy: &SamplingStrategy,
    rng: &mut impl Rng,
) -> (ControlPulse, StrategyTag) {
    let f = &strategy.fractions;
    let u: f64 = rng.gen();
    let requested = if u < f.uniform_random {
        StrategyTag::UniformRandom
    } else if u < f.uniform_random + f.rotation_window {
        StrategyTag::RotationWindow
    } else {
        StrategyTag::UniformAngle
    };
    let len = rng.gen_range(strategy.length_range.0..=strategy.length_range.1);
    match requested {
        StrategyTag::UniformRandom => (uniform_random_pulse(strategy, len, rng), requested),
        StrategyTag::RotationWindow => match stretched_pulse(strategy, len, rng, true) {
            Some((pulse, _)) => (pulse, requested),
            None => (
                uniform_random_pulse(strategy, len, rng),
                StrategyTag::UniformRandom,
            ),
        },
        StrategyTag::UniformAngle => match stretched_pulse(strategy, len, rng, false) {
            Some((pulse, _)) => (pulse, requested),
            None => (
                uniform_random_pulse(strategy, len, rng),
                StrategyTag::UniformRandom,
            ),
        },
    }
}

pub fn sample_probe_pulse(strategy: &SamplingStrategy, rng: &mut impl Rng) -> ControlPulse {
    sample_probe_pulse_tagged(strategy, rng).0
}

fn uniform_random_pulse(
    strategy: &SamplingStrategy,
    len: usize,
    rng: &mut impl Rng,
) -> ControlPulse {
    let (lo, hi) = strategy.voltage_range;
    let eps = (0..len).map(|_| rng.gen_range(lo..=hi)).collect();
    ControlPulse::new(eps, strategy.assumed_dbz).expect("valid pulse")
}

/// Builds a pulse out of constant-voltage stretches with random durations.
/// `rotation_mode` selects the per-stretch voltage rule:
///
/// * rotation window: J(ε)·T_stretch uniform in [π/2, 4π] (intersected with
///   what the voltage range permits),
/// * axis angle: arctan(ΔB_Z / J(ε)) uniform over its reachable interval.
pub(crate) fn stretched_pulse(
    strategy: &SamplingStrategy,
    len: usize,
    rng: &mut impl Rng,
    rotation_mode: bool,
) -> Option<(ControlPulse, Vec<Stretch>)> {
    let (lo, hi) = strategy.voltage_range;
    let j_min = strategy.j_at(lo);
    let j_max = strategy.j_at(hi);

    let mut eps = Vec::with_capacity(len);
    let mut stretches = Vec::new();
    while eps.len() < len {
        let remaining = len - eps.len();
        let mut accepted = None;
        for _ in 0..STRETCH_RETRIES {
            let dur = if remaining == 1 {
                1
            } else {
                rng.gen_range(2..=len.max(2)).min(remaining)
            };
            let value = if rotation_mode {
                let t = dur as f64;
                let angle_lo = ROTATION_WINDOW.0.max(j_min * t);
                let angle_hi = ROTATION_WINDOW.1.min(j_max * t);
                if angle_lo >= angle_hi {
                    continue;
                }
                let angle = rng.gen_range(angle_lo..=angle_hi);
                strategy.eps_for_j(angle / t)
            } else {
                let chi_lo = (strategy.assumed_dbz / j_max).atan();
                let chi_hi = (strategy.assumed_dbz / j_min).atan();
                if chi_lo >= chi_hi {
                    continue;
                }
                let chi = rng.gen_range(chi_lo..=chi_hi);
                strategy.eps_for_j(strategy.assumed_dbz / chi.tan())
            };
            accepted = Some((dur, value));
            break;
        }
        let (dur, value) = accepted?;
        stretches.push(Stretch { len: dur, eps: value });
        eps.extend(std::iter::repeat(value).take(dur));
    }
    let pulse = ControlPulse::new(eps, strategy.assumed_dbz).expect("valid pulse");
    Some((pulse, stretches))
}

/// One probed data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub pulse: ControlPulse,
    pub stats: MeasurementStats,
    pub strategy: StrategyTag,
    /// Substream index the record was generated under (its position in the
    /// dataset).
    pub seed: u64,
}

/// Generates `count` records: pulses drawn per strategy, measured with the
/// ground-truth simulator. Fully determined by `(strategy, cfg, count,
/// master_seed)` regardless of thread count.
pub fn generate_dataset(
    strategy: &SamplingStrategy,
    cfg: &QubitConfig,
    count: usize,
    master_seed: u64,
) -> Result<Vec<ProbeRecord>> {
    strategy.validate()?;
    cfg.validate()?;
    let results: Vec<Result<ProbeRecord>> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let mut rng = substream(master_seed, StreamKind::ProbePulse, idx as u64, 0);
            let (pulse, tag) = sample_probe_pulse_tagged(strategy, &mut rng);
            let stats = qsim::measure(&pulse, cfg, master_seed, idx as u64)?;
            Ok(ProbeRecord {
                pulse,
                stats,
                strategy: tag,
                seed: idx as u64,
            })
        })
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(idx, r)| r.map_err(|e| Error::domain(format!("record {idx}: {e}"))))
        .collect()
}

/// Train/validation/test partition, stored as record indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Standard 81% / 9% / 10% split ratios.
pub const SPLIT_RATIOS: (f64, f64, f64) = (0.81, 0.09, 0.10);

/// Shuffles the record indices and partitions them by the given ratios
/// (largest-remainder apportionment, each part non-empty).
pub fn split_dataset(
    n_records: usize,
    ratios: (f64, f64, f64),
    master_seed: u64,
) -> Result<DatasetSplit> {
    if n_records < 3 {
        return Err(Error::domain(format!(
            "need at least 3 records to split, got {n_records}"
        )));
    }
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }

    let mut indices: Vec<usize> = (0..n_records).collect();
    let mut rng = substream(master_seed, StreamKind::Split, 0, 0);
    // Fisher-Yates shuffle.
    for i in (1..n_records).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }

    let targets = [ratios.0, ratios.1, ratios.2].map(|r| r * n_records as f64);
    let mut sizes = targets.map(|t| t.floor() as usize);
    let mut leftover = n_records - sizes.iter().sum::<usize>();
    // Assign leftovers by descending fractional part (ties by position).
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &part in &order {
        if leftover == 0 {
            break;
        }
        sizes[part] += 1;
        leftover -= 1;
    }
    // Every part must be non-empty; steal from the largest part.
    for part in 0..3 {
        if sizes[part] == 0 {
            let donor = (0..3).max_by_key(|&p| sizes[p]).unwrap();
            sizes[donor] -= 1;
            sizes[part] += 1;
        }
    }

    let train = indices[..sizes[0]].to_vec();
    let validation = indices[sizes[0]..sizes[0] + sizes[1]].to_vec();
    let test = indices[sizes[0] + sizes[1]..].to_vec();
    Ok(DatasetSplit {
        train,
        validation,
        test,
    })
}

/// Per-record training weights balancing the sampling density along p̄:
/// the p̄ axis is binned with width 0.01 and each record is weighted by
/// max_bin_count / count(its bin), so sparse regions are upweighted.
pub fn sample_weights(records: &[ProbeRecord]) -> Vec<f64> {
    sample_weights_of(records.iter().map(|r| r.stats.p_mean))
}

pub fn sample_weights_of(p_means: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    const N_BINS: usize = 100;
    let bin_of = |p: f64| -> usize { ((p * N_BINS as f64) as usize).min(N_BINS - 1) };
    let mut counts = [0usize; N_BINS];
    for p in p_means.clone() {
        counts[bin_of(p)] += 1;
    }
    let max_count = counts.iter().copied().max().unwrap_or(0) as f64;
    p_means
        .map(|p| max_count / counts[bin_of(p)] as f64)
        .collect()
}

/// Sidecar manifest written next to every dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub qubit_config_hash: String,
    pub strategy: SamplingStrategy,
    pub count: usize,
    pub master_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    epsilons_mv: Vec<f64>,
    dbz_rad_per_ns: f64,
    length: usize,
    p_mean: f64,
    p_stderr: f64,
    strategy: StrategyTag,
    seed: u64,
}

/// Writes records as newline-delimited JSON plus `<path>.manifest.json`.
pub fn write_dataset(
    path: &Path,
    records: &[ProbeRecord],
    manifest: &DatasetManifest,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = RecordLine {
            epsilons_mv: r.pulse.epsilons.clone(),
            dbz_rad_per_ns: r.pulse.dbz,
            length: r.pulse.len(),
            p_mean: r.stats.p_mean,
            p_stderr: r.stats.p_stderr,
            strategy: r.strategy,
            seed: r.seed,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    std::fs::write(
        manifest_path(path),
        serde_json::to_string_pretty(manifest)?,
    )?;
    Ok(())
}

pub fn manifest_path(dataset_path: &Path) -> std::path::PathBuf {
    let mut os = dataset_path.as_os_str().to_owned();
    os.push(".manifest.json");
    std::path::PathBuf::from(os)
}

pub fn read_dataset(path: &Path) -> Result<Vec<ProbeRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line)
            .map_err(|e| Error::config(format!("dataset line {}: {e}", i + 1)))?;
        if parsed.epsilons_mv.len() != parsed.length {
            return Err(Error::config(format!(
                "dataset line {}: length field {} does not match {} segments",
                i + 1,
                parsed.length,
                parsed.epsilons_mv.len()
            )));
        }
        records.push(ProbeRecord {
            pulse: ControlPulse::new(parsed.epsilons_mv, parsed.dbz_rad_per_ns)?,
            stats: MeasurementStats {
                p_mean: parsed.p_mean,
                p_stderr: parsed.p_stderr,
            },
            strategy: parsed.strategy,
            seed: parsed.seed,
        });
    }
    Ok(records)
}
