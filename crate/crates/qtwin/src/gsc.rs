//! Gate-set-calibration sequences and loss.
//!
//! The gate set is {X_π/2, Y_π/2}. Syndrome sequences are all gate tuples of
//! length 1..=max_len; applying a sequence to |0⟩ and measuring in the Z
//! basis yields one outcome per sequence. The squared (or fourth-power)
//! deviation of those outcomes from their ideal values, averaged over
//! sequences, is the calibration loss minimized during pulse optimization.
//!
//! Sequence index 0 acts first in time, i.e. a sequence [a, b] realizes the
//! operator product U_b · U_a.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{ControlPulse, Unitary2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateLabel {
    XHalf,
    YHalf,
}

impl GateLabel {
    pub const ALL: [GateLabel; 2] = [GateLabel::XHalf, GateLabel::YHalf];

    pub fn ideal_unitary(&self) -> Unitary2 {
        match self {
            GateLabel::XHalf => Unitary2::rx(std::f64::consts::FRAC_PI_2),
            GateLabel::YHalf => Unitary2::ry(std::f64::consts::FRAC_PI_2),
        }
    }

    pub fn index(&self) -> usize {
        match self {
            GateLabel::XHalf => 0,
            GateLabel::YHalf => 1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GateLabel::XHalf => "X",
            GateLabel::YHalf => "Y",
        }
    }
}

/// A syndrome sequence: gate labels in time order.
pub type SyndromeSequence = Vec<GateLabel>;

/// All sequences of length 1..=max_len plus their ideal outcomes.
#[derive(Debug, Clone)]
pub struct SyndromeSet {
    pub sequences: Vec<SyndromeSequence>,
    /// Ideal outcome R⁰_i = |⟨0| Π ideal gates |0⟩|² per sequence.
    pub ideal: Vec<f64>,
}

impl SyndromeSet {
    pub fn new(max_len: usize) -> Self {
        let sequences = enumerate_sequences(GateLabel::ALL.len(), max_len);
        let ideal = ideal_outcomes(&sequences);
        SyndromeSet { sequences, ideal }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Restriction to sequences of at most `max_len` gates (the staged
    /// optimization starts on short sequences).
    pub fn truncated(&self, max_len: usize) -> SyndromeSet {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.sequences[i].len() <= max_len)
            .collect();
        SyndromeSet {
            sequences: keep.iter().map(|&i| self.sequences[i].clone()).collect(),
            ideal: keep.iter().map(|&i| self.ideal[i]).collect(),
        }
    }

    /// CSV dump (sequence, ideal outcome) for inspection.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "sequence,ideal_outcome")?;
        for (seq, r0) in self.sequences.iter().zip(&self.ideal) {
            writeln!(w, "{},{r0}", sequence_name(seq))?;
        }
        Ok(())
    }
}

pub fn sequence_name(seq: &[GateLabel]) -> String {
    seq.iter().map(|g| g.as_str()).collect()
}

/// Enumerates all gate tuples of length 1..=max_len in lexicographic order
/// (shorter sequences first). For 2 gates and max_len 4 this yields
/// 2 + 4 + 8 + 16 = 30 sequences.
pub fn enumerate_sequences(gate_count: usize, max_len: usize) -> Vec<SyndromeSequence> {
    assert!(gate_count >= 1 && gate_count <= GateLabel::ALL.len());
    assert!(max_len >= 1);
    let mut out = Vec::new();
    for len in 1..=max_len {
        let mut digits = vec![0usize; len];
        loop {
            out.push(digits.iter().map(|&d| GateLabel::ALL[d]).collect());
            // Lexicographic increment with index 0 most significant.
            let mut pos = len;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < gate_count {
                    break;
                }
                digits[pos] = 0;
            }
            if digits.iter().all(|&d| d == 0) {
                break;
            }
        }
    }
    out
}

/// Measurement outcomes |⟨0| U_seq |0⟩|² of the given realized gate unitaries
/// applied in sequence order from |0⟩.
pub fn syndrome_outcomes_from_unitaries(
    gates: &[Unitary2; 2],
    sequences: &[SyndromeSequence],
) -> Vec<f64> {
    sequences
        .iter()
        .map(|seq| {
            let mut u = Unitary2::identity();
            for label in seq {
                u = gates[label.index()].mul(&u);
            }
            u.p0()
        })
        .collect()
}

/// Ideal outcomes R⁰ computed from exact 2×2 products of the ideal gates.
pub fn ideal_outcomes(sequences: &[SyndromeSequence]) -> Vec<f64> {
    let gates = [
        GateLabel::XHalf.ideal_unitary(),
        GateLabel::YHalf.ideal_unitary(),
    ];
    syndrome_outcomes_from_unitaries(&gates, sequences)
}

/// Hold-segment protocol appended around gate pulses (used by the specific
/// device so transfer-function transients decay between gates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldSpec {
    /// Segments at the hold voltage appended after the full sequence, before
    /// the measurement.
    pub tail_segments: usize,
    /// Hold voltage, mV.
    pub voltage_mv: f64,
}

impl HoldSpec {
    pub fn none() -> Self {
        HoldSpec {
            tail_segments: 0,
            voltage_mv: 0.0,
        }
    }

    /// The specific-device protocol: ε_h = −3.18 mV, 6 extra segments at the
    /// end of every sequence. (The 4 per-gate hold segments live inside the
    /// gate pulses themselves.)
    pub fn specific() -> Self {
        HoldSpec {
            tail_segments: 6,
            voltage_mv: -3.18,
        }
    }
}

/// A candidate gate set: one pulse per gate label. Both pulses share the
/// gradient and the length convention (12 segments, or 12 + 4 hold segments
/// for the specific device).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSet {
    pub x_pulse: ControlPulse,
    pub y_pulse: ControlPulse,
}

impl GateSet {
    pub fn pulse(&self, label: GateLabel) -> &ControlPulse {
        match label {
            GateLabel::XHalf => &self.x_pulse,
            GateLabel::YHalf => &self.y_pulse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_pulse.len() != self.y_pulse.len() {
            return Err(Error::domain("gate pulses must share one length"));
        }
        if self.x_pulse.dbz != self.y_pulse.dbz {
            return Err(Error::domain("gate pulses must share one dbz"));
        }
        Ok(())
    }
}

/// Concatenates the per-gate pulses of `seq` into one control pulse, then
/// appends `tail.tail_segments` hold segments.
pub fn concat_pulses(
    gate_set: &GateSet,
    seq: &[GateLabel],
    tail: &HoldSpec,
    max_len: usize,
) -> Result<ControlPulse> {
    if seq.is_empty() {
        return Err(Error::domain("cannot concatenate an empty sequence"));
    }
    gate_set.validate()?;
    let gate_len = gate_set.x_pulse.len();
    let total = gate_len * seq.len() + tail.tail_segments;
    if total > max_len {
        return Err(Error::domain(format!(
            "sequence of {n} gates needs {total} segments, surrogate capacity is {max_len}",
            n = seq.len()
        )));
    }
    let mut eps = Vec::with_capacity(total);
    for label in seq {
        eps.extend_from_slice(&gate_set.pulse(*label).epsilons);
    }
    eps.extend(std::iter::repeat(tail.voltage_mv).take(tail.tail_segments));
    ControlPulse::new(eps, gate_set.x_pulse.dbz)
}

/// (1/N_seq) · Σ_i |R_i − R⁰_i|^exponent with exponent 2 or 4.
pub fn gsc_loss(predictions: &[f64], ideal: &[f64], exponent: u32) -> Result<f64> {
    if predictions.len() != ideal.len() {
        return Err(Error::domain(format!(
            "prediction count {} does not match syndrome count {}",
            predictions.len(),
            ideal.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::domain("gsc_loss needs at least one sequence"));
    }
    if exponent != 2 && exponent != 4 {
        return Err(Error::domain(format!("loss exponent must be 2 or 4, got {exponent}")));
    }
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(ideal)
        .map(|(r, r0)| (r - r0).abs().powi(exponent as i32))
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::qsim;
    use crate::rng::{substream, StreamKind};

    #[test]
    fn sequence_counts() {
        assert_eq!(enumerate_sequences(2, 4).len(), 30);
        assert_eq!(enumerate_sequences(2, 1).len(), 2);
        let set = SyndromeSet::new(4);
        assert_eq!(set.len(), 30);
        assert!(set.ideal.iter().all(|&r| (0.0..=1.0).contains(&r)));
    }

    #[test]
    fn length_one_sequences_are_x_then_y() {
        let seqs = enumerate_sequences(2, 1);
        assert_eq!(seqs[0], vec![GateLabel::XHalf]);
        assert_eq!(seqs[1], vec![GateLabel::YHalf]);
    }

    #[test]
    fn enumeration_is_deterministic_and_lexicographic() {
        let a = enumerate_sequences(2, 3);
        let b = enumerate_sequences(2, 3);
        assert_eq!(a, b);
        let names: Vec<String> = a.iter().map(|s| sequence_name(s)).collect();
        assert_eq!(
            &names[..6],
            &["X", "Y", "XX", "XY", "YX", "YY"]
        );
    }

    #[test]
    fn ideal_outcomes_of_short_sequences() {
        let seqs = vec![
            vec![GateLabel::XHalf],
            vec![GateLabel::XHalf, GateLabel::XHalf],
            vec![GateLabel::XHalf, GateLabel::YHalf],
        ];
        let r0 = ideal_outcomes(&seqs);
        assert!((r0[0] - 0.5).abs() < 1e-12);
        assert!(r0[1].abs() < 1e-12);
        assert!((r0[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ideal_xy_outcome_agrees_with_bloch_composition() {
        // Independent check on the Bloch sphere: starting at +z, X_π/2 maps
        // the vector to -y, then Y_π/2 rotates about y and leaves it at -y,
        // so p(|0⟩) = (1 + z)/2 = 1/2.
        let seqs = vec![vec![GateLabel::XHalf, GateLabel::YHalf]];
        let bloch_z = {
            let (mut x, mut y, mut z) = (0.0_f64, 0.0_f64, 1.0_f64);
            // X_π/2: (x, y, z) -> (x, z, -y)
            let (x1, y1, z1) = (x, z, -y);
            x = x1;
            y = y1;
            z = z1;
            // Y_π/2: (x, y, z) -> (z, y, -x)
            let (x2, y2, z2) = (z, y, -x);
            let _ = (x2, y2);
            z2
        };
        let expected = (1.0 + bloch_z) / 2.0;
        assert!((ideal_outcomes(&seqs)[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn concatenation_lengths() {
        let gate_set = GateSet {
            x_pulse: ControlPulse::new(vec![0.1; 12], 0.26).unwrap(),
            y_pulse: ControlPulse::new(vec![-0.2; 12], 0.26).unwrap(),
        };
        let seq = vec![GateLabel::XHalf; 4];
        let pulse = concat_pulses(&gate_set, &seq, &HoldSpec::none(), 50).unwrap();
        assert_eq!(pulse.len(), 48);

        let single = concat_pulses(&gate_set, &[GateLabel::YHalf], &HoldSpec::none(), 50).unwrap();
        assert_eq!(single, gate_set.y_pulse);

        assert!(concat_pulses(&gate_set, &[], &HoldSpec::none(), 50).is_err());
        assert!(concat_pulses(&gate_set, &vec![GateLabel::XHalf; 5], &HoldSpec::none(), 50).is_err());
    }

    #[test]
    fn specific_hold_protocol_lengths() {
        // 16-segment gate pulses (12 + 4 hold) plus a 6-segment tail.
        let gate_set = GateSet {
            x_pulse: ControlPulse::new(vec![0.1; 16], 0.26).unwrap(),
            y_pulse: ControlPulse::new(vec![-0.2; 16], 0.26).unwrap(),
        };
        let seq = vec![GateLabel::XHalf, GateLabel::YHalf];
        let pulse = concat_pulses(&gate_set, &seq, &HoldSpec::specific(), 70).unwrap();
        assert_eq!(pulse.len(), 2 * 16 + 6);
        assert!(pulse.epsilons[32..].iter().all(|&e| e == -3.18));
    }

    #[test]
    fn loss_basics() {
        let ideal = vec![0.5, 0.0, 1.0];
        assert_eq!(gsc_loss(&ideal, &ideal, 2).unwrap(), 0.0);
        let off = vec![0.6];
        let l = gsc_loss(&off, &[0.5], 2).unwrap();
        assert!((l - 0.01).abs() < 1e-15);
        assert!(gsc_loss(&[0.1, 0.2], &[0.1], 2).is_err());
        assert!(gsc_loss(&off, &[0.5], 3).is_err());
    }

    #[test]
    fn exponent_four_is_below_exponent_two_for_small_residuals() {
        let mut rng = substream(4, StreamKind::Measurement, 0, 0);
        for _ in 0..200 {
            let ideal: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
            let preds: Vec<f64> = ideal
                .iter()
                .map(|r| (r + rng.gen_range(-0.5..0.5)).clamp(0.0, 1.0))
                .collect();
            let l2 = gsc_loss(&preds, &ideal, 2).unwrap();
            let l4 = gsc_loss(&preds, &ideal, 4).unwrap();
            assert!(l4 <= l2 + 1e-15);
        }
    }

    #[test]
    fn ideal_gates_have_zero_loss_through_the_outcome_pathway() {
        let set = SyndromeSet::new(4);
        let gates = [
            GateLabel::XHalf.ideal_unitary(),
            GateLabel::YHalf.ideal_unitary(),
        ];
        let outcomes = syndrome_outcomes_from_unitaries(&gates, &set.sequences);
        let loss = gsc_loss(&outcomes, &set.ideal, 2).unwrap();
        assert!(loss < 1e-10, "loss = {loss}");
    }

    #[test]
    fn syndromes_are_invariant_under_global_z_conjugation() {
        // Gate sets {R_Z(-θ) G R_Z(θ)} produce identical syndromes: the
        // calibration loss cannot see the global-Z gauge.
        let set = SyndromeSet::new(4);
        let mut rng = substream(5, StreamKind::Measurement, 0, 0);
        for _ in 0..20 {
            // Arbitrary realized gates, not necessarily close to ideal.
            let rand_u = |rng: &mut rand_chacha::ChaCha8Rng| {
                Unitary2::rz(rng.gen_range(-3.0..3.0))
                    .mul(&Unitary2::rx(rng.gen_range(0.0..3.0)))
                    .mul(&Unitary2::rz(rng.gen_range(-3.0..3.0)))
            };
            let gates = [rand_u(&mut rng), rand_u(&mut rng)];
            let base = syndrome_outcomes_from_unitaries(&gates, &set.sequences);
            for theta in [-2.1, 0.4, 1.8] {
                let conj = |g: &Unitary2| {
                    Unitary2::rz(-theta).mul(g).mul(&Unitary2::rz(theta))
                };
                let rotated = [conj(&gates[0]), conj(&gates[1])];
                let moved = syndrome_outcomes_from_unitaries(&rotated, &set.sequences);
                for (a, b) in base.iter().zip(&moved) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn pulse_level_outcomes_match_unitary_level_outcomes() {
        // Concatenating pulses and propagating the result must agree with
        // propagating each gate pulse and multiplying the unitaries (identity
        // kernel keeps segments local).
        let mut cfg = qsim::QubitConfig::general();
        cfg.kernel = qsim::KernelSpec::Identity;
        cfg.noise.enabled = false;
        let kernel = qsim::TransferKernel::identity();

        let mut rng = substream(6, StreamKind::ProbePulse, 0, 0);
        let mut random_gate_pulse = || {
            let eps: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.4..1.27)).collect();
            ControlPulse::new(eps, qsim::DBZ_DEFAULT).unwrap()
        };
        let gate_set = GateSet {
            x_pulse: random_gate_pulse(),
            y_pulse: random_gate_pulse(),
        };
        let propagate_quiet = |p: &ControlPulse| {
            qsim::propagate(
                p,
                &cfg.exchange,
                &kernel,
                &qsim::NoiseRealization::quiet(p.dbz, p.len()),
            )
            .unwrap()
        };
        let gates = [
            propagate_quiet(&gate_set.x_pulse),
            propagate_quiet(&gate_set.y_pulse),
        ];

        let set = SyndromeSet::new(4);
        let from_unitaries = syndrome_outcomes_from_unitaries(&gates, &set.sequences);
        for (seq, expect) in set.sequences.iter().zip(&from_unitaries) {
            let pulse = concat_pulses(&gate_set, seq, &HoldSpec::none(), 48).unwrap();
            let got = propagate_quiet(&pulse).p0();
            assert!((got - expect).abs() < 1e-10, "{}", sequence_name(seq));
        }
    }
}
