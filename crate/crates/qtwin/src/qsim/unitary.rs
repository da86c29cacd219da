//! 2×2 unitaries, piecewise-constant propagation, and gate-quality measures.
//!
//! The single-segment propagator uses the exact closed form
//! exp(-iθ n̂·σ) = cos θ · I − i sin θ · (n̂·σ), so unitarity holds to machine
//! precision without any series truncation.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qsim::exchange::{exchange_rate, ExchangeModel};
use crate::qsim::kernel::TransferKernel;
use crate::qsim::noise::NoiseRealization;
use crate::qsim::ControlPulse;

/// Segment duration; the whole crate works on a fixed 1 ns grid.
pub const DT_NS: f64 = 1.0;

/// A 2×2 complex matrix expected (but not forced) to be unitary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2 {
    pub m: [[C64; 2]; 2],
}

impl Unitary2 {
    pub fn new(m: [[C64; 2]; 2]) -> Self {
        Unitary2 { m }
    }

    pub fn identity() -> Self {
        Unitary2 {
            m: [
                [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
                [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            ],
        }
    }

    /// R_X(θ) = exp(-iθσ_X/2).
    pub fn rx(theta: f64) -> Self {
        let c = C64::new((theta / 2.0).cos(), 0.0);
        let s = C64::new(0.0, -(theta / 2.0).sin());
        Unitary2 { m: [[c, s], [s, c]] }
    }

    /// R_Y(θ) = exp(-iθσ_Y/2).
    pub fn ry(theta: f64) -> Self {
        let c = C64::new((theta / 2.0).cos(), 0.0);
        let s = (theta / 2.0).sin();
        Unitary2 {
            m: [
                [c, C64::new(-s, 0.0)],
                [C64::new(s, 0.0), c],
            ],
        }
    }

    /// R_Z(θ) = exp(-iθσ_Z/2).
    pub fn rz(theta: f64) -> Self {
        Unitary2 {
            m: [
                [C64::from_polar(1.0, -theta / 2.0), C64::new(0.0, 0.0)],
                [C64::new(0.0, 0.0), C64::from_polar(1.0, theta / 2.0)],
            ],
        }
    }

    /// exp(-i (j/2 σ_Z + dbz/2 σ_X) dt) for one segment.
    pub fn segment(j: f64, dbz: f64, dt: f64) -> Self {
        let az = 0.5 * j * dt;
        let ax = 0.5 * dbz * dt;
        let theta = (az * az + ax * ax).sqrt();
        if theta == 0.0 {
            return Self::identity();
        }
        let (nc, ns) = (theta.cos(), theta.sin());
        let (nx, nz) = (ax / theta, az / theta);
        Unitary2 {
            m: [
                [C64::new(nc, -ns * nz), C64::new(0.0, -ns * nx)],
                [C64::new(0.0, -ns * nx), C64::new(nc, ns * nz)],
            ],
        }
    }

    pub fn mul(&self, rhs: &Unitary2) -> Unitary2 {
        let a = &self.m;
        let b = &rhs.m;
        Unitary2 {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                ],
            ],
        }
    }

    pub fn adjoint(&self) -> Unitary2 {
        Unitary2 {
            m: [
                [self.m[0][0].conj(), self.m[1][0].conj()],
                [self.m[0][1].conj(), self.m[1][1].conj()],
            ],
        }
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// max-norm of U†U − I.
    pub fn unitarity_deviation(&self) -> f64 {
        let p = self.adjoint().mul(self);
        let mut dev: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let expect = if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                dev = dev.max((p.m[r][c] - expect).norm());
            }
        }
        dev
    }

    /// Survival probability of |0⟩: |⟨0|U|0⟩|².
    pub fn p0(&self) -> f64 {
        self.m[0][0].norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.m
            .iter()
            .flatten()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// max entry-norm of the difference U − e^{iφ}V, minimized over the
    /// global phase φ.
    pub fn distance_up_to_phase(&self, other: &Unitary2) -> f64 {
        let tr = other.adjoint().mul(self).trace();
        let phase = if tr.norm() > 1e-300 { tr / tr.norm() } else { C64::new(1.0, 0.0) };
        let mut dev: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                dev = dev.max((self.m[r][c] - phase * other.m[r][c]).norm());
            }
        }
        dev
    }
}

/// Propagates one pulse under a fixed noise realization:
/// U = Π_t exp(-i [J(ε'_t)/2 σ_Z + ΔB_Z/2 σ_X] Δt), evolving over exactly the
/// L programmed segments. Quasi-static and fast detuning offsets are added
/// after the transfer function, before the exchange nonlinearity.
pub fn propagate(
    pulse: &ControlPulse,
    model: &ExchangeModel,
    kernel: &TransferKernel,
    noise: &NoiseRealization,
) -> Result<Unitary2> {
    let distorted = kernel.distort_in_window(&pulse.epsilons);
    let mut u = Unitary2::identity();
    for (t, &eps) in distorted.iter().enumerate() {
        let fast = noise.fast_mv.get(t).copied().unwrap_or(0.0);
        let eps_eff = eps + noise.eps_offset_mv + fast;
        let j = exchange_rate(model, eps_eff)
            .map_err(|_| Error::numeric(format!("propagate segment {t}"), "non-finite detuning"))?;
        let step = Unitary2::segment(j, noise.dbz, DT_NS);
        u = step.mul(&u);
        if !u.is_finite() {
            return Err(Error::numeric(
                format!("propagate segment {t}"),
                "non-finite propagator entry",
            ));
        }
    }
    Ok(u)
}

/// Entanglement fidelity F = |Tr(U†V)|² / d² with d = 2.
pub fn entanglement_fidelity(u: &Unitary2, v: &Unitary2) -> f64 {
    u.adjoint().mul(v).trace().norm_sqr() / 4.0
}

fn wrap_angle(a: f64) -> f64 {
    // Wraps to (-π, π].
    let two_pi = std::f64::consts::TAU;
    let mut x = a % two_pi;
    if x <= -std::f64::consts::PI {
        x += two_pi;
    } else if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// ZXZ Euler decomposition: returns (φ_Z1, φ_X, φ_Z2) with φ_X ∈ [0, π] such
/// that R_Z(φ_Z1)·R_X(φ_X)·R_Z(φ_Z2) equals `u` up to a global phase.
///
/// Degenerate axes (φ_X ≈ 0 or π) put the whole Z angle into φ_Z1 and set
/// φ_Z2 = 0.
pub fn euler_zxz(u: &Unitary2) -> (f64, f64, f64) {
    // Strip the global phase: V = e^{-i arg(det)/2} U ∈ SU(2).
    let det = u.det();
    let half_phase = 0.5 * det.arg();
    let phase = C64::from_polar(1.0, -half_phase);
    let v00 = phase * u.m[0][0];
    let v01 = phase * u.m[0][1];

    // For V = R_Z(a)R_X(b)R_Z(c):
    //   V00 = cos(b/2)·e^{-i(a+c)/2},  V01 = sin(b/2)·e^{-i((a-c)+π)/2}.
    let phi_x = 2.0 * v01.norm().atan2(v00.norm());

    const DEGENERATE: f64 = 1e-9;
    if phi_x < DEGENERATE {
        let sum = wrap_angle(-2.0 * v00.arg());
        return (sum, phi_x, 0.0);
    }
    if (std::f64::consts::PI - phi_x) < DEGENERATE {
        let diff = wrap_angle(-2.0 * v01.arg() - std::f64::consts::PI);
        return (diff, phi_x, 0.0);
    }

    let sum = -2.0 * v00.arg();
    let diff = -2.0 * v01.arg() - std::f64::consts::PI;
    (
        wrap_angle(0.5 * (sum + diff)),
        phi_x,
        wrap_angle(0.5 * (sum - diff)),
    )
}

/// Ideal ZXZ angles of the target gates: X_{π/2} = (0, π/2, 0) and
/// Y_{π/2} = R_Z(π/2)·R_X(π/2)·R_Z(-π/2).
pub const IDEAL_X_ZXZ: (f64, f64, f64) = (0.0, std::f64::consts::FRAC_PI_2, 0.0);
pub const IDEAL_Y_ZXZ: (f64, f64, f64) = (
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
    -std::f64::consts::FRAC_PI_2,
);

/// Estimates the global-Z gauge angle θ of a realized {X_{π/2}, Y_{π/2}} pair
/// and removes it: each gate is returned as R_Z(θ)·G·R_Z(-θ).
///
/// θ is the least-squares combination of the Z-angle residuals of both gates
/// against the ideal decomposition: a gate R_Z(-θ)·G_ideal·R_Z(θ) has
/// φ_Z1 = ideal - θ and φ_Z2 = ideal + θ, so each residual provides one θ
/// estimate and the four estimates are averaged.
pub fn global_z_correct(x_gate: &Unitary2, y_gate: &Unitary2) -> (f64, [Unitary2; 2]) {
    let mut estimates = Vec::with_capacity(4);
    for (gate, ideal) in [(x_gate, IDEAL_X_ZXZ), (y_gate, IDEAL_Y_ZXZ)] {
        let (z1, _, z2) = euler_zxz(gate);
        estimates.push(wrap_angle(ideal.0 - z1));
        estimates.push(wrap_angle(z2 - ideal.2));
    }
    let theta = estimates.iter().sum::<f64>() / estimates.len() as f64;

    let pre = Unitary2::rz(theta);
    let post = Unitary2::rz(-theta);
    let corrected = [pre.mul(x_gate).mul(&post), pre.mul(y_gate).mul(&post)];
    (theta, corrected)
}
