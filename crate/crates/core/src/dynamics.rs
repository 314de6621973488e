//! Rigid-body quadrotor dynamics on SE(3).
//!
//! The translational model keeps the sign convention of the classic
//! cascaded-controller literature verbatim:
//!
//! ```text
//! r̈ = g·z_w − R·z_w·f/m        (z̈ = g − R33·f/m)
//! Ṙ = R·[Ω]x
//! I·Ω̇ = τ − Ω × I·Ω
//! ```
//!
//! so hover needs `f = m·g / R33`. Attitude is carried as a rotation matrix;
//! Euler angles are derived for logging and yaw control only.

use nalgebra::{Matrix3, Vector3};

use crate::math::{asin, atan2, cos, fabs, max_abs, sin, skew};
use crate::{Error, Result};

/// Full rigid-body state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    /// Inertial position `[x, y, z]`, m.
    pub position: Vector3<f64>,
    /// Body-to-world rotation.
    pub rotation: Matrix3<f64>,
    /// Inertial velocity `[ẋ, ẏ, ż]`, m/s.
    pub velocity: Vector3<f64>,
    /// Body rates `[p, q, r_rate]`, rad/s.
    pub body_rates: Vector3<f64>,
}

impl QuadState {
    /// Level vehicle at rest at `position`.
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            rotation: Matrix3::identity(),
            velocity: Vector3::zeros(),
            body_rates: Vector3::zeros(),
        }
    }

    /// `true` when every field is finite.
    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.body_rates.iter().all(|v| v.is_finite())
    }

    /// Entry `R_ij` with 1-based indices, matching the usual notation.
    #[inline]
    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.rotation[(i - 1, j - 1)]
    }

    fn add_scaled(&self, d: &StateDerivative, h: f64) -> Self {
        Self {
            position: self.position + d.position * h,
            rotation: self.rotation + d.rotation * h,
            velocity: self.velocity + d.velocity * h,
            body_rates: self.body_rates + d.body_rates * h,
        }
    }
}

/// Time derivative of a [`QuadState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    /// ṙ, m/s.
    pub position: Vector3<f64>,
    /// Ṙ.
    pub rotation: Matrix3<f64>,
    /// v̇, m/s².
    pub velocity: Vector3<f64>,
    /// Ω̇, rad/s².
    pub body_rates: Vector3<f64>,
}

/// Total thrust and body moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    /// Total thrust `f`, N.
    pub thrust: f64,
    /// Moments `[τx, τy, τz]`, N·m.
    pub torque: Vector3<f64>,
}

impl ControlInput {
    /// Thrust only, zero moments.
    pub fn thrust_only(thrust: f64) -> Self {
        Self {
            thrust,
            torque: Vector3::zeros(),
        }
    }

    /// `true` when the input respects the thrust and roll/pitch moment bounds.
    pub fn within_bounds(&self, params: &QuadParams, tol: f64) -> bool {
        self.thrust >= -tol
            && self.thrust <= params.f_max + tol
            && fabs(self.torque.x) <= params.tau_max[0] + tol
            && fabs(self.torque.y) <= params.tau_max[1] + tol
    }
}

/// Physical parameters of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadParams {
    /// Gravity, m/s².
    pub gravity: f64,
    /// Mass, kg.
    pub mass: f64,
    /// Diagonal inertia `[Ix, Iy, Iz]`, kg·m².
    pub inertia: Vector3<f64>,
    /// Maximum total thrust, N.
    pub f_max: f64,
    /// Moment bounds about x_B and y_B, N·m.
    pub tau_max: [f64; 2],
    /// Rotor separation, m. Carried for completeness; unused by the model.
    pub arm_length: f64,
    /// Motor thrust constant. Unused by the model.
    pub k_f: f64,
    /// Motor torque constant. Unused by the model.
    pub k_w: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            mass: 0.45,
            inertia: Vector3::new(0.091, 0.091, 0.182),
            f_max: 36.0,
            tau_max: [20.0, 20.0],
            arm_length: 0.24,
            k_f: 0.88,
            k_w: 1.00,
        }
    }
}

impl QuadParams {
    /// Thrust that balances gravity with a level attitude.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Checks positivity and hover feasibility.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.gravity) {
            return Err(Error::InvalidConfig { field: "gravity", reason: "must be > 0" });
        }
        if !positive(self.mass) {
            return Err(Error::InvalidConfig { field: "mass", reason: "must be > 0" });
        }
        if !self.inertia.iter().all(|&v| positive(v)) {
            return Err(Error::InvalidConfig { field: "inertia", reason: "entries must be > 0" });
        }
        if !self.tau_max.iter().all(|&v| v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidConfig { field: "tau_max", reason: "must be >= 0" });
        }
        if !(self.f_max.is_finite() && self.f_max > self.hover_thrust()) {
            return Err(Error::InvalidConfig {
                field: "f_max",
                reason: "must exceed m*g for hover feasibility",
            });
        }
        if ![self.arm_length, self.k_f, self.k_w].iter().all(|&v| positive(v)) {
            return Err(Error::InvalidConfig {
                field: "arm_length/k_f/k_w",
                reason: "must be > 0",
            });
        }
        Ok(())
    }
}

/// Right-hand side of the rigid-body model.
pub fn deriv(state: &QuadState, u: &ControlInput, params: &QuadParams) -> StateDerivative {
    let z_w = Vector3::z();
    let inertia = params.inertia;
    let w = state.body_rates;
    let iw = inertia.component_mul(&w);
    let accel = z_w * params.gravity - state.rotation * z_w * (u.thrust / params.mass);
    StateDerivative {
        position: state.velocity,
        rotation: state.rotation * skew(&w),
        velocity: accel,
        body_rates: (u.torque - w.cross(&iw)).component_div(&inertia),
    }
}

/// One classical RK4 step with zero-order-hold input, followed by projection
/// of the rotation back onto SO(3).
pub fn step(state: &QuadState, u: &ControlInput, params: &QuadParams, dt: f64) -> Result<QuadState> {
    debug_assert!(dt > 0.0);
    let next = rk4(state, u, params, dt);
    let next = QuadState {
        rotation: nearest_rotation(&next.rotation),
        ..next
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFiniteState { t: f64::NAN })
    }
}

/// Plain RK4 step without re-orthonormalization. Negative `dt` integrates
/// backwards.
pub fn rk4(state: &QuadState, u: &ControlInput, params: &QuadParams, dt: f64) -> QuadState {
    let k1 = deriv(state, u, params);
    let k2 = deriv(&state.add_scaled(&k1, dt / 2.0), u, params);
    let k3 = deriv(&state.add_scaled(&k2, dt / 2.0), u, params);
    let k4 = deriv(&state.add_scaled(&k3, dt), u, params);
    let sixth = dt / 6.0;
    QuadState {
        position: state.position
            + (k1.position + k2.position * 2.0 + k3.position * 2.0 + k4.position) * sixth,
        rotation: state.rotation
            + (k1.rotation + k2.rotation * 2.0 + k3.rotation * 2.0 + k4.rotation) * sixth,
        velocity: state.velocity
            + (k1.velocity + k2.velocity * 2.0 + k3.velocity * 2.0 + k4.velocity) * sixth,
        body_rates: state.body_rates
            + (k1.body_rates + k2.body_rates * 2.0 + k3.body_rates * 2.0 + k4.body_rates) * sixth,
    }
}

/// Orthogonal polar factor of `m` (the closest rotation in Frobenius norm
/// for matrices with positive determinant), by Newton iteration
/// `X ← (X + X⁻ᵀ)/2`.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut x = *m;
    for _ in 0..20 {
        let Some(inv) = x.try_inverse() else {
            return x;
        };
        let next = (x + inv.transpose()) * 0.5;
        let delta = max_abs(&(next - x));
        x = next;
        if delta < 1e-15 {
            break;
        }
    }
    x
}

/// Z-Y-X Euler angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    /// φ, rad.
    pub roll: f64,
    /// θ, rad.
    pub pitch: f64,
    /// ψ, rad.
    pub yaw: f64,
    /// Set when |R31| is within 1e-9 of 1; roll is then pinned to zero and
    /// the yaw carries the combined rotation.
    pub gimbal_lock: bool,
}

/// Extracts (φ, θ, ψ) with `R = Rz(ψ)·Ry(θ)·Rx(φ)`.
pub fn euler_of_r(r: &Matrix3<f64>) -> EulerAngles {
    let r31 = r[(2, 0)].clamp(-1.0, 1.0);
    let pitch = -asin(r31);
    if fabs(r31) > 1.0 - 1e-9 {
        return EulerAngles {
            roll: 0.0,
            pitch,
            yaw: atan2(-r[(0, 1)], r[(1, 1)]),
            gimbal_lock: true,
        };
    }
    EulerAngles {
        roll: atan2(r[(2, 1)], r[(2, 2)]),
        pitch,
        yaw: atan2(r[(1, 0)], r[(0, 0)]),
        gimbal_lock: false,
    }
}

/// `Rz(ψ)·Ry(θ)·Rx(φ)`.
pub fn rotation_from_euler(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sf, cf) = (sin(roll), cos(roll));
    let (st, ct) = (sin(pitch), cos(pitch));
    let (sp, cp) = (sin(yaw), cos(yaw));
    let rz = Matrix3::new(cp, -sp, 0.0, sp, cp, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(ct, 0.0, st, 0.0, 1.0, 0.0, -st, 0.0, ct);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cf, -sf, 0.0, sf, cf);
    rz * ry * rx
}

/// Rotational kinetic energy ½ΩᵀIΩ.
pub fn rotational_energy(state: &QuadState, params: &QuadParams) -> f64 {
    0.5 * state.body_rates.dot(&params.inertia.component_mul(&state.body_rates))
}
