//! Nominal cascaded controller.
//!
//! Position loop → thrust (altitude) and commanded tilt (lateral) → attitude
//! loop producing body-rate commands → body-rate loop producing moments.
//! All loops are memoryless.

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::dynamics::{euler_of_r, QuadParams, QuadState};
use crate::math::{fabs, wrap_angle};
use crate::{Error, Result};

/// Smallest R33 the thrust and rate inversions accept.
pub const R33_MIN: f64 = 0.2;
/// Bound on commanded |R13| and |R23|.
pub const SIN_TILT_MAX: f64 = 0.9;
/// Thrust floor for the attitude inversion, as a fraction of m·g.
pub const THRUST_FLOOR_FRACTION: f64 = 0.05;

/// Gains of the three loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    /// Diagonal of Kp.
    pub kp: Vector3<f64>,
    /// Diagonal of Kd.
    pub kd: Vector3<f64>,
    /// Rotation-entry regulator gain.
    pub k_r: f64,
    /// Yaw proportional gain.
    pub k_psi: f64,
    /// Body-rate proportional gains.
    pub k_omega: Vector3<f64>,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: Vector3::new(8.0, 8.0, 12.0),
            kd: Vector3::new(5.0, 5.0, 7.0),
            k_r: 8.0,
            k_psi: 2.0,
            k_omega: Vector3::new(25.0, 25.0, 10.0),
        }
    }
}

impl ControllerGains {
    /// All gains must be finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !self.kp.iter().all(|&v| ok(v)) {
            return Err(Error::InvalidConfig { field: "kp", reason: "entries must be > 0" });
        }
        if !self.kd.iter().all(|&v| ok(v)) {
            return Err(Error::InvalidConfig { field: "kd", reason: "entries must be > 0" });
        }
        if !ok(self.k_r) {
            return Err(Error::InvalidConfig { field: "k_r", reason: "must be > 0" });
        }
        if !ok(self.k_psi) {
            return Err(Error::InvalidConfig { field: "k_psi", reason: "must be > 0" });
        }
        if !self.k_omega.iter().all(|&v| ok(v)) {
            return Err(Error::InvalidConfig { field: "k_omega", reason: "entries must be > 0" });
        }
        Ok(())
    }
}

/// Desired trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    /// r_d, m.
    pub position: Vector3<f64>,
    /// ṙ_d, m/s.
    pub velocity: Vector3<f64>,
    /// r̈_d, m/s².
    pub acceleration: Vector3<f64>,
    /// ψ_d, rad.
    pub yaw: f64,
}

impl Reference {
    /// Stationary reference at `position` with zero yaw.
    pub fn hold(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            yaw: 0.0,
        }
    }
}

/// Output of the nominal controller before safety filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalCommand {
    /// Nominal thrust û₁, N.
    pub thrust: f64,
    /// Nominal moments; `[τx, τy]` is û₂.
    pub torque: Vector3<f64>,
    /// Commanded acceleration, m/s².
    pub accel_cmd: Vector3<f64>,
    /// Commanded body rates, rad/s.
    pub omega_cmd: Vector3<f64>,
}

/// r̈_cmd = r̈_d + Kp(r_d − r) + Kd(ṙ_d − ṙ).
pub fn position_loop(state: &QuadState, reference: &Reference, gains: &ControllerGains) -> Vector3<f64> {
    reference.acceleration
        + gains.kp.component_mul(&(reference.position - state.position))
        + gains.kd.component_mul(&(reference.velocity - state.velocity))
}

/// f̂ = m(g − z̈_cmd)/R33, clamped to [0, f_max].
pub fn thrust_from_accel(z_accel_cmd: f64, r33: f64, params: &QuadParams) -> Result<f64> {
    if !(r33 >= R33_MIN) {
        return Err(Error::AttitudeSingular { r33, min: R33_MIN });
    }
    let f = params.mass / r33 * (params.gravity - z_accel_cmd);
    Ok(f.clamp(0.0, params.f_max))
}

/// Minimum thrust the attitude inversion and lateral chains accept.
pub fn thrust_floor(params: &QuadParams) -> f64 {
    THRUST_FLOOR_FRACTION * params.hover_thrust()
}

/// Commanded body rates from commanded acceleration, applied thrust and
/// desired yaw.
pub fn attitude_loop(
    state: &QuadState,
    accel_cmd: &Vector3<f64>,
    thrust: f64,
    yaw_desired: f64,
    gains: &ControllerGains,
    params: &QuadParams,
) -> Result<Vector3<f64>> {
    let floor = thrust_floor(params);
    if !(thrust > floor) {
        return Err(Error::ThrustTooSmall { thrust, floor });
    }
    let r33 = state.r(3, 3);
    if !(r33 >= R33_MIN) {
        return Err(Error::AttitudeSingular { r33, min: R33_MIN });
    }
    // ẍ = −R13·f/m, ÿ = −R23·f/m inverted for the tilt entries.
    let tilt_cmd = Vector2::new(
        (-params.mass * accel_cmd.x / thrust).clamp(-SIN_TILT_MAX, SIN_TILT_MAX),
        (-params.mass * accel_cmd.y / thrust).clamp(-SIN_TILT_MAX, SIN_TILT_MAX),
    );
    let tilt = Vector2::new(state.r(1, 3), state.r(2, 3));
    let tilt_rate_cmd = (tilt_cmd - tilt) * gains.k_r;
    let w = Matrix2::new(state.r(2, 1), -state.r(1, 1), state.r(2, 2), -state.r(1, 2));
    let pq = w * tilt_rate_cmd / r33;
    let yaw = euler_of_r(&state.rotation).yaw;
    let r_rate = gains.k_psi * wrap_angle(yaw_desired - yaw);
    Ok(Vector3::new(pq.x, pq.y, r_rate))
}

/// τ̂ = I·k_Ω∘(Ω_cmd − Ω) + Ω × IΩ, clamped to the moment bounds.
///
/// τz has no bound in the parameter table and passes through unclamped.
pub fn body_rate_loop(
    state: &QuadState,
    omega_cmd: &Vector3<f64>,
    gains: &ControllerGains,
    params: &QuadParams,
) -> Vector3<f64> {
    let w = state.body_rates;
    let accel_cmd = gains.k_omega.component_mul(&(omega_cmd - w));
    let tau = params.inertia.component_mul(&accel_cmd) + w.cross(&params.inertia.component_mul(&w));
    clamp_moments(tau, params)
}

/// Clamps τx, τy elementwise to the moment bounds.
pub fn clamp_moments(mut tau: Vector3<f64>, params: &QuadParams) -> Vector3<f64> {
    tau.x = tau.x.clamp(-params.tau_max[0], params.tau_max[0]);
    tau.y = tau.y.clamp(-params.tau_max[1], params.tau_max[1]);
    tau
}

/// Whether |τx|, |τy| are already inside the bounds.
pub fn moments_within_bounds(tau: &Vector3<f64>, params: &QuadParams) -> bool {
    fabs(tau.x) <= params.tau_max[0] && fabs(tau.y) <= params.tau_max[1]
}
