//! Rectellipse barrier functions and their Lie-derivative chains.
//!
//! A barrier constrains one or two states `s_j` to the region
//!
//! ```text
//! h = 1 − Σ_j ((s_j − c_j) / p_j)^r ≥ 0
//! ```
//!
//! Each chain differentiates `h` along the dynamics until the filtered input
//! appears and returns one affine QP row `a·u + b ≥ 0` with
//! `a = L_g L_f^{δ−1} h` and `b = L_f^δ h + Kᵀ𝓗`.
//!
//! | domain             | states   | input    | δ |
//! |--------------------|----------|----------|---|
//! | altitude position  | z        | thrust   | 2 |
//! | altitude pos + vel | z, ż     | thrust   | 1 |
//! | lateral position   | x, y     | τx, τy   | 4 |
//! | lateral velocity   | ẋ, ẏ     | τx, τy   | 3 |
//!
//! The lateral chains hold the thrust fixed at the value the high-level QP
//! already chose this step.
//!
//! Every chain is written against the general even exponent `r` through the
//! derivatives of `(e/p)^r` with respect to `e`; for `r = 4` they reduce to
//! the familiar `4e³/p⁴, 12e²/p⁴, 24e/p⁴, 24/p⁴` coefficients.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::controller::thrust_floor;
use crate::dynamics::{QuadParams, QuadState};
use crate::math::{fabs, powi};
use crate::{Error, Result};

/// Guard on |det W| for the lateral chains.
pub const DET_W_MIN: f64 = 1e-3;

/// Which states a barrier constrains and through which QP it acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BarrierDomain {
    /// `h(z)`, relative degree 2 in thrust.
    AltitudePosition,
    /// `h(z, ż)`, relative degree 1 in thrust.
    AltitudePosVel,
    /// `h(x, y)`, relative degree 4 in roll/pitch moments.
    LateralPosition,
    /// `h(ẋ, ẏ)`, relative degree 3 in roll/pitch moments.
    LateralVelocity,
}

impl BarrierDomain {
    /// All domains in trace-column order.
    pub const ALL: [BarrierDomain; 4] = [
        BarrierDomain::AltitudePosition,
        BarrierDomain::AltitudePosVel,
        BarrierDomain::LateralPosition,
        BarrierDomain::LateralVelocity,
    ];

    /// Number of input differentiations before the filtered input appears.
    pub fn relative_degree(self) -> usize {
        match self {
            BarrierDomain::AltitudePosition => 2,
            BarrierDomain::AltitudePosVel => 1,
            BarrierDomain::LateralPosition => 4,
            BarrierDomain::LateralVelocity => 3,
        }
    }

    /// Dimension of the QP this barrier feeds.
    pub fn input_dim(self) -> usize {
        if self.is_altitude() {
            1
        } else {
            2
        }
    }

    /// `true` for the thrust-level (high-level QP) domains.
    pub fn is_altitude(self) -> bool {
        matches!(self, BarrierDomain::AltitudePosition | BarrierDomain::AltitudePosVel)
    }

    /// Number of states in the rectellipse.
    pub fn term_count(self) -> usize {
        match self {
            BarrierDomain::AltitudePosition => 1,
            _ => 2,
        }
    }

    /// Short identifier used in files and logs.
    pub fn name(self) -> &'static str {
        match self {
            BarrierDomain::AltitudePosition => "altitude-position",
            BarrierDomain::AltitudePosVel => "altitude-posvel",
            BarrierDomain::LateralPosition => "lateral-position",
            BarrierDomain::LateralVelocity => "lateral-velocity",
        }
    }

    /// Index into [`BarrierDomain::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

/// One rectellipse safety region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    /// Constrained states.
    pub domain: BarrierDomain,
    /// Centers `c_j` in the units of each state (unused slots are 0).
    pub center: [f64; 2],
    /// Half-widths `p_j` / `v_j` (unused slots are 1).
    pub half_width: [f64; 2],
    /// Even exponent `r`.
    pub exponent: u32,
    /// Activation time, s.
    pub active_from: f64,
    /// Deactivation time, s (exclusive; `f64::INFINITY` for never).
    pub active_until: f64,
}

impl BarrierSpec {
    fn new(domain: BarrierDomain, center: [f64; 2], half_width: [f64; 2]) -> Self {
        Self {
            domain,
            center,
            half_width,
            exponent: 4,
            active_from: 0.0,
            active_until: f64::INFINITY,
        }
    }

    /// `h(z) = 1 − ((z − c_z)/p_z)^r`.
    pub fn altitude_position(c_z: f64, p_z: f64) -> Self {
        Self::new(BarrierDomain::AltitudePosition, [c_z, 0.0], [p_z, 1.0])
    }

    /// `h(z, ż) = 1 − ((z − c_z)/p_z)^r − ((ż − c_vz)/v_z)^r`.
    pub fn altitude_posvel(c_z: f64, p_z: f64, c_vz: f64, v_z: f64) -> Self {
        Self::new(BarrierDomain::AltitudePosVel, [c_z, c_vz], [p_z, v_z])
    }

    /// `h(x, y) = 1 − ((x − c_x)/p_x)^r − ((y − c_y)/p_y)^r`.
    pub fn lateral_position(c: [f64; 2], p: [f64; 2]) -> Self {
        Self::new(BarrierDomain::LateralPosition, c, p)
    }

    /// `h(ẋ, ẏ) = 1 − ((ẋ − c_vx)/v_x)^r − ((ẏ − c_vy)/v_y)^r`.
    pub fn lateral_velocity(c: [f64; 2], v: [f64; 2]) -> Self {
        Self::new(BarrierDomain::LateralVelocity, c, v)
    }

    /// Sets the activity window `[from, until)`.
    pub fn active(mut self, from: f64, until: f64) -> Self {
        self.active_from = from;
        self.active_until = until;
        self
    }

    /// Overrides the exponent.
    pub fn with_exponent(mut self, exponent: u32) -> Self {
        self.exponent = exponent;
        self
    }

    /// Whether the spec applies at time `t`.
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.active_from && t < self.active_until
    }

    /// Checks half-widths, exponent and activity window.
    pub fn validate(&self) -> Result<()> {
        let n = self.domain.term_count();
        if !self.half_width[..n].iter().all(|&p| p.is_finite() && p > 0.0) {
            return Err(Error::InvalidConfig { field: "half_width", reason: "must be > 0" });
        }
        if !self.center[..n].iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidConfig { field: "center", reason: "must be finite" });
        }
        if self.exponent < 2 || self.exponent % 2 != 0 {
            return Err(Error::InvalidConfig { field: "exponent", reason: "must be even and >= 2" });
        }
        if !(self.active_from.is_finite() && self.active_from >= 0.0 && self.active_until > self.active_from) {
            return Err(Error::InvalidConfig {
                field: "active_from/active_until",
                reason: "need 0 <= active_from < active_until",
            });
        }
        Ok(())
    }

    /// The constrained state values, in the order of `center`/`half_width`.
    pub fn state_values(&self, state: &QuadState) -> [f64; 2] {
        let (p, v) = (&state.position, &state.velocity);
        match self.domain {
            BarrierDomain::AltitudePosition => [p.z, 0.0],
            BarrierDomain::AltitudePosVel => [p.z, v.z],
            BarrierDomain::LateralPosition => [p.x, p.y],
            BarrierDomain::LateralVelocity => [v.x, v.y],
        }
    }

    /// `h` at the given state.
    pub fn h(&self, state: &QuadState) -> f64 {
        let values = self.state_values(state);
        rectellipse_h(&values[..self.domain.term_count()], self)
    }
}

/// `h = 1 − Σ_j ((x_j − c_j)/p_j)^r` over the first `values.len()` terms.
pub fn rectellipse_h(values: &[f64], spec: &BarrierSpec) -> f64 {
    values
        .iter()
        .zip(spec.center.iter().zip(spec.half_width.iter()))
        .fold(1.0, |h, (&x, (&c, &p))| h - powi((x - c) / p, spec.exponent))
}

/// Fixed-capacity vector of up to four reals (Lie-derivative stacks and
/// ECBF gain vectors).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LieVector {
    values: [f64; 4],
    len: usize,
}

impl LieVector {
    /// Builds from a slice of at most four entries.
    pub fn from_slice(values: &[f64]) -> Self {
        assert!(values.len() <= 4, "at most four entries");
        let mut out = Self { values: [0.0; 4], len: values.len() };
        out.values[..values.len()].copy_from_slice(values);
        out
    }

    /// The stored entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.len
    }

    /// `true` when empty.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Inner product with another vector of the same length.
    pub fn dot(&self, other: &LieVector) -> f64 {
        debug_assert_eq!(self.len, other.len);
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }
}

impl core::ops::Index<usize> for LieVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

/// ECBF gains for one barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcbfGains {
    /// Relative degree δ.
    pub delta: usize,
    /// Closed-loop poles of the barrier chain (δ of them).
    pub poles: LieVector,
    /// `K = [k₀, …, k_{δ−1}]`.
    pub k: LieVector,
    /// Class-κ slope for δ = 1 barriers (`κ(h) = α·h`); equals `k₀` then.
    pub alpha: f64,
}

impl EcbfGains {
    /// Gains from pole placement.
    pub fn from_poles(poles: &[f64]) -> Result<Self> {
        let k = pole_place(poles)?;
        Ok(Self {
            delta: poles.len(),
            poles: LieVector::from_slice(poles),
            k,
            alpha: k[0],
        })
    }

    /// Relative-degree-one CBF with linear class-κ function `α·h`.
    pub fn linear_kappa(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidConfig { field: "alpha", reason: "must be > 0" });
        }
        Self::from_poles(&[-alpha])
    }

    /// Default gains for a domain: poles (−3,−4), α = 1, (−3,−4,−5,−6) and
    /// (−3,−4,−5).
    pub fn default_for(domain: BarrierDomain) -> Self {
        let poles: &[f64] = match domain {
            BarrierDomain::AltitudePosition => &[-3.0, -4.0],
            BarrierDomain::AltitudePosVel => &[-1.0],
            BarrierDomain::LateralPosition => &[-3.0, -4.0, -5.0, -6.0],
            BarrierDomain::LateralVelocity => &[-3.0, -4.0, -5.0],
        };
        Self::from_poles(poles).expect("default poles are valid")
    }
}

/// Coefficients `[k₀, …, k_{δ−1}]` of `∏(s − pole_i)` without the leading
/// `s^δ`, so that the companion matrix of the barrier chain has the given
/// eigenvalues.
pub fn pole_place(poles: &[f64]) -> Result<LieVector> {
    if poles.is_empty() || poles.len() > 4 {
        return Err(Error::InvalidPoles { reason: "need between 1 and 4 poles" });
    }
    if !poles.iter().all(|p| p.is_finite() && *p < 0.0) {
        return Err(Error::InvalidPoles { reason: "every pole must be real and negative" });
    }
    // coeffs[j] is the coefficient of s^j; start from the constant 1.
    let mut coeffs = [0.0; 5];
    coeffs[0] = 1.0;
    for (n, &pole) in poles.iter().enumerate() {
        for j in (0..=n + 1).rev() {
            let shifted = if j > 0 { coeffs[j - 1] } else { 0.0 };
            coeffs[j] = shifted - pole * coeffs[j];
        }
    }
    Ok(LieVector::from_slice(&coeffs[..poles.len()]))
}

/// One affine QP constraint `a·u + b ≥ 0` with the barrier data behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    /// `L_g L_f^{δ−1} h`; only the first `dim` entries are used.
    pub a: [f64; 2],
    /// Number of decision variables (1 for thrust, 2 for moments).
    pub dim: usize,
    /// `L_f^δ h + Kᵀ𝓗`.
    pub b: f64,
    /// `h(x)`.
    pub h: f64,
    /// `𝓗 = [h, L_f h, …, L_f^{δ−1} h]`.
    pub lie: LieVector,
    /// `L_f^δ h` (input-free part of the δ-th derivative).
    pub drift: f64,
}

impl ConstraintRow {
    /// `a·u + b`.
    pub fn slack(&self, u: &[f64]) -> f64 {
        self.a[..self.dim].iter().zip(u).map(|(a, u)| a * u).sum::<f64>() + self.b
    }

    /// `L_f^δ h + L_g L_f^{δ−1} h · u`, the δ-th time derivative of `h`.
    pub fn highest_derivative(&self, u: &[f64]) -> f64 {
        self.slack(u) - (self.b - self.drift)
    }

    fn finish(a: [f64; 2], dim: usize, drift: f64, lie: LieVector, gains: &EcbfGains) -> Result<Self> {
        if gains.delta != lie.len() {
            return Err(Error::InvalidConfig {
                field: "poles",
                reason: "number of poles must equal the barrier's relative degree",
            });
        }
        Ok(Self {
            a,
            dim,
            b: drift + gains.k.dot(&lie),
            h: lie[0],
            lie,
            drift,
        })
    }
}

/// `d^k/de^k (e/p)^r` for k = 0..=4.
fn power_derivs(e: f64, p: f64, r: u32) -> [f64; 5] {
    let scale = 1.0 / powi(p, r);
    let mut out = [0.0; 5];
    let mut falling = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        let k = k as u32;
        if k > r {
            break;
        }
        *slot = falling * powi(e, r - k) * scale;
        falling *= (r - k) as f64;
    }
    out
}

fn check_domain(spec: &BarrierSpec, expected: BarrierDomain) -> Result<()> {
    if spec.domain == expected {
        Ok(())
    } else {
        Err(Error::DomainMismatch { expected, found: spec.domain })
    }
}

/// δ = 2 altitude position chain in the thrust `F`.
///
/// `ż` is the first derivative and `z̈ = g − R33·F/m` the second.
pub fn altitude_position_chain(
    state: &QuadState,
    spec: &BarrierSpec,
    gains: &EcbfGains,
    params: &QuadParams,
) -> Result<ConstraintRow> {
    check_domain(spec, BarrierDomain::AltitudePosition)?;
    let d = power_derivs(state.position.z - spec.center[0], spec.half_width[0], spec.exponent);
    let vz = state.velocity.z;
    let h = 1.0 - d[0];
    let lf_h = -d[1] * vz;
    let lf2_h = -d[2] * vz * vz - d[1] * params.gravity;
    let a = d[1] * state.r(3, 3) / params.mass;
    ConstraintRow::finish([a, 0.0], 1, lf2_h, LieVector::from_slice(&[h, lf_h]), gains)
}

/// δ = 1 combined altitude position/velocity chain in the thrust `F`.
pub fn altitude_posvel_chain(
    state: &QuadState,
    spec: &BarrierSpec,
    gains: &EcbfGains,
    params: &QuadParams,
) -> Result<ConstraintRow> {
    check_domain(spec, BarrierDomain::AltitudePosVel)?;
    let dp = power_derivs(state.position.z - spec.center[0], spec.half_width[0], spec.exponent);
    let dv = power_derivs(state.velocity.z - spec.center[1], spec.half_width[1], spec.exponent);
    let vz = state.velocity.z;
    let h = 1.0 - dp[0] - dv[0];
    let lf_h = -dp[1] * vz - dv[1] * params.gravity;
    let a = dv[1] * state.r(3, 3) / params.mass;
    ConstraintRow::finish([a, 0.0], 1, lf_h, LieVector::from_slice(&[h]), gains)
}

/// Rotation-kinematics terms shared by the lateral chains.
///
/// With `W = [[R21, −R11], [R22, −R12]]`, `V = W⁻¹` and `A = [p, q]ᵀ`:
///
/// ```text
/// [Ṙ13, Ṙ23]ᵀ = R33·V·A
/// [R̈13, R̈23]ᵀ = J + L·[τx, τy]ᵀ
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralChainTerms {
    /// W.
    pub w: Matrix2<f64>,
    /// V = W⁻¹.
    pub v: Matrix2<f64>,
    /// A = [p, q].
    pub a: Vector2<f64>,
    /// V̇ = −V·Ẇ·V.
    pub v_dot: Matrix2<f64>,
    /// Input-free part of [R̈13, R̈23].
    pub j: Vector2<f64>,
    /// Input matrix R33·V·diag(1/Ix, 1/Iy).
    pub l: Matrix2<f64>,
    /// R33·V·A = [Ṙ13, Ṙ23].
    pub tilt_rate: Vector2<f64>,
}

impl LateralChainTerms {
    /// Evaluates every term from the state; Ẇ and Ṙ33 come from `Ṙ = R[Ω]x`.
    pub fn new(state: &QuadState, params: &QuadParams) -> Result<Self> {
        let r = |i, j| state.r(i, j);
        let w = Matrix2::new(r(2, 1), -r(1, 1), r(2, 2), -r(1, 2));
        let det = w.determinant();
        if !(fabs(det) >= DET_W_MIN) {
            return Err(Error::LateralSingular { det, min: DET_W_MIN });
        }
        let v = Matrix2::new(w[(1, 1)], -w[(0, 1)], -w[(1, 0)], w[(0, 0)]) / det;
        let rd = state.rotation * crate::math::skew(&state.body_rates);
        let rd = |i: usize, j: usize| rd[(i - 1, j - 1)];
        let w_dot = Matrix2::new(rd(2, 1), -rd(1, 1), rd(2, 2), -rd(1, 2));
        let v_dot = -v * w_dot * v;
        let (p, q, rr) = (state.body_rates.x, state.body_rates.y, state.body_rates.z);
        let inertia = params.inertia;
        let a = Vector2::new(p, q);
        let gyro = Vector2::new(
            (inertia.y - inertia.z) / inertia.x * q * rr,
            (inertia.z - inertia.x) / inertia.y * p * rr,
        );
        let r33 = r(3, 3);
        let j = v * a * rd(3, 3) + v_dot * a * r33 + v * gyro * r33;
        let l = v * Matrix2::new(1.0 / inertia.x, 0.0, 0.0, 1.0 / inertia.y) * r33;
        Ok(Self {
            w,
            v,
            a,
            v_dot,
            j,
            l,
            tilt_rate: v * a * r33,
        })
    }
}

/// Lateral translational derivatives with thrust held at `f`.
struct LateralKinematics {
    accel: Vector2<f64>,
    jerk: Vector2<f64>,
    snap_drift: Vector2<f64>,
    snap_input: Matrix2<f64>,
}

fn lateral_kinematics(state: &QuadState, thrust: f64, params: &QuadParams) -> Result<LateralKinematics> {
    let floor = thrust_floor(params);
    if !(thrust > floor) {
        return Err(Error::ThrustTooSmall { thrust, floor });
    }
    let terms = LateralChainTerms::new(state, params)?;
    let gain = -thrust / params.mass;
    Ok(LateralKinematics {
        accel: Vector2::new(state.r(1, 3), state.r(2, 3)) * gain,
        jerk: terms.tilt_rate * gain,
        snap_drift: terms.j * gain,
        snap_input: terms.l * gain,
    })
}

/// Per-axis power derivatives for a two-state barrier.
fn axis_derivs(values: [f64; 2], spec: &BarrierSpec) -> [[f64; 5]; 2] {
    [
        power_derivs(values[0] - spec.center[0], spec.half_width[0], spec.exponent),
        power_derivs(values[1] - spec.center[1], spec.half_width[1], spec.exponent),
    ]
}

fn input_row(d1: RowVector2<f64>, snap_input: &Matrix2<f64>) -> [f64; 2] {
    let row = -(d1 * snap_input);
    [row[0], row[1]]
}

/// δ = 4 lateral position chain in `[τx, τy]`, thrust held at `thrust`.
pub fn lateral_position_chain(
    state: &QuadState,
    thrust: f64,
    spec: &BarrierSpec,
    gains: &EcbfGains,
    params: &QuadParams,
) -> Result<ConstraintRow> {
    check_domain(spec, BarrierDomain::LateralPosition)?;
    let kin = lateral_kinematics(state, thrust, params)?;
    let d = axis_derivs([state.position.x, state.position.y], spec);
    let vel = [state.velocity.x, state.velocity.y];
    let mut lie = [1.0, 0.0, 0.0, 0.0];
    let mut drift = 0.0;
    for axis in 0..2 {
        let dk = &d[axis];
        let (v, a, j, s) = (vel[axis], kin.accel[axis], kin.jerk[axis], kin.snap_drift[axis]);
        lie[0] -= dk[0];
        lie[1] -= dk[1] * v;
        lie[2] -= dk[2] * v * v + dk[1] * a;
        lie[3] -= dk[3] * v * v * v + 3.0 * dk[2] * v * a + dk[1] * j;
        drift -= dk[4] * v * v * v * v
            + 6.0 * dk[3] * v * v * a
            + 3.0 * dk[2] * a * a
            + 4.0 * dk[2] * v * j
            + dk[1] * s;
    }
    let a = input_row(RowVector2::new(d[0][1], d[1][1]), &kin.snap_input);
    ConstraintRow::finish(a, 2, drift, LieVector::from_slice(&lie), gains)
}

/// δ = 3 lateral velocity chain in `[τx, τy]`, thrust held at `thrust`.
pub fn lateral_velocity_chain(
    state: &QuadState,
    thrust: f64,
    spec: &BarrierSpec,
    gains: &EcbfGains,
    params: &QuadParams,
) -> Result<ConstraintRow> {
    check_domain(spec, BarrierDomain::LateralVelocity)?;
    let kin = lateral_kinematics(state, thrust, params)?;
    let d = axis_derivs([state.velocity.x, state.velocity.y], spec);
    let mut lie = [1.0, 0.0, 0.0];
    let mut drift = 0.0;
    for axis in 0..2 {
        let dk = &d[axis];
        let (a, j, s) = (kin.accel[axis], kin.jerk[axis], kin.snap_drift[axis]);
        lie[0] -= dk[0];
        lie[1] -= dk[1] * a;
        lie[2] -= dk[2] * a * a + dk[1] * j;
        drift -= dk[3] * a * a * a + 3.0 * dk[2] * a * j + dk[1] * s;
    }
    let a = input_row(RowVector2::new(d[0][1], d[1][1]), &kin.snap_input);
    ConstraintRow::finish(a, 2, drift, LieVector::from_slice(&lie), gains)
}

/// Dispatches on the spec's domain. `thrust` is only read by the lateral
/// chains.
pub fn constraint_row(
    state: &QuadState,
    thrust: f64,
    spec: &BarrierSpec,
    gains: &EcbfGains,
    params: &QuadParams,
) -> Result<ConstraintRow> {
    match spec.domain {
        BarrierDomain::AltitudePosition => altitude_position_chain(state, spec, gains, params),
        BarrierDomain::AltitudePosVel => altitude_posvel_chain(state, spec, gains, params),
        BarrierDomain::LateralPosition => lateral_position_chain(state, thrust, spec, gains, params),
        BarrierDomain::LateralVelocity => lateral_velocity_chain(state, thrust, spec, gains, params),
    }
}
