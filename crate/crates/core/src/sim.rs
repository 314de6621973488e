//! Scenario-driven closed-loop simulation.
//!
//! Each step evaluates the reference, runs the nominal cascade with the
//! thrust QP between the altitude and attitude loops and the moment QP after
//! the body-rate loop, applies the result with zero-order hold over `dt` and
//! records a [`TraceRecord`].

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::barrier::{BarrierDomain, LieVector};
use crate::controller::{
    attitude_loop, body_rate_loop, position_loop, thrust_floor, ControllerGains, NominalCommand, Reference,
    R33_MIN, SIN_TILT_MAX,
};
use crate::dynamics::{euler_of_r, step, ControlInput, EulerAngles, QuadParams, QuadState};
use crate::filter::{filter_thrust, filter_torque, FallbackPolicy, FilterOutcome, ScheduledBarrier};
use crate::math::{atan2, cos, sin, wrap_angle};
use crate::qp::QpStatus;
use crate::{Error, Result};

/// How ψ_d is generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YawMode {
    /// ψ_d = atan2(y_d, x_d), with atan2(0, 0) = 0.
    Atan2,
    /// Fixed heading, rad.
    Constant(f64),
}

/// Sinusoidal reference `r_d(t) = [a_x sin(ω_x t), a_y sin(ω_y t), a_z sin(ω_z t)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidReference {
    /// Amplitudes, m.
    pub amplitude: Vector3<f64>,
    /// Angular frequencies, rad/s.
    pub frequency: Vector3<f64>,
    /// Yaw source.
    pub yaw: YawMode,
}

impl Default for SinusoidReference {
    fn default() -> Self {
        Self {
            amplitude: Vector3::new(2.5, 2.5, 2.5),
            frequency: Vector3::new(0.4, 0.5, 0.3),
            yaw: YawMode::Atan2,
        }
    }
}

/// Closed-form reference sample at time `t`.
pub fn reference_at(t: f64, reference: &SinusoidReference) -> Reference {
    let mut position = Vector3::zeros();
    let mut velocity = Vector3::zeros();
    let mut acceleration = Vector3::zeros();
    for i in 0..3 {
        let (a, w) = (reference.amplitude[i], reference.frequency[i]);
        let (s, c) = (sin(w * t), cos(w * t));
        position[i] = a * s;
        velocity[i] = a * w * c;
        acceleration[i] = -a * w * w * s;
    }
    let yaw = match reference.yaw {
        YawMode::Atan2 if position.x == 0.0 && position.y == 0.0 => 0.0,
        YawMode::Atan2 => atan2(position.y, position.x),
        YawMode::Constant(psi) => psi,
    };
    Reference { position, velocity, acceleration, yaw }
}

/// Which QP levels are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterEnable {
    /// Thrust QP.
    pub high: bool,
    /// Moment QP.
    pub low: bool,
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Simulated time, s.
    pub duration: f64,
    /// Step, s.
    pub dt: f64,
    /// State at t = 0.
    pub initial_state: QuadState,
    /// Trajectory to track.
    pub reference: SinusoidReference,
    /// Barrier schedule.
    pub barriers: Vec<ScheduledBarrier>,
    /// Nominal controller gains.
    pub gains: ControllerGains,
    /// Vehicle parameters.
    pub params: QuadParams,
    /// Enabled QP levels.
    pub filters: FilterEnable,
    /// Infeasibility fallback.
    pub fallback: FallbackPolicy,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            duration: 40.0,
            dt: 1e-3,
            initial_state: QuadState::at_rest(Vector3::zeros()),
            reference: SinusoidReference::default(),
            barriers: Vec::new(),
            gains: ControllerGains::default(),
            params: QuadParams::default(),
            filters: FilterEnable { high: true, low: true },
            fallback: FallbackPolicy::default(),
        }
    }
}

impl Scenario {
    /// Number of steps, `round(duration / dt)`.
    pub fn step_count(&self) -> usize {
        libm::round(self.duration / self.dt) as usize
    }

    /// Checks every invariant, including non-overlapping barrier windows per
    /// domain.
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidConfig { field: "duration", reason: "must be > 0" });
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= self.duration) {
            return Err(Error::InvalidConfig { field: "dt", reason: "must be in (0, duration]" });
        }
        if !self.initial_state.is_finite() {
            return Err(Error::InvalidConfig { field: "initial_state", reason: "must be finite" });
        }
        if !(self.reference.amplitude.iter().chain(self.reference.frequency.iter()).all(|v| v.is_finite())) {
            return Err(Error::InvalidConfig { field: "reference", reason: "must be finite" });
        }
        self.params.validate()?;
        self.gains.validate()?;
        for (i, b) in self.barriers.iter().enumerate() {
            b.spec.validate()?;
            if b.gains.delta != b.spec.domain.relative_degree() {
                return Err(Error::InvalidConfig {
                    field: "poles",
                    reason: "number of poles must equal the barrier's relative degree",
                });
            }
            for other in &self.barriers[..i] {
                let (a, c) = (&other.spec, &b.spec);
                if a.domain == c.domain && a.active_from < c.active_until && c.active_from < a.active_until {
                    return Err(Error::OverlappingBarriers {
                        domain: a.domain,
                        first_from: a.active_from,
                        first_until: a.active_until,
                        second_from: c.active_from,
                        second_until: c.active_until,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Which QP an event concerns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpLevel {
    /// Thrust QP.
    High,
    /// Moment QP.
    Low,
}

/// Noteworthy things that happened during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    /// A QP had no feasible point; the fallback policy chose the input.
    Infeasible {
        /// Which QP.
        level: QpLevel,
        /// Largest raw row violation at the applied input.
        max_violation: f64,
    },
    /// The lateral chains were singular; nominal moments were applied.
    LateralSingular {
        /// |det W|.
        det: f64,
    },
    /// Thrust below the floor for the attitude inversion or lateral chains.
    ThrustTooSmall {
        /// Thrust at the time, N.
        thrust: f64,
    },
    /// R33 below the inversion floor.
    AttitudeSingular {
        /// R33 at the time.
        r33: f64,
    },
    /// A barrier became active or inactive.
    BarrierSwitch {
        /// Its domain.
        domain: BarrierDomain,
        /// `true` on activation.
        activated: bool,
    },
    /// A QP output had to be clamped to the actuator box afterwards.
    PostQpClamp {
        /// Which QP.
        level: QpLevel,
    },
    /// Euler extraction hit gimbal lock.
    GimbalLock,
}

/// Per-level QP report in a trace record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QpReport {
    /// Level disabled in the scenario.
    Disabled,
    /// A chain could not be evaluated; nominal input applied.
    Bypassed,
    /// QP solved.
    Solved {
        /// Status.
        status: QpStatus,
        /// KKT residual (infinite when infeasible).
        kkt_residual: f64,
        /// Number of barrier rows.
        rows: usize,
    },
}

impl QpReport {
    fn from_outcome(outcome: &FilterOutcome) -> Self {
        match &outcome.solution {
            None => QpReport::Bypassed,
            Some(s) => QpReport::Solved {
                status: s.status,
                kkt_residual: s.kkt_residual,
                rows: outcome.rows.len(),
            },
        }
    }

    /// `true` if the QP was solved and infeasible.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, QpReport::Solved { status: QpStatus::Infeasible, .. })
    }
}

/// Barrier value at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSample {
    /// h(x).
    pub h: f64,
    /// 𝓗, when the chain was evaluated this step.
    pub lie: Option<LieVector>,
}

/// One simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Time at the start of the step, s.
    pub t: f64,
    /// State at `t`.
    pub state: QuadState,
    /// Euler view of the attitude.
    pub euler: EulerAngles,
    /// Reference at `t`.
    pub reference: Reference,
    /// Nominal controller output.
    pub nominal: NominalCommand,
    /// Input applied over `[t, t + dt)`: F*, M*, τz.
    pub applied: ControlInput,
    /// Barrier samples indexed by [`BarrierDomain::index`].
    pub barriers: [Option<BarrierSample>; 4],
    /// Thrust QP report.
    pub qp_high: QpReport,
    /// Moment QP report.
    pub qp_low: QpReport,
    /// Events raised during the step.
    pub events: Vec<Event>,
}

impl TraceRecord {
    /// Barrier sample for a domain.
    pub fn barrier(&self, domain: BarrierDomain) -> Option<&BarrierSample> {
        self.barriers[domain.index()].as_ref()
    }
}

/// Steps a scenario one record at a time.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    state: QuadState,
    k: usize,
    steps: usize,
    active: [bool; 4],
    last_thrust: Option<f64>,
    last_moments: Option<[f64; 2]>,
}

impl<'a> Simulator<'a> {
    /// Validates the scenario and positions the simulator at t = 0.
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            scenario,
            state: scenario.initial_state,
            k: 0,
            steps: scenario.step_count(),
            active: [false; 4],
            last_thrust: None,
            last_moments: None,
        })
    }

    /// Current state.
    pub fn state(&self) -> &QuadState {
        &self.state
    }

    /// `true` once every step has been taken.
    pub fn finished(&self) -> bool {
        self.k >= self.steps
    }

    /// Runs one step and returns its record.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let sc = self.scenario;
        let params = &sc.params;
        let gains = &sc.gains;
        let t = self.k as f64 * sc.dt;
        let state = self.state;
        let mut events = Vec::new();

        let euler = euler_of_r(&state.rotation);
        if euler.gimbal_lock {
            events.push(Event::GimbalLock);
        }
        let reference = reference_at(t, &sc.reference);

        let active: Vec<&ScheduledBarrier> = sc.barriers.iter().filter(|b| b.spec.is_active(t)).collect();
        let mut now_active = [false; 4];
        for b in &active {
            now_active[b.spec.domain.index()] = true;
        }
        for domain in BarrierDomain::ALL {
            let i = domain.index();
            if now_active[i] != self.active[i] {
                events.push(Event::BarrierSwitch { domain, activated: now_active[i] });
            }
        }
        // A new spec replacing one of the same domain at the same instant.
        for b in &active {
            if b.spec.active_from > 0.0 && b.spec.active_from == t && self.active[b.spec.domain.index()] {
                events.push(Event::BarrierSwitch { domain: b.spec.domain, activated: true });
            }
        }
        self.active = now_active;

        // Position loop and thrust.
        let accel_cmd = position_loop(&state, &reference, gains);
        let r33 = state.r(3, 3);
        if r33 < R33_MIN {
            events.push(Event::AttitudeSingular { r33 });
        }
        let thrust_nominal =
            (params.mass / r33.max(R33_MIN) * (params.gravity - accel_cmd.z)).clamp(0.0, params.f_max);

        let mut barriers: [Option<BarrierSample>; 4] = [None; 4];
        for b in &active {
            barriers[b.spec.domain.index()] = Some(BarrierSample { h: b.spec.h(&state), lie: None });
        }

        let (thrust, qp_high) = if sc.filters.high {
            let out = filter_thrust(
                &state,
                thrust_nominal,
                active.iter().copied().filter(|b| b.spec.domain.is_altitude()),
                params,
                sc.fallback,
                self.last_thrust,
            )?;
            self.absorb(&out, QpLevel::High, &mut barriers, &mut events);
            (out.u[0], QpReport::from_outcome(&out))
        } else {
            (thrust_nominal, QpReport::Disabled)
        };
        let thrust = self.check_bounds(thrust, 0.0, params.f_max, QpLevel::High, &mut events);

        // Attitude and body-rate loops consume the filtered thrust.
        let omega_cmd = match attitude_loop(&state, &accel_cmd, thrust, reference.yaw, gains, params) {
            Ok(w) => w,
            Err(e) => {
                match e {
                    Error::ThrustTooSmall { thrust, .. } => events.push(Event::ThrustTooSmall { thrust }),
                    Error::AttitudeSingular { .. } => {}
                    other => return Err(other),
                }
                fallback_rates(&state, &accel_cmd, thrust, reference.yaw, gains, params)
            }
        };
        let torque_nominal = body_rate_loop(&state, &omega_cmd, gains, params);

        let (moments, qp_low) = if sc.filters.low {
            let out = filter_torque(
                &state,
                [torque_nominal.x, torque_nominal.y],
                thrust,
                active.iter().copied().filter(|b| !b.spec.domain.is_altitude()),
                params,
                sc.fallback,
                self.last_moments,
            )?;
            match out.bypass {
                Some(Error::LateralSingular { det, .. }) => events.push(Event::LateralSingular { det }),
                Some(Error::ThrustTooSmall { thrust, .. }) => events.push(Event::ThrustTooSmall { thrust }),
                _ => {}
            }
            self.absorb(&out, QpLevel::Low, &mut barriers, &mut events);
            ([out.u[0], out.u[1]], QpReport::from_outcome(&out))
        } else {
            ([torque_nominal.x, torque_nominal.y], QpReport::Disabled)
        };
        let moments = [
            self.check_bounds(moments[0], -params.tau_max[0], params.tau_max[0], QpLevel::Low, &mut events),
            self.check_bounds(moments[1], -params.tau_max[1], params.tau_max[1], QpLevel::Low, &mut events),
        ];

        let applied = ControlInput {
            thrust,
            torque: Vector3::new(moments[0], moments[1], torque_nominal.z),
        };
        self.last_thrust = Some(thrust);
        self.last_moments = Some(moments);

        let next = step(&state, &applied, params, sc.dt).map_err(|_| Error::NonFiniteState { t })?;
        self.state = next;
        self.k += 1;

        Ok(TraceRecord {
            t,
            state,
            euler,
            reference,
            nominal: NominalCommand {
                thrust: thrust_nominal,
                torque: torque_nominal,
                accel_cmd,
                omega_cmd,
            },
            applied,
            barriers,
            qp_high,
            qp_low,
            events,
        })
    }

    fn absorb(
        &self,
        out: &FilterOutcome,
        level: QpLevel,
        barriers: &mut [Option<BarrierSample>; 4],
        events: &mut Vec<Event>,
    ) {
        for (domain, row) in &out.rows {
            barriers[domain.index()] = Some(BarrierSample { h: row.h, lie: Some(row.lie) });
        }
        if out.fell_back {
            let max_violation = out.solution.as_ref().map_or(0.0, |s| s.max_violation);
            events.push(Event::Infeasible { level, max_violation });
        }
    }

    fn check_bounds(&self, v: f64, lo: f64, hi: f64, level: QpLevel, events: &mut Vec<Event>) -> f64 {
        if v < lo || v > hi {
            events.push(Event::PostQpClamp { level });
            v.clamp(lo, hi)
        } else {
            v
        }
    }
}

impl Iterator for Simulator<'_> {
    type Item = Result<TraceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished() {
            None
        } else {
            Some(self.step())
        }
    }
}

/// Rate command when the checked attitude loop refuses: thrust raised to the
/// floor and R33 to its minimum so the inversion stays defined.
fn fallback_rates(
    state: &QuadState,
    accel_cmd: &Vector3<f64>,
    thrust: f64,
    yaw_desired: f64,
    gains: &ControllerGains,
    params: &QuadParams,
) -> Vector3<f64> {
    let f = thrust.max(thrust_floor(params) * (1.0 + 1e-9));
    let r = |i, j| state.r(i, j);
    let tilt_cmd = [
        (-params.mass * accel_cmd.x / f).clamp(-SIN_TILT_MAX, SIN_TILT_MAX),
        (-params.mass * accel_cmd.y / f).clamp(-SIN_TILT_MAX, SIN_TILT_MAX),
    ];
    let rate13 = gains.k_r * (tilt_cmd[0] - r(1, 3));
    let rate23 = gains.k_r * (tilt_cmd[1] - r(2, 3));
    let r33 = r(3, 3).max(R33_MIN);
    let p = (r(2, 1) * rate13 - r(1, 1) * rate23) / r33;
    let q = (r(2, 2) * rate13 - r(1, 2) * rate23) / r33;
    let yaw = euler_of_r(&state.rotation).yaw;
    Vector3::new(p, q, gains.k_psi * wrap_angle(yaw_desired - yaw))
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> Result<Vec<TraceRecord>> {
    Simulator::new(scenario)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::BarrierSpec;
    use core::f64::consts::FRAC_PI_4;

    #[test]
    fn reference_at_zero_and_peak() {
        let r = SinusoidReference {
            amplitude: Vector3::new(2.0, 2.0, 1.0),
            frequency: Vector3::new(0.4, 0.4, 0.3),
            yaw: YawMode::Atan2,
        };
        let s = reference_at(0.0, &r);
        assert_eq!(s.position, Vector3::zeros());
        assert_eq!(s.velocity, Vector3::new(0.8, 0.8, 0.3));
        assert_eq!(s.yaw, 0.0);
        let s = reference_at(core::f64::consts::PI / (2.0 * 0.4), &r);
        assert!((s.position.x - 2.0).abs() < 1e-12);
        assert!((s.yaw - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn reference_derivatives_match_differences() {
        let r = SinusoidReference::default();
        let h = 1e-5;
        let t = 3.7;
        let (a, b, c) = (reference_at(t - h, &r), reference_at(t, &r), reference_at(t + h, &r));
        assert!(((c.position - a.position) / (2.0 * h) - b.velocity).norm() < 1e-8);
        assert!(((c.velocity - a.velocity) / (2.0 * h) - b.acceleration).norm() < 1e-8);
    }

    #[test]
    fn unfiltered_hover_regulation() {
        let sc = Scenario {
            duration: 10.0,
            reference: SinusoidReference { amplitude: Vector3::zeros(), ..Default::default() },
            filters: FilterEnable { high: false, low: false },
            ..Default::default()
        };
        let trace = run(&sc).unwrap();
        assert_eq!(trace.len(), 10_000);
        assert!(trace.iter().all(|r| r.state.position.norm() <= 1e-3));
    }

    #[test]
    fn step_response_settles() {
        // Unit step on z from rest: within 2 % by t = 3 s.
        let mut sc = Scenario {
            duration: 5.0,
            reference: SinusoidReference { amplitude: Vector3::zeros(), ..Default::default() },
            filters: FilterEnable { high: false, low: false },
            ..Default::default()
        };
        sc.initial_state.position.z = 1.0;
        let trace = run(&sc).unwrap();
        for rec in trace.iter().filter(|r| r.t >= 3.0) {
            assert!(rec.state.position.z.abs() <= 0.02, "z = {} at {}", rec.state.position.z, rec.t);
        }
    }

    #[test]
    fn overlapping_schedule_rejected() {
        let sc = Scenario {
            barriers: alloc::vec![
                ScheduledBarrier::with_default_gains(BarrierSpec::altitude_position(0.0, 2.0).active(0.0, 10.0)),
                ScheduledBarrier::with_default_gains(BarrierSpec::altitude_position(0.0, 1.0).active(5.0, 20.0)),
            ],
            ..Default::default()
        };
        assert!(matches!(sc.validate(), Err(Error::OverlappingBarriers { .. })));
    }

    #[test]
    fn deterministic_traces() {
        let sc = Scenario {
            duration: 2.0,
            barriers: alloc::vec![ScheduledBarrier::with_default_gains(BarrierSpec::lateral_position(
                [0.0, 0.0],
                [2.0, 2.0]
            ))],
            ..Default::default()
        };
        assert_eq!(run(&sc).unwrap(), run(&sc).unwrap());
    }
}
