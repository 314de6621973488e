//! High-level (thrust) and low-level (moment) safety filters.
//!
//! The thrust filter runs first; the moment filter evaluates the lateral
//! chains at the thrust the first filter settled on.

use alloc::vec::Vec;

use crate::barrier::{constraint_row, BarrierDomain, BarrierSpec, ConstraintRow, EcbfGains};
use crate::dynamics::{QuadParams, QuadState};
use crate::qp::{solve_qp, Halfspace, QpProblem, QpSolution, QpStatus};
use crate::{Error, Result};

/// What to apply when a QP has no feasible point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// The box point with the smallest worst-case normalized violation.
    #[default]
    LeastViolation,
    /// The input applied on the previous step (least violation on the first).
    HoldLast,
    /// The nominal input clamped to the actuator box.
    NominalClamped,
}

/// A barrier with the gains used to build its constraint row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledBarrier {
    /// Region and activity window.
    pub spec: BarrierSpec,
    /// ECBF / CBF gains.
    pub gains: EcbfGains,
}

impl ScheduledBarrier {
    /// Pairs a spec with the default gains for its domain.
    pub fn with_default_gains(spec: BarrierSpec) -> Self {
        Self { spec, gains: EcbfGains::default_for(spec.domain) }
    }
}

/// Result of one filter evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// Input to apply (one or two entries).
    pub u: [f64; 2],
    /// QP solution; `None` when the filter was bypassed.
    pub solution: Option<QpSolution>,
    /// Constraint rows that went into the QP, by domain.
    pub rows: Vec<(BarrierDomain, ConstraintRow)>,
    /// The QP was infeasible and the fallback policy chose `u`.
    pub fell_back: bool,
    /// A chain could not be evaluated; the nominal input passed through.
    pub bypass: Option<Error>,
}

impl FilterOutcome {
    /// Status of the underlying QP, if one was solved.
    pub fn status(&self) -> Option<QpStatus> {
        self.solution.as_ref().map(|s| s.status)
    }
}

fn resolve(
    problem: &QpProblem,
    solution: &QpSolution,
    policy: FallbackPolicy,
    previous: Option<[f64; 2]>,
) -> ([f64; 2], bool) {
    if solution.status == QpStatus::Optimal {
        return (solution.u, false);
    }
    let clamp = |u: [f64; 2]| {
        let mut out = [0.0; 2];
        for j in 0..problem.dim {
            out[j] = u[j].clamp(problem.lower[j], problem.upper[j]);
        }
        out
    };
    let u = match policy {
        FallbackPolicy::LeastViolation => solution.u,
        FallbackPolicy::HoldLast => previous.map(clamp).unwrap_or(solution.u),
        FallbackPolicy::NominalClamped => clamp(problem.nominal),
    };
    (u, true)
}

fn build_rows<'a>(
    state: &QuadState,
    thrust: f64,
    barriers: impl Iterator<Item = &'a ScheduledBarrier>,
    params: &QuadParams,
    altitude: bool,
) -> Result<Vec<(BarrierDomain, ConstraintRow)>> {
    barriers
        .map(|b| {
            if b.spec.domain.is_altitude() != altitude {
                let expected = if altitude {
                    BarrierDomain::AltitudePosition
                } else {
                    BarrierDomain::LateralPosition
                };
                return Err(Error::DomainMismatch { expected, found: b.spec.domain });
            }
            constraint_row(state, thrust, &b.spec, &b.gains, params).map(|row| (b.spec.domain, row))
        })
        .collect()
}

/// High-level QP: `min ½(F − f̂)²` subject to every altitude barrier row and
/// `0 ≤ F ≤ f_max`.
pub fn filter_thrust<'a>(
    state: &QuadState,
    thrust_nominal: f64,
    barriers: impl IntoIterator<Item = &'a ScheduledBarrier>,
    params: &QuadParams,
    policy: FallbackPolicy,
    previous: Option<f64>,
) -> Result<FilterOutcome> {
    let rows = build_rows(state, 0.0, barriers.into_iter(), params, true)?;
    let problem = QpProblem::thrust(
        thrust_nominal,
        rows.iter().map(|(_, r)| Halfspace::from(r)).collect(),
        params.f_max,
    );
    let solution = solve_qp(&problem);
    let (u, fell_back) = resolve(&problem, &solution, policy, previous.map(|f| [f, 0.0]));
    Ok(FilterOutcome {
        u,
        solution: Some(solution),
        rows,
        fell_back,
        bypass: None,
    })
}

/// Low-level QP: `min ½‖M − τ̂_xy‖²` subject to every lateral barrier row
/// (evaluated at the already-filtered thrust) and `|τx|, |τy| ≤ τ_max`.
///
/// If a lateral chain is singular or the thrust is below the floor the
/// nominal moments pass through and `bypass` carries the reason.
pub fn filter_torque<'a>(
    state: &QuadState,
    torque_nominal: [f64; 2],
    thrust_applied: f64,
    barriers: impl IntoIterator<Item = &'a ScheduledBarrier>,
    params: &QuadParams,
    policy: FallbackPolicy,
    previous: Option<[f64; 2]>,
) -> Result<FilterOutcome> {
    let rows = match build_rows(state, thrust_applied, barriers.into_iter(), params, false) {
        Ok(rows) => rows,
        Err(e @ (Error::LateralSingular { .. } | Error::ThrustTooSmall { .. })) => {
            let clamp = |v: f64, b: f64| v.clamp(-b, b);
            return Ok(FilterOutcome {
                u: [
                    clamp(torque_nominal[0], params.tau_max[0]),
                    clamp(torque_nominal[1], params.tau_max[1]),
                ],
                solution: None,
                rows: Vec::new(),
                fell_back: false,
                bypass: Some(e),
            });
        }
        Err(e) => return Err(e),
    };
    let problem = QpProblem::moments(
        torque_nominal,
        rows.iter().map(|(_, r)| Halfspace::from(r)).collect(),
        params.tau_max,
    );
    let solution = solve_qp(&problem);
    let (u, fell_back) = resolve(&problem, &solution, policy, previous);
    Ok(FilterOutcome {
        u,
        solution: Some(solution),
        rows,
        fell_back,
        bypass: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn p() -> QuadParams {
        QuadParams::default()
    }

    #[test]
    fn inactive_barrier_passes_thrust_through() {
        let s = QuadState::at_rest(Vector3::new(0.0, 0.0, 0.5));
        let b = ScheduledBarrier::with_default_gains(BarrierSpec::altitude_position(0.0, 50.0));
        let out = filter_thrust(&s, 5.3, [&b], &p(), FallbackPolicy::default(), None).unwrap();
        assert_eq!(out.u[0], 5.3);
        assert_eq!(out.status(), Some(QpStatus::Optimal));
        assert_eq!(out.rows.len(), 1);
    }

    #[test]
    fn thrust_box_clamp_without_rows() {
        let s = QuadState::at_rest(Vector3::zeros());
        let out = filter_thrust(&s, 50.0, [], &p(), FallbackPolicy::default(), None).unwrap();
        assert_eq!(out.u[0], 36.0);
    }

    #[test]
    fn near_positive_boundary_moving_outward_raises_thrust() {
        // z near +p_z and moving further +z (downward in this convention):
        // the barrier must demand more thrust than hover.
        let mut s = QuadState::at_rest(Vector3::new(0.0, 0.0, 1.9));
        s.velocity.z = 1.0;
        let b = ScheduledBarrier::with_default_gains(BarrierSpec::altitude_position(0.0, 2.0));
        let f_hat = p().hover_thrust();
        let out = filter_thrust(&s, f_hat, [&b], &p(), FallbackPolicy::default(), None).unwrap();
        let row = out.rows[0].1;
        // Closed-form interval: F ≥ −b/a since a > 0.
        assert!(row.a[0] > 0.0);
        let bound = -row.b / row.a[0];
        assert!(bound > f_hat);
        assert!((out.u[0] - bound).abs() < 1e-12);
    }

    #[test]
    fn hover_centered_moments_pass_through() {
        let s = QuadState::at_rest(Vector3::zeros());
        let b = ScheduledBarrier::with_default_gains(BarrierSpec::lateral_position([0.0, 0.0], [2.0, 2.0]));
        let out = filter_torque(&s, [0.3, -0.2], p().hover_thrust(), [&b], &p(), FallbackPolicy::default(), None)
            .unwrap();
        assert_eq!(out.u, [0.3, -0.2]);
    }

    #[test]
    fn torque_box_clamp_without_rows() {
        let s = QuadState::at_rest(Vector3::zeros());
        let out = filter_torque(&s, [25.0, 0.0], 4.0, [], &p(), FallbackPolicy::default(), None).unwrap();
        assert_eq!(out.u, [20.0, 0.0]);
    }

    #[test]
    fn torque_bypass_on_low_thrust() {
        let s = QuadState::at_rest(Vector3::zeros());
        let b = ScheduledBarrier::with_default_gains(BarrierSpec::lateral_velocity([0.0, 0.0], [1.0, 1.0]));
        let out = filter_torque(&s, [1.0, 2.0], 0.0, [&b], &p(), FallbackPolicy::default(), None).unwrap();
        assert!(matches!(out.bypass, Some(Error::ThrustTooSmall { .. })));
        assert_eq!(out.u, [1.0, 2.0]);
        assert!(out.solution.is_none());
    }

    #[test]
    fn wrong_level_is_rejected() {
        let s = QuadState::at_rest(Vector3::zeros());
        let b = ScheduledBarrier::with_default_gains(BarrierSpec::lateral_velocity([0.0, 0.0], [1.0, 1.0]));
        assert!(filter_thrust(&s, 4.0, [&b], &p(), FallbackPolicy::default(), None).is_err());
    }

    #[test]
    fn fallback_policies() {
        // Ascending fast right under the top boundary with a tiny region:
        // no admissible thrust can stop in time.
        let mut s = QuadState::at_rest(Vector3::new(0.0, 0.0, -0.09));
        s.velocity.z = -3.0;
        let b = ScheduledBarrier::with_default_gains(BarrierSpec::altitude_position(0.0, 0.1));
        let f_hat = 10.0;
        let out = filter_thrust(&s, f_hat, [&b], &p(), FallbackPolicy::LeastViolation, None).unwrap();
        assert_eq!(out.status(), Some(QpStatus::Infeasible));
        assert!(out.fell_back);
        assert_eq!(out.u[0], 0.0);
        let out = filter_thrust(&s, f_hat, [&b], &p(), FallbackPolicy::NominalClamped, None).unwrap();
        assert_eq!(out.u[0], f_hat);
        let out = filter_thrust(&s, f_hat, [&b], &p(), FallbackPolicy::HoldLast, Some(3.0)).unwrap();
        assert_eq!(out.u[0], 3.0);
    }
}
