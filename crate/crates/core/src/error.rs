use thiserror::Error;

/// Errors raised by the dynamics, controller, barrier and scenario layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The integrator produced a NaN or infinite field.
    #[error("non-finite state at t = {t} s")]
    NonFiniteState {
        /// Simulation time of the offending step, seconds.
        t: f64,
    },
    /// R33 fell below the controller's inversion floor.
    #[error("attitude too close to singular: R33 = {r33} < {min}")]
    AttitudeSingular {
        /// Current R33 entry.
        r33: f64,
        /// Floor enforced by the controller.
        min: f64,
    },
    /// Thrust too small to invert the lateral acceleration map.
    #[error("thrust {thrust} N below floor {floor} N")]
    ThrustTooSmall {
        /// Thrust handed to the attitude loop or lateral chain, N.
        thrust: f64,
        /// Minimum usable thrust, N.
        floor: f64,
    },
    /// |det W| below the guard used by the lateral chains.
    #[error("lateral chain singular: |det W| = {det} < {min}")]
    LateralSingular {
        /// Determinant of W.
        det: f64,
        /// Guard value.
        min: f64,
    },
    /// Pole placement was asked for a non-Hurwitz pole set.
    #[error("invalid ECBF poles: {reason}")]
    InvalidPoles {
        /// What was wrong.
        reason: &'static str,
    },
    /// A barrier was evaluated by the wrong chain.
    #[error("barrier domain {found:?} does not match chain {expected:?}")]
    DomainMismatch {
        /// Domain the chain handles.
        expected: crate::BarrierDomain,
        /// Domain of the supplied spec.
        found: crate::BarrierDomain,
    },
    /// Two barriers of the same domain are scheduled over overlapping times.
    #[error(
        "overlapping {domain:?} barriers: [{first_from}, {first_until}) and [{second_from}, {second_until})"
    )]
    OverlappingBarriers {
        /// Domain of both barriers.
        domain: crate::BarrierDomain,
        /// Start of the first interval, s.
        first_from: f64,
        /// End of the first interval, s.
        first_until: f64,
        /// Start of the second interval, s.
        second_from: f64,
        /// End of the second interval, s.
        second_until: f64,
    },
    /// A configuration value broke one of the type invariants.
    #[error("invalid {field}: {reason}")]
    InvalidConfig {
        /// Name of the offending field.
        field: &'static str,
        /// Constraint that was violated.
        reason: &'static str,
    },
}
