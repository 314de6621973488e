//! Truncated Taylor series of the frozen-input flow, used as an exact
//! oracle for the Lie-derivative chains. The vector field is polynomial in
//! the state, so Picard iteration on series gives the Taylor coefficients up
//! to roundoff.

use nalgebra::Vector3;
use proptest::prelude::*;
use quadsafe_core::barrier::{constraint_row, BarrierDomain, BarrierSpec, EcbfGains};
use quadsafe_core::dynamics::{rotation_from_euler, ControlInput, QuadParams, QuadState};

const ORDER: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Jet([f64; ORDER + 1]);

impl Jet {
    fn constant(c: f64) -> Self {
        let mut j = [0.0; ORDER + 1];
        j[0] = c;
        Jet(j)
    }
    fn sub(self, o: Jet) -> Jet {
        Jet(core::array::from_fn(|k| self.0[k] - o.0[k]))
    }
    fn scale(self, s: f64) -> Jet {
        Jet(self.0.map(|v| v * s))
    }
    fn mul(self, o: Jet) -> Jet {
        Jet(core::array::from_fn(|k| (0..=k).map(|i| self.0[i] * o.0[k - i]).sum()))
    }
    fn powi(self, n: u32) -> Jet {
        (0..n).fold(Jet::constant(1.0), |acc, _| acc.mul(self))
    }
    /// `x0 + ∫ self`.
    fn integrate(self, x0: f64) -> Jet {
        let mut j = [0.0; ORDER + 1];
        j[0] = x0;
        for k in 1..=ORDER {
            j[k] = self.0[k - 1] / k as f64;
        }
        Jet(j)
    }
    /// k-th time derivative at t = 0.
    fn derivative(&self, k: usize) -> f64 {
        self.0[k] * (1..=k).product::<usize>() as f64
    }
}

/// Position, velocity, rotation (row-major) and body rates as series.
#[derive(Clone, Copy)]
struct StateJet {
    p: [Jet; 3],
    v: [Jet; 3],
    r: [[Jet; 3]; 3],
    w: [Jet; 3],
}

fn flow_jet(s: &QuadState, u: &ControlInput, params: &QuadParams) -> StateJet {
    let x0 = StateJet {
        p: core::array::from_fn(|i| Jet::constant(s.position[i])),
        v: core::array::from_fn(|i| Jet::constant(s.velocity[i])),
        r: core::array::from_fn(|i| core::array::from_fn(|j| Jet::constant(s.rotation[(i, j)]))),
        w: core::array::from_fn(|i| Jet::constant(s.body_rates[i])),
    };
    let inertia = params.inertia;
    let mut x = x0;
    for _ in 0..=ORDER {
        let f_over_m = u.thrust / params.mass;
        let dp = x.v;
        let dv: [Jet; 3] = core::array::from_fn(|i| {
            let g = if i == 2 { params.gravity } else { 0.0 };
            Jet::constant(g).sub(x.r[i][2].scale(f_over_m))
        });
        // R [ω]×, column j: R (e_j × ... ) written out.
        let w = x.w;
        let dr: [[Jet; 3]; 3] = core::array::from_fn(|i| {
            let row = x.r[i];
            [
                row[1].mul(w[2]).sub(row[2].mul(w[1])),
                row[2].mul(w[0]).sub(row[0].mul(w[2])),
                row[0].mul(w[1]).sub(row[1].mul(w[0])),
            ]
        });
        let iw: [Jet; 3] = core::array::from_fn(|i| w[i].scale(inertia[i]));
        let cross = [
            w[1].mul(iw[2]).sub(w[2].mul(iw[1])),
            w[2].mul(iw[0]).sub(w[0].mul(iw[2])),
            w[0].mul(iw[1]).sub(w[1].mul(iw[0])),
        ];
        let dw: [Jet; 3] = core::array::from_fn(|i| Jet::constant(u.torque[i]).sub(cross[i]).scale(1.0 / inertia[i]));
        x = StateJet {
            p: core::array::from_fn(|i| dp[i].integrate(s.position[i])),
            v: core::array::from_fn(|i| dv[i].integrate(s.velocity[i])),
            r: core::array::from_fn(|i| core::array::from_fn(|j| dr[i][j].integrate(s.rotation[(i, j)]))),
            w: core::array::from_fn(|i| dw[i].integrate(s.body_rates[i])),
        };
    }
    x
}

fn h_jet(x: &StateJet, spec: &BarrierSpec) -> Jet {
    let values: Vec<Jet> = match spec.domain {
        BarrierDomain::AltitudePosition => vec![x.p[2]],
        BarrierDomain::AltitudePosVel => vec![x.p[2], x.v[2]],
        BarrierDomain::LateralPosition => vec![x.p[0], x.p[1]],
        BarrierDomain::LateralVelocity => vec![x.v[0], x.v[1]],
    };
    values.iter().enumerate().fold(Jet::constant(1.0), |h, (j, s)| {
        let e = s.sub(Jet::constant(spec.center[j])).scale(1.0 / spec.half_width[j]);
        h.sub(e.powi(spec.exponent))
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn specs() -> [BarrierSpec; 4] {
    [
        BarrierSpec::altitude_position(0.3, 2.0),
        BarrierSpec::altitude_posvel(-0.2, 2.0, 0.1, 1.5),
        BarrierSpec::lateral_position([0.2, -0.4], [2.0, 1.5]),
        BarrierSpec::lateral_velocity([0.0, 0.3], [2.5, 2.0]),
    ]
}

fn state_strategy() -> impl Strategy<Value = QuadState> {
    (
        prop::array::uniform3(-1.5f64..1.5),
        prop::array::uniform3(-1.5f64..1.5),
        (-0.6f64..0.6, -0.6f64..0.6, -3.1f64..3.1),
        prop::array::uniform3(-1.5f64..1.5),
    )
        .prop_map(|(p, v, (roll, pitch, yaw), w)| QuadState {
            position: Vector3::from(p),
            rotation: rotation_from_euler(roll, pitch, yaw),
            velocity: Vector3::from(v),
            body_rates: Vector3::from(w),
        })
}

fn input_strategy() -> impl Strategy<Value = ControlInput> {
    (2.0f64..30.0, prop::array::uniform3(-5.0f64..5.0))
        .prop_map(|(thrust, t)| ControlInput { thrust, torque: Vector3::from(t) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chains_match_taylor_coefficients(state in state_strategy(), u in input_strategy()) {
        let params = QuadParams::default();
        let x = flow_jet(&state, &u, &params);
        for spec in specs() {
            let h = h_jet(&x, &spec);
            prop_assume!(h.0[0] > 0.0);
            let gains = EcbfGains::default_for(spec.domain);
            let row = constraint_row(&state, u.thrust, &spec, &gains, &params).unwrap();
            let delta = spec.domain.relative_degree();
            for k in 0..delta {
                prop_assert!(close(row.lie[k], h.derivative(k), 1e-9),
                    "{} H[{k}]: {} vs {}", spec.domain.name(), row.lie[k], h.derivative(k));
            }
            let input: Vec<f64> = if spec.domain.is_altitude() {
                vec![u.thrust]
            } else {
                vec![u.torque.x, u.torque.y]
            };
            let top = row.highest_derivative(&input);
            prop_assert!(close(top, h.derivative(delta), 1e-9),
                "{} h^({delta}): {} vs {}", spec.domain.name(), top, h.derivative(delta));
        }
    }

    #[test]
    fn input_enters_only_at_relative_degree(state in state_strategy(), u in input_strategy(), v in input_strategy()) {
        let params = QuadParams::default();
        for spec in specs() {
            // Perturb only the channel this barrier's QP controls.
            let other = if spec.domain.is_altitude() {
                ControlInput { thrust: v.thrust, torque: u.torque }
            } else {
                ControlInput { thrust: u.thrust, torque: Vector3::new(v.torque.x, v.torque.y, u.torque.z) }
            };
            let (ha, hb) = (h_jet(&flow_jet(&state, &u, &params), &spec), h_jet(&flow_jet(&state, &other, &params), &spec));
            prop_assume!(ha.0[0] > 0.0);
            let delta = spec.domain.relative_degree();
            for k in 0..delta {
                prop_assert!(close(ha.derivative(k), hb.derivative(k), 1e-8),
                    "{} derivative {k} depends on the input", spec.domain.name());
            }
            let gains = EcbfGains::default_for(spec.domain);
            let row = constraint_row(&state, u.thrust, &spec, &gains, &params).unwrap();
            let du = if spec.domain.is_altitude() {
                row.a[0] * (other.thrust - u.thrust)
            } else {
                row.a[0] * (other.torque.x - u.torque.x) + row.a[1] * (other.torque.y - u.torque.y)
            };
            prop_assert!(close(hb.derivative(delta) - ha.derivative(delta), du, 1e-8),
                "{}: input gain mismatch", spec.domain.name());
        }
    }
}

#[test]
fn level_hover_jet_is_stationary() {
    let params = QuadParams::default();
    let s = QuadState::at_rest(Vector3::new(0.1, 0.2, 0.3));
    let x = flow_jet(&s, &ControlInput::thrust_only(params.hover_thrust()), &params);
    for k in 1..=ORDER {
        assert!(x.p.iter().chain(x.v.iter()).all(|j| j.0[k].abs() < 1e-12));
    }
    assert_eq!(x.r[0][0], Jet::constant(1.0));
}
