//! Finite-difference check of the barrier chains.
//!
//! For a random in-set state and a frozen input, `h` is sampled along the
//! flow (RK4 substeps of 1e-4 s, forwards and backwards) on an equispaced
//! stencil, and central differences of every order up to δ are compared
//! with the analytic 𝓗 entries and with `L_f^δ h + L_g L_f^{δ−1} h · u`.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadsafe_core::barrier::{constraint_row, BarrierDomain, BarrierSpec, EcbfGains};
use quadsafe_core::dynamics::{rk4, rotation_from_euler, ControlInput, QuadParams, QuadState};

/// Integration substep, s.
pub const SUBSTEP: f64 = 1e-4;
/// Substeps between stencil points.
pub const SUBSTEPS_PER_POINT: usize = 50;
/// Stencil half-width in points.
pub const HALF_WIDTH: usize = 6;
/// Tolerance on 𝓗 entries.
pub const LIE_TOL: f64 = 1e-4;
/// Tolerance on the δ-th derivative.
pub const TOP_TOL: f64 = 1e-3;

/// Result for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    /// Which chain.
    pub domain: BarrierDomain,
    /// States tested.
    pub samples: usize,
    /// Worst relative error per 𝓗 entry.
    pub lie_error: Vec<f64>,
    /// Worst relative error of the δ-th derivative.
    pub top_error: f64,
}

impl ChainReport {
    /// Worst 𝓗 error over all entries.
    pub fn max_lie_error(&self) -> f64 {
        self.lie_error.iter().copied().fold(0.0, f64::max)
    }

    /// Both tolerances met.
    pub fn passed(&self) -> bool {
        self.max_lie_error() <= LIE_TOL && self.top_error <= TOP_TOL
    }
}

/// Weights `w[k][j]` for the k-th derivative at `x0` from samples at `xs`.
pub fn fornberg(x0: f64, xs: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

fn rel(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// `h` at stencil points `−HALF_WIDTH..=HALF_WIDTH` along the frozen-input
/// flow.
fn samples(state: &QuadState, u: &ControlInput, spec: &BarrierSpec, params: &QuadParams) -> Vec<f64> {
    let mut out = vec![0.0; 2 * HALF_WIDTH + 1];
    out[HALF_WIDTH] = spec.h(state);
    for dir in [1.0, -1.0] {
        let mut s = *state;
        for k in 1..=HALF_WIDTH {
            for _ in 0..SUBSTEPS_PER_POINT {
                s = rk4(&s, u, params, dir * SUBSTEP);
            }
            let idx = if dir > 0.0 { HALF_WIDTH + k } else { HALF_WIDTH - k };
            out[idx] = spec.h(&s);
        }
    }
    out
}

/// Barrier regions the oracle uses (off-center, unequal widths).
pub fn oracle_specs() -> [BarrierSpec; 4] {
    [
        BarrierSpec::altitude_position(0.3, 2.0),
        BarrierSpec::altitude_posvel(-0.2, 2.0, 0.1, 1.5),
        BarrierSpec::lateral_position([0.2, -0.4], [2.0, 1.5]),
        BarrierSpec::lateral_velocity([0.0, 0.3], [2.5, 2.0]),
    ]
}

fn random_state(rng: &mut ChaCha8Rng) -> QuadState {
    let mut v3 = |r: f64| Vector3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r));
    let position = v3(1.5);
    let velocity = v3(1.5);
    let body_rates = v3(1.5);
    let rotation = rotation_from_euler(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-3.1..3.1));
    QuadState { position, rotation, velocity, body_rates }
}

fn random_input(rng: &mut ChaCha8Rng) -> ControlInput {
    ControlInput {
        thrust: rng.gen_range(2.0..30.0),
        torque: Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
    }
}

/// Checks one chain at `samples` random in-set states.
pub fn check_chain(spec: &BarrierSpec, samples_wanted: usize, seed: u64) -> ChainReport {
    let params = QuadParams::default();
    let gains = EcbfGains::default_for(spec.domain);
    let delta = spec.domain.relative_degree();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h_step = SUBSTEP * SUBSTEPS_PER_POINT as f64;
    let xs: Vec<f64> = (0..=2 * HALF_WIDTH).map(|i| (i as f64 - HALF_WIDTH as f64) * h_step).collect();
    let weights = fornberg(0.0, &xs, delta);

    let mut report = ChainReport { domain: spec.domain, samples: 0, lie_error: vec![0.0; delta], top_error: 0.0 };
    while report.samples < samples_wanted {
        let state = random_state(&mut rng);
        let u = random_input(&mut rng);
        if spec.h(&state) <= 0.0 {
            continue;
        }
        let Ok(row) = constraint_row(&state, u.thrust, spec, &gains, &params) else {
            continue;
        };
        let hs = samples(&state, &u, spec, &params);
        let deriv = |k: usize| weights[k].iter().zip(&hs).map(|(w, h)| w * h).sum::<f64>();
        for k in 0..delta {
            report.lie_error[k] = report.lie_error[k].max(rel(row.lie[k], deriv(k)));
        }
        let input: &[f64] = if spec.domain.is_altitude() { &[u.thrust] } else { &[u.torque.x, u.torque.y] };
        report.top_error = report.top_error.max(rel(row.highest_derivative(input), deriv(delta)));
        report.samples += 1;
    }
    report
}

/// Runs every chain.
pub fn run_all(samples: usize, seed: u64) -> Vec<ChainReport> {
    oracle_specs().iter().enumerate().map(|(i, s)| check_chain(s, samples, seed + i as u64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_matches_textbook_stencils() {
        let w = fornberg(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
        let w = fornberg(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 4);
        let expect = [1.0, -4.0, 6.0, -4.0, 1.0];
        for (a, b) in w[4].iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        let xs: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.1).collect();
        let w = fornberg(0.0, &xs, 4);
        let f = |x: f64| 2.0 + 3.0 * x - x * x + 0.5 * x.powi(3) + 0.25 * x.powi(4);
        let d: Vec<f64> = (0..=4).map(|k| w[k].iter().zip(&xs).map(|(w, x)| w * f(*x)).sum()).collect();
        let expect = [2.0, 3.0, -2.0, 3.0, 6.0];
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}
