//! Exact solver for the one- and two-variable safety QPs
//!
//! ```text
//! minimize ½‖u − û‖²  s.t.  a_i·u + b_i ≥ 0,  lower ≤ u ≤ upper
//! ```
//!
//! One variable: every row is a half-line, so the feasible set is an
//! interval and the minimizer is the clamp of û onto it. Two variables: the
//! minimizer is the projection of û onto the affine hull of at most two
//! active constraints, so enumerating the empty set, every single constraint
//! and every independent pair (rows and box faces together) and keeping the
//! feasible candidate closest to û is exact.
//!
//! When the constraints have no common point the solver returns the point of
//! the box that minimizes the largest normalized row violation.

use alloc::vec::Vec;

use crate::barrier::ConstraintRow;
use crate::math::{fabs, sqrt};

/// Rows whose gradient norm is below this are treated as constant.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Feasibility tolerance on normalized constraint values.
const FEAS_TOL: f64 = 1e-10;
/// Tolerance used to report a constraint as active.
const ACTIVE_TOL: f64 = 1e-9;

/// Affine inequality `a·u + b ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Halfspace {
    /// Gradient; unused trailing entries are zero.
    pub a: [f64; 2],
    /// Offset.
    pub b: f64,
}

impl Halfspace {
    /// `a·u + b`.
    pub fn value(&self, u: &[f64; 2]) -> f64 {
        self.a[0] * u[0] + self.a[1] * u[1] + self.b
    }

    fn norm(&self) -> f64 {
        sqrt(self.a[0] * self.a[0] + self.a[1] * self.a[1])
    }
}

impl From<&ConstraintRow> for Halfspace {
    fn from(row: &ConstraintRow) -> Self {
        let mut a = [0.0; 2];
        a[..row.dim].copy_from_slice(&row.a[..row.dim]);
        Self { a, b: row.b }
    }
}

/// A safety QP around a nominal input.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// 1 (thrust) or 2 (roll/pitch moments).
    pub dim: usize,
    /// Nominal input û (trailing entry zero when `dim == 1`).
    pub nominal: [f64; 2],
    /// Barrier rows.
    pub rows: Vec<Halfspace>,
    /// Lower box bounds.
    pub lower: [f64; 2],
    /// Upper box bounds.
    pub upper: [f64; 2],
}

impl QpProblem {
    /// Thrust QP over `[0, f_max]`.
    pub fn thrust(nominal: f64, rows: Vec<Halfspace>, f_max: f64) -> Self {
        Self {
            dim: 1,
            nominal: [nominal, 0.0],
            rows,
            lower: [0.0, 0.0],
            upper: [f_max, 0.0],
        }
    }

    /// Moment QP over `|τx| ≤ bound[0]`, `|τy| ≤ bound[1]`.
    pub fn moments(nominal: [f64; 2], rows: Vec<Halfspace>, bound: [f64; 2]) -> Self {
        Self {
            dim: 2,
            nominal,
            rows,
            lower: [-bound[0], -bound[1]],
            upper: bound,
        }
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    /// Exact minimizer found.
    Optimal,
    /// No point satisfies every constraint.
    Infeasible,
}

/// A constraint reported as tight at the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveConstraint {
    /// Barrier row by index.
    Row(usize),
    /// Lower box face of a coordinate.
    Lower(usize),
    /// Upper box face of a coordinate.
    Upper(usize),
}

/// Result of [`solve_qp`].
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// Minimizer, or least-violation point when infeasible.
    pub u: [f64; 2],
    /// Status.
    pub status: QpStatus,
    /// Constraints tight at `u`.
    pub active_set: Vec<ActiveConstraint>,
    /// KKT residual (stationarity, primal, dual, complementarity) on
    /// normalized constraints; `f64::INFINITY` when infeasible.
    pub kkt_residual: f64,
    /// Largest violation of any raw row at `u` (0 when feasible).
    pub max_violation: f64,
}

/// Internal constraint form `n·u + c ≥ 0` with unit `n`.
#[derive(Debug, Clone, Copy)]
struct Unit {
    n: [f64; 2],
    c: f64,
    id: ActiveConstraint,
}

impl Unit {
    fn value(&self, u: &[f64; 2]) -> f64 {
        self.n[0] * u[0] + self.n[1] * u[1] + self.c
    }
}

fn box_units(p: &QpProblem) -> impl Iterator<Item = Unit> + '_ {
    (0..p.dim).flat_map(move |j| {
        let mut e = [0.0; 2];
        e[j] = 1.0;
        [
            Unit { n: e, c: -p.lower[j], id: ActiveConstraint::Lower(j) },
            Unit { n: [-e[0], -e[1]], c: p.upper[j], id: ActiveConstraint::Upper(j) },
        ]
    })
}

/// Splits rows into normalized ones and a flag for unrecoverable constant
/// rows (`‖a‖ ≈ 0`, `b < 0`). Constant rows with `b ≥ 0` are dropped.
fn normalize_rows(p: &QpProblem) -> (Vec<Unit>, bool) {
    let mut units = Vec::with_capacity(p.rows.len());
    let mut dead = false;
    for (i, row) in p.rows.iter().enumerate() {
        let mut row = *row;
        if p.dim == 1 {
            row.a[1] = 0.0;
        }
        let norm = row.norm();
        if norm < DEGENERATE_NORM {
            dead |= row.b < 0.0;
            continue;
        }
        units.push(Unit {
            n: [row.a[0] / norm, row.a[1] / norm],
            c: row.b / norm,
            id: ActiveConstraint::Row(i),
        });
    }
    (units, dead)
}

/// Solves the QP exactly.
pub fn solve_qp(p: &QpProblem) -> QpSolution {
    assert!(p.dim == 1 || p.dim == 2, "QP dimension must be 1 or 2");
    let (rows, dead) = normalize_rows(p);
    let mut all: Vec<Unit> = rows.clone();
    all.extend(box_units(p));

    let best = if p.dim == 1 { solve_interval(p, &all) } else { solve_planar(p, &all) };
    match best {
        Some(u) if !dead => {
            let (kkt_residual, active_set) = kkt(p, &all, &u);
            QpSolution {
                u,
                status: QpStatus::Optimal,
                active_set,
                kkt_residual,
                max_violation: max_row_violation(p, &u),
            }
        }
        // Constant rows cannot be influenced; the rest is still solved
        // optimally when possible.
        Some(u) => infeasible(p, u, &all),
        None => {
            let u = least_violation(p, &rows);
            // Among points with that worst-case violation, take the one
            // closest to û.
            let worst = rows.iter().fold(0.0f64, |acc, r| acc.max(-r.value(&u)));
            let mut relaxed: Vec<Unit> = rows.iter().map(|r| Unit { c: r.c + worst + 1e-12, ..*r }).collect();
            relaxed.extend(box_units(p));
            let polished = if p.dim == 1 { solve_interval(p, &relaxed) } else { solve_planar(p, &relaxed) };
            // The relaxation margin alone must not move the minimax point.
            let u = match polished {
                Some(v) if fabs(v[0] - u[0]) > 1e-9 || fabs(v[1] - u[1]) > 1e-9 => v,
                _ => u,
            };
            infeasible(p, u, &all)
        }
    }
}

fn infeasible(p: &QpProblem, u: [f64; 2], all: &[Unit]) -> QpSolution {
    QpSolution {
        u,
        status: QpStatus::Infeasible,
        active_set: tight(all, &u),
        kkt_residual: f64::INFINITY,
        max_violation: max_row_violation(p, &u),
    }
}

fn max_row_violation(p: &QpProblem, u: &[f64; 2]) -> f64 {
    p.rows.iter().fold(0.0, |acc, r| acc.max(-r.value(u)))
}

fn tight(all: &[Unit], u: &[f64; 2]) -> Vec<ActiveConstraint> {
    all.iter().filter(|c| fabs(c.value(u)) <= ACTIVE_TOL).map(|c| c.id).collect()
}

fn feasible(all: &[Unit], u: &[f64; 2]) -> bool {
    all.iter().all(|c| c.value(u) >= -FEAS_TOL)
}

fn solve_interval(p: &QpProblem, all: &[Unit]) -> Option<[f64; 2]> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for c in all {
        let root = -c.c / c.n[0];
        if c.n[0] > 0.0 {
            lo = lo.max(root);
        } else {
            hi = hi.min(root);
        }
    }
    if lo > hi {
        return None;
    }
    Some([p.nominal[0].clamp(lo, hi), 0.0])
}

fn dist2(u: &[f64; 2], v: &[f64; 2]) -> f64 {
    let (dx, dy) = (u[0] - v[0], u[1] - v[1]);
    dx * dx + dy * dy
}

/// Intersection of the lines `n_i·u + c_i = t_i`.
fn intersect(n1: [f64; 2], r1: f64, n2: [f64; 2], r2: f64) -> Option<[f64; 2]> {
    let det = n1[0] * n2[1] - n1[1] * n2[0];
    if fabs(det) <= 1e-12 {
        return None;
    }
    Some([(r1 * n2[1] - r2 * n1[1]) / det, (n1[0] * r2 - n2[0] * r1) / det])
}

fn solve_planar(p: &QpProblem, all: &[Unit]) -> Option<[f64; 2]> {
    let u_hat = p.nominal;
    if feasible(all, &u_hat) {
        return Some(u_hat);
    }
    let mut best: Option<([f64; 2], f64)> = None;
    let mut consider = |u: [f64; 2]| {
        if !feasible(all, &u) {
            return;
        }
        let d = dist2(&u, &u_hat);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((u, d));
        }
    };
    for c in all {
        let g = c.value(&u_hat);
        consider([u_hat[0] - g * c.n[0], u_hat[1] - g * c.n[1]]);
    }
    for (i, ci) in all.iter().enumerate() {
        for cj in &all[i + 1..] {
            if let Some(u) = intersect(ci.n, -ci.c, cj.n, -cj.c) {
                consider(u);
            }
        }
    }
    best.map(|(u, _)| u)
}

/// Point of the box minimizing the largest normalized row violation.
/// Ties go to the candidate closest to û.
fn least_violation(p: &QpProblem, rows: &[Unit]) -> [f64; 2] {
    let worst = |u: &[f64; 2]| rows.iter().fold(f64::NEG_INFINITY, |acc, r| acc.max(-r.value(u)));
    let clamp = |u: [f64; 2]| {
        let mut out = [0.0; 2];
        for j in 0..p.dim {
            out[j] = u[j].clamp(p.lower[j], p.upper[j]);
        }
        out
    };
    let inside = |u: &[f64; 2]| (0..p.dim).all(|j| u[j] >= p.lower[j] - 1e-12 && u[j] <= p.upper[j] + 1e-12);

    let mut candidates: Vec<[f64; 2]> = Vec::new();
    candidates.push(clamp(p.nominal));
    if p.dim == 1 {
        candidates.push([p.lower[0], 0.0]);
        candidates.push([p.upper[0], 0.0]);
        for (i, ri) in rows.iter().enumerate() {
            for rj in &rows[i + 1..] {
                // −(n_i u + c_i) = −(n_j u + c_j)
                let dn = ri.n[0] - rj.n[0];
                if fabs(dn) > 1e-12 {
                    let u = [(rj.c - ri.c) / dn, 0.0];
                    if inside(&u) {
                        candidates.push(u);
                    }
                }
            }
        }
    } else {
        for &x in &[p.lower[0], p.upper[0]] {
            for &y in &[p.lower[1], p.upper[1]] {
                candidates.push([x, y]);
            }
        }
        // Equal-violation crossings of two rows along each box edge.
        for (i, ri) in rows.iter().enumerate() {
            for rj in &rows[i + 1..] {
                let dn = [ri.n[0] - rj.n[0], ri.n[1] - rj.n[1]];
                let dc = ri.c - rj.c;
                for j in 0..2 {
                    let other = 1 - j;
                    if fabs(dn[other]) <= 1e-12 {
                        continue;
                    }
                    for &fixed in &[p.lower[j], p.upper[j]] {
                        let mut u = [0.0; 2];
                        u[j] = fixed;
                        u[other] = -(dc + dn[j] * fixed) / dn[other];
                        if inside(&u) {
                            candidates.push(u);
                        }
                    }
                }
            }
        }
        // Interior points where three rows share the same violation.
        for (i, ri) in rows.iter().enumerate() {
            for (j, rj) in rows.iter().enumerate().skip(i + 1) {
                for rk in &rows[j + 1..] {
                    let n1 = [ri.n[0] - rj.n[0], ri.n[1] - rj.n[1]];
                    let n2 = [ri.n[0] - rk.n[0], ri.n[1] - rk.n[1]];
                    if let Some(u) = intersect(n1, rj.c - ri.c, n2, rk.c - ri.c) {
                        if inside(&u) {
                            candidates.push(u);
                        }
                    }
                }
            }
        }
    }

    let mut best = candidates[0];
    let (mut best_w, mut best_d) = (worst(&best), dist2(&best, &p.nominal));
    for u in candidates.into_iter().skip(1) {
        let (w, d) = (worst(&u), dist2(&u, &p.nominal));
        if w < best_w - 1e-12 || (w <= best_w + 1e-12 && d < best_d) {
            best = u;
            best_w = w;
            best_d = d;
        }
    }
    best
}

/// KKT residual at a feasible point and the tight set.
///
/// Multipliers come from least squares on the tight normals; the residual is
/// the largest of the stationarity norm, negative multipliers, primal
/// violation and complementarity products.
fn kkt(p: &QpProblem, all: &[Unit], u: &[f64; 2]) -> (f64, Vec<ActiveConstraint>) {
    let active: Vec<&Unit> = all.iter().filter(|c| fabs(c.value(u)) <= ACTIVE_TOL).collect();
    let grad = [u[0] - p.nominal[0], u[1] - p.nominal[1]];
    let lambdas = multipliers(&active, grad, p.dim);
    let mut stat = grad;
    for (c, l) in active.iter().zip(&lambdas) {
        stat[0] -= l * c.n[0];
        stat[1] -= l * c.n[1];
    }
    let mut residual = sqrt(stat[0] * stat[0] + stat[1] * stat[1]);
    for (c, l) in active.iter().zip(&lambdas) {
        residual = residual.max(-l).max(fabs(l * c.value(u)));
    }
    for c in all {
        residual = residual.max(-c.value(u));
    }
    (residual, active.iter().map(|c| c.id).collect())
}

/// Non-negative least-squares-style multipliers for `grad = Σ λ_i n_i` over
/// at most `dim` independent tight normals.
fn multipliers(active: &[&Unit], grad: [f64; 2], dim: usize) -> Vec<f64> {
    let mut lambdas = alloc::vec![0.0; active.len()];
    if active.is_empty() {
        return lambdas;
    }
    // Try single normals, then independent pairs; keep the best fit with
    // non-negative multipliers.
    let residual = |l: &[(usize, f64)]| {
        let mut r = grad;
        for &(i, v) in l {
            r[0] -= v * active[i].n[0];
            r[1] -= v * active[i].n[1];
        }
        r[0] * r[0] + r[1] * r[1]
    };
    let mut best: (f64, Vec<(usize, f64)>) = (grad[0] * grad[0] + grad[1] * grad[1], Vec::new());
    for (i, c) in active.iter().enumerate() {
        let v = grad[0] * c.n[0] + grad[1] * c.n[1];
        if v >= 0.0 {
            let cand = alloc::vec![(i, v)];
            let r = residual(&cand);
            if r < best.0 {
                best = (r, cand);
            }
        }
    }
    if dim == 2 {
        for i in 0..active.len() {
            for j in i + 1..active.len() {
                let (ni, nj) = (active[i].n, active[j].n);
                let det = ni[0] * nj[1] - ni[1] * nj[0];
                if fabs(det) <= 1e-12 {
                    continue;
                }
                let li = (grad[0] * nj[1] - grad[1] * nj[0]) / det;
                let lj = (ni[0] * grad[1] - ni[1] * grad[0]) / det;
                if li >= -1e-12 && lj >= -1e-12 {
                    let cand = alloc::vec![(i, li), (j, lj)];
                    let r = residual(&cand);
                    if r < best.0 {
                        best = (r, cand);
                    }
                }
            }
        }
    }
    for (i, v) in best.1 {
        lambdas[i] = v;
    }
    lambdas
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    #[test]
    fn unconstrained_inside_box_is_identity() {
        let s = solve_qp(&QpProblem::moments([3.0, -4.0], vec![], [20.0, 20.0]));
        assert_eq!(s.u, [3.0, -4.0]);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.active_set.is_empty());
        let s = solve_qp(&QpProblem::thrust(7.5, vec![], 36.0));
        assert_eq!(s.u[0], 7.5);
    }

    #[test]
    fn thrust_lower_half_line() {
        let s = solve_qp(&QpProblem::thrust(10.0, vec![Halfspace { a: [1.0, 0.0], b: -12.0 }], 36.0));
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.u[0], 12.0);
        assert_eq!(s.active_set, vec![ActiveConstraint::Row(0)]);
        assert!(s.kkt_residual <= 1e-8);
    }

    #[test]
    fn thrust_box_clamp() {
        let s = solve_qp(&QpProblem::thrust(50.0, vec![], 36.0));
        assert_eq!(s.u[0], 36.0);
        assert_eq!(s.active_set, vec![ActiveConstraint::Upper(0)]);
    }

    #[test]
    fn planar_halfplane_projection() {
        let s = solve_qp(&QpProblem::moments([0.0, 0.0], vec![Halfspace { a: [1.0, 1.0], b: -1.0 }], [20.0, 20.0]));
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.u[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.u[1], 0.5, epsilon = 1e-15);
        assert!(s.kkt_residual <= 1e-8);
    }

    #[test]
    fn planar_box_clamp() {
        let s = solve_qp(&QpProblem::moments([25.0, 0.0], vec![], [20.0, 20.0]));
        assert_eq!(s.u, [20.0, 0.0]);
    }

    #[test]
    fn planar_corner_of_two_rows() {
        // u0 ≥ 1 and u1 ≥ 2 from the origin: the corner (1, 2).
        let rows = vec![Halfspace { a: [1.0, 0.0], b: -1.0 }, Halfspace { a: [0.0, 1.0], b: -2.0 }];
        let s = solve_qp(&QpProblem::moments([0.0, 0.0], rows, [20.0, 20.0]));
        assert_eq!(s.u, [1.0, 2.0]);
        assert_eq!(s.active_set.len(), 2);
    }

    #[test]
    fn degenerate_rows() {
        let vacuous = Halfspace { a: [0.0, 0.0], b: 1.0 };
        let s = solve_qp(&QpProblem::moments([1.0, 1.0], vec![vacuous], [20.0, 20.0]));
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.u, [1.0, 1.0]);
        let dead = Halfspace { a: [0.0, 1e-14], b: -1.0 };
        let s = solve_qp(&QpProblem::moments([1.0, 1.0], vec![dead], [20.0, 20.0]));
        assert_eq!(s.status, QpStatus::Infeasible);
        assert_eq!(s.u, [1.0, 1.0]);
    }

    #[test]
    fn infeasible_thrust_picks_least_violation() {
        // F ≥ 40 is beyond f_max: the best the box allows is F = 36.
        let s = solve_qp(&QpProblem::thrust(5.0, vec![Halfspace { a: [1.0, 0.0], b: -40.0 }], 36.0));
        assert_eq!(s.status, QpStatus::Infeasible);
        assert_eq!(s.u[0], 36.0);
        assert_relative_eq!(s.max_violation, 4.0);
        // Two contradictory rows F ≥ 20 and F ≤ 10 balance at 15.
        let rows = vec![Halfspace { a: [1.0, 0.0], b: -20.0 }, Halfspace { a: [-1.0, 0.0], b: 10.0 }];
        let s = solve_qp(&QpProblem::thrust(5.0, rows, 36.0));
        assert_eq!(s.status, QpStatus::Infeasible);
        assert_relative_eq!(s.u[0], 15.0);
    }

    #[test]
    fn infeasible_planar_balances_rows() {
        // u0 ≥ 3 and u0 ≤ 1 in a ±20 box: the minimax point has u0 = 2.
        let rows = vec![Halfspace { a: [1.0, 0.0], b: -3.0 }, Halfspace { a: [-1.0, 0.0], b: 1.0 }];
        let s = solve_qp(&QpProblem::moments([0.0, 5.0], rows, [20.0, 20.0]));
        assert_eq!(s.status, QpStatus::Infeasible);
        assert_relative_eq!(s.u[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(s.u[1], 5.0, epsilon = 1e-9);
    }
}
