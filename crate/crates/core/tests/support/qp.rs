//! Independent QP oracles shared by the QP tests.

use quadsafe_core::qp::QpProblem;

/// Best objective over a feasibility-filtered grid: step 1e-3 over the
/// box (1e-3 by 2e-2 in the plane) plus a square 1e-3 patch of half-width
/// 0.1 around `near`.
pub fn grid_best(p: &QpProblem, near: [f64; 2]) -> Option<f64> {
    let axis = move |j: usize, lo: f64, hi: f64, step: f64| {
        let (lo, hi) = (lo.max(p.lower[j]), hi.min(p.upper[j]));
        let n = ((hi - lo) / step).floor() as usize;
        (0..=n).map(move |i| lo + i as f64 * step).chain(core::iter::once(hi))
    };
    let full = |j| axis(j, f64::MIN, f64::MAX, 1e-3);
    let points: Box<dyn Iterator<Item = [f64; 2]>> = if p.dim == 1 {
        Box::new(full(0).map(|x| [x, 0.0]))
    } else {
        let patch = axis(0, near[0] - 0.1, near[0] + 0.1, 1e-3)
            .flat_map(move |x| axis(1, near[1] - 0.1, near[1] + 0.1, 1e-3).map(move |y| [x, y]));
        Box::new(full(0).flat_map(move |x| axis(1, f64::MIN, f64::MAX, 2e-2).map(move |y| [x, y])).chain(patch))
    };
    points
        .filter(|u| p.rows.iter().all(|r| r.value(u) >= 0.0))
        .map(|u| objective(p, &u))
        .min_by(f64::total_cmp)
}

pub fn objective(p: &QpProblem, u: &[f64; 2]) -> f64 {
    (0..p.dim).map(|j| 0.5 * (u[j] - p.nominal[j]).powi(2)).sum()
}

/// Projection of û onto the feasible set by Dykstra's alternating
/// projections; independent of any active-set reasoning.
pub fn dykstra(p: &QpProblem) -> [f64; 2] {
    let rows: Vec<_> = p.rows.iter().filter(|r| r.a[0].hypot(r.a[1]) > 1e-12).collect();
    let n = rows.len() + 1;
    let mut x = p.nominal;
    let mut incr = vec![[0.0f64; 2]; n];
    for _ in 0..200_000 {
        let start = (x, incr.clone());
        for (k, inc) in incr.iter_mut().enumerate() {
            let y = [x[0] + inc[0], x[1] + inc[1]];
            let proj = if k == rows.len() {
                [y[0].clamp(p.lower[0], p.upper[0]), y[1].clamp(p.lower[1], p.upper[1])]
            } else {
                let r = rows[k];
                let v = r.value(&y).min(0.0) / (r.a[0] * r.a[0] + r.a[1] * r.a[1]);
                [y[0] - v * r.a[0], y[1] - v * r.a[1]]
            };
            *inc = [y[0] - proj[0], y[1] - proj[1]];
            x = proj;
        }
        let moved = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).abs().max((a[1] - b[1]).abs());
        let change = incr.iter().zip(&start.1).fold(moved(&x, &start.0), |m, (a, b)| m.max(moved(a, b)));
        if change < 1e-15 {
            break;
        }
    }
    x
}
