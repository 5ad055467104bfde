//! Independent oracles shared by the integration tests. Nothing here calls
//! into the crate's numeric code; the enumeration solver uses nalgebra.
#![allow(dead_code)]

use ecomerge::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Every constraint as `a . u >= b`, box rows included.
pub fn all_rows(p: &QpProblem<f64>) -> Vec<(Vec<f64>, f64)> {
    let n = p.n();
    let mut rows: Vec<(Vec<f64>, f64)> = (0..p.m()).map(|k| (p.ineq_row(k).to_vec(), p.ineq_lb()[k])).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        if p.lower()[j].is_finite() {
            e[j] = 1.0;
            rows.push((e.clone(), p.lower()[j]));
        }
        if p.upper()[j].is_finite() {
            e[j] = -1.0;
            rows.push((e, -p.upper()[j]));
        }
    }
    rows
}

fn objective(h: &DMatrix<f64>, g: &DVector<f64>, u: &DVector<f64>) -> f64 {
    0.5 * u.dot(&(h * u)) + g.dot(u)
}

fn subsets(m: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_size {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&l: &usize| l + 1);
            for k in start..m {
                let mut t: Vec<usize> = s.clone();
                t.push(k);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Brute-force optimum: solve the equality-constrained KKT system for every
/// subset of at most `n` constraints held tight and keep the best feasible
/// point. Returns `None` when no candidate is feasible.
pub fn enumeration_oracle(p: &QpProblem<f64>) -> Option<(f64, Vec<f64>)> {
    let n = p.n();
    let h = DMatrix::from_row_slice(n, n, p.hessian());
    let g = DVector::from_row_slice(p.gradient());
    let rows = all_rows(p);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for set in subsets(rows.len(), n) {
        let k = set.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        for i in 0..n {
            rhs[i] = -g[i];
        }
        for (c, &r) in set.iter().enumerate() {
            for j in 0..n {
                kkt[(n + c, j)] = rows[r].0[j];
                kkt[(j, n + c)] = rows[r].0[j];
            }
            rhs[n + c] = rows[r].1;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let u = sol.rows(0, n).into_owned();
        if !u.iter().all(|x| x.is_finite()) {
            continue;
        }
        let feasible = rows.iter().all(|(a, b)| {
            let lhs: f64 = a.iter().zip(u.iter()).map(|(x, y)| x * y).sum();
            lhs >= b - 1e-9 * (1.0 + b.abs())
        });
        if !feasible {
            continue;
        }
        let f = objective(&h, &g, &u);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, u.iter().copied().collect()));
        }
    }
    best
}

/// Random SPD matrix `M' M + eps I`, row-major.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, eps: f64) -> Vec<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m + DMatrix::identity(n, n) * eps;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(h[(i, j)]);
        }
    }
    out
}

/// Strictly convex problem that is feasible by construction: every row and
/// bound holds at a hidden interior point.
pub fn random_feasible_qp<R: Rng>(rng: &mut R, n: usize, m: usize, boxed: bool) -> QpProblem<f64> {
    let h = random_spd(rng, n, 0.1);
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut p = QpProblem::new(h, g).unwrap();
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ax: f64 = a.iter().zip(&x0).map(|(x, y)| x * y).sum();
        p.add_inequality(&a, ax - rng.random_range(0.0..1.0)).unwrap();
    }
    if boxed {
        let lo: Vec<f64> = x0.iter().map(|x| x - rng.random_range(0.05..2.0)).collect();
        let hi: Vec<f64> = x0.iter().map(|x| x + rng.random_range(0.05..2.0)).collect();
        p.set_bounds(lo, hi).unwrap();
    }
    p
}

/// Pose and unit heading on the two-road layout.
pub fn pose(merge: bool, s: f64, angle: f64) -> ([f64; 2], [f64; 2]) {
    if merge && s < 0.0 {
        let (sn, cs) = angle.sin_cos();
        ([s * cs, s * sn], [cs, sn])
    } else {
        ([s, 0.0], [1.0, 0.0])
    }
}

/// First-order pair row `c_i u_i + c_j u_j + lambda h` evaluated at the
/// commands and divided by `|(c_i, c_j)|` when that is nonzero.
#[allow(clippy::too_many_arguments)]
pub fn normalized_pair_row(
    pi: ([f64; 2], [f64; 2]),
    pj: ([f64; 2], [f64; 2]),
    ri: f64,
    rj: f64,
    ui: f64,
    uj: f64,
    beta: f64,
    lambda: f64,
) -> f64 {
    let xi = [pi.0[0] - pj.0[0], pi.0[1] - pj.0[1]];
    let h = xi[0] * xi[0] + xi[1] * xi[1] - ((1.0 + beta) * (ri + rj)).powi(2);
    let ci = 2.0 * (xi[0] * pi.1[0] + xi[1] * pi.1[1]);
    let cj = -2.0 * (xi[0] * pj.1[0] + xi[1] * pj.1[1]);
    let val = ci * ui + cj * uj + lambda * h;
    let norm = (ci * ci + cj * cj).sqrt();
    if norm > 0.0 {
        val / norm
    } else {
        val
    }
}
