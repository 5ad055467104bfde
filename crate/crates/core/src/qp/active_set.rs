//! Primal active-set iteration.
//!
//! With `H = L L'`, the equality-constrained step on the working set `W` is
//! obtained in the scaled space `p~ = L' p`: `p~` is minus the component of
//! `L^-1 (H u + g)` orthogonal to the scaled working rows `L^-1 a_k`. The
//! scaled rows are kept as a thin QR factor that grows by one Gram-Schmidt
//! column per added constraint and is rebuilt when a constraint leaves.

use super::linalg::{axpy, backward_sub_transposed, cholesky, dot, forward_sub, mat_vec, norm2, norm_inf};
use super::{QpProblem, QpSolution, QpStatus, WarmStart};
use crate::error::Result;
use crate::scalar::{clamp, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpSettings<T> {
    /// Relative primal feasibility tolerance.
    pub feas_tol: T,
    /// Relative tolerance on the step norm and on negative multipliers.
    pub opt_tol: T,
    /// Iteration cap is `iter_factor * (n + m)`, counting every finite
    /// constraint in `m`.
    pub iter_factor: usize,
    /// Proximal weight of the phase-1 objective.
    pub phase1_weight: T,
}

impl<T: Scalar> Default for QpSettings<T> {
    fn default() -> Self {
        Self {
            feas_tol: T::tolerance() * T::lit(100.0),
            opt_tol: T::tolerance() * T::lit(100.0),
            iter_factor: 50,
            phase1_weight: T::lit(1e-6),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ActiveSetSolver<T> {
    pub settings: QpSettings<T>,
}

impl<T: Scalar> Default for ActiveSetSolver<T> {
    fn default() -> Self {
        Self::new(QpSettings::default())
    }
}

/// Cold or warm solve with default settings.
pub fn solve<T: Scalar>(problem: &QpProblem<T>, warm: Option<&WarmStart<T>>) -> Result<QpSolution<T>> {
    ActiveSetSolver::default().solve(problem, warm)
}

const PHASE1_SLACK: usize = usize::MAX;

/// Problem data flattened to `rows u >= b`, box included.
struct Dense<T> {
    n: usize,
    h: Vec<T>,
    g: Vec<T>,
    chol: Vec<T>,
    rows: Vec<T>,
    b: Vec<T>,
    ids: Vec<usize>,
}

impl<T: Scalar> Dense<T> {
    fn len(&self) -> usize {
        self.b.len()
    }

    fn row(&self, k: usize) -> &[T] {
        &self.rows[k * self.n..(k + 1) * self.n]
    }

    fn push(&mut self, row: &[T], b: T, id: usize) {
        self.rows.extend_from_slice(row);
        self.b.push(b);
        self.ids.push(id);
    }

    fn slack(&self, k: usize, u: &[T]) -> T {
        dot(self.row(k), u) - self.b[k]
    }

    fn tol(&self, k: usize, feas_tol: T) -> T {
        feas_tol * (T::one() + self.b[k].abs())
    }
}

struct WorkingSet<T> {
    n: usize,
    members: Vec<usize>,
    q: Vec<Vec<T>>,
    r: Vec<Vec<T>>,
}

impl<T: Scalar> WorkingSet<T> {
    fn new(n: usize) -> Self {
        Self {
            n,
            members: Vec::new(),
            q: Vec::new(),
            r: Vec::new(),
        }
    }

    fn contains(&self, k: usize) -> bool {
        self.members.contains(&k)
    }

    /// Adds position `k` if its scaled row is independent of the set.
    fn try_add(&mut self, dense: &Dense<T>, k: usize) -> bool {
        if self.members.len() >= self.n {
            return false;
        }
        let mut w = forward_sub(dense.n, &dense.chol, dense.row(k));
        let size = norm2(&w);
        if !(size > T::zero()) {
            return false;
        }
        let mut r = vec![T::zero(); self.q.len() + 1];
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (j, q) in self.q.iter().enumerate() {
                let s = dot(q, &w);
                r[j] = r[j] + s;
                axpy(-s, q, &mut w);
            }
        }
        let rho = norm2(&w);
        if rho <= T::lit(1e-10).max(T::epsilon() * T::lit(1e3)) * size {
            return false;
        }
        for x in w.iter_mut() {
            *x = *x / rho;
        }
        *r.last_mut().unwrap() = rho;
        self.q.push(w);
        self.r.push(r);
        self.members.push(k);
        true
    }

    fn remove(&mut self, dense: &Dense<T>, idx: usize) {
        let mut keep = std::mem::take(&mut self.members);
        keep.remove(idx);
        self.q.clear();
        self.r.clear();
        for k in keep {
            self.try_add(dense, k);
        }
    }

    fn qt(&self, v: &[T]) -> Vec<T> {
        self.q.iter().map(|q| dot(q, v)).collect()
    }

    /// Solves `R lam = qtc`.
    fn multipliers(&self, qtc: &[T]) -> Vec<T> {
        let w = self.q.len();
        let mut lam = qtc.to_vec();
        for i in (0..w).rev() {
            let mut s = lam[i];
            for j in i + 1..w {
                s = s - self.r[j][i] * lam[j];
            }
            lam[i] = s / self.r[i][i];
        }
        lam
    }
}

struct Phase2<T> {
    status: QpStatus,
    iterations: usize,
    members: Vec<usize>,
    lam: Vec<T>,
}

impl<T: Scalar> ActiveSetSolver<T> {
    pub fn new(settings: QpSettings<T>) -> Self {
        Self { settings }
    }

    pub fn solve(&self, problem: &QpProblem<T>, warm: Option<&WarmStart<T>>) -> Result<QpSolution<T>> {
        problem.validate()?;
        let n = problem.n();
        let m = problem.m();
        let tol = self.settings.feas_tol;

        let mut dense = Dense {
            n,
            h: problem.hessian().to_vec(),
            g: problem.gradient().to_vec(),
            chol: cholesky(n, problem.hessian())?,
            rows: Vec::new(),
            b: Vec::new(),
            ids: Vec::new(),
        };
        for k in 0..m {
            dense.push(problem.ineq_row(k), problem.ineq_lb()[k], k);
        }
        let mut unit = vec![T::zero(); n];
        for j in 0..n {
            unit[j] = T::one();
            if problem.lower()[j].is_finite() {
                dense.push(&unit, problem.lower()[j], m + j);
            }
            unit[j] = -T::one();
            if problem.upper()[j].is_finite() {
                dense.push(&unit, -problem.upper()[j], m + n + j);
            }
            unit[j] = T::zero();
        }

        let infeasible = |u: Vec<T>, violation: T, iterations: usize| QpSolution {
            u_star: u,
            duals: vec![T::zero(); m + 2 * n],
            status: QpStatus::Infeasible,
            iterations,
            active_set: Vec::new(),
            phase1_violation: violation,
        };

        let (lo, hi) = (problem.lower(), problem.upper());
        for j in 0..n {
            if lo[j] > hi[j] + tol * (T::one() + hi[j].abs()) {
                return Ok(infeasible(vec![T::zero(); n], lo[j] - hi[j], 0));
            }
        }
        for k in 0..m {
            if norm_inf(dense.row(k)) == T::zero() && dense.b[k] > dense.tol(k, tol) {
                return Ok(infeasible(vec![T::zero(); n], dense.b[k], 0));
            }
        }

        let start = match warm {
            Some(w) if w.point.len() == n => w.point.clone(),
            _ => {
                let y = forward_sub(n, &dense.chol, &dense.g);
                backward_sub_transposed(n, &dense.chol, &y).into_iter().map(|x| -x).collect()
            }
        };
        let mut u: Vec<T> = (0..n).map(|j| clamp(start[j], lo[j], hi[j].max(lo[j]))).collect();

        let budget = self.settings.iter_factor * (n + dense.len()).max(1);
        let mut used = 0;

        let needs_phase1 = (0..m).any(|k| dense.slack(k, &u) < -dense.tol(k, tol));
        if needs_phase1 {
            let (point, violation, its, status) = self.phase1(&dense, m, &u, budget);
            used += its;
            match status {
                QpStatus::Optimal if violation <= tol => u = point,
                QpStatus::Optimal => return Ok(infeasible(point, violation, used)),
                _ => {
                    return Ok(QpSolution {
                        status: QpStatus::MaxIter,
                        ..infeasible(point, violation, used)
                    })
                }
            }
        }

        let mut initial = Vec::new();
        if let Some(w) = warm {
            for &id in &w.active {
                if let Some(k) = dense.ids.iter().position(|&x| x == id) {
                    if !initial.contains(&k) && dense.slack(k, &u).abs() <= dense.tol(k, tol) {
                        initial.push(k);
                    }
                }
            }
        }

        let out = self.phase2(&dense, &mut u, &initial, budget.saturating_sub(used));
        let mut duals = vec![T::zero(); m + 2 * n];
        let mut active_set = Vec::with_capacity(out.members.len());
        for (&k, &l) in out.members.iter().zip(&out.lam) {
            duals[dense.ids[k]] = l;
            active_set.push(dense.ids[k]);
        }
        active_set.sort_unstable();
        Ok(QpSolution {
            u_star: u,
            duals,
            status: out.status,
            iterations: used + out.iterations,
            active_set,
            phase1_violation: T::zero(),
        })
    }

    /// Minimizes the largest normalized row violation `t` (plus a small
    /// proximal term) subject to the box and `a_k u + |a_k| t >= b_k`.
    fn phase1(&self, dense: &Dense<T>, m: usize, start: &[T], budget: usize) -> (Vec<T>, T, usize, QpStatus) {
        let n = dense.n;
        let na = n + 1;
        let rho = self.settings.phase1_weight;
        let mut h = vec![T::zero(); na * na];
        let mut chol = vec![T::zero(); na * na];
        for i in 0..na {
            h[i * na + i] = rho;
            chol[i * na + i] = rho.sqrt();
        }
        let mut g: Vec<T> = start.iter().map(|&x| -rho * x).collect();
        g.push(T::one());
        let mut aug = Dense {
            n: na,
            h,
            g,
            chol,
            rows: Vec::new(),
            b: Vec::new(),
            ids: Vec::new(),
        };
        let mut t0 = T::zero();
        let mut row = vec![T::zero(); na];
        for k in 0..dense.len() {
            let a = dense.row(k);
            row[..n].copy_from_slice(a);
            row[n] = if k < m { norm2(a) } else { T::zero() };
            if k < m && row[n] > T::zero() {
                t0 = t0.max(-dense.slack(k, start) / row[n]);
            }
            aug.push(&row, dense.b[k], dense.ids[k]);
        }
        row.iter_mut().for_each(|x| *x = T::zero());
        row[n] = T::one();
        aug.push(&row, T::zero(), PHASE1_SLACK);

        let mut x = start.to_vec();
        x.push(t0);
        let out = self.phase2(&aug, &mut x, &[], budget);
        let t = x.pop().unwrap().max(T::zero());
        (x, t, out.iterations, out.status)
    }

    fn phase2(&self, dense: &Dense<T>, u: &mut [T], initial: &[usize], budget: usize) -> Phase2<T> {
        let n = dense.n;
        let opt_tol = self.settings.opt_tol;
        let mut ws = WorkingSet::new(n);
        for &k in initial {
            ws.try_add(dense, k);
        }
        let row_norms: Vec<T> = (0..dense.len()).map(|k| norm2(dense.row(k))).collect();
        // index of the single nonzero of coordinate rows (bounds, phase-1 slack)
        let coord: Vec<Option<usize>> = (0..dense.len())
            .map(|k| {
                let mut nz = dense.row(k).iter().enumerate().filter(|(_, &x)| x != T::zero());
                match (nz.next(), nz.next()) {
                    (Some((j, _)), None) => Some(j),
                    _ => None,
                }
            })
            .collect();
        let mut iterations = 0;
        loop {
            if iterations >= budget {
                return Phase2 {
                    status: QpStatus::MaxIter,
                    iterations,
                    lam: vec![T::zero(); ws.members.len()],
                    members: ws.members,
                };
            }
            iterations += 1;

            let mut c = mat_vec(n, &dense.h, u);
            axpy(T::one(), &dense.g, &mut c);
            let ct = forward_sub(n, &dense.chol, &c);
            let qtc = ws.qt(&ct);
            let mut pt: Vec<T> = ct.iter().map(|&x| -x).collect();
            for (q, &s) in ws.q.iter().zip(&qtc) {
                axpy(s, q, &mut pt);
            }

            if norm_inf(&pt) <= opt_tol * (T::one() + norm_inf(&ct)) {
                let lam = ws.multipliers(&qtc);
                let scale = T::one() + norm_inf(&lam);
                let mut drop: Option<usize> = None;
                for (idx, &l) in lam.iter().enumerate() {
                    if l < -opt_tol * scale {
                        let better = match drop {
                            None => true,
                            Some(d) => {
                                l < lam[d] || (l == lam[d] && dense.ids[ws.members[idx]] < dense.ids[ws.members[d]])
                            }
                        };
                        if better {
                            drop = Some(idx);
                        }
                    }
                }
                match drop {
                    None => {
                        return Phase2 {
                            status: QpStatus::Optimal,
                            iterations,
                            members: ws.members,
                            lam,
                        }
                    }
                    Some(idx) => {
                        ws.remove(dense, idx);
                        continue;
                    }
                }
            }

            let mut p = backward_sub_transposed(n, &dense.chol, &pt);
            // working coordinate rows pin their variable exactly; without this
            // long steps drift off them by roundoff
            for &k in &ws.members {
                if let Some(j) = coord[k] {
                    p[j] = T::zero();
                }
            }
            let p_norm = norm2(&p);
            let mut alpha = T::one();
            let mut block = None;
            for k in 0..dense.len() {
                if ws.contains(k) {
                    continue;
                }
                let ap = dot(dense.row(k), &p);
                if ap < -T::epsilon() * T::lit(16.0) * row_norms[k] * p_norm {
                    let step = dense.slack(k, u).max(T::zero()) / -ap;
                    if step < alpha {
                        alpha = step;
                        block = Some(k);
                    }
                }
            }
            axpy(alpha, &p, u);
            if let Some(k) = block {
                if let Some(j) = coord[k] {
                    u[j] = dense.b[k] / dense.row(k)[j];
                }
                // A blocking row has a'p < 0 while every working row has
                // a'p = 0, so it is independent of the working set.
                ws.try_add(dense, k);
            }
        }
    }
}
