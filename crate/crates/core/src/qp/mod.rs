//! Dense strictly convex quadratic programs.
//!
//! ```text
//!     minimize     1/2 u' H u + g' u
//!     subject to   A u >= b
//!                  lower <= u <= upper
//! ```
//!
//! solved with a primal active-set method. A feasible start is found with an
//! elastic phase 1 that reuses the same iteration. Multipliers are reported
//! in a fixed layout: the `m` general rows first, then the `n` lower bounds,
//! then the `n` upper bounds.

mod active_set;
mod io;
pub(crate) mod linalg;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use active_set::{solve, ActiveSetSolver, QpSettings};

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem<T> {
    n: usize,
    hessian: Vec<T>,
    gradient: Vec<T>,
    ineq: Vec<T>,
    ineq_lb: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> QpProblem<T> {
    /// Unconstrained problem with row-major `hessian` (n x n).
    pub fn new(hessian: Vec<T>, gradient: Vec<T>) -> Result<Self> {
        let n = gradient.len();
        if hessian.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "hessian",
                expected: n * n,
                got: hessian.len(),
            });
        }
        Ok(Self {
            n,
            hessian,
            gradient,
            ineq: Vec::new(),
            ineq_lb: Vec::new(),
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
        })
    }

    /// Diagonal hessian shorthand.
    pub fn diagonal(diag: &[T], gradient: Vec<T>) -> Result<Self> {
        let n = diag.len();
        let mut h = vec![T::zero(); n * n];
        for (i, &d) in diag.iter().enumerate() {
            h[i * n + i] = d;
        }
        Self::new(h, gradient)
    }

    /// Appends `row . u >= lb`; returns the row index.
    pub fn add_inequality(&mut self, row: &[T], lb: T) -> Result<usize> {
        if row.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "inequality row",
                expected: self.n,
                got: row.len(),
            });
        }
        self.ineq.extend_from_slice(row);
        self.ineq_lb.push(lb);
        Ok(self.ineq_lb.len() - 1)
    }

    pub fn with_inequality(mut self, row: &[T], lb: T) -> Result<Self> {
        self.add_inequality(row, lb)?;
        Ok(self)
    }

    pub fn set_bounds(&mut self, lower: Vec<T>, upper: Vec<T>) -> Result<()> {
        for (what, v) in [("lower bounds", &lower), ("upper bounds", &upper)] {
            if v.len() != self.n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: self.n,
                    got: v.len(),
                });
            }
        }
        self.lower = lower;
        self.upper = upper;
        Ok(())
    }

    pub fn with_bounds(mut self, lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        self.set_bounds(lower, upper)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of general inequality rows.
    pub fn m(&self) -> usize {
        self.ineq_lb.len()
    }

    pub fn hessian(&self) -> &[T] {
        &self.hessian
    }

    pub fn gradient(&self) -> &[T] {
        &self.gradient
    }

    pub fn ineq_row(&self, k: usize) -> &[T] {
        &self.ineq[k * self.n..(k + 1) * self.n]
    }

    pub fn ineq_lb(&self) -> &[T] {
        &self.ineq_lb
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn objective(&self, u: &[T]) -> T {
        let hu = linalg::mat_vec(self.n, &self.hessian, u);
        T::lit(0.5) * linalg::dot(u, &hu) + linalg::dot(&self.gradient, u)
    }

    /// Largest violation of any constraint at `u` (0 when feasible).
    pub fn max_violation(&self, u: &[T]) -> T {
        let mut worst = T::zero();
        for (k, &b) in self.ineq_lb.iter().enumerate() {
            worst = worst.max(b - linalg::dot(self.ineq_row(k), u));
        }
        for j in 0..self.n {
            worst = worst.max(self.lower[j] - u[j]).max(u[j] - self.upper[j]);
        }
        worst
    }

    /// Structural checks: finite data, symmetric hessian, positive
    /// definiteness. Infeasibility is not a structural error.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !finite(&self.hessian) || !finite(&self.gradient) || !finite(&self.ineq) || !finite(&self.ineq_lb) {
            return Err(Error::InvalidParameter {
                name: "qp",
                reason: "non-finite problem data".into(),
            });
        }
        if self.lower.iter().chain(&self.upper).any(|x| x.is_nan()) {
            return Err(Error::InvalidParameter {
                name: "qp",
                reason: "NaN bound".into(),
            });
        }
        let sym_tol = T::lit(1e-10).max(T::tolerance());
        let scale = T::one().max(linalg::norm_inf(&self.hessian));
        for i in 0..n {
            for j in i + 1..n {
                if (self.hessian[i * n + j] - self.hessian[j * n + i]).abs() > sym_tol * scale {
                    return Err(Error::InvalidParameter {
                        name: "hessian",
                        reason: format!("not symmetric at ({i}, {j})"),
                    });
                }
            }
        }
        linalg::cholesky(n, &self.hessian).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution<T> {
    pub u_star: Vec<T>,
    /// `m + 2n` multipliers: rows, lower bounds, upper bounds.
    pub duals: Vec<T>,
    pub status: QpStatus,
    pub iterations: usize,
    /// Constraint indices (same layout as `duals`) in the final working set.
    pub active_set: Vec<usize>,
    /// Smallest achievable normalized row violation found by phase 1; zero
    /// unless the problem is infeasible.
    pub phase1_violation: T,
}

/// Starting point and working-set guess for a solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WarmStart<T> {
    pub point: Vec<T>,
    pub active: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResidual<T> {
    pub stationarity: T,
    pub feasibility: T,
    pub complementarity: T,
    /// Magnitude of the most negative multiplier.
    pub dual_infeasibility: T,
}

impl<T: Scalar> KktResidual<T> {
    pub fn max(&self) -> T {
        self.stationarity
            .max(self.feasibility)
            .max(self.complementarity)
            .max(self.dual_infeasibility)
    }
}

/// Infinity-norm KKT residuals of `solution` for `problem`.
pub fn kkt_residual<T: Scalar>(problem: &QpProblem<T>, solution: &QpSolution<T>) -> KktResidual<T> {
    let n = problem.n;
    let m = problem.m();
    let u = &solution.u_star;
    let lam = &solution.duals;
    let mut grad = linalg::mat_vec(n, &problem.hessian, u);
    linalg::axpy(T::one(), &problem.gradient, &mut grad);

    let mut feas = T::zero();
    let mut comp = T::zero();
    let mut dual = T::zero();
    for k in 0..m {
        let row = problem.ineq_row(k);
        linalg::axpy(-lam[k], row, &mut grad);
        let slack = linalg::dot(row, u) - problem.ineq_lb[k];
        feas = feas.max(-slack);
        comp = comp.max((lam[k] * slack).abs());
        dual = dual.max(-lam[k]);
    }
    for j in 0..n {
        let (lo, hi) = (lam[m + j], lam[m + n + j]);
        grad[j] = grad[j] - lo + hi;
        dual = dual.max(-lo).max(-hi);
        if problem.lower[j].is_finite() {
            let slack = u[j] - problem.lower[j];
            feas = feas.max(-slack);
            comp = comp.max((lo * slack).abs());
        }
        if problem.upper[j].is_finite() {
            let slack = problem.upper[j] - u[j];
            feas = feas.max(-slack);
            comp = comp.max((hi * slack).abs());
        }
    }
    KktResidual {
        stationarity: linalg::norm_inf(&grad),
        feasibility: feas.max(T::zero()),
        complementarity: comp,
        dual_infeasibility: dual.max(T::zero()),
    }
}
