use log::{debug, warn};

use crate::barriers::{first_order_row, BarrierParams, ConstraintRow};
use crate::error::{Error, Result};
use crate::geometry::{pair_geometry, Body, MergeLayout};
use crate::qp::{ActiveSetSolver, QpProblem, QpStatus, WarmStart};
use crate::scalar::{clamp, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CcbfConfig<T> {
    pub lambda: T,
    pub beta: T,
    /// Mass scaling of the rate penalty, 1/kg.
    pub alpha: T,
    pub a_min: T,
    pub a_max: T,
    pub ts: T,
    pub v_floor: T,
}

impl<T: Scalar> CcbfConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_min < T::zero() && self.a_max > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "accel_limits",
                reason: "need a_min < 0 < a_max".into(),
            });
        }
        if !(self.alpha > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "must be positive".into(),
            });
        }
        if !(self.ts > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "ts",
                reason: "must be positive".into(),
            });
        }
        self.barrier().validate()
    }

    fn barrier(&self) -> BarrierParams<T> {
        BarrierParams {
            beta: self.beta,
            lambda: self.lambda,
            lambda1: self.lambda,
            lambda2: self.lambda,
        }
    }
}

/// One controlled vehicle as seen by the centralized QP.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CcbfAgent<T> {
    pub id: usize,
    pub body: Body<T>,
    pub desired_speed: T,
    pub mass: T,
    /// Speed commanded at the previous step (injection speed for arrivals).
    pub u_prev: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CcbfCommand<T> {
    /// Speed commands, in the order of the agents passed in.
    pub speeds: Vec<T>,
    pub status: QpStatus,
    /// The pair rows could not all hold inside the rate limits; speeds come
    /// from the least-violation problem.
    pub relaxed: bool,
    /// Neither problem solved; every vehicle brakes at the rate limit.
    pub fallback: bool,
    pub iterations: usize,
    /// Pair rows in the final working set.
    pub active_constraints: usize,
    /// Smallest pair-row value at the returned speeds.
    pub min_row_margin: Option<T>,
}

#[derive(Clone, Debug)]
struct WarmMemory<T> {
    ids: Vec<usize>,
    speeds: Vec<T>,
    pairs: Vec<(usize, usize)>,
    lower: Vec<usize>,
    upper: Vec<usize>,
}

/// Centralized controller. Keeps the previous solution to warm-start the
/// next step; one instance per simulation run.
#[derive(Clone, Debug)]
pub struct CcbfController<T> {
    cfg: CcbfConfig<T>,
    layout: MergeLayout<T>,
    solver: ActiveSetSolver<T>,
    warm_start: bool,
    memory: Option<WarmMemory<T>>,
}

/// Weight on the squared common row violation in the relaxed problem.
pub const RELAX_WEIGHT: f64 = 1e6;

/// Row position of pair `(i, j)`, `i < j`, in upper-triangular order.
fn pair_index(i: usize, j: usize, n: usize) -> usize {
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl<T: Scalar> CcbfController<T> {
    pub fn new(cfg: CcbfConfig<T>, layout: MergeLayout<T>) -> Result<Self> {
        cfg.validate()?;
        layout.validate()?;
        Ok(Self {
            cfg,
            layout,
            solver: ActiveSetSolver::default(),
            warm_start: true,
            memory: None,
        })
    }

    pub fn with_warm_start(mut self, on: bool) -> Self {
        self.warm_start = on;
        self
    }

    pub fn config(&self) -> &CcbfConfig<T> {
        &self.cfg
    }

    /// Rate-limit box for one vehicle, floored at `v_floor`.
    pub fn speed_bounds(&self, agent: &CcbfAgent<T>) -> (T, T) {
        let hi = agent.u_prev + self.cfg.a_max * self.cfg.ts;
        let lo = self.cfg.v_floor.max(agent.u_prev + self.cfg.a_min * self.cfg.ts);
        (lo.min(hi), hi)
    }

    /// Unscaled first-order row for every unordered pair, `pair` holding
    /// agent positions.
    pub fn pair_rows(&self, agents: &[CcbfAgent<T>]) -> Vec<ConstraintRow<T>> {
        let params = self.cfg.barrier();
        let n = agents.len();
        let mut rows = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let g = pair_geometry(&agents[i].body, &agents[j].body, &self.layout);
                rows.push(ConstraintRow {
                    pair: (i, j),
                    ..first_order_row(&g, &params)
                });
            }
        }
        rows
    }

    /// Joint QP over the speed commands:
    /// `sum (u_i - v0_i)^2 + alpha m_i (u_i - u_prev_i)^2` subject to every
    /// pair row (normalized) and the rate-limit box.
    pub fn build_problem(&self, agents: &[CcbfAgent<T>]) -> Result<(QpProblem<T>, Vec<ConstraintRow<T>>)> {
        let n = agents.len();
        let two = T::lit(2.0);
        let mut diag = Vec::with_capacity(n);
        let mut grad = Vec::with_capacity(n);
        for a in agents {
            let w = self.cfg.alpha * a.mass;
            diag.push(two * (T::one() + w));
            grad.push(-two * (a.desired_speed + w * a.u_prev));
        }
        let mut qp = QpProblem::diagonal(&diag, grad)?;
        let rows = self.pair_rows(agents);
        let mut dense = vec![T::zero(); n];
        for r in &rows {
            let (i, j) = r.pair;
            let scale = r.coeff_i.hypot(r.coeff_j);
            let k = if scale > T::zero() { T::one() / scale } else { T::one() };
            dense[i] = r.coeff_i * k;
            dense[j] = r.coeff_j * k;
            qp.add_inequality(&dense, -r.constant * k)?;
            dense[i] = T::zero();
            dense[j] = T::zero();
        }
        let (lo, hi): (Vec<T>, Vec<T>) = agents.iter().map(|a| self.speed_bounds(a)).unzip();
        qp.set_bounds(lo, hi)?;
        Ok((qp, rows))
    }

    /// `problem` with one extra variable `t >= 0` added to every pair row and
    /// `RELAX_WEIGHT t^2` to the objective. Rows are normalized, so `t` is
    /// the largest row violation in m/s.
    pub fn relaxed_problem(&self, problem: &QpProblem<T>) -> Result<QpProblem<T>> {
        let n = problem.n();
        let mut h = vec![T::zero(); (n + 1) * (n + 1)];
        for i in 0..n {
            h[i * (n + 1)..i * (n + 1) + n].copy_from_slice(&problem.hessian()[i * n..(i + 1) * n]);
        }
        h[(n + 1) * (n + 1) - 1] = T::lit(2.0 * RELAX_WEIGHT);
        let mut g = problem.gradient().to_vec();
        g.push(T::zero());
        let mut qp = QpProblem::new(h, g)?;
        let mut row = vec![T::zero(); n + 1];
        row[n] = T::one();
        for k in 0..problem.m() {
            row[..n].copy_from_slice(problem.ineq_row(k));
            qp.add_inequality(&row, problem.ineq_lb()[k])?;
        }
        let mut lo = problem.lower().to_vec();
        let mut hi = problem.upper().to_vec();
        lo.push(T::zero());
        hi.push(T::infinity());
        qp.set_bounds(lo, hi)?;
        Ok(qp)
    }

    fn warm_start_for(&self, agents: &[CcbfAgent<T>]) -> Option<WarmStart<T>> {
        let mem = self.memory.as_ref().filter(|_| self.warm_start)?;
        let n = agents.len();
        let m = n * n.saturating_sub(1) / 2;
        let pos = |id: usize| agents.iter().position(|a| a.id == id);
        let point = agents
            .iter()
            .map(|a| match mem.ids.iter().position(|&x| x == a.id) {
                Some(k) => mem.speeds[k],
                None => a.u_prev,
            })
            .collect();
        let mut active = Vec::new();
        for &(a, b) in &mem.pairs {
            if let (Some(i), Some(j)) = (pos(a), pos(b)) {
                let (i, j) = if i < j { (i, j) } else { (j, i) };
                active.push(pair_index(i, j, n));
            }
        }
        active.extend(mem.lower.iter().filter_map(|&id| pos(id)).map(|i| m + i));
        active.extend(mem.upper.iter().filter_map(|&id| pos(id)).map(|i| m + n + i));
        Some(WarmStart { point, active })
    }

    pub fn step(&mut self, agents: &[CcbfAgent<T>]) -> Result<CcbfCommand<T>> {
        let n = agents.len();
        if n == 0 {
            return Ok(CcbfCommand {
                speeds: Vec::new(),
                status: QpStatus::Optimal,
                relaxed: false,
                fallback: false,
                iterations: 0,
                active_constraints: 0,
                min_row_margin: None,
            });
        }
        let (qp, rows) = self.build_problem(agents)?;
        let warm = self.warm_start_for(agents);
        let sol = self.solver.solve(&qp, warm.as_ref())?;
        let m = rows.len();
        let bounds: Vec<(T, T)> = agents.iter().map(|a| self.speed_bounds(a)).collect();

        let mut relaxed = false;
        let mut fallback = false;
        let mut iterations = sol.iterations;
        let mut active_rows = sol.active_set.iter().filter(|&&k| k < m).count();
        let speeds: Vec<T> = if sol.status == QpStatus::Optimal {
            let mut mem = WarmMemory {
                ids: agents.iter().map(|a| a.id).collect(),
                speeds: sol.u_star.clone(),
                pairs: Vec::new(),
                lower: Vec::new(),
                upper: Vec::new(),
            };
            for &k in &sol.active_set {
                if k < m {
                    let (i, j) = rows[k].pair;
                    mem.pairs.push((agents[i].id, agents[j].id));
                } else if k < m + n {
                    mem.lower.push(agents[k - m].id);
                } else {
                    mem.upper.push(agents[k - m - n].id);
                }
            }
            self.memory = Some(mem);
            sol.u_star.iter().zip(&bounds).map(|(&u, &(lo, hi))| clamp(u, lo, hi)).collect()
        } else {
            self.memory = None;
            let rel = self.solver.solve(&self.relaxed_problem(&qp)?, None)?;
            iterations += rel.iterations;
            if rel.status == QpStatus::Optimal {
                relaxed = true;
                debug!("centralized QP {} with {} vehicles; row violation {}", sol.status.as_str(), n, rel.u_star[n]);
                active_rows = rel.active_set.iter().filter(|&&k| k < m).count();
                rel.u_star[..n].iter().zip(&bounds).map(|(&u, &(lo, hi))| clamp(u, lo, hi)).collect()
            } else {
                fallback = true;
                warn!("centralized QP {} with {} vehicles; braking all", rel.status.as_str(), n);
                bounds.iter().map(|b| b.0).collect()
            }
        };
        let min_row_margin = rows
            .iter()
            .map(|r| r.eval(speeds[r.pair.0], speeds[r.pair.1]))
            .reduce(T::min);
        Ok(CcbfCommand {
            active_constraints: active_rows,
            speeds,
            status: sol.status,
            relaxed,
            fallback,
            iterations,
            min_row_margin,
        })
    }
}
