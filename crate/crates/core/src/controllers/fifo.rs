use crate::barriers::{second_order_constraint, BarrierParams};
use crate::error::{Error, Result};
use crate::geometry::{pair_geometry, Body, MergeLayout};
use crate::qp::{ActiveSetSolver, QpProblem, QpStatus};
use crate::scalar::{clamp, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FifoConfig<T> {
    pub beta: T,
    pub lambda1: T,
    pub lambda2: T,
    /// Speed-tracking gain of the baseline acceleration, 1/s.
    pub kp: T,
    pub slack_weight: T,
    pub a_min: T,
    pub a_max: T,
}

impl<T: Scalar> FifoConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "kp",
                reason: "must be positive".into(),
            });
        }
        if !(self.slack_weight >= T::lit(1e4)) {
            return Err(Error::InvalidParameter {
                name: "slack_weight",
                reason: "must be at least 1e4".into(),
            });
        }
        if !(self.a_min < T::zero() && self.a_max > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "accel_limits",
                reason: "need a_min < 0 < a_max".into(),
            });
        }
        self.barrier().validate()
    }

    pub fn barrier(&self) -> BarrierParams<T> {
        BarrierParams {
            beta: self.beta,
            lambda: self.lambda1,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FifoAgent<T> {
    pub id: usize,
    pub body: Body<T>,
    pub desired_speed: T,
    /// Time the vehicle entered the control zone.
    pub entry_time: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FifoCommand<T> {
    pub id: usize,
    pub accel: T,
    pub slack: T,
    pub baseline: T,
    pub status: QpStatus,
    pub iterations: usize,
    /// Number of higher-priority vehicles constrained against.
    pub constraints: usize,
    /// Smallest `coeff * a + constant + slack` over the constraints.
    pub min_slacked_margin: Option<T>,
}

/// Vehicle ids in ascending entry time; ties go to the lower id.
pub fn fifo_priority<T: Scalar>(entries: &[(usize, T)]) -> Vec<usize> {
    let mut v = entries.to_vec();
    v.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(id, _)| id).collect()
}

/// Acceleration for `ego` given the vehicles ranked ahead of it, each with
/// the acceleration it was commanded this step.
///
/// Solves `min (a - a0)^2 + w s^2` over `(a, s)` with one slacked cascade
/// barrier per higher-priority vehicle, `s >= 0` and `a` in the
/// acceleration limits.
pub fn fifo_step<T: Scalar>(
    ego: &FifoAgent<T>,
    higher_priority: &[(FifoAgent<T>, T)],
    layout: &MergeLayout<T>,
    cfg: &FifoConfig<T>,
    solver: &ActiveSetSolver<T>,
) -> Result<FifoCommand<T>> {
    let baseline = clamp(cfg.kp * (ego.desired_speed - ego.body.v), cfg.a_min, cfg.a_max);
    if higher_priority.is_empty() {
        return Ok(FifoCommand {
            id: ego.id,
            accel: baseline,
            slack: T::zero(),
            baseline,
            status: QpStatus::Optimal,
            iterations: 0,
            constraints: 0,
            min_slacked_margin: None,
        });
    }
    let params = cfg.barrier();
    let two = T::lit(2.0);
    let cons: Vec<(T, T)> = higher_priority
        .iter()
        .map(|(other, a_j)| {
            let g = pair_geometry(&ego.body, &other.body, layout);
            second_order_constraint(&g, *a_j, &params)
        })
        .collect();
    let mut qp = QpProblem::diagonal(&[two, two * cfg.slack_weight], vec![-two * baseline, T::zero()])?;
    for &(c, k) in &cons {
        qp.add_inequality(&[c, T::one()], -k)?;
    }
    qp.set_bounds(vec![cfg.a_min, T::zero()], vec![cfg.a_max, T::infinity()])?;
    let sol = solver.solve(&qp, None)?;

    let (accel, slack) = if sol.status == QpStatus::Optimal {
        (clamp(sol.u_star[0], cfg.a_min, cfg.a_max), sol.u_star[1].max(T::zero()))
    } else {
        // the slack keeps the problem feasible; only the iteration cap lands here
        log::warn!("FIFO QP for vehicle {} returned {}; braking", ego.id, sol.status.as_str());
        let a = cfg.a_min;
        let s = cons.iter().fold(T::zero(), |s, &(c, k)| s.max(-(c * a + k)));
        (a, s)
    };
    let min_slacked_margin = cons.iter().map(|&(c, k)| c * accel + k + slack).reduce(T::min);
    Ok(FifoCommand {
        id: ego.id,
        accel,
        slack,
        baseline,
        status: sol.status,
        iterations: sol.iterations,
        constraints: cons.len(),
        min_slacked_margin,
    })
}

/// Benchmark controller; one instance per simulation run.
#[derive(Clone, Debug)]
pub struct FifoController<T> {
    cfg: FifoConfig<T>,
    layout: MergeLayout<T>,
    solver: ActiveSetSolver<T>,
}

impl<T: Scalar> FifoController<T> {
    pub fn new(cfg: FifoConfig<T>, layout: MergeLayout<T>) -> Result<Self> {
        cfg.validate()?;
        layout.validate()?;
        Ok(Self {
            cfg,
            layout,
            solver: ActiveSetSolver::default(),
        })
    }

    pub fn config(&self) -> &FifoConfig<T> {
        &self.cfg
    }

    /// Commands for every agent, returned in the order given. Vehicles are
    /// solved in priority order so each sees the accelerations already
    /// assigned ahead of it.
    pub fn step(&self, agents: &[FifoAgent<T>]) -> Result<Vec<FifoCommand<T>>> {
        let entries: Vec<(usize, T)> = agents.iter().map(|a| (a.id, a.entry_time)).collect();
        let order = fifo_priority(&entries);
        let mut ranked: Vec<(FifoAgent<T>, T)> = Vec::with_capacity(agents.len());
        let mut by_id = Vec::with_capacity(agents.len());
        for id in order {
            let a = *agents.iter().find(|a| a.id == id).expect("id from agents");
            let cmd = fifo_step(&a, &ranked, &self.layout, &self.cfg, &self.solver)?;
            ranked.push((a, cmd.accel));
            by_id.push(cmd);
        }
        Ok(agents
            .iter()
            .map(|a| *by_id.iter().find(|c| c.id == a.id).expect("commanded"))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Road, Vec2};
    use approx::assert_abs_diff_eq;

    fn cfg() -> FifoConfig<f64> {
        FifoConfig {
            beta: 0.1,
            lambda1: 0.3,
            lambda2: 2.0,
            kp: 0.5,
            slack_weight: 1e6,
            a_min: -6.0,
            a_max: 5.0,
        }
    }

    fn layout() -> MergeLayout<f64> {
        MergeLayout::new(30f64.to_radians(), 200.0, 350.0).unwrap()
    }

    fn agent(id: usize, s: f64, v: f64, v0: f64, entry: f64) -> FifoAgent<f64> {
        FifoAgent {
            id,
            body: Body {
                road: Road::Highway,
                s,
                v,
                radius: 2.0,
            },
            desired_speed: v0,
            entry_time: entry,
        }
    }

    #[test]
    fn priority_order() {
        assert_eq!(fifo_priority(&[(0, 1.0), (1, 0.5), (2, 2.0)]), vec![1, 0, 2]);
        assert_eq!(fifo_priority(&[(1, 1.0), (0, 1.0)]), vec![0, 1]);
        assert!(fifo_priority::<f64>(&[]).is_empty());
    }

    #[test]
    fn unconstrained_at_set_point() {
        let c = fifo_step(&agent(0, -100.0, 22.0, 22.0, 0.0), &[], &layout(), &cfg(), &Default::default()).unwrap();
        assert_eq!(c.accel, 0.0);
        assert_eq!(c.slack, 0.0);
    }

    #[test]
    fn reference_pair_binds_at_boundary() {
        // ego 20 m behind, closing at 5 m/s: a <= -4.5404
        let ego = agent(1, -40.0, 25.0, 25.0, 1.0);
        let lead = agent(0, -20.0, 20.0, 20.0, 0.0);
        let g = pair_geometry(&ego.body, &lead.body, &layout());
        assert_eq!(g.xi, Vec2::new(-20.0, 0.0));
        let c = fifo_step(&ego, &[(lead, 0.0)], &layout(), &cfg(), &Default::default()).unwrap();
        assert_eq!(c.baseline, 0.0);
        assert_abs_diff_eq!(c.accel, -4.5404, epsilon = 1e-6);
        assert_abs_diff_eq!(c.slack, 0.0, epsilon = 1e-6);
        assert!(c.min_slacked_margin.unwrap() >= -1e-9);
    }

    #[test]
    fn slack_engages_beyond_braking_limit() {
        // closing at 15 m/s from 20 m requires more than 6 m/s^2
        let ego = agent(1, -40.0, 30.0, 30.0, 1.0);
        let lead = agent(0, -20.0, 15.0, 15.0, 0.0);
        let g = pair_geometry(&ego.body, &lead.body, &layout());
        let (coeff, k) = second_order_constraint(&g, 0.0, &cfg().barrier());
        assert!(-k / coeff < -8.0);
        let c = fifo_step(&ego, &[(lead, 0.0)], &layout(), &cfg(), &Default::default()).unwrap();
        assert_eq!(c.accel, -6.0);
        assert!(c.slack > 0.0);
        assert!(c.min_slacked_margin.unwrap() >= -1e-9);
    }

    #[test]
    fn lower_priority_vehicles_ignored() {
        let ctl = FifoController::new(cfg(), layout()).unwrap();
        // vehicle 1 entered later, so vehicle 0 ignores it even though it
        // is right behind
        let a = [agent(0, -20.0, 20.0, 20.0, 0.0), agent(1, -30.0, 25.0, 25.0, 1.0)];
        let cmds = ctl.step(&a).unwrap();
        assert_eq!(cmds[0].constraints, 0);
        assert_eq!(cmds[0].accel, 0.0);
        assert_eq!(cmds[1].constraints, 1);
        assert!(cmds[1].accel < 0.0);
    }
}
