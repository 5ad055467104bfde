//! Fixed-step simulator.
//!
//! Each step at `t = k ts`: vehicles past the exit get one last sample and
//! leave, due vehicles enter at `s = -cz_before_m`, the controller runs on
//! everything in the zone, and the state is integrated. A vehicle whose
//! entry would start inside the inflated disk of a present vehicle, or
//! closing on it faster than the first cascade stage allows, waits for a
//! later step.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::barriers::{barrier_value, pair_barrier, BarrierParams};
use crate::config::{AccelLimits, MonteCarloConfig};
use crate::controllers::{CcbfAgent, CcbfConfig, CcbfController, FifoAgent, FifoConfig, FifoController};
use crate::error::{Error, Result};
use crate::geometry::{pair_geometry, Body, MergeLayout, Road};
use crate::qp::QpStatus;
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Ccbf,
    Fifo,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 2] = [ControllerKind::Ccbf, ControllerKind::Fifo];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Ccbf => "ccbf",
            ControllerKind::Fifo => "fifo",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ccbf" => Ok(ControllerKind::Ccbf),
            "fifo" => Ok(ControllerKind::Fifo),
            _ => Err(Error::InvalidParameter {
                name: "controller",
                reason: format!("`{s}` is not one of ccbf, fifo"),
            }),
        }
    }
}

/// Controller and barrier parameters shared by both controllers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineParams {
    pub barrier: BarrierParams<f64>,
    pub accel: AccelLimits,
    pub alpha: f64,
    pub v_floor: f64,
    pub kp: f64,
    pub slack_weight: f64,
    pub warm_start: bool,
}

impl EngineParams {
    pub fn from_config(cfg: &MonteCarloConfig) -> Self {
        Self {
            barrier: cfg.barrier,
            accel: cfg.accel_limits,
            alpha: cfg.alpha(),
            v_floor: cfg.ccbf.v_floor,
            kp: cfg.fifo.kp,
            slack_weight: cfg.fifo.slack_weight,
            warm_start: true,
        }
    }

    pub fn ccbf_config(&self, ts: f64) -> CcbfConfig<f64> {
        CcbfConfig {
            lambda: self.barrier.lambda,
            beta: self.barrier.beta,
            alpha: self.alpha,
            a_min: self.accel.a_min,
            a_max: self.accel.a_max,
            ts,
            v_floor: self.v_floor,
        }
    }

    pub fn fifo_config(&self) -> FifoConfig<f64> {
        FifoConfig {
            beta: self.barrier.beta,
            lambda1: self.barrier.lambda1,
            lambda2: self.barrier.lambda2,
            kp: self.kp,
            slack_weight: self.slack_weight,
            a_min: self.accel.a_min,
            a_max: self.accel.a_max,
        }
    }
}

/// One vehicle at one step. `u` is the command (speed for the centralized
/// controller, acceleration for FIFO) and `a` the realized acceleration over
/// the following interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    pub k: usize,
    pub t: f64,
    pub id: usize,
    pub road: Road,
    pub s: f64,
    pub v: f64,
    pub u: f64,
    pub a: f64,
    pub in_cz: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Injection,
    InjectionDeferred,
    MergeCrossing,
    CzExit,
    SolverFallback,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Injection => "injection",
            EventKind::InjectionDeferred => "injection_deferred",
            EventKind::MergeCrossing => "merge_crossing",
            EventKind::CzExit => "cz_exit",
            EventKind::SolverFallback => "solver_fallback",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub k: usize,
    pub t: f64,
    pub kind: EventKind,
    pub vehicle: Option<usize>,
    pub detail: String,
}

/// Controller diagnostics for one step with at least one vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub k: usize,
    pub agents: usize,
    /// Worst status over the step's QPs.
    pub status: QpStatus,
    /// Centralized only: speeds came from the least-violation problem.
    pub relaxed: bool,
    /// All vehicles braked at the rate limit.
    pub fallback: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub active_constraints: usize,
    /// Smallest constraint value at the applied commands: pair rows for the
    /// centralized controller, slacked cascade rows for FIFO.
    pub min_row_margin: Option<f64>,
    pub max_slack: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub controller: ControllerKind,
    pub ts: f64,
    pub samples: Vec<TraceSample>,
    pub events: Vec<TraceEvent>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl SimTrace {
    pub const CSV_HEADER: &'static str = "k,t,vehicle_id,road,s,v,u,a,in_cz";
    pub const EVENTS_HEADER: &'static str = "k,t,kind,vehicle_id,detail";

    pub fn samples_csv(&self) -> String {
        let mut out = String::with_capacity(64 * self.samples.len() + 64);
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.k, s.t, s.id, s.road, s.s, s.v, s.u, s.a, s.in_cz as u8
            );
        }
        out
    }

    pub fn events_csv(&self) -> String {
        let mut out = String::from(Self::EVENTS_HEADER);
        out.push('\n');
        for e in &self.events {
            let id = e.vehicle.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", e.k, e.t, e.kind.as_str(), id, e.detail.replace(',', ";"));
        }
        out
    }

    pub fn vehicle_samples(&self, id: usize) -> impl Iterator<Item = &TraceSample> {
        self.samples.iter().filter(move |s| s.id == id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub trace: SimTrace,
    /// Smallest unmargined barrier over steps and co-present pairs, m^2;
    /// infinite if no two vehicles were ever present together.
    pub h0_min: f64,
    pub collision: bool,
    pub completed: bool,
    /// Steps whose nominal QP did not solve.
    pub fallbacks: usize,
    pub steps: usize,
}

/// Interpolated time at which each vehicle passed `s = 0`.
pub fn merge_crossing_times(trace: &SimTrace) -> BTreeMap<usize, f64> {
    let mut last: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for smp in &trace.samples {
        if let Some(&(t0, s0)) = last.get(&smp.id) {
            if s0 < 0.0 && smp.s >= 0.0 && !out.contains_key(&smp.id) {
                let frac = -s0 / (smp.s - s0);
                out.insert(smp.id, t0 + frac * (smp.t - t0));
            }
        }
        last.insert(smp.id, (smp.t, smp.s));
    }
    out
}

#[derive(Clone, Copy, Debug)]
struct Live {
    idx: usize,
    s: f64,
    v: f64,
    u_prev: f64,
    entry_time: f64,
}

/// Whether a vehicle entering with `body` is clear of every body present.
pub fn entry_clear(body: &Body<f64>, present: &[Body<f64>], layout: &MergeLayout<f64>, params: &BarrierParams<f64>) -> bool {
    present.iter().all(|other| {
        let g = pair_geometry(body, other, layout);
        let h = pair_barrier(&g, params.beta);
        let h_dot = 2.0 * g.xi.dot(g.v_rel);
        h >= 0.0 && h_dot + params.lambda.min(params.lambda1) * h >= 0.0
    })
}

fn worst(a: QpStatus, b: QpStatus) -> QpStatus {
    let rank = |s: QpStatus| match s {
        QpStatus::Optimal => 0,
        QpStatus::MaxIter => 1,
        QpStatus::Infeasible => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

enum Ctl {
    Ccbf(CcbfController<f64>),
    Fifo(FifoController<f64>),
}

pub fn run(scenario: &Scenario, controller: ControllerKind, params: &EngineParams) -> Result<RunOutcome> {
    scenario.validate()?;
    params.barrier.validate()?;
    let layout = scenario.layout;
    let ts = scenario.ts;
    let vehicles = &scenario.vehicles;
    let mut ctl = match controller {
        ControllerKind::Ccbf => {
            Ctl::Ccbf(CcbfController::new(params.ccbf_config(ts), layout)?.with_warm_start(params.warm_start))
        }
        ControllerKind::Fifo => Ctl::Fifo(FifoController::new(params.fifo_config(), layout)?),
    };

    let mut queues: Vec<VecDeque<usize>> = Road::ALL
        .iter()
        .map(|&r| vehicles.iter().filter(|v| v.road == r).map(|v| v.id).collect())
        .collect();
    let mut active: Vec<Live> = Vec::new();
    let mut deferred: HashSet<usize> = HashSet::new();
    let mut trace = SimTrace {
        controller,
        ts,
        samples: Vec::new(),
        events: Vec::new(),
        diagnostics: Vec::new(),
    };
    let body = |l: &Live| Body {
        road: vehicles[l.idx].road,
        s: l.s,
        v: l.v,
        radius: vehicles[l.idx].radius,
    };
    let mut h0_min = f64::INFINITY;
    let mut fallbacks = 0;
    let mut completed = false;
    let mut k = 0usize;

    loop {
        let t = k as f64 * ts;
        if t > scenario.horizon_max {
            break;
        }

        // exits: one last sample outside the zone
        let mut present: Vec<Body<f64>> = Vec::new();
        active.retain(|l| {
            if l.s <= layout.cz_after_m {
                return true;
            }
            let spec = &vehicles[l.idx];
            trace.samples.push(TraceSample {
                k,
                t,
                id: spec.id,
                road: spec.road,
                s: l.s,
                v: l.v,
                u: l.v,
                a: 0.0,
                in_cz: false,
            });
            trace.events.push(TraceEvent {
                k,
                t,
                kind: EventKind::CzExit,
                vehicle: Some(spec.id),
                detail: String::new(),
            });
            present.push(body(l));
            false
        });

        for q in queues.iter_mut() {
            while let Some(&id) = q.front() {
                let spec = &vehicles[id];
                if spec.injection_time > t + 1e-9 {
                    break;
                }
                let cand = Body {
                    road: spec.road,
                    s: -layout.cz_before_m,
                    v: spec.desired_speed,
                    radius: spec.radius,
                };
                let others: Vec<Body<f64>> = active.iter().map(body).collect();
                if !entry_clear(&cand, &others, &layout, &params.barrier) {
                    if deferred.insert(id) {
                        trace.events.push(TraceEvent {
                            k,
                            t,
                            kind: EventKind::InjectionDeferred,
                            vehicle: Some(id),
                            detail: format!("scheduled {}", spec.injection_time),
                        });
                    }
                    break;
                }
                q.pop_front();
                active.push(Live {
                    idx: id,
                    s: cand.s,
                    v: cand.v,
                    u_prev: cand.v,
                    entry_time: t,
                });
                trace.events.push(TraceEvent {
                    k,
                    t,
                    kind: EventKind::Injection,
                    vehicle: Some(id),
                    detail: String::new(),
                });
            }
        }

        if active.is_empty() && queues.iter().all(|q| q.is_empty()) {
            completed = true;
            break;
        }

        present.extend(active.iter().map(body));
        for i in 0..present.len() {
            for j in i + 1..present.len() {
                let g = pair_geometry(&present[i], &present[j], &layout);
                h0_min = h0_min.min(barrier_value(g.xi, present[i].radius, present[j].radius, 0.0));
            }
        }

        if !active.is_empty() {
            let started = Instant::now();
            let (diag, commands, fallback) = match &mut ctl {
                Ctl::Ccbf(c) => {
                    let agents: Vec<CcbfAgent<f64>> = active
                        .iter()
                        .map(|l| CcbfAgent {
                            id: vehicles[l.idx].id,
                            body: body(l),
                            desired_speed: vehicles[l.idx].desired_speed,
                            mass: vehicles[l.idx].mass,
                            u_prev: l.u_prev,
                        })
                        .collect();
                    let cmd = c.step(&agents)?;
                    let diag = StepDiagnostics {
                        k,
                        agents: agents.len(),
                        status: cmd.status,
                        relaxed: cmd.relaxed,
                        fallback: cmd.fallback,
                        iterations: cmd.iterations,
                        wall_time_s: 0.0,
                        active_constraints: cmd.active_constraints,
                        min_row_margin: cmd.min_row_margin,
                        max_slack: 0.0,
                    };
                    (diag, cmd.speeds, cmd.relaxed || cmd.fallback)
                }
                Ctl::Fifo(c) => {
                    let agents: Vec<FifoAgent<f64>> = active
                        .iter()
                        .map(|l| FifoAgent {
                            id: vehicles[l.idx].id,
                            body: body(l),
                            desired_speed: vehicles[l.idx].desired_speed,
                            entry_time: l.entry_time,
                        })
                        .collect();
                    let cmds = c.step(&agents)?;
                    let mut diag = StepDiagnostics {
                        k,
                        agents: agents.len(),
                        status: QpStatus::Optimal,
                        relaxed: false,
                        fallback: false,
                        iterations: 0,
                        wall_time_s: 0.0,
                        active_constraints: 0,
                        min_row_margin: None,
                        max_slack: 0.0,
                    };
                    for c in &cmds {
                        diag.status = worst(diag.status, c.status);
                        diag.iterations += c.iterations;
                        diag.max_slack = diag.max_slack.max(c.slack);
                        if c.accel != c.baseline {
                            diag.active_constraints += 1;
                        }
                        if let Some(m) = c.min_slacked_margin {
                            diag.min_row_margin = Some(diag.min_row_margin.map_or(m, |x: f64| x.min(m)));
                        }
                    }
                    diag.fallback = diag.status != QpStatus::Optimal;
                    let fb = diag.fallback;
                    (diag, cmds.iter().map(|c| c.accel).collect::<Vec<f64>>(), fb)
                }
            };
            let mut diag = diag;
            diag.wall_time_s = started.elapsed().as_secs_f64();
            trace.diagnostics.push(diag);
            if fallback {
                fallbacks += 1;
                trace.events.push(TraceEvent {
                    k,
                    t,
                    kind: EventKind::SolverFallback,
                    vehicle: None,
                    detail: format!("{} {}", diag.status.as_str(), if diag.fallback { "brake" } else { "relaxed" }),
                });
            }

            for (l, &u) in active.iter_mut().zip(&commands) {
                let spec = &vehicles[l.idx];
                let (s0, v0) = (l.s, l.v);
                let a = match controller {
                    ControllerKind::Ccbf => {
                        let a = (u - l.u_prev) / ts;
                        l.s += u * ts;
                        l.v = u;
                        l.u_prev = u;
                        a
                    }
                    ControllerKind::Fifo => {
                        let v_new = (v0 + u * ts).max(0.0);
                        l.s += v_new * ts;
                        l.v = v_new;
                        l.u_prev = v_new;
                        (v_new - v0) / ts
                    }
                };
                trace.samples.push(TraceSample {
                    k,
                    t,
                    id: spec.id,
                    road: spec.road,
                    s: s0,
                    v: v0,
                    u,
                    a,
                    in_cz: true,
                });
                if s0 < 0.0 && l.s >= 0.0 {
                    trace.events.push(TraceEvent {
                        k,
                        t: t + ts * (-s0 / (l.s - s0)),
                        kind: EventKind::MergeCrossing,
                        vehicle: Some(spec.id),
                        detail: String::new(),
                    });
                }
            }
        }
        k += 1;
    }

    Ok(RunOutcome {
        trace,
        h0_min,
        collision: h0_min < 0.0,
        completed,
        fallbacks,
        steps: k,
    })
}
