//! Energy and flow metrics.
//!
//! Energy metrics are distance normalized and reported in Wh/km. Each is
//! computed over one vehicle's speed samples inside the control zone, from
//! injection up to and including the first sample past the exit, with
//! forward-difference accelerations `a_k = (v_{k+1} - v_k) / ts`.

use serde::{Deserialize, Serialize};

use crate::engine::{merge_crossing_times, SimTrace, TraceSample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Wh/km per J/m.
pub const JOULE_PER_M_TO_WH_PER_KM: f64 = 1000.0 / 3600.0;

pub fn j_per_m_to_wh_per_km<T: Scalar>(x: T) -> T {
    x * T::lit(1000.0) / T::lit(3600.0)
}

pub fn wh_per_km_to_j_per_m<T: Scalar>(x: T) -> T {
    x * T::lit(3600.0) / T::lit(1000.0)
}

/// Coast-down road load `a + b v + c v^2`, SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadLoad<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

pub fn road_load_force<T: Scalar>(load: &RoadLoad<T>, v: T) -> Result<T> {
    if !(v >= T::zero()) {
        return Err(Error::OutOfRange {
            what: "speed for road load",
            value: v.as_f64(),
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(load.a + load.b * v + load.c * v * v)
}

fn check_window<T: Scalar>(speeds: &[T], distance: T) -> Result<()> {
    if speeds.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "speeds",
            reason: format!("need at least 2 samples, got {}", speeds.len()),
        });
    }
    if !(distance > T::zero()) {
        return Err(Error::ZeroDistance);
    }
    Ok(())
}

/// Positive acceleration kinetic energy, `sum m max(0, v_{k+1}^2 - v_k^2) / s_N`.
pub fn pake<T: Scalar>(speeds: &[T], mass: T, distance: T) -> Result<T> {
    check_window(speeds, distance)?;
    let sum: T = speeds
        .windows(2)
        .map(|w| mass * (w[1] * w[1] - w[0] * w[0]).max(T::zero()))
        .sum();
    Ok(j_per_m_to_wh_per_km(sum / distance))
}

/// Braking in excess of coasting, `sum max(0, -m a_k - F(v_k)) v_k ts / s_N`.
pub fn braking_energy<T: Scalar>(speeds: &[T], mass: T, load: &RoadLoad<T>, ts: T, distance: T) -> Result<T> {
    check_window(speeds, distance)?;
    let mut sum = T::zero();
    for w in speeds.windows(2) {
        let a = (w[1] - w[0]) / ts;
        let f = road_load_force(load, w[0])?;
        sum = sum + (-mass * a - f).max(T::zero()) * w[0] * ts;
    }
    Ok(j_per_m_to_wh_per_km(sum / distance))
}

/// Total loss, `sum max(F_brk(a_k), F(v_k)) v_k ts / s_N` with
/// `F_brk = -min(0, a) m`.
pub fn total_energy_loss<T: Scalar>(speeds: &[T], mass: T, load: &RoadLoad<T>, ts: T, distance: T) -> Result<T> {
    check_window(speeds, distance)?;
    let mut sum = T::zero();
    for w in speeds.windows(2) {
        let a = (w[1] - w[0]) / ts;
        let brk = -a.min(T::zero()) * mass;
        let f = road_load_force(load, w[0])?;
        sum = sum + brk.max(f) * w[0] * ts;
    }
    Ok(j_per_m_to_wh_per_km(sum / distance))
}

/// Road-load-only part of [`total_energy_loss`].
pub fn road_load_loss<T: Scalar>(speeds: &[T], load: &RoadLoad<T>, ts: T, distance: T) -> Result<T> {
    check_window(speeds, distance)?;
    let mut sum = T::zero();
    for &v in &speeds[..speeds.len() - 1] {
        sum = sum + road_load_force(load, v)? * v * ts;
    }
    Ok(j_per_m_to_wh_per_km(sum / distance))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleMetrics {
    pub pake: f64,
    pub be: f64,
    pub tel: f64,
    /// Distance covered over the window, m.
    pub distance: f64,
    pub time_in_cz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub pake: f64,
    pub be: f64,
    pub tel: f64,
    /// Time the last vehicle crossed the merge point; absent if one never did.
    pub travel_time: Option<f64>,
    pub avg_velocity: f64,
    pub vehicles: usize,
}

/// Samples of one vehicle inside the metrics window.
pub fn vehicle_window(trace: &SimTrace, id: usize) -> Vec<&TraceSample> {
    let mut out = Vec::new();
    for s in trace.samples.iter().filter(|s| s.id == id) {
        out.push(s);
        if !s.in_cz {
            break;
        }
    }
    out
}

pub fn vehicle_metrics(trace: &SimTrace, id: usize, mass: f64, load: &RoadLoad<f64>) -> Result<VehicleMetrics> {
    let w = vehicle_window(trace, id);
    let speeds: Vec<f64> = w.iter().map(|s| s.v).collect();
    let (first, last) = match (w.first(), w.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::ZeroDistance),
    };
    let distance = last.s - first.s;
    Ok(VehicleMetrics {
        pake: pake(&speeds, mass, distance)?,
        be: braking_energy(&speeds, mass, load, trace.ts, distance)?,
        tel: total_energy_loss(&speeds, mass, load, trace.ts, distance)?,
        distance,
        time_in_cz: last.t - first.t,
    })
}

/// Merge-point travel time and mean in-zone speed.
pub fn flow_metrics(trace: &SimTrace, vehicle_count: usize) -> (Option<f64>, f64) {
    let crossings = merge_crossing_times(trace);
    let travel_time = if crossings.len() == vehicle_count {
        crossings.values().copied().reduce(f64::max)
    } else {
        None
    };
    let (sum, n) = trace
        .samples
        .iter()
        .filter(|s| s.in_cz)
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.v, n + 1));
    let avg = if n == 0 { 0.0 } else { sum / n as f64 };
    (travel_time, avg)
}

/// Per-vehicle metrics averaged over every vehicle of the scenario.
pub fn system_metrics(trace: &SimTrace, scenario: &crate::scenario::Scenario) -> Result<SystemMetrics> {
    let n = scenario.vehicles.len();
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "vehicles",
            reason: "scenario has no vehicles".into(),
        });
    }
    let (mut pk, mut be, mut tel) = (0.0, 0.0, 0.0);
    for v in &scenario.vehicles {
        let m = vehicle_metrics(trace, v.id, v.mass, &v.road_load())?;
        pk += m.pake;
        be += m.be;
        tel += m.tel;
    }
    let (travel_time, avg_velocity) = flow_metrics(trace, n);
    let nf = n as f64;
    Ok(SystemMetrics {
        pake: pk / nf,
        be: be / nf,
        tel: tel / nf,
        travel_time,
        avg_velocity,
        vehicles: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const LOAD: RoadLoad<f64> = RoadLoad { a: 100.0, b: 5.0, c: 0.4 };

    #[test]
    fn road_load_examples() {
        assert_eq!(road_load_force(&LOAD, 0.0).unwrap(), 100.0);
        assert_eq!(road_load_force(&LOAD, 20.0).unwrap(), 360.0);
        assert!(road_load_force(&LOAD, 10.0).unwrap() < 360.0);
        assert!(road_load_force(&LOAD, -1.0).is_err());
    }

    #[test]
    fn pake_single_step() {
        let x = pake(&[20.0, 21.0], 1000.0, 2.05).unwrap();
        assert_relative_eq!(x, 20000.0 / 3.6, max_relative = 1e-12);
        assert_eq!(pake(&[20.0; 5], 1000.0, 8.0).unwrap(), 0.0);
        assert_eq!(pake(&[20.0, 19.0, 17.0], 1000.0, 4.0).unwrap(), 0.0);
        assert!(matches!(pake(&[20.0, 21.0], 1000.0, 0.0), Err(Error::ZeroDistance)));
    }

    #[test]
    fn braking_examples() {
        assert_eq!(braking_energy(&[20.0; 4], 1000.0, &LOAD, 0.1, 6.0).unwrap(), 0.0);
        // coasting exactly: -m a = F(v0)
        let a = -road_load_force(&LOAD, 20.0).unwrap() / 1000.0;
        let v = [20.0, 20.0 + a * 0.1];
        assert!(braking_energy(&v, 1000.0, &LOAD, 0.1, 2.0).unwrap().abs() < 1e-9);
        // a = -2: (2000 - 360) * 20 W for 0.1 s
        let e = braking_energy(&[20.0, 19.8], 1000.0, &LOAD, 0.1, 1.0).unwrap();
        assert_relative_eq!(e, 32800.0 * 0.1 / 3.6, max_relative = 1e-9);
    }

    #[test]
    fn tel_examples() {
        let v = [20.0; 11];
        let tel = total_energy_loss(&v, 1000.0, &LOAD, 0.1, 20.0).unwrap();
        assert_relative_eq!(tel, 100.0, max_relative = 1e-12);
        // hard braking: 6000 N > 360 N
        let tel = total_energy_loss(&[20.0, 19.4], 1000.0, &LOAD, 0.1, 1.0).unwrap();
        assert_relative_eq!(tel, 6000.0 * 20.0 * 0.1 / 3.6, max_relative = 1e-9);
        // accelerating throughout: road load only
        let up = [20.0, 20.5, 21.0];
        assert_eq!(
            total_energy_loss(&up, 1000.0, &LOAD, 0.1, 4.1).unwrap(),
            road_load_loss(&up, &LOAD, 0.1, 4.1).unwrap()
        );
    }

    #[test]
    fn unit_roundtrip() {
        for x in [1e-6, 0.3, 360.0, 5.5e7] {
            assert_relative_eq!(wh_per_km_to_j_per_m(j_per_m_to_wh_per_km(x)), x, max_relative = 1e-12);
        }
        assert_relative_eq!(j_per_m_to_wh_per_km(360.0), 100.0, max_relative = 1e-12);
    }

    #[test]
    fn generic_f32() {
        let l = RoadLoad::<f32> { a: 100.0, b: 5.0, c: 0.4 };
        let tel = total_energy_loss(&[20.0f32; 11], 1000.0, &l, 0.1, 20.0).unwrap();
        assert!((tel - 100.0).abs() < 1e-3);
    }
}
