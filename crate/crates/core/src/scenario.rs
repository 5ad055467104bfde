//! Seeded random scenarios for the Monte Carlo setup.
//!
//! Each road draws one injection rate; arrivals are a Poisson stream at that
//! rate, pushed forward just enough that a new vehicle entering the control
//! zone is clear of its same-road predecessor. Mass sets the barrier radius
//! (2 m to 4 m) and the road-load coefficients by linear interpolation
//! between two catalog anchors.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::config::MonteCarloConfig;
use crate::error::{Error, Result};
use crate::geometry::{MergeLayout, Road};
use crate::metrics::RoadLoad;

pub const LBS_TO_KG: f64 = 0.453592;
/// Base (lightest) vehicle mass.
pub const M_BASE_LBS: f64 = 2375.0;
/// Mass of the homogeneous-traffic variant.
pub const HOMOGENEOUS_MASS_LBS: f64 = 4500.0;
pub const MIN_RADIUS_M: f64 = 2.0;
pub const MAX_RADIUS_M: f64 = 4.0;

pub fn lbs_to_kg(mass_lbs: f64) -> Result<f64> {
    if !(mass_lbs > 0.0 && mass_lbs.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "mass_lbs",
            reason: format!("{mass_lbs} is not a positive mass"),
        });
    }
    Ok(mass_lbs * LBS_TO_KG)
}

/// Catalog vehicle in SI units (N, N/(m/s), N/(m/s)^2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleCatalogEntry {
    pub name: String,
    pub mass: f64,
    pub dyno_a: f64,
    pub dyno_b: f64,
    pub dyno_c: f64,
}

impl VehicleCatalogEntry {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.dyno_a >= 0.0) || !(self.dyno_c >= 0.0) || !self.dyno_b.is_finite() {
            return Err(Error::InvalidParameter {
                name: "catalog",
                reason: format!("entry `{}` needs mass > 0, A >= 0, C >= 0", self.name),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogAnchors {
    pub light: VehicleCatalogEntry,
    pub heavy: VehicleCatalogEntry,
}

impl CatalogAnchors {
    pub fn new(light: VehicleCatalogEntry, heavy: VehicleCatalogEntry) -> Result<Self> {
        light.validate()?;
        heavy.validate()?;
        if !(heavy.mass > light.mass) {
            return Err(Error::InvalidParameter {
                name: "catalog",
                reason: "heavy anchor must outweigh light anchor".into(),
            });
        }
        Ok(Self { light, heavy })
    }
}

/// Mass-dependent part of a vehicle description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassProperties {
    pub mass: f64,
    pub radius: f64,
    pub road_load: RoadLoad<f64>,
}

pub fn spec_from_mass(mass: f64, anchors: &CatalogAnchors) -> Result<MassProperties> {
    let (lo, hi) = (anchors.light.mass, anchors.heavy.mass);
    let slack = 1e-9 * hi;
    if !(mass >= lo - slack && mass <= hi + slack) {
        return Err(Error::OutOfRange {
            what: "vehicle mass",
            value: mass,
            lo,
            hi,
        });
    }
    let f = ((mass - lo) / (hi - lo)).clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| a + f * (b - a);
    Ok(MassProperties {
        mass,
        radius: lerp(MIN_RADIUS_M, MAX_RADIUS_M),
        road_load: RoadLoad {
            a: lerp(anchors.light.dyno_a, anchors.heavy.dyno_a),
            b: lerp(anchors.light.dyno_b, anchors.heavy.dyno_b),
            c: lerp(anchors.light.dyno_c, anchors.heavy.dyno_c),
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: usize,
    pub road: Road,
    /// kg
    pub mass: f64,
    pub radius: f64,
    pub desired_speed: f64,
    pub injection_time: f64,
    pub dyno_a: f64,
    pub dyno_b: f64,
    pub dyno_c: f64,
}

impl VehicleSpec {
    pub fn road_load(&self) -> RoadLoad<f64> {
        RoadLoad {
            a: self.dyno_a,
            b: self.dyno_b,
            c: self.dyno_c,
        }
    }

    fn apply_mass(&mut self, props: MassProperties) {
        self.mass = props.mass;
        self.radius = props.radius;
        self.dyno_a = props.road_load.a;
        self.dyno_b = props.road_load.b;
        self.dyno_c = props.road_load.c;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub layout: MergeLayout<f64>,
    /// Sorted by injection time; `vehicles[i].id == i`.
    pub vehicles: Vec<VehicleSpec>,
    pub ts: f64,
    pub horizon_max: f64,
}

impl Scenario {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if !(self.ts > 0.0) || !(self.horizon_max > 0.0) {
            return Err(Error::InvalidParameter {
                name: "ts",
                reason: "sampling time and horizon must be positive".into(),
            });
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.id != i {
                return Err(Error::InvalidParameter {
                    name: "vehicles",
                    reason: format!("vehicle at position {i} has id {}", v.id),
                });
            }
            if !(v.mass > 0.0 && v.radius > 0.0 && v.desired_speed >= 0.0 && v.injection_time >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "vehicles",
                    reason: format!("vehicle {i} has nonphysical parameters"),
                });
            }
        }
        for road in Road::ALL {
            let times: Vec<f64> = self.on_road(road).map(|v| v.injection_time).collect();
            if times.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidParameter {
                    name: "vehicles",
                    reason: format!("injection times on {road} decrease"),
                });
            }
        }
        Ok(())
    }

    pub fn on_road(&self, road: Road) -> impl Iterator<Item = &VehicleSpec> {
        self.vehicles.iter().filter(move |v| v.road == road)
    }
}

/// Smallest entry gap (m) behind a predecessor such that both the inflated
/// barrier and the first stage of its cascade, `h' + lambda1 h`, are
/// nonnegative for a follower closing at `closing_speed`.
pub fn required_entry_gap(reach: f64, closing_speed: f64, lambda1: f64) -> f64 {
    // h = g^2 - reach^2, h' = -2 g closing_speed
    let k = closing_speed / lambda1;
    reach.max(k + (k * k + reach * reach).sqrt())
}

pub fn sample_scenario(config: &MonteCarloConfig, seed: u64) -> Result<Scenario> {
    let sc = &config.scenario;
    let layout = config.layout()?;
    let anchors = config.anchors()?;
    let beta = config.barrier.beta;
    let lambda1 = config.barrier.lambda1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha8Rng, b: [f64; 2]| b[0] + (b[1] - b[0]) * rng.random::<f64>();

    let mut vehicles = Vec::with_capacity(sc.highway_vehicles + sc.merge_vehicles);
    for (road, count) in [(Road::Highway, sc.highway_vehicles), (Road::Merge, sc.merge_vehicles)] {
        let rate_vph = uniform(&mut rng, sc.rate_bounds_vph);
        let arrivals = Exp::new(rate_vph / 3600.0).map_err(|e| Error::InvalidParameter {
            name: "rate_bounds_vph",
            reason: e.to_string(),
        })?;
        let mut raw = 0.0;
        let mut prev: Option<VehicleSpec> = None;
        for _ in 0..count {
            raw += arrivals.sample(&mut rng);
            let desired_speed = uniform(&mut rng, sc.speed_bounds_mps);
            let mass = lbs_to_kg(uniform(&mut rng, sc.mass_bounds_lbs))?;
            let props = spec_from_mass(mass, &anchors)?;
            let mut spec = VehicleSpec {
                id: 0,
                road,
                mass,
                radius: props.radius,
                desired_speed,
                injection_time: raw,
                dyno_a: 0.0,
                dyno_b: 0.0,
                dyno_c: 0.0,
            };
            spec.apply_mass(props);
            if let Some(p) = &prev {
                // predecessor cruises at its initial speed after entry
                let reach = (1.0 + beta) * (p.radius + spec.radius);
                let gap = required_entry_gap(reach, desired_speed - p.desired_speed, lambda1);
                let earliest = p.injection_time + gap / p.desired_speed;
                spec.injection_time = spec.injection_time.max(earliest);
            }
            prev = Some(spec.clone());
            vehicles.push(spec);
        }
    }
    // global order by entry time; highway first on exact ties
    vehicles.sort_by(|a, b| a.injection_time.total_cmp(&b.injection_time).then(a.road.cmp(&b.road)));
    for (i, v) in vehicles.iter_mut().enumerate() {
        v.id = i;
    }
    let scenario = Scenario {
        seed,
        layout,
        vehicles,
        ts: sc.ts,
        horizon_max: sc.horizon_max,
    };
    Ok(match config.homogeneous_mass_lbs {
        Some(m) => homogeneous_override(&scenario, m, &anchors)?,
        None => scenario,
    })
}

/// Replaces every mass with `mass_lbs` and recomputes the mass-dependent
/// fields; everything else is kept.
pub fn homogeneous_override(scenario: &Scenario, mass_lbs: f64, anchors: &CatalogAnchors) -> Result<Scenario> {
    let props = spec_from_mass(lbs_to_kg(mass_lbs)?, anchors)?;
    let mut out = scenario.clone();
    for v in &mut out.vehicles {
        v.apply_mass(props);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::barrier_value;
    use crate::geometry::Vec2;
    use approx::assert_abs_diff_eq;

    fn anchors() -> CatalogAnchors {
        MonteCarloConfig::nominal().anchors().unwrap()
    }

    #[test]
    fn pound_conversion() {
        assert_abs_diff_eq!(lbs_to_kg(2375.0).unwrap(), 1077.281, epsilon = 1e-9);
        assert_abs_diff_eq!(lbs_to_kg(4500.0).unwrap(), 2041.164, epsilon = 1e-9);
        assert_abs_diff_eq!(lbs_to_kg(9500.0).unwrap(), 4309.124, epsilon = 1e-9);
        assert!(lbs_to_kg(0.0).is_err());
        assert!(lbs_to_kg(-3.0).is_err());
    }

    #[test]
    fn mass_interpolation() {
        let a = anchors();
        let light = spec_from_mass(a.light.mass, &a).unwrap();
        assert_eq!(light.radius, 2.0);
        assert_eq!(light.road_load.a, a.light.dyno_a);
        let heavy = spec_from_mass(a.heavy.mass, &a).unwrap();
        assert_abs_diff_eq!(heavy.radius, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(heavy.road_load.c, a.heavy.dyno_c, epsilon = 1e-12);
        let mid = spec_from_mass(0.5 * (a.light.mass + a.heavy.mass), &a).unwrap();
        assert_abs_diff_eq!(mid.radius, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mid.road_load.a, 0.5 * (a.light.dyno_a + a.heavy.dyno_a), epsilon = 1e-12);
        assert_abs_diff_eq!(mid.road_load.b, 0.5 * (a.light.dyno_b + a.heavy.dyno_b), epsilon = 1e-12);
        assert!(spec_from_mass(a.light.mass - 1.0, &a).is_err());
        assert!(spec_from_mass(a.heavy.mass + 1.0, &a).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = MonteCarloConfig::nominal();
        let a = sample_scenario(&cfg, 42).unwrap();
        let b = sample_scenario(&cfg, 42).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(a, sample_scenario(&cfg, 43).unwrap());
    }

    #[test]
    fn drawn_values_in_range() {
        let cfg = MonteCarloConfig::nominal();
        for seed in 0..50 {
            let s = sample_scenario(&cfg, seed).unwrap();
            assert_eq!(s.on_road(Road::Highway).count(), 10);
            assert_eq!(s.on_road(Road::Merge).count(), 10);
            for v in &s.vehicles {
                assert!((1077.281 - 1e-6..=4309.124 + 1e-6).contains(&v.mass));
                assert!((20.0..=25.0).contains(&v.desired_speed));
                assert!((2.0..=4.0 + 1e-12).contains(&v.radius));
            }
            s.validate().unwrap();
        }
    }

    #[test]
    fn entry_gap_closed_form() {
        // no closing speed: the inflated barrier alone
        assert_eq!(required_entry_gap(8.8, 0.0, 0.3), 8.8);
        assert_eq!(required_entry_gap(8.8, -3.0, 0.3), 8.8);
        // closing: h' + l1 h = 0 at the returned gap
        let g = required_entry_gap(8.8, 5.0, 0.3);
        let stage = -2.0 * g * 5.0 + 0.3 * (g * g - 8.8 * 8.8);
        assert_abs_diff_eq!(stage, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn injection_gap_is_safe() {
        // Direct evaluation: at each injection instant the predecessor,
        // cruising since its own entry, is outside the inflated disk.
        let cfg = MonteCarloConfig::nominal();
        let beta = cfg.barrier.beta;
        let mut adjusted = 0;
        for seed in 0..1000 {
            let s = sample_scenario(&cfg, seed).unwrap();
            for road in Road::ALL {
                let v: Vec<&VehicleSpec> = s.on_road(road).collect();
                for w in v.windows(2) {
                    let (p, f) = (w[0], w[1]);
                    let gap = p.desired_speed * (f.injection_time - p.injection_time);
                    let h = barrier_value(Vec2::new(gap, 0.0), p.radius, f.radius, beta);
                    assert!(h >= -1e-9, "seed {seed}: h = {h}");
                    if h.abs() < 1e-6 || gap < 30.0 {
                        adjusted += 1;
                    }
                }
            }
        }
        assert!(adjusted > 0, "the adjustment path was never exercised");
    }

    #[test]
    fn homogeneous_override_contract() {
        let cfg = MonteCarloConfig::nominal();
        let a = anchors();
        let s = sample_scenario(&cfg, 3).unwrap();
        let h = homogeneous_override(&s, HOMOGENEOUS_MASS_LBS, &a).unwrap();
        assert!(h.vehicles.iter().all(|v| (v.mass - 2041.164).abs() < 1e-9));
        let r0 = h.vehicles[0].radius;
        assert!(h.vehicles.iter().all(|v| v.radius == r0));
        assert_eq!(homogeneous_override(&h, HOMOGENEOUS_MASS_LBS, &a).unwrap(), h);
        for (x, y) in s.vehicles.iter().zip(&h.vehicles) {
            assert_eq!(x.injection_time, y.injection_time);
            assert_eq!(x.desired_speed, y.desired_speed);
        }
    }

    #[test]
    fn scenario_json_roundtrip() {
        let s = sample_scenario(&MonteCarloConfig::nominal(), 9).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json().unwrap()).unwrap(), s);
    }
}
