//! JSON configuration for scenarios, controllers and Monte Carlo batches.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::barriers::BarrierParams;
use crate::error::{Error, Result};
use crate::geometry::MergeLayout;
use crate::scenario::{lbs_to_kg, CatalogAnchors, VehicleCatalogEntry, M_BASE_LBS};

pub const LBF_TO_N: f64 = 4.44822;
pub const MPH_TO_MPS: f64 = 0.44704;

/// Catalog entry in the units of published dynamometer targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpaCatalogEntry {
    pub name: String,
    pub mass_lbs: f64,
    pub a_lbf: f64,
    pub b_lbf_per_mph: f64,
    pub c_lbf_per_mph2: f64,
}

impl EpaCatalogEntry {
    pub fn to_si(&self) -> Result<VehicleCatalogEntry> {
        Ok(VehicleCatalogEntry {
            name: self.name.clone(),
            mass: lbs_to_kg(self.mass_lbs)?,
            dyno_a: self.a_lbf * LBF_TO_N,
            dyno_b: self.b_lbf_per_mph * LBF_TO_N / MPH_TO_MPS,
            dyno_c: self.c_lbf_per_mph2 * LBF_TO_N / (MPH_TO_MPS * MPH_TO_MPS),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogConfig {
    pub light: EpaCatalogEntry,
    pub heavy: EpaCatalogEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub highway_vehicles: usize,
    pub merge_vehicles: usize,
    /// Per-road injection rate bounds, vehicles per hour.
    pub rate_bounds_vph: [f64; 2],
    pub speed_bounds_mps: [f64; 2],
    pub mass_bounds_lbs: [f64; 2],
    pub merge_angle_deg: f64,
    pub cz_before_m: f64,
    pub cz_after_m: f64,
    pub ts: f64,
    #[serde(default = "default_horizon")]
    pub horizon_max: f64,
    pub catalog: CatalogConfig,
}

fn default_horizon() -> f64 {
    120.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccelLimits {
    pub a_min: f64,
    pub a_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcbfParams {
    /// Rate-penalty mass scaling, 1/kg. Defaults to one over the base mass.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub v_floor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FifoParams {
    pub kp: f64,
    pub slack_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub runs: usize,
    pub base_seed: u64,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Fixes every vehicle's mass (the homogeneous-traffic variant).
    #[serde(default)]
    pub homogeneous_mass_lbs: Option<f64>,
    pub scenario: ScenarioConfig,
    pub barrier: BarrierParams<f64>,
    pub accel_limits: AccelLimits,
    pub ccbf: CcbfParams,
    pub fifo: FifoParams,
}

fn default_bins() -> usize {
    30
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

impl MonteCarloConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Alpha with the default of one over the base mass in kg.
    pub fn alpha(&self) -> f64 {
        self.ccbf.alpha.unwrap_or_else(|| 1.0 / lbs_to_kg(M_BASE_LBS).unwrap())
    }

    pub fn layout(&self) -> Result<MergeLayout<f64>> {
        let s = &self.scenario;
        MergeLayout::new(s.merge_angle_deg.to_radians(), s.cz_before_m, s.cz_after_m)
    }

    pub fn anchors(&self) -> Result<CatalogAnchors> {
        CatalogAnchors::new(self.scenario.catalog.light.to_si()?, self.scenario.catalog.heavy.to_si()?)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if self.runs == 0 {
            return Err(invalid("runs", "must be at least 1"));
        }
        if s.highway_vehicles == 0 || s.merge_vehicles == 0 {
            return Err(invalid("vehicles", "counts per road must be positive"));
        }
        let ordered = |b: [f64; 2]| b[0] > 0.0 && b[0] <= b[1] && b[1].is_finite();
        if !ordered(s.rate_bounds_vph) {
            return Err(invalid("rate_bounds_vph", "need 0 < lo <= hi"));
        }
        if !ordered(s.speed_bounds_mps) {
            return Err(invalid("speed_bounds_mps", "need 0 < lo <= hi"));
        }
        if !ordered(s.mass_bounds_lbs) {
            return Err(invalid("mass_bounds_lbs", "need 0 < lo <= hi"));
        }
        if !(s.merge_angle_deg > 0.0 && s.merge_angle_deg < 90.0) {
            return Err(invalid("merge_angle_deg", format!("{} is outside (0, 90)", s.merge_angle_deg)));
        }
        self.layout()?;
        if !(s.ts > 0.0 && s.ts.is_finite()) {
            return Err(invalid("ts", "must be positive"));
        }
        if !(s.horizon_max > 0.0) {
            return Err(invalid("horizon_max", "must be positive"));
        }
        let anchors = self.anchors()?;
        let (lo, hi) = (lbs_to_kg(s.mass_bounds_lbs[0])?, lbs_to_kg(s.mass_bounds_lbs[1])?);
        let slack = 1e-9 * anchors.heavy.mass;
        if lo < anchors.light.mass - slack || hi > anchors.heavy.mass + slack {
            return Err(invalid("mass_bounds_lbs", "must lie within the catalog anchor masses"));
        }
        if let Some(m) = self.homogeneous_mass_lbs {
            let m = lbs_to_kg(m)?;
            if m < anchors.light.mass - slack || m > anchors.heavy.mass + slack {
                return Err(invalid("homogeneous_mass_lbs", "must lie within the catalog anchor masses"));
            }
        }
        self.barrier.validate()?;
        let a = self.accel_limits;
        if !(a.a_min < 0.0 && a.a_max > 0.0) {
            return Err(invalid("accel_limits", "need a_min < 0 < a_max"));
        }
        if !(self.alpha() > 0.0) {
            return Err(invalid("alpha", "must be positive"));
        }
        if !(self.ccbf.v_floor >= 0.0) {
            return Err(invalid("v_floor", "must be nonnegative"));
        }
        if !(self.fifo.kp > 0.0) {
            return Err(invalid("kp", "must be positive"));
        }
        if !(self.fifo.slack_weight >= 1e4) {
            return Err(invalid("slack_weight", "must be at least 1e4"));
        }
        if self.histogram_bins == 0 {
            return Err(invalid("histogram_bins", "must be positive"));
        }
        Ok(())
    }

    /// Nominal setup: 10 + 10 vehicles, 30 degree merge, 200 m / 350 m
    /// control zone, 0.1 s sampling, beta 0.1, lambda 0.25, cascade 0.3 / 2.0.
    pub fn nominal() -> Self {
        Self {
            runs: 500,
            base_seed: 1,
            parallelism: 0,
            histogram_bins: 30,
            homogeneous_mass_lbs: None,
            scenario: ScenarioConfig {
                highway_vehicles: 10,
                merge_vehicles: 10,
                rate_bounds_vph: [1100.0, 1200.0],
                speed_bounds_mps: [20.0, 25.0],
                mass_bounds_lbs: [M_BASE_LBS, 4.0 * M_BASE_LBS],
                merge_angle_deg: 30.0,
                cz_before_m: 200.0,
                cz_after_m: 350.0,
                ts: 0.1,
                horizon_max: 120.0,
                catalog: CatalogConfig {
                    light: EpaCatalogEntry {
                        name: "light (subcompact hatchback)".into(),
                        mass_lbs: M_BASE_LBS,
                        a_lbf: 24.8,
                        b_lbf_per_mph: 0.183,
                        c_lbf_per_mph2: 0.0166,
                    },
                    heavy: EpaCatalogEntry {
                        name: "heavy (full-size electric pickup)".into(),
                        mass_lbs: 4.0 * M_BASE_LBS,
                        a_lbf: 71.0,
                        b_lbf_per_mph: 0.60,
                        c_lbf_per_mph2: 0.0420,
                    },
                },
            },
            barrier: BarrierParams {
                beta: 0.1,
                lambda: 0.25,
                lambda1: 0.3,
                lambda2: 2.0,
            },
            accel_limits: AccelLimits { a_min: -6.0, a_max: 5.0 },
            ccbf: CcbfParams {
                alpha: None,
                v_floor: 0.0,
            },
            fifo: FifoParams {
                kp: 0.5,
                slack_weight: 1e6,
            },
        }
    }
}
