//! Two-road merge layout: path coordinates to plane poses and pairwise
//! relative geometry.
//!
//! The highway runs along the x axis. The merge road approaches the origin
//! from below at `merge_angle_rad`, so a merge-road vehicle at `s < 0` sits at
//! `s * (cos θ, sin θ)`. Both roads coincide for `s >= 0`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Road {
    Highway,
    Merge,
}

impl Road {
    pub const ALL: [Road; 2] = [Road::Highway, Road::Merge];

    pub fn as_str(self) -> &'static str {
        match self {
            Road::Highway => "highway",
            Road::Merge => "merge",
        }
    }
}

impl std::fmt::Display for Road {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Plane vector in metres (or m/s for velocities).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    /// Rotation by `angle` radians.
    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<T: Scalar> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeLayout<T> {
    pub merge_angle_rad: T,
    pub cz_before_m: T,
    pub cz_after_m: T,
}

impl<T: Scalar> MergeLayout<T> {
    pub fn new(merge_angle_rad: T, cz_before_m: T, cz_after_m: T) -> Result<Self> {
        let layout = Self {
            merge_angle_rad,
            cz_before_m,
            cz_after_m,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let half_pi = T::FRAC_PI_2();
        if !(self.merge_angle_rad > T::zero() && self.merge_angle_rad < half_pi) {
            return Err(Error::InvalidParameter {
                name: "merge_angle",
                reason: format!("{} rad is outside (0, pi/2)", self.merge_angle_rad),
            });
        }
        if !(self.cz_before_m > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "cz_before_m",
                reason: "must be positive".into(),
            });
        }
        if !(self.cz_after_m > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "cz_after_m",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Unit direction of travel of the merge road upstream of the merge point.
    pub fn merge_direction(&self) -> Vec2<T> {
        let (s, c) = self.merge_angle_rad.sin_cos();
        Vec2::new(c, s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanePose<T> {
    pub x: T,
    pub y: T,
    heading: Vec2<T>,
}

impl<T: Scalar> PlanePose<T> {
    /// Builds a pose, normalizing `heading` to unit length.
    pub fn new(x: T, y: T, heading: Vec2<T>) -> Self {
        let n = heading.norm();
        Self {
            x,
            y,
            heading: Vec2::new(heading.x / n, heading.y / n),
        }
    }

    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2<T> {
        self.heading
    }
}

/// Maps a signed path coordinate to a plane pose.
pub fn path_to_plane<T: Scalar>(road: Road, s: T, layout: &MergeLayout<T>) -> Result<PlanePose<T>> {
    if !(s >= -layout.cz_before_m && s <= layout.cz_after_m) {
        return Err(Error::OutOfRange {
            what: "path coordinate",
            value: s.as_f64(),
            lo: -layout.cz_before_m.as_f64(),
            hi: layout.cz_after_m.as_f64(),
        });
    }
    Ok(pose_unchecked(road, s, layout))
}

/// Same mapping without the control-zone range check. Vehicles that have just
/// left the zone (one step past `cz_after_m`) are still placed on the x axis.
pub fn pose_unchecked<T: Scalar>(road: Road, s: T, layout: &MergeLayout<T>) -> PlanePose<T> {
    let east = Vec2::new(T::one(), T::zero());
    match road {
        Road::Merge if s < T::zero() => {
            let d = layout.merge_direction();
            PlanePose::new(d.x * s, d.y * s, d)
        }
        _ => PlanePose::new(s, T::zero(), east),
    }
}

/// Minimal kinematic view of a vehicle for geometric purposes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Body<T> {
    pub road: Road,
    pub s: T,
    pub v: T,
    pub radius: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairGeometry<T> {
    /// Centre separation `pose_i - pose_j`.
    pub xi: Vec2<T>,
    pub d_i: Vec2<T>,
    pub d_j: Vec2<T>,
    /// `v_i d_i - v_j d_j`.
    pub v_rel: Vec2<T>,
    pub sum_radii: T,
}

impl<T: Scalar> PairGeometry<T> {
    /// Same pair seen from vehicle `j`.
    pub fn swapped(&self) -> Self {
        Self {
            xi: -self.xi,
            d_i: self.d_j,
            d_j: self.d_i,
            v_rel: -self.v_rel,
            sum_radii: self.sum_radii,
        }
    }
}

pub fn pair_geometry<T: Scalar>(i: &Body<T>, j: &Body<T>, layout: &MergeLayout<T>) -> PairGeometry<T> {
    let pi = pose_unchecked(i.road, i.s, layout);
    let pj = pose_unchecked(j.road, j.s, layout);
    let d_i = pi.heading();
    let d_j = pj.heading();
    PairGeometry {
        xi: pi.position() - pj.position(),
        d_i,
        d_j,
        v_rel: d_i * i.v - d_j * j.v,
        sum_radii: i.radius + j.radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn layout() -> MergeLayout<f64> {
        MergeLayout::new(30f64.to_radians(), 200.0, 350.0).unwrap()
    }

    fn body(road: Road, s: f64, v: f64) -> Body<f64> {
        Body { road, s, v, radius: 2.0 }
    }

    #[test]
    fn highway_is_straight() {
        let p = path_to_plane(Road::Highway, -200.0, &layout()).unwrap();
        assert_eq!((p.x, p.y), (-200.0, 0.0));
        assert_eq!(p.heading(), Vec2::new(1.0, 0.0));
    }

    #[test]
    fn merge_point_continuity() {
        let p = path_to_plane(Road::Merge, 0.0, &layout()).unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert_eq!(p.heading(), Vec2::new(1.0, 0.0));
    }

    #[test]
    fn merge_road_upstream() {
        let p = path_to_plane(Road::Merge, -100.0, &layout()).unwrap();
        assert_abs_diff_eq!(p.x, -86.60254, epsilon = 1e-5);
        assert_abs_diff_eq!(p.y, -50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.heading().x, 0.8660254, epsilon = 1e-7);
        assert_abs_diff_eq!(p.heading().y, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            path_to_plane(Road::Highway, -200.5, &layout()),
            Err(Error::OutOfRange { .. })
        ));
        assert!(path_to_plane(Road::Merge, 350.1, &layout()).is_err());
        assert!(path_to_plane(Road::Merge, f64::NAN, &layout()).is_err());
    }

    #[test]
    fn layout_validation() {
        assert!(MergeLayout::new(0.0, 200.0, 350.0).is_err());
        assert!(MergeLayout::new(std::f64::consts::FRAC_PI_2, 200.0, 350.0).is_err());
        assert!(MergeLayout::new(0.5, -1.0, 350.0).is_err());
        assert!(MergeLayout::new(0.5, 200.0, 0.0).is_err());
    }

    #[test]
    fn same_road_pair() {
        let g = pair_geometry(
            &body(Road::Highway, -50.0, 20.0),
            &body(Road::Highway, -30.0, 20.0),
            &layout(),
        );
        assert_eq!(g.xi, Vec2::new(-20.0, 0.0));
        assert_eq!(g.v_rel, Vec2::new(0.0, 0.0));
        assert_eq!(g.sum_radii, 4.0);
    }

    #[test]
    fn crossing_pair() {
        let g = pair_geometry(
            &body(Road::Highway, -10.0, 20.0),
            &body(Road::Merge, -10.0, 20.0),
            &layout(),
        );
        assert_abs_diff_eq!(g.xi.x, -1.3397460, epsilon = 1e-6);
        assert_abs_diff_eq!(g.xi.y, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.v_rel.x, 2.6794919, epsilon = 1e-6);
        assert_abs_diff_eq!(g.v_rel.y, -10.0, epsilon = 1e-12);
    }

    #[test]
    fn coincident_pair() {
        let b = body(Road::Merge, -40.0, 21.0);
        let g = pair_geometry(&b, &b, &layout());
        assert_eq!(g.xi, Vec2::zero());
    }

    #[test]
    fn works_in_single_precision() {
        let l = MergeLayout::new(30f32.to_radians(), 200.0, 350.0).unwrap();
        let p = path_to_plane(Road::Merge, -100.0f32, &l).unwrap();
        assert!((p.y + 50.0).abs() < 1e-4);
    }

    fn road() -> impl Strategy<Value = Road> {
        prop_oneof![Just(Road::Highway), Just(Road::Merge)]
    }

    proptest! {
        #[test]
        fn heading_is_unit(r in road(), s in -200.0f64..350.0, deg in 1.0f64..89.0) {
            let l = MergeLayout::new(deg.to_radians(), 200.0, 350.0).unwrap();
            let p = path_to_plane(r, s, &l).unwrap();
            prop_assert!((p.heading().norm() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn position_continuous_at_merge_point(r in road(), eps in 1e-9f64..1e-3) {
            let l = layout();
            let a = path_to_plane(r, -eps, &l).unwrap().position();
            let b = path_to_plane(r, eps, &l).unwrap().position();
            prop_assert!((a - b).norm() <= 2.0 * eps + 1e-15);
        }

        #[test]
        fn separation_antisymmetric(
            ri in road(), rj in road(),
            si in -200.0f64..350.0, sj in -200.0f64..350.0,
            vi in 0.0f64..30.0, vj in 0.0f64..30.0,
        ) {
            let l = layout();
            let a = body(ri, si, vi);
            let b = body(rj, sj, vj);
            let gij = pair_geometry(&a, &b, &l);
            let gji = pair_geometry(&b, &a, &l);
            prop_assert_eq!(gij.xi, -gji.xi);
            prop_assert_eq!(gij.v_rel, -gji.v_rel);
            prop_assert_eq!(gij.swapped(), gji);
        }
    }
}
