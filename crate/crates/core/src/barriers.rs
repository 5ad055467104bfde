//! Inflated-disk barrier and the linear constraints derived from it.
//!
//! For a pair with separation `xi`, `h = xi'xi - ((1+beta)(r_i+r_j))^2`.
//! Along straight road segments `xi' = u_i d_i - u_j d_j`, so the first-order
//! condition `h' + lambda h >= 0` is linear in the two scalar speed commands,
//! and the cascaded second-order condition is linear in the ego acceleration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PairGeometry, Vec2};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams<T> {
    /// Relative inflation of the summed radii.
    pub beta: T,
    /// First-order bandwidth, 1/s.
    pub lambda: T,
    /// Second-order cascade bandwidths, 1/s.
    pub lambda1: T,
    pub lambda2: T,
}

impl<T: Scalar> BarrierParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= T::zero()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "must be nonnegative".into(),
            });
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(v > T::zero()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be positive".into(),
                });
            }
        }
        Ok(())
    }

    /// Same bandwidths with the margin removed; used for collision checks.
    pub fn without_margin(&self) -> Self {
        Self {
            beta: T::zero(),
            ..*self
        }
    }
}

/// `coeff_i * u_i + coeff_j * u_j + constant >= 0` for the pair `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintRow<T> {
    pub coeff_i: T,
    pub coeff_j: T,
    pub constant: T,
    pub pair: (usize, usize),
}

impl<T: Scalar> ConstraintRow<T> {
    pub fn eval(&self, u_i: T, u_j: T) -> T {
        self.coeff_i * u_i + self.coeff_j * u_j + self.constant
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            coeff_i: self.coeff_i * k,
            coeff_j: self.coeff_j * k,
            constant: self.constant * k,
            pair: self.pair,
        }
    }
}

pub fn barrier_value<T: Scalar>(xi: Vec2<T>, r_i: T, r_j: T, beta: T) -> T {
    let reach = (T::one() + beta) * (r_i + r_j);
    xi.norm_sq() - reach * reach
}

pub fn pair_barrier<T: Scalar>(pair: &PairGeometry<T>, beta: T) -> T {
    let reach = (T::one() + beta) * pair.sum_radii;
    pair.xi.norm_sq() - reach * reach
}

/// Row in the two speed commands; `pair` is left as `(0, 0)` for the caller
/// to fill in.
pub fn first_order_row<T: Scalar>(pair: &PairGeometry<T>, params: &BarrierParams<T>) -> ConstraintRow<T> {
    let two = T::lit(2.0);
    ConstraintRow {
        coeff_i: two * pair.xi.dot(pair.d_i),
        coeff_j: -two * pair.xi.dot(pair.d_j),
        constant: params.lambda * pair_barrier(pair, params.beta),
        pair: (0, 0),
    }
}

/// Cascaded second-order condition
/// `h'' + (l1 + l2) h' + l1 l2 h >= 0` as `coeff_a * a_i + constant >= 0`,
/// with the other vehicle's acceleration fixed at `a_j_assumed`.
pub fn second_order_constraint<T: Scalar>(
    pair: &PairGeometry<T>,
    a_j_assumed: T,
    params: &BarrierParams<T>,
) -> (T, T) {
    let two = T::lit(2.0);
    let h = pair_barrier(pair, params.beta);
    let h_dot = two * pair.xi.dot(pair.v_rel);
    let coeff_a = two * pair.xi.dot(pair.d_i);
    // h'' without the ego term: 2|v_rel|^2 - 2 xi' d_j a_j
    let h_ddot_rest = two * pair.v_rel.norm_sq() - two * pair.xi.dot(pair.d_j) * a_j_assumed;
    let constant =
        h_ddot_rest + (params.lambda1 + params.lambda2) * h_dot + params.lambda1 * params.lambda2 * h;
    (coeff_a, constant)
}
