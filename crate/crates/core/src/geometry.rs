//! Pivot angles, the target ball and 1D MRP coordinates.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::jet::Jet;
use crate::shaping::{zeta, zeta_jet, StepParams};

/// Within this distance of `pi/2`, `theta*/4` is treated as the pole of `tan`.
pub const ETA_STAR_POLE_TOL: f64 = 1e-9;

const THETA_STAR_STEP: StepParams = StepParams::between(2.0, TAU);

/// A direction in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVector2(Vector2<f64>);

impl UnitVector2 {
    /// Normalizes `v`; fails on zero or non-finite input.
    pub fn new(v: Vector2<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(invalid("lambda", format!("cannot normalize {v:?}")));
        }
        Ok(Self(v / n))
    }

    pub fn from_angle(phi: f64) -> Self {
        Self(Vector2::new(phi.cos(), phi.sin()))
    }

    pub fn e1() -> Self {
        Self(Vector2::x())
    }

    pub fn e2() -> Self {
        Self(Vector2::y())
    }

    pub fn as_vector(&self) -> &Vector2<f64> {
        &self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    /// Counter-clockwise rotation by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Vector2::new(c * self.0.x - s * self.0.y, s * self.0.x + c * self.0.y))
    }
}

/// `S v` with `S = e2 e1' - e1 e2'`, a quarter turn counter-clockwise.
#[inline]
pub fn rot90(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// A 1D MRP: a point of `R ∪ {∞}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Mrp {
    Finite(f64),
    Infinity,
}

impl Mrp {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            Mrp::Finite(v) => Some(v),
            Mrp::Infinity => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Mrp::Infinity)
    }

    /// Signed rotation `4 atan(eta)`, in `(-2pi, 2pi)`; infinity gives `2pi`.
    pub fn rotation_angle(&self) -> f64 {
        match *self {
            Mrp::Finite(v) => 4.0 * v.atan(),
            Mrp::Infinity => TAU,
        }
    }
}

/// The closed ball `center + radius * B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetBall {
    center: Vector2<f64>,
    radius: f64,
}

impl TargetBall {
    pub fn new(center: Vector2<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("r", format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &Vector2<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// `atan2(l' S l*, l' l*)` in `(-pi, pi]`; the antipode maps to `+pi`.
pub fn signed_angle(lambda: &UnitVector2, lambda_star: &UnitVector2) -> f64 {
    let l = lambda.as_vector();
    let ls = lambda_star.as_vector();
    let y = l.dot(&rot90(ls));
    let x = l.dot(ls);
    if y == 0.0 && x < 0.0 {
        return PI;
    }
    y.atan2(x)
}

/// Exact half-width of the attitude interval whose thrust lands in the
/// ball, as a function of `sigma = |a*| / r`.
pub fn theta_bar(sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(invalid("sigma", format!("must be nonnegative, got {sigma}")));
    }
    if sigma < 0.5 {
        Ok(f64::INFINITY)
    } else {
        // arccos(1 - 1/(2 sigma^2)) without the cancellation at large sigma
        Ok(2.0 * (0.5 / sigma).asin())
    }
}

/// Smooth underestimate of [`theta_bar`]; equals `2pi` for `sigma <= 1/(2pi)`.
pub fn theta_star(sigma: f64) -> f64 {
    let sigma = sigma.abs();
    if sigma * TAU <= 1.0 {
        return TAU;
    }
    let q = 1.0 / sigma;
    let z = zeta(q, &THETA_STAR_STEP);
    q * (1.0 - z) + TAU * z
}

/// [`theta_star`] as a function of `q = 1/sigma`, on a jet.
pub fn theta_star_of_inverse<const N: usize>(q: Jet<N>) -> Jet<N> {
    if q.value() >= TAU {
        return Jet::constant(TAU);
    }
    let z = zeta_jet(q, &THETA_STAR_STEP);
    q * (1.0 - z) + z * TAU
}

/// `tan(theta*(|a*| / r) / 4)`, or infinity when the whole circle is allowed.
pub fn eta_star(a_star_norm: f64, r: f64) -> Mrp {
    debug_assert!(r > 0.0);
    let quarter = 0.25 * theta_star(a_star_norm / r);
    if quarter >= FRAC_PI_2 - ETA_STAR_POLE_TOL {
        Mrp::Infinity
    } else {
        Mrp::Finite(quarter.tan())
    }
}

/// [`eta_star`] propagated through a jet in `|a*|`; `None` at infinity.
pub fn eta_star_jet<const N: usize>(a_star_norm: Jet<N>, r: f64) -> Option<Jet<N>> {
    let a = a_star_norm.value();
    if a * TAU <= r {
        return None;
    }
    let quarter = theta_star_of_inverse(r / a_star_norm) * 0.25;
    if quarter.value() >= FRAC_PI_2 - ETA_STAR_POLE_TOL {
        None
    } else {
        Some(quarter.tan())
    }
}

/// The branch `tan(theta/4)` in `(-1, 1]`.
pub fn eta_from_theta(theta: f64) -> Mrp {
    Mrp::Finite((0.25 * theta).tan())
}

/// `sh(eta) = -1/eta`, exchanging 0 and infinity.
pub fn shadow(eta: Mrp) -> Mrp {
    match eta {
        Mrp::Infinity => Mrp::Finite(0.0),
        Mrp::Finite(v) if v == 0.0 => Mrp::Infinity,
        Mrp::Finite(v) => Mrp::Finite(-1.0 / v),
    }
}

/// Distance from `a` to the ball.
pub fn ball_distance(a: &Vector2<f64>, ball: &TargetBall) -> f64 {
    ((a - ball.center).norm() - ball.radius).max(0.0)
}

/// Whether thrust `a_norm` rotated by `theta` away from the target direction
/// stays within distance `r` of the target.
pub fn containment_check(a_norm: f64, theta: f64, r: f64) -> bool {
    debug_assert!(a_norm >= 0.0 && r > 0.0);
    match theta_bar(a_norm / r) {
        Ok(bound) => theta.abs() <= bound,
        Err(_) => false,
    }
}
