//! Baseline that tracks `lambda* = a*/|a*|` exactly. It divides by `|a*|`
//! with no gating and is undefined wherever the demanded actuation vanishes.

use serde::Serialize;

use crate::geometry::signed_angle;
use crate::inner::{ActuationTarget, ControllerParams, PivotState};
use crate::jet::{dot2, norm2, rot90 as jrot90, Dual};

/// `|a*|` below which the naive law is declared singular.
pub const SINGULAR_NORM: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NaiveEval {
    pub u2: f64,
    /// Desired pivot rate `psi' - k_eta theta`.
    pub omega_d: f64,
    pub theta: f64,
    pub v: f64,
}

/// `u2 = omega_d' - k_omega/2 (omega - omega_d) - theta/p_omega`, or `None`
/// when `|a*| < SINGULAR_NORM`.
pub fn naive_law(pivot: &PivotState, target: &ActuationTarget, params: &ControllerParams) -> Option<NaiveEval> {
    if target.norm() < SINGULAR_NORM {
        return None;
    }
    let (p, d, dd) = (target.a_star, target.a_star_dot, target.a_star_ddot);
    let a_vec = [Dual::from_coeffs([p.x, d.x]), Dual::from_coeffs([p.y, d.y])];
    let a_dot = [Dual::from_coeffs([d.x, dd.x]), Dual::from_coeffs([d.y, dd.y])];
    let a = norm2(&a_vec);
    let lam_star = [a_vec[0] / a, a_vec[1] / a];
    let psi_dot = dot2(&jrot90(&lam_star), &a_dot) / a;

    let omega = pivot.omega;
    let theta0 = signed_angle(&pivot.lambda, &target.direction()?);
    let theta = Dual::from_coeffs([theta0, omega - psi_dot.value()]);
    let omega_d = psi_dot - theta * params.k_eta;
    let dw = omega - omega_d.value();
    let u2 = omega_d.derivative(1) - 0.5 * params.k_omega * dw - theta0 / params.p_omega;
    Some(NaiveEval {
        u2,
        omega_d: omega_d.value(),
        theta: theta0,
        v: 0.5 * theta0 * theta0 + 0.5 * params.p_omega * dw * dw,
    })
}
