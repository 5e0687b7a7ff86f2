//! Set-based attitude controller for the pivot.
//!
//! The pivot state is `(lambda, omega)` with `lambda' = S lambda omega` and
//! `omega' = u2`. Instead of tracking `lambda* = a*/|a*|` exactly, the law
//! drives `a = lambda u1` into the ball `a* + r B`, expressed through the 1D
//! MRP `eta` of the angle from `lambda*` to `lambda`.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{eta_from_theta, eta_star_jet, rot90, signed_angle, Mrp, UnitVector2};
use crate::jet::{dot2, norm2, rot90 as jrot90, sign, Dual, Jet3};
use crate::shaping::{ramp_ratio, ramp_unchecked, zeta, zeta_jet, StepParams};

/// Largest MRP magnitude carried by the simulator.
pub const ETA_CAP: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Radius of the target ball.
    pub r: f64,
    pub a0: f64,
    pub a1: f64,
    pub rho: f64,
    pub delta_a: f64,
    pub delta_eta_dot: f64,
    pub k_a: f64,
    pub k_eta: f64,
    pub p_omega: f64,
    pub k_omega: f64,
}

impl ControllerParams {
    /// Gains of the planar multirotor square example.
    pub fn paper() -> Self {
        Self {
            r: TAU / 10.0,
            a0: 0.02,
            a1: 0.03,
            rho: 0.2,
            delta_a: 0.025,
            delta_eta_dot: 0.01,
            k_a: 5.0,
            k_eta: 5.0,
            p_omega: 5.0,
            k_omega: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r", self.r),
            ("a0", self.a0),
            ("delta_a", self.delta_a),
            ("delta_eta_dot", self.delta_eta_dot),
            ("k_a", self.k_a),
            ("k_eta", self.k_eta),
            ("p_omega", self.p_omega),
            ("k_omega", self.k_omega),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.a1 > self.a0 && self.a1.is_finite()) {
            return Err(invalid("a1", format!("must exceed a0 = {}, got {}", self.a0, self.a1)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid("rho", format!("must lie in (0, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// Below this `|a*|` the law is independent of `eta` and `eta` is reset.
    pub fn switching_threshold(&self) -> f64 {
        (self.r / TAU).min(self.a0)
    }

    /// Guaranteed decay rate of `V`.
    pub fn decay_rate(&self) -> f64 {
        self.k_a.min(self.k_omega)
    }

    fn ramp_step(&self) -> StepParams {
        StepParams::between(0.0, self.delta_a)
    }

    fn gate_step(&self) -> StepParams {
        StepParams::between(self.rho, 1.0)
    }

    fn thrust_step(&self) -> StepParams {
        StepParams::between(self.a0, self.a1)
    }

    fn retention_step(&self) -> StepParams {
        StepParams::between(0.0, self.delta_eta_dot)
    }
}

/// `a*` and its first two time derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActuationTarget {
    pub a_star: Vector2<f64>,
    pub a_star_dot: Vector2<f64>,
    pub a_star_ddot: Vector2<f64>,
}

impl ActuationTarget {
    pub fn stationary(a_star: Vector2<f64>) -> Self {
        Self {
            a_star,
            a_star_dot: Vector2::zeros(),
            a_star_ddot: Vector2::zeros(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.a_star.norm()
    }

    /// `a*/|a*|`, undefined at zero.
    pub fn direction(&self) -> Option<UnitVector2> {
        UnitVector2::new(self.a_star).ok()
    }

    /// `(S lambda*)' a*' / |a*|`, the turn rate of `lambda*`.
    pub fn direction_rate(&self) -> Option<f64> {
        let a = self.norm();
        if a == 0.0 {
            return None;
        }
        Some(rot90(&self.a_star).dot(&self.a_star_dot) / (a * a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PivotState {
    pub lambda: UnitVector2,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerState {
    pub pivot: PivotState,
    /// `None` while the MRP is undefined (`a* = 0`).
    pub eta: Option<Mrp>,
}

impl InnerState {
    /// State with `eta` initialized on the branch closest to the origin.
    pub fn initialized(pivot: PivotState, target: &ActuationTarget) -> Self {
        let eta = target
            .direction()
            .map(|ls| eta_from_theta(signed_angle(&pivot.lambda, &ls)));
        Self { pivot, eta }
    }
}

/// Commanded thrust magnitude.
pub fn u1(target: &ActuationTarget) -> f64 {
    target.norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LyapunovValues {
    pub v_a: f64,
    pub v_omega: f64,
    pub v: f64,
}

/// Everything the closed loop needs from one controller evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerEval {
    pub u1: f64,
    pub u2: f64,
    pub omega_star: f64,
    pub omega_star_dot: f64,
    /// `None` when `|a*| = 0` or `eta` is undefined.
    pub eta_dot: Option<f64>,
    pub eta_star: Mrp,
    pub v_a: f64,
    pub omega_a: f64,
    /// `zeta(|a*|(|eta| - eta*); 0, delta_a)`.
    pub zeta_a: f64,
    /// `zeta(|eta|/eta*; rho, 1)`.
    pub gate: f64,
}

impl InnerEval {
    pub fn lyapunov(&self, omega: f64, params: &ControllerParams) -> LyapunovValues {
        let dw = omega - self.omega_star;
        let v_omega = 0.5 * params.p_omega * dw * dw;
        LyapunovValues {
            v_a: self.v_a,
            v_omega,
            v: self.v_a + v_omega,
        }
    }
}

/// `a*` norm and direction quantities as jets in time.
struct TargetJets {
    a: Dual,
    lam_star: [Dual; 2],
    a_dot: [Dual; 2],
    psi_dot: Dual,
    /// `eta*` and `d eta*/dt`, each with one more time derivative.
    eta_star: Option<(Dual, Dual)>,
}

impl TargetJets {
    fn new(target: &ActuationTarget, params: &ControllerParams) -> Option<Self> {
        if target.norm() == 0.0 {
            return None;
        }
        let (p, d, dd) = (target.a_star, target.a_star_dot, target.a_star_ddot);
        let a_vec = [Dual::from_coeffs([p.x, d.x]), Dual::from_coeffs([p.y, d.y])];
        let a_dot = [Dual::from_coeffs([d.x, dd.x]), Dual::from_coeffs([d.y, dd.y])];
        let a = norm2(&a_vec);
        let lam_star = [a_vec[0] / a, a_vec[1] / a];
        let psi_dot = dot2(&jrot90(&lam_star), &a_dot) / a;
        let a3 = [
            Jet3::from_coeffs([p.x, d.x, 0.5 * dd.x]),
            Jet3::from_coeffs([p.y, d.y, 0.5 * dd.y]),
        ];
        let eta_star = eta_star_jet(norm2(&a3), params.r)
            .map(|e| (e.truncate::<2>(), e.differentiate::<2>()));
        Some(Self {
            a,
            lam_star,
            a_dot,
            psi_dot,
            eta_star,
        })
    }
}

/// `omega*` as a jet in time, given `eta` and its rate.
fn omega_star_jet(jets: &TargetJets, eta: Dual, params: &ControllerParams) -> Dual {
    let sg = sign(eta.value());
    let rho4 = 4.0 / (1.0 + eta.square());
    let damping = -params.k_eta * rho4 * eta * zeta_jet(jets.a, &params.thrust_step());
    let Some((es, es_dot)) = jets.eta_star else {
        return damping;
    };
    let abs_eta = eta * sg;
    let gate = zeta_jet(abs_eta / es, &params.gate_step());
    if gate.value() == 0.0 && gate.coeff(1) == 0.0 {
        return damping;
    }
    let a = jets.a;
    let excess = abs_eta - es;
    let along = dot2(&jets.lam_star, &jets.a_dot);
    let feedforward = -(rho4 * sg) * excess * along / a + jets.psi_dot;
    let retention = rho4 * sg * es_dot * (1.0 - zeta_jet(es_dot, &params.retention_step()));
    let s = a * excess;
    let omega_a = ramp_ratio(s, &params.ramp_step()).expect("ordered ramp") * params.k_a;
    let convergence = -(rho4 * sg) * omega_a / a;
    gate * (feedforward + retention + convergence) + damping
}

/// Full controller evaluation.
pub fn evaluate(state: &InnerState, target: &ActuationTarget, params: &ControllerParams) -> InnerEval {
    let omega = state.pivot.omega;
    let a = target.norm();
    let jets = TargetJets::new(target, params);
    let eta_star = match jets.as_ref().and_then(|j| j.eta_star) {
        Some((e, _)) => Mrp::Finite(e.value()),
        None => Mrp::Infinity,
    };

    let eta = match state.eta {
        Some(Mrp::Finite(v)) => Some(v),
        // Every factor multiplying eta is O(1/eta) or smaller at infinity.
        Some(Mrp::Infinity) => return limit_at_infinity(omega, a, eta_star, params),
        None => None,
    };

    let Some(jets) = jets else {
        // a* = 0: eta*, the gate and the thrust step all vanish identically.
        let u2 = -0.5 * params.k_omega * omega;
        return InnerEval {
            u1: 0.0,
            u2,
            omega_star: 0.0,
            omega_star_dot: 0.0,
            eta_dot: None,
            eta_star,
            v_a: 0.0,
            omega_a: 0.0,
            zeta_a: 0.0,
            gate: 0.0,
        };
    };

    // An undefined eta only occurs where the law does not depend on it.
    let eta_v = eta.unwrap_or(0.0);
    let psi_dot = jets.psi_dot.value();
    let eta_dot = 0.25 * (1.0 + eta_v * eta_v) * (omega - psi_dot);
    let w = omega_star_jet(&jets, Dual::from_coeffs([eta_v, eta_dot]), params);

    let sg = sign(eta_v);
    let (v_a, omega_a, zeta_a, gate) = match eta_star {
        Mrp::Finite(es) => {
            let s = a * (eta_v.abs() - es);
            let ramp = params.ramp_step();
            let v_a = ramp_unchecked(s, &ramp);
            let omega_a = if v_a > 0.0 {
                params.k_a * ramp_ratio(Dual::constant(s), &ramp).expect("ordered ramp").value()
            } else {
                0.0
            };
            let gate = zeta(eta_v.abs() / es, &params.gate_step());
            (v_a, omega_a, zeta(s, &ramp), gate)
        }
        Mrp::Infinity => (0.0, 0.0, 0.0, 0.0),
    };

    let u2 = w.derivative(1)
        - 0.5 * params.k_omega * (omega - w.value())
        - sg * 0.25 * (1.0 + eta_v * eta_v) * a * zeta_a / params.p_omega;

    InnerEval {
        u1: a,
        u2,
        omega_star: w.value(),
        omega_star_dot: w.derivative(1),
        eta_dot: eta.map(|_| eta_dot),
        eta_star,
        v_a,
        omega_a,
        zeta_a,
        gate,
    }
}

fn limit_at_infinity(omega: f64, a: f64, eta_star: Mrp, params: &ControllerParams) -> InnerEval {
    let excess_positive = a > 0.0 && !eta_star.is_infinite();
    let (v_a, zeta_a) = if excess_positive { (f64::INFINITY, 1.0) } else { (0.0, 0.0) };
    let u2 = if excess_positive {
        f64::NEG_INFINITY
    } else {
        -0.5 * params.k_omega * omega
    };
    InnerEval {
        u1: a,
        u2,
        omega_star: 0.0,
        omega_star_dot: 0.0,
        eta_dot: None,
        eta_star,
        v_a,
        omega_a: if excess_positive { f64::INFINITY } else { 0.0 },
        zeta_a,
        gate: if excess_positive { 1.0 } else { 0.0 },
    }
}

/// `Z(|a*|(|eta| - eta*); 0, delta_a)`.
pub fn v_a(target: &ActuationTarget, eta: Option<Mrp>, params: &ControllerParams) -> f64 {
    let a = target.norm();
    let Mrp::Finite(es) = eta_star_of(target, params) else {
        return 0.0;
    };
    match eta {
        Some(Mrp::Finite(v)) => ramp_unchecked(a * (v.abs() - es), &params.ramp_step()),
        Some(Mrp::Infinity) if a > 0.0 => f64::INFINITY,
        _ => 0.0,
    }
}

/// `k_a Z(s)/zeta(s)` for `V_a > 0`, zero otherwise.
pub fn omega_a(target: &ActuationTarget, eta: Option<Mrp>, params: &ControllerParams) -> f64 {
    let state = InnerState {
        pivot: PivotState {
            lambda: UnitVector2::e1(),
            omega: 0.0,
        },
        eta,
    };
    evaluate(&state, target, params).omega_a
}

fn eta_star_of(target: &ActuationTarget, params: &ControllerParams) -> Mrp {
    crate::geometry::eta_star(target.norm(), params.r)
}

/// Target angular rate; it does not depend on `omega`.
pub fn omega_star(target: &ActuationTarget, eta: Option<Mrp>, params: &ControllerParams) -> f64 {
    let state = InnerState {
        pivot: PivotState {
            lambda: UnitVector2::e1(),
            omega: 0.0,
        },
        eta,
    };
    evaluate(&state, target, params).omega_star
}

/// Angular acceleration command.
pub fn u2(state: &InnerState, target: &ActuationTarget, params: &ControllerParams) -> f64 {
    evaluate(state, target, params).u2
}

/// MRP kinematics `(1 + eta^2)/4 (omega - psi-dot*)`.
pub fn eta_dot(state: &InnerState, target: &ActuationTarget) -> Result<f64> {
    let psi_dot = target
        .direction_rate()
        .ok_or_else(|| Error::UndefinedState("eta-dot needs a nonzero a*".into()))?;
    match state.eta {
        Some(Mrp::Finite(v)) => Ok(0.25 * (1.0 + v * v) * (state.pivot.omega - psi_dot)),
        Some(Mrp::Infinity) => Err(Error::UndefinedState("eta-dot at infinity".into())),
        None => Err(Error::UndefinedState("eta is undefined".into())),
    }
}

/// `d eta*/dt`, or `None` while `eta*` is infinite.
pub fn eta_star_rate(target: &ActuationTarget, params: &ControllerParams) -> Option<f64> {
    TargetJets::new(target, params)
        .and_then(|j| j.eta_star)
        .map(|(_, rate)| rate.value())
}

/// MRP reset rule, applied at step boundaries.
pub fn apply_switching(state: &InnerState, target: &ActuationTarget, params: &ControllerParams) -> InnerState {
    let a = target.norm();
    if a >= params.switching_threshold() {
        return *state;
    }
    let eta = target
        .direction()
        .filter(|_| a > 0.0)
        .map(|ls| eta_from_theta(signed_angle(&state.pivot.lambda, &ls)));
    InnerState { eta, ..*state }
}

pub fn lyapunov_v(state: &InnerState, target: &ActuationTarget, params: &ControllerParams) -> LyapunovValues {
    evaluate(state, target, params).lyapunov(state.pivot.omega, params)
}

/// `|gate * zeta_a - zeta_a|`; zero when the gate never cuts into the ramp.
pub fn gating_residual(target: &ActuationTarget, eta: Option<Mrp>, params: &ControllerParams) -> f64 {
    let state = InnerState {
        pivot: PivotState {
            lambda: UnitVector2::e1(),
            omega: 0.0,
        },
        eta,
    };
    let ev = evaluate(&state, target, params);
    (ev.gate * ev.zeta_a - ev.zeta_a).abs()
}
