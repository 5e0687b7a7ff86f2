//! Fixed-step closed-loop simulation of the outer loop and the pivot.
//!
//! The integrated vector is `[x, lambda, omega, eta]`. Controls are
//! re-evaluated at every Runge-Kutta stage unless zero-order hold is
//! requested. After each step `lambda` is renormalized, `eta` is re-anchored
//! to the measured rotation on its current sheet, capped, and the MRP reset
//! rule is applied.

mod log;
mod naive;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{ball_distance, rot90, signed_angle, Mrp, TargetBall, UnitVector2};
use crate::inner::{self, ActuationTarget, ControllerParams, InnerEval, InnerState, PivotState, ETA_CAP};
use crate::outer::{BaselineGains, ChainOutput, TrajectoryKind, VehicleModel};

pub use log::{Diagnostics, Outcome, SimLog, StepRecord, SwitchEvent, CSV_VERSION};
pub use naive::{naive_law, NaiveEval, SINGULAR_NORM};

/// Below this `|a*|` the MRP rate is not evaluated inside a stage.
const ETA_RATE_MIN_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The set-based controller.
    Put,
    /// Exact `lambda*` tracking with ungated division by `|a*|`.
    #[serde(alias = "naive_baseline")]
    Naive,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Put => "put",
            Mode::Naive => "naive",
        }
    }
}

/// Initial pivot and outer state. Missing fields fall back to the
/// convention `x = x*(0)`, `lambda = e2`, `omega = 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub x: Option<Vec<f64>>,
    /// Pivot angle from `e1`, counter-clockwise.
    pub lambda_angle: Option<f64>,
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step_size: f64,
    pub duration: f64,
    pub controller: ControllerParams,
    pub gains: BaselineGains,
    pub trajectory: TrajectoryKind,
    pub model: String,
    pub mode: Mode,
    pub zero_order_hold: bool,
    pub initial: InitialState,
}

impl SimConfig {
    /// The 30 s multirotor square run.
    pub fn paper_square() -> Self {
        Self {
            step_size: 1e-3,
            duration: 30.0,
            controller: ControllerParams::paper(),
            gains: BaselineGains::paper(),
            trajectory: TrajectoryKind::Square,
            model: "multirotor".into(),
            mode: Mode::Put,
            zero_order_hold: false,
            initial: InitialState::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid("step_size", format!("must be positive, got {}", self.step_size)));
        }
        if !(self.duration >= self.step_size && self.duration.is_finite()) {
            return Err(invalid("duration", format!("must be at least step_size, got {}", self.duration)));
        }
        let steps = self.duration / self.step_size;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(invalid("duration", "must be an integer multiple of step_size"));
        }
        self.controller.validate()?;
        self.gains.validate()?;
        let init = &self.initial;
        if !init.omega.is_finite() {
            return Err(invalid("initial.omega", "must be finite"));
        }
        if init.lambda_angle.is_some_and(|a| !a.is_finite()) {
            return Err(invalid("initial.lambda_angle", "must be finite"));
        }
        if init.x.as_ref().is_some_and(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(invalid("initial.x", "must be finite"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.step_size).round() as usize
    }
}

/// Full hybrid state at a step boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: Vec<f64>,
    pub pivot: PivotState,
    pub eta: Option<Mrp>,
}

impl SimState {
    pub fn inner(&self) -> InnerState {
        InnerState {
            pivot: self.pivot,
            eta: self.eta,
        }
    }
}

/// Why a stage could not be evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum StageFailure {
    Singularity { t: f64, a_star_norm: f64 },
    NonFinite { t: f64, what: String },
}

/// Controls frozen over one step in zero-order-hold mode.
#[derive(Clone, Copy, Debug)]
struct Held {
    target: ActuationTarget,
    u2: f64,
}

/// Controller output at one state, in either mode.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub chain: ChainOutput,
    pub put: Option<InnerEval>,
    pub naive: Option<NaiveEval>,
}

impl Snapshot {
    pub fn u2(&self) -> f64 {
        match (&self.put, &self.naive) {
            (Some(p), _) => p.u2,
            (None, Some(n)) => n.u2,
            (None, None) => f64::NAN,
        }
    }
}

pub struct Simulator {
    config: SimConfig,
    model: VehicleModel,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let model = VehicleModel::by_name(&config.model)?;
        Self::with_model(config, model)
    }

    /// Simulate a custom registered model.
    pub fn with_model(config: SimConfig, model: VehicleModel) -> Result<Self> {
        config.validate()?;
        if let Some(x) = &config.initial.x {
            if x.len() != model.dim() {
                return Err(invalid(
                    "initial.x",
                    format!("has {} entries, model `{}` needs {}", x.len(), model.name(), model.dim()),
                ));
            }
        }
        Ok(Self { config, model })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn model(&self) -> &VehicleModel {
        &self.model
    }

    pub fn initial_state(&self) -> SimState {
        let traj = self.config.trajectory.sample(0.0);
        let x = self
            .config
            .initial
            .x
            .clone()
            .unwrap_or_else(|| self.model.reference_state(&traj));
        let lambda = self
            .config
            .initial
            .lambda_angle
            .map_or_else(UnitVector2::e2, UnitVector2::from_angle);
        let pivot = PivotState {
            lambda,
            omega: self.config.initial.omega,
        };
        let chain = self.model.actuation_chain(0.0, &x, &traj, &self.config.gains, &pivot);
        SimState {
            t: 0.0,
            eta: InnerState::initialized(pivot, &chain.target).eta,
            x,
            pivot,
        }
    }

    /// Chain and controller at a boundary state.
    pub fn evaluate(&self, s: &SimState) -> Snapshot {
        let traj = self.config.trajectory.sample(s.t);
        let chain = self.model.actuation_chain(s.t, &s.x, &traj, &self.config.gains, &s.pivot);
        match self.config.mode {
            Mode::Put => {
                let ev = inner::evaluate(&s.inner(), &chain.target, &self.config.controller);
                Snapshot {
                    chain,
                    put: Some(ev),
                    naive: None,
                }
            }
            Mode::Naive => {
                let nv = naive_law(&s.pivot, &chain.target, &self.config.controller);
                Snapshot {
                    chain,
                    put: None,
                    naive: nv,
                }
            }
        }
    }

    fn unpack(&self, y: &[f64]) -> (Vec<f64>, Vector2<f64>, f64, f64) {
        let n = self.model.dim();
        (y[..n].to_vec(), Vector2::new(y[n], y[n + 1]), y[n + 2], y[n + 3])
    }

    fn stage(&self, t: f64, y: &[f64], eta_defined: bool, held: Option<&Held>) -> std::result::Result<Vec<f64>, StageFailure> {
        let (x, lam_raw, omega, eta) = self.unpack(y);
        let lambda = UnitVector2::new(lam_raw).map_err(|_| StageFailure::NonFinite {
            t,
            what: "pivot direction".into(),
        })?;
        let pivot = PivotState { lambda, omega };
        let params = &self.config.controller;

        let (x_dot, u2, eta_dot) = match (self.config.mode, held) {
            (Mode::Put, Some(h)) => {
                let a = lambda.as_vector() * h.target.norm();
                let x_dot = self.model.dynamics(t, &x, &a);
                let eta_dot = put_eta_rate(&h.target, omega, eta, eta_defined);
                (x_dot, h.u2, eta_dot)
            }
            (Mode::Put, None) => {
                let traj = self.config.trajectory.sample(t);
                let chain = self.model.actuation_chain(t, &x, &traj, &self.config.gains, &pivot);
                let st = InnerState {
                    pivot,
                    eta: eta_defined.then_some(Mrp::Finite(eta)),
                };
                let ev = inner::evaluate(&st, &chain.target, params);
                let eta_dot = put_eta_rate(&chain.target, omega, eta, eta_defined);
                (chain.x_dot, ev.u2, eta_dot)
            }
            (Mode::Naive, held) => {
                let traj = self.config.trajectory.sample(t);
                let chain = self.model.actuation_chain(t, &x, &traj, &self.config.gains, &pivot);
                let target = held.map(|h| h.target).unwrap_or(chain.target);
                let a_norm = target.norm();
                let u2 = match held {
                    Some(h) => h.u2,
                    None => naive_law(&pivot, &target, params)
                        .ok_or(StageFailure::Singularity { t, a_star_norm: a_norm })?
                        .u2,
                };
                if a_norm < SINGULAR_NORM {
                    return Err(StageFailure::Singularity { t, a_star_norm: a_norm });
                }
                let x_dot = if held.is_some() {
                    self.model.dynamics(t, &x, &(lambda.as_vector() * a_norm))
                } else {
                    chain.x_dot
                };
                (x_dot, u2, 0.0)
            }
        };

        let lam_dot = rot90(&lam_raw) * omega;
        let mut d = x_dot;
        d.extend_from_slice(&[lam_dot.x, lam_dot.y, u2, eta_dot]);
        if let Some(i) = d.iter().position(|v| !v.is_finite()) {
            let n = self.model.dim();
            let what = match i {
                i if i < n => format!("x'[{i}]"),
                i if i < n + 2 => "lambda'".into(),
                i if i == n + 2 => "u2".into(),
                _ => "eta'".into(),
            };
            return Err(StageFailure::NonFinite { t, what });
        }
        Ok(d)
    }

    fn held_controls(&self, s: &SimState) -> std::result::Result<Held, StageFailure> {
        let snap = self.evaluate(s);
        let u2 = snap.u2();
        if !u2.is_finite() {
            return Err(match self.config.mode {
                Mode::Naive => StageFailure::Singularity {
                    t: s.t,
                    a_star_norm: snap.chain.target.norm(),
                },
                Mode::Put => StageFailure::NonFinite {
                    t: s.t,
                    what: "u2".into(),
                },
            });
        }
        Ok(Held {
            target: snap.chain.target,
            u2,
        })
    }

    /// One classical RK4 step of size `h` (negative `h` integrates
    /// backwards). Returns the new state and `| |lambda| - 1 |` before
    /// renormalization. No switching or capping is applied.
    pub fn rk4_step(&self, s: &SimState, h: f64) -> std::result::Result<(SimState, f64), StageFailure> {
        let eta_defined = matches!(s.eta, Some(Mrp::Finite(_)));
        let eta0 = match s.eta {
            Some(Mrp::Finite(v)) => v,
            _ => 0.0,
        };
        let mut y = s.x.clone();
        y.extend_from_slice(&[s.pivot.lambda.x(), s.pivot.lambda.y(), s.pivot.omega, eta0]);
        let held = if self.config.zero_order_hold {
            Some(self.held_controls(s)?)
        } else {
            None
        };
        let held = held.as_ref();
        let axpy = |a: &[f64], k: &[f64], c: f64| -> Vec<f64> { a.iter().zip(k).map(|(u, v)| u + c * v).collect() };

        let k1 = self.stage(s.t, &y, eta_defined, held)?;
        let k2 = self.stage(s.t + 0.5 * h, &axpy(&y, &k1, 0.5 * h), eta_defined, held)?;
        let k3 = self.stage(s.t + 0.5 * h, &axpy(&y, &k2, 0.5 * h), eta_defined, held)?;
        let k4 = self.stage(s.t + h, &axpy(&y, &k3, h), eta_defined, held)?;
        let y1: Vec<f64> = (0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();

        let (x, lam, omega, eta) = self.unpack(&y1);
        let drift = (lam.norm() - 1.0).abs();
        let lambda = UnitVector2::new(lam).map_err(|_| StageFailure::NonFinite {
            t: s.t + h,
            what: "pivot direction".into(),
        })?;
        Ok((
            SimState {
                t: s.t + h,
                x,
                pivot: PivotState { lambda, omega },
                eta: if eta_defined { Some(Mrp::Finite(eta)) } else { s.eta },
            },
            drift,
        ))
    }

    /// Re-anchors `eta` to the measured rotation outside the switching zone
    /// and applies the cap.
    /// Returns whether the cap was hit.
    fn settle(&self, s: &mut SimState) -> bool {
        let Some(Mrp::Finite(v)) = s.eta else { return false };
        let mut v = v;
        if self.config.mode == Mode::Put {
            let traj = self.config.trajectory.sample(s.t);
            let target = self.model.actuation_chain(s.t, &s.x, &traj, &self.config.gains, &s.pivot).target;
            // inside the zone the reset rule owns eta
            if target.norm() >= self.config.controller.switching_threshold() {
                if let Some(w) = reanchor(v, &s.pivot, &target) {
                    v = w;
                }
            }
        }
        let capped = v.abs() > ETA_CAP;
        if capped {
            v = ETA_CAP.copysign(v);
        }
        s.eta = Some(Mrp::Finite(v));
        capped
    }

    /// `steps` hybrid steps of size `h` from `s`, with renormalization, the
    /// MRP cap and switching, but no logging.
    pub fn advance(&self, s: &SimState, h: f64, steps: usize) -> std::result::Result<SimState, StageFailure> {
        let t0 = s.t;
        let mut s = s.clone();
        for k in 0..steps {
            s = self.rk4_step(&s, h)?.0;
            s.t = t0 + (k + 1) as f64 * h;
            self.settle(&mut s);
            if self.config.mode == Mode::Put {
                let traj = self.config.trajectory.sample(s.t);
                let target = self.model.actuation_chain(s.t, &s.x, &traj, &self.config.gains, &s.pivot).target;
                s.eta = inner::apply_switching(&s.inner(), &target, &self.config.controller).eta;
            }
        }
        Ok(s)
    }

    /// Runs the configured simulation to completion or to the first failure.
    pub fn run(&self) -> SimLog {
        let h = self.config.step_size;
        let steps = self.config.steps();
        let mut log = SimLog::new(self.config.clone(), self.model.dim());
        let mut state = self.initial_state();
        let mut in_zone = false;
        let mut zone_steps = 0usize;
        let mut drift = 0.0;

        for k in 0..=steps {
            // boundary bookkeeping: switching and the log record
            let snap_before = self.evaluate(&state);
            let a_norm = snap_before.chain.target.norm();
            let zone = self.config.mode == Mode::Put && a_norm < self.config.controller.switching_threshold();
            let mut switched = false;
            let snap = if zone {
                let next = inner::apply_switching(&state.inner(), &snap_before.chain.target, &self.config.controller);
                if next.eta != state.eta {
                    let after = Snapshot {
                        put: Some(inner::evaluate(&next, &snap_before.chain.target, &self.config.controller)),
                        ..snap_before.clone()
                    };
                    log.events.push(SwitchEvent {
                        t: state.t,
                        step: k,
                        a_star_norm: a_norm,
                        eta_before: state.eta.and_then(|e| e.finite()),
                        eta_after: next.eta.and_then(|e| e.finite()),
                        u2_before: snap_before.u2(),
                        u2_after: after.u2(),
                    });
                    state.eta = next.eta;
                    switched = true;
                    after
                } else {
                    snap_before
                }
            } else {
                snap_before
            };
            if zone && !in_zone {
                log.diagnostics.zone_entries += 1;
            }
            in_zone = zone;
            zone_steps += zone as usize;

            let singular = self.config.mode == Mode::Naive && snap.naive.is_none();
            log.push(StepRecord::from_snapshot(&state, &snap, &self.config.controller, switched, zone, singular, drift));
            if singular {
                log.outcome = Outcome::Singularity {
                    t: state.t,
                    step: k,
                    a_star_norm: a_norm,
                };
                break;
            }
            if k == steps {
                break;
            }

            let (next, d) = match self.rk4_step(&state, h) {
                Ok(v) => v,
                Err(f) => {
                    log.outcome = Outcome::from_failure(f, k);
                    break;
                }
            };
            // the naive law also fails where a* crosses the origin between samples
            if self.config.mode == Mode::Naive {
                let traj = self.config.trajectory.sample(next.t);
                let a_next = self.model.actuation_chain(next.t, &next.x, &traj, &self.config.gains, &next.pivot).target.a_star;
                let a_prev = snap.chain.target.a_star;
                let dist = segment_origin_distance(&a_prev, &a_next);
                if dist < SINGULAR_NORM {
                    log.outcome = Outcome::Singularity {
                        t: next.t,
                        step: k + 1,
                        a_star_norm: dist,
                    };
                    if let Some(last) = log.records.last_mut() {
                        last.singular = true;
                    }
                    break;
                }
            }
            drift = d;
            log.diagnostics.max_lambda_drift = log.diagnostics.max_lambda_drift.max(d);
            state = next;
            state.t = (k + 1) as f64 * h;
            if self.settle(&mut state) {
                log.diagnostics.eta_cap_hits += 1;
            }
        }
        log.diagnostics.zone_time = zone_steps as f64 * h;
        log.diagnostics.switch_events = log.events.len();
        log.diagnostics.events_per_second = log.events.len() as f64 / self.config.duration;
        log
    }
}

/// MRP of the rotation from `lambda*` to `lambda` on the covering sheet
/// nearest to `eta`. The sheet is the only part of `eta` not fixed by the
/// measured attitude.
fn reanchor(eta: f64, pivot: &PivotState, target: &ActuationTarget) -> Option<f64> {
    if target.norm() <= ETA_RATE_MIN_NORM {
        return None;
    }
    let ls = target.direction()?;
    let near = (0.25 * signed_angle(&pivot.lambda, &ls)).tan();
    let far = if near == 0.0 {
        ETA_CAP.copysign(eta)
    } else {
        (-1.0 / near).clamp(-ETA_CAP, ETA_CAP)
    };
    let lift = 4.0 * eta.atan();
    if (4.0 * near.atan() - lift).abs() <= (4.0 * far.atan() - lift).abs() {
        Some(near)
    } else {
        Some(far)
    }
}

fn put_eta_rate(target: &ActuationTarget, omega: f64, eta: f64, defined: bool) -> f64 {
    if !defined || target.norm() <= ETA_RATE_MIN_NORM {
        return 0.0;
    }
    let rate = target
        .direction_rate()
        .map(|psi| 0.25 * (1.0 + eta * eta) * (omega - psi))
        .unwrap_or(0.0);
    if rate.is_finite() {
        rate
    } else {
        0.0
    }
}

/// Distance from the origin to the segment `[a, b]`.
pub fn segment_origin_distance(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return a.norm();
    }
    let s = (-a.dot(&d) / len2).clamp(0.0, 1.0);
    (a + d * s).norm()
}

/// Set distance of the applied actuation to the target ball.
pub fn set_distance(applied: &Vector2<f64>, target: &ActuationTarget, r: f64) -> f64 {
    match TargetBall::new(target.a_star, r) {
        Ok(ball) => ball_distance(applied, &ball),
        Err(_) => f64::NAN,
    }
}

/// Simulates with the given config.
pub fn run(config: &SimConfig) -> Result<SimLog> {
    Ok(Simulator::new(config.clone())?.run())
}
