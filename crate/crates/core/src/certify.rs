//! Numerical certificates checked along a recorded closed-loop run.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::inner::ControllerParams;
use crate::outer::VehicleModel;
use crate::shaping::{ramp, ramp_inverse, StepParams};
use crate::sim::{Mode, SimLog};

/// Allowed overshoot of `V(t)` over `V(T) e^{-k(t-T)}`.
pub const DECAY_TOL: f64 = 1.02;
/// Allowed overshoot of the set distance over `mu(V(T) e^{-k(t-T)})`.
pub const MU_TOL: f64 = 1.05;
pub const TERMINAL_SET_TOL: f64 = 1e-3;
pub const SWITCH_TOL: f64 = 1e-9;
/// Length of the limsup window at the end of the run.
pub const LIMSUP_WINDOW: f64 = 5.0;
/// Round-off floor under the decaying envelope `V(T) e^{-k(t-T)}`.
pub const V_FLOOR: f64 = 1e-12;
pub const SAMPLE_COUNT: usize = 10;

/// Inverse of `mu^{-1}(s) = Z(s/4; 0, delta_a)`.
pub fn mu(v: f64, params: &ControllerParams) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    4.0 * ramp_inverse(v, &StepParams::between(0.0, params.delta_a)).expect("ordered ramp")
}

pub fn mu_inverse(s: f64, params: &ControllerParams) -> f64 {
    ramp(0.25 * s, &StepParams::between(0.0, params.delta_a)).expect("ordered ramp")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleCheck {
    pub t: f64,
    pub v: f64,
    /// `max_{t' >= T} V(t') / max(V(T) e^{-k(t'-T)}, V_FLOOR)`.
    pub decay_ratio: f64,
    /// `max_{t' >= T} |a|_A / mu(max(V(T) e^{-k(t'-T)}, V_FLOOR))`.
    pub mu_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateReport {
    pub decay_rate: f64,
    pub samples: Vec<SampleCheck>,
    pub decay_ratio: f64,
    /// Decay ratio restarted at every switching event.
    pub decay_ratio_segments: f64,
    pub mu_ratio: f64,
    pub terminal_set_distance: f64,
    pub window_max_error: f64,
    pub ultimate_bound: f64,
    pub switching_residual: f64,
    pub decay_ok: bool,
    pub attraction_ok: bool,
    pub terminal_ok: bool,
    pub ultimate_ok: bool,
    pub switching_ok: bool,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.decay_ok && self.attraction_ok && self.terminal_ok && self.ultimate_ok && self.switching_ok
    }

    pub fn failures(&self) -> Vec<&'static str> {
        [
            (self.decay_ok, "lyapunov decay"),
            (self.attraction_ok, "set attraction"),
            (self.terminal_ok, "terminal set distance"),
            (self.ultimate_ok, "ultimate bound"),
            (self.switching_ok, "switching continuity"),
        ]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, name)| name)
        .collect()
    }
}

fn envelope(v_t: f64, k: f64, dt: f64) -> f64 {
    (v_t * (-k * dt).exp()).max(V_FLOOR)
}

/// Worst `V(t)/envelope` over `records[from..to]`, referenced at `from`.
fn decay_ratio(log: &SimLog, from: usize, to: usize, k: f64) -> f64 {
    let r0 = &log.records[from];
    log.records[from..to]
        .iter()
        .map(|r| r.v / envelope(r0.v, k, r.t - r0.t))
        .fold(0.0, f64::max)
}

/// Checks the decay, attraction, ultimate-bound and switching certificates.
pub fn certify(log: &SimLog, model: &VehicleModel) -> Result<CertificateReport> {
    if log.config.mode != Mode::Put {
        return Err(invalid("mode", "certificates need a set-based run"));
    }
    let params = &log.config.controller;
    let k = params.decay_rate();
    let n = log.records.len();
    let h = log.config.step_size;

    let mu_floor = mu(V_FLOOR, params);
    let samples: Vec<SampleCheck> = (0..SAMPLE_COUNT)
        .map(|j| {
            let i = ((j * (n - 1)) / SAMPLE_COUNT).min(n - 1);
            let r0 = &log.records[i];
            let mut mu_ratio: f64 = 0.0;
            for r in &log.records[i..] {
                if r.set_distance > 0.0 {
                    let env = envelope(r0.v, k, r.t - r0.t);
                    let m = if env == V_FLOOR { mu_floor } else { mu(env, params) };
                    mu_ratio = mu_ratio.max(r.set_distance / m);
                }
            }
            SampleCheck {
                t: r0.t,
                v: r0.v,
                decay_ratio: decay_ratio(log, i, n, k),
                mu_ratio,
            }
        })
        .collect();

    let mut cuts: Vec<usize> = vec![0];
    cuts.extend(log.events.iter().map(|e| e.step).filter(|&s| s > 0 && s < n));
    cuts.push(n);
    let decay_ratio_segments = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| decay_ratio(log, w[0], w[1], k))
        .fold(0.0, f64::max);

    let last = log.last();
    let window_start = last.t - LIMSUP_WINDOW;
    let window_max_error = log
        .records
        .iter()
        .filter(|r| r.t >= window_start - 0.5 * h)
        .map(|r| r.error_norm())
        .fold(0.0, f64::max);
    let ultimate_bound = model.ultimate_bound(&log.config.gains, params.r)?;

    let decay_ratio = samples.iter().map(|s| s.decay_ratio).fold(0.0, f64::max);
    let mu_ratio = samples.iter().map(|s| s.mu_ratio).fold(0.0, f64::max);
    let switching_residual = log.max_switch_residual();
    let terminal_set_distance = last.set_distance;
    Ok(CertificateReport {
        decay_rate: k,
        samples,
        decay_ratio,
        decay_ratio_segments,
        mu_ratio,
        terminal_set_distance,
        window_max_error,
        ultimate_bound,
        switching_residual,
        decay_ok: decay_ratio_segments <= DECAY_TOL && decay_ratio <= DECAY_TOL,
        attraction_ok: mu_ratio <= MU_TOL,
        terminal_ok: terminal_set_distance <= TERMINAL_SET_TOL,
        ultimate_ok: window_max_error <= ultimate_bound,
        switching_ok: switching_residual <= SWITCH_TOL,
    })
}
