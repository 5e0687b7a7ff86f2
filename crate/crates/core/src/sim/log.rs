use std::io::Write;

use serde::Serialize;

use super::{set_distance, SimConfig, SimState, Snapshot, StageFailure};
use crate::inner::ControllerParams;

/// First line of every CSV log.
pub const CSV_VERSION: &str = "# pivotrack-simlog v1";

/// One row per step boundary, after switching.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub e: Vec<f64>,
    pub lambda: [f64; 2],
    pub omega: f64,
    pub eta: Option<f64>,
    pub eta_star: f64,
    pub u1: f64,
    pub u2: f64,
    pub a_star: [f64; 2],
    pub a_star_dot: [f64; 2],
    pub a_star_ddot: [f64; 2],
    pub applied: [f64; 2],
    /// Distance of the applied actuation to the ball around `a*`.
    pub set_distance: f64,
    pub v_a: f64,
    pub v_omega: f64,
    pub v: f64,
    /// `omega*` in set-based mode, `omega_d` in naive mode.
    pub omega_star: f64,
    pub omega_star_dot: f64,
    /// `| lambda - R(4 atan eta) lambda* |` where both are defined.
    pub covering_residual: Option<f64>,
    /// `| |lambda| - 1 |` before the renormalization that produced this row.
    pub lambda_drift: f64,
    pub in_zone: bool,
    pub switched: bool,
    pub singular: bool,
}

impl StepRecord {
    pub(crate) fn from_snapshot(
        s: &SimState,
        snap: &Snapshot,
        params: &ControllerParams,
        switched: bool,
        in_zone: bool,
        singular: bool,
        lambda_drift: f64,
    ) -> Self {
        let c = &snap.chain;
        let tg = &c.target;
        let arr = |v: &nalgebra::Vector2<f64>| [v.x, v.y];
        let nan = f64::NAN;
        let (v_a, v_omega, v, omega_star, omega_star_dot, eta_star) = match (&snap.put, &snap.naive) {
            (Some(ev), _) => {
                let l = ev.lyapunov(s.pivot.omega, params);
                let es = ev.eta_star.finite().unwrap_or(f64::INFINITY);
                (l.v_a, l.v_omega, l.v, ev.omega_star, ev.omega_star_dot, es)
            }
            (None, Some(nv)) => (nan, nan, nv.v, nv.omega_d, nan, nan),
            (None, None) => (nan, nan, nan, nan, nan, nan),
        };
        let eta = s.eta.and_then(|e| e.finite());
        let covering_residual = match (eta, tg.direction()) {
            (Some(e), Some(ls)) if snap.put.is_some() => {
                Some((s.pivot.lambda.as_vector() - ls.rotated(4.0 * e.atan()).as_vector()).norm())
            }
            _ => None,
        };
        Self {
            t: s.t,
            x: s.x.clone(),
            e: c.error.clone(),
            lambda: [s.pivot.lambda.x(), s.pivot.lambda.y()],
            omega: s.pivot.omega,
            eta,
            eta_star,
            u1: tg.norm(),
            u2: snap.u2(),
            a_star: arr(&tg.a_star),
            a_star_dot: arr(&tg.a_star_dot),
            a_star_ddot: arr(&tg.a_star_ddot),
            applied: arr(&c.applied),
            set_distance: set_distance(&c.applied, tg, params.r),
            v_a,
            v_omega,
            v,
            omega_star,
            omega_star_dot,
            covering_residual,
            lambda_drift,
            in_zone,
            switched,
            singular,
        }
    }

    pub fn error_norm(&self) -> f64 {
        self.e.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// An MRP reset that changed `eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub step: usize,
    pub a_star_norm: f64,
    pub eta_before: Option<f64>,
    pub eta_after: Option<f64>,
    pub u2_before: f64,
    pub u2_after: f64,
}

impl SwitchEvent {
    pub fn residual(&self) -> f64 {
        (self.u2_before - self.u2_after).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    /// The naive law met `|a*| ~ 0`.
    Singularity { t: f64, step: usize, a_star_norm: f64 },
    NonFinite { t: f64, step: usize, what: String },
}

impl Outcome {
    pub(crate) fn from_failure(f: StageFailure, step: usize) -> Self {
        match f {
            StageFailure::Singularity { t, a_star_norm } => Outcome::Singularity { t, step, a_star_norm },
            StageFailure::NonFinite { t, what } => Outcome::NonFinite { t, step, what },
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, Outcome::Completed)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub switch_events: usize,
    pub events_per_second: f64,
    /// Number of entries into `|a*| < min(r/2pi, a0)`.
    pub zone_entries: usize,
    pub zone_time: f64,
    pub eta_cap_hits: usize,
    pub max_lambda_drift: f64,
}

#[derive(Clone, Debug)]
pub struct SimLog {
    pub config: SimConfig,
    pub dim: usize,
    pub records: Vec<StepRecord>,
    pub events: Vec<SwitchEvent>,
    pub outcome: Outcome,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimSummary {
    pub mode: String,
    pub model: String,
    pub trajectory: String,
    pub step_size: f64,
    pub duration: f64,
    pub records: usize,
    pub outcome: Outcome,
    pub final_time: f64,
    pub final_error_norm: f64,
    pub final_set_distance: f64,
    pub max_set_distance: f64,
    pub min_lambda_y: f64,
    pub max_abs_omega: f64,
    pub max_abs_u2: f64,
    pub max_switch_residual: f64,
    pub diagnostics: Diagnostics,
}

impl SimLog {
    pub(crate) fn new(config: SimConfig, dim: usize) -> Self {
        let cap = config.steps() + 1;
        Self {
            config,
            dim,
            records: Vec::with_capacity(cap),
            events: Vec::new(),
            outcome: Outcome::Completed,
            diagnostics: Diagnostics::default(),
        }
    }

    pub(crate) fn push(&mut self, r: StepRecord) {
        self.records.push(r);
    }

    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("a log always holds the initial record")
    }

    pub fn max_switch_residual(&self) -> f64 {
        self.events.iter().map(SwitchEvent::residual).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> SimSummary {
        let fold = |f: &dyn Fn(&StepRecord) -> f64| self.records.iter().map(f).fold(0.0, f64::max);
        let last = self.last();
        SimSummary {
            mode: self.config.mode.name().into(),
            model: self.config.model.clone(),
            trajectory: self.config.trajectory.name().into(),
            step_size: self.config.step_size,
            duration: self.config.duration,
            records: self.records.len(),
            outcome: self.outcome.clone(),
            final_time: last.t,
            final_error_norm: last.error_norm(),
            final_set_distance: last.set_distance,
            max_set_distance: fold(&|r| r.set_distance),
            min_lambda_y: self.records.iter().map(|r| r.lambda[1]).fold(f64::INFINITY, f64::min),
            max_abs_omega: fold(&|r| r.omega.abs()),
            max_abs_u2: fold(&|r| r.u2.abs()),
            max_switch_residual: self.max_switch_residual(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..self.dim).map(|i| format!("x{i}")));
        cols.extend((0..self.dim).map(|i| format!("e{i}")));
        cols.extend(
            [
                "lambda_x", "lambda_y", "omega", "eta", "eta_star", "u1", "u2", "a_star_x", "a_star_y", "applied_x",
                "applied_y", "set_distance", "v_a", "v_omega", "v", "omega_star", "in_zone", "switched", "singular",
            ]
            .map(String::from),
        );
        cols.join(",")
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{CSV_VERSION}")?;
        writeln!(w, "{}", self.csv_header())?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            let mut push = |v: f64| {
                if !line.is_empty() {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            };
            push(r.t);
            r.x.iter().chain(&r.e).for_each(|v| push(*v));
            for v in [
                r.lambda[0],
                r.lambda[1],
                r.omega,
                r.eta.unwrap_or(f64::NAN),
                r.eta_star,
                r.u1,
                r.u2,
                r.a_star[0],
                r.a_star[1],
                r.applied[0],
                r.applied[1],
                r.set_distance,
                r.v_a,
                r.v_omega,
                r.v,
                r.omega_star,
            ] {
                push(v);
            }
            for b in [r.in_zone, r.switched, r.singular] {
                push(b as u8 as f64);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_summary_json(&self, w: impl Write) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, &self.summary())
    }
}
