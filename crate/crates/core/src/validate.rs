//! Seeded randomized property suites and closed-loop certificate checks.
//!
//! Every property reports the number of cases it drew and, on failure, a
//! counterexample shrunk toward simple inputs.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certify::certify;
use crate::geometry::{containment_check, eta_star, theta_bar, theta_star, Mrp, UnitVector2};
use crate::inner::{self, ActuationTarget, ControllerParams, InnerState, PivotState};
use crate::outer::VehicleModel;
use crate::shaping::{ramp, zeta, zeta0, zeta_derivative, StepParams};
use crate::sim::{self, Mode, Outcome, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Smoothing,
    Geometry,
    Inner,
    Certificates,
    All,
}

impl Suite {
    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "smoothing" => Ok(Suite::Smoothing),
            "geometry" => Ok(Suite::Geometry),
            "inner" => Ok(Suite::Inner),
            "certificates" => Ok(Suite::Certificates),
            "all" => Ok(Suite::All),
            other => Err(format!(
                "unknown suite `{other}`, expected smoothing, geometry, inner, certificates or all"
            )),
        }
    }
}

/// Deliberate defects for checking that the suites can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Faults {
    /// Added to `theta*` wherever it is below `2 pi`.
    pub theta_star_offset: f64,
}

impl Faults {
    fn theta_star(&self, sigma: f64) -> f64 {
        let t = theta_star(sigma);
        if t < TAU {
            t + self.theta_star_offset
        } else {
            t
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub cases: usize,
    pub passed: bool,
    pub counterexample: Option<String>,
    pub detail: String,
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}/{} ({} cases)", self.suite, self.name, self.cases)?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        if let Some(c) = &self.counterexample {
            write!(f, "\n    counterexample: {c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub results: Vec<PropertyResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

/// Moves each coordinate toward `target` while `fails` keeps holding.
fn shrink(mut case: Vec<f64>, target: &[f64], fails: impl Fn(&[f64]) -> bool) -> Vec<f64> {
    for _ in 0..64 {
        let mut moved = false;
        for i in 0..case.len() {
            for cand in [target[i], 0.5 * (case[i] + target[i]), (case[i] * 1e3).round() / 1e3] {
                if cand == case[i] {
                    continue;
                }
                let mut trial = case.clone();
                trial[i] = cand;
                if fails(&trial) {
                    case = trial;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            break;
        }
    }
    case
}

fn format_case(names: &[&str], v: &[f64]) -> String {
    names
        .iter()
        .zip(v)
        .map(|(n, x)| format!("{n} = {x:e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

struct Property<'a> {
    suite: &'static str,
    name: &'static str,
    vars: &'a [&'a str],
    target: &'a [f64],
}

impl Property<'_> {
    /// Draws `cases` inputs and checks `holds` on each.
    fn check(
        &self,
        cases: usize,
        mut draw: impl FnMut(usize) -> Vec<f64>,
        holds: impl Fn(&[f64]) -> bool,
    ) -> PropertyResult {
        for i in 0..cases {
            let c = draw(i);
            if !holds(&c) {
                let min = shrink(c, self.target, |v| !holds(v));
                return self.result(i + 1, false, Some(format_case(self.vars, &min)), String::new());
            }
        }
        self.result(cases, true, None, String::new())
    }

    fn result(&self, cases: usize, passed: bool, counterexample: Option<String>, detail: String) -> PropertyResult {
        PropertyResult {
            suite: self.suite,
            name: self.name,
            cases,
            passed,
            counterexample,
            detail,
        }
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Adaptive Simpson, used only as an independent quadrature oracle.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

fn smoothing(seed: u64, out: &mut Vec<PropertyResult>) {
    let prop = |name, vars, target| Property {
        suite: "smoothing",
        name,
        vars,
        target,
    };

    let mut r = rng(seed, 1);
    out.push(prop("step_range_monotone_reversible", &["s0", "width", "a", "b"], &[0.0, 1.0, 0.5, 0.5]).check(
        20_000,
        |_| vec![r.random_range(-5.0..5.0), r.random_range(1e-3..5.0), r.random_range(-6.0..11.0), r.random_range(-6.0..11.0)],
        |v| {
            let Ok(p) = StepParams::new(v[0], v[0] + v[1]) else { return true };
            let (lo, hi) = if v[2] < v[3] { (v[2], v[3]) } else { (v[3], v[2]) };
            let (zl, zh) = (zeta(lo, &p), zeta(hi, &p));
            let rev = zeta(lo, &p.reversed());
            (0.0..=1.0).contains(&zl) && zl <= zh && (zl + rev - 1.0).abs() <= 1e-15
        },
    ));

    let mut r = rng(seed, 2);
    out.push(prop("partition_of_unity", &["u"], &[0.5]).check(
        20_000,
        |_| vec![r.random_range(0.0..1.0)],
        |v| (zeta0(v[0]) + zeta0(1.0 - v[0]) - 1.0).abs() <= 1e-15,
    ));

    // flatness at both ends: every derivative up to order 4 vanishes
    let p = StepParams::between(0.0, 1.0);
    let mut r = rng(seed, 3);
    out.push(prop("flat_at_endpoints", &["u", "order"], &[0.01, 1.0]).check(
        4_000,
        |_| vec![r.random_range(0.0..0.01), r.random_range(1..=4) as f64],
        |v| {
            let k = v[1] as usize;
            let d0 = zeta_derivative(v[0], &p, k).unwrap();
            let d1 = zeta_derivative(1.0 - v[0], &p, k).unwrap();
            d0.abs() <= 1e-20 && d1.abs() <= 1e-20
        },
    ));

    let delta = 0.025;
    let mid = [0.5 * delta];
    let pa = StepParams::between(0.0, delta);
    let mut r = rng(seed, 4);
    out.push(prop("ramp_matches_simpson", &["s"], &mid).check(
        400,
        |_| vec![r.random_range(0.0..2.0 * delta)],
        |v| {
            let f = |x: f64| zeta(x, &pa);
            let oracle = simpson(&f, 0.0, v[0], 1e-14);
            (ramp(v[0], &pa).unwrap() - oracle).abs() <= 1e-10
        },
    ));

    let mut r = rng(seed, 5);
    out.push(prop("ramp_derivative_is_step", &["s"], &mid).check(
        4_000,
        |_| vec![r.random_range(-0.5 * delta..2.0 * delta)],
        |v| {
            let h = 1e-6;
            let fd = (ramp(v[0] + h, &pa).unwrap() - ramp(v[0] - h, &pa).unwrap()) / (2.0 * h);
            (fd - zeta(v[0], &pa)).abs() <= 1e-7
        },
    ));
}

fn contained_by_vector(a: f64, theta: f64, r: f64) -> Option<bool> {
    let d = (Vector2::new(a * theta.cos(), a * theta.sin()) - Vector2::new(a, 0.0)).norm();
    // too close to the boundary to call
    if (d - r).abs() <= 1e-9 * (a + r) {
        None
    } else {
        Some(d <= r)
    }
}

fn geometry(seed: u64, faults: &Faults, out: &mut Vec<PropertyResult>) {
    let prop = |name, vars, target| Property {
        suite: "geometry",
        name,
        vars,
        target,
    };

    // a deterministic grid, so its smallest failure is the first one met
    let n = 100_000;
    out.push(prop("theta_star_underestimates", &["sigma"], &[1.0]).check(
        n,
        |i| vec![10f64.powf(-4.0 + 8.0 * i as f64 / (n - 1) as f64)],
        |v| faults.theta_star(v[0]) <= theta_bar(v[0]).unwrap(),
    ));

    let mut r = rng(seed, 11);
    out.push(prop("containment_matches_vector_oracle", &["a", "theta", "r"], &[1.0, 0.0, 1.0]).check(
        100_000,
        |_| vec![r.random_range(0.0..20.0), r.random_range(-PI..PI), r.random_range(1e-2..5.0)],
        |v| contained_by_vector(v[0], v[1], v[2]).is_none_or(|o| o == containment_check(v[0], v[1], v[2])),
    ));

    let mut r = rng(seed, 12);
    out.push(prop("sufficiency", &["a", "r", "frac"], &[1.0, 1.0, 0.0]).check(
        100_000,
        |_| vec![r.random_range(1e-3..10.0), r.random_range(1e-2..5.0), r.random_range(-1.0..1.0)],
        |v| {
            let theta = v[2] * faults.theta_star(v[0] / v[1]).min(PI);
            contained_by_vector(v[0], theta, v[1]).unwrap_or(true)
        },
    ));

    let mut r = rng(seed, 13);
    out.push(prop("x_minus_atan_nondecreasing", &["x", "y"], &[0.0, 0.0]).check(
        100_000,
        |_| vec![r.random_range(-1e3..1e3), r.random_range(-1e3..1e3)],
        |v| {
            let (hi, lo) = if v[0] > v[1] { (v[0], v[1]) } else { (v[1], v[0]) };
            hi - lo >= hi.atan() - lo.atan() - 1e-12
        },
    ));

    let mut r = rng(seed, 14);
    out.push(prop("arc_length_overestimate", &["a", "r", "excess"], &[1.0, 1.0, 0.0]).check(
        100_000,
        |_| vec![r.random_range(1e-3..20.0), r.random_range(0.05..2.0), r.random_range(0.0..10.0)],
        |v| match eta_star(v[0], v[1]) {
            Mrp::Finite(es) => {
                let eta = es + v[2];
                4.0 * v[0] * (eta.atan() - es.atan()) <= 4.0 * v[0] * (eta - es) + 1e-12
            }
            Mrp::Infinity => true,
        },
    ));
}

fn random_target(r: &mut ChaCha8Rng, max_norm: f64) -> Vec<f64> {
    let a = r.random_range(0.0..max_norm);
    let phi = r.random_range(-PI..PI);
    vec![
        a * phi.cos(),
        a * phi.sin(),
        r.random_range(-20.0..20.0),
        r.random_range(-20.0..20.0),
        r.random_range(-200.0..200.0),
        r.random_range(-200.0..200.0),
    ]
}

fn target_of(v: &[f64]) -> ActuationTarget {
    ActuationTarget {
        a_star: Vector2::new(v[0], v[1]),
        a_star_dot: Vector2::new(v[2], v[3]),
        a_star_ddot: Vector2::new(v[4], v[5]),
    }
}

fn inner_suite(seed: u64, params: &ControllerParams, out: &mut Vec<PropertyResult>) {
    let prop = |name, vars, target| Property {
        suite: "inner",
        name,
        vars,
        target,
    };
    let vars = &["ax", "ay", "ax'", "ay'", "ax''", "ay''", "eta", "lambda", "omega"];
    let simple = &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let draw = |r: &mut ChaCha8Rng, max_norm: f64| {
        let mut v = random_target(r, max_norm);
        v.push(10f64.powf(r.random_range(-3.0..1.5)) * if r.random_bool(0.5) { 1.0 } else { -1.0 });
        v.push(r.random_range(-PI..PI));
        v.push(r.random_range(-30.0..30.0));
        v
    };
    let state_of = |v: &[f64]| InnerState {
        pivot: PivotState {
            lambda: UnitVector2::from_angle(v[7]),
            omega: v[8],
        },
        eta: Some(Mrp::Finite(v[6])),
    };

    let mut r = rng(seed, 21);
    out.push(prop("gating_identity", vars, simple).check(
        20_000,
        |_| draw(&mut r, 15.0),
        |v| inner::gating_residual(&target_of(v), Some(Mrp::Finite(v[6])), params) == 0.0,
    ));

    let mut r = rng(seed, 22);
    out.push(prop("ramp_cancellation", vars, simple).check(
        20_000,
        |_| draw(&mut r, 15.0),
        |v| {
            let ev = inner::evaluate(&state_of(v), &target_of(v), params);
            (ev.omega_a * ev.zeta_a - params.k_a * ev.v_a).abs() <= 1e-12 * ev.v_a.max(1.0)
        },
    ));

    let mut r = rng(seed, 23);
    let off = params.r / TAU;
    out.push(prop("smooth_off_below_threshold", vars, simple).check(
        20_000,
        |_| draw(&mut r, off),
        |v| {
            let target = target_of(v);
            if target.norm() > off {
                return true;
            }
            let eta = v[6];
            let thrust = zeta(target.norm(), &StepParams::between(params.a0, params.a1));
            let damping = -params.k_eta * 4.0 / (1.0 + eta * eta) * eta * thrust;
            let ws = inner::omega_star(&target, Some(Mrp::Finite(eta)), params);
            (ws - damping).abs() <= 1e-14 * damping.abs()
        },
    ));

    let mut r = rng(seed, 24);
    out.push(prop("odd_under_mirror", vars, simple).check(
        20_000,
        |_| draw(&mut r, 15.0),
        |v| {
            let t = target_of(v);
            let m = |u: Vector2<f64>| Vector2::new(u.x, -u.y);
            let mirrored = ActuationTarget {
                a_star: m(t.a_star),
                a_star_dot: m(t.a_star_dot),
                a_star_ddot: m(t.a_star_ddot),
            };
            let a = inner::omega_star(&t, Some(Mrp::Finite(v[6])), params);
            let b = inner::omega_star(&mirrored, Some(Mrp::Finite(-v[6])), params);
            (a + b).abs() <= 1e-9 * a.abs().max(1.0)
        },
    ));

    let mut r = rng(seed, 25);
    out.push(prop("switching_keeps_u2", vars, simple).check(
        20_000,
        |_| draw(&mut r, params.switching_threshold()),
        |v| {
            let (s, t) = (state_of(v), target_of(v));
            if t.norm() >= params.switching_threshold() {
                return true;
            }
            let after = inner::apply_switching(&s, &t, params);
            inner::u2(&s, &t, params) == inner::u2(&after, &t, params)
        },
    ));
}

fn certificates(config: &SimConfig, out: &mut Vec<PropertyResult>) {
    let prop = |name| Property {
        suite: "certificates",
        name,
        vars: &[],
        target: &[],
    };
    let model = match VehicleModel::by_name(&config.model) {
        Ok(m) => m,
        Err(e) => {
            out.push(prop("model").result(0, false, None, e.to_string()));
            return;
        }
    };
    let put = SimConfig {
        mode: Mode::Put,
        ..config.clone()
    };
    let log = match sim::run(&put) {
        Ok(l) => l,
        Err(e) => {
            out.push(prop("run").result(0, false, None, e.to_string()));
            return;
        }
    };
    let n = log.records.len();
    out.push(prop("run_completes").result(n, log.outcome.is_completed(), None, format!("{:?}", log.outcome)));
    let rep = match certify(&log, &model) {
        Ok(r) => r,
        Err(e) => {
            out.push(prop("certify").result(n, false, None, e.to_string()));
            return;
        }
    };
    let rows = [
        ("lyapunov_decay", rep.decay_ok, format!("max ratio {:.3e} (segments {:.3e})", rep.decay_ratio, rep.decay_ratio_segments)),
        ("set_attraction", rep.attraction_ok, format!("max |a|_A / mu = {:.3e}", rep.mu_ratio)),
        ("terminal_set_distance", rep.terminal_ok, format!("{:.3e}", rep.terminal_set_distance)),
        ("ultimate_bound", rep.ultimate_ok, format!("{:.4} <= {:.4}", rep.window_max_error, rep.ultimate_bound)),
        ("switching_continuity", rep.switching_ok, format!("{:.3e} over {} events", rep.switching_residual, log.events.len())),
    ];
    for (name, ok, detail) in rows {
        out.push(prop(name).result(n, ok, None, detail));
    }

    let naive = SimConfig {
        mode: Mode::Naive,
        ..config.clone()
    };
    match sim::run(&naive).map(|l| l.outcome) {
        Ok(Outcome::Singularity { t, .. }) => {
            out.push(prop("naive_singularity").result(1, true, None, format!("at t = {t}")))
        }
        Ok(o) => out.push(prop("naive_singularity").result(1, false, None, format!("{o:?}"))),
        Err(e) => out.push(prop("naive_singularity").result(1, false, None, e.to_string())),
    }
}

/// Runs the selected suites. Closed-loop certificates use `config`.
pub fn run_suites(suite: Suite, seed: u64, config: &SimConfig, faults: &Faults) -> ValidationReport {
    let mut results = Vec::new();
    if suite.includes(Suite::Smoothing) {
        smoothing(seed, &mut results);
    }
    if suite.includes(Suite::Geometry) {
        geometry(seed, faults, &mut results);
    }
    if suite.includes(Suite::Inner) {
        inner_suite(seed, &config.controller, &mut results);
    }
    if suite.includes(Suite::Certificates) {
        certificates(config, &mut results);
    }
    ValidationReport { seed, results }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn property_suites_pass() {
        let c = SimConfig::paper_square();
        for suite in [Suite::Smoothing, Suite::Geometry, Suite::Inner] {
            let rep = run_suites(suite, 7, &c, &Faults::default());
            for r in &rep.results {
                assert!(r.passed, "{r}");
            }
        }
    }

    #[test]
    fn injected_fault_is_caught_and_shrunk() {
        let faults = Faults { theta_star_offset: 0.05 };
        let rep = run_suites(Suite::Geometry, 7, &SimConfig::paper_square(), &faults);
        let under = rep.results.iter().find(|r| r.name == "theta_star_underestimates").unwrap();
        assert!(!under.passed);
        assert!(under.counterexample.as_ref().unwrap().starts_with("sigma = "));
        assert!(!rep.passed());
    }

    #[test]
    fn suites_filter() {
        let rep = run_suites(Suite::Smoothing, 1, &SimConfig::paper_square(), &Faults::default());
        assert!(rep.results.iter().all(|r| r.suite == "smoothing"));
        assert_eq!("geometry".parse::<Suite>().unwrap(), Suite::Geometry);
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn shrinking_moves_toward_target() {
        let min = shrink(vec![7.3, -4.1], &[0.0, 0.0], |v| v[0] > 1.0);
        assert!(min[0] > 1.0 && min[0] < 2.0, "{min:?}");
        assert_eq!(min[1], 0.0);
    }

    #[test]
    fn simpson_oracle() {
        let v = simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn seeds_are_reproducible() {
        let c = SimConfig::paper_square();
        let a = run_suites(Suite::Inner, 3, &c, &Faults::default());
        let b = run_suites(Suite::Inner, 3, &c, &Faults::default());
        assert_eq!(a, b);
    }
}
