//! Acceptance criteria for the square maneuver and the validation suites.
//!
//! Prints one PASS/FAIL line per criterion plus INFO lines with supporting
//! measurements. Exits nonzero only if the harness itself cannot run, so a
//! failing criterion is reported without aborting the workspace test run.
//! Set `ACCEPTANCE_STRICT=1` to make any FAIL line fail the process.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use pivotrack::certify::{certify, CertificateReport, DECAY_TOL, MU_TOL, SWITCH_TOL, TERMINAL_SET_TOL};
use pivotrack::config::{parse_manifest, with_param, PAPER_SQUARE};
use pivotrack::geometry::{eta_star, Mrp, UnitVector2};
use pivotrack::inner::{self, PivotState};
use pivotrack::outer::VehicleModel;
use pivotrack::sim::{self, Mode, Outcome, SimConfig, SimLog, SimState, Simulator};
use pivotrack::validate::{run_suites, Faults, Suite};

/// End of the first (vertical) edge of the square.
const FIRST_EDGE_END: f64 = 3.0;
const RUNTIME_LIMIT: f64 = 5.0;
const SUITE_RUNTIME_LIMIT: f64 = 10.0;
const FD_STEP: f64 = 1e-5;
const FD_TOL_FIRST: f64 = 1e-4;
const FD_TOL_SECOND: f64 = 1e-3;
const SWEEP_AGREEMENT: f64 = 1e-3;
const RICHARDSON_WINDOW: (f64, f64) = (12.0, 20.0);
const RICHARDSON_SEGMENT: (f64, f64) = (7.0, 8.0);

struct Harness {
    failures: Vec<String>,
}

impl Harness {
    fn check(&mut self, id: &str, ok: bool, what: &str, detail: String) {
        println!("{} {id}: {what}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures.push(id.to_string());
        }
    }

    fn info(&self, id: &str, detail: String) {
        println!("INFO {id}: {detail}");
    }
}

fn square() -> SimConfig {
    parse_manifest(PAPER_SQUARE).expect("bundled manifest parses")
}

fn criterion_1(h: &mut Harness, log: &SimLog, secs: f64) {
    let finite = log.records.iter().all(|r| {
        r.x.iter().chain(&r.e).chain(&r.lambda).all(|v| v.is_finite()) && r.omega.is_finite() && r.u2.is_finite()
    });
    let flipped: Vec<f64> = log
        .records
        .iter()
        .filter(|r| r.t <= FIRST_EDGE_END && r.lambda[1] < 0.0)
        .map(|r| r.t)
        .collect();
    let interval = match (flipped.first(), flipped.last()) {
        (Some(a), Some(b)) => format!("lambda_y < 0 on [{a:.3}, {b:.3}] s"),
        _ => "lambda_y never negative on the first edge".into(),
    };
    let ok = log.outcome.is_completed() && finite && flipped.len() >= 2 && secs < RUNTIME_LIMIT;
    h.check(
        "1",
        ok,
        "square run completes with a flip on the first edge",
        format!(
            "outcome {:?}, finite {finite}, {interval}, runtime {secs:.3} s (limit {RUNTIME_LIMIT} s)",
            log.outcome
        ),
    );
}

fn criterion_2(h: &mut Harness, cfg: &SimConfig) {
    let naive = SimConfig {
        mode: Mode::Naive,
        ..cfg.clone()
    };
    let log = sim::run(&naive).expect("naive run");
    let (ok, detail) = match log.outcome {
        Outcome::Singularity { t, a_star_norm, .. } => (
            t > 0.0 && t <= FIRST_EDGE_END,
            format!("singularity at t = {t:.4} s with |a*| = {a_star_norm:.3e}"),
        ),
        ref o => (false, format!("no singularity, outcome {o:?}")),
    };
    h.check("2", ok, "naive mode divides by zero on the first edge", detail);
}

fn criterion_3(h: &mut Harness, rep: &CertificateReport) {
    let worst = rep
        .samples
        .iter()
        .max_by(|a, b| a.mu_ratio.total_cmp(&b.mu_ratio))
        .expect("samples");
    h.check(
        "3",
        rep.terminal_ok && rep.attraction_ok,
        "set attraction certificate",
        format!(
            "terminal |a|_A = {:.3e} (tol {TERMINAL_SET_TOL:e}), max |a|_A / mu over {} samples = {:.4} at T = {:.1} s (tol {MU_TOL})",
            rep.terminal_set_distance,
            rep.samples.len(),
            rep.mu_ratio,
            worst.t
        ),
    );
}

fn criterion_4(h: &mut Harness, log: &SimLog, rep: &CertificateReport) {
    h.check(
        "4",
        rep.decay_ok,
        "Lyapunov decay between switching events",
        format!(
            "max V/(V(T0) e^(-k(t-T0))) between events = {:.3e}, over sampled T = {:.3e} (tol {DECAY_TOL}, k = {}, V(0) = {:.3e})",
            rep.decay_ratio_segments, rep.decay_ratio, rep.decay_rate, log.records[0].v
        ),
    );
    let v_max = log.records.iter().map(|r| r.v).fold(0.0, f64::max);
    let t_max = log.records.iter().max_by(|a, b| a.v.total_cmp(&b.v)).map_or(0.0, |r| r.t);
    h.info("4", format!("max V along the run = {v_max:.3e} at t = {t_max:.4} s"));
}

fn r_sweep(cfg: &SimConfig, model: &VehicleModel) -> (bool, Vec<String>) {
    let mut ok = true;
    let mut rows = Vec::new();
    let mut prev = 0.0;
    for n in [40.0, 20.0, 10.0] {
        let c = with_param(cfg, "r", TAU / n).expect("r in range");
        let log = sim::run(&c).expect("run");
        let rep = certify(&log, model).expect("certify");
        let within = log.outcome.is_completed() && rep.window_max_error <= rep.ultimate_bound;
        ok &= within;
        let monotone = rep.window_max_error >= prev;
        prev = rep.window_max_error;
        rows.push(format!(
            "r = 2pi/{n}: {} max|e| = {:.4} bound {:.4}{}",
            if log.outcome.is_completed() { "completed" } else { "aborted" },
            rep.window_max_error,
            rep.ultimate_bound,
            if monotone { "" } else { " (below previous r)" }
        ));
    }
    (ok, rows)
}

fn criterion_5(h: &mut Harness, cfg: &SimConfig, rep: &CertificateReport, model: &VehicleModel) {
    h.check(
        "5",
        rep.ultimate_ok,
        "ultimate bound over the final 5 s",
        format!(
            "max |e| = {:.4} <= gamma(g r) = {:.4} (g = {}, r = {:.4})",
            rep.window_max_error,
            rep.ultimate_bound,
            model.g_bar(),
            cfg.controller.r
        ),
    );
    let (ok, rows) = r_sweep(cfg, model);
    h.check("5b", ok, "r-sweep within the per-r bound at the manifest step", rows.join("; "));
    let fine = SimConfig {
        step_size: 2.5e-4,
        ..cfg.clone()
    };
    let (ok, rows) = r_sweep(&fine, model);
    h.info("5b", format!("at h = 2.5e-4 the sweep {}: {}", if ok { "holds" } else { "fails" }, rows.join("; ")));

    let mut errs = Vec::new();
    for step in [1e-3, 5e-4] {
        let c = with_param(cfg, "step_size", step).expect("step in range");
        let log = sim::run(&c).expect("run");
        errs.push((step, certify(&log, model).expect("certify")));
    }
    let d_err = (errs[0].1.window_max_error - errs[1].1.window_max_error).abs();
    let d_set = (errs[0].1.terminal_set_distance - errs[1].1.terminal_set_distance).abs();
    h.check(
        "5c",
        d_err <= SWEEP_AGREEMENT && d_set <= SWEEP_AGREEMENT,
        "step-size sweep {1e-3, 5e-4} agrees",
        format!(
            "window max|e| {:.6} vs {:.6}, terminal |a|_A {:.2e} vs {:.2e} (tol {SWEEP_AGREEMENT:e})",
            errs[0].1.window_max_error,
            errs[1].1.window_max_error,
            errs[0].1.terminal_set_distance,
            errs[1].1.terminal_set_distance
        ),
    );
}

fn criterion_6(h: &mut Harness, cfg: &SimConfig) {
    let started = Instant::now();
    let mut results = Vec::new();
    for suite in [Suite::Smoothing, Suite::Geometry] {
        results.extend(run_suites(suite, 0, cfg, &Faults::default()).results);
    }
    let secs = started.elapsed().as_secs_f64();
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.to_string()).collect();
    let cases: usize = results.iter().map(|r| r.cases).sum();
    h.check(
        "6",
        failed.is_empty() && secs < SUITE_RUNTIME_LIMIT,
        "smoothing and geometry suites",
        format!(
            "{} properties, {cases} cases, runtime {secs:.2} s (limit {SUITE_RUNTIME_LIMIT} s){}",
            results.len(),
            if failed.is_empty() { String::new() } else { format!("; {}", failed.join("; ")) }
        ),
    );
    let faulty = run_suites(Suite::Geometry, 0, cfg, &Faults { theta_star_offset: 0.05 });
    let caught = faulty
        .results
        .iter()
        .find(|r| r.name == "theta_star_underestimates")
        .filter(|r| !r.passed)
        .and_then(|r| r.counterexample.clone());
    h.info("6", format!("injected theta* overshoot caught: {caught:?}"));
}

/// Worst `|fd - exact| / max(|exact|, 1)` seen for one quantity.
#[derive(Default)]
struct FdWorst {
    err: f64,
    t: f64,
    count: usize,
}

impl FdWorst {
    fn add(&mut self, t: f64, exact: f64, fd: f64) {
        let e = (fd - exact).abs() / exact.abs().max(1.0);
        self.count += 1;
        if e > self.err {
            self.err = e;
            self.t = t;
        }
    }
}

fn state_of(r: &sim::StepRecord) -> SimState {
    SimState {
        t: r.t,
        x: r.x.clone(),
        pivot: PivotState {
            lambda: UnitVector2::new(nalgebra::Vector2::new(r.lambda[0], r.lambda[1])).expect("unit lambda"),
            omega: r.omega,
        },
        eta: r.eta.map(Mrp::Finite),
    }
}

fn criterion_7(h: &mut Harness, log: &SimLog, sim: &Simulator) {
    let params = &log.config.controller;
    let (mut a1, mut a2, mut es, mut ws, mut eta) =
        (FdWorst::default(), FdWorst::default(), FdWorst::default(), FdWorst::default(), FdWorst::default());
    let zone = params.switching_threshold();
    for r in log.records.iter().step_by(50) {
        if r.in_zone || r.eta.is_none() {
            continue;
        }
        let s = state_of(r);
        let (Ok((sp, _)), Ok((sm, _))) = (sim.rk4_step(&s, FD_STEP), sim.rk4_step(&s, -FD_STEP)) else {
            continue;
        };
        let (e0, ep, em) = (sim.evaluate(&s), sim.evaluate(&sp), sim.evaluate(&sm));
        let (t0, tp, tm) = (&e0.chain.target, &ep.chain.target, &em.chain.target);
        if tp.norm() < zone || tm.norm() < zone {
            continue;
        }
        let d = 2.0 * FD_STEP;
        for k in 0..2 {
            a1.add(r.t, t0.a_star_dot[k], (tp.a_star[k] - tm.a_star[k]) / d);
            a2.add(r.t, t0.a_star_ddot[k], (tp.a_star_dot[k] - tm.a_star_dot[k]) / d);
        }
        if let (Some(rate), Mrp::Finite(p), Mrp::Finite(m)) = (
            inner::eta_star_rate(t0, params),
            eta_star(tp.norm(), params.r),
            eta_star(tm.norm(), params.r),
        ) {
            es.add(r.t, rate, (p - m) / d);
        }
        let (Some(p0), Some(pp), Some(pm)) = (e0.put, ep.put, em.put) else { continue };
        ws.add(r.t, p0.omega_star_dot, (pp.omega_star - pm.omega_star) / d);
        if let (Some(rate), Some(Mrp::Finite(p)), Some(Mrp::Finite(m))) = (p0.eta_dot, sp.eta, sm.eta) {
            eta.add(r.t, rate, (p - m) / d);
        }
    }
    let rows = [
        ("a*'", &a1, FD_TOL_FIRST),
        ("a*''", &a2, FD_TOL_SECOND),
        ("eta*'", &es, FD_TOL_FIRST),
        ("omega*'", &ws, FD_TOL_FIRST),
        ("eta'", &eta, FD_TOL_FIRST),
    ];
    let ok = rows.iter().all(|(_, w, tol)| w.count > 0 && w.err <= *tol);
    let detail: Vec<String> = rows
        .iter()
        .map(|(n, w, tol)| format!("{n} {:.2e} at t = {:.2} ({} probes, tol {tol:e})", w.err, w.t, w.count))
        .collect();
    h.check("7", ok, "forward-mode derivatives match central differences", detail.join("; "));
}

fn criterion_8(h: &mut Harness, log: &SimLog) {
    let n = log.events.len();
    h.check(
        "8",
        log.max_switch_residual() <= SWITCH_TOL,
        "u2 continuous across switching events",
        format!("max |u2 before - u2 after| = {:.3e} over {n} events (tol {SWITCH_TOL:e})", log.max_switch_residual()),
    );
}

fn state_vector(s: &SimState) -> Vec<f64> {
    let mut v = s.x.clone();
    v.extend([s.pivot.lambda.x(), s.pivot.lambda.y(), s.pivot.omega]);
    if let Some(Mrp::Finite(e)) = s.eta {
        v.push(e);
    }
    v
}

fn distance(a: &SimState, b: &SimState) -> f64 {
    state_vector(a)
        .iter()
        .zip(state_vector(b))
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn criterion_9(h: &mut Harness, cfg: &SimConfig) {
    let sim = Simulator::new(cfg.clone()).expect("simulator");
    let (t0, t1) = RICHARDSON_SEGMENT;
    let base = cfg.step_size;
    let start = sim
        .advance(&sim.initial_state(), base, (t0 / base).round() as usize)
        .expect("reach segment start");
    let span = t1 - t0;
    let end = |step: f64| sim.advance(&start, step, (span / step).round() as usize).expect("segment");
    let reference = end(1e-4);
    let coarse = distance(&end(2e-3), &reference);
    let fine = distance(&end(1e-3), &reference);
    let ratio = coarse / fine;
    h.check(
        "9",
        (RICHARDSON_WINDOW.0..=RICHARDSON_WINDOW.1).contains(&ratio),
        "fourth-order step halving",
        format!(
            "on [{t0}, {t1}] s: error(2e-3) = {coarse:.3e}, error(1e-3) = {fine:.3e}, ratio {ratio:.2} (window [{}, {}])",
            RICHARDSON_WINDOW.0, RICHARDSON_WINDOW.1
        ),
    );
}

fn main() -> ExitCode {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut h = Harness { failures: Vec::new() };
    let cfg = square();
    let model = VehicleModel::by_name(&cfg.model).expect("model");
    let sim = Simulator::new(cfg.clone()).expect("simulator");

    let started = Instant::now();
    let log = sim.run();
    let secs = started.elapsed().as_secs_f64();
    let rep = certify(&log, &model).expect("certify");

    criterion_1(&mut h, &log, secs);
    criterion_2(&mut h, &cfg);
    criterion_3(&mut h, &rep);
    criterion_4(&mut h, &log, &rep);
    criterion_5(&mut h, &cfg, &rep, &model);
    criterion_6(&mut h, &cfg);
    criterion_7(&mut h, &log, &sim);
    criterion_8(&mut h, &log);
    criterion_9(&mut h, &cfg);

    let covering = log
        .records
        .iter()
        .filter(|r| !r.in_zone)
        .filter_map(|r| r.covering_residual)
        .fold(0.0, f64::max);
    h.info("sim", format!("max covering residual outside the zone = {covering:.3e}"));
    h.info(
        "sim",
        format!(
            "max lambda drift = {:.3e}, max |omega| = {:.1}, switch events = {}",
            log.diagnostics.max_lambda_drift,
            log.summary().max_abs_omega,
            log.events.len()
        ),
    );

    if h.failures.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {}", h.failures.join(", "));
    }
    if strict && !h.failures.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
