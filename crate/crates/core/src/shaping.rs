//! Smooth step and ramp functions.
//!
//! `varpi` is the flat-at-zero exponential, `zeta0` the unit smooth step
//! built from it, `zeta` the affinely rescaled step and `ramp` its running
//! integral. All of them have jet counterparts so that derivatives come out
//! analytically.

use std::sync::OnceLock;

use crate::error::{invalid, Result};
use crate::jet::{Dual, Jet, Jet5};

/// Beyond this argument `exp(-x)` is below the smallest subnormal.
const EXP_UNDERFLOW: f64 = 745.2;

/// Endpoints of a smooth step: `zeta` is 0 at `s0` and 1 at `s1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    s0: f64,
    s1: f64,
}

impl StepParams {
    pub fn new(s0: f64, s1: f64) -> Result<Self> {
        if !(s0.is_finite() && s1.is_finite()) {
            return Err(invalid("step", format!("non-finite endpoints ({s0}, {s1})")));
        }
        if s0 == s1 {
            return Err(invalid("step", format!("s0 = s1 = {s0}; the step is not defined")));
        }
        Ok(Self { s0, s1 })
    }

    /// For endpoints already validated elsewhere.
    pub(crate) const fn between(s0: f64, s1: f64) -> Self {
        Self { s0, s1 }
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn s1(&self) -> f64 {
        self.s1
    }

    /// Swapped endpoints: `1 - zeta(s; a, b) = zeta(s; b, a)`.
    pub fn reversed(&self) -> Self {
        Self {
            s0: self.s1,
            s1: self.s0,
        }
    }

    #[inline]
    fn width(&self) -> f64 {
        self.s1 - self.s0
    }
}

/// `0` for `s <= 0`, `exp(-1/s)` otherwise.
pub fn varpi(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let inv = 1.0 / s;
    if inv > EXP_UNDERFLOW {
        0.0
    } else {
        (-inv).exp()
    }
}

/// Unit smooth step `varpi(s) / (varpi(s) + varpi(1 - s))`.
pub fn zeta0(s: f64) -> f64 {
    zeta0_jet(Jet::<1>::constant(s)).value()
}

/// Smooth step evaluated on a jet.
///
/// Written as the logistic function of `1/(1-u) - 1/u`, which equals the
/// ratio form but never forms `0/0`.
pub fn zeta0_jet<const N: usize>(u: Jet<N>) -> Jet<N> {
    let v = u.value();
    if v <= 0.0 {
        return Jet::constant(0.0);
    }
    if v >= 1.0 {
        return Jet::constant(1.0);
    }
    // g = 1/u - 1/(1-u); zeta0 = 1 / (1 + exp(g))
    let g = u.recip() - (1.0 - u).recip();
    let gv = g.value();
    if gv > 0.0 {
        if gv > EXP_UNDERFLOW {
            return Jet::constant(0.0);
        }
        let e = (-g).exp();
        e / (e + 1.0)
    } else {
        if -gv > EXP_UNDERFLOW {
            return Jet::constant(1.0);
        }
        let e = g.exp();
        (e + 1.0).recip()
    }
}

/// `zeta0((s - s0) / (s1 - s0))`.
pub fn zeta(s: f64, p: &StepParams) -> f64 {
    zeta0((s - p.s0) / p.width())
}

pub fn zeta_jet<const N: usize>(s: Jet<N>, p: &StepParams) -> Jet<N> {
    zeta0_jet((s - p.s0) / p.width())
}

/// Value and derivatives of a step at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothScalar {
    pub value: f64,
    /// `derivatives[k]` is the derivative of order `k + 1`.
    pub derivatives: Vec<f64>,
}

pub const MAX_DERIVATIVE_ORDER: usize = 4;

/// Exact derivative of `zeta` of order 1 through 4.
pub fn zeta_derivative(s: f64, p: &StepParams, order: usize) -> Result<f64> {
    if order == 0 || order > MAX_DERIVATIVE_ORDER {
        return Err(invalid(
            "order",
            format!("derivative order {order} not in 1..={MAX_DERIVATIVE_ORDER}"),
        ));
    }
    Ok(zeta_jet(Jet5::variable(s), p).derivative(order))
}

pub fn zeta_smooth(s: f64, p: &StepParams, max_order: usize) -> Result<SmoothScalar> {
    if max_order > MAX_DERIVATIVE_ORDER {
        return Err(invalid(
            "order",
            format!("derivative order {max_order} exceeds {MAX_DERIVATIVE_ORDER}"),
        ));
    }
    let j = zeta_jet(Jet5::variable(s), p);
    Ok(SmoothScalar {
        value: j.value(),
        derivatives: (1..=max_order).map(|k| j.derivative(k)).collect(),
    })
}

// --- ramp -----------------------------------------------------------------

const GL_ORDER: usize = 40;

fn gauss_legendre() -> &'static [(f64, f64); GL_ORDER] {
    static NODES: OnceLock<[(f64, f64); GL_ORDER]> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = GL_ORDER;
        let mut out = [(0.0, 0.0); GL_ORDER];
        for i in 0..n {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            out[i] = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        out
    })
}

fn gl_integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln zeta0(u)` for `u` in `(0, 1)`.
fn ln_zeta0(u: f64) -> f64 {
    -softplus(1.0 / u - 1.0 / (1.0 - u))
}

/// `d/du ln zeta0(u)` for `u` in `(0, 1)`.
fn dln_zeta0(u: f64) -> f64 {
    (1.0 - zeta0(u)) * (1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u)))
}

/// `int_0^u zeta0(x) dx / zeta0(u)` for `u` in `(0, 1/2]`.
///
/// The integrand `zeta0(x)/zeta0(u)` decays from 1 across a boundary layer of
/// width ~`1/dln_zeta0(u)` below `u`; panels start at that width and double
/// so each one sees a well resolved exponential.
fn boundary_layer_ratio(u: f64) -> f64 {
    let lu = ln_zeta0(u);
    let layer = (0.5 / dln_zeta0(u)).min(u);
    let integrand = |x: f64| if x <= 0.0 { 0.0 } else { (ln_zeta0(x) - lu).exp() };
    let (mut a, mut b) = (0.0, layer);
    let mut total = 0.0;
    loop {
        total += gl_integrate(integrand, u - b, u - a);
        if b >= u {
            break;
        }
        if ln_zeta0(u - b) - lu < -60.0 {
            break;
        }
        a = b;
        b = (2.0 * b + layer).min(u);
    }
    total
}

/// `int_0^u zeta0`.
fn ramp0(u: f64) -> f64 {
    if u.is_nan() {
        f64::NAN
    } else if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        u - 0.5
    } else if u <= 0.5 {
        zeta0(u) * boundary_layer_ratio(u)
    } else {
        // zeta0(x) + zeta0(1 - x) = 1
        u - 0.5 + ramp0(1.0 - u)
    }
}

/// `ramp0(u) / zeta0(u)`, continuous with limit 0 at `u = 0`.
fn ramp_ratio0(u: f64) -> f64 {
    if u.is_nan() {
        f64::NAN
    } else if u <= 0.0 {
        0.0
    } else if u <= 0.5 {
        boundary_layer_ratio(u)
    } else if u < 1.0 {
        ramp0(u) / zeta0(u)
    } else {
        u - 0.5
    }
}

fn check_ordered(p: &StepParams) -> Result<()> {
    if p.s0 < p.s1 {
        Ok(())
    } else {
        Err(invalid(
            "ramp",
            format!("ramp needs s0 < s1, got ({}, {})", p.s0, p.s1),
        ))
    }
}

/// Smooth ramp `int_{s0}^{s} zeta(x; s0, s1) dx`.
pub fn ramp(s: f64, p: &StepParams) -> Result<f64> {
    check_ordered(p)?;
    Ok(ramp_unchecked(s, p))
}

pub(crate) fn ramp_unchecked(s: f64, p: &StepParams) -> f64 {
    let w = p.width();
    let u = (s - p.s0) / w;
    if u >= 1.0 {
        // exact linear tail
        s - 0.5 * (p.s0 + p.s1)
    } else {
        w * ramp0(u)
    }
}

/// Ramp on a jet; derivatives follow from `ramp' = zeta`.
pub fn ramp_jet<const N: usize>(s: Jet<N>, p: &StepParams) -> Result<Jet<N>> {
    check_ordered(p)?;
    let v = s.value();
    let step = zeta_jet(Jet::<N>::variable(v), p);
    let mut taylor = [0.0; N];
    taylor[0] = ramp_unchecked(v, p);
    for k in 1..N {
        taylor[k] = step.coeff(k - 1) / k as f64;
    }
    Ok(s.compose(&taylor))
}

/// `ramp(s) / zeta(s)` with its derivative, evaluated without forming the
/// quotient of two underflowing numbers. Zero for `s <= s0`.
pub fn ramp_ratio(s: Dual, p: &StepParams) -> Result<Dual> {
    check_ordered(p)?;
    let w = p.width();
    let u = (s.value() - p.s0) / w;
    if u <= 0.0 {
        return Ok(Dual::constant(0.0));
    }
    let r0 = ramp_ratio0(u);
    let slope = if u >= 1.0 { 1.0 } else { 1.0 - r0 * dln_zeta0(u) };
    Ok(s.compose(&[w * r0, slope]))
}

/// Inverse of the ramp on `[0, inf)`: the `s >= s0` with `ramp(s) = v`.
pub fn ramp_inverse(v: f64, p: &StepParams) -> Result<f64> {
    check_ordered(p)?;
    let tail = 0.5 * p.width();
    if v <= 0.0 {
        return Ok(p.s0);
    }
    if v >= tail {
        return Ok(v + 0.5 * (p.s0 + p.s1));
    }
    // Newton on Z' = zeta, falling back to bisection outside the bracket
    let (mut lo, mut hi) = (p.s0, p.s1);
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = ramp_unchecked(s, p) - v;
        if f == 0.0 {
            return Ok(s);
        }
        if f < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let d = zeta(s, p);
        let newton = s - f / d;
        let next = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if next == s || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
            return Ok(next);
        }
        s = next;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sp(a: f64, b: f64) -> StepParams {
        StepParams::new(a, b).unwrap()
    }

    /// Adaptive Simpson, used only as an independent oracle for the ramp.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64 + Copy>(
            f: F,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn varpi_examples() {
        assert_eq!(varpi(0.0), 0.0);
        assert_eq!(varpi(-3.7), 0.0);
        assert_relative_eq!(varpi(1.0), (-1f64).exp(), max_relative = 1e-15);
        assert!((varpi(1.0) - 0.3678794).abs() < 1e-7);
        assert_eq!(varpi(1e-310), 0.0);
    }

    #[test]
    fn zeta0_examples() {
        assert_eq!(zeta0(-1.0), 0.0);
        assert_eq!(zeta0(2.0), 1.0);
        assert_relative_eq!(zeta0(0.5), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn zeta0_matches_ratio_definition() {
        for i in 1..100 {
            let s = i as f64 / 100.0;
            let direct = varpi(s) / (varpi(s) + varpi(1.0 - s));
            assert_relative_eq!(zeta0(s), direct, max_relative = 1e-13);
        }
    }

    #[test]
    fn zeta_examples() {
        let p = sp(0.02, 0.03);
        assert_eq!(zeta(0.02, &p), 0.0);
        assert_eq!(zeta(0.03, &p), 1.0);
        // reversed endpoints: one to the left of (14, 17), zero to the right
        assert_eq!(zeta(5.0, &sp(17.0, 14.0)), 1.0);
        assert_eq!(zeta(20.0, &sp(17.0, 14.0)), 0.0);
    }

    #[test]
    fn equal_endpoints_rejected() {
        assert!(StepParams::new(1.0, 1.0).is_err());
        assert!(StepParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn derivative_examples() {
        let p = sp(0.0, 1.0);
        assert_eq!(zeta_derivative(0.0, &p, 1).unwrap(), 0.0);
        assert_eq!(zeta_derivative(1.0, &p, 1).unwrap(), 0.0);
        let h = 1e-5;
        let x = 0.5;
        let fd = (zeta0(x + h) - zeta0(x - h)) / (2.0 * h);
        assert_relative_eq!(zeta_derivative(x, &p, 1).unwrap(), fd, max_relative = 1e-8);
        assert!(zeta_derivative(0.5, &p, 0).is_err());
        assert!(zeta_derivative(0.5, &p, 5).is_err());
    }

    #[test]
    fn higher_derivatives_match_finite_differences() {
        let p = sp(7.0, 10.0);
        let smooth = zeta_smooth(8.1, &p, 4).unwrap();
        let h = 1e-3;
        for k in 1..4 {
            let f = |s: f64| zeta_derivative(s, &p, k).unwrap();
            let fd = (f(8.1 + h) - f(8.1 - h)) / (2.0 * h);
            assert_relative_eq!(smooth.derivatives[k], fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn ramp_examples() {
        let d = 0.025;
        let p = sp(0.0, d);
        assert_eq!(ramp(-1.0, &p).unwrap(), 0.0);
        assert_eq!(ramp(0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(ramp(d + 1.0, &p).unwrap(), 1.0 + d / 2.0, max_relative = 1e-15);
        let mid = 0.5 * d;
        let oracle = simpson(|x| zeta(x, &p), 0.0, mid, 1e-15);
        assert!((ramp(mid, &p).unwrap() - oracle).abs() < 1e-10);
        assert!(ramp(0.5, &sp(1.0, 0.0)).is_err());
    }

    #[test]
    fn ramp_tail_is_continuous() {
        let p = sp(0.0, 1.0);
        // int_0^1 zeta0 = 1/2 by symmetry
        assert_relative_eq!(ramp(1.0 - 1e-12, &p).unwrap(), 0.5, epsilon = 1e-11);
        assert_relative_eq!(ramp(1.0, &p).unwrap(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn ramp_matches_simpson_oracle_on_grid() {
        let p = sp(0.3, 1.7);
        for i in 0..=60 {
            let s = 0.2 + i as f64 * 0.025;
            let oracle = if s <= 0.3 { 0.0 } else { simpson(|x| zeta(x, &p), 0.3, s, 1e-15) };
            let z = ramp(s, &p).unwrap();
            assert!((z - oracle).abs() < 1e-12, "s = {s}: {z} vs {oracle}");
        }
    }

    #[test]
    fn ramp_relative_accuracy_near_start() {
        // Ratio form must stay accurate where both ramp and step are tiny.
        let p = sp(0.0, 1.0);
        for &u in &[0.003, 0.01, 0.05, 0.2] {
            let oracle = simpson(zeta0, 0.0, u, zeta0(u) * 1e-14);
            let z = ramp(u, &p).unwrap();
            assert_relative_eq!(z, oracle, max_relative = 1e-9);
            let r = ramp_ratio(Dual::constant(u), &p).unwrap().value();
            assert_relative_eq!(r, oracle / zeta0(u), max_relative = 1e-9);
        }
    }

    #[test]
    fn ramp_ratio_derivative_matches_finite_difference() {
        let p = sp(0.0, 0.025);
        for &s in &[0.002, 0.008, 0.0125, 0.02, 0.03] {
            let d = ramp_ratio(Dual::variable(s), &p).unwrap();
            let h = 1e-7;
            let f = |x: f64| ramp_ratio(Dual::constant(x), &p).unwrap().value();
            let fd = (f(s + h) - f(s - h)) / (2.0 * h);
            assert_relative_eq!(d.derivative(1), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn ramp_inverse_round_trips() {
        let p = sp(0.0, 0.025);
        for &v in &[1e-30, 1e-8, 1e-4, 0.005, 0.0125, 0.3] {
            let s = ramp_inverse(v, &p).unwrap();
            assert_relative_eq!(ramp(s, &p).unwrap(), v, max_relative = 1e-9);
        }
        assert_eq!(ramp_inverse(0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn ramp_jet_derivatives_are_steps() {
        let p = sp(0.0, 2.0);
        let j = ramp_jet(Jet5::variable(0.7), &p).unwrap();
        assert_relative_eq!(j.derivative(1), zeta(0.7, &p), max_relative = 1e-14);
        assert_relative_eq!(
            j.derivative(2),
            zeta_derivative(0.7, &p, 1).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn no_kink_at_step_endpoints() {
        // First and second divided differences across the endpoints vanish.
        let p = sp(2.0, 5.0);
        for &edge in &[2.0, 5.0] {
            let mut prev = f64::INFINITY;
            for &h in &[0.8, 0.4, 0.2, 0.1] {
                let d1 = (zeta(edge + h, &p) - zeta(edge - h, &p)) / (2.0 * h);
                let d2 = (zeta(edge + h, &p) - 2.0 * zeta(edge, &p) + zeta(edge - h, &p)) / (h * h);
                let m = d1.abs().max(d2.abs());
                assert!(m < prev || m == 0.0);
                prev = m;
            }
            assert!(prev < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn varpi_range_and_monotone(a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(varpi(lo) >= 0.0 && varpi(lo) < 1.0);
            prop_assert!(varpi(lo) <= varpi(hi));
        }

        #[test]
        fn zeta_bounded_monotone_and_reversible(
            s0 in -5.0..5.0f64, w in 0.01..5.0f64, a in -12.0..12.0f64, b in -12.0..12.0f64,
        ) {
            let p = sp(s0, s0 + w);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (zl, zh) = (zeta(lo, &p), zeta(hi, &p));
            prop_assert!((0.0..=1.0).contains(&zl));
            prop_assert!(zl <= zh);
            prop_assert!((1.0 - zeta(a, &p) - zeta(a, &p.reversed())).abs() <= 1e-14);
        }

        #[test]
        fn ramp_derivative_is_step(s in -0.01..0.04f64) {
            let p = sp(0.0, 0.025);
            let h = 1e-7;
            let fd = (ramp(s + h, &p).unwrap() - ramp(s - h, &p).unwrap()) / (2.0 * h);
            prop_assert!((fd - zeta(s, &p)).abs() < 1e-7);
        }

        #[test]
        fn ramp_below_positive_part(s in 0.0..0.1f64) {
            let p = sp(0.0, 0.025);
            prop_assert!(ramp(s, &p).unwrap() <= s.max(0.0));
        }

        #[test]
        fn ramp_monotone_and_convex(a in 0.0..0.025f64, b in 0.0..0.025f64) {
            let p = sp(0.0, 0.025);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (zl, zh) = (ramp(lo, &p).unwrap(), ramp(hi, &p).unwrap());
            prop_assert!(zl <= zh + 1e-18);
            let zm = ramp(0.5 * (lo + hi), &p).unwrap();
            prop_assert!(zm <= 0.5 * (zl + zh) + 1e-15);
        }
    }
}
