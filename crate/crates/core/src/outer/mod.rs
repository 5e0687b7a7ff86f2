//! Outer-loop vehicle models, the baseline controller and the chain that
//! turns tracking error into `a*`, `a*'` and `a*''`.
//!
//! A model supplies `x' = f(t, x) + g(t, x) a` plus a baseline law
//! `a* = kappa(t, e)`. Every hook is written over second-order jets in time,
//! so the derivatives of `a*` come out of the same code that produces its
//! value.

mod trajectory;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::rot90;
use crate::inner::{ActuationTarget, PivotState};
use crate::jet::Jet3;

pub use trajectory::{hover_trajectory, square_trajectory, TrajectoryKind, TrajectorySample};

pub const GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineGains {
    pub k_x: f64,
    pub k_v: f64,
}

impl BaselineGains {
    pub fn paper() -> Self {
        Self {
            k_x: 3.1623,
            k_v: 4.0404,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k_x", self.k_x), ("k_v", self.k_v)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `[[0, I], [-k_x I, -k_v I]]` and `B = [0; I]`.
    pub fn multirotor_error_system(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut a = DMatrix::zeros(4, 4);
        let mut b = DMatrix::zeros(4, 2);
        for i in 0..2 {
            a[(i, i + 2)] = 1.0;
            a[(i + 2, i)] = -self.k_x;
            a[(i + 2, i + 2)] = -self.k_v;
            b[(i + 2, i)] = 1.0;
        }
        (a, b)
    }
}

/// Multirotor drift `[v; -g e2]`.
pub fn multirotor_f(_t: f64, x: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(x[2], x[3], 0.0, -GRAVITY)
}

/// Baseline law `x*'' + g e2 - k_x e_p - k_v e_v` (the `C A^2 x` term is
/// identically zero and `C A B = I`).
pub fn kappa(
    _t: f64,
    e: &Vector4<f64>,
    traj: &TrajectorySample,
    gains: &BaselineGains,
    _x: &Vector4<f64>,
) -> Vector2<f64> {
    let acc = traj.acceleration();
    let lift = [0.0, GRAVITY];
    Vector2::from_fn(|i, _| acc[i] + lift[i] - e[i] * gains.k_x - e[i + 2] * gains.k_v)
}

fn multirotor_kappa_jet(e: &[Jet3], traj: &TrajectorySample, gains: &BaselineGains) -> [Jet3; 2] {
    let acc = traj.jet(2);
    let lift = [0.0, GRAVITY];
    [0, 1].map(|i| acc[i] + lift[i] - e[i] * gains.k_x - e[i + 2] * gains.k_v)
}

type DriftHook = dyn Fn(Jet3, &[Jet3]) -> Vec<Jet3> + Send + Sync;
type InputHook = dyn Fn(Jet3, &[Jet3]) -> Vec<[Jet3; 2]> + Send + Sync;
type ReferenceHook = dyn Fn(&TrajectorySample) -> Vec<Jet3> + Send + Sync;
type KappaHook = dyn Fn(Jet3, &[Jet3], &[Jet3], &TrajectorySample, &BaselineGains) -> [Jet3; 2] + Send + Sync;
type LinearHook = dyn Fn(&BaselineGains) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync;

/// Collects the hooks of a vehicle model before validation.
pub struct ModelBuilder {
    name: String,
    dim: usize,
    f: Option<Arc<DriftHook>>,
    g: Option<Arc<InputHook>>,
    reference: Option<Arc<ReferenceHook>>,
    kappa: Option<Arc<KappaHook>>,
    linear: Option<Arc<LinearHook>>,
    probes: Vec<Vec<f64>>,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
            f: None,
            g: None,
            reference: None,
            kappa: None,
            linear: None,
            probes: Vec::new(),
        }
    }

    /// Drift `f(t, x)` over jets in time.
    pub fn drift(mut self, f: impl Fn(Jet3, &[Jet3]) -> Vec<Jet3> + Send + Sync + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    /// Input matrix `g(t, x)`, one row per state.
    pub fn input_matrix(mut self, g: impl Fn(Jet3, &[Jet3]) -> Vec<[Jet3; 2]> + Send + Sync + 'static) -> Self {
        self.g = Some(Arc::new(g));
        self
    }

    /// Reference state `x*(t)` built from the position reference.
    pub fn reference(mut self, r: impl Fn(&TrajectorySample) -> Vec<Jet3> + Send + Sync + 'static) -> Self {
        self.reference = Some(Arc::new(r));
        self
    }

    /// Baseline law `kappa(t, e, x, x*, gains)`.
    pub fn kappa(
        mut self,
        k: impl Fn(Jet3, &[Jet3], &[Jet3], &TrajectorySample, &BaselineGains) -> [Jet3; 2] + Send + Sync + 'static,
    ) -> Self {
        self.kappa = Some(Arc::new(k));
        self
    }

    /// Closed-loop error matrices `(A_cl, B)` under the baseline law.
    pub fn linear_error_system(
        mut self,
        l: impl Fn(&BaselineGains) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.linear = Some(Arc::new(l));
        self
    }

    /// Extra states at which `g` is checked for rank and size.
    pub fn probe_points(mut self, probes: Vec<Vec<f64>>) -> Self {
        self.probes = probes;
        self
    }

    pub fn register(self) -> Result<VehicleModel> {
        let missing = |what: &str| Error::Registration(format!("model `{}` is missing its {what} hook", self.name));
        let f = self.f.clone().ok_or_else(|| missing("drift"))?;
        let g = self.g.clone().ok_or_else(|| missing("input-matrix"))?;
        let reference = self.reference.clone().ok_or_else(|| missing("reference"))?;
        let kappa = self.kappa.clone().ok_or_else(|| missing("kappa"))?;
        if self.dim < 2 {
            return Err(Error::Registration(format!(
                "model `{}` has state dimension {} < 2",
                self.name, self.dim
            )));
        }

        let mut probes = self.probes.clone();
        probes.push(vec![0.0; self.dim]);
        probes.push((0..self.dim).map(|i| if i % 2 == 0 { 10.0 } else { -7.5 }).collect());
        probes.push((0..self.dim).map(|i| 0.3 * i as f64 - 1.0).collect());

        let mut g_bar: f64 = 0.0;
        for x in &probes {
            if x.len() != self.dim {
                return Err(Error::Registration(format!("probe point of length {} for dimension {}", x.len(), self.dim)));
            }
            for &t in &[0.0, 1.0, 10.0] {
                let xj: Vec<Jet3> = x.iter().map(|&v| Jet3::constant(v)).collect();
                let gm = g(Jet3::constant(t), &xj);
                let fx = f(Jet3::constant(t), &xj);
                if gm.len() != self.dim || fx.len() != self.dim {
                    return Err(Error::Registration(format!(
                        "model `{}`: hook output does not match dimension {}",
                        self.name, self.dim
                    )));
                }
                let m = DMatrix::from_fn(self.dim, 2, |i, j| gm[i][j].value());
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Registration(format!("model `{}`: g is not finite at {x:?}", self.name)));
                }
                let sv = m.svd(false, false).singular_values;
                let (hi, lo) = (sv.max(), sv.min());
                if hi > 1e6 {
                    return Err(Error::Registration(format!("model `{}`: g is unbounded near {x:?}", self.name)));
                }
                if lo <= 1e-9 * hi.max(1.0) {
                    return Err(Error::Registration(format!(
                        "model `{}`: g is not full rank at t = {t}, x = {x:?}",
                        self.name
                    )));
                }
                g_bar = g_bar.max(hi);
            }
        }

        Ok(VehicleModel {
            name: self.name,
            dim: self.dim,
            f,
            g,
            reference,
            kappa,
            linear: self.linear,
            g_bar,
        })
    }
}

/// A registered, validated model; cheap to clone and immutable.
#[derive(Clone)]
pub struct VehicleModel {
    name: String,
    dim: usize,
    f: Arc<DriftHook>,
    g: Arc<InputHook>,
    reference: Arc<ReferenceHook>,
    kappa: Arc<KappaHook>,
    linear: Option<Arc<LinearHook>>,
    g_bar: f64,
}

impl fmt::Debug for VehicleModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VehicleModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("g_bar", &self.g_bar)
            .finish_non_exhaustive()
    }
}

/// Output of the actuation chain at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub target: ActuationTarget,
    /// Applied actuation `lambda u1`.
    pub applied: Vector2<f64>,
    pub x_dot: Vec<f64>,
    pub error: Vec<f64>,
}

fn constants(x: &[f64]) -> Vec<Jet3> {
    x.iter().map(|&v| Jet3::constant(v)).collect()
}

impl VehicleModel {
    /// Planar multirotor: state `[position; velocity]`, `g = [0; I]`.
    pub fn multirotor() -> Self {
        ModelBuilder::new("multirotor", 4)
            .drift(|_t, x| vec![x[2], x[3], Jet3::constant(0.0), Jet3::constant(-GRAVITY)])
            .input_matrix(|_t, _x| {
                let (z, o) = (Jet3::constant(0.0), Jet3::constant(1.0));
                vec![[z, z], [z, z], [o, z], [z, o]]
            })
            .reference(|s| {
                let (p, v) = (s.jet(0), s.jet(1));
                vec![p[0], p[1], v[0], v[1]]
            })
            .kappa(|_t, e, _x, s, k| multirotor_kappa_jet(e, s, k))
            .linear_error_system(|k| k.multirotor_error_system())
            .register()
            .expect("built-in multirotor is well formed")
    }

    /// `x' = a`, tracked with `a* = x*' - k_x e`.
    pub fn single_integrator() -> Self {
        ModelBuilder::new("single_integrator", 2)
            .drift(|_t, _x| vec![Jet3::constant(0.0); 2])
            .input_matrix(|_t, _x| {
                let (z, o) = (Jet3::constant(0.0), Jet3::constant(1.0));
                vec![[o, z], [z, o]]
            })
            .reference(|s| s.jet(0).to_vec())
            .kappa(|_t, e, _x, s, k| {
                let v = s.jet(1);
                [v[0] - e[0] * k.k_x, v[1] - e[1] * k.k_x]
            })
            .linear_error_system(|k| {
                (DMatrix::identity(2, 2) * -k.k_x, DMatrix::identity(2, 2))
            })
            .register()
            .expect("built-in single integrator is well formed")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "multirotor" => Ok(Self::multirotor()),
            "single_integrator" => Ok(Self::single_integrator()),
            other => Err(invalid("model", format!("unknown model `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `sup |g|` over the registration probe points.
    pub fn g_bar(&self) -> f64 {
        self.g_bar
    }

    pub fn drift(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (self.f)(Jet3::constant(t), &constants(x)).iter().map(|j| j.value()).collect()
    }

    pub fn input_matrix(&self, t: f64, x: &[f64]) -> Vec<[f64; 2]> {
        (self.g)(Jet3::constant(t), &constants(x))
            .iter()
            .map(|row| [row[0].value(), row[1].value()])
            .collect()
    }

    /// `f(t, x) + g(t, x) a`.
    pub fn dynamics(&self, t: f64, x: &[f64], a: &Vector2<f64>) -> Vec<f64> {
        let f = self.drift(t, x);
        let g = self.input_matrix(t, x);
        f.iter().zip(&g).map(|(fi, gi)| fi + gi[0] * a.x + gi[1] * a.y).collect()
    }

    pub fn reference_state(&self, traj: &TrajectorySample) -> Vec<f64> {
        (self.reference)(traj).iter().map(|j| j.value()).collect()
    }

    pub fn kappa(&self, t: f64, e: &[f64], x: &[f64], traj: &TrajectorySample, gains: &BaselineGains) -> Vector2<f64> {
        let k = (self.kappa)(Jet3::constant(t), &constants(e), &constants(x), traj, gains);
        Vector2::new(k[0].value(), k[1].value())
    }

    /// `a*`, its first two derivatives along the closed loop, and `x'`.
    ///
    /// The error derivatives use the applied actuation `lambda |a*|`, so
    /// `a*'` and `a*''` are true time derivatives along the trajectory.
    pub fn actuation_chain(
        &self,
        t: f64,
        x: &[f64],
        traj: &TrajectorySample,
        gains: &BaselineGains,
        pivot: &PivotState,
    ) -> ChainOutput {
        let n = self.dim;
        let tj = Jet3::from_coeffs([t, 1.0, 0.0]);
        let xs = (self.reference)(traj);
        let kappa_at = |xj: &[Jet3]| {
            let e: Vec<Jet3> = xj.iter().zip(&xs).map(|(a, b)| *a - *b).collect();
            (self.kappa)(tj, &e, xj, traj, gains)
        };

        // value of a* from the current error
        let x0 = constants(x);
        let k0 = kappa_at(&x0);
        let a_star = Vector2::new(k0[0].value(), k0[1].value());
        let u1 = a_star.norm();
        let lam = pivot.lambda.as_vector();
        let applied = lam * u1;
        let rhs = |xj: &[Jet3], aj: [Jet3; 2]| -> Vec<Jet3> {
            let f = (self.f)(tj, xj);
            let g = (self.g)(tj, xj);
            (0..n).map(|i| f[i] + g[i][0] * aj[0] + g[i][1] * aj[1]).collect()
        };
        let x_dot: Vec<f64> = rhs(&x0, [Jet3::constant(applied.x), Jet3::constant(applied.y)])
            .iter()
            .map(|j| j.value())
            .collect();

        // first derivative through the error jet (x, x')
        let x1: Vec<Jet3> = (0..n).map(|i| Jet3::from_coeffs([x[i], x_dot[i], 0.0])).collect();
        let k1 = kappa_at(&x1);
        let a_star_dot = Vector2::new(k1[0].coeff(1), k1[1].coeff(1));

        // derivative of the applied actuation: S lambda omega u1 + lambda u1'
        let u1_dot = if u1 > 0.0 { a_star.dot(&a_star_dot) / u1 } else { 0.0 };
        let applied_dot = rot90(lam) * (pivot.omega * u1) + lam * u1_dot;
        let aj = [0, 1].map(|i| Jet3::from_coeffs([applied[i], applied_dot[i], 0.0]));
        let x_ddot: Vec<f64> = rhs(&x1, aj).iter().map(|j| j.coeff(1)).collect();

        // second derivative through (x, x', x''/2)
        let x2: Vec<Jet3> = (0..n)
            .map(|i| Jet3::from_coeffs([x[i], x_dot[i], 0.5 * x_ddot[i]]))
            .collect();
        let k2 = kappa_at(&x2);
        let a_star_ddot = Vector2::new(k2[0].derivative(2), k2[1].derivative(2));

        let error = x.iter().zip(&xs).map(|(a, b)| a - b.value()).collect();
        ChainOutput {
            target: ActuationTarget {
                a_star,
                a_star_dot,
                a_star_ddot,
            },
            applied,
            x_dot,
            error,
        }
    }

    /// `int_0^inf |exp(A_cl s) B| ds` for the model's linear error system.
    pub fn iss_gain(&self, gains: &BaselineGains) -> Result<f64> {
        let lin = self
            .linear
            .as_ref()
            .ok_or_else(|| invalid("model", format!("model `{}` has no linear error system", self.name)))?;
        let (a, b) = lin(gains);
        linear_iss_gain(&a, &b)
    }

    /// Ultimate-bound estimate `gamma(g_bar r)`.
    pub fn ultimate_bound(&self, gains: &BaselineGains, r: f64) -> Result<f64> {
        Ok(self.iss_gain(gains)? * self.g_bar * r)
    }
}

/// Spectral norm of a small matrix.
fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// `int_0^inf |exp(A s) B| ds` by composite Simpson on a uniform grid,
/// truncated once the integrand drops below `1e-12`.
pub fn linear_iss_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() || a.nrows() != b.nrows() {
        return Err(invalid("A_cl", "dimension mismatch with B"));
    }
    let worst = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(worst < 0.0) {
        return Err(invalid("gains", format!("closed loop is not Hurwitz (max Re = {worst})")));
    }
    let h = (0.01 / -worst).min(1e-2);
    let step = (a * h).exp();
    let mut phi_b = b.clone();
    let mut prev = spectral_norm(&phi_b);
    let mut total = 0.0;
    let max_panels = 50_000_000usize;
    for _ in 0..max_panels {
        let mid_m = &step * &phi_b;
        let end_m = &step * &mid_m;
        let (mid, end) = (spectral_norm(&mid_m), spectral_norm(&end_m));
        total += h / 3.0 * (prev + 4.0 * mid + end);
        phi_b = end_m;
        prev = end;
        if end < 1e-12 && mid < 1e-12 {
            return Ok(total);
        }
    }
    Err(invalid("A_cl", "ISS gain integral did not converge"))
}
