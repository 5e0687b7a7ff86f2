use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::jet::{Jet, Jet3, Jet5};
use crate::shaping::{zeta_jet, StepParams};

/// Reference position and its time derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample {
    /// `derivs[k]` is the k-th time derivative of the reference position.
    pub derivs: [Vector2<f64>; 5],
}

impl TrajectorySample {
    pub fn position(&self) -> Vector2<f64> {
        self.derivs[0]
    }

    pub fn velocity(&self) -> Vector2<f64> {
        self.derivs[1]
    }

    pub fn acceleration(&self) -> Vector2<f64> {
        self.derivs[2]
    }

    /// The k-th derivative as a second-order jet in time, for `k <= 2`.
    pub fn jet(&self, k: usize) -> [Jet3; 2] {
        let d = &self.derivs;
        [0, 1].map(|i| Jet3::from_coeffs([d[k][i], d[k + 1][i], 0.5 * d[k + 2][i]]))
    }
}

/// Which reference the outer loop tracks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// The 10 x 10 square flown clockwise from the bottom-left corner.
    Square,
    /// A fixed point.
    Hover { x: f64, y: f64 },
}

impl TrajectoryKind {
    pub fn sample(&self, t: f64) -> TrajectorySample {
        match *self {
            TrajectoryKind::Square => square_trajectory(t),
            TrajectoryKind::Hover { x, y } => hover_trajectory(Vector2::new(x, y)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrajectoryKind::Square => "square",
            TrajectoryKind::Hover { .. } => "hover",
        }
    }
}

fn smooth_pulse(t: Jet5, rise: (f64, f64), fall: (f64, f64)) -> Jet5 {
    let up = zeta_jet(t, &StepParams::between(rise.0, rise.1));
    let down = zeta_jet(t, &StepParams::between(fall.0, fall.1));
    (up - down) * 10.0
}

fn from_jets(x: Jet<5>, y: Jet<5>) -> TrajectorySample {
    TrajectorySample {
        derivs: std::array::from_fn(|k| Vector2::new(x.derivative(k), y.derivative(k))),
    }
}

/// Up for 0-3 s, right for 7-10 s, down for 14-17 s, left for 21-24 s.
pub fn square_trajectory(t: f64) -> TrajectorySample {
    let tj = Jet5::variable(t);
    let y = smooth_pulse(tj, (0.0, 3.0), (14.0, 17.0));
    let x = smooth_pulse(tj, (7.0, 10.0), (21.0, 24.0));
    from_jets(x, y)
}

pub fn hover_trajectory(p: Vector2<f64>) -> TrajectorySample {
    let mut derivs = [Vector2::zeros(); 5];
    derivs[0] = p;
    TrajectorySample { derivs }
}
