//! Ego tracking cost, two-circle collision penalty and their convex models.
//!
//! Each agent is covered by two circles on its body axis (front `f`, rear `r`). For a
//! pair of agents the four circle pairs are always laid out as `ff, fr, rf, rr`, where
//! the first letter is the circle of the *first* trajectory argument.

use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix4, RowVector4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{State, Trajectory};
use crate::error::{Error, Result};
use crate::math::{cos, sin, sqrt};

/// Diagonal tracking weights `Q = diag(q)`, `R = diag(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingWeights {
    pub q: [f64; 4],
    pub r: [f64; 2],
}

impl TrackingWeights {
    pub fn new(q: [f64; 4], r: [f64; 2]) -> Self {
        TrackingWeights { q, r }
    }

    pub fn q_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.q))
    }

    pub fn r_matrix(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::from(self.r))
    }

    pub fn scaled(&self, k: f64) -> Self {
        TrackingWeights {
            q: self.q.map(|w| w * k),
            r: self.r.map(|w| w * k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.iter().chain(self.r.iter()).any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::config("weights", "tracking weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

fn weighted_sq(d: &[f64], w: &[f64]) -> f64 {
    d.iter().zip(w).map(|(d, w)| w * d * d).sum()
}

fn state_error(x: &State, r: &State) -> [f64; 4] {
    [x.px - r.px, x.py - r.py, x.heading - r.heading, x.v - r.v]
}

/// `sum_t |x_t - x_ref,t|_Q^2 + |u_t|_R^2` over all states and controls.
pub fn ego_cost(traj: &Trajectory, reference: &[State], weights: &TrackingWeights) -> Result<f64> {
    if reference.len() != traj.states.len() {
        return Err(Error::LengthMismatch {
            what: "reference",
            expected: traj.states.len(),
            found: reference.len(),
        });
    }
    let states: f64 = traj
        .states
        .iter()
        .zip(reference)
        .map(|(x, r)| weighted_sq(&state_error(x, r), &weights.q))
        .sum();
    let controls: f64 = traj
        .controls
        .iter()
        .map(|u| weighted_sq(&[u.steer, u.accel], &weights.r))
        .sum();
    Ok(states + controls)
}

/// Exact quadratic model of the ego cost in the perturbation `dX` about a nominal.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoQuadratic {
    /// `x_t - x_ref,t` for t = 0..=T.
    pub state_err: Vec<Vector4<f64>>,
    /// Nominal controls for t = 0..T-1.
    pub controls: Vec<Vector2<f64>>,
    pub q: Matrix4<f64>,
    pub r: Matrix2<f64>,
}

impl EgoQuadratic {
    pub fn value(&self, dx: &[Vector4<f64>], du: &[Vector2<f64>]) -> f64 {
        let s: f64 = self
            .state_err
            .iter()
            .zip(dx)
            .map(|(e, d)| {
                let z = e + d;
                z.dot(&(self.q * z))
            })
            .sum();
        let c: f64 = self
            .controls
            .iter()
            .zip(du)
            .map(|(u, d)| {
                let z = u + d;
                z.dot(&(self.r * z))
            })
            .sum();
        s + c
    }

    /// Gradient wrt `dx_t` at zero.
    pub fn state_gradient(&self, t: usize) -> Vector4<f64> {
        2.0 * self.q * self.state_err[t]
    }

    /// Gradient wrt `du_t` at zero.
    pub fn control_gradient(&self, t: usize) -> Vector2<f64> {
        2.0 * self.r * self.controls[t]
    }

    pub fn state_hessian(&self) -> Matrix4<f64> {
        2.0 * self.q
    }

    pub fn control_hessian(&self) -> Matrix2<f64> {
        2.0 * self.r
    }
}

pub fn convexify_ego(
    traj: &Trajectory,
    reference: &[State],
    weights: &TrackingWeights,
) -> Result<EgoQuadratic> {
    if reference.len() != traj.states.len() {
        return Err(Error::LengthMismatch {
            what: "reference",
            expected: traj.states.len(),
            found: reference.len(),
        });
    }
    Ok(EgoQuadratic {
        state_err: traj
            .states
            .iter()
            .zip(reference)
            .map(|(x, r)| Vector4::from(state_error(x, r)))
            .collect(),
        controls: traj.controls.iter().map(|u| u.to_vector()).collect(),
        q: weights.q_matrix(),
        r: weights.r_matrix(),
    })
}

/// Longitudinal offsets of the front and rear covering circles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub front: f64,
    pub rear: f64,
}

impl Footprint {
    pub fn new(front: f64, rear: f64) -> Self {
        Footprint { front, rear }
    }

    /// Circles at `+b/4` and `-b/4` from the rear-axle reference point.
    pub fn for_wheelbase(b: f64) -> Self {
        Footprint::new(0.25 * b, -0.25 * b)
    }

    pub fn offsets(&self) -> [f64; 2] {
        [self.front, self.rear]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionSpec {
    pub d_safe: f64,
    pub beta: f64,
}

impl CollisionSpec {
    pub fn new(d_safe: f64, beta: f64) -> Self {
        CollisionSpec { d_safe, beta }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_safe > 0.0) {
            return Err(Error::config("collision.d_safe", "must be > 0"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::config("collision.beta", "must be > 0"));
        }
        Ok(())
    }
}

/// Front and rear circle centers of a pose.
pub fn circle_centers(x: &State, footprint: &Footprint) -> [[f64; 2]; 2] {
    let (s, c) = (sin(x.heading), cos(x.heading));
    footprint.offsets().map(|o| [x.px + o * c, x.py + o * s])
}

/// d(center)/dx for a circle at longitudinal offset `o`.
fn center_jacobian(x: &State, o: f64) -> [[f64; 4]; 2] {
    let (s, c) = (sin(x.heading), cos(x.heading));
    [[1.0, 0.0, -o * s, 0.0], [0.0, 1.0, o * c, 0.0]]
}

/// Hinge residuals `l` of the four circle pairs at one time step.
pub fn pair_residuals(a: &State, b: &State, footprint: &Footprint, spec: &CollisionSpec) -> [f64; 4] {
    let ca = circle_centers(a, footprint);
    let cb = circle_centers(b, footprint);
    let sb = sqrt(spec.beta);
    let mut out = [0.0; 4];
    for (i, pa) in ca.iter().enumerate() {
        for (j, pb) in cb.iter().enumerate() {
            let (dx, dy) = (pa[0] - pb[0], pa[1] - pb[1]);
            let d = sqrt(dx * dx + dy * dy);
            if d < spec.d_safe {
                out[2 * i + j] = sb * (d - spec.d_safe);
            }
        }
    }
    out
}

/// `sum_t sum_pairs l^2`, symmetric in `a` and `b` to the bit.
pub fn collision_cost(
    a: &Trajectory,
    b: &Trajectory,
    footprint: &Footprint,
    spec: &CollisionSpec,
) -> Result<f64> {
    if a.states.len() != b.states.len() {
        return Err(Error::LengthMismatch {
            what: "collision horizon",
            expected: a.states.len(),
            found: b.states.len(),
        });
    }
    Ok(a.states
        .iter()
        .zip(&b.states)
        .map(|(xa, xb)| {
            let l = pair_residuals(xa, xb, footprint, spec);
            // grouped so that swapping the agents gives a bit-identical sum
            (l[0] * l[0] + l[3] * l[3]) + (l[1] * l[1] + l[2] * l[2])
        })
        .sum())
}

/// Linearized hinge residuals at one step: `l + rows_a dx_a + rows_b dx_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingStep {
    pub rows_a: Matrix4<f64>,
    pub rows_b: Matrix4<f64>,
    pub offset: Vector4<f64>,
}

impl CouplingStep {
    pub fn zero() -> Self {
        CouplingStep {
            rows_a: Matrix4::zeros(),
            rows_b: Matrix4::zeros(),
            offset: Vector4::zeros(),
        }
    }

    pub fn is_inactive(&self) -> bool {
        self.offset.iter().all(|v| *v == 0.0)
            && self.rows_a.iter().all(|v| *v == 0.0)
            && self.rows_b.iter().all(|v| *v == 0.0)
    }
}

/// Gauss–Newton model of the pairwise collision cost.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonCoupling {
    pub steps: Vec<CouplingStep>,
}

impl GaussNewtonCoupling {
    pub fn value(&self, dxa: &[Vector4<f64>], dxb: &[Vector4<f64>]) -> f64 {
        self.steps
            .iter()
            .zip(dxa.iter().zip(dxb))
            .map(|(s, (a, b))| (s.rows_a * a + s.rows_b * b + s.offset).norm_squared())
            .sum()
    }

    pub fn is_inactive(&self) -> bool {
        self.steps.iter().all(CouplingStep::is_inactive)
    }
}

fn coupling_step(a: &State, b: &State, footprint: &Footprint, spec: &CollisionSpec) -> CouplingStep {
    let ca = circle_centers(a, footprint);
    let cb = circle_centers(b, footprint);
    let offsets = footprint.offsets();
    let sb = sqrt(spec.beta);
    let mut step = CouplingStep::zero();
    for i in 0..2 {
        for j in 0..2 {
            let k = 2 * i + j;
            let dx = ca[i][0] - cb[j][0];
            let dy = ca[i][1] - cb[j][1];
            let d = sqrt(dx * dx + dy * dy);
            // inactive on and beyond the safety radius; coincident centers have no direction
            if !(d < spec.d_safe) || d <= 1e-12 {
                if d < spec.d_safe {
                    step.offset[k] = sb * (d - spec.d_safe);
                }
                continue;
            }
            step.offset[k] = sb * (d - spec.d_safe);
            let (nx, ny) = (dx / d, dy / d);
            let ja = center_jacobian(a, offsets[i]);
            let jb = center_jacobian(b, offsets[j]);
            let row_a = RowVector4::from_fn(|_, c| sb * (nx * ja[0][c] + ny * ja[1][c]));
            let row_b = RowVector4::from_fn(|_, c| -sb * (nx * jb[0][c] + ny * jb[1][c]));
            step.rows_a.set_row(k, &row_a);
            step.rows_b.set_row(k, &row_b);
        }
    }
    step
}

pub fn convexify_coupling(
    a: &Trajectory,
    b: &Trajectory,
    footprint: &Footprint,
    spec: &CollisionSpec,
) -> Result<GaussNewtonCoupling> {
    if a.states.len() != b.states.len() {
        return Err(Error::LengthMismatch {
            what: "collision horizon",
            expected: a.states.len(),
            found: b.states.len(),
        });
    }
    Ok(GaussNewtonCoupling {
        steps: a
            .states
            .iter()
            .zip(&b.states)
            .map(|(xa, xb)| coupling_step(xa, xb, footprint, spec))
            .collect(),
    })
}

/// `sum_{h != h'} sum_{t < t_b} |x^h_t - x^h'_t|^2_Qc` over ordered plan pairs.
pub fn contingency_penalty(plans: &[Trajectory], t_b: usize, weights: &[f64; 4]) -> Result<f64> {
    let Some(first) = plans.first() else {
        return Ok(0.0);
    };
    let len = first.states.len();
    if t_b > len.saturating_sub(1) {
        return Err(Error::BranchOutOfRange {
            t_b,
            horizon: len.saturating_sub(1),
        });
    }
    for p in plans {
        if p.states.len() != len {
            return Err(Error::LengthMismatch {
                what: "contingency plans",
                expected: len,
                found: p.states.len(),
            });
        }
    }
    let mut total = 0.0;
    for (h, a) in plans.iter().enumerate() {
        for (g, b) in plans.iter().enumerate() {
            if h == g {
                continue;
            }
            for t in 0..t_b {
                total += weighted_sq(&state_error(&a.states[t], &b.states[t]), weights);
            }
        }
    }
    Ok(total)
}
