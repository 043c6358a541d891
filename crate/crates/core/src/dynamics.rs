//! Kinematic single-track (bicycle) model.
//!
//! The rear-axle midpoint advances by an arc-length term `f_r(v, steer)` along the
//! current heading while the heading turns by `asin(dt v sin(steer) / b)`. Heading is
//! never wrapped, so consecutive linearizations stay continuous.

use alloc::vec::Vec;

use nalgebra::{Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{asin, cos, sin, sqrt, FRAC_PI_2};

pub const STATE_DIM: usize = 4;
pub const CONTROL_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub px: f64,
    pub py: f64,
    pub heading: f64,
    pub v: f64,
}

impl State {
    pub const fn new(px: f64, py: f64, heading: f64, v: f64) -> Self {
        State { px, py, heading, v }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.px, self.py, self.heading, self.v)
    }

    pub fn from_vector(x: &Vector4<f64>) -> Self {
        State::new(x[0], x[1], x[2], x[3])
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.heading.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    /// Front-wheel steering angle (rad).
    pub steer: f64,
    /// Longitudinal acceleration (m/s^2).
    pub accel: f64,
}

impl Control {
    pub const fn new(steer: f64, accel: f64) -> Self {
        Control { steer, accel }
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.steer, self.accel)
    }

    pub fn from_vector(u: &Vector2<f64>) -> Self {
        Control::new(u[0], u[1])
    }
}

/// Optional box limits applied by clamping after a trajectory update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlLimits {
    pub max_steer: Option<f64>,
    pub max_accel: Option<f64>,
}

impl ControlLimits {
    /// Symmetric bounds on `[steer, accel]`. Steering always stays strictly inside
    /// `(-pi/2, pi/2)`; acceleration is unbounded unless configured.
    pub fn bounds(&self) -> [f64; 2] {
        let steer = self.max_steer.unwrap_or(FRAC_PI_2 - 1e-6).min(FRAC_PI_2 - 1e-6);
        [steer, self.max_accel.unwrap_or(f64::INFINITY)]
    }

    pub fn clamp(&self, u: Control) -> Control {
        let [s, a] = self.bounds();
        Control::new(u.steer.clamp(-s, s), u.accel.clamp(-a, a))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub controls: Vec<Control>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn initial(&self) -> State {
        self.states[0]
    }

    /// Largest one-step residual `|x[t+1] - step(x[t], u[t])|_inf`.
    pub fn dynamics_residual(&self, model: &BicycleModel) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (t, u) in self.controls.iter().enumerate() {
            let next = model.step(&self.states[t], u)?;
            let diff = next.to_vector() - self.states[t + 1].to_vector();
            worst = worst.max(diff.amax());
        }
        Ok(worst)
    }
}

/// Per-step Jacobians of `step` about a nominal trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedDynamics {
    pub a: Vec<Matrix4<f64>>,
    pub b: Vec<Matrix4x2<f64>>,
}

impl LinearizedDynamics {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicycleModel {
    /// Wheelbase `b` (m).
    pub wheelbase: f64,
    /// Sampling interval (s).
    pub dt: f64,
}

impl BicycleModel {
    pub fn new(wheelbase: f64, dt: f64) -> Self {
        BicycleModel { wheelbase, dt }
    }

    /// Arc-advance of the rear axle over one step.
    pub fn f_r(&self, v: f64, steer: f64) -> Result<f64> {
        let b = self.wheelbase;
        let lateral = self.dt * v * sin(steer);
        let disc = b * b - lateral * lateral;
        if !(disc >= 0.0) {
            return Err(Error::InfeasibleControl { v, steer });
        }
        Ok(b + self.dt * v * cos(steer) - sqrt(disc))
    }

    pub fn step(&self, x: &State, u: &Control) -> Result<State> {
        let arc = self.f_r(x.v, u.steer)?;
        let ratio = self.dt * x.v * sin(u.steer) / self.wheelbase;
        if !(ratio.abs() <= 1.0) {
            return Err(Error::InfeasibleControl { v: x.v, steer: u.steer });
        }
        Ok(State {
            px: x.px + arc * cos(x.heading),
            py: x.py + arc * sin(x.heading),
            heading: x.heading + asin(ratio),
            v: x.v + self.dt * u.accel,
        })
    }

    pub fn rollout(&self, x0: State, controls: &[Control]) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0);
        let mut x = x0;
        for (step, u) in controls.iter().enumerate() {
            x = self.step(&x, u).map_err(|_| Error::InfeasibleStep {
                step,
                v: x.v,
                steer: u.steer,
            })?;
            states.push(x);
        }
        Ok(Trajectory {
            states,
            controls: controls.to_vec(),
        })
    }

    /// Analytic Jacobians `(df/dx, df/du)` at `(x, u)`.
    pub fn jacobians(&self, x: &State, u: &Control) -> Result<(Matrix4<f64>, Matrix4x2<f64>)> {
        let b = self.wheelbase;
        let dt = self.dt;
        let (sd, cd) = (sin(u.steer), cos(u.steer));
        let (sh, ch) = (sin(x.heading), cos(x.heading));
        let lateral = dt * x.v * sd;
        let disc = b * b - lateral * lateral;
        if !(disc > 0.0) {
            return Err(Error::InfeasibleControl { v: x.v, steer: u.steer });
        }
        let root = sqrt(disc);
        let arc = b + dt * x.v * cd - root;

        let arc_v = dt * cd + lateral * dt * sd / root;
        let arc_d = -dt * x.v * sd + lateral * dt * x.v * cd / root;
        let turn_v = dt * sd / root;
        let turn_d = dt * x.v * cd / root;

        #[rustfmt::skip]
        let a = Matrix4::new(
            1.0, 0.0, -arc * sh, arc_v * ch,
            0.0, 1.0,  arc * ch, arc_v * sh,
            0.0, 0.0,  1.0,      turn_v,
            0.0, 0.0,  0.0,      1.0,
        );
        #[rustfmt::skip]
        let bm = Matrix4x2::new(
            arc_d * ch, 0.0,
            arc_d * sh, 0.0,
            turn_d,     0.0,
            0.0,        dt,
        );
        Ok((a, bm))
    }

    pub fn linearize(&self, traj: &Trajectory) -> Result<LinearizedDynamics> {
        let mut a = Vec::with_capacity(traj.horizon());
        let mut b = Vec::with_capacity(traj.horizon());
        for (t, u) in traj.controls.iter().enumerate() {
            let (at, bt) = self.jacobians(&traj.states[t], u)?;
            a.push(at);
            b.push(bt);
        }
        Ok(LinearizedDynamics { a, b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn f_r_straight_and_at_rest() {
        for b in [0.3, 0.5, 2.5] {
            let m = BicycleModel::new(b, 0.1);
            assert!(close(m.f_r(3.0, 0.0).unwrap(), 0.3, 1e-15));
            assert_eq!(m.f_r(0.0, 0.4).unwrap(), 0.0);
        }
    }

    #[test]
    fn f_r_matches_high_precision_value() {
        // f_r(3.0, 0.2) with dt = 0.1, b = 0.5, evaluated with 50-digit arithmetic (mpmath).
        let m = BicycleModel::new(0.5, 0.1);
        let expected = 0.297_584_937_592_274_44;
        assert!(close(m.f_r(3.0, 0.2).unwrap(), expected, 1e-15));
    }

    #[test]
    fn f_r_rejects_imaginary_root() {
        let m = BicycleModel::new(0.1, 0.1);
        let err = m.f_r(10.0, 1.2).unwrap_err();
        assert_eq!(err, Error::InfeasibleControl { v: 10.0, steer: 1.2 });
    }

    #[test]
    fn step_straight_and_accelerating() {
        let m = BicycleModel::new(2.5, 0.1);
        let x = m.step(&State::new(0.0, 0.0, 0.0, 3.0), &Control::default()).unwrap();
        assert!(close(x.px, 0.3, 1e-15) && x.py == 0.0 && x.heading == 0.0 && x.v == 3.0);

        let x = m
            .step(&State::new(0.0, 0.0, PI / 2.0, 2.0), &Control::new(0.0, 1.0))
            .unwrap();
        assert!(close(x.px, 0.0, 1e-15));
        assert!(close(x.py, 0.2, 1e-15));
        assert!(close(x.heading, PI / 2.0, 1e-15));
        assert!(close(x.v, 2.1, 1e-15));
    }

    #[test]
    fn step_matches_high_precision_values() {
        // x = [0,0,0,3], u = [0.1, 0], dt = 0.1, b = 0.5, reference values from mpmath (50 digits).
        let m = BicycleModel::new(0.5, 0.1);
        let x = m.step(&State::new(0.0, 0.0, 0.0, 3.0), &Control::new(0.1, 0.0)).unwrap();
        assert!(close(x.px, 0.299_399_059_643_455_78, 1e-15));
        assert_eq!(x.py, 0.0);
        assert!(close(x.heading, 0.059_935_928_337_291_664, 1e-15));
        assert_eq!(x.v, 3.0);
    }

    #[test]
    fn rollout_zero_controls() {
        let m = BicycleModel::new(2.5, 0.1);
        let traj = m.rollout(State::new(0.0, 0.0, 0.0, 1.0), &[Control::default(); 3]).unwrap();
        let px: Vec<f64> = traj.states.iter().map(|s| s.px).collect();
        for (got, want) in px.iter().zip([0.0, 0.1, 0.2, 0.3]) {
            assert!(close(*got, want, 1e-15));
        }
        let single = m.rollout(State::new(1.0, 2.0, 0.3, 4.0), &[]).unwrap();
        assert_eq!(single.states, vec![State::new(1.0, 2.0, 0.3, 4.0)]);
        assert!(single.controls.is_empty());
    }

    #[test]
    fn rollout_reports_failing_step() {
        let m = BicycleModel::new(0.1, 0.1);
        let controls = [Control::default(), Control::new(1.2, 0.0)];
        let err = m.rollout(State::new(0.0, 0.0, 0.0, 10.0), &controls).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStep { step: 1, .. }));
    }

    #[test]
    fn straight_line_jacobian_entries() {
        let m = BicycleModel::new(2.5, 0.1);
        let (a, b) = m.jacobians(&State::new(1.0, 2.0, 0.0, 3.0), &Control::default()).unwrap();
        assert!(close(a[(0, 3)], 0.1, 1e-15));
        assert!(close(b[(3, 1)], 0.1, 1e-15));
    }
}
