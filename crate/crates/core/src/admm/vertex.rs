use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::graph::InteractionGraph;
use crate::costs::{convexify_ego, EgoQuadratic};
use crate::dynamics::LinearizedDynamics;
use crate::error::{Error, Result};
use crate::game::{GameSpec, JointStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    pub sigma: f64,
    pub rho: f64,
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::config("sigma", "must be > 0"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::config("rho", "must be > 0"));
        }
        Ok(())
    }

    /// `1 / (sigma + rho)`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.sigma + self.rho)
    }
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams { sigma: 1.0, rho: 1.0 }
    }
}

/// Time-varying affine feedback `du_t = k_t + K_t dx_t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeedbackPolicy {
    pub feedforward: Vec<Vector2<f64>>,
    pub gain: Vec<Matrix2x4<f64>>,
}

impl FeedbackPolicy {
    pub fn zeros(horizon: usize) -> Self {
        FeedbackPolicy {
            feedforward: vec![Vector2::zeros(); horizon],
            gain: vec![Matrix2x4::zeros(); horizon],
        }
    }
}

/// Curvature added to a locked control component, pinning its step to zero.
pub const LOCK_PENALTY: f64 = 1e8;

/// Convexified own cost of one vertex, weighted by its marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexModel {
    pub weight: f64,
    pub ego: EgoQuadratic,
    pub dynamics: LinearizedDynamics,
    /// Control components held at a saturated limit; empty when nothing is locked.
    pub locked: Vec<[bool; 2]>,
}

impl VertexModel {
    pub fn horizon(&self) -> usize {
        self.dynamics.horizon()
    }

    pub fn value(&self, dx: &[Vector4<f64>], du: &[Vector2<f64>]) -> f64 {
        let mut v = self.weight * self.ego.value(dx, du);
        for (l, d) in self.locked.iter().zip(du) {
            for i in 0..2 {
                if l[i] {
                    v += 0.5 * LOCK_PENALTY * d[i] * d[i];
                }
            }
        }
        v
    }

    /// Control Hessian at step `t`, including lock curvature.
    pub fn control_hessian(&self, t: usize) -> Matrix2<f64> {
        let mut h = self.weight * self.ego.control_hessian();
        if let Some(l) = self.locked.get(t) {
            for i in 0..2 {
                if l[i] {
                    h[(i, i)] += LOCK_PENALTY;
                }
            }
        }
        h
    }
}

pub fn convexify_vertex(game: &GameSpec, x: &JointStrategy, v: usize) -> Result<VertexModel> {
    let traj = x.get(v)?;
    let p = &game.players[v];
    Ok(VertexModel {
        weight: game.marginal(v),
        ego: convexify_ego(traj, &p.reference, &p.weights)?,
        dynamics: game.model.linearize(traj)?,
        locked: Vec::new(),
    })
}

/// This vertex's coefficient block and the shared offset of one adjacent edge.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub coeff: &'a [Matrix4<f64>],
    pub offset: &'a [Vector4<f64>],
}

/// Riccati factorization of a vertex subproblem. Depends only on the curvature, so it is
/// reused for every ADMM iteration of one convexification.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrFactor {
    quu_inv: Vec<Matrix2<f64>>,
    qux: Vec<Matrix2x4<f64>>,
    pub gain: Vec<Matrix2x4<f64>>,
}

fn state_hessian(model: &VertexModel, slots: &[SlotView], scale: f64, t: usize) -> Matrix4<f64> {
    let mut h = model.weight * model.ego.state_hessian();
    for c in slots.iter().filter_map(|s| s.coeff.get(t)) {
        h += scale * c.transpose() * c;
    }
    h
}

impl LqrFactor {
    pub fn new(model: &VertexModel, slots: &[SlotView], scale: f64) -> Result<Self> {
        let n = model.horizon();
        let mut quu_inv = vec![Matrix2::zeros(); n];
        let mut qux = vec![Matrix2x4::zeros(); n];
        let mut gain = vec![Matrix2x4::zeros(); n];
        let mut vxx = state_hessian(model, slots, scale, n);
        for t in (0..n).rev() {
            let a = &model.dynamics.a[t];
            let b = &model.dynamics.b[t];
            let bv = b.transpose() * vxx;
            let quu = model.control_hessian(t) + bv * b;
            let qu_x = bv * a;
            let inv = quu
                .cholesky()
                .ok_or(Error::NotPositiveDefinite(t))?
                .inverse();
            let k = -inv * qu_x;
            let next = state_hessian(model, slots, scale, t) + a.transpose() * vxx * a + qu_x.transpose() * k;
            vxx = 0.5 * (next + next.transpose());
            quu_inv[t] = inv;
            qux[t] = qu_x;
            gain[t] = k;
        }
        Ok(LqrFactor { quu_inv, qux, gain })
    }

    /// Minimizes `sum_t 1/2 dx'H dx + qx' dx + 1/2 du'R du + ru' du` from `dx_0 = 0`.
    /// Returns `(dx, du, feedforward)`.
    pub fn solve(
        &self,
        dynamics: &LinearizedDynamics,
        qx: &[Vector4<f64>],
        ru: &[Vector2<f64>],
    ) -> (Vec<Vector4<f64>>, Vec<Vector2<f64>>, Vec<Vector2<f64>>) {
        let n = self.gain.len();
        let mut ff = vec![Vector2::zeros(); n];
        let mut vx = qx[n];
        for t in (0..n).rev() {
            let a = &dynamics.a[t];
            let b = &dynamics.b[t];
            let qu = ru[t] + b.transpose() * vx;
            let k = -self.quu_inv[t] * qu;
            vx = qx[t] + a.transpose() * vx + self.qux[t].transpose() * k;
            ff[t] = k;
        }
        let mut dx = vec![Vector4::zeros(); n + 1];
        let mut du = vec![Vector2::zeros(); n];
        for t in 0..n {
            du[t] = ff[t] + self.gain[t] * dx[t];
            dx[t + 1] = dynamics.a[t] * dx[t] + dynamics.b[t] * du[t];
        }
        (dx, du, ff)
    }
}

fn linear_terms(
    model: &VertexModel,
    slots: &[SlotView],
    r: &[Vec<Vector4<f64>>],
    scale: f64,
) -> (Vec<Vector4<f64>>, Vec<Vector2<f64>>) {
    let n = model.horizon();
    let qx = (0..=n)
        .map(|t| {
            let mut g = model.weight * model.ego.state_gradient(t);
            for (s, rs) in slots.iter().zip(r) {
                if let Some(c) = s.coeff.get(t) {
                    g += scale * c.transpose() * rs[t];
                }
            }
            g
        })
        .collect();
    let ru = (0..n).map(|t| model.weight * model.ego.control_gradient(t)).collect();
    (qx, ru)
}

/// Minimizes `p c_v(dX) + 1/(2(sigma+rho)) |Q_v dX + r|^2` under the linearized dynamics.
pub fn solve_lqr_subproblem(
    model: &VertexModel,
    slots: &[SlotView],
    r: &[Vec<Vector4<f64>>],
    params: &AdmmParams,
) -> Result<(Vec<Vector4<f64>>, Vec<Vector2<f64>>, FeedbackPolicy)> {
    let factor = LqrFactor::new(model, slots, params.scale())?;
    let (qx, ru) = linear_terms(model, slots, r, params.scale());
    let (dx, du, ff) = factor.solve(&model.dynamics, &qx, &ru);
    Ok((
        dx,
        du,
        FeedbackPolicy {
            feedforward: ff,
            gain: factor.gain,
        },
    ))
}

/// Value of the vertex subproblem objective.
pub fn subproblem_objective(
    model: &VertexModel,
    slots: &[SlotView],
    r: &[Vec<Vector4<f64>>],
    params: &AdmmParams,
    dx: &[Vector4<f64>],
    du: &[Vector2<f64>],
) -> f64 {
    let mut coupling = 0.0;
    for (s, rs) in slots.iter().zip(r) {
        for t in 0..s.offset.len() {
            coupling += (s.coeff[t] * dx[t] + rs[t]).norm_squared();
        }
    }
    model.value(dx, du) + 0.5 * params.scale() * coupling
}

/// Per-vertex ADMM variables, stacked by adjacent edge (`[slot][t]`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmVertexState {
    pub vertex: usize,
    /// Adjacent edge ids in slot order.
    pub edges: Vec<usize>,
    pub y: Vec<Vec<Vector4<f64>>>,
    pub z: Vec<Vec<Vector4<f64>>>,
    pub s: Vec<Vec<Vector4<f64>>>,
    pub lambda: Vec<Vec<Vector4<f64>>>,
    pub r: Vec<Vec<Vector4<f64>>>,
    pub dx: Vec<Vector4<f64>>,
    pub du: Vec<Vector2<f64>>,
    pub policy: FeedbackPolicy,
    pub lqr: Option<LqrFactor>,
}

impl AdmmVertexState {
    pub fn new(graph: &InteractionGraph, vertex: usize, horizon: usize) -> Self {
        let deg = graph.degree(vertex);
        let zeros = vec![vec![Vector4::zeros(); horizon + 1]; deg];
        AdmmVertexState {
            vertex,
            edges: graph.adjacent(vertex).to_vec(),
            y: zeros.clone(),
            z: zeros.clone(),
            s: zeros.clone(),
            lambda: zeros.clone(),
            r: zeros,
            dx: vec![Vector4::zeros(); horizon + 1],
            du: vec![Vector2::zeros(); horizon],
            policy: FeedbackPolicy::zeros(horizon),
            lqr: None,
        }
    }

    pub fn reset_duals(&mut self) {
        for block in [&mut self.y, &mut self.z, &mut self.s, &mut self.lambda, &mut self.r] {
            for slot in block.iter_mut() {
                slot.iter_mut().for_each(|x| *x = Vector4::zeros());
            }
        }
    }

    /// Message sent along slot `k`: `E_{v,e} y_v`.
    pub fn message(&self, k: usize) -> &[Vector4<f64>] {
        &self.y[k]
    }
}

/// One ADMM iteration of a single vertex.
///
/// `messages[k]` is the neighbor's current `y` slice on slot `k`. The multiplier update
/// driven by those messages is applied first, so each iteration needs a single exchange.
pub fn vertex_iteration(
    state: &AdmmVertexState,
    model: &VertexModel,
    slots: &[SlotView],
    messages: &[&[Vector4<f64>]],
    params: &AdmmParams,
) -> Result<AdmmVertexState> {
    let deg = state.edges.len();
    if slots.len() != deg {
        return Err(Error::LengthMismatch {
            what: "edge models",
            expected: deg,
            found: slots.len(),
        });
    }
    if messages.len() != deg {
        let missing = state.edges.get(messages.len()).copied().unwrap_or(0);
        return Err(Error::MissingMessage {
            vertex: state.vertex,
            edge: missing,
        });
    }
    let (sigma, rho) = (params.sigma, params.rho);
    let scale = params.scale();
    let mut next = state.clone();

    for k in 0..deg {
        let msg = messages[k];
        for t in 0..slots[k].offset.len() {
            let (own, other) = (state.y[k][t], msg[t]);
            next.lambda[k][t] += 0.5 * rho * (own - other);
            next.r[k][t] = sigma * state.z[k][t] - next.lambda[k][t] - state.s[k][t] + 0.5 * rho * (own + other);
        }
    }

    if next.lqr.is_none() {
        next.lqr = Some(LqrFactor::new(model, slots, scale)?);
    }
    let factor = next.lqr.as_ref().expect("factor set above");
    let (qx, ru) = linear_terms(model, slots, &next.r, scale);
    let (dx, du, ff) = factor.solve(&model.dynamics, &qx, &ru);

    for (k, slot) in slots.iter().enumerate() {
        for t in 0..slot.offset.len() {
            let y = scale * (slot.coeff[t] * dx[t] + next.r[k][t]);
            let z = (4.0 * state.s[k][t] + 4.0 * sigma * y + 2.0 * slot.offset[t]) / (4.0 * sigma + 1.0);
            next.y[k][t] = y;
            next.z[k][t] = z;
            next.s[k][t] = state.s[k][t] + sigma * (y - z);
        }
    }
    next.policy = FeedbackPolicy {
        feedforward: ff,
        gain: factor.gain.clone(),
    };
    next.dx = dx;
    next.du = du;
    Ok(next)
}
