use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::costs::convexify_coupling;
use crate::error::{Error, Result};
use crate::game::{GameSpec, JointStrategy};
use crate::math::sqrt;

/// Rows contributed by one edge at one time step.
pub const EDGE_ROWS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Collision coupling between type-players of different agents.
    Collision,
    /// Branch-consistency coupling between two plans of the contingency agent.
    Consensus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    /// Lower vertex id.
    pub a: usize,
    /// Higher vertex id.
    pub b: usize,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn other(&self, v: usize) -> usize {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }

    /// 0 for the lower endpoint, 1 for the higher one.
    pub fn endpoint(&self, v: usize) -> Option<usize> {
        if v == self.a {
            Some(0)
        } else if v == self.b {
            Some(1)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub num_vertices: usize,
    pub edges: Vec<Edge>,
    /// Per vertex, adjacent edge ids ordered by neighbor vertex id.
    adjacency: Vec<Vec<usize>>,
}

impl InteractionGraph {
    pub fn new(num_vertices: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); num_vertices];
        for (id, e) in edges.iter().enumerate() {
            if !(e.a < e.b && e.b < num_vertices) {
                return Err(Error::config("graph.edges", "edge endpoints must satisfy a < b < V"));
            }
            adjacency[e.a].push(id);
            adjacency[e.b].push(id);
        }
        for (v, adj) in adjacency.iter_mut().enumerate() {
            adj.sort_by_key(|id| edges[*id].other(v));
            if adj.windows(2).any(|w| edges[w[0]].other(v) == edges[w[1]].other(v)) {
                return Err(Error::config("graph.edges", "duplicate edge"));
            }
        }
        Ok(InteractionGraph {
            num_vertices,
            edges,
            adjacency,
        })
    }

    /// Collision edges for every coupled cross-agent pair, plus consensus edges between
    /// all plans of the contingency agent.
    pub fn from_game(game: &GameSpec) -> Self {
        let mut edges: Vec<Edge> = game
            .coupled_pairs()
            .into_iter()
            .map(|(a, b)| Edge {
                a,
                b,
                kind: EdgeKind::Collision,
            })
            .collect();
        if let Some(c) = &game.contingency {
            let vs = game.vertices_of(c.agent.0);
            for a in vs.clone() {
                for b in a + 1..vs.end {
                    edges.push(Edge {
                        a,
                        b,
                        kind: EdgeKind::Consensus,
                    });
                }
            }
        }
        InteractionGraph::new(game.num_vertices(), edges).expect("pairs are ordered and unique")
    }

    /// Checks that collision edges join different agents and consensus edges join plans
    /// of the contingency agent.
    pub fn validate_against(&self, game: &GameSpec) -> Result<()> {
        if self.num_vertices != game.num_vertices() {
            return Err(Error::LengthMismatch {
                what: "graph vertices",
                expected: game.num_vertices(),
                found: self.num_vertices,
            });
        }
        for e in &self.edges {
            let same = game.agent_of(e.a) == game.agent_of(e.b);
            let ok = match e.kind {
                EdgeKind::Collision => !same,
                EdgeKind::Consensus => {
                    same && game.contingency.as_ref().is_some_and(|c| c.agent.0 == game.agent_of(e.a))
                }
            };
            if !ok {
                return Err(Error::config("graph.edges", "edge kind does not match its endpoints"));
            }
        }
        Ok(())
    }

    pub fn adjacent(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Position of edge `e` in vertex `v`'s stacked layout.
    pub fn slot(&self, v: usize, e: usize) -> Result<usize> {
        self.adjacency
            .get(v)
            .and_then(|adj| adj.iter().position(|id| *id == e))
            .ok_or(Error::NotAdjacent { vertex: v, edge: e })
    }
}

/// `E_{v,e}`: the four entries of a per-step stacked vector belonging to edge `e`.
pub fn selector_apply(graph: &InteractionGraph, e: usize, v: usize, stacked: &[f64]) -> Result<[f64; EDGE_ROWS]> {
    let expected = EDGE_ROWS * graph.degree(v);
    if stacked.len() != expected {
        return Err(Error::LengthMismatch {
            what: "stacked vector",
            expected,
            found: stacked.len(),
        });
    }
    let k = graph.slot(v, e)?;
    let mut out = [0.0; EDGE_ROWS];
    out.copy_from_slice(&stacked[EDGE_ROWS * k..EDGE_ROWS * (k + 1)]);
    Ok(out)
}

/// `E_{v,e}^T`: embeds an edge slice into an otherwise zero stacked vector.
pub fn selector_scatter(graph: &InteractionGraph, e: usize, v: usize, slice: &[f64; EDGE_ROWS]) -> Result<Vec<f64>> {
    let k = graph.slot(v, e)?;
    let mut out = vec![0.0; EDGE_ROWS * graph.degree(v)];
    out[EDGE_ROWS * k..EDGE_ROWS * (k + 1)].copy_from_slice(slice);
    Ok(out)
}

/// Convexified edge term `sum_t |C_a dx_a + C_b dx_b + l|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeModel {
    /// `coeff[0]` multiplies the lower endpoint, `coeff[1]` the higher one. May cover
    /// fewer than `T + 1` steps; missing steps have no rows.
    pub coeff: [Vec<Matrix4<f64>>; 2],
    pub offset: Vec<Vector4<f64>>,
}

impl EdgeModel {
    pub fn value(&self, da: &[Vector4<f64>], db: &[Vector4<f64>]) -> f64 {
        (0..self.offset.len())
            .map(|t| (self.coeff[0][t] * da[t] + self.coeff[1][t] * db[t] + self.offset[t]).norm_squared())
            .sum()
    }

    /// Value at zero perturbation.
    pub fn nominal_value(&self) -> f64 {
        self.offset.iter().map(|l| l.norm_squared()).sum()
    }
}

pub fn convexify_edge(game: &GameSpec, edge: &Edge, x: &JointStrategy) -> Result<EdgeModel> {
    let ta = x.get(edge.a)?;
    let tb = x.get(edge.b)?;
    match edge.kind {
        EdgeKind::Collision => {
            let w = sqrt(game.prior.pair(edge.a, edge.b));
            let gn = convexify_coupling(ta, tb, &game.footprint, &game.collision)?;
            Ok(EdgeModel {
                coeff: [
                    gn.steps.iter().map(|s| s.rows_a * w).collect(),
                    gn.steps.iter().map(|s| s.rows_b * w).collect(),
                ],
                offset: gn.steps.iter().map(|s| s.offset * w).collect(),
            })
        }
        EdgeKind::Consensus => {
            let c = game
                .contingency
                .as_ref()
                .ok_or(Error::config("contingency", "consensus edge without a contingency term"))?;
            // ordered pairs count twice
            let root = Matrix4::from_diagonal(&Vector4::from(c.weights.map(|q| sqrt(2.0 * q))));
            // rows exist only before the branch
            let len = c.t_b.min(ta.states.len());
            Ok(EdgeModel {
                coeff: [vec![root; len], vec![-root; len]],
                offset: (0..len)
                    .map(|t| root * (ta.states[t].to_vector() - tb.states[t].to_vector()))
                    .collect(),
            })
        }
    }
}
