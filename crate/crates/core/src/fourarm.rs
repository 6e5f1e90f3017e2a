//! The four-arm event `A_e(m1, p)` and the count `N(m1, m2, p)`.
//!
//! `A_e(m1, p)` holds when `omega_e` lies in `(p_c, p]`, the endpoints of
//! `e` reach `∂B(e_x, m1)` by two vertex-disjoint p-open paths, and the
//! endpoints of `e*` reach the boundary of the dual ball by two
//! vertex-disjoint p_c-closed dual paths. The dual ball `B(e_x, m1)*` is the
//! set of faces of `B(e_x, m1)`; its boundary is the outer ring of those
//! faces. Disjoint paths are found as a unit-capacity flow on the
//! vertex-split graph.

use crate::field::Omega;
use crate::lattice::{BoxSpec, DualVertex, EdgeId, Vertex};
use crate::weights::P_C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FourArmError {
    #[error("B({centre}, {m1}) does not fit in B({radius})")]
    BallOutsideBox { centre: Vertex, m1: u32, radius: u32 },
    #[error("count over E(B({outer})) needs a field of radius {needed}, got {radius}")]
    BoxTooSmall { outer: u32, needed: u32, radius: u32 },
    #[error("arm length and annulus radius must be at least 1")]
    ZeroRadius,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmCount {
    pub m1: u32,
    pub m2: u32,
    pub p: f64,
    pub count: usize,
    /// In canonical edge order.
    pub contributing_edges: Vec<EdgeId>,
}

/// Residual graph for unit-capacity flows.
struct FlowGraph {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<u8>,
    next: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        FlowGraph { head: vec![NIL; nodes], to: Vec::new(), cap: Vec::new(), next: Vec::new() }
    }

    fn arc(&mut self, a: usize, b: usize) {
        for (u, v, c) in [(a, b, 1), (b, a, 0)] {
            self.to.push(v);
            self.cap.push(c);
            self.next.push(self.head[u]);
            self.head[u] = self.to.len() - 1;
        }
    }

    /// Augments along shortest paths until `want` units flow or none remain.
    fn max_flow(&mut self, s: usize, t: usize, want: usize) -> usize {
        let mut flow = 0;
        let mut via = vec![NIL; self.head.len()];
        while flow < want {
            via.fill(NIL);
            let mut queue = VecDeque::from([s]);
            let mut found = false;
            'bfs: while let Some(u) = queue.pop_front() {
                let mut a = self.head[u];
                while a != NIL {
                    let v = self.to[a];
                    if self.cap[a] > 0 && via[v] == NIL && v != s {
                        via[v] = a;
                        if v == t {
                            found = true;
                            break 'bfs;
                        }
                        queue.push_back(v);
                    }
                    a = self.next[a];
                }
            }
            if !found {
                break;
            }
            let mut v = t;
            while v != s {
                let a = via[v];
                self.cap[a] -= 1;
                self.cap[a ^ 1] += 1;
                v = self.to[a ^ 1];
            }
            flow += 1;
        }
        flow
    }
}

/// Whether two vertex-disjoint paths join the two `sources` to the sink
/// set, one path from each source. `bonds` lists undirected edges between
/// node indices.
fn two_disjoint_paths(n: usize, bonds: &[(usize, usize)], sources: [usize; 2], sink: &[bool]) -> bool {
    // node v splits into 2v (in) and 2v+1 (out)
    let (s, t) = (2 * n, 2 * n + 1);
    let mut g = FlowGraph::new(2 * n + 2);
    for v in 0..n {
        g.arc(2 * v, 2 * v + 1);
        if sink[v] {
            g.arc(2 * v + 1, t);
        }
    }
    for &(a, b) in bonds {
        g.arc(2 * a + 1, 2 * b);
        g.arc(2 * b + 1, 2 * a);
    }
    for src in sources {
        g.arc(s, 2 * src);
    }
    g.max_flow(s, t, 2) == 2
}

fn check_ball<F: Omega + ?Sized>(f: &F, centre: Vertex, m1: u32) -> Result<(), FourArmError> {
    if m1 == 0 {
        return Err(FourArmError::ZeroRadius);
    }
    if centre.norm_inf() as u64 + m1 as u64 > f.radius() as u64 {
        return Err(FourArmError::BallOutsideBox { centre, m1, radius: f.radius() });
    }
    Ok(())
}

/// Condition (a): two disjoint p-open arms from the endpoints of `e` to
/// `∂B(e_x, m1)`, avoiding `e`.
pub fn open_arms<F: Omega + ?Sized>(f: &F, e: EdgeId, m1: u32, p: f64) -> Result<bool, FourArmError> {
    let c = e.base;
    check_ball(f, c, m1)?;
    let ball = BoxSpec::new(m1);
    let local = |v: Vertex| ball.vertex_index(v.offset(-c.x, -c.y));
    let n = ball.vertex_count();
    let mut bonds = Vec::new();
    let mut sink = vec![false; n];
    for i in 0..n {
        let lv = ball.vertex_at(i);
        sink[i] = lv.norm_inf() == m1;
        let v = lv.offset(c.x, c.y);
        for (w, edge) in [(v.offset(1, 0), EdgeId::horizontal(v)), (v.offset(0, 1), EdgeId::vertical(v))] {
            if edge == e {
                continue;
            }
            if let Some(j) = local(w) {
                if f.omega(edge) <= p {
                    bonds.push((i, j));
                }
            }
        }
    }
    let (a, b) = e.endpoints();
    Ok(two_disjoint_paths(n, &bonds, [local(a).expect("in ball"), local(b).expect("in ball")], &sink))
}

/// Condition (b): two disjoint p_c-closed dual arms from the endpoints of
/// `e*` to the outer ring of faces of `B(e_x, m1)`, avoiding `e*`.
pub fn closed_dual_arms<F: Omega + ?Sized>(f: &F, e: EdgeId, m1: u32) -> Result<bool, FourArmError> {
    let c = e.base;
    check_ball(f, c, m1)?;
    let m = m1 as i32;
    // faces (c.x + i, c.y + j) for i, j in -m..m
    let side = (2 * m) as usize;
    let local = |d: DualVertex| {
        let (i, j) = (d.x - c.x + m, d.y - c.y + m);
        ((0..2 * m).contains(&i) && (0..2 * m).contains(&j)).then(|| j as usize * side + i as usize)
    };
    let n = side * side;
    let mut bonds = Vec::new();
    let mut sink = vec![false; n];
    for j in 0..side {
        for i in 0..side {
            let idx = j * side + i;
            sink[idx] = i == 0 || j == 0 || i == side - 1 || j == side - 1;
            let d = DualVertex::new(c.x - m + i as i32, c.y - m + j as i32);
            // east neighbour crosses the vertical edge at (d.x + 1, d.y),
            // north neighbour the horizontal edge at (d.x, d.y + 1)
            let east = (DualVertex::new(d.x + 1, d.y), EdgeId::vertical(Vertex::new(d.x + 1, d.y)));
            let north = (DualVertex::new(d.x, d.y + 1), EdgeId::horizontal(Vertex::new(d.x, d.y + 1)));
            for (w, primal) in [east, north] {
                if primal == e {
                    continue;
                }
                if let Some(k) = local(w) {
                    if f.omega(primal) > P_C {
                        bonds.push((idx, k));
                    }
                }
            }
        }
    }
    let (a, b) = e.dual().endpoints();
    Ok(two_disjoint_paths(n, &bonds, [local(a).expect("in ball"), local(b).expect("in ball")], &sink))
}

/// `A_e(m1, p)`; condition (c) is checked first, then (a), then (b).
pub fn four_arm_event<F: Omega + ?Sized>(f: &F, e: EdgeId, m1: u32, p: f64) -> Result<bool, FourArmError> {
    check_ball(f, e.base, m1)?;
    let w = f.omega(e);
    if !(w > P_C && w <= p) {
        return Ok(false);
    }
    Ok(open_arms(f, e, m1, p)? && closed_dual_arms(f, e, m1)?)
}

/// `N(m1, m2, p)`: the number of edges of `E(B(2 m2)) \ E(B(m2))` where
/// `A_e(m1, p)` occurs.
pub fn count_four_arm<F: Omega + ?Sized>(f: &F, m1: u32, m2: u32, p: f64) -> Result<ArmCount, FourArmError> {
    if m1 == 0 || m2 == 0 {
        return Err(FourArmError::ZeroRadius);
    }
    let needed = 2 * m2 + m1;
    if needed > f.radius() {
        return Err(FourArmError::BoxTooSmall { outer: 2 * m2, needed, radius: f.radius() });
    }
    let outer = BoxSpec::new(2 * m2);
    let edges: Vec<EdgeId> = (0..outer.edge_count())
        .map(|i| outer.edge_at(i))
        .filter(|e| e.norm_inf() > m2)
        .collect();
    let hits: Vec<bool> = edges
        .par_iter()
        .map(|e| four_arm_event(f, *e, m1, p))
        .collect::<Result<_, _>>()?;
    let contributing_edges: Vec<EdgeId> = edges
        .into_iter()
        .zip(hits)
        .filter(|(_, h)| *h)
        .map(|(e, _)| e)
        .collect();
    Ok(ArmCount { m1, m2, p, count: contributing_edges.len(), contributing_edges })
}
