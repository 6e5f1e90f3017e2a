//! First-passage times and geodesics.
//!
//! All queries run a binary-heap Dijkstra over dense vertex indices of an
//! origin-centred box. Zero-weight edges (half of all edges at criticality)
//! bypass the heap through a LIFO of vertices settled at the current
//! distance. Ties are broken towards the predecessor with the smallest
//! canonical (row-major) index among those seen before the vertex settles,
//! which makes geodesics reproducible.

use crate::field::{FieldError, Omega};
use crate::lattice::{BoxSpec, EdgeId, Vertex};
use crate::weights::DistributionSpec;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FppError {
    #[error("no admissible path connects the source set to the target set")]
    NoPath,
    #[error("vertex {vertex} lies outside B({radius})")]
    OutOfBox { vertex: Vertex, radius: u32 },
    #[error("source and target sets must be nonempty")]
    EmptySet,
    #[error("box radius {radius} is smaller than the required {needed}")]
    BoxTooSmall { needed: u32, radius: u32 },
    #[error("guard ratio {0} must be at least 1.5")]
    BadGuard(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// A minimal passage time and one geodesic achieving it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageResult {
    pub time: f64,
    /// Edges from `source_hit` to `target_hit`.
    pub path: Vec<EdgeId>,
    /// `t_e` of each edge of `path`.
    pub weights: Vec<f64>,
    pub source_hit: Vertex,
    pub target_hit: Vertex,
    /// Radius of the box the search was confined to.
    pub radius: u32,
}

impl PassageResult {
    fn trivial(v: Vertex, radius: u32) -> Self {
        PassageResult {
            time: 0.0,
            path: Vec::new(),
            weights: Vec::new(),
            source_hit: v,
            target_hit: v,
            radius,
        }
    }

    /// Vertices visited by the path, starting at `source_hit`.
    pub fn vertices(&self) -> Vec<Vertex> {
        let mut out = vec![self.source_hit];
        let mut cur = self.source_hit;
        for e in &self.path {
            let (a, b) = e.endpoints();
            cur = if a == cur { b } else { a };
            out.push(cur);
        }
        out
    }
}

/// Per-annulus split `T_k(gamma)` of a path's time, for `k = -1, 0, 1, ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusTimes {
    pub per_annulus: Vec<(i32, f64)>,
}

impl AnnulusTimes {
    pub fn get(&self, k: i32) -> f64 {
        self.per_annulus
            .iter()
            .find(|(j, _)| *j == k)
            .map_or(0.0, |(_, t)| *t)
    }

    pub fn total(&self) -> f64 {
        self.per_annulus.iter().map(|(_, t)| t).sum()
    }
}

/// A set of admissible edges, stored densely over the edges of a box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMask {
    bounds: BoxSpec,
    bits: Vec<bool>,
}

impl EdgeMask {
    pub fn empty(bounds: BoxSpec) -> Self {
        EdgeMask { bounds, bits: vec![false; bounds.edge_count()] }
    }

    pub fn full(bounds: BoxSpec) -> Self {
        EdgeMask { bounds, bits: vec![true; bounds.edge_count()] }
    }

    pub fn from_edges(bounds: BoxSpec, edges: impl IntoIterator<Item = EdgeId>) -> Self {
        let mut m = Self::empty(bounds);
        for e in edges {
            m.insert(e);
        }
        m
    }

    pub fn bounds(&self) -> BoxSpec {
        self.bounds
    }

    /// Adds an edge; edges outside the mask's box are ignored and reported.
    pub fn insert(&mut self, e: EdgeId) -> bool {
        match self.bounds.edge_index(e) {
            Some(i) => {
                self.bits[i] = true;
                true
            }
            None => false,
        }
    }

    pub fn remove(&mut self, e: EdgeId) {
        if let Some(i) = self.bounds.edge_index(e) {
            self.bits[i] = false;
        }
    }

    #[inline]
    pub fn contains(&self, e: EdgeId) -> bool {
        self.bounds.edge_index(e).is_some_and(|i| self.bits[i])
    }

    pub fn len(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn iter(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| self.bounds.edge_at(i))
    }

    pub fn is_subset(&self, other: &EdgeMask) -> bool {
        self.iter().all(|e| other.contains(e))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    vertex: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NONE: u32 = u32::MAX;

struct Search<'a, F: ?Sized> {
    field: &'a F,
    dist: &'a DistributionSpec,
    region: BoxSpec,
    restrict: Option<&'a EdgeMask>,
}

impl<F: Omega + ?Sized> Search<'_, F> {
    fn run(&self, sources: &[Vertex], is_target: impl Fn(Vertex) -> bool) -> Result<PassageResult, FppError> {
        let region = self.region;
        let n = region.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![NONE; n];
        let mut settled = vec![false; n];
        let mut is_source = vec![false; n];
        let mut heap = BinaryHeap::new();
        let mut level: Vec<u32> = Vec::new();

        let mut srcs: Vec<usize> = sources
            .iter()
            .map(|v| region.vertex_index(*v).expect("sources validated"))
            .collect();
        srcs.sort_unstable();
        srcs.dedup();
        for &s in &srcs {
            dist[s] = 0.0;
            is_source[s] = true;
            heap.push(Entry { dist: 0.0, vertex: s as u32 });
        }

        loop {
            let u = match level.pop() {
                Some(u) => u as usize,
                None => match heap.pop() {
                    Some(Entry { dist: d, vertex }) => {
                        let u = vertex as usize;
                        if settled[u] || d > dist[u] {
                            continue;
                        }
                        u
                    }
                    None => return Err(FppError::NoPath),
                },
            };
            if settled[u] {
                continue;
            }
            settled[u] = true;
            let uv = region.vertex_at(u);
            if is_target(uv) {
                return Ok(self.reconstruct(u, &pred, dist[u]));
            }
            let du = dist[u];
            for (v, e) in uv.neighbors().into_iter().zip(uv.incident_edges()) {
                let Some(vi) = region.vertex_index(v) else { continue };
                if settled[vi] || is_source[vi] {
                    continue;
                }
                if let Some(mask) = self.restrict {
                    if !mask.contains(e) {
                        continue;
                    }
                }
                let w = self.dist.quantile_unchecked(self.field.omega(e));
                let nd = du + w;
                if nd < dist[vi] {
                    dist[vi] = nd;
                    pred[vi] = u as u32;
                    if w == 0.0 {
                        level.push(vi as u32);
                    } else {
                        heap.push(Entry { dist: nd, vertex: vi as u32 });
                    }
                } else if nd == dist[vi] && (u as u32) < pred[vi] {
                    pred[vi] = u as u32;
                }
            }
        }
    }

    fn reconstruct(&self, target: usize, pred: &[u32], time: f64) -> PassageResult {
        let region = self.region;
        let mut verts = vec![region.vertex_at(target)];
        let mut cur = target;
        while pred[cur] != NONE {
            cur = pred[cur] as usize;
            verts.push(region.vertex_at(cur));
        }
        verts.reverse();
        let path: Vec<EdgeId> = verts
            .windows(2)
            .map(|w| EdgeId::between(w[0], w[1]).expect("consecutive path vertices are adjacent"))
            .collect();
        let weights = path
            .iter()
            .map(|e| self.dist.quantile_unchecked(self.field.omega(*e)))
            .collect();
        PassageResult {
            time,
            path,
            weights,
            source_hit: verts[0],
            target_hit: *verts.last().expect("nonempty"),
            radius: region.radius,
        }
    }
}

fn check_inside(region: BoxSpec, vs: &[Vertex]) -> Result<(), FppError> {
    if vs.is_empty() {
        return Err(FppError::EmptySet);
    }
    match vs.iter().find(|v| !region.contains(**v)) {
        Some(v) => Err(FppError::OutOfBox { vertex: *v, radius: region.radius }),
        None => Ok(()),
    }
}

/// `T(A, B)` over paths inside the field's box, optionally restricted to
/// the edges of `restrict_to`.
pub fn passage_time<F: Omega + ?Sized>(
    field: &F,
    d: &DistributionSpec,
    sources: &[Vertex],
    targets: &[Vertex],
    restrict_to: Option<&EdgeMask>,
) -> Result<PassageResult, FppError> {
    let region = field.bounds();
    passage_time_in(field, d, region, sources, targets, restrict_to)
}

/// As [`passage_time`] with the search confined to `region`, which must lie
/// inside the field's box.
pub fn passage_time_in<F: Omega + ?Sized>(
    field: &F,
    d: &DistributionSpec,
    region: BoxSpec,
    sources: &[Vertex],
    targets: &[Vertex],
    restrict_to: Option<&EdgeMask>,
) -> Result<PassageResult, FppError> {
    if region.radius > field.radius() {
        return Err(FppError::BoxTooSmall { needed: region.radius, radius: field.radius() });
    }
    check_inside(region, sources)?;
    check_inside(region, targets)?;
    let mut target_mask = vec![false; region.vertex_count()];
    for t in targets {
        target_mask[region.vertex_index(*t).expect("checked")] = true;
    }
    let search = Search { field, dist: d, region, restrict: restrict_to };
    search.run(sources, |v| target_mask[region.vertex_index(v).expect("in region")])
}

/// `T(0, ∂B(n))`.
pub fn box_time<F: Omega + ?Sized>(field: &F, d: &DistributionSpec, n: u32) -> Result<PassageResult, FppError> {
    if n > field.radius() {
        return Err(FppError::BoxTooSmall { needed: n, radius: field.radius() });
    }
    if n == 0 {
        return Ok(PassageResult::trivial(Vertex::ORIGIN, 0));
    }
    let search = Search { field, dist: d, region: BoxSpec::new(n), restrict: None };
    search.run(&[Vertex::ORIGIN], |v| v.norm_inf() == n)
}

/// Default ratio between the truncation radius and `|x|_inf` for
/// point-to-point times.
pub const DEFAULT_GUARD: f64 = 2.0;

/// Truncation radius `ceil(guard · |x|_inf)` used by [`point_time`].
pub fn guard_radius(x: Vertex, guard: f64) -> u32 {
    (guard * x.norm_inf() as f64).ceil() as u32
}

/// `T(0, x)` computed inside `B(ceil(guard · |x|_inf))`.
pub fn point_time<F: Omega + ?Sized>(
    field: &F,
    d: &DistributionSpec,
    x: Vertex,
    guard: f64,
) -> Result<PassageResult, FppError> {
    if !(guard >= 1.5) {
        return Err(FppError::BadGuard(guard));
    }
    if x == Vertex::ORIGIN {
        return Ok(PassageResult::trivial(x, 0));
    }
    let radius = guard_radius(x, guard);
    if radius > field.radius() {
        return Err(FppError::BoxTooSmall { needed: radius, radius: field.radius() });
    }
    let search = Search { field, dist: d, region: BoxSpec::new(radius), restrict: None };
    search.run(&[Vertex::ORIGIN], |v| v == x)
}

/// Splits a path's time by the dyadic annulus of each edge.
pub fn annulus_decomposition(p: &PassageResult) -> AnnulusTimes {
    let max_k = p.path.iter().map(|e| e.annulus_index()).max().unwrap_or(-1);
    let mut per_annulus: Vec<(i32, f64)> = (-1..=max_k).map(|k| (k, 0.0)).collect();
    for (e, w) in p.path.iter().zip(&p.weights) {
        per_annulus[(e.annulus_index() + 1) as usize].1 += w;
    }
    AnnulusTimes { per_annulus }
}
