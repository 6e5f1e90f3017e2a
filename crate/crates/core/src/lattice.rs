//! Geometry of the square lattice: vertices, nearest-neighbour edges,
//! origin-centred boxes, dyadic annuli and the dual lattice.
//!
//! Boxes use the sup-norm, `B(n) = {x : |x|_inf <= n}`. Edges inside a box
//! are enumerated in a fixed canonical order (row-major by base vertex,
//! horizontal before vertical) and every dense per-edge array in the crate
//! is indexed by that order.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A vertex of Z^2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub x: i32,
    pub y: i32,
}

impl Vertex {
    pub const ORIGIN: Vertex = Vertex { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Self {
        Vertex { x, y }
    }

    /// Sup-norm of the vertex.
    pub fn norm_inf(self) -> u32 {
        self.x.unsigned_abs().max(self.y.unsigned_abs())
    }

    pub fn offset(self, dx: i32, dy: i32) -> Vertex {
        Vertex::new(self.x + dx, self.y + dy)
    }

    /// The four nearest neighbours in the order east, north, west, south.
    pub fn neighbors(self) -> [Vertex; 4] {
        [
            self.offset(1, 0),
            self.offset(0, 1),
            self.offset(-1, 0),
            self.offset(0, -1),
        ]
    }

    /// The four incident edges, matching the order of [`Vertex::neighbors`].
    pub fn incident_edges(self) -> [EdgeId; 4] {
        [
            EdgeId::horizontal(self),
            EdgeId::vertical(self),
            EdgeId::horizontal(self.offset(-1, 0)),
            EdgeId::vertical(self.offset(0, -1)),
        ]
    }

    /// Canonical vertex order: row-major (y first, then x).
    pub fn canonical_key(self) -> (i32, i32) {
        (self.y, self.x)
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

impl Orientation {
    pub fn short_name(self) -> &'static str {
        match self {
            Orientation::Horizontal => "H",
            Orientation::Vertical => "V",
        }
    }
}

/// A nearest-neighbour edge in canonical form: `{base, base + e1}` when
/// horizontal, `{base, base + e2}` when vertical.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeId {
    pub base: Vertex,
    pub orientation: Orientation,
}

impl EdgeId {
    pub const fn horizontal(base: Vertex) -> Self {
        EdgeId { base, orientation: Orientation::Horizontal }
    }

    pub const fn vertical(base: Vertex) -> Self {
        EdgeId { base, orientation: Orientation::Vertical }
    }

    /// The edge joining two adjacent vertices, or `None` if they are not
    /// nearest neighbours.
    pub fn between(a: Vertex, b: Vertex) -> Option<EdgeId> {
        let (lo, hi) = if a.canonical_key() <= b.canonical_key() { (a, b) } else { (b, a) };
        match (hi.x - lo.x, hi.y - lo.y) {
            (1, 0) => Some(EdgeId::horizontal(lo)),
            (0, 1) => Some(EdgeId::vertical(lo)),
            _ => None,
        }
    }

    /// Endpoints `(e_x, e_y)`: left then right, or bottom then top.
    pub fn endpoints(self) -> (Vertex, Vertex) {
        let other = match self.orientation {
            Orientation::Horizontal => self.base.offset(1, 0),
            Orientation::Vertical => self.base.offset(0, 1),
        };
        (self.base, other)
    }

    /// Largest sup-norm of the two endpoints; the edge lies in `E(B(m))`
    /// exactly when this is at most `m`.
    pub fn norm_inf(self) -> u32 {
        let (a, b) = self.endpoints();
        a.norm_inf().max(b.norm_inf())
    }

    pub fn dual(self) -> DualEdgeId {
        DualEdgeId { primal: self }
    }

    pub fn translate(self, dx: i32, dy: i32) -> EdgeId {
        EdgeId { base: self.base.offset(dx, dy), orientation: self.orientation }
    }

    /// Index of the dyadic annulus edge set containing this edge: `-1` for
    /// `E(B(1))`, otherwise the unique `k >= 0` with the edge in
    /// `E(B(2^{k+1})) \ E(B(2^k))`.
    pub fn annulus_index(self) -> i32 {
        let r = self.norm_inf();
        if r <= 1 {
            -1
        } else {
            // smallest k with 2^{k+1} >= r
            (32 - (r - 1).leading_zeros()) as i32 - 1
        }
    }

    fn canonical_key(self) -> (i32, i32, Orientation) {
        (self.base.y, self.base.x, self.orientation)
    }
}

impl PartialOrd for EdgeId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EdgeId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical_key().cmp(&other.canonical_key())
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.base, self.orientation.short_name())
    }
}

/// A dual vertex `(x + 1/2, y + 1/2)`, i.e. the unit face whose lower-left
/// corner is `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualVertex {
    pub x: i32,
    pub y: i32,
}

impl DualVertex {
    pub const fn new(x: i32, y: i32) -> Self {
        DualVertex { x, y }
    }

    /// The four primal corners of the face.
    pub fn corners(self) -> [Vertex; 4] {
        [
            Vertex::new(self.x, self.y),
            Vertex::new(self.x + 1, self.y),
            Vertex::new(self.x + 1, self.y + 1),
            Vertex::new(self.x, self.y + 1),
        ]
    }

    /// The four primal edges bounding the face (bottom, right, top, left).
    pub fn boundary_edges(self) -> [EdgeId; 4] {
        [
            EdgeId::horizontal(Vertex::new(self.x, self.y)),
            EdgeId::vertical(Vertex::new(self.x + 1, self.y)),
            EdgeId::horizontal(Vertex::new(self.x, self.y + 1)),
            EdgeId::vertical(Vertex::new(self.x, self.y)),
        ]
    }
}

/// The dual edge `e*` crossing a primal edge `e`.
///
/// Convention: the dual of the horizontal edge at `(x, y)` joins the faces
/// `(x, y-1)*` and `(x, y)*` (below and above it); the dual of the vertical
/// edge at `(x, y)` joins `(x-1, y)*` and `(x, y)*` (left and right of it).
/// This is `{e_x + (1/2,1/2), e_y - (1/2,1/2)}` written in face coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualEdgeId {
    pub primal: EdgeId,
}

impl DualEdgeId {
    pub fn primal(self) -> EdgeId {
        self.primal
    }

    /// Dual endpoints `(e*_x, e*_y)`: bottom then top, or left then right.
    pub fn endpoints(self) -> (DualVertex, DualVertex) {
        let Vertex { x, y } = self.primal.base;
        match self.primal.orientation {
            Orientation::Horizontal => (DualVertex::new(x, y - 1), DualVertex::new(x, y)),
            Orientation::Vertical => (DualVertex::new(x - 1, y), DualVertex::new(x, y)),
        }
    }

    /// The dual edge joining two adjacent dual vertices.
    pub fn between(a: DualVertex, b: DualVertex) -> Option<DualEdgeId> {
        let (lo, hi) = if (a.y, a.x) <= (b.y, b.x) { (a, b) } else { (b, a) };
        match (hi.x - lo.x, hi.y - lo.y) {
            // side by side: crosses the vertical primal edge between them
            (1, 0) => Some(EdgeId::vertical(Vertex::new(hi.x, hi.y)).dual()),
            // stacked: crosses the horizontal primal edge between them
            (0, 1) => Some(EdgeId::horizontal(Vertex::new(hi.x, hi.y)).dual()),
            _ => None,
        }
    }
}

/// The origin-centred box `B(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxSpec {
    pub radius: u32,
}

impl BoxSpec {
    pub const fn new(radius: u32) -> Self {
        BoxSpec { radius }
    }

    fn r(self) -> i32 {
        self.radius as i32
    }

    /// Side length in vertices, `2n + 1`.
    pub fn side(self) -> usize {
        2 * self.radius as usize + 1
    }

    pub fn vertex_count(self) -> usize {
        self.side() * self.side()
    }

    /// `|E(B(n))| = 2 s (s - 1)` with `s = 2n + 1`.
    pub fn edge_count(self) -> usize {
        let s = self.side();
        2 * s * (s - 1)
    }

    pub fn contains(self, v: Vertex) -> bool {
        v.norm_inf() <= self.radius
    }

    pub fn contains_edge(self, e: EdgeId) -> bool {
        e.norm_inf() <= self.radius
    }

    pub fn on_boundary(self, v: Vertex) -> bool {
        v.norm_inf() == self.radius
    }

    /// Row-major vertex index.
    pub fn vertex_index(self, v: Vertex) -> Option<usize> {
        if !self.contains(v) {
            return None;
        }
        let s = self.side();
        Some((v.y + self.r()) as usize * s + (v.x + self.r()) as usize)
    }

    pub fn vertex_at(self, idx: usize) -> Vertex {
        let s = self.side();
        Vertex::new((idx % s) as i32 - self.r(), (idx / s) as i32 - self.r())
    }

    /// Position of an edge in the canonical order of `edges_of_box`.
    pub fn edge_index(self, e: EdgeId) -> Option<usize> {
        if !self.contains_edge(e) {
            return None;
        }
        let s = self.side();
        let row = (e.base.y + self.r()) as usize;
        let col = (e.base.x + self.r()) as usize;
        let per_row = 2 * s - 1;
        let within = if e.base.y < self.r() {
            // every base in the row carries a vertical edge; all but the
            // last also carry a horizontal edge, listed first
            match e.orientation {
                Orientation::Horizontal => 2 * col,
                Orientation::Vertical if col + 1 == s => 2 * col,
                Orientation::Vertical => 2 * col + 1,
            }
        } else {
            col
        };
        Some(row * per_row + within)
    }

    pub fn edge_at(self, idx: usize) -> EdgeId {
        let s = self.side();
        let per_row = 2 * s - 1;
        let row = idx / per_row;
        let within = idx % per_row;
        let y = row as i32 - self.r();
        if y < self.r() {
            let col = within / 2;
            let x = col as i32 - self.r();
            if col + 1 == s || within % 2 == 1 {
                EdgeId::vertical(Vertex::new(x, y))
            } else {
                EdgeId::horizontal(Vertex::new(x, y))
            }
        } else {
            EdgeId::horizontal(Vertex::new(within as i32 - self.r(), y))
        }
    }

    /// Vertices of `B(n)` in row-major order.
    pub fn vertices(self) -> impl Iterator<Item = Vertex> {
        let r = self.r();
        (-r..=r).flat_map(move |y| (-r..=r).map(move |x| Vertex::new(x, y)))
    }

    /// `∂B(n)` in canonical vertex order.
    pub fn boundary(self) -> Vec<Vertex> {
        if self.radius == 0 {
            return vec![Vertex::ORIGIN];
        }
        self.vertices().filter(|v| self.on_boundary(*v)).collect()
    }
}

/// Every edge with both endpoints in `B(radius)`, in canonical order.
pub fn edges_of_box(b: BoxSpec) -> Vec<EdgeId> {
    let r = b.radius as i32;
    let mut out = Vec::with_capacity(b.edge_count());
    for y in -r..=r {
        for x in -r..=r {
            let v = Vertex::new(x, y);
            if x < r {
                out.push(EdgeId::horizontal(v));
            }
            if y < r {
                out.push(EdgeId::vertical(v));
            }
        }
    }
    out
}

/// The dyadic annulus `Ann(k)`: `B(1)` for `k = -1`, otherwise
/// `B(2^{k+1}) \ B(2^k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub k: i32,
}

impl AnnulusSpec {
    pub fn new(k: i32) -> Self {
        assert!(k >= -1, "annulus index must be >= -1");
        AnnulusSpec { k }
    }

    /// Sup-norm radius of the outer box.
    pub fn outer_radius(self) -> u32 {
        if self.k < 0 {
            1
        } else {
            1u32 << (self.k + 1)
        }
    }

    /// Vertices with norm at most this are excluded (none for `k = -1`).
    pub fn inner_radius(self) -> Option<u32> {
        if self.k < 0 {
            None
        } else {
            Some(1u32 << self.k)
        }
    }

    pub fn contains(self, v: Vertex) -> bool {
        let n = v.norm_inf();
        n <= self.outer_radius() && self.inner_radius().map_or(true, |r| n > r)
    }

    /// `|E_k|`: 12 for `k = -1`, `24·4^k + 4·2^k` otherwise.
    pub fn edge_count(self) -> usize {
        if self.k < 0 {
            12
        } else {
            24 * 4usize.pow(self.k as u32) + 4 * 2usize.pow(self.k as u32)
        }
    }
}

/// `E_k = E(B(2^{k+1})) \ E(B(2^k))` (and `E_{-1} = E(B(1))`), in canonical order.
pub fn annulus_edges(a: AnnulusSpec) -> Vec<EdgeId> {
    let outer = BoxSpec::new(a.outer_radius());
    match a.inner_radius() {
        None => edges_of_box(outer),
        Some(inner) => edges_of_box(outer)
            .into_iter()
            .filter(|e| e.norm_inf() > inner)
            .collect(),
    }
}
