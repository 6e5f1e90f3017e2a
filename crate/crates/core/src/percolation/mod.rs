//! Bond percolation at level `p` under the coupling: an edge is p-open when
//! `omega_e <= p`.
//!
//! Covers rectangle crossings and their Monte Carlo probabilities, the
//! correlation length and its inverse `p_n`, innermost open circuits in
//! dyadic annuli and closed dual circuits around the origin.

mod planar;
mod unionfind;

use crate::field::{mix_seed, FieldError, LazyField, Omega};
use crate::lattice::{AnnulusSpec, BoxSpec, DualEdgeId, DualVertex, EdgeId, Vertex};
use planar::{enclosed_region, region_boundary, CellGrid, Extent};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PercolationError {
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("epsilon {0} must lie in (0, 1/2)")]
    BadEpsilon(f64),
    #[error("rectangle {rect} does not fit in B({radius})")]
    RectOutsideBox { rect: Rect, radius: u32 },
    #[error("rectangle sides must be at least 1")]
    DegenerateRect,
    #[error("at least 100 replicates are required, got {0}")]
    TooFewReps(usize),
    #[error("scale {0} is out of range")]
    BadScale(i64),
    #[error("correlation length at p = {p} exceeds the probe cap {cap}")]
    AbortedAtCap { p: f64, cap: u32 },
    #[error("no open circuit found in Ann(k) for k = {n}..={last_k}{}", if *.box_limited { " (box too small to scan further)" } else { "" })]
    ScanCapExceeded { n: i32, last_k: i32, box_limited: bool },
    #[error("box radius {radius} is smaller than the required {needed}")]
    BoxTooSmall { needed: u32, radius: u32 },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn check_p(p: f64) -> Result<(), PercolationError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(PercolationError::BadProbability(p))
    }
}

// ---------------------------------------------------------------- crossings

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    LeftRight,
    TopBottom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossingMode {
    PrimalOpen,
    DualClosed,
}

/// The vertex rectangle `[x0, x0+width] x [y0, y0+height]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i32,
    pub y0: i32,
    pub width: u32,
    pub height: u32,
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}, {}]x[{}, {}]",
            self.x0,
            self.x0 + self.width as i32,
            self.y0,
            self.y0 + self.height as i32
        )
    }
}

impl Rect {
    pub fn new(x0: i32, y0: i32, width: u32, height: u32) -> Self {
        Rect { x0, y0, width, height }
    }

    /// `[0, n] x [0, m]`.
    pub fn cornered(n: u32, m: u32) -> Self {
        Rect::new(0, 0, n, m)
    }

    /// `[0, n] x [0, m]` translated by `(-floor(n/2), -floor(m/2))`.
    pub fn centered(n: u32, m: u32) -> Self {
        Rect::new(-((n / 2) as i32), -((m / 2) as i32), n, m)
    }

    /// Smallest box radius containing the rectangle.
    pub fn required_radius(&self) -> u32 {
        let x1 = self.x0 + self.width as i32;
        let y1 = self.y0 + self.height as i32;
        [self.x0, x1, self.y0, y1].iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }
}

/// Whether `rect` is crossed in `direction`. `PrimalOpen` asks for a p-open
/// path inside the rectangle joining its two opposite sides. `DualClosed`
/// asks for a p-closed path in the dual rectangle that separates the other
/// pair of sides: for `TopBottom` the dual vertices are the faces with
/// centres in `[x0+1/2, x0+n-1/2] x [y0-1/2, y0+m+1/2]` and the dual edges
/// cross every primal edge of the rectangle except the vertical ones on its
/// left and right sides. Exactly one of a primal left-right crossing and a
/// dual top-bottom crossing exists.
pub fn has_crossing<F: Omega + ?Sized>(
    f: &F,
    p: f64,
    rect: Rect,
    direction: Direction,
    mode: CrossingMode,
) -> Result<bool, PercolationError> {
    check_p(p)?;
    if rect.width == 0 || rect.height == 0 {
        return Err(PercolationError::DegenerateRect);
    }
    if rect.required_radius() > f.radius() {
        return Err(PercolationError::RectOutsideBox { rect, radius: f.radius() });
    }
    let (n, m) = (rect.width as usize, rect.height as usize);
    let (x0, y0) = (rect.x0, rect.y0);
    let open = |e: EdgeId| f.omega(e) <= p;
    let closed = |e: EdgeId| f.omega(e) > p;
    let v = |i: usize, j: usize| Vertex::new(x0 + i as i32, y0 + j as i32);
    Ok(match mode {
        CrossingMode::PrimalOpen => unionfind::grid_crossing(
            n + 1,
            m + 1,
            direction == Direction::LeftRight,
            |i, j| open(EdgeId::horizontal(v(i, j))),
            |i, j| open(EdgeId::vertical(v(i, j))),
        ),
        // node (i, j) is the face whose lower-left corner is v(i, j - 1)
        CrossingMode::DualClosed if direction == Direction::TopBottom => unionfind::grid_crossing(
            n,
            m + 2,
            false,
            |i, j| (1..=m).contains(&j) && closed(EdgeId::vertical(v(i + 1, j - 1))),
            |i, j| closed(EdgeId::horizontal(v(i, j))),
        ),
        // node (i, j) is the face whose lower-left corner is v(i - 1, j)
        CrossingMode::DualClosed => unionfind::grid_crossing(
            n + 2,
            m,
            true,
            |i, j| closed(EdgeId::vertical(v(i, j))),
            |i, j| (1..=n).contains(&i) && closed(EdgeId::horizontal(v(i - 1, j + 1))),
        ),
    })
}

/// A Monte Carlo estimate of a probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub reps: usize,
}

impl ProportionEstimate {
    fn from_count(hits: usize, reps: usize) -> Self {
        let est = hits as f64 / reps as f64;
        ProportionEstimate { estimate: est, stderr: (est * (1.0 - est) / reps as f64).sqrt(), reps }
    }
}

/// Field seed of replicate `rep` in crossing estimates. It does not depend
/// on `p` or the rectangle, so estimates at different levels and sizes
/// share random numbers.
pub fn crossing_seed(seed: u64, rep: usize) -> u64 {
    mix_seed(seed, &[rep as u64])
}

/// Estimates `sigma(n, m, p)`, the probability of a p-open left-right
/// crossing of an `n` by `m` rectangle, from `reps` independent fields.
pub fn estimate_sigma(p: f64, n: u32, m: u32, reps: usize, seed: u64) -> Result<ProportionEstimate, PercolationError> {
    check_p(p)?;
    if reps < 100 {
        return Err(PercolationError::TooFewReps(reps));
    }
    if n == 0 || m == 0 {
        return Err(PercolationError::DegenerateRect);
    }
    let rect = Rect::centered(n, m);
    let bounds = BoxSpec::new(rect.required_radius());
    let hits = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<bool, PercolationError> {
            let f = LazyField::new(bounds, crossing_seed(seed, r))?;
            has_crossing(&f, p, rect, Direction::LeftRight, CrossingMode::PrimalOpen)
        })
        .collect::<Result<Vec<bool>, _>>()?
        .into_iter()
        .filter(|h| *h)
        .count();
    Ok(ProportionEstimate::from_count(hits, reps))
}

/// Largest side probed by [`correlation_length`].
pub const DEFAULT_PROBE_CAP: u32 = 1 << 12;

/// Default `epsilon` for correlation lengths.
pub const DEFAULT_EPSILON: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub n: u32,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLengthReport {
    pub p: f64,
    pub epsilon: f64,
    #[serde(rename = "L")]
    pub l: u32,
    /// Every probed side, in increasing order.
    pub sigma_curve: Vec<SigmaPoint>,
    pub samples_per_point: usize,
    /// The estimate at `L` is within two standard errors of `1 - epsilon`.
    pub near_threshold: bool,
}

/// `L(p, epsilon)`, the smallest `n` with `sigma(n, n, p) >= 1 - epsilon`,
/// probed up to [`DEFAULT_PROBE_CAP`].
pub fn correlation_length(p: f64, epsilon: f64, reps: usize, seed: u64) -> Result<CorrelationLengthReport, PercolationError> {
    correlation_length_capped(p, epsilon, reps, seed, DEFAULT_PROBE_CAP)
}

/// As [`correlation_length`] with an explicit probe cap. Sides are doubled
/// from 1 (the last probe is clamped to `cap`), then the bracket is refined
/// by bisection.
pub fn correlation_length_capped(
    p: f64,
    epsilon: f64,
    reps: usize,
    seed: u64,
    cap: u32,
) -> Result<CorrelationLengthReport, PercolationError> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(PercolationError::BadProbability(p));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(PercolationError::BadEpsilon(epsilon));
    }
    if cap == 0 {
        return Err(PercolationError::BadScale(0));
    }
    let target = 1.0 - epsilon;
    let mut probed: BTreeMap<u32, ProportionEstimate> = BTreeMap::new();
    let mut probe = |n: u32| -> Result<bool, PercolationError> {
        let est = estimate_sigma(p, n, n, reps, seed)?;
        probed.insert(n, est);
        Ok(est.estimate >= target)
    };

    let mut lo = 0;
    let mut hi = 1;
    loop {
        if probe(hi)? {
            break;
        }
        if hi >= cap {
            return Err(PercolationError::AbortedAtCap { p, cap });
        }
        lo = hi;
        hi = (hi * 2).min(cap);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let decisive = probed[&hi];
    Ok(CorrelationLengthReport {
        p,
        epsilon,
        l: hi,
        sigma_curve: probed
            .iter()
            .map(|(n, e)| SigmaPoint { n: *n, estimate: e.estimate, stderr: e.stderr })
            .collect(),
        samples_per_point: reps,
        near_threshold: (decisive.estimate - target).abs() <= 2.0 * decisive.stderr,
    })
}

/// Lower end of the bisection bracket for `p_n`.
pub const P_N_LOWER: f64 = 0.5 + 1e-6;

/// Number of bisection steps for `p_n`.
pub const P_N_STEPS: u32 = 10;

/// `p_n = min{p : L(p, epsilon) <= n}`, by bisection on `p` over
/// `[1/2 + 1e-6, 1]`. A level whose correlation length exceeds `n` moves
/// the lower end of the bracket; the upper end is returned.
pub fn p_n_estimate(n: u32, epsilon: f64, reps: usize, seed: u64) -> Result<f64, PercolationError> {
    p_n_estimate_capped(n, epsilon, reps, seed, DEFAULT_PROBE_CAP)
}

pub fn p_n_estimate_capped(n: u32, epsilon: f64, reps: usize, seed: u64, cap: u32) -> Result<f64, PercolationError> {
    if n < 2 {
        return Err(PercolationError::BadScale(n as i64));
    }
    if n >= cap {
        return Err(PercolationError::AbortedAtCap { p: P_N_LOWER, cap });
    }
    let (mut lo, mut hi) = (P_N_LOWER, 1.0);
    for _ in 0..P_N_STEPS {
        let mid = 0.5 * (lo + hi);
        match correlation_length_capped(mid, epsilon, reps, seed, n) {
            Ok(_) => hi = mid,
            Err(PercolationError::AbortedAtCap { .. }) => lo = mid,
            Err(e) => return Err(e),
        }
    }
    Ok(hi)
}

// ----------------------------------------------------------------- circuits

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircuitKind {
    PrimalOpen,
    DualClosed,
}

/// A self-avoiding cycle surrounding the origin. For `DualClosed` circuits
/// each entry `(x, y)` stands for the dual vertex at `(x + 1/2, y + 1/2)`.
/// Vertices start at the lowest-then-leftmost one and run counterclockwise;
/// the first is not repeated at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub vertices: Vec<Vertex>,
    pub level: f64,
    pub kind: CircuitKind,
    pub annulus_k: Option<i32>,
}

impl Circuit {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Coordinates doubled so that primal and dual vertices are integers.
    fn doubled(&self) -> Vec<(i64, i64)> {
        let s = match self.kind {
            CircuitKind::PrimalOpen => 0,
            CircuitKind::DualClosed => 1,
        };
        self.vertices
            .iter()
            .map(|v| (2 * v.x as i64 + s, 2 * v.y as i64 + s))
            .collect()
    }

    /// Primal edges traversed (primal circuits) or crossed (dual circuits).
    pub fn edges(&self) -> Vec<EdgeId> {
        let n = self.vertices.len();
        (0..n)
            .filter_map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                match self.kind {
                    CircuitKind::PrimalOpen => EdgeId::between(a, b),
                    CircuitKind::DualClosed => {
                        DualEdgeId::between(DualVertex::new(a.x, a.y), DualVertex::new(b.x, b.y)).map(|d| d.primal())
                    }
                }
            })
            .collect()
    }

    /// Winding number around the primal vertex `v`, which must not lie on
    /// the circuit.
    pub fn winding_number_around(&self, v: Vertex) -> i32 {
        let (px, py) = (2 * v.x as i64, 2 * v.y as i64);
        let pts = self.doubled();
        let n = pts.len();
        let mut w = 0;
        for i in 0..n {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            if a.0 != b.0 || a.0 <= px {
                continue;
            }
            if a.1 <= py && py < b.1 {
                w += 1;
            } else if b.1 <= py && py < a.1 {
                w -= 1;
            }
        }
        w
    }

    pub fn winding_number(&self) -> i32 {
        self.winding_number_around(Vertex::ORIGIN)
    }

    /// Area of the enclosed region in lattice units.
    pub fn enclosed_area(&self) -> f64 {
        let pts = self.doubled();
        let n = pts.len();
        let twice: i64 = (0..n)
            .map(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % n]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum();
        twice.abs() as f64 / 8.0
    }

    /// `sup |u - v|_inf` over pairs of circuit vertices.
    pub fn diameter(&self) -> u32 {
        let xs = self.vertices.iter().map(|v| v.x);
        let ys = self.vertices.iter().map(|v| v.y);
        let span = |it: &mut dyn Iterator<Item = i32>| {
            let (mut lo, mut hi) = (i32::MAX, i32::MIN);
            for c in it {
                lo = lo.min(c);
                hi = hi.max(c);
            }
            if lo > hi {
                0
            } else {
                (hi - lo) as u32
            }
        };
        span(&mut xs.into_iter()).max(span(&mut ys.into_iter()))
    }

    /// Checks self-avoidance, adjacency, winding number `+-1` around the
    /// origin and the state of every edge at `level`.
    pub fn validate<F: Omega + ?Sized>(&self, f: &F) -> Result<(), PercolationError> {
        let bad = |m: String| Err(PercolationError::InvalidCircuit(m));
        let n = self.vertices.len();
        if n < 4 {
            return bad(format!("only {n} vertices"));
        }
        let distinct: HashSet<Vertex> = self.vertices.iter().copied().collect();
        if distinct.len() != n {
            return bad("repeated vertex".into());
        }
        let edges = self.edges();
        if edges.len() != n {
            return bad("consecutive vertices are not adjacent".into());
        }
        let w = self.winding_number();
        if w.abs() != 1 {
            return bad(format!("winding number {w} around the origin"));
        }
        for e in edges {
            let omega = f.omega_checked(e)?;
            let ok = match self.kind {
                CircuitKind::PrimalOpen => omega <= self.level,
                CircuitKind::DualClosed => omega > self.level,
            };
            if !ok {
                return bad(format!("edge {e} has omega {omega} at level {}", self.level));
            }
        }
        Ok(())
    }
}

/// Faces touching the origin, as cells of the face grid.
const ORIGIN_FACES: [(i32, i32); 4] = [(-1, -1), (0, -1), (-1, 0), (0, 0)];

/// Wall between face `(i, j)` and its east or north neighbour.
fn face_wall(i: i32, j: i32, east: bool) -> EdgeId {
    if east {
        EdgeId::vertical(Vertex::new(i + 1, j))
    } else {
        EdgeId::horizontal(Vertex::new(i, j + 1))
    }
}

/// Wall between primal vertex `(a, b)` and its east or north neighbour,
/// which is the dual of the primal edge joining them.
fn vertex_wall(a: i32, b: i32, east: bool) -> EdgeId {
    if east {
        EdgeId::horizontal(Vertex::new(a, b))
    } else {
        EdgeId::vertical(Vertex::new(a, b))
    }
}

/// The innermost p-open circuit surrounding the origin whose vertices all
/// lie in `Ann(k)`, if any. Circuits never pass through the origin.
pub fn innermost_open_circuit<F: Omega + ?Sized>(f: &F, p: f64, k: i32) -> Result<Option<Circuit>, PercolationError> {
    check_p(p)?;
    if k < -1 || k > 30 {
        return Err(PercolationError::BadScale(k as i64));
    }
    let ann = AnnulusSpec::new(k);
    let outer = ann.outer_radius();
    if outer > f.radius() {
        return Err(PercolationError::BoxTooSmall { needed: outer, radius: f.radius() });
    }
    let m = outer as i32;
    let grid = CellGrid { lo: -m - 1, hi: m };
    let usable = |i: i32, j: i32, east: bool| {
        let e = face_wall(i, j, east);
        let (a, b) = e.endpoints();
        ann.contains(a) && ann.contains(b) && a != Vertex::ORIGIN && b != Vertex::ORIGIN && f.omega(e) <= p
    };
    let Some(region) = enclosed_region(&grid, &ORIGIN_FACES, usable, Extent::Innermost) else {
        return Ok(None);
    };
    let vertices = region_boundary(&grid, &region)
        .into_iter()
        .map(|(x, y)| Vertex::new(x, y))
        .collect();
    Ok(Some(Circuit { vertices, level: p, kind: CircuitKind::PrimalOpen, annulus_k: Some(k) }))
}

/// Number of annuli beyond `n` scanned by [`find_m_and_circuit`].
pub const DEFAULT_SCAN_CAP: i32 = 12;

/// `m(n)`, the first `k >= n` such that `Ann(k)` holds a p_c-open circuit
/// surrounding the origin, together with the innermost such circuit `C_n`.
pub fn find_m_and_circuit<F: Omega + ?Sized>(f: &F, n: i32) -> Result<(i32, Circuit), PercolationError> {
    find_m_and_circuit_capped(f, n, DEFAULT_SCAN_CAP)
}

pub fn find_m_and_circuit_capped<F: Omega + ?Sized>(
    f: &F,
    n: i32,
    scan_cap: i32,
) -> Result<(i32, Circuit), PercolationError> {
    if n < -1 || n > 30 {
        return Err(PercolationError::BadScale(n as i64));
    }
    let mut last = n - 1;
    for k in n..=n + scan_cap {
        if AnnulusSpec::new(k).outer_radius() > f.radius() {
            return Err(PercolationError::ScanCapExceeded { n, last_k: last, box_limited: true });
        }
        if let Some(c) = innermost_open_circuit(f, crate::weights::P_C, k)? {
            return Ok((k, c));
        }
        last = k;
    }
    Err(PercolationError::ScanCapExceeded { n, last_k: last, box_limited: false })
}

/// Where a closed dual circuit is looked for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualConstraint {
    /// Dual vertices in `B(2^k)* \ B(2^{k-1})*`, where `B(r)*` is the set of
    /// faces of `B(r)`. Requires `k >= 1`.
    Annulus { k: i32 },
    /// Anywhere inside the field's box, with sup-norm diameter at least `2^n`.
    MinDiameter { n: u32 },
}

/// Looks for a p-closed dual circuit surrounding the origin. Returns the
/// innermost one in the annulus case and the outermost one (which has the
/// largest diameter) in the diameter case.
pub fn closed_dual_circuit_exists<F: Omega + ?Sized>(
    f: &F,
    p: f64,
    constraint: DualConstraint,
) -> Result<Option<Circuit>, PercolationError> {
    check_p(p)?;
    // doubled sup-norm bounds (lo, hi] on dual vertices
    let (lo2, hi2, extent, annulus_k) = match constraint {
        DualConstraint::Annulus { k } => {
            if !(1..=30).contains(&k) {
                return Err(PercolationError::BadScale(k as i64));
            }
            let outer = 1u32 << k;
            if outer > f.radius() {
                return Err(PercolationError::BoxTooSmall { needed: outer, radius: f.radius() });
            }
            (outer as i64, 2 * outer as i64, Extent::Innermost, Some(k))
        }
        DualConstraint::MinDiameter { n } => {
            if n > 30 {
                return Err(PercolationError::BadScale(n as i64));
            }
            (0, 2 * f.radius() as i64, Extent::Outermost, None)
        }
    };
    let in_region = |d: DualVertex| {
        let r = (2 * d.x as i64 + 1).abs().max((2 * d.y as i64 + 1).abs());
        lo2 < r && r <= hi2
    };
    let r = (hi2 / 2) as i32;
    let grid = CellGrid { lo: -r - 1, hi: r + 1 };
    let bounds = f.bounds();
    let usable = |a: i32, b: i32, east: bool| {
        let e = vertex_wall(a, b, east);
        let (u, v) = e.dual().endpoints();
        in_region(u) && in_region(v) && bounds.contains_edge(e) && f.omega(e) > p
    };
    let Some(region) = enclosed_region(&grid, &[(0, 0)], usable, extent) else {
        return Ok(None);
    };
    let vertices: Vec<Vertex> = region_boundary(&grid, &region)
        .into_iter()
        .map(|(c, d)| Vertex::new(c - 1, d - 1))
        .collect();
    let circuit = Circuit { vertices, level: p, kind: CircuitKind::DualClosed, annulus_k };
    if let DualConstraint::MinDiameter { n } = constraint {
        if (circuit.diameter() as u64) < (1u64 << n) {
            return Ok(None);
        }
    }
    Ok(Some(circuit))
}
