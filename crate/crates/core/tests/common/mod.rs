//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use critfpp_core::field::Omega;
use critfpp_core::lattice::{EdgeId, Vertex};
use critfpp_core::weights::DistributionSpec;
use std::collections::BTreeSet;

/// Minimum of `T(gamma)` over every self-avoiding path in `B(r)` from the
/// origin to a vertex of `∂B(r)`, by exhaustive depth-first enumeration.
pub fn saw_box_time<F: Omega>(f: &F, d: &DistributionSpec, r: u32) -> f64 {
    fn go<F: Omega>(
        f: &F,
        d: &DistributionSpec,
        r: i32,
        v: (i32, i32),
        t: f64,
        on: &mut Vec<(i32, i32)>,
        best: &mut f64,
    ) {
        if v.0.abs() == r || v.1.abs() == r {
            *best = best.min(t);
        }
        for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            let w = (v.0 + dx, v.1 + dy);
            if w.0.abs() > r || w.1.abs() > r || on.contains(&w) {
                continue;
            }
            let e = EdgeId::between(Vertex::new(v.0, v.1), Vertex::new(w.0, w.1)).unwrap();
            let te = d.quantile_unchecked(f.omega(e));
            on.push(w);
            go(f, d, r, w, t + te, on, best);
            on.pop();
        }
    }
    if r == 0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    go(f, d, r as i32, (0, 0), 0.0, &mut vec![(0, 0)], &mut best);
    best
}

/// Minimum time over self-avoiding paths from `a` to `b` inside `B(r)`.
pub fn saw_point_time<F: Omega>(f: &F, d: &DistributionSpec, r: u32, a: (i32, i32), b: (i32, i32)) -> f64 {
    fn go<F: Omega>(
        f: &F,
        d: &DistributionSpec,
        r: i32,
        v: (i32, i32),
        target: (i32, i32),
        t: f64,
        on: &mut Vec<(i32, i32)>,
        best: &mut f64,
    ) {
        if v == target {
            *best = best.min(t);
            return;
        }
        for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            let w = (v.0 + dx, v.1 + dy);
            if w.0.abs() > r || w.1.abs() > r || on.contains(&w) {
                continue;
            }
            let e = EdgeId::between(Vertex::new(v.0, v.1), Vertex::new(w.0, w.1)).unwrap();
            let te = d.quantile_unchecked(f.omega(e));
            on.push(w);
            go(f, d, r, w, target, t + te, on, best);
            on.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(f, d, r as i32, a, b, 0.0, &mut vec![a], &mut best);
    best
}

pub type Cycle = Vec<(i32, i32)>;

/// Every simple cycle (length at least 4) of the graph on the integer points
/// accepted by `node`, with 4-neighbour bonds accepted by `bond`. Cycles are
/// returned in canonical form (see [`canonical`]).
pub fn all_cycles(
    nodes: &[(i32, i32)],
    node: impl Fn((i32, i32)) -> bool,
    bond: impl Fn((i32, i32), (i32, i32)) -> bool,
) -> BTreeSet<Cycle> {
    let key = |p: (i32, i32)| (p.1, p.0);
    let mut out = BTreeSet::new();
    for &s in nodes {
        if !node(s) {
            continue;
        }
        // cycles whose smallest vertex is s
        let mut path = vec![s];
        let mut stack: Vec<usize> = vec![0];
        while let Some(dir) = stack.last_mut() {
            let v = *path.last().unwrap();
            if *dir == 4 {
                stack.pop();
                path.pop();
                continue;
            }
            let (dx, dy) = [(1, 0), (0, 1), (-1, 0), (0, -1)][*dir];
            *dir += 1;
            let w = (v.0 + dx, v.1 + dy);
            if !node(w) || !bond(v, w) {
                continue;
            }
            if w == s {
                if path.len() >= 4 {
                    out.insert(canonical(&path));
                }
                continue;
            }
            if key(w) < key(s) || path.contains(&w) {
                continue;
            }
            path.push(w);
            stack.push(0);
        }
    }
    out
}

/// Twice the signed area.
pub fn shoelace2(c: &[(i32, i32)]) -> i64 {
    let n = c.len();
    (0..n)
        .map(|i| {
            let (a, b) = (c[i], c[(i + 1) % n]);
            a.0 as i64 * b.1 as i64 - b.0 as i64 * a.1 as i64
        })
        .sum()
}

/// Rotation starting at the lowest-then-leftmost point, counterclockwise.
pub fn canonical(c: &[(i32, i32)]) -> Cycle {
    let start = (0..c.len()).min_by_key(|i| (c[*i].1, c[*i].0)).unwrap();
    let mut v: Cycle = c[start..].iter().chain(&c[..start]).copied().collect();
    if shoelace2(&v) < 0 {
        v[1..].reverse();
    }
    v
}

/// Whether the cycle crosses the horizontal ray `{(t, y0 + 1/2) : t > x0}`
/// an odd number of times, i.e. encloses the point `(x0, y0 + 1/2)`.
/// Points are integer lattice points; the ray avoids them all.
pub fn encloses_half_point(c: &[(i32, i32)], x0: f64, y0: i32) -> bool {
    let n = c.len();
    let mut crossings = 0;
    for i in 0..n {
        let (a, b) = (c[i], c[(i + 1) % n]);
        if a.0 == b.0 && (a.0 as f64) > x0 && a.1.min(b.1) == y0 {
            crossings += 1;
        }
    }
    crossings % 2 == 1
}

pub fn box_points(r: i32) -> Vec<(i32, i32)> {
    let mut v = Vec::new();
    for y in -r..=r {
        for x in -r..=r {
            v.push((x, y));
        }
    }
    v
}
