//! Circuits as boundaries of cell regions.
//!
//! A square grid of cells `lo..=hi` in each coordinate; cell `(i, j)` is the
//! unit square `[i, i+1] x [j, j+1]` in corner coordinates. Some walls
//! between neighbouring cells are usable. A circuit of usable walls around
//! the seed cells is the boundary of a simply connected cell region, so the
//! innermost and outermost circuits are boundaries of two flood-fill
//! regions:
//!
//! * innermost: cells reachable from the seeds without crossing a usable
//!   wall, with holes filled in;
//! * outermost: the seed component of the cells that cannot be reached from
//!   the rim without crossing a usable wall.
//!
//! Both regions and their complements are 4-connected, so their boundaries
//! never pinch at a corner and walk out as simple cycles.

use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Extent {
    Innermost,
    Outermost,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct CellGrid {
    pub lo: i32,
    pub hi: i32,
}

impl CellGrid {
    fn side(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    fn index(&self, c: (i32, i32)) -> usize {
        (c.1 - self.lo) as usize * self.side() + (c.0 - self.lo) as usize
    }

    fn cell(&self, idx: usize) -> (i32, i32) {
        let s = self.side();
        ((idx % s) as i32 + self.lo, (idx / s) as i32 + self.lo)
    }

    fn on_rim(&self, c: (i32, i32)) -> bool {
        c.0 == self.lo || c.0 == self.hi || c.1 == self.lo || c.1 == self.hi
    }

    fn inside(&self, c: (i32, i32)) -> bool {
        (self.lo..=self.hi).contains(&c.0) && (self.lo..=self.hi).contains(&c.1)
    }
}

/// Neighbouring cells of `c` with the wall between them, as
/// `(neighbour, lower_left_cell, east)`.
fn moves(c: (i32, i32)) -> [((i32, i32), (i32, i32), bool); 4] {
    let (i, j) = c;
    [
        ((i + 1, j), (i, j), true),
        ((i - 1, j), (i - 1, j), true),
        ((i, j + 1), (i, j), false),
        ((i, j - 1), (i, j - 1), false),
    ]
}

/// Flood fill from `starts`. With `respect_walls` a move across a usable
/// wall is forbidden; `allowed` filters cells.
fn flood(
    grid: &CellGrid,
    starts: impl IntoIterator<Item = (i32, i32)>,
    respect_walls: bool,
    usable: &impl Fn(i32, i32, bool) -> bool,
    allowed: impl Fn(usize) -> bool,
) -> Vec<bool> {
    let mut seen = vec![false; grid.side() * grid.side()];
    let mut stack = Vec::new();
    for s in starts {
        let i = grid.index(s);
        if allowed(i) && !seen[i] {
            seen[i] = true;
            stack.push(s);
        }
    }
    while let Some(c) = stack.pop() {
        for (nb, wall_cell, east) in moves(c) {
            if !grid.inside(nb) {
                continue;
            }
            let ni = grid.index(nb);
            if seen[ni] || !allowed(ni) {
                continue;
            }
            if respect_walls && usable(wall_cell.0, wall_cell.1, east) {
                continue;
            }
            seen[ni] = true;
            stack.push(nb);
        }
    }
    seen
}

fn rim_cells(grid: &CellGrid) -> impl Iterator<Item = (i32, i32)> + '_ {
    (0..grid.side() * grid.side())
        .map(|i| grid.cell(i))
        .filter(|c| grid.on_rim(*c))
}

/// The region bounded by the innermost or outermost circuit of usable walls
/// around `seeds`, or `None` if no such circuit exists inside the grid.
/// `usable(i, j, east)` describes the wall between `(i, j)` and `(i+1, j)`
/// when `east`, otherwise between `(i, j)` and `(i, j+1)`. Seeds must be
/// pairwise connected without crossing usable walls and lie off the rim.
pub(crate) fn enclosed_region(
    grid: &CellGrid,
    seeds: &[(i32, i32)],
    usable: impl Fn(i32, i32, bool) -> bool,
    extent: Extent,
) -> Option<Vec<bool>> {
    match extent {
        Extent::Innermost => {
            let reach = flood(grid, seeds.iter().copied(), true, &usable, |_| true);
            if rim_cells(grid).any(|c| reach[grid.index(c)]) {
                return None;
            }
            let outside = flood(grid, rim_cells(grid), false, &usable, |i| !reach[i]);
            Some(outside.into_iter().map(|o| !o).collect())
        }
        Extent::Outermost => {
            let outside = flood(grid, rim_cells(grid), true, &usable, |_| true);
            if seeds.iter().any(|s| outside[grid.index(*s)]) {
                return None;
            }
            Some(flood(grid, seeds.iter().copied(), false, &usable, |i| !outside[i]))
        }
    }
}

/// Boundary of a simply connected region as a closed corner walk, starting
/// at the lowest-then-leftmost corner and running counterclockwise. The first
/// corner is not repeated at the end.
pub(crate) fn region_boundary(grid: &CellGrid, region: &[bool]) -> Vec<(i32, i32)> {
    let mut adj: HashMap<(i32, i32), Vec<(i32, i32)>> = HashMap::new();
    let mut link = |a: (i32, i32), b: (i32, i32)| {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    };
    for (idx, _) in region.iter().enumerate().filter(|(_, r)| **r) {
        let (i, j) = grid.cell(idx);
        let out = |c: (i32, i32)| !grid.inside(c) || !region[grid.index(c)];
        if out((i + 1, j)) {
            link((i + 1, j), (i + 1, j + 1));
        }
        if out((i - 1, j)) {
            link((i, j), (i, j + 1));
        }
        if out((i, j + 1)) {
            link((i, j + 1), (i + 1, j + 1));
        }
        if out((i, j - 1)) {
            link((i, j), (i + 1, j));
        }
    }
    let Some(&start) = adj.keys().min_by_key(|c| (c.1, c.0)) else {
        return Vec::new();
    };
    debug_assert!(adj.values().all(|v| v.len() == 2), "boundary pinches");
    let mut walk = vec![start];
    let mut prev = start;
    let mut cur = adj[&start][0];
    while cur != start {
        walk.push(cur);
        let nbs = &adj[&cur];
        let next = if nbs[0] == prev { nbs[1] } else { nbs[0] };
        prev = cur;
        cur = next;
    }
    if shoelace2(&walk) < 0 {
        walk[1..].reverse();
    }
    walk
}

/// Twice the signed area of a closed polygon.
pub(crate) fn shoelace2(pts: &[(i32, i32)]) -> i64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.0 as i64 * b.1 as i64 - b.0 as i64 * a.1 as i64
        })
        .sum()
}
