//! Disjoint-set forest with path halving and union by size.

#[derive(Clone, Debug)]
pub(crate) struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = self.parent[x] as usize;
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
    }

    pub(crate) fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Whether the two opposite sides of an `nx` by `ny` node grid are joined
/// by usable bonds. `east(i, j)` is the bond `(i, j)-(i+1, j)`, `north(i, j)`
/// the bond `(i, j)-(i, j+1)`. `left_right` selects columns `0` and `nx-1`,
/// otherwise rows `0` and `ny-1`.
pub(crate) fn grid_crossing(
    nx: usize,
    ny: usize,
    left_right: bool,
    east: impl Fn(usize, usize) -> bool,
    north: impl Fn(usize, usize) -> bool,
) -> bool {
    let n = nx * ny;
    let (side_a, side_b) = (n, n + 1);
    let mut uf = UnionFind::new(n + 2);
    let id = |i: usize, j: usize| j * nx + i;
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx && east(i, j) {
                uf.union(id(i, j), id(i + 1, j));
            }
            if j + 1 < ny && north(i, j) {
                uf.union(id(i, j), id(i, j + 1));
            }
        }
    }
    if left_right {
        for j in 0..ny {
            uf.union(side_a, id(0, j));
            uf.union(side_b, id(nx - 1, j));
        }
    } else {
        for i in 0..nx {
            uf.union(side_a, id(i, 0));
            uf.union(side_b, id(i, ny - 1));
        }
    }
    uf.same(side_a, side_b)
}
