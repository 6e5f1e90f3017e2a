//! Invasion percolation from the origin.
//!
//! Starting from `G_0 = ({0}, {})`, each step adds the edge of smallest
//! `omega` on the edge boundary (edges not yet in the graph with at least
//! one endpoint in it). Boundary edges sit in a binary heap keyed by
//! `(omega, canonical index)`; every edge is pushed once, when its first
//! endpoint joins, and is popped exactly once.

use crate::field::{FieldError, Omega};
use crate::fourarm::{count_four_arm, FourArmError};
use crate::fpp::{annulus_decomposition, passage_time_in, AnnulusTimes, EdgeMask, FppError, PassageResult};
use crate::lattice::{BoxSpec, EdgeId, Vertex};
use crate::weights::{DistributionSpec, P_C};
use serde::{Deserialize, Serialize};
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InvasionError {
    #[error("stop radius {stop} needs a field of radius at least {needed}, got {radius}")]
    StopOutsideGuard { stop: u32, needed: u32, radius: u32 },
    #[error("invasion reached {vertex}, within 2 of the edge of B({radius})")]
    GuardViolation { vertex: Vertex, radius: u32 },
    #[error("invasion has not left B({radius})")]
    InsufficientGrowth { radius: u64 },
    #[error("invaded edges in B({radius}) do not join the origin to its boundary")]
    NotReached { radius: u32 },
    #[error("scales must satisfy {0}")]
    BadScales(String),
    #[error(transparent)]
    Fpp(#[from] FppError),
    #[error(transparent)]
    FourArm(#[from] FourArmError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("writing trace: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopCondition {
    /// Stop right after the first invaded vertex with `|v|_inf >= r`.
    ReachedRadius(u32),
    /// Stop after this many edges.
    StepCount(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvasionStep {
    pub edge: EdgeId,
    pub omega: f64,
}

/// A finite stage `G_N` of the invasion.
#[derive(Clone, Debug, PartialEq)]
pub struct InvasionCluster {
    pub steps: Vec<InvasionStep>,
    pub stop: StopCondition,
    /// Vertices in order of invasion, starting with the origin.
    vertex_order: Vec<Vertex>,
    bounds: BoxSpec,
    in_cluster: Vec<bool>,
}

impl InvasionCluster {
    pub fn bounds(&self) -> BoxSpec {
        self.bounds
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.bounds.vertex_index(v).is_some_and(|i| self.in_cluster[i])
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertex_order
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.steps.iter().map(|s| s.edge)
    }

    /// Largest `|v|_inf` over invaded vertices.
    pub fn reach(&self) -> u32 {
        self.vertex_order.iter().map(|v| v.norm_inf()).max().unwrap_or(0)
    }

    /// Vertices of `G_i`, the graph after `i` steps.
    pub fn vertices_after(&self, i: usize) -> Vec<Vertex> {
        let mut out = vec![Vertex::ORIGIN];
        let mut seen = std::collections::HashSet::from([Vertex::ORIGIN]);
        for s in &self.steps[..i] {
            let (a, b) = s.edge.endpoints();
            for v in [a, b] {
                if seen.insert(v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Writes `step,edge_base_x,edge_base_y,orientation,omega` rows.
    pub fn write_trace<W: Write>(&self, w: W) -> Result<(), InvasionError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "edge_base_x", "edge_base_y", "orientation", "omega"])
            .map_err(csv_io)?;
        for (i, s) in self.steps.iter().enumerate() {
            out.write_record([
                (i + 1).to_string(),
                s.edge.base.x.to_string(),
                s.edge.base.y.to_string(),
                s.edge.orientation.short_name().to_string(),
                format!("{:?}", s.omega),
            ])
            .map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

#[derive(Clone, Copy, PartialEq)]
struct Key {
    omega: f64,
    index: usize,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.omega.total_cmp(&other.omega).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Grows the invasion cluster until `stop`. Vertices must stay at least two
/// units inside the field's box.
pub fn invade<F: Omega + ?Sized>(f: &F, stop: StopCondition) -> Result<InvasionCluster, InvasionError> {
    let bounds = f.bounds();
    let limit = bounds.radius.saturating_sub(2);
    if let StopCondition::ReachedRadius(r) = stop {
        if r > limit {
            return Err(InvasionError::StopOutsideGuard { stop: r, needed: r + 2, radius: bounds.radius });
        }
    }
    let mut in_cluster = vec![false; bounds.vertex_count()];
    let mut pushed = vec![false; bounds.edge_count()];
    let mut heap: BinaryHeap<Reverse<Key>> = BinaryHeap::new();
    let mut vertex_order = Vec::new();
    let mut steps = Vec::new();

    let mut join = |v: Vertex, in_cluster: &mut Vec<bool>, heap: &mut BinaryHeap<Reverse<Key>>| -> Result<(), InvasionError> {
        if v.norm_inf() > limit {
            return Err(InvasionError::GuardViolation { vertex: v, radius: bounds.radius });
        }
        in_cluster[bounds.vertex_index(v).expect("inside guard")] = true;
        vertex_order.push(v);
        for e in v.incident_edges() {
            let idx = bounds.edge_index(e).expect("inside guard");
            if !pushed[idx] {
                pushed[idx] = true;
                heap.push(Reverse(Key { omega: f.omega(e), index: idx }));
            }
        }
        Ok(())
    };

    join(Vertex::ORIGIN, &mut in_cluster, &mut heap)?;
    loop {
        match stop {
            StopCondition::StepCount(n) if steps.len() >= n => break,
            StopCondition::ReachedRadius(r) if r == 0 => break,
            _ => {}
        }
        let Reverse(Key { omega, index }) = heap.pop().expect("boundary of a finite graph is nonempty");
        let edge = bounds.edge_at(index);
        steps.push(InvasionStep { edge, omega });
        let (a, b) = edge.endpoints();
        let fresh = [a, b]
            .into_iter()
            .find(|v| !in_cluster[bounds.vertex_index(*v).expect("inside box")]);
        if let Some(v) = fresh {
            join(v, &mut in_cluster, &mut heap)?;
            if let StopCondition::ReachedRadius(r) = stop {
                if v.norm_inf() >= r {
                    break;
                }
            }
        }
    }
    Ok(InvasionCluster { steps, stop, vertex_order, bounds, in_cluster })
}

/// Default outer margin for scale `n`: `2^n`.
pub fn default_margin(n: u32) -> u32 {
    1 << n
}

/// Stop radius and field radius used to study scale `n`: the invasion runs
/// until it leaves `B(2^{n+1} + margin)`, and the field keeps two units of
/// guard beyond that.
pub fn invasion_window(n: u32, margin: u32) -> (u32, u32) {
    let stop = (1u32 << (n + 1)) + margin + 1;
    (stop, stop + 2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvasionStats {
    /// `p_hat_n = max{omega_e : e invaded, e not in E(B(2^n))}`.
    pub p_hat: BTreeMap<u32, f64>,
    /// `t_hat_n = F^{-1}(p_hat_n)`.
    pub t_hat: BTreeMap<u32, f64>,
}

/// `p_hat_n` and `t_hat_n` for each scale in `n_list`.
pub fn invasion_stats(c: &InvasionCluster, d: &DistributionSpec, n_list: &[u32]) -> Result<InvasionStats, InvasionError> {
    let mut p_hat = BTreeMap::new();
    let mut t_hat = BTreeMap::new();
    for &n in n_list {
        let r = 1u64 << n;
        let max = c
            .steps
            .iter()
            .filter(|s| s.edge.norm_inf() as u64 > r)
            .map(|s| s.omega)
            .fold(None, |m: Option<f64>, w| Some(m.map_or(w, |m| m.max(w))));
        let Some(p) = max else {
            return Err(InvasionError::InsufficientGrowth { radius: r });
        };
        p_hat.insert(n, p);
        t_hat.insert(n, d.quantile_unchecked(p));
    }
    Ok(InvasionStats { p_hat, t_hat })
}

/// Vertices p_c-open-connected (inside the field's box) to some vertex of
/// `seeds`, including the seeds.
fn pc_open_closure<F: Omega + ?Sized>(f: &F, seeds: &[Vertex]) -> Vec<bool> {
    let bounds = f.bounds();
    let mut seen = vec![false; bounds.vertex_count()];
    let mut stack = Vec::new();
    for v in seeds {
        let i = bounds.vertex_index(*v).expect("seed inside box");
        if !seen[i] {
            seen[i] = true;
            stack.push(*v);
        }
    }
    while let Some(v) = stack.pop() {
        for (w, e) in v.neighbors().into_iter().zip(v.incident_edges()) {
            let Some(wi) = bounds.vertex_index(w) else { continue };
            if !seen[wi] && f.omega(e) <= P_C {
                seen[wi] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Snapshot used for the absorption check: the vertices of the cluster just
/// before its last p_c-closed step. At that moment no p_c-open edge touched
/// the cluster, so the snapshot is a union of whole p_c-open clusters.
/// `None` if the invasion never took a p_c-closed step.
pub fn absorption_window(c: &InvasionCluster) -> Option<Vec<Vertex>> {
    let last = c.steps.iter().rposition(|s| s.omega > P_C)?;
    Some(c.vertices_after(last))
}

/// Vertices outside the absorption window that are p_c-open-connected to
/// it. Empty when the absorption property holds.
pub fn absorption_violations<F: Omega + ?Sized>(f: &F, c: &InvasionCluster) -> Vec<Vertex> {
    let Some(window) = absorption_window(c) else {
        return Vec::new();
    };
    let bounds = f.bounds();
    let mut inside = vec![false; bounds.vertex_count()];
    for v in &window {
        inside[bounds.vertex_index(*v).expect("inside box")] = true;
    }
    pc_open_closure(f, &window)
        .iter()
        .enumerate()
        .filter(|(i, r)| **r && !inside[*i])
        .map(|(i, _)| bounds.vertex_at(i))
        .collect()
}

/// Invaded edges together with the p_c-open clusters (inside the field's
/// box) of invaded vertices. A finite invasion stops partway through its
/// last p_c-open cluster; the full invasion cluster absorbs all of it.
pub fn absorbed_edges<F: Omega + ?Sized>(f: &F, c: &InvasionCluster) -> EdgeMask {
    let bounds = f.bounds();
    let mut mask = EdgeMask::from_edges(bounds, c.edges());
    let reached = pc_open_closure(f, c.vertices());
    for (i, r) in reached.iter().enumerate() {
        if !*r {
            continue;
        }
        let v = bounds.vertex_at(i);
        for (w, e) in v.neighbors().into_iter().zip(v.incident_edges()) {
            if bounds.contains(w) && f.omega(e) <= P_C {
                mask.insert(e);
            }
        }
    }
    mask
}

/// `gamma_n`: a minimal-time path from the origin to `∂B(2^{n+1})` using only
/// edges of the invasion cluster (with its p_c-open clusters absorbed) that
/// lie in `B(2^{n+1})`.
pub fn constrained_geodesic<F: Omega + ?Sized>(
    f: &F,
    d: &DistributionSpec,
    c: &InvasionCluster,
    n: u32,
) -> Result<(PassageResult, AnnulusTimes), InvasionError> {
    let r = 1u32 << (n + 1);
    if r > f.radius() {
        return Err(FppError::BoxTooSmall { needed: r, radius: f.radius() }.into());
    }
    let region = BoxSpec::new(r);
    let mask = absorbed_edges(f, c);
    match passage_time_in(f, d, region, &[Vertex::ORIGIN], &region.boundary(), Some(&mask)) {
        Ok(res) => {
            let split = annulus_decomposition(&res);
            Ok((res, split))
        }
        Err(FppError::NoPath) => Err(InvasionError::NotReached { radius: r }),
        Err(e) => Err(e.into()),
    }
}

/// Both sides of `T_k(gamma_n) 1{p_hat_k <= p} <= N(2^{k-1}, 2^k, p) F^{-1}(p)`
/// on one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusBoundAudit {
    pub k: u32,
    pub n: u32,
    pub p: f64,
    pub p_hat_k: f64,
    pub t_k: f64,
    /// Edges of `gamma_n` in the `k`-th annulus with `omega_e > p_c`.
    pub closed_on_path: usize,
    pub lhs: f64,
    pub four_arm_count: usize,
    pub quantile_p: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn annulus_bound_check<F: Omega + ?Sized>(
    f: &F,
    d: &DistributionSpec,
    c: &InvasionCluster,
    k: u32,
    n: u32,
    p: f64,
) -> Result<AnnulusBoundAudit, InvasionError> {
    if !(k >= 1 && k < n) {
        return Err(InvasionError::BadScales(format!("1 <= k <= n - 1, got k = {k}, n = {n}")));
    }
    if !(p > P_C && p <= 1.0) {
        return Err(InvasionError::BadScales(format!("p in (1/2, 1], got {p}")));
    }
    let stats = invasion_stats(c, d, &[k])?;
    let p_hat_k = stats.p_hat[&k];
    let (geo, split) = constrained_geodesic(f, d, c, n)?;
    let t_k = split.get(k as i32);
    let closed_on_path = geo
        .path
        .iter()
        .filter(|e| e.annulus_index() == k as i32 && f.omega(**e) > P_C)
        .count();
    let lhs = if p_hat_k <= p { t_k } else { 0.0 };
    let count = count_four_arm(f, 1 << (k - 1), 1 << k, p)?;
    let quantile_p = d.quantile_unchecked(p);
    let rhs = count.count as f64 * quantile_p;
    Ok(AnnulusBoundAudit {
        k,
        n,
        p,
        p_hat_k,
        t_k,
        closed_on_path,
        lhs,
        four_arm_count: count.count,
        quantile_p,
        rhs,
        holds: lhs <= rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::WeightField;

    /// Recomputes the boundary of `G_i` from scratch and takes its minimum.
    fn replay_min(f: &WeightField, c: &InvasionCluster, i: usize) -> (f64, EdgeId) {
        let verts = c.vertices_after(i);
        let invaded: std::collections::HashSet<EdgeId> = c.steps[..i].iter().map(|s| s.edge).collect();
        let mut best = (f64::INFINITY, EdgeId::horizontal(Vertex::ORIGIN));
        for v in &verts {
            for e in v.incident_edges() {
                if invaded.contains(&e) {
                    continue;
                }
                let w = f.omega(e);
                if w < best.0 || (w == best.0 && e < best.1) {
                    best = (w, e);
                }
            }
        }
        best
    }

    #[test]
    fn every_step_is_the_boundary_minimum() {
        for seed in 0..10 {
            let f = WeightField::sample(BoxSpec::new(12), seed).unwrap();
            let c = invade(&f, StopCondition::ReachedRadius(10)).unwrap();
            for (i, s) in c.steps.iter().enumerate() {
                let (w, e) = replay_min(&f, &c, i);
                assert_eq!((s.omega, s.edge), (w, e), "seed {seed} step {i}");
            }
            assert_eq!(c.reach(), 10);
        }
    }

    #[test]
    fn ties_break_by_canonical_order() {
        let f = WeightField::from_fn(BoxSpec::new(8), |_| 0.3);
        // the lowest row comes first, so the cluster grows straight down
        let c = invade(&f, StopCondition::StepCount(6)).unwrap();
        assert_eq!(c.reach(), 6);
        for (i, s) in c.steps.iter().enumerate() {
            assert_eq!(replay_min(&f, &c, i).1, s.edge);
        }
    }

    #[test]
    fn pocket_is_filled_before_its_wall() {
        // omega 0.4 inside B(3), a wall of 0.9 on edges leaving B(3)
        let f = WeightField::from_fn(BoxSpec::new(8), |e| if e.norm_inf() <= 3 { 0.4 } else { 0.9 });
        let c = invade(&f, StopCondition::ReachedRadius(4)).unwrap();
        let first_wall = c.steps.iter().position(|s| s.omega == 0.9).unwrap();
        assert_eq!(first_wall, BoxSpec::new(3).edge_count());
        assert_eq!(c.vertices_after(first_wall).len(), 49);
    }

    #[test]
    fn guard_checks() {
        let f = WeightField::sample(BoxSpec::new(6), 0).unwrap();
        assert!(matches!(invade(&f, StopCondition::ReachedRadius(5)), Err(InvasionError::StopOutsideGuard { .. })));
        assert!(matches!(invade(&f, StopCondition::StepCount(10_000)), Err(InvasionError::GuardViolation { .. })));
        let c = invade(&f, StopCondition::StepCount(5)).unwrap();
        assert_eq!(c.steps.len(), 5);
    }

    #[test]
    fn p_hat_matches_filtered_max() {
        let d = DistributionSpec::bernoulli();
        let (stop, radius) = invasion_window(3, default_margin(3));
        for seed in 0..20 {
            let f = WeightField::sample(BoxSpec::new(radius), seed).unwrap();
            let c = invade(&f, StopCondition::ReachedRadius(stop)).unwrap();
            let st = invasion_stats(&c, &d, &[0, 1, 2, 3]).unwrap();
            for n in 0..=3u32 {
                let expect = c
                    .steps
                    .iter()
                    .filter(|s| {
                        let (a, b) = s.edge.endpoints();
                        a.norm_inf().max(b.norm_inf()) > 1 << n
                    })
                    .map(|s| s.omega)
                    .fold(f64::MIN, f64::max);
                assert_eq!(st.p_hat[&n], expect);
                assert_eq!(st.t_hat[&n], if expect > 0.5 { 1.0 } else { 0.0 });
            }
            assert!(matches!(
                invasion_stats(&c, &d, &[6]),
                Err(InvasionError::InsufficientGrowth { radius: 64 })
            ));
        }
    }

    #[test]
    fn absorption_holds_in_window() {
        let mut windows = 0;
        for seed in 0..20 {
            let f = WeightField::sample(BoxSpec::new(20), seed).unwrap();
            let c = invade(&f, StopCondition::ReachedRadius(18)).unwrap();
            windows += absorption_window(&c).is_some() as usize;
            assert!(absorption_violations(&f, &c).is_empty());
        }
        assert!(windows > 0);
    }

    #[test]
    fn open_pocket_gives_zero_geodesic() {
        let f = WeightField::from_fn(BoxSpec::new(12), |e| if e.norm_inf() <= 9 { 0.2 } else { 0.7 });
        let c = invade(&f, StopCondition::ReachedRadius(10)).unwrap();
        let (g, split) = constrained_geodesic(&f, &DistributionSpec::bernoulli(), &c, 2).unwrap();
        assert_eq!(g.time, 0.0);
        assert_eq!(split.total(), 0.0);
    }

    #[test]
    fn constrained_geodesic_dominates_box_time() {
        let d = DistributionSpec::power_law(1.0).unwrap();
        let (stop, radius) = invasion_window(3, default_margin(3));
        for seed in 0..20 {
            let f = WeightField::sample(BoxSpec::new(radius), seed).unwrap();
            let c = invade(&f, StopCondition::ReachedRadius(stop)).unwrap();
            let (g, split) = constrained_geodesic(&f, &d, &c, 3).unwrap();
            let free = crate::fpp::box_time(&f, &d, 16).unwrap();
            assert!(g.time >= free.time);
            assert!((split.total() - g.time).abs() <= 1e-9 * g.time.max(1.0));
            let mask = absorbed_edges(&f, &c);
            assert!(g.path.iter().all(|e| mask.contains(*e) && e.norm_inf() <= 16));
        }
    }

    #[test]
    fn trace_has_one_row_per_step() {
        let f = WeightField::sample(BoxSpec::new(6), 3).unwrap();
        let c = invade(&f, StopCondition::StepCount(7)).unwrap();
        let mut buf = Vec::new();
        c.write_trace(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,edge_base_x,edge_base_y,orientation,omega");
        assert_eq!(lines.len(), 8);
        assert!(lines[1].starts_with("1,"));
    }
}
