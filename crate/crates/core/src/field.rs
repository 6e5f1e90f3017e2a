//! The coupled uniform field `omega` on the edges of a box.
//!
//! Each `omega_e` is a pure function of `(seed, e)` computed by a keyed
//! SplitMix64 hash, so a field of radius `R` agrees with every smaller
//! field drawn from the same seed, and fields can be evaluated lazily
//! without materializing the whole box.

use crate::lattice::{edges_of_box, BoxSpec, EdgeId, Orientation};
use crate::weights::{DistributionSpec, P_C};
use std::io::{Read, Write};
use thiserror::Error;

/// Largest radius accepted by [`WeightField::sample`] (about 4·10^9 edges).
pub const MAX_RADIUS: u32 = 1 << 15;

pub const DUMP_MAGIC: &[u8; 5] = b"FPPW1";

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("radius {0} exceeds the memory guard {MAX_RADIUS}")]
    TooLarge(u32),
    #[error("field radius must be at least 1")]
    Empty,
    #[error("edge {edge} lies outside B({radius})")]
    OutOfBox { edge: EdgeId, radius: u32 },
    #[error("omega array has {got} entries, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("not a field dump (bad magic)")]
    BadMagic,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from a master seed and a list of stream
/// coordinates (scale, replicate, ...). Published mixing function:
/// `h_0 = splitmix64(master)`, `h_{i+1} = splitmix64(h_i ^ splitmix64(c_i))`.
pub fn mix_seed(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(master), |h, c| splitmix64(h ^ splitmix64(*c)))
}

/// `omega_e` for a given seed, uniform on the open interval (0, 1).
#[inline]
pub fn edge_uniform(seed: u64, e: EdgeId) -> f64 {
    let key = (e.base.x as u32 as u64) | ((e.base.y as u32 as u64) << 32);
    let o = match e.orientation {
        Orientation::Horizontal => 1u64,
        Orientation::Vertical => 2u64,
    };
    let h = splitmix64(splitmix64(seed ^ o.wrapping_mul(GOLDEN)) ^ key);
    let h = splitmix64(h);
    ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Read access to `omega` over the edges of a box.
pub trait Omega: Sync {
    fn radius(&self) -> u32;

    /// `omega_e` for an edge known to lie in the box.
    fn omega(&self, e: EdgeId) -> f64;

    fn bounds(&self) -> BoxSpec {
        BoxSpec::new(self.radius())
    }

    fn omega_checked(&self, e: EdgeId) -> Result<f64, FieldError> {
        if self.bounds().contains_edge(e) {
            Ok(self.omega(e))
        } else {
            Err(FieldError::OutOfBox { edge: e, radius: self.radius() })
        }
    }

    /// `e` is p-open when `omega_e <= p`.
    fn is_open(&self, e: EdgeId, p: f64) -> Result<bool, FieldError> {
        Ok(self.omega_checked(e)? <= p)
    }

    /// Coupled weight `t_e = F^{-1}(omega_e)`.
    fn weight(&self, e: EdgeId, d: &DistributionSpec) -> Result<f64, FieldError> {
        Ok(d.quantile_unchecked(self.omega_checked(e)?))
    }
}

/// A dense, immutable field indexed by canonical edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    bounds: BoxSpec,
    seed: u64,
    omega: Vec<f64>,
}

impl WeightField {
    pub fn sample(bounds: BoxSpec, seed: u64) -> Result<Self, FieldError> {
        check_radius(bounds.radius)?;
        let omega = edges_of_box(bounds)
            .into_iter()
            .map(|e| edge_uniform(seed, e))
            .collect();
        Ok(WeightField { bounds, seed, omega })
    }

    /// A synthetic field from explicit values in canonical edge order.
    pub fn from_omega(bounds: BoxSpec, seed: u64, omega: Vec<f64>) -> Result<Self, FieldError> {
        let expected = bounds.edge_count();
        if omega.len() != expected {
            return Err(FieldError::LengthMismatch { got: omega.len(), expected });
        }
        Ok(WeightField { bounds, seed, omega })
    }

    /// A synthetic field with `omega_e = f(e)`; the seed is recorded as 0.
    pub fn from_fn(bounds: BoxSpec, f: impl FnMut(EdgeId) -> f64) -> Self {
        let omega = edges_of_box(bounds).into_iter().map(f).collect();
        WeightField { bounds, seed: 0, omega }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn omega_values(&self) -> &[f64] {
        &self.omega
    }

    /// Value at a canonical edge index.
    pub fn omega_at(&self, idx: usize) -> f64 {
        self.omega[idx]
    }

    /// The field reflected through the origin, `omega'_e = omega_{-e}`.
    pub fn reflected(&self) -> WeightField {
        let r = self.bounds;
        WeightField::from_fn(r, |e| {
            let (a, b) = e.endpoints();
            let neg = EdgeId::between(a.offset(-2 * a.x, -2 * a.y), b.offset(-2 * b.x, -2 * b.y))
                .expect("reflection preserves adjacency");
            self.omega(neg)
        })
    }

    /// Writes the `FPPW1` dump: magic, radius (u32 LE), seed (u64 LE), then
    /// omega as f64 LE in canonical edge order.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&self.bounds.radius.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.omega {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self, FieldError> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(FieldError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let radius = u32::from_le_bytes(b4);
        check_radius(radius)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let bounds = BoxSpec::new(radius);
        let mut omega = Vec::with_capacity(bounds.edge_count());
        for _ in 0..bounds.edge_count() {
            r.read_exact(&mut b8)?;
            omega.push(f64::from_le_bytes(b8));
        }
        Ok(WeightField { bounds, seed, omega })
    }
}

impl Omega for WeightField {
    fn radius(&self) -> u32 {
        self.bounds.radius
    }

    #[inline]
    fn omega(&self, e: EdgeId) -> f64 {
        self.omega[self.bounds.edge_index(e).expect("edge inside field box")]
    }
}

/// The same field as [`WeightField::sample`], evaluated on demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LazyField {
    bounds: BoxSpec,
    seed: u64,
}

impl LazyField {
    pub fn new(bounds: BoxSpec, seed: u64) -> Result<Self, FieldError> {
        check_radius(bounds.radius)?;
        Ok(LazyField { bounds, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn materialize(&self) -> WeightField {
        WeightField::sample(self.bounds, self.seed).expect("radius already checked")
    }
}

impl Omega for LazyField {
    fn radius(&self) -> u32 {
        self.bounds.radius
    }

    #[inline]
    fn omega(&self, e: EdgeId) -> f64 {
        edge_uniform(self.seed, e)
    }
}

fn check_radius(radius: u32) -> Result<(), FieldError> {
    if radius == 0 {
        Err(FieldError::Empty)
    } else if radius > MAX_RADIUS {
        Err(FieldError::TooLarge(radius))
    } else {
        Ok(())
    }
}

/// `{e : omega_e <= p}` in canonical order.
pub fn open_edges(f: &WeightField, p: f64) -> Vec<EdgeId> {
    edges_of_box(f.bounds)
        .into_iter()
        .zip(&f.omega)
        .filter(|(_, w)| **w <= p)
        .map(|(e, _)| e)
        .collect()
}

/// Whether `e` carries zero weight under the critical coupling.
pub fn is_zero_weight(omega: f64) -> bool {
    omega <= P_C
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Vertex;

    #[test]
    fn deterministic_sampling() {
        let a = WeightField::sample(BoxSpec::new(6), 99).unwrap();
        let b = WeightField::sample(BoxSpec::new(6), 99).unwrap();
        assert_eq!(a.omega_values(), b.omega_values());
        let c = WeightField::sample(BoxSpec::new(6), 100).unwrap();
        assert_ne!(a.omega_values(), c.omega_values());
    }

    #[test]
    fn radius_ten_mean_in_band() {
        let f = WeightField::sample(BoxSpec::new(10), 7).unwrap();
        assert_eq!(f.omega_values().len(), 840);
        let mean = f.omega_values().iter().sum::<f64>() / 840.0;
        // 3 sigma for N = 840 is 0.030
        assert!((0.47..=0.53).contains(&mean), "mean {mean}");
    }

    #[test]
    fn restriction_consistency() {
        let small = WeightField::sample(BoxSpec::new(5), 3).unwrap();
        let big = WeightField::sample(BoxSpec::new(9), 3).unwrap();
        for e in edges_of_box(BoxSpec::new(5)) {
            assert_eq!(small.omega(e), big.omega(e));
        }
        let lazy = LazyField::new(BoxSpec::new(9), 3).unwrap();
        assert_eq!(lazy.materialize(), big);
    }

    #[test]
    fn memory_guard_and_empty() {
        assert!(matches!(WeightField::sample(BoxSpec::new(MAX_RADIUS + 1), 0), Err(FieldError::TooLarge(_))));
        assert!(matches!(WeightField::sample(BoxSpec::new(0), 0), Err(FieldError::Empty)));
    }

    #[test]
    fn open_predicate() {
        let f = WeightField::sample(BoxSpec::new(4), 11).unwrap();
        for e in edges_of_box(BoxSpec::new(4)) {
            assert!(f.is_open(e, 1.0).unwrap());
            assert!(!f.is_open(e, 0.0).unwrap());
        }
        let stray = EdgeId::horizontal(Vertex::new(4, 0));
        assert!(matches!(f.is_open(stray, 0.5), Err(FieldError::OutOfBox { .. })));
        assert!(f.weight(stray, &DistributionSpec::bernoulli()).is_err());
    }

    #[test]
    fn coupling_monotone_and_zero_set() {
        let f = WeightField::sample(BoxSpec::new(8), 5).unwrap();
        let ps = [0.1, 0.3, 0.5, 0.55, 0.7, 0.9];
        for w in ps.windows(2) {
            let lo: std::collections::HashSet<_> = open_edges(&f, w[0]).into_iter().collect();
            let hi: std::collections::HashSet<_> = open_edges(&f, w[1]).into_iter().collect();
            assert!(lo.is_subset(&hi));
        }
        let dists = [
            DistributionSpec::bernoulli(),
            DistributionSpec::power_law(1.0).unwrap(),
            DistributionSpec::stretched_exp(1.5).unwrap(),
        ];
        for e in edges_of_box(BoxSpec::new(8)) {
            for d in &dists {
                let zero = f.weight(e, d).unwrap() == 0.0;
                assert_eq!(zero, f.is_open(e, 0.5).unwrap());
            }
        }
    }

    #[test]
    fn weights_follow_quantile() {
        let f = WeightField::sample(BoxSpec::new(5), 1).unwrap();
        let bern = DistributionSpec::bernoulli();
        let fa = DistributionSpec::power_law(1.0).unwrap();
        for e in edges_of_box(BoxSpec::new(5)) {
            let w = f.omega(e);
            assert_eq!(f.weight(e, &bern).unwrap(), if w > 0.5 { 1.0 } else { 0.0 });
            assert!((f.weight(e, &fa).unwrap() - (w - 0.5).max(0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn ks_distance_to_uniform() {
        let f = WeightField::sample(BoxSpec::new(32), 2024).unwrap();
        let mut v = f.omega_values().to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let d = v
            .iter()
            .enumerate()
            .map(|(i, x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
            .fold(0.0, f64::max);
        assert!(d < 1.63 / n.sqrt(), "KS {d}");
    }

    #[test]
    fn dump_round_trip() {
        let f = WeightField::sample(BoxSpec::new(3), 42).unwrap();
        let mut buf = Vec::new();
        f.write_dump(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"FPPW1");
        assert_eq!(buf.len(), 5 + 4 + 8 + 8 * f.omega_values().len());
        assert_eq!(WeightField::read_dump(&buf[..]).unwrap(), f);
        buf[0] = b'X';
        assert!(matches!(WeightField::read_dump(&buf[..]), Err(FieldError::BadMagic)));
    }

    #[test]
    fn reflection_is_an_involution() {
        let f = WeightField::sample(BoxSpec::new(4), 8).unwrap();
        let g = f.reflected();
        let h_edge = EdgeId::horizontal(Vertex::new(1, 2));
        assert_eq!(g.omega(h_edge), f.omega(EdgeId::horizontal(Vertex::new(-2, -2))));
        assert_eq!(g.reflected().omega_values(), f.omega_values());
    }

    #[test]
    fn mixed_seeds_differ() {
        let a = mix_seed(1, &[2, 3]);
        assert_ne!(a, mix_seed(1, &[3, 2]));
        assert_ne!(a, mix_seed(2, &[2, 3]));
        assert_eq!(a, mix_seed(1, &[2, 3]));
    }
}
