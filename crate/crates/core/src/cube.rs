//! Dyadic cubes of the normalized root `[0,1)^n`, extended in the last
//! (time) coordinate to `[0,3)` so that forward translates of every dyadic
//! subcube stay addressable.
//!
//! A cube at level `k` is the half-open box
//! `prod_i [s_i 2^-k, (s_i+1) 2^-k) x [t 2^-k, (t+1) 2^-k)`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 6;

/// Deepest level a cube index can address.
pub const MAX_LEVEL: u32 = 28;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    level: u32,
    dim: u8,
    spatial: [u32; MAX_DIM - 1],
    time: u32,
}

/// How two cubes sit relative to each other as point sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Disjoint,
    /// The first cube strictly contains the second.
    Contains,
    /// The second cube strictly contains the first.
    ContainedIn,
    Equal,
    PartialOverlap,
}

impl DyadicCube {
    /// The unit cube `[0,1)^n` at level 0.
    pub fn root(dim: usize) -> Result<Self> {
        Self::new(dim, 0, &vec![0; dim.saturating_sub(1)], 0)
    }

    pub fn new(dim: usize, level: u32, spatial: &[u32], time: u32) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidParams(format!(
                "dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        if level > MAX_LEVEL {
            return Err(Error::InvalidParams(format!(
                "level {level} exceeds {MAX_LEVEL}"
            )));
        }
        if spatial.len() != dim - 1 {
            return Err(Error::InvalidParams(format!(
                "expected {} spatial indices, got {}",
                dim - 1,
                spatial.len()
            )));
        }
        let side = 1u32 << level;
        if let Some(s) = spatial.iter().find(|&&s| s >= side) {
            return Err(Error::OutOfDomain(format!(
                "spatial index {s} >= 2^{level}"
            )));
        }
        if time >= 3 * side {
            return Err(Error::OutOfDomain(format!(
                "time index {time} >= 3*2^{level}"
            )));
        }
        let mut sp = [0u32; MAX_DIM - 1];
        sp[..dim - 1].copy_from_slice(spatial);
        Ok(DyadicCube {
            level,
            dim: dim as u8,
            spatial: sp,
            time,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn level(&self) -> u32 {
        self.level
    }

    #[inline]
    pub fn spatial(&self) -> &[u32] {
        &self.spatial[..self.dim() - 1]
    }

    #[inline]
    pub fn time(&self) -> u32 {
        self.time
    }

    /// Whether the cube lies in the root `[0,1)^n` rather than in its future.
    #[inline]
    pub fn inside_root(&self) -> bool {
        self.time < (1 << self.level)
    }

    /// `log2(1/|Q|)`, i.e. the volume is `2^-(level * n)`.
    #[inline]
    pub fn volume_log2(&self) -> u32 {
        self.level * self.dim as u32
    }

    pub fn volume(&self) -> BigRational {
        BigRational::new(BigInt::from(1), BigInt::from(1) << self.volume_log2())
    }

    /// Translate forward in time by one side length.
    pub fn forward(&self) -> Result<Self> {
        if self.time + 1 >= 3 << self.level {
            return Err(Error::OutOfDomain(format!(
                "forward translate of {self} exits the time-extended domain"
            )));
        }
        Ok(DyadicCube {
            time: self.time + 1,
            ..*self
        })
    }

    /// `forward(forward(self))`.
    pub fn forward2(&self) -> Result<Self> {
        self.forward()?.forward()
    }

    pub(crate) fn shifted(&self, steps: u32) -> Self {
        debug_assert!(self.time + steps < 3 << self.level);
        DyadicCube {
            time: self.time + steps,
            ..*self
        }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.level == 0 {
            return None;
        }
        let mut sp = self.spatial;
        for s in sp.iter_mut().take(self.dim() - 1) {
            *s >>= 1;
        }
        Some(DyadicCube {
            level: self.level - 1,
            dim: self.dim,
            spatial: sp,
            time: self.time >> 1,
        })
    }

    /// The `2^n` children, ordered with the time bit varying fastest.
    pub(crate) fn children_iter(&self) -> impl Iterator<Item = DyadicCube> + '_ {
        let n = self.dim();
        (0..1u32 << n).map(move |c| {
            let mut sp = self.spatial;
            for (i, s) in sp.iter_mut().take(n - 1).enumerate() {
                *s = (*s << 1) | ((c >> (n - 1 - i)) & 1);
            }
            DyadicCube {
                level: self.level + 1,
                dim: self.dim,
                spatial: sp,
                time: (self.time << 1) | (c & 1),
            }
        })
    }

    /// Bisect every side. Fails when the cube is already a leaf of a grid
    /// with resolution `grid_level`.
    pub fn children(&self, grid_level: u32) -> Result<Vec<DyadicCube>> {
        if self.level >= grid_level {
            return Err(Error::RefinementBelowGrid {
                level: self.level,
                grid_level,
            });
        }
        Ok(self.children_iter().collect())
    }

    /// Half-open index range covered along `axis` (time is the last axis)
    /// at the finer level `at_level`.
    #[inline]
    pub fn range_at(&self, axis: usize, at_level: u32) -> (u64, u64) {
        debug_assert!(at_level >= self.level);
        let shift = at_level - self.level;
        let idx = if axis + 1 == self.dim() {
            self.time
        } else {
            self.spatial[axis]
        } as u64;
        (idx << shift, (idx + 1) << shift)
    }

    pub fn relation(&self, other: &DyadicCube) -> Relation {
        assert_eq!(self.dim, other.dim, "cubes live in different dimensions");
        let fine = self.level.max(other.level);
        let (mut a_in_b, mut b_in_a) = (true, true);
        for axis in 0..self.dim() {
            let (a0, a1) = self.range_at(axis, fine);
            let (b0, b1) = other.range_at(axis, fine);
            if a1 <= b0 || b1 <= a0 {
                return Relation::Disjoint;
            }
            a_in_b &= b0 <= a0 && a1 <= b1;
            b_in_a &= a0 <= b0 && b1 <= a1;
        }
        match (a_in_b, b_in_a) {
            (true, true) => Relation::Equal,
            (false, true) => Relation::Contains,
            (true, false) => Relation::ContainedIn,
            (false, false) => Relation::PartialOverlap,
        }
    }

    /// Non-strict containment `other ⊆ self`.
    pub fn contains(&self, other: &DyadicCube) -> bool {
        matches!(
            self.relation(other),
            Relation::Contains | Relation::Equal
        )
    }

    /// Interval `[lo, hi)` of the cube along `axis` as exact rationals.
    pub fn interval(&self, axis: usize) -> (BigRational, BigRational) {
        let (lo, hi) = self.range_at(axis, self.level);
        let den = BigInt::from(1u64) << self.level;
        (
            BigRational::new(BigInt::from(lo), den.clone()),
            BigRational::new(BigInt::from(hi), den),
        )
    }

    /// Flattened `(level, spatial..., time)` encoding.
    pub fn to_tuple(&self) -> Vec<u32> {
        let mut v = Vec::with_capacity(self.dim() + 1);
        v.push(self.level);
        v.extend_from_slice(self.spatial());
        v.push(self.time);
        v
    }

    pub fn from_tuple(t: &[u32]) -> Result<Self> {
        if t.len() < 2 {
            return Err(Error::format("cube", "expected (level, spatial..., time)"));
        }
        Self::new(t.len() - 1, t[0], &t[1..t.len() - 1], t[t.len() - 1])
    }
}

impl fmt::Debug for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q(k={}", self.level)?;
        for s in self.spatial() {
            write!(f, ", {s}")?;
        }
        write!(f, "; t={})", self.time)
    }
}

impl Serialize for DyadicCube {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_tuple().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DyadicCube {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let t = Vec::<u32>::deserialize(d)?;
        DyadicCube::from_tuple(&t).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c1(level: u32, time: u32) -> DyadicCube {
        DyadicCube::new(1, level, &[], time).unwrap()
    }

    #[test]
    fn forward_of_root() {
        let r = DyadicCube::root(3).unwrap();
        let f = r.forward().unwrap();
        assert_eq!(f.level(), 0);
        assert_eq!(f.time(), 1);
        assert_eq!(f.spatial(), &[0, 0]);
        assert_eq!(r.forward2().unwrap().time(), 2);
        assert!(r.forward2().unwrap().forward().is_err());
    }

    #[test]
    fn forward_1d_quarter() {
        let q = c1(2, 2);
        assert_eq!(q.forward().unwrap(), c1(2, 3));
        assert_eq!(q.volume(), q.forward().unwrap().volume());
    }

    #[test]
    fn forward_shares_a_face() {
        let q = DyadicCube::new(2, 1, &[1], 0).unwrap();
        let f = q.forward().unwrap();
        assert_eq!(q.relation(&f), Relation::Disjoint);
        let (_, q_hi) = q.interval(1);
        let (f_lo, _) = f.interval(1);
        assert_eq!(q_hi, f_lo);
        assert_eq!(q.interval(0), f.interval(0));
    }

    #[test]
    fn children_tile_parent() {
        let root = DyadicCube::root(2).unwrap();
        let ch = root.children(3).unwrap();
        assert_eq!(ch.len(), 4);
        for (i, a) in ch.iter().enumerate() {
            assert_eq!(a.parent().unwrap(), root);
            assert_eq!(root.relation(a), Relation::Contains);
            for b in &ch[i + 1..] {
                assert_eq!(a.relation(b), Relation::Disjoint);
            }
        }
        let total: BigRational = ch.iter().map(|c| c.volume()).sum();
        assert_eq!(total, root.volume());
        let halves = DyadicCube::root(1).unwrap().children(1).unwrap();
        assert_eq!(halves, vec![c1(1, 0), c1(1, 1)]);
    }

    #[test]
    fn children_of_leaf_fail() {
        let leaf = c1(2, 1);
        assert!(matches!(
            leaf.children(2),
            Err(Error::RefinementBelowGrid { level: 2, grid_level: 2 })
        ));
    }

    #[test]
    fn relation_examples() {
        assert_eq!(c1(1, 0).relation(&c1(1, 1)), Relation::Disjoint);
        assert_eq!(c1(0, 0).relation(&c1(2, 2)), Relation::Contains);
        // [3/4,1) against [1/2,1)
        assert_eq!(c1(2, 3).relation(&c1(1, 1)), Relation::ContainedIn);
        assert_eq!(c1(2, 3).relation(&c1(2, 3)), Relation::Equal);
    }

    #[test]
    fn out_of_domain_indices() {
        assert!(DyadicCube::new(1, 1, &[], 6).is_err());
        assert!(DyadicCube::new(2, 1, &[2], 0).is_err());
        assert!(DyadicCube::new(0, 0, &[], 0).is_err());
    }

    #[test]
    fn tuple_round_trip() {
        let q = DyadicCube::new(3, 2, &[1, 3], 7).unwrap();
        let js = serde_json::to_string(&q).unwrap();
        assert_eq!(js, "[2,1,3,7]");
        let back: DyadicCube = serde_json::from_str(&js).unwrap();
        assert_eq!(back, q);
    }
}
