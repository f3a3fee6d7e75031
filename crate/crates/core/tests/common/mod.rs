//! Independent exact reference computations for tests: every quantity is
//! recomputed from raw cell values by explicit coordinate loops.

#![allow(dead_code)]

use jnplus::{DyadicCube, GridFunction};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub struct Naive {
    pub n: usize,
    pub level: u32,
    pub vals: Vec<BigRational>,
}

impl Naive {
    pub fn new(g: &GridFunction<i128>) -> Self {
        let d = BigInt::from(g.denom());
        Naive {
            n: g.dim(),
            level: g.level(),
            vals: g
                .cells()
                .iter()
                .map(|&v| BigRational::new(BigInt::from(v), d.clone()))
                .collect(),
        }
    }

    fn side(&self) -> u64 {
        1 << self.level
    }

    pub fn index(&self, coords: &[u64]) -> usize {
        let side = self.side();
        let mut idx = 0u64;
        for &c in &coords[..self.n - 1] {
            idx = idx * side + c;
        }
        (idx * 3 * side + coords[self.n - 1]) as usize
    }

    /// Cells covered by the cube at level `k` with integer position `pos`
    /// (spatial..., time), time counted in cubes of that level.
    pub fn cells_of(&self, k: u32, pos: &[u64]) -> Vec<usize> {
        let s = 1u64 << (self.level - k);
        let mut out = Vec::new();
        let mut c = vec![0u64; self.n];
        loop {
            let coords: Vec<u64> = (0..self.n).map(|a| pos[a] * s + c[a]).collect();
            out.push(self.index(&coords));
            let mut a = self.n;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                c[a] += 1;
                if c[a] < s {
                    break;
                }
                c[a] = 0;
            }
        }
    }

    pub fn avg(&self, k: u32, pos: &[u64]) -> BigRational {
        let cells = self.cells_of(k, pos);
        let total: BigRational = cells.iter().map(|&i| self.vals[i].clone()).sum();
        total / BigRational::from_integer(BigInt::from(cells.len()))
    }

    pub fn pos_of(c: &DyadicCube) -> Vec<u64> {
        let mut p: Vec<u64> = c.spatial().iter().map(|&s| s as u64).collect();
        p.push(c.time() as u64);
        p
    }

    pub fn avg_cube(&self, c: &DyadicCube) -> BigRational {
        self.avg(c.level(), &Self::pos_of(c))
    }

    /// All dyadic subcubes of the unit root, coarse to fine.
    pub fn cubes(&self) -> Vec<DyadicCube> {
        let mut out = Vec::new();
        for k in 0..=self.level {
            let m = 1u32 << k;
            let total = (m as u64).pow(self.n as u32);
            for flat in 0..total {
                let mut rest = flat;
                let mut pos = vec![0u32; self.n];
                for a in (0..self.n).rev() {
                    pos[a] = (rest % m as u64) as u32;
                    rest /= m as u64;
                }
                out.push(DyadicCube::new(self.n, k, &pos[..self.n - 1], pos[self.n - 1]).unwrap());
            }
        }
        out
    }

    /// Leaf cells of the root as (flat index, coordinates).
    pub fn root_cells(&self) -> Vec<(usize, Vec<u64>)> {
        let side = self.side();
        let total = side.pow(self.n as u32);
        (0..total)
            .map(|flat| {
                let mut rest = flat;
                let mut c = vec![0u64; self.n];
                for a in (0..self.n).rev() {
                    c[a] = rest % side;
                    rest /= side;
                }
                (self.index(&c), c)
            })
            .collect()
    }

    /// `max_k` of the forward average over the level-`k` cube containing the cell.
    pub fn maximal(&self, augmented: bool) -> Vec<(usize, BigRational)> {
        let mut out: Vec<(usize, BigRational)> = self
            .root_cells()
            .into_iter()
            .map(|(idx, c)| {
                let mut best: Option<BigRational> = None;
                for k in 0..=self.level {
                    let sh = self.level - k;
                    let mut pos: Vec<u64> = c.iter().map(|x| x >> sh).collect();
                    pos[self.n - 1] += 1;
                    let a = self.avg(k, &pos);
                    if best.as_ref().is_none_or(|b| a > *b) {
                        best = Some(a);
                    }
                }
                let mut m = best.unwrap();
                if augmented && self.vals[idx] > m {
                    m = self.vals[idx].clone();
                }
                (idx, m)
            })
            .collect();
        out.sort_by_key(|(i, _)| *i);
        out
    }

    pub fn superlevel(&self, lambda: &BigRational, augmented: bool) -> Vec<usize> {
        self.maximal(augmented)
            .into_iter()
            .filter(|(_, v)| v > lambda)
            .map(|(i, _)| i)
            .collect()
    }

    fn forward_avg(&self, c: &DyadicCube) -> BigRational {
        let mut p = Self::pos_of(c);
        p[self.n - 1] += 1;
        self.avg(c.level(), &p)
    }

    /// Maximal cubes with forward average above `λ`, sorted.
    pub fn stopping(&self, lambda: &BigRational) -> Vec<DyadicCube> {
        let all = self.cubes();
        let hits: Vec<DyadicCube> = all
            .iter()
            .filter(|c| self.forward_avg(c) > *lambda)
            .copied()
            .collect();
        let mut out: Vec<DyadicCube> = hits
            .iter()
            .filter(|c| !hits.iter().any(|o| o != *c && o.contains(c)))
            .copied()
            .collect();
        out.sort();
        out
    }

    /// Mean over `Q ∪ Q⁺` of `(f - f_{Q⁺²})⁺`.
    pub fn plus_oscillation(&self, c: &DyadicCube) -> BigRational {
        let p = Self::pos_of(c);
        let mut p2 = p.clone();
        p2[self.n - 1] += 2;
        let r = self.avg(c.level(), &p2);
        let mut cells = self.cells_of(c.level(), &p);
        let mut p1 = p.clone();
        p1[self.n - 1] += 1;
        cells.extend(self.cells_of(c.level(), &p1));
        let total: BigRational = cells
            .iter()
            .map(|&i| {
                let d = &self.vals[i] - &r;
                if d > BigRational::zero() {
                    d
                } else {
                    BigRational::zero()
                }
            })
            .sum();
        total / BigRational::from_integer(BigInt::from(cells.len()))
    }

    /// `|{x ∈ root : (f - f_{root⁺²})⁺ > λ}|`.
    pub fn distribution(&self, lambda: &BigRational) -> BigRational {
        let r = self.avg(0, &{
            let mut p = vec![0u64; self.n];
            p[self.n - 1] = 2;
            p
        });
        let cells = self.root_cells();
        let count = cells
            .iter()
            .filter(|(i, _)| &self.vals[*i] - &r > *lambda)
            .count();
        BigRational::new(BigInt::from(count), BigInt::from(cells.len()))
    }
}
