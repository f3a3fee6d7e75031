//! Dyadic JN_p seminorms by a max-weight antichain fold over the dyadic
//! tree, the BMO⁺ functionals, and a brute-force antichain enumerator.
//!
//! With per-cube weights `φ(Q) >= 0`, the best family of pairwise
//! non-overlapping dyadic subcubes of `Q` satisfies
//! `best(Q) = max(φ(Q), Σ_children best(child))`.

use std::ops::AddAssign;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::cube::{DyadicCube, Relation};
use crate::error::{Error, Result};
use crate::grid::{Domain, GridFunction};
use crate::scalar::{ln_big, pow2, pow_rational, Exponent, Sample, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    /// `Σ |Q| (mean over Q ∪ Q⁺ of (f - f_{Q⁺²})⁺)^p`.
    JnpPlus,
    /// `Σ |Q| (mean over Q of |f - f_Q|)^p`.
    JnpClassical,
}

impl Functional {
    fn multiplicity_log2(self) -> u32 {
        match self {
            Functional::JnpPlus => 1,
            Functional::JnpClassical => 0,
        }
    }
}

/// Pairwise non-overlapping dyadic cubes with their attained weight.
#[derive(Debug, Clone, Serialize)]
pub struct CubeFamily {
    pub cubes: Vec<DyadicCube>,
    pub weight: Scalar,
}

#[derive(Debug, Clone)]
pub struct SeminormResult {
    pub functional: Functional,
    pub p: Exponent,
    /// `weight^(1/p)`.
    pub value: f64,
    pub witness: CubeFamily,
    /// Exact when the grid is fixed-point and `p` is an integer.
    pub exact: bool,
}

impl SeminormResult {
    pub fn weight(&self) -> &Scalar {
        &self.witness.weight
    }
}

#[derive(Serialize)]
struct SeminormJson<'a> {
    functional: Functional,
    p: &'a Exponent,
    value: String,
    witness: &'a [DyadicCube],
    weight: &'a Scalar,
    exact: bool,
}

impl Serialize for SeminormResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SeminormJson {
            functional: self.functional,
            p: &self.p,
            value: crate::scalar::format_f64(self.value),
            witness: &self.witness.cubes,
            weight: &self.witness.weight,
            exact: self.exact,
        }
        .serialize(s)
    }
}

/// Dyadic subcubes of a root, one vector per depth, in Morton order: the
/// children of entry `i` at depth `j` are `i * 2^n .. (i+1) * 2^n` at `j + 1`.
pub(crate) struct CubeTree {
    pub levels: Vec<Vec<DyadicCube>>,
    pub fan: usize,
}

impl CubeTree {
    pub fn new(root: DyadicCube, grid_level: u32) -> Self {
        let mut levels = vec![vec![root]];
        for _ in root.level()..grid_level {
            let next: Vec<DyadicCube> = levels
                .last()
                .unwrap()
                .iter()
                .flat_map(|q| q.children_iter().collect::<Vec<_>>())
                .collect();
            levels.push(next);
        }
        CubeTree {
            levels,
            fan: 1 << root.dim(),
        }
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }
}

/// Per-cube sums of the oscillation, in mean units over
/// `2^(cells_log2(Q) + multiplicity_log2)` cells.
fn oscillation_sums<T: Sample>(
    f: &GridFunction<T>,
    tree: &CubeTree,
    functional: Functional,
) -> Vec<Vec<T>> {
    tree.levels
        .iter()
        .map(|level| {
            level
                .iter()
                .map(|q| match functional {
                    Functional::JnpPlus => f.pos_part_sum(q, 2, f.mean(&q.shifted(2))),
                    Functional::JnpClassical => f.abs_dev_sum(q, f.mean(q)),
                })
                .collect()
        })
        .collect()
}

/// Max-weight antichain: returns the best weight and, per depth, whether the
/// cube itself is taken (ties go to the children).
fn tree_dp<W>(phi: &[Vec<W>], fan: usize) -> (W, Vec<Vec<bool>>)
where
    W: Clone + PartialOrd + Zero + for<'a> AddAssign<&'a W>,
{
    let depth = phi.len();
    let mut take: Vec<Vec<bool>> = phi.iter().map(|l| vec![true; l.len()]).collect();
    let mut best: Vec<W> = phi[depth - 1].clone();
    for j in (0..depth - 1).rev() {
        let mut level_best = Vec::with_capacity(phi[j].len());
        for (i, own) in phi[j].iter().enumerate() {
            let mut s = W::zero();
            for b in &best[i * fan..(i + 1) * fan] {
                s += b;
            }
            if *own > s {
                level_best.push(own.clone());
            } else {
                take[j][i] = false;
                level_best.push(s);
            }
        }
        best = level_best;
    }
    (best.into_iter().next().unwrap(), take)
}

fn witness_indices(take: &[Vec<bool>], fan: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut stack = vec![(0usize, 0usize)];
    while let Some((j, i)) = stack.pop() {
        if take[j][i] {
            out.push((j, i));
        } else {
            stack.extend((0..fan).rev().map(|c| (j + 1, i * fan + c)));
        }
    }
    out
}

/// Exact weight units: `φ(Q) * m^p D^p 2^(L n p)` is the integer
/// `Σ^p 2^(k n (p-1))`.
fn exact_units(sum: &BigInt, p: u32, level: u32, dim: u32) -> BigInt {
    num_traits::pow(sum.clone(), p as usize) << (level * dim * (p - 1))
}

fn exact_scale(units_denom: i128, mult_log2: u32, leaf_log2: u32, p: u32) -> BigInt {
    let base = (BigInt::from(units_denom) << (leaf_log2 + mult_log2)) as BigInt;
    num_traits::pow(base, p as usize)
}

pub(crate) struct Phi {
    pub exact: Option<(Vec<Vec<BigInt>>, BigInt, u32)>,
    pub float: Option<(Vec<Vec<f64>>, f64)>,
}

/// Per-cube weights in whichever representation the mode allows.
pub(crate) fn phi_table<T: Sample>(
    f: &GridFunction<T>,
    tree: &CubeTree,
    functional: Functional,
    p: &Exponent,
) -> Phi {
    let sums = oscillation_sums(f, tree, functional);
    let mult = functional.multiplicity_log2();
    let dim = f.dim() as u32;
    if let (true, Some(pi)) = (T::EXACT, p.integer()) {
        let units = sums
            .iter()
            .zip(&tree.levels)
            .map(|(row, cubes)| {
                row.iter()
                    .zip(cubes)
                    .map(|(s, q)| exact_units(&s.to_big().unwrap(), pi, q.level(), dim))
                    .collect()
            })
            .collect();
        let scale = exact_scale(f.units(), mult, f.leaf_log2(), pi);
        return Phi {
            exact: Some((units, scale, pi)),
            float: None,
        };
    }
    let pf = p.to_f64();
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&tree.levels)
        .map(|(row, cubes)| {
            row.iter()
                .zip(cubes)
                .map(|(&s, q)| f.real(s, f.cells_log2(q) + mult).to_f64())
                .collect()
        })
        .collect();
    let top = means.iter().flatten().copied().fold(0.0f64, f64::max);
    let phi = means
        .iter()
        .zip(&tree.levels)
        .map(|(row, cubes)| {
            row.iter()
                .zip(cubes)
                .map(|(&m, q)| {
                    if top == 0.0 {
                        0.0
                    } else {
                        (m / top).powf(pf) / pow2(q.volume_log2())
                    }
                })
                .collect()
        })
        .collect();
    Phi {
        exact: None,
        float: Some((phi, top)),
    }
}

fn dyadic_seminorm<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    p: &Exponent,
    functional: Functional,
) -> Result<SeminormResult> {
    f.check_root(root)?;
    let tree = CubeTree::new(*root, f.level());
    let phi = phi_table(f, &tree, functional, p);
    let pick = |take: &[Vec<bool>]| -> Vec<DyadicCube> {
        witness_indices(take, tree.fan)
            .into_iter()
            .map(|(j, i)| tree.levels[j][i])
            .collect()
    };
    if let Some((units, scale, pi)) = phi.exact {
        let (best, take) = tree_dp(&units, tree.fan);
        let value = if best.is_zero() {
            0.0
        } else {
            ((ln_big(&best) - ln_big(&scale)) / pi as f64).exp()
        };
        return Ok(SeminormResult {
            functional,
            p: p.clone(),
            value,
            witness: CubeFamily {
                cubes: pick(&take),
                weight: Scalar::Exact(BigRational::new(best, scale)),
            },
            exact: true,
        });
    }
    let (table, top) = phi.float.expect("float weights");
    let (best, take) = tree_dp(&table, tree.fan);
    let pf = p.to_f64();
    Ok(SeminormResult {
        functional,
        p: p.clone(),
        value: top * best.powf(1.0 / pf),
        witness: CubeFamily {
            cubes: pick(&take),
            weight: Scalar::Float(best * top.powf(pf)),
        },
        exact: false,
    })
}

/// Dyadic JN_p⁺ seminorm of `f` on `root`: the supremum over families of
/// pairwise non-overlapping dyadic subcubes, with its witness family.
pub fn jnp_plus_dyadic<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    p: &Exponent,
) -> Result<SeminormResult> {
    dyadic_seminorm(f, root, p, Functional::JnpPlus)
}

/// Classical dyadic JN_p seminorm; the witness is a full dyadic partition.
pub fn jnp_classical_dyadic<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    p: &Exponent,
) -> Result<SeminormResult> {
    dyadic_seminorm(f, root, p, Functional::JnpClassical)
}

/// `|Q| (pos-part mean over Q ∪ Q⁺ relative to Q⁺²)^p`.
pub fn phi_plus<T: Sample>(f: &GridFunction<T>, q: &DyadicCube, p: &Exponent) -> Result<Scalar> {
    f.check_root(q)?;
    let m = f.pos_part_average(Domain::CubeAndForward, q, &q.forward2()?)?;
    Ok(Scalar::Exact(q.volume()).mul(&m.pow(p)))
}

/// `|Q| (mean over Q of |f - f_Q|)^p`.
pub fn phi_classical<T: Sample>(
    f: &GridFunction<T>,
    q: &DyadicCube,
    p: &Exponent,
) -> Result<Scalar> {
    f.check_root(q)?;
    let s = f.abs_dev_sum(q, f.mean(q));
    let m = f.real(s, f.cells_log2(q));
    Ok(Scalar::Exact(q.volume()).mul(&m.pow(p)))
}

/// A maximizing cube and its value.
#[derive(Debug, Clone, Serialize)]
pub struct CubeMax {
    pub value: Scalar,
    pub cube: DyadicCube,
}

fn scan_max<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    eval: impl Fn(&DyadicCube) -> Scalar,
) -> Result<CubeMax> {
    f.check_root(root)?;
    let tree = CubeTree::new(*root, f.level());
    let mut best = CubeMax {
        value: eval(root),
        cube: *root,
    };
    for q in tree.levels.iter().flatten().skip(1) {
        let v = eval(q);
        if v > best.value {
            best = CubeMax { value: v, cube: *q };
        }
    }
    Ok(best)
}

/// `max_Q` over dyadic `Q ⊆ root` of the mean over `Q` of `(f - f_{Q⁺})⁺`.
pub fn bmo_plus_dyadic<T: Sample>(f: &GridFunction<T>, root: &DyadicCube) -> Result<CubeMax> {
    scan_max(f, root, |q| {
        let s = f.pos_part_sum(q, 1, f.mean(&q.shifted(1)));
        f.real(s, f.cells_log2(q))
    })
}

/// `max_Q` over dyadic `Q ⊆ root` of the mean over `Q ∪ Q⁺` of `(f - f_{Q⁺²})⁺`.
pub fn bmo_plus_limit_form<T: Sample>(f: &GridFunction<T>, root: &DyadicCube) -> Result<CubeMax> {
    scan_max(f, root, |q| {
        let s = f.pos_part_sum(q, 2, f.mean(&q.shifted(2)));
        f.real(s, f.cells_log2(q) + 1)
    })
}

/// Largest tree the enumerator accepts.
pub const ORACLE_MAX_CUBES: usize = 64;
/// Largest number of antichains the enumerator will visit.
pub const ORACLE_MAX_ANTICHAINS: f64 = 4_194_304.0;

fn antichain_count(dim: usize, depth: u32) -> f64 {
    // a(leaf) = 2 (empty or the leaf), a(node) = a(child)^(2^n) + 1
    let mut a = 2.0f64;
    for _ in 0..depth {
        a = a.powi(1 << dim) + 1.0;
    }
    a
}

/// Brute-force maximum over every antichain of the dyadic tree below `root`.
///
/// Per-cube weights come from direct cell loops in exact rational
/// arithmetic (fixed grid, integer `p`) or `f64`, independent of the
/// prefix table and of the tree fold.
pub fn antichain_oracle<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    p: &Exponent,
    functional: Functional,
) -> Result<SeminormResult> {
    f.check_root(root)?;
    let depth = f.level() - root.level();
    let tree = CubeTree::new(*root, f.level());
    let count = tree.len();
    if count > ORACLE_MAX_CUBES {
        return Err(Error::InstanceTooLarge(format!(
            "{count} dyadic cubes exceed the enumeration bound of {ORACLE_MAX_CUBES}"
        )));
    }
    let families = antichain_count(f.dim(), depth);
    if families > ORACLE_MAX_ANTICHAINS {
        return Err(Error::InstanceTooLarge(format!(
            "{families:.3e} antichains exceed the enumeration bound of {ORACLE_MAX_ANTICHAINS:.0}"
        )));
    }
    let cubes: Vec<DyadicCube> = tree.levels.into_iter().flatten().collect();
    let masks: Vec<u64> = cubes
        .iter()
        .map(|a| {
            cubes
                .iter()
                .enumerate()
                .filter(|(_, b)| a.relation(b) != Relation::Disjoint)
                .fold(0u64, |m, (j, _)| m | 1 << j)
        })
        .collect();

    let exact = T::EXACT && p.integer().is_some();
    let (best, chosen) = if exact {
        let phis: Vec<BigRational> = cubes
            .iter()
            .map(|q| naive_phi_exact(f, q, p.integer().unwrap(), functional))
            .collect();
        let lcm = phis
            .iter()
            .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
        let nums: Vec<BigInt> = phis.iter().map(|r| r.numer() * (&lcm / r.denom())).collect();
        let fits = nums
            .iter()
            .all(|n| n.to_i128().is_some_and(|v| v.abs() < i128::MAX >> 8));
        let (best, chosen) = if fits {
            let small: Vec<i128> = nums.iter().map(|n| n.to_i128().unwrap()).collect();
            let (b, c) = enumerate(&small, &masks);
            (BigInt::from(b), c)
        } else {
            enumerate(&nums, &masks)
        };
        (Scalar::Exact(BigRational::new(best, lcm)), chosen)
    } else {
        let phis: Vec<f64> = cubes
            .iter()
            .map(|q| naive_phi_float(f, q, p.to_f64(), functional))
            .collect();
        let (b, c) = enumerate(&phis, &masks);
        (Scalar::Float(b), c)
    };
    let value = match &best {
        Scalar::Exact(r) => crate::scalar::rational_root(r, p.to_f64()),
        Scalar::Float(x) => x.powf(1.0 / p.to_f64()),
    };
    Ok(SeminormResult {
        functional,
        p: p.clone(),
        value,
        witness: CubeFamily {
            cubes: (0..cubes.len())
                .filter(|i| chosen >> i & 1 == 1)
                .map(|i| cubes[i])
                .collect(),
            weight: best,
        },
        exact,
    })
}

fn enumerate<W>(phi: &[W], masks: &[u64]) -> (W, u64)
where
    W: Clone + PartialOrd + Zero + for<'a> AddAssign<&'a W>,
{
    struct Search<'a, W> {
        phi: &'a [W],
        masks: &'a [u64],
        best: W,
        best_set: u64,
    }
    impl<W> Search<'_, W>
    where
        W: Clone + PartialOrd + Zero + for<'b> AddAssign<&'b W>,
    {
        fn go(&mut self, i: usize, blocked: u64, set: u64, sum: W) {
            if i == self.phi.len() {
                if sum > self.best {
                    self.best = sum;
                    self.best_set = set;
                }
                return;
            }
            if blocked >> i & 1 == 0 {
                let mut with = sum.clone();
                with += &self.phi[i];
                self.go(i + 1, blocked | self.masks[i], set | 1 << i, with);
            }
            self.go(i + 1, blocked, set, sum);
        }
    }
    let mut s = Search {
        phi,
        masks,
        best: W::zero(),
        best_set: 0,
    };
    s.go(0, 0, 0, W::zero());
    (s.best, s.best_set)
}

fn raw_values<T: Sample>(f: &GridFunction<T>, cells: &[usize]) -> Vec<BigRational> {
    cells
        .iter()
        .map(|&i| {
            T::to_scalar(f.cells()[i], f.denom(), 0)
                .as_exact()
                .cloned()
                .expect("exact grid")
        })
        .collect()
}

fn mean_exact(vals: &[BigRational]) -> BigRational {
    vals.iter().sum::<BigRational>() / BigRational::from_integer(BigInt::from(vals.len()))
}

fn domain_cells<T: Sample>(f: &GridFunction<T>, q: &DyadicCube, span: u32) -> Vec<usize> {
    (0..span).flat_map(|s| f.cube_cells(&q.shifted(s))).collect()
}

fn naive_phi_exact<T: Sample>(
    f: &GridFunction<T>,
    q: &DyadicCube,
    p: u32,
    functional: Functional,
) -> BigRational {
    let m = match functional {
        Functional::JnpPlus => {
            let reference = mean_exact(&raw_values(f, &f.cube_cells(&q.shifted(2))));
            let vals = raw_values(f, &domain_cells(f, q, 2));
            let pos: Vec<BigRational> = vals
                .iter()
                .map(|v| {
                    let d = v - &reference;
                    if d > BigRational::zero() {
                        d
                    } else {
                        BigRational::zero()
                    }
                })
                .collect();
            mean_exact(&pos)
        }
        Functional::JnpClassical => {
            let vals = raw_values(f, &f.cube_cells(q));
            let mean = mean_exact(&vals);
            let dev: Vec<BigRational> = vals.iter().map(|v| num_traits::abs(v - &mean)).collect();
            mean_exact(&dev)
        }
    };
    q.volume() * pow_rational(&m, p)
}

fn naive_phi_float<T: Sample>(
    f: &GridFunction<T>,
    q: &DyadicCube,
    p: f64,
    functional: Functional,
) -> f64 {
    let val = |i: usize| T::to_scalar(f.cells()[i], f.denom(), 0).to_f64();
    let mean = |cells: &[usize]| cells.iter().map(|&i| val(i)).sum::<f64>() / cells.len() as f64;
    let m = match functional {
        Functional::JnpPlus => {
            let reference = mean(&f.cube_cells(&q.shifted(2)));
            let cells = domain_cells(f, q, 2);
            cells.iter().map(|&i| (val(i) - reference).max(0.0)).sum::<f64>() / cells.len() as f64
        }
        Functional::JnpClassical => {
            let cells = f.cube_cells(q);
            let mu = mean(&cells);
            cells.iter().map(|&i| (val(i) - mu).abs()).sum::<f64>() / cells.len() as f64
        }
    };
    m.powf(p) / pow2(q.volume_log2())
}
