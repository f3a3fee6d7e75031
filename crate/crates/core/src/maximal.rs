//! The forward-in-time dyadic maximal operator and the stopping-time
//! decomposition of a nonnegative grid function.
//!
//! For a root cube `Q₀`, the grid maximal function at a leaf cell `x` is the
//! largest forward average `f_{Q⁺}` over dyadic `Q ⊆ Q₀` containing `x`.
//! Stopping cubes at level `λ` are the maximal dyadic `Q` with `f_{Q⁺} > λ`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use crate::cube::DyadicCube;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::report::VerificationReport;
use crate::scalar::{Sample, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Supremum of forward averages over dyadic ancestors down to the grid level.
    Grid,
    /// The grid value maximized with the cell's own value.
    Augmented,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Variant::Grid),
            "augmented" => Ok(Variant::Augmented),
            other => Err(Error::InvalidParams(format!("unknown variant `{other}`"))),
        }
    }
}

/// Maximal function values on the leaf cells of a root cube.
///
/// `cells[i]` is the flat grid index carrying `values[i]` (mean units);
/// cells are listed in depth-first (Morton) order of the dyadic tree.
#[derive(Debug, Clone)]
pub struct MaximalField<T: Sample> {
    pub root: DyadicCube,
    pub variant: Variant,
    pub cells: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Sample> MaximalField<T> {
    /// Sorted flat indices of cells where the field exceeds `thr` (mean units).
    pub fn superlevel(&self, thr: T) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .cells
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| **v > thr)
            .map(|(c, _)| *c)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn count_above(&self, thr: T) -> usize {
        self.values.iter().filter(|v| **v > thr).count()
    }

    /// `|{x ∈ root : M f(x) > λ}|`.
    pub fn superlevel_measure(&self, f: &GridFunction<T>, lambda: &BigRational) -> Scalar {
        f.cells_volume(self.count_above(f.threshold(lambda, 0)))
    }

    /// Values as scalars, in flat-index order.
    pub fn to_scalars(&self, f: &GridFunction<T>) -> Vec<(usize, Scalar)> {
        let mut v: Vec<(usize, Scalar)> = self
            .cells
            .iter()
            .zip(&self.values)
            .map(|(&c, &x)| (c, f.real(x, 0)))
            .collect();
        v.sort_by_key(|(c, _)| *c);
        v
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaximalFieldJson {
    pub root: DyadicCube,
    pub variant: Variant,
    pub cells: Vec<DyadicCube>,
    pub values: Vec<Scalar>,
}

impl MaximalFieldJson {
    pub fn new<T: Sample>(f: &GridFunction<T>, m: &MaximalField<T>) -> Self {
        let (cells, values) = m
            .to_scalars(f)
            .into_iter()
            .map(|(c, v)| (f.cell_cube(c), v))
            .unzip();
        MaximalFieldJson {
            root: m.root,
            variant: m.variant,
            cells,
            values,
        }
    }
}

/// Flat cell index of a leaf-level cube.
#[inline]
pub(crate) fn leaf_index<T: Sample>(f: &GridFunction<T>, c: &DyadicCube) -> usize {
    debug_assert_eq!(c.level(), f.level());
    let side = 1usize << f.level();
    let mut idx = 0usize;
    for &s in c.spatial() {
        idx = idx * side + s as usize;
    }
    idx * 3 * side + c.time() as usize
}

/// Depth-first traversal of the dyadic tree below `root`, carrying a value
/// from parent to children. `visit` returns the value handed to the
/// children, or `None` to prune.
pub(crate) fn descend<T: Sample, V: Copy>(
    f: &GridFunction<T>,
    root: DyadicCube,
    init: V,
    mut visit: impl FnMut(&DyadicCube, V) -> Option<V>,
) {
    let mut stack = vec![(root, init)];
    while let Some((q, carried)) = stack.pop() {
        let Some(next) = visit(&q, carried) else {
            continue;
        };
        if q.level() < f.level() {
            let mark = stack.len();
            stack.extend(q.children_iter().map(|c| (c, next)));
            stack[mark..].reverse();
        }
    }
}

pub fn maximal_function<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    variant: Variant,
) -> Result<MaximalField<T>> {
    f.check_root(root)?;
    let leaves = 1usize << ((f.level() - root.level()) * f.dim() as u32);
    let mut cells = Vec::with_capacity(leaves);
    let mut values = Vec::with_capacity(leaves);
    descend(f, *root, None::<T>, |q, running| {
        let a = f.mean(&q.shifted(1));
        let m = match running {
            Some(r) => r.larger(a),
            None => a,
        };
        if q.level() == f.level() {
            let idx = leaf_index(f, q);
            cells.push(idx);
            values.push(match variant {
                Variant::Grid => m,
                Variant::Augmented => m.larger(f.cell_units(idx)),
            });
        }
        Some(Some(m))
    });
    Ok(MaximalField {
        root: *root,
        variant,
        cells,
        values,
    })
}

/// Output of the stopping-time algorithm at one level `λ`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub lambda: BigRational,
    pub root: DyadicCube,
    /// The maximal dyadic cubes `Q_j ⊆ root` with `f_{Q_j⁺} > λ`, in
    /// depth-first order.
    pub stopping: Vec<DyadicCube>,
    /// Indices `j` whose forward cube is not properly contained in another.
    pub subfamily: Vec<usize>,
    /// `groups[m]` lists every `i` with `Q_i⁺ ⊆ Q_{subfamily[m]}⁺`.
    pub groups: Vec<Vec<usize>>,
}

impl Decomposition {
    pub fn is_empty(&self) -> bool {
        self.stopping.is_empty()
    }

    /// `Σ_j |Q_j|` as a cell count on a grid of level `grid_level`.
    pub fn covered_cells(&self, grid_level: u32) -> usize {
        self.stopping
            .iter()
            .map(|q| 1usize << ((grid_level - q.level()) * q.dim() as u32))
            .sum()
    }

    /// Sorted flat cell indices of `∪ Q_j`.
    pub fn union_cells<T: Sample>(&self, f: &GridFunction<T>) -> Vec<usize> {
        let mut out: Vec<usize> = self.stopping.iter().flat_map(|q| f.cube_cells(q)).collect();
        out.sort_unstable();
        out
    }
}

#[derive(Serialize)]
struct DecompositionJson<'a> {
    lambda: Scalar,
    root: &'a DyadicCube,
    stopping: &'a [DyadicCube],
    subfamily: &'a [usize],
    groups: &'a [Vec<usize>],
}

impl Serialize for Decomposition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DecompositionJson {
            lambda: Scalar::Exact(self.lambda.clone()),
            root: &self.root,
            stopping: &self.stopping,
            subfamily: &self.subfamily,
            groups: &self.groups,
        }
        .serialize(s)
    }
}

fn require_nonnegative<T: Sample>(f: &GridFunction<T>, root: &DyadicCube) -> Result<()> {
    match f.first_negative(root, 2) {
        Some(cell) => Err(Error::NegativeInput { cell }),
        None => Ok(()),
    }
}

pub fn cz_decompose<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    lambda: &BigRational,
) -> Result<Decomposition> {
    f.check_root(root)?;
    require_nonnegative(f, root)?;
    Ok(decompose_unchecked(f, root, lambda))
}

pub(crate) fn decompose_unchecked<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    lambda: &BigRational,
) -> Decomposition {
    let thr = f.threshold(lambda, 0);
    let mut stopping = Vec::new();
    descend(f, *root, (), |q, ()| {
        if f.mean(&q.shifted(1)) > thr {
            stopping.push(*q);
            None
        } else {
            Some(())
        }
    });
    let (subfamily, groups) = select_subfamily(&stopping);
    Decomposition {
        lambda: lambda.clone(),
        root: *root,
        stopping,
        subfamily,
        groups,
    }
}

/// Keep the stopping cubes whose forward translate is not properly contained
/// in another forward translate, and group every cube under the maximal
/// forward cube containing its own.
///
/// Forward translates are dyadic cubes of the extended domain, so
/// containment is ancestry; each cube walks up its ancestor chain once.
pub fn select_subfamily(stopping: &[DyadicCube]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let forward: HashMap<DyadicCube, usize> = stopping
        .iter()
        .enumerate()
        .map(|(i, q)| (q.shifted(1), i))
        .collect();
    assert_eq!(
        forward.len(),
        stopping.len(),
        "stopping cubes must be pairwise non-overlapping"
    );
    let top: Vec<usize> = stopping
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let mut best = i;
            let mut cur = q.shifted(1).parent();
            while let Some(a) = cur {
                if let Some(&j) = forward.get(&a) {
                    best = j;
                }
                cur = a.parent();
            }
            best
        })
        .collect();
    let subfamily: Vec<usize> = (0..stopping.len()).filter(|&i| top[i] == i).collect();
    let slot: HashMap<usize, usize> = subfamily.iter().enumerate().map(|(m, &j)| (j, m)).collect();
    let mut groups = vec![Vec::new(); subfamily.len()];
    for (i, t) in top.iter().enumerate() {
        groups[slot[t]].push(i);
    }
    (subfamily, groups)
}

/// Strictness at every stopping cube, failure at every parent, and the
/// superlevel identity `{M f > λ} = ∪ Q_j` (grid variant) as cell sets.
pub fn check_stopping<T: Sample>(
    f: &GridFunction<T>,
    dec: &Decomposition,
    field: &MaximalField<T>,
) -> Vec<VerificationReport> {
    let thr = f.threshold(&dec.lambda, 0);
    let lambda = Scalar::Exact(dec.lambda.clone());
    let exact = T::EXACT;
    let mut out = Vec::with_capacity(3);

    let strict = dec
        .stopping
        .iter()
        .map(|q| f.mean(&q.shifted(1)))
        .fold(None, |acc: Option<T>, a| {
            Some(match acc {
                Some(b) if b < a => b,
                _ => a,
            })
        });
    out.push(match strict {
        None => VerificationReport::vacuous("p1", exact),
        Some(m) => VerificationReport::new("p1", f.real(m, 0), lambda.clone(), m > thr)
            .with_exact(exact),
    });

    let parents = dec
        .stopping
        .iter()
        .filter(|q| *q != &dec.root)
        .filter_map(|q| q.parent())
        .map(|p| f.mean(&p.shifted(1)))
        .fold(None, |acc: Option<T>, a| Some(acc.map_or(a, |b| b.larger(a))));
    out.push(match parents {
        None => VerificationReport::vacuous("p1-maximal", exact),
        Some(m) => VerificationReport::new("p1-maximal", f.real(m, 0), lambda.clone(), m <= thr)
            .with_exact(exact),
    });

    let level_set = if field.variant == Variant::Grid && field.root == dec.root {
        field.superlevel(thr)
    } else {
        Vec::new()
    };
    let union = dec.union_cells(f);
    out.push(
        VerificationReport::new(
            "p1-superlevel",
            f.cells_volume(level_set.len()),
            f.cells_volume(union.len()),
            field.variant == Variant::Grid && level_set == union,
        )
        .with_exact(true),
    );
    out
}

/// `f_{Q_j⁺²} <= 2^n λ` for every stopping cube, provided `λ >= f_{Q₀⁺}`.
pub fn check_p2<T: Sample>(f: &GridFunction<T>, dec: &Decomposition) -> VerificationReport {
    let root_fwd = f.mean(&dec.root.shifted(1));
    let thr = f.threshold(&dec.lambda, 0);
    let bound = &dec.lambda * BigRational::from_integer(BigInt::from(1u64 << f.dim()));
    let bound_thr = f.threshold(&bound, 0);
    let worst = dec
        .stopping
        .iter()
        .map(|q| f.mean(&q.shifted(2)))
        .fold(None, |acc: Option<T>, a| Some(acc.map_or(a, |b| b.larger(a))));
    let lhs = worst.map(|w| f.real(w, 0));
    let rhs = Scalar::Exact(bound);
    let root_stops = dec.stopping.contains(&dec.root);
    if root_fwd > thr || root_stops {
        return VerificationReport::inadmissible("p2", lhs, Some(rhs), T::EXACT);
    }
    match worst {
        None => VerificationReport::vacuous("p2", T::EXACT),
        Some(w) => VerificationReport::new("p2", f.real(w, 0), rhs, w <= bound_thr)
            .with_exact(T::EXACT),
    }
}

/// The counting chain behind the weak-type bound for the forward maximal
/// operator: `Σ|Q_j| <= 2 Σ|Q̃_j⁺| <= (2/λ) ∫_{Q₀ ∪ Q₀⁺} f`.
pub fn weak_type_check<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    lambda: &BigRational,
) -> Result<Vec<VerificationReport>> {
    if lambda <= &BigRational::zero() {
        return Err(Error::InvalidParams(format!("λ = {lambda} must be positive")));
    }
    let dec = cz_decompose(f, root, lambda)?;
    Ok(weak_type_reports(f, &dec))
}

pub(crate) fn weak_type_reports<T: Sample>(
    f: &GridFunction<T>,
    dec: &Decomposition,
) -> Vec<VerificationReport> {
    let covered = f.cells_volume(dec.covered_cells(f.level()));
    let selected: usize = dec
        .subfamily
        .iter()
        .map(|&j| 1usize << ((f.level() - dec.stopping[j].level()) * f.dim() as u32))
        .sum();
    let two = Scalar::from_int(2);
    let packed = two.mul(&f.cells_volume(selected));
    let integral = f.integral(&dec.root, 2);
    let bound = two.mul(&integral).div(&Scalar::Exact(dec.lambda.clone()));
    let exact = T::EXACT;
    vec![
        VerificationReport::new("p3-cover", covered.clone(), packed.clone(), covered <= packed),
        VerificationReport::new("p3-packing", packed.clone(), bound.clone(), packed.le_tol(&bound, 0.0))
            .with_exact(exact),
        VerificationReport::new("p3", covered.clone(), bound.clone(), covered.le_tol(&bound, 0.0))
            .with_exact(exact),
    ]
}

/// `λ |{M f > λ}| / ∫_{Q₀ ∪ Q₀⁺} f` for the given field, or `None` when the
/// integral vanishes.
pub fn observed_weak_constant<T: Sample>(
    f: &GridFunction<T>,
    field: &MaximalField<T>,
    lambda: &BigRational,
) -> Option<f64> {
    let integral = f.integral(&field.root, 2).to_f64();
    if integral == 0.0 {
        return None;
    }
    let m = field.superlevel_measure(f, lambda).to_f64();
    Some(crate::scalar::rational_to_f64(lambda) * m / integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn example() -> GridFunction<i128> {
        let mut v = vec![0i128; 12];
        v[3] = 4;
        GridFunction::from_fixed(1, 2, 1, v).unwrap()
    }

    fn c1(level: u32, time: u32) -> DyadicCube {
        DyadicCube::new(1, level, &[], time).unwrap()
    }

    #[test]
    fn constant_field() {
        let f = GridFunction::from_fixed(2, 2, 2, vec![6; 48]).unwrap();
        let m = maximal_function(&f, &f.root(), Variant::Grid).unwrap();
        assert_eq!(m.values.len(), 16);
        for (_, v) in m.to_scalars(&f) {
            assert_eq!(v, Scalar::from_int(3));
        }
    }

    #[test]
    fn example_field_values() {
        let f = example();
        let g = maximal_function(&f, &f.root(), Variant::Grid).unwrap();
        let a = maximal_function(&f, &f.root(), Variant::Augmented).unwrap();
        let gv: Vec<Scalar> = g.to_scalars(&f).into_iter().map(|x| x.1).collect();
        let av: Vec<Scalar> = a.to_scalars(&f).into_iter().map(|x| x.1).collect();
        let ints = |v: &[i64]| v.iter().map(|&x| Scalar::from_int(x)).collect::<Vec<_>>();
        assert_eq!(gv, ints(&[2, 2, 4, 0]));
        assert_eq!(av, ints(&[2, 2, 4, 4]));
    }

    #[test]
    fn example_decomposition() {
        let f = example();
        let d = cz_decompose(&f, &f.root(), &rat(1, 2)).unwrap();
        assert_eq!(d.stopping, vec![c1(1, 0), c1(2, 2)]);
        assert_eq!(d.subfamily, vec![0]);
        assert_eq!(d.groups, vec![vec![0, 1]]);
        assert_eq!(d.covered_cells(2), 3);
    }

    #[test]
    fn empty_decompositions() {
        let z = GridFunction::from_fixed(1, 2, 1, vec![0; 12]).unwrap();
        assert!(cz_decompose(&z, &z.root(), &rat(0, 1)).unwrap().is_empty());
        let f = example();
        assert!(cz_decompose(&f, &f.root(), &rat(4, 1)).unwrap().is_empty());
    }

    #[test]
    fn root_can_stop() {
        let f = GridFunction::from_fixed(1, 1, 1, vec![0, 0, 3, 3, 0, 0]).unwrap();
        let d = cz_decompose(&f, &f.root(), &rat(1, 1)).unwrap();
        assert_eq!(d.stopping, vec![f.root()]);
        let r = check_p2(&f, &d);
        assert!(!r.admissible);
    }

    #[test]
    fn negative_input_rejected() {
        let mut v = vec![1i128; 12];
        v[5] = -1;
        let f = GridFunction::from_fixed(1, 2, 1, v).unwrap();
        assert!(matches!(
            cz_decompose(&f, &f.root(), &rat(1, 1)),
            Err(Error::NegativeInput { cell: 5 })
        ));
    }

    #[test]
    fn subfamily_examples() {
        let (s, g) = select_subfamily(&[c1(1, 0)]);
        assert_eq!((s, g), (vec![0], vec![vec![0]]));
        let (s, g) = select_subfamily(&[c1(2, 0), c1(2, 1), c1(2, 3)]);
        assert_eq!(s, vec![0, 1, 2]);
        assert_eq!(g, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn example_checks() {
        let f = example();
        let root = f.root();
        let lambda = rat(1, 2);
        let d = cz_decompose(&f, &root, &lambda).unwrap();
        let m = maximal_function(&f, &root, Variant::Grid).unwrap();
        for r in check_stopping(&f, &d, &m) {
            assert!(r.pass, "{r:?}");
        }
        let p2 = check_p2(&f, &d);
        assert!(p2.admissible && p2.pass);
        assert_eq!(p2.lhs, Some(Scalar::zero()));
        assert_eq!(p2.rhs, Some(Scalar::from_int(1)));
        let w = weak_type_check(&f, &root, &lambda).unwrap();
        assert!(w.iter().all(|r| r.pass && r.exact));
        let p3 = w.iter().find(|r| r.id == "p3").unwrap();
        assert_eq!(p3.lhs, Some(Scalar::Exact(rat(3, 4))));
        assert_eq!(p3.rhs, Some(Scalar::from_int(4)));
    }

    #[test]
    fn weak_type_constant_one() {
        let f = GridFunction::from_fixed(1, 2, 1, vec![1; 12]).unwrap();
        let w = weak_type_check(&f, &f.root(), &rat(2, 1)).unwrap();
        let p3 = w.iter().find(|r| r.id == "p3").unwrap();
        assert_eq!(p3.lhs, Some(Scalar::zero()));
        assert_eq!(p3.rhs, Some(Scalar::from_int(2)));
        assert!(weak_type_check(&f, &f.root(), &rat(0, 1)).is_err());
    }
}
