//! Piecewise-constant functions on the time-extended root domain.
//!
//! Cells are stored spatial-major with time varying fastest, so a cube and
//! its forward translates are contiguous runs along the time axis.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::cube::{DyadicCube, MAX_DIM};
use crate::error::{Error, Result};
use crate::scalar::{gcd_all, Sample, Scalar};

/// Which set a positive-part mean is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// The base cube `Q`.
    Cube,
    /// `Q ∪ Q⁺`.
    CubeAndForward,
}

impl Domain {
    fn span(self) -> u32 {
        match self {
            Domain::Cube => 1,
            Domain::CubeAndForward => 2,
        }
    }
}

/// Inclusive n-dimensional prefix sums, padded by one zero row per axis.
#[derive(Debug, Clone)]
pub struct PrefixTable<T> {
    strides: Vec<usize>,
    table: Vec<T>,
}

impl<T: Sample> PrefixTable<T> {
    /// `dims` are the cell counts per axis (time last), `cells` time-fastest.
    pub fn build(dims: &[usize], cells: &[T]) -> Self {
        let n = dims.len();
        let padded: Vec<usize> = dims.iter().map(|d| d + 1).collect();
        let mut strides = vec![1usize; n];
        for a in (0..n.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * padded[a + 1];
        }
        let total: usize = padded.iter().product();
        let mut table = vec![T::zero(); total];

        // scatter cells to the padded layout
        let mut coord = vec![0usize; n];
        for &v in cells {
            let idx: usize = coord
                .iter()
                .zip(&strides)
                .map(|(c, s)| (c + 1) * s)
                .sum();
            table[idx] = v;
            for a in (0..n).rev() {
                coord[a] += 1;
                if coord[a] < dims[a] {
                    break;
                }
                coord[a] = 0;
            }
        }

        for a in 0..n {
            let stride = strides[a];
            for idx in 0..total {
                if !(idx / stride).is_multiple_of(padded[a]) {
                    let prev = table[idx - stride];
                    table[idx] = table[idx] + prev;
                }
            }
        }
        PrefixTable { strides, table }
    }

    /// Sum over the half-open cell box `[lo, hi)`.
    pub fn box_sum(&self, lo: &[u64], hi: &[u64]) -> T {
        let n = self.strides.len();
        let (mut plus, mut minus) = (T::zero(), T::zero());
        for mask in 0u32..(1 << n) {
            let mut idx = 0usize;
            for a in 0..n {
                let c = if mask >> a & 1 == 1 { lo[a] } else { hi[a] };
                idx += c as usize * self.strides[a];
            }
            if mask.count_ones() % 2 == 0 {
                plus = plus + self.table[idx];
            } else {
                minus = minus + self.table[idx];
            }
        }
        plus - minus
    }
}

/// A grid function at resolution level `L` in dimension `n`.
///
/// Immutable after construction; the prefix table is built once.
#[derive(Debug, Clone)]
pub struct GridFunction<T: Sample> {
    dim: usize,
    level: u32,
    denom: i128,
    units: i128,
    cells: Vec<T>,
    prefix: PrefixTable<T>,
}

/// Grid function in either storage mode, as loaded from disk.
#[derive(Debug, Clone)]
pub enum AnyGrid {
    Float(GridFunction<f64>),
    Fixed(GridFunction<i128>),
}

/// Run an expression against the typed grid inside an [`AnyGrid`].
#[macro_export]
macro_rules! with_grid {
    ($any:expr, $g:ident => $body:expr) => {
        match $any {
            $crate::grid::AnyGrid::Float($g) => $body,
            $crate::grid::AnyGrid::Fixed($g) => $body,
        }
    };
}

/// Storage mode of a grid: `f64` or fixed point over a denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridMode {
    F64,
    Fixed(i128),
}

impl std::str::FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "f64" {
            return Ok(GridMode::F64);
        }
        let d = s
            .strip_prefix("fixed:")
            .and_then(|d| d.trim().parse::<i128>().ok())
            .filter(|d| *d > 0)
            .ok_or_else(|| Error::format("mode", format!("`{s}` is neither `f64` nor `fixed:D` with D > 0")))?;
        Ok(GridMode::Fixed(d))
    }
}

impl std::fmt::Display for GridMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridMode::F64 => write!(f, "f64"),
            GridMode::Fixed(d) => write!(f, "fixed:{d}"),
        }
    }
}

impl serde::Serialize for GridMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for GridMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn cell_count(dim: usize, level: u32) -> usize {
    (1usize << (level as usize * (dim - 1))) * 3 * (1usize << level)
}

fn validate_shape(dim: usize, level: u32, len: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::format("n", format!("dimension {dim} outside 1..={MAX_DIM}")));
    }
    if level as usize * dim > 40 {
        return Err(Error::format("L", format!("level {level} too fine for n = {dim}")));
    }
    let expected = cell_count(dim, level);
    if len != expected {
        return Err(Error::format(
            "values",
            format!("expected {expected} cells for n = {dim}, L = {level}, got {len}"),
        ));
    }
    Ok(())
}

impl<T: Sample> GridFunction<T> {
    fn assemble(dim: usize, level: u32, denom: i128, units: i128, cells: Vec<T>) -> Self {
        let dims = Self::dims_of(dim, level);
        let prefix = PrefixTable::build(&dims, &cells);
        GridFunction {
            dim,
            level,
            denom,
            units,
            cells,
            prefix,
        }
    }

    fn dims_of(dim: usize, level: u32) -> Vec<usize> {
        let side = 1usize << level;
        let mut d = vec![side; dim - 1];
        d.push(3 * side);
        d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        T::EXACT
    }

    /// Common denominator of fixed-point numerators (1 for float grids).
    pub fn denom(&self) -> i128 {
        self.denom
    }

    /// Denominator of mean units, `denom * 2^(L n)` in fixed mode.
    pub fn units(&self) -> i128 {
        self.units
    }

    /// `log2` of the number of leaf cells per unit volume.
    #[inline]
    pub fn leaf_log2(&self) -> u32 {
        self.level * self.dim as u32
    }

    pub fn dims(&self) -> Vec<usize> {
        Self::dims_of(self.dim, self.level)
    }

    /// The unit root cube `Q₀`.
    pub fn root(&self) -> DyadicCube {
        DyadicCube::root(self.dim).expect("dimension validated at construction")
    }

    /// Leaf cube holding the cell with flat index `idx`.
    pub fn cell_cube(&self, idx: usize) -> DyadicCube {
        let dims = self.dims();
        let mut rest = idx;
        let mut coords = vec![0u32; self.dim];
        for a in (0..self.dim).rev() {
            coords[a] = (rest % dims[a]) as u32;
            rest /= dims[a];
        }
        DyadicCube::new(self.dim, self.level, &coords[..self.dim - 1], coords[self.dim - 1])
            .expect("cell index in range")
    }

    pub fn check_cube(&self, c: &DyadicCube) -> Result<()> {
        if c.dim() != self.dim {
            return Err(Error::InvalidParams(format!(
                "cube {c} has dimension {}, grid has {}",
                c.dim(),
                self.dim
            )));
        }
        if c.level() > self.level {
            return Err(Error::OutOfDomain(format!(
                "cube {c} is finer than the grid level {}",
                self.level
            )));
        }
        Ok(())
    }

    /// Root cube validation for operations that need `Q`, `Q⁺`, `Q⁺²`.
    pub fn check_root(&self, root: &DyadicCube) -> Result<()> {
        self.check_cube(root)?;
        if !root.inside_root() {
            return Err(Error::OutOfDomain(format!("{root} is not a subcube of [0,1)^n")));
        }
        Ok(())
    }

    /// Cell box `[lo, hi)` covered by `c` and its next `span - 1` translates.
    #[inline]
    pub(crate) fn region(&self, c: &DyadicCube, span: u32) -> ([u64; MAX_DIM], [u64; MAX_DIM]) {
        let mut lo = [0u64; MAX_DIM];
        let mut hi = [0u64; MAX_DIM];
        for a in 0..self.dim {
            let (l, h) = c.range_at(a, self.level);
            lo[a] = l;
            hi[a] = h;
        }
        let t = self.dim - 1;
        hi[t] = lo[t] + (hi[t] - lo[t]) * span as u64;
        (lo, hi)
    }

    /// Call `f(start, len)` for each contiguous time run of the box.
    #[inline]
    pub(crate) fn for_each_run(&self, lo: &[u64], hi: &[u64], mut f: impl FnMut(usize, usize)) {
        let n = self.dim;
        let side = 1u64 << self.level;
        let tlen = 3 * side;
        let run = (hi[n - 1] - lo[n - 1]) as usize;
        if n == 1 {
            f(lo[0] as usize, run);
            return;
        }
        let mut coord = [0u64; MAX_DIM];
        coord[..n - 1].copy_from_slice(&lo[..n - 1]);
        loop {
            let mut base = 0u64;
            for &c in &coord[..n - 1] {
                base = base * side + c;
            }
            f((base * tlen + lo[n - 1]) as usize, run);
            let mut a = n - 1;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                coord[a] += 1;
                if coord[a] < hi[a] {
                    break;
                }
                coord[a] = lo[a];
            }
        }
    }

    /// Flat indices of all cells in `c`, time fastest.
    pub fn cube_cells(&self, c: &DyadicCube) -> Vec<usize> {
        let (lo, hi) = self.region(c, 1);
        let mut out = Vec::new();
        self.for_each_run(&lo[..self.dim], &hi[..self.dim], |s, len| {
            out.extend(s..s + len)
        });
        out
    }

    /// Raw sum of cell values over `c` via the prefix table.
    #[inline]
    pub fn box_sum(&self, c: &DyadicCube) -> T {
        let (lo, hi) = self.region(c, 1);
        self.prefix.box_sum(&lo[..self.dim], &hi[..self.dim])
    }

    /// Sum by direct iteration; independent of the prefix table.
    pub fn naive_sum(&self, c: &DyadicCube) -> T {
        let (lo, hi) = self.region(c, 1);
        let mut acc = T::zero();
        self.for_each_run(&lo[..self.dim], &hi[..self.dim], |s, len| {
            for &v in &self.cells[s..s + len] {
                acc = acc + v;
            }
        });
        acc
    }

    #[inline]
    pub(crate) fn cells_log2(&self, c: &DyadicCube) -> u32 {
        (self.level - c.level()) * self.dim as u32
    }

    /// Mean of f over `c` in mean units.
    #[inline]
    pub fn mean(&self, c: &DyadicCube) -> T {
        T::mean_of_sum(self.box_sum(c), self.cells_log2(c), self.leaf_log2())
    }

    /// Value of a single cell in mean units.
    #[inline]
    pub fn cell_units(&self, idx: usize) -> T {
        T::mean_of_sum(self.cells[idx], 0, self.leaf_log2())
    }

    /// Convert a mean-unit quantity (divided by `2^extra_log2`) to a scalar.
    pub fn real(&self, x: T, extra_log2: u32) -> Scalar {
        T::to_scalar(x, self.units, extra_log2)
    }

    /// Mean-unit threshold equivalent to `level` for sums over `2^extra_log2` cells.
    pub fn threshold(&self, level: &BigRational, extra_log2: u32) -> T {
        T::threshold(level, self.units, extra_log2)
    }

    /// Volume of `count` leaf cells.
    pub fn cells_volume(&self, count: usize) -> Scalar {
        Scalar::Exact(BigRational::new(
            BigInt::from(count),
            BigInt::from(1) << self.leaf_log2(),
        ))
    }

    /// Integral of f over `c` and its next `span - 1` translates.
    pub fn integral(&self, c: &DyadicCube, span: u32) -> Scalar {
        let mut total = T::zero();
        for s in 0..span {
            total = total + self.box_sum(&c.shifted(s));
        }
        // raw fixed-point sums over D = denom 2^(Ln) are already integrals
        let extra = if T::EXACT { 0 } else { self.leaf_log2() };
        T::to_scalar(total, self.units, extra)
    }

    /// Arithmetic mean of f over a dyadic cube of the extended domain.
    pub fn average(&self, c: &DyadicCube) -> Result<Scalar> {
        self.check_cube(c)?;
        Ok(self.real(self.mean(c), 0))
    }

    /// Sum over `base` (and `base⁺` for the union domain) of
    /// `(f - reference)⁺`, in mean units.
    pub fn pos_part_sum(&self, base: &DyadicCube, span: u32, reference: T) -> T {
        let (lo, hi) = self.region(base, span);
        let leaf = self.leaf_log2();
        let mut acc = T::zero();
        self.for_each_run(&lo[..self.dim], &hi[..self.dim], |s, len| {
            for &v in &self.cells[s..s + len] {
                acc = acc + (T::mean_of_sum(v, 0, leaf) - reference).positive_part();
            }
        });
        acc
    }

    /// Sum of `|f - reference|` over `base`, in mean units.
    pub(crate) fn abs_dev_sum(&self, base: &DyadicCube, reference: T) -> T {
        let (lo, hi) = self.region(base, 1);
        let leaf = self.leaf_log2();
        let mut acc = T::zero();
        self.for_each_run(&lo[..self.dim], &hi[..self.dim], |s, len| {
            for &v in &self.cells[s..s + len] {
                acc = acc + (T::mean_of_sum(v, 0, leaf) - reference).magnitude();
            }
        });
        acc
    }

    /// Mean over `domain` (built on `base`) of `(f - f_ref)⁺`.
    pub fn pos_part_average(
        &self,
        domain: Domain,
        base: &DyadicCube,
        reference: &DyadicCube,
    ) -> Result<Scalar> {
        self.check_cube(base)?;
        self.check_cube(reference)?;
        let span = domain.span();
        if base.time() + span > 3 << base.level() {
            return Err(Error::OutOfDomain(format!(
                "domain over {base} exits the extended domain"
            )));
        }
        let sum = self.pos_part_sum(base, span, self.mean(reference));
        let extra = self.cells_log2(base) + (span - 1);
        Ok(self.real(sum, extra))
    }

    /// `|{x ∈ root : (f(x) - f_{root⁺²})⁺ > λ}|`.
    pub fn distribution_measure(&self, root: &DyadicCube, lambda: &BigRational) -> Result<Scalar> {
        self.check_root(root)?;
        let reference = self.mean(&root.shifted(2));
        let thr = self.threshold(lambda, 0);
        let mut count = 0usize;
        for idx in self.cube_cells(root) {
            if (self.cell_units(idx) - reference).positive_part() > thr {
                count += 1;
            }
        }
        Ok(self.cells_volume(count))
    }

    /// First cell whose value is negative, if any, within `c` and its
    /// next `span - 1` translates.
    pub fn first_negative(&self, c: &DyadicCube, span: u32) -> Option<usize> {
        let (lo, hi) = self.region(c, span);
        let mut found = None;
        self.for_each_run(&lo[..self.dim], &hi[..self.dim], |s, len| {
            if found.is_none() {
                found = (s..s + len).find(|&i| self.cells[i] < T::zero());
            }
        });
        found
    }

    pub fn max_cell(&self) -> Scalar {
        let m = self.cells.iter().copied().fold(self.cells[0], T::larger);
        self.real(T::mean_of_sum(m, 0, self.leaf_log2()), 0)
    }

    pub fn min_cell(&self) -> Scalar {
        let m = self
            .cells
            .iter()
            .copied()
            .fold(self.cells[0], |a, b| if b < a { b } else { a });
        self.real(T::mean_of_sum(m, 0, self.leaf_log2()), 0)
    }

    /// Split every cell into `2^n` children carrying the same value.
    pub fn refine(&self) -> Result<Self> {
        let level = self.level + 1;
        let total = cell_count(self.dim, level);
        let mut cells = vec![T::zero(); total];
        let fine = GridShape::new(self.dim, level);
        for (idx, v) in cells.iter_mut().enumerate() {
            let coarse = fine.coarse_index(idx);
            *v = self.cells[coarse];
        }
        self.rebuild(level, cells)
    }

    /// Grid from raw cell values over `denom`, reduced and range-checked.
    pub fn from_parts(dim: usize, level: u32, mut denom: i128, mut cells: Vec<T>) -> Result<Self> {
        validate_shape(dim, level, cells.len())?;
        if !T::EXACT {
            return Ok(Self::assemble(dim, level, 1, 1, cells));
        }
        T::reduce(&mut cells, &mut denom);
        let leaf = level * dim as u32;
        let units = checked_units(denom, leaf)?;
        let max_bits = cells.iter().map(|v| v.magnitude_bits()).max().unwrap_or(0);
        // positive-part sums reach |num| * 2^(2Ln + 2)
        if max_bits + 2 * leaf + 2 > NUM_HEADROOM_BITS {
            return Err(Error::Overflow(format!(
                "numerators of {max_bits} bits at n = {dim}, L = {level}"
            )));
        }
        Ok(Self::assemble(dim, level, denom, units, cells))
    }

    /// `(f - c)⁺` for a constant `c` given in mean units.
    pub fn shifted_pos_part(&self, c: T) -> Result<Self> {
        let cells = (0..self.cells.len())
            .map(|i| (self.cell_units(i) - c).positive_part())
            .collect();
        Self::from_parts(self.dim, self.level, self.units, cells)
    }

    fn rebuild(&self, level: u32, cells: Vec<T>) -> Result<Self> {
        validate_shape(self.dim, level, cells.len())?;
        let units = if T::EXACT {
            checked_units(self.denom, level * self.dim as u32)?
        } else {
            1
        };
        Ok(Self::assemble(self.dim, level, self.denom, units, cells))
    }
}

struct GridShape {
    dim: usize,
    level: u32,
}

impl GridShape {
    fn new(dim: usize, level: u32) -> Self {
        GridShape { dim, level }
    }

    fn coarse_index(&self, idx: usize) -> usize {
        let side = 1usize << self.level;
        let tlen = 3 * side;
        let mut rest = idx;
        let t = rest % tlen;
        rest /= tlen;
        let mut coords = vec![0usize; self.dim - 1];
        for a in (0..self.dim - 1).rev() {
            coords[a] = rest % side;
            rest /= side;
        }
        let cside = side / 2;
        let mut out = 0usize;
        for c in coords {
            out = out * cside + c / 2;
        }
        out * (tlen / 2) + t / 2
    }
}

fn checked_units(denom: i128, leaf_log2: u32) -> Result<i128> {
    if denom <= 0 {
        return Err(Error::format("denom", "denominator must be positive"));
    }
    let bits = 128 - denom.leading_zeros();
    if bits + leaf_log2 > 110 {
        return Err(Error::Overflow(format!(
            "denominator {denom} at 2^{leaf_log2} cells per unit volume"
        )));
    }
    Ok(denom << leaf_log2)
}

impl GridFunction<f64> {
    pub fn from_f64(dim: usize, level: u32, values: Vec<f64>) -> Result<Self> {
        validate_shape(dim, level, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format("values", format!("non-finite value at cell {i}")));
        }
        Ok(Self::assemble(dim, level, 1, 1, values))
    }

    /// Exact rational cell values converted to fixed point.
    pub fn to_fixed(&self, denom: i128) -> Result<GridFunction<i128>> {
        let nums = self
            .cells
            .iter()
            .map(|v| (v * denom as f64).round() as i128)
            .collect();
        GridFunction::from_fixed(self.dim, self.level, denom, nums)
    }

    /// `mul * f + add`.
    pub fn affine(&self, mul: &BigRational, add: &BigRational) -> Result<Self> {
        let (m, a) = (
            crate::scalar::rational_to_f64(mul),
            crate::scalar::rational_to_f64(add),
        );
        Self::from_f64(self.dim, self.level, self.cells.iter().map(|v| m * v + a).collect())
    }
}

const NUM_HEADROOM_BITS: u32 = 124;

impl GridFunction<i128> {
    /// Integer numerators over a common positive denominator.
    pub fn from_fixed(dim: usize, level: u32, denom: i128, nums: Vec<i128>) -> Result<Self> {
        validate_shape(dim, level, nums.len())?;
        let leaf = level * dim as u32;
        let units = checked_units(denom, leaf)?;
        let max_bits = nums
            .iter()
            .map(|v| 128 - v.unsigned_abs().leading_zeros())
            .max()
            .unwrap_or(0);
        // positive-part sums reach |num| * 2^(2Ln + 2)
        if max_bits + 2 * leaf + 2 > NUM_HEADROOM_BITS {
            return Err(Error::Overflow(format!(
                "numerators of {max_bits} bits at n = {dim}, L = {level}"
            )));
        }
        Ok(Self::assemble(dim, level, denom, units, nums))
    }

    /// Divide numerators and denominator by their common factor.
    pub fn reduced(&self) -> Result<Self> {
        let g = gcd_all(self.cells.iter(), self.denom);
        if g == 1 {
            return Ok(self.clone());
        }
        Self::from_fixed(
            self.dim,
            self.level,
            self.denom / g,
            self.cells.iter().map(|v| v / g).collect(),
        )
    }

    pub fn to_f64_grid(&self) -> GridFunction<f64> {
        let d = self.denom as f64;
        GridFunction::<f64>::assemble(
            self.dim,
            self.level,
            1,
            1,
            self.cells.iter().map(|&v| v as f64 / d).collect(),
        )
    }

    /// `mul * f + add`, exactly.
    pub fn affine(&self, mul: &BigRational, add: &BigRational) -> Result<Self> {
        // (v/d)(a/b) + c/e = (v a e + c b d) / (d b e)
        let d = BigInt::from(self.denom);
        let (a, b) = (mul.numer(), mul.denom());
        let (c, e) = (add.numer(), add.denom());
        let den = &d * b * e;
        let offset = c * b * &d;
        let ae = a * e;
        let overflow = || Error::Overflow("affine map exceeds 128-bit numerators".into());
        let den = den.to_i128().ok_or_else(overflow)?;
        let nums = self
            .cells
            .iter()
            .map(|&v| (BigInt::from(v) * &ae + &offset).to_i128().ok_or_else(overflow))
            .collect::<Result<Vec<_>>>()?;
        Self::from_fixed(self.dim, self.level, den, nums)?.reduced()
    }

    pub fn numerators(&self) -> &[i128] {
        &self.cells
    }
}

impl AnyGrid {
    pub fn dim(&self) -> usize {
        with_grid!(self, g => g.dim())
    }

    pub fn level(&self) -> u32 {
        with_grid!(self, g => g.level())
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, AnyGrid::Fixed(_))
    }

    pub fn root(&self) -> DyadicCube {
        with_grid!(self, g => g.root())
    }

    pub fn mode(&self) -> GridMode {
        match self {
            AnyGrid::Float(_) => GridMode::F64,
            AnyGrid::Fixed(g) => GridMode::Fixed(g.denom()),
        }
    }

    /// Convert to another storage mode. Fixed-to-fixed conversion rounds
    /// each value to the nearest multiple of `1/d`, ties away from zero.
    pub fn into_mode(self, mode: GridMode) -> Result<AnyGrid> {
        Ok(match (self, mode) {
            (AnyGrid::Float(g), GridMode::F64) => AnyGrid::Float(g),
            (AnyGrid::Float(g), GridMode::Fixed(d)) => AnyGrid::Fixed(g.to_fixed(d)?),
            (AnyGrid::Fixed(g), GridMode::F64) => AnyGrid::Float(g.to_f64_grid()),
            (AnyGrid::Fixed(g), GridMode::Fixed(d)) if d == g.denom() => AnyGrid::Fixed(g),
            (AnyGrid::Fixed(g), GridMode::Fixed(d)) => {
                let old = g.denom();
                let overflow = || Error::Overflow(format!("rescaling to denominator {d}"));
                let nums = g
                    .cells()
                    .iter()
                    .map(|&v| {
                        let x = v.checked_mul(d).ok_or_else(overflow)?;
                        let (q, r) = (x.div_euclid(old), x.rem_euclid(old));
                        Ok(if 2 * r >= old { q + 1 } else { q })
                    })
                    .collect::<Result<Vec<_>>>()?;
                AnyGrid::Fixed(GridFunction::from_fixed(g.dim(), g.level(), d, nums)?)
            }
        })
    }

    pub fn affine(&self, mul: &BigRational, add: &BigRational) -> Result<AnyGrid> {
        Ok(match self {
            AnyGrid::Float(g) => AnyGrid::Float(g.affine(mul, add)?),
            AnyGrid::Fixed(g) => AnyGrid::Fixed(g.affine(mul, add)?),
        })
    }
}

impl From<GridFunction<f64>> for AnyGrid {
    fn from(g: GridFunction<f64>) -> Self {
        AnyGrid::Float(g)
    }
}

impl From<GridFunction<i128>> for AnyGrid {
    fn from(g: GridFunction<i128>) -> Self {
        AnyGrid::Fixed(g)
    }
}

/// Exact conversion of a mean-unit fixed-point value; used by oracles.
pub fn exact_value(g: &GridFunction<i128>, idx: usize) -> BigRational {
    BigRational::new(BigInt::from(g.cells()[idx]), BigInt::from(g.denom()))
}
