//! Deterministic test-function generators and the pinned corpus manifest.

use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_count, AnyGrid, GridFunction, GridMode};
use crate::scalar::{parse_rational, rational_to_f64};

/// Upper end of the random value range, in whole units.
const VALUE_SPAN: i128 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kind {
    Constant { value: String },
    UniformRandom,
    DyadicMartingale,
    TimeStep,
    OneSidedPower { alpha: String },
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::Constant { .. } => "constant",
            Kind::UniformRandom => "uniform-random",
            Kind::DyadicMartingale => "dyadic-martingale",
            Kind::TimeStep => "time-step",
            Kind::OneSidedPower { .. } => "one-sided-power",
        }
    }
}

/// Everything that determines a generated grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: Kind,
    pub n: usize,
    #[serde(rename = "L")]
    pub level: u32,
    #[serde(default)]
    pub seed: u64,
    pub mode: GridMode,
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<AnyGrid> {
        gen(self)
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

/// Build the grid a spec describes. Fixed-mode output keeps the declared
/// denominator.
pub fn gen(spec: &GeneratorSpec) -> Result<AnyGrid> {
    let (n, level) = (spec.n, spec.level);
    if n == 0 || n > crate::cube::MAX_DIM || level as usize * n > 40 {
        return Err(invalid(format!("unsupported shape n = {n}, L = {level}")));
    }
    let len = cell_count(n, level);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.mode {
        GridMode::Fixed(d) => {
            let nums = fixed_values(spec, d, len, &mut rng)?;
            Ok(AnyGrid::Fixed(GridFunction::from_fixed(n, level, d, nums)?))
        }
        GridMode::F64 => {
            let vals = float_values(spec, len, &mut rng)?;
            Ok(AnyGrid::Float(GridFunction::from_f64(n, level, vals)?))
        }
    }
}

fn fixed_values(spec: &GeneratorSpec, d: i128, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<i128>> {
    let top = VALUE_SPAN.checked_mul(d).ok_or_else(|| invalid("denominator too large"))?;
    Ok(match &spec.kind {
        Kind::Constant { value } => {
            let c = parse_rational(value)? * BigRational::from_integer(BigInt::from(d));
            if !c.is_integer() {
                return Err(invalid(format!("constant {value} is not a multiple of 1/{d}")));
            }
            let c = c.to_integer().to_i128().ok_or_else(|| invalid("constant too large"))?;
            vec![c; len]
        }
        Kind::UniformRandom => (0..len).map(|_| rng.gen_range(0..=top)).collect(),
        Kind::DyadicMartingale => martingale(spec, len, rng, |r, v: i128| {
            let h = v / 2;
            r.gen_range(-h..=h)
        }, |r| r.gen_range(0..=top / 2)),
        Kind::TimeStep => {
            let (t_star, hi, lo, rising) = step_params(spec, rng, |r| r.gen_range(0..=top));
            step_cells(spec, len, t_star, if rising { (lo, hi) } else { (hi, lo) })
        }
        Kind::OneSidedPower { alpha } => {
            let a = power_alpha(alpha)?;
            power_profile(spec, len, a)
                .into_iter()
                .map(|x| (x * d as f64).round() as i128)
                .collect()
        }
    })
}

fn float_values(spec: &GeneratorSpec, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let top = VALUE_SPAN as f64;
    Ok(match &spec.kind {
        Kind::Constant { value } => vec![rational_to_f64(&parse_rational(value)?); len],
        Kind::UniformRandom => (0..len).map(|_| rng.gen_range(0.0..=top)).collect(),
        Kind::DyadicMartingale => martingale(spec, len, rng, |r, v: f64| {
            let h = v / 2.0;
            if h > 0.0 {
                r.gen_range(-h..=h)
            } else {
                0.0
            }
        }, |r| r.gen_range(0.0..=top / 2.0)),
        Kind::TimeStep => {
            let (t_star, hi, lo, rising) = step_params(spec, rng, |r| r.gen_range(0.0..=top));
            step_cells(spec, len, t_star, if rising { (lo, hi) } else { (hi, lo) })
        }
        Kind::OneSidedPower { alpha } => power_profile(spec, len, power_alpha(alpha)?),
    })
}

fn power_alpha(alpha: &str) -> Result<f64> {
    let a = parse_rational(alpha)?;
    if !a.is_positive() || a >= BigRational::one() {
        return Err(invalid(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok(rational_to_f64(&a))
}

/// Coordinates (spatial..., time) of a flat index.
fn coords(n: usize, level: u32, mut idx: usize) -> Vec<usize> {
    let side = 1usize << level;
    let mut c = vec![0usize; n];
    c[n - 1] = idx % (3 * side);
    idx /= 3 * side;
    for a in (0..n - 1).rev() {
        c[a] = idx % side;
        idx /= side;
    }
    c
}

/// Values `t_c^-α` at time-cell centers, constant in space.
fn power_profile(spec: &GeneratorSpec, len: usize, alpha: f64) -> Vec<f64> {
    let side = (1u64 << spec.level) as f64;
    (0..len)
        .map(|i| {
            let t = coords(spec.n, spec.level, i)[spec.n - 1] as f64;
            ((t + 0.5) / side).powf(-alpha)
        })
        .collect()
}

fn step_params<V>(
    spec: &GeneratorSpec,
    rng: &mut ChaCha8Rng,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> V,
) -> (usize, V, V, bool) {
    let tlen = 3usize << spec.level;
    let t_star = rng.gen_range(1..tlen);
    let hi = draw(rng);
    let lo = draw(rng);
    let rising = rng.gen_bool(0.5);
    (t_star, hi, lo, rising)
}

/// `before` on time cells `< t_star`, `after` from there on.
fn step_cells<V: Copy>(spec: &GeneratorSpec, len: usize, t_star: usize, (before, after): (V, V)) -> Vec<V> {
    (0..len)
        .map(|i| {
            if coords(spec.n, spec.level, i)[spec.n - 1] < t_star {
                before
            } else {
                after
            }
        })
        .collect()
}

/// Each of the three unit blocks starts from a random value; every split
/// hands the two children of each time pair `v + δ` and `v - δ` with
/// `|δ| <= v/2`, so pairs average to the parent and values stay nonnegative.
fn martingale<V>(
    spec: &GeneratorSpec,
    len: usize,
    rng: &mut ChaCha8Rng,
    mut jitter: impl FnMut(&mut ChaCha8Rng, V) -> V,
    mut start: impl FnMut(&mut ChaCha8Rng) -> V,
) -> Vec<V>
where
    V: Copy + Default + std::ops::Add<Output = V> + std::ops::Sub<Output = V>,
{
    let (n, level) = (spec.n, spec.level);
    let side = 1usize << level;
    let mut out = vec![V::default(); len];
    // stack of (level, spatial origin in leaf cells, time origin in leaf cells, value)
    let mut stack: Vec<(u32, Vec<usize>, usize, V)> = (0..3)
        .map(|b| (0, vec![0; n - 1], b * side, start(rng)))
        .collect();
    stack.reverse();
    while let Some((k, sp, t0, v)) = stack.pop() {
        if k == level {
            let mut idx = 0usize;
            for &s in &sp {
                idx = idx * side + s;
            }
            out[idx * 3 * side + t0] = v;
            continue;
        }
        let half = side >> (k + 1);
        let fan = 1usize << n;
        let mut kids = Vec::with_capacity(fan);
        // children come in pairs differing in the time bit
        for pair in 0..fan / 2 {
            let delta = jitter(rng, v);
            for (tbit, val) in [(0usize, v + delta), (1usize, v - delta)] {
                let c = pair * 2 + tbit;
                let mut s = sp.clone();
                for (a, x) in s.iter_mut().enumerate() {
                    if (c >> (n - 1 - a)) & 1 == 1 {
                        *x += half;
                    }
                }
                kids.push((k + 1, s, t0 + tbit * half, val));
            }
        }
        kids.reverse();
        stack.extend(kids);
    }
    out
}

/// An ordered list of generator specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<GeneratorSpec>,
}

const PINNED: &str = include_str!("../data/manifest.json");

impl Manifest {
    /// The fixed 50-entry acceptance corpus.
    pub fn pinned() -> Manifest {
        serde_json::from_str(PINNED).expect("bundled manifest is valid")
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))
    }

    /// The pinned layout for `count` entries: seed `i`, kind cycling over
    /// the four non-constant generators, `n` alternating every four entries
    /// and `L` stepping through 3, 4, 5 every eight.
    pub fn standard(count: usize, mode: GridMode, alpha: &str) -> Manifest {
        let entries = (0..count)
            .map(|i| {
                let kind = match i % 4 {
                    0 => Kind::UniformRandom,
                    1 => Kind::DyadicMartingale,
                    2 => Kind::TimeStep,
                    _ => Kind::OneSidedPower {
                        alpha: alpha.to_string(),
                    },
                };
                GeneratorSpec {
                    kind,
                    n: 1 + (i / 4) % 2,
                    level: 3 + ((i / 8) % 3) as u32,
                    seed: i as u64,
                    mode,
                }
            })
            .collect();
        Manifest { entries }
    }
}

/// True when every value is nonnegative.
pub fn is_nonnegative(g: &AnyGrid) -> bool {
    match g {
        AnyGrid::Fixed(g) => g.cells().iter().all(|v| !v.is_negative()),
        AnyGrid::Float(g) => g.cells().iter().all(|v| *v >= 0.0 || v.is_zero()),
    }
}
