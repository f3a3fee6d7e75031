//! Good-λ lemma and weak-type theorem checks on a single grid function.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::cube::DyadicCube;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::maximal::{decompose_unchecked, descend, leaf_index, maximal_function};
use crate::maximal::{MaximalField, Variant};
use crate::report::VerificationReport;
use crate::scalar::{f64_to_rational, pow_rational, rational_to_f64, Exponent, Sample, Scalar};
use crate::seminorm::{jnp_plus_dyadic, SeminormResult};

/// Relative slack for comparisons that pass through a floating `p`-th root.
pub const FLOAT_TOL: f64 = 1e-9;

/// Parameters of the good-λ inequality.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaParams {
    pub dim: usize,
    pub p: Exponent,
    #[serde(serialize_with = "ser_rational")]
    pub q: BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub b: BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub a: BigRational,
}

fn ser_rational<S: serde::Serializer>(
    r: &BigRational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    Scalar::Exact(r.clone()).serialize(s)
}

impl LemmaParams {
    /// Requires `0 < b < 2^-n`; `a = 4 / (1 - 2^n b)`.
    pub fn new(dim: usize, p: Exponent, b: BigRational) -> Result<Self> {
        let spread = BigRational::from_integer(BigInt::one() << dim) * &b;
        if !b.is_positive() || spread >= BigRational::one() {
            return Err(Error::InvalidParams(format!(
                "b = {b} must lie in (0, 2^-{dim})"
            )));
        }
        let a = BigRational::from_integer(BigInt::from(4)) / (BigRational::one() - spread);
        let q = p.conjugate();
        Ok(LemmaParams { dim, p, q, b, a })
    }

    /// `1 - 2^n b`.
    pub fn shrink(&self) -> BigRational {
        BigRational::one() - BigRational::from_integer(BigInt::one() << self.dim) * &self.b
    }
}

/// `x <= y^(1/p)` for nonnegative `x`, `y`, decided as `x^r <= y^s` with `p = r/s`.
fn le_root(x: &BigRational, p: &Exponent, y: &BigRational) -> Option<bool> {
    let (r, s) = (p.ratio().numer().to_u32()?, p.ratio().denom().to_u32()?);
    if r > 512 {
        return None;
    }
    Some(pow_rational(x, r) <= pow_rational(y, s))
}

fn measure(count: usize, leaf_log2: u32) -> BigRational {
    BigRational::new(BigInt::from(count), BigInt::one() << leaf_log2)
}

/// Everything the lemma and theorem need that does not depend on `λ` or `b`.
///
/// `g = (f - f_{root⁺²})⁺` is materialized as its own grid; `E(λ)` is the
/// superlevel set of its grid maximal field.
pub struct LemmaContext<'a, T: Sample> {
    pub f: &'a GridFunction<T>,
    pub root: DyadicCube,
    pub p: Exponent,
    pub g: GridFunction<T>,
    pub field: MaximalField<T>,
    pub field_aug: MaximalField<T>,
    pub seminorm: SeminormResult,
}

impl<'a, T: Sample> LemmaContext<'a, T> {
    pub fn new(f: &'a GridFunction<T>, root: &DyadicCube, p: &Exponent) -> Result<Self> {
        f.check_root(root)?;
        let g = f.shifted_pos_part(f.mean(&root.forward2()?))?;
        let field = maximal_function(&g, root, Variant::Grid)?;
        let field_aug = maximal_function(&g, root, Variant::Augmented)?;
        let seminorm = jnp_plus_dyadic(f, root, p)?;
        Ok(LemmaContext {
            f,
            root: *root,
            p: p.clone(),
            g,
            field,
            field_aug,
            seminorm,
        })
    }

    /// `K⁺`, the dyadic JN_p⁺ seminorm of `f` on the root.
    pub fn k_plus(&self) -> f64 {
        self.seminorm.value
    }

    /// `(K⁺)^p`.
    pub fn weight(&self) -> &Scalar {
        &self.seminorm.witness.weight
    }

    fn leaf_log2(&self) -> u32 {
        self.g.leaf_log2()
    }

    /// `|E(λ)|` for the grid maximal field.
    pub fn e_grid(&self, lambda: &BigRational) -> BigRational {
        let c = self.field.count_above(self.g.threshold(lambda, 0));
        measure(c, self.leaf_log2())
    }

    /// `|E(λ)|` for the augmented maximal field.
    pub fn e_aug(&self, lambda: &BigRational) -> BigRational {
        let c = self.field_aug.count_above(self.g.threshold(lambda, 0));
        measure(c, self.leaf_log2())
    }

    /// `bλ` is at least the mean of `g` over `root⁺`.
    pub fn admissible(&self, b_lambda: &BigRational) -> bool {
        self.g.mean(&self.root.shifted(1)) <= self.g.threshold(b_lambda, 0)
    }

    fn check_params(&self, params: &LemmaParams) -> Result<()> {
        if params.p != self.p || params.dim != self.f.dim() {
            return Err(Error::InvalidParams(format!(
                "parameters for n = {}, p = {} do not match n = {}, p = {}",
                params.dim,
                params.p,
                self.f.dim(),
                self.p
            )));
        }
        Ok(())
    }

    /// Reports `Lemma`, `p6` and `p8` at one `λ`.
    pub fn good_lambda(
        &self,
        params: &LemmaParams,
        lambda: &BigRational,
    ) -> Result<Vec<VerificationReport>> {
        self.check_params(params)?;
        if !lambda.is_positive() {
            return Err(Error::InvalidParams(format!("λ = {lambda} must be positive")));
        }
        let exact = T::EXACT;
        let b_lambda = &params.b * lambda;
        let e_lo = self.e_grid(lambda);
        let e_hi = self.e_grid(&b_lambda);
        if !self.admissible(&b_lambda) {
            let lhs = Some(self.g.real(self.g.mean(&self.root.shifted(1)), 0));
            let rhs = Some(Scalar::Exact(b_lambda));
            return Ok(vec![
                VerificationReport::inadmissible("Lemma", lhs, rhs, exact),
                VerificationReport::inadmissible("p6", None, None, exact),
                VerificationReport::inadmissible("p8", None, None, exact),
            ]);
        }
        let mut out = vec![self.lemma_inequality(params, lambda, e_lo, e_hi)];
        out.extend(self.inclusion_checks(params, lambda, &b_lambda));
        Ok(out)
    }

    fn lemma_inequality(
        &self,
        params: &LemmaParams,
        lambda: &BigRational,
        e_lo: BigRational,
        e_hi: BigRational,
    ) -> VerificationReport {
        let q = rational_to_f64(&params.q);
        let rhs = rational_to_f64(&params.a) * self.k_plus() / rational_to_f64(lambda)
            * rational_to_f64(&e_hi).powf(1.0 / q);
        let lhs = Scalar::Exact(e_lo.clone());
        // |E(λ)| λ / a <= (W |E(bλ)|^(p-1))^(1/p), with W = (K⁺)^p
        let exact_verdict = self.weight().as_exact().and_then(|w| {
            let r = params.p.ratio();
            let (num, den) = (r.numer().to_u32()?, r.denom().to_u32()?);
            if num > 512 {
                return None;
            }
            let x = &e_lo * lambda / &params.a;
            Some(pow_rational(&x, num) <= pow_rational(w, den) * pow_rational(&e_hi, num - den))
        });
        match exact_verdict {
            Some(pass) => VerificationReport::new("Lemma", lhs, Scalar::Float(rhs), pass)
                .with_exact(true),
            None => {
                let rhs = Scalar::Float(rhs);
                let pass = lhs.le_tol(&rhs, FLOAT_TOL);
                VerificationReport::new("Lemma", lhs, rhs, pass)
            }
        }
    }

    /// Cellwise (p8) and the set identity (p6) over the stopping cubes of
    /// the `bλ` decomposition of `g`.
    fn inclusion_checks(
        &self,
        params: &LemmaParams,
        lambda: &BigRational,
        b_lambda: &BigRational,
    ) -> Vec<VerificationReport> {
        let (f, g) = (self.f, &self.g);
        let dec = decompose_unchecked(g, &self.root, b_lambda);
        let g_thr = g.threshold(lambda, 0);
        let mu = params.shrink() * lambda;
        let mut union = Vec::new();
        let mut violations = 0usize;
        let mut worst: Option<Scalar> = None;
        for qj in &dec.stopping {
            let top = f.cells_log2(qj);
            let ext = if T::EXACT { top } else { 0 };
            let gj_thr = f.threshold(&mu, ext);
            // the cube Q_j⁺² sits inside the extended domain because Q_j ⊊ root
            let reference = f.mean(&qj.shifted(2));
            let mut lowest: Option<T> = None;
            descend(f, *qj, (false, None::<T>), |q, (hit, running)| {
                let hit = hit || g.mean(&q.shifted(1)) > g_thr;
                let s = f.pos_part_sum(&q.shifted(1), 1, reference);
                let m = T::mean_of_sum(s, f.cells_log2(q), top);
                let v = running.map_or(m, |r: T| r.larger(m));
                let running = Some(v);
                if q.level() == f.level() && hit {
                    union.push(leaf_index(f, q));
                    if !exceeds(v, gj_thr) {
                        violations += 1;
                    }
                    lowest = Some(match lowest {
                        Some(l) if l < v => l,
                        _ => v,
                    });
                }
                Some((hit, running))
            });
            if let Some(l) = lowest {
                let s = f.real(l, ext);
                worst = Some(match worst {
                    Some(w) if w < s => w,
                    _ => s,
                });
            }
        }
        union.sort_unstable();
        let target = self.field.superlevel(g_thr);
        let exact = T::EXACT;
        let p6 = VerificationReport::new(
            "p6",
            Scalar::Exact(measure(target.len(), self.leaf_log2())),
            Scalar::Exact(measure(union.len(), self.leaf_log2())),
            union == target,
        )
        .with_exact(exact);
        let p8 = match worst {
            None => VerificationReport::vacuous("p8", exact),
            Some(w) => {
                VerificationReport::new("p8", Scalar::Exact(mu), w, violations == 0).with_exact(exact)
            }
        };
        vec![p6, p8]
    }
}

/// Strict `x > thr`; float grids get a relative slack against rounding.
fn exceeds<T: Sample>(x: T, thr: T) -> bool {
    if T::EXACT {
        x > thr
    } else {
        let (x, t) = (x.to_f64(), thr.to_f64());
        x > t - FLOAT_TOL * t.abs()
    }
}

/// Good-λ lemma at one level: reports `Lemma`, `p6` and `p8`.
pub fn good_lambda_check<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    params: &LemmaParams,
    lambda: &BigRational,
) -> Result<Vec<VerificationReport>> {
    LemmaContext::new(f, root, &params.p)?.good_lambda(params, lambda)
}

/// `λ₀ = 2K⁺ / (b |root|^(1/p))`.
pub fn lambda0_from(k_plus: f64, root: &DyadicCube, params: &LemmaParams) -> f64 {
    let vol = rational_to_f64(&root.volume());
    2.0 * k_plus / (rational_to_f64(&params.b) * vol.powf(1.0 / params.p.to_f64()))
}

pub fn lambda0<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    params: &LemmaParams,
) -> Result<f64> {
    let k = jnp_plus_dyadic(f, root, &params.p)?.value;
    Ok(lambda0_from(k, root, params))
}

const PROOF_CONSTANT_MAX_TERMS: u32 = 1_000_000;

/// Constant of the weak-type bound `|E(λ)| <= C (K⁺/λ)^p` produced by
/// iterating the lemma, including the small-`λ` estimate and the `N = 0`
/// rung of the ladder.
pub fn proof_constant(dim: usize, p: &Exponent, b: &BigRational) -> Result<f64> {
    let params = LemmaParams::new(dim, p.clone(), b.clone())?;
    let pf = p.to_f64();
    let r = 1.0 / rational_to_f64(&params.q);
    let (ln_a, ln_b) = (rational_to_f64(&params.a).ln(), rational_to_f64(b).ln());
    let ln2 = std::f64::consts::LN_2;
    let small = pf * (2.0f64.ln() - ln_b);
    let limit = pf * ln_a - pf * pf * ln_b;
    let mut best = small.max(limit);
    // S_N = Σ_{k=1}^N k r^(k-1)
    let (mut s, mut rn) = (0.0f64, 1.0f64);
    let mut prev: Option<f64> = None;
    for n in 0..PROOF_CONSTANT_MAX_TERMS {
        if n > 0 {
            s += n as f64 * rn;
            rn *= r;
        }
        let t = (pf - pf * rn) * ln_a + (-s + rn - (n as f64 + 2.0) * pf * rn) * ln_b
            + (1.0 + pf) * rn * ln2;
        best = best.max(t);
        if let Some(pv) = prev {
            if (t - pv).abs() < 1e-12 * t.abs().max(1.0) {
                break;
            }
        }
        prev = Some(t);
    }
    Ok(best.exp())
}

/// One `λ` of a theorem sweep.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremRecord {
    pub lambda: Scalar,
    pub e_grid: Scalar,
    pub e_aug: Scalar,
    pub dist: Scalar,
    /// `C_proof (K⁺/λ)^p`.
    pub bound: Scalar,
    /// `(2/b)^p (K⁺/λ)^p`, recorded for `λ <= λ₀`.
    pub trivial_bound: Option<Scalar>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremRun {
    pub root: DyadicCube,
    pub params: LemmaParams,
    pub k_plus: f64,
    pub lambda0: f64,
    pub c_proof: f64,
    pub c_empirical_grid: f64,
    pub c_empirical_aug: f64,
    pub records: Vec<TheoremRecord>,
    pub reports: Vec<VerificationReport>,
}

impl TheoremRun {
    pub fn ok(&self) -> bool {
        self.reports.iter().all(VerificationReport::ok)
    }
}

/// `λ^p |E| / (K⁺)^p`, with `0/0 = 0`.
fn empirical_ratio(lambda: f64, e: f64, w: f64, p: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else if w == 0.0 {
        f64::INFINITY
    } else {
        (p * lambda.ln() + e.ln() - w.ln()).exp()
    }
}

pub fn theorem_check<T: Sample>(
    f: &GridFunction<T>,
    root: &DyadicCube,
    params: &LemmaParams,
    lambdas: &[BigRational],
) -> Result<TheoremRun> {
    let ctx = LemmaContext::new(f, root, &params.p)?;
    theorem_check_with(&ctx, params, lambdas)
}

/// Theorem sweep reusing a prepared context.
pub fn theorem_check_with<T: Sample>(
    ctx: &LemmaContext<'_, T>,
    params: &LemmaParams,
    lambdas: &[BigRational],
) -> Result<TheoremRun> {
    ctx.check_params(params)?;
    if let Some(l) = lambdas.iter().find(|l| !l.is_positive()) {
        return Err(Error::InvalidParams(format!("λ = {l} must be positive")));
    }
    let (f, root) = (ctx.f, &ctx.root);
    let pf = params.p.to_f64();
    let k = ctx.k_plus();
    let w = ctx.weight().to_f64();
    let c_proof = proof_constant(params.dim, &params.p, &params.b)?;
    let lambda0 = lambda0_from(k, root, params);
    let vol = root.volume();
    let small = (2.0 / rational_to_f64(&params.b)).powf(pf);

    let mut records = Vec::with_capacity(lambdas.len());
    let (mut c_grid, mut c_aug) = (0.0f64, 0.0f64);
    let mut dist_worst: Option<(BigRational, BigRational, BigRational)> = None;
    let mut trivial_worst: Option<f64> = None;
    let mut all_grid = true;
    let mut all_dist = true;
    for lambda in lambdas {
        let lf = rational_to_f64(lambda);
        let e_grid = ctx.e_grid(lambda);
        let e_aug = ctx.e_aug(lambda);
        let dist = match f.distribution_measure(root, lambda)? {
            Scalar::Exact(r) => r,
            Scalar::Float(x) => f64_to_rational(x)?,
        };
        let scale = (w.ln() - pf * lf.ln()).exp();
        let bound = c_proof * scale;
        let eg = rational_to_f64(&e_grid);
        let ratio = empirical_ratio(lf, eg, w, pf);
        c_grid = c_grid.max(ratio);
        c_aug = c_aug.max(empirical_ratio(lf, rational_to_f64(&e_aug), w, pf));
        let grid_ok = ratio <= c_proof * (1.0 + FLOAT_TOL);
        let dist_ok = dist <= e_aug;
        all_grid &= grid_ok;
        all_dist &= dist_ok;
        let gap = &dist - &e_aug;
        if dist_worst.as_ref().is_none_or(|(g, _, _)| gap > *g) {
            dist_worst = Some((gap, dist.clone(), e_aug.clone()));
        }
        let trivial_bound = (lf <= lambda0).then_some(small * scale);
        if let Some(t) = trivial_bound {
            trivial_worst = Some(trivial_worst.map_or(t, |m| m.min(t)));
        }
        records.push(TheoremRecord {
            lambda: Scalar::Exact(lambda.clone()),
            e_grid: Scalar::Exact(e_grid),
            e_aug: Scalar::Exact(e_aug),
            dist: Scalar::Exact(dist),
            bound: Scalar::Float(bound),
            trivial_bound: trivial_bound.map(Scalar::Float),
            pass: grid_ok && dist_ok,
        });
    }

    let mut reports = vec![p11_report(ctx, params)];
    reports.push(
        VerificationReport::new(
            "Theorem",
            Scalar::Float(c_grid),
            Scalar::Float(c_proof),
            all_grid,
        )
        .with_exact(false),
    );
    reports.push(match dist_worst {
        Some((_, d, e)) => {
            VerificationReport::new("Theorem-distribution", Scalar::Exact(d), Scalar::Exact(e), all_dist)
                .with_exact(T::EXACT)
        }
        None => VerificationReport::vacuous("Theorem-distribution", T::EXACT),
    });
    reports.push(match trivial_worst {
        Some(t) => {
            let vf = rational_to_f64(&vol);
            let pass = vf <= t * (1.0 + FLOAT_TOL);
            VerificationReport::new("trivial", Scalar::Exact(vol), Scalar::Float(t), pass)
        }
        None => VerificationReport::vacuous("trivial", false),
    });

    Ok(TheoremRun {
        root: *root,
        params: params.clone(),
        k_plus: k,
        lambda0,
        c_proof,
        c_empirical_grid: c_grid,
        c_empirical_aug: c_aug,
        records,
        reports,
    })
}

/// `(1/|root|) ∫_{root ∪ root⁺} g <= 2K⁺ / |root|^(1/p)`.
fn p11_report<T: Sample>(ctx: &LemmaContext<'_, T>, params: &LemmaParams) -> VerificationReport {
    let vol = ctx.root.volume();
    let lhs = ctx.g.integral(&ctx.root, 2).div(&Scalar::Exact(vol.clone()));
    let rhs = 2.0 * ctx.k_plus() / rational_to_f64(&vol).powf(1.0 / params.p.to_f64());
    let two = BigRational::from_integer(BigInt::from(2));
    // L^p |root| <= 2^p W
    let exact = match (lhs.as_exact(), ctx.weight().as_exact()) {
        (Some(l), Some(w)) => {
            let x = l / &two;
            le_root(&x, &params.p, &(w / &vol))
        }
        _ => None,
    };
    match exact {
        Some(pass) => VerificationReport::new("p11", lhs, Scalar::Float(rhs), pass).with_exact(true),
        None => {
            let rhs = Scalar::Float(rhs);
            let pass = lhs.le_tol(&rhs, FLOAT_TOL);
            VerificationReport::new("p11", lhs, rhs, pass)
        }
    }
}

/// Number of log-spaced levels in the default sweep.
pub const DEFAULT_GRID_POINTS: usize = 64;
/// Rungs `b^-k λ₀` added to the default sweep.
pub const DEFAULT_LADDER: i32 = 8;

/// Default sweep: 64 log-spaced levels from `(max f - min f) 2^-10` to
/// `max g + 1`, plus `λ₀` and `b^-k λ₀` for `k = 1..=8`. Sorted, distinct,
/// positive, exact.
pub fn default_lambda_grid<T: Sample>(ctx: &LemmaContext<'_, T>, params: &LemmaParams) -> Vec<BigRational> {
    let f = ctx.f;
    let range = f.max_cell().to_f64() - f.min_cell().to_f64();
    let hi = ctx.g.max_cell().to_f64() + 1.0;
    let lo = if range > 0.0 { range / 1024.0 } else { hi / 1024.0 };
    let mut out: Vec<f64> = (0..DEFAULT_GRID_POINTS)
        .map(|i| {
            let t = i as f64 / (DEFAULT_GRID_POINTS - 1) as f64;
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect();
    let l0 = lambda0_from(ctx.k_plus(), &ctx.root, params);
    let b = rational_to_f64(&params.b);
    out.extend((0..=DEFAULT_LADDER).map(|k| l0 * b.powi(-k)));
    let mut grid: Vec<BigRational> = out
        .into_iter()
        .filter(|x| x.is_finite() && *x > 0.0)
        .filter_map(|x| f64_to_rational(x).ok())
        .collect();
    grid.sort();
    grid.dedup();
    grid
}

/// The smallest `λ` that is admissible for the lemma, `f_{root⁺}(g) / b`.
pub fn admissibility_floor<T: Sample>(ctx: &LemmaContext<'_, T>, params: &LemmaParams) -> Scalar {
    let m = ctx.g.real(ctx.g.mean(&ctx.root.shifted(1)), 0);
    m.div(&Scalar::Exact(params.b.clone()))
}

/// Whether `x` is zero, for either representation.
pub fn is_zero(x: &Scalar) -> bool {
    match x {
        Scalar::Exact(r) => r.is_zero(),
        Scalar::Float(v) => *v == 0.0,
    }
}
