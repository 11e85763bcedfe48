//! Jets on a closed set and the total extension operator.
//!
//! A jet of order `m` assigns to every multi-index `kbar` with `|kbar| <= m`
//! a function `f^(kbar)` on the closed set `F`, together with a remainder
//! constant `M` controlling the Taylor-style compatibility between the
//! components: `|f^(kbar)(x) - P^kbar_y(x)| <= M d(x,y)^(m-|kbar|+1)`, where
//! `P^kbar_y` is the Taylor field assembled from the components at `y`.
//! The extension `g` agrees with `f^(0)` on `F`, is `C^m` on all of `R^n`,
//! is smooth off `F`, and satisfies `d_kbar g = f^(kbar)` on `F`.
//!
//! Off the set, `g(x) = sum_Q P_{r_Q}(x) phistar_Q(x)` over the cubes whose
//! enlargements contain `x`, with `r_Q` a certified approximate projection
//! of `Q` onto `F`. Derivatives follow by the product rule. On or near the
//! set, values are obtained from certified balls: a point `y'` of the dense
//! sequence of `F` together with a radius over which the oscillation of the
//! (inductively truncated) extension is provably below the target precision.
//! Every evaluation interleaves the two strategies fairly, so it terminates
//! for every input without ever deciding membership in `F`:
//!
//! * branch "outside": certify `x` off `F`, then evaluate the explicit sum;
//! * branch "via the set": find a dense point `y'` with `x` in `B(y', delta)`
//!   and gates (exact rational comparisons, strict) certifying that the
//!   jet value at `y'` approximates the extension on the whole ball.
//!
//! The gate constants are certified upper bounds built from the remainder
//! constant, the derivative bounds of the normalized bumps, and the count
//! bound on covering candidates; they shrink with `delta`, so the search
//! always terminates. All schedules are deterministic: equal queries return
//! bit-identical answers.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::bump::{bprime, phi_star_batch_encl, Engine};
use crate::closedset::TotalClosedSet;
use crate::cubes::{gx_size_bound, Decomposition};
use crate::error::{Error, Result};
use crate::exact::{
    dist_encl, parse_ratio, ratio_to_dyadic, sqrtn_upper, CPoint, DyInterval, Dyadic, PointKey,
    Round,
};

/// Hard ceiling on the number of interleave stages of an evaluation. The
/// searches below are provably finite for every input, so reaching the
/// ceiling indicates corrupted jet data; we fail loudly instead of looping.
const STAGE_CEILING: usize = 1 << 20;

// ---------------------------------------------------------------------------
// Multi-index bookkeeping
// ---------------------------------------------------------------------------

/// Total order `|kbar|` of a multi-index.
pub fn mi_order(kbar: &[u32]) -> u32 {
    kbar.iter().sum()
}

pub(crate) fn mi_add(a: &[u32], b: &[u32]) -> Vec<u32> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(crate) fn mi_sub(a: &[u32], b: &[u32]) -> Option<Vec<u32>> {
    a.iter().zip(b).map(|(x, y)| x.checked_sub(*y)).collect()
}

/// All multi-indices of dimension `n` with total order exactly `total`,
/// in lexicographic order.
pub fn multi_indices_exact(n: usize, total: u32) -> Vec<Vec<u32>> {
    assert!(n > 0, "zero-dimensional multi-index");
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    fn go(cur: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for v in (0..=left).rev() {
            cur[pos] = v;
            go(cur, pos + 1, left - v, out);
        }
        cur[pos] = 0;
    }
    go(&mut cur, 0, total, &mut out);
    out
}

/// All multi-indices of dimension `n` with total order at most `total`,
/// grouped by increasing order.
pub fn multi_indices_upto(n: usize, total: u32) -> Vec<Vec<u32>> {
    (0..=total).flat_map(|t| multi_indices_exact(n, t)).collect()
}

/// All multi-indices `lbar <= kbar` componentwise, lexicographic.
pub fn sub_indices(kbar: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &k in kbar {
        let mut next = Vec::with_capacity(out.len() * (k as usize + 1));
        for prefix in &out {
            for v in 0..=k {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

pub(crate) fn factorial(k: u32) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, t| acc * t)
}

/// Product of componentwise factorials `kbar!`.
pub fn mi_factorial(kbar: &[u32]) -> BigInt {
    kbar.iter().map(|&k| factorial(k)).fold(BigInt::one(), |a, b| a * b)
}

pub(crate) fn binom(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut c = BigInt::one();
    for j in 0..k {
        c = c * (n - j) / (j + 1);
    }
    c
}

/// Product of componentwise binomial coefficients `C(kbar, lbar)`.
pub fn mi_binom(kbar: &[u32], lbar: &[u32]) -> BigInt {
    kbar.iter().zip(lbar).map(|(&k, &l)| binom(k, l)).fold(BigInt::one(), |a, b| a * b)
}

/// Number of multi-indices of dimension `n` with total order exactly `j`.
pub fn count_at_order(n: usize, j: u32) -> BigInt {
    binom(j + n as u32 - 1, n as u32 - 1)
}

fn ratio_pow2(e: i64) -> Ratio<BigInt> {
    Dyadic::pow2(e).to_ratio()
}

/// Upper bound on `n^(t/2)` as a dyadic.
fn n_pow_half_upper(n: usize, t: u32) -> Dyadic {
    let whole = Dyadic::from_bigint(BigInt::from(n).pow(t / 2));
    if t % 2 == 0 {
        whole
    } else {
        whole.mul(&sqrtn_upper(n as u64, 24))
    }
}

// ---------------------------------------------------------------------------
// Functions with total information on a closed set
// ---------------------------------------------------------------------------

type EvalFn = dyn Fn(&CPoint, i64) -> Dyadic + Send + Sync;
type ModulusFn = dyn Fn(&Dyadic, &Dyadic) -> Dyadic + Send + Sync;

/// A real function on a represented closed set, given by an evaluation
/// oracle and a modulus of uniform continuity.
///
/// * `eval(x, i)` must return a dyadic within `2^-i` of `f(x)` for `x` in
///   the set; its behavior elsewhere is unspecified.
/// * `modulus(r, eps)` must return a positive `delta` such that any two set
///   points of norm at most `r` and at distance at most `delta` have values
///   within `eps`; it must shrink (weakly) when `eps` shrinks or `r` grows.
///
/// The modulus is the minimal honest datum that makes ball certification
/// total: it turns one evaluation at a dense point into a value enclosure
/// over a whole ball.
#[derive(Clone)]
pub struct FnOnF {
    set: TotalClosedSet,
    eval: Arc<EvalFn>,
    modulus: Arc<ModulusFn>,
}

impl FnOnF {
    pub fn new(
        set: TotalClosedSet,
        eval: impl Fn(&CPoint, i64) -> Dyadic + Send + Sync + 'static,
        modulus: impl Fn(&Dyadic, &Dyadic) -> Dyadic + Send + Sync + 'static,
    ) -> FnOnF {
        FnOnF { set, eval: Arc::new(eval), modulus: Arc::new(modulus) }
    }

    /// The constant function `value` with the trivial modulus.
    pub fn constant(set: TotalClosedSet, value: Dyadic) -> FnOnF {
        FnOnF::new(set, move |_, _| value.clone(), |_, _| Dyadic::one())
    }

    pub fn set(&self) -> &TotalClosedSet {
        &self.set
    }

    /// Approximation of `f(x)` within `2^-i`, for `x` in the set.
    pub fn eval(&self, x: &CPoint, i: i64) -> Dyadic {
        (self.eval)(x, i)
    }

    /// A radius certifying oscillation at most `eps` among set points of
    /// norm at most `r`.
    pub fn modulus(&self, r: &Dyadic, eps: &Dyadic) -> Dyadic {
        (self.modulus)(r, eps)
    }
}

/// Upper bound on the Euclidean norm of points of `B(center, radius)`, used
/// as the range argument of modulus queries.
fn ball_norm_upper(center: &CPoint, radius: &Dyadic) -> Dyadic {
    let sup = center.sup_norm_upper(8);
    sqrtn_upper(center.dim() as u64, 16).mul(&sup).add(radius)
}

// ---------------------------------------------------------------------------
// Jets
// ---------------------------------------------------------------------------

/// A jet of order `m` on a closed set: one function per derivative
/// multi-index up to order `m`, a remainder constant, and remainder
/// constants for every truncation of the jet to a lower order.
///
/// The truncation constants exist because evaluating a jet of order `m`
/// near the set consults the extension of the order-`(m-1)` truncation; its
/// oscillation bounds need a remainder constant valid for the truncated
/// family. Dropping the top-order terms of the Taylor field costs at most
/// `M * diam + G * max_s n^s/s!` per unit power of the distance, where `G`
/// bounds the dropped components, and that is how the constructors fill
/// the vector.
#[derive(Clone)]
pub struct WhitneyJet {
    set: TotalClosedSet,
    order: u32,
    components: BTreeMap<Vec<u32>, FnOnF>,
    m_const: Dyadic,
    trunc_consts: Vec<Dyadic>,
}

impl WhitneyJet {
    /// Assemble a jet from explicit parts. `components` must contain every
    /// multi-index of order up to `order`, all on the same set;
    /// `trunc_consts[t]` must be a valid remainder constant for the
    /// truncation to order `t`, with `trunc_consts[order] == m_const`.
    pub fn from_parts(
        set: TotalClosedSet,
        order: u32,
        components: BTreeMap<Vec<u32>, FnOnF>,
        m_const: Dyadic,
        trunc_consts: Vec<Dyadic>,
    ) -> Result<WhitneyJet> {
        let n = set.dim();
        for kbar in multi_indices_upto(n, order) {
            let comp = components.get(&kbar).ok_or_else(|| {
                Error::InvalidArgument(format!("jet component {kbar:?} missing"))
            })?;
            if comp.set().id() != set.id() {
                return Err(Error::InvalidArgument(
                    "jet components must live on the jet's own set".into(),
                ));
            }
        }
        for kbar in components.keys() {
            if kbar.len() != n || mi_order(kbar) > order {
                return Err(Error::InvalidArgument(format!(
                    "jet component {kbar:?} outside the declared order"
                )));
            }
        }
        if trunc_consts.len() != order as usize + 1 || trunc_consts[order as usize] != m_const {
            return Err(Error::InvalidArgument(
                "truncation constants must cover orders 0..=order and end at the \
                 remainder constant"
                    .into(),
            ));
        }
        if m_const.signum() < 0 || trunc_consts.iter().any(|c| c.signum() < 0) {
            return Err(Error::InvalidArgument("remainder constants must be nonnegative".into()));
        }
        Ok(WhitneyJet { set, order, components, m_const, trunc_consts })
    }

    /// Order-zero jet around a bare function. Used by the order-zero
    /// evaluator, which never consults the remainder constant.
    pub(crate) fn order_zero(f: FnOnF) -> WhitneyJet {
        let set = f.set().clone();
        let n = set.dim();
        let mut components = BTreeMap::new();
        components.insert(vec![0u32; n], f);
        WhitneyJet {
            set,
            order: 0,
            components,
            m_const: Dyadic::zero(),
            trunc_consts: vec![Dyadic::zero()],
        }
    }

    pub fn set(&self) -> &TotalClosedSet {
        &self.set
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    /// The remainder constant of the compatibility condition.
    pub fn m_const(&self) -> &Dyadic {
        &self.m_const
    }

    /// Remainder constant of the truncation to order `t`.
    pub fn truncation_const(&self, t: u32) -> &Dyadic {
        &self.trunc_consts[t as usize]
    }

    pub fn component(&self, kbar: &[u32]) -> Option<&FnOnF> {
        self.components.get(kbar)
    }

    pub fn components(&self) -> impl Iterator<Item = (&Vec<u32>, &FnOnF)> {
        self.components.iter()
    }

    /// The jet with all components above order `t` dropped.
    pub fn truncate(&self, t: u32) -> WhitneyJet {
        assert!(t <= self.order, "cannot truncate upward");
        WhitneyJet {
            set: self.set.clone(),
            order: t,
            components: self
                .components
                .iter()
                .filter(|(k, _)| mi_order(k) <= t)
                .map(|(k, f)| (k.clone(), f.clone()))
                .collect(),
            m_const: self.trunc_consts[t as usize].clone(),
            trunc_consts: self.trunc_consts[..=t as usize].to_vec(),
        }
    }

    /// The jet `alpha J1 + beta J2`, componentwise, on the shared set.
    /// Remainder and truncation constants combine as
    /// `|alpha| M1 + |beta| M2`.
    pub fn linear_combination(
        alpha: &Dyadic,
        j1: &WhitneyJet,
        beta: &Dyadic,
        j2: &WhitneyJet,
    ) -> Result<WhitneyJet> {
        if j1.set.id() != j2.set.id() {
            return Err(Error::InvalidArgument(
                "jets can only be combined over one and the same set".into(),
            ));
        }
        if j1.order != j2.order {
            return Err(Error::InvalidArgument("jets of different orders cannot combine".into()));
        }
        // Shifts soaking up the coefficient magnitudes: |c| <= 2^shift(c).
        let shift = |c: &Dyadic| -> i64 {
            if c.is_zero() {
                0
            } else {
                c.abs().log2_ceil().expect("nonzero").max(0)
            }
        };
        let sa = shift(alpha);
        let sb = shift(beta);
        let mut components = BTreeMap::new();
        for (kbar, f1) in &j1.components {
            let f2 = j2.components.get(kbar).expect("same order, complete");
            let (a, b, f1c, f2c) = (alpha.clone(), beta.clone(), f1.clone(), f2.clone());
            let eval = move |x: &CPoint, i: i64| -> Dyadic {
                let v1 = f1c.eval(x, i + sa + 2);
                let v2 = f2c.eval(x, i + sb + 2);
                a.mul(&v1).add(&b.mul(&v2)).round(i + 1, Round::Nearest)
            };
            let (f1m, f2m) = (f1.clone(), f2.clone());
            let modulus = move |r: &Dyadic, eps: &Dyadic| -> Dyadic {
                let d1 = f1m.modulus(r, &eps.shl(-(sa + 1)));
                let d2 = f2m.modulus(r, &eps.shl(-(sb + 1)));
                d1.min(d2)
            };
            components
                .insert(kbar.clone(), FnOnF::new(j1.set.clone(), eval, modulus));
        }
        let comb = |c1: &Dyadic, c2: &Dyadic| alpha.abs().mul(c1).add(&beta.abs().mul(c2));
        let trunc_consts: Vec<Dyadic> = j1
            .trunc_consts
            .iter()
            .zip(&j2.trunc_consts)
            .map(|(a, b)| comb(a, b))
            .collect();
        let m_const = comb(&j1.m_const, &j2.m_const);
        Ok(WhitneyJet { set: j1.set.clone(), order: j1.order, components, m_const, trunc_consts })
    }
}

// ---------------------------------------------------------------------------
// Built-in jets
// ---------------------------------------------------------------------------

/// A jet description: a named analytic model function of the first
/// coordinate, the jet order, and the remainder constant (`"auto"` derives
/// one from a top-derivative bound over the hull of the set).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JetSpec {
    pub builtin: String,
    #[serde(default)]
    pub coeffs: Vec<Coeff>,
    pub order: u32,
    #[serde(rename = "M", default = "default_auto")]
    pub m: String,
}

fn default_auto() -> String {
    "auto".into()
}

/// A polynomial coefficient in a jet description: an integer or a rational
/// in string form (`"3/4"`, `"-2"`, `"0.5"`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeff {
    Int(i64),
    Str(String),
}

impl Coeff {
    fn to_ratio(&self) -> Result<Ratio<BigInt>> {
        match self {
            Coeff::Int(v) => Ok(Ratio::from_integer(BigInt::from(*v))),
            Coeff::Str(s) => parse_ratio(s),
        }
    }
}

impl JetSpec {
    pub fn from_json(s: &str) -> Result<JetSpec> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("jet description: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("jet description serializes")
    }
}

/// The model functions: all depend on the first coordinate only, so every
/// mixed partial involving another coordinate vanishes identically.
#[derive(Clone)]
enum Builtin {
    Poly(Vec<Ratio<BigInt>>),
    Cos,
    Sin,
    Expc,
}

/// A derivative `d^k/dx1^k` of a model function, in closed form.
#[derive(Clone)]
enum DerivedBuiltin {
    Zero,
    Poly(Vec<Ratio<BigInt>>),
    /// `(-1)^(sign) cos` or `(-1)^(sign) sin` per the quarter-phase.
    Trig { use_cos: bool, negate: bool },
    Exp,
}

fn poly_derive(coeffs: &[Ratio<BigInt>], k: u32) -> Vec<Ratio<BigInt>> {
    let mut c = coeffs.to_vec();
    for _ in 0..k {
        c = c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(t, v)| v * BigInt::from(t))
            .collect();
    }
    c
}

impl Builtin {
    /// The closed form of `d^jbar` of the model function: zero whenever the
    /// multi-index touches a coordinate beyond the first.
    fn derived(&self, jbar: &[u32]) -> DerivedBuiltin {
        if jbar.iter().skip(1).any(|&v| v > 0) {
            return DerivedBuiltin::Zero;
        }
        let k = jbar.first().copied().unwrap_or(0);
        self.derived_1d(k)
    }

    fn derived_1d(&self, k: u32) -> DerivedBuiltin {
        match self {
            Builtin::Poly(c) => {
                let d = poly_derive(c, k);
                if d.iter().all(|v| v.is_zero()) {
                    DerivedBuiltin::Zero
                } else {
                    DerivedBuiltin::Poly(d)
                }
            }
            Builtin::Cos => match k % 4 {
                0 => DerivedBuiltin::Trig { use_cos: true, negate: false },
                1 => DerivedBuiltin::Trig { use_cos: false, negate: true },
                2 => DerivedBuiltin::Trig { use_cos: true, negate: true },
                _ => DerivedBuiltin::Trig { use_cos: false, negate: false },
            },
            Builtin::Sin => match k % 4 {
                0 => DerivedBuiltin::Trig { use_cos: false, negate: false },
                1 => DerivedBuiltin::Trig { use_cos: true, negate: false },
                2 => DerivedBuiltin::Trig { use_cos: false, negate: true },
                _ => DerivedBuiltin::Trig { use_cos: true, negate: true },
            },
            Builtin::Expc => DerivedBuiltin::Exp,
        }
    }
}

impl DerivedBuiltin {
    /// Enclosure over an interval of first coordinates.
    fn encl(&self, x1: &DyInterval, p: i64) -> DyInterval {
        match self {
            DerivedBuiltin::Zero => DyInterval::zero(),
            DerivedBuiltin::Poly(coeffs) => {
                let mut acc = DyInterval::zero();
                for c in coeffs.iter().rev() {
                    let ce = DyInterval::new(
                        ratio_to_dyadic(c, p + 8, Round::Down),
                        ratio_to_dyadic(c, p + 8, Round::Up),
                    );
                    acc = acc.mul(x1).add(&ce).shrink(p + 16);
                }
                acc
            }
            DerivedBuiltin::Trig { use_cos, negate } => {
                // Evaluate at the midpoint; both cos and sin are 1-Lipschitz,
                // so half the width is a valid enclosure slack.
                let mid = x1.mid();
                let (c, s) = crate::exact::cos_sin_dyadic(&mid, p + 4);
                let base = if *use_cos { c } else { s };
                let slack = x1.width().halve().add(&Dyadic::pow2(-(p + 8)));
                let e = base.expand(&slack);
                if *negate {
                    e.neg()
                } else {
                    e
                }
            }
            DerivedBuiltin::Exp => x1.exp(p),
        }
    }

    /// Upper bound on `sup |value|` over an interval of first coordinates.
    fn sup_abs_upper(&self, x1: &DyInterval, p: i64) -> Dyadic {
        let e = self.encl(x1, p);
        e.lo().abs().max(e.hi().abs())
    }
}

/// Approximation of a derived model function at a point within `2^-i`.
fn derived_eval(d: &DerivedBuiltin, x: &CPoint, i: i64) -> Dyadic {
    let mut p = i + 6;
    loop {
        let x1 = x.coord_encl(0, p);
        let e = d.encl(&x1, p);
        if e.width() <= Dyadic::pow2(-(i + 1)) {
            return e.mid().round(i + 2, Round::Nearest);
        }
        assert!(p < i + (1 << 16), "model function enclosure failed to converge");
        p += 8;
    }
}

/// Build the jet of a described model function on a set.
///
/// Components are the closed-form partial derivatives with moduli derived
/// from a bound on the next derivative over the hull of the set. With
/// `"M": "auto"`, the remainder constant is
/// `n^((m+1)/2) * sup |d^(m+1) h| * max(1, sum_(|l| <= m) 1/l!)`, the
/// classical Taylor-remainder bound; sets without a computable hull (raw
/// stream names) are rejected, since no finite top-derivative bound can be
/// certified there.
pub fn jet_make(spec: &JetSpec, set: &TotalClosedSet) -> Result<WhitneyJet> {
    let n = set.dim();
    let m = spec.order;
    let builtin = match spec.builtin.as_str() {
        "poly" => {
            let coeffs: Result<Vec<Ratio<BigInt>>> =
                spec.coeffs.iter().map(|c| c.to_ratio()).collect();
            Builtin::Poly(coeffs?)
        }
        "cos" => Builtin::Cos,
        "sin" => Builtin::Sin,
        "expc" => Builtin::Expc,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown model function '{other}' (expected poly, cos, sin or expc)"
            )))
        }
    };
    let hull = set.hull().ok_or_else(|| {
        Error::Unbounded(
            "jet construction needs a computable hull to bound derivatives; \
             raw stream names provide none"
                .to_string(),
        )
    })?;
    let x1_range = DyInterval::new(hull.0[0].clone(), hull.1[0].clone());

    // Components with moduli from a Lipschitz bound (the next derivative in
    // the first coordinate; the model functions are constant in the others).
    let mut components = BTreeMap::new();
    for jbar in multi_indices_upto(n, m) {
        let d = builtin.derived(&jbar);
        let next = builtin.derived(&mi_add(&jbar, &unit_index(n, 0)));
        let lip = next.sup_abs_upper(&x1_range, 24);
        let dl = d.clone();
        let eval = move |x: &CPoint, i: i64| derived_eval(&dl, x, i);
        let modulus = move |_r: &Dyadic, eps: &Dyadic| -> Dyadic {
            if lip.signum() <= 0 {
                return Dyadic::one();
            }
            let p = lip.log2_ceil().unwrap_or(0) - eps.log2_floor().unwrap_or(0) + 8;
            let d = eps.div(&lip, p.max(8), Round::Down);
            d.min(Dyadic::one())
        };
        components.insert(jbar, FnOnF::new(set.clone(), eval, modulus));
    }

    // Remainder constant.
    let m_const = match spec.m.as_str() {
        "auto" => {
            let g = builtin.derived_1d(m + 1).sup_abs_upper(&x1_range, 24);
            let fact_sum: Ratio<BigInt> = (0..=m)
                .map(|s| Ratio::new(BigInt::from(n).pow(s), factorial(s)))
                .sum();
            let factor = fact_sum.max(Ratio::one());
            n_pow_half_upper(n, m + 1)
                .mul(&g)
                .mul(&ratio_to_dyadic(&factor, 32, Round::Up))
        }
        other => {
            let r = parse_ratio(other)?;
            if r.is_negative() {
                return Err(Error::InvalidArgument(
                    "remainder constant must be nonnegative".into(),
                ));
            }
            ratio_to_dyadic(&r, 32, Round::Up)
        }
    };

    // Truncation constants: dropping the order-(t) terms of an order-t
    // Taylor field costs M_t * diam + G_t * max_s n^s/s! per unit power.
    let diam = {
        let mut s = Dyadic::zero();
        for c in 0..n {
            let side = hull.1[c].sub(&hull.0[c]);
            s = s.add(&side.mul(&side));
        }
        s.sqrt(24, Round::Up)
    };
    let mut trunc_consts = vec![Dyadic::zero(); m as usize + 1];
    trunc_consts[m as usize] = m_const.clone();
    for t in (1..=m).rev() {
        let g_t = builtin.derived_1d(t).sup_abs_upper(&x1_range, 24);
        let kappa = (1..=t)
            .map(|s| Ratio::new(BigInt::from(n).pow(s), factorial(s)))
            .max()
            .expect("t >= 1");
        let kd = ratio_to_dyadic(&kappa, 32, Round::Up);
        trunc_consts[t as usize - 1] =
            trunc_consts[t as usize].mul(&diam).add(&g_t.mul(&kd));
    }
    WhitneyJet::from_parts(set.clone(), m, components, m_const, trunc_consts)
}

fn unit_index(n: usize, c: usize) -> Vec<u32> {
    let mut e = vec![0u32; n];
    e[c] = 1;
    e
}

// ---------------------------------------------------------------------------
// Taylor fields
// ---------------------------------------------------------------------------

/// Enclosure of the Taylor field `P^kbar_y(x) = sum f^(kbar+lbar)(y)
/// (x-y)^lbar / lbar!` over `|kbar+lbar| <= order`, at working precision `p`.
pub(crate) fn taylor_encl(
    jet: &WhitneyJet,
    kbar: &[u32],
    y: &CPoint,
    xe: &[DyInterval],
    p: i64,
) -> DyInterval {
    let n = jet.dim();
    let diffs: Vec<DyInterval> =
        (0..n).map(|c| xe[c].sub(&y.coord_encl(c, p + 4))).collect();
    let mut total = DyInterval::zero();
    let left = jet.order - mi_order(kbar);
    for lbar in multi_indices_upto(n, left) {
        let comp = jet.component(&mi_add(kbar, &lbar)).expect("jet is complete");
        let mut term = DyInterval::from_approx(&comp.eval(y, p), p);
        for c in 0..n {
            for _ in 0..lbar[c] {
                term = term.mul(&diffs[c]).shrink(p + 16);
            }
        }
        term = term.div_uint(&mi_factorial(&lbar), p + 8);
        total = total.add(&term).shrink(p + 16);
    }
    total
}

/// Value of the Taylor field `P^kbar_y(x)` of the jet around `y` (a set
/// point), within `2^-i`.
pub fn taylor_eval(
    jet: &WhitneyJet,
    kbar: &[u32],
    y: &CPoint,
    x: &CPoint,
    i: i64,
) -> Result<Dyadic> {
    check_query(jet, x, kbar)?;
    if y.dim() != jet.dim() {
        return Err(Error::DimensionMismatch { expected: jet.dim(), got: y.dim() });
    }
    let n = jet.dim();
    let mut p = i + 8;
    loop {
        let xe: Vec<DyInterval> = (0..n).map(|c| x.coord_encl(c, p)).collect();
        let e = taylor_encl(jet, kbar, y, &xe, p);
        if e.width() <= Dyadic::pow2(-(i + 1)) {
            return Ok(e.mid().round(i + 2, Round::Nearest));
        }
        assert!(p < i + (1 << 16), "Taylor enclosure failed to converge");
        p += 8;
    }
}

fn check_query(jet: &WhitneyJet, x: &CPoint, kbar: &[u32]) -> Result<()> {
    if x.dim() != jet.dim() || kbar.len() != jet.dim() {
        return Err(Error::DimensionMismatch {
            expected: jet.dim(),
            got: if x.dim() != jet.dim() { x.dim() } else { kbar.len() },
        });
    }
    if mi_order(kbar) > jet.order {
        return Err(Error::DerivOrderExceedsJet { got: mi_order(kbar), order: jet.order });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Certified ball pairs
// ---------------------------------------------------------------------------

/// A certified pair of balls: the function maps the set points of
/// `B(center, radius)` into `B(value, value_radius)`.
#[derive(Clone, Debug)]
pub struct FnPair {
    pub center: CPoint,
    pub radius: Dyadic,
    pub value: Dyadic,
    pub value_radius: Dyadic,
}

/// Replayable enumeration of certified ball pairs of a function.
///
/// The schedule walks the diagonals of (dense-point index, radius exponent,
/// oscillation exponent); a triple is emitted when the modulus certifies
/// the oscillation over the ball, so every dense point eventually appears
/// with arbitrarily small radii and value enclosures. Restarting the stream
/// replays the identical sequence.
pub struct PairStream {
    f: FnOnF,
    stage: u64,
    within: u64,
}

/// Decode the `within`-th cell of diagonal `stage` as (dense index, radius
/// exponent, oscillation exponent); `None` past the end of the diagonal.
fn diagonal_cell(stage: u64, within: u64) -> Option<(usize, i64, i64)> {
    let mut left = within;
    for a in 0..=stage {
        for r in 0..=(stage - a) {
            if left == 0 {
                return Some((a as usize, r as i64, (stage - a - r) as i64));
            }
            left -= 1;
        }
    }
    None
}

impl PairStream {
    fn try_cell(&self, a: usize, r: i64, s: i64) -> Option<FnPair> {
        let center = self.f.set().dense_point(a);
        let radius = Dyadic::pow2(-r);
        let range = ball_norm_upper(&center, &radius);
        let delta = self.f.modulus(&range, &Dyadic::pow2(-s));
        if delta < radius {
            return None;
        }
        let value = self.f.eval(&center, s + 2);
        let value_radius = Dyadic::pow2(-s).add(&Dyadic::pow2(-(s + 2)));
        Some(FnPair { center, radius, value, value_radius })
    }
}

impl Iterator for PairStream {
    type Item = FnPair;

    fn next(&mut self) -> Option<FnPair> {
        loop {
            match diagonal_cell(self.stage, self.within) {
                None => {
                    self.stage += 1;
                    self.within = 0;
                }
                Some((a, r, s)) => {
                    self.within += 1;
                    if let Some(pair) = self.try_cell(a, r, s) {
                        return Some(pair);
                    }
                }
            }
        }
    }
}

/// The certified ball pairs of `f`, as a replayable stream.
pub fn pair_enumerate(f: &FnOnF) -> PairStream {
    PairStream { f: f.clone(), stage: 0, within: 0 }
}

// ---------------------------------------------------------------------------
// Extension constants
// ---------------------------------------------------------------------------

/// The numeric constants of the extension operator for one jet, at dilation
/// `eps = 1/8`: `e = 2/(1-eps) = 16/7` (upper enclosure; `7e = 16` and
/// `14e = 32` are exact), `c = 14e + 1 = 33`, the oscillation constants
/// `A_m` and `A_m^kbar` of the extension and its derivatives, and the
/// covering candidate count bound.
#[derive(Clone, Debug)]
pub struct ExtConstants {
    pub eps: Dyadic,
    pub e_upper: Dyadic,
    pub c_const: Dyadic,
    pub a_m: Dyadic,
    pub a_mk: BTreeMap<Vec<u32>, Dyadic>,
    pub n_n: BigInt,
    pub order: u32,
    pub dim: usize,
}

impl ExtConstants {
    /// Number of derivative multi-indices of total order exactly `j`.
    pub fn p_count(&self, j: u32) -> BigInt {
        count_at_order(self.dim, j)
    }
}

/// `A_order^kbar` as an exact rational: the Taylor-tail sum plus, for each
/// nonzero `lbar <= kbar`, the bump-derivative contribution
/// `C(kbar,lbar) N_n (98e)^|l| B'_lbar / eps^|l|` times the tail sum at
/// `kbar - lbar`. At `eps = 1/8`: `98e = 224` and `1/eps = 8` exactly.
fn a_const_ratio(
    n: usize,
    order: u32,
    m_ratio: &Ratio<BigInt>,
    kbar: &[u32],
    n_n: &BigInt,
) -> Ratio<BigInt> {
    let tail = |base: &[u32]| -> Ratio<BigInt> {
        let left = order - mi_order(base);
        let mut sum = Ratio::zero();
        for lbar in multi_indices_upto(n, left) {
            let power = order - mi_order(base) - mi_order(&lbar) + 1;
            let term = m_ratio
                * Ratio::from_integer(BigInt::from(17).pow(power))
                / Ratio::from_integer(mi_factorial(&lbar));
            sum += term;
        }
        sum
    };
    let mut total = tail(kbar);
    for lbar in sub_indices(kbar) {
        if mi_order(&lbar) == 0 {
            continue;
        }
        let rest = mi_sub(kbar, &lbar).expect("lbar <= kbar");
        let scale = Ratio::from_integer(
            mi_binom(kbar, &lbar)
                * n_n
                * BigInt::from(224).pow(mi_order(&lbar))
                * BigInt::from(8).pow(mi_order(&lbar)),
        ) * bprime(&lbar, n).to_ratio();
        total += scale * tail(&rest);
    }
    total
}

/// The extension constants of a jet (dilation fixed at `1/8`).
pub fn ext_constants(jet: &WhitneyJet) -> ExtConstants {
    let n = jet.dim();
    let m = jet.order;
    let n_n = gx_size_bound(n);
    let m_ratio = jet.m_const.to_ratio();
    let mut a_mk = BTreeMap::new();
    for kbar in multi_indices_upto(n, m) {
        let a = a_const_ratio(n, m, &m_ratio, &kbar, &n_n);
        a_mk.insert(kbar, ratio_to_dyadic(&a, 32, Round::Up));
    }
    let a_m = a_mk[&vec![0u32; n]].clone();
    ExtConstants {
        eps: Dyadic::pow2(-3),
        e_upper: ratio_to_dyadic(&Ratio::new(BigInt::from(16), BigInt::from(7)), 32, Round::Up),
        c_const: Dyadic::from_int(33),
        a_m,
        a_mk,
        n_n,
        order: m,
        dim: n,
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Which of the two interleaved strategies produced an answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalBranch {
    #[serde(rename = "outsideF")]
    OutsideF,
    #[serde(rename = "viaF")]
    ViaF,
}

/// An evaluation result: the approximation and the branch that produced it.
#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub value: Dyadic,
    pub branch: EvalBranch,
}

/// Evaluation context for one jet: decomposition and bump machinery, the
/// extension constants of the jet and of its one-step truncation, the
/// recursive evaluator for the truncation, and per-point caches. All state
/// is memoization only, so evaluation is deterministic.
pub struct Extender {
    jet: WhitneyJet,
    dec: Decomposition,
    engine: Engine,
    consts: ExtConstants,
    /// `A_(m-1)^kbar` upper bounds for the truncated jet (empty at order 0).
    chain_consts: BTreeMap<Vec<u32>, Dyadic>,
    sub: Option<Box<Extender>>,
    /// Per-point certified bounds on the top-order components near the
    /// point (over its approximate projections, or over a certified ball).
    top_bounds: Mutex<HashMap<PointKey, BTreeMap<Vec<u32>, Ratio<BigInt>>>>,
}

impl Extender {
    pub fn new(jet: WhitneyJet) -> Result<Extender> {
        let n = jet.dim();
        let m = jet.order;
        for kbar in multi_indices_upto(n, m) {
            if jet.component(&kbar).is_none() {
                return Err(Error::InvalidArgument(format!("jet component {kbar:?} missing")));
            }
        }
        let consts = ext_constants(&jet);
        let mut chain_consts = BTreeMap::new();
        let sub = if m > 0 {
            let trunc = jet.truncate(m - 1);
            let m_ratio = trunc.m_const().to_ratio();
            for kbar in multi_indices_upto(n, m - 1) {
                let a = a_const_ratio(n, m - 1, &m_ratio, &kbar, &consts.n_n);
                chain_consts.insert(kbar, ratio_to_dyadic(&a, 32, Round::Up));
            }
            Some(Box::new(Extender::new(trunc)?))
        } else {
            None
        };
        let engine = Engine::new(m + 1);
        let dec = Decomposition::new(jet.set().clone());
        Ok(Extender { jet, dec, engine, consts, chain_consts, sub, top_bounds: Mutex::new(HashMap::new()) })
    }

    pub fn jet(&self) -> &WhitneyJet {
        &self.jet
    }

    pub fn constants(&self) -> &ExtConstants {
        &self.consts
    }

    /// Approximation of `d^kbar g (x)` within `2^-i`, with the branch that
    /// found it. Total for every point; derivative orders above the jet
    /// order are usage errors.
    pub fn eval(&self, x: &CPoint, kbar: &[u32], i: i64) -> Result<EvalOutcome> {
        check_query(&self.jet, x, kbar)?;
        for t in 1..=STAGE_CEILING {
            match self.dec.enum_gx(x, t as u32) {
                Ok(gx) => {
                    let value = self.eval_outside(x, &gx.cubes, kbar, i)?;
                    return Ok(EvalOutcome { value, branch: EvalBranch::OutsideF });
                }
                Err(Error::PointPossiblyInSet) => {}
                Err(e) => return Err(e),
            }
            if let Some(value) = self.try_via_set(x, kbar, i, t as u64)? {
                return Ok(EvalOutcome { value, branch: EvalBranch::ViaF });
            }
        }
        unreachable!("evaluation stage ceiling reached; jet data is inconsistent")
    }

    /// Branch "outside": `x` is certified off the set with candidate cubes
    /// `cand`; evaluate `sum_Q sum_(lbar <= kbar) C(kbar,lbar)
    /// P^lbar_(r_Q)(x) d^(kbar-lbar) phistar_Q(x)` to `2^-i`.
    fn eval_outside(
        &self,
        x: &CPoint,
        cand: &[crate::cubes::DyadicCube],
        kbar: &[u32],
        i: i64,
    ) -> Result<Dyadic> {
        let n = self.jet.dim();
        let projections: Vec<CPoint> =
            cand.iter().map(|q| self.dec.approx_projection(q)).collect::<Result<_>>()?;
        let subs = sub_indices(kbar);
        let mut p = i + 8;
        loop {
            let xe: Vec<DyInterval> = (0..n).map(|c| x.coord_encl(c, p)).collect();
            let mut total = DyInterval::zero();
            for lbar in &subs {
                let dphi = mi_sub(kbar, lbar).expect("sub-index");
                let coef = Dyadic::from_bigint(mi_binom(kbar, lbar));
                let phis = phi_star_batch_encl(&self.engine, &self.dec, cand, &xe, &dphi, p);
                for (q_idx, phi) in phis.iter().enumerate() {
                    if phi.lo().is_zero() && phi.hi().is_zero() {
                        continue;
                    }
                    let pe = taylor_encl(&self.jet, lbar, &projections[q_idx], &xe, p);
                    total = total.add(&pe.mul(phi).scale(&coef)).shrink(p + 16);
                }
            }
            if total.width() <= Dyadic::pow2(-(i + 1)) {
                return Ok(total.mid().round(i + 2, Round::Nearest));
            }
            assert!(p < i + (1 << 16), "extension enclosure failed to converge");
            p += 8;
        }
    }

    /// Branch "via the set", one fairness quantum: inspect the stage-`t`
    /// diagonal of the (dense index, radius exponent[, oscillation
    /// exponent]) schedule and return a certified value if some cell's
    /// gates all pass.
    fn try_via_set(&self, x: &CPoint, kbar: &[u32], i: i64, t: u64) -> Result<Option<Dyadic>> {
        if self.jet.order == 0 {
            self.try_pairs_order_zero(x, i, t)
        } else {
            self.try_balls_higher(x, kbar, i, t)
        }
    }

    /// Order-zero certified pairs: a dense point `y` and radius `rho` with
    /// `c d(x,y) < rho`, oscillation over the `rho`-ball at most `2^-s`
    /// where `s = i + 1`, so the value enclosure radius `2^-s + 2^-s-2`
    /// fits inside `2^-i`. Both the value at `x` (if `x` is a set point)
    /// and every approximate projection around `x` (if not) lie in the
    /// certified ball, so the center value is a valid output. A larger
    /// oscillation exponent is never required and a smaller one never
    /// satisfies the target, so the schedule walks the (dense index,
    /// radius exponent) diagonals only.
    fn try_pairs_order_zero(&self, x: &CPoint, i: i64, t: u64) -> Result<Option<Dyadic>> {
        let f = self.jet.component(&vec![0u32; self.jet.dim()]).expect("complete");
        let s = i + 1;
        for a in 0..=t {
            let r = (t - a) as i64;
            let rho = Dyadic::pow2(-r);
            let y = self.dec.set().dense_point(a as usize);
            // Gate: membership x in B(y, rho/c), via a certified upper
            // distance bound (strict, so a pass is sound).
            let de = dist_encl(x, &y, r + 16)?;
            if de.hi().mul(&self.consts.c_const) >= rho {
                continue;
            }
            // Gate: modulus certifies oscillation 2^-s over the ball.
            let range = ball_norm_upper(&y, &rho);
            if f.modulus(&range, &Dyadic::pow2(-s)) < rho {
                continue;
            }
            return Ok(Some(f.eval(&y, s + 2)));
        }
        Ok(None)
    }

    /// Positive-order certified balls around dense points. The output is
    /// the recursively evaluated truncation value at the dense point (or
    /// the top-order component itself), certified over `B(y, delta)` by an
    /// oscillation chain, plus a gate bounding the difference between the
    /// truncated and the full extension on the ball.
    fn try_balls_higher(&self, x: &CPoint, kbar: &[u32], i: i64, t: u64) -> Result<Option<Dyadic>> {
        let m = self.jet.order;
        let korder = mi_order(kbar);
        let target = ratio_pow2(-i - 1);
        let j = i + 3;
        for a in 0..=t {
            let d = (t - a) as i64;
            let delta = Dyadic::pow2(-d);
            let y = self.dec.set().dense_point(a as usize);
            let de = dist_encl(x, &y, d + 16)?;
            if de.hi() >= &delta {
                continue;
            }
            let cdelta = delta.mul(&self.consts.c_const).to_ratio();
            if korder == m {
                // Top order: output the component value at y. Oscillation
                // of the order-zero extension of the component: it is
                // M-Lipschitz, so A_0 = 17 M over the ball.
                let gate = self.top_difference_const(kbar) * &cdelta;
                if gate >= target {
                    continue;
                }
                let osc = ratio_pow2(-j)
                    + Ratio::from_integer(BigInt::from(17))
                        * self.jet.m_const.to_ratio()
                        * delta.to_ratio();
                if osc >= target {
                    continue;
                }
                let comp = self.jet.component(kbar).expect("complete");
                return Ok(Some(comp.eval(&y, j)));
            }
            // Interior orders: gate the distance between the truncated and
            // the full extension, then certify the truncation's oscillation
            // over the ball and evaluate it recursively at y.
            let tops = self.top_bounds(x)?;
            let gate = if korder == 0 {
                let s_const = self.top_scale(&tops, &vec![0u32; kbar.len()]);
                Ratio::from_integer(count_at_order(self.jet.dim(), m)) * s_const
                    * pow_ratio(&cdelta, m)
            } else {
                self.mixed_difference_const(kbar, &tops) * pow_ratio(&cdelta, m - korder)
            };
            if gate >= target {
                continue;
            }
            let osc = ratio_pow2(-j) + self.oscillation_chain(kbar, &y, &delta);
            if osc >= target {
                continue;
            }
            let sub = self.sub.as_ref().expect("positive order");
            let v = sub.eval(&y, kbar, j)?;
            return Ok(Some(v.value));
        }
        Ok(None)
    }

    /// Certified bounds `U_lbar >= |f^(lbar)|` (top-order components) over
    /// the approximate projections around `x`, or over a certified ball
    /// when `x` cannot be separated from the set. Memoized per point.
    fn top_bounds(&self, x: &CPoint) -> Result<BTreeMap<Vec<u32>, Ratio<BigInt>>> {
        let key = x.key();
        if let Some(b) = self.top_bounds.lock().unwrap().get(&key) {
            return Ok(b.clone());
        }
        let mut out = BTreeMap::new();
        for lbar in multi_indices_exact(self.jet.dim(), self.jet.order) {
            let u = self.top_component_bound(x, &lbar)?;
            out.insert(lbar, u);
        }
        self.top_bounds.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    /// One certified bound: interleave the outside probe (max over the
    /// candidate projections, plus evaluation slack) with ball pairs at
    /// oscillation 1/2 (center value plus slack plus oscillation).
    fn top_component_bound(&self, x: &CPoint, lbar: &[u32]) -> Result<Ratio<BigInt>> {
        let comp = self.jet.component(lbar).expect("complete");
        let quarter = ratio_pow2(-2);
        let half = ratio_pow2(-1);
        for t in 1..=STAGE_CEILING {
            match self.dec.enum_gx(x, t as u32) {
                Ok(gx) => {
                    let mut best = Ratio::zero();
                    for q in &gx.cubes {
                        let r = self.dec.approx_projection(q)?;
                        let v = comp.eval(&r, 2).abs().to_ratio() + &quarter;
                        best = best.max(v);
                    }
                    return Ok(best);
                }
                Err(Error::PointPossiblyInSet) => {}
                Err(e) => return Err(e),
            }
            for a in 0..=(t as u64) {
                let r = (t as u64 - a) as i64;
                let rho = Dyadic::pow2(-r);
                let y = self.dec.set().dense_point(a as usize);
                let de = dist_encl(x, &y, r + 16)?;
                if de.hi().mul(&self.consts.c_const) >= rho {
                    continue;
                }
                let range = ball_norm_upper(&y, &rho);
                if comp.modulus(&range, &Dyadic::pow2(-1)) < rho {
                    continue;
                }
                let v = comp.eval(&y, 2).abs().to_ratio() + &quarter + &half;
                return Ok(v);
            }
        }
        unreachable!("component bound stage ceiling reached")
    }

    /// `S_hbar = max over |hbar + jbar| = m of U_(hbar+jbar) / jbar!`.
    fn top_scale(&self, tops: &BTreeMap<Vec<u32>, Ratio<BigInt>>, hbar: &[u32]) -> Ratio<BigInt> {
        let left = self.jet.order - mi_order(hbar);
        let mut best = Ratio::zero();
        for jbar in multi_indices_exact(self.jet.dim(), left) {
            let full = mi_add(hbar, &jbar);
            let u = &tops[&full];
            best = best.max(u / Ratio::from_integer(mi_factorial(&jbar)));
        }
        best
    }

    /// Difference constant for interior orders `0 < |kbar| < m`:
    /// `N_n sum_(hbar <= kbar) C(kbar,hbar) S_hbar (98e)^|k-h| B'_(k-h)
    /// p(m-|h|) / eps^|k-h|`, with `98e = 224` and `1/eps = 8` exact.
    fn mixed_difference_const(
        &self,
        kbar: &[u32],
        tops: &BTreeMap<Vec<u32>, Ratio<BigInt>>,
    ) -> Ratio<BigInt> {
        let n = self.jet.dim();
        let m = self.jet.order;
        let mut sum = Ratio::zero();
        for hbar in sub_indices(kbar) {
            let diff = mi_sub(kbar, &hbar).expect("sub-index");
            let dord = mi_order(&diff);
            let s_h = self.top_scale(tops, &hbar);
            let term = Ratio::from_integer(
                mi_binom(kbar, &hbar)
                    * BigInt::from(224).pow(dord)
                    * BigInt::from(8).pow(dord)
                    * count_at_order(n, m - mi_order(&hbar)),
            ) * bprime(&diff, n).to_ratio()
                * s_h;
            sum += term;
        }
        Ratio::from_integer(self.consts.n_n.clone()) * sum
    }

    /// Difference constant for the top order `|kbar| = m`:
    /// `N_n sum_(hbar < kbar) C(kbar,hbar) (98e)^|k-h| B'_(k-h) A_m^hbar
    /// / eps^|k-h|`.
    fn top_difference_const(&self, kbar: &[u32]) -> Ratio<BigInt> {
        let n = self.jet.dim();
        let mut sum = Ratio::zero();
        for hbar in sub_indices(kbar) {
            if hbar == kbar {
                continue;
            }
            let diff = mi_sub(kbar, &hbar).expect("sub-index");
            let dord = mi_order(&diff);
            let term = Ratio::from_integer(
                mi_binom(kbar, &hbar) * BigInt::from(224).pow(dord) * BigInt::from(8).pow(dord),
            ) * bprime(&diff, n).to_ratio()
                * self.consts.a_mk[&hbar].to_ratio();
            sum += term;
        }
        Ratio::from_integer(self.consts.n_n.clone()) * sum
    }

    /// Upper bound on the oscillation of the truncated extension's `kbar`
    /// derivative over `B(y, delta)` around its value at the set point `y`:
    /// the truncation's own oscillation constant at the nearest set point,
    /// the Taylor-field difference between that point and `y` (bounded by
    /// the full jet's remainder plus the dropped top-order terms at `y`),
    /// and the Taylor tail at `y` itself. Every term carries at least one
    /// power of `delta`.
    fn oscillation_chain(&self, kbar: &[u32], y: &CPoint, delta: &Dyadic) -> Ratio<BigInt> {
        let n = self.jet.dim();
        let m = self.jet.order;
        let korder = mi_order(kbar);
        let q: i64 = 8;
        let slack = ratio_pow2(-q);
        let dr = delta.to_ratio();
        let eval_abs = |idx: &[u32]| -> Ratio<BigInt> {
            let comp = self.jet.component(idx).expect("complete");
            comp.eval(y, q).abs().to_ratio() + &slack
        };
        // Truncated extension vs. Taylor field at the nearest set point.
        let mut total =
            self.chain_consts[kbar].to_ratio() * pow_ratio(&dr, m - korder);
        // Taylor fields at the nearest point vs. at y, expanded over the
        // remainders of the truncated jet, each bounded locally through the
        // full jet's remainder plus the dropped order-m terms.
        for rbar in multi_indices_upto(n, m - 1 - korder) {
            let base = mi_add(kbar, &rbar);
            let drop = m - mi_order(&base);
            let mut rem = self.jet.m_const.to_ratio()
                * ratio_pow2(drop as i64 + 1)
                * pow_ratio(&dr, drop + 1);
            for jbar in multi_indices_exact(n, drop) {
                rem += eval_abs(&mi_add(&base, &jbar))
                    * ratio_pow2(drop as i64)
                    * pow_ratio(&dr, drop)
                    / Ratio::from_integer(mi_factorial(&jbar));
            }
            total += rem * pow_ratio(&dr, mi_order(&rbar))
                / Ratio::from_integer(mi_factorial(&rbar));
        }
        // Taylor tail at y around the center value.
        for rbar in multi_indices_upto(n, m - 1 - korder) {
            if mi_order(&rbar) == 0 {
                continue;
            }
            total += eval_abs(&mi_add(kbar, &rbar)) * pow_ratio(&dr, mi_order(&rbar))
                / Ratio::from_integer(mi_factorial(&rbar));
        }
        total
    }
}

fn pow_ratio(r: &Ratio<BigInt>, k: u32) -> Ratio<BigInt> {
    let mut out = Ratio::one();
    for _ in 0..k {
        out *= r;
    }
    out
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Total extension of a bare continuous function: approximation of `g(x)`
/// within `2^-i`, where `g` agrees with `f` on the set.
pub fn wet0_eval(f: &FnOnF, x: &CPoint, i: i64) -> Result<Dyadic> {
    wet0_eval_traced(f, x, i).map(|o| o.value)
}

/// As [`wet0_eval`], also reporting the branch that answered.
pub fn wet0_eval_traced(f: &FnOnF, x: &CPoint, i: i64) -> Result<EvalOutcome> {
    let jet = WhitneyJet::order_zero(f.clone());
    let kbar = vec![0u32; jet.dim()];
    Extender::new(jet)?.eval(x, &kbar, i)
}

/// Approximation of `d^kbar g (x)` within `2^-i` for the `C^m` extension
/// `g` of the jet. Requires `|kbar| <= m`.
pub fn wetm_eval(jet: &WhitneyJet, x: &CPoint, kbar: &[u32], i: i64) -> Result<Dyadic> {
    wetm_eval_traced(jet, x, kbar, i).map(|o| o.value)
}

/// As [`wetm_eval`], also reporting the branch that answered.
pub fn wetm_eval_traced(
    jet: &WhitneyJet,
    x: &CPoint,
    kbar: &[u32],
    i: i64,
) -> Result<EvalOutcome> {
    Extender::new(jet.clone())?.eval(x, kbar, i)
}
