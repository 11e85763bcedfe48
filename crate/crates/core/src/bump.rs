//! Smooth bump functions, the partition of unity subordinate to the cube
//! cover, and certified bounds on all of their derivatives.
//!
//! Everything is built from the flat exponential `lambda(x) = exp(-1/x)` for
//! `x > 0` (extended by `0` for `x <= 0`).  The sigmoid `mu(x) = lambda(x) /
//! (lambda(x) + lambda(1-x))` ramps from 0 to 1 across `[0, 1]`.  The plateau
//! `nu` is a product of two opposed sigmoids: it equals 1 on `[-1/2, 1/2]`
//! and 0 outside `[-(1+eps)/2, (1+eps)/2]`.  A cube `Q` with side `2^-k` gets
//! the bump `phi_Q(x) = prod_c nu((x_c - center_c) * 2^k)`, supported on the
//! slightly enlarged cube, and the normalized bump `phistar_Q = phi_Q / Phi`
//! where `Phi` sums the bumps of all decomposition cubes.  Off the closed set
//! the `phistar_Q` form a smooth partition of unity.
//!
//! Evaluation goes through interval enclosures that are *total*: where the
//! building blocks are flat (near `x = 0` for `lambda`, outside the ramp for
//! `mu`, on and off the plateau for `nu`) the value is certified by an exact
//! magnitude bound instead of being computed, so no comparison against the
//! flat boundary is ever required.  Derivative magnitudes are controlled by
//! exact integer tables: `H_k` bounds `|lambda^(k)|` on `(0,1)`, `B_k`
//! bounds `|mu^(k)|`, and `B'_kbar` bounds the normalized bumps via a
//! symbolic expansion of high-order quotient derivatives.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

use crate::cubes::{gx_size_bound, Decomposition, DyadicCube};
use crate::error::{Error, Result};
use crate::exact::{sqrtn_upper, CPoint, CReal, DyInterval, Dyadic, Round};

/// Stage budget for certifying that a point lies off the closed set before a
/// normalized bump is evaluated there.  Points closer to the set than about
/// `2^-60` (or on it) are reported as [`Error::PointPossiblyInSet`].
const GX_STAGE_BUDGET: u32 = 64;

// ---------------------------------------------------------------------------
// Derivative bound tables
// ---------------------------------------------------------------------------

/// Exact integer tables bounding every derivative of the bump building
/// blocks.
///
/// `lambda^(k)(x) = lambda(x) * x^(-2k) * P_k(x)` with `P_0 = 1` and
/// `P_(k+1) = (1 - 2kx) P_k + x^2 P_k'`.  With `A_k` the coefficient sum of
/// `P_k` and `H_k = (2k)^(2k) * A_k` (reading `0^0 = 1`):
///
/// * `|lambda^(k)| <= H_k` on `(0, 1)`;
/// * `|mu^(k)| <= B_k = 8^(k+1) * T_k`, where `T_k` sums
///   `|coeff| * H_lead * prod (2 H_b)^m` over the terms of the symbolic
///   quotient-derivative expansion of order `k` (the factor 8 absorbs the
///   denominator `lambda(x) + lambda(1-x) >= exp(-2) >= 1/8`);
/// * `|nu^(k)| <= B_k * (2/eps)^k`.
///
/// All four sequences are nondecreasing in `k`.
#[derive(Clone, Debug)]
pub struct DerivBoundTable {
    kmax: u32,
    p_polys: Vec<Vec<BigInt>>,
    a: Vec<BigInt>,
    h: Vec<BigInt>,
    t: Vec<BigInt>,
    b: Vec<BigInt>,
}

impl DerivBoundTable {
    /// Compute all tables for orders `0..=kmax`.
    pub fn compute(kmax: u32) -> DerivBoundTable {
        let mut p_polys: Vec<Vec<BigInt>> = vec![vec![BigInt::one()]];
        for k in 0..kmax {
            let prev = &p_polys[k as usize];
            let mut next = vec![BigInt::zero(); prev.len() + 1];
            for (j, c) in prev.iter().enumerate() {
                next[j] += c;
                next[j + 1] += c * BigInt::from(j as i64 - 2 * k as i64);
            }
            while next.len() > 1 && next.last().is_some_and(|c| c.is_zero()) {
                next.pop();
            }
            p_polys.push(next);
        }
        let a: Vec<BigInt> = p_polys
            .iter()
            .map(|p| p.iter().map(|c| c.abs()).sum())
            .collect();
        let h: Vec<BigInt> = a
            .iter()
            .enumerate()
            .map(|(k, ak)| {
                if k == 0 {
                    ak.clone()
                } else {
                    BigInt::from(2 * k).pow(2 * k as u32) * ak
                }
            })
            .collect();
        let mut t = Vec::with_capacity(kmax as usize + 1);
        let mut b = Vec::with_capacity(kmax as usize + 1);
        for k in 0..=kmax {
            let expansion = quotient_expand(&[k]);
            let mut tk = BigInt::zero();
            for term in &expansion.terms {
                let mut val = term.coeff.abs() * &h[term.lead[0] as usize];
                for (idx, m) in &term.powers {
                    let factor: BigInt = 2 * &h[idx[0] as usize];
                    val *= factor.pow(*m);
                }
                tk += val;
            }
            b.push(BigInt::from(8).pow(k + 1) * &tk);
            t.push(tk);
        }
        DerivBoundTable { kmax, p_polys, a, h, t, b }
    }

    /// Largest order covered by the tables.
    pub fn kmax(&self) -> u32 {
        self.kmax
    }

    /// Coefficients of `P_k`, lowest degree first.
    pub fn p_poly(&self, k: u32) -> &[BigInt] {
        &self.p_polys[k as usize]
    }

    /// Coefficient sum `A_k` of `P_k`.
    pub fn a_int(&self, k: u32) -> &BigInt {
        &self.a[k as usize]
    }

    /// `H_k` as an integer.
    pub fn h_int(&self, k: u32) -> &BigInt {
        &self.h[k as usize]
    }

    /// `T_k` as an integer.
    pub fn t_int(&self, k: u32) -> &BigInt {
        &self.t[k as usize]
    }

    /// `B_k` as an integer.
    pub fn b_int(&self, k: u32) -> &BigInt {
        &self.b[k as usize]
    }

    /// `H_k` as a dyadic number.
    pub fn h(&self, k: u32) -> Dyadic {
        Dyadic::from_bigint(self.h[k as usize].clone())
    }

    /// `T_k` as a dyadic number.
    pub fn t(&self, k: u32) -> Dyadic {
        Dyadic::from_bigint(self.t[k as usize].clone())
    }

    /// `B_k` as a dyadic number.
    pub fn b(&self, k: u32) -> Dyadic {
        Dyadic::from_bigint(self.b[k as usize].clone())
    }
}

/// Compute the derivative bound tables for orders `0..=kmax`.
pub fn deriv_bounds(kmax: u32) -> DerivBoundTable {
    DerivBoundTable::compute(kmax)
}

// ---------------------------------------------------------------------------
// Symbolic expansion of high-order quotient derivatives
// ---------------------------------------------------------------------------

/// One term of the normal form of `d^kbar (u/v)`: the value
///
/// `coeff * d^lead(u) * prod_idx (d^idx v)^powers[idx] / v^den_pow`
///
/// with `den_pow = 1 + sum of powers`.  Plain factors of `v` itself never
/// appear in `powers`; they are cancelled into the denominator exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuotientTerm {
    /// Integer coefficient (never zero).
    pub coeff: BigInt,
    /// Multi-index of the derivative applied to the numerator `u`.
    pub lead: Vec<u32>,
    /// Multiplicities of the derivative factors of `v`, keyed by nonzero
    /// multi-index.
    pub powers: BTreeMap<Vec<u32>, u32>,
}

impl QuotientTerm {
    /// Exponent of `v` in this term's denominator.
    pub fn den_pow(&self) -> u32 {
        1 + self.powers.values().sum::<u32>()
    }
}

/// `d^kbar (u/v)` expanded into a sum of [`QuotientTerm`]s.  Every term
/// satisfies the degree identity `|lead| + sum m * |idx| = |kbar|`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuotientExpansion {
    /// The derivative multi-index that was expanded.
    pub kbar: Vec<u32>,
    /// Terms with equal signatures merged and zero coefficients dropped.
    pub terms: Vec<QuotientTerm>,
}

type TermKey = (Vec<u32>, BTreeMap<Vec<u32>, u32>);

/// Expand the derivative `d^kbar (u/v)` of a quotient of smooth functions
/// into its normal form.  The expansion is independent of `u` and `v`; it is
/// used symbolically for the `T_k`/`B'_kbar` bound tables and numerically for
/// evaluating sigmoid and normalized-bump derivatives.
pub fn quotient_expand(kbar: &[u32]) -> QuotientExpansion {
    let mut terms: BTreeMap<TermKey, BigInt> = BTreeMap::new();
    terms.insert((vec![0; kbar.len()], BTreeMap::new()), BigInt::one());
    for (axis, &order) in kbar.iter().enumerate() {
        for _ in 0..order {
            terms = differentiate_terms(&terms, axis);
        }
    }
    let terms = terms
        .into_iter()
        .map(|((lead, powers), coeff)| QuotientTerm { coeff, lead, powers })
        .collect();
    QuotientExpansion { kbar: kbar.to_vec(), terms }
}

/// Apply `d/dx_axis` to every term via the product rule: the numerator
/// derivative bumps, one `v`-derivative factor bumps, or a fresh first-order
/// `v` factor appears from differentiating `v^-den_pow`.
fn differentiate_terms(
    terms: &BTreeMap<TermKey, BigInt>,
    axis: usize,
) -> BTreeMap<TermKey, BigInt> {
    let mut out: BTreeMap<TermKey, BigInt> = BTreeMap::new();
    for ((lead, powers), coeff) in terms {
        let den_pow = 1 + powers.values().sum::<u32>();
        let mut bumped_lead = lead.clone();
        bumped_lead[axis] += 1;
        *out.entry((bumped_lead, powers.clone())).or_default() += coeff;
        for (idx, m) in powers {
            let mut new_powers = powers.clone();
            if *m == 1 {
                new_powers.remove(idx);
            } else {
                *new_powers.get_mut(idx).expect("key present") -= 1;
            }
            let mut bumped = idx.clone();
            bumped[axis] += 1;
            *new_powers.entry(bumped).or_insert(0) += 1;
            *out.entry((lead.clone(), new_powers)).or_default() += coeff * m;
        }
        let mut new_powers = powers.clone();
        let mut first = vec![0u32; lead.len()];
        first[axis] = 1;
        *new_powers.entry(first).or_insert(0) += 1;
        *out.entry((lead.clone(), new_powers)).or_default() -= coeff * BigInt::from(den_pow);
    }
    out.retain(|_, c| !c.is_zero());
    out
}

// ---------------------------------------------------------------------------
// Normalized-bump derivative bound
// ---------------------------------------------------------------------------

/// Certified upper bound `B'_kbar` for the normalized bumps of an
/// `n`-dimensional decomposition:
///
/// `|d^kbar phistar_Q(x)| <= B'_kbar * (2 / (eps * diam Q))^|kbar|`.
///
/// Each expansion term is bounded by `|coeff| * B_lead * prod (N_n * B_idx *
/// 21^|idx|)^m` — the candidate-cube count `N_n` bounds how many bumps
/// contribute to the normalizing sum, `21` bounds the diameter ratio between
/// overlapping supports, and one factor `sqrt(n)` per derivative order
/// converts side lengths to diameters — summed and multiplied by a certified
/// upper bound on `sqrt(n)^|kbar|`.
pub fn bprime(kbar: &[u32], n: usize) -> Dyadic {
    assert!(n >= 1, "dimension must be at least 1");
    let kmax = kbar.iter().copied().max().unwrap_or(0);
    let tab = DerivBoundTable::compute(kmax);
    let b_multi = |idx: &[u32]| -> BigInt {
        idx.iter().fold(BigInt::one(), |acc, &c| acc * tab.b_int(c))
    };
    let count = gx_size_bound(n);
    let mut total = BigInt::zero();
    for term in &quotient_expand(kbar).terms {
        let mut val = term.coeff.abs() * b_multi(&term.lead);
        for (idx, m) in &term.powers {
            let order: u32 = idx.iter().sum();
            let factor = &count * b_multi(idx) * BigInt::from(21).pow(order);
            val *= factor.pow(*m);
        }
        total += val;
    }
    let order: u32 = kbar.iter().sum();
    let even = Dyadic::from_bigint(total * BigInt::from(n).pow(order / 2));
    if order % 2 == 0 {
        even
    } else {
        even.mul(&sqrtn_upper(n as u64, 32))
    }
}

// ---------------------------------------------------------------------------
// Total interval enclosures of the building blocks
// ---------------------------------------------------------------------------

/// Shared evaluation context: bound tables plus the univariate quotient
/// expansions used by sigmoid derivatives, built once per query.
pub(crate) struct Engine {
    tab: DerivBoundTable,
    uni: Vec<QuotientExpansion>,
}

impl Engine {
    /// Build tables and expansions for derivative orders up to `kmax`.
    pub(crate) fn new(kmax: u32) -> Engine {
        let tab = DerivBoundTable::compute(kmax);
        let uni = (0..=kmax).map(|k| quotient_expand(&[k])).collect();
        Engine { tab, uni }
    }

    /// Certified enclosure of `lambda^(k)` over `xe`.
    ///
    /// Total on all of `R`: the flat side contributes an exact zero, the
    /// sliver `(0, 2^-52]` is certified below `2^-(p+2)` by the monotone
    /// magnitude bound `exp(-1/x) x^(-2k) |P_k(x)| <= A_k 2^(104k - 2^52)`,
    /// and only arguments above `2^-52` reach the closed formula (keeping the
    /// exponent of `exp(-1/x)` machine-representable).
    pub(crate) fn lam_encl(&self, xe: &DyInterval, k: u32, p: i64) -> DyInterval {
        assert!(p < 1 << 40, "precision out of the supported range");
        if xe.hi().signum() <= 0 {
            return DyInterval::zero();
        }
        let pw = p + 6;
        let sliver = Dyadic::pow2(-52);
        let mut parts: Vec<DyInterval> = Vec::new();
        if xe.lo().signum() <= 0 {
            parts.push(DyInterval::zero());
        }
        if *xe.lo() < sliver {
            let abits = self.tab.a_int(k).bits() as i128;
            debug_assert!(abits + 104 * k as i128 <= (1i128 << 52) - (p as i128 + 2));
            let slack = Dyadic::pow2(-(p + 2));
            parts.push(DyInterval::new(slack.neg(), slack));
        }
        if *xe.hi() > sliver {
            let lo = if *xe.lo() < sliver { sliver } else { xe.lo().clone() };
            let xf = DyInterval::new(lo, xe.hi().clone());
            let rec = xf.recip(pw).expect("positive lower endpoint");
            let exp = rec.neg().exp(pw);
            let poly = poly_encl(self.tab.p_poly(k), &xf, pw);
            let num = exp.mul(&poly);
            let val = if k == 0 {
                num
            } else {
                num.div(&xf.pow(2 * k), pw).expect("positive denominator")
            };
            parts.push(val);
        }
        let mut acc = parts.pop().expect("at least one part");
        for part in &parts {
            acc = acc.hull(part);
        }
        acc.shrink(pw)
    }

    /// Certified enclosure of `mu^(k)` over `xe`, via the quotient-derivative
    /// expansion with `u = lambda(x)` and `v = lambda(x) + lambda(1-x)`.
    /// The denominator lies in `[1/8, 2]` on all of `R`, so every term
    /// divides by an interval bounded away from zero.
    pub(crate) fn mu_encl(&self, xe: &DyInterval, k: u32, p: i64) -> DyInterval {
        let one = Dyadic::one();
        if xe.hi().signum() <= 0 {
            return DyInterval::zero();
        }
        if *xe.lo() >= one {
            return if k == 0 { DyInterval::point(one) } else { DyInterval::zero() };
        }
        let pp = p + 12;
        let mirror = DyInterval::point(one.clone()).sub(xe);
        let orders = k as usize + 1;
        let mut u_derivs = Vec::with_capacity(orders);
        let mut v_derivs = Vec::with_capacity(orders);
        for b in 0..=k {
            let direct = self.lam_encl(xe, b, pp);
            let reflected = self.lam_encl(&mirror, b, pp);
            let reflected = if b % 2 == 1 { reflected.neg() } else { reflected };
            v_derivs.push(direct.add(&reflected));
            u_derivs.push(direct);
        }
        let v = v_derivs[0]
            .intersect(&DyInterval::new(Dyadic::pow2(-3), Dyadic::from_int(2)))
            .expect("denominator stays within [1/8, 2]");
        let mut acc = DyInterval::zero();
        for term in &self.uni[k as usize].terms {
            let mut num = u_derivs[term.lead[0] as usize].clone();
            let mut den_pow = 1u32;
            for (idx, m) in &term.powers {
                num = num.mul(&v_derivs[idx[0] as usize].pow(*m));
                den_pow += m;
            }
            let quotient = num.div(&v.pow(den_pow), pp).expect("positive denominator");
            acc = acc
                .add(&quotient.scale(&Dyadic::from_bigint(term.coeff.clone())))
                .shrink(pp + 32);
        }
        if k == 0 {
            acc = acc
                .intersect(&DyInterval::new(Dyadic::zero(), one))
                .expect("sigmoid stays within [0, 1]");
        }
        acc.shrink(pp)
    }

    /// Certified enclosure of `nu^(k)` over `xe`, where `nu(x) =
    /// mu(2(x+a)/eps) * mu(2(a-x)/eps)` with `a = (1+eps)/2`.  Inputs
    /// certifiably on the plateau `[-1/2, 1/2]` or outside the support give
    /// exact constants; everything else goes through the product rule over
    /// the two sigmoid factors.
    pub(crate) fn nu_encl(&self, xe: &DyInterval, k: u32, eps: &Dyadic, p: i64) -> DyInterval {
        debug_assert!(eps.signum() > 0);
        let one = Dyadic::one();
        let edge = one.add(eps).halve();
        if *xe.lo() > edge || *xe.hi() < edge.neg() {
            return DyInterval::zero();
        }
        let half = Dyadic::pow2(-1);
        if *xe.lo() >= half.neg() && *xe.hi() <= half {
            return if k == 0 { DyInterval::point(one) } else { DyInterval::zero() };
        }
        let pp = p + 12;
        let two_over_eps = DyInterval::point(Dyadic::from_int(2))
            .div(&DyInterval::point(eps.clone()), pp + 8)
            .expect("positive transition width");
        let center = DyInterval::point(edge);
        let rising = xe.add(&center).mul(&two_over_eps);
        let falling = center.sub(xe).mul(&two_over_eps);
        let mut acc = DyInterval::zero();
        let mut binom = BigInt::one();
        for j in 0..=k {
            let prod = self
                .mu_encl(&rising, k - j, pp)
                .mul(&self.mu_encl(&falling, j, pp));
            let signed = if j % 2 == 1 { -&binom } else { binom.clone() };
            acc = acc
                .add(&prod.scale(&Dyadic::from_bigint(signed)))
                .shrink(pp + 32);
            if j < k {
                binom = binom * (k - j) / (j + 1);
            }
        }
        let mut res = two_over_eps.pow(k).mul(&acc);
        if k == 0 {
            res = res
                .intersect(&DyInterval::new(Dyadic::zero(), one))
                .expect("plateau stays within [0, 1]");
        }
        res.shrink(pp)
    }
}

/// Outward enclosure of an integer polynomial over an interval (Horner).
fn poly_encl(coeffs: &[BigInt], xe: &DyInterval, p: i64) -> DyInterval {
    let mut acc = DyInterval::zero();
    for c in coeffs.iter().rev() {
        acc = acc
            .mul(xe)
            .add(&DyInterval::point(Dyadic::from_bigint(c.clone())))
            .shrink(p + 32);
    }
    acc
}

// ---------------------------------------------------------------------------
// Point evaluation of the building blocks
// ---------------------------------------------------------------------------

/// Evaluate `lambda^(k)(x)` to within `2^-i`, where `lambda(x) = exp(-1/x)`
/// for `x > 0` and `0` otherwise.
///
/// A single approximation of `x` at a precision driven by `H_(k+1)` decides
/// whether the value is already provably below `2^-i` (in which case the
/// result is an exact 0: by the mean value theorem `|lambda^(k)(x)| <=
/// H_(k+1) * x` there); otherwise `x` is provably positive and the closed
/// formula is evaluated adaptively.
pub fn lambda_deriv(x: &CReal, k: u32, i: i64) -> Dyadic {
    let tab = DerivBoundTable::compute(k + 1);
    let hk1 = tab.h_int(k + 1);
    let j = i + hk1.bits() as i64 + 1;
    let threshold = ratio_pow2(-i) / Ratio::from(hk1.clone()) - ratio_pow2(-j);
    // The mean-value argument needs the threshold to keep x inside (0, 1).
    if threshold <= ratio_pow2(-1) && x.approx(j).to_ratio() < threshold {
        return Dyadic::zero();
    }
    let engine = Engine::new(k);
    let mut p = i + 8;
    loop {
        let enc = engine.lam_encl(&x.encl(p + 2), k, p);
        if enc.width() <= Dyadic::pow2(-(i + 1)) {
            return enc.mid().round(i + 1, Round::Nearest);
        }
        p += 8;
        assert!(p < i + (1 << 20), "no convergence; this is a bug");
    }
}

/// Which sigmoid-family function to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuNu {
    /// The ramp `mu`, 0 for `x <= 0` and 1 for `x >= 1`.
    Mu,
    /// The plateau `nu`, 1 on `[-1/2, 1/2]` and 0 outside
    /// `[-(1+eps)/2, (1+eps)/2]`.
    Nu,
}

/// Evaluate `mu^(k)(x)` or `nu^(k)(x)` to within `2^-i`.  The transition
/// width `eps` only affects `nu` and must be positive.
pub fn mu_nu_deriv(which: MuNu, x: &CReal, k: u32, i: i64, eps: &Dyadic) -> Dyadic {
    if which == MuNu::Nu {
        assert!(eps.signum() > 0, "transition width must be positive");
    }
    let engine = Engine::new(k);
    let mut p = i + 8;
    loop {
        let xe = x.encl(p + 2);
        let enc = match which {
            MuNu::Mu => engine.mu_encl(&xe, k, p),
            MuNu::Nu => engine.nu_encl(&xe, k, eps, p),
        };
        if enc.width() <= Dyadic::pow2(-(i + 1)) {
            return enc.mid().round(i + 1, Round::Nearest);
        }
        p += 8;
        assert!(p < i + (1 << 20), "no convergence; this is a bug");
    }
}

fn ratio_pow2(e: i64) -> Ratio<BigInt> {
    if e >= 0 {
        Ratio::from(BigInt::one() << e as u64)
    } else {
        Ratio::new(BigInt::one(), BigInt::one() << (-e) as u64)
    }
}

// ---------------------------------------------------------------------------
// Cube bumps and the partition of unity
// ---------------------------------------------------------------------------

/// Enclosure of `d^kbar phi_Q` at the point enclosed coordinatewise by `xe`.
/// Each axis contributes a plateau factor in the rescaled variable
/// `(x_c - center_c) * 2^level`, and each derivative order picks up one
/// factor `2^level` from that rescaling.
pub(crate) fn phi_q_encl(
    engine: &Engine,
    q: &DyadicCube,
    eps: &Dyadic,
    xe: &[DyInterval],
    kbar: &[u32],
    p: i64,
) -> DyInterval {
    let n = q.dim();
    debug_assert_eq!(xe.len(), n);
    debug_assert_eq!(kbar.len(), n);
    let center = q.center();
    let rescale = Dyadic::pow2(q.level);
    let mut prod = DyInterval::point(Dyadic::one());
    for c in 0..n {
        let y = xe[c].sub(&DyInterval::point(center[c].clone())).scale(&rescale);
        let factor = engine.nu_encl(&y, kbar[c], eps, p + 8);
        if factor.lo().is_zero() && factor.hi().is_zero() {
            return DyInterval::zero();
        }
        prod = prod.mul(&factor).shrink(p + 16);
    }
    let order: i64 = kbar.iter().map(|&v| v as i64).sum();
    prod.scale(&Dyadic::pow2(q.level * order))
}

/// Per-candidate enclosures of `d^kbar phistar_Q` for every `Q` in
/// `candidates`, sharing one evaluation of the normalizing sum.
///
/// `candidates` must contain every decomposition cube whose enlarged support
/// meets the point (the covering-candidate enumeration guarantees this); the
/// cover certificate `Phi >= 1` is folded into the denominator enclosure.
pub(crate) fn phi_star_batch_encl(
    engine: &Engine,
    dec: &Decomposition,
    candidates: &[DyadicCube],
    xe: &[DyInterval],
    kbar: &[u32],
    p: i64,
) -> Vec<DyInterval> {
    let expansion = quotient_expand(kbar);
    let slack = 64 - (candidates.len().max(1) as u64).leading_zeros() as i64;
    let pp = p + slack + 8;
    let mut needed: BTreeSet<Vec<u32>> = BTreeSet::new();
    needed.insert(vec![0; kbar.len()]);
    for term in &expansion.terms {
        needed.insert(term.lead.clone());
        for idx in term.powers.keys() {
            needed.insert(idx.clone());
        }
    }
    let mut per_cube: Vec<BTreeMap<Vec<u32>, DyInterval>> =
        vec![BTreeMap::new(); candidates.len()];
    let mut v_map: BTreeMap<Vec<u32>, DyInterval> = BTreeMap::new();
    for idx in &needed {
        let mut sum = DyInterval::zero();
        for (slot, q) in per_cube.iter_mut().zip(candidates) {
            let enc = phi_q_encl(engine, q, dec.eps(), xe, idx, pp);
            sum = sum.add(&enc).shrink(pp + 16);
            slot.insert(idx.clone(), enc);
        }
        v_map.insert(idx.clone(), sum);
    }
    let v = clamp_cover_sum(&v_map[&vec![0; kbar.len()]]);
    per_cube
        .iter()
        .map(|u_map| assemble_quotient(&expansion, u_map, &v_map, &v, pp))
        .collect()
}

/// Enclosure of `d^kbar phistar_Q` for a single cube, with the normalizing
/// sum taken over `candidates` (see [`phi_star_batch_encl`]).
pub(crate) fn phi_star_encl(
    engine: &Engine,
    dec: &Decomposition,
    q: &DyadicCube,
    candidates: &[DyadicCube],
    xe: &[DyInterval],
    kbar: &[u32],
    p: i64,
) -> DyInterval {
    let expansion = quotient_expand(kbar);
    let slack = 64 - (candidates.len().max(1) as u64).leading_zeros() as i64;
    let pp = p + slack + 8;
    let mut needed: BTreeSet<Vec<u32>> = BTreeSet::new();
    needed.insert(vec![0; kbar.len()]);
    for term in &expansion.terms {
        needed.insert(term.lead.clone());
        for idx in term.powers.keys() {
            needed.insert(idx.clone());
        }
    }
    let mut u_map: BTreeMap<Vec<u32>, DyInterval> = BTreeMap::new();
    let mut v_map: BTreeMap<Vec<u32>, DyInterval> = BTreeMap::new();
    for idx in &needed {
        u_map.insert(idx.clone(), phi_q_encl(engine, q, dec.eps(), xe, idx, pp));
        let mut sum = DyInterval::zero();
        for qq in candidates {
            sum = sum
                .add(&phi_q_encl(engine, qq, dec.eps(), xe, idx, pp))
                .shrink(pp + 16);
        }
        v_map.insert(idx.clone(), sum);
    }
    let v = clamp_cover_sum(&v_map[&vec![0; kbar.len()]]);
    assemble_quotient(&expansion, &u_map, &v_map, &v, pp)
}

/// Apply the cover certificate: the bump sum is at least 1 wherever a
/// normalized bump is evaluated, so its enclosure may be clamped from below.
fn clamp_cover_sum(v0: &DyInterval) -> DyInterval {
    let one = Dyadic::one();
    let lo = if *v0.lo() < one { one.clone() } else { v0.lo().clone() };
    let hi = if *v0.hi() < one { one } else { v0.hi().clone() };
    DyInterval::new(lo, hi)
}

/// Evaluate the quotient-derivative expansion on concrete enclosures of the
/// numerator and denominator derivatives.
fn assemble_quotient(
    expansion: &QuotientExpansion,
    u_map: &BTreeMap<Vec<u32>, DyInterval>,
    v_map: &BTreeMap<Vec<u32>, DyInterval>,
    v: &DyInterval,
    pp: i64,
) -> DyInterval {
    let mut acc = DyInterval::zero();
    for term in &expansion.terms {
        let mut num = u_map[&term.lead].clone();
        let mut den_pow = 1u32;
        for (idx, m) in &term.powers {
            num = num.mul(&v_map[idx].pow(*m));
            den_pow += m;
        }
        let quotient = num.div(&v.pow(den_pow), pp).expect("denominator at least 1");
        acc = acc
            .add(&quotient.scale(&Dyadic::from_bigint(term.coeff.clone())))
            .shrink(pp + 16);
    }
    acc.shrink(pp)
}

/// Which cube bump to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiKind {
    /// The raw bump `phi_Q`, supported on the slightly enlarged cube.
    Phi,
    /// The normalized bump `phistar_Q = phi_Q / Phi`; the evaluation point
    /// must be certifiably off the closed set.
    PhiStar,
}

/// Evaluate `d^kbar phi_Q(x)` or `d^kbar phistar_Q(x)` to within `2^-i`.
///
/// For [`PhiKind::PhiStar`] the point must lie off the closed set; points on
/// (or not certifiably off) the set yield [`Error::PointPossiblyInSet`].
pub fn phi_eval(
    dec: &Decomposition,
    q: &DyadicCube,
    kind: PhiKind,
    x: &CPoint,
    kbar: &[u32],
    i: i64,
) -> Result<Dyadic> {
    let n = dec.set().dim();
    for got in [q.dim(), x.dim(), kbar.len()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    let kmax = kbar.iter().copied().max().unwrap_or(0);
    let engine = Engine::new(kmax);
    let candidates = match kind {
        PhiKind::Phi => Vec::new(),
        PhiKind::PhiStar => dec.enum_gx(x, GX_STAGE_BUDGET)?.cubes,
    };
    let mut p = i + 8;
    loop {
        let xe: Vec<DyInterval> = (0..n).map(|c| x.coord_encl(c, p + 2)).collect();
        let enc = match kind {
            PhiKind::Phi => phi_q_encl(&engine, q, dec.eps(), &xe, kbar, p),
            PhiKind::PhiStar => phi_star_encl(&engine, dec, q, &candidates, &xe, kbar, p),
        };
        if enc.width() <= Dyadic::pow2(-(i + 4)) {
            return Ok(enc.mid().round(i + 5, Round::Nearest));
        }
        p += 8;
        assert!(p < i + (1 << 20), "no convergence; this is a bug");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedset::{SetPart, SetSpec, TotalClosedSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent arithmetic path for reference values: rational Taylor
    /// brackets of `exp(-c)` for rational `c > 0`, no dyadic or interval
    /// code involved.
    mod oracle {
        use num_bigint::BigInt;
        use num_rational::Ratio;
        use num_traits::One;

        pub fn exp_neg_brackets(num: u64, den: u64, bits: u32) -> (Ratio<BigInt>, Ratio<BigInt>) {
            assert!(num > 0 && den > 0);
            let c = Ratio::new(BigInt::from(num), BigInt::from(den));
            let tol = Ratio::new(BigInt::one(), BigInt::one() << (bits + 2) as u64);
            let mut term = Ratio::from(BigInt::one());
            let mut sum = term.clone();
            let mut j: u64 = 1;
            loop {
                term = term * &c / Ratio::from(BigInt::from(j));
                sum += &term;
                // once the term ratio c/(j+1) drops below 1/2 the remaining
                // tail is at most the current term
                let tail_small = BigInt::from(2) * c.numer() <= BigInt::from(j + 1) * c.denom();
                if tail_small && term < tol {
                    break;
                }
                j += 1;
                assert!(j < 10_000, "series failed to converge");
            }
            let upper = &sum + &term;
            (upper.recip(), sum.recip())
        }
    }

    fn ratio(num: i64, den: i64) -> Ratio<BigInt> {
        Ratio::new(BigInt::from(num), BigInt::from(den))
    }

    fn punctured_line() -> Decomposition {
        let spec = SetSpec {
            dim: 1,
            parts: vec![SetPart::Point { coords: vec![Dyadic::zero()] }],
        };
        Decomposition::new(TotalClosedSet::make_set(spec).unwrap())
    }

    fn cube(level: i64, corner: &[i64]) -> DyadicCube {
        DyadicCube::new(level, corner.to_vec())
    }

    #[test]
    fn tables_match_hand_computed_values() {
        let tab = deriv_bounds(6);
        let a: Vec<i64> = (0..=4).map(|k| {
            i64::try_from(tab.a_int(k)).unwrap()
        }).collect();
        assert_eq!(a, vec![1, 1, 3, 13, 73]);
        assert_eq!(tab.p_poly(2), &[BigInt::from(1), BigInt::from(-2)]);
        assert_eq!(tab.p_poly(3), &[BigInt::from(1), BigInt::from(-6), BigInt::from(6)]);
        assert_eq!(tab.h(0), Dyadic::from_int(1));
        assert_eq!(tab.h(1), Dyadic::from_int(4));
        assert_eq!(tab.h(2), Dyadic::from_int(768));
        assert_eq!(tab.h(3), Dyadic::from_int(606_528));
        assert_eq!(tab.t(0), Dyadic::from_int(1));
        assert_eq!(tab.t(1), Dyadic::from_int(12));
        assert_eq!(tab.t(2), Dyadic::from_int(2496));
        assert_eq!(tab.b(0), Dyadic::from_int(8));
        assert_eq!(tab.b(1), Dyadic::from_int(768));
        assert_eq!(tab.b(2), Dyadic::from_int(1_277_952));
        for k in 0..6 {
            assert!(tab.a_int(k + 1) >= tab.a_int(k), "A not monotone at {k}");
            assert!(tab.h_int(k + 1) >= tab.h_int(k), "H not monotone at {k}");
            assert!(tab.t_int(k + 1) >= tab.t_int(k), "T not monotone at {k}");
            assert!(tab.b_int(k + 1) >= tab.b_int(k), "B not monotone at {k}");
        }
    }

    #[test]
    fn quotient_expansion_small_orders_match_hand_derivation() {
        let e0 = quotient_expand(&[0]);
        assert_eq!(e0.terms.len(), 1);
        assert_eq!(e0.terms[0].coeff, BigInt::one());
        assert_eq!(e0.terms[0].lead, vec![0]);
        assert!(e0.terms[0].powers.is_empty());
        assert_eq!(e0.terms[0].den_pow(), 1);

        // (u/v)' = u'/v - u v'/v^2
        let e1 = quotient_expand(&[1]);
        assert_eq!(e1.terms.len(), 2);
        let find = |e: &QuotientExpansion, lead: &[u32], powers: &[(&[u32], u32)]| -> BigInt {
            let powers: BTreeMap<Vec<u32>, u32> =
                powers.iter().map(|(i, m)| (i.to_vec(), *m)).collect();
            e.terms
                .iter()
                .find(|t| t.lead == lead && t.powers == powers)
                .unwrap_or_else(|| panic!("missing term {lead:?} {powers:?}"))
                .coeff
                .clone()
        };
        assert_eq!(find(&e1, &[1], &[]), BigInt::from(1));
        assert_eq!(find(&e1, &[0], &[(&[1], 1)]), BigInt::from(-1));

        // (u/v)'' = u''/v - 2u'v'/v^2 - u v''/v^2 + 2u (v')^2/v^3
        let e2 = quotient_expand(&[2]);
        assert_eq!(e2.terms.len(), 4);
        assert_eq!(find(&e2, &[2], &[]), BigInt::from(1));
        assert_eq!(find(&e2, &[1], &[(&[1], 1)]), BigInt::from(-2));
        assert_eq!(find(&e2, &[0], &[(&[2], 1)]), BigInt::from(-1));
        assert_eq!(find(&e2, &[0], &[(&[1], 2)]), BigInt::from(2));

        // mixed second derivative in two variables
        let e11 = quotient_expand(&[1, 1]);
        assert_eq!(e11.terms.len(), 5);
        assert_eq!(find(&e11, &[1, 1], &[]), BigInt::from(1));
        assert_eq!(find(&e11, &[1, 0], &[(&[0, 1], 1)]), BigInt::from(-1));
        assert_eq!(find(&e11, &[0, 1], &[(&[1, 0], 1)]), BigInt::from(-1));
        assert_eq!(find(&e11, &[0, 0], &[(&[1, 1], 1)]), BigInt::from(-1));
        assert_eq!(
            find(&e11, &[0, 0], &[(&[1, 0], 1), (&[0, 1], 1)]),
            BigInt::from(2)
        );
    }

    /// Evaluate an expansion on the concrete pair u = x^2, v = 1 + x^2 and
    /// compare against quotient derivatives computed by iterated polynomial
    /// quotient rule — an entirely separate arithmetic path.
    #[test]
    fn quotient_expansion_matches_polynomial_quotient_rule() {
        type Poly = Vec<Ratio<BigInt>>;
        fn differentiate(p: &Poly) -> Poly {
            (1..p.len())
                .map(|j| &p[j] * Ratio::from(BigInt::from(j as i64)))
                .collect()
        }
        fn multiply(a: &Poly, b: &Poly) -> Poly {
            let mut out = vec![Ratio::from(BigInt::zero()); a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            out
        }
        fn evaluate(p: &Poly, x: &Ratio<BigInt>) -> Ratio<BigInt> {
            p.iter()
                .rev()
                .fold(Ratio::from(BigInt::zero()), |acc, c| acc * x + c)
        }
        let r = |v: i64| Ratio::from(BigInt::from(v));
        let u: Poly = vec![r(0), r(0), r(1)]; // x^2
        let v: Poly = vec![r(1), r(0), r(1)]; // 1 + x^2
        let x0 = ratio(1, 3);

        // reference: d^k (u/v) via (N/D)' = (N'D - ND')/D^2 on polynomials
        let mut num = u.clone();
        let mut den = v.clone();
        let mut reference = Vec::new();
        for _ in 0..=5 {
            reference.push(evaluate(&num, &x0) / evaluate(&den, &x0));
            let dnum = differentiate(&num);
            let dden = differentiate(&den);
            let mut next = multiply(&dnum, &den);
            for (j, c) in multiply(&num, &dden).iter().enumerate() {
                next[j] -= c;
            }
            num = next;
            den = multiply(&den, &den);
        }

        // derivative samples of u and v at x0
        let mut u_d = Vec::new();
        let mut v_d = Vec::new();
        let mut up = u.clone();
        let mut vp = v.clone();
        for _ in 0..=5 {
            u_d.push(evaluate(&up, &x0));
            v_d.push(evaluate(&vp, &x0));
            up = differentiate(&up);
            vp = differentiate(&vp);
        }

        for k in 0..=5u32 {
            let expansion = quotient_expand(&[k]);
            let mut total = Ratio::from(BigInt::zero());
            for term in &expansion.terms {
                let mut val = Ratio::from(term.coeff.clone()) * &u_d[term.lead[0] as usize];
                let mut den_pow = 1u32;
                for (idx, m) in &term.powers {
                    for _ in 0..*m {
                        val *= &v_d[idx[0] as usize];
                    }
                    den_pow += m;
                }
                for _ in 0..den_pow {
                    val /= &v_d[0];
                }
                total += val;
            }
            assert_eq!(total, reference[k as usize], "order {k}");
        }
    }

    #[test]
    fn quotient_expansion_degree_identity_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x51_BAD_CAFE);
        for _ in 0..20 {
            let n = rng.gen_range(1..=3);
            let kbar: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=3)).collect();
            let order: u32 = kbar.iter().sum();
            let expansion = quotient_expand(&kbar);
            assert!(!expansion.terms.is_empty());
            for term in &expansion.terms {
                assert!(!term.coeff.is_zero());
                let lead_order: u32 = term.lead.iter().sum();
                let power_order: u32 = term
                    .powers
                    .iter()
                    .map(|(idx, m)| idx.iter().sum::<u32>() * m)
                    .sum();
                assert_eq!(lead_order + power_order, order, "degree identity");
                assert!(term.powers.keys().all(|idx| idx.iter().sum::<u32>() > 0));
                assert_eq!(term.den_pow(), 1 + term.powers.values().sum::<u32>());
            }
        }
    }

    #[test]
    fn flat_exponential_matches_series_oracle() {
        // lambda(1) = exp(-1)
        let (lo, hi) = oracle::exp_neg_brackets(1, 1, 40);
        let res = lambda_deriv(&CReal::from_ratio(ratio(1, 1)), 0, 24).to_ratio();
        assert!(res >= lo - ratio_pow2(-24) && res <= hi + ratio_pow2(-24));

        // lambda'(1/2) = 4 exp(-2)
        let (lo, hi) = oracle::exp_neg_brackets(2, 1, 40);
        let res = lambda_deriv(&CReal::from_ratio(ratio(1, 2)), 1, 24).to_ratio();
        let four = ratio(4, 1);
        assert!(res >= &four * lo - ratio_pow2(-24) && res <= four * hi + ratio_pow2(-24));

        // lambda'''(1) = exp(-1) * (1 - 6 + 6)
        let (lo, hi) = oracle::exp_neg_brackets(1, 1, 40);
        let res = lambda_deriv(&CReal::from_ratio(ratio(1, 1)), 3, 24).to_ratio();
        assert!(res >= lo - ratio_pow2(-24) && res <= hi + ratio_pow2(-24));

        // lambda''(1/32) = exp(-32) * 32^4 * (1 - 2/32)
        let (lo, hi) = oracle::exp_neg_brackets(32, 1, 80);
        let scale = ratio(32 * 32 * 32 * 32, 1) * ratio(15, 16);
        let res = lambda_deriv(&CReal::from_ratio(ratio(1, 32)), 2, 40).to_ratio();
        assert!(res >= &scale * lo - ratio_pow2(-40) && res <= scale * hi + ratio_pow2(-40));
    }

    #[test]
    fn flat_exponential_vanishes_left_of_zero_and_near_it() {
        assert!(lambda_deriv(&CReal::from_ratio(ratio(-1, 1)), 0, 30).is_zero());
        assert!(lambda_deriv(&CReal::from_ratio(ratio(-1, 1)), 2, 30).is_zero());
        assert!(lambda_deriv(&CReal::from_ratio(ratio(0, 1)), 1, 30).is_zero());
        // extreme flatness: far below the threshold, decided without ever
        // forming exp(-1/x)
        let tiny = CReal::from_ratio(Ratio::new(BigInt::one(), BigInt::one() << 120u32));
        assert!(lambda_deriv(&tiny, 3, 40).is_zero());
    }

    #[test]
    fn sigmoid_matches_expected_values() {
        let eps = Dyadic::pow2(-3);
        // mu(1/2) = 1/2 exactly (the two flat exponentials agree there)
        let res = mu_nu_deriv(MuNu::Mu, &CReal::from_ratio(ratio(1, 2)), 0, 24, &eps);
        assert!((res.to_ratio() - ratio(1, 2)).abs() <= ratio_pow2(-23));
        // flat tails are exact
        assert!(mu_nu_deriv(MuNu::Mu, &CReal::from_ratio(ratio(-3, 1)), 0, 20, &eps).is_zero());
        assert_eq!(
            mu_nu_deriv(MuNu::Mu, &CReal::from_ratio(ratio(5, 1)), 0, 20, &eps),
            Dyadic::one()
        );
        assert!(mu_nu_deriv(MuNu::Mu, &CReal::from_ratio(ratio(5, 1)), 2, 20, &eps).is_zero());
        // strictly increasing across the ramp
        let at = |num: i64, den: i64| {
            mu_nu_deriv(MuNu::Mu, &CReal::from_ratio(ratio(num, den)), 0, 20, &eps).to_ratio()
        };
        assert!(at(1, 4) < at(1, 2) && at(1, 2) < at(3, 4));
        // mu(x) + mu(1-x) = 1
        let sum = at(1, 3) + at(2, 3);
        assert!((sum - ratio(1, 1)).abs() <= ratio_pow2(-18));
        // the ramp only moves on (0, 1)
        assert!(at(1, 4) > ratio(0, 1) && at(3, 4) < ratio(1, 1));
    }

    #[test]
    fn sigmoid_flat_near_zero_without_overflow() {
        // 1/x here is ~2^80; the sliver bound must answer without forming
        // exp(-2^80)
        let eps = Dyadic::pow2(-3);
        let tiny = CReal::from_ratio(Ratio::new(BigInt::one(), BigInt::one() << 80u32));
        let res = mu_nu_deriv(MuNu::Mu, &tiny, 1, 20, &eps);
        assert!(res.to_ratio().abs() <= ratio_pow2(-19));
    }

    #[test]
    fn plateau_matches_expected_values() {
        let eps = Dyadic::pow2(-3);
        let nu = |num: i64, den: i64, k: u32, i: i64| {
            mu_nu_deriv(MuNu::Nu, &CReal::from_ratio(ratio(num, den)), k, i, &eps)
        };
        // plateau and support are exact
        assert_eq!(nu(0, 1, 0, 20), Dyadic::one());
        assert_eq!(nu(1, 2, 0, 20), Dyadic::one());
        assert!(nu(0, 1, 1, 20).is_zero());
        assert!(nu(25, 16, 0, 20).is_zero());
        assert!(nu(-25, 16, 0, 20).is_zero());
        assert!(nu(25, 16, 3, 20).is_zero());
        // transition zone: symmetric, strictly between 0 and 1
        let up = nu(35, 64, 0, 20);
        let down = nu(-35, 64, 0, 20);
        assert_eq!(up, down);
        assert!(up.to_ratio() > ratio(0, 1) && up.to_ratio() < ratio(1, 1));
        // there the left factor is saturated, so nu(35/64) = mu(1/4)
        let mu_quarter = mu_nu_deriv(MuNu::Mu, &CReal::from_ratio(ratio(1, 4)), 0, 20, &eps);
        assert!((up.to_ratio() - mu_quarter.to_ratio()).abs() <= ratio_pow2(-18));
    }

    #[test]
    fn sigmoid_and_plateau_stay_in_range_sampled() {
        let eps = Dyadic::pow2(-3);
        let mut rng = ChaCha8Rng::seed_from_u64(0xB0_B0_CAFE);
        let tol = ratio_pow2(-12);
        for _ in 0..120 {
            let m: i64 = rng.gen_range(-512..=768);
            let x = CReal::from_ratio(ratio(m, 256));
            let mu = mu_nu_deriv(MuNu::Mu, &x, 0, 12, &eps).to_ratio();
            assert!(mu >= -tol.clone() && mu <= ratio(1, 1) + tol.clone());
            let nu = mu_nu_deriv(MuNu::Nu, &x, 0, 12, &eps).to_ratio();
            assert!(nu >= -tol.clone() && nu <= ratio(1, 1) + tol.clone());
        }
    }

    #[test]
    fn flat_exponential_derivative_bounds_hold_sampled() {
        let tab = deriv_bounds(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0x1A_4B_DA);
        for k in 0..=6u32 {
            let bound = Ratio::from(tab.h_int(k).clone()) + ratio_pow2(-11);
            for _ in 0..60 {
                let m: i64 = rng.gen_range(1..1024);
                let x = CReal::from_ratio(ratio(m, 1024));
                let val = lambda_deriv(&x, k, 12).to_ratio();
                assert!(val.abs() <= bound, "order {k} at {m}/1024");
            }
        }
    }

    #[test]
    fn cube_bump_is_one_inside_and_zero_outside() {
        let dec = punctured_line();
        let q = cube(0, &[1]); // [1, 2], center 3/2, support [15/16, 33/16]
        let eval = |num: i64, log_den: i64, kbar: &[u32], i: i64| {
            phi_eval(
                &dec,
                &q,
                PhiKind::Phi,
                &CPoint::from_dyadics(vec![Dyadic::int_times_pow2(num, -log_den)]),
                kbar,
                i,
            )
            .unwrap()
        };
        assert_eq!(eval(3, 1, &[0], 20), Dyadic::one()); // center
        assert_eq!(eval(1, 0, &[0], 20), Dyadic::one()); // plateau edge
        assert!(eval(3, 0, &[0], 20).is_zero()); // outside the support
        assert!(eval(29, 5, &[0], 20).is_zero()); // 29/32 < 15/16
        assert!(eval(3, 1, &[1], 20).is_zero()); // flat at the center
        let transition = eval(31, 5, &[0], 20); // 31/32 in (15/16, 1)
        assert!(transition.signum() > 0 && transition < Dyadic::one());
        // determinism
        assert_eq!(transition, eval(31, 5, &[0], 20));
    }

    #[test]
    fn bump_dimension_mismatch_is_reported() {
        let dec = punctured_line();
        let q = cube(0, &[1, 1]);
        let x = CPoint::from_ints(&[1]);
        let err = phi_eval(&dec, &q, PhiKind::Phi, &x, &[0], 20).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn normalized_bumps_sum_to_one_off_the_set() {
        let dec = punctured_line();
        // x = 3/2 sits on the plateau of [1,2] and outside every other
        // support, so its normalized bump is exactly 1
        let x = CPoint::from_dyadics(vec![Dyadic::int_times_pow2(3, -1)]);
        let res = phi_eval(&dec, &cube(0, &[1]), PhiKind::PhiStar, &x, &[0], 21).unwrap();
        assert_eq!(res, Dyadic::one());

        // x = 31/32 lies in the overlap of the supports of [1/2,1] and [1,2]
        let x = CPoint::from_dyadics(vec![Dyadic::int_times_pow2(31, -5)]);
        let gx = dec.enum_gx(&x, 64).unwrap();
        let mut sum = Ratio::from(BigInt::zero());
        let mut positives = 0;
        for q in &gx.cubes {
            let val = phi_eval(&dec, q, PhiKind::PhiStar, &x, &[0], 21).unwrap();
            assert!(val.to_ratio() >= -ratio_pow2(-21));
            assert!(val.to_ratio() <= ratio(1, 1) + ratio_pow2(-21));
            if val.signum() > 0 {
                positives += 1;
            }
            sum += val.to_ratio();
        }
        assert!(positives >= 2, "expected at least two overlapping bumps");
        assert!((sum - ratio(1, 1)).abs() <= ratio_pow2(-20));
    }

    #[test]
    fn normalized_bump_derivatives_sum_to_zero() {
        let dec = punctured_line();
        let x = CPoint::from_dyadics(vec![Dyadic::int_times_pow2(31, -5)]);
        let gx = dec.enum_gx(&x, 64).unwrap();
        for kbar in [[1u32], [2u32]] {
            let mut sum = Ratio::from(BigInt::zero());
            for q in &gx.cubes {
                sum += phi_eval(&dec, q, PhiKind::PhiStar, &x, &kbar, 21)
                    .unwrap()
                    .to_ratio();
            }
            assert!(sum.abs() <= ratio_pow2(-16), "order {kbar:?}: {sum}");
        }
    }

    #[test]
    fn normalized_bump_rejects_points_on_the_set() {
        let dec = punctured_line();
        let x = CPoint::from_ints(&[0]);
        let err = phi_eval(&dec, &cube(0, &[1]), PhiKind::PhiStar, &x, &[0], 10).unwrap_err();
        assert!(matches!(err, Error::PointPossiblyInSet));
    }

    #[test]
    fn normalized_bump_bound_table_frozen_values() {
        assert_eq!(bprime(&[0], 1), Dyadic::from_int(8));
        assert_eq!(bprime(&[1], 1), Dyadic::from_int(25_418_496));
        assert_eq!(bprime(&[0, 0], 2), Dyadic::from_int(64));
        // second order, assembled from the independently verified tables and
        // term list
        let tab = deriv_bounds(2);
        let n1 = BigInt::from(197);
        let b = |k: u32| tab.b_int(k).clone();
        let step = &n1 * b(1) * BigInt::from(21);
        let expected = b(2)
            + BigInt::from(2) * b(1) * &step
            + b(0) * &n1 * b(2) * BigInt::from(441)
            + BigInt::from(2) * b(0) * &step * &step;
        assert_eq!(bprime(&[2], 1), Dyadic::from_bigint(expected));
        // bounds grow with the dimension and the order
        assert!(bprime(&[1], 2) > bprime(&[1], 1));
        assert!(bprime(&[2], 1) > bprime(&[1], 1));
    }
}
