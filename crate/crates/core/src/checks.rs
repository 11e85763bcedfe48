//! Pass/fail verification harnesses over every layer of the library: set
//! information consistency, decomposition geometry certificates, partition
//! sums, derivative-bound tables, jet compatibility, and extension error
//! estimates.
//!
//! Every harness returns a [`CheckReport`] — a verdict plus the amount of
//! evidence gathered and the first counterexample found — so the command-line
//! `check` runner and the test suites can share one implementation. All
//! sampling is driven by an explicit seed and is fully deterministic.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::ToPrimitive;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bump::{self, deriv_bounds, lambda_deriv, mu_nu_deriv, MuNu};
use crate::closedset::{SetPart, SetSpec, TotalClosedSet};
use crate::cubes::{Decomposition, DyadicCube};
use crate::exact::{dist_encl, square, CPoint, CReal, DyInterval, Dyadic};
use crate::error::Result;
use crate::extend::{
    jet_make, mi_order, multi_indices_upto, taylor_encl, wet0_eval, Extender, FnOnF, JetSpec,
    WhitneyJet,
};

/// How many distance-refinement stages a point query may consume before the
/// point is treated as possibly belonging to the set.
const STAGE_BUDGET: u32 = 64;

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Outcome of one verification harness.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    /// Stable kebab-case identifier of the harness (suites may append a
    /// bracketed label naming the configuration under test).
    pub name: String,
    /// Verdict: true iff evidence was gathered and nothing failed.
    pub passed: bool,
    /// Number of individual facts tested.
    pub samples: u64,
    /// Number of facts that failed.
    pub failures: u64,
    /// First counterexample, or a note about the evidence; empty if silent.
    pub detail: String,
}

impl CheckReport {
    /// A report that failed before gathering any evidence.
    pub fn error(name: &str, detail: impl fmt::Display) -> CheckReport {
        CheckReport {
            name: name.into(),
            passed: false,
            samples: 0,
            failures: 0,
            detail: detail.to_string(),
        }
    }

    /// One human-readable verdict line.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        if self.detail.is_empty() {
            format!("{verdict} {} ({} samples)", self.name, self.samples)
        } else {
            format!("{verdict} {} ({} samples): {}", self.name, self.samples, self.detail)
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

/// Evidence accumulator: counts samples and failures, keeps the first
/// counterexample message.
struct Tally {
    samples: u64,
    failures: u64,
    first: Option<String>,
    note: Option<String>,
}

impl Tally {
    fn new() -> Tally {
        Tally { samples: 0, failures: 0, first: None, note: None }
    }

    fn pass(&mut self) {
        self.samples += 1;
    }

    fn fail(&mut self, msg: impl FnOnce() -> String) {
        self.samples += 1;
        self.failures += 1;
        if self.first.is_none() {
            self.first = Some(msg());
        }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if ok {
            self.pass();
        } else {
            self.fail(msg);
        }
    }

    /// A report never passes without evidence.
    fn report(self, name: &str) -> CheckReport {
        let passed = self.failures == 0 && self.samples > 0;
        let detail = match self.first {
            Some(m) => m,
            None if self.samples == 0 => "no admissible samples were drawn".into(),
            None => self.note.unwrap_or_default(),
        };
        CheckReport { name: name.into(), passed, samples: self.samples, failures: self.failures, detail }
    }
}

// ---------------------------------------------------------------------------
// Seeded sampling
// ---------------------------------------------------------------------------

/// The deterministic generator used by every harness: a fixed, portable
/// stream cipher, so a seed pins every sample on every platform.
pub fn sample_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from the `2^-frac_bits` grid inside `[lo, hi]`.
fn rand_in(rng: &mut ChaCha8Rng, lo: &Dyadic, hi: &Dyadic, frac_bits: i64) -> Dyadic {
    let lo_m = lo.shl(frac_bits).ceil_int().to_i64().expect("window exceeds the sampling grid");
    let hi_m = hi.shl(frac_bits).floor_int().to_i64().expect("window exceeds the sampling grid");
    assert!(lo_m <= hi_m, "empty sampling window");
    Dyadic::int_times_pow2(rng.gen_range(lo_m..=hi_m), -frac_bits)
}

fn rand_coords(
    rng: &mut ChaCha8Rng,
    bmin: &[Dyadic],
    bmax: &[Dyadic],
    frac_bits: i64,
) -> Vec<Dyadic> {
    (0..bmin.len()).map(|c| rand_in(rng, &bmin[c], &bmax[c], frac_bits)).collect()
}

/// The set's bounding box inflated by `margin` on every side; sets without a
/// known bounding box get the symmetric box of half-width `margin`.
pub fn hull_window(set: &TotalClosedSet, margin: i64) -> (Vec<Dyadic>, Vec<Dyadic>) {
    let m = Dyadic::from_int(margin);
    match set.hull() {
        Some((lo, hi)) => (
            lo.iter().map(|v| v.sub(&m)).collect(),
            hi.iter().map(|v| v.add(&m)).collect(),
        ),
        None => (vec![m.neg(); set.dim()], vec![m; set.dim()]),
    }
}

/// Draw a grid point of the window that is certifiably off the set
/// (distance at least `2^-6`), or give up after `attempts` draws.
fn draw_off_set(
    rng: &mut ChaCha8Rng,
    set: &TotalClosedSet,
    bmin: &[Dyadic],
    bmax: &[Dyadic],
    frac_bits: i64,
    attempts: u32,
) -> Option<Vec<Dyadic>> {
    let floor = Dyadic::pow2(-6).add(&Dyadic::pow2(-10));
    for _ in 0..attempts {
        let x = rand_coords(rng, bmin, bmax, frac_bits);
        let Ok(d) = set.dist_dyadic(&x, 10) else { return None };
        if d >= floor {
            return Some(x);
        }
    }
    None
}

/// Lower bound of `|v|` over an interval enclosure of `v`.
fn abs_lower(e: &DyInterval) -> Dyadic {
    if e.lo().signum() > 0 {
        e.lo().clone()
    } else if e.hi().signum() < 0 {
        e.hi().abs()
    } else {
        Dyadic::zero()
    }
}

// ---------------------------------------------------------------------------
// Set information
// ---------------------------------------------------------------------------

/// Positive and negative information must agree: no listed dense point may
/// lie strictly inside any enumerated complement ball. Violations are only
/// reported when certified (the whole coordinate enclosure falls inside the
/// ball); undecided comparisons at the highest precision count as passes.
pub fn check_set_consistency(set: &TotalClosedSet, dense_n: usize, balls_n: usize) -> CheckReport {
    let mut t = Tally::new();
    let n = set.dim();
    for k in 0..dense_n {
        let p = set.dense_point(k);
        for j in 0..balls_n {
            let Some(ball) = set.complement_ball(j) else { break };
            let r2 = ball.radius.mul(&ball.radius);
            let mut inside = false;
            for bits in [24i64, 72, 144] {
                let mut s = DyInterval::zero();
                for c in 0..n {
                    let d = p.coord_encl(c, bits).sub(&DyInterval::point(ball.center[c].clone()));
                    s = s.add(&square(&d));
                }
                if *s.hi() < r2 {
                    inside = true;
                    break;
                }
                if *s.lo() >= r2 {
                    break;
                }
            }
            t.check(!inside, || {
                format!("dense point {k} lies inside complement ball {j} (radius {})",
                    ball.radius.to_decimal_string())
            });
        }
    }
    t.report("set-consistency")
}

// ---------------------------------------------------------------------------
// Decomposition geometry
// ---------------------------------------------------------------------------

fn cube_tag(q: &DyadicCube) -> String {
    format!("cube level {} corner {:?}", q.level, q.corner)
}

/// Every cube of the decomposition meeting the window must carry a certified
/// distance enclosure witnessing `(1/2) diam(Q) < d(Q, F) < 5 diam(Q)`.
/// Both comparisons are taken on squares so the irrational diameter never
/// has to be rounded.
pub fn check_distance_certificates(
    dec: &Decomposition,
    bmin: &[Dyadic],
    bmax: &[Dyadic],
    kmin: i64,
    kmax: i64,
    min_cubes: u64,
) -> CheckReport {
    let cubes = match dec.enum_region(bmin, bmax, kmin, kmax) {
        Ok(c) => c,
        Err(e) => return CheckReport::error("distance-certificates", e),
    };
    let n = dec.set().dim() as i64;
    let mut t = Tally::new();
    for q in &cubes {
        // diam(Q)^2 = n 4^-level; thresholds diam^2/4 and 25 diam^2.
        let quarter = Dyadic::int_times_pow2(n, -2 * q.level - 2);
        let twenty_five = Dyadic::int_times_pow2(25 * n, -2 * q.level);
        let mut certified = false;
        let mut p = (q.level + 16).max(16);
        for _ in 0..6 {
            let Some(e) = dec.cube_dist_encl(q, p) else { break };
            let lo = if e.lo().signum() > 0 { e.lo().clone() } else { Dyadic::zero() };
            if lo.mul(&lo) > quarter && e.hi().mul(e.hi()) < twenty_five {
                certified = true;
                break;
            }
            p += 16;
        }
        t.check(certified, || format!("{} lacks a distance certificate", cube_tag(q)));
    }
    if t.samples < min_cubes {
        return CheckReport::error(
            "distance-certificates",
            format!("window produced {} cubes; need at least {min_cubes}", t.samples),
        );
    }
    t.report("distance-certificates")
}

/// Seeded random points at moderate distance from the set (between `2^-8`
/// and `2^8`, certified by the distance oracle) must each be covered by a
/// cube of the decomposition.
pub fn check_covering(dec: &Decomposition, seed: u64, samples: u64) -> CheckReport {
    let set = dec.set();
    let (bmin, bmax) = hull_window(set, 257);
    let mut rng = sample_rng(seed);
    let mut t = Tally::new();
    let lo = Dyadic::pow2(-8).add(&Dyadic::pow2(-12));
    let hi = Dyadic::pow2(8).sub(&Dyadic::pow2(-12));
    let mut attempts: u64 = 0;
    while t.samples < samples && attempts < samples.saturating_mul(200) {
        attempts += 1;
        let x = rand_coords(&mut rng, &bmin, &bmax, 6);
        let d = match set.dist_dyadic(&x, 12) {
            Ok(d) => d,
            Err(e) => return CheckReport::error("covering", e),
        };
        if d < lo || d > hi {
            continue;
        }
        match dec.find_covering_cube(&x) {
            Ok(Some(q)) if q.contains(&x) => t.pass(),
            Ok(Some(q)) => t.fail(|| {
                format!("{} was returned but does not contain the sample point", cube_tag(&q))
            }),
            Ok(None) => t.fail(|| {
                let coords: Vec<String> = x.iter().map(|v| v.to_decimal_string()).collect();
                format!("no cube covers the point ({})", coords.join(", "))
            }),
            Err(e) => t.fail(|| format!("covering query failed: {e}")),
        }
    }
    t.report("covering")
}

// ---------------------------------------------------------------------------
// Partition of unity
// ---------------------------------------------------------------------------

/// At seeded off-set points, the normalized bumps over the point's candidate
/// cubes must sum to 1 within `2^-sum_bits`, and each derivative sum up to
/// order `max_order` must vanish within `2^-deriv_bits`. Returns the unity
/// report and the derivative report.
pub fn check_partition_sums(
    dec: &Decomposition,
    seed: u64,
    points: u64,
    max_order: u32,
    sum_bits: i64,
    deriv_bits: i64,
) -> Vec<CheckReport> {
    let set = dec.set();
    let n = set.dim();
    let (bmin, bmax) = hull_window(set, 3);
    let mut rng = sample_rng(seed);
    let engine = bump::Engine::new(max_order);
    let mut unity = Tally::new();
    let mut deriv = Tally::new();
    for _ in 0..points {
        let Some(x) = draw_off_set(&mut rng, set, &bmin, &bmax, 8, 400) else { break };
        let xp = CPoint::from_dyadics(x.clone());
        let cubes = match dec.enum_gx(&xp, STAGE_BUDGET) {
            Ok(info) => info.cubes,
            Err(e) => {
                unity.fail(|| format!("candidate-cube query failed: {e}"));
                continue;
            }
        };
        let xe: Vec<DyInterval> =
            x.iter().map(|v| DyInterval::point(v.clone())).collect();
        for lbar in multi_indices_upto(n, max_order) {
            let order0 = mi_order(&lbar) == 0;
            let (bits, tally) =
                if order0 { (sum_bits, &mut unity) } else { (deriv_bits, &mut deriv) };
            let target = if order0 { Dyadic::one() } else { Dyadic::zero() };
            let mut p = bits + 9;
            let mut verdict = None;
            for _ in 0..8 {
                let parts = bump::phi_star_batch_encl(&engine, dec, &cubes, &xe, &lbar, p);
                let mut sum = DyInterval::zero();
                for e in &parts {
                    sum = sum.add(e);
                }
                if sum.width() <= Dyadic::pow2(-(bits + 1)) {
                    let err = sum.mid().sub(&target).abs();
                    verdict = Some(err <= Dyadic::pow2(-bits));
                    break;
                }
                p += 8;
            }
            match verdict {
                Some(ok) => tally.check(ok, || {
                    let coords: Vec<String> = x.iter().map(|v| v.to_decimal_string()).collect();
                    format!("sum over derivative {lbar:?} is off target at ({})", coords.join(", "))
                }),
                None => tally.fail(|| "sum enclosure did not converge".into()),
            }
        }
    }
    vec![unity.report("partition-sum-unity"), deriv.report("partition-sum-derivatives")]
}

/// The derivative-bound tables must reproduce their hand-computed anchors.
pub fn check_bound_tables(kmax: u32) -> CheckReport {
    let kmax = kmax.max(3);
    let tab = deriv_bounds(kmax);
    let mut t = Tally::new();
    let anchors: [(&str, Vec<i64>); 3] = [
        ("H", vec![1, 4, 768, 606528]),
        ("T", vec![1, 12, 2496]),
        ("B", vec![8, 768, 1277952]),
    ];
    for (label, values) in &anchors {
        for (k, want) in values.iter().enumerate() {
            let got = match *label {
                "H" => tab.h_int(k as u32).clone(),
                "T" => tab.t_int(k as u32).clone(),
                _ => tab.b_int(k as u32).clone(),
            };
            t.check(got == num_bigint::BigInt::from(*want), || {
                format!("{label}_{k} = {got}, expected {want}")
            });
        }
    }
    // The tables must be monotone in k: larger orders never shrink.
    for k in 1..=kmax {
        t.check(tab.h_int(k) >= tab.h_int(k - 1), || format!("H_{k} < H_{}", k - 1));
        t.check(tab.b_int(k) >= tab.b_int(k - 1), || format!("B_{k} < B_{}", k - 1));
    }
    t.report("bound-table-anchors")
}

/// Sampled derivative values of the three one-dimensional mollifier
/// building blocks must respect their table bounds: `|lambda^(k)| <= H_k`,
/// `|mu^(k)| <= B_k` and `|nu^(k)| <= B_k (2/eps)^k` at `eps = 1/8`.
pub fn check_bump_bounds(kmax: u32, points: u64, seed: u64) -> CheckReport {
    let tab = deriv_bounds(kmax);
    let eps = Dyadic::pow2(-3);
    let mut rng = sample_rng(seed);
    let mut t = Tally::new();
    let i = 10i64;
    let slack = Dyadic::pow2(-i + 1);
    let lo = Dyadic::from_int(-2);
    let hi = Dyadic::from_int(2);
    for _ in 0..points {
        let x = rand_in(&mut rng, &lo, &hi, 10);
        let xr = CReal::from_dyadic(x.clone());
        for k in 0..=kmax {
            let lam = lambda_deriv(&xr, k, i).abs();
            t.check(lam <= tab.h(k).add(&slack), || {
                format!("|lambda^({k})({})| = {} exceeds H_{k}", x.to_decimal_string(),
                    lam.to_decimal_string())
            });
            let mu = mu_nu_deriv(MuNu::Mu, &xr, k, i, &eps).abs();
            t.check(mu <= tab.b(k).add(&slack), || {
                format!("|mu^({k})({})| exceeds B_{k}", x.to_decimal_string())
            });
            let nu = mu_nu_deriv(MuNu::Nu, &xr, k, i, &eps).abs();
            let nu_bound = tab.b(k).mul(&Dyadic::pow2(4 * k as i64));
            t.check(nu <= nu_bound.add(&slack), || {
                format!("|nu^({k})({})| exceeds B_{k} 16^{k}", x.to_decimal_string())
            });
        }
    }
    t.report("bump-derivative-bounds")
}

// ---------------------------------------------------------------------------
// Jets and extensions
// ---------------------------------------------------------------------------

/// Sampled compatibility of a jet with its own Taylor fields: for set points
/// `a, b` and every derivative index, `|f^(kbar)(a) - P^kbar_b(a)|` must not
/// exceed `M d(a,b)^(m - |kbar| + 1)` plus the stated slack. Pairs mix
/// uniform draws with nearest-neighbour draws so that both the global and
/// the local inequality are exercised.
pub fn check_jet_compatibility(
    jet: &WhitneyJet,
    trials: u64,
    seed: u64,
    slack_bits: i64,
) -> CheckReport {
    let set = jet.set();
    let n = jet.dim();
    let m = jet.order();
    let pool: Vec<CPoint> = (0..512).map(|k| set.dense_point(k)).collect();
    let mut rng = sample_rng(seed);
    let mut t = Tally::new();
    let slack = Dyadic::pow2(-slack_bits);
    let p = slack_bits + 8;
    for _ in 0..trials {
        let s = rng.gen_range(0..pool.len());
        // Nearest of a random sub-sample, then one uniform partner.
        let mut near: Option<(usize, Dyadic)> = None;
        for _ in 0..24 {
            let c = rng.gen_range(0..pool.len());
            if c == s {
                continue;
            }
            let Ok(d) = dist_encl(&pool[s], &pool[c], 24) else { continue };
            let hi = d.hi().clone();
            if near.as_ref().map_or(true, |(_, best)| hi < *best) {
                near = Some((c, hi));
            }
        }
        let uniform = rng.gen_range(0..pool.len());
        let mut partners = vec![uniform];
        if let Some((c, _)) = near {
            partners.push(c);
        }
        for b_idx in partners {
            let (a, b) = (&pool[s], &pool[b_idx]);
            let Ok(d) = dist_encl(a, b, 24) else {
                t.fail(|| "distance between dense points failed to converge".into());
                continue;
            };
            let ae: Vec<DyInterval> = (0..n).map(|c| a.coord_encl(c, p)).collect();
            for kbar in multi_indices_upto(n, m) {
                let comp = jet.component(&kbar).expect("jet is complete");
                let fa = DyInterval::from_approx(&comp.eval(a, p), p);
                let pb = taylor_encl(jet, &kbar, b, &ae, p);
                let gap = abs_lower(&fa.sub(&pb));
                let e = m - mi_order(&kbar) + 1;
                let rhs = jet.m_const().mul(&d.hi().pow(e)).add(&slack);
                t.check(gap <= rhs, || {
                    format!(
                        "pair ({s}, {b_idx}) violates compatibility at derivative {kbar:?}: \
                         gap {} > allowance {}",
                        gap.to_decimal_string(),
                        rhs.to_decimal_string()
                    )
                });
            }
        }
    }
    t.report("jet-compatibility")
}

/// A copy of `jet` whose component `kbar` is shifted by +1 on the half-space
/// `x_1 >= threshold`. The result deliberately breaks the compatibility
/// inequality across the threshold; it exists to exercise the validator's
/// failure path, so its moduli are inherited unchanged.
pub fn perturbed_jet(jet: &WhitneyJet, kbar: &[u32], threshold: &Dyadic) -> WhitneyJet {
    let set = jet.set().clone();
    let mut components = BTreeMap::new();
    for (k, comp) in jet.components() {
        let replaced = if k.as_slice() == kbar {
            let base = comp.clone();
            let modulus = comp.clone();
            let thr = threshold.clone();
            FnOnF::new(
                set.clone(),
                move |x, i| {
                    let v = base.eval(x, i);
                    if x.coord_encl(0, 30).mid() >= thr {
                        v.add(&Dyadic::one())
                    } else {
                        v
                    }
                },
                move |r, e| modulus.modulus(r, e),
            )
        } else {
            comp.clone()
        };
        components.insert(k.clone(), replaced);
    }
    let trunc: Vec<Dyadic> =
        (0..=jet.order()).map(|s| jet.truncation_const(s).clone()).collect();
    WhitneyJet::from_parts(set, jet.order(), components, jet.m_const().clone(), trunc)
        .expect("perturbing components preserves jet shape")
}

/// Sampled global and derivative error estimates of the extension: off-set
/// points `x` paired with dense points `a` must satisfy
/// `|g(x) - P_a(x)| <= A_m d(x,a)^(m+1)`, and, whenever the pair is
/// certifiably proximate (`d(x,a) <= 16 d(x,F)`, the regime where the
/// estimate is claimed), the derivative analogue with `A_m^kbar`. Returns
/// the value report and the derivative report.
pub fn check_extension_estimates(
    ext: &Extender,
    bmin: &[Dyadic],
    bmax: &[Dyadic],
    pairs: u64,
    seed: u64,
    i: i64,
) -> Vec<CheckReport> {
    let jet = ext.jet();
    let set = jet.set();
    let n = jet.dim();
    let m = jet.order();
    let consts = ext.constants();
    let mut rng = sample_rng(seed);
    let mut value = Tally::new();
    let mut deriv = Tally::new();
    let mut skipped: u64 = 0;
    let p = i + 8;
    for _ in 0..pairs {
        let Some(x) = draw_off_set(&mut rng, set, bmin, bmax, 8, 400) else { break };
        let xp = CPoint::from_dyadics(x.clone());
        let a = set.dense_point(rng.gen_range(0..512));
        let Ok(d) = dist_encl(&xp, &a, 24) else {
            value.fail(|| "distance to the base point failed to converge".into());
            continue;
        };
        let xe: Vec<DyInterval> = (0..n).map(|c| xp.coord_encl(c, p)).collect();
        let slack = Dyadic::pow2(-i + 2);
        let pair_tag = |kbar: &[u32], gap: &Dyadic, rhs: &Dyadic| {
            let coords: Vec<String> = x.iter().map(|v| v.to_decimal_string()).collect();
            format!(
                "estimate fails at ({}) derivative {kbar:?}: gap {} > allowance {}",
                coords.join(", "),
                gap.to_decimal_string(),
                rhs.to_decimal_string()
            )
        };
        // Global estimate at the value level.
        let zero = vec![0u32; n];
        match ext.eval(&xp, &zero, i) {
            Ok(out) => {
                let g = DyInterval::from_approx(&out.value, i);
                let pa = taylor_encl(jet, &zero, &a, &xe, p);
                let gap = abs_lower(&g.sub(&pa));
                let rhs = consts.a_m.mul(&d.hi().pow(m + 1)).add(&slack);
                value.check(gap <= rhs, || pair_tag(&zero, &gap, &rhs));
            }
            Err(e) => value.fail(|| format!("extension evaluation failed: {e}")),
        }
        // Derivative estimates only where proximity to the base point is
        // certified: d(x, a) <= 16 d(x, F).
        let Ok(dxf) = set.dist_dyadic(&x, 10) else { continue };
        let proximity_cap = dxf.sub(&Dyadic::pow2(-10)).mul(&Dyadic::from_int(16));
        if *d.hi() > proximity_cap {
            skipped += 1;
            continue;
        }
        for kbar in multi_indices_upto(n, m) {
            let o = mi_order(&kbar);
            if o == 0 {
                continue;
            }
            match ext.eval(&xp, &kbar, i) {
                Ok(out) => {
                    let g = DyInterval::from_approx(&out.value, i);
                    let pa = taylor_encl(jet, &kbar, &a, &xe, p);
                    let gap = abs_lower(&g.sub(&pa));
                    let rhs = consts.a_mk[&kbar].mul(&d.hi().pow(m - o + 1)).add(&slack);
                    deriv.check(gap <= rhs, || pair_tag(&kbar, &gap, &rhs));
                }
                Err(e) => deriv.fail(|| format!("extension evaluation failed: {e}")),
            }
        }
    }
    if skipped > 0 {
        deriv.note = Some(format!("{skipped} pairs skipped (proximity not certifiable)"));
    }
    vec![value.report("extension-estimate"), deriv.report("extension-derivative-estimate")]
}

/// On sampled dense points of the set, the evaluated extension must agree
/// with the function it extends within `tol` plus the reference error.
pub fn check_on_set_agreement(
    f: &FnOnF,
    eval: impl Fn(&CPoint, i64) -> Result<Dyadic>,
    points: u64,
    seed: u64,
    i: i64,
    tol: &Dyadic,
) -> CheckReport {
    let set = f.set();
    let mut rng = sample_rng(seed);
    let mut t = Tally::new();
    let allowance = tol.add(&Dyadic::pow2(-(i + 8)));
    for _ in 0..points {
        let a = set.dense_point(rng.gen_range(0..512));
        match eval(&a, i) {
            Ok(g) => {
                let reference = f.eval(&a, i + 8);
                t.check(g.sub(&reference).abs() <= allowance, || {
                    format!(
                        "extension value {} differs from the function value {}",
                        g.to_decimal_string(),
                        reference.to_decimal_string()
                    )
                });
            }
            Err(e) => t.fail(|| format!("evaluation failed on a set point: {e}")),
        }
    }
    t.report("on-set-agreement")
}

/// Off the set, an order-zero extension is a convex combination of nearby
/// function values, so sampled values must stay inside the function's range
/// envelope (estimated from dense points, with margin for both estimates).
pub fn check_envelope(
    f: &FnOnF,
    eval: impl Fn(&CPoint, i64) -> Result<Dyadic>,
    bmin: &[Dyadic],
    bmax: &[Dyadic],
    points: u64,
    seed: u64,
    i: i64,
) -> CheckReport {
    let set = f.set();
    let mut range: Option<(Dyadic, Dyadic)> = None;
    for k in 0..512 {
        let v = f.eval(&set.dense_point(k), 12);
        range = Some(match range {
            None => (v.clone(), v),
            Some((lo, hi)) => (if v < lo { v.clone() } else { lo }, if v > hi { v } else { hi }),
        });
    }
    let (lo, hi) = range.expect("dense stream is nonempty");
    let margin = Dyadic::pow2(-6).add(&Dyadic::pow2(-11));
    let (lo, hi) = (lo.sub(&margin), hi.add(&margin));
    let mut rng = sample_rng(seed);
    let mut t = Tally::new();
    for _ in 0..points {
        let Some(x) = draw_off_set(&mut rng, set, bmin, bmax, 8, 400) else { break };
        let xp = CPoint::from_dyadics(x.clone());
        match eval(&xp, i) {
            Ok(v) => t.check(v >= lo && v <= hi, || {
                let coords: Vec<String> = x.iter().map(|c| c.to_decimal_string()).collect();
                format!(
                    "value {} at ({}) escapes the range envelope [{}, {}]",
                    v.to_decimal_string(),
                    coords.join(", "),
                    lo.to_decimal_string(),
                    hi.to_decimal_string()
                )
            }),
            Err(e) => t.fail(|| format!("evaluation failed: {e}")),
        }
    }
    t.report("range-envelope")
}

/// Repeated evaluation must be bit-identical, both within one evaluator
/// (warm memo tables) and across independently constructed evaluators.
pub fn check_determinism(
    jet: &WhitneyJet,
    bmin: &[Dyadic],
    bmax: &[Dyadic],
    queries: u64,
    seed: u64,
    i: i64,
) -> CheckReport {
    let (e1, e2) = match (Extender::new(jet.clone()), Extender::new(jet.clone())) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return CheckReport::error("determinism", e),
    };
    let n = jet.dim();
    let orders = multi_indices_upto(n, jet.order());
    let mut rng = sample_rng(seed);
    let mut t = Tally::new();
    for _ in 0..queries {
        let x = rand_coords(&mut rng, bmin, bmax, 8);
        let xp = CPoint::from_dyadics(x);
        let kbar = orders[rng.gen_range(0..orders.len())].clone();
        let results: Vec<_> = [e1.eval(&xp, &kbar, i), e1.eval(&xp, &kbar, i), e2.eval(&xp, &kbar, i)]
            .into_iter()
            .collect();
        match (&results[0], &results[1], &results[2]) {
            (Ok(a), Ok(b), Ok(c)) => t.check(
                a.value == b.value && a.value == c.value && a.branch == c.branch,
                || "identical queries returned different bits".into(),
            ),
            _ => t.fail(|| "evaluation failed".into()),
        }
    }
    t.report("determinism")
}

/// Values at consecutive precisions must stay within the sum of the two
/// error allowances: `|g_i - g_(i+1)| <= 2^-i + 2^-(i+1)`.
pub fn check_precision_monotonicity(
    jet: &WhitneyJet,
    bmin: &[Dyadic],
    bmax: &[Dyadic],
    queries: u64,
    seed: u64,
    i: i64,
) -> CheckReport {
    let ext = match Extender::new(jet.clone()) {
        Ok(e) => e,
        Err(e) => return CheckReport::error("precision-monotonicity", e),
    };
    let n = jet.dim();
    let orders = multi_indices_upto(n, jet.order());
    let allowance = Dyadic::pow2(-i).add(&Dyadic::pow2(-(i + 1)));
    let mut rng = sample_rng(seed);
    let mut t = Tally::new();
    for _ in 0..queries {
        let x = rand_coords(&mut rng, bmin, bmax, 8);
        let xp = CPoint::from_dyadics(x);
        let kbar = orders[rng.gen_range(0..orders.len())].clone();
        match (ext.eval(&xp, &kbar, i), ext.eval(&xp, &kbar, i + 1)) {
            (Ok(a), Ok(b)) => t.check(a.value.sub(&b.value).abs() <= allowance, || {
                format!(
                    "values {} and {} at consecutive precisions drift apart",
                    a.value.to_decimal_string(),
                    b.value.to_decimal_string()
                )
            }),
            _ => t.fail(|| "evaluation failed".into()),
        }
    }
    t.report("precision-monotonicity")
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// Named families of checks runnable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// Set information and decomposition geometry.
    Cubes,
    /// Partition sums and mollifier bound tables.
    Partition,
    /// Jet compatibility and extension behaviour.
    Extend,
    /// Everything.
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Suite> {
        match s {
            "cubes" => Some(Suite::Cubes),
            "partition" => Some(Suite::Partition),
            "extend" => Some(Suite::Extend),
            "all" => Some(Suite::All),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Cubes => "cubes",
            Suite::Partition => "partition",
            Suite::Extend => "extend",
            Suite::All => "all",
        }
    }
}

fn labeled(mut r: CheckReport, label: &str) -> CheckReport {
    r.name = format!("{}[{label}]", r.name);
    r
}

fn origin_spec() -> SetSpec {
    SetSpec { dim: 1, parts: vec![SetPart::Point { coords: vec![Dyadic::zero()] }] }
}

fn two_point_spec() -> SetSpec {
    SetSpec {
        dim: 1,
        parts: vec![
            SetPart::Point { coords: vec![Dyadic::zero()] },
            SetPart::Point { coords: vec![Dyadic::one()] },
        ],
    }
}

fn unit_ball_spec() -> SetSpec {
    SetSpec {
        dim: 2,
        parts: vec![SetPart::Ball {
            center: vec![Dyadic::zero(), Dyadic::zero()],
            radius: num_rational::Ratio::from_integer(num_bigint::BigInt::from(1)),
        }],
    }
}

fn two_interval_spec() -> SetSpec {
    SetSpec {
        dim: 1,
        parts: vec![
            SetPart::Box { min: vec![Dyadic::from_int(-2)], max: vec![Dyadic::from_int(-1)] },
            SetPart::Box { min: vec![Dyadic::one()], max: vec![Dyadic::from_int(2)] },
        ],
    }
}

fn suite_sets(
    set: Option<&SetSpec>,
    defaults: Vec<(&'static str, SetSpec)>,
) -> Vec<(String, SetSpec)> {
    match set {
        Some(s) => vec![("custom".into(), s.clone())],
        None => defaults.into_iter().map(|(l, s)| (l.to_string(), s)).collect(),
    }
}

fn cubes_suite(set: Option<&SetSpec>, seed: u64) -> Vec<CheckReport> {
    let sets = suite_sets(
        set,
        vec![("origin", origin_spec()), ("two-point", two_point_spec()), ("unit-ball", unit_ball_spec())],
    );
    let mut out = Vec::new();
    for (label, spec) in sets {
        let set = match TotalClosedSet::make_set(spec) {
            Ok(s) => s,
            Err(e) => {
                out.push(labeled(CheckReport::error("set-construction", e), &label));
                continue;
            }
        };
        out.push(labeled(check_set_consistency(&set, 48, 48), &label));
        let dec = Decomposition::new(set.clone());
        let (bmin, bmax) = hull_window(&set, 2);
        let levels = if set.dim() == 1 { (-3, 5) } else { (-2, 3) };
        out.push(labeled(
            check_distance_certificates(&dec, &bmin, &bmax, levels.0, levels.1, 8),
            &label,
        ));
        out.push(labeled(check_covering(&dec, seed, 40), &label));
    }
    out
}

fn partition_suite(set: Option<&SetSpec>, seed: u64) -> Vec<CheckReport> {
    let sets = suite_sets(set, vec![("origin", origin_spec()), ("unit-ball", unit_ball_spec())]);
    let mut out = Vec::new();
    for (label, spec) in sets {
        let set = match TotalClosedSet::make_set(spec) {
            Ok(s) => s,
            Err(e) => {
                out.push(labeled(CheckReport::error("set-construction", e), &label));
                continue;
            }
        };
        let points = if set.dim() == 1 { 6 } else { 4 };
        let dec = Decomposition::new(set);
        for r in check_partition_sums(&dec, seed, points, 2, 20, 16) {
            out.push(labeled(r, &label));
        }
    }
    out.push(check_bound_tables(6));
    out.push(check_bump_bounds(4, 80, seed));
    out
}

fn extend_suite(seed: u64) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let parse = |json: &str| JetSpec::from_json(json).expect("suite jet spec is valid");
    // Compatibility: a first-order polynomial jet on a solid interval, plus
    // the same jet with an injected fault that the validator must reject.
    match TotalClosedSet::make_set(SetSpec {
        dim: 1,
        parts: vec![SetPart::Box { min: vec![Dyadic::zero()], max: vec![Dyadic::one()] }],
    }) {
        Ok(interval) => {
            match jet_make(&parse(r#"{"builtin":"poly","coeffs":[0,1],"order":1}"#), &interval) {
                Ok(jet) => {
                    out.push(check_jet_compatibility(&jet, 50, seed, 10));
                    let bad = perturbed_jet(&jet, &[1], &Dyadic::pow2(-1));
                    let inner = check_jet_compatibility(&bad, 50, seed, 10);
                    out.push(CheckReport {
                        name: "jet-compatibility-rejects-fault".into(),
                        passed: !inner.passed,
                        samples: inner.samples,
                        failures: inner.failures,
                        detail: if inner.passed {
                            "an incompatible jet slipped through the validator".into()
                        } else {
                            String::new()
                        },
                    });
                }
                Err(e) => out.push(CheckReport::error("jet-compatibility", e)),
            }
        }
        Err(e) => out.push(CheckReport::error("jet-compatibility", e)),
    }
    // Order-zero behaviour of the cosine restriction on a two-point set.
    match TotalClosedSet::make_set(two_point_spec()) {
        Ok(two) => match jet_make(&parse(r#"{"builtin":"cos","coeffs":[1],"order":0}"#), &two) {
            Ok(jet) => {
                let f = jet.component(&[0]).expect("order-zero component").clone();
                out.push(check_on_set_agreement(
                    &f,
                    |x, i| wet0_eval(&f, x, i),
                    8,
                    seed,
                    16,
                    &Dyadic::pow2(-16),
                ));
                let (bmin, bmax) = hull_window(f.set(), 2);
                out.push(check_envelope(&f, |x, i| wet0_eval(&f, x, i), &bmin, &bmax, 6, seed, 12));
            }
            Err(e) => out.push(CheckReport::error("on-set-agreement", e)),
        },
        Err(e) => out.push(CheckReport::error("on-set-agreement", e)),
    }
    // Error estimates of a second-order jet on two separated intervals.
    match TotalClosedSet::make_set(two_interval_spec()) {
        Ok(set) => match jet_make(&parse(r#"{"builtin":"poly","coeffs":[0,0,0,1],"order":2}"#), &set)
            .and_then(Extender::new)
        {
            Ok(ext) => {
                let (bmin, bmax) = hull_window(ext.jet().set(), 1);
                for r in check_extension_estimates(&ext, &bmin, &bmax, 6, seed, 13) {
                    out.push(r);
                }
            }
            Err(e) => out.push(CheckReport::error("extension-estimate", e)),
        },
        Err(e) => out.push(CheckReport::error("extension-estimate", e)),
    }
    // Determinism and precision coherence of the identity extension.
    match TotalClosedSet::make_set(origin_spec()) {
        Ok(set) => match jet_make(&parse(r#"{"builtin":"poly","coeffs":[0,1],"order":1}"#), &set) {
            Ok(jet) => {
                let bmin = vec![Dyadic::from_int(-4)];
                let bmax = vec![Dyadic::from_int(4)];
                out.push(check_determinism(&jet, &bmin, &bmax, 5, seed, 12));
                out.push(check_precision_monotonicity(&jet, &bmin, &bmax, 5, seed, 12));
            }
            Err(e) => out.push(CheckReport::error("determinism", e)),
        },
        Err(e) => out.push(CheckReport::error("determinism", e)),
    }
    out
}

/// Run a named suite. A custom set, when given, replaces the built-in sets
/// of the geometric suites; the extension suite always runs its built-in
/// jets (a jet cannot be inferred from a bare set).
pub fn run_suite(suite: Suite, set: Option<&SetSpec>, seed: u64) -> Vec<CheckReport> {
    match suite {
        Suite::Cubes => cubes_suite(set, seed),
        Suite::Partition => partition_suite(set, seed),
        Suite::Extend => extend_suite(seed),
        Suite::All => {
            let mut out = cubes_suite(set, seed);
            out.extend(partition_suite(set, seed));
            out.extend(extend_suite(seed));
            out
        }
    }
}
