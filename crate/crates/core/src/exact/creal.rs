use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::exact::dyadic::{ratio_to_dyadic, Dyadic, Round};
use crate::exact::interval::DyInterval;
use num_bigint::BigInt;
use num_rational::Ratio;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Ceiling of log2(k) for k >= 1.
pub(crate) fn ceil_log2(k: usize) -> i64 {
    debug_assert!(k >= 1);
    (k.next_power_of_two().trailing_zeros()) as i64
}

struct Inner {
    id: u64,
    oracle: Box<dyn Fn(i64) -> Dyadic + Send + Sync>,
    cache: Mutex<BTreeMap<i64, Dyadic>>,
}

/// A computable real presented by a precision oracle: `approx(i)` returns a
/// dyadic within `2^-i` of the number. Queries are memoized per (id, i), so
/// repeated evaluation is deterministic and cheap.
#[derive(Clone)]
pub struct CReal {
    inner: Arc<Inner>,
}

impl CReal {
    fn from_oracle(oracle: Box<dyn Fn(i64) -> Dyadic + Send + Sync>) -> Self {
        CReal {
            inner: Arc::new(Inner {
                id: fresh_id(),
                oracle,
                cache: Mutex::new(BTreeMap::new()),
            }),
        }
    }

    /// Stable identity for memo keys; unique per constructed real.
    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn from_dyadic(v: Dyadic) -> Self {
        CReal::from_oracle(Box::new(move |_| v.clone()))
    }

    pub fn from_int(v: i64) -> Self {
        CReal::from_dyadic(Dyadic::from_int(v))
    }

    pub fn from_ratio(r: Ratio<BigInt>) -> Self {
        CReal::from_oracle(Box::new(move |i| ratio_to_dyadic(&r, i + 1, Round::Nearest)))
    }

    /// Wrap a user oracle promising `|f(i) - x| <= 2^-i` for every i.
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(i64) -> Dyadic + Send + Sync + 'static,
    {
        CReal::from_oracle(Box::new(f))
    }

    pub fn approx(&self, i: i64) -> Dyadic {
        if let Some(v) = self.inner.cache.lock().unwrap().get(&i) {
            return v.clone();
        }
        let v = (self.inner.oracle)(i);
        self.inner
            .cache
            .lock()
            .unwrap()
            .entry(i)
            .or_insert(v)
            .clone()
    }

    /// `[approx(i) - 2^-i, approx(i) + 2^-i]`, a certified enclosure.
    pub fn encl(&self, i: i64) -> DyInterval {
        DyInterval::from_approx(&self.approx(i), i)
    }

    /// Sum of finitely many reals. Each term is queried at
    /// `i + ceil(log2 k) + 2` and the exact dyadic sum is snapped to the
    /// grid `2^-(i+1)`, keeping the total error under `2^-i`.
    pub fn sum(terms: &[CReal]) -> Self {
        assert!(!terms.is_empty(), "sum of zero reals");
        let terms: Vec<CReal> = terms.to_vec();
        let k = terms.len();
        CReal::from_oracle(Box::new(move |i| {
            let q = i + ceil_log2(k) + 2;
            let mut acc = Dyadic::zero();
            for t in &terms {
                acc = acc.add(&t.approx(q));
            }
            acc.round(i + 1, Round::Nearest)
        }))
    }

    pub fn add(&self, other: &CReal) -> Self {
        CReal::sum(&[self.clone(), other.clone()])
    }

    pub fn negate(&self) -> Self {
        let x = self.clone();
        CReal::from_oracle(Box::new(move |i| x.approx(i).neg()))
    }

    pub fn sub(&self, other: &CReal) -> Self {
        self.add(&other.negate())
    }

    /// Exact dyadic scalar multiple.
    pub fn scale(&self, c: &Dyadic) -> Self {
        if c.is_zero() {
            return CReal::from_dyadic(Dyadic::zero());
        }
        let x = self.clone();
        let c = c.clone();
        let bits = c.abs().log2_ceil().unwrap().max(0);
        CReal::from_oracle(Box::new(move |i| {
            x.approx(i + bits + 1).mul(&c).round(i + 1, Round::Nearest)
        }))
    }

    pub fn product(&self, other: &CReal) -> Self {
        let a = self.clone();
        let b = other.clone();
        CReal::from_oracle(Box::new(move |i| {
            // Coarse magnitude bounds from precision-0 queries.
            let ka = a.approx(0).abs().add(&Dyadic::one()).log2_ceil().unwrap().max(0);
            let kb = b.approx(0).abs().add(&Dyadic::one()).log2_ceil().unwrap().max(0);
            let av = a.approx(i + kb + 3);
            let bv = b.approx(i + ka + 3);
            av.mul(&bv).round(i + 1, Round::Nearest)
        }))
    }
}

impl std::fmt::Debug for CReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CReal#{}~{}", self.inner.id, self.approx(16).to_decimal_string())
    }
}

/// Memoization key for a point: exact coordinates compare structurally,
/// oracle-backed points compare by identity.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum PointKey {
    Exact(Vec<Dyadic>),
    Id(u64),
}

enum CoordData {
    Exact(Vec<Dyadic>),
    Oracle(Vec<CReal>),
}

/// A point of R^n with either exact dyadic coordinates or coordinate-wise
/// precision oracles.
#[derive(Clone)]
pub struct CPoint {
    data: Arc<CoordData>,
    id: u64,
}

impl CPoint {
    pub fn from_dyadics(coords: Vec<Dyadic>) -> Self {
        assert!(!coords.is_empty(), "zero-dimensional point");
        CPoint { data: Arc::new(CoordData::Exact(coords)), id: fresh_id() }
    }

    pub fn from_ints(coords: &[i64]) -> Self {
        CPoint::from_dyadics(coords.iter().map(|&c| Dyadic::from_int(c)).collect())
    }

    pub fn from_reals(coords: Vec<CReal>) -> Self {
        assert!(!coords.is_empty(), "zero-dimensional point");
        CPoint { data: Arc::new(CoordData::Oracle(coords)), id: fresh_id() }
    }

    pub fn dim(&self) -> usize {
        match &*self.data {
            CoordData::Exact(v) => v.len(),
            CoordData::Oracle(v) => v.len(),
        }
    }

    pub fn exact_coords(&self) -> Option<&[Dyadic]> {
        match &*self.data {
            CoordData::Exact(v) => Some(v),
            CoordData::Oracle(_) => None,
        }
    }

    pub fn key(&self) -> PointKey {
        match &*self.data {
            CoordData::Exact(v) => PointKey::Exact(v.clone()),
            CoordData::Oracle(_) => PointKey::Id(self.id),
        }
    }

    /// Enclosure of coordinate `c` with width at most `2^-(p-1)`.
    pub fn coord_encl(&self, c: usize, p: i64) -> DyInterval {
        match &*self.data {
            CoordData::Exact(v) => DyInterval::point(v[c].clone()),
            CoordData::Oracle(v) => v[c].encl(p),
        }
    }

    /// Coordinate-wise approximation; the vector is within `2^-i` of the
    /// point in Euclidean norm.
    pub fn approx(&self, i: i64) -> Vec<Dyadic> {
        let n = self.dim();
        let q = i + ceil_log2(n);
        (0..n)
            .map(|c| match &*self.data {
                CoordData::Exact(v) => v[c].clone(),
                CoordData::Oracle(v) => v[c].approx(q),
            })
            .collect()
    }

    /// Upper bound on the sup norm, valid and within `2^-p` of tight.
    pub fn sup_norm_upper(&self, p: i64) -> Dyadic {
        let mut best = Dyadic::zero();
        for c in 0..self.dim() {
            let e = self.coord_encl(c, p);
            best = best.max(e.lo().abs()).max(e.hi().abs());
        }
        best
    }
}

impl std::fmt::Debug for CPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let v = self.approx(16);
        let parts: Vec<String> = v.iter().map(|d| d.to_decimal_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Enclosure of the Euclidean distance between two points, computed from
/// coordinate enclosures at precision `p`.
pub fn dist_encl(x: &CPoint, y: &CPoint, p: i64) -> Result<DyInterval> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    let mut sq = DyInterval::zero();
    for c in 0..x.dim() {
        let d = x.coord_encl(c, p).sub(&y.coord_encl(c, p));
        sq = sq.add(&square(&d));
    }
    sq.sqrt(p + 2)
}

/// Tight enclosure of t^2 for an interval t (never dips below zero).
pub fn square(t: &DyInterval) -> DyInterval {
    let a = t.lo().mul(t.lo());
    let b = t.hi().mul(t.hi());
    if t.contains_zero() {
        DyInterval::new(Dyadic::zero(), a.max(b))
    } else {
        DyInterval::new(a.clone().min(b.clone()), a.max(b))
    }
}

/// Euclidean distance to precision `2^-i`: the result differs from the true
/// distance by at most `2^-i`.
pub fn cpoint_dist(x: &CPoint, y: &CPoint, i: i64) -> Result<Dyadic> {
    let mut p = i + 3;
    loop {
        let enc = dist_encl(x, y, p)?;
        if enc.width() <= Dyadic::pow2(-(i + 1)) {
            return Ok(enc.mid().round(i + 1, Round::Nearest).max(Dyadic::zero()));
        }
        p += 8;
    }
}
