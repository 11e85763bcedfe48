//! Whitney cube machinery: dyadic grids, the sampled candidate test for the
//! cube family, maximal-cube selection, enlarged cubes, the finite covering
//! superset around a point, and approximate projections onto the set.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Mutex;

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::closedset::{SetPart, SetSpec, TotalClosedSet};
use crate::error::{Error, Result};
use crate::exact::creal::{cpoint_dist, dist_encl, CPoint, PointKey};
use crate::exact::dyadic::{ratio_to_dyadic, Dyadic, Round};
use crate::exact::interval::DyInterval;

/// Default dilation constant for enlarged cubes (must stay below 1/5).
pub fn default_eps() -> Dyadic {
    Dyadic::int_times_pow2(1, -3)
}

/// Round-off precision `b_k = max(k+3, 0)` used by the cube test at level k.
pub fn roundoff_bits(k: i64) -> i64 {
    (k + 3).max(0)
}

/// Upper bound `ceil(197 sqrt(n))^n` on the number of cubes the
/// covering-candidate enumeration around a point can return in dimension
/// `n`; also the bound on how many bumps can overlap anywhere.
pub fn gx_size_bound(n: usize) -> num_bigint::BigInt {
    let target = 38_809u128 * n as u128; // 197^2 * n
    let mut c = num_integer::Roots::sqrt(&target);
    if c * c < target {
        c += 1;
    }
    num_bigint::BigInt::from(c).pow(n as u32)
}

/// Round-off allowance `eta_k = 2^-b_k`.
pub fn eta(k: i64) -> Dyadic {
    Dyadic::pow2(-roundoff_bits(k))
}

/// A cube of the level-k grid: edge `2^-k`, min-corner at `corner * 2^-k`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: i64,
    pub corner: Vec<i64>,
}

impl DyadicCube {
    pub fn new(level: i64, corner: Vec<i64>) -> Self {
        assert!(!corner.is_empty(), "zero-dimensional cube");
        DyadicCube { level, corner }
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn edge(&self) -> Dyadic {
        Dyadic::pow2(-self.level)
    }

    pub fn lower(&self, c: usize) -> Dyadic {
        Dyadic::int_times_pow2(self.corner[c], -self.level)
    }

    pub fn upper(&self, c: usize) -> Dyadic {
        Dyadic::int_times_pow2(self.corner[c] + 1, -self.level)
    }

    pub fn lower_corner(&self) -> Vec<Dyadic> {
        (0..self.dim()).map(|c| self.lower(c)).collect()
    }

    pub fn upper_corner(&self) -> Vec<Dyadic> {
        (0..self.dim()).map(|c| self.upper(c)).collect()
    }

    /// Exact center `(corner + 1/2) * 2^-k`.
    pub fn center(&self) -> Vec<Dyadic> {
        self.corner
            .iter()
            .map(|&m| Dyadic::int_times_pow2(2 * m + 1, -(self.level + 1)))
            .collect()
    }

    /// `diam(Q)^2 = n * 4^-k`, exact.
    pub fn diam_sq(&self) -> Dyadic {
        Dyadic::int_times_pow2(self.dim() as i64, -2 * self.level)
    }

    /// Exact comparison `mult * diam(Q)` vs `b`, i.e. `mult * sqrt(n) * 2^-k` vs `b`.
    pub fn cmp_diam(&self, mult: &Dyadic, b: &Dyadic) -> Ordering {
        mult.shl(-self.level).cmp_sqrtn(self.dim() as u64, b)
    }

    /// Exact membership of a dyadic point in the closed cube.
    pub fn contains(&self, x: &[Dyadic]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        (0..self.dim()).all(|c| self.lower(c) <= x[c] && x[c] <= self.upper(c))
    }

    /// Exact membership in the enlarged cube `(1+eps)(Q - c_Q) + c_Q`.
    pub fn contains_enlarged(&self, eps: &Dyadic, x: &[Dyadic]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        // Half-edge of the enlarged cube: (1+eps) * 2^-(k+1).
        let half = Dyadic::one().add(eps).shl(-(self.level + 1));
        self.center()
            .iter()
            .zip(x)
            .all(|(cc, xc)| xc.sub(cc).abs() <= half)
    }

    /// Corners of the enlarged cube, exact.
    pub fn enlarged_corners(&self, eps: &Dyadic) -> (Vec<Dyadic>, Vec<Dyadic>) {
        let half = Dyadic::one().add(eps).shl(-(self.level + 1));
        let c = self.center();
        (
            c.iter().map(|cc| cc.sub(&half)).collect(),
            c.iter().map(|cc| cc.add(&half)).collect(),
        )
    }

    /// The unique coarser cube of level `h < level` containing this cube.
    pub fn super_cube(&self, h: i64) -> DyadicCube {
        assert!(h < self.level);
        let shift = (self.level - h) as u32;
        DyadicCube {
            level: h,
            corner: self.corner.iter().map(|&m| m >> shift).collect(),
        }
    }

    /// Exact test: do the open interiors of two cubes intersect?
    pub fn interiors_overlap(&self, other: &DyadicCube) -> bool {
        debug_assert_eq!(self.dim(), other.dim());
        (0..self.dim()).all(|c| {
            self.lower(c) < other.upper(c) && other.lower(c) < self.upper(c)
        })
    }

    /// Exact test: do the closed cubes intersect (touching counts)?
    pub fn touches(&self, other: &DyadicCube) -> bool {
        debug_assert_eq!(self.dim(), other.dim());
        (0..self.dim()).all(|c| {
            self.lower(c) <= other.upper(c) && other.lower(c) <= self.upper(c)
        })
    }
}

impl std::fmt::Debug for DyadicCube {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let spans: Vec<String> = (0..self.dim())
            .map(|c| format!("[{}, {}]", self.lower(c).to_decimal_string(), self.upper(c).to_decimal_string()))
            .collect();
        write!(f, "Q{{k={}, {}}}", self.level, spans.join("x"))
    }
}

/// Least grid level h with `(1/2) sqrt(n) 2^-h < 2^-i`.
fn grid_level(n: usize, i: i64) -> i64 {
    let target = Dyadic::pow2(-i);
    let mut h = i;
    loop {
        if Dyadic::pow2(-(h + 1)).cmp_sqrtn(n as u64, &target) == Ordering::Less {
            return h;
        }
        h += 1;
    }
}

/// Sample grid R(Q, i): the vertices of Q together with the vertices of all
/// cubes of the level-h grid meeting Q, h least with `(1/2) sqrt(n) 2^-h < 2^-i`.
/// Every point of Q lies within `2^-i` of some returned point.
pub fn sample_grid(q: &DyadicCube, i: i64) -> Vec<Vec<Dyadic>> {
    let n = q.dim();
    let h = grid_level(n, i);
    let mut axes: Vec<Vec<Dyadic>> = Vec::with_capacity(n);
    for c in 0..n {
        let lo = q.lower(c);
        let hi = q.upper(c);
        let mut vals = vec![lo.clone(), hi.clone()];
        let mut m = lo.shl(h).ceil_int();
        let m_hi = hi.shl(h).floor_int();
        while m <= m_hi {
            vals.push(Dyadic::new(m.clone(), -h));
            m += 1u32;
        }
        vals.sort();
        vals.dedup();
        axes.push(vals);
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        out.push((0..n).map(|c| axes[c][idx[c]].clone()).collect());
        let mut advanced = false;
        for c in (0..n).rev() {
            if idx[c] + 1 < axes[c].len() {
                idx[c] += 1;
                idx[(c + 1)..].fill(0);
                advanced = true;
                break;
            }
        }
        if !advanced {
            return out;
        }
    }
}

/// The finite superset around an off-set point: the chosen precision stage,
/// the certified distance value at it, and the candidate cubes.
#[derive(Clone, Debug)]
pub struct GxInfo {
    pub stage: i64,
    pub delta: Dyadic,
    pub cubes: Vec<DyadicCube>,
}

/// Whitney decomposition context over one closed set: all cube-family
/// queries, memoized so repeated evaluation is deterministic.
pub struct Decomposition {
    set: TotalClosedSet,
    eps: Dyadic,
    f0_memo: Mutex<HashMap<DyadicCube, bool>>,
    f_memo: Mutex<HashMap<DyadicCube, bool>>,
    proj_memo: Mutex<HashMap<DyadicCube, usize>>,
    gx_memo: Mutex<HashMap<PointKey, GxInfo>>,
}

impl Decomposition {
    pub fn new(set: TotalClosedSet) -> Self {
        Decomposition::with_eps(set, default_eps()).expect("default eps is valid")
    }

    pub fn with_eps(set: TotalClosedSet, eps: Dyadic) -> Result<Self> {
        // 0 < eps < 1/5, tested exactly as 5 eps < 1.
        if eps.signum() <= 0 || eps.mul_int(5) >= Dyadic::one() {
            return Err(Error::InvalidArgument(
                "dilation constant must satisfy 0 < eps < 1/5".into(),
            ));
        }
        Ok(Decomposition {
            set,
            eps,
            f0_memo: Mutex::new(HashMap::new()),
            f_memo: Mutex::new(HashMap::new()),
            proj_memo: Mutex::new(HashMap::new()),
            gx_memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn set(&self) -> &TotalClosedSet {
        &self.set
    }

    pub fn eps(&self) -> &Dyadic {
        &self.eps
    }

    /// Candidate test: some sample point r of R(Q, max(k+1,0)) has
    /// `2 diam - eta < d(r,F)[b_k] < 4 diam + eta`. All comparisons exact.
    pub fn in_f0(&self, q: &DyadicCube) -> Result<bool> {
        if q.dim() != self.set.dim() {
            return Err(Error::DimensionMismatch { expected: self.set.dim(), got: q.dim() });
        }
        if let Some(&v) = self.f0_memo.lock().unwrap().get(q) {
            return Ok(v);
        }
        let v = self.compute_f0(q)?;
        self.f0_memo.lock().unwrap().insert(q.clone(), v);
        Ok(v)
    }

    fn compute_f0(&self, q: &DyadicCube) -> Result<bool> {
        let k = q.level;
        let bk = roundoff_bits(k);
        let eta = eta(k);
        let three_eta = eta.mul_int(3);
        // Cheap certified reject from the center distance. Any sample point
        // is within diam/2 of the center and its distance value carries an
        // eta error, so these fire only when the full scan must fail.
        let d_c = self.set.dist_dyadic(&q.center(), bk)?;
        // Too far: every d(r)[b_k] >= 4 diam + eta once d_c - 3 eta >= 4.5 diam.
        if q.cmp_diam(&Dyadic::int_times_pow2(9, -1), &d_c.sub(&three_eta)) != Ordering::Greater {
            return Ok(false);
        }
        // Too close: every d(r)[b_k] <= 2 diam - eta once d_c + 3 eta <= 1.5 diam.
        if q.cmp_diam(&Dyadic::int_times_pow2(3, -1), &d_c.add(&three_eta)) != Ordering::Less {
            return Ok(false);
        }
        for r in sample_grid(q, (k + 1).max(0)) {
            let d = self.set.dist_dyadic(&r, bk)?;
            let lower_ok = q.cmp_diam(&Dyadic::from_int(2), &d.add(&eta)) == Ordering::Less;
            let upper_ok = q.cmp_diam(&Dyadic::from_int(4), &d.sub(&eta)) == Ordering::Greater;
            if lower_ok && upper_ok {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Membership in the decomposition: a candidate cube none of whose
    /// strict super-cubes in levels `h* < h <= k-1` is a candidate, where h*
    /// is the largest level with `(1/2) sqrt(n) 2^-h > 4 diam + 2 eta`.
    pub fn in_f(&self, q: &DyadicCube) -> Result<bool> {
        if let Some(&v) = self.f_memo.lock().unwrap().get(q) {
            return Ok(v);
        }
        let v = self.compute_f(q)?;
        self.f_memo.lock().unwrap().insert(q.clone(), v);
        Ok(v)
    }

    fn compute_f(&self, q: &DyadicCube) -> Result<bool> {
        if !self.in_f0(q)? {
            return Ok(false);
        }
        let hstar = h_star(q);
        for h in (hstar + 1)..=(q.level - 1) {
            if self.in_f0(&q.super_cube(h))? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// All decomposition cubes in the level range whose interiors meet the
    /// open box. Exact rational tests throughout.
    pub fn enum_region(
        &self,
        bmin: &[Dyadic],
        bmax: &[Dyadic],
        kmin: i64,
        kmax: i64,
    ) -> Result<Vec<DyadicCube>> {
        let n = self.set.dim();
        if bmin.len() != n || bmax.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: bmin.len().max(bmax.len()) });
        }
        if kmin > kmax {
            return Err(Error::InvalidArgument("level range is empty (kmin > kmax)".into()));
        }
        // An open box with a non-positive width on any axis meets no interior.
        if (0..n).any(|c| bmin[c] >= bmax[c]) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for k in kmin..=kmax {
            let mut ranges = Vec::with_capacity(n);
            let mut count: u128 = 1;
            for c in 0..n {
                // Open-overlap index range: corner in [floor(bmin 2^k), ceil(bmax 2^k) - 1].
                let lo = bmin[c]
                    .shl(k)
                    .floor_int()
                    .to_i64()
                    .ok_or_else(|| Error::InvalidArgument("region out of range".into()))?;
                let hi = bmax[c]
                    .shl(k)
                    .ceil_int()
                    .to_i64()
                    .ok_or_else(|| Error::InvalidArgument("region out of range".into()))?
                    - 1;
                if lo > hi {
                    count = 0;
                    break;
                }
                count = count.saturating_mul((hi - lo + 1) as u128);
                ranges.push((lo, hi));
            }
            if count == 0 {
                continue;
            }
            if count > 1 << 22 {
                return Err(Error::InvalidArgument(format!(
                    "region holds {count} candidate cubes at level {k}; shrink the box or level range"
                )));
            }
            let mut corner: Vec<i64> = ranges.iter().map(|&(lo, _)| lo).collect();
            loop {
                let q = DyadicCube::new(k, corner.clone());
                if self.in_f(&q)? {
                    out.push(q);
                }
                let mut advanced = false;
                for c in (0..n).rev() {
                    if corner[c] < ranges[c].1 {
                        corner[c] += 1;
                        for (r, range) in corner.iter_mut().zip(&ranges).skip(c + 1) {
                            *r = range.0;
                        }
                        advanced = true;
                        break;
                    }
                }
                if !advanced {
                    break;
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// The finite covering superset around `x`, which must be certifiably
    /// off the set: first find the stage `i` with `delta[i] >= 2^{-i+1}`,
    /// then keep decomposition cubes with `(1/14) delta < diam < 6 delta`
    /// and `d(x, c_Q)[i] < (3/2) delta + 2^{-i+2}`.
    pub fn enum_gx(&self, x: &CPoint, stage_budget: u32) -> Result<GxInfo> {
        if x.dim() != self.set.dim() {
            return Err(Error::DimensionMismatch { expected: self.set.dim(), got: x.dim() });
        }
        let key = x.key();
        if let Some(info) = self.gx_memo.lock().unwrap().get(&key) {
            return Ok(info.clone());
        }
        let mut chosen = None;
        for i in 1..=stage_budget as i64 {
            let delta = self.set.dist(x, i)?;
            if delta >= Dyadic::pow2(-i + 1) {
                chosen = Some((i, delta));
                break;
            }
        }
        let Some((i, delta)) = chosen else {
            return Err(Error::PointPossiblyInSet);
        };
        let cubes = self.gx_cubes(x, i, &delta)?;
        let info = GxInfo { stage: i, delta, cubes };
        self.gx_memo.lock().unwrap().insert(key, info.clone());
        Ok(info)
    }

    fn gx_cubes(&self, x: &CPoint, i: i64, delta: &Dyadic) -> Result<Vec<DyadicCube>> {
        let n = self.set.dim();
        let threshold = delta.mul_int(3).halve().add(&Dyadic::pow2(-i + 2));
        // Center search window: true distance below threshold + 2^-i, plus
        // the coordinate approximation slack.
        let w = threshold.add(&Dyadic::pow2(-i)).add(&Dyadic::pow2(-(i + 3)));
        let xa = x.approx(i + 3);
        let mut out = Vec::new();
        for k in level_window(delta, n) {
            // Level filter: (1/14) delta < sqrt(n) 2^-k  and  sqrt(n) 2^-k < 6 delta.
            let diam_big = Dyadic::int_times_pow2(14, -k).cmp_sqrtn(n as u64, delta)
                == Ordering::Greater;
            let diam_small =
                Dyadic::pow2(-k).cmp_sqrtn(n as u64, &delta.mul_int(6)) == Ordering::Less;
            if !(diam_big && diam_small) {
                continue;
            }
            // Candidate corners: centers within w of the approximation.
            let mut ranges = Vec::with_capacity(n);
            for c in 0..n {
                let lo = xa[c]
                    .sub(&w)
                    .shl(k)
                    .floor_int()
                    .to_i64()
                    .ok_or_else(|| Error::InvalidArgument("point out of range".into()))?
                    - 1;
                let hi = xa[c]
                    .add(&w)
                    .shl(k)
                    .ceil_int()
                    .to_i64()
                    .ok_or_else(|| Error::InvalidArgument("point out of range".into()))?;
                ranges.push((lo, hi));
            }
            let mut corner: Vec<i64> = ranges.iter().map(|&(lo, _)| lo).collect();
            loop {
                let q = DyadicCube::new(k, corner.clone());
                let dc = cpoint_dist(x, &CPoint::from_dyadics(q.center()), i)?;
                if dc < threshold && self.in_f(&q)? {
                    out.push(q);
                }
                let mut advanced = false;
                for c in (0..n).rev() {
                    if corner[c] < ranges[c].1 {
                        corner[c] += 1;
                        for (r, range) in corner.iter_mut().zip(&ranges).skip(c + 1) {
                            *r = range.0;
                        }
                        advanced = true;
                        break;
                    }
                }
                if !advanced {
                    break;
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// A decomposition cube containing the dyadic point `x`, searched over
    /// the levels bracketed by the certified distance, or None when `x` is
    /// on the set side of every candidate scale.
    pub fn find_covering_cube(&self, x: &[Dyadic]) -> Result<Option<DyadicCube>> {
        let n = self.set.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        let xp = CPoint::from_dyadics(x.to_vec());
        let mut found = None;
        for i in 1..=60 {
            let delta = self.set.dist(&xp, i)?;
            if delta >= Dyadic::pow2(-i + 1) {
                found = Some(delta);
                break;
            }
        }
        let Some(delta) = found else {
            return Err(Error::PointPossiblyInSet);
        };
        // diam in (delta/7, 3 delta), scanned coarse to fine.
        for k in level_window(&delta, n) {
            let big_enough =
                Dyadic::int_times_pow2(7, -k).cmp_sqrtn(n as u64, &delta) == Ordering::Greater;
            let small_enough =
                Dyadic::pow2(-k).cmp_sqrtn(n as u64, &delta.mul_int(3)) == Ordering::Less;
            if !(big_enough && small_enough) {
                continue;
            }
            // Cubes of level k containing x: corner floor(x 2^k), and the
            // neighbor below on axes where x sits on the grid.
            let mut choices: Vec<Vec<i64>> = Vec::with_capacity(n);
            for xc in x {
                let scaled = xc.shl(k);
                let f = scaled
                    .floor_int()
                    .to_i64()
                    .ok_or_else(|| Error::InvalidArgument("point out of range".into()))?;
                if scaled.is_integer() {
                    choices.push(vec![f - 1, f]);
                } else {
                    choices.push(vec![f]);
                }
            }
            let mut idx = vec![0usize; n];
            loop {
                let corner: Vec<i64> = (0..n).map(|c| choices[c][idx[c]]).collect();
                let q = DyadicCube::new(k, corner);
                if q.contains(x) && self.in_f(&q)? {
                    return Ok(Some(q));
                }
                let mut advanced = false;
                for c in (0..n).rev() {
                    if idx[c] + 1 < choices[c].len() {
                        idx[c] += 1;
                        idx[(c + 1)..].fill(0);
                        advanced = true;
                        break;
                    }
                }
                if !advanced {
                    break;
                }
            }
        }
        Ok(None)
    }

    /// The memoized approximate projection: the first dense-stream point
    /// with a certified `d(r, q) < 5 diam(Q)` against some sample point q of
    /// the cube. Returns the dense point (exactly representable for
    /// described sets).
    pub fn approx_projection(&self, q: &DyadicCube) -> Result<CPoint> {
        if let Some(&j) = self.proj_memo.lock().unwrap().get(q) {
            return Ok(self.set.dense_point(j));
        }
        // (5 diam)^2 = 25 n 4^-k, exact.
        let bound = Dyadic::int_times_pow2(25 * q.dim() as i64, -2 * q.level);
        let bmin = q.lower_corner();
        let bmax = q.upper_corner();
        // Sample grids of the cube, coarse to fine. The finest covering
        // radius diam/(4 sqrt(n)) already leaves well over half a diameter
        // of slack between the guaranteed nearby set point and the 5 diam
        // certificate, so the dense scan below always terminates.
        let grids: Vec<Vec<Vec<Dyadic>>> =
            (0..3).map(|r| sample_grid(q, q.level + r)).collect();
        for t in 0usize..4096 {
            let r = self.set.dense_point(t);
            if let Some(rc) = r.exact_coords() {
                // Exact squared distances: prune on the point-to-cube gap,
                // then certify against a sample point.
                if gap_sq_box_point(&bmin, &bmax, rc) >= bound {
                    continue;
                }
                for grid in &grids {
                    for g in grid {
                        let mut s = Dyadic::zero();
                        for c in 0..g.len() {
                            let d = rc[c].sub(&g[c]);
                            s = s.add(&d.mul(&d));
                        }
                        if s < bound {
                            self.proj_memo.lock().unwrap().insert(q.clone(), t);
                            return Ok(r);
                        }
                    }
                }
            } else {
                // Stream-named points may be inexact: outward enclosures at
                // a precision growing with the scan index.
                let p = 6 + q.level.max(0) + t as i64;
                for grid in &grids {
                    for g in grid {
                        let e = dist_encl(&r, &CPoint::from_dyadics(g.clone()), p)?;
                        if e.hi().mul(e.hi()) < bound {
                            self.proj_memo.lock().unwrap().insert(q.clone(), t);
                            return Ok(r);
                        }
                    }
                }
            }
        }
        Err(Error::InvalidArgument(
            "no nearby set point with a distance certificate; projection is \
             only defined on decomposition cubes"
                .into(),
        ))
    }

    /// Certified enclosure of `d(Q, F)` for described sets (closed-form
    /// box-to-primitive distances, outward sqrt at grid `2^-p`).
    pub fn cube_dist_encl(&self, q: &DyadicCube, p: i64) -> Option<DyInterval> {
        let spec = self.set.spec()?;
        Some(box_set_dist_encl(&q.lower_corner(), &q.upper_corner(), spec, p))
    }
}

/// Levels worth scanning when the cube diameter must be comparable to a
/// positive distance value `delta`: every level k passing a filter of the
/// form `c_lo * delta < sqrt(n) 2^-k < c_hi * delta` with `1/14 <= c_lo` and
/// `c_hi <= 6` lies in this window.
fn level_window(delta: &Dyadic, n: usize) -> std::ops::RangeInclusive<i64> {
    let lg = delta.log2_floor().expect("positive distance value");
    // ceil(log2 sqrt(n)) <= (log2_ceil(n) + 1) / 2.
    let log_n = (usize::BITS - (n - 1).leading_zeros()) as i64;
    (-lg - 8)..=(-lg + 8 + (log_n + 1) / 2)
}

/// Largest level h with `(1/2) sqrt(n) 2^-h > 4 diam(Q) + 2 eta_k`.
fn h_star(q: &DyadicCube) -> i64 {
    let n = q.dim() as u64;
    let two_eta = eta(q.level).double();
    let mut h = q.level - 1;
    loop {
        let a = Dyadic::pow2(-(h + 1)).sub(&Dyadic::pow2(2 - q.level));
        if a.signum() > 0 && a.cmp_sqrtn(n, &two_eta) == Ordering::Greater {
            return h;
        }
        h -= 1;
        assert!(h > q.level - 64, "super-cube level search runaway");
    }
}

/// Certified enclosure of the distance between a closed box and a described
/// set: min over parts of exact per-axis gap formulas plus outward sqrt.
pub fn box_set_dist_encl(bmin: &[Dyadic], bmax: &[Dyadic], spec: &SetSpec, p: i64) -> DyInterval {
    let mut best: Option<DyInterval> = None;
    for part in &spec.parts {
        let e = box_part_dist_encl(bmin, bmax, part, p);
        best = Some(match best {
            None => e,
            Some(b) => DyInterval::new(
                b.lo().clone().min(e.lo().clone()),
                b.hi().clone().min(e.hi().clone()),
            ),
        });
    }
    best.expect("nonempty spec")
}

fn gap_sq_box_point(bmin: &[Dyadic], bmax: &[Dyadic], p: &[Dyadic]) -> Dyadic {
    let mut sum = Dyadic::zero();
    for c in 0..p.len() {
        let below = bmin[c].sub(&p[c]);
        let above = p[c].sub(&bmax[c]);
        let g = below.max(above).max(Dyadic::zero());
        sum = sum.add(&g.mul(&g));
    }
    sum
}

fn box_part_dist_encl(bmin: &[Dyadic], bmax: &[Dyadic], part: &SetPart, p: i64) -> DyInterval {
    match part {
        SetPart::Point { coords } => {
            let s = gap_sq_box_point(bmin, bmax, coords);
            DyInterval::new(s.sqrt(p, Round::Down), s.sqrt(p, Round::Up))
        }
        SetPart::Box { min, max } => {
            let mut sum = Dyadic::zero();
            for c in 0..min.len() {
                let below = min[c].sub(&bmax[c]);
                let above = bmin[c].sub(&max[c]);
                let g = below.max(above).max(Dyadic::zero());
                sum = sum.add(&g.mul(&g));
            }
            DyInterval::new(sum.sqrt(p, Round::Down), sum.sqrt(p, Round::Up))
        }
        SetPart::Ball { center, radius } => {
            let s = gap_sq_box_point(bmin, bmax, center);
            let d = DyInterval::new(s.sqrt(p, Round::Down), s.sqrt(p, Round::Up));
            let r = DyInterval::new(
                ratio_to_dyadic(radius, p + 4, Round::Down),
                ratio_to_dyadic(radius, p + 4, Round::Up),
            );
            d.sub(&r).pointwise_max(&DyInterval::zero())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedset::SetPart;
    use num_bigint::BigInt;
    use num_rational::Ratio;

    fn d(num: i64, exp: i64) -> Dyadic {
        Dyadic::int_times_pow2(num, exp)
    }

    fn origin_set() -> Decomposition {
        let spec = SetSpec {
            dim: 1,
            parts: vec![SetPart::Point { coords: vec![Dyadic::zero()] }],
        };
        Decomposition::new(TotalClosedSet::make_set(spec).unwrap())
    }

    fn cube1(level: i64, corner: i64) -> DyadicCube {
        DyadicCube::new(level, vec![corner])
    }

    #[test]
    fn sample_grid_examples() {
        // Q = [1,2], i = 1: grid level 1, points {1, 3/2, 2}.
        let q = cube1(0, 1);
        let g = sample_grid(&q, 1);
        let coords: Vec<Dyadic> = g.into_iter().map(|mut v| v.pop().unwrap()).collect();
        assert_eq!(coords, vec![d(1, 0), d(3, -1), d(2, 0)]);
        // Q = [1/2, 1] (level 1), i = 2: {1/2, 3/4, 1}.
        let q = cube1(1, 1);
        let g = sample_grid(&q, 2);
        let coords: Vec<Dyadic> = g.into_iter().map(|mut v| v.pop().unwrap()).collect();
        assert_eq!(coords, vec![d(1, -1), d(3, -2), d(1, 0)]);
        // Vertices always present.
        let q = DyadicCube::new(2, vec![5, -3]);
        let g = sample_grid(&q, 0);
        for vx in [q.lower(0), q.upper(0)] {
            for vy in [q.lower(1), q.upper(1)] {
                assert!(g.contains(&vec![vx.clone(), vy.clone()]));
            }
        }
    }

    #[test]
    fn candidate_test_examples() {
        let dec = origin_set();
        assert!(dec.in_f0(&cube1(0, 1)).unwrap(), "[1,2] is a candidate");
        assert!(!dec.in_f0(&cube1(0, 0)).unwrap(), "[0,1] is not");
        assert!(dec.in_f0(&cube1(1, 1)).unwrap(), "[1/2,1] is a candidate");
        assert!(dec.in_f0(&cube1(1, 3)).unwrap(), "[3/2,2] is a candidate");
    }

    #[test]
    fn maximality_examples() {
        let dec = origin_set();
        assert!(dec.in_f(&cube1(0, 1)).unwrap(), "[1,2] is maximal");
        assert!(dec.in_f(&cube1(1, 1)).unwrap(), "[1/2,1] is maximal");
        assert!(!dec.in_f(&cube1(1, 3)).unwrap(), "[3/2,2] sits inside [1,2]");
    }

    /// Independent oracle for the decomposition of R \ {0}: all arithmetic
    /// in exact rationals, straight from the defining inequalities. For this
    /// set every sampled distance value equals the true distance (both are
    /// dyadic on the query grid), so the oracle is name-independent.
    mod oracle {
        use super::*;
        type Q = Ratio<BigInt>;

        fn q(n: i64, d: i64) -> Q {
            Ratio::new(BigInt::from(n), BigInt::from(d))
        }

        fn pow2(e: i64) -> Q {
            if e >= 0 {
                Ratio::from_integer(BigInt::from(1) << e as usize)
            } else {
                Ratio::new(BigInt::from(1), BigInt::from(1) << (-e) as usize)
            }
        }

        fn grid_points(level: i64, corner: i64, h: i64) -> Vec<Q> {
            // Vertices of the level-h grid within [corner, corner+1] * 2^-level,
            // plus the cube vertices; h >= level holds in every use below.
            assert!(h >= level);
            let step = pow2(-h);
            let start = pow2(-level) * BigInt::from(corner);
            let count = 1i64 << (h - level);
            (0..=count).map(|j| start.clone() + step.clone() * BigInt::from(j)).collect()
        }

        pub fn in_f0(level: i64, corner: i64) -> bool {
            let k = level;
            let bk = (k + 3).max(0);
            let eta = pow2(-bk);
            let diam = pow2(-k);
            // Grid index: least h with 2^-(h+1) < 2^-i at i = max(k+1, 0); n=1 gives h = i.
            let h = (k + 1).max(0);
            for r in grid_points(k, corner, h) {
                let dist = if r < Q::from_integer(BigInt::from(0)) { -r } else { r };
                if q(2, 1) * &diam - &eta < dist && dist < q(4, 1) * &diam + &eta {
                    return true;
                }
            }
            false
        }

        pub fn in_f(level: i64, corner: i64) -> bool {
            if !in_f0(level, corner) {
                return false;
            }
            // h* = largest h with 2^-(h+1) > 4 * 2^-k + 2 eta.
            let bound = q(4, 1) * pow2(-level) + q(2, 1) * pow2(-(level + 3).max(0));
            let mut hstar = level - 1;
            while pow2(-(hstar + 1)) <= bound {
                hstar -= 1;
            }
            // Super-corner at level h is corner >> (level - h).
            for h in (hstar + 1)..=(level - 1) {
                let sc = corner >> (level - h) as u32;
                if in_f0(h, sc) {
                    return false;
                }
            }
            true
        }
    }

    #[test]
    fn decomposition_matches_oracle_in_window() {
        let dec = origin_set();
        for level in -3..=4 {
            let span = 8i64 << level.max(0); // covers [-8, 8] at every level
            for corner in -span..span.max(1) {
                let q = cube1(level, corner);
                assert_eq!(
                    dec.in_f(&q).unwrap(),
                    oracle::in_f(level, corner),
                    "disagreement at {q:?}"
                );
            }
        }
    }

    #[test]
    fn decomposition_of_punctured_line_is_dyadic_shells() {
        // Every maximal cube in the window is [2^j, 2^{j+1}] or its mirror.
        let dec = origin_set();
        let cubes = dec
            .enum_region(&[d(-8, 0)], &[d(8, 0)], -3, 4)
            .unwrap();
        for q in &cubes {
            // [2^j, 2^{j+1}] has corner 1; [-2^{j+1}, -2^j] has corner -2.
            assert!(
                q.corner[0] == 1 || q.corner[0] == -2,
                "cube {q:?} is not a shell"
            );
        }
        // Levels -3..=4 give shells [2^j, 2^{j+1}] for j = -4..=2 on each side
        // intersected with the open window (-8, 8): j in -4..=2.
        assert_eq!(cubes.len(), 2 * 7);
    }

    #[test]
    fn enum_region_examples() {
        let dec = origin_set();
        let cubes = dec.enum_region(&[d(1, -2)], &[d(4, 0)], -2, 2).unwrap();
        let expect: Vec<DyadicCube> =
            vec![cube1(-1, 1), cube1(0, 1), cube1(1, 1), cube1(2, 1)];
        let mut expect = expect;
        expect.sort();
        assert_eq!(cubes, expect, "quarter-to-four window");
        // A level range beyond the window yields nothing.
        let none = dec.enum_region(&[d(1, -2)], &[d(4, 0)], 12, 12).unwrap();
        assert!(none.is_empty());
        // A degenerate box has empty interior.
        let none = dec.enum_region(&[d(1, 0)], &[d(1, 0)], -2, 2).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn enum_region_off_the_ball_in_plane() {
        let spec = SetSpec {
            dim: 2,
            parts: vec![SetPart::Ball {
                center: vec![Dyadic::zero(), Dyadic::zero()],
                radius: Ratio::from_integer(BigInt::from(1)),
            }],
        };
        let dec = Decomposition::new(TotalClosedSet::make_set(spec).unwrap());
        let cubes = dec
            .enum_region(&[d(1, 0), d(1, 0)], &[d(2, 0), d(2, 0)], -1, 6)
            .unwrap();
        assert!(!cubes.is_empty());
        for q in &cubes {
            let e = dec.cube_dist_encl(q, 20).unwrap();
            assert!(e.lo().signum() > 0, "cube {q:?} must avoid the ball");
        }
    }

    #[test]
    fn distance_certificates_on_shells() {
        // (1/2) diam < d(Q, F) < 5 diam for every enumerated cube.
        let dec = origin_set();
        let cubes = dec.enum_region(&[d(-8, 0)], &[d(8, 0)], -3, 4).unwrap();
        assert!(!cubes.is_empty());
        for q in &cubes {
            let e = dec.cube_dist_encl(q, 30).unwrap();
            assert_eq!(
                q.cmp_diam(&d(1, -1), e.lo()),
                Ordering::Less,
                "lower certificate fails on {q:?}"
            );
            assert_eq!(
                q.cmp_diam(&d(5, 0), e.hi()),
                Ordering::Greater,
                "upper certificate fails on {q:?}"
            );
        }
    }

    #[test]
    fn covering_superset_examples() {
        let dec = origin_set();
        let x = CPoint::from_dyadics(vec![d(3, -1)]);
        let info = dec.enum_gx(&x, 40).unwrap();
        assert!(info.cubes.contains(&cube1(0, 1)), "3/2 lies in [1,2]");
        assert!(info.cubes.len() <= 197);
        // Diameter filter: nothing at or above 6 delta.
        for q in &info.cubes {
            assert_eq!(
                q.cmp_diam(&Dyadic::one(), &info.delta.mul_int(6)),
                Ordering::Less
            );
        }
        // Deterministic replay.
        let again = dec.enum_gx(&x, 40).unwrap();
        assert_eq!(again.cubes, info.cubes);
        assert_eq!(again.stage, info.stage);
    }

    #[test]
    fn gx_rejects_points_on_the_set() {
        let dec = origin_set();
        let x = CPoint::from_ints(&[0]);
        assert!(matches!(
            dec.enum_gx(&x, 20),
            Err(Error::PointPossiblyInSet)
        ));
    }

    #[test]
    fn enlarged_cube_membership() {
        let q = cube1(0, 1);
        let eps = default_eps();
        // Q* = [1 - 1/16, 2 + 1/16].
        assert!(q.contains_enlarged(&eps, &[d(33, -4)])); // 2 + 1/16
        assert!(q.contains_enlarged(&eps, &[d(3, -1)])); // center
        assert!(!q.contains_enlarged(&eps, &[d(3, 0)])); // 3
        assert!(q.contains_enlarged(&eps, &[d(15, -4)])); // 1 - 1/16
        assert!(!q.contains_enlarged(&eps, &[d(14, -4)]));
    }

    #[test]
    fn projection_examples() {
        let dec = origin_set();
        let q = cube1(0, 1);
        let r = dec.approx_projection(&q).unwrap();
        assert_eq!(r.exact_coords().unwrap(), &[Dyadic::zero()]);
        // Two-point set: the far point fails the certificate.
        let spec = SetSpec {
            dim: 1,
            parts: vec![
                SetPart::Point { coords: vec![Dyadic::zero()] },
                SetPart::Point { coords: vec![Dyadic::from_int(10)] },
            ],
        };
        let dec2 = Decomposition::new(TotalClosedSet::make_set(spec).unwrap());
        let r2 = dec2.approx_projection(&cube1(0, 1)).unwrap();
        assert_eq!(r2.exact_coords().unwrap(), &[Dyadic::zero()]);
    }

    #[test]
    fn projection_certificates_on_shells() {
        let dec = origin_set();
        for q in dec.enum_region(&[d(-4, 0)], &[d(4, 0)], -2, 3).unwrap() {
            let r = dec.approx_projection(&q).unwrap();
            // d(r, Q) < 5 diam: check against the box distance enclosure.
            let rc = r.exact_coords().unwrap().to_vec();
            let s = gap_sq_box_point(&q.lower_corner(), &q.upper_corner(), &rc);
            assert!(s < Dyadic::int_times_pow2(25 * q.dim() as i64, -2 * q.level));
        }
    }

    #[test]
    fn covering_cube_contains_its_point() {
        let dec = origin_set();
        for num in [3i64, -3, 5, 9, -17, 31] {
            let x = vec![d(num, -2)];
            let q = dec
                .find_covering_cube(&x)
                .unwrap()
                .unwrap_or_else(|| panic!("no covering cube for {num}/4"));
            assert!(q.contains(&x));
        }
    }

    #[test]
    fn interiors_and_touching() {
        let a = cube1(0, 1);
        let b = cube1(1, 3); // [3/2, 2] inside [1, 2]
        let c = cube1(0, 2); // [2, 3]
        assert!(a.interiors_overlap(&b));
        assert!(!a.interiors_overlap(&c));
        assert!(a.touches(&c));
        assert!(!b.touches(&cube1(0, -1)));
    }

    #[test]
    fn cube_json_shape() {
        let q = DyadicCube::new(3, vec![-5, 2]);
        let js = serde_json::to_string(&q).unwrap();
        assert_eq!(js, r#"{"level":3,"corner":[-5,2]}"#);
        let back: DyadicCube = serde_json::from_str(&js).unwrap();
        assert_eq!(back, q);
    }
}
