//! Nonempty closed subsets of R^n carried with total information: a dense
//! point stream, an exhausting stream of open balls inside the complement,
//! and a certified distance evaluator `dist(x, j)` within `2^-j` of d(x, F).

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::creal::{dist_encl, square, CPoint, PointKey};
use crate::exact::dyadic::{parse_ratio, ratio_to_dyadic, Dyadic, Round};
use crate::exact::interval::DyInterval;

static NEXT_SET_ID: AtomicU64 = AtomicU64::new(1);

/// Primitive building block of a described set; all data exact.
#[derive(Clone, Debug, PartialEq)]
pub enum SetPart {
    Point { coords: Vec<Dyadic> },
    Box { min: Vec<Dyadic>, max: Vec<Dyadic> },
    Ball { center: Vec<Dyadic>, radius: Ratio<BigInt> },
}

/// A finite union of primitives describing a nonempty closed set.
#[derive(Clone, Debug, PartialEq)]
pub struct SetSpec {
    pub dim: usize,
    pub parts: Vec<SetPart>,
}

#[derive(Serialize, Deserialize)]
struct SpecDto {
    dim: usize,
    parts: Vec<PartDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum PartDto {
    Point { coords: Vec<String> },
    Box { min: Vec<String>, max: Vec<String> },
    Ball { center: Vec<String>, radius: String },
}

fn parse_coords(raw: &[String]) -> Result<Vec<Dyadic>> {
    raw.iter().map(|s| Dyadic::parse_exact(s)).collect()
}

impl SetSpec {
    pub fn from_json(s: &str) -> Result<SetSpec> {
        let dto: SpecDto =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("set description: {e}")))?;
        let mut parts = Vec::new();
        for p in dto.parts {
            parts.push(match p {
                PartDto::Point { coords } => SetPart::Point { coords: parse_coords(&coords)? },
                PartDto::Box { min, max } => {
                    SetPart::Box { min: parse_coords(&min)?, max: parse_coords(&max)? }
                }
                PartDto::Ball { center, radius } => SetPart::Ball {
                    center: parse_coords(&center)?,
                    radius: parse_ratio(&radius)?,
                },
            });
        }
        let spec = SetSpec { dim: dto.dim, parts };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let parts = self
            .parts
            .iter()
            .map(|p| match p {
                SetPart::Point { coords } => PartDto::Point {
                    coords: coords.iter().map(|d| d.to_decimal_string()).collect(),
                },
                SetPart::Box { min, max } => PartDto::Box {
                    min: min.iter().map(|d| d.to_decimal_string()).collect(),
                    max: max.iter().map(|d| d.to_decimal_string()).collect(),
                },
                SetPart::Ball { center, radius } => PartDto::Ball {
                    center: center.iter().map(|d| d.to_decimal_string()).collect(),
                    radius: radius.to_string(),
                },
            })
            .collect();
        serde_json::to_string(&SpecDto { dim: self.dim, parts }).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("set dimension must be at least 1".into()));
        }
        if self.parts.is_empty() {
            return Err(Error::EmptySet);
        }
        for part in &self.parts {
            match part {
                SetPart::Point { coords } => {
                    if coords.len() != self.dim {
                        return Err(Error::DimensionMismatch {
                            expected: self.dim,
                            got: coords.len(),
                        });
                    }
                }
                SetPart::Box { min, max } => {
                    if min.len() != self.dim || max.len() != self.dim {
                        return Err(Error::DimensionMismatch {
                            expected: self.dim,
                            got: min.len().max(max.len()),
                        });
                    }
                    for c in 0..self.dim {
                        if min[c] > max[c] {
                            return Err(Error::InvalidArgument(format!(
                                "box is empty on axis {c}: min > max"
                            )));
                        }
                    }
                }
                SetPart::Ball { center, radius } => {
                    if center.len() != self.dim {
                        return Err(Error::DimensionMismatch {
                            expected: self.dim,
                            got: center.len(),
                        });
                    }
                    if radius < &Ratio::from_integer(BigInt::from(0)) {
                        return Err(Error::InvalidArgument("ball radius is negative".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Componentwise bounding box of the union.
    pub fn hull(&self) -> (Vec<Dyadic>, Vec<Dyadic>) {
        let mut lo: Option<Vec<Dyadic>> = None;
        let mut hi: Option<Vec<Dyadic>> = None;
        for part in &self.parts {
            let (plo, phi): (Vec<Dyadic>, Vec<Dyadic>) = match part {
                SetPart::Point { coords } => (coords.clone(), coords.clone()),
                SetPart::Box { min, max } => (min.clone(), max.clone()),
                SetPart::Ball { center, radius } => {
                    let r = ratio_to_dyadic(radius, 16, Round::Up);
                    (
                        center.iter().map(|c| c.sub(&r)).collect(),
                        center.iter().map(|c| c.add(&r)).collect(),
                    )
                }
            };
            lo = Some(match lo {
                None => plo,
                Some(v) => v.into_iter().zip(plo).map(|(a, b)| a.min(b)).collect(),
            });
            hi = Some(match hi {
                None => phi,
                Some(v) => v.into_iter().zip(phi).map(|(a, b)| a.max(b)).collect(),
            });
        }
        (lo.expect("nonempty spec"), hi.expect("nonempty spec"))
    }
}

/// An open ball `B(center, radius)` certified to lie inside the complement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplementBall {
    pub center: Vec<Dyadic>,
    pub radius: Dyadic,
}

/// Enclosure of the Euclidean distance from `x` to an exact dyadic point,
/// from coordinate enclosures at precision `p`.
fn point_dist_encl(coords: &[Dyadic], x: &CPoint, p: i64) -> DyInterval {
    let mut sum = DyInterval::zero();
    for (c, q) in coords.iter().enumerate() {
        let d = x.coord_encl(c, p).sub(&DyInterval::point(q.clone()));
        sum = sum.add(&square(&d));
    }
    sum.sqrt(p + 2).expect("sum of squares is nonnegative")
}

fn part_dist_encl(part: &SetPart, x: &CPoint, p: i64) -> DyInterval {
    match part {
        SetPart::Point { coords } => point_dist_encl(coords, x, p),
        SetPart::Box { min, max } => {
            // d(x, B)^2 = sum_c max(0, min_c - x_c, x_c - max_c)^2.
            let mut sum = DyInterval::zero();
            for c in 0..min.len() {
                let xi = x.coord_encl(c, p);
                let below = DyInterval::point(min[c].clone()).sub(&xi);
                let above = xi.sub(&DyInterval::point(max[c].clone()));
                let gap = below.pointwise_max(&above).pointwise_max(&DyInterval::zero());
                sum = sum.add(&square(&gap));
            }
            sum.sqrt(p + 2).expect("sum of squares is nonnegative")
        }
        SetPart::Ball { center, radius } => {
            let d = point_dist_encl(center, x, p);
            let r = DyInterval::new(
                ratio_to_dyadic(radius, p + 4, Round::Down),
                ratio_to_dyadic(radius, p + 4, Round::Up),
            );
            d.sub(&r).pointwise_max(&DyInterval::zero())
        }
    }
}

fn spec_dist_encl(spec: &SetSpec, x: &CPoint, p: i64) -> DyInterval {
    let mut best: Option<DyInterval> = None;
    for part in &spec.parts {
        let e = part_dist_encl(part, x, p);
        best = Some(match best {
            None => e,
            Some(b) => DyInterval::new(
                b.lo().clone().min(e.lo().clone()),
                b.hi().clone().min(e.hi().clone()),
            ),
        });
    }
    best.expect("validated spec has at least one part")
}

/// Grid index range of `2^-s Z` inside `[lo, hi]`.
fn grid_range(lo: &Dyadic, hi: &Dyadic, s: i64) -> (BigInt, BigInt) {
    (lo.shl(s).ceil_int(), hi.shl(s).floor_int())
}

/// Visit every point of the product grid described by per-axis index
/// ranges, coordinates `index * 2^-s`, in lexicographic order.
fn for_each_grid_point(
    ranges: &[(BigInt, BigInt)],
    s: i64,
    mut f: impl FnMut(Vec<Dyadic>),
) {
    if ranges.iter().any(|(a, b)| a > b) {
        return;
    }
    let n = ranges.len();
    let mut idx: Vec<BigInt> = ranges.iter().map(|(a, _)| a.clone()).collect();
    loop {
        f(idx.iter().map(|i| Dyadic::new(i.clone(), -s)).collect());
        let mut advanced = false;
        for c in (0..n).rev() {
            if idx[c] < ranges[c].1 {
                idx[c] += 1;
                for (r, range) in idx.iter_mut().zip(ranges).skip(c + 1) {
                    *r = range.0.clone();
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            return;
        }
    }
}

/// Stage `s` of the dense enumeration of one primitive: its intersection
/// with the grid `2^-s Z^n`. Stages are nested, so the concatenation over
/// stages is a replayable dense stream.
fn part_stage_points(part: &SetPart, s: i64, out: &mut Vec<Vec<Dyadic>>) {
    match part {
        SetPart::Point { coords } => out.push(coords.clone()),
        SetPart::Box { min, max } => {
            let ranges: Vec<(BigInt, BigInt)> = (0..min.len())
                .map(|c| grid_range(&min[c], &max[c], s))
                .collect();
            for_each_grid_point(&ranges, s, |q| out.push(q));
        }
        SetPart::Ball { center, radius } => {
            let r_up = ratio_to_dyadic(radius, (s + 4).max(4), Round::Up);
            let ranges: Vec<(BigInt, BigInt)> = (0..center.len())
                .map(|c| grid_range(&center[c].sub(&r_up), &center[c].add(&r_up), s))
                .collect();
            let r2 = radius * radius;
            for_each_grid_point(&ranges, s, |q| {
                let mut sum = Dyadic::zero();
                for (qc, cc) in q.iter().zip(center) {
                    let d = qc.sub(cc);
                    sum = sum.add(&d.mul(&d));
                }
                if sum.to_ratio() <= r2 {
                    out.push(q);
                }
            });
        }
    }
}

enum SetKind {
    Spec(SetSpec),
    Generic {
        dense: Box<dyn Fn(usize) -> CPoint + Send + Sync>,
        balls: Box<dyn Fn(usize) -> Option<ComplementBall> + Send + Sync>,
    },
}

struct DenseCache {
    points: Vec<Vec<Dyadic>>,
    next_stage: i64,
}

struct BallCache {
    balls: Vec<ComplementBall>,
    next_stage: i64,
}

struct SetInner {
    id: u64,
    dim: usize,
    kind: SetKind,
    hull: Option<(Vec<Dyadic>, Vec<Dyadic>)>,
    dist_memo: Mutex<HashMap<(PointKey, i64), Dyadic>>,
    dense_cache: Mutex<DenseCache>,
    ball_cache: Mutex<BallCache>,
}

/// A closed set with total information. Instances are immutable; distance
/// queries are memoized per (point identity, precision) so every consumer
/// sees one stable, replayable value.
#[derive(Clone)]
pub struct TotalClosedSet {
    inner: Arc<SetInner>,
}

impl TotalClosedSet {
    pub fn make_set(spec: SetSpec) -> Result<TotalClosedSet> {
        spec.validate()?;
        let hull = spec.hull();
        Ok(TotalClosedSet {
            inner: Arc::new(SetInner {
                id: NEXT_SET_ID.fetch_add(1, Ordering::Relaxed),
                dim: spec.dim,
                kind: SetKind::Spec(spec),
                hull: Some(hull),
                dist_memo: Mutex::new(HashMap::new()),
                dense_cache: Mutex::new(DenseCache { points: Vec::new(), next_stage: 0 }),
                ball_cache: Mutex::new(BallCache { balls: Vec::new(), next_stage: 0 }),
            }),
        })
    }

    /// Build a set from raw total information: a dense stream and a
    /// complement-ball stream. Distance is derived from the two streams
    /// alone (upper bounds from dense points, lower bounds from balls).
    pub fn from_streams(
        dim: usize,
        dense: impl Fn(usize) -> CPoint + Send + Sync + 'static,
        balls: impl Fn(usize) -> Option<ComplementBall> + Send + Sync + 'static,
    ) -> TotalClosedSet {
        TotalClosedSet {
            inner: Arc::new(SetInner {
                id: NEXT_SET_ID.fetch_add(1, Ordering::Relaxed),
                dim,
                kind: SetKind::Generic { dense: Box::new(dense), balls: Box::new(balls) },
                hull: None,
                dist_memo: Mutex::new(HashMap::new()),
                dense_cache: Mutex::new(DenseCache { points: Vec::new(), next_stage: 0 }),
                ball_cache: Mutex::new(BallCache { balls: Vec::new(), next_stage: 0 }),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    /// Bounding box of the set when it was built from a description; absent
    /// for raw stream names.
    pub fn hull(&self) -> Option<&(Vec<Dyadic>, Vec<Dyadic>)> {
        self.inner.hull.as_ref()
    }

    /// The defining description, when the set was built from one.
    pub fn spec(&self) -> Option<&SetSpec> {
        match &self.inner.kind {
            SetKind::Spec(s) => Some(s),
            SetKind::Generic { .. } => None,
        }
    }

    /// Certified distance: `|dist(x, j) - d(x, F)| <= 2^-j`, deterministic
    /// per set instance.
    pub fn dist(&self, x: &CPoint, j: i64) -> Result<Dyadic> {
        if x.dim() != self.inner.dim {
            return Err(Error::DimensionMismatch { expected: self.inner.dim, got: x.dim() });
        }
        let key = (x.key(), j);
        if let Some(v) = self.inner.dist_memo.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let v = match &self.inner.kind {
            SetKind::Spec(spec) => dist_spec(spec, x, j),
            SetKind::Generic { .. } => self.dist_generic(x, j)?,
        };
        Ok(self
            .inner
            .dist_memo
            .lock()
            .unwrap()
            .entry(key)
            .or_insert(v)
            .clone())
    }

    /// Distance from an exact dyadic point; memoized structurally, so the
    /// same coordinates always replay the same answer.
    pub fn dist_dyadic(&self, coords: &[Dyadic], j: i64) -> Result<Dyadic> {
        self.dist(&CPoint::from_dyadics(coords.to_vec()), j)
    }

    /// Certified distance enclosure at working precision `p` (not memoized)
    /// for sets built from a description.
    pub fn dist_encl_at(&self, x: &CPoint, p: i64) -> Option<DyInterval> {
        match &self.inner.kind {
            SetKind::Spec(spec) => Some(spec_dist_encl(spec, x, p)),
            SetKind::Generic { .. } => None,
        }
    }

    fn dist_generic(&self, x: &CPoint, j: i64) -> Result<Dyadic> {
        let (dense, balls) = match &self.inner.kind {
            SetKind::Generic { dense, balls } => (dense, balls),
            SetKind::Spec(_) => unreachable!(),
        };
        let mut upper: Option<Dyadic> = None;
        let mut lower = Dyadic::zero();
        let mut dense_seen = 0usize;
        let mut balls_seen = 0usize;
        let mut exhausted = false;
        for t in 0i64.. {
            let p = j + 4 + t;
            let target = 4usize << t.min(40) as usize;
            while dense_seen < target {
                let y = dense(dense_seen);
                if y.dim() != self.inner.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.inner.dim,
                        got: y.dim(),
                    });
                }
                let hi = dist_encl(x, &y, p)?.hi().clone();
                upper = Some(match upper {
                    None => hi,
                    Some(u) => u.min(hi),
                });
                dense_seen += 1;
            }
            while !exhausted && balls_seen < target {
                match balls(balls_seen) {
                    None => exhausted = true,
                    Some(b) => {
                        let e = point_dist_encl(&b.center, x, p);
                        if e.hi() < &b.radius {
                            lower = lower.max(b.radius.sub(e.hi()));
                        }
                        balls_seen += 1;
                    }
                }
            }
            if let Some(u) = &upper {
                if u.sub(&lower) <= Dyadic::pow2(-j) {
                    let mid = u.add(&lower).halve();
                    return Ok(mid.round(j + 1, Round::Nearest).max(Dyadic::zero()));
                }
            }
        }
        unreachable!("distance refinement loop is infinite")
    }

    /// `k`-th point of the dense stream. Stage `s` of a described set emits
    /// its intersection with the grid `2^-s Z^n`; stages repeat and refine.
    pub fn dense_point(&self, k: usize) -> CPoint {
        match &self.inner.kind {
            SetKind::Generic { dense, .. } => dense(k),
            SetKind::Spec(spec) => {
                let mut cache = self.inner.dense_cache.lock().unwrap();
                while cache.points.len() <= k {
                    let s = cache.next_stage;
                    assert!(s < 4096, "dense stage runaway");
                    for part in &spec.parts {
                        part_stage_points(part, s, &mut cache.points);
                    }
                    cache.next_stage += 1;
                }
                CPoint::from_dyadics(cache.points[k].clone())
            }
        }
    }

    /// `k`-th ball of the complement stream. For described sets, stage `t`
    /// scans the grid `2^-(t+1) Z^n` inside the hull inflated by `t + 1` and
    /// emits every ball whose certified radius reaches `2^-t`.
    pub fn complement_ball(&self, k: usize) -> Option<ComplementBall> {
        match &self.inner.kind {
            SetKind::Generic { balls, .. } => balls(k),
            SetKind::Spec(_) => {
                loop {
                    {
                        let cache = self.inner.ball_cache.lock().unwrap();
                        if let Some(b) = cache.balls.get(k) {
                            return Some(b.clone());
                        }
                    }
                    self.generate_ball_stage();
                }
            }
        }
    }

    fn generate_ball_stage(&self) {
        let t = {
            let mut cache = self.inner.ball_cache.lock().unwrap();
            let t = cache.next_stage;
            assert!(t < 64, "complement stage runaway");
            cache.next_stage += 1;
            t
        };
        let (hlo, hhi) = self.inner.hull.as_ref().expect("described set has a hull");
        let infl = Dyadic::from_int(t + 1);
        let s = t + 1;
        let ranges: Vec<(BigInt, BigInt)> = (0..self.inner.dim)
            .map(|c| grid_range(&hlo[c].sub(&infl), &hhi[c].add(&infl), s))
            .collect();
        let mut fresh = Vec::new();
        for_each_grid_point(&ranges, s, |p| {
            if let Some(b) = self.certify_ball(&p, t) {
                fresh.push(b);
            }
        });
        self.inner.ball_cache.lock().unwrap().balls.extend(fresh);
    }

    /// The stage-`t` ball at a candidate center, when certifiable: radius is
    /// the memoized distance estimate minus its error allowance, rounded
    /// down; emitted only when it reaches the stage scale `2^-t`.
    fn certify_ball(&self, center: &[Dyadic], t: i64) -> Option<ComplementBall> {
        let d = self.dist_dyadic(center, t + 3).ok()?;
        let rho = d.sub(&Dyadic::pow2(-(t + 2))).round(t + 3, Round::Down);
        if rho >= Dyadic::pow2(-t) {
            Some(ComplementBall { center: center.to_vec(), radius: rho })
        } else {
            None
        }
    }

    /// Semidecision of `x` not in `F`: returns a complement ball certified
    /// to contain `x`, or nothing within the budget. Absence is never
    /// evidence of membership. For described sets the budget counts grid
    /// stages; for raw stream names it counts balls inspected.
    pub fn outside_probe(&self, x: &CPoint, budget: u32) -> Result<Option<ComplementBall>> {
        if x.dim() != self.inner.dim {
            return Err(Error::DimensionMismatch { expected: self.inner.dim, got: x.dim() });
        }
        match &self.inner.kind {
            SetKind::Spec(_) => {
                let (hlo, hhi) = self.inner.hull.as_ref().expect("described set has a hull");
                for t in 0..=budget as i64 {
                    let approx = x.approx(t + 4);
                    let center: Vec<Dyadic> =
                        approx.iter().map(|a| a.round(t + 1, Round::Nearest)).collect();
                    let infl = Dyadic::from_int(t + 1);
                    let inside = (0..self.inner.dim).all(|c| {
                        center[c] >= hlo[c].sub(&infl) && center[c] <= hhi[c].add(&infl)
                    });
                    if !inside {
                        continue;
                    }
                    if let Some(ball) = self.certify_ball(&center, t) {
                        let e = point_dist_encl(&ball.center, x, t + 6);
                        if e.hi() < &ball.radius {
                            return Ok(Some(ball));
                        }
                    }
                }
                Ok(None)
            }
            SetKind::Generic { balls, .. } => {
                for k in 0..budget as usize {
                    let Some(b) = balls(k) else { break };
                    let p = match b.radius.log2_floor() {
                        None => continue,
                        Some(e) => (2 - e).max(6),
                    };
                    if point_dist_encl(&b.center, x, p).hi() < &b.radius {
                        return Ok(Some(b));
                    }
                }
                Ok(None)
            }
        }
    }
}

fn dist_spec(spec: &SetSpec, x: &CPoint, j: i64) -> Dyadic {
    let mut p = j + 3;
    loop {
        let e = spec_dist_encl(spec, x, p);
        if e.width() <= Dyadic::pow2(-(j + 1)) {
            return e.mid().round(j + 1, Round::Nearest).max(Dyadic::zero());
        }
        p += 8;
    }
}

impl std::fmt::Debug for TotalClosedSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.inner.kind {
            SetKind::Spec(spec) => write!(f, "TotalClosedSet#{} {}", self.inner.id, spec.to_json()),
            SetKind::Generic { .. } => {
                write!(f, "TotalClosedSet#{} (stream name, dim {})", self.inner.id, self.inner.dim)
            }
        }
    }
}
