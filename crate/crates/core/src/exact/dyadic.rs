use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Rounding direction for operations that leave the dyadic ring (division,
/// square roots, conversion from general rationals).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Round {
    /// Toward minus infinity.
    Down,
    /// Toward plus infinity.
    Up,
    /// To the nearest grid point, ties toward plus infinity.
    Nearest,
}

/// An exact dyadic rational `mant * 2^exp`.
///
/// Canonical form: `mant` is odd, or the value is zero with `exp == 0`.
/// Addition, subtraction and multiplication are exact; all other operations
/// take an explicit target grid `2^-p` and a rounding direction.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mant: BigInt,
    exp: i64,
}

impl Dyadic {
    pub fn new(mant: BigInt, exp: i64) -> Self {
        let mut d = Dyadic { mant, exp };
        d.normalize();
        d
    }

    fn normalize(&mut self) {
        if self.mant.is_zero() {
            self.exp = 0;
            return;
        }
        let tz = self.mant.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            self.mant >>= tz;
            self.exp += tz as i64;
        }
    }

    pub fn zero() -> Self {
        Dyadic { mant: BigInt::zero(), exp: 0 }
    }

    pub fn one() -> Self {
        Dyadic { mant: BigInt::one(), exp: 0 }
    }

    pub fn from_int(v: i64) -> Self {
        Dyadic::new(BigInt::from(v), 0)
    }

    pub fn from_bigint(v: BigInt) -> Self {
        Dyadic::new(v, 0)
    }

    /// `2^e`.
    pub fn pow2(e: i64) -> Self {
        Dyadic { mant: BigInt::one(), exp: e }
    }

    /// `num * 2^exp` convenience constructor.
    pub fn int_times_pow2(num: i64, exp: i64) -> Self {
        Dyadic::new(BigInt::from(num), exp)
    }

    pub fn mant(&self) -> &BigInt {
        &self.mant
    }

    pub fn exp(&self) -> i64 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn signum(&self) -> i32 {
        match self.mant.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    pub fn abs(&self) -> Self {
        Dyadic { mant: self.mant.abs(), exp: self.exp }
    }

    /// Multiply by `2^s` (exact).
    pub fn shl(&self, s: i64) -> Self {
        if self.mant.is_zero() {
            return Dyadic::zero();
        }
        Dyadic { mant: self.mant.clone(), exp: self.exp + s }
    }

    pub fn double(&self) -> Self {
        self.shl(1)
    }

    pub fn halve(&self) -> Self {
        self.shl(-1)
    }

    pub fn add(&self, o: &Dyadic) -> Self {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        let e = self.exp.min(o.exp);
        let a = &self.mant << (self.exp - e) as u64;
        let b = &o.mant << (o.exp - e) as u64;
        Dyadic::new(a + b, e)
    }

    pub fn sub(&self, o: &Dyadic) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        Dyadic { mant: -self.mant.clone(), exp: self.exp }
    }

    pub fn mul(&self, o: &Dyadic) -> Self {
        if self.is_zero() || o.is_zero() {
            return Dyadic::zero();
        }
        Dyadic { mant: &self.mant * &o.mant, exp: self.exp + o.exp }
    }

    pub fn mul_int(&self, k: i64) -> Self {
        Dyadic::new(&self.mant * BigInt::from(k), self.exp)
    }

    pub fn mul_bigint(&self, k: &BigInt) -> Self {
        Dyadic::new(&self.mant * k, self.exp)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut r = Dyadic::one();
        for _ in 0..k {
            r = r.mul(self);
        }
        r
    }

    /// `floor(log2(|self|))`; `None` for zero. Exact.
    pub fn log2_floor(&self) -> Option<i64> {
        if self.is_zero() {
            return None;
        }
        Some(self.mant.bits() as i64 - 1 + self.exp)
    }

    /// Least `t` with `|self| <= 2^t`; `None` for zero. Exact.
    pub fn log2_ceil(&self) -> Option<i64> {
        if self.is_zero() {
            return None;
        }
        let bits = self.mant.bits() as i64;
        let pow_of_two = self.mant.abs().trailing_zeros().unwrap_or(0) as i64 == bits - 1;
        Some(if pow_of_two { bits - 1 + self.exp } else { bits + self.exp })
    }

    /// Round to the grid `2^-p` in the given direction.
    pub fn round(&self, p: i64, dir: Round) -> Self {
        if self.exp >= -p {
            return self.clone();
        }
        let shift = (-p - self.exp) as u64;
        let m = match dir {
            Round::Down => &self.mant >> shift,
            Round::Up => -((-&self.mant) >> shift),
            Round::Nearest => {
                let half = BigInt::one() << (shift - 1);
                (&self.mant + half) >> shift
            }
        };
        Dyadic::new(m, -p)
    }

    /// Largest integer `<= self`, as a `BigInt`. Exact.
    pub fn floor_int(&self) -> BigInt {
        if self.exp >= 0 {
            &self.mant << self.exp as u64
        } else {
            &self.mant >> (-self.exp) as u64
        }
    }

    /// Smallest integer `>= self`, as a `BigInt`. Exact.
    pub fn ceil_int(&self) -> BigInt {
        -((-self).floor_int())
    }

    pub fn is_integer(&self) -> bool {
        self.exp >= 0
    }

    /// Exact quotient when it exists in the dyadic ring.
    pub fn div_exact(&self, o: &Dyadic) -> Option<Dyadic> {
        if o.is_zero() {
            return None;
        }
        let (q, r) = self.mant.div_rem(&o.mant);
        if r.is_zero() {
            Some(Dyadic::new(q, self.exp - o.exp))
        } else {
            None
        }
    }

    /// `self / o` rounded onto the grid `2^-p`. `o` must be nonzero.
    pub fn div(&self, o: &Dyadic, p: i64, dir: Round) -> Dyadic {
        assert!(!o.is_zero(), "division by zero dyadic");
        // self/o = (ma/mb) * 2^(ea-eb); scale so the quotient grid is 2^-p.
        let e = self.exp - o.exp + p;
        let (mut num, mut den) = (self.mant.clone(), o.mant.clone());
        if e >= 0 {
            num <<= e as u64;
        } else {
            den <<= (-e) as u64;
        }
        if den.is_negative() {
            num = -num;
            den = -den;
        }
        let m = match dir {
            Round::Down => num.div_floor(&den),
            Round::Up => num.div_ceil(&den),
            Round::Nearest => {
                let den2 = &den << 1u64;
                ((num << 1u64) + &den).div_floor(&den2)
            }
        };
        Dyadic::new(m, -p)
    }

    /// Directed square root on the grid `2^-p`; `self` must be `>= 0`.
    /// The returned value `r` satisfies `r <= sqrt(self) <= r + 2^-p` for
    /// `Down` and `r - 2^-p <= sqrt(self) <= r` for `Up`.
    pub fn sqrt(&self, p: i64, dir: Round) -> Dyadic {
        assert!(self.signum() >= 0, "sqrt of negative dyadic");
        if self.is_zero() {
            return Dyadic::zero();
        }
        // sqrt(m * 2^e) = sqrt(m << (e + 2t)) * 2^-t, for e + 2t >= 0.
        let t = p.max((1 - self.exp) >> 1).max(0);
        let v = &self.mant << (self.exp + 2 * t) as u64;
        let r = v.sqrt();
        let exact = (&r * &r) == v;
        let m = match dir {
            Round::Down | Round::Nearest => r,
            Round::Up => {
                if exact {
                    r
                } else {
                    r + 1
                }
            }
        };
        Dyadic::new(m, -t)
    }

    /// Compare `self * sqrt(n)` against `b`, exactly.
    pub fn cmp_sqrtn(&self, n: u64, b: &Dyadic) -> Ordering {
        debug_assert!(n >= 1);
        let sa = self.signum();
        let sb = b.signum();
        if sa != sb {
            return sa.cmp(&sb);
        }
        if sa == 0 {
            return Ordering::Equal;
        }
        let lhs = self.mul(self).mul_bigint(&BigInt::from(n));
        let rhs = b.mul(b);
        let sq = lhs.cmp(&rhs);
        if sa > 0 {
            sq
        } else {
            sq.reverse()
        }
    }

    /// Exact decimal string (always finite for dyadics).
    pub fn to_decimal_string(&self) -> String {
        if self.exp >= 0 {
            return (&self.mant << self.exp as u64).to_string();
        }
        let p = (-self.exp) as u32;
        let scaled = (self.mant.abs()) * BigInt::from(5u32).pow(p);
        let digits = scaled.to_string();
        let pu = p as usize;
        let (int_part, frac_part) = if digits.len() > pu {
            let (a, b) = digits.split_at(digits.len() - pu);
            (a.to_string(), b.to_string())
        } else {
            ("0".to_string(), format!("{:0>width$}", digits, width = pu))
        };
        let frac = frac_part.trim_end_matches('0');
        let sign = if self.mant.is_negative() { "-" } else { "" };
        if frac.is_empty() {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac}")
        }
    }

    /// Canonical `m*2^e` string.
    pub fn to_pow2_string(&self) -> String {
        format!("{}*2^{}", self.mant, self.exp)
    }

    /// Parse `m*2^e`, an integer, or a finite decimal that is exactly dyadic.
    pub fn parse_exact(s: &str) -> Result<Dyadic> {
        match parse_number(s)? {
            Parsed::Dyadic(d) => Ok(d),
            Parsed::Ratio(_) => Err(Error::Parse(format!(
                "{s} is not a dyadic rational; denominator has an odd factor"
            ))),
        }
    }

    /// Parse any of the accepted number forms; non-dyadic rationals are
    /// rounded to the nearest point of the grid `2^-p` (certified enclosure
    /// conversion). Returns the value and whether it was exact.
    pub fn parse_lossy(s: &str, p: i64) -> Result<(Dyadic, bool)> {
        match parse_number(s)? {
            Parsed::Dyadic(d) => Ok((d, true)),
            Parsed::Ratio(r) => Ok((ratio_to_dyadic(&r, p, Round::Nearest), false)),
        }
    }

    pub fn to_f64_lossy(&self) -> f64 {
        let r = Ratio::new(self.mant.clone(), BigInt::one());
        let base: f64 = 2.0;
        // Good enough for logs and diagnostics only.
        let m = r.numer().to_string().parse::<f64>().unwrap_or(f64::NAN);
        m * base.powi(self.exp as i32)
    }

    pub fn to_ratio(&self) -> Ratio<BigInt> {
        if self.exp >= 0 {
            Ratio::from_integer(&self.mant << self.exp as u64)
        } else {
            Ratio::new(self.mant.clone(), BigInt::one() << (-self.exp) as u64)
        }
    }
}

/// Parse any accepted number form (`m*2^e`, integer, decimal, `p/q`) to an
/// exact rational.
pub fn parse_ratio(s: &str) -> Result<Ratio<BigInt>> {
    match parse_number(s)? {
        Parsed::Dyadic(d) => Ok(d.to_ratio()),
        Parsed::Ratio(r) => Ok(r),
    }
}

enum Parsed {
    Dyadic(Dyadic),
    Ratio(Ratio<BigInt>),
}

fn parse_number(s: &str) -> Result<Parsed> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty number".into()));
    }
    if let Some((m, e)) = s.split_once("*2^") {
        let mant = BigInt::from_str(m.trim())
            .map_err(|e| Error::Parse(format!("bad mantissa in {s}: {e}")))?;
        let exp: i64 = e
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad exponent in {s}: {e}")))?;
        return Ok(Parsed::Dyadic(Dyadic::new(mant, exp)));
    }
    if let Some((p, q)) = s.split_once('/') {
        let num = BigInt::from_str(p.trim())
            .map_err(|e| Error::Parse(format!("bad numerator in {s}: {e}")))?;
        let den = BigInt::from_str(q.trim())
            .map_err(|e| Error::Parse(format!("bad denominator in {s}: {e}")))?;
        if den.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s}")));
        }
        let r = Ratio::new(num, den);
        return Ok(match ratio_as_dyadic(&r) {
            Some(d) => Parsed::Dyadic(d),
            None => Parsed::Ratio(r),
        });
    }
    // Decimal form: [-]digits[.digits]
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (-1i32, r),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match rest.split_once('.') {
        Some((a, b)) => (a, b),
        None => (rest, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(Error::Parse(format!("bad number {s}")));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::Parse(format!("bad number {s}")));
    }
    let digits = format!("{}{}", int_part, frac_part);
    let whole = BigInt::from_str(if digits.is_empty() { "0" } else { &digits })
        .map_err(|e| Error::Parse(format!("bad number {s}: {e}")))?;
    let whole = if sign < 0 { -whole } else { whole };
    let scale = frac_part.len() as u32;
    if scale == 0 {
        return Ok(Parsed::Dyadic(Dyadic::from_bigint(whole)));
    }
    let den = BigInt::from(10u32).pow(scale);
    let r = Ratio::new(whole, den);
    Ok(match ratio_as_dyadic(&r) {
        Some(d) => Parsed::Dyadic(d),
        None => Parsed::Ratio(r),
    })
}

/// Exact dyadic value of a rational, when its reduced denominator is a power
/// of two.
pub fn ratio_as_dyadic(r: &Ratio<BigInt>) -> Option<Dyadic> {
    let den = r.denom();
    debug_assert!(den.is_positive());
    let tz = den.trailing_zeros().unwrap_or(0);
    if (den >> tz).is_one() {
        Some(Dyadic::new(r.numer().clone(), -(tz as i64)))
    } else {
        None
    }
}

/// Round a rational onto the grid `2^-p`.
pub fn ratio_to_dyadic(r: &Ratio<BigInt>, p: i64, dir: Round) -> Dyadic {
    if let Some(d) = ratio_as_dyadic(r) {
        return d.round(p, dir);
    }
    let num = Dyadic::from_bigint(r.numer().clone());
    let den = Dyadic::from_bigint(r.denom().clone());
    num.div(&den, p, dir)
}

/// Certified upper bound for `sqrt(n)` on the grid `2^-p`.
pub fn sqrtn_upper(n: u64, p: i64) -> Dyadic {
    Dyadic::from_int(n as i64).sqrt(p, Round::Up)
}

/// Certified upper bound for `(b*sqrt(n))^t` with `b, t` small integers.
pub fn scaled_sqrtn_pow_upper(b: u64, n: u64, t: u32, p: i64) -> Dyadic {
    let bt = Dyadic::from_bigint(BigInt::from(b).pow(t));
    let half = t / 2;
    let even = Dyadic::from_bigint(BigInt::from(n).pow(half));
    if t % 2 == 0 {
        bt.mul(&even)
    } else {
        bt.mul(&even).mul(&sqrtn_upper(n, p))
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_pow2_string())
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal_string())
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let d = self.sub(other);
        match d.signum() {
            x if x < 0 => Ordering::Less,
            0 => Ordering::Equal,
            _ => Ordering::Greater,
        }
    }
}

impl std::ops::Neg for &Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic::neg(self)
    }
}

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_pow2_string())
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        Dyadic::parse_exact(&s).map_err(serde::de::Error::custom)
    }
}

impl FromStr for Dyadic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Dyadic> {
        Dyadic::parse_exact(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(num: i64, exp: i64) -> Dyadic {
        Dyadic::int_times_pow2(num, exp)
    }

    #[test]
    fn canonical_form() {
        let x = d(6, -1);
        assert_eq!(x.mant(), &BigInt::from(3));
        assert_eq!(x.exp(), 0);
        let z = d(0, 17);
        assert!(z.is_zero());
        assert_eq!(z.exp(), 0);
    }

    #[test]
    fn ring_ops_exact() {
        let a = d(1, -1);
        assert_eq!(a.add(&a), Dyadic::one());
        assert_eq!(d(3, -2).mul(&d(5, 1)), d(15, -1));
        assert_eq!(d(1, 0).sub(&d(1, -3)), d(7, -3));
        assert_eq!(d(-3, -2).abs(), d(3, -2));
    }

    #[test]
    fn ordering() {
        assert!(d(1, -3) < d(1, -2));
        assert!(d(-1, 2) < d(1, -10));
        assert_eq!(d(4, -2), Dyadic::one());
    }

    #[test]
    fn decimal_io() {
        assert_eq!(d(3, -2).to_decimal_string(), "0.75");
        assert_eq!(d(-5, -1).to_decimal_string(), "-2.5");
        assert_eq!(d(17, 0).to_decimal_string(), "17");
        assert_eq!(d(1, -6).to_decimal_string(), "0.015625");
        assert_eq!(Dyadic::parse_exact("0.75").unwrap(), d(3, -2));
        assert_eq!(Dyadic::parse_exact("-2.5").unwrap(), d(-5, -1));
        assert_eq!(Dyadic::parse_exact("3*2^-2").unwrap(), d(3, -2));
        assert_eq!(Dyadic::parse_exact("5/8").unwrap(), d(5, -3));
        assert!(Dyadic::parse_exact("0.1").is_err());
        assert!(Dyadic::parse_exact("1/3").is_err());
    }

    #[test]
    fn lossy_parse_encloses() {
        let (v, exact) = Dyadic::parse_lossy("1/3", 8).unwrap();
        assert!(!exact);
        let third = Ratio::new(BigInt::from(1), BigInt::from(3));
        let err = (v.to_ratio() - third).abs();
        assert!(err <= Ratio::new(BigInt::from(1), BigInt::from(256)));
    }

    #[test]
    fn rounding_directions() {
        let x = d(5, -3); // 0.625
        assert_eq!(x.round(1, Round::Down), d(1, -1));
        assert_eq!(x.round(1, Round::Up), d(1, 0));
        assert_eq!(x.round(2, Round::Nearest), d(3, -2)); // tie 0.625 -> 0.75
        let y = d(-5, -3);
        assert_eq!(y.round(1, Round::Down), d(-1, 0));
        assert_eq!(y.round(1, Round::Up), d(-1, -1));
    }

    #[test]
    fn division_directed() {
        let a = Dyadic::one();
        let b = Dyadic::from_int(3);
        let lo = a.div(&b, 10, Round::Down);
        let hi = a.div(&b, 10, Round::Up);
        assert!(lo < hi);
        assert_eq!(hi.sub(&lo), Dyadic::pow2(-10));
        // 1/3 in [lo, hi]: 3*lo <= 1 <= 3*hi
        assert!(lo.mul_int(3) <= Dyadic::one());
        assert!(hi.mul_int(3) >= Dyadic::one());
        // Exact divisions stay exact in both directions.
        assert_eq!(d(3, 0).div(&d(2, 0), 4, Round::Down), d(3, -1));
        assert_eq!(d(3, 0).div(&d(2, 0), 4, Round::Up), d(3, -1));
    }

    #[test]
    fn sqrt_directed() {
        let two = Dyadic::from_int(2);
        let lo = two.sqrt(20, Round::Down);
        let hi = two.sqrt(20, Round::Up);
        assert!(lo.mul(&lo) <= two);
        assert!(hi.mul(&hi) >= two);
        assert!(hi.sub(&lo) <= Dyadic::pow2(-19));
        assert_eq!(Dyadic::from_int(4).sqrt(10, Round::Up), Dyadic::from_int(2));
        assert_eq!(Dyadic::from_int(4).sqrt(10, Round::Down), Dyadic::from_int(2));
    }

    #[test]
    fn sqrtn_comparison() {
        // 1 * sqrt(2) vs 3/2: sqrt(2) < 1.5
        assert_eq!(Dyadic::one().cmp_sqrtn(2, &d(3, -1)), Ordering::Less);
        // 3 * sqrt(2) vs 4: 18 > 16
        assert_eq!(Dyadic::from_int(3).cmp_sqrtn(2, &Dyadic::from_int(4)), Ordering::Greater);
        // 2 * sqrt(4) vs 4: equal (perfect square)
        assert_eq!(Dyadic::from_int(2).cmp_sqrtn(4, &Dyadic::from_int(4)), Ordering::Equal);
        // Signs dominate.
        assert_eq!(d(-1, 0).cmp_sqrtn(2, &d(1, -20)), Ordering::Less);
        assert_eq!(Dyadic::zero().cmp_sqrtn(3, &Dyadic::zero()), Ordering::Equal);
    }

    #[test]
    fn log2_bounds() {
        assert_eq!(d(1, 0).log2_floor(), Some(0));
        assert_eq!(d(3, 0).log2_floor(), Some(1));
        assert_eq!(d(3, 0).log2_ceil(), Some(2));
        assert_eq!(d(4, 0).log2_ceil(), Some(2));
        assert_eq!(d(5, -3).log2_floor(), Some(-1));
        assert_eq!(Dyadic::zero().log2_floor(), None);
    }

    #[test]
    fn floor_ceil_int() {
        assert_eq!(d(5, -1).floor_int(), BigInt::from(2));
        assert_eq!(d(5, -1).ceil_int(), BigInt::from(3));
        assert_eq!(d(-5, -1).floor_int(), BigInt::from(-3));
        assert_eq!(d(-5, -1).ceil_int(), BigInt::from(-2));
        assert_eq!(d(4, 0).floor_int(), BigInt::from(4));
        assert_eq!(d(4, 0).ceil_int(), BigInt::from(4));
    }

    #[test]
    fn serde_roundtrip() {
        let x = d(-9, -5);
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, "\"-9*2^-5\"");
        let y: Dyadic = serde_json::from_str(&s).unwrap();
        assert_eq!(x, y);
        let z: Dyadic = serde_json::from_str("\"0.75\"").unwrap();
        assert_eq!(z, d(3, -2));
    }
}
