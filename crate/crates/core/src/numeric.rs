// SPDX-License-Identifier: Apache-2.0

//! Exact rationals and certified real intervals.
//!
//! Everything the mechanism needs from the reals (e^{ε/2}, its powers, ln of
//! rationals) is computed as a closed interval with dyadic endpoints rounded
//! outward. A point interval (`lo == hi`) is an exact value and stays exact
//! under arithmetic with other points.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Working precision, in bits, for interval endpoints.
pub const DEFAULT_PRECISION: u32 = 160;

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int<T: Into<BigInt>>(n: T) -> BigRational {
    BigRational::from_integer(n.into())
}

pub fn rat_from_biguint(n: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from_biguint(Sign::Plus, n.clone()))
}

/// Parses a plain decimal literal (`"0.5"`, `"-3"`, `"1.25e-2"`) exactly.
pub fn parse_decimal(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Param(format!("not a decimal number: {s:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((a, b)) => (a, b),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let num = BigInt::parse_bytes(all.as_bytes(), 10).ok_or_else(bad)?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut q = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        q = -q;
    }
    Ok(q)
}

/// `"num/den"` (or just `"num"` for integers), the audit report encoding.
pub fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Decode(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n = BigInt::parse_bytes(n.trim().as_bytes(), 10).ok_or_else(bad)?;
            let d = BigInt::parse_bytes(d.trim().as_bytes(), 10).ok_or_else(bad)?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(BigInt::parse_bytes(s.trim().as_bytes(), 10).ok_or_else(bad)?)),
    }
}

pub fn floor(q: &BigRational) -> BigInt {
    q.numer().div_floor(q.denom())
}

pub fn ceil(q: &BigRational) -> BigInt {
    -((-q.numer()).div_floor(q.denom()))
}

fn bitlen(n: &BigInt) -> i64 {
    n.bits() as i64
}

/// Rounds `q` to a dyadic rational with about `prec` significant bits,
/// toward -inf (`up = false`) or +inf (`up = true`).
fn round_dyadic(q: &BigRational, prec: u32, up: bool) -> BigRational {
    if q.is_zero() {
        return q.clone();
    }
    let shift = prec as i64 - (bitlen(q.numer()) - bitlen(q.denom()));
    let scaled = if shift >= 0 {
        q * rat_int(BigInt::one() << shift as usize)
    } else {
        q / rat_int(BigInt::one() << (-shift) as usize)
    };
    let r = if up { ceil(&scaled) } else { floor(&scaled) };
    if shift >= 0 {
        BigRational::new(r, BigInt::one() << shift as usize)
    } else {
        BigRational::from_integer(r << (-shift) as usize)
    }
}

/// A closed interval `[lo, hi]` known to contain some real number.
#[derive(Clone, PartialEq, Eq)]
pub struct Interval {
    lo: BigRational,
    hi: BigRational,
    prec: u32,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.12}, {:.12}]", self.lo_f64(), self.hi_f64())
    }
}

impl Interval {
    pub fn point(q: BigRational) -> Self {
        Interval { lo: q.clone(), hi: q, prec: DEFAULT_PRECISION }
    }

    pub fn from_int(n: i64) -> Self {
        Self::point(rat_int(n))
    }

    fn rounded(lo: BigRational, hi: BigRational, prec: u32) -> Self {
        Interval { lo: round_dyadic(&lo, prec, false), hi: round_dyadic(&hi, prec, true), prec }
    }

    fn combine(&self, other: &Interval, lo: BigRational, hi: BigRational) -> Self {
        let prec = self.prec.max(other.prec);
        if self.is_exact() && other.is_exact() {
            Interval { lo, hi, prec }
        } else {
            Self::rounded(lo, hi, prec)
        }
    }

    pub fn with_precision(mut self, prec: u32) -> Self {
        self.prec = prec;
        self
    }

    pub fn lo(&self) -> &BigRational {
        &self.lo
    }

    pub fn hi(&self) -> &BigRational {
        &self.hi
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn exact_value(&self) -> Option<&BigRational> {
        self.is_exact().then_some(&self.lo)
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn lo_f64(&self) -> f64 {
        self.lo.to_f64().unwrap_or(f64::NAN)
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.to_f64().unwrap_or(f64::NAN)
    }

    pub fn mid_f64(&self) -> f64 {
        ((&self.lo + &self.hi) / rat_int(2)).to_f64().unwrap_or(f64::NAN)
    }

    pub fn add(&self, o: &Interval) -> Interval {
        self.combine(o, &self.lo + &o.lo, &self.hi + &o.hi)
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        self.combine(o, &self.lo - &o.hi, &self.hi - &o.lo)
    }

    pub fn neg(&self) -> Interval {
        Interval { lo: -&self.hi, hi: -&self.lo, prec: self.prec }
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let c = [&self.lo * &o.lo, &self.lo * &o.hi, &self.hi * &o.lo, &self.hi * &o.hi];
        let lo = c.iter().min().unwrap().clone();
        let hi = c.iter().max().unwrap().clone();
        self.combine(o, lo, hi)
    }

    /// Enclosure of |x| for x in the interval.
    pub fn abs(&self) -> Interval {
        if !self.lo.is_negative() {
            self.clone()
        } else if !self.hi.is_positive() {
            self.neg()
        } else {
            let top = if -&self.lo > self.hi { -&self.lo } else { self.hi.clone() };
            Interval { lo: BigRational::zero(), hi: top, prec: self.prec }
        }
    }

    pub fn scale(&self, q: &BigRational) -> Interval {
        self.mul(&Interval::point(q.clone()))
    }

    /// Fails when the divisor interval contains zero.
    pub fn div(&self, o: &Interval) -> Result<Interval> {
        if !o.lo.is_positive() && !o.hi.is_negative() {
            return Err(Error::Precision("division by an interval containing zero".into()));
        }
        let inv = Interval { lo: o.hi.recip(), hi: o.lo.recip(), prec: o.prec };
        let inv = if o.is_exact() { inv } else { Self::rounded(inv.lo, inv.hi, o.prec) };
        Ok(self.mul(&inv))
    }

    pub fn recip(&self) -> Result<Interval> {
        Interval::point(BigRational::one()).with_precision(self.prec).div(self)
    }

    pub fn powi(&self, e: i64) -> Result<Interval> {
        let mut base = if e < 0 { self.recip()? } else { self.clone() };
        let mut e = e.unsigned_abs();
        let mut acc = Interval::point(BigRational::one()).with_precision(self.prec);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        Ok(acc)
    }

    /// Certified comparison with a rational; `None` when `q` lies inside a
    /// non-degenerate interval.
    pub fn cmp_rational(&self, q: &BigRational) -> Option<Ordering> {
        if self.hi < *q {
            Some(Ordering::Less)
        } else if self.lo > *q {
            Some(Ordering::Greater)
        } else if self.is_exact() {
            Some(Ordering::Equal)
        } else {
            None
        }
    }

    /// `Some(true)` when every point is `<= o`'s every point, `Some(false)`
    /// when certainly `>`, `None` when undecided.
    pub fn certainly_le(&self, o: &Interval) -> Option<bool> {
        if self.hi <= o.lo {
            Some(true)
        } else if self.lo > o.hi {
            Some(false)
        } else {
            None
        }
    }

    pub fn floor(&self) -> Option<BigInt> {
        let (a, b) = (floor(&self.lo), floor(&self.hi));
        (a == b).then_some(a)
    }

    pub fn ceil(&self) -> Option<BigInt> {
        let (a, b) = (ceil(&self.lo), ceil(&self.hi));
        (a == b).then_some(a)
    }

    /// e^x for an interval x (exp is monotone).
    pub fn exp(&self) -> Interval {
        if self.is_exact() {
            return exp_rational(&self.lo, self.prec);
        }
        let lo = exp_rational(&self.lo, self.prec);
        let hi = exp_rational(&self.hi, self.prec);
        Interval { lo: lo.lo, hi: hi.hi, prec: self.prec }
    }
}

/// Certified e^x for rational x.
pub fn exp_rational(x: &BigRational, prec: u32) -> Interval {
    if x.is_zero() {
        return Interval::point(BigRational::one()).with_precision(prec);
    }
    // Reduce to |y| <= 1/2 with y = x / 2^r, then square r times.
    let mut r = 0u32;
    let half = rat(1, 2);
    let mut y = x.clone();
    while y.abs() > half {
        y /= rat_int(2);
        r += 1;
    }
    let work = prec + r + 16;
    let y_lo = round_dyadic(&y, work + 8, false);
    let y_hi = round_dyadic(&y, work + 8, true);
    let lo = taylor_exp(&y_lo, work, false);
    let hi = taylor_exp(&y_hi, work, true);
    let mut acc = Interval { lo, hi, prec: work };
    for _ in 0..r {
        acc = acc.mul(&acc);
    }
    Interval::rounded(acc.lo, acc.hi, prec)
}

/// Lower (`up = false`) or upper bound of e^y for |y| <= 1/2, summed in
/// fixed point with 2^-w resolution. Each truncated term is within 2 units
/// of the true term (errors shrink by |y|/n per step), and the tail after
/// the last term is at most twice that term.
fn taylor_exp(y: &BigRational, prec: u32, up: bool) -> BigRational {
    let w = prec as usize + 32;
    let (num, den) = (y.numer(), y.denom());
    let mut term = BigInt::one() << w;
    let mut sum = BigInt::zero();
    let mut n = 0i64;
    while !term.is_zero() {
        sum += &term;
        n += 1;
        term = &term * num / (den * BigInt::from(n));
    }
    let slack = BigInt::from(2 * (n + 1) + 4);
    let bound = if up { sum + slack } else { sum - slack };
    round_dyadic(&BigRational::new(bound, BigInt::one() << w), prec, up)
}

/// Certified ln(2).
pub fn ln2(prec: u32) -> Interval {
    atanh_times_two(&rat(1, 3), prec)
}

/// 2·atanh(z) for |z| <= 1/3, summed exactly.
fn atanh_times_two(z: &BigRational, prec: u32) -> Interval {
    let work = prec + 16;
    let z2 = z * z;
    let mut pow = z.clone();
    let mut k = 0i64;
    let mut sum = BigRational::zero();
    let tol = BigRational::new(BigInt::one(), BigInt::one() << (work as usize + 4));
    loop {
        sum += &pow / rat_int(2 * k + 1);
        k += 1;
        pow = &pow * &z2;
        if pow.abs() < tol {
            break;
        }
    }
    // tail: sum_{j>=k} |z|^{2j+1}/(2j+1) <= |z|^{2k+1} / (1 - z^2)
    let tail = pow.abs() / (BigRational::one() - &z2);
    let two = rat_int(2);
    Interval::rounded((&sum - &tail) * &two, (&sum + &tail) * &two, prec)
}

/// Certified natural log of a positive rational.
pub fn ln_rational(x: &BigRational, prec: u32) -> Result<Interval> {
    if !x.is_positive() {
        return Err(Error::Domain(format!("ln of non-positive value {}", format_rational(x))));
    }
    let k = bitlen(x.numer()) - bitlen(x.denom());
    let m = if k >= 0 { x / rat_int(BigInt::one() << k as usize) } else { x * rat_int(BigInt::one() << (-k) as usize) };
    // m in [1/2, 2); pull into [2/3, 4/3] so |z| <= 1/7
    let (m, k) = if m > rat(4, 3) {
        (m / rat_int(2), k + 1)
    } else if m < rat(2, 3) {
        (m * rat_int(2), k - 1)
    } else {
        (m, k)
    };
    let one = BigRational::one();
    let z = (&m - &one) / (&m + &one);
    let work = prec + 16;
    let lnm = atanh_times_two(&z, work);
    let lnk = ln2(work + 8).scale(&rat_int(k));
    Ok(Interval::rounded(lnm.add(&lnk).lo, lnm.add(&lnk).hi, prec))
}

pub fn cmp_to_str(o: Option<Ordering>) -> &'static str {
    match o {
        Some(Ordering::Less) => "<",
        Some(Ordering::Equal) => "=",
        Some(Ordering::Greater) => ">",
        None => "?",
    }
}
