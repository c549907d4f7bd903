//! Exact arithmetic on `Z[1/p]`: p-adic rationals, fractional parts, the
//! additive character `chi_p`, balls and their Haar measure.
//!
//! Every function handled by this crate is locally constant with compact
//! support, so elements of `Z[1/p]` are enough to name every coset that
//! matters. Characters are kept as exact phases `num / p^exp` and only turned
//! into floating point complex numbers at the numeric boundary.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// A prime modulus, checked by trial division.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prime(u32);

impl Prime {
    pub fn new(p: u64) -> Result<Self> {
        if p < 2 || p > u32::MAX as u64 {
            return Err(Error::NotPrime(p));
        }
        let mut d = 2u64;
        while d * d <= p {
            if p.is_multiple_of(d) {
                return Err(Error::NotPrime(p));
            }
            d += 1;
        }
        Ok(Prime(p as u32))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    pub fn pow_big(self, e: u32) -> BigInt {
        num_traits::pow(BigInt::from(self.0), e as usize)
    }

    /// `p^e` as a `usize`, or `None` on overflow.
    pub fn checked_pow(self, e: u32) -> Option<usize> {
        (self.0 as usize).checked_pow(e)
    }

    /// `p^e` as an exact rational, for any integer `e`.
    pub fn pow_rational(self, e: i64) -> BigRational {
        let base = self.pow_big(e.unsigned_abs() as u32);
        if e >= 0 {
            BigRational::from_integer(base)
        } else {
            BigRational::new(BigInt::one(), base)
        }
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// p-adic valuation; `Infinite` for zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }

    /// `self >= bound`, with infinity above every integer.
    pub fn at_least(self, bound: i64) -> bool {
        match self {
            Valuation::Finite(v) => v >= bound,
            Valuation::Infinite => true,
        }
    }
}

/// The number `num / p^exp`, kept in canonical form: `exp` is minimal, so
/// either `exp = 0` or `p` does not divide `num`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PadicRational {
    p: Prime,
    num: BigInt,
    exp: u32,
}

fn strip_p(p: Prime, mut num: BigInt, mut exp: u32) -> (BigInt, u32) {
    if num.is_zero() {
        return (num, 0);
    }
    let pb = BigInt::from(p.get());
    while exp > 0 {
        let (q, r) = num.div_rem(&pb);
        if !r.is_zero() {
            break;
        }
        num = q;
        exp -= 1;
    }
    (num, exp)
}

fn check_same(a: Prime, b: Prime) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::PrimeMismatch(a.get(), b.get()))
    }
}

impl PadicRational {
    pub fn new(p: Prime, num: impl Into<BigInt>, exp: u32) -> Self {
        let (num, exp) = strip_p(p, num.into(), exp);
        PadicRational { p, num, exp }
    }

    pub fn from_integer(p: Prime, n: impl Into<BigInt>) -> Self {
        Self::new(p, n, 0)
    }

    pub fn zero(p: Prime) -> Self {
        PadicRational {
            p,
            num: BigInt::zero(),
            exp: 0,
        }
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn numerator(&self) -> &BigInt {
        &self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn valuation(&self) -> Valuation {
        if self.num.is_zero() {
            return Valuation::Infinite;
        }
        if self.exp > 0 {
            return Valuation::Finite(-(self.exp as i64));
        }
        let pb = BigInt::from(self.p.get());
        let mut n = self.num.clone();
        let mut v = 0i64;
        loop {
            let (q, r) = n.div_rem(&pb);
            if !r.is_zero() {
                break;
            }
            n = q;
            v += 1;
        }
        Valuation::Finite(v)
    }

    /// `|x|_p` as an exact rational (`0` for zero).
    pub fn abs_p(&self) -> BigRational {
        match self.valuation() {
            Valuation::Infinite => BigRational::zero(),
            Valuation::Finite(v) => self.p.pow_rational(-v),
        }
    }

    /// True when `x` lies in `Z_p`; for elements of `Z[1/p]` this means `x` is an integer.
    pub fn is_padic_integer(&self) -> bool {
        self.exp == 0
    }

    /// The p-adic fractional part `{x}_p` in `[0, 1)`.
    pub fn frac(&self) -> UnitPhase {
        if self.exp == 0 {
            return UnitPhase::zero(self.p);
        }
        let modulus = self.p.pow_big(self.exp);
        UnitPhase::new(self.p, self.num.mod_floor(&modulus), self.exp)
    }

    /// The phase of `chi_p(x) = exp(2 pi i {x}_p)`.
    pub fn character(&self) -> UnitPhase {
        self.frac()
    }

    /// Multiplies by `p^k` for any integer `k`.
    pub fn mul_pow_p(&self, k: i64) -> Self {
        if k >= 0 {
            let k = k as u32;
            let cancel = k.min(self.exp);
            let num = &self.num * self.p.pow_big(k - cancel);
            PadicRational::new(self.p, num, self.exp - cancel)
        } else {
            PadicRational::new(self.p, self.num.clone(), self.exp + k.unsigned_abs() as u32)
        }
    }

    /// The integer value when `x` is a p-adic integer.
    pub fn to_integer(&self) -> Option<&BigInt> {
        (self.exp == 0).then_some(&self.num)
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(self.num.clone(), self.p.pow_big(self.exp))
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        check_same(self.p, other.p)?;
        let e = self.exp.max(other.exp);
        let a = &self.num * self.p.pow_big(e - self.exp);
        let b = &other.num * self.p.pow_big(e - other.exp);
        Ok(PadicRational::new(self.p, a + b, e))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&-other)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        check_same(self.p, other.p)?;
        Ok(PadicRational::new(
            self.p,
            &self.num * &other.num,
            self.exp + other.exp,
        ))
    }

    /// Parses `"a/p^m"` (or a bare integer `"a"`).
    pub fn parse_with(p: Prime, s: &str) -> Result<Self> {
        let (num, exp) = parse_fraction(p, s)?;
        Ok(PadicRational::new(p, num, exp))
    }
}

fn parse_fraction(p: Prime, s: &str) -> Result<(BigInt, u32)> {
    let s = s.trim();
    let bad = || Error::Parse(format!("expected \"a/{p}^m\", got {s:?}"));
    match s.split_once('/') {
        None => Ok((BigInt::from_str(s).map_err(|_| bad())?, 0)),
        Some((a, den)) => {
            let num = BigInt::from_str(a.trim()).map_err(|_| bad())?;
            let (base, e) = den.trim().split_once('^').ok_or_else(bad)?;
            let base: u32 = base.trim().parse().map_err(|_| bad())?;
            if base != p.get() {
                return Err(Error::PrimeMismatch(p.get(), base));
            }
            let e: u32 = e.trim().parse().map_err(|_| bad())?;
            Ok((num, e))
        }
    }
}

/// Splits `"a/p^m"` to discover `p`; a bare integer needs the prime passed explicitly.
fn prime_of(s: &str) -> Result<Prime> {
    let den = s
        .split_once('/')
        .map(|(_, d)| d)
        .ok_or_else(|| Error::Parse(format!("cannot infer prime from {s:?}")))?;
    let base = den
        .split_once('^')
        .map(|(b, _)| b.trim())
        .ok_or_else(|| Error::Parse(format!("missing '^' in {s:?}")))?;
    let base: u64 = base
        .parse()
        .map_err(|_| Error::Parse(format!("bad prime in {s:?}")))?;
    Prime::new(base)
}

impl fmt::Display for PadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}^{}", self.num, self.p, self.exp)
    }
}

impl FromStr for PadicRational {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let p = prime_of(s)?;
        Self::parse_with(p, s)
    }
}

impl Neg for &PadicRational {
    type Output = PadicRational;
    fn neg(self) -> PadicRational {
        PadicRational {
            p: self.p,
            num: -&self.num,
            exp: self.exp,
        }
    }
}

impl Neg for PadicRational {
    type Output = PadicRational;
    fn neg(self) -> PadicRational {
        -&self
    }
}

// Operator forms panic on mismatched primes; use `try_*` for fallible arithmetic.
macro_rules! binop {
    ($tr:ident, $m:ident, $try:ident) => {
        impl $tr<&PadicRational> for &PadicRational {
            type Output = PadicRational;
            fn $m(self, rhs: &PadicRational) -> PadicRational {
                self.$try(rhs)
                    .expect("p-adic arithmetic with mismatched primes")
            }
        }
        impl $tr for PadicRational {
            type Output = PadicRational;
            fn $m(self, rhs: PadicRational) -> PadicRational {
                (&self).$m(&rhs)
            }
        }
    };
}
binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

/// An exact phase `num / p^exp` in `[0, 1)`, representing `exp(2 pi i num / p^exp)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UnitPhase {
    p: Prime,
    num: BigInt,
    exp: u32,
}

impl UnitPhase {
    /// Reduces `num` modulo `p^exp` and canonicalizes.
    pub fn new(p: Prime, num: impl Into<BigInt>, exp: u32) -> Self {
        let modulus = p.pow_big(exp);
        let num = num.into().mod_floor(&modulus);
        let (num, exp) = strip_p(p, num, exp);
        UnitPhase { p, num, exp }
    }

    pub fn zero(p: Prime) -> Self {
        UnitPhase {
            p,
            num: BigInt::zero(),
            exp: 0,
        }
    }

    /// The phase `j / p^k` used by root tables.
    pub fn from_index(p: Prime, j: u64, k: u32) -> Self {
        Self::new(p, j, k)
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn numerator(&self) -> &BigInt {
        &self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        check_same(self.p, other.p)?;
        let e = self.exp.max(other.exp);
        let a = &self.num * self.p.pow_big(e - self.exp);
        let b = &other.num * self.p.pow_big(e - other.exp);
        Ok(UnitPhase::new(self.p, a + b, e))
    }

    pub fn inverse(&self) -> Self {
        UnitPhase::new(self.p, -&self.num, self.exp)
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(self.num.clone(), self.p.pow_big(self.exp))
    }

    /// `exp(2 pi i q)` in double precision; exact at the quarter turns.
    pub fn to_complex(&self) -> Complex64 {
        phase_to_complex(self)
    }

    pub fn parse_with(p: Prime, s: &str) -> Result<Self> {
        let (num, exp) = parse_fraction(p, s)?;
        if num.sign() == Sign::Minus || num >= p.pow_big(exp) {
            return Err(Error::Parse(format!("phase {s:?} is outside [0, 1)")));
        }
        Ok(UnitPhase::new(p, num, exp))
    }
}

impl PartialOrd for UnitPhase {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        (self.p == other.p).then(|| self.to_rational().cmp(&other.to_rational()))
    }
}

impl Add<&UnitPhase> for &UnitPhase {
    type Output = UnitPhase;
    fn add(self, rhs: &UnitPhase) -> UnitPhase {
        self.try_add(rhs)
            .expect("phase arithmetic with mismatched primes")
    }
}

impl fmt::Display for UnitPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}^{}", self.num, self.p, self.exp)
    }
}

impl FromStr for UnitPhase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let p = prime_of(s)?;
        Self::parse_with(p, s)
    }
}

/// `cos(2 pi q) + i sin(2 pi q)`, exact for `q` in `{0, 1/4, 1/2, 3/4}`.
pub fn phase_to_complex(q: &UnitPhase) -> Complex64 {
    let den = q.p.pow_big(q.exp);
    let four = &q.num * 4u32;
    if (&four % &den).is_zero() {
        return match (four / &den).to_u32() {
            Some(0) => Complex64::new(1.0, 0.0),
            Some(1) => Complex64::new(0.0, 1.0),
            Some(2) => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    let turn = match (q.num.to_u64(), den.to_u64()) {
        (Some(n), Some(d)) => n as f64 / d as f64,
        _ => q.to_rational().to_f64().unwrap_or(0.0),
    };
    let (s, c) = (std::f64::consts::TAU * turn).sin_cos();
    Complex64::new(c, s)
}

/// The closed ball `B[center, p^radius_exp] = { x : |x - center|_p <= p^radius_exp }`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ball {
    center: PadicRational,
    radius_exp: i32,
}

impl Ball {
    pub fn new(center: PadicRational, radius_exp: i32) -> Self {
        Ball { center, radius_exp }
    }

    /// `Z_p` itself.
    pub fn unit(p: Prime) -> Self {
        Ball::new(PadicRational::zero(p), 0)
    }

    pub fn prime(&self) -> Prime {
        self.center.p
    }

    pub fn center(&self) -> &PadicRational {
        &self.center
    }

    pub fn radius_exp(&self) -> i32 {
        self.radius_exp
    }

    pub fn contains(&self, x: &PadicRational) -> Result<bool> {
        let diff = x.try_sub(&self.center)?;
        Ok(diff.valuation().at_least(-(self.radius_exp as i64)))
    }

    /// Haar measure with `mu(Z_p) = 1`: exactly `p^radius_exp`.
    pub fn measure(&self) -> BigRational {
        self.prime().pow_rational(self.radius_exp as i64)
    }

    /// Two balls of one radius are either equal or disjoint.
    pub fn same_as(&self, other: &Ball) -> Result<bool> {
        check_same(self.prime(), other.prime())?;
        Ok(self.radius_exp == other.radius_exp && self.contains(&other.center)?)
    }

    pub fn intersects(&self, other: &Ball) -> Result<bool> {
        check_same(self.prime(), other.prime())?;
        let big = if self.radius_exp >= other.radius_exp {
            self
        } else {
            other
        };
        let small = if std::ptr::eq(big, self) { other } else { self };
        big.contains(&small.center)
    }

    /// The `p^k` disjoint sub-balls of radius `p^(r - k)` tiling this ball.
    pub fn sub_balls(&self, k: u32) -> Vec<Ball> {
        let p = self.prime();
        let step = PadicRational::from_integer(p, 1).mul_pow_p(-(self.radius_exp as i64));
        let count = p.pow_big(k);
        let mut out = Vec::new();
        let mut j = BigInt::zero();
        while j < count {
            let offset = PadicRational::from_integer(p, j.clone()) * step.clone();
            out.push(Ball::new(
                &self.center + &offset,
                self.radius_exp - k as i32,
            ));
            j += 1;
        }
        out
    }
}

impl fmt::Display for Ball {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "B[{}, {}^{}]",
            self.center,
            self.prime(),
            self.radius_exp
        )
    }
}

/// Non-negative residue of `x * p^shift` modulo `p^k`, when that product is a p-adic integer.
pub(crate) fn residue_after_shift(x: &PadicRational, shift: i64, k: u32) -> Option<u64> {
    let y = x.mul_pow_p(shift);
    let n = y.to_integer()?;
    let modulus = x.prime().pow_big(k);
    n.mod_floor(&modulus).to_u64()
}
