//! The Monna map `tau: Z_p -> [0, 1]`, the Rademacher system it carries over
//! to `Z_p`, and exhaustive Khinchin-type averages.
//!
//! Rademacher functions use the standard dyadic convention
//! `r_i(z) = +1` on `[k/2^i, (k+1)/2^i)` for even `k` and `-1` for odd `k`,
//! i.e. the sign of `sin(2^i pi z)` with the half-open rule at its zeros.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::NormSpec;
use crate::padic::{Ball, PadicRational, Prime};

/// Largest vector count for sign enumeration.
pub const MAX_KHINCHIN_VECTORS: usize = 20;

/// Digits `t_0, ..., t_{D-1}` of `t = sum t_k p^k`, known modulo `p^D`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PadicDigits {
    p: Prime,
    digits: Vec<u32>,
}

impl PadicDigits {
    pub fn new(p: Prime, digits: Vec<u32>) -> Result<Self> {
        if let Some(d) = digits.iter().find(|d| **d >= p.get()) {
            return Err(Error::Parse(format!("digit {d} out of range for p = {p}")));
        }
        Ok(PadicDigits { p, digits })
    }

    /// The first `depth` digits of a p-adic integer.
    pub fn from_rational(x: &PadicRational, depth: usize) -> Result<Self> {
        let n = x
            .to_integer()
            .ok_or_else(|| Error::Parse(format!("{x} is not a p-adic integer")))?;
        let p = x.prime();
        let pb = BigInt::from(p.get());
        let mut n = n.mod_floor(&p.pow_big(depth as u32));
        let mut digits = Vec::with_capacity(depth);
        for _ in 0..depth {
            let (q, r) = n.div_mod_floor(&pb);
            digits.push(r.to_u32().unwrap());
            n = q;
        }
        Ok(PadicDigits { p, digits })
    }

    /// Digit vector of the integer `index` in `[0, p^depth)`, least significant first.
    pub fn from_index(p: Prime, mut index: u64, depth: usize) -> Self {
        let pp = p.get() as u64;
        let digits = (0..depth)
            .map(|_| {
                let d = (index % pp) as u32;
                index /= pp;
                d
            })
            .collect();
        PadicDigits { p, digits }
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    /// `sum t_k p^k` as a p-adic rational.
    pub fn value(&self) -> PadicRational {
        let mut acc = BigInt::zero();
        for d in self.digits.iter().rev() {
            acc = acc * self.p.get() + *d;
        }
        PadicRational::from_integer(self.p, acc)
    }

    /// The ball of `t` with these digits fixed.
    pub fn cylinder(&self) -> Ball {
        Ball::new(self.value(), -(self.depth() as i32))
    }
}

/// `tau(t) = (1/p) sum_k t_k p^(-k)`, exact, with denominator dividing `p^D`.
pub fn monna(t: &PadicDigits) -> BigRational {
    let p = t.p.get();
    let mut num = BigInt::zero();
    for d in &t.digits {
        num = num * p + *d;
    }
    BigRational::new(num, t.p.pow_big(t.depth() as u32))
}

/// `tau` image `[lo, hi)` of the cylinder of `t`, with `hi` the supremum over all tails.
pub fn monna_cylinder_image(t: &PadicDigits) -> (BigRational, BigRational) {
    let lo = monna(t);
    // sup of (1/p) sum_{k >= n} (p-1) p^(-k) = ((p-1)/p) * p^(-n) / (1 - 1/p)
    let p = BigRational::from_integer(BigInt::from(t.p.get()));
    let one = BigRational::one();
    let ratio = &one / &p;
    let first = (&p - &one) / &p * t.p.pow_rational(-(t.depth() as i64));
    let tail = first / (&one - ratio);
    let hi = &lo + tail;
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureComparison {
    pub p: u32,
    pub digits: Vec<u32>,
    /// Haar measure of the digit cylinder in `Z_p`.
    #[serde(serialize_with = "ser_rational")]
    pub haar: BigRational,
    /// Lebesgue measure of its image under `tau`.
    #[serde(serialize_with = "ser_rational")]
    pub lebesgue: BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub image_lo: BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub image_hi: BigRational,
    pub equal: bool,
}

fn ser_rational<S: serde::Serializer>(
    r: &BigRational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
}

/// Compares the Haar measure of the cylinder with fixed leading digits with the
/// Lebesgue measure of its `tau` image.
pub fn monna_measure_check(pattern: &PadicDigits) -> MeasureComparison {
    let haar = pattern.cylinder().measure();
    let (lo, hi) = monna_cylinder_image(pattern);
    let lebesgue = &hi - &lo;
    MeasureComparison {
        p: pattern.p.get(),
        digits: pattern.digits.clone(),
        equal: haar == lebesgue,
        haar,
        lebesgue,
        image_lo: lo,
        image_hi: hi,
    }
}

/// Classical Rademacher function on `[0, 1)`: `+1` iff `frac(2^(i-1) z) < 1/2`.
pub fn rademacher_inf(i: u32, z: &BigRational) -> i8 {
    assert!(i >= 1, "Rademacher indices start at 1");
    let scaled = z * BigRational::from_integer(num_traits::pow(BigInt::from(2), (i - 1) as usize));
    let frac = &scaled - scaled.floor();
    if frac * BigInt::from(2) < BigRational::one() {
        1
    } else {
        -1
    }
}

/// `r_i(t) = r_i^inf(tau(t))` at the finite digit vector `t`.
pub fn rademacher(i: u32, t: &PadicDigits) -> i8 {
    rademacher_inf(i, &monna(t))
}

/// `sum_t r_i(t)` over all `p^D` digit vectors with equal weight.
///
/// The sum is a faithful Haar average only when every dyadic interval of
/// length `2^-i` is a union of cylinder images, i.e. when `2^i | p^D`. That
/// forces `p = 2`; other cases are rejected. Use [`rademacher_haar_integral`]
/// for exact integrals at odd primes.
pub fn fairness_sum(i: u32, p: Prime, depth: usize) -> Result<i64> {
    if i == 0 {
        return Err(Error::Resolution("Rademacher indices start at 1".into()));
    }
    if p.get() != 2 || (i as usize) > depth {
        return Err(Error::Resolution(format!(
            "2^{i} does not divide {p}^{depth}; equal-weight sums are not Haar averages"
        )));
    }
    let count = p
        .checked_pow(depth as u32)
        .ok_or_else(|| Error::Resolution("depth too large".into()))?;
    Ok((0..count as u64)
        .map(|k| rademacher(i, &PadicDigits::from_index(p, k, depth)) as i64)
        .sum())
}

/// Exact weights `mu({t : tau(t) in [j/2^m, (j+1)/2^m)})`, computed cylinder by
/// cylinder at depth `D` on the `Z_p` side.
pub fn dyadic_weights_over_zp(p: Prime, depth: usize, m: u32) -> Result<Vec<BigRational>> {
    let cylinders = p
        .checked_pow(depth as u32)
        .filter(|c| *c <= 1 << 20)
        .ok_or_else(|| Error::Resolution(format!("{p}^{depth} cylinders is too many")))?;
    let slots = 1usize
        .checked_shl(m)
        .filter(|s| *s <= 1 << 20)
        .ok_or_else(|| Error::Resolution(format!("2^{m} dyadic cells is too many")))?;
    let grid = BigRational::from_integer(BigInt::from(slots));
    let mut weights = vec![BigRational::zero(); slots];
    for k in 0..cylinders as u64 {
        let t = PadicDigits::from_index(p, k, depth);
        let (lo, hi) = monna_cylinder_image(&t);
        let first = (&lo * &grid).floor().to_integer().to_usize().unwrap();
        let last = ((&hi * &grid).ceil().to_integer().to_usize().unwrap()).min(slots);
        for (j, w) in weights.iter_mut().enumerate().take(last).skip(first) {
            let a = BigRational::from_integer(BigInt::from(j)) / &grid;
            let b = BigRational::from_integer(BigInt::from(j + 1)) / &grid;
            let left = if lo > a { lo.clone() } else { a };
            let right = if hi < b { hi.clone() } else { b };
            if right > left {
                *w += right - left;
            }
        }
    }
    Ok(weights)
}

fn product_sign(indices: &[u32], z: &BigRational) -> i8 {
    indices.iter().map(|&i| rademacher_inf(i, z)).product()
}

/// `int_{Z_p} prod_{i in S} r_i(t) dt`, exactly, by splitting each depth-`D`
/// cylinder image at the dyadic breakpoints of the integrand.
pub fn rademacher_haar_integral(indices: &[u32], p: Prime, depth: usize) -> Result<BigRational> {
    let m = indices.iter().copied().max().unwrap_or(0);
    if indices.contains(&0) {
        return Err(Error::Resolution("Rademacher indices start at 1".into()));
    }
    let weights = dyadic_weights_over_zp(p, depth, m)?;
    let grid = BigRational::from_integer(num_traits::pow(BigInt::from(2), m as usize));
    Ok(weights
        .into_iter()
        .enumerate()
        .map(|(j, w)| {
            let z = BigRational::from_integer(BigInt::from(j)) / &grid;
            w * BigInt::from(product_sign(indices, &z))
        })
        .fold(BigRational::zero(), |a, b| a + b))
}

/// `int_0^1 prod_{i in S} r_i(z) dz` by exact integration on dyadic intervals of
/// length `2^-max(S)`. The guard `2^max(S) <= p^D` ties the resolution to the
/// `p`-adic precision.
pub fn rademacher_independence_check(
    indices: &[u32],
    p: Prime,
    depth: usize,
) -> Result<BigRational> {
    if indices.contains(&0) {
        return Err(Error::Resolution("Rademacher indices start at 1".into()));
    }
    let m = indices.iter().copied().max().unwrap_or(0);
    let resolution = (p.get() as f64).powi(depth as i32);
    if (m as f64) > 40.0 || (1u64 << m) as f64 > resolution {
        return Err(Error::Resolution(format!("2^{m} exceeds {p}^{depth}")));
    }
    let slots = 1u64 << m;
    let grid = BigRational::from_integer(BigInt::from(slots));
    let sum: i64 = (0..slots)
        .map(|j| {
            let z = BigRational::from_integer(BigInt::from(j)) / &grid;
            product_sign(indices, &z) as i64
        })
        .sum();
    Ok(BigRational::new(BigInt::from(sum), BigInt::from(slots)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KhinchinReport {
    pub n: usize,
    pub dim: usize,
    /// Average of `||sum eps_i x_i||^2` over all sign patterns.
    pub expectation: f64,
    /// `sum ||x_i||^2`.
    pub sum_sq: f64,
    /// `expectation / sum_sq`.
    pub ratio: f64,
    /// Smallest single-pattern ratio `||sum eps_i x_i||^2 / sum_sq`.
    pub lower_ratio: f64,
    /// Largest single-pattern ratio.
    pub upper_ratio: f64,
}

fn check_vectors(vectors: &[Vec<Complex64>], norm: &NormSpec, cap: usize) -> Result<()> {
    if vectors.len() > cap {
        return Err(Error::CapExceeded {
            what: "Khinchin vectors",
            needed: vectors.len() as u128,
            cap: cap as u128,
        });
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != norm.dim()) {
        return Err(Error::DimensionMismatch {
            expected: norm.dim(),
            got: v.len(),
        });
    }
    Ok(())
}

const BLOCK: usize = 4096;

/// Exhaustive `E ||sum delta_i x_i||^2` over the `2^n` sign patterns.
///
/// Patterns are split in fixed blocks; block results are reduced in order, so
/// the value does not depend on thread scheduling.
pub fn khinchin_expectation(vectors: &[Vec<Complex64>], norm: &NormSpec) -> Result<KhinchinReport> {
    check_vectors(vectors, norm, MAX_KHINCHIN_VECTORS)?;
    let n = vectors.len();
    let d = norm.dim();
    let sum_sq: f64 = vectors.iter().map(|v| norm.value(v).powi(2)).sum();
    let patterns = 1usize << n;
    let blocks: Vec<(f64, f64, f64)> = (0..patterns.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![Complex64::zero(); d];
            let (mut total, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
            for pattern in b * BLOCK..((b + 1) * BLOCK).min(patterns) {
                acc.iter_mut().for_each(|a| *a = Complex64::zero());
                for (i, x) in vectors.iter().enumerate() {
                    let neg = pattern >> i & 1 == 1;
                    for (a, xi) in acc.iter_mut().zip(x) {
                        if neg {
                            *a -= xi;
                        } else {
                            *a += xi;
                        }
                    }
                }
                let v = norm.value(&acc).powi(2);
                total += v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (total, lo, hi)
        })
        .collect();
    let (total, lo, hi) = blocks.iter().fold(
        (0.0, f64::INFINITY, f64::NEG_INFINITY),
        |(t, l, h), (bt, bl, bh)| (t + bt, l.min(*bl), h.max(*bh)),
    );
    let expectation = total / patterns as f64;
    let ratio_of = |v: f64| if sum_sq > 0.0 { v / sum_sq } else { f64::NAN };
    Ok(KhinchinReport {
        n,
        dim: d,
        expectation,
        sum_sq,
        ratio: ratio_of(expectation),
        lower_ratio: ratio_of(lo),
        upper_ratio: ratio_of(hi),
    })
}

/// `int_{Z_p} ||sum_i r_i(t) x_i||^2 dt`, with `r_i = r_i^inf o tau` and exact
/// cylinder weights at depth `D`.
pub fn khinchin_over_zp(
    vectors: &[Vec<Complex64>],
    norm: &NormSpec,
    p: Prime,
    depth: usize,
) -> Result<f64> {
    check_vectors(vectors, norm, 16)?;
    let n = vectors.len() as u32;
    let weights = dyadic_weights_over_zp(p, depth, n)?;
    let grid = BigRational::from_integer(num_traits::pow(BigInt::from(2), n as usize));
    let mut total = 0.0;
    let mut acc = vec![Complex64::zero(); norm.dim()];
    for (j, w) in weights.iter().enumerate() {
        let z = BigRational::from_integer(BigInt::from(j)) / &grid;
        acc.iter_mut().for_each(|a| *a = Complex64::zero());
        for (i, x) in vectors.iter().enumerate() {
            let s = rademacher_inf(i as u32 + 1, &z) as f64;
            for (a, xi) in acc.iter_mut().zip(x) {
                *a += xi * s;
            }
        }
        total += w.to_f64().unwrap_or(0.0) * norm.value(&acc).powi(2);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prime(n: u64) -> Prime {
        Prime::new(n).unwrap()
    }

    fn digits(p: u64, d: &[u32]) -> PadicDigits {
        PadicDigits::new(prime(p), d.to_vec()).unwrap()
    }

    fn rat(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn monna_values() {
        assert_eq!(monna(&digits(5, &[0, 0, 0])), BigRational::zero());
        assert_eq!(monna(&digits(3, &[1, 1])), rat(4, 9));
        assert_eq!(monna(&digits(2, &[1])), rat(1, 2));
        assert!(PadicDigits::new(prime(3), vec![3]).is_err());
    }

    #[test]
    fn digits_of_rationals() {
        let x = PadicRational::from_integer(prime(3), 4);
        assert_eq!(
            PadicDigits::from_rational(&x, 3).unwrap().digits(),
            &[1, 1, 0]
        );
        let minus_one = PadicRational::from_integer(prime(2), -1);
        assert_eq!(
            PadicDigits::from_rational(&minus_one, 4).unwrap().digits(),
            &[1, 1, 1, 1]
        );
        assert!(PadicDigits::from_rational(&PadicRational::new(prime(2), 1, 1), 2).is_err());
        assert_eq!(
            PadicDigits::from_index(prime(3), 5, 2).value(),
            PadicRational::from_integer(prime(3), 5)
        );
    }

    #[test]
    fn monna_is_injective_with_p_power_denominators() {
        for (pp, depth) in [(2u64, 6usize), (3, 4), (5, 3)] {
            let p = prime(pp);
            let count = p.checked_pow(depth as u32).unwrap() as u64;
            let mut images: Vec<BigRational> = (0..count)
                .map(|k| monna(&PadicDigits::from_index(p, k, depth)))
                .collect();
            let den = p.pow_big(depth as u32);
            assert!(images.iter().all(|z| (&den % z.denom()).is_zero()));
            images.sort();
            images.dedup();
            assert_eq!(images.len() as u64, count);
        }
    }

    #[test]
    fn measure_isomorphism_examples() {
        let half = monna_measure_check(&digits(2, &[0]));
        assert!(half.equal);
        assert_eq!(half.haar, rat(1, 2));
        let ninth = monna_measure_check(&digits(3, &[1, 2]));
        assert_eq!(
            (ninth.haar.clone(), ninth.lebesgue.clone()),
            (rat(1, 9), rat(1, 9))
        );
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pattern: Vec<u32> = (0..3).map(|_| rng.random_range(0..5)).collect();
        let r = monna_measure_check(&digits(5, &pattern));
        assert_eq!(
            (r.haar.clone(), r.lebesgue.clone()),
            (rat(1, 125), rat(1, 125))
        );
    }

    #[test]
    fn cylinder_images_tile_the_interval() {
        for (pp, depth) in [(2u64, 3usize), (3, 2), (5, 2)] {
            let p = prime(pp);
            let count = p.checked_pow(depth as u32).unwrap() as u64;
            let mut images: Vec<_> = (0..count)
                .map(|k| monna_cylinder_image(&PadicDigits::from_index(p, k, depth)))
                .collect();
            images.sort();
            assert_eq!(images[0].0, BigRational::zero());
            assert_eq!(images.last().unwrap().1, BigRational::one());
            for w in images.windows(2) {
                assert_eq!(w[0].1, w[1].0);
            }
        }
    }

    #[test]
    fn rademacher_examples() {
        assert_eq!(rademacher(1, &digits(2, &[0, 1, 1])), 1);
        assert_eq!(rademacher(1, &digits(2, &[1, 0, 1])), -1);
        assert_eq!(rademacher(2, &digits(3, &[0, 0])), 1);
        // half-open convention at the zeros of sin(2^i pi z)
        assert_eq!(rademacher_inf(1, &rat(1, 2)), -1);
        assert_eq!(rademacher_inf(2, &rat(1, 4)), -1);
        assert_eq!(rademacher_inf(2, &rat(1, 2)), 1);
    }

    #[test]
    fn rademacher_on_z2_reads_digits() {
        // for p = 2, r_i(t) = (-1)^(t_{i-1})
        let p = prime(2);
        for k in 0..64u64 {
            let t = PadicDigits::from_index(p, k, 6);
            for i in 1..=6u32 {
                let want = if t.digits()[i as usize - 1] == 0 {
                    1
                } else {
                    -1
                };
                assert_eq!(rademacher(i, &t), want);
            }
        }
    }

    #[test]
    fn fairness() {
        for depth in 1..=8usize {
            for i in 1..=depth as u32 {
                assert_eq!(fairness_sum(i, prime(2), depth).unwrap(), 0);
            }
        }
        assert!(fairness_sum(3, prime(2), 2).is_err());
        assert!(fairness_sum(1, prime(3), 4).is_err());
        for (pp, depth) in [(3u64, 1usize), (3, 3), (5, 2), (7, 1)] {
            for i in 1..=4 {
                assert!(rademacher_haar_integral(&[i], prime(pp), depth)
                    .unwrap()
                    .is_zero());
            }
        }
    }

    #[test]
    fn odd_prime_equal_weight_sum_is_biased() {
        // three points 0, 1/3, 2/3: two land in [0, 1/2)
        let p = prime(3);
        let s: i64 = (0..3)
            .map(|k| rademacher(1, &PadicDigits::from_index(p, k, 1)) as i64)
            .sum();
        assert_eq!(s, 1);
    }

    #[test]
    fn independence() {
        let p = prime(3);
        for s in [&[1u32][..], &[1, 2], &[1, 2, 3], &[2, 4], &[1, 3, 5]] {
            assert!(rademacher_independence_check(s, p, 4).unwrap().is_zero());
            assert!(rademacher_haar_integral(s, p, 3).unwrap().is_zero());
        }
        assert_eq!(
            rademacher_independence_check(&[], p, 1).unwrap(),
            BigRational::one()
        );
        assert_eq!(
            rademacher_independence_check(&[2, 2], p, 2).unwrap(),
            BigRational::one()
        );
        assert!(matches!(
            rademacher_independence_check(&[1, 5], p, 2),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn dyadic_weights_are_uniform() {
        for (pp, depth, m) in [(3u64, 2usize, 3u32), (5, 2, 2), (2, 3, 3), (7, 1, 4)] {
            let w = dyadic_weights_over_zp(prime(pp), depth, m).unwrap();
            assert!(w.iter().all(|x| *x == rat(1, 1 << m)));
        }
    }

    #[test]
    fn khinchin_examples() {
        let l1 = NormSpec::lq(2, 1.0).unwrap();
        let pair = vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(1.0)]];
        let r = khinchin_expectation(&pair, &l1).unwrap();
        assert_eq!(r.expectation, 4.0);
        assert_eq!(r.ratio, 2.0);
        assert_eq!((r.lower_ratio, r.upper_ratio), (2.0, 2.0));

        let single = vec![vec![c(3.0), Complex64::new(0.0, 4.0)]];
        let r = khinchin_expectation(&single, &l1).unwrap();
        assert_eq!(r.expectation, 49.0);

        let l2 = NormSpec::euclidean(3);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in 1..=10 {
            let vs: Vec<_> = (0..n).map(|_| l2.sample(&mut rng)).collect();
            let r = khinchin_expectation(&vs, &l2).unwrap();
            assert!((r.expectation - r.sum_sq).abs() < 1e-12 * r.sum_sq.max(1.0));
            assert!(r.lower_ratio <= r.upper_ratio);
        }
        let too_many = vec![vec![c(1.0)]; 21];
        assert!(matches!(
            khinchin_expectation(&too_many, &NormSpec::euclidean(1)),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn zp_realization_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let norm = NormSpec::lq(2, 1.5).unwrap();
        let vs: Vec<_> = (0..5).map(|_| norm.sample(&mut rng)).collect();
        let e = khinchin_expectation(&vs, &norm).unwrap().expectation;
        for (pp, depth) in [(2u64, 5usize), (3, 3), (5, 2)] {
            let v = khinchin_over_zp(&vs, &norm, prime(pp), depth).unwrap();
            assert!((v - e).abs() < 1e-12 * e, "p = {pp}");
        }
    }
}
