//! Locally constant, compactly supported functions `Q_p -> C^d`.
//!
//! A [`StepFunction`] with support exponent `M` and level exponent `L` is
//! supported in `p^(-M) Z_p` and constant on cosets of `p^L Z_p`. Its
//! `p^(M+L)` values are stored densely; entry `n` is the value on the coset of
//! `n * p^(-M)`. With this ordering the Fourier transform is a plain DFT in
//! index space.

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::NormSpec;
use crate::padic::{residue_after_shift, Ball, PadicRational, Prime, Valuation};

/// Largest number of cells a dense step function may hold (`3^10`).
pub const DEFAULT_CELL_CAP: usize = 59_049;

/// Number of cells `p^k`, checked against the cap.
pub fn cell_count(p: Prime, k: i64, cap: usize) -> Result<usize> {
    if k < 0 {
        return Err(Error::InvalidGrid(format!(
            "support_exp + level_exp = {k} is negative"
        )));
    }
    match u32::try_from(k).ok().and_then(|k| p.checked_pow(k)) {
        Some(n) if n <= cap => Ok(n),
        _ => Err(Error::CapExceeded {
            what: "step function cells",
            needed: u32::try_from(k)
                .ok()
                .and_then(|k| (p.get() as u128).checked_pow(k))
                .unwrap_or(u128::MAX),
            cap: cap as u128,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepFunctionJson", into = "StepFunctionJson")]
pub struct StepFunction {
    p: Prime,
    support_exp: i32,
    level_exp: i32,
    dim: usize,
    values: Vec<Complex64>,
}

impl StepFunction {
    /// Builds from a flat value buffer: entry `n * dim + i` is coordinate `i` on cell `n`.
    pub fn new(
        p: Prime,
        support_exp: i32,
        level_exp: i32,
        dim: usize,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dim must be at least 1".into()));
        }
        let cells = cell_count(p, support_exp as i64 + level_exp as i64, DEFAULT_CELL_CAP)?;
        if values.len() != cells * dim {
            return Err(Error::InvalidGrid(format!(
                "expected {} values ({cells} cells x dim {dim}), got {}",
                cells * dim,
                values.len()
            )));
        }
        Ok(StepFunction {
            p,
            support_exp,
            level_exp,
            dim,
            values,
        })
    }

    pub fn from_rows(
        p: Prime,
        support_exp: i32,
        level_exp: i32,
        rows: &[Vec<Complex64>],
    ) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(p, support_exp, level_exp, dim, rows.concat())
    }

    pub fn zeros(p: Prime, support_exp: i32, level_exp: i32, dim: usize) -> Result<Self> {
        let cells = cell_count(p, support_exp as i64 + level_exp as i64, DEFAULT_CELL_CAP)?;
        Self::new(
            p,
            support_exp,
            level_exp,
            dim,
            vec![Complex64::zero(); cells * dim],
        )
    }

    /// The zero function on the coarsest grid `M = L = 0`.
    pub fn zero(p: Prime, dim: usize) -> Result<Self> {
        Self::zeros(p, 0, 0, dim)
    }

    /// Indicator of a ball times a coefficient, on the smallest grid that represents it.
    pub fn ball_indicator(ball: &Ball, coefficient: &[Complex64]) -> Result<Self> {
        let (m, l) = minimal_grid(ball);
        let mut f = Self::zeros(ball.prime(), m, l, coefficient.len().max(1))?;
        if coefficient.is_empty() {
            return Err(Error::InvalidGrid("empty coefficient".into()));
        }
        for n in ball_cells(ball, m, l) {
            f.value_mut(n).copy_from_slice(coefficient);
        }
        Ok(f)
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn support_exp(&self) -> i32 {
        self.support_exp
    }

    pub fn level_exp(&self) -> i32 {
        self.level_exp
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `M + L`, the base-p log of the number of cells.
    pub fn size_exp(&self) -> u32 {
        (self.support_exp + self.level_exp) as u32
    }

    pub fn cells(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, n: usize) -> &[Complex64] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn value_mut(&mut self, n: usize) -> &mut [Complex64] {
        &mut self.values[n * self.dim..(n + 1) * self.dim]
    }

    /// Representative `n * p^(-M)` of cell `n`.
    pub fn representative(&self, n: usize) -> PadicRational {
        PadicRational::from_integer(self.p, n as u64).mul_pow_p(-(self.support_exp as i64))
    }

    /// Cell index of `x`, or `None` outside the support.
    pub fn cell_of(&self, x: &PadicRational) -> Result<Option<usize>> {
        if x.prime() != self.p {
            return Err(Error::PrimeMismatch(self.p.get(), x.prime().get()));
        }
        Ok(residue_after_shift(x, self.support_exp as i64, self.size_exp()).map(|n| n as usize))
    }

    pub fn evaluate(&self, x: &PadicRational) -> Result<Vec<Complex64>> {
        Ok(match self.cell_of(x)? {
            Some(n) => self.value(n).to_vec(),
            None => vec![Complex64::zero(); self.dim],
        })
    }

    /// The same function on the finer grid `(new_m, new_l)`.
    pub fn refine(&self, new_m: i32, new_l: i32) -> Result<Self> {
        if new_m < self.support_exp || new_l < self.level_exp {
            return Err(Error::Shrink {
                from_m: self.support_exp,
                from_l: self.level_exp,
                to_m: new_m,
                to_l: new_l,
            });
        }
        if new_m == self.support_exp && new_l == self.level_exp {
            return Ok(self.clone());
        }
        let mut out = Self::zeros(self.p, new_m, new_l, self.dim)?;
        // new cell n' sits inside the old support iff p^(dM) | n'; its old index is
        // (n' / p^dM) mod p^K
        let stride = self
            .p
            .checked_pow((new_m - self.support_exp) as u32)
            .unwrap();
        let old_cells = self.cells();
        for (j, n_new) in (0..out.cells()).step_by(stride).enumerate() {
            let n_old = j % old_cells;
            let d = self.dim;
            out.values[n_new * d..(n_new + 1) * d].copy_from_slice(self.value(n_old));
        }
        Ok(out)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.p != other.p {
            return Err(Error::PrimeMismatch(self.p.get(), other.p.get()));
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    /// Both functions on their common refinement.
    pub fn common_refinement(&self, other: &Self) -> Result<(Self, Self)> {
        self.check_compatible(other)?;
        let m = self.support_exp.max(other.support_exp);
        let l = self.level_exp.max(other.level_exp);
        Ok((self.refine(m, l)?, other.refine(m, l)?))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let (mut a, b) = self.common_refinement(other)?;
        a.values
            .iter_mut()
            .zip(&b.values)
            .for_each(|(x, y)| *x += y);
        Ok(a)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `x(t) -> x(-t)`.
    pub fn reflect(&self) -> Self {
        let cells = self.cells();
        let mut out = self.clone();
        for n in 0..cells {
            let m = (cells - n) % cells;
            out.value_mut(m).copy_from_slice(self.value(n));
        }
        out
    }

    /// Measure `p^(-L)` of one cell, exactly.
    pub fn cell_measure(&self) -> BigRational {
        self.p.pow_rational(-(self.level_exp as i64))
    }

    /// `int ||f(t)||_X^2 dt = p^(-L) * sum_n ||values[n]||_X^2`.
    pub fn bochner_norm_sq(&self, norm: &NormSpec) -> Result<f64> {
        if norm.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: norm.dim(),
            });
        }
        let sum: f64 = (0..self.cells())
            .map(|n| norm.value(self.value(n)).powi(2))
            .sum();
        Ok(self.cell_measure().to_f64().unwrap_or(0.0) * sum)
    }

    /// `int <f(t), g(t)> dt` with the Hermitian product on `C^d`.
    pub fn inner_product(&self, other: &Self) -> Result<Complex64> {
        let (a, b) = self.common_refinement(other)?;
        let sum: Complex64 = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x * y.conj())
            .sum();
        Ok(sum * a.cell_measure().to_f64().unwrap_or(0.0))
    }

    /// Largest coordinate deviation between the two functions.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let (a, b) = self.common_refinement(other)?;
        Ok(a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max))
    }
}

/// Smallest `(M, L)` on which the indicator of `ball` is a step function.
pub fn minimal_grid(ball: &Ball) -> (i32, i32) {
    let r = ball.radius_exp();
    let level = -r;
    let support = match ball.center().valuation() {
        Valuation::Infinite => r,
        Valuation::Finite(v) => r.max(-(v as i32)),
    };
    (support, level)
}

/// Cell indices covered by `ball` on the grid `(m, l)`; empty if the grid cannot hold it.
pub fn ball_cells(ball: &Ball, m: i32, l: i32) -> Vec<usize> {
    let r = ball.radius_exp();
    let p = ball.prime();
    if l < -r || m < r || !ball.center().valuation().at_least(-(m as i64)) {
        return Vec::new();
    }
    let period = p.checked_pow((m - r) as u32).unwrap();
    let start = residue_after_shift(ball.center(), m as i64, (m - r) as u32).unwrap() as usize;
    let count = p.checked_pow((l + r) as u32).unwrap();
    (0..count).map(|j| start + j * period).collect()
}

/// One summand `c * I_B(t) * x` of an elementary function, with `c = sqrt(coeff_sq)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryTerm {
    pub ball: Ball,
    pub coeff_sq: BigRational,
    pub vector: Vec<Complex64>,
}

/// A finite sum of ball indicators with vector coefficients over disjoint balls.
///
/// Scalar weights are carried through their exact squares so the Bochner norm's
/// measure factors stay exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementarySum {
    p: Prime,
    dim: usize,
    terms: Vec<ElementaryTerm>,
}

impl ElementarySum {
    pub fn new(p: Prime, dim: usize, terms: Vec<ElementaryTerm>) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            if t.ball.prime() != p {
                return Err(Error::PrimeMismatch(p.get(), t.ball.prime().get()));
            }
            if t.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.vector.len(),
                });
            }
            if t.coeff_sq < BigRational::zero() {
                return Err(Error::InvalidGrid("negative squared coefficient".into()));
            }
            for s in &terms[..i] {
                if t.ball.intersects(&s.ball)? {
                    return Err(Error::InvalidGrid(format!(
                        "balls {} and {} overlap",
                        s.ball, t.ball
                    )));
                }
            }
        }
        Ok(ElementarySum { p, dim, terms })
    }

    pub fn terms(&self) -> &[ElementaryTerm] {
        &self.terms
    }

    /// Exact weights `c_k^2 * mu(B_k)`.
    pub fn measure_weights(&self) -> Vec<BigRational> {
        self.terms
            .iter()
            .map(|t| &t.coeff_sq * t.ball.measure())
            .collect()
    }

    /// `sum_k c_k^2 mu(B_k) ||x_k||^2`, with the weights evaluated exactly.
    pub fn norm_sq(&self, norm: &NormSpec) -> Result<f64> {
        if norm.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: norm.dim(),
            });
        }
        Ok(self
            .measure_weights()
            .iter()
            .zip(&self.terms)
            .map(|(w, t)| w.to_f64().unwrap_or(0.0) * norm.value(&t.vector).powi(2))
            .sum())
    }

    pub fn to_step_function(&self) -> Result<StepFunction> {
        let (mut m, mut l) = (i32::MIN, i32::MIN);
        for t in &self.terms {
            let (tm, tl) = minimal_grid(&t.ball);
            m = m.max(tm);
            l = l.max(tl);
        }
        if self.terms.is_empty() {
            return StepFunction::zero(self.p, self.dim);
        }
        let mut f = StepFunction::zeros(self.p, m, l, self.dim)?;
        for t in &self.terms {
            let c = sqrt_rational(&t.coeff_sq);
            for n in ball_cells(&t.ball, m, l) {
                for (dst, x) in f.value_mut(n).iter_mut().zip(&t.vector) {
                    *dst = x * c;
                }
            }
        }
        Ok(f)
    }
}

fn sqrt_rational(r: &BigRational) -> f64 {
    let num = r.numer().to_f64().unwrap_or(0.0);
    let den = r.denom().to_f64().unwrap_or(1.0);
    (num / den).sqrt()
}

/// JSON interchange form.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StepFunctionJson {
    p: u32,
    support_exp: i32,
    level_exp: i32,
    dim: usize,
    values: Vec<Vec<[f64; 2]>>,
}

impl TryFrom<StepFunctionJson> for StepFunction {
    type Error = Error;
    fn try_from(j: StepFunctionJson) -> Result<Self> {
        let p = Prime::new(j.p as u64)?;
        let mut flat = Vec::with_capacity(j.values.len() * j.dim);
        for row in &j.values {
            if row.len() != j.dim {
                return Err(Error::DimensionMismatch {
                    expected: j.dim,
                    got: row.len(),
                });
            }
            flat.extend(row.iter().map(|[re, im]| Complex64::new(*re, *im)));
        }
        StepFunction::new(p, j.support_exp, j.level_exp, j.dim, flat)
    }
}

impl From<StepFunction> for StepFunctionJson {
    fn from(f: StepFunction) -> Self {
        let values = f
            .values
            .chunks(f.dim)
            .map(|row| row.iter().map(|c| [c.re, c.im]).collect())
            .collect();
        StepFunctionJson {
            p: f.p.get(),
            support_exp: f.support_exp,
            level_exp: f.level_exp,
            dim: f.dim,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_traits::One;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prime(n: u64) -> Prime {
        Prime::new(n).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_point(rng: &mut impl Rng, p: Prime, max_exp: u32) -> PadicRational {
        let e = rng.random_range(0..=max_exp);
        let span = (p.get() as i64).pow(e + 2);
        PadicRational::new(p, rng.random_range(-span..span), e)
    }

    fn random_fn(rng: &mut impl Rng, p: Prime, m: i32, l: i32, dim: usize) -> StepFunction {
        let cells = p.checked_pow((m + l) as u32).unwrap();
        let values = (0..cells * dim)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        StepFunction::new(p, m, l, dim, values).unwrap()
    }

    #[test]
    fn indicator_of_zp() {
        let p = prime(2);
        let f = StepFunction::ball_indicator(&Ball::unit(p), &[c(1.0)]).unwrap();
        assert_eq!((f.support_exp(), f.level_exp()), (0, 0));
        assert_eq!(f.values(), &[c(1.0)]);
        assert_eq!(
            f.evaluate(&PadicRational::from_integer(p, 7)).unwrap(),
            vec![c(1.0)]
        );
        assert_eq!(
            f.evaluate(&PadicRational::new(p, 1, 1)).unwrap(),
            vec![c(0.0)]
        );
    }

    /// Brute force over small grids: a grid represents the indicator iff, on sampled
    /// points, membership is constant per cell and zero outside the support.
    fn grid_represents(ball: &Ball, m: i32, l: i32, samples: &[PadicRational]) -> bool {
        if m + l < 0 {
            return false;
        }
        let p = ball.prime();
        let cells = p.checked_pow((m + l) as u32).unwrap();
        let mut seen: Vec<Option<bool>> = vec![None; cells];
        for x in samples {
            let inside = ball.contains(x).unwrap();
            match residue_after_shift(x, m as i64, (m + l) as u32) {
                None if inside => return false,
                None => {}
                Some(n) => match seen[n as usize] {
                    None => seen[n as usize] = Some(inside),
                    Some(prev) if prev != inside => return false,
                    _ => {}
                },
            }
        }
        true
    }

    #[test]
    fn minimal_grid_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &pp in &[2u64, 3] {
            let p = prime(pp);
            let samples: Vec<_> = (0..3000).map(|_| random_point(&mut rng, p, 5)).collect();
            let balls = [
                Ball::unit(p),
                Ball::new(PadicRational::new(p, 1, 1), -1),
                Ball::new(PadicRational::new(p, 5, 2), -2),
                Ball::new(PadicRational::new(p, 1, 1), 1),
                Ball::new(PadicRational::from_integer(p, 4), -1),
                Ball::new(PadicRational::zero(p), 2),
            ];
            for ball in &balls {
                // minimal = smallest cell count, then smallest M
                let mut best = None;
                for m in -3..=4 {
                    for l in -3..=4 {
                        if grid_represents(ball, m, l, &samples) {
                            let key = (m + l, m);
                            if best.is_none_or(|(k, _)| key < k) {
                                best = Some((key, (m, l)));
                            }
                        }
                    }
                }
                let expected = best.unwrap().1;
                assert_eq!(minimal_grid(ball), expected, "ball {ball}");
                let f = StepFunction::ball_indicator(ball, &[c(1.0)]).unwrap();
                for x in &samples {
                    let want = if ball.contains(x).unwrap() { 1.0 } else { 0.0 };
                    assert_eq!(f.evaluate(x).unwrap()[0], c(want));
                }
            }
        }
    }

    #[test]
    fn half_ball_over_two() {
        let p = prime(2);
        let b = Ball::new(PadicRational::new(p, 1, 1), -1);
        let f = StepFunction::ball_indicator(&b, &[c(1.0)]).unwrap();
        assert_eq!((f.support_exp(), f.level_exp()), (1, 1));
        assert_eq!(f.values(), &[c(0.0), c(1.0), c(0.0), c(0.0)]);
    }

    #[test]
    fn refine_identity_and_replication() {
        let p = prime(2);
        let f = StepFunction::ball_indicator(&Ball::unit(p), &[c(1.0)]).unwrap();
        assert_eq!(f.refine(0, 0).unwrap(), f);
        assert_eq!(f.refine(0, 1).unwrap().values(), &[c(1.0), c(1.0)]);
        assert_eq!(
            f.refine(1, 0).unwrap().values(),
            &[c(1.0), c(0.0)],
            "cell 1/2 + Z_2 lies outside Z_2"
        );
        assert!(matches!(f.refine(-1, 0), Err(Error::Shrink { .. })));
    }

    #[test]
    fn refine_preserves_values_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &pp in &[2u64, 3, 5] {
            let p = prime(pp);
            let f = random_fn(&mut rng, p, 1, 0, 2);
            let g = f.refine(2, 1).unwrap();
            for _ in 0..100 {
                let x = random_point(&mut rng, p, 3);
                assert_eq!(f.evaluate(&x).unwrap(), g.evaluate(&x).unwrap());
            }
        }
    }

    #[test]
    fn negative_level_is_allowed() {
        let p = prime(3);
        let wide = Ball::new(PadicRational::zero(p), 2);
        let f = StepFunction::ball_indicator(&wide, &[c(2.0)]).unwrap();
        assert_eq!((f.support_exp(), f.level_exp(), f.cells()), (2, -2, 1));
        assert!(StepFunction::zeros(p, 1, -2, 1).is_err());
    }

    #[test]
    fn add_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = prime(3);
        let f = random_fn(&mut rng, p, 1, 1, 2);
        let zero = StepFunction::zero(p, 2).unwrap();
        assert_eq!(f.add(&zero).unwrap(), f);
        assert!(f.scale(c(0.0)).values().iter().all(|v| v.is_zero()));

        let a = StepFunction::ball_indicator(
            &Ball::new(PadicRational::new(p, 1, 1), -1),
            &[c(1.0), c(2.0)],
        )
        .unwrap();
        let b = StepFunction::ball_indicator(
            &Ball::new(PadicRational::from_integer(p, 2), -2),
            &[c(-3.0), Complex64::new(0.0, 1.0)],
        )
        .unwrap();
        let s = a.add(&b).unwrap();
        for _ in 0..100 {
            let x = random_point(&mut rng, p, 3);
            let want: Vec<_> = a
                .evaluate(&x)
                .unwrap()
                .iter()
                .zip(b.evaluate(&x).unwrap())
                .map(|(u, v)| u + v)
                .collect();
            assert_eq!(s.evaluate(&x).unwrap(), want);
        }
        let other = StepFunction::zero(p, 3).unwrap();
        assert!(matches!(
            f.add(&other),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bochner_norms() {
        let p = prime(3);
        let l2 = NormSpec::lq(1, 2.0).unwrap();
        assert_eq!(
            StepFunction::zero(p, 1)
                .unwrap()
                .bochner_norm_sq(&l2)
                .unwrap(),
            0.0
        );
        let small = Ball::new(PadicRational::zero(p), -1);
        let f = StepFunction::ball_indicator(&small, &[c(1.0)]).unwrap();
        assert!((f.bochner_norm_sq(&l2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let g = f.refine(2, 3).unwrap();
        assert!((g.bochner_norm_sq(&l2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn euclidean_norm_splits_by_coordinate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = prime(2);
        let f = random_fn(&mut rng, p, 2, 1, 3);
        let total = f.bochner_norm_sq(&NormSpec::lq(3, 2.0).unwrap()).unwrap();
        let l2 = NormSpec::lq(1, 2.0).unwrap();
        let by_coord: f64 = (0..3)
            .map(|i| {
                let vals = (0..f.cells()).map(|n| f.value(n)[i]).collect();
                StepFunction::new(p, 2, 1, 1, vals)
                    .unwrap()
                    .bochner_norm_sq(&l2)
                    .unwrap()
            })
            .sum();
        assert!((total - by_coord).abs() < 1e-12);
    }

    #[test]
    fn inner_products() {
        let p = prime(3);
        let one = StepFunction::ball_indicator(&Ball::unit(p), &[c(1.0)]).unwrap();
        assert!((one.inner_product(&one).unwrap() - c(1.0)).norm() < 1e-15);
        let zero = StepFunction::zero(p, 1).unwrap();
        assert_eq!(one.inner_product(&zero).unwrap(), c(0.0));

        // t -> chi_p(j t / p^2) on Z_p, for each frequency j
        let n = 2u32;
        let cells = 9usize;
        let chars: Vec<StepFunction> = (0..cells)
            .map(|j| {
                let vals = (0..cells)
                    .map(|t| {
                        PadicRational::new(p, (j * t) as i64, n)
                            .character()
                            .to_complex()
                    })
                    .collect();
                StepFunction::new(p, 0, n as i32, 1, vals).unwrap()
            })
            .collect();
        for (a, fa) in chars.iter().enumerate() {
            for (b, fb) in chars.iter().enumerate() {
                let ip = fa.inner_product(fb).unwrap();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - c(want)).norm() < 1e-12, "({a},{b}) -> {ip}");
            }
        }
    }

    #[test]
    fn elementary_sums_are_exact() {
        let p = prime(2);
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let terms = vec![
            ElementaryTerm {
                ball: Ball::new(PadicRational::zero(p), -1),
                coeff_sq: BigRational::from_integer(BigInt::from(2)),
                vector: vec![c(3.0)],
            },
            ElementaryTerm {
                ball: Ball::new(PadicRational::from_integer(p, 1), -1),
                coeff_sq: BigRational::from_integer(BigInt::from(2)),
                vector: vec![c(4.0)],
            },
        ];
        let h = ElementarySum::new(p, 1, terms.clone()).unwrap();
        assert_eq!(
            h.measure_weights(),
            vec![BigRational::one(), BigRational::one()]
        );
        let l2 = NormSpec::lq(1, 2.0).unwrap();
        assert_eq!(h.norm_sq(&l2).unwrap(), 25.0);
        let f = h.to_step_function().unwrap();
        assert!((f.bochner_norm_sq(&l2).unwrap() - 25.0).abs() < 1e-12);
        assert_eq!(half.clone() + half, BigRational::one());

        let mut overlapping = terms;
        overlapping[1].ball = Ball::unit(p);
        assert!(ElementarySum::new(p, 1, overlapping).is_err());
    }

    #[test]
    fn json_schema() {
        let p = prime(2);
        let f = StepFunction::new(
            p,
            1,
            0,
            1,
            vec![Complex64::new(1.0, 0.5), Complex64::new(-2.0, 0.0)],
        )
        .unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(
            s,
            r#"{"p":2,"support_exp":1,"level_exp":0,"dim":1,"values":[[[1.0,0.5]],[[-2.0,0.0]]]}"#
        );
        let back: StepFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        let bad = r#"{"p":4,"support_exp":0,"level_exp":0,"dim":1,"values":[[[1,0]]]}"#;
        assert!(serde_json::from_str::<StepFunction>(bad).is_err());
        let short = r#"{"p":2,"support_exp":1,"level_exp":0,"dim":1,"values":[[[1,0]]]}"#;
        assert!(serde_json::from_str::<StepFunction>(short).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let p = prime(3);
        assert!(StepFunction::zeros(p, 5, 5, 1).is_ok());
        assert!(matches!(
            StepFunction::zeros(p, 6, 5, 1),
            Err(Error::CapExceeded { .. })
        ));
    }
}
