//! The Fourier transform on `L_2(Q_p, C^d)` and its restrictions between
//! `Z_p` and `Q_p / Z_p`.
//!
//! With the pairing `<s, t> = chi_p(s t)` and the self-dual Haar measure, a
//! step function on the grid `(M, L)` is sent to a step function on `(L, M)`:
//!
//! ```text
//! (F f)[m] = p^(-L) * sum_n exp(2 pi i m n / p^(M+L)) * f[n]
//! ```
//!
//! The exponent is positive. Roots of unity are tabulated from exact phases
//! `j / p^K`, so every twiddle index is reduced modulo `p^K` before leaving
//! integer arithmetic.

use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::norms::NormSpec;
use crate::padic::{Prime, UnitPhase};
use crate::stepfn::{cell_count, StepFunction, DEFAULT_CELL_CAP};

/// Transform sizes above this use the radix-p path.
pub const FAST_THRESHOLD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Kernel `exp(+2 pi i j / P)`.
    Forward,
    /// Kernel `exp(-2 pi i j / P)`.
    Inverse,
}

/// Root table for DFTs of length `p^K`.
#[derive(Debug, Clone)]
pub struct TransformPlan {
    p: Prime,
    size_exp: u32,
    size: usize,
    direction: Direction,
    roots: Vec<Complex64>,
}

impl TransformPlan {
    pub fn new(p: Prime, size_exp: u32, direction: Direction) -> Result<Self> {
        let size = cell_count(p, size_exp as i64, DEFAULT_CELL_CAP)?;
        let roots = (0..size as u64)
            .map(|j| {
                let phase = match direction {
                    Direction::Forward => UnitPhase::from_index(p, j, size_exp),
                    Direction::Inverse => UnitPhase::from_index(p, j, size_exp).inverse(),
                };
                phase.to_complex()
            })
            .collect();
        Ok(TransformPlan {
            p,
            size_exp,
            size,
            direction,
            roots,
        })
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn size_exp(&self) -> u32 {
        self.size_exp
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    /// `omega^j` with `j` reduced modulo the length.
    #[inline]
    pub fn root(&self, j: usize) -> Complex64 {
        self.roots[j % self.size]
    }

    /// DFT of one scalar sequence, choosing the naive or radix-p path by size.
    pub fn apply(&self, input: &[Complex64]) -> Vec<Complex64> {
        if self.size > FAST_THRESHOLD {
            self.apply_fast(input)
        } else {
            self.apply_naive(input)
        }
    }

    /// `out[m] = sum_n omega^(m n) input[n]`, quadratic time.
    pub fn apply_naive(&self, input: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(input.len(), self.size, "input length must match the plan");
        let mut out = vec![Complex64::zero(); self.size];
        for (m, o) in out.iter_mut().enumerate() {
            let mut idx = 0usize;
            let mut acc = Complex64::zero();
            for x in input {
                acc += self.roots[idx] * x;
                idx += m;
                if idx >= self.size {
                    idx -= self.size;
                }
            }
            *o = acc;
        }
        out
    }

    /// Radix-p decimation in time, `O(P K p)`.
    pub fn apply_fast(&self, input: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(input.len(), self.size, "input length must match the plan");
        let mut out = vec![Complex64::zero(); self.size];
        let mut scratch = vec![Complex64::zero(); self.size];
        self.radix(input, 0, 1, &mut out, &mut scratch);
        out
    }

    fn radix(
        &self,
        input: &[Complex64],
        offset: usize,
        stride: usize,
        out: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        let n = out.len();
        if n == 1 {
            out[0] = input[offset];
            return;
        }
        let p = self.p.get() as usize;
        let m = n / p;
        for r in 0..p {
            self.radix(
                input,
                offset + r * stride,
                stride * p,
                &mut out[r * m..(r + 1) * m],
                &mut scratch[r * m..(r + 1) * m],
            );
        }
        // X[k] = sum_r omega_n^(r k) Y_r[k mod m], omega_n = omega^(P / n)
        let step = self.size / n;
        for (k, s) in scratch.iter_mut().enumerate() {
            let km = k % m;
            let mut acc = out[km];
            let twiddle = (k * step) % self.size;
            let mut idx = 0usize;
            for r in 1..p {
                idx += twiddle;
                if idx >= self.size {
                    idx -= self.size;
                }
                acc += self.roots[idx] * out[r * m + km];
            }
            *s = acc;
        }
        out.copy_from_slice(scratch);
    }

    /// Coordinatewise DFT of `cells x dim` values stored row by row.
    pub fn apply_rows(&self, values: &[Complex64], dim: usize) -> Vec<Complex64> {
        assert_eq!(values.len(), self.size * dim);
        let mut out = vec![Complex64::zero(); values.len()];
        let mut column = vec![Complex64::zero(); self.size];
        for i in 0..dim {
            for (n, c) in column.iter_mut().enumerate() {
                *c = values[n * dim + i];
            }
            for (n, v) in self.apply(&column).into_iter().enumerate() {
                out[n * dim + i] = v;
            }
        }
        out
    }
}

fn transform(f: &StepFunction, direction: Direction) -> Result<StepFunction> {
    let plan = TransformPlan::new(f.prime(), f.size_exp(), direction)?;
    transform_with(f, &plan)
}

fn transform_with(f: &StepFunction, plan: &TransformPlan) -> Result<StepFunction> {
    if plan.prime() != f.prime() || plan.size_exp() != f.size_exp() {
        return Err(Error::InvalidGrid(format!(
            "plan for {}^{} does not fit a function with {} cells",
            plan.prime(),
            plan.size_exp(),
            f.cells()
        )));
    }
    let scale = f.cell_measure().to_f64().unwrap_or(0.0);
    let mut values = plan.apply_rows(f.values(), f.dim());
    values.iter_mut().for_each(|v| *v *= scale);
    StepFunction::new(f.prime(), f.level_exp(), f.support_exp(), f.dim(), values)
}

/// `F f`, sending the grid `(M, L)` to `(L, M)`.
pub fn fourier(f: &StepFunction) -> Result<StepFunction> {
    transform(f, Direction::Forward)
}

/// `F f` with a prebuilt plan of size `p^(M+L)`.
pub fn fourier_with_plan(f: &StepFunction, plan: &TransformPlan) -> Result<StepFunction> {
    transform_with(f, plan)
}

/// `F^{-1} f`, a single DFT with the negated exponent. Equals `F^3 f`.
pub fn fourier_inverse(f: &StepFunction) -> Result<StepFunction> {
    transform(f, Direction::Inverse)
}

/// `F^3 f`, computed literally.
pub fn fourier_cubed(f: &StepFunction) -> Result<StepFunction> {
    fourier(&fourier(&fourier(f)?)?)
}

/// A finitely supported function on `Q_p / Z_p`, given on the cosets
/// `k / p^N + Z_p` for `k = 0 .. p^N - 1`. Haar measure on the quotient is
/// counting measure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientFunction {
    p: Prime,
    level: u32,
    dim: usize,
    values: Vec<Complex64>,
}

impl QuotientFunction {
    pub fn new(p: Prime, level: u32, dim: usize, values: Vec<Complex64>) -> Result<Self> {
        let cells = cell_count(p, level as i64, DEFAULT_CELL_CAP)?;
        if dim == 0 || values.len() != cells * dim {
            return Err(Error::InvalidGrid(format!(
                "quotient function needs {cells} x {dim} values, got {}",
                values.len()
            )));
        }
        Ok(QuotientFunction {
            p,
            level,
            dim,
            values,
        })
    }

    pub fn from_rows(p: Prime, level: u32, rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(p, level, dim, rows.concat())
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &[Complex64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// The lift `sum_k I_{k/p^N + Z_p} x_k` to `Q_p`, on the grid `(N, 0)`.
    pub fn to_step_function(&self) -> Result<StepFunction> {
        StepFunction::new(self.p, self.level as i32, 0, self.dim, self.values.clone())
    }

    /// `sum_k ||x_k||^2`.
    pub fn norm_sq(&self, norm: &NormSpec) -> Result<f64> {
        if norm.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: norm.dim(),
            });
        }
        Ok(self
            .values
            .chunks(self.dim)
            .map(|x| norm.value(x).powi(2))
            .sum())
    }
}

/// `F_{Q_p/Z_p}`: the function `t -> sum_k chi_p(k t / p^N) x_k` on `Z_p`,
/// on the grid `(0, N)`.
pub fn fourier_compact(x: &QuotientFunction) -> Result<StepFunction> {
    let plan = TransformPlan::new(x.p, x.level, Direction::Forward)?;
    let values = plan.apply_rows(&x.values, x.dim);
    StepFunction::new(x.p, 0, x.level as i32, x.dim, values)
}

/// `F_{Z_p}`: `s -> int_{Z_p} f(t) chi_p(s t) dt` as a function on `Q_p / Z_p`.
pub fn fourier_restricted_zp(f: &StepFunction) -> Result<QuotientFunction> {
    if f.support_exp() > 0 {
        return Err(Error::SupportOutsideZp(f.support_exp()));
    }
    let f = f.refine(0, f.level_exp())?;
    let level = f.level_exp() as u32;
    let plan = TransformPlan::new(f.prime(), level, Direction::Forward)?;
    let scale = f.cell_measure().to_f64().unwrap_or(0.0);
    let mut values = plan.apply_rows(f.values(), f.dim());
    values.iter_mut().for_each(|v| *v *= scale);
    QuotientFunction::new(f.prime(), level, f.dim(), values)
}
