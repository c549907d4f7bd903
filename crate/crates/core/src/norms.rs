//! Finite-dimensional normed spaces standing in for the Banach space `X`.
//!
//! Any fixed finite-dimensional space is isomorphic to a Hilbert space, so the
//! interesting question at this scale is how far the constants measured by
//! [`crate::kwapien`] move away from 1 as the exponent and dimension change.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalars used when sampling vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScalarField {
    Real,
    #[default]
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormKind {
    /// `(sum |x_i|^q)^(1/q)`, `max |x_i|` for `q = inf`.
    Lq {
        #[serde(with = "exponent")]
        q: f64,
    },
    /// `(sum w_i |x_i|^q)^(1/q)`; for `q = inf` the weights multiply `|x_i|` directly.
    WeightedLq {
        #[serde(with = "exponent")]
        q: f64,
        weights: Vec<f64>,
    },
    /// `max_j |<a_j, x>|` over a table of real functionals spanning the space.
    Polyhedral { functionals: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormSpecJson")]
pub struct NormSpec {
    dim: usize,
    #[serde(flatten)]
    kind: NormKind,
    #[serde(default)]
    field: ScalarField,
    /// Coordinate scales `s_i` with `||x|| = ||(s_i x_i)||_q` for weighted kinds.
    #[serde(skip)]
    scales: Vec<f64>,
}

#[derive(Deserialize)]
struct NormSpecJson {
    dim: usize,
    #[serde(flatten)]
    kind: NormKind,
    #[serde(default)]
    field: ScalarField,
}

impl TryFrom<NormSpecJson> for NormSpec {
    type Error = Error;

    fn try_from(raw: NormSpecJson) -> Result<Self> {
        let spec = NormSpec {
            dim: raw.dim,
            kind: raw.kind,
            field: raw.field,
            scales: Vec::new(),
        };
        spec.validated()
    }
}

/// `q'` with `1/q + 1/q' = 1`.
pub fn conjugate_exponent(q: f64) -> f64 {
    if q == 1.0 {
        f64::INFINITY
    } else if q.is_infinite() {
        1.0
    } else {
        q / (q - 1.0)
    }
}

fn check_exponent(q: f64) -> Result<()> {
    if q >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidNorm(format!("exponent q = {q} must be >= 1")))
    }
}

impl NormSpec {
    pub fn lq(dim: usize, q: f64) -> Result<Self> {
        check_exponent(q)?;
        Self::build(dim, NormKind::Lq { q })
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::lq(dim, 2.0).expect("dimension must be positive")
    }

    pub fn weighted_lq(q: f64, weights: Vec<f64>) -> Result<Self> {
        check_exponent(q)?;
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidNorm(format!("weight {w} must be positive")));
        }
        Self::build(weights.len(), NormKind::WeightedLq { q, weights })
    }

    pub fn polyhedral(dim: usize, functionals: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(f) = functionals.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        if rank(&functionals, dim) < dim {
            return Err(Error::InvalidNorm(
                "functionals do not span the space, so the table is not a norm".into(),
            ));
        }
        Self::build(dim, NormKind::Polyhedral { functionals })
    }

    fn build(dim: usize, kind: NormKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNorm("dimension must be positive".into()));
        }
        let mut spec = NormSpec {
            dim,
            kind,
            field: ScalarField::Complex,
            scales: Vec::new(),
        };
        spec.fill_scales();
        Ok(spec)
    }

    fn fill_scales(&mut self) {
        self.scales = match &self.kind {
            NormKind::WeightedLq { q, weights } if q.is_finite() => {
                weights.iter().map(|w| w.powf(1.0 / q)).collect()
            }
            NormKind::WeightedLq { weights, .. } => weights.clone(),
            _ => Vec::new(),
        };
    }

    /// Re-derives cached data after deserialization and checks the kind.
    fn validated(mut self) -> Result<Self> {
        let rebuilt = match &self.kind {
            NormKind::Lq { q } => Self::lq(self.dim, *q)?,
            NormKind::WeightedLq { q, weights } => {
                if weights.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: weights.len(),
                    });
                }
                Self::weighted_lq(*q, weights.clone())?
            }
            NormKind::Polyhedral { functionals } => {
                Self::polyhedral(self.dim, functionals.clone())?
            }
        };
        self.scales = rebuilt.scales;
        Ok(self)
    }

    pub fn with_field(mut self, field: ScalarField) -> Self {
        self.field = field;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    /// The exponent for the `lq` kinds.
    pub fn exponent(&self) -> Option<f64> {
        match self.kind {
            NormKind::Lq { q } | NormKind::WeightedLq { q, .. } => Some(q),
            NormKind::Polyhedral { .. } => None,
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, NormKind::Lq { q } if q == 2.0)
    }

    pub fn norm(&self, x: &[Complex64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.value(x))
    }

    /// Norm without the length check. Callers guarantee `x.len() == dim`.
    #[inline]
    pub fn value(&self, x: &[Complex64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            NormKind::Lq { q } => lq_value(x.iter().map(|c| c.norm()), *q),
            NormKind::WeightedLq { q, .. } => {
                lq_value(x.iter().zip(&self.scales).map(|(c, s)| s * c.norm()), *q)
            }
            NormKind::Polyhedral { functionals } => functionals
                .iter()
                .map(|a| {
                    a.iter()
                        .zip(x)
                        .map(|(ai, xi)| xi * *ai)
                        .sum::<Complex64>()
                        .norm()
                })
                .fold(0.0, f64::max),
        }
    }

    /// The dual norm under the bilinear pairing `<y, x> = sum y_i x_i`.
    ///
    /// Weighted duals invert the coordinate scales, which for finite exponents
    /// is `w_i -> w_i^(-q'/q)`.
    pub fn dual(&self) -> Result<Self> {
        let out = match &self.kind {
            NormKind::Lq { q } => Self::lq(self.dim, conjugate_exponent(*q))?,
            NormKind::WeightedLq { q, .. } => {
                let qd = conjugate_exponent(*q);
                let weights = self
                    .scales
                    .iter()
                    .map(|s| if qd.is_finite() { s.powf(-qd) } else { 1.0 / s })
                    .collect();
                Self::weighted_lq(qd, weights)?
            }
            NormKind::Polyhedral { .. } => {
                return Err(Error::Unsupported("dual of a polyhedral norm table".into()))
            }
        };
        Ok(out.with_field(self.field))
    }

    /// A random vector with the configured scalar field.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<Complex64> {
        (0..self.dim)
            .map(|_| match self.field {
                ScalarField::Real => Complex64::new(rng.random_range(-1.0..1.0), 0.0),
                ScalarField::Complex => {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                }
            })
            .collect()
    }

    /// `||x+y||^2 + ||x-y||^2 - 2||x||^2 - 2||y||^2`.
    pub fn parallelogram_defect(&self, x: &[Complex64], y: &[Complex64]) -> f64 {
        let s: Vec<_> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        let d: Vec<_> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.value(&s).powi(2) + self.value(&d).powi(2)
            - 2.0 * self.value(x).powi(2)
            - 2.0 * self.value(y).powi(2)
    }

    /// Parallelogram law on 1000 deterministic sample pairs (plus the unit basis pairs).
    pub fn is_hilbert(&self) -> bool {
        let tol = 1e-9;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f11);
        let unit = |i: usize| {
            let mut e = vec![Complex64::new(0.0, 0.0); self.dim];
            e[i] = Complex64::new(1.0, 0.0);
            e
        };
        let basis_pairs = (0..self.dim)
            .flat_map(|i| (0..self.dim).map(move |j| (i, j)))
            .map(|(i, j)| (unit(i), unit(j)));
        let random_pairs: Vec<_> = (0..1000)
            .map(|_| (self.sample(&mut rng), self.sample(&mut rng)))
            .collect();
        basis_pairs.chain(random_pairs).all(|(x, y)| {
            let scale = self.value(&x).powi(2) + self.value(&y).powi(2);
            self.parallelogram_defect(&x, &y).abs() <= tol * scale.max(1.0)
        })
    }
}

/// `sum y_i x_i`.
pub fn pairing(y: &[Complex64], x: &[Complex64]) -> Complex64 {
    y.iter().zip(x).map(|(a, b)| a * b).sum()
}

#[inline]
fn lq_value(abs: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q == 1.0 {
        abs.sum()
    } else if q == 2.0 {
        abs.map(|a| a * a).sum::<f64>().sqrt()
    } else if q.is_infinite() {
        abs.fold(0.0, f64::max)
    } else {
        let a: Vec<f64> = abs.collect();
        let m = a.iter().copied().fold(0.0, f64::max);
        if m == 0.0 {
            return 0.0;
        }
        m * a.iter().map(|v| (v / m).powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

fn rank(rows: &[Vec<f64>], dim: usize) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut r = 0;
    for col in 0..dim {
        let Some(piv) = (r..m.len()).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
        else {
            break;
        };
        if m[piv][col].abs() < 1e-12 {
            continue;
        }
        m.swap(r, piv);
        let pivot = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r {
                let f = row[col] / pivot[col];
                for (a, b) in row[col..].iter_mut().zip(&pivot[col..]) {
                    *a -= f * b;
                }
            }
        }
        r += 1;
    }
    r
}

/// `q` as a JSON number, or the string `"inf"`.
mod exponent {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &f64, s: S) -> Result<S::Ok, S::Error> {
        if q.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*q)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(q) => Ok(q),
            Repr::Str(s) => super::parse_exponent(&s).map_err(de::Error::custom),
        }
    }
}

/// Parses an exponent, accepting `inf`/`infinity`.
pub fn parse_exponent(s: &str) -> Result<f64> {
    let t = s.trim().to_ascii_lowercase();
    if t == "inf" || t == "infinity" {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad exponent {s:?}")))
}
