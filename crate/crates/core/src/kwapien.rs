//! The character functional
//!
//! ```text
//! Q_N(x) = int_{Z_p} || sum_k chi_p(k t / p^(2N)) x_k ||^2 dt
//!        = p^(-2N) sum_t || sum_k omega^(k t) x_k ||^2,   omega = exp(2 pi i / p^(2N))
//! ```
//!
//! over families `x_0 .. x_{p^(2N)-1}` in a finite-dimensional normed space,
//! and a multi-start search for the extreme values of `Q_N(x) / sum ||x_k||^2`.
//! In a Hilbert space the ratio is identically 1; elsewhere its supremum and
//! infimum give the two-sided constants.

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fourier::{fourier, Direction, TransformPlan, FAST_THRESHOLD};
use crate::norms::NormSpec;
use crate::padic::{Ball, PadicRational, Prime};
use crate::stepfn::{cell_count, ElementarySum, ElementaryTerm, DEFAULT_CELL_CAP};

/// Largest number of real parameters the optimizer accepts.
pub const DEFAULT_PARAM_CAP: usize = 4096;

/// Vectors `x_0 .. x_{p^(2N)-1}` in `C^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WitnessJson", into = "WitnessJson")]
pub struct WitnessFamily {
    p: Prime,
    n: u32,
    dim: usize,
    vectors: Vec<Complex64>,
}

impl WitnessFamily {
    pub fn new(p: Prime, n: u32, dim: usize, vectors: Vec<Complex64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("N must be positive".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidGrid("dim must be positive".into()));
        }
        let len = cell_count(p, 2 * n as i64, DEFAULT_CELL_CAP)?;
        if vectors.len() != len * dim {
            return Err(Error::InvalidGrid(format!(
                "witness needs {len} vectors of dim {dim}, got {} scalars",
                vectors.len()
            )));
        }
        Ok(WitnessFamily { p, n, dim, vectors })
    }

    pub fn from_rows(p: Prime, n: u32, rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(p, n, dim, rows.concat())
    }

    pub fn zeros(p: Prime, n: u32, dim: usize) -> Result<Self> {
        let len = cell_count(p, 2 * n as i64, DEFAULT_CELL_CAP)?;
        Self::new(p, n, dim, vec![Complex64::zero(); len * dim])
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn level(&self) -> u32 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `p^(2N)`.
    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Complex64] {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> &[Complex64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn vector_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.vectors.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `sum_k ||x_k||^2`.
    pub fn norm_sq_sum(&self, norm: &NormSpec) -> Result<f64> {
        self.check_norm(norm)?;
        Ok(self
            .vectors
            .chunks(self.dim)
            .map(|x| norm.value(x).powi(2))
            .sum())
    }

    fn check_norm(&self, norm: &NormSpec) -> Result<()> {
        if norm.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: norm.dim(),
            });
        }
        Ok(())
    }

    /// Short SHA-256 fingerprint of the serialized family.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("witness serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WitnessJson {
    p: u32,
    #[serde(rename = "N")]
    n: u32,
    dim: usize,
    vectors: Vec<Vec<[f64; 2]>>,
}

impl TryFrom<WitnessJson> for WitnessFamily {
    type Error = Error;
    fn try_from(j: WitnessJson) -> Result<Self> {
        let p = Prime::new(j.p as u64)?;
        let mut flat = Vec::with_capacity(j.vectors.len() * j.dim);
        for row in &j.vectors {
            if row.len() != j.dim {
                return Err(Error::DimensionMismatch {
                    expected: j.dim,
                    got: row.len(),
                });
            }
            flat.extend(row.iter().map(|[re, im]| Complex64::new(*re, *im)));
        }
        WitnessFamily::new(p, j.n, j.dim, flat)
    }
}

impl From<WitnessFamily> for WitnessJson {
    fn from(w: WitnessFamily) -> Self {
        WitnessJson {
            p: w.p.get(),
            n: w.n,
            dim: w.dim,
            vectors: w
                .vectors
                .chunks(w.dim)
                .map(|r| r.iter().map(|c| [c.re, c.im]).collect())
                .collect(),
        }
    }
}

/// Character sums `S_t = sum_k omega^(k t) x_k` for all `t`, stored row by row.
fn character_sums(plan: &TransformPlan, w: &WitnessFamily) -> Vec<Complex64> {
    if plan.len() > FAST_THRESHOLD {
        return plan.apply_rows(w.vectors(), w.dim);
    }
    let (len, d) = (plan.len(), w.dim);
    let mut out = vec![Complex64::zero(); len * d];
    for t in 0..len {
        let row = &mut out[t * d..(t + 1) * d];
        let mut idx = 0usize;
        for k in 0..len {
            let r = plan.roots()[idx];
            for (o, x) in row.iter_mut().zip(w.vector(k)) {
                *o += r * x;
            }
            idx += t;
            if idx >= len {
                idx -= len;
            }
        }
    }
    out
}

fn plan_for(w: &WitnessFamily) -> Result<TransformPlan> {
    TransformPlan::new(w.p, 2 * w.n, Direction::Forward)
}

fn measure_factor(w: &WitnessFamily) -> f64 {
    w.p.pow_rational(-2 * w.n as i64).to_f64().unwrap_or(0.0)
}

/// `Q_N(x)`, the exact integral of a locally constant integrand of level `p^(-2N)`.
pub fn q_functional(w: &WitnessFamily, norm: &NormSpec) -> Result<f64> {
    w.check_norm(norm)?;
    let plan = plan_for(w)?;
    let sums = character_sums(&plan, w);
    let total: f64 = sums.chunks(w.dim).map(|s| norm.value(s).powi(2)).sum();
    Ok(measure_factor(w) * total)
}

/// `h(t) = sum_k p^(N/2) I_{B[k/p^N, p^-N]}(t) x_k`.
pub fn test_function(w: &WitnessFamily) -> Result<ElementarySum> {
    let p = w.p;
    let n = w.n as i64;
    let weight = BigRational::from_integer(p.pow_big(w.n));
    let terms = (0..w.len())
        .map(|k| ElementaryTerm {
            ball: Ball::new(
                PadicRational::from_integer(p, k as u64).mul_pow_p(-n),
                -(w.n as i32),
            ),
            coeff_sq: weight.clone(),
            vector: w.vector(k).to_vec(),
        })
        .collect();
    ElementarySum::new(p, w.dim, terms)
}

/// `||F h||^2` for the test function `h` of the family, through the step-function transform.
pub fn q_functional_via_fourier(w: &WitnessFamily, norm: &NormSpec) -> Result<f64> {
    w.check_norm(norm)?;
    let h = test_function(w)?.to_step_function()?;
    fourier(&h)?.bochner_norm_sq(norm)
}

/// `Q_N(x) / sum ||x_k||^2`.
pub fn ratio(w: &WitnessFamily, norm: &NormSpec) -> Result<f64> {
    let denom = w.norm_sq_sum(norm)?;
    if denom == 0.0 {
        return Err(Error::ZeroFamily);
    }
    Ok(q_functional(w, norm)? / denom)
}

/// Which constant is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// `Q_N(x) <= C sum ||x_k||^2`: maximize the ratio.
    Upper,
    /// `C^-1 sum ||x_k||^2 <= Q_N(x)`: minimize the ratio.
    Lower,
}

impl Bound {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Bound::Upper => a > b,
            Bound::Lower => a < b,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Bound::Upper => 1.0,
            Bound::Lower => -1.0,
        }
    }
}

impl std::str::FromStr for Bound {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Bound::Upper),
            "lower" => Ok(Bound::Lower),
            _ => Err(Error::Parse(format!(
                "direction must be upper or lower, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub p: Prime,
    pub n: u32,
    pub norm: NormSpec,
    pub direction: Bound,
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Prepend the four structured starts.
    pub structured_starts: bool,
}

impl EstimateConfig {
    pub fn new(p: Prime, n: u32, norm: NormSpec, direction: Bound) -> Self {
        EstimateConfig {
            p,
            n,
            norm,
            direction,
            restarts: 32,
            iterations: 2000,
            seed: 7,
            structured_starts: true,
        }
    }

    pub fn budget(mut self, restarts: usize, iterations: usize) -> Self {
        self.restarts = restarts;
        self.iterations = iterations;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub const CERTIFICATE_LABEL: &str = "certified lower bound on the optimal C";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub direction: Bound,
    pub p: u32,
    #[serde(rename = "N")]
    pub n: u32,
    pub norm: NormSpec,
    /// Best ratio found, recomputed from the witness.
    pub value: f64,
    /// `value` for the upper direction, `1 / value` for the lower one.
    pub certified_constant: f64,
    pub label: String,
    pub witness: WitnessFamily,
    /// Best ratio per restart, structured starts first.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

/// Incremental ratio evaluation for coordinate perturbations.
struct RatioEvaluator<'a> {
    norm: &'a NormSpec,
    plan: TransformPlan,
    measure: f64,
    len: usize,
    dim: usize,
    sums: Vec<Complex64>,
    norms_sq: Vec<f64>,
    denom: f64,
    row: Vec<Complex64>,
}

impl<'a> RatioEvaluator<'a> {
    fn new(norm: &'a NormSpec, proto: &WitnessFamily) -> Result<Self> {
        let plan = plan_for(proto)?;
        Ok(RatioEvaluator {
            norm,
            measure: measure_factor(proto),
            len: proto.len(),
            dim: proto.dim,
            plan,
            sums: Vec::new(),
            norms_sq: Vec::new(),
            denom: 0.0,
            row: vec![Complex64::zero(); proto.dim],
        })
    }

    fn load(&mut self, w: &WitnessFamily) -> f64 {
        self.sums = character_sums(&self.plan, w);
        self.norms_sq = w
            .vectors
            .chunks(self.dim)
            .map(|x| self.norm.value(x).powi(2))
            .collect();
        self.denom = self.norms_sq.iter().sum();
        let num: f64 = self
            .sums
            .chunks(self.dim)
            .map(|s| self.norm.value(s).powi(2))
            .sum();
        self.measure * num / self.denom
    }

    /// Ratio after adding `delta` to coordinate `i` of vector `k` of the loaded family `w`.
    fn perturbed(&mut self, w: &WitnessFamily, k: usize, i: usize, delta: Complex64) -> f64 {
        let mut x = w.vector(k).to_vec();
        x[i] += delta;
        let denom = self.denom - self.norms_sq[k] + self.norm.value(&x).powi(2);
        let mut num = 0.0;
        let mut idx = 0usize;
        for t in 0..self.len {
            self.row
                .copy_from_slice(&self.sums[t * self.dim..(t + 1) * self.dim]);
            self.row[i] += self.plan.roots()[idx] * delta;
            num += self.norm.value(&self.row).powi(2);
            idx += k;
            if idx >= self.len {
                idx -= self.len;
            }
        }
        self.measure * num / denom
    }
}

fn normalize(w: &mut WitnessFamily, norm: &NormSpec) -> bool {
    let s = w.norm_sq_sum(norm).unwrap_or(0.0);
    if !(s > 0.0 && s.is_finite()) {
        return false;
    }
    let f = 1.0 / s.sqrt();
    w.vectors.iter_mut().for_each(|v| *v *= f);
    true
}

fn structured_start(index: usize, p: Prime, n: u32, dim: usize) -> WitnessFamily {
    let mut w = WitnessFamily::zeros(p, n, dim).expect("size checked by caller");
    let len = w.len();
    let one = Complex64::new(1.0, 0.0);
    match index {
        // single spike
        0 => w.vector_mut(0)[0] = one,
        // all equal
        1 => w.vectors.iter_mut().for_each(|v| *v = one),
        // alternating signs
        2 => {
            for k in 0..len {
                let s = if k % 2 == 0 { one } else { -one };
                w.vector_mut(k).iter_mut().for_each(|v| *v = s);
            }
        }
        // distinct coordinate directions on the first indices
        _ => {
            for k in 0..dim.min(len) {
                w.vector_mut(k)[k] = one;
            }
        }
    }
    w
}

pub const STRUCTURED_STARTS: usize = 4;

fn random_start(rng: &mut ChaCha8Rng, p: Prime, n: u32, dim: usize) -> WitnessFamily {
    let mut w = WitnessFamily::zeros(p, n, dim).expect("size checked by caller");
    for v in w.vectors.iter_mut() {
        *v = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    }
    w
}

struct RestartOutcome {
    value: f64,
    witness: WitnessFamily,
}

fn run_restart(cfg: &EstimateConfig, mut w: WitnessFamily, step_h: f64) -> Result<RestartOutcome> {
    let norm = &cfg.norm;
    let mut eval = RatioEvaluator::new(norm, &w)?;
    if !normalize(&mut w, norm) {
        return Err(Error::ZeroFamily);
    }
    let mut current = eval.load(&w);
    let mut best = RestartOutcome {
        value: current,
        witness: w.clone(),
    };
    let params = w.vectors.len();
    let mut grad = vec![Complex64::zero(); params];
    let mut trust = 1.0_f64;
    for it in 1..=cfg.iterations {
        for (j, g) in grad.iter_mut().enumerate() {
            let (k, i) = (j / w.dim, j % w.dim);
            let re_plus = eval.perturbed(&w, k, i, Complex64::new(step_h, 0.0));
            let re_minus = eval.perturbed(&w, k, i, Complex64::new(-step_h, 0.0));
            let im_plus = eval.perturbed(&w, k, i, Complex64::new(0.0, step_h));
            let im_minus = eval.perturbed(&w, k, i, Complex64::new(0.0, -step_h));
            *g = Complex64::new(re_plus - re_minus, im_plus - im_minus) / (2.0 * step_h);
        }
        let gnorm = grad.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt();
        if !(gnorm > 0.0 && gnorm.is_finite()) {
            break;
        }
        // Steps that fail to improve halve the trust factor; improving ones restore it.
        let eta = 0.1 / (it as f64).sqrt() * trust * cfg.direction.sign() / gnorm;
        for (v, g) in w.vectors.iter_mut().zip(&grad) {
            *v += g * eta;
        }
        if !normalize(&mut w, norm) {
            break;
        }
        let value = eval.load(&w);
        trust = if cfg.direction.better(value, current) {
            (trust * 2.0).min(1.0)
        } else {
            (trust * 0.5).max(1e-6)
        };
        current = value;
        if cfg.direction.better(current, best.value) {
            best = RestartOutcome {
                value: current,
                witness: w.clone(),
            };
        }
    }
    Ok(best)
}

/// Multi-start projected subgradient search for the extreme ratio.
///
/// Restart `r` draws from the ChaCha stream `r` of `seed`, so results do not
/// depend on scheduling and adding restarts or iterations never worsens the
/// best value.
pub fn estimate_constant(cfg: &EstimateConfig) -> Result<ConstantEstimate> {
    if cfg.iterations == 0 || (cfg.restarts == 0 && !cfg.structured_starts) {
        return Err(Error::ZeroBudget);
    }
    let len = cell_count(cfg.p, 2 * cfg.n as i64, DEFAULT_CELL_CAP)?;
    let params = 2 * len * cfg.norm.dim();
    if params > DEFAULT_PARAM_CAP {
        return Err(Error::CapExceeded {
            what: "optimizer parameters",
            needed: params as u128,
            cap: DEFAULT_PARAM_CAP as u128,
        });
    }
    if cfg.n == 0 {
        return Err(Error::InvalidGrid("N must be positive".into()));
    }
    let dim = cfg.norm.dim();
    let structured = if cfg.structured_starts {
        STRUCTURED_STARTS
    } else {
        0
    };
    let total = structured + cfg.restarts;
    let outcomes: Vec<Result<RestartOutcome>> = (0..total)
        .into_par_iter()
        .map(|r| {
            let start = if r < structured {
                structured_start(r, cfg.p, cfg.n, dim)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((r - structured) as u64);
                random_start(&mut rng, cfg.p, cfg.n, dim)
            };
            run_restart(cfg, start, 1e-6)
        })
        .collect();
    let mut trace = Vec::with_capacity(total);
    let mut best: Option<RestartOutcome> = None;
    for o in outcomes {
        let o = o?;
        trace.push(o.value);
        if best
            .as_ref()
            .is_none_or(|b| cfg.direction.better(o.value, b.value))
        {
            best = Some(o);
        }
    }
    let best = best.ok_or(Error::ZeroBudget)?;
    let value = ratio(&best.witness, &cfg.norm)?;
    Ok(ConstantEstimate {
        direction: cfg.direction,
        p: cfg.p.get(),
        n: cfg.n,
        norm: cfg.norm.clone(),
        value,
        certified_constant: match cfg.direction {
            Bound::Upper => value,
            Bound::Lower => 1.0 / value,
        },
        label: CERTIFICATE_LABEL.to_string(),
        witness: best.witness,
        trace,
        iterations: cfg.iterations,
        restarts: total,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTransferReport {
    pub p: u32,
    #[serde(rename = "N")]
    pub n: u32,
    pub norm: NormSpec,
    pub dual_norm: NormSpec,
    /// `1 / min ratio` found for the norm.
    pub lower_constant: f64,
    /// `max ratio` found for the dual norm.
    pub dual_upper_constant: f64,
    pub tolerance: f64,
    pub violation: bool,
    pub lower: ConstantEstimate,
    pub dual_upper: ConstantEstimate,
}

/// Compares the lower constant of `X` with the upper constant of `X*`.
///
/// The upper constant of the dual can never exceed the lower constant of the
/// space. Both values are witness-certified lower bounds on their true
/// constants, so the check is one-sided: a flagged violation means either a
/// defect or an under-optimized lower direction.
pub fn dual_transfer_check(
    p: Prime,
    n: u32,
    norm: &NormSpec,
    restarts: usize,
    iterations: usize,
    seed: u64,
    tolerance: f64,
) -> Result<DualTransferReport> {
    let dual = norm.dual()?;
    let lower = estimate_constant(
        &EstimateConfig::new(p, n, norm.clone(), Bound::Lower)
            .budget(restarts, iterations)
            .seed(seed),
    )?;
    let dual_upper = estimate_constant(
        &EstimateConfig::new(p, n, dual.clone(), Bound::Upper)
            .budget(restarts, iterations)
            .seed(seed),
    )?;
    let lower_constant = lower.certified_constant;
    let dual_upper_constant = dual_upper.certified_constant;
    Ok(DualTransferReport {
        p: p.get(),
        n,
        norm: norm.clone(),
        dual_norm: dual,
        lower_constant,
        dual_upper_constant,
        tolerance,
        violation: dual_upper_constant > lower_constant + tolerance,
        lower,
        dual_upper,
    })
}
