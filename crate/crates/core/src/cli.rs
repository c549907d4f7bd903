//! Command-line driver: transforms, verification suites, constant estimation and sweeps.
//!
//! Every command renders into a string first, so identical arguments give
//! identical bytes. Failures become a JSON object on stderr and an exit code:
//! 2 for bad configuration, 3 for exceeded caps, 4 for failed internal checks,
//! 5 for a dual-transfer violation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::fourier::{fourier, fourier_inverse};
use crate::kwapien::{
    dual_transfer_check, estimate_constant, q_functional, q_functional_via_fourier, ratio, Bound,
    EstimateConfig, WitnessFamily,
};
use crate::norms::{parse_exponent, NormSpec, ScalarField};
use crate::padic::Prime;
use crate::probe::{khinchin_expectation, khinchin_over_zp, monna_measure_check, PadicDigits};
use crate::stepfn::StepFunction;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;
pub const EXIT_VIOLATION: i32 = 5;

/// Floating identities are checked at this level.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "padic-fourier",
    version,
    about = "p-adic Fourier analysis and Kwapien constant experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fourier transform of a step function given as JSON.
    Transform {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        inverse: bool,
    },
    /// Parseval, inversion and reflection on random step functions.
    VerifyParseval {
        #[arg(long)]
        p: u64,
        #[arg(long = "M", allow_negative_numbers = true)]
        m: i32,
        #[arg(long = "L", allow_negative_numbers = true)]
        l: i32,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
    /// Exhaustive Rademacher average of `||sum eps_i x_i||^2`.
    Khinchin {
        #[command(flatten)]
        norm: NormArgs,
        /// JSON array of vectors, each an array of `[re, im]` pairs.
        #[arg(long)]
        vectors: PathBuf,
        /// Also integrate over `Z_p` through the Monna map.
        #[arg(long)]
        p: Option<u64>,
        #[arg(long, default_value_t = 12)]
        depth: usize,
    },
    /// Multi-start search for the extreme Kwapien ratio.
    EstimateConstant {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum, default_value_t = DirectionArg::Upper)]
        direction: DirectionArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Lower constant of a norm against the upper constant of its dual.
    DualCheck {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Haar measure of digit cylinders against Lebesgue measure of their Monna images.
    Monna {
        #[arg(long)]
        p: u64,
        /// Comma-separated leading digits, least significant first.
        #[arg(long, value_delimiter = ',', conflicts_with = "random")]
        digits: Option<Vec<u32>>,
        /// Number of random cylinders instead of fixed digits.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recomputes the ratio of a stored witness family.
    Ratio {
        /// A witness family, or a `estimate-constant` report containing one.
        #[arg(long)]
        witness: PathBuf,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// CSV table of certified constants over a parameter grid.
    #[command(alias = "report")]
    Sweep {
        #[arg(long, default_value_t = 2)]
        p: u64,
        #[arg(long = "N", value_delimiter = ',', default_value = "1")]
        n: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,inf")]
        q: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        d: Vec<usize>,
        #[arg(long, value_enum, default_value_t = DirectionArg::Upper)]
        direction: DirectionArg,
        #[arg(long, default_value_t = 32)]
        restarts: usize,
        #[arg(long = "iters", default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Adds a wall-time column, which breaks byte-for-byte reproducibility.
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Lq,
    Wlq,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldArg {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<DirectionArg> for Bound {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Upper => Bound::Upper,
            DirectionArg::Lower => Bound::Lower,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct NormArgs {
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    /// Exponent, `inf` allowed.
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Norm JSON for `--norm custom`.
    #[arg(long)]
    pub norm_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub field: Option<FieldArg>,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long)]
    pub p: u64,
    #[arg(long = "N")]
    pub n: u32,
    #[command(flatten)]
    pub norm: NormArgs,
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    #[arg(long = "iters", default_value_t = 2000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// A failed run: exit code plus a machine-readable description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, kind: &str, message: impl Into<String>) -> Self {
        CliError {
            code,
            kind: kind.into(),
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, "invalid_config", message)
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::CapExceeded { .. } => {
                return CliError::new(EXIT_CAP, "cap_exceeded", e.to_string())
            }
            Error::NotPrime(_) => "not_prime",
            Error::PrimeMismatch(..) => "prime_mismatch",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidGrid(_) | Error::Shrink { .. } => "invalid_grid",
            Error::SupportOutsideZp(_) => "support_outside_zp",
            Error::InvalidNorm(_) => "invalid_norm",
            Error::Unsupported(_) => "unsupported",
            Error::ZeroFamily => "zero_family",
            Error::Resolution(_) => "resolution",
            Error::ZeroBudget => "zero_budget",
            Error::Parse(_) => "parse",
        };
        CliError::new(EXIT_CONFIG, kind, e.to_string())
    }
}

/// Rendered output of a successful or flagged run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome {
            code: EXIT_OK,
            stdout,
        }
    }
}

/// Parses arguments, runs the command and writes stdout/stderr. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let err = CliError::config(e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return EXIT_CONFIG;
        }
    };
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            out.code
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Transform {
            input,
            output,
            inverse,
        } => {
            let f: StepFunction = read_json(input)?;
            let g = if *inverse {
                fourier_inverse(&f)?
            } else {
                fourier(&f)?
            };
            emit(&to_pretty(&g)?, output.as_deref())
        }
        Command::VerifyParseval {
            p,
            m,
            l,
            trials,
            seed,
            dim,
        } => verify_parseval(Prime::new(*p)?, *m, *l, *trials, *seed, *dim),
        Command::Khinchin {
            norm,
            vectors,
            p,
            depth,
        } => {
            let vectors: Vec<Vec<Complex64>> = read_json(vectors)?;
            let hint = vectors.first().map(Vec::len);
            let spec = norm.build(hint)?;
            let report = khinchin_expectation(&vectors, &spec)?;
            let mut value = serde_json::to_value(&report).map_err(internal)?;
            value["norm"] = serde_json::to_value(&spec).map_err(internal)?;
            if let Some(p) = p {
                let zp = khinchin_over_zp(&vectors, &spec, Prime::new(*p)?, *depth)?;
                value["over_zp"] = json!({ "p": p, "depth": depth, "expectation": zp });
            }
            Ok(Outcome::ok(to_pretty(&value)?))
        }
        Command::EstimateConstant {
            problem,
            direction,
            output,
        } => {
            let cfg = problem.config((*direction).into())?;
            let est = estimate_constant(&cfg)?;
            emit(&to_pretty(&est)?, output.as_deref())
        }
        Command::DualCheck { problem, tolerance } => {
            let norm = problem.norm.build(None)?;
            let report = dual_transfer_check(
                Prime::new(problem.p)?,
                problem.n,
                &norm,
                problem.restarts,
                problem.iterations,
                problem.seed,
                *tolerance,
            )?;
            let code = if report.violation {
                EXIT_VIOLATION
            } else {
                EXIT_OK
            };
            Ok(Outcome {
                code,
                stdout: to_pretty(&report)?,
            })
        }
        Command::Monna {
            p,
            digits,
            random,
            depth,
            seed,
        } => monna(Prime::new(*p)?, digits.as_deref(), *random, *depth, *seed),
        Command::Ratio { witness, norm } => ratio_command(witness, norm),
        Command::Sweep {
            p,
            n,
            q,
            d,
            direction,
            restarts,
            iterations,
            seed,
            format,
            timing,
            output,
        } => {
            let grid = SweepGrid {
                p: Prime::new(*p)?,
                levels: n.clone(),
                exponents: q.clone(),
                dims: d.clone(),
                direction: (*direction).into(),
                restarts: *restarts,
                iterations: *iterations,
                seed: *seed,
            };
            let rows = sweep(&grid);
            let text = match format {
                FormatArg::Csv => rows_to_csv(&rows, *timing),
                FormatArg::Json => {
                    let mut values = serde_json::to_value(&rows).map_err(internal)?;
                    if !*timing {
                        for row in values.as_array_mut().into_iter().flatten() {
                            row.as_object_mut().map(|o| o.remove("wall_time_s"));
                        }
                    }
                    to_pretty(&values)?
                }
            };
            emit(&text, output.as_deref())
        }
    }
}

impl NormArgs {
    /// Builds the norm. `dim_hint` fills in a missing `--dim`.
    pub fn build(&self, dim_hint: Option<usize>) -> Result<NormSpec, CliError> {
        let kind = self.norm.unwrap_or(if self.weights.is_some() {
            NormArg::Wlq
        } else if self.norm_file.is_some() {
            NormArg::Custom
        } else {
            NormArg::Lq
        });
        let q = match &self.q {
            Some(s) => parse_exponent(s)?,
            None => 2.0,
        };
        let spec = match kind {
            NormArg::Lq => {
                let dim = self
                    .dim
                    .or(dim_hint)
                    .ok_or_else(|| CliError::config("--dim is required"))?;
                NormSpec::lq(dim, q)?
            }
            NormArg::Wlq => {
                let weights = self
                    .weights
                    .clone()
                    .ok_or_else(|| CliError::config("--norm wlq needs --weights"))?;
                if let Some(dim) = self.dim.filter(|d| *d != weights.len()) {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: weights.len(),
                    }
                    .into());
                }
                NormSpec::weighted_lq(q, weights)?
            }
            NormArg::Custom => {
                let path = self
                    .norm_file
                    .as_deref()
                    .ok_or_else(|| CliError::config("--norm custom needs --norm-file"))?;
                read_json::<NormSpec>(path)?
            }
        };
        Ok(match self.field {
            Some(FieldArg::Real) => spec.with_field(ScalarField::Real),
            Some(FieldArg::Complex) => spec.with_field(ScalarField::Complex),
            None => spec,
        })
    }

    fn is_empty(&self) -> bool {
        self.norm.is_none()
            && self.q.is_none()
            && self.dim.is_none()
            && self.weights.is_none()
            && self.norm_file.is_none()
            && self.field.is_none()
    }
}

impl ProblemArgs {
    pub fn config(&self, direction: Bound) -> Result<EstimateConfig, CliError> {
        let norm = self.norm.build(None)?;
        Ok(
            EstimateConfig::new(Prime::new(self.p)?, self.n, norm, direction)
                .budget(self.restarts, self.iterations)
                .seed(self.seed),
        )
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::new(EXIT_INTERNAL, "internal", e.to_string())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_CONFIG, "io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new(EXIT_CONFIG, "parse", format!("{}: {e}", path.display())))
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(internal)?;
    s.push('\n');
    Ok(s)
}

/// Writes to `path` when given, otherwise returns the text as stdout.
fn emit(text: &str, path: Option<&Path>) -> Result<Outcome, CliError> {
    match path {
        Some(p) => {
            fs::write(p, text)
                .map_err(|e| CliError::new(EXIT_INTERNAL, "io", format!("{}: {e}", p.display())))?;
            Ok(Outcome::ok(String::new()))
        }
        None => Ok(Outcome::ok(text.to_string())),
    }
}

/// Random step function on the grid `(M, L)`, scaled to unit `L2` norm.
pub fn random_step_function(
    rng: &mut ChaCha8Rng,
    p: Prime,
    m: i32,
    l: i32,
    dim: usize,
) -> crate::Result<StepFunction> {
    let mut f = StepFunction::zeros(p, m, l, dim)?;
    for n in 0..f.cells() {
        for v in f.value_mut(n) {
            *v = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
    }
    let norm = f.bochner_norm_sq(&NormSpec::euclidean(dim))?.sqrt();
    Ok(if norm > 0.0 {
        f.scale(Complex64::new(1.0 / norm, 0.0))
    } else {
        f
    })
}

fn verify_parseval(
    p: Prime,
    m: i32,
    l: i32,
    trials: usize,
    seed: u64,
    dim: usize,
) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let euclid = NormSpec::euclidean(dim.max(1));
    let (mut parseval, mut inversion, mut reflection) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..trials {
        let f = random_step_function(&mut rng, p, m, l, dim)?;
        let g = fourier(&f)?;
        let dev = (g.bochner_norm_sq(&euclid)? - f.bochner_norm_sq(&euclid)?).abs();
        parseval = parseval.max(dev);
        inversion = inversion.max(fourier_inverse(&g)?.max_abs_diff(&f)?);
        reflection = reflection.max(fourier(&g)?.max_abs_diff(&f.reflect())?);
    }
    let pass = parseval < IDENTITY_TOLERANCE
        && inversion < IDENTITY_TOLERANCE
        && reflection < IDENTITY_TOLERANCE;
    let report = json!({
        "p": p.get(),
        "M": m,
        "L": l,
        "dim": dim,
        "trials": trials,
        "seed": seed,
        "max_parseval_deviation": parseval,
        "max_inversion_error": inversion,
        "max_reflection_error": reflection,
        "tolerance": IDENTITY_TOLERANCE,
        "pass": pass,
    });
    Ok(Outcome {
        code: if pass { EXIT_OK } else { EXIT_INTERNAL },
        stdout: to_pretty(&report)?,
    })
}

fn monna(
    p: Prime,
    digits: Option<&[u32]>,
    random: Option<usize>,
    depth: usize,
    seed: u64,
) -> Result<Outcome, CliError> {
    let patterns = match (digits, random) {
        (Some(d), _) => vec![PadicDigits::new(p, d.to_vec())?],
        (None, Some(count)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let n = rng.random_range(0..=depth);
                    let d = (0..n).map(|_| rng.random_range(0..p.get())).collect();
                    PadicDigits::new(p, d)
                })
                .collect::<crate::Result<Vec<_>>>()?
        }
        (None, None) => return Err(CliError::config("monna needs --digits or --random")),
    };
    let checks: Vec<_> = patterns.iter().map(monna_measure_check).collect();
    let all_equal = checks.iter().all(|c| c.equal);
    let report = json!({ "p": p.get(), "all_equal": all_equal, "cylinders": checks });
    Ok(Outcome {
        code: if all_equal { EXIT_OK } else { EXIT_INTERNAL },
        stdout: to_pretty(&report)?,
    })
}

fn ratio_command(path: &Path, norm: &NormArgs) -> Result<Outcome, CliError> {
    let value: Value = read_json(path)?;
    let parse = |v: Value| {
        serde_json::from_value::<WitnessFamily>(v)
            .map_err(|e| CliError::new(EXIT_CONFIG, "parse", format!("{}: {e}", path.display())))
    };
    let (witness, stored_norm, reported) = match value.get("witness") {
        Some(w) => (
            parse(w.clone())?,
            value.get("norm").cloned(),
            value.get("value").and_then(Value::as_f64),
        ),
        None => (parse(value)?, None, None),
    };
    let spec = match stored_norm {
        Some(n) if norm.is_empty() => serde_json::from_value::<NormSpec>(n)
            .map_err(|e| CliError::new(EXIT_CONFIG, "parse", e.to_string()))?,
        _ => norm.build(Some(witness.dim()))?,
    };
    let r = ratio(&witness, &spec)?;
    let report = json!({
        "p": witness.prime().get(),
        "N": witness.level(),
        "dim": witness.dim(),
        "fingerprint": witness.fingerprint(),
        "norm": spec,
        "ratio": r,
        "q_functional": q_functional(&witness, &spec)?,
        "q_functional_via_fourier": q_functional_via_fourier(&witness, &spec)?,
        "sum_sq": witness.norm_sq_sum(&spec)?,
        "reported_value": reported,
        "difference": reported.map(|v| (v - r).abs()),
    });
    Ok(Outcome::ok(to_pretty(&report)?))
}

/// Parameter grid for [`sweep`].
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub p: Prime,
    pub levels: Vec<u32>,
    pub exponents: Vec<String>,
    pub dims: Vec<usize>,
    pub direction: Bound,
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: u32,
    #[serde(rename = "N")]
    pub n: u32,
    pub q: String,
    pub d: usize,
    pub direction: Bound,
    pub certified_constant: Option<f64>,
    pub witness_hash: Option<String>,
    /// `ok`, or the error kind for a failed grid point.
    pub status: String,
    pub wall_time_s: f64,
}

/// One estimate per `(N, q, d)`, in that nesting order. Failed points keep their row.
pub fn sweep(grid: &SweepGrid) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &n in &grid.levels {
        for q in &grid.exponents {
            for &d in &grid.dims {
                let start = Instant::now();
                let result = parse_exponent(q)
                    .and_then(|qv| NormSpec::lq(d, qv))
                    .and_then(|norm| {
                        let cfg = EstimateConfig::new(grid.p, n, norm, grid.direction)
                            .budget(grid.restarts, grid.iterations)
                            .seed(grid.seed);
                        estimate_constant(&cfg)
                    });
                let (constant, hash, status) = match result {
                    Ok(e) => (
                        Some(e.certified_constant),
                        Some(e.witness.fingerprint()),
                        "ok".into(),
                    ),
                    Err(e) => (None, None, CliError::from(e).kind),
                };
                rows.push(SweepRow {
                    p: grid.p.get(),
                    n,
                    q: q.trim().to_string(),
                    d,
                    direction: grid.direction,
                    certified_constant: constant,
                    witness_hash: hash,
                    status,
                    wall_time_s: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    rows
}

/// Header plus one LF-terminated line per row.
pub fn rows_to_csv(rows: &[SweepRow], timing: bool) -> String {
    let mut out = String::from("p,N,q,d,direction,certified_constant,witness_hash,status");
    if timing {
        out.push_str(",wall_time_s");
    }
    out.push('\n');
    for r in rows {
        let direction = match r.direction {
            Bound::Upper => "upper",
            Bound::Lower => "lower",
        };
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.p,
            r.n,
            r.q,
            r.d,
            direction,
            r.certified_constant
                .map(|c| c.to_string())
                .unwrap_or_default(),
            r.witness_hash.as_deref().unwrap_or(""),
            r.status
        );
        if timing {
            let _ = write!(out, ",{:.3}", r.wall_time_s);
        }
        out.push('\n');
    }
    out
}
