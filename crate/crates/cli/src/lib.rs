//! Front-end for the adversary experiments: verification suites, lemma
//! tables, single-instance bounds and n-scaling scans.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ed_adversary::analysis::{
    self, adversary_ratio, check_f0_gram, check_f1_gram, check_surrogate_first_gram, check_surrogate_identity,
    oracle_equivalence, GramCheck, GramOptions, RatioOptions, RatioReport,
};
use ed_adversary::builder::{
    best_grid_alpha_profile, default_alpha_profile, restrict_to_legal, stack_gamma_prime, AlphaProfile, Limits,
};
use ed_adversary::lemma::{lemma_table, LemmaSummary, EXHAUSTIVE_LIMIT};
use ed_adversary::{Error, InstanceParams, LanczosOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_HARD_ERROR: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::InvalidParameter(_)) => EXIT_USAGE,
            _ => EXIT_HARD_ERROR,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// How the alphabet size follows `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QMode {
    N2,
    TwoN2,
    Fixed(usize),
}

impl QMode {
    pub fn q_for(self, n: usize) -> usize {
        match self {
            QMode::N2 => n * n,
            QMode::TwoN2 => 2 * n * n,
            QMode::Fixed(q) => q,
        }
    }
}

impl std::str::FromStr for QMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n2" => Ok(QMode::N2),
            "2n2" => Ok(QMode::TwoN2),
            _ => {
                let q = s
                    .strip_prefix("fixed:")
                    .ok_or_else(|| format!("expected n2, 2n2 or fixed:<q>, got {s:?}"))?;
                q.parse()
                    .map(QMode::Fixed)
                    .map_err(|e| format!("bad alphabet size {q:?}: {e}"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlphaMode {
    Auto,
    Grid,
    File(PathBuf),
}

impl AlphaMode {
    pub fn profile(&self, n: usize) -> CliResult<AlphaProfile> {
        Ok(match self {
            AlphaMode::Auto => default_alpha_profile(n)?,
            AlphaMode::Grid => best_grid_alpha_profile(n)?,
            AlphaMode::File(path) => {
                let text = std::fs::read_to_string(path)?;
                AlphaProfile::parse(&text, format!("file:{}", path.display()))?
            }
        })
    }
}

impl std::str::FromStr for AlphaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(AlphaMode::Auto),
            "grid" => Ok(AlphaMode::Grid),
            _ => s
                .strip_prefix("file:")
                .filter(|p| !p.is_empty())
                .map(|p| AlphaMode::File(p.into()))
                .ok_or_else(|| format!("expected auto, grid or file:<path>, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "ed-adversary", version, about = "Adversary matrices for element distinctness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the closed-form Gram spectra and operator identities at one size.
    Verify(InstanceArgs),
    /// Tabulate g(k, l, q) and compare with exhaustive sums.
    Lemma(LemmaArgs),
    /// Compute the adversary ratio for one instance.
    Bound(InstanceArgs),
    /// Compute the adversary ratio over a range of n.
    Scan(ScanArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Alphabet size: n2, 2n2 or fixed:<q>
    #[arg(long, default_value = "n2")]
    pub q_mode: QMode,
    /// Coefficient profile: auto, grid or file:<path>
    #[arg(long, default_value = "auto")]
    pub alpha: AlphaMode,
    /// Relative Gram residual for the Lanczos solver
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Maximum entries of a dense matrix
    #[arg(long, default_value_t = 40_000_000)]
    pub dense_limit: usize,
    /// Maximum length of an iteration vector
    #[arg(long, default_value_t = 1 << 28)]
    pub vec_limit: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub n_min: usize,
    #[arg(long)]
    pub n_max: usize,
    /// Fill runtime_ms (makes output run-dependent)
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LemmaArgs {
    #[arg(long, default_value_t = 4)]
    pub max_k: usize,
    #[arg(long, default_value_t = 7)]
    pub max_q: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Validated settings shared by the numeric commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub q_mode: QMode,
    pub alpha: AlphaMode,
    pub tol: f64,
    pub limits: Limits,
    pub seed: u64,
    pub format: Format,
}

impl RunConfig {
    pub fn from_args(args: &CommonArgs, default_format: Format) -> CliResult<Self> {
        if !(args.tol > 0.0 && args.tol < 1.0) {
            return Err(CliError::Usage(format!("--tol must lie in (0, 1), got {}", args.tol)));
        }
        if let QMode::Fixed(q) = args.q_mode {
            if q < 2 {
                return Err(CliError::Usage(format!("alphabet size must be at least 2, got {q}")));
            }
        }
        Ok(Self {
            q_mode: args.q_mode,
            alpha: args.alpha.clone(),
            tol: args.tol,
            limits: Limits {
                dense_entries: args.dense_limit,
                vector_len: args.vec_limit,
                ..Limits::default()
            },
            seed: args.seed,
            format: args.format.unwrap_or(default_format),
        })
    }

    pub fn lanczos(&self) -> LanczosOptions {
        LanczosOptions {
            tol: self.tol,
            seed: self.seed,
            ..LanczosOptions::default()
        }
    }

    pub fn ratio_options(&self) -> RatioOptions {
        RatioOptions {
            lanczos: self.lanczos(),
            limits: self.limits,
            ..RatioOptions::default()
        }
    }
}

fn check_n(n: usize) -> CliResult<()> {
    if n < 2 {
        return Err(CliError::Usage(format!("n must be at least 2, got {n}")));
    }
    Ok(())
}

/// Fixed-width rendering with 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // the exponent after rounding, so a carry into a new digit is accounted for
    let sci = format!("{x:.11e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if !(-6..12).contains(&exp) {
        return sci;
    }
    format!("{:.*}", (11 - exp) as usize, x)
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    pub k: Option<usize>,
    pub predicted: Option<f64>,
    pub measured: Option<f64>,
    pub deviation: Option<f64>,
    pub tolerance: Option<f64>,
    pub status: CheckStatus,
    pub reason: Option<String>,
}

impl VerifyCheck {
    fn skipped(name: &str, k: Option<usize>, reason: String) -> Self {
        Self {
            name: name.into(),
            k,
            predicted: None,
            measured: None,
            deviation: None,
            tolerance: None,
            status: CheckStatus::Skipped,
            reason: Some(reason),
        }
    }

    fn compare(name: &str, k: Option<usize>, predicted: f64, measured: f64, deviation: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            k,
            predicted: Some(predicted),
            measured: Some(measured),
            deviation: Some(deviation),
            tolerance: Some(tol),
            status: if deviation <= tol {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            reason: None,
        }
    }

    fn from_gram(g: GramCheck) -> Self {
        let mut c = Self::compare(&g.name, g.k, g.predicted, g.measured, g.deviation, g.tolerance);
        c.reason = Some(format!("{:?}", g.method).to_lowercase());
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub n: usize,
    pub q: usize,
    pub alpha: String,
    pub checks: Vec<VerifyCheck>,
    pub passed: bool,
}

/// Resource guards and empty index spaces skip a check; anything else is a
/// hard error.
fn guarded(name: &str, k: Option<usize>, r: Result<VerifyCheck, Error>) -> CliResult<VerifyCheck> {
    match r {
        Ok(c) => Ok(c),
        Err(e @ (Error::ResourceGuard { .. } | Error::EmptyIndexSet(_))) => Ok(VerifyCheck::skipped(name, k, e.to_string())),
        Err(e) => Err(e.into()),
    }
}

fn guard_square(what: &'static str, dim: usize, limits: &Limits) -> Result<(), Error> {
    let needed = dim as u128 * dim as u128;
    if needed > limits.dense_entries as u128 {
        return Err(Error::ResourceGuard {
            what,
            needed,
            limit: limits.dense_entries as u128,
        });
    }
    Ok(())
}

fn falling(q: usize, len: usize) -> usize {
    if len > q {
        0
    } else {
        (q - len + 1..=q).product()
    }
}

pub fn cmd_verify(n: usize, cfg: &RunConfig) -> CliResult<VerifyReport> {
    check_n(n)?;
    let q = cfg.q_mode.q_for(n);
    let params = InstanceParams::new(n, q)?;
    let alpha = cfg.alpha.profile(n)?;
    let gram_opts = GramOptions {
        lanczos: LanczosOptions {
            tol: cfg.tol.min(1e-11),
            seed: cfg.seed,
            ..LanczosOptions::default()
        },
        limits: cfg.limits,
        ..GramOptions::default()
    };
    let full_cols = params
        .column_dim()
        .filter(|&d| d <= cfg.limits.vector_len)
        .ok_or_else(|| Error::ResourceGuard {
            what: "column dimension q^n",
            needed: (q as u128).pow(n as u32),
            limit: cfg.limits.vector_len as u128,
        })?;
    let mut checks = Vec::new();

    // dimensions of the stacked and legal operators
    let gp = stack_gamma_prime(&params, &alpha, &cfg.limits)?;
    let pairs = params.pair_count();
    let expected_rows = (pairs * q.pow(n as u32 - 1)) as f64;
    checks.push(VerifyCheck::compare(
        "gamma_prime_rows",
        None,
        expected_rows,
        gp.nrows() as f64,
        (gp.nrows() as f64 - expected_rows).abs(),
        0.0,
    ));
    if q < n {
        checks.push(VerifyCheck::skipped(
            "legal_dimensions",
            None,
            format!("q={q} < n={n}: the legal column set is empty"),
        ));
        checks.push(VerifyCheck::skipped(
            "legal_allones_rayleigh",
            None,
            "legal column set is empty".into(),
        ));
    } else {
        let gamma = restrict_to_legal(&gp, &cfg.limits)?;
        let expected = (pairs * falling(q, n - 1)) as f64 * falling(q, n) as f64;
        let got = gamma.nrows() as f64 * gamma.ncols() as f64;
        checks.push(VerifyCheck::compare("legal_dimensions", None, expected, got, (got - expected).abs(), 0.0));
        let w0 = analysis::weight0_lower_bound(n, &alpha);
        let ray = analysis::allones_rayleigh(&gamma)?;
        // one-sided: only a shortfall below the floor counts
        checks.push(VerifyCheck::compare(
            "legal_allones_rayleigh",
            None,
            0.3 * w0,
            ray,
            (0.3 * w0 - ray).max(0.0),
            0.0,
        ));
    }
    let ray_prime = analysis::allones_rayleigh(&gp)?;
    let w0 = analysis::weight0_lower_bound(n, &alpha);
    checks.push(VerifyCheck::compare(
        "allones_rayleigh_weight0",
        None,
        w0,
        ray_prime,
        (ray_prime - w0).abs(),
        1e-10 * w0.max(1.0),
    ));

    // weight projectors resolve the identity
    checks.push(guarded(
        "weight_projector_resolution",
        None,
        guard_square("weight projector entries", full_cols, &cfg.limits).and_then(|_| {
            let mut sum = analysis::dense_weight_projector(n, q, 0)?;
            for k in 1..=n {
                sum = sum.add(&analysis::dense_weight_projector(n, q, k)?);
            }
            let dev = sum.max_abs_diff(&ed_adversary::DenseMatrix::identity(full_cols));
            Ok(VerifyCheck::compare("weight_projector_resolution", None, 1.0, 1.0 - dev, dev, 1e-10))
        }),
    )?);

    for k in 0..n - 1 {
        checks.push(guarded(
            "f0_weight_gram",
            Some(k),
            check_f0_gram(&params, k, &gram_opts).map(VerifyCheck::from_gram),
        )?);
        checks.push(guarded(
            "f1_weight_gram",
            Some(k),
            check_f1_gram(&params, k, &gram_opts).map(VerifyCheck::from_gram),
        )?);
    }
    checks.push(guarded(
        "surrogate_first_gram",
        None,
        guard_square("Gram entries", full_cols, &cfg.limits)
            .and_then(|_| check_surrogate_first_gram(&params, &alpha, &gram_opts))
            .map(VerifyCheck::from_gram),
    )?);
    checks.push(guarded(
        "surrogate_identity",
        None,
        check_surrogate_identity(&params, &alpha, &cfg.limits)
            .map(|d| VerifyCheck::compare("surrogate_identity", None, 0.0, d, d, 1e-12)),
    )?);
    match oracle_equivalence(&params, &alpha, &cfg.limits, &cfg.lanczos()) {
        Ok(found) => {
            for o in found {
                let mut c = VerifyCheck::compare(
                    &format!("oracle_equivalence[{}]", o.kind),
                    None,
                    o.dense,
                    o.krylov.sigma_max,
                    o.relative_error,
                    1e-7,
                );
                if !o.krylov.converged {
                    c.status = CheckStatus::Fail;
                    c.reason = Some("lanczos did not converge".into());
                }
                checks.push(c);
            }
        }
        Err(e @ (Error::ResourceGuard { .. } | Error::EmptyIndexSet(_))) => {
            checks.push(VerifyCheck::skipped("oracle_equivalence", None, e.to_string()))
        }
        Err(e) => return Err(e.into()),
    }

    Ok(VerifyReport {
        n,
        q,
        alpha: alpha.label().to_string(),
        passed: checks.iter().all(|c| c.status != CheckStatus::Fail),
        checks,
    })
}

pub fn render_verify(report: &VerifyReport, format: Format) -> CliResult<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["name", "k", "predicted", "measured", "deviation", "tolerance", "status", "reason"])?;
            let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
            for c in &report.checks {
                w.write_record([
                    c.name.clone(),
                    c.k.map(|k| k.to_string()).unwrap_or_default(),
                    opt(c.predicted),
                    opt(c.measured),
                    opt(c.deviation),
                    opt(c.tolerance),
                    serde_json::to_value(c.status)?.as_str().unwrap_or_default().to_string(),
                    c.reason.clone().unwrap_or_default(),
                ])?;
            }
            Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8 csv"))
        }
    }
}

// ----------------------------------------------------------------- lemma

pub fn cmd_lemma(max_k: usize, max_q: usize) -> CliResult<LemmaSummary> {
    if max_q > 64 {
        return Err(CliError::Usage(format!("--max-q above 64 is not supported, got {max_q}")));
    }
    Ok(lemma_table(max_k, max_q, EXHAUSTIVE_LIMIT)?)
}

pub fn render_lemma(summary: &LemmaSummary, format: Format) -> CliResult<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(summary)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["k", "l", "q", "g", "non_negative", "brute", "agrees"])?;
            for r in &summary.rows {
                w.write_record([
                    r.k.to_string(),
                    r.l.to_string(),
                    r.q.to_string(),
                    r.g.clone(),
                    r.non_negative.to_string(),
                    r.brute.clone().unwrap_or_default(),
                    r.agrees.map(|a| a.to_string()).unwrap_or_default(),
                ])?;
            }
            let mut out = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8 csv");
            let _ = writeln!(
                out,
                "# verdict: {}",
                if summary.passed() { "PASS" } else { "FAIL" }
            );
            Ok(out)
        }
    }
}

// ------------------------------------------------------------ bound/scan

/// One point of an n-scan. Skipped points carry only `n`, `q` and a reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: usize,
    pub q: usize,
    pub alpha0: Option<f64>,
    pub r: Option<f64>,
    pub norm_gamma_prime: Option<f64>,
    pub norm_gamma: Option<f64>,
    pub norm_gamma_delta1: Option<f64>,
    pub surrogate_norm: Option<f64>,
    pub allones_rayleigh: Option<f64>,
    pub ratio: Option<f64>,
    pub ratio_over_n23: Option<f64>,
    pub converged: Option<bool>,
    pub runtime_ms: Option<u64>,
    pub skipped_reason: Option<String>,
}

pub const SCAN_COLUMNS: [&str; 14] = [
    "n",
    "q",
    "alpha0",
    "r",
    "norm_gamma_prime",
    "norm_gamma",
    "norm_gamma_delta1",
    "surrogate_norm",
    "allones_rayleigh",
    "ratio",
    "ratio_over_n23",
    "converged",
    "runtime_ms",
    "skipped_reason",
];

impl ScanRow {
    pub fn from_report(r: &RatioReport, runtime_ms: Option<u64>) -> Self {
        Self {
            n: r.n,
            q: r.q,
            alpha0: Some(r.alpha0),
            r: Some(r.r),
            norm_gamma_prime: Some(r.norm_gamma_prime),
            norm_gamma: Some(r.norm_gamma),
            norm_gamma_delta1: Some(r.norm_gamma_masked),
            surrogate_norm: Some(r.surrogate_norm),
            allones_rayleigh: Some(r.allones_rayleigh),
            ratio: Some(r.ratio),
            ratio_over_n23: Some(r.ratio_over_n23),
            converged: Some(r.converged),
            runtime_ms,
            skipped_reason: None,
        }
    }

    pub fn skipped(n: usize, q: usize, reason: String) -> Self {
        Self {
            n,
            q,
            alpha0: None,
            r: None,
            norm_gamma_prime: None,
            norm_gamma: None,
            norm_gamma_delta1: None,
            surrogate_norm: None,
            allones_rayleigh: None,
            ratio: None,
            ratio_over_n23: None,
            converged: None,
            runtime_ms: None,
            skipped_reason: Some(reason),
        }
    }

    fn record(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
        vec![
            self.n.to_string(),
            self.q.to_string(),
            f(self.alpha0),
            f(self.r),
            f(self.norm_gamma_prime),
            f(self.norm_gamma),
            f(self.norm_gamma_delta1),
            f(self.surrogate_norm),
            f(self.allones_rayleigh),
            f(self.ratio),
            f(self.ratio_over_n23),
            self.converged.map(|c| c.to_string()).unwrap_or_default(),
            self.runtime_ms.map(|t| t.to_string()).unwrap_or_default(),
            self.skipped_reason.clone().unwrap_or_default(),
        ]
    }
}

pub fn scan_rows_to_csv(rows: &[ScanRow]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCAN_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8 csv"))
}

pub fn scan_rows_from_csv(text: &str) -> CliResult<Vec<ScanRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SCAN_COLUMNS {
        return Err(CliError::Usage(format!("unexpected scan header {header:?}")));
    }
    Ok(rdr.deserialize().collect::<Result<Vec<ScanRow>, _>>()?)
}

pub fn scan_rows_to_json(rows: &[ScanRow]) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(rows)? + "\n")
}

pub fn cmd_bound(n: usize, cfg: &RunConfig) -> CliResult<RatioReport> {
    check_n(n)?;
    let params = InstanceParams::new(n, cfg.q_mode.q_for(n))?;
    let alpha = cfg.alpha.profile(n)?;
    Ok(adversary_ratio(&params, &alpha, &cfg.ratio_options())?)
}

pub fn render_bound(report: &RatioReport, format: Format) -> CliResult<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        Format::Csv => scan_rows_to_csv(&[ScanRow::from_report(report, None)]),
    }
}

/// Rows of a scan plus the `n` values whose sanity chain failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    pub sanity_failures: Vec<usize>,
}

pub fn cmd_scan(n_min: usize, n_max: usize, timing: bool, cfg: &RunConfig) -> CliResult<ScanReport> {
    check_n(n_min)?;
    if n_max < n_min {
        return Err(CliError::Usage(format!("--n-max {n_max} is below --n-min {n_min}")));
    }
    let mut rows = Vec::new();
    let mut sanity_failures = Vec::new();
    for n in n_min..=n_max {
        let q = cfg.q_mode.q_for(n);
        let start = Instant::now();
        match cmd_bound(n, cfg) {
            Ok(report) => {
                let ms = timing.then(|| start.elapsed().as_millis() as u64);
                if !report.sanity.all() {
                    sanity_failures.push(n);
                }
                rows.push(ScanRow::from_report(&report, ms));
            }
            Err(CliError::Core(e @ (Error::ResourceGuard { .. } | Error::EmptyIndexSet(_)))) => {
                rows.push(ScanRow::skipped(n, q, e.to_string()))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ScanReport { rows, sanity_failures })
}

// ------------------------------------------------------------------ main

/// Text to emit and the process exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub out_path: Option<PathBuf>,
    pub exit: i32,
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Verify(a) => {
            let cfg = RunConfig::from_args(&a.common, Format::Json)?;
            let report = cmd_verify(a.n, &cfg)?;
            Ok(Outcome {
                output: render_verify(&report, cfg.format)?,
                out_path: a.common.out,
                exit: if report.passed { EXIT_OK } else { EXIT_CHECK_FAILED },
            })
        }
        Command::Lemma(a) => {
            let summary = cmd_lemma(a.max_k, a.max_q)?;
            Ok(Outcome {
                output: render_lemma(&summary, a.format.unwrap_or(Format::Csv))?,
                out_path: a.out,
                exit: if summary.passed() { EXIT_OK } else { EXIT_CHECK_FAILED },
            })
        }
        Command::Bound(a) => {
            let cfg = RunConfig::from_args(&a.common, Format::Json)?;
            let report = cmd_bound(a.n, &cfg)?;
            // non-convergence is reported in the output, not in the status
            Ok(Outcome {
                output: render_bound(&report, cfg.format)?,
                out_path: a.common.out,
                exit: if report.sanity.all() { EXIT_OK } else { EXIT_CHECK_FAILED },
            })
        }
        Command::Scan(a) => {
            let cfg = RunConfig::from_args(&a.common, Format::Csv)?;
            let scan = cmd_scan(a.n_min, a.n_max, a.timing, &cfg)?;
            let output = match cfg.format {
                Format::Csv => scan_rows_to_csv(&scan.rows)?,
                Format::Json => scan_rows_to_json(&scan.rows)?,
            };
            Ok(Outcome {
                output,
                out_path: a.common.out,
                exit: if scan.sanity_failures.is_empty() { EXIT_OK } else { EXIT_CHECK_FAILED },
            })
        }
    }
}
