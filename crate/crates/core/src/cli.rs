//! `shflbw` command-line front end.
//!
//! Exit codes: 0 success, 1 numeric mismatch under `--check`, 2 usage or
//! parameter error. Commands that write files also write
//! `<OUT>.manifest.json` recording inputs, parameters, seed and output
//! digests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{
    flexibility_log_gain, intensity_report, max_reuse_bruteforce, max_reuse_closed_form,
    required_reuse, HardwareModel,
};
use crate::error::Error;
use crate::formats::{
    compress_blockwise, compress_shflbw, compress_vectorwise, read_container, to_bytes,
    validate_pattern, DenseMatrix, Matrix, Pattern, PatternKind, ShflBWMatrix, SparsityMask,
    ToDense,
};
use crate::pruning::{
    importance_scores, kept_score, prune_balanced, prune_blockwise, prune_shflbw,
    prune_unstructured, prune_vectorwise, PruneConfig,
};
use crate::spmm::{
    conv2d, conv2d_direct, pipeline_simulate, relative_frobenius_error, spmm_dense_oracle,
    spmm_execute, ConvGeometry, IterationOrder, Tensor4, TileConfig,
};

/// Relative Frobenius error allowed by `--check`.
pub const CHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "shflbw", version, about = "Shuffled block-wise sparsity toolkit")]
pub struct Cli {
    /// Emit JSON on stdout instead of a table.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads for tile-parallel work (0 = all cores).
    #[arg(long, global = true, env = "SHFLBW_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded random dense or shuffled block-wise matrix.
    Gen(GenArgs),
    /// Prune dense weights into a sparsity mask.
    Prune(PruneArgs),
    /// Compress weights under a mask into a sparse format.
    Compress(CompressArgs),
    /// Check a mask against a sparsity pattern.
    Validate(ValidateArgs),
    /// Sparse x dense product through the tiled executor.
    Spmm(SpmmArgs),
    /// Implicit-GEMM convolution with sparse weights.
    Conv(ConvArgs),
    /// Analytical models.
    Analyze(AnalyzeArgs),
    /// Simulate the metadata-prefetch pipeline.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternArg {
    Unstructured,
    Vw,
    Bw,
    Shflbw,
    Balanced,
}

impl From<PatternArg> for PatternKind {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Unstructured => PatternKind::Unstructured,
            PatternArg::Vw => PatternKind::VectorWise,
            PatternArg::Bw => PatternKind::BlockWise,
            PatternArg::Shflbw => PatternKind::ShflBw,
            PatternArg::Balanced => PatternKind::Balanced,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    /// Group size; with --alpha, emit a random shuffled block-wise matrix.
    #[arg(long = "V")]
    pub v: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Values are drawn uniformly from [-scale, scale).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f32,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PruneArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum)]
    pub pattern: PatternArg,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "V")]
    pub v: Option<usize>,
    /// n,m for balanced pruning.
    #[arg(long)]
    pub nm: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    pub beta_factor: f64,
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseFormat {
    Shflbw,
    Vw,
    Bw,
}

#[derive(Debug, Args, Serialize)]
pub struct CompressArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long = "V")]
    pub v: usize,
    #[arg(long, value_enum, default_value_t = SparseFormat::Shflbw)]
    pub format: SparseFormat,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, value_enum)]
    pub pattern: PatternArg,
    #[arg(long = "V")]
    pub v: Option<usize>,
    #[arg(long)]
    pub nm: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SpmmArgs {
    #[arg(long)]
    pub sparse: PathBuf,
    #[arg(long)]
    pub dense: PathBuf,
    /// TM,TN,TK
    #[arg(long)]
    pub tile: Option<String>,
    /// Compare against the dense oracle; exit 1 above the tolerance.
    #[arg(long)]
    pub check: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ConvArgs {
    /// Shuffled block-wise weights, K_f x (C*R*S).
    #[arg(long)]
    pub weights: PathBuf,
    /// Dense input, C x (H*W*N), batch innermost.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    /// R,S
    #[arg(long, default_value = "3,3")]
    pub kernel: String,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub pad: usize,
    #[arg(long)]
    pub tile: Option<String>,
    #[arg(long)]
    pub check: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyzeMode {
    Intensity,
    Flexibility,
    RequiredReuse,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub mode: AnalyzeMode,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long = "V")]
    pub v: Option<usize>,
    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Overrides the profile's register-file size.
    #[arg(long)]
    pub regfile: Option<usize>,
    /// Bundled profile name or path to a JSON profile.
    #[arg(long, default_value = "reference-A100-like")]
    pub profile: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderArg {
    LoadThenCompute,
    ComputeThenLoad,
}

impl From<OrderArg> for IterationOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::LoadThenCompute => IterationOrder::LoadThenCompute,
            OrderArg::ComputeThenLoad => IterationOrder::ComputeThenLoad,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub total_steps: usize,
    #[arg(long, default_value_t = 2)]
    pub pipe_stage: usize,
    #[arg(long, default_value_t = 4)]
    pub meta_prefetch: usize,
    #[arg(long, value_enum, default_value_t = OrderArg::LoadThenCompute)]
    pub order: OrderArg,
    /// Distance between load and compute steps (default: pipe stage + 1).
    #[arg(long)]
    pub lead: Option<usize>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::usage(e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_file(path: &Path) -> CliResult<FileDigest> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn manifest_path(output: &Path) -> PathBuf {
    with_suffix(output, ".manifest.json")
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    with_suffix(output, ".json")
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn write_matrix(path: &Path, m: &Matrix) -> CliResult {
    write_file(path, &to_bytes(m)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_manifest(
    command: &str,
    seed: u64,
    params: &impl Serialize,
    inputs: &[&Path],
    outputs: &[&Path],
) -> CliResult {
    let manifest = RunManifest {
        command: command.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        params: serde_json::to_value(params).map_err(Error::from)?,
        inputs: inputs.iter().map(|p| digest_file(p)).collect::<CliResult<_>>()?,
        outputs: outputs.iter().map(|p| digest_file(p)).collect::<CliResult<_>>()?,
    };
    write_json(&manifest_path(outputs[0]), &manifest)
}

fn read(path: &Path) -> CliResult<Matrix> {
    read_container(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_dense(path: &Path) -> CliResult<DenseMatrix> {
    match read(path)? {
        Matrix::Dense(d) => Ok(d),
        other => Err(CliError::usage(format!(
            "{}: expected a dense matrix, found {}",
            path.display(),
            other.kind_name()
        ))),
    }
}

fn read_mask(path: &Path) -> CliResult<SparsityMask> {
    match read(path)? {
        Matrix::Mask(m) => Ok(m),
        other => Err(CliError::usage(format!(
            "{}: expected a mask, found {}",
            path.display(),
            other.kind_name()
        ))),
    }
}

fn read_shflbw(path: &Path) -> CliResult<ShflBWMatrix> {
    match read(path)? {
        Matrix::ShflBw(s) => Ok(s),
        Matrix::VectorWise(vw) => Ok(ShflBWMatrix::from_vector_wise(vw)),
        other => Err(CliError::usage(format!(
            "{}: expected a shfl-bw or vector-wise matrix, found {}",
            path.display(),
            other.kind_name()
        ))),
    }
}

fn parse_list<const N: usize>(s: &str, what: &str) -> CliResult<[usize; N]> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| CliError::usage(format!("{what}: expected {N} comma-separated integers")))?;
    parts
        .try_into()
        .map_err(|_| CliError::usage(format!("{what}: expected {N} comma-separated integers")))
}

fn tile_config(tile: Option<&str>) -> CliResult<TileConfig> {
    let cfg = match tile {
        Some(t) => {
            let [tm, tn, tk] = parse_list::<3>(t, "--tile")?;
            TileConfig::with_tiles(tm, tn, tk)
        }
        None => TileConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn required<T: Copy>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::usage(format!("{flag} is required here")))
}

/// Text printed on success: a table, or JSON with `--json`.
fn render(json: bool, value: &serde_json::Value) -> String {
    if json {
        return serde_json::to_string_pretty(value).unwrap_or_default();
    }
    let mut out = String::new();
    if let Some(map) = value.as_object() {
        let width = map.keys().map(String::len).max().unwrap_or(0);
        for (k, v) in map {
            let shown = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(out, "{k:<width$}  {shown}");
        }
    }
    out.trim_end().to_string()
}

pub fn run(cli: &Cli) -> CliResult<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> CliResult<String> {
    let report = match &cli.command {
        Command::Gen(a) => cmd_gen(a, cli.seed)?,
        Command::Prune(a) => cmd_prune(a, cli.seed)?,
        Command::Compress(a) => cmd_compress(a, cli.seed)?,
        Command::Validate(a) => cmd_validate(a)?,
        Command::Spmm(a) => cmd_spmm(a, cli.seed)?,
        Command::Conv(a) => cmd_conv(a, cli.seed)?,
        Command::Analyze(a) => cmd_analyze(a)?,
        Command::Simulate(a) => cmd_simulate(a)?,
    };
    let text = render(cli.json, &report.value);
    match report.failure {
        Some(code) => Err(CliError { code, message: text }),
        None => Ok(text),
    }
}

struct Report {
    value: serde_json::Value,
    /// Exit code for a completed run that failed its check.
    failure: Option<u8>,
}

impl From<serde_json::Value> for Report {
    fn from(value: serde_json::Value) -> Self {
        Self {
            value,
            failure: None,
        }
    }
}

fn cmd_gen(a: &GenArgs, seed: u64) -> CliResult<Report> {
    if !(a.scale.is_finite() && a.scale > 0.0) {
        return Err(CliError::usage("--scale must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f32> = (0..a.rows * a.cols)
        .map(|_| rng.gen_range(-a.scale..a.scale))
        .collect();
    let dense = DenseMatrix::new(a.rows, a.cols, values)?;
    let matrix = match (a.v, a.alpha) {
        (None, None) => Matrix::Dense(dense),
        (Some(v), Some(alpha)) => {
            Matrix::ShflBw(random_shflbw(&dense, v, alpha, &mut rng)?)
        }
        _ => return Err(CliError::usage("--V and --alpha must be given together")),
    };
    write_matrix(&a.output, &matrix)?;
    write_manifest("gen", seed, a, &[], &[&a.output])?;
    Ok(json!({
        "output": a.output.display().to_string(),
        "kind": matrix.kind_name(),
        "rows": a.rows,
        "cols": a.cols,
    })
    .into())
}

/// Masks `dense` with a random conformant pattern: rows shuffled into groups
/// of `v`, each group keeping `round(alpha * K)` random columns.
pub fn random_shflbw(
    dense: &DenseMatrix,
    v: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> crate::Result<ShflBWMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::BadParams(format!("alpha={alpha} must lie in [0, 1]")));
    }
    if v == 0 || !dense.rows().is_multiple_of(v) {
        return Err(Error::BadParams(format!(
            "V={v} must divide {} rows",
            dense.rows()
        )));
    }
    let k = dense.cols();
    let keep = ((alpha * k as f64).round() as usize).min(k);
    let mut rows: Vec<usize> = (0..dense.rows()).collect();
    rows.shuffle(rng);
    let mut mask = SparsityMask::zeros(dense.rows(), k);
    for group in rows.chunks(v) {
        for c in index::sample(rng, k, keep) {
            for &r in group {
                mask.set(r, c, true);
            }
        }
    }
    compress_shflbw(dense, &mask, v)
}

fn cmd_prune(a: &PruneArgs, seed: u64) -> CliResult<Report> {
    let weights = read_dense(&a.weights)?;
    let scores = importance_scores(&weights);
    let alpha = |a: &PruneArgs| required(a.alpha, "--alpha");
    let mut sidecar = json!({ "seed": seed });
    let (mask, permutation) = match a.pattern {
        PatternArg::Unstructured => (prune_unstructured(&scores, alpha(a)?)?, None),
        PatternArg::Vw => (prune_vectorwise(&scores, required(a.v, "--V")?, alpha(a)?)?, None),
        PatternArg::Bw => (prune_blockwise(&scores, required(a.v, "--V")?, alpha(a)?)?, None),
        PatternArg::Balanced => {
            let [n, m] = parse_list::<2>(
                a.nm.as_deref().ok_or_else(|| CliError::usage("--nm is required here"))?,
                "--nm",
            )?;
            (prune_balanced(&scores, n, m)?, None)
        }
        PatternArg::Shflbw => {
            let cfg = PruneConfig {
                alpha: alpha(a)?,
                beta_factor: a.beta_factor,
                v: required(a.v, "--V")?,
                kmeans_max_iters: a.max_iters,
                seed,
                restarts: a.restarts,
            };
            let res = prune_shflbw(&scores, &cfg)?;
            sidecar["beta"] = json!(res.beta);
            (res.mask, Some(res.permutation))
        }
    };
    let kept = kept_score(&scores, &mask)?;
    let permutation = permutation.unwrap_or_else(|| (0..mask.rows()).collect());
    sidecar["pattern"] = json!(PatternKind::from(a.pattern).to_string());
    sidecar["alpha"] = json!(a.alpha);
    sidecar["V"] = json!(a.v);
    sidecar["kept_score"] = json!(kept);
    sidecar["permutation"] = json!(permutation);

    write_matrix(&a.output, &Matrix::Mask(mask.clone()))?;
    let side = sidecar_path(&a.output);
    write_json(&side, &sidecar)?;
    write_manifest("prune", seed, a, &[&a.weights], &[&a.output, &side])?;
    Ok(json!({
        "output": a.output.display().to_string(),
        "pattern": PatternKind::from(a.pattern).to_string(),
        "kept_score": kept,
        "total_score": scores.total(),
        "density": mask.density(),
    })
    .into())
}

fn cmd_compress(a: &CompressArgs, seed: u64) -> CliResult<Report> {
    let weights = read_dense(&a.weights)?;
    let mask = read_mask(&a.mask)?;
    let matrix = match a.format {
        SparseFormat::Shflbw => Matrix::ShflBw(compress_shflbw(&weights, &mask, a.v)?),
        SparseFormat::Vw => Matrix::VectorWise(compress_vectorwise(&weights, &mask, a.v)?),
        SparseFormat::Bw => Matrix::BlockWise(compress_blockwise(&weights, &mask, a.v)?),
    };
    write_matrix(&a.output, &matrix)?;
    write_manifest("compress", seed, a, &[&a.weights, &a.mask], &[&a.output])?;
    Ok(json!({
        "output": a.output.display().to_string(),
        "kind": matrix.kind_name(),
        "kept": mask.popcount(),
    })
    .into())
}

fn cmd_validate(a: &ValidateArgs) -> CliResult<Report> {
    let mask = read_mask(&a.mask)?;
    let pattern = match a.pattern {
        PatternArg::Unstructured => Pattern::Unstructured,
        PatternArg::Vw => Pattern::VectorWise { v: required(a.v, "--V")? },
        PatternArg::Bw => Pattern::BlockWise { v: required(a.v, "--V")? },
        PatternArg::Shflbw => Pattern::ShflBw { v: required(a.v, "--V")? },
        PatternArg::Balanced => {
            let [n, m] = parse_list::<2>(
                a.nm.as_deref().ok_or_else(|| CliError::usage("--nm is required here"))?,
                "--nm",
            )?;
            Pattern::Balanced { n, m }
        }
    };
    let rep = validate_pattern(&mask, pattern)?;
    let passed = rep.passed;
    Ok(Report {
        value: json!({
            "pattern": pattern.to_string(),
            "passed": passed,
            "counterexample": rep.counterexample,
        }),
        failure: (!passed).then_some(1),
    })
}

fn check_report(value: &mut serde_json::Value, err: f64) -> Option<u8> {
    value["max_relative_error"] = json!(err);
    value["tolerance"] = json!(CHECK_TOLERANCE);
    let pass = err <= CHECK_TOLERANCE;
    value["check"] = json!(if pass { "pass" } else { "fail" });
    (!pass).then_some(1)
}

fn cmd_spmm(a: &SpmmArgs, seed: u64) -> CliResult<Report> {
    let sparse = read_shflbw(&a.sparse)?;
    let dense = read_dense(&a.dense)?;
    let cfg = tile_config(a.tile.as_deref())?;
    let c = spmm_execute(&sparse, &dense, &cfg)?;
    write_matrix(&a.output, &Matrix::Dense(c.clone()))?;
    write_manifest("spmm", seed, a, &[&a.sparse, &a.dense], &[&a.output])?;
    let mut value = json!({
        "output": a.output.display().to_string(),
        "rows": c.rows(),
        "cols": c.cols(),
    });
    let mut failure = None;
    if a.check {
        let want = spmm_dense_oracle(&sparse.to_dense(), &dense)?;
        failure = check_report(&mut value, relative_frobenius_error(c.values(), want.values()));
    }
    Ok(Report { value, failure })
}

fn cmd_conv(a: &ConvArgs, seed: u64) -> CliResult<Report> {
    let weights = read_shflbw(&a.weights)?;
    let input = read_dense(&a.input)?;
    let [kh, kw] = parse_list::<2>(&a.kernel, "--kernel")?;
    let plane = a.height * a.width;
    if plane == 0 || input.cols() % plane != 0 {
        return Err(CliError::usage(format!(
            "input has {} columns, not a multiple of H*W = {plane}",
            input.cols()
        )));
    }
    let dims = [input.rows(), a.height, a.width, input.cols() / plane];
    let tensor = Tensor4::from_matrix(input, dims)?;
    let geom = ConvGeometry {
        kernel_h: kh,
        kernel_w: kw,
        stride: a.stride,
        pad: a.pad,
    };
    let cfg = tile_config(a.tile.as_deref())?;
    let out = conv2d(&weights, &tensor, &geom, &cfg)?;
    write_matrix(&a.output, &Matrix::Dense(out.to_matrix()))?;
    write_manifest("conv", seed, a, &[&a.weights, &a.input], &[&a.output])?;
    let [k, p, q, n] = out.dims();
    let mut value = json!({
        "output": a.output.display().to_string(),
        "shape": [k, p, q, n],
    });
    let mut failure = None;
    if a.check {
        let want = conv2d_direct(&weights.to_dense(), &tensor, &geom)?;
        failure = check_report(&mut value, relative_frobenius_error(out.data(), want.data()));
    }
    Ok(Report { value, failure })
}

fn load_profile(name: &str) -> CliResult<HardwareModel> {
    match HardwareModel::bundled(name) {
        Some(hw) => Ok(hw),
        None => Ok(HardwareModel::from_json_file(name)?),
    }
}

fn cmd_analyze(a: &AnalyzeArgs) -> CliResult<Report> {
    let value = match a.mode {
        AnalyzeMode::Flexibility => {
            let (m, v) = (required(a.m, "--M")?, required(a.v, "--V")?);
            let gain = flexibility_log_gain(m, v)?;
            json!({ "M": m, "V": v, "log_gain": gain, "exceeds_e700": gain > 700.0 })
        }
        AnalyzeMode::Intensity => {
            let mut hw = load_profile(&a.profile)?;
            if let Some(r) = a.regfile {
                hw.regfile_size = r;
            }
            let pattern = required(a.pattern, "--pattern")?;
            let alpha = a.alpha.unwrap_or(1.0);
            let rep = intensity_report(pattern.into(), alpha, a.v.unwrap_or(0), &hw)?;
            let mut value = serde_json::to_value(&rep).map_err(Error::from)?;
            if !PatternKind::from(pattern).is_tiled_dense() {
                let brute = max_reuse_bruteforce(alpha, hw.regfile_size)?;
                value["closed_form"] = json!(max_reuse_closed_form(alpha, hw.regfile_size)?);
                value["bruteforce"] = json!(brute);
            }
            value["profile"] = json!(hw.name);
            value
        }
        AnalyzeMode::RequiredReuse => {
            let hw = load_profile(&a.profile)?;
            json!({
                "profile": hw.name,
                "macs_per_loaded_value": required_reuse(&hw)?,
                "note": "bundled profiles are calibrated approximations, not vendor data",
            })
        }
    };
    Ok(value.into())
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<Report> {
    let cfg = TileConfig {
        pipe_stage: a.pipe_stage,
        meta_prefetch_stage: a.meta_prefetch,
        ..TileConfig::default()
    };
    let lead = a.lead.unwrap_or(a.pipe_stage + 1);
    let trace = pipeline_simulate(a.total_steps, &cfg, a.order.into(), lead)?;
    let mut value = serde_json::to_value(&trace).map_err(Error::from)?;
    value["hazard_free"] = json!(trace.is_hazard_free());
    Ok(value.into())
}

/// Entry point shared by the binary: parses, runs, prints and maps exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if e.code == 1 {
                println!("{}", e.message);
            } else {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists() {
        assert_eq!(parse_list::<3>("64, 32,16", "t").unwrap(), [64, 32, 16]);
        assert!(parse_list::<2>("1,2,3", "t").is_err());
        assert!(parse_list::<2>("a,b", "t").is_err());
    }

    #[test]
    fn suffixed_paths() {
        let p = Path::new("out/mask.smx");
        assert_eq!(manifest_path(p), Path::new("out/mask.smx.manifest.json"));
        assert_eq!(sidecar_path(p), Path::new("out/mask.smx.json"));
    }

    #[test]
    fn random_shflbw_is_conformant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = DenseMatrix::new(8, 6, (0..48).map(|i| i as f32 + 1.0).collect()).unwrap();
        let s = random_shflbw(&d, 2, 0.5, &mut rng).unwrap();
        let support = s.support();
        assert!(validate_pattern(&support, Pattern::ShflBw { v: 2 }).unwrap().passed);
        assert_eq!(support.popcount(), 24);
        assert!(random_shflbw(&d, 3, 0.5, &mut rng).is_err());
    }

    #[test]
    fn table_rendering() {
        let text = render(false, &json!({"a": 1, "long_key": "x"}));
        assert_eq!(text, "a         1\nlong_key  x");
    }
}
