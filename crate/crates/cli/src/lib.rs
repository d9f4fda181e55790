//! Command-line front end for `densekit-core`.
//!
//! [`run`] is the whole program; `main` only wires it to the process.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use densekit_core::density::compute_density;
use densekit_core::ingest::{
    parse_accuracy_table, parse_density_csv, parse_embedding_csv, parse_idx, parse_trial_table,
};
use densekit_core::quality::dataset_quality_with_threshold;
use densekit_core::reduction::DEFAULT_MARGIN_FRACTION;
use densekit_core::stats::density_accuracy_study;
use densekit_core::synth::{generate, SynthSpec};
use densekit_core::{
    class_stats, pca_reduce, pooled_t_test, solve_target_density, DensityError, DensityMethod,
    DensityVector, EmbedError, EmbeddingSet, Error, IngestError, QualityError, ReducerConfig,
    ReductionError, ReductionManifest, ReductionRequest, StatsError, SynthError, TrialSummary,
    QUALITY_THRESHOLD,
};

mod report;

pub use report::{render_report, ReportFormat, ReportInput};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "DENSEKIT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "densekit",
    version,
    about = "Class density, dataset quality and central-exclusion reduction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project IDX images to a low-dimensional embedding CSV with PCA.
    Embed(EmbedArgs),
    /// Per-class densities of an embedding CSV.
    Density(DensityArgs),
    /// Dataset quality score of an embedding CSV.
    Quality(QualityArgs),
    /// Exclude near-centroid samples until every class meets a target density.
    Reduce(ReduceArgs),
    /// Pearson correlation between class densities and class accuracies.
    Correlate(CorrelateArgs),
    /// One-tailed pooled t-test between two trial summaries.
    Ttest(TtestArgs),
    /// Generate a seeded Gaussian-mixture train/test pair.
    Synth(SynthArgs),
    /// Tabulate reduction manifests, optionally with trial accuracies.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// IDX image file (magic 0x803).
    #[arg(long)]
    pub images: PathBuf,
    /// IDX label file (magic 0x801).
    #[arg(long)]
    pub labels: PathBuf,
    /// Number of principal components to keep.
    #[arg(long, default_value_t = 3)]
    pub dims: usize,
    /// Skip mean-centering before projection.
    #[arg(long)]
    pub no_center: bool,
    /// Output embedding CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Min,
    Max,
    Mean,
    MeanNormalized,
}

impl From<MethodArg> for DensityMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Min => DensityMethod::Min,
            MethodArg::Max => DensityMethod::Max,
            MethodArg::Mean => DensityMethod::Mean,
            MethodArg::MeanNormalized => DensityMethod::MeanNormalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReduceMethodArg {
    Mean,
    MeanNormalized,
}

impl From<ReduceMethodArg> for DensityMethod {
    fn from(m: ReduceMethodArg) -> Self {
        match m {
            ReduceMethodArg::Mean => DensityMethod::Mean,
            ReduceMethodArg::MeanNormalized => DensityMethod::MeanNormalized,
        }
    }
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    /// Density formula.
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Input embedding CSV (`id,label,d0,...`).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output `class,density` CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    /// Input embedding CSV (`id,label,d0,...`).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Quality above which the dataset counts as a reduction candidate.
    #[arg(long, default_value_t = QUALITY_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    /// Density formula the target refers to.
    #[arg(long, value_enum)]
    pub method: ReduceMethodArg,
    /// Target density every class is reduced to.
    #[arg(long)]
    pub target: f64,
    /// Bisection stops once the bracket is this fraction of the class size.
    #[arg(long, default_value_t = DEFAULT_MARGIN_FRACTION)]
    pub margin: f64,
    /// Cap on bisection probes per class (unlimited by default).
    #[arg(long = "max-iters")]
    pub max_iters: Option<u32>,
    /// Input embedding CSV (`id,label,d0,...`).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Manifest output; a `.json` path gets the JSON document, anything
    /// else the per-class summary CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// `class,excluded_id` companion CSV for a CSV manifest
    /// (default: `<out stem>.excluded.csv`).
    #[arg(long)]
    pub out_excluded: Option<PathBuf>,
    /// Also write the surviving samples as an embedding CSV.
    #[arg(long)]
    pub out_embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// `class,density` CSV.
    #[arg(long)]
    pub densities: PathBuf,
    /// `class,accuracy` CSV; accuracies as fractions or with a `%` suffix.
    #[arg(long)]
    pub accuracies: PathBuf,
}

#[derive(Debug, Args)]
pub struct TtestArgs {
    /// Baseline trials as `mean,std,n` (population std).
    #[arg(long, allow_hyphen_values = true)]
    pub baseline: String,
    /// Candidate trials as `mean,std,n` (population std).
    #[arg(long, allow_hyphen_values = true)]
    pub candidate: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON mixture spec: `{"classes": [{"count", "centroid", "sigma"}, ...]}`.
    #[arg(long)]
    pub spec: PathBuf,
    /// Generator seed; overrides any seed in the spec.
    #[arg(long)]
    pub seed: u64,
    /// Output training embedding CSV (first 80% of each class).
    #[arg(long)]
    pub out_train: PathBuf,
    /// Output test embedding CSV (remaining 20%).
    #[arg(long)]
    pub out_test: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON manifest from `reduce`; repeat once per target density.
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// `target,mean,std,n` trial CSV; the baseline row has target `baseline`.
    #[arg(long)]
    pub trials: Option<PathBuf>,
    /// Embedding CSV the manifests were computed from; checked for the
    /// same class set.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// `class,density` CSV to tabulate alongside.
    #[arg(long)]
    pub densities: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
    pub format: ReportFormat,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of one invocation, mapped to the process exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(Error::from(e).to_string())
            }
        }
    )*};
}

data_errors!(
    IngestError,
    EmbedError,
    DensityError,
    ReductionError,
    StatsError,
    QualityError,
    SynthError
);

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// The clap command tree, for help rendering and introspection.
pub fn command() -> clap::Command {
    Cli::command()
}

/// Runs one invocation. Diagnostics go to `stderr` as a single line.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                1
            } else {
                let _ = write!(stdout, "{rendered}");
                0
            };
        }
    };
    let written = with_thread_pool(|| dispatch(cli.command)).and_then(|buf| {
        stdout
            .write_all(&buf)
            .and_then(|_| stdout.flush())
            .map_err(|e| CliError::Internal(format!("writing output: {e}")))
    });
    match written {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.message());
            e.exit_code()
        }
    }
}

fn with_thread_pool<T: Send>(work: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    let Some(raw) = std::env::var_os(THREADS_ENV) else {
        return work();
    };
    let threads = raw
        .to_str()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {raw:?}"
            ))
        })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    pool.install(work)
}

/// Runs one subcommand and returns what it prints. Output is buffered so
/// the work can run inside the thread pool.
fn dispatch(command: Command) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    match command {
        Command::Embed(a) => embed(a)?,
        Command::Density(a) => density(a)?,
        Command::Quality(a) => quality(a, &mut buf)?,
        Command::Reduce(a) => reduce(a, &mut buf)?,
        Command::Correlate(a) => correlate(a, &mut buf)?,
        Command::Ttest(a) => ttest(a, &mut buf)?,
        Command::Synth(a) => synth(a)?,
        Command::Report(a) => report(a, &mut buf)?,
    }
    Ok(buf)
}

fn require_inputs(inputs: &[&Path]) -> CliResult<()> {
    for p in inputs {
        if !p.is_file() {
            return Err(CliError::Usage(format!(
                "input file not found: {}",
                p.display()
            )));
        }
    }
    Ok(())
}

/// Outputs must land in an existing directory and never overwrite an input.
fn require_outputs(inputs: &[&Path], outputs: &[&Path]) -> CliResult<()> {
    let canonical_inputs: Vec<PathBuf> = inputs
        .iter()
        .filter_map(|p| p.canonicalize().ok())
        .collect();
    for (i, out) in outputs.iter().enumerate() {
        let parent = parent_dir(out);
        if !parent.is_dir() {
            return Err(CliError::Usage(format!(
                "output directory does not exist: {}",
                parent.display()
            )));
        }
        if let Ok(c) = out.canonicalize() {
            if canonical_inputs.contains(&c) {
                return Err(CliError::Usage(format!(
                    "refusing to overwrite input {}",
                    out.display()
                )));
            }
        }
        if outputs[..i].contains(out) {
            return Err(CliError::Usage(format!(
                "output path given twice: {}",
                out.display()
            )));
        }
    }
    Ok(())
}

fn parent_dir(p: &Path) -> &Path {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    }
}

fn read_bytes(p: &Path) -> CliResult<Vec<u8>> {
    fs::read(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))
}

fn read_text(p: &Path) -> CliResult<String> {
    fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let internal =
        |e: std::io::Error| CliError::Internal(format!("writing {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(internal)?;
    tmp.write_all(contents).map_err(internal)?;
    tmp.as_file().sync_all().map_err(internal)?;
    tmp.persist(path).map_err(|e| internal(e.error))?;
    Ok(())
}

fn load_embeddings(p: &Path) -> CliResult<EmbeddingSet> {
    let bytes = read_bytes(p)?;
    Ok(parse_embedding_csv(bytes.as_slice())?)
}

fn embedding_csv(set: &EmbeddingSet) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    set.write_csv(&mut out)
        .map_err(|e| CliError::Internal(format!("serializing embeddings: {e}")))?;
    Ok(out)
}

fn embed(a: EmbedArgs) -> CliResult<()> {
    require_inputs(&[&a.images, &a.labels])?;
    require_outputs(&[&a.images, &a.labels], &[&a.out])?;
    let raw = parse_idx(&read_bytes(&a.images)?, &read_bytes(&a.labels)?)?;
    let cfg = ReducerConfig {
        target_dims: a.dims,
        center: !a.no_center,
    };
    let set = pca_reduce(&raw, cfg)?;
    write_atomic(&a.out, &embedding_csv(&set)?)
}

fn density(a: DensityArgs) -> CliResult<()> {
    require_inputs(&[&a.embeddings])?;
    require_outputs(&[&a.embeddings], &[&a.out])?;
    let set = load_embeddings(&a.embeddings)?;
    let dv = compute_density(a.method.into(), &class_stats(&set)?)?;
    write_atomic(&a.out, dv.to_csv().as_bytes())
}

fn quality(a: QualityArgs, out: &mut Vec<u8>) -> CliResult<()> {
    require_inputs(&[&a.embeddings])?;
    if !a.threshold.is_finite() {
        return Err(CliError::Usage(format!(
            "--threshold must be finite, got {}",
            a.threshold
        )));
    }
    let set = load_embeddings(&a.embeddings)?;
    let dv = compute_density(DensityMethod::MeanNormalized, &class_stats(&set)?)?;
    let q = dataset_quality_with_threshold(&dv, a.threshold)?;
    out.extend_from_slice(q.to_csv().as_bytes());
    Ok(())
}

/// `m.csv` -> `m.excluded.csv`.
fn companion_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.excluded.csv"))
}

fn is_json(p: &Path) -> bool {
    p.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn reduce(a: ReduceArgs, out: &mut Vec<u8>) -> CliResult<()> {
    require_inputs(&[&a.embeddings])?;
    let excluded_path = (!is_json(&a.out)).then(|| {
        a.out_excluded
            .clone()
            .unwrap_or_else(|| companion_path(&a.out))
    });
    let mut outputs: Vec<&Path> = vec![&a.out];
    outputs.extend(excluded_path.as_deref());
    outputs.extend(a.out_embeddings.as_deref());
    require_outputs(&[&a.embeddings], &outputs)?;

    let set = load_embeddings(&a.embeddings)?;
    let stats = class_stats(&set)?;
    let req = ReductionRequest {
        method: a.method.into(),
        target: a.target,
        max_iterations: a.max_iters,
        margin_fraction: a.margin,
    };
    let manifest = solve_target_density(&set, &stats, &req)?;
    match &excluded_path {
        None => write_atomic(&a.out, manifest.to_json().as_bytes())?,
        Some(companion) => {
            write_atomic(&a.out, manifest.summary_csv().as_bytes())?;
            write_atomic(companion, manifest.excluded_csv().as_bytes())?;
        }
    }
    if let Some(p) = &a.out_embeddings {
        write_atomic(p, &embedding_csv(&manifest.apply(&set)?)?)?;
    }
    let saturated = manifest.classes.iter().filter(|c| c.saturated).count();
    let _ = writeln!(
        out,
        "excluded {} of {} samples ({:.1}% included), {saturated} saturated class(es)",
        manifest.excluded_count(),
        set.len(),
        manifest.total_included_fraction * 100.0
    );
    Ok(())
}

fn correlate(a: CorrelateArgs, out: &mut Vec<u8>) -> CliResult<()> {
    require_inputs(&[&a.densities, &a.accuracies])?;
    let densities = parse_density_csv(read_bytes(&a.densities)?.as_slice())?;
    let acc = parse_accuracy_table(read_bytes(&a.accuracies)?.as_slice())?;
    // The study pairs values by class; the formula that produced them is irrelevant.
    let dv = DensityVector {
        method: DensityMethod::Mean,
        values: densities,
    };
    let r = density_accuracy_study(&dv, &acc)?;
    let _ = write!(out, "r,n_pairs\n{:.9},{}\n", r.r, r.n_pairs);
    Ok(())
}

fn ttest(a: TtestArgs, out: &mut Vec<u8>) -> CliResult<()> {
    let parse = |flag: &str, raw: &str| {
        raw.parse::<TrialSummary>()
            .map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
    };
    let base = parse("baseline", &a.baseline)?;
    let cand = parse("candidate", &a.candidate)?;
    let r = pooled_t_test(&base, &cand)?;
    let p = r
        .p_one_tailed
        .map_or_else(|| "NA".to_string(), |p| format!("{p:.9}"));
    let _ = write!(
        out,
        "t_stat,dof,p_one_tailed,direction,degenerate\n{:.9},{},{p},{},{}\n",
        r.t_stat, r.dof, r.direction, r.degenerate
    );
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    require_inputs(&[&a.spec])?;
    require_outputs(&[&a.spec], &[&a.out_train, &a.out_test])?;
    let mut spec: SynthSpec = serde_json::from_str(&read_text(&a.spec)?)
        .map_err(|e| CliError::Data(format!("synth: invalid spec: {e}")))?;
    spec.seed = a.seed;
    let (train, test) = generate(&spec)?;
    write_atomic(&a.out_train, &embedding_csv(&train)?)?;
    write_atomic(&a.out_test, &embedding_csv(&test)?)
}

fn report(a: ReportArgs, out: &mut Vec<u8>) -> CliResult<()> {
    let mut inputs: Vec<&Path> = a.manifests.iter().map(PathBuf::as_path).collect();
    inputs.extend(a.trials.as_deref());
    inputs.extend(a.embeddings.as_deref());
    inputs.extend(a.densities.as_deref());
    require_inputs(&inputs)?;
    if let Some(p) = &a.out {
        require_outputs(&inputs, &[p])?;
    }
    let mut manifests = Vec::new();
    for p in &a.manifests {
        if !is_json(p) {
            return Err(CliError::Usage(format!(
                "{}: report reads JSON manifests (run reduce with --out <file>.json)",
                p.display()
            )));
        }
        let m = ReductionManifest::from_json(&read_text(p)?).map_err(|e| {
            CliError::Data(format!("reduction: invalid manifest {}: {e}", p.display()))
        })?;
        manifests.push(m);
    }
    let trials = match &a.trials {
        Some(p) => Some(parse_trial_table(read_bytes(p)?.as_slice())?),
        None => None,
    };
    let class_sizes = match &a.embeddings {
        Some(p) => {
            let set = load_embeddings(p)?;
            Some(set.classes().map(|c| (c, set.class_size(c))).collect())
        }
        None => None,
    };
    let densities = match &a.densities {
        Some(p) => Some(parse_density_csv(read_bytes(p)?.as_slice())?),
        None => None,
    };
    let input = ReportInput {
        manifests,
        trials,
        class_sizes,
        densities,
    };
    let text = render_report(&input, a.format)?;
    match &a.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            out.extend_from_slice(text.as_bytes());
            Ok(())
        }
    }
}
