use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pointedmiss::harness::{
    load_csv, remove_random, remove_structural, render2d, render2d_pair, run_experiment, write_csv, CsvOptions,
    Embedding, ExperimentConfig, LabelColumn, MomentMethod, PipelineModel, PipelineSpec, SubspaceFile,
};
use pointedmiss::moments::{available_case_moments, default_ridge, em_fit, EmConfig};
use pointedmiss::{apply_affine, gram, pca_map, whitening_map, ImputationStrategy, KernelConfig, Moments, SmoConfig, StrategyKind};

const THREADS_ENV: &str = "POINTEDMISS_THREADS";

#[derive(Parser)]
#[command(name = "pointedmiss", version, about = "Incomplete data as pointed affine subspaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove cells from a CSV at random or by data geometry.
    GenMissing(GenMissingArgs),
    /// Estimate mean and covariance from incomplete data.
    Moments(MomentsArgs),
    /// Turn CSV records into imputed pointed subspaces.
    Impute(ImputeArgs),
    /// Apply whitening or PCA to a subspace file.
    Transform(TransformArgs),
    /// Kernel matrix of a subspace file.
    Gram(GramArgs),
    /// Fit imputation, whitening and an SVM on labeled data.
    Train(TrainArgs),
    /// Score records with a trained model.
    Predict(PredictArgs),
    /// Nested cross-validated comparison of strategies and embeddings.
    Experiment(ExperimentArgs),
    /// Draw a 2-D subspace file as SVG.
    Render(RenderArgs),
}

#[derive(Args, Clone)]
struct CsvArgs {
    /// Label column name; defaults to the last column.
    #[arg(long)]
    label_column: Option<String>,
    /// The CSV has no label column.
    #[arg(long, conflicts_with = "label_column")]
    unlabeled: bool,
    /// Comma-separated cell values treated as missing.
    #[arg(long, value_delimiter = ',', default_values_t = [String::new(), "NA".to_string(), "?".to_string()])]
    missing_markers: Vec<String>,
    /// Comma-separated columns to drop.
    #[arg(long, value_delimiter = ',')]
    ignore_columns: Vec<String>,
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        CsvOptions {
            missing_markers: self.missing_markers.clone(),
            label_column: match (&self.label_column, self.unlabeled) {
                (_, true) => LabelColumn::Unlabeled,
                (Some(name), _) => LabelColumn::Named(name.clone()),
                (None, false) => LabelColumn::Last,
            },
            ignore_columns: self.ignore_columns.clone(),
            classes: None,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum RemovalKind {
    Random,
    Structural,
}

#[derive(Args)]
struct GenMissingArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random")]
    kind: RemovalKind,
    #[arg(long, default_value_t = 0.9)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Copy, Clone, ValueEnum)]
enum MethodArg {
    Em,
    AvailableCase,
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "em")]
    method: MethodArg,
    /// Diagonal ridge; defaults to 1e-6 times the mean variance.
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args)]
struct ImputeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "zero")]
    strategy: StrategyKind,
    /// Moments file for `most-probable`; EM on the input otherwise.
    #[arg(long)]
    moments: Option<PathBuf>,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Copy, Clone, ValueEnum)]
enum TransformOp {
    Whiten,
    Pca,
}

#[derive(Args)]
struct TransformArgs {
    /// Subspace JSON file.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    op: TransformOp,
    /// Components kept by `pca`.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    moments: PathBuf,
}

#[derive(Args)]
struct GramArgs {
    /// Subspace JSON file.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    d_weight: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "most-probable")]
    strategy: StrategyKind,
    #[arg(long, default_value = "subspace")]
    embedding: Embedding,
    #[arg(long, value_enum, default_value = "em")]
    moments_method: MethodArg,
    #[arg(short = 'c', long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    d_weight: f64,
    #[arg(long, default_value_t = 1e-3)]
    kkt_tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    input: PathBuf,
    /// Prediction CSV; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data CSV; overrides the config.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Report CSV; the table always goes to stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Subspace JSON file.
    #[arg(short, long)]
    input: PathBuf,
    /// Second file drawn as an "after" panel.
    #[arg(long)]
    after: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<pointedmiss::Error>())
        .map_or(3, |e| e.exit_code() as u8)
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    pointedmiss::Error::InvalidConfig(msg.into()).into()
}

fn env_threads() -> anyhow::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(config_error(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cap = env_threads()?;
    if let Some(n) = cap {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error(e.to_string()))?;
    }
    match cli.command {
        Command::GenMissing(a) => gen_missing(a),
        Command::Moments(a) => moments(a),
        Command::Impute(a) => impute(a),
        Command::Transform(a) => transform(a),
        Command::Gram(a) => gram_cmd(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Experiment(a) => experiment(a, cap),
        Command::Render(a) => render(a),
    }
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(path: &Path, csv: &CsvArgs) -> anyhow::Result<pointedmiss::harness::LoadedData> {
    load_csv(path, &csv.options()).with_context(|| format!("reading {}", path.display()))
}

fn method(m: MethodArg) -> MomentMethod {
    match m {
        MethodArg::Em => MomentMethod::Em,
        MethodArg::AvailableCase => MomentMethod::AvailableCase,
    }
}

fn read_moments(path: &Path) -> anyhow::Result<Moments> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: Moments = serde_json::from_str(&text)
        .map_err(pointedmiss::Error::from)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(m)
}

fn gen_missing(a: GenMissingArgs) -> anyhow::Result<()> {
    let loaded = load(&a.input, &a.csv)?;
    let (data, stats) = match a.kind {
        RemovalKind::Random => remove_random(&loaded.dataset, a.fraction, a.seed)?,
        RemovalKind::Structural => remove_structural(&loaded.dataset, a.fraction, a.seed)?,
    };
    write_csv(sink(a.output.as_deref())?, &data, loaded.classes.as_ref())?;
    eprintln!(
        "removed {} of {} cells ({:.4}), {} records guarded",
        stats.removed_cells,
        stats.total_cells,
        stats.realized_fraction(),
        stats.guarded_records
    );
    Ok(())
}

fn moments(a: MomentsArgs) -> anyhow::Result<()> {
    let data = load(&a.input, &a.csv)?.dataset;
    let m = match method(a.method) {
        MomentMethod::AvailableCase => available_case_moments(&data, a.ridge.unwrap_or_else(|| default_ridge(&data)))?,
        MomentMethod::Em => {
            let mut cfg = EmConfig::for_data(&data);
            if let Some(r) = a.ridge {
                cfg.ridge = r;
            }
            if let Some(i) = a.max_iterations {
                cfg.max_iterations = i;
            }
            if let Some(t) = a.tolerance {
                cfg.tolerance = t;
            }
            let fit = em_fit(&data, &cfg)?;
            if !fit.converged {
                log::warn!("EM stopped after {} iterations without converging", fit.iterations);
            }
            fit.moments
        }
    };
    let mut out = sink(a.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &m)?;
    writeln!(out)?;
    Ok(())
}

fn impute(a: ImputeArgs) -> anyhow::Result<()> {
    let data = load(&a.input, &a.csv)?.dataset;
    let moments = match (&a.moments, a.strategy) {
        (Some(p), _) => Some(read_moments(p)?),
        (None, StrategyKind::MostProbable) => Some(pointedmiss::em_moments(&data, &EmConfig::for_data(&data))?),
        (None, _) => None,
    };
    let strategy = ImputationStrategy::fit(a.strategy, &data, moments.as_ref())?;
    let points = strategy.impute_all(&data)?;
    let file = SubspaceFile::new(data.dimension(), &points, data.labels().as_deref());
    let mut out = sink(a.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &file)?;
    writeln!(out)?;
    Ok(())
}

fn read_subspaces(path: &Path) -> anyhow::Result<SubspaceFile> {
    SubspaceFile::read(path).with_context(|| format!("reading {}", path.display()))
}

fn transform(a: TransformArgs) -> anyhow::Result<()> {
    let file = read_subspaces(&a.input)?;
    let moments = read_moments(&a.moments)?;
    let map = match a.op {
        TransformOp::Whiten => {
            if a.k.is_some() {
                bail!(config_error("--k only applies to --op pca"));
            }
            whitening_map(&moments)?
        }
        TransformOp::Pca => pca_map(&moments, a.k.ok_or_else(|| config_error("--op pca needs --k"))?)?,
    };
    let points = file
        .subspaces()?
        .iter()
        .map(|s| apply_affine(&map, s))
        .collect::<pointedmiss::Result<Vec<_>>>()?;
    let out_file = SubspaceFile::new(map.output_dim(), &points, file.labels().as_deref());
    let mut out = sink(a.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &out_file)?;
    writeln!(out)?;
    Ok(())
}

fn gram_cmd(a: GramArgs) -> anyhow::Result<()> {
    let points = read_subspaces(&a.input)?.subspaces()?;
    let g = gram(&points, KernelConfig::new(a.d_weight)?)?;
    let mut out = sink(a.output.as_deref())?;
    writeln!(out, "# gram n={} d={}", g.len(), a.d_weight)?;
    for r in 0..g.len() {
        let row: Vec<String> = g.entries.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let loaded = load(&a.input, &a.csv)?;
    let spec = PipelineSpec {
        strategy: a.strategy,
        embedding: a.embedding,
        moments: method(a.moments_method),
        c: a.c,
        d_weight: a.d_weight,
        smo: SmoConfig {
            kkt_tolerance: a.kkt_tolerance,
            seed: a.seed,
            ..SmoConfig::default()
        },
    };
    let model = PipelineModel::fit(&loaded.dataset, &spec, loaded.classes)?;
    if !model.converged {
        log::warn!("SMO hit its iteration cap");
    }
    model.write(&a.output)?;
    eprintln!(
        "trained on {} records, {} support vectors",
        loaded.dataset.len(),
        model.support_vectors.len()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let model = PipelineModel::read(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let mut opts = a.csv.options();
    opts.classes = model.classes.clone();
    let loaded = load_csv(&a.input, &opts).with_context(|| format!("reading {}", a.input.display()))?;
    let (labels, values) = model.predict(&loaded.dataset)?;
    let name = |l: i32| match &model.classes {
        Some([neg, pos]) => if l < 0 { neg.clone() } else { pos.clone() },
        None => l.to_string(),
    };
    let mut out = sink(a.output.as_deref())?;
    writeln!(out, "row,prediction,decision_value")?;
    for (i, (l, v)) in labels.iter().zip(&values).enumerate() {
        writeln!(out, "{},{},{}", i + 1, name(*l), v)?;
    }
    out.flush()?;
    if let Some(truth) = loaded.dataset.labels() {
        let hits = labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        eprintln!("accuracy {:.4} ({hits}/{})", hits as f64 / truth.len() as f64, truth.len());
    }
    Ok(())
}

fn experiment(a: ExperimentArgs, cap: Option<usize>) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = a.data {
        cfg.data = Some(d);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    cfg.threads = match (cfg.threads, cap) {
        (Some(t), Some(c)) => Some(t.min(c)),
        (t, c) => t.or(c),
    };
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.output {
        std::fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.json {
        std::fs::write(p, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn render(a: RenderArgs) -> anyhow::Result<()> {
    let before = read_subspaces(&a.input)?.subspaces()?;
    match &a.after {
        Some(p) => render2d_pair(&before, &read_subspaces(p)?.subspaces()?, &a.output)?,
        None => render2d(&before, &a.output)?,
    }
    Ok(())
}
