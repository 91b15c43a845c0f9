//! Double cross-validated grid search over imputation strategies and
//! embeddings.
//!
//! Config files are TOML; every key is optional:
//!
//! ```toml
//! [data]
//! path = "breast-cancer.csv"
//! missing_markers = ["", "NA", "?"]
//! label_column = "class"      # default: last column
//! ignore_columns = ["id"]
//! classes = ["2", "4"]        # [negative, positive]
//!
//! [missingness]
//! kind = "structural"         # asis | random | structural
//! fraction = 0.9
//!
//! [model]
//! strategies = ["zero", "mean", "median", "most-probable"]
//! embeddings = ["no-information", "subspace"]
//! moments = "em"              # em | available-case
//! c_grid = [0.01, 0.1, 1.0, 10.0]
//! d_grid = [1.0, 0.5, 0.25]
//! kkt_tolerance = 1e-3
//! max_passes = 100000
//!
//! [cv]
//! outer_folds = 5
//! inner_folds = 5
//!
//! [run]
//! seed = 0
//! threads = 4
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impute::StrategyKind;
use crate::kernel::{gram_parts, GramParts, KernelConfig};
use crate::subspace::Dataset;
use crate::svm::{predict, train, SmoConfig};

use super::data::{load_csv, CsvOptions, LabelColumn};
use super::folds::stratified_folds;
use super::missingness::{remove_random, remove_structural, Missingness, MissingnessKind, RemovalStats};
use super::pipeline::{fit_moments, Embedding, MomentMethod, Preprocessor};
use super::rng::derive_seed;

const TAG_REMOVAL: u64 = 0x72656d76;
const TAG_OUTER: u64 = 0x6f757472;
const TAG_INNER: u64 = 0x696e6e72;
const TAG_SMO: u64 = 0x736d6f00;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub csv: CsvOptions,
    pub missingness: Missingness,
    pub seed: u64,
    pub strategies: Vec<StrategyKind>,
    pub embeddings: Vec<Embedding>,
    pub c_grid: Vec<f64>,
    pub d_grid: Vec<f64>,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub moments: MomentMethod,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub smo: SmoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            csv: CsvOptions::default(),
            missingness: Missingness::default(),
            seed: 0,
            strategies: StrategyKind::ALL.to_vec(),
            embeddings: Embedding::ALL.to_vec(),
            c_grid: (-2..=1).map(|k| 10f64.powi(k)).collect(),
            d_grid: (0..=10).map(|k| 2f64.powi(-k)).collect(),
            outer_folds: 5,
            inner_folds: 5,
            moments: MomentMethod::Em,
            threads: None,
            smo: SmoConfig::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    missingness: MissingnessSection,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    cv: CvSection,
    #[serde(default)]
    run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    path: Option<PathBuf>,
    missing_markers: Option<Vec<String>>,
    label_column: Option<String>,
    ignore_columns: Option<Vec<String>>,
    classes: Option<[String; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MissingnessSection {
    kind: Option<MissingnessKind>,
    fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    strategies: Option<Vec<String>>,
    embeddings: Option<Vec<String>>,
    moments: Option<String>,
    c_grid: Option<Vec<f64>>,
    d_grid: Option<Vec<f64>>,
    kkt_tolerance: Option<f64>,
    max_passes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CvSection {
    outer_folds: Option<usize>,
    inner_folds: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    seed: Option<u64>,
    threads: Option<usize>,
}

impl ExperimentConfig {
    /// Parses a TOML config; relative data paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text)?;
        let mut cfg = Self::default();

        let d = file.data;
        cfg.data = d.path.map(|p| match base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p,
        });
        if let Some(m) = d.missing_markers {
            cfg.csv.missing_markers = m;
        }
        if let Some(l) = d.label_column {
            cfg.csv.label_column = if l == "last" { LabelColumn::Last } else { LabelColumn::Named(l) };
        }
        if let Some(i) = d.ignore_columns {
            cfg.csv.ignore_columns = i;
        }
        cfg.csv.classes = d.classes;

        if let Some(k) = file.missingness.kind {
            cfg.missingness.kind = k;
        }
        if let Some(f) = file.missingness.fraction {
            cfg.missingness.fraction = f;
        }

        let m = file.model;
        if let Some(s) = m.strategies {
            cfg.strategies = s.iter().map(|x| x.parse()).collect::<Result<_>>()?;
        }
        if let Some(e) = m.embeddings {
            cfg.embeddings = e.iter().map(|x| x.parse()).collect::<Result<_>>()?;
        }
        if let Some(mm) = m.moments {
            cfg.moments = mm.parse()?;
        }
        if let Some(c) = m.c_grid {
            cfg.c_grid = c;
        }
        if let Some(dg) = m.d_grid {
            cfg.d_grid = dg;
        }
        if let Some(t) = m.kkt_tolerance {
            cfg.smo.kkt_tolerance = t;
        }
        if let Some(p) = m.max_passes {
            cfg.smo.max_passes = p;
        }

        if let Some(o) = file.cv.outer_folds {
            cfg.outer_folds = o;
        }
        if let Some(i) = file.cv.inner_folds {
            cfg.inner_folds = i;
        }
        if let Some(s) = file.run.seed {
            cfg.seed = s;
        }
        cfg.threads = file.run.threads;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.missingness.kind != MissingnessKind::Asis
            && !(self.missingness.fraction > 0.0 && self.missingness.fraction < 1.0)
        {
            return bad(format!("missingness fraction must lie in (0, 1), got {}", self.missingness.fraction));
        }
        if self.strategies.is_empty() || self.embeddings.is_empty() {
            return bad("strategies and embeddings must be non-empty".into());
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return bad("c_grid must be non-empty and positive".into());
        }
        if self.d_grid.is_empty() || self.d_grid.iter().any(|&d| !(0.0..=1.0).contains(&d)) {
            return bad("d_grid must be non-empty with values in [0, 1]".into());
        }
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return bad("fold counts must be at least 2".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        if !(self.smo.kkt_tolerance > 0.0) || self.smo.max_passes == 0 {
            return bad("kkt_tolerance and max_passes must be positive".into());
        }
        if self.csv.label_column == LabelColumn::Unlabeled {
            return bad("experiments need a label column".into());
        }
        Ok(())
    }
}

/// What a fit call consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStage {
    Moments,
    Preprocessor(StrategyKind),
}

/// Observes every statistic fitted during an experiment. `rows` are indices
/// into the dataset handed to [`run_on_dataset`].
pub trait FitHook: Sync {
    fn on_fit(&self, fold: usize, stage: FitStage, rows: &[usize]);
}

struct NoHook;

impl FitHook for NoHook {
    fn on_fit(&self, _: usize, _: FitStage, _: &[usize]) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: StrategyKind,
    pub embedding: Embedding,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over outer folds.
    pub std: f64,
    pub chosen_c: Vec<f64>,
    pub chosen_d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub records: usize,
    pub dimension: usize,
    pub missing_fraction: f64,
    pub removal: Option<RemovalStats>,
    pub runtime_secs: f64,
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

impl Report {
    pub fn row(&self, strategy: StrategyKind, embedding: Embedding) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.embedding == embedding)
    }

    /// Machine-readable summary. Runtime is left out so equal runs give equal
    /// bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,embedding,mean,std,chosen_C_per_fold,chosen_D_per_fold\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.strategy,
                r.embedding,
                r.mean,
                r.std,
                join(&r.chosen_c),
                join(&r.chosen_d)
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} records, {} features, {:.1}% missing, {:.2}s",
            self.records,
            self.dimension,
            100.0 * self.missing_fraction,
            self.runtime_secs
        );
        if let Some(r) = &self.removal {
            let _ = writeln!(
                out,
                "removed {} of {} cells ({:.2}%), {} records guarded",
                r.removed_cells,
                r.total_cells,
                100.0 * r.realized_fraction(),
                r.guarded_records
            );
        }
        let _ = writeln!(out, "{:<14} {:<15} {:>8} {:>8}  C / D per fold", "strategy", "embedding", "mean", "std");
        for r in &self.rows {
            let picks: Vec<String> = r
                .chosen_c
                .iter()
                .zip(&r.chosen_d)
                .map(|(c, d)| format!("{c}/{d}"))
                .collect();
            let _ = writeln!(
                out,
                "{:<14} {:<15} {:>8.4} {:>8.4}  {}",
                r.strategy.as_str(),
                r.embedding.as_str(),
                r.mean,
                r.std,
                picks.join(" ")
            );
        }
        out
    }
}

/// Loads the configured CSV and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("no data path configured".into()))?;
    let loaded = load_csv(path, &config.csv)?;
    run_on_dataset(&loaded.dataset, config, None)
}

/// Applies the configured missingness, then runs nested cross-validation.
pub fn run_on_dataset(data: &Dataset, config: &ExperimentConfig, hook: Option<&dyn FitHook>) -> Result<Report> {
    config.validate()?;
    let start = Instant::now();
    let removal_seed = derive_seed(config.seed, &[TAG_REMOVAL]);
    let (data, removal) = match config.missingness.kind {
        MissingnessKind::Asis => (data.clone(), None),
        MissingnessKind::Random => {
            let (d, s) = remove_random(data, config.missingness.fraction, removal_seed)?;
            (d, Some(s))
        }
        MissingnessKind::Structural => {
            let (d, s) = remove_structural(data, config.missingness.fraction, removal_seed)?;
            (d, Some(s))
        }
    };

    let run = || cross_validate(&data, config, hook.unwrap_or(&NoHook));
    let rows = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    Ok(Report {
        rows,
        records: data.len(),
        dimension: data.dimension(),
        missing_fraction: data.missing_fraction(),
        removal,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Per outer fold: accuracy and chosen `(C, D)` for each (strategy, embedding).
type FoldResult = Vec<(f64, f64, f64)>;

fn cross_validate(data: &Dataset, config: &ExperimentConfig, hook: &dyn FitHook) -> Result<Vec<ReportRow>> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::InvalidConfig("experiments need labeled data".into()))?;
    let folds = stratified_folds(&labels, config.outer_folds, derive_seed(config.seed, &[TAG_OUTER]))?;

    let per_fold: Vec<FoldResult> = folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| outer_fold(data, &labels, f, &fold.train, &fold.test, config, hook))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut cell = 0;
    for &strategy in &config.strategies {
        for &embedding in &config.embeddings {
            let accs: Vec<f64> = per_fold.iter().map(|r| r[cell].0).collect();
            let (mean, std) = mean_std(&accs);
            rows.push(ReportRow {
                strategy,
                embedding,
                mean,
                std,
                chosen_c: per_fold.iter().map(|r| r[cell].1).collect(),
                chosen_d: per_fold.iter().map(|r| r[cell].2).collect(),
                fold_accuracies: accs,
            });
            cell += 1;
        }
    }
    Ok(rows)
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn outer_fold(
    data: &Dataset,
    labels: &[i32],
    f: usize,
    train_idx: &[usize],
    test_idx: &[usize],
    config: &ExperimentConfig,
    hook: &dyn FitHook,
) -> Result<FoldResult> {
    let train_set = data.subset(train_idx);
    let test_set = data.subset(test_idx);
    let train_labels: Vec<i32> = train_idx.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<i32> = test_idx.iter().map(|&i| labels[i]).collect();

    hook.on_fit(f, FitStage::Moments, train_idx);
    let moments = fit_moments(&train_set, config.moments).map_err(|e| e.context(format!("fold {f}: moments")))?;
    let inner = stratified_folds(
        &train_labels,
        config.inner_folds,
        derive_seed(config.seed, &[TAG_INNER, f as u64]),
    )?;

    let mut out = Vec::new();
    for (si, &strategy) in config.strategies.iter().enumerate() {
        let ctx = |e: Error| e.context(format!("fold {f}, strategy {strategy}"));
        hook.on_fit(f, FitStage::Preprocessor(strategy), train_idx);
        let pre = Preprocessor::fit(&train_set, strategy, moments.clone()).map_err(ctx)?;
        for (ei, &embedding) in config.embeddings.iter().enumerate() {
            let mut points = pre.embed(&train_set, embedding).map_err(ctx)?;
            points.extend(pre.embed(&test_set, embedding).map_err(ctx)?);
            let parts = gram_parts(&points).map_err(ctx)?;
            let n_train = train_idx.len();
            let tr: Vec<usize> = (0..n_train).collect();
            let te: Vec<usize> = (n_train..points.len()).collect();
            let d_grid: Vec<f64> = match embedding {
                Embedding::NoInformation => vec![0.0],
                Embedding::Subspace => config.d_grid.clone(),
            };
            let cell_seed = derive_seed(config.seed, &[TAG_SMO, f as u64, si as u64, ei as u64]);

            let (c, d) = grid_search(&parts, &tr, &train_labels, &inner, &config.c_grid, &d_grid, cell_seed, config)
                .map_err(ctx)?;
            let smo = SmoConfig {
                seed: derive_seed(cell_seed, &[u64::MAX]),
                ..config.smo
            };
            let kc = KernelConfig::new(d)?;
            let full = parts.combine(kc);
            let model = train(&full.submatrix(&tr), &train_labels, c, &smo).map_err(ctx)?;
            if !model.converged {
                log::warn!("fold {f}, {strategy}/{embedding}: SMO hit max_passes");
            }
            let (pred, _) = predict(&model, &full.block(&te, &tr))?;
            out.push((accuracy(&pred, &test_labels), c, d));
        }
    }
    Ok(out)
}

fn accuracy(pred: &[i32], truth: &[i32]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Best `(C, D)` by mean inner-validation accuracy. Candidates are visited
/// in ascending `C`, then ascending `D`, and only a strict improvement
/// replaces the incumbent.
#[allow(clippy::too_many_arguments)]
fn grid_search(
    parts: &GramParts,
    rows: &[usize],
    labels: &[i32],
    inner: &[super::folds::Fold],
    c_grid: &[f64],
    d_grid: &[f64],
    cell_seed: u64,
    config: &ExperimentConfig,
) -> Result<(f64, f64)> {
    let mut cs = c_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    let mut ds = d_grid.to_vec();
    ds.sort_by(f64::total_cmp);
    ds.dedup();

    let mut best: Option<(f64, f64, f64)> = None;
    for (di, &d) in ds.iter().enumerate() {
        let gram = parts.combine(KernelConfig::new(d)?).submatrix(rows);
        for (ci, &c) in cs.iter().enumerate() {
            let mut total = 0.0;
            for (k, fold) in inner.iter().enumerate() {
                let tr_labels: Vec<i32> = fold.train.iter().map(|&i| labels[i]).collect();
                let va_labels: Vec<i32> = fold.test.iter().map(|&i| labels[i]).collect();
                let smo = SmoConfig {
                    seed: derive_seed(cell_seed, &[ci as u64, di as u64, k as u64]),
                    ..config.smo
                };
                let model = train(&gram.submatrix(&fold.train), &tr_labels, c, &smo)?;
                let (pred, _) = predict(&model, &gram.block(&fold.test, &fold.train))?;
                total += accuracy(&pred, &va_labels);
            }
            let score = total / inner.len() as f64;
            let better = match best {
                None => true,
                Some((s, bc, bd)) => score > s || (score == s && (c, d) < (bc, bd)),
            };
            if better {
                best = Some((score, c, d));
            }
        }
    }
    let (_, c, d) = best.expect("grids are non-empty");
    Ok((c, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::two_gaussian_blobs;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            c_grid: vec![0.1, 1.0],
            d_grid: vec![1.0, 0.25],
            outer_folds: 3,
            inner_folds: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_match_grids() {
        let c = ExperimentConfig::default();
        assert_eq!(c.c_grid, vec![0.01, 0.1, 1.0, 10.0]);
        assert_eq!(c.d_grid.len(), 11);
        assert_eq!(c.d_grid[10], 1.0 / 1024.0);
        assert_eq!((c.outer_folds, c.inner_folds), (5, 5));
    }

    #[test]
    fn parses_toml() {
        let text = r#"
            [data]
            path = "x.csv"
            label_column = "class"
            [missingness]
            kind = "random"
            fraction = 0.5
            [model]
            strategies = ["zero", "most-probable"]
            embeddings = ["subspace"]
            c_grid = [1.0]
            [cv]
            outer_folds = 3
            [run]
            seed = 9
            threads = 2
        "#;
        let c = ExperimentConfig::from_toml_str(text, Some(Path::new("/tmp"))).unwrap();
        assert_eq!(c.data, Some(PathBuf::from("/tmp/x.csv")));
        assert_eq!(c.csv.label_column, LabelColumn::Named("class".into()));
        assert_eq!(c.missingness.kind, MissingnessKind::Random);
        assert_eq!(c.strategies, vec![StrategyKind::Zero, StrategyKind::MostProbable]);
        assert_eq!(c.embeddings, vec![Embedding::Subspace]);
        assert_eq!((c.outer_folds, c.inner_folds, c.seed, c.threads), (3, 5, 9, Some(2)));
    }

    #[test]
    fn rejects_bad_config() {
        for text in [
            "[missingness]\nkind = \"random\"\nfraction = 1.5",
            "[model]\nc_grid = []",
            "[cv]\nouter_folds = 1",
            "[model]\nstrategies = [\"knn\"]",
            "[bogus]\nx = 1",
        ] {
            let err = ExperimentConfig::from_toml_str(text, None).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn complete_data_collapses() {
        let data = two_gaussian_blobs(60, 3, 3.0, 5);
        let report = run_on_dataset(&data, &small_config(), None).unwrap();
        let base = &report.rows[0].fold_accuracies;
        for r in &report.rows {
            assert_eq!(&r.fold_accuracies, base, "{} {}", r.strategy, r.embedding);
        }
    }

    #[test]
    fn tie_break_prefers_small_c_then_small_d() {
        // Every candidate scores the same on this trivially separable set.
        let data = two_gaussian_blobs(40, 2, 40.0, 1);
        let mut cfg = small_config();
        cfg.strategies = vec![StrategyKind::Zero];
        let report = run_on_dataset(&data, &cfg, None).unwrap();
        for r in &report.rows {
            assert!(r.fold_accuracies.iter().all(|&a| a == 1.0));
            assert!(r.chosen_c.iter().all(|&c| c == 0.1));
        }
        let sub = report.row(StrategyKind::Zero, Embedding::Subspace).unwrap();
        assert!(sub.chosen_d.iter().all(|&d| d == 0.25));
        let none = report.row(StrategyKind::Zero, Embedding::NoInformation).unwrap();
        assert!(none.chosen_d.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let data = two_gaussian_blobs(45, 2, 4.0, 2);
        let mut cfg = small_config();
        cfg.missingness = Missingness {
            kind: MissingnessKind::Random,
            fraction: 0.3,
        };
        let report = run_on_dataset(&data, &cfg, None).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "strategy,embedding,mean,std,chosen_C_per_fold,chosen_D_per_fold");
        assert_eq!(lines.len(), 1 + 8);
        assert!(lines[1].starts_with("zero,no-information,"));
        assert!(report.rows.iter().all(|r| (0.0..=1.0).contains(&r.mean)));
    }
}
