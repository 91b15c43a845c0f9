//! Data ingestion, synthetic missingness, nested cross-validation, model
//! files and figures.

pub mod data;
pub mod experiment;
pub mod folds;
pub mod io;
pub mod missingness;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod synthetic;

pub use data::{load_csv, read_csv, write_csv, CsvOptions, LabelColumn, LoadedData};
pub use experiment::{run_experiment, run_on_dataset, ExperimentConfig, FitHook, FitStage, Report, ReportRow};
pub use folds::{stratified_folds, Fold};
pub use io::{SubspaceFile, SubspaceRecord};
pub use missingness::{
    plan_structural, remove_random, remove_structural, Missingness, MissingnessKind, RemovalStats, StructuralPlan,
};
pub use pipeline::{fit_moments, Embedding, MomentMethod, PipelineModel, PipelineSpec, Preprocessor};
pub use render::{render2d, render2d_pair, render_svg};
