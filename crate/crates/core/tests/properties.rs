use std::collections::HashSet;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use pointedmiss::harness::synthetic::two_gaussian_blobs;
use pointedmiss::harness::{
    remove_random, run_on_dataset, stratified_folds, Embedding, ExperimentConfig, FitHook, FitStage, Missingness,
    MissingnessKind,
};
use pointedmiss::impute::{impute_most_probable, impute_zero};
use pointedmiss::subspace::contains;
use pointedmiss::transform::intersect_constraint;
use pointedmiss::{
    apply_affine, gram, AffineMap, AffineSubspace, KernelConfig, MomentSource, Moments, PointedSubspace, StrategyKind,
};

struct Recorder(Mutex<Vec<(usize, FitStage, Vec<usize>)>>);

impl FitHook for Recorder {
    fn on_fit(&self, fold: usize, stage: FitStage, rows: &[usize]) {
        self.0.lock().unwrap().push((fold, stage, rows.to_vec()));
    }
}

#[test]
fn statistics_never_see_the_test_fold() {
    let data = two_gaussian_blobs(60, 3, 3.0, 4);
    let cfg = ExperimentConfig {
        missingness: Missingness {
            kind: MissingnessKind::Random,
            fraction: 0.3,
        },
        c_grid: vec![1.0],
        d_grid: vec![1.0],
        outer_folds: 4,
        inner_folds: 3,
        seed: 8,
        ..ExperimentConfig::default()
    };
    let hook = Recorder(Mutex::new(Vec::new()));
    run_on_dataset(&data, &cfg, Some(&hook)).unwrap();

    let labels = data.labels().unwrap();
    let calls = hook.0.into_inner().unwrap();
    let folds: Vec<usize> = calls.iter().map(|c| c.0).collect::<HashSet<_>>().into_iter().collect();
    assert_eq!(folds.len(), 4);
    // One moments fit and one preprocessor fit per strategy in every fold.
    assert_eq!(calls.len(), 4 * (1 + cfg.strategies.len()));

    let mut covered = vec![0usize; labels.len()];
    for f in 0..4 {
        let rows: Vec<&Vec<usize>> = calls.iter().filter(|c| c.0 == f).map(|c| &c.2).collect();
        assert!(rows.windows(2).all(|w| w[0] == w[1]), "fold {f} fits on differing rows");
        let train: HashSet<usize> = rows[0].iter().copied().collect();
        assert_eq!(train.len(), labels.len() - labels.len() / 4 - usize::from(f < labels.len() % 4));
        for (i, c) in covered.iter_mut().enumerate() {
            if !train.contains(&i) {
                *c += 1;
            }
        }
    }
    // Every record is held out exactly once, and never fitted on while held out.
    assert!(covered.iter().all(|&c| c == 1));
    assert!(calls
        .iter()
        .any(|c| matches!(c.1, FitStage::Preprocessor(StrategyKind::MostProbable))));
}

#[test]
fn complete_data_collapses_strategies_and_embeddings() {
    let data = two_gaussian_blobs(80, 4, 3.0, 6);
    let cfg = ExperimentConfig {
        c_grid: vec![0.1, 1.0],
        d_grid: vec![1.0, 0.5],
        outer_folds: 4,
        inner_folds: 3,
        ..ExperimentConfig::default()
    };
    let report = run_on_dataset(&data, &cfg, None).unwrap();
    let first = &report.rows[0].fold_accuracies;
    for row in &report.rows {
        assert_eq!(&row.fold_accuracies, first, "{} {}", row.strategy, row.embedding);
    }
}

#[test]
fn structural_blobs_most_probable_subspace_is_accurate() {
    let data = two_gaussian_blobs(300, 5, 4.0, 21);
    let cfg = ExperimentConfig {
        missingness: Missingness {
            kind: MissingnessKind::Structural,
            fraction: 0.6,
        },
        strategies: vec![StrategyKind::MostProbable],
        embeddings: vec![Embedding::Subspace],
        seed: 21,
        ..ExperimentConfig::default()
    };
    let report = run_on_dataset(&data, &cfg, None).unwrap();
    let row = report.row(StrategyKind::MostProbable, Embedding::Subspace).unwrap();
    assert!(row.mean >= 0.8, "{}", row.mean);
    let removal = report.removal.unwrap();
    assert!((removal.expected_fraction.unwrap() - 0.6).abs() <= 1e-4);
}

#[test]
fn random_removal_fraction_is_close_on_large_matrices() {
    let data = two_gaussian_blobs(200, 50, 2.0, 3);
    for target in [0.3, 0.9] {
        let (_, stats) = remove_random(&data, target, 17).unwrap();
        assert!((stats.realized_fraction() - target).abs() <= 0.02);
    }
}

#[test]
fn folds_are_stratified() {
    let labels: Vec<i32> = (0..50).map(|i| if i < 35 { -1 } else { 1 }).collect();
    for f in stratified_folds(&labels, 5, 3).unwrap() {
        let pos = f.test.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(pos, 3);
    }
}

fn vec_strategy(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-5.0f64..5.0, n).prop_map(DVector::from_vec)
}

fn subspace_strategy(n: usize) -> impl Strategy<Value = PointedSubspace> {
    (vec_strategy(n), prop::collection::vec(vec_strategy(n), 0..n))
        .prop_map(|(x, vs)| PointedSubspace::from_spanning(x, &vs).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed),
        ..ProptestConfig::default()
    })]

    #[test]
    fn composition_of_maps_matches_sequential_application(
        s in subspace_strategy(4),
        a in prop::collection::vec(-2.0f64..2.0, 16),
        b in prop::collection::vec(-2.0f64..2.0, 12),
        oa in vec_strategy(4),
        ob in vec_strategy(3),
    ) {
        let inner = AffineMap::new(DMatrix::from_vec(4, 4, a), oa).unwrap();
        let outer = AffineMap::new(DMatrix::from_vec(3, 4, b), ob).unwrap();
        let two_step = apply_affine(&outer, &apply_affine(&inner, &s).unwrap()).unwrap();
        let one_step = apply_affine(&outer.compose(&inner).unwrap(), &s).unwrap();
        prop_assert!((two_step.basepoint() - one_step.basepoint()).amax() < 1e-8);
        prop_assert_eq!(two_step.dim(), one_step.dim());
        let pa = two_step.projection_matrix();
        let pb = one_step.projection_matrix();
        prop_assert!((pa - pb).amax() < 1e-7);
    }

    #[test]
    fn imputation_stays_in_the_affine_set(s in subspace_strategy(5), m in vec_strategy(5)) {
        let z = impute_zero(&s);
        prop_assert!(contains(&s, z.basepoint(), 1e-8));
        prop_assert_eq!(z.basis(), s.basis());
        let moments = Moments::new(m.clone(), DMatrix::identity(5, 5), MomentSource::Exact).unwrap();
        let p = impute_most_probable(&s, &moments).unwrap();
        prop_assert!(contains(&s, p.basepoint(), 1e-8));
        // With Σ = I and m = 0 the most probable point is the zero imputation.
        let origin = Moments::new(DVector::zeros(5), DMatrix::identity(5, 5), MomentSource::Exact).unwrap();
        let q = impute_most_probable(&s, &origin).unwrap();
        prop_assert!((q.basepoint() - z.basepoint()).amax() < 1e-10);
    }

    #[test]
    fn gram_is_symmetric_with_bounded_projection_term(
        pts in prop::collection::vec(subspace_strategy(3), 1..12),
        d in 0.0f64..=1.0,
    ) {
        let g = gram(&pts, KernelConfig::new(d).unwrap()).unwrap();
        prop_assert_eq!(&g.entries, &g.entries.transpose());
        for (i, p) in pts.iter().enumerate() {
            let own = p.basepoint().norm_squared() + d * p.dim() as f64;
            prop_assert!((g.entries[(i, i)] - own).abs() < 1e-9);
        }
    }

    #[test]
    fn intersection_lies_in_both_sets(s in subspace_strategy(4), w_dirs in prop::collection::vec(vec_strategy(4), 2..4)) {
        // Constraint through the basepoint so the intersection is non-empty.
        let w = AffineSubspace::from_spanning(s.basepoint().clone(), &w_dirs).unwrap();
        let out = intersect_constraint(&s, &w, 1e-8).unwrap();
        for j in 0..out.dim() {
            let p = out.basepoint() + out.basis().column(j);
            prop_assert!(contains(&s, &p, 1e-7));
            prop_assert!(w.residual(&p) < 1e-7);
        }
    }
}
