//! Correlated 2-D sample with one record missing its second attribute,
//! before and after whitening, for zero and most-probable imputation.
//!
//! `cargo run --example whitening_figure -- [out-prefix]`

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use pointedmiss::harness::render2d_pair;
use pointedmiss::impute::{impute_most_probable, impute_zero};
use pointedmiss::moments::{em_moments, EmConfig};
use pointedmiss::subspace::subspace_from_record;
use pointedmiss::{apply_affine, whitening_map, Dataset, IncompleteRecord, PointedSubspace};

fn main() -> pointedmiss::Result<()> {
    let prefix = std::env::args().nth(1).unwrap_or_else(|| "whitening".into());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut records: Vec<IncompleteRecord> = (0..60)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            IncompleteRecord::complete(vec![2.0 + 2.0 * a, 1.0 + 1.5 * a + 0.5 * b], None)
        })
        .collect();
    records.push(IncompleteRecord::from_options(&[Some(4.0), None], None));
    let data = Dataset::from_records(records)?;

    let moments = em_moments(&data, &EmConfig::for_data(&data))?;
    let white = whitening_map(&moments)?;
    let raw: Vec<PointedSubspace> = data.records().iter().map(subspace_from_record).collect();

    for (name, imputed) in [
        ("zero", raw.iter().map(impute_zero).collect::<Vec<_>>()),
        (
            "most-probable",
            raw.iter()
                .map(|s| impute_most_probable(s, &moments))
                .collect::<pointedmiss::Result<Vec<_>>>()?,
        ),
    ] {
        let after: Vec<PointedSubspace> = imputed.iter().map(|s| apply_affine(&white, s)).collect::<Result<_, _>>()?;
        let path = format!("{prefix}-{name}.svg");
        render2d_pair(&imputed, &after, &path)?;

        let line = after.last().unwrap();
        let expected = white.matrix() * DVector::from_vec(vec![0.0, 1.0]);
        let cos = (line.basis().column(0).dot(&expected) / expected.norm()).abs();
        println!(
            "{path}: basepoint {:?} -> {:?}, |cos(direction, Σ^-1/2 e2)| = {cos:.12}",
            imputed.last().unwrap().basepoint().as_slice(),
            line.basepoint().as_slice()
        );
    }
    Ok(())
}
