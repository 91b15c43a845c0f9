//! A synthetic grayscale image cut into 8x8 blocks, two pixels missing, every
//! block projected onto two principal components. The two incomplete blocks
//! become lines in the plane.
//!
//! `cargo run --example pca_blocks -- [out.svg]`

use pointedmiss::harness::render2d;
use pointedmiss::impute::impute_zero;
use pointedmiss::moments::available_case_moments;
use pointedmiss::subspace::subspace_from_record;
use pointedmiss::{apply_affine, pca_map, Dataset, IncompleteRecord, PointedSubspace};

const SIDE: usize = 64;
const BLOCK: usize = 8;

fn pixel(x: usize, y: usize) -> f64 {
    let (x, y) = (x as f64 / SIDE as f64, y as f64 / SIDE as f64);
    let ring = ((x - 0.5).powi(2) + (y - 0.4).powi(2)).sqrt();
    128.0 + 80.0 * (12.0 * ring).cos() * (-3.0 * ring).exp() + 40.0 * (5.0 * x).sin() * y
}

fn main() -> pointedmiss::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "pca_blocks.svg".into());
    let missing = [(13, 21), (45, 50)];

    let mut records = Vec::new();
    for by in 0..SIDE / BLOCK {
        for bx in 0..SIDE / BLOCK {
            let mut cells = Vec::with_capacity(BLOCK * BLOCK);
            for dy in 0..BLOCK {
                for dx in 0..BLOCK {
                    let (x, y) = (bx * BLOCK + dx, by * BLOCK + dy);
                    cells.push((!missing.contains(&(x, y))).then(|| pixel(x, y)));
                }
            }
            records.push(IncompleteRecord::from_options(&cells, None));
        }
    }
    let data = Dataset::from_records(records)?;

    let moments = available_case_moments(&data, 1e-6)?;
    let pca = pca_map(&moments, 2)?;
    let projected: Vec<PointedSubspace> = data
        .records()
        .iter()
        .map(|r| apply_affine(&pca, &impute_zero(&subspace_from_record(r))))
        .collect::<pointedmiss::Result<_>>()?;
    render2d(&projected, &path)?;

    let lines = projected.iter().filter(|p| p.dim() == 1).count();
    println!("{path}: {} blocks, {lines} projected as lines", projected.len());
    Ok(())
}
