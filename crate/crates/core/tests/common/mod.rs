//! Helpers shared by the integration tests. The dense operators here are
//! built from closed-form differentiation matrices, independently of the
//! FFT code under test.
#![allow(dead_code)]

use std::f64::consts::PI;

use acon::chem::ModelParams;
use acon::energy::PhaseState;
use acon::grid::{PeriodicGrid, ScalarField};
use acon::init::{generate, InitSpec};
use acon::random::UniformSource;
use nalgebra::{DMatrix, DVector};

/// Standard scenario: unit square, `ε = 0.1`, moderate long-range coupling.
pub fn standard_params() -> ModelParams {
    ModelParams::new(0.1, [[20.0, 5.0], [5.0, 20.0]], [0.3, 0.3], 100.0).unwrap()
}

pub fn standard_state(n: usize, seed: u64) -> PhaseState {
    let grid = PeriodicGrid::uniform(2, n, 0.5).unwrap();
    let spec = InitSpec {
        seed,
        ..InitSpec::default()
    };
    generate(&spec, &grid, &standard_params()).unwrap()
}

pub fn symmetric_state(n: usize) -> PhaseState {
    let grid = PeriodicGrid::uniform(2, n, 0.5).unwrap();
    let p = ModelParams::new(0.1, [[20.0, 5.0], [5.0, 20.0]], [7.0 / 27.0; 2], 100.0).unwrap();
    let third = ScalarField::constant(&grid, 1.0 / 3.0);
    PhaseState::new(third.clone(), third, p).unwrap()
}

pub fn random_field(grid: &PeriodicGrid, rng: &mut UniformSource) -> ScalarField {
    let values = (0..grid.len()).map(|_| rng.symmetric()).collect();
    ScalarField::new(grid, values).unwrap()
}

/// Fourier second-derivative matrix on `n` equispaced nodes of a period
/// `2·half_length` (closed form, `n` even).
pub fn second_derivative_matrix(n: usize, half_length: f64) -> DMatrix<f64> {
    assert!(n.is_multiple_of(2));
    let h = 2.0 * PI / n as f64;
    let scale = (PI / half_length).powi(2);
    DMatrix::from_fn(n, n, |j, l| {
        let entry = if j == l {
            -PI * PI / (3.0 * h * h) - 1.0 / 6.0
        } else {
            let d = j as i64 - l as i64;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            -sign / (2.0 * (d as f64 * h / 2.0).sin().powi(2))
        };
        scale * entry
    })
}

/// Dense Laplacian on a row-major grid (axis 0 slowest) as a Kronecker sum.
pub fn dense_laplacian(grid: &PeriodicGrid) -> DMatrix<f64> {
    let points = grid.points();
    let n = grid.len();
    let mut total = DMatrix::zeros(n, n);
    for axis in 0..points.len() {
        let mut term = DMatrix::from_element(1, 1, 1.0);
        for (a, &m) in points.iter().enumerate() {
            let factor = if a == axis {
                second_derivative_matrix(m, grid.half_lengths()[a])
            } else {
                DMatrix::identity(m, m)
            };
            term = term.kronecker(&factor);
        }
        total += term;
    }
    total
}

/// Moore–Penrose inverse of `-Δ` (constants form its null space).
pub fn dense_inv_neg_laplacian(grid: &PeriodicGrid) -> DMatrix<f64> {
    (-dense_laplacian(grid)).pseudo_inverse(1e-9).unwrap()
}

pub fn apply(m: &DMatrix<f64>, f: &ScalarField) -> ScalarField {
    let v = m * DVector::from_column_slice(f.values());
    ScalarField::new(f.grid(), v.as_slice().to_vec()).unwrap()
}

pub fn rel_err(a: &ScalarField, b: &ScalarField) -> f64 {
    a.distance(b) / b.norm().max(f64::MIN_POSITIVE)
}

pub fn mean(f: &ScalarField) -> f64 {
    f.values().iter().sum::<f64>() / f.values().len() as f64
}
