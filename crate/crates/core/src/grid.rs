//! Uniform periodic grids, sampled scalar fields and the Fourier-diagonal
//! operators built on them.
//!
//! The box is `∏[-X_a, X_a]` with period `2 X_a` along axis `a`, so the
//! Fourier mode with signed index `m` has wavenumber `k = π m / X_a`.
//! Samples are stored row-major (axis 0 slowest) at `x = -X_a + j h_a`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("expected {expected} axis entries, got {got}")]
    AxisCount { expected: usize, got: usize },
    #[error("axis {axis}: at least 4 points required, got {points}")]
    TooFewPoints { axis: usize, points: usize },
    #[error("axis {axis}: half-length must be positive and finite, got {value}")]
    HalfLength { axis: usize, value: f64 },
    #[error("field has {got} samples but the grid has {expected} nodes")]
    Length { expected: usize, got: usize },
}

/// Squared wavenumbers `|k|^2` per Fourier mode plus per-axis first-derivative
/// wavenumbers (Nyquist entry zeroed).
#[derive(Debug, Clone)]
pub struct WaveTable {
    squared: Vec<f64>,
    axis_k: Vec<Vec<f64>>,
}

impl WaveTable {
    fn new(points: &[usize], half_lengths: &[f64]) -> Self {
        let full: Vec<Vec<f64>> = points
            .iter()
            .zip(half_lengths)
            .map(|(&n, &x)| {
                (0..n)
                    .map(|m| std::f64::consts::PI * signed_index(m, n) as f64 / x)
                    .collect()
            })
            .collect();
        let axis_k = points
            .iter()
            .zip(&full)
            .map(|(&n, ks)| {
                let mut ks = ks.clone();
                if n % 2 == 0 {
                    ks[n / 2] = 0.0;
                }
                ks
            })
            .collect();

        let total: usize = points.iter().product();
        let mut squared = vec![0.0; total];
        for (flat, k2) in squared.iter_mut().enumerate() {
            let mut rem = flat;
            for axis in (0..points.len()).rev() {
                let m = rem % points[axis];
                rem /= points[axis];
                *k2 += full[axis][m] * full[axis][m];
            }
        }
        Self { squared, axis_k }
    }

    pub fn squared_wavenumbers(&self) -> &[f64] {
        &self.squared
    }

    /// First-derivative wavenumbers along `axis`, Nyquist mode set to zero.
    pub fn derivative_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.axis_k[axis]
    }
}

/// Signed Fourier index for position `m` of an `n`-point transform. The
/// Nyquist index of an even transform maps to `+n/2`.
pub fn signed_index(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

struct GridInner {
    points: Vec<usize>,
    half_lengths: Vec<f64>,
    spacing: Vec<f64>,
    cell_volume: f64,
    total_volume: f64,
    waves: WaveTable,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

/// A uniform periodic lattice in 2 or 3 dimensions. Cloning is cheap; FFT
/// plans and the wave table are shared.
#[derive(Clone)]
pub struct PeriodicGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid")
            .field("points", &self.inner.points)
            .field("half_lengths", &self.inner.half_lengths)
            .finish()
    }
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.points == other.inner.points
                && self.inner.half_lengths == other.inner.half_lengths)
    }
}

impl PeriodicGrid {
    pub fn new(points: &[usize], half_lengths: &[f64]) -> Result<Self, GridError> {
        let dim = points.len();
        if !(2..=3).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if half_lengths.len() != dim {
            return Err(GridError::AxisCount {
                expected: dim,
                got: half_lengths.len(),
            });
        }
        for (axis, (&n, &x)) in points.iter().zip(half_lengths).enumerate() {
            if n < 4 {
                return Err(GridError::TooFewPoints { axis, points: n });
            }
            if !(x > 0.0 && x.is_finite()) {
                return Err(GridError::HalfLength { axis, value: x });
            }
        }

        let spacing: Vec<f64> = points
            .iter()
            .zip(half_lengths)
            .map(|(&n, &x)| 2.0 * x / n as f64)
            .collect();
        let cell_volume = spacing.iter().product();
        let total_volume = half_lengths.iter().map(|x| 2.0 * x).product();

        let mut planner = FftPlanner::new();
        let forward = points.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = points.iter().map(|&n| planner.plan_fft_inverse(n)).collect();

        Ok(Self {
            inner: Arc::new(GridInner {
                points: points.to_vec(),
                half_lengths: half_lengths.to_vec(),
                spacing,
                cell_volume,
                total_volume,
                waves: WaveTable::new(points, half_lengths),
                forward,
                inverse,
            }),
        })
    }

    /// Square (or cubic) grid with the same resolution and half-length on every axis.
    pub fn uniform(dim: usize, points: usize, half_length: f64) -> Result<Self, GridError> {
        Self::new(&vec![points; dim], &vec![half_length; dim])
    }

    pub fn dim(&self) -> usize {
        self.inner.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.inner.points
    }

    pub fn half_lengths(&self) -> &[f64] {
        &self.inner.half_lengths
    }

    pub fn spacing(&self) -> &[f64] {
        &self.inner.spacing
    }

    pub fn len(&self) -> usize {
        self.inner.waves.squared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.inner.cell_volume
    }

    pub fn total_volume(&self) -> f64 {
        self.inner.total_volume
    }

    pub fn waves(&self) -> &WaveTable {
        &self.inner.waves
    }

    /// Physical coordinates of the node with flat index `flat`.
    pub fn coordinates(&self, flat: usize) -> Vec<f64> {
        let dim = self.dim();
        let mut coords = vec![0.0; dim];
        let mut rem = flat;
        for axis in (0..dim).rev() {
            let j = rem % self.inner.points[axis];
            rem /= self.inner.points[axis];
            coords[axis] = -self.inner.half_lengths[axis] + j as f64 * self.inner.spacing[axis];
        }
        coords
    }

    /// In-place multi-dimensional DFT. The inverse includes the `1/N` factor.
    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let points = &self.inner.points;
        let total = data.len();
        let mut stride = 1;
        for axis in (0..points.len()).rev() {
            let n = points[axis];
            let plan = if inverse {
                &self.inner.inverse[axis]
            } else {
                &self.inner.forward[axis]
            };
            if stride == 1 {
                plan.process(data);
            } else {
                let mut line = vec![Complex64::new(0.0, 0.0); n];
                let block = n * stride;
                for outer in (0..total).step_by(block) {
                    for inner in 0..stride {
                        let base = outer + inner;
                        for (j, slot) in line.iter_mut().enumerate() {
                            *slot = data[base + j * stride];
                        }
                        plan.process(&mut line);
                        for (j, v) in line.iter().enumerate() {
                            data[base + j * stride] = *v;
                        }
                    }
                }
            }
            stride *= n;
        }
        if inverse {
            let scale = 1.0 / total as f64;
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }

    pub fn forward(&self, field: &ScalarField) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = field
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.transform(&mut data, false);
        data
    }

    /// Inverse transform, keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> ScalarField {
        self.transform(&mut spectrum, true);
        ScalarField {
            grid: self.clone(),
            values: spectrum.into_iter().map(|c| c.re).collect(),
        }
    }

    /// Applies a real Fourier multiplier given as a function of `|k|^2`.
    pub fn apply_symbol(&self, field: &ScalarField, symbol: impl Fn(f64) -> f64) -> ScalarField {
        let mut spec = self.forward(field);
        for (c, &k2) in spec.iter_mut().zip(&self.inner.waves.squared) {
            *c *= symbol(k2);
        }
        self.inverse_real(spec)
    }
}

/// Real samples of a field on a [`PeriodicGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &PeriodicGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn constant(grid: &PeriodicGrid, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    /// Samples `func` at every node's coordinates.
    pub fn from_fn(grid: &PeriodicGrid, func: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| func(&grid.coordinates(i))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, func: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| func(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Self, func: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| func(a, b))
                .collect(),
        }
    }

    /// `self + scale * other`
    pub fn axpy(&self, scale: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + scale * b)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// `∫ f dx`
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// L² inner product `∫ f g dx`.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// L² distance `‖self - other‖₂`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.zip_map(other, |a, b| a - b).norm()
    }

    /// Cyclic shift by `offsets[a]` nodes along each axis.
    pub fn shifted(&self, offsets: &[usize]) -> Self {
        let points = self.grid.points();
        let mut out = vec![0.0; self.values.len()];
        for (flat, &v) in self.values.iter().enumerate() {
            let mut rem = flat;
            let mut target = 0;
            let mut stride = 1;
            for axis in (0..points.len()).rev() {
                let j = rem % points[axis];
                rem /= points[axis];
                target += ((j + offsets[axis]) % points[axis]) * stride;
                stride *= points[axis];
            }
            out[target] = v;
        }
        Self {
            grid: self.grid.clone(),
            values: out,
        }
    }
}

/// Average `(1/|T|) ∫ f dx`.
pub fn mean(field: &ScalarField) -> f64 {
    field.integral() / field.grid.total_volume()
}

/// Spectral Laplacian (multiplier `-|k|^2`).
pub fn laplacian(field: &ScalarField) -> ScalarField {
    field.grid.apply_symbol(field, |k2| -k2)
}

/// Zero-mean solution `Ψ` of `-ΔΨ = w - mean(w)`.
pub fn inv_neg_laplacian(field: &ScalarField) -> ScalarField {
    field
        .grid
        .apply_symbol(field, |k2| if k2 > 0.0 { 1.0 / k2 } else { 0.0 })
}

/// Resolvent `(I - λΔ)^{-1}`, a mean-preserving L² contraction.
///
/// # Panics
/// If `lambda` is not positive.
pub fn resolvent(field: &ScalarField, lambda: f64) -> ScalarField {
    assert!(lambda > 0.0, "resolvent parameter must be positive");
    field.grid.apply_symbol(field, |k2| 1.0 / (1.0 + lambda * k2))
}

/// Spectral gradient, one component per axis. The Nyquist mode of each
/// derivative is dropped so the result is real.
pub fn gradient(field: &ScalarField) -> Vec<ScalarField> {
    let grid = &field.grid;
    let spec = grid.forward(field);
    let points = grid.points();
    (0..grid.dim())
        .map(|axis| {
            let ks = grid.waves().derivative_wavenumbers(axis);
            let stride: usize = points[axis + 1..].iter().product();
            let mut comp = spec.clone();
            for (flat, c) in comp.iter_mut().enumerate() {
                let m = (flat / stride) % points[axis];
                *c *= Complex64::new(0.0, ks[m]);
            }
            grid.inverse_real(comp)
        })
        .collect()
}

/// Dirichlet form `∫ ∇a·∇b dx`, evaluated as `-∫ a Δb dx` so that it is the
/// exact quadratic form of [`laplacian`].
pub fn dirichlet_form(a: &ScalarField, b: &ScalarField) -> f64 {
    -a.dot(&laplacian(b))
}

/// `‖f‖²_{H¹} = ∫ f² + ∫ |∇f|²`.
pub fn h1_norm_sq(field: &ScalarField) -> f64 {
    field.norm_sq() + dirichlet_form(field, field)
}
