//! Grid-aware signals and the L² inner product.
//!
//! Every formula in the crate is written against [`inner_product`], which
//! carries the cell volume `h^d` so that quantities such as eigenvalues stay
//! consistent when the grid is refined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A regular 1D or 2D sampling grid.
///
/// Shapes are stored row-major: a 2D grid is `[rows, cols]` and axis 0
/// runs along the rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    shape: Vec<usize>,
    spacing: Vec<f64>,
}

impl GridSpec {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "dims must be 1 or 2, got {}",
                shape.len()
            )));
        }
        if spacing.len() != shape.len() {
            return Err(Error::InvalidGrid(format!(
                "{} spacing entries for {} axes",
                spacing.len(),
                shape.len()
            )));
        }
        if let Some(&n) = shape.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidGrid(format!(
                "every axis needs at least 2 samples, got {n}"
            )));
        }
        if let Some(&h) = spacing.iter().find(|&&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive, got {h}"
            )));
        }
        Ok(GridSpec { shape, spacing })
    }

    pub fn line(n: usize, h: f64) -> Result<Self> {
        GridSpec::new(vec![n], vec![h])
    }

    pub fn plane(rows: usize, cols: usize, h: f64) -> Result<Self> {
        GridSpec::new(vec![rows, cols], vec![h, h])
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^d`, the measure of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "grid {:?}/{:?} vs {:?}/{:?}",
                self.shape, self.spacing, other.shape, other.spacing
            )))
        }
    }
}

/// Real-valued samples on a [`GridSpec`]. Values are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Signal {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a grid of {} samples",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Signal { grid, values })
    }

    /// Builds a signal without validation; callers guarantee finiteness.
    pub(crate) fn from_parts(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Signal { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Signal::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        let n = grid.len();
        Signal {
            grid,
            values: vec![c; n],
        }
    }

    pub fn from_fn_1d(n: usize, h: f64, f: impl Fn(usize) -> f64) -> Result<Self> {
        let grid = GridSpec::line(n, h)?;
        Signal::new(grid, (0..n).map(f).collect())
    }

    /// `f(row, col)` evaluated on a square grid.
    pub fn from_fn_2d(n: usize, h: f64, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let grid = GridSpec::plane(n, n, h)?;
        let values = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Signal::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, alpha: f64) -> Signal {
        self.map(|v| alpha * v)
    }

    pub fn shifted(&self, c: f64) -> Signal {
        self.map(|v| v + c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Signal {
        Signal::from_parts(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &Signal, f: impl Fn(f64, f64) -> f64) -> Result<Signal> {
        self.grid.check_same(&other.grid)?;
        Ok(Signal::from_parts(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Signal) -> Result<Signal> {
        self.zip_map(other, |a, b| a + alpha * b)
    }
}

/// `Σ uᵢ vᵢ · h^d`.
pub fn inner_product(u: &Signal, v: &Signal) -> Result<f64> {
    u.grid.check_same(&v.grid)?;
    Ok(dot(&u.values, &v.values) * u.grid.cell_volume())
}

pub fn l2_norm(u: &Signal) -> f64 {
    (dot(&u.values, &u.values) * u.grid.cell_volume()).sqrt()
}

/// Relative L² distance `‖a − b‖ / ‖b‖` (absolute when `b` is zero).
pub fn relative_error(a: &Signal, b: &Signal) -> Result<f64> {
    let diff = l2_norm(&a.sub(b)?);
    let nb = l2_norm(b);
    Ok(if nb > 0.0 { diff / nb } else { diff })
}

/// Splits `f` into its zero-mean part and its mean.
pub fn split_mean(f: &Signal) -> (Signal, f64) {
    let mean = f.mean();
    (f.shifted(-mean), mean)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
