//! Sampled real fields on a periodic grid.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::GridSpec;

/// Real samples of a function on a [`GridSpec`], tagged with a time.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: GridSpec<T>,
    values: Vec<T>,
    time_tag: T,
}

impl<T: Real> Field<T> {
    pub fn new(grid: GridSpec<T>, values: Vec<T>, time_tag: T) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::Domain(format!(
                "field has {} samples but the grid has {} nodes",
                values.len(),
                grid.n_points()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at node {j}")));
        }
        Ok(Self {
            grid,
            values,
            time_tag,
        })
    }

    pub fn from_fn(grid: GridSpec<T>, time_tag: T, f: impl Fn(T) -> T) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self {
            grid,
            values,
            time_tag,
        }
    }

    pub fn zeros(grid: GridSpec<T>, time_tag: T) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.n_points()],
            time_tag,
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn time_tag(&self) -> T {
        self.time_tag
    }

    pub fn set_time_tag(&mut self, t: T) {
        self.time_tag = t;
    }

    pub fn with_values(&self, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid,
            values,
            time_tag: self.time_tag,
        }
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.values)
    }

    /// Periodic trapezoid `L²` norm.
    pub fn l2_norm(&self) -> T {
        l2_norm(&self.values, self.grid.spacing())
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::from_usize_lossy(self.values.len())
    }
}

pub fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

pub fn l2_norm<T: Real>(v: &[T], dx: T) -> T {
    (v.iter().map(|x| *x * *x).sum::<T>() * dx).sqrt()
}
