//! Dense parameter vectors and the order statistics the aggregation rules
//! are built from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A `d`-dimensional real vector: a model parameter, a gradient or a momentum.
///
/// Construction rejects empty and non-finite coordinates, so every value of
/// this type that enters an operation is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector<S> {
    coords: Vec<S>,
}

impl<S: Scalar> ParamVector<S> {
    pub fn new(coords: Vec<S>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyInput);
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { coords })
    }

    /// Builds a vector from `f64` coordinates, converting to `S`.
    pub fn from_f64(coords: &[f64]) -> Result<Self> {
        Self::new(coords.iter().map(|&c| S::lit(c)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            coords: vec![S::zero(); dim],
        }
    }

    pub fn filled(dim: usize, value: S) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            coords: vec![value; dim],
        }
    }

    /// Wraps coordinates without validation. Callers guarantee `coords` is
    /// nonempty; finiteness is checked by [`ParamVector::is_finite`] where it
    /// matters.
    pub(crate) fn from_raw(coords: Vec<S>) -> Self {
        debug_assert!(!coords.is_empty());
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<S> {
        self.coords
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.as_f64()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    pub fn ensure_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        other.ensure_dim(self.dim())?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        other.ensure_dim(self.dim())?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scale(&self, alpha: S) -> Self {
        Self::from_raw(self.coords.iter().map(|&c| c * alpha).collect())
    }

    pub fn neg(&self) -> Self {
        Self::from_raw(self.coords.iter().map(|&c| -c).collect())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: S, other: &Self) -> Result<()> {
        other.ensure_dim(self.dim())?;
        for (a, &b) in self.coords.iter_mut().zip(&other.coords) {
            *a = *a + alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<S> {
        other.ensure_dim(self.dim())?;
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn norm_sq(&self) -> S {
        self.coords.iter().map(|&c| c * c).sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> S {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Self) -> S {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    }

    pub fn dist(&self, other: &Self) -> S {
        self.dist_sq(other).sqrt()
    }

    fn zip_with(&self, other: &Self, op: impl Fn(S, S) -> S) -> Self {
        Self::from_raw(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        )
    }
}

/// Checks that `xs` is nonempty and every vector has the same dimension,
/// returning that dimension.
pub fn common_dim<S: Scalar>(xs: &[ParamVector<S>]) -> Result<usize> {
    let first = xs.first().ok_or(Error::EmptyInput)?;
    let dim = first.dim();
    for x in &xs[1..] {
        x.ensure_dim(dim)?;
    }
    Ok(dim)
}

/// Mean of the vectors selected by `indices`.
///
/// Computed relative to the first selected vector, `x_a + (1/k) Σ (x_i - x_a)`,
/// so a selection of identical vectors returns that vector bit for bit.
pub(crate) fn mean_of<S: Scalar>(xs: &[ParamVector<S>], indices: &[usize]) -> ParamVector<S> {
    debug_assert!(!indices.is_empty());
    let anchor = &xs[indices[0]];
    let k = S::from_count(indices.len());
    let coords = (0..anchor.dim())
        .map(|j| {
            let a = anchor.coords[j];
            let offset: S = indices.iter().map(|&i| xs[i].coords[j] - a).sum();
            a + offset / k
        })
        .collect();
    ParamVector::from_raw(coords)
}

/// Mean of plain scalars using the same anchored summation as [`mean_of`].
pub(crate) fn scalar_mean<S: Scalar>(values: &[S]) -> S {
    debug_assert!(!values.is_empty());
    let a = values[0];
    let offset: S = values.iter().map(|&v| v - a).sum();
    a + offset / S::from_count(values.len())
}

/// Coordinate-wise arithmetic mean.
pub fn vec_mean<S: Scalar>(xs: &[ParamVector<S>]) -> Result<ParamVector<S>> {
    common_dim(xs)?;
    let all: Vec<usize> = (0..xs.len()).collect();
    Ok(mean_of(xs, &all))
}

/// Largest pairwise Euclidean distance, 0 for a single vector.
pub fn diameter<S: Scalar>(xs: &[ParamVector<S>]) -> Result<S> {
    common_dim(xs)?;
    let mut best = S::zero();
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            best = best.max(xs[i].dist(&xs[j]));
        }
    }
    Ok(best)
}

/// Diameter of the subset `indices`, read off a precomputed distance matrix.
pub(crate) fn subset_diameter<S: Scalar>(dist: &[Vec<S>], indices: &[usize]) -> S {
    let mut best = S::zero();
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a + 1..] {
            best = best.max(dist[i][j]);
        }
    }
    best
}

pub(crate) fn distance_matrix<S: Scalar>(xs: &[ParamVector<S>]) -> Vec<Vec<S>> {
    let n = xs.len();
    let mut dist = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = xs[i].dist(&xs[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    dist
}

/// Sorts a copy of `values`; NaN-free input is a precondition.
pub(crate) fn sorted<S: Scalar>(values: &[S]) -> Vec<S> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in sort"));
    v
}

/// Median of a list of reals. Even counts return the mid-point of the two
/// central order statistics.
pub fn coord_median<S: Scalar>(values: &[S]) -> Result<S> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(median_of_sorted(&sorted(values)))
}

pub(crate) fn median_of_sorted<S: Scalar>(sorted: &[S]) -> S {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / S::lit(2.0)
    }
}
