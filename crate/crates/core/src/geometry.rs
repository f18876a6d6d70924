//! Axis-aligned hyper-rectangles and the point operations the surrogate
//! tree relies on.
//!
//! Cells are half-open, `[lower, upper)` on every axis, except that a cell
//! face lying on the outer boundary of the domain is closed. With this
//! convention every point of the domain belongs to exactly one leaf.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Beyond this many axes volumes are accumulated in log-space.
const LOG_VOLUME_DIM: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("hyper-rectangle needs at least one axis")]
    Empty,
    #[error("axis {axis}: lower bound {lower} must be strictly below upper bound {upper}")]
    DegenerateAxis { axis: usize, lower: f64, upper: f64 },
    #[error("axis {axis}: non-finite coordinate")]
    NonFinite { axis: usize },
}

/// An axis-aligned box `prod_j [lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRectangle")]
pub struct HyperRectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawRectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawRectangle> for HyperRectangle {
    type Error = GeometryError;

    fn try_from(raw: RawRectangle) -> Result<Self, Self::Error> {
        HyperRectangle::new(raw.lower, raw.upper)
    }
}

impl HyperRectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(GeometryError::Empty);
        }
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(GeometryError::NonFinite { axis });
            }
            if lo >= hi {
                return Err(GeometryError::DegenerateAxis {
                    axis,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0, 1]^d`.
    pub fn unit(d: usize) -> Result<Self, GeometryError> {
        Self::new(vec![0.0; d], vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        if self.dim() > LOG_VOLUME_DIM {
            self.log_volume().exp()
        } else {
            (0..self.dim()).map(|j| self.width(j)).product()
        }
    }

    pub fn log_volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.width(j).ln()).sum()
    }

    /// `vol(self) / vol(outer)`, accumulated in log-space for many axes.
    pub fn volume_ratio(&self, outer: &HyperRectangle) -> f64 {
        debug_assert_eq!(self.dim(), outer.dim());
        if self.dim() > LOG_VOLUME_DIM {
            (self.log_volume() - outer.log_volume()).exp()
        } else {
            (0..self.dim())
                .map(|j| self.width(j) / outer.width(j))
                .product()
        }
    }

    fn check_dim(&self, p: &[f64]) -> Result<(), GeometryError> {
        if p.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Coordinate-wise clamp of `p` into the closed box.
    pub fn project(&self, p: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(p)?;
        Ok(p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
            .collect())
    }

    /// Half-open membership; faces shared with `domain`'s upper boundary are
    /// closed.
    pub fn contains(&self, p: &[f64], domain: &HyperRectangle) -> Result<bool, GeometryError> {
        self.check_dim(p)?;
        domain.check_dim(p)?;
        Ok(p.iter().enumerate().all(|(j, &x)| {
            x >= self.lower[j]
                && (x < self.upper[j] || (x == self.upper[j] && self.upper[j] == domain.upper[j]))
        }))
    }

    /// Closed-box membership, used for the domain itself.
    pub fn contains_closed(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .enumerate()
                .all(|(j, &x)| x >= self.lower[j] && x <= self.upper[j])
    }

    /// Extent of the cell along the line through `p` parallel to `axis`.
    pub fn axis_interval(&self, p: &[f64], axis: usize) -> Result<(f64, f64), GeometryError> {
        self.check_dim(p)?;
        if axis >= self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: axis + 1,
            });
        }
        Ok((self.lower[axis], self.upper[axis]))
    }

    /// Splits at `threshold` on `axis` into `(upper[axis] = t, lower[axis] = t)`.
    pub fn split(&self, axis: usize, threshold: f64) -> (HyperRectangle, HyperRectangle) {
        assert!(
            threshold > self.lower[axis] && threshold < self.upper[axis],
            "split threshold must lie strictly inside the cell"
        );
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[axis] = threshold;
        right.lower[axis] = threshold;
        (left, right)
    }
}

/// Checks that every coordinate is finite.
pub fn check_finite(p: &[f64]) -> Result<(), GeometryError> {
    match p.iter().position(|x| !x.is_finite()) {
        Some(axis) => Err(GeometryError::NonFinite { axis }),
        None => Ok(()),
    }
}
