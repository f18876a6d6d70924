//! The black-box prediction function being explained.
//!
//! A [`Model`] is anything that maps a batch of points to one real value per
//! point. [`BlackBox`] wraps a model with input/output validation and a
//! monotone query counter, so callers can prove that explanation paths never
//! touch the model.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub mod protocol;
pub mod synthetic;

pub use protocol::{HttpAdapter, StdioAdapter};
pub use synthetic::{make_random_pwl, LinearFunction, PiecewiseLinearGroundTruth, SyntheticError};

/// Points per adapter call when a caller does not choose.
pub const DEFAULT_BATCH_SIZE: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlackBoxError {
    #[error("adapter transport failure: {0}")]
    Transport(String),
    #[error("adapter reported an error: {0}")]
    Adapter(String),
    #[error("adapter protocol violation: {0}")]
    Protocol(String),
    #[error("non-finite prediction {value} at point index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("model returned {got} values for {expected} points")]
    LengthMismatch { expected: usize, got: usize },
    #[error("point {index} has dimension {got}, model expects {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
}

/// A batch prediction function `f: X -> R`.
///
/// Classifiers are expected to return the pseudo-probability of one
/// designated class.
pub trait Model: Send + Sync {
    /// Input dimension, when the model knows it.
    fn dim(&self) -> Option<usize> {
        None
    }

    fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, BlackBoxError>;
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn dim(&self) -> Option<usize> {
        (**self).dim()
    }

    fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, BlackBoxError> {
        (**self).predict(points)
    }
}

/// Adapts a per-point closure into a [`Model`].
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, BlackBoxError> {
        Ok(points.iter().map(|p| (self.f)(p)).collect())
    }
}

/// A validated, query-counting handle on a [`Model`].
pub struct BlackBox {
    model: Box<dyn Model>,
    queries: AtomicU64,
}

impl fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBox")
            .field("dim", &self.model.dim())
            .field("query_count", &self.query_count())
            .finish()
    }
}

impl BlackBox {
    pub fn new(model: impl Model + 'static) -> Self {
        Self {
            model: Box::new(model),
            queries: AtomicU64::new(0),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.model.dim()
    }

    /// Total number of points sent to the model so far.
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::SeqCst)
    }

    /// One model call for the whole batch. Every prediction must be finite.
    pub fn predict_batch(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, BlackBoxError> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(d) = self.model.dim() {
            if let Some((index, p)) = points.iter().enumerate().find(|(_, p)| p.len() != d) {
                return Err(BlackBoxError::DimensionMismatch {
                    index,
                    expected: d,
                    got: p.len(),
                });
            }
        }
        self.queries
            .fetch_add(points.len() as u64, Ordering::SeqCst);
        let values = self.model.predict(points)?;
        if values.len() != points.len() {
            return Err(BlackBoxError::LengthMismatch {
                expected: points.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(BlackBoxError::NonFinite { index, value });
        }
        Ok(values)
    }

    /// Like [`predict_batch`](Self::predict_batch), split into calls of at
    /// most `batch_size` points. Indices in errors refer to `points`.
    pub fn predict_chunked(
        &self,
        points: &[Vec<f64>],
        batch_size: usize,
    ) -> Result<Vec<f64>, BlackBoxError> {
        let batch_size = batch_size.max(1);
        let mut out = Vec::with_capacity(points.len());
        for (chunk_no, chunk) in points.chunks(batch_size).enumerate() {
            let offset = chunk_no * batch_size;
            let values = self.predict_batch(chunk).map_err(|e| match e {
                BlackBoxError::NonFinite { index, value } => BlackBoxError::NonFinite {
                    index: index + offset,
                    value,
                },
                BlackBoxError::DimensionMismatch {
                    index,
                    expected,
                    got,
                } => BlackBoxError::DimensionMismatch {
                    index: index + offset,
                    expected,
                    got,
                },
                other => other,
            })?;
            out.extend(values);
        }
        Ok(out)
    }
}
