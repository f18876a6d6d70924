//! Local linear models: least-squares fits, per-point likelihood scores and
//! the cumulative score process that locates parameter instability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod qr;
mod score;

pub use score::{cumulative_score_process, ScoreProcess, SplitPoint};
pub(crate) use score::{scan_axis, score_rows, sorted_order};

use qr::{ColMatrix, PivotedQr};

/// Residuals below this are treated as an exact fit when the response has
/// no variance.
const EXACT_FIT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} points to fit {needed} coefficients, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("{points} points but {values} values")]
    LengthMismatch { points: usize, values: usize },
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("leaf is pure: residual variance is zero")]
    PureLeaf,
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
}

/// An affine model `y = beta_0 + sum_j beta_j x_j` with its fit statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLinearModel {
    /// Intercept first, then one slope per axis.
    pub beta: Vec<f64>,
    /// Mean squared residual over the fitting points.
    pub sigma2: f64,
    /// Coefficient of determination; `-inf` flags a non-constant residual
    /// on a constant response (unreachable for exact arithmetic).
    pub r2: f64,
    /// Number of fitting points.
    pub n: usize,
}

impl LocalLinearModel {
    pub fn dim(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn intercept(&self) -> f64 {
        self.beta[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.beta[1..]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.beta[1..]
            .iter()
            .zip(x)
            .fold(self.beta[0], |acc, (b, xi)| acc + b * xi)
    }

    pub fn residual(&self, x: &[f64], y: f64) -> f64 {
        y - self.predict(x)
    }

    /// True when the fit is exact and no score process can be formed.
    pub fn is_pure(&self) -> bool {
        self.sigma2 == 0.0
    }
}

fn validate<P: AsRef<[f64]>>(points: &[P], values: &[f64]) -> Result<usize, FitError> {
    if points.len() != values.len() {
        return Err(FitError::LengthMismatch {
            points: points.len(),
            values: values.len(),
        });
    }
    let Some(first) = points.first() else {
        return Err(FitError::TooFewPoints { needed: 1, got: 0 });
    };
    let d = first.as_ref().len();
    if let Some((index, p)) = points
        .iter()
        .enumerate()
        .find(|(_, p)| p.as_ref().len() != d)
    {
        return Err(FitError::DimensionMismatch {
            index,
            expected: d,
            got: p.as_ref().len(),
        });
    }
    Ok(d)
}

/// Ordinary least squares with an intercept. Requires `n >= d + 1`.
pub fn fit_ols<P: AsRef<[f64]>>(
    points: &[P],
    values: &[f64],
) -> Result<LocalLinearModel, FitError> {
    let d = validate(points, values)?;
    if points.len() < d + 1 {
        return Err(FitError::TooFewPoints {
            needed: d + 1,
            got: points.len(),
        });
    }
    Ok(fit_unchecked(points, values, d))
}

/// Least squares for any `n >= 1`; underdetermined designs get the
/// minimal-norm coefficients of the centred and scaled problem.
pub(crate) fn fit_unchecked<P: AsRef<[f64]>>(
    points: &[P],
    values: &[f64],
    d: usize,
) -> LocalLinearModel {
    let n = points.len();
    // Centre and scale every column to [-1, 1] for conditioning; constant
    // columns become zero and receive a zero slope.
    let mut center = vec![0.0; d];
    for p in points {
        for (c, x) in center.iter_mut().zip(p.as_ref()) {
            *c += x;
        }
    }
    for c in &mut center {
        *c /= n as f64;
    }
    let mut spread = vec![0.0f64; d];
    for p in points {
        for j in 0..d {
            spread[j] = spread[j].max((p.as_ref()[j] - center[j]).abs());
        }
    }
    for s in &mut spread {
        if *s == 0.0 {
            *s = 1.0;
        }
    }

    let mut design = ColMatrix::zeros(n, d + 1);
    for (i, p) in points.iter().enumerate() {
        design.set(i, 0, 1.0);
        for j in 0..d {
            design.set(i, j + 1, (p.as_ref()[j] - center[j]) / spread[j]);
        }
    }
    let scaled_rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            std::iter::once(1.0)
                .chain((0..d).map(|j| (points[i].as_ref()[j] - center[j]) / spread[j]))
                .collect()
        })
        .collect();
    let qr = PivotedQr::factor(design);
    let mut gamma = qr.solve(values);
    // One step of iterative refinement sharpens the residual orthogonality.
    let correction_rhs: Vec<f64> = scaled_rows
        .iter()
        .zip(values)
        .map(|(row, y)| y - row.iter().zip(&gamma).map(|(a, g)| a * g).sum::<f64>())
        .collect();
    let delta = qr.solve(&correction_rhs);
    for (g, dg) in gamma.iter_mut().zip(delta) {
        *g += dg;
    }

    let mut beta = vec![0.0; d + 1];
    beta[0] = gamma[0];
    for j in 0..d {
        beta[j + 1] = gamma[j + 1] / spread[j];
        beta[0] -= beta[j + 1] * center[j];
    }

    let mut model = LocalLinearModel {
        beta,
        sigma2: 0.0,
        r2: 1.0,
        n,
    };
    let mean_y = values.iter().sum::<f64>() / n as f64;
    let mut sse = 0.0;
    let mut sst = 0.0;
    let mut max_abs_residual = 0.0f64;
    for (p, &y) in points.iter().zip(values) {
        let r = model.residual(p.as_ref(), y);
        sse += r * r;
        sst += (y - mean_y) * (y - mean_y);
        max_abs_residual = max_abs_residual.max(r.abs());
    }
    model.sigma2 = sse / n as f64;
    model.r2 = if sst == 0.0 {
        if max_abs_residual < EXACT_FIT_TOL {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else if sse == 0.0 {
        1.0
    } else {
        1.0 - sse / sst
    };
    model
}

/// Per-point likelihood scores `x~_i (y_i - beta . x~_i) / sigma^2`, one
/// row of `d + 1` entries per point.
pub fn scores<P: AsRef<[f64]>>(
    model: &LocalLinearModel,
    points: &[P],
    values: &[f64],
) -> Result<Vec<Vec<f64>>, FitError> {
    validate(points, values)?;
    if model.is_pure() {
        return Err(FitError::PureLeaf);
    }
    Ok(points
        .iter()
        .zip(values)
        .map(|(p, &y)| score_row(model, p.as_ref(), y))
        .collect())
}

pub(crate) fn score_row(model: &LocalLinearModel, x: &[f64], y: f64) -> Vec<f64> {
    let w = model.residual(x, y) / model.sigma2;
    std::iter::once(w)
        .chain(x.iter().map(|xi| xi * w))
        .collect()
}
