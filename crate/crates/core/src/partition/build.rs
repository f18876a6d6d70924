//! Recursive construction: best-split search, the recursion itself, and the
//! end-to-end build from a black box.

use log::debug;
use rayon::prelude::*;
use thiserror::Error;

use super::{summarize, BuildConfig, BuildError, Leaf, MeasurementSet, SurrogateTree, TreeNode};
use crate::blackbox::BlackBox;
use crate::geometry::HyperRectangle;
use crate::linfit::{self, fit_unchecked, scan_axis, score_rows, sorted_order, LocalLinearModel};
use crate::sobol;

/// Leaves at least this large recurse on the rayon pool.
const PARALLEL_MIN_POINTS: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("{got} points cannot be split with n_min = {n_min}")]
    TooFewPoints { got: usize, n_min: usize },
    #[error("leaf is pure")]
    PureLeaf,
    #[error("no axis separates the points")]
    NoSeparatingGap,
    #[error(transparent)]
    Fit(#[from] linfit::FitError),
}

/// Outcome of [`get_best_split`].
#[derive(Debug, Clone, PartialEq)]
pub struct BestSplit {
    pub axis: usize,
    pub threshold: f64,
    /// Points on the left of the threshold.
    pub left_count: usize,
    /// Score-process statistic per axis (zero where no split is possible).
    pub stats: Vec<f64>,
    /// The leaf's own least-squares model.
    pub model: LocalLinearModel,
}

/// Chooses the axis whose score process peaks highest and the threshold at
/// its peak, keeping at least `n_min` points on each side.
pub fn get_best_split<P: AsRef<[f64]> + Sync>(
    points: &[P],
    values: &[f64],
    n_min: usize,
) -> Result<BestSplit, SplitError> {
    let model = linfit::fit_ols(points, values)?;
    if points.len() < 2 * n_min {
        return Err(SplitError::TooFewPoints {
            got: points.len(),
            n_min,
        });
    }
    if model.is_pure() {
        return Err(SplitError::PureLeaf);
    }
    split_with_model(points, values, &model, n_min, false)
        .map(|(axis, threshold, left_count, stats)| BestSplit {
            axis,
            threshold,
            left_count,
            stats,
            model,
        })
        .ok_or(SplitError::NoSeparatingGap)
}

fn split_with_model<P: AsRef<[f64]> + Sync>(
    points: &[P],
    values: &[f64],
    model: &LocalLinearModel,
    n_min: usize,
    parallel: bool,
) -> Option<(usize, f64, usize, Vec<f64>)> {
    let d = model.dim();
    let rows = score_rows(model, points, values);
    let scan = |axis: usize| {
        let coord = |i: usize| points[i].as_ref()[axis];
        let order = sorted_order(points.len(), coord);
        scan_axis(&order, coord, &rows, n_min, None)
    };
    let scans: Vec<_> = if parallel {
        (0..d).into_par_iter().map(scan).collect()
    } else {
        (0..d).map(scan).collect()
    };
    let mut best: Option<(usize, f64, usize)> = None;
    for (axis, s) in scans.iter().enumerate() {
        if let Some(sp) = s.split {
            if best.is_none_or(|(_, stat, _)| s.stat > stat) {
                best = Some((axis, s.stat, sp.index));
            }
        }
    }
    let stats = scans
        .iter()
        .map(|s| if s.split.is_some() { s.stat } else { 0.0 })
        .collect();
    best.map(|(axis, _, index)| {
        let threshold = scans[axis].split.expect("chosen axis has a split").value;
        (axis, threshold, index, stats)
    })
}

struct Grower<'a> {
    points: &'a [Vec<f64>],
    values: &'a [f64],
    d: usize,
    rho: f64,
    n_min: usize,
    max_depth: usize,
    parallel: bool,
}

#[derive(Default)]
struct GrowStats {
    depth_limited: usize,
}

impl Grower<'_> {
    fn grow(&self, rect: HyperRectangle, idx: Vec<usize>, depth: usize) -> (TreeNode, GrowStats) {
        let pts: Vec<&[f64]> = idx.iter().map(|&i| self.points[i].as_slice()).collect();
        let vals: Vec<f64> = idx.iter().map(|&i| self.values[i]).collect();
        let n = idx.len();
        let model = fit_unchecked(&pts, &vals, self.d);
        let leaf = |model: LocalLinearModel| {
            TreeNode::Leaf(Leaf {
                rect: rect.clone(),
                model,
            })
        };

        if model.is_pure() || model.r2 > self.rho || n < 2 * self.n_min || n < self.d + 1 {
            return (leaf(model), GrowStats::default());
        }
        if depth >= self.max_depth {
            return (leaf(model), GrowStats { depth_limited: 1 });
        }
        let parallel = self.parallel && n >= PARALLEL_MIN_POINTS;
        let Some((axis, threshold, left_count, _)) =
            split_with_model(&pts, &vals, &model, self.n_min, parallel)
        else {
            return (leaf(model), GrowStats::default());
        };
        debug!("depth {depth}: split {n} points on axis {axis} at {threshold}");

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.points[i][axis] < threshold);
        debug_assert_eq!(left_idx.len(), left_count);
        let (left_rect, right_rect) = rect.split(axis, threshold);
        let ((left, ls), (right, rs)) = if parallel {
            rayon::join(
                || self.grow(left_rect, left_idx, depth + 1),
                || self.grow(right_rect, right_idx, depth + 1),
            )
        } else {
            (
                self.grow(left_rect, left_idx, depth + 1),
                self.grow(right_rect, right_idx, depth + 1),
            )
        };
        (
            TreeNode::Internal {
                axis,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            },
            GrowStats {
                depth_limited: ls.depth_limited + rs.depth_limited,
            },
        )
    }
}

fn grow_root(
    rect: &HyperRectangle,
    points: &[Vec<f64>],
    values: &[f64],
    config: &BuildConfig,
) -> (TreeNode, GrowStats) {
    let d = rect.dim();
    let grower = Grower {
        points,
        values,
        d,
        rho: config.rho,
        n_min: config.effective_n_min(d),
        max_depth: config.max_depth,
        parallel: config.parallel,
    };
    grower.grow(rect.clone(), (0..points.len()).collect(), 0)
}

/// Recursively partitions `rect` using the measurement points inside it.
/// Every degenerate branch ends in a leaf.
pub fn rec_tree(
    rect: &HyperRectangle,
    points: &[Vec<f64>],
    values: &[f64],
    config: &BuildConfig,
) -> TreeNode {
    assert_eq!(points.len(), values.len(), "one value per point");
    assert!(!points.is_empty(), "rec_tree needs at least one point");
    grow_root(rect, points, values, config).0
}

/// Samples `config.n_points` Sobol points over `domain`, queries `model`
/// once per point, and grows the surrogate tree.
pub fn build_surrogate(
    model: &BlackBox,
    domain: &HyperRectangle,
    config: &BuildConfig,
) -> Result<SurrogateTree, BuildError> {
    let d = domain.dim();
    if config.n_points < d + 1 {
        return Err(BuildError::TooFewPoints {
            needed: d + 1,
            d,
            got: config.n_points,
        });
    }
    if !(config.rho > 0.0 && config.rho <= 1.0) {
        return Err(BuildError::InvalidRho(config.rho));
    }
    if let Some(md) = model.dim() {
        if md != d {
            return Err(BuildError::DimensionMismatch {
                model: md,
                domain: d,
            });
        }
    }
    let unit = sobol::generate(d, config.n_points)?;
    let points = sobol::scale(&unit, domain)?;
    let before = model.query_count();
    let values = model.predict_chunked(&points, config.batch_size)?;
    let query_count = model.query_count() - before;

    let (root, stats) = grow_root(domain, &points, &values, config);
    let meta = summarize(
        &root,
        domain,
        points.len(),
        config.rho,
        config.effective_n_min(d),
        query_count,
        stats.depth_limited,
    );
    debug!(
        "built {} leaves, depth {}, weighted R^2 {}",
        meta.leaf_count, meta.depth, meta.weighted_r2
    );
    let mut tree = SurrogateTree::assemble(domain.clone(), root, meta);
    if config.keep_measurements {
        tree.set_measurements(Some(MeasurementSet { points, values }));
    }
    Ok(tree)
}
