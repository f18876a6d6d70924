//! The surrogate tree: a binary axis-aligned partition of the domain whose
//! leaves carry local linear models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackbox::BlackBoxError;
use crate::geometry::{check_finite, GeometryError, HyperRectangle};
use crate::linfit::LocalLinearModel;
use crate::sobol::SobolError;

mod build;
mod format;

pub use build::{build_surrogate, get_best_split, rec_tree, BestSplit, SplitError};
pub(crate) use format::lossy_f64 as format_lossy_f64;
pub use format::{FormatError, FORMAT_VERSION};

/// Default R^2 above which a leaf is accepted.
pub const DEFAULT_RHO: f64 = 0.95;
/// Default base-2 logarithm of the number of measurement points.
pub const DEFAULT_LOG2_POINTS: u32 = 15;
/// Default recursion depth bound.
pub const DEFAULT_MAX_DEPTH: usize = 40;

/// Minimum points per leaf: `max(min(20, d + 1), d + 1)`, i.e. never fewer
/// than the `d + 1` coefficients of a leaf model.
pub fn default_n_min(d: usize) -> usize {
    (d + 1).min(20).max(d + 1)
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("need at least {needed} measurement points for dimension {d}, got {got}")]
    TooFewPoints { needed: usize, d: usize, got: usize },
    #[error("model expects dimension {model}, domain has {domain}")]
    DimensionMismatch { model: usize, domain: usize },
    #[error("rho must lie in (0, 1], got {0}")]
    InvalidRho(f64),
    #[error(transparent)]
    Model(#[from] BlackBoxError),
    #[error(transparent)]
    Sobol(#[from] SobolError),
}

/// Knobs for [`build_surrogate`].
#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    /// Number of Sobol measurement points.
    pub n_points: usize,
    /// Leaves with R^2 above this stop splitting.
    pub rho: f64,
    /// Minimum points per leaf; `None` uses [`default_n_min`]. Values below
    /// `d + 1` are raised to `d + 1`.
    pub n_min: Option<usize>,
    pub max_depth: usize,
    /// Points per model call.
    pub batch_size: usize,
    /// Build sibling subtrees and per-axis scans on the rayon pool.
    pub parallel: bool,
    /// Store the measurement points in the tree (and its file).
    pub keep_measurements: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            n_points: 1 << DEFAULT_LOG2_POINTS,
            rho: DEFAULT_RHO,
            n_min: None,
            max_depth: DEFAULT_MAX_DEPTH,
            batch_size: crate::blackbox::DEFAULT_BATCH_SIZE,
            parallel: true,
            keep_measurements: true,
        }
    }
}

impl BuildConfig {
    pub fn with_log2_points(mut self, log2: u32) -> Self {
        self.n_points = 1usize << log2;
        self
    }

    pub fn effective_n_min(&self, d: usize) -> usize {
        self.n_min.unwrap_or_else(|| default_n_min(d)).max(d + 1)
    }
}

/// Sobol points paired with the black-box values at them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub rect: HyperRectangle,
    pub model: LocalLinearModel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Points with `x[axis] < threshold` go left.
    Internal {
        axis: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(Leaf),
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                TreeNode::Leaf(leaf) => out.push(leaf),
                TreeNode::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }
}

/// Summary recorded when a tree is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildMeta {
    pub n_points: usize,
    pub rho: f64,
    pub n_min: usize,
    /// Black-box queries issued during the build.
    pub query_count: u64,
    pub depth: usize,
    pub leaf_count: usize,
    /// Unweighted mean of leaf R^2.
    #[serde(with = "format::lossy_f64")]
    pub mean_r2: f64,
    /// Volume-weighted mean of leaf R^2.
    #[serde(with = "format::lossy_f64")]
    pub weighted_r2: f64,
    /// Leaves that stopped with R^2 at or below rho.
    pub low_quality_leaves: usize,
    /// Leaves that stopped at the depth bound with R^2 at or below rho.
    pub depth_limited_leaves: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("node at depth {depth}: axis {axis} out of range")]
    Axis { depth: usize, axis: usize },
    #[error("node at depth {depth}: threshold {threshold} not strictly inside its cell")]
    Threshold { depth: usize, threshold: f64 },
    #[error("leaf bounds do not match the cell implied by its ancestors")]
    LeafBounds,
    #[error("leaf model has {got} coefficients, expected {expected}")]
    Coefficients { expected: usize, got: usize },
    #[error("non-finite leaf coefficient")]
    NonFinite,
}

/// A built (or loaded) surrogate: the domain, the partition tree, cached
/// global importances and optional measurement points.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateTree {
    domain: HyperRectangle,
    root: TreeNode,
    meta: BuildMeta,
    importance: Vec<f64>,
    names: Option<Vec<String>>,
    measurements: Option<MeasurementSet>,
    build_timestamp: Option<String>,
}

impl SurrogateTree {
    /// Assembles a tree from parts, checking that the leaves tile `domain`.
    /// Build statistics not derivable from the tree are zero.
    pub fn from_root(domain: HyperRectangle, root: TreeNode) -> Result<Self, TreeError> {
        validate(&root, &domain, &domain, 0)?;
        let leaves = root.leaves();
        let n_points = leaves.iter().map(|l| l.model.n).sum();
        let meta = summarize(
            &root,
            &domain,
            n_points,
            DEFAULT_RHO,
            default_n_min(domain.dim()),
            0,
            0,
        );
        Ok(Self::assemble(domain, root, meta))
    }

    fn assemble(domain: HyperRectangle, root: TreeNode, meta: BuildMeta) -> Self {
        let importance = crate::explain::compute_importance(&root, &domain);
        Self {
            domain,
            root,
            meta,
            importance,
            names: None,
            measurements: None,
            build_timestamp: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &HyperRectangle {
        &self.domain
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn meta(&self) -> &BuildMeta {
        &self.meta
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        self.root.leaves()
    }

    /// Cached global importance, one entry per feature.
    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn set_names(&mut self, names: Option<Vec<String>>) {
        self.names = names;
    }

    pub fn measurements(&self) -> Option<&MeasurementSet> {
        self.measurements.as_ref()
    }

    pub fn set_measurements(&mut self, measurements: Option<MeasurementSet>) {
        self.measurements = measurements;
    }

    pub fn build_timestamp(&self) -> Option<&str> {
        self.build_timestamp.as_deref()
    }

    pub fn set_build_timestamp(&mut self, timestamp: Option<String>) {
        self.build_timestamp = timestamp;
    }

    /// Clamps `p` into the domain after checking it is finite.
    pub fn project(&self, p: &[f64]) -> Result<Vec<f64>, GeometryError> {
        if p.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        check_finite(p)?;
        self.domain.project(p)
    }

    /// The leaf owning the projection of `p`.
    pub fn route(&self, p: &[f64]) -> Result<&Leaf, GeometryError> {
        let q = self.project(p)?;
        Ok(self.route_projected(&q))
    }

    /// Leaf index (left-to-right order) and leaf for the projection of `p`.
    pub fn route_indexed(&self, p: &[f64]) -> Result<(usize, &Leaf), GeometryError> {
        let q = self.project(p)?;
        let mut node = &self.root;
        let mut index = 0;
        loop {
            match node {
                TreeNode::Leaf(leaf) => return Ok((index, leaf)),
                TreeNode::Internal {
                    axis,
                    threshold,
                    left,
                    right,
                } => {
                    if q[*axis] < *threshold {
                        node = left;
                    } else {
                        index += leaf_count(left);
                        node = right;
                    }
                }
            }
        }
    }

    /// Routing for a point already inside the domain.
    pub(crate) fn route_projected(&self, q: &[f64]) -> &Leaf {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf(leaf) => return leaf,
                TreeNode::Internal {
                    axis,
                    threshold,
                    left,
                    right,
                } => {
                    node = if q[*axis] < *threshold { left } else { right };
                }
            }
        }
    }

    /// Surrogate value at (the projection of) `p`.
    pub fn predict(&self, p: &[f64]) -> Result<f64, GeometryError> {
        let q = self.project(p)?;
        Ok(self.route_projected(&q).model.predict(&q))
    }
}

fn leaf_count(node: &TreeNode) -> usize {
    match node {
        TreeNode::Leaf(_) => 1,
        TreeNode::Internal { left, right, .. } => leaf_count(left) + leaf_count(right),
    }
}

/// Free-function form of [`SurrogateTree::route`].
pub fn route<'a>(tree: &'a SurrogateTree, p: &[f64]) -> Result<&'a Leaf, GeometryError> {
    tree.route(p)
}

/// Free-function form of [`SurrogateTree::predict`].
pub fn surrogate_predict(tree: &SurrogateTree, p: &[f64]) -> Result<f64, GeometryError> {
    tree.predict(p)
}

fn validate(
    node: &TreeNode,
    cell: &HyperRectangle,
    domain: &HyperRectangle,
    depth: usize,
) -> Result<(), TreeError> {
    match node {
        TreeNode::Leaf(leaf) => {
            if leaf.rect != *cell {
                return Err(TreeError::LeafBounds);
            }
            if leaf.model.beta.len() != domain.dim() + 1 {
                return Err(TreeError::Coefficients {
                    expected: domain.dim() + 1,
                    got: leaf.model.beta.len(),
                });
            }
            if leaf.model.beta.iter().any(|b| !b.is_finite()) {
                return Err(TreeError::NonFinite);
            }
            Ok(())
        }
        TreeNode::Internal {
            axis,
            threshold,
            left,
            right,
        } => {
            if *axis >= domain.dim() {
                return Err(TreeError::Axis { depth, axis: *axis });
            }
            if !(*threshold > cell.lower()[*axis] && *threshold < cell.upper()[*axis]) {
                return Err(TreeError::Threshold {
                    depth,
                    threshold: *threshold,
                });
            }
            let (l, r) = cell.split(*axis, *threshold);
            validate(left, &l, domain, depth + 1)?;
            validate(right, &r, domain, depth + 1)
        }
    }
}

fn summarize(
    root: &TreeNode,
    domain: &HyperRectangle,
    n_points: usize,
    rho: f64,
    n_min: usize,
    query_count: u64,
    depth_limited_leaves: usize,
) -> BuildMeta {
    let leaves = root.leaves();
    let leaf_count = leaves.len();
    let mean_r2 = leaves.iter().map(|l| l.model.r2).sum::<f64>() / leaf_count as f64;
    let weighted_r2 = leaves
        .iter()
        .map(|l| l.rect.volume_ratio(domain) * l.model.r2)
        .sum::<f64>();
    let low_quality_leaves = leaves
        .iter()
        .filter(|l| l.model.r2.partial_cmp(&rho) != Some(std::cmp::Ordering::Greater))
        .count();
    BuildMeta {
        n_points,
        rho,
        n_min,
        query_count,
        depth: root.depth(),
        leaf_count,
        mean_r2,
        weighted_r2,
        low_quality_leaves,
        depth_limited_leaves,
    }
}
