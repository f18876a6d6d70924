//! Explanations read off a built surrogate: local attributions with their
//! scale, volume-weighted global importances, and exact what-if curves.
//!
//! Nothing here queries the black box; every product is a walk over the
//! immutable tree.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, HyperRectangle};
use crate::partition::{format_lossy_f64 as lossy_f64, SurrogateTree, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("feature {feature} out of range for dimension {dim}")]
    FeatureOutOfRange { feature: usize, dim: usize },
}

/// Attribution at one point: the slopes of the leaf that owns it, with the
/// leaf's bounds as the scale over which they hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    /// The query point after projection into the domain.
    pub point: Vec<f64>,
    /// One slope per feature; the intercept is reported separately.
    pub attribution: Vec<f64>,
    pub intercept: f64,
    /// Surrogate value at `point`.
    pub prediction: f64,
    pub leaf_bounds: HyperRectangle,
    #[serde(with = "lossy_f64")]
    pub leaf_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub importance: Vec<f64>,
    pub leaf_count: usize,
}

/// One linear piece of a what-if curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x_start: f64,
    pub x_end: f64,
    pub slope: f64,
    /// Value of the section at `x = 0`, i.e. `beta_0 + sum_{k != j} beta_k xi_k`.
    pub intercept: f64,
    /// The owning leaf's full coefficient vector.
    pub beta: Vec<f64>,
}

/// The surrogate restricted to the axis-`feature` line through `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfCurve {
    pub feature: usize,
    pub anchor: Vec<f64>,
    /// Contiguous pieces ordered by `x_start`, covering the domain's extent
    /// along `feature`.
    pub segments: Vec<Segment>,
}

impl WhatIfCurve {
    /// Index of the segment owning abscissa `x` (clamped to the covered
    /// range). Pieces are half-open except the last.
    pub fn segment_index(&self, x: f64) -> usize {
        let idx = self.segments.partition_point(|s| s.x_end <= x);
        idx.min(self.segments.len() - 1)
    }

    /// The curve at `x`, computed exactly as the surrogate would evaluate
    /// the anchor with coordinate `feature` replaced by `x`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let lo = self.segments[0].x_start;
        let hi = self.segments[self.segments.len() - 1].x_end;
        let x = x.clamp(lo, hi);
        let seg = &self.segments[self.segment_index(x)];
        seg.beta[1..]
            .iter()
            .enumerate()
            .fold(seg.beta[0], |acc, (k, b)| {
                acc + b * if k == self.feature { x } else { self.anchor[k] }
            })
    }
}

/// Routes `p` and reports the owning leaf's coefficients and bounds.
pub fn explain_local(tree: &SurrogateTree, p: &[f64]) -> Result<LocalExplanation, ExplainError> {
    let point = tree.project(p)?;
    let leaf = tree.route(&point)?;
    Ok(LocalExplanation {
        prediction: leaf.model.predict(&point),
        point,
        attribution: leaf.model.slopes().to_vec(),
        intercept: leaf.model.intercept(),
        leaf_bounds: leaf.rect.clone(),
        leaf_r2: leaf.model.r2,
    })
}

/// The cached volume-weighted mean of absolute slopes.
pub fn global_importance(tree: &SurrogateTree) -> GlobalImportance {
    GlobalImportance {
        importance: tree.importance().to_vec(),
        leaf_count: tree.meta().leaf_count,
    }
}

/// `I_j = sum_R vol(R) / vol(domain) |beta_j^R|`.
pub(crate) fn compute_importance(root: &TreeNode, domain: &HyperRectangle) -> Vec<f64> {
    weighted_slopes(root, domain, f64::abs)
}

/// Diagnostic variant of the global importance that keeps slope signs, so
/// opposite effects in different regions cancel. Not a substitute for
/// [`global_importance`].
pub fn signed_importance(tree: &SurrogateTree) -> Vec<f64> {
    weighted_slopes(tree.root(), tree.domain(), |b| b)
}

fn weighted_slopes(root: &TreeNode, domain: &HyperRectangle, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; domain.dim()];
    for leaf in root.leaves() {
        let w = leaf.rect.volume_ratio(domain);
        for (o, &b) in out.iter_mut().zip(leaf.model.slopes()) {
            *o += w * f(b);
        }
    }
    out
}

/// The what-if curve of `feature` through the projection of `p`.
pub fn whatif(
    tree: &SurrogateTree,
    p: &[f64],
    feature: usize,
) -> Result<WhatIfCurve, ExplainError> {
    let anchor = tree.project(p)?;
    if feature >= tree.dim() {
        return Err(ExplainError::FeatureOutOfRange {
            feature,
            dim: tree.dim(),
        });
    }
    let mut segments = Vec::new();
    collect_segments(tree.root(), &anchor, feature, &mut segments);
    Ok(WhatIfCurve {
        feature,
        anchor,
        segments,
    })
}

fn collect_segments(node: &TreeNode, anchor: &[f64], feature: usize, out: &mut Vec<Segment>) {
    match node {
        TreeNode::Leaf(leaf) => {
            let beta = &leaf.model.beta;
            let intercept = beta[1..]
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != feature)
                .fold(beta[0], |acc, (k, b)| acc + b * anchor[k]);
            out.push(Segment {
                x_start: leaf.rect.lower()[feature],
                x_end: leaf.rect.upper()[feature],
                slope: beta[feature + 1],
                intercept,
                beta: beta.clone(),
            });
        }
        TreeNode::Internal {
            axis,
            threshold,
            left,
            right,
        } => {
            if *axis == feature {
                collect_segments(left, anchor, feature, out);
                collect_segments(right, anchor, feature, out);
            } else if anchor[*axis] < *threshold {
                collect_segments(left, anchor, feature, out);
            } else {
                collect_segments(right, anchor, feature, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linfit::LocalLinearModel;
    use crate::partition::Leaf;

    fn leaf(rect: HyperRectangle, beta: Vec<f64>) -> TreeNode {
        TreeNode::Leaf(Leaf {
            rect,
            model: LocalLinearModel {
                beta,
                sigma2: 0.1,
                r2: 0.99,
                n: 10,
            },
        })
    }

    fn two_leaf_2d() -> SurrogateTree {
        let domain = HyperRectangle::unit(2).unwrap();
        let (l, r) = domain.split(0, 0.5);
        let root = TreeNode::Internal {
            axis: 0,
            threshold: 0.5,
            left: Box::new(leaf(l, vec![1.0, 3.0, 0.5])),
            right: Box::new(leaf(r, vec![-1.0, -3.0, 2.0])),
        };
        SurrogateTree::from_root(domain, root).unwrap()
    }

    #[test]
    fn single_leaf_importance_is_absolute_slopes() {
        let domain = HyperRectangle::unit(2).unwrap();
        let tree =
            SurrogateTree::from_root(domain.clone(), leaf(domain, vec![0.3, 2.0, -3.0])).unwrap();
        assert_eq!(global_importance(&tree).importance, vec![2.0, 3.0]);
        let e = explain_local(&tree, &[0.2, 0.4]).unwrap();
        assert_eq!(e.attribution, vec![2.0, -3.0]);
        assert_eq!(e.intercept, 0.3);
    }

    #[test]
    fn opposite_slopes_do_not_cancel() {
        let tree = two_leaf_2d();
        assert_eq!(global_importance(&tree).importance[0], 3.0);
        assert_eq!(signed_importance(&tree)[0], 0.0);
    }

    #[test]
    fn unequal_volumes_weight_the_mean() {
        let domain = HyperRectangle::unit(1).unwrap();
        let (l, r) = domain.split(0, 0.75);
        let root = TreeNode::Internal {
            axis: 0,
            threshold: 0.75,
            left: Box::new(leaf(l, vec![0.0, 0.0])),
            right: Box::new(leaf(r, vec![0.0, -8.0])),
        };
        let tree = SurrogateTree::from_root(domain, root).unwrap();
        assert_eq!(global_importance(&tree).importance, vec![2.0]);
    }

    #[test]
    fn local_explanation_follows_routing() {
        let tree = two_leaf_2d();
        assert_eq!(
            explain_local(&tree, &[0.1, 0.1]).unwrap().attribution[0],
            3.0
        );
        let e = explain_local(&tree, &[0.9, 0.1]).unwrap();
        assert_eq!(e.attribution[0], -3.0);
        assert_eq!(e.leaf_bounds.lower(), &[0.5, 0.0]);
        assert_eq!(
            explain_local(&tree, &[2.0, -1.0]).unwrap().point,
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn whatif_crosses_split_on_its_axis() {
        let tree = two_leaf_2d();
        let curve = whatif(&tree, &[0.2, 0.7], 0).unwrap();
        assert_eq!(curve.segments.len(), 2);
        assert_eq!(curve.segments[0].x_start, 0.0);
        assert_eq!(curve.segments[0].x_end, 0.5);
        assert_eq!(curve.segments[1].x_start, 0.5);
        assert_eq!(curve.segments[1].x_end, 1.0);
        assert_eq!(curve.segments[0].intercept, 1.0 + 0.5 * 0.7);
        for i in 0..=200 {
            let x = i as f64 / 200.0;
            assert_eq!(curve.evaluate(x), tree.predict(&[x, 0.7]).unwrap());
        }
        let other = whatif(&tree, &[0.2, 0.7], 1).unwrap();
        assert_eq!(other.segments.len(), 1);
        assert_eq!(other.segments[0].slope, 0.5);
        assert!(matches!(
            whatif(&tree, &[0.2, 0.7], 2),
            Err(ExplainError::FeatureOutOfRange { .. })
        ));
    }
}
