//! Helpers shared by the integration tests.

#![allow(dead_code)]

use gleams_core::linfit::LocalLinearModel;
use gleams_core::{HyperRectangle, Leaf, SurrogateTree, TreeNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random tree over `[0, 1]^d` with up to `max_depth` levels of splits at
/// random interior thresholds and random leaf coefficients.
pub fn random_tree(d: usize, max_depth: usize, seed: u64) -> SurrogateTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = HyperRectangle::unit(d).unwrap();
    let root = grow(&mut rng, domain.clone(), max_depth);
    SurrogateTree::from_root(domain, root).unwrap()
}

fn grow(rng: &mut ChaCha8Rng, rect: HyperRectangle, depth: usize) -> TreeNode {
    if depth == 0 || rng.random_bool(0.25) {
        let beta = (0..=rect.dim())
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        return TreeNode::Leaf(Leaf {
            rect,
            model: LocalLinearModel {
                beta,
                sigma2: 0.01,
                r2: 0.99,
                n: 10,
            },
        });
    }
    let axis = rng.random_range(0..rect.dim());
    let (lo, hi) = (rect.lower()[axis], rect.upper()[axis]);
    let threshold = lo + (hi - lo) * rng.random_range(0.1..0.9);
    let (l, r) = rect.split(axis, threshold);
    TreeNode::Internal {
        axis,
        threshold,
        left: Box::new(grow(rng, l, depth - 1)),
        right: Box::new(grow(rng, r, depth - 1)),
    }
}

/// A hand-built leaf with coefficients `beta`.
pub fn leaf(rect: HyperRectangle, beta: Vec<f64>) -> TreeNode {
    TreeNode::Leaf(Leaf {
        rect,
        model: LocalLinearModel {
            beta,
            sigma2: 0.0,
            r2: 1.0,
            n: 1,
        },
    })
}

/// Splits `rect` on `axis` at `t` with the two given leaf coefficient sets.
pub fn split(
    rect: &HyperRectangle,
    axis: usize,
    t: f64,
    left: Vec<f64>,
    right: Vec<f64>,
) -> TreeNode {
    let (l, r) = rect.split(axis, t);
    TreeNode::Internal {
        axis,
        threshold: t,
        left: Box::new(leaf(l, left)),
        right: Box::new(leaf(r, right)),
    }
}
