//! Evaluation harness for attributions: expected restricted loss,
//! Spearman monotonicity and recall of known-relevant features.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackbox::{BlackBox, BlackBoxError};
use crate::explain::{explain_local, ExplainError};
use crate::partition::SurrogateTree;

pub const DEFAULT_GRID_SIZE: usize = 101;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no test points")]
    NoTestPoints,
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} entries, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("feature {feature} out of range for dimension {dim}")]
    FeatureOutOfRange { feature: usize, dim: usize },
    #[error("true feature set is empty")]
    EmptyFeatureSet,
    #[error("feature {0} listed twice")]
    DuplicateFeature(usize),
    #[error("interval [{0}, {1}] is empty or non-finite")]
    BadInterval(f64, f64),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Model(#[from] BlackBoxError),
}

/// Which interval the restricted loss integrates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegrationMode {
    /// The routed leaf's extent along the feature.
    Local,
    /// The domain's extent along the feature.
    Global,
    /// Both of the above.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub integration_mode: IntegrationMode,
    pub grid_size: usize,
    /// Ground-truth relevant features; enables recall.
    #[serde(default)]
    pub true_features: Option<Vec<usize>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            integration_mode: IntegrationMode::Both,
            grid_size: DEFAULT_GRID_SIZE,
            true_features: None,
        }
    }
}

/// A rank correlation together with a flag for constant inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monotonicity {
    pub value: f64,
    /// True when either vector is constant; `value` is then 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recall {
    pub value: f64,
    /// True when the top-|T| cut fell inside a run of equal magnitudes and
    /// was resolved by the smaller index.
    pub tie: bool,
}

/// Midpoints of `grid_size` equal subintervals of `[lo, hi]`.
pub fn midpoint_grid(lo: f64, hi: f64, grid_size: usize) -> Vec<f64> {
    let h = (hi - lo) / grid_size as f64;
    (0..grid_size).map(|g| lo + (g as f64 + 0.5) * h).collect()
}

fn check_interval(interval: (f64, f64)) -> Result<(), EvalError> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(EvalError::BadInterval(lo, hi));
    }
    Ok(())
}

/// Mean of `(f(xi) - f(xi with x_j = x_g))^2` over the midpoint grid of
/// `interval`. `f_xi` is the black-box value at `xi`; the function issues
/// exactly `grid_size` queries in one batch.
pub fn expected_restricted_loss(
    f: &BlackBox,
    xi: &[f64],
    f_xi: f64,
    feature: usize,
    interval: (f64, f64),
    grid_size: usize,
) -> Result<f64, EvalError> {
    if grid_size < 2 {
        return Err(EvalError::GridTooSmall(grid_size));
    }
    if feature >= xi.len() {
        return Err(EvalError::FeatureOutOfRange {
            feature,
            dim: xi.len(),
        });
    }
    check_interval(interval)?;
    let batch: Vec<Vec<f64>> = midpoint_grid(interval.0, interval.1, grid_size)
        .into_iter()
        .map(|x| {
            let mut p = xi.to_vec();
            p[feature] = x;
            p
        })
        .collect();
    let values = f.predict_batch(&batch)?;
    Ok(mean_squared_gap(f_xi, &values))
}

fn mean_squared_gap(reference: f64, values: &[f64]) -> f64 {
    values.iter().map(|v| (reference - v).powi(2)).sum::<f64>() / values.len() as f64
}

/// Ranks starting at 1; tied entries share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Monotonicity, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooShort {
            needed: 2,
            got: a.len(),
        });
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(Monotonicity {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Monotonicity {
        value: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Spearman correlation between `|attribution|` and the restricted losses.
pub fn monotonicity(attribution: &[f64], losses: &[f64]) -> Result<Monotonicity, EvalError> {
    let abs: Vec<f64> = attribution.iter().map(|a| a.abs()).collect();
    spearman(&abs, losses)
}

/// Fraction of `true_features` among the `|T|` largest `|attribution|`
/// entries, ties resolved toward the smaller index.
pub fn recall_important_features(
    attribution: &[f64],
    true_features: &[usize],
) -> Result<Recall, EvalError> {
    let d = attribution.len();
    if true_features.is_empty() {
        return Err(EvalError::EmptyFeatureSet);
    }
    let mut seen = vec![false; d];
    for &t in true_features {
        if t >= d {
            return Err(EvalError::FeatureOutOfRange { feature: t, dim: d });
        }
        if std::mem::replace(&mut seen[t], true) {
            return Err(EvalError::DuplicateFeature(t));
        }
    }
    let k = true_features.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        attribution[b]
            .abs()
            .total_cmp(&attribution[a].abs())
            .then(a.cmp(&b))
    });
    let tie = k < d && attribution[order[k - 1]].abs() == attribution[order[k]].abs();
    let hits = order[..k].iter().filter(|&&j| seen[j]).count();
    Ok(Recall {
        value: hits as f64 / k as f64,
        tie,
    })
}

/// Mean and empirical 5th/95th percentiles of a per-point quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p5: percentile(&sorted, 5.0),
            p95: percentile(&sorted, 95.0),
        }
    }
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEval {
    pub point: Vec<f64>,
    pub attribution: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_losses: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_losses: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_monotonicity: Option<Monotonicity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_monotonicity: Option<Monotonicity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<Recall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_points: usize,
    pub grid_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_monotonicity: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_monotonicity: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<Summary>,
    /// Points whose monotonicity was degenerate in some mode.
    pub degenerate_points: usize,
    /// Points whose recall cut was decided by a tie.
    pub tied_points: usize,
    /// Black-box queries issued by the evaluation.
    pub query_count: u64,
    pub per_point: Vec<PointEval>,
}

impl EvalReport {
    /// Aligned plain-text summary table.
    pub fn table(&self) -> String {
        let mut out = format!("{:<22}{:>10}{:>10}{:>10}\n", "metric", "mean", "p5", "p95");
        let rows = [
            ("local monotonicity", self.local_monotonicity),
            ("global monotonicity", self.global_monotonicity),
            ("recall", self.recall),
        ];
        for (name, s) in rows {
            if let Some(s) = s {
                out.push_str(&format!(
                    "{name:<22}{:>10.4}{:>10.4}{:>10.4}\n",
                    s.mean, s.p5, s.p95
                ));
            }
        }
        out.push_str(&format!(
            "points {}, grid {}, degenerate {}, ties {}, queries {}\n",
            self.n_points,
            self.grid_size,
            self.degenerate_points,
            self.tied_points,
            self.query_count
        ));
        out
    }
}

/// Evaluates the surrogate's local attributions at each test point against
/// the black box. Per point this issues one query for `f(xi)` plus
/// `d * grid_size` per integration mode, in a single batch.
pub fn evaluate_surrogate(
    tree: &SurrogateTree,
    f: &BlackBox,
    test_points: &[Vec<f64>],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if test_points.is_empty() {
        return Err(EvalError::NoTestPoints);
    }
    if config.grid_size < 2 {
        return Err(EvalError::GridTooSmall(config.grid_size));
    }
    let d = tree.dim();
    if let Some(t) = &config.true_features {
        recall_important_features(&vec![0.0; d], t)?;
    }
    let (do_local, do_global) = match config.integration_mode {
        IntegrationMode::Local => (true, false),
        IntegrationMode::Global => (false, true),
        IntegrationMode::Both => (true, true),
    };
    let g = config.grid_size;
    let before = f.query_count();
    let mut per_point = Vec::with_capacity(test_points.len());

    for p in test_points {
        let expl = explain_local(tree, p)?;
        let xi = &expl.point;
        let mut intervals = Vec::new();
        if do_local {
            intervals.push(
                (0..d)
                    .map(|j| (expl.leaf_bounds.lower()[j], expl.leaf_bounds.upper()[j]))
                    .collect::<Vec<_>>(),
            );
        }
        if do_global {
            intervals.push(
                (0..d)
                    .map(|j| (tree.domain().lower()[j], tree.domain().upper()[j]))
                    .collect(),
            );
        }
        let mut batch = vec![xi.clone()];
        for mode in &intervals {
            for (j, &(lo, hi)) in mode.iter().enumerate() {
                for x in midpoint_grid(lo, hi, g) {
                    let mut q = xi.clone();
                    q[j] = x;
                    batch.push(q);
                }
            }
        }
        let values = f.predict_chunked(&batch, crate::blackbox::DEFAULT_BATCH_SIZE)?;
        let f_xi = values[0];
        let mut losses = values[1..].chunks(d * g).map(|mode| {
            mode.chunks(g)
                .map(|vals| mean_squared_gap(f_xi, vals))
                .collect::<Vec<f64>>()
        });
        let local_losses = do_local.then(|| losses.next().expect("local block"));
        let global_losses = do_global.then(|| losses.next().expect("global block"));
        let mono = |l: &Option<Vec<f64>>| -> Result<Option<Monotonicity>, EvalError> {
            l.as_ref()
                .map(|l| monotonicity(&expl.attribution, l))
                .transpose()
        };
        let local_monotonicity = mono(&local_losses)?;
        let global_monotonicity = mono(&global_losses)?;
        let recall = config
            .true_features
            .as_ref()
            .map(|t| recall_important_features(&expl.attribution, t))
            .transpose()?;
        per_point.push(PointEval {
            point: xi.clone(),
            attribution: expl.attribution.clone(),
            local_losses,
            global_losses,
            local_monotonicity,
            global_monotonicity,
            recall,
        });
    }

    let summarize = |pick: &dyn Fn(&PointEval) -> Option<f64>| {
        let v: Vec<f64> = per_point.iter().filter_map(pick).collect();
        (!v.is_empty()).then(|| Summary::of(&v))
    };
    Ok(EvalReport {
        n_points: per_point.len(),
        grid_size: g,
        local_monotonicity: summarize(&|p| p.local_monotonicity.map(|m| m.value)),
        global_monotonicity: summarize(&|p| p.global_monotonicity.map(|m| m.value)),
        recall: summarize(&|p| p.recall.map(|r| r.value)),
        degenerate_points: per_point
            .iter()
            .filter(|p| {
                p.local_monotonicity.is_some_and(|m| m.degenerate)
                    || p.global_monotonicity.is_some_and(|m| m.degenerate)
            })
            .count(),
        tied_points: per_point
            .iter()
            .filter(|p| p.recall.is_some_and(|r| r.tie))
            .count(),
        query_count: f.query_count() - before,
        per_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::{FnModel, LinearFunction};

    #[test]
    fn spearman_examples() {
        let m = spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(m.value, 1.0);
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0])
                .unwrap()
                .value,
            -1.0
        );
        // average ranks (1, 2.5, 2.5, 4) vs (1, 3, 2, 4): 4.5 / sqrt(4.5 * 5)
        let m = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((m.value - 0.9486832980505138).abs() < 1e-15);
        let m = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            m,
            Monotonicity {
                value: 0.0,
                degenerate: true
            }
        );
        assert!(matches!(
            spearman(&[1.0], &[1.0, 2.0]),
            Err(EvalError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn recall_examples() {
        let alpha = [0.0, 0.1, 5.0, 0.2, 0.3, 4.0];
        let r = recall_important_features(&alpha, &[1, 2]).unwrap();
        assert_eq!(
            r,
            Recall {
                value: 0.5,
                tie: false
            }
        );
        assert_eq!(
            recall_important_features(&alpha, &[5, 2]).unwrap().value,
            1.0
        );
        let r = recall_important_features(&[0.0; 4], &[1]).unwrap();
        assert!(r.tie);
        assert_eq!(r.value, 0.0);
        let r = recall_important_features(&[0.0; 4], &[0]).unwrap();
        assert_eq!(
            r,
            Recall {
                value: 1.0,
                tie: true
            }
        );
        assert!(matches!(
            recall_important_features(&alpha, &[6]),
            Err(EvalError::FeatureOutOfRange { feature: 6, dim: 6 })
        ));
        assert!(matches!(
            recall_important_features(&alpha, &[]),
            Err(EvalError::EmptyFeatureSet)
        ));
    }

    #[test]
    fn restricted_loss_of_identity() {
        let f = BlackBox::new(FnModel::new(1, |x: &[f64]| x[0]));
        let e = expected_restricted_loss(&f, &[0.5], 0.5, 0, (0.0, 1.0), 101).unwrap();
        assert!((e - 1.0 / 12.0).abs() < 1e-4);
        assert_eq!(f.query_count(), 101);
    }

    #[test]
    fn constant_model_has_zero_loss() {
        let f = BlackBox::new(LinearFunction::new(vec![2.0, 0.0, 0.0]));
        for j in 0..2 {
            let e = expected_restricted_loss(&f, &[0.3, 0.9], 2.0, j, (0.0, 1.0), 11).unwrap();
            assert_eq!(e, 0.0);
        }
    }

    #[test]
    fn percentiles_interpolate() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        let s = Summary::of(&v);
        assert_eq!((s.mean, s.p5, s.p95), (50.0, 5.0, 95.0));
        assert_eq!(percentile(&[1.0, 2.0], 50.0), 1.5);
    }
}
