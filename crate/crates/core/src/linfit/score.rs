//! Cumulative score process along one axis.
//!
//! With the leaf's points sorted by coordinate `j`, the process at step `i`
//! is `B(i) = n^{-1/2} sum_{k <= i} s_k`, where `s_k` are the score rows of
//! the leaf fit. The statistic is the largest L1 norm over the interior
//! steps, unnormalized; its location is the candidate split.

use super::{score_row, FitError, LocalLinearModel};

/// A candidate split: `index` points go left, the rest go right, separated
/// at `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPoint {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreProcess {
    pub feature: usize,
    /// `cumulative[i - 1]` is `B(i)` for `i = 1..=n`.
    pub cumulative: Vec<Vec<f64>>,
    /// Largest L1 norm over steps `1..n`; zero when the axis has no gap.
    pub stat: f64,
    pub split: Option<SplitPoint>,
}

impl ScoreProcess {
    /// `||B(i)||_1` for `i = 1..=n`.
    pub fn norms(&self) -> Vec<f64> {
        self.cumulative
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum())
            .collect()
    }
}

/// Result of scanning one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AxisScan {
    pub stat: f64,
    pub split: Option<SplitPoint>,
}

/// Sorted order of `0..n` by `coord`, ties by position.
pub(crate) fn sorted_order(n: usize, coord: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coord(a).total_cmp(&coord(b)).then(a.cmp(&b)));
    order
}

/// Threshold separating `a < b`: their midpoint, or `b` when the midpoint
/// rounds down onto `a`.
fn separating_value(a: f64, b: f64) -> Option<f64> {
    if a >= b {
        return None;
    }
    let mid = 0.5 * (a + b);
    Some(if mid > a { mid } else { b })
}

/// Scans the cumulative process of `rows` (score rows, in original order)
/// along `order`, considering left sizes in `min_side..=n - min_side`.
/// When `record` is given it receives every `B(i)`.
pub(crate) fn scan_axis(
    order: &[usize],
    coord: impl Fn(usize) -> f64,
    rows: &[Vec<f64>],
    min_side: usize,
    mut record: Option<&mut Vec<Vec<f64>>>,
) -> AxisScan {
    let n = order.len();
    let p = rows.first().map_or(0, Vec::len);
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let lo = min_side.max(1);
    let hi = n.saturating_sub(min_side.max(1));

    let mut running = vec![0.0; p];
    let mut norms = Vec::with_capacity(n);
    for &k in order {
        for (acc, v) in running.iter_mut().zip(&rows[k]) {
            *acc += v;
        }
        let step: Vec<f64> = running.iter().map(|v| v * inv_sqrt_n).collect();
        norms.push(step.iter().map(|v| v.abs()).sum::<f64>());
        if let Some(rec) = record.as_deref_mut() {
            rec.push(step);
        }
    }

    if lo > hi {
        return AxisScan {
            stat: 0.0,
            split: None,
        };
    }
    // norms[i - 1] is the norm after i points.
    let mut best = lo;
    for i in lo..=hi {
        if norms[i - 1] > norms[best - 1] {
            best = i;
        }
    }
    let stat = norms[best - 1];
    let gap_at = |i: usize| separating_value(coord(order[i - 1]), coord(order[i]));

    // Slide outward to the nearest step that separates distinct coordinates.
    for dist in 0..=(hi - lo) {
        let below = best.checked_sub(dist).filter(|&i| i >= lo);
        let above = Some(best + dist).filter(|&i| i <= hi && dist > 0);
        for i in [below, above].into_iter().flatten() {
            if let Some(value) = gap_at(i) {
                return AxisScan {
                    stat,
                    split: Some(SplitPoint { index: i, value }),
                };
            }
        }
        if best < lo + dist && best + dist > hi {
            break;
        }
    }
    AxisScan {
        stat: 0.0,
        split: None,
    }
}

/// The score process of `model`'s residuals along axis `axis`.
pub fn cumulative_score_process<P: AsRef<[f64]>>(
    model: &LocalLinearModel,
    points: &[P],
    values: &[f64],
    axis: usize,
) -> Result<ScoreProcess, FitError> {
    let rows = super::scores(model, points, values)?;
    let d = model.dim();
    if axis >= d {
        return Err(FitError::AxisOutOfRange { axis, dim: d });
    }
    let coord = |i: usize| points[i].as_ref()[axis];
    let order = sorted_order(points.len(), coord);
    let mut cumulative = Vec::with_capacity(points.len());
    let scan = scan_axis(&order, coord, &rows, 1, Some(&mut cumulative));
    Ok(ScoreProcess {
        feature: axis,
        cumulative,
        stat: scan.stat,
        split: scan.split,
    })
}

/// Score rows for every point; the caller guarantees a non-pure model.
pub(crate) fn score_rows<P: AsRef<[f64]>>(
    model: &LocalLinearModel,
    points: &[P],
    values: &[f64],
) -> Vec<Vec<f64>> {
    points
        .iter()
        .zip(values)
        .map(|(p, &y)| score_row(model, p.as_ref(), y))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linfit::fit_ols;

    fn line(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect()
    }

    #[test]
    fn separating_values() {
        assert_eq!(separating_value(0.25, 0.75), Some(0.5));
        assert_eq!(separating_value(1.0, 1.0), None);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(separating_value(a, b), Some(b));
    }

    #[test]
    fn linear_data_never_reaches_the_process() {
        // Residuals at rounding level: the fit reports R^2 = 1 (to rounding),
        // so the leaf stops before any score process is formed; a zero
        // variance is rejected outright.
        let points = line(50);
        let values: Vec<f64> = points.iter().map(|p| 2.0 * p[0] + 1.0).collect();
        let m = fit_ols(&points, &values).unwrap();
        assert!(m.r2 > 1.0 - 1e-12);
        let pure = LocalLinearModel { sigma2: 0.0, ..m };
        assert_eq!(
            cumulative_score_process(&pure, &points, &values, 0).unwrap_err(),
            FitError::PureLeaf
        );
    }

    #[test]
    fn endpoint_is_zero() {
        let points = line(64);
        let values: Vec<f64> = points
            .iter()
            .map(|p| if p[0] < 0.5 { p[0] } else { p[0] + 1.0 })
            .collect();
        let m = fit_ols(&points, &values).unwrap();
        let sp = cumulative_score_process(&m, &points, &values, 0).unwrap();
        let norms = sp.norms();
        let max = norms.iter().cloned().fold(0.0, f64::max);
        assert!(norms[63] < 1e-6 * max);
        let split = sp.split.unwrap();
        assert!((1..64).contains(&split.index));
    }

    #[test]
    fn all_equal_coordinates_cannot_split() {
        let points: Vec<Vec<f64>> = (0..10).map(|i| vec![0.5, i as f64]).collect();
        let values: Vec<f64> = (0..10).map(|i| ((i * i) % 7) as f64).collect();
        let m = fit_ols(&points, &values).unwrap();
        let sp = cumulative_score_process(&m, &points, &values, 0).unwrap();
        assert_eq!(sp.stat, 0.0);
        assert!(sp.split.is_none());
        assert!(cumulative_score_process(&m, &points, &values, 1)
            .unwrap()
            .split
            .is_some());
        assert_eq!(
            cumulative_score_process(&m, &points, &values, 2).unwrap_err(),
            FitError::AxisOutOfRange { axis: 2, dim: 2 }
        );
    }

    #[test]
    fn duplicate_coordinates_slide_to_a_gap() {
        // Two tied blocks: the only gaps sit at 3 and 6.
        let xs = [0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.9, 0.9, 0.9];
        let points: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let rows: Vec<Vec<f64>> = (0..9)
            .map(|i| vec![if i < 4 { 1.0 } else { -0.8 }, 0.0])
            .collect();
        let order = sorted_order(9, |i| points[i][0]);
        let scan = scan_axis(&order, |i| points[i][0], &rows, 1, None);
        // raw argmax is after 4 points (inside the tie block); nearest gap is 3
        let split = scan.split.unwrap();
        assert_eq!(split.index, 3);
        assert_eq!(split.value, 0.3);
    }

    #[test]
    fn min_side_restricts_candidates() {
        let points = line(20);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![if i < 2 { 5.0 } else { -10.0 / 18.0 }])
            .collect();
        let order = sorted_order(20, |i| points[i][0]);
        assert_eq!(
            scan_axis(&order, |i| points[i][0], &rows, 1, None)
                .split
                .unwrap()
                .index,
            2
        );
        assert_eq!(
            scan_axis(&order, |i| points[i][0], &rows, 5, None)
                .split
                .unwrap()
                .index,
            5
        );
        assert!(scan_axis(&order, |i| points[i][0], &rows, 11, None)
            .split
            .is_none());
    }
}
