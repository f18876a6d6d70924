//! Synthetic black boxes with known structure: global linear functions and
//! piecewise-linear models on rectangular grids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BlackBoxError, Model};
use crate::geometry::{GeometryError, HyperRectangle};

/// Per-axis piece counts above this are rejected.
pub const MAX_PIECES_PER_AXIS: usize = 64;

/// Smallest jump across any face of a discontinuous random model.
pub const MIN_JUMP: f64 = 1.0;
const MIN_SLOPE_CHANGE: f64 = 1.0;
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntheticError {
    #[error("cannot split {n_cells} cells over {d} axes with at most {MAX_PIECES_PER_AXIS} pieces per axis")]
    Factorization { n_cells: usize, d: usize },
    #[error("expected {expected} coefficient vectors, got {got}")]
    CellCount { expected: usize, got: usize },
    #[error("cell {cell}: expected {expected} coefficients (intercept first), got {got}")]
    CoefficientLength {
        cell: usize,
        expected: usize,
        got: usize,
    },
    #[error("axis {axis}: breakpoints must be strictly increasing and inside the domain")]
    Breakpoints { axis: usize },
    #[error("coefficients disagree across the face at axis {axis} breakpoint {breakpoint}")]
    Discontinuous { axis: usize, breakpoint: f64 },
    #[error("non-finite coefficient")]
    NonFinite,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `f(x) = beta_0 + sum_j beta_j x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFunction {
    beta: Vec<f64>,
}

impl LinearFunction {
    /// `beta` holds the intercept followed by one slope per axis.
    pub fn new(beta: Vec<f64>) -> Self {
        assert!(beta.len() >= 2, "need an intercept and at least one slope");
        Self { beta }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        affine(&self.beta, x)
    }
}

impl Model for LinearFunction {
    fn dim(&self) -> Option<usize> {
        Some(self.beta.len() - 1)
    }

    fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, BlackBoxError> {
        Ok(points.iter().map(|p| self.eval(p)).collect())
    }
}

fn affine(beta: &[f64], x: &[f64]) -> f64 {
    beta[1..]
        .iter()
        .zip(x)
        .fold(beta[0], |acc, (b, xi)| acc + b * xi)
}

/// A piecewise-linear function whose pieces are the cells of a rectangular
/// grid over the domain.
///
/// Cell `k` has per-axis piece indices given by the mixed-radix digits of
/// `k`, axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGroundTruth")]
pub struct PiecewiseLinearGroundTruth {
    domain: HyperRectangle,
    breakpoints: Vec<Vec<f64>>,
    coefficients: Vec<Vec<f64>>,
    continuous: bool,
    #[serde(skip)]
    cells: Vec<HyperRectangle>,
}

#[derive(Deserialize)]
struct RawGroundTruth {
    domain: HyperRectangle,
    breakpoints: Vec<Vec<f64>>,
    coefficients: Vec<Vec<f64>>,
    continuous: bool,
}

impl TryFrom<RawGroundTruth> for PiecewiseLinearGroundTruth {
    type Error = SyntheticError;

    fn try_from(raw: RawGroundTruth) -> Result<Self, Self::Error> {
        Self::from_grid(
            raw.domain,
            raw.breakpoints,
            raw.coefficients,
            raw.continuous,
        )
    }
}

impl PiecewiseLinearGroundTruth {
    /// Builds from interior breakpoints per axis and one `d + 1` coefficient
    /// vector per cell. With `continuous`, agreement across every shared
    /// face is verified.
    pub fn from_grid(
        domain: HyperRectangle,
        breakpoints: Vec<Vec<f64>>,
        coefficients: Vec<Vec<f64>>,
        continuous: bool,
    ) -> Result<Self, SyntheticError> {
        let d = domain.dim();
        if breakpoints.len() != d {
            return Err(GeometryError::DimensionMismatch {
                expected: d,
                got: breakpoints.len(),
            }
            .into());
        }
        for (axis, bps) in breakpoints.iter().enumerate() {
            let mut prev = domain.lower()[axis];
            for &b in bps {
                if !(b > prev && b < domain.upper()[axis]) {
                    return Err(SyntheticError::Breakpoints { axis });
                }
                prev = b;
            }
        }
        let expected: usize = breakpoints.iter().map(|b| b.len() + 1).product();
        if coefficients.len() != expected {
            return Err(SyntheticError::CellCount {
                expected,
                got: coefficients.len(),
            });
        }
        for (cell, c) in coefficients.iter().enumerate() {
            if c.len() != d + 1 {
                return Err(SyntheticError::CoefficientLength {
                    cell,
                    expected: d + 1,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(SyntheticError::NonFinite);
            }
        }
        let mut model = Self {
            domain,
            breakpoints,
            coefficients,
            continuous,
            cells: Vec::new(),
        };
        model.cells = (0..expected)
            .map(|k| model.cell_rect(k))
            .collect::<Result<_, _>>()?;
        if continuous {
            model.check_continuity()?;
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &HyperRectangle {
        &self.domain
    }

    pub fn is_continuous(&self) -> bool {
        self.continuous
    }

    /// Interior breakpoints of `axis`, ascending.
    pub fn breakpoints(&self, axis: usize) -> &[f64] {
        &self.breakpoints[axis]
    }

    pub fn cells(&self) -> &[HyperRectangle] {
        &self.cells
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    fn pieces(&self, axis: usize) -> usize {
        self.breakpoints[axis].len() + 1
    }

    fn digits(&self, mut cell: usize) -> Vec<usize> {
        (0..self.dim())
            .map(|axis| {
                let k = self.pieces(axis);
                let digit = cell % k;
                cell /= k;
                digit
            })
            .collect()
    }

    fn index_of(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .enumerate()
            .rev()
            .fold(0, |acc, (axis, &digit)| acc * self.pieces(axis) + digit)
    }

    fn cell_rect(&self, cell: usize) -> Result<HyperRectangle, GeometryError> {
        let digits = self.digits(cell);
        let (lower, upper) = digits
            .iter()
            .enumerate()
            .map(|(axis, &p)| {
                let bps = &self.breakpoints[axis];
                let lo = if p == 0 {
                    self.domain.lower()[axis]
                } else {
                    bps[p - 1]
                };
                let hi = if p == bps.len() {
                    self.domain.upper()[axis]
                } else {
                    bps[p]
                };
                (lo, hi)
            })
            .unzip();
        HyperRectangle::new(lower, upper)
    }

    /// Index of the cell owning `x`, using the half-open convention with a
    /// closed outer face. Points outside the domain are clamped.
    pub fn cell_index(&self, x: &[f64]) -> usize {
        let digits: Vec<usize> = x
            .iter()
            .enumerate()
            .map(|(axis, &v)| self.breakpoints[axis].partition_point(|&b| b <= v))
            .collect();
        self.index_of(&digits)
    }

    /// Coefficient vector (intercept first) of the cell owning `x`.
    pub fn cell_coefficients(&self, x: &[f64]) -> &[f64] {
        &self.coefficients[self.cell_index(x)]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        affine(self.cell_coefficients(x), x)
    }

    /// Evaluates cell `cell`'s linear model at `x` wherever `x` lies.
    pub fn eval_cell(&self, cell: usize, x: &[f64]) -> f64 {
        affine(&self.coefficients[cell], x)
    }

    fn check_continuity(&self) -> Result<(), SyntheticError> {
        // Two affine maps agree on a hyperplane x_j = b iff their restricted
        // coefficients agree: equal slopes off-axis and equal value offsets.
        for cell in 0..self.coefficients.len() {
            let digits = self.digits(cell);
            for axis in 0..self.dim() {
                if digits[axis] + 1 >= self.pieces(axis) {
                    continue;
                }
                let mut next = digits.clone();
                next[axis] += 1;
                let a = &self.coefficients[cell];
                let b = &self.coefficients[self.index_of(&next)];
                let bp = self.breakpoints[axis][digits[axis]];
                let scale = 1.0 + a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
                let tol = 1e-12 * scale * (1.0 + bp.abs());
                let offset_gap = (a[0] + a[axis + 1] * bp) - (b[0] + b[axis + 1] * bp);
                let slopes_agree = (0..self.dim())
                    .filter(|&k| k != axis)
                    .all(|k| (a[k + 1] - b[k + 1]).abs() <= tol);
                if offset_gap.abs() > tol || !slopes_agree {
                    return Err(SyntheticError::Discontinuous {
                        axis,
                        breakpoint: bp,
                    });
                }
            }
        }
        Ok(())
    }
}

impl Model for PiecewiseLinearGroundTruth {
    fn dim(&self) -> Option<usize> {
        Some(self.domain.dim())
    }

    fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, BlackBoxError> {
        Ok(points.iter().map(|p| self.eval(p)).collect())
    }
}

/// Spreads the prime factors of `n_cells` over `d` axes, largest factor to
/// the axis with the fewest pieces so far.
fn piece_counts(d: usize, n_cells: usize) -> Result<Vec<usize>, SyntheticError> {
    let fail = || SyntheticError::Factorization { n_cells, d };
    if d == 0 || n_cells == 0 {
        return Err(fail());
    }
    let mut factors = Vec::new();
    let mut rest = n_cells;
    let mut p = 2;
    while p * p <= rest {
        while rest.is_multiple_of(p) {
            factors.push(p);
            rest /= p;
        }
        p += 1;
    }
    if rest > 1 {
        factors.push(rest);
    }
    factors.sort_unstable_by(|a, b| b.cmp(a));
    let mut counts = vec![1usize; d];
    for f in factors {
        let axis = (0..d).min_by_key(|&j| (counts[j], j)).expect("d >= 1");
        counts[axis] *= f;
    }
    if counts.iter().any(|&c| c > MAX_PIECES_PER_AXIS) {
        return Err(fail());
    }
    Ok(counts)
}

/// Random grid model on `[0, 1]^d` with `n_cells` cells.
///
/// Discontinuous models draw arbitrary per-cell coefficients, with each
/// intercept nudged so that the value jumps by at least [`MIN_JUMP`] at
/// every point of every shared face. Continuous
/// models are additive: a constant plus one continuous piecewise-linear
/// profile per axis, so they agree on every shared face by construction.
pub fn make_random_pwl(
    d: usize,
    n_cells: usize,
    seed: u64,
    continuous: bool,
) -> Result<PiecewiseLinearGroundTruth, SyntheticError> {
    let counts = piece_counts(d, n_cells)?;
    let domain = HyperRectangle::unit(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let breakpoints: Vec<Vec<f64>> = counts
        .iter()
        .map(|&k| {
            (1..k)
                .map(|i| (i as f64 + rng.random_range(-0.2..0.2)) / k as f64)
                .collect()
        })
        .collect();

    let coefficients = if continuous {
        additive_coefficients(&counts, &breakpoints, &mut rng)
    } else {
        arbitrary_coefficients(d, &counts, &breakpoints, &mut rng)
    };
    PiecewiseLinearGroundTruth::from_grid(domain, breakpoints, coefficients, continuous)
}

fn arbitrary_coefficients(
    d: usize,
    counts: &[usize],
    breakpoints: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let piece_bounds = |axis: usize, piece: usize| {
        let lo = if piece == 0 {
            0.0
        } else {
            breakpoints[axis][piece - 1]
        };
        let hi = breakpoints[axis].get(piece).copied().unwrap_or(1.0);
        (lo, hi)
    };
    let n_cells: usize = counts.iter().product();
    let mut cells: Vec<Vec<f64>> = Vec::with_capacity(n_cells);
    for k in 0..n_cells {
        let mut digits = Vec::with_capacity(d);
        let mut rest = k;
        for &c in counts {
            digits.push(rest % c);
            rest /= c;
        }
        let mut draw: Vec<f64> = std::iter::once(rng.random_range(-2.0..2.0))
            .chain((0..d).map(|_| rng.random_range(-4.0..4.0)))
            .collect();

        // For each earlier face neighbour, the jump across the shared face
        // is `draw[0] - nb[0] + s(x)` with `s` ranging over [lo, hi]; the
        // intercepts that leave |jump| < MIN_JUMP somewhere are forbidden.
        let mut forbidden = Vec::new();
        let mut stride = 1;
        for axis in 0..d {
            if digits[axis] > 0 {
                let nb = &cells[k - stride];
                let face = breakpoints[axis][digits[axis] - 1];
                let (mut lo, mut hi) = (0.0, 0.0);
                for j in 0..d {
                    let delta = draw[j + 1] - nb[j + 1];
                    let (a, b) = if j == axis {
                        (face, face)
                    } else {
                        piece_bounds(j, digits[j])
                    };
                    lo += (delta * a).min(delta * b);
                    hi += (delta * a).max(delta * b);
                }
                forbidden.push((nb[0] - hi - MIN_JUMP, nb[0] - lo + MIN_JUMP));
            }
            stride *= counts[axis];
        }
        draw[0] = nearest_allowed(draw[0], forbidden);
        cells.push(draw);
    }
    cells
}

/// The point closest to `x` outside every open interval in `forbidden`.
fn nearest_allowed(x: f64, mut forbidden: Vec<(f64, f64)>) -> f64 {
    forbidden.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in forbidden {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    match merged.iter().find(|(a, b)| x > *a && x < *b) {
        Some(&(a, b)) if x - a <= b - x => a,
        Some(&(_, b)) => b,
        None => x,
    }
}

fn additive_coefficients(
    counts: &[usize],
    breakpoints: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let d = counts.len();
    let constant = rng.random_range(-1.0..1.0);
    // Per axis, per piece: (intercept, slope) of the 1-D profile, which
    // starts at 0 on the lower domain face.
    let profiles: Vec<Vec<(f64, f64)>> = counts
        .iter()
        .zip(breakpoints)
        .map(|(&k, bps)| {
            let mut pieces = Vec::with_capacity(k);
            let mut start = 0.0;
            let mut value = 0.0;
            let mut prev_slope: Option<f64> = None;
            for p in 0..k {
                let mut slope = rng.random_range(-4.0..4.0);
                for _ in 0..MAX_REDRAWS {
                    match prev_slope {
                        Some(s) if (slope - s).abs() < MIN_SLOPE_CHANGE => {
                            slope = rng.random_range(-4.0..4.0)
                        }
                        _ => break,
                    }
                }
                pieces.push((value - slope * start, slope));
                let end = if p + 1 < k { bps[p] } else { 1.0 };
                value += slope * (end - start);
                start = end;
                prev_slope = Some(slope);
            }
            pieces
        })
        .collect();

    let n_cells: usize = counts.iter().product();
    (0..n_cells)
        .map(|mut k| {
            let mut beta = vec![constant; d + 1];
            for axis in 0..d {
                let (intercept, slope) = profiles[axis][k % counts[axis]];
                k /= counts[axis];
                beta[0] += intercept;
                beta[axis + 1] = slope;
            }
            beta
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::BlackBox;
    use rand::Rng;

    #[test]
    fn linear_substitution() {
        let bb = BlackBox::new(LinearFunction::new(vec![1.0, 2.0]));
        assert_eq!(bb.predict_batch(&[vec![0.5]]).unwrap(), vec![2.0]);
    }

    #[test]
    fn two_piece_substitution() {
        let gt = PiecewiseLinearGroundTruth::from_grid(
            HyperRectangle::unit(1).unwrap(),
            vec![vec![0.5]],
            vec![vec![0.0, 1.0], vec![1.0, 1.0]],
            false,
        )
        .unwrap();
        let bb = BlackBox::new(gt);
        assert_eq!(
            bb.predict_batch(&[vec![0.25], vec![0.75]]).unwrap(),
            vec![0.25, 1.75]
        );
        assert_eq!(
            bb.predict_batch(&[vec![0.5], vec![1.0]]).unwrap(),
            vec![1.5, 2.0]
        );
    }

    #[test]
    fn single_cell_is_linear() {
        let gt = make_random_pwl(1, 1, 3, false).unwrap();
        assert_eq!(gt.cells().len(), 1);
        assert!(gt.breakpoints(0).is_empty());
        let c = gt.coefficients()[0].clone();
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(gt.eval(&[x]), c[0] + c[1] * x);
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = make_random_pwl(2, 4, 7, false).unwrap();
        let b = make_random_pwl(2, 4, 7, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells().len(), 4);
        assert_eq!(a.breakpoints(0).len(), 1);
        assert_eq!(a.breakpoints(1).len(), 1);
        assert_ne!(a, make_random_pwl(2, 4, 8, false).unwrap());
    }

    #[test]
    fn continuous_breakpoint_value_matches_from_both_sides() {
        let gt = make_random_pwl(1, 2, 11, true).unwrap();
        let bp = gt.breakpoints(0)[0];
        let left = gt.eval_cell(0, &[bp]);
        let right = gt.eval_cell(1, &[bp]);
        assert!((left - right).abs() < 1e-12, "{left} vs {right}");
    }

    #[test]
    fn discontinuous_faces_jump_everywhere() {
        for seed in 0..20 {
            let gt = make_random_pwl(3, 12, seed, false).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..200 {
                let axis = rng.random_range(0..3);
                let bps = gt.breakpoints(axis);
                if bps.is_empty() {
                    continue;
                }
                let bp = bps[rng.random_range(0..bps.len())];
                let mut x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                x[axis] = bp;
                let above = gt.cell_index(&x);
                let mut below_x = x.clone();
                below_x[axis] = bp - 1e-9;
                let below = gt.cell_index(&below_x);
                let gap = gt.eval_cell(above, &x) - gt.eval_cell(below, &x);
                assert!(gap.abs() >= MIN_JUMP - 1e-9, "seed {seed}: jump {gap}");
            }
        }
    }

    #[test]
    fn nearest_allowed_leaves_forbidden_intervals() {
        assert_eq!(nearest_allowed(0.0, vec![]), 0.0);
        assert_eq!(nearest_allowed(0.0, vec![(-1.0, 3.0)]), -1.0);
        assert_eq!(nearest_allowed(0.0, vec![(2.0, 3.0), (-0.5, 2.5)]), -0.5);
        assert_eq!(nearest_allowed(2.0, vec![(-0.5, 1.0), (0.5, 2.4)]), 2.4);
        assert_eq!(nearest_allowed(1.0, vec![(1.0, 2.0)]), 1.0);
    }

    #[test]
    fn continuous_faces_agree_on_sampled_points() {
        let gt = make_random_pwl(3, 12, 5, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut checked = 0;
        while checked < 1000 {
            let axis = rng.random_range(0..3);
            let bps = gt.breakpoints(axis);
            if bps.is_empty() {
                continue;
            }
            let bp = bps[rng.random_range(0..bps.len())];
            let mut x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            x[axis] = bp;
            let above = gt.cell_index(&x);
            let mut below_x = x.clone();
            below_x[axis] = bp - 1e-9;
            let below = gt.cell_index(&below_x);
            assert_ne!(above, below);
            let gap = gt.eval_cell(above, &x) - gt.eval_cell(below, &x);
            assert!(gap.abs() < 1e-9, "face discrepancy {gap}");
            checked += 1;
        }
    }

    #[test]
    fn discontinuous_neighbours_are_separated() {
        let gt = make_random_pwl(2, 9, 21, false).unwrap();
        let c = gt.coefficients();
        // axis-0 neighbours (k, k+1) within a row of three
        for k in [0usize, 1, 3, 4, 6, 7] {
            assert!(c[k]
                .iter()
                .zip(&c[k + 1])
                .any(|(a, b)| (a - b).abs() >= 1.0));
        }
    }

    #[test]
    fn factorization_errors() {
        assert!(matches!(
            make_random_pwl(2, 0, 1, false),
            Err(SyntheticError::Factorization { .. })
        ));
        assert!(matches!(
            make_random_pwl(1, 67, 1, false),
            Err(SyntheticError::Factorization { .. })
        ));
        assert_eq!(piece_counts(2, 12).unwrap(), vec![3, 4]);
        assert_eq!(piece_counts(3, 8).unwrap(), vec![2, 2, 2]);
    }

    #[test]
    fn rejects_inconsistent_continuity_claim() {
        let err = PiecewiseLinearGroundTruth::from_grid(
            HyperRectangle::unit(1).unwrap(),
            vec![vec![0.5]],
            vec![vec![0.0, 1.0], vec![1.0, 1.0]],
            true,
        )
        .unwrap_err();
        assert!(matches!(err, SyntheticError::Discontinuous { axis: 0, .. }));
    }

    #[test]
    fn serde_round_trip_rebuilds_cells() {
        let gt = make_random_pwl(2, 6, 2, true).unwrap();
        let text = serde_json::to_string(&gt).unwrap();
        let back: PiecewiseLinearGroundTruth = serde_json::from_str(&text).unwrap();
        assert_eq!(back, gt);
        assert_eq!(back.cells().len(), 6);
    }
}
