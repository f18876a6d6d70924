//! Householder QR with column pivoting and minimal-norm least squares.
//!
//! For a rank-deficient design `A P = Q [R11 R12; 0 0]`, the minimal-norm
//! solution of `[R11 R12] z = c` is obtained from an unpivoted QR of the
//! transpose `[R11 R12]^T = Q2 R2`, i.e. `z = Q2 R2^{-T} c`.

/// Column-major dense matrix.
#[derive(Debug, Clone)]
pub(crate) struct ColMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMatrix {
    pub(crate) fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(a * self.rows + i, b * self.rows + i);
        }
    }
}

/// Reflector `H = I - tau v v^T` acting on rows `start..`.
#[derive(Debug, Clone)]
struct Reflector {
    start: usize,
    v: Vec<f64>,
    tau: f64,
}

impl Reflector {
    /// Builds the reflector mapping `x` onto `alpha e_1`. Returns `None` for a
    /// zero vector.
    fn annihilate(x: &[f64], start: usize) -> Option<(Self, f64)> {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|a| a * a).sum();
        let tau = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
        Some((Self { start, v, tau }, alpha))
    }

    fn apply(&self, y: &mut [f64]) {
        let tail = &mut y[self.start..];
        let dot: f64 = self.v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
        let s = self.tau * dot;
        for (t, vi) in tail.iter_mut().zip(&self.v) {
            *t -= s * vi;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PivotedQr {
    rows: usize,
    cols: usize,
    reflectors: Vec<Reflector>,
    /// Upper-triangular factor, `rank x cols`, row-major.
    r: Vec<Vec<f64>>,
    perm: Vec<usize>,
    rank: usize,
    /// Factorization of `[R11 R12]^T` for the rank-deficient case.
    complement: Option<(Vec<Reflector>, Vec<Vec<f64>>)>,
}

impl PivotedQr {
    pub(crate) fn factor(mut a: ColMatrix) -> Self {
        let (rows, cols) = (a.rows, a.cols);
        let steps = rows.min(cols);
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut reflectors = Vec::with_capacity(steps);
        let mut diag = Vec::with_capacity(steps);

        for k in 0..steps {
            // Pivot on the largest remaining column norm; ties keep the
            // lower index.
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..cols {
                let nrm: f64 = a.col(j)[k..].iter().map(|v| v * v).sum();
                if nrm > best_norm {
                    best_norm = nrm;
                    best = j;
                }
            }
            a.swap_cols(k, best);
            perm.swap(k, best);
            let Some((h, alpha)) = Reflector::annihilate(&a.col(k)[k..], k) else {
                break;
            };
            for j in k + 1..cols {
                h.apply(a.col_mut(j));
            }
            let col = a.col_mut(k);
            col[k] = alpha;
            for v in &mut col[k + 1..] {
                *v = 0.0;
            }
            diag.push(alpha.abs());
            reflectors.push(h);
        }

        let tol = diag.first().copied().unwrap_or(0.0) * rows.max(cols) as f64 * f64::EPSILON;
        let rank = diag.iter().take_while(|&&v| v > tol).count();
        let r: Vec<Vec<f64>> = (0..rank)
            .map(|i| {
                (0..cols)
                    .map(|j| if j < i { 0.0 } else { a.get(i, j) })
                    .collect()
            })
            .collect();

        let complement = (rank < cols && rank > 0).then(|| {
            let mut t = ColMatrix::zeros(cols, rank);
            for (i, row) in r.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    t.set(j, i, v);
                }
            }
            let mut refl = Vec::with_capacity(rank);
            for k in 0..rank {
                if let Some((h, alpha)) = Reflector::annihilate(&t.col(k)[k..], k) {
                    for j in k + 1..rank {
                        h.apply(t.col_mut(j));
                    }
                    t.col_mut(k)[k] = alpha;
                    refl.push(h);
                } else {
                    // Identity reflector keeps indices aligned.
                    refl.push(Reflector {
                        start: k,
                        v: vec![0.0; cols - k],
                        tau: 0.0,
                    });
                }
            }
            let r2: Vec<Vec<f64>> = (0..rank)
                .map(|i| {
                    (0..rank)
                        .map(|j| if j < i { 0.0 } else { t.get(i, j) })
                        .collect()
                })
                .collect();
            (refl, r2)
        });

        Self {
            rows,
            cols,
            reflectors,
            r,
            perm,
            rank,
            complement,
        }
    }

    #[cfg(test)]
    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    /// Minimal-norm least-squares solution of `A x = b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.rows);
        let mut c = b.to_vec();
        for h in &self.reflectors {
            h.apply(&mut c);
        }
        let rank = self.rank;
        let mut z = vec![0.0; self.cols];
        if rank == self.cols {
            for i in (0..rank).rev() {
                let mut s = c[i];
                for j in i + 1..rank {
                    s -= self.r[i][j] * z[j];
                }
                z[i] = s / self.r[i][i];
            }
        } else if let Some((refl, r2)) = &self.complement {
            // R2^T u = c[..rank], then z = Q2 [u; 0].
            let mut u = vec![0.0; self.cols];
            for i in 0..rank {
                let mut s = c[i];
                for j in 0..i {
                    s -= r2[j][i] * u[j];
                }
                u[i] = s / r2[i][i];
            }
            for h in refl.iter().rev() {
                h.apply(&mut u);
            }
            z = u;
        }
        let mut x = vec![0.0; self.cols];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> ColMatrix {
        let mut m = ColMatrix::zeros(rows.len(), rows[0].len());
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    #[test]
    fn square_system() {
        let qr = PivotedQr::factor(matrix(&[&[2.0, 1.0], &[1.0, 3.0]]));
        assert_eq!(qr.rank(), 2);
        let x = qr.solve(&[3.0, 5.0]);
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_gives_minimal_norm() {
        // x + y = 2 at every row: minimal-norm solution is (1, 1).
        let qr = PivotedQr::factor(matrix(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]));
        assert_eq!(qr.rank(), 1);
        let x = qr.solve(&[2.0, 2.0, 2.0]);
        assert!(
            (x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14,
            "{x:?}"
        );
    }

    #[test]
    fn zero_column_gets_zero_weight() {
        let qr = PivotedQr::factor(matrix(&[&[1.0, 0.0], &[1.0, 0.0]]));
        let x = qr.solve(&[4.0, 6.0]);
        assert!((x[0] - 5.0).abs() < 1e-14);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn all_zero_matrix() {
        let qr = PivotedQr::factor(matrix(&[&[0.0, 0.0], &[0.0, 0.0]]));
        assert_eq!(qr.rank(), 0);
        assert_eq!(qr.solve(&[1.0, 2.0]), vec![0.0, 0.0]);
    }
}
