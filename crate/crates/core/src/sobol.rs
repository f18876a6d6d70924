//! Unscrambled Sobol sequences with Joe–Kuo direction numbers.
//!
//! Points are produced in Gray-code order with the initial all-zeros point
//! skipped, so every coordinate lies strictly inside `(0, 1)`.

use std::sync::OnceLock;

use thiserror::Error;

use crate::geometry::{GeometryError, HyperRectangle};

const BITS: usize = 32;
const JOE_KUO: &str = include_str!("../data/new-joe-kuo-6.1000");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SobolError {
    #[error("dimension {0} outside the supported range 1..={MAX}", MAX = max_dimension())]
    UnsupportedDimension(usize),
    #[error("sequence exhausted after 2^32 - 1 points")]
    Exhausted,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

struct TableRow {
    degree: u32,
    coeffs: u32,
    initial: Vec<u32>,
}

fn table() -> &'static [TableRow] {
    static TABLE: OnceLock<Vec<TableRow>> = OnceLock::new();
    TABLE.get_or_init(|| {
        JOE_KUO
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let mut fields = line.split_whitespace().skip(1).map(|f| {
                    f.parse::<u32>()
                        .expect("direction-number table holds unsigned integers")
                });
                let degree = fields.next().expect("degree column");
                let coeffs = fields.next().expect("coefficient column");
                let initial: Vec<u32> = fields.collect();
                assert_eq!(initial.len(), degree as usize, "malformed table row");
                TableRow {
                    degree,
                    coeffs,
                    initial,
                }
            })
            .collect()
    })
}

/// Largest dimension covered by the bundled table.
pub fn max_dimension() -> usize {
    table().len() + 1
}

/// Direction numbers `v_1..v_32` for a 0-based axis, left-aligned in a u32.
fn direction_numbers(axis: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if axis == 0 {
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let row = &table()[axis - 1];
    let s = row.degree as usize;
    let mut m = [0u32; BITS];
    m[..s.min(BITS)].copy_from_slice(&row.initial[..s.min(BITS)]);
    for i in s..BITS {
        let mut value = m[i - s] ^ (m[i - s] << s);
        for k in 1..s {
            let bit = (row.coeffs >> (s - 1 - k)) & 1;
            if bit == 1 {
                value ^= m[i - k] << k;
            }
        }
        m[i] = value;
    }
    for (k, slot) in v.iter_mut().enumerate() {
        *slot = m[k] << (BITS - 1 - k);
    }
    v
}

/// Stateful Sobol point generator.
#[derive(Debug, Clone)]
pub struct SobolGenerator {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl SobolGenerator {
    pub fn new(d: usize) -> Result<Self, SobolError> {
        if d == 0 || d > max_dimension() {
            return Err(SobolError::UnsupportedDimension(d));
        }
        Ok(Self {
            directions: (0..d).map(direction_numbers).collect(),
            state: vec![0; d],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Number of points emitted so far.
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn next_point(&mut self) -> Result<Vec<f64>, SobolError> {
        if self.index >= u32::MAX as u64 {
            return Err(SobolError::Exhausted);
        }
        // Gray-code update: flip by the direction number of the lowest zero
        // bit of the previous index.
        let c = (!self.index).trailing_zeros() as usize;
        self.index += 1;
        let scale = 1.0 / (1u64 << BITS) as f64;
        Ok(self
            .state
            .iter_mut()
            .zip(&self.directions)
            .map(|(x, v)| {
                *x ^= v[c];
                *x as f64 * scale
            })
            .collect())
    }
}

/// The first `n` points of the `d`-dimensional sequence in `[0, 1]^d`.
pub fn generate(d: usize, n: usize) -> Result<Vec<Vec<f64>>, SobolError> {
    let mut gen = SobolGenerator::new(d)?;
    (0..n).map(|_| gen.next_point()).collect()
}

/// Affine map of unit-cube points onto `domain`.
pub fn scale(points: &[Vec<f64>], domain: &HyperRectangle) -> Result<Vec<Vec<f64>>, SobolError> {
    points
        .iter()
        .map(|u| {
            if u.len() != domain.dim() {
                return Err(GeometryError::DimensionMismatch {
                    expected: domain.dim(),
                    got: u.len(),
                }
                .into());
            }
            Ok(u.iter()
                .enumerate()
                .map(|(j, &t)| domain.lower()[j] + t * domain.width(j))
                .collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points() {
        assert_eq!(
            generate(1, 3).unwrap(),
            vec![vec![0.5], vec![0.75], vec![0.25]]
        );
        assert_eq!(generate(2, 1).unwrap(), vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn dimension_bounds() {
        assert!(max_dimension() >= 1000);
        assert_eq!(
            SobolGenerator::new(0).unwrap_err(),
            SobolError::UnsupportedDimension(0)
        );
        assert!(SobolGenerator::new(max_dimension() + 1).is_err());
        assert!(SobolGenerator::new(max_dimension()).is_ok());
    }

    #[test]
    fn scaling() {
        let d1 = HyperRectangle::new(vec![0.0], vec![10.0]).unwrap();
        assert_eq!(scale(&[vec![0.5]], &d1).unwrap(), vec![vec![5.0]]);
        let d2 = HyperRectangle::new(vec![2.0, -1.0], vec![4.0, 1.0]).unwrap();
        assert_eq!(scale(&[vec![0.0, 1.0]], &d2).unwrap(), vec![vec![2.0, 1.0]]);
        let d3 = HyperRectangle::new(vec![0.0, 0.0], vec![4.0, 4.0]).unwrap();
        assert_eq!(
            scale(&[vec![0.25, 0.75]], &d3).unwrap(),
            vec![vec![1.0, 3.0]]
        );
        assert!(scale(&[vec![0.25]], &d3).is_err());
    }

    #[test]
    fn deterministic_and_interior() {
        let a = generate(7, 300).unwrap();
        let b = generate(7, 300).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&x| x > 0.0 && x < 1.0));
    }
}
