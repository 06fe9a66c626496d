//! Exterior powers in the lexicographic multi-index basis
//! `{1,2} < {1,3} < ... < {d-1,d}`.

use serde::{Deserialize, Serialize};

use super::matrix::{norm, Matrix};
use super::subspace::Subspace;
use crate::error::{Error, Result};

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All increasing `k`-subsets of `0..d` in lexicographic order.
pub fn multi_indices(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(d, k));
    if k > d {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // Advance the rightmost index that still has room.
        let Some(i) = (0..k).rev().find(|&i| idx[i] < d - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// An element of `∧^k R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WedgeVector {
    ambient: usize,
    grade: usize,
    coords: Vec<f64>,
}

impl WedgeVector {
    pub fn new(ambient: usize, grade: usize, coords: Vec<f64>) -> Result<Self> {
        let expected = binomial(ambient, grade);
        if coords.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                found: coords.len(),
            });
        }
        Ok(WedgeVector {
            ambient,
            grade,
            coords,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn grade(&self) -> usize {
        self.grade
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }
}

/// Determinant of the square submatrix picked by `rows` and `cols`.
fn minor(a: &Matrix, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    match k {
        0 => 1.0,
        1 => a[(rows[0], cols[0])],
        2 => {
            a[(rows[0], cols[0])] * a[(rows[1], cols[1])]
                - a[(rows[0], cols[1])] * a[(rows[1], cols[0])]
        }
        _ => {
            let mut sub = Matrix::zeros(k, k);
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    sub[(i, j)] = a[(r, c)];
                }
            }
            sub.det()
        }
    }
}

/// `x_1 ∧ ... ∧ x_k`; coordinates are the `k×k` minors of the `d×k` matrix
/// with the vectors as columns.
pub fn wedge(vectors: &[Vec<f64>]) -> Result<WedgeVector> {
    let k = vectors.len();
    let d = vectors.first().map_or(0, Vec::len);
    if let Some(v) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::DimMismatch {
            expected: d,
            found: v.len(),
        });
    }
    let cols = Matrix::from_columns(d, vectors);
    let all: Vec<usize> = (0..k).collect();
    let coords = multi_indices(d, k)
        .iter()
        .map(|rows| minor(&cols, rows, &all))
        .collect();
    WedgeVector::new(d, k, coords)
}

/// Matrix of `∧^m A` in the lexicographic basis: entry `(I, J)` is the minor
/// of `A` on rows `I` and columns `J`.
pub fn wedge_power(a: &Matrix, m: usize) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let d = a.rows();
    if m == 0 || m > d {
        return Err(Error::Precondition(format!(
            "exterior power grade {m} outside 1..={d}"
        )));
    }
    let idx = multi_indices(d, m);
    let n = idx.len();
    let mut out = Matrix::zeros(n, n);
    for (i, rows) in idx.iter().enumerate() {
        for (j, cols) in idx.iter().enumerate() {
            out[(i, j)] = minor(a, rows, cols);
        }
    }
    Ok(out)
}

/// Plücker coordinates `ι_k(V)`: the wedge of an orthonormal basis, with
/// the first non-negligible coordinate made positive.
pub fn plucker(v: &Subspace) -> Result<WedgeVector> {
    if v.dim() == 0 {
        return Err(Error::Precondition(
            "Plücker coordinates need a subspace of dimension at least 1".into(),
        ));
    }
    let basis: Vec<Vec<f64>> = (0..v.dim()).map(|j| v.basis_vector(j)).collect();
    let mut w = wedge(&basis)?;
    let n = w.norm();
    let cutoff = 1e-9 * w.coords.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let lead = w.coords.iter().copied().find(|c| c.abs() > cutoff).unwrap_or(1.0);
    let s = lead.signum() / n;
    w.coords.iter_mut().for_each(|c| *c *= s);
    Ok(w)
}
