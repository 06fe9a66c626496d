use serde::{Deserialize, Serialize};

use super::matrix::{dot, norm, Matrix};
use super::svd::singular_values;
use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-10;

/// A linear subspace of `R^d` held through an orthonormal basis (as columns).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Subspace {
    ambient: usize,
    basis: Matrix,
}

impl Subspace {
    pub fn zero(d: usize) -> Self {
        Subspace {
            ambient: d,
            basis: Matrix::zeros(d, 0),
        }
    }

    pub fn full(d: usize) -> Self {
        Subspace {
            ambient: d,
            basis: Matrix::identity(d),
        }
    }

    /// Span of standard basis vectors `e_i` for the given indices.
    pub fn coordinate(d: usize, axes: &[usize]) -> Self {
        let mut b = Matrix::zeros(d, axes.len());
        for (j, &i) in axes.iter().enumerate() {
            b[(i, j)] = 1.0;
        }
        Subspace { ambient: d, basis: b }
    }

    /// Checks `basisᵀ·basis = I` before accepting.
    pub fn from_orthonormal(basis: Matrix) -> Result<Self> {
        let g = basis.transpose().matmul(&basis);
        let err = g.sub(&Matrix::identity(basis.cols())).max_abs();
        if err > ORTHONORMAL_TOL || !basis.is_finite() {
            return Err(Error::invariant(
                "basis",
                format!("columns are not orthonormal (deviation {err:.2e})"),
            ));
        }
        Ok(Self::from_orthonormal_unchecked(basis))
    }

    pub(crate) fn from_orthonormal_unchecked(basis: Matrix) -> Self {
        Subspace {
            ambient: basis.rows(),
            basis,
        }
    }

    /// Orthonormalizes the given spanning vectors (modified Gram–Schmidt with
    /// one re-orthogonalization pass). Fails when they are linearly dependent.
    pub fn span(d: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
            let scale = norm(v);
            let mut w = v.clone();
            for _ in 0..2 {
                for c in &cols {
                    let p = dot(&w, c);
                    w.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
                }
            }
            let n = norm(&w);
            if scale == 0.0 || n <= 1e-12 * scale {
                return Err(Error::Precondition(
                    "spanning vectors are linearly dependent".into(),
                ));
            }
            w.iter_mut().for_each(|x| *x /= n);
            cols.push(w);
        }
        Ok(Subspace {
            ambient: d,
            basis: Matrix::from_columns(d, &cols),
        })
    }

    /// The line through a nonzero vector.
    pub fn line(v: &[f64]) -> Result<Self> {
        Self::span(v.len(), &[v.to_vec()])
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn basis_vector(&self, j: usize) -> Vec<f64> {
        self.basis.column(j)
    }

    /// Orthogonal projection matrix `P_V`.
    pub fn projector(&self) -> Matrix {
        self.basis.matmul(&self.basis.transpose())
    }

    /// Coordinates `π_V(x) = basisᵀ·x`.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        self.basis.transpose().mul_vec(x)
    }

    pub fn orthogonal_complement(&self) -> Subspace {
        let d = self.ambient;
        let mut vectors: Vec<Vec<f64>> = (0..self.dim()).map(|j| self.basis.column(j)).collect();
        let mut added = Vec::new();
        // Greedily add the standard basis vector with the largest residual.
        while vectors.len() < d {
            let mut best: Option<(f64, Vec<f64>)> = None;
            for i in 0..d {
                let mut w = vec![0.0; d];
                w[i] = 1.0;
                for _ in 0..2 {
                    for c in &vectors {
                        let p = dot(&w, c);
                        w.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
                    }
                }
                let n = norm(&w);
                if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
                    w.iter_mut().for_each(|x| *x /= n);
                    best = Some((n, w));
                }
            }
            let (_, w) = best.expect("ambient dimension is positive");
            vectors.push(w.clone());
            added.push(w);
        }
        Subspace {
            ambient: d,
            basis: Matrix::from_columns(d, &added),
        }
    }

    /// Image `A(V)`; fails when `A` collapses `V`.
    pub fn image(&self, a: &Matrix) -> Result<Subspace> {
        if a.cols() != self.ambient {
            return Err(Error::DimMismatch {
                expected: self.ambient,
                found: a.cols(),
            });
        }
        let imgs: Vec<Vec<f64>> = (0..self.dim())
            .map(|j| a.mul_vec(&self.basis.column(j)))
            .collect();
        Subspace::span(a.rows(), &imgs)
    }

    /// `|P_{V⊥} x|`, the distance from `x` to `V`.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        let c = self.coordinates(x);
        let p = self.basis.mul_vec(&c);
        let r: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - b).collect();
        norm(&r)
    }
}

/// `d_Gr(W1, W2) = ‖P_{W1} − P_{W2}‖_op`.
pub fn grassmann_distance(w1: &Subspace, w2: &Subspace) -> Result<f64> {
    if w1.ambient_dim() != w2.ambient_dim() {
        return Err(Error::DimMismatch {
            expected: w1.ambient_dim(),
            found: w2.ambient_dim(),
        });
    }
    if w1.dim() != w2.dim() {
        return Err(Error::DimMismatch {
            expected: w1.dim(),
            found: w2.dim(),
        });
    }
    let diff = w1.projector().sub(&w2.projector());
    Ok(singular_values(&diff)[0])
}

/// `κ(V1, V2)`: the smallest line distance between the two subspaces, i.e.
/// the sine of their smallest principal angle; `∞` if either is `{0}`.
pub fn kappa(v1: &Subspace, v2: &Subspace) -> Result<f64> {
    if v1.ambient_dim() != v2.ambient_dim() {
        return Err(Error::DimMismatch {
            expected: v1.ambient_dim(),
            found: v2.ambient_dim(),
        });
    }
    if v1.dim() == 0 || v2.dim() == 0 {
        return Ok(f64::INFINITY);
    }
    // Columns of (I − P_{V2})·B1 have lengths sin(angle(x, V2)) for unit x ∈ V1.
    let (small, big) = if v1.dim() <= v2.dim() { (v1, v2) } else { (v2, v1) };
    let p = big.projector();
    let residual = small.basis().sub(&p.matmul(small.basis()));
    let s = singular_values(&residual.transpose());
    Ok(s.last().copied().unwrap_or(0.0).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthogonal_and_fills_space() {
        let v = Subspace::span(3, &[vec![1.0, 1.0, 0.0]]).unwrap();
        let w = v.orthogonal_complement();
        assert_eq!(w.dim(), 2);
        let cross = v.basis().transpose().matmul(w.basis());
        assert!(cross.max_abs() < 1e-14);
        let total = v.projector().add(&w.projector());
        assert!(total.sub(&Matrix::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn dependent_vectors_are_rejected() {
        let r = Subspace::span(2, &[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(r.is_err());
    }

    #[test]
    fn distance_examples() {
        let e1 = Subspace::coordinate(2, &[0]);
        let e2 = Subspace::coordinate(2, &[1]);
        let diag = Subspace::line(&[1.0, 1.0]).unwrap();
        assert!(grassmann_distance(&e1, &e1).unwrap() < 1e-15);
        assert!((grassmann_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let s = std::f64::consts::FRAC_PI_4.sin();
        assert!((grassmann_distance(&e1, &diag).unwrap() - s).abs() < 1e-14);
    }

    #[test]
    fn distance_rejects_mixed_dimensions() {
        let a = Subspace::coordinate(3, &[0]);
        let b = Subspace::coordinate(3, &[0, 1]);
        assert!(matches!(grassmann_distance(&a, &b), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn kappa_examples() {
        let e1 = Subspace::coordinate(2, &[0]);
        let e2 = Subspace::coordinate(2, &[1]);
        assert_eq!(kappa(&Subspace::zero(2), &e1).unwrap(), f64::INFINITY);
        assert!(kappa(&e1, &e1).unwrap() < 1e-15);
        assert!((kappa(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        // A plane and a line inside it meet.
        let plane = Subspace::coordinate(3, &[0, 1]);
        let line = Subspace::line(&[1.0, 2.0, 0.0]).unwrap();
        assert!(kappa(&plane, &line).unwrap() < 1e-15);
        let tilted = Subspace::line(&[0.0, 1.0, 1.0]).unwrap();
        assert!((kappa(&plane, &tilted).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }
}
