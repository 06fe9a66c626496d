//! Singular value decompositions by one-sided Jacobi rotations on rows.
//!
//! Rows are carried as a base-2 logarithmic scale times a unit direction,
//! which lets the same kernel orthogonalize ordinary matrices and long
//! products of contractions whose singular values spread over hundreds of
//! binary orders of magnitude. Rotation angles are formed from the ratio of
//! row scales directly, so tiny off-diagonal couplings keep their relative
//! accuracy instead of being swamped by the largest row.

use super::matrix::{dot, norm, Matrix};
use super::subspace::Subspace;
use crate::error::{Error, Result};

/// Rows orthogonal to within this cosine are treated as converged.
const ORTHO_TOL: f64 = 8.0 * f64::EPSILON;
const MAX_SWEEPS: usize = 80;

/// Default relative singular gap required before a singular subspace is
/// considered well defined.
pub const DEFAULT_GAP_TOL: f64 = 1e-8;

/// A matrix represented row by row as `2^scale · direction`.
#[derive(Clone, Debug)]
pub struct ScaledRows {
    log2_scale: Vec<f64>,
    dirs: Matrix,
}

impl ScaledRows {
    pub fn from_matrix(a: &Matrix) -> Self {
        let mut rows = ScaledRows {
            log2_scale: vec![0.0; a.rows()],
            dirs: a.clone(),
        };
        for i in 0..a.rows() {
            rows.renormalize(i);
        }
        rows
    }

    pub fn rows(&self) -> usize {
        self.dirs.rows()
    }

    pub fn cols(&self) -> usize {
        self.dirs.cols()
    }

    pub fn log2_scales(&self) -> &[f64] {
        &self.log2_scale
    }

    /// Unit row directions; a zero row has scale `-inf` and a zero direction.
    pub fn directions(&self) -> &Matrix {
        &self.dirs
    }

    fn renormalize(&mut self, i: usize) {
        let n = norm(self.dirs.row(i));
        if n == 0.0 || !n.is_finite() {
            self.dirs.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
            self.log2_scale[i] = f64::NEG_INFINITY;
            return;
        }
        self.dirs.row_mut(i).iter_mut().for_each(|v| *v /= n);
        self.log2_scale[i] += n.log2();
    }

    /// Replaces the represented matrix `M` by `M · a`.
    pub fn right_multiply(&mut self, a: &Matrix) {
        assert_eq!(self.cols(), a.rows(), "inner dimensions differ");
        let mut next = Matrix::zeros(self.rows(), a.cols());
        for i in 0..self.rows() {
            let r = a.vec_mul(self.dirs.row(i));
            next.row_mut(i).copy_from_slice(&r);
        }
        self.dirs = next;
        for i in 0..self.rows() {
            self.renormalize(i);
        }
    }

    /// Rotates rows until they are mutually orthogonal, then sorts them by
    /// decreasing scale. Every row operation is mirrored on `acc` when given,
    /// so that `acc_after · M_before = M_after` for `acc` starting at identity.
    pub fn orthogonalize(&mut self, mut acc: Option<&mut Matrix>) {
        let n = self.rows();
        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    if self.rotate_pair(p, q, acc.as_deref_mut()) {
                        rotated = true;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        self.sort_descending(acc);
    }

    fn rotate_pair(&mut self, p: usize, q: usize, acc: Option<&mut Matrix>) -> bool {
        let (ep, eq) = (self.log2_scale[p], self.log2_scale[q]);
        if ep == f64::NEG_INFINITY || eq == f64::NEG_INFINITY {
            return false;
        }
        let cos = dot(self.dirs.row(p), self.dirs.row(q));
        if cos.abs() <= ORTHO_TOL {
            return false;
        }
        let (big, small) = if ep >= eq { (p, q) } else { (q, p) };
        let ratio = (self.log2_scale[small] - self.log2_scale[big]).exp2();
        let a = ratio * ratio - 1.0;
        let b = 2.0 * ratio * cos;
        let sgn = if a >= 0.0 { 1.0 } else { -1.0 };
        // tan of the rotation angle is ratio * tau.
        let tau = sgn * 2.0 * cos / (a.abs() + a.hypot(b));
        let t = ratio * tau;
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = t * c;
        let s_over_ratio = tau * c;

        let cols = self.cols();
        for j in 0..cols {
            let u = self.dirs[(big, j)];
            let w = self.dirs[(small, j)];
            self.dirs[(big, j)] = c * u - s * ratio * w;
            self.dirs[(small, j)] = s_over_ratio * u + c * w;
        }
        self.renormalize(big);
        self.renormalize(small);

        if let Some(g) = acc {
            for j in 0..g.cols() {
                let u = g[(big, j)];
                let w = g[(small, j)];
                g[(big, j)] = c * u - s * w;
                g[(small, j)] = s * u + c * w;
            }
        }
        true
    }

    fn sort_descending(&mut self, acc: Option<&mut Matrix>) {
        let n = self.rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| self.log2_scale[j].total_cmp(&self.log2_scale[i]));
        if order.iter().enumerate().all(|(k, &i)| k == i) {
            return;
        }
        let scales = order.iter().map(|&i| self.log2_scale[i]).collect();
        let mut dirs = Matrix::zeros(n, self.cols());
        for (k, &i) in order.iter().enumerate() {
            dirs.row_mut(k).copy_from_slice(self.dirs.row(i));
        }
        self.log2_scale = scales;
        self.dirs = dirs;
        if let Some(g) = acc {
            let old = g.clone();
            for (k, &i) in order.iter().enumerate() {
                g.row_mut(k).copy_from_slice(old.row(i));
            }
        }
    }
}

/// `A = U · diag(2^log2_sigma) · Vᵀ` with `U` square of size `rows`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub log2_sigma: Vec<f64>,
    /// Rows are right singular vectors; rows for zero singular values are zero.
    pub vt: Matrix,
}

impl Svd {
    pub fn sigma(&self) -> Vec<f64> {
        self.log2_sigma.iter().map(|e| e.exp2()).collect()
    }

    /// `L_l`: the span of the top `l` left singular vectors.
    pub fn left_subspace(&self, l: usize, gap_tol: f64) -> Result<Subspace> {
        left_subspace_from(&self.u, &self.log2_sigma, l, gap_tol)
    }
}

pub fn svd(a: &Matrix) -> Svd {
    let mut rows = ScaledRows::from_matrix(a);
    let mut g = Matrix::identity(a.rows());
    rows.orthogonalize(Some(&mut g));
    Svd {
        u: g.transpose(),
        log2_sigma: rows.log2_scale,
        vt: rows.dirs,
    }
}

/// Singular values in descending order, one per row of `a`.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    log2_singular_values(a).into_iter().map(f64::exp2).collect()
}

pub fn log2_singular_values(a: &Matrix) -> Vec<f64> {
    let mut rows = ScaledRows::from_matrix(a);
    rows.orthogonalize(None);
    rows.log2_scale
}

/// Relative gap `(α_l − α_{l+1}) / α_l` computed from log-scales.
pub fn relative_gap(log2_sigma: &[f64], l: usize) -> f64 {
    let hi = log2_sigma[l - 1];
    if hi == f64::NEG_INFINITY {
        return 0.0;
    }
    1.0 - (log2_sigma[l] - hi).exp2()
}

fn left_subspace_from(u: &Matrix, log2_sigma: &[f64], l: usize, gap_tol: f64) -> Result<Subspace> {
    let k = u.rows();
    if l > k {
        return Err(Error::Precondition(format!(
            "singular subspace index {l} exceeds dimension {k}"
        )));
    }
    if l == 0 {
        return Ok(Subspace::zero(k));
    }
    if l == k {
        return Ok(Subspace::full(k));
    }
    let gap = relative_gap(log2_sigma, l);
    if gap < gap_tol {
        return Err(Error::GapTooSmall {
            index: l,
            gap,
            tol: gap_tol,
        });
    }
    Ok(Subspace::from_orthonormal_unchecked(u.columns(0, l)))
}

/// `L_l(A)`.
pub fn svd_subspace(a: &Matrix, l: usize, gap_tol: f64) -> Result<Subspace> {
    svd(a).left_subspace(l, gap_tol)
}

/// A product `A_1 · A_2 ⋯ A_n` kept in factored form
/// `U · diag(2^log2_sigma) · W` and updated by right multiplication.
#[derive(Clone, Debug)]
pub struct ProductSvd {
    u: Matrix,
    rows: ScaledRows,
    len: usize,
}

impl ProductSvd {
    pub fn identity(d: usize) -> Self {
        ProductSvd {
            u: Matrix::identity(d),
            rows: ScaledRows::from_matrix(&Matrix::identity(d)),
            len: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.u.rows()
    }

    /// Number of factors multiplied in so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Multiplies the product on the right by `a` and returns the orthogonal
    /// change `R` of left singular frame, so that `U_new = U_old · R`.
    pub fn right_multiply(&mut self, a: &Matrix) -> Matrix {
        self.rows.right_multiply(a);
        let mut g = Matrix::identity(self.dim());
        self.rows.orthogonalize(Some(&mut g));
        let r = g.transpose();
        self.u = self.u.matmul(&r);
        self.len += 1;
        r
    }

    pub fn log2_singular_values(&self) -> &[f64] {
        self.rows.log2_scales()
    }

    /// Left singular vectors as columns.
    pub fn left_vectors(&self) -> &Matrix {
        &self.u
    }

    pub fn left_subspace(&self, l: usize, gap_tol: f64) -> Result<Subspace> {
        left_subspace_from(&self.u, self.rows.log2_scales(), l, gap_tol)
    }

    /// Explicit product; may underflow for long products.
    pub fn to_matrix(&self) -> Matrix {
        let d = self.dim();
        let mut dw = Matrix::zeros(d, self.rows.cols());
        for i in 0..d {
            let s = self.rows.log2_scales()[i].exp2();
            for (o, v) in dw.row_mut(i).iter_mut().zip(self.rows.directions().row(i)) {
                *o = s * v;
            }
        }
        self.u.matmul(&dw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_has_unit_singular_values() {
        assert!(close(&singular_values(&Matrix::identity(3)), &[1.0, 1.0, 1.0], 1e-15));
    }

    #[test]
    fn diagonal_values_come_back_sorted() {
        let a = Matrix::diag(&[0.5, 3.0]);
        assert!(close(&singular_values(&a), &[3.0, 0.5], 1e-15));
    }

    #[test]
    fn antidiagonal_example() {
        // A·Aᵀ = diag(4, 1).
        let a = Matrix::from_rows(&[[0.0, 2.0], [1.0, 0.0]]);
        assert!(close(&singular_values(&a), &[2.0, 1.0], 1e-15));
    }

    #[test]
    fn zero_matrix_and_wide_matrix() {
        assert_eq!(singular_values(&Matrix::zeros(2, 2)), vec![0.0, 0.0]);
        let a = Matrix::from_rows(&[[3.0, 0.0, 4.0]]);
        assert!(close(&singular_values(&a), &[5.0], 1e-14));
    }

    #[test]
    fn reconstruction_matches_input() {
        let a = Matrix::from_rows(&[[0.3, -1.2, 0.7], [2.0, 0.1, -0.4], [0.5, 0.5, 0.9]]);
        let s = svd(&a);
        let sig = s.sigma();
        let mut d = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                d[(i, j)] = sig[i] * s.vt[(i, j)];
            }
        }
        let back = s.u.matmul(&d);
        assert!(back.sub(&a).max_abs() < 1e-13);
        let utu = s.u.transpose().matmul(&s.u);
        assert!(utu.sub(&Matrix::identity(3)).max_abs() < 1e-13);
    }

    #[test]
    fn svd_subspace_edges() {
        let a = Matrix::diag(&[2.0, 1.0]);
        let l1 = svd_subspace(&a, 1, DEFAULT_GAP_TOL).unwrap();
        assert!((l1.basis()[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert_eq!(svd_subspace(&a, 0, DEFAULT_GAP_TOL).unwrap().dim(), 0);
        assert_eq!(svd_subspace(&a, 2, DEFAULT_GAP_TOL).unwrap().dim(), 2);
        let conformal = Matrix::identity(2).scale(0.5);
        assert!(matches!(
            svd_subspace(&conformal, 1, DEFAULT_GAP_TOL),
            Err(Error::GapTooSmall { .. })
        ));
    }

    #[test]
    fn long_products_keep_small_singular_values() {
        // diag(1/2, 1/8)^300 has singular values 2^-300 and 2^-900, far beyond
        // what an explicitly formed product could represent in the second slot.
        let a = Matrix::from_rows(&[[0.5, 0.01], [0.0, 0.125]]);
        let mut p = ProductSvd::identity(2);
        for _ in 0..300 {
            p.right_multiply(&a);
        }
        let s = p.log2_singular_values();
        assert!((s[0] / 300.0 + 1.0).abs() < 0.01);
        assert!((s[1] / 300.0 + 3.0).abs() < 0.01);
        assert!((s[0] + s[1] - 300.0 * (0.5f64 * 0.125).log2()).abs() < 1e-9);
    }
}
