//! Dense complex helpers on top of `faer`: weighted cross products, Hermitian
//! factorizations and the truncated Gram whitening shared by the eigensolver,
//! the pseudospectrum scans and the forecast matrix.

use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Col, ColRef, Mat, MatRef, Par, Side};

use crate::{Error, Result};

pub(crate) const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// `lhs^* diag(w) rhs`, computed sequentially so results are bit-stable.
pub fn weighted_cross(lhs: MatRef<'_, c64>, w: &[f64], rhs: MatRef<'_, c64>) -> Mat<c64> {
    debug_assert_eq!(lhs.nrows(), w.len());
    debug_assert_eq!(rhs.nrows(), w.len());
    let scaled = Mat::from_fn(rhs.nrows(), rhs.ncols(), |r, c| rhs[(r, c)] * w[r]);
    let mut out = Mat::zeros(lhs.ncols(), rhs.ncols());
    matmul(out.as_mut(), Accum::Replace, lhs.adjoint(), scaled.as_ref(), c64::new(1.0, 0.0), Par::Seq);
    out
}

/// `(M + M^*) / 2`.
pub fn hermitian_part(m: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

pub fn adjoint(m: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

/// `s * m`.
pub fn scaled(m: MatRef<'_, c64>, s: f64) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn scaled_col(v: ColRef<'_, c64>, s: f64) -> Col<c64> {
    Col::from_fn(v.nrows(), |i| v[i] * s)
}

pub fn matmul_seq(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, c64::new(1.0, 0.0), Par::Seq);
    out
}

pub fn mat_vec(a: MatRef<'_, c64>, v: ColRef<'_, c64>) -> Col<c64> {
    Col::from_fn(a.nrows(), |i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum())
}

/// `u^* v`.
pub fn dot(u: ColRef<'_, c64>, v: ColRef<'_, c64>) -> c64 {
    (0..u.nrows()).map(|i| u[i].conj() * v[i]).sum()
}

/// `v^* M v`.
pub fn quad_form(m: MatRef<'_, c64>, v: ColRef<'_, c64>) -> c64 {
    dot(v, mat_vec(m, v).as_ref())
}

pub fn vec_norm(v: ColRef<'_, c64>) -> f64 {
    (0..v.nrows()).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius_norm(m: MatRef<'_, c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn spectral_norm(m: MatRef<'_, c64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let sv = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("singular values did not converge: {e:?}")))?;
    Ok(sv.first().copied().unwrap_or(0.0))
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

/// `M^p` for a Hermitian positive definite `M`.
pub fn hermitian_power(m: MatRef<'_, c64>, p: f64) -> Result<Mat<c64>> {
    let (vals, vecs) = hermitian_eigen(m)?;
    let max = vals.iter().cloned().fold(0.0, f64::max);
    if vals.iter().any(|&v| !(v > max * 1e-14 && v > 0.0)) {
        return Err(Error::Rank("matrix is not positive definite".into()));
    }
    let n = vals.len();
    let scaled = Mat::from_fn(n, n, |i, j| vecs[(i, j)] * vals[j].powf(p));
    Ok(matmul_seq(scaled.as_ref(), adjoint(vecs.as_ref()).as_ref()))
}

/// Eigenvalues of a general complex matrix with their (unnormalized)
/// eigenvectors as columns.
pub fn general_eigen(m: MatRef<'_, c64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let evd = m
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    Ok(((0..s.nrows()).map(|i| s[i]).collect(), evd.U().to_owned()))
}

/// Truncated factorization `G ~ V S V^*` of a Hermitian positive
/// semidefinite Gram matrix, keeping eigenvalues above `rel_cutoff * max`.
///
/// `basis = V_r S_r^{-1/2}` maps whitened coordinates back to dictionary
/// coefficients, and `basis^* G basis` is the identity on the retained
/// subspace.
#[derive(Clone, Debug)]
pub struct Whitening {
    basis: Mat<c64>,
    retained: Vec<f64>,
}

impl Whitening {
    pub fn new(g: MatRef<'_, c64>, rel_cutoff: f64) -> Result<Self> {
        let (vals, vecs) = hermitian_eigen(g)?;
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max.is_finite() && max > 0.0) {
            return Err(Error::Rank("Gram matrix is numerically zero".into()));
        }
        let threshold = rel_cutoff * max;
        let keep: Vec<usize> = (0..vals.len()).rev().filter(|&i| vals[i] > threshold && vals[i] > 0.0).collect();
        if keep.is_empty() {
            return Err(Error::Rank("no Gram eigenvalue above the cutoff".into()));
        }
        let n = g.nrows();
        let basis = Mat::from_fn(n, keep.len(), |i, k| vecs[(i, keep[k])] / vals[keep[k]].sqrt());
        let retained = keep.iter().map(|&i| vals[i]).collect();
        Ok(Self { basis, retained })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Retained Gram eigenvalues, descending.
    pub fn retained(&self) -> &[f64] {
        &self.retained
    }

    pub fn basis(&self) -> MatRef<'_, c64> {
        self.basis.as_ref()
    }

    /// `basis^* M basis`.
    pub fn project(&self, m: MatRef<'_, c64>) -> Mat<c64> {
        let mb = matmul_seq(m, self.basis.as_ref());
        matmul_seq(adjoint(self.basis.as_ref()).as_ref(), mb.as_ref())
    }

    /// Dictionary coefficients of a whitened vector.
    pub fn lift(&self, u: ColRef<'_, c64>) -> Col<c64> {
        mat_vec(self.basis.as_ref(), u)
    }

    /// Truncated pseudoinverse `V_r S_r^{-1} V_r^*` of the Gram matrix.
    pub fn pseudo_inverse(&self) -> Mat<c64> {
        matmul_seq(self.basis.as_ref(), adjoint(self.basis.as_ref()).as_ref())
    }
}
