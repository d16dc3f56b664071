//! Dense linear-algebra helpers on top of `faer`: SVD-based least squares,
//! numerical rank, sorted eigendecompositions and subspace comparison.

use std::cmp::Ordering;

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

pub type Matrix = Mat<f64>;
pub type CMatrix = Mat<c64>;

/// Default relative singular-value cutoff for pseudoinverses.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Components of a normalized eigenvector below this modulus are skipped when
/// fixing the phase convention.
const PHASE_PIVOT_TOL: f64 = 1e-8;

pub(crate) struct ThinSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub(crate) fn thin_svd(a: MatRef<'_, f64>) -> Result<ThinSvd> {
    let svd = a
        .thin_svd()
        .map_err(|_| Error::InvalidArgument("SVD did not converge".into()))?;
    let s = svd.S().column_vector();
    Ok(ThinSvd {
        u: svd.U().to_owned(),
        s: (0..s.nrows()).map(|i| s[i]).collect(),
        v: svd.V().to_owned(),
    })
}

fn kept(s: &[f64], rel_tol: f64) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().take_while(|&&x| x > rel_tol * smax).count()
}

/// Least-squares solution `X = A⁺ B` where the pseudoinverse drops singular
/// values below `rank_tol · σ_max`. Returns the solution and the retained rank.
pub fn lstsq(a: MatRef<'_, f64>, b: MatRef<'_, f64>, rank_tol: f64) -> Result<(Matrix, usize)> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "lstsq: A has {} rows, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let svd = thin_svd(a)?;
    let r = kept(&svd.s, rank_tol);
    // X = V_r S_r^{-1} U_rᵀ B
    let ur = svd.u.as_ref().subcols(0, r);
    let vr = svd.v.as_ref().subcols(0, r);
    let mut utb = ur.transpose() * b;
    for i in 0..r {
        let inv = 1.0 / svd.s[i];
        for j in 0..utb.ncols() {
            utb[(i, j)] *= inv;
        }
    }
    Ok((vr * utb.as_ref(), r))
}

/// Moore–Penrose pseudoinverse with relative cutoff.
pub fn pinv(a: MatRef<'_, f64>, rank_tol: f64) -> Result<(Matrix, usize)> {
    lstsq(a, Matrix::identity(a.nrows(), a.nrows()).as_ref(), rank_tol)
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(a: MatRef<'_, f64>, rel_tol: f64) -> Result<usize> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0);
    }
    Ok(kept(&thin_svd(a)?.s, rel_tol))
}

pub(crate) fn singular_values_c(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values()
        .map_err(|_| Error::InvalidArgument("complex SVD did not converge".into()))
}

pub(crate) fn complex_rank(a: MatRef<'_, c64>, rel_tol: f64) -> Result<usize> {
    Ok(kept(&singular_values_c(a)?, rel_tol))
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(a: MatRef<'_, c64>) -> Result<f64> {
    let s = singular_values_c(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

pub(crate) fn inverse_c(a: MatRef<'_, c64>) -> CMatrix {
    a.partial_piv_lu().inverse()
}

pub(crate) fn inverse(a: MatRef<'_, f64>) -> Matrix {
    a.partial_piv_lu().inverse()
}

pub fn to_complex(a: MatRef<'_, f64>) -> CMatrix {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    a.norm_l2()
}

pub fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

/// Canonical eigenvalue order: descending modulus, then descending real
/// part, then descending imaginary part.
pub fn eig_order(a: &c64, b: &c64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

/// Scale a vector to unit Euclidean norm and rotate it so that its first
/// non-negligible component is positive real.
pub fn normalize_phase(v: &mut [c64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    for z in v.iter_mut() {
        *z /= norm;
    }
    if let Some(p) = v.iter().find(|z| z.norm() > PHASE_PIVOT_TOL).copied() {
        let rot = p.conj() / p.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Eigendecomposition `A V = V diag(λ)` with eigenvalues in canonical order
/// and eigenvector columns normalized by [`normalize_phase`].
pub fn eigen_sorted(a: MatRef<'_, f64>) -> Result<(Vec<c64>, CMatrix)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let evd = a.eigen().map_err(|_| Error::EigenSolverFailure)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig_order(&s[i], &s[j]));
    let values: Vec<c64> = idx.iter().map(|&i| s[i]).collect();
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenSolverFailure);
    }
    let mut vecs = CMatrix::zeros(n, n);
    for (col, &src) in idx.iter().enumerate() {
        let mut v: Vec<c64> = (0..n).map(|r| u[(r, src)]).collect();
        normalize_phase(&mut v);
        for (r, z) in v.into_iter().enumerate() {
            vecs[(r, col)] = z;
        }
    }
    Ok((values, vecs))
}

/// Largest gap after greedily pairing each eigenvalue of `a` with its
/// nearest unused partner in `b`. Infinite when the multisets differ in size.
pub fn spectrum_gap(a: &[c64], b: &[c64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut a = a.to_vec();
    a.sort_by(eig_order);
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in &a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("sizes match");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Orthonormal basis (columns) of the range of `a`, keeping singular
/// directions above `rel_tol · σ_max`.
pub(crate) fn orthonormal_basis(a: MatRef<'_, c64>, rel_tol: f64) -> Result<CMatrix> {
    if a.ncols() == 0 {
        return Ok(CMatrix::zeros(a.nrows(), 0));
    }
    let svd = a
        .thin_svd()
        .map_err(|_| Error::InvalidArgument("complex SVD did not converge".into()))?;
    let s = svd.S().column_vector();
    let sv: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
    let r = kept(&sv, rel_tol);
    Ok(svd.U().subcols(0, r).to_owned())
}

/// Largest principal angle (radians) between the column spaces of `a` and
/// `b`, computed from the sine side for accuracy at small angles.
pub fn max_principal_angle(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<f64> {
    let qa = orthonormal_basis(a, 1e-10)?;
    let qb = orthonormal_basis(b, 1e-10)?;
    if qa.ncols() != qb.ncols() {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    if qa.ncols() == 0 {
        return Ok(0.0);
    }
    let proj = qa.as_ref() * (qa.adjoint() * qb.as_ref());
    let resid = qb.as_ref() - proj.as_ref();
    let s = singular_values_c(resid.as_ref())?;
    let sin = s.first().copied().unwrap_or(0.0).min(1.0);
    Ok(sin.asin())
}

/// Row-major nested vectors, the JSON layout used for every matrix.
pub fn to_rows(a: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::ShapeMismatch("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub(crate) mod serde_matrix {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{from_rows, to_rows, Matrix};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m.as_ref()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod serde_matrix_opt {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{from_rows, to_rows, Matrix};

    pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(|m| to_rows(m.as_ref())).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Matrix>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|rows| from_rows(&rows).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = Mat::from_fn(4, 2, |i, j| (i as f64 + 1.0).powi(j as i32));
        let x = Mat::from_fn(2, 1, |i, _| [3.0, -2.0][i]);
        let b = a.as_ref() * x.as_ref();
        let (sol, rank) = lstsq(a.as_ref(), b.as_ref(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rank, 2);
        assert!(max_abs_diff(sol.as_ref(), x.as_ref()) < 1e-12);
    }

    #[test]
    fn rank_of_rank_one_matrix() {
        let a = Mat::from_fn(3, 3, |i, j| (i + 1) as f64 * (j + 2) as f64);
        assert_eq!(numerical_rank(a.as_ref(), 1e-10).unwrap(), 1);
        assert_eq!(numerical_rank(Matrix::zeros(2, 2).as_ref(), 1e-10).unwrap(), 0);
    }

    #[test]
    fn eigen_sorted_orders_and_normalizes() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { [0.5, -2.0, 1.0][i] } else { 0.0 });
        let (vals, vecs) = eigen_sorted(a.as_ref()).unwrap();
        let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![-2.0, 1.0, 0.5]);
        for j in 0..3 {
            let pivot = (0..3).map(|i| vecs[(i, j)]).find(|z| z.norm() > 1e-8).unwrap();
            assert!(pivot.im.abs() < 1e-15 && pivot.re > 0.0);
        }
    }

    #[test]
    fn conjugate_pairs_put_positive_imaginary_first() {
        let a = Mat::from_fn(2, 2, |i, j| [[0.0, -1.0], [1.0, 0.0]][i][j]);
        let (vals, _) = eigen_sorted(a.as_ref()).unwrap();
        assert!(vals[0].im > 0.0 && vals[1].im < 0.0);
    }

    #[test]
    fn principal_angle_of_rotated_basis_is_zero() {
        let a = CMatrix::from_fn(3, 2, |i, j| c64::new(if i == j { 1.0 } else { 0.0 }, 0.0));
        let b = CMatrix::from_fn(3, 2, |i, j| match (i, j) {
            (0, _) => c64::new(0.6, 0.0),
            (1, 0) => c64::new(0.8, 0.0),
            (1, 1) => c64::new(-0.8, 0.0),
            _ => c64::new(0.0, 0.0),
        });
        assert!(max_principal_angle(a.as_ref(), b.as_ref()).unwrap() < 1e-12);
        let c = CMatrix::from_fn(3, 2, |i, j| c64::new(if i == j + 1 { 1.0 } else { 0.0 }, 0.0));
        let ang = max_principal_angle(a.as_ref(), c.as_ref()).unwrap();
        assert!((ang - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn spectrum_gap_matches_permuted_multisets() {
        let a = [c64::new(1.0, 0.0), c64::new(0.5, 0.2), c64::new(0.5, -0.2)];
        let b = [a[2], a[0], a[1]];
        assert_eq!(spectrum_gap(&a, &b), 0.0);
        assert!(spectrum_gap(&a, &b[..2]).is_infinite());
    }
}
