//! Dense linear-algebra helpers shared by the analysis modules.
//!
//! Rank decisions compare singular values against `tol * max(sigma_max, scale)`,
//! where `scale` lets a caller measure an image `B V` against the size of `B`
//! instead of against itself.

use nalgebra::{DMatrix, SymmetricEigen};

pub type Mat = DMatrix<f64>;

/// Thin SVD `(U, s, V)` with `s` descending. nalgebra's SVD can return wrong
/// factors for exactly rank-deficient input, so faer does the work.
fn svd(m: &Mat) -> (Mat, Vec<f64>, Mat) {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return (Mat::zeros(r, 0), Vec::new(), Mat::zeros(c, 0));
    }
    let f = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    match f.thin_svd() {
        Ok(svd) => {
            let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
            (
                Mat::from_fn(r, k, |i, j| u[(i, j)]),
                (0..k).map(|i| s[i]).collect(),
                Mat::from_fn(c, k, |i, j| v[(i, j)]),
            )
        }
        // Only non-finite input fails to converge.
        Err(_) => (Mat::zeros(r, k), vec![f64::NAN; k], Mat::zeros(c, k)),
    }
}

/// Singular values in descending order. Empty matrices have none.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    svd(m).1
}

/// Operator 2-norm.
pub fn spectral_norm(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

fn cutoff(s: &[f64], tol: f64, scale: f64) -> f64 {
    tol * s.first().copied().unwrap_or(0.0).max(scale)
}

/// Number of singular values above `tol * max(sigma_max, scale)`.
pub fn numerical_rank(m: &Mat, tol: f64, scale: f64) -> usize {
    let s = singular_values(m);
    let cut = cutoff(&s, tol, scale);
    s.iter().filter(|&&x| x > cut && x > 0.0).count()
}

/// Orthonormal basis of the column space of `m`.
pub fn column_space(m: &Mat, tol: f64, scale: f64) -> Mat {
    let n = m.nrows();
    if n == 0 || m.ncols() == 0 {
        return Mat::zeros(n, 0);
    }
    let (u, s, _) = svd(m);
    let cut = cutoff(&s, tol, scale);
    let keep = s.iter().take_while(|&&x| x > cut && x > 0.0).count();
    canonical_signs(u.columns(0, keep).into_owned())
}

/// Moore-Penrose inverse, treating singular values at most `eps` as zero.
pub fn pseudo_inverse(m: &Mat, eps: f64) -> Mat {
    let (u, s, v) = svd(m);
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (k, &x) in s.iter().enumerate() {
        if x > eps {
            out += v.column(k) * u.column(k).transpose() / x;
        }
    }
    out
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns of `q`.
pub fn orth_complement(q: &Mat) -> Mat {
    let n = q.nrows();
    let k = q.ncols();
    if k == 0 {
        return Mat::identity(n, n);
    }
    if k >= n {
        return Mat::zeros(n, 0);
    }
    let p = Mat::identity(n, n) - q * q.transpose();
    let eig = sym_eig(&p);
    // Eigenvalues are ascending; the top n-k belong to the complement.
    let mut out = Mat::zeros(n, n - k);
    for c in 0..(n - k) {
        out.set_column(c, &eig.vectors.column(k + c));
    }
    canonical_signs(out)
}

/// Orthonormal basis of the kernel of `m`.
pub fn null_space(m: &Mat, tol: f64) -> Mat {
    let row_space = column_space(&m.transpose(), tol, 0.0);
    orth_complement(&row_space)
}

/// Flip column signs so the first entry of magnitude above 1e-8 is positive.
pub fn canonical_signs(mut q: Mat) -> Mat {
    for c in 0..q.ncols() {
        let lead = q.column(c).iter().copied().find(|x| x.abs() > 1e-8);
        if matches!(lead, Some(x) if x < 0.0) {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

pub fn sym_eig(m: &Mat) -> SymEig {
    let n = m.nrows();
    if n == 0 {
        return SymEig {
            values: Vec::new(),
            vectors: Mat::zeros(0, 0),
        };
    }
    let e = SymmetricEigen::new(symmetrize(m));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let mut vectors = Mat::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vectors.set_column(c, &e.eigenvectors.column(i));
    }
    SymEig {
        values: idx.iter().map(|&i| e.eigenvalues[i]).collect(),
        vectors: canonical_signs(vectors),
    }
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// `V f(L) V^T` for a symmetric matrix with eigenpairs `(L, V)`.
pub fn sym_apply(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let e = sym_eig(m);
    let n = m.nrows();
    let mut scaled = e.vectors.clone();
    for c in 0..n {
        let fv = f(e.values[c]);
        scaled.column_mut(c).scale_mut(fv);
    }
    symmetrize(&(scaled * e.vectors.transpose()))
}

pub fn sqrt_spd(m: &Mat) -> Mat {
    sym_apply(m, |x| x.max(0.0).sqrt())
}

pub fn inv_sqrt_spd(m: &Mat) -> Mat {
    sym_apply(m, |x| 1.0 / x.sqrt())
}

/// Log-determinant of a symmetric positive-definite matrix, or `None` when
/// some eigenvalue is non-positive or the result is not finite.
pub fn log_det_spd(m: &Mat) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    if !is_finite(m) {
        return None;
    }
    let e = sym_eig(m);
    if e.values[0] <= 0.0 {
        return None;
    }
    let ld: f64 = e.values.iter().map(|x| x.ln()).sum();
    ld.is_finite().then_some(ld)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &Mat) -> Option<Mat> {
    if m.nrows() == 0 {
        return Some(Mat::zeros(0, 0));
    }
    let inv = symmetrize(m).cholesky()?.inverse();
    is_finite(&inv).then(|| symmetrize(&inv))
}

/// lambda_max / lambda_min, infinite when the matrix is not positive definite.
pub fn condition_spd(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let e = sym_eig(m);
    let lo = e.values[0];
    let hi = *e.values.last().unwrap();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

/// Horizontal concatenation `[a | b]`.
pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows(), "hstack row mismatch");
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

/// Square-matrix determinant with the empty matrix having determinant 1.
pub fn det(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        1.0
    } else {
        m.determinant()
    }
}

/// Matrix from row-major nested vectors; all rows must have length `cols`.
pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Mat {
    Mat::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
