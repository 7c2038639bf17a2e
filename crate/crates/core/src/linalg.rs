//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Frobenius norm of `m − mᵀ`.
pub fn asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).norm()
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vector {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Vector::from_vec(vals)
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn max_eigenvalue(m: &Mat) -> f64 {
    let e = sym_eigenvalues(m);
    e[e.len() - 1]
}

/// Solves `a · x = b` by LU with partial pivoting.
pub fn solve(a: &Mat, b: &Mat) -> Option<Mat> {
    let sol = a.clone().lu().solve(b)?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

pub fn solve_vec(a: &Mat, b: &Vector) -> Option<Vector> {
    let sol = a.clone().lu().solve(b)?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// `Oᵀ diag(values) O`.
pub fn frame_conjugate(frame: &Mat, values: &Vector) -> Mat {
    frame.transpose() * Mat::from_diagonal(values) * frame
}

/// Splits a symmetric positive-definite matrix into an orthogonal frame `O`
/// and eigenvalues `λ` with `m = Oᵀ diag(λ) O`.
pub fn eigen_frame(m: &Mat) -> (Mat, Vector) {
    let eig = SymmetricEigen::new(symmetrize(m));
    (eig.eigenvectors.transpose(), eig.eigenvalues)
}

pub fn is_finite_mat(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn is_finite_vec(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// `xᵀ m x`.
pub fn quad(m: &Mat, x: &Vector) -> f64 {
    x.dot(&(m * x))
}
