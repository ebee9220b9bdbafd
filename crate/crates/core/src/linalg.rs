//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.sum()
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = idx
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    (vals, vecs)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let (vals, _) = sym_eigen(m);
    *vals.last().unwrap()
}

/// f applied to the eigenvalues of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = m.nrows();
    let (vals, vecs) = sym_eigen(m);
    let mut out = DMatrix::zeros(n, n);
    for (l, v) in vals.iter().zip(&vecs) {
        out += v * v.transpose() * f(*l);
    }
    out
}

pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |l| l.max(0.0).sqrt())
}

pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let scale = m.amax().max(1e-300);
    m.clone()
        .pseudo_inverse(1e-12 * scale * (m.nrows().max(m.ncols()) as f64))
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.clone().svd(false, false).singular_values;
    let top = s.max();
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|x| **x > rel_tol * top).count()
}

/// Largest generalized eigenvalue λ of A x = λ B x for symmetric A ⪰ 0 and
/// positive-definite B, with its eigenvector. `None` if B is not positive
/// definite.
pub fn max_generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<(f64, DVector<f64>)> {
    let sym_b = (b + b.transpose()) * 0.5;
    let chol = sym_b.cholesky()?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse()?;
    let c = &l_inv * a * l_inv.transpose();
    let (vals, vecs) = sym_eigen(&c);
    let y = &vecs[0];
    let x = l_inv.transpose() * y;
    Some((vals[0], x))
}

pub fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub fn cols_to_matrix(cols: &[Vec<f64>], nrows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, cols.len(), |i, j| cols[j][i])
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn matrix_to_cols(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols())
        .map(|j| m.column(j).iter().copied().collect())
        .collect()
}

pub fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_eigen_matches_ratio() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let (l, x) = max_generalized_eigen(&a, &b).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
        let num = (x.transpose() * &a * &x)[0];
        let den = (x.transpose() * &b * &x)[0];
        assert!((num / den - l).abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = psd_sqrt(&m);
        assert!((&s * &s - &m).amax() < 1e-12);
    }
}
