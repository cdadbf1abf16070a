//! Dense complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type Matrix = DMatrix<C64>;
pub type Vector = DVector<C64>;

pub const ZERO: C64 = Complex { re: 0.0, im: 0.0 };
pub const ONE: C64 = Complex { re: 1.0, im: 0.0 };

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn real(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn trace(m: &Matrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn hermitian_residual(m: &Matrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
/// Column `k` of the returned matrix is the eigenvector for eigenvalue `k`.
pub fn eigh(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Matrix::zeros(0, 0));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn eigvalsh(m: &Matrix) -> Vec<f64> {
    eigh(m).0
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    eigvalsh(m).last().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    eigvalsh(m).first().copied().unwrap_or(0.0)
}

/// Rebuilds `V f(Λ) V†` from a Hermitian eigen-decomposition.
pub fn hermitian_fn(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let (values, vectors) = eigh(m);
    let n = m.nrows();
    let mut scaled = vectors.clone();
    for (k, &v) in values.iter().enumerate() {
        let fv = f(v);
        for r in 0..n {
            scaled[(r, k)] *= fv;
        }
    }
    &scaled * vectors.adjoint()
}

/// PSD square root. Eigenvalues below `1e-14 · λ_max` are round-off and are
/// clipped to zero; their square roots would otherwise contribute ~1e-7.
pub fn sqrtm_psd(m: &Matrix) -> Matrix {
    let top = max_eigenvalue(m).max(0.0);
    let floor = 1e-14 * top;
    hermitian_fn(m, |v| if v > floor { v.sqrt() } else { 0.0 })
}

/// Inverse square root on the support (eigenvalues above `cutoff`), zero elsewhere.
pub fn inv_sqrt_on_support(m: &Matrix, cutoff: f64) -> Matrix {
    hermitian_fn(m, |v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 })
}

/// Orthonormal basis (as columns) of the eigenspaces with eigenvalue above `cutoff`.
pub fn support_basis(m: &Matrix, cutoff: f64) -> Matrix {
    let (values, vectors) = eigh(m);
    let rank = values.iter().filter(|&&v| v > cutoff).count().max(1);
    vectors.columns(0, rank).into_owned()
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Schatten-1 norm `Tr sqrt(X†X)`.
pub fn trace_norm(m: &Matrix) -> f64 {
    singular_values(m).iter().sum()
}

pub fn is_unitary(u: &Matrix, tol: f64) -> bool {
    u.is_square() && isometry_residual(u) <= tol
}

/// Largest entry of `V†V - I`.
pub fn isometry_residual(v: &Matrix) -> f64 {
    max_abs_diff(&(v.adjoint() * v), &identity(v.ncols()))
}

/// Row-major flattening used for register tensors: first axis most significant.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Permutes tensor axes: axis `i` of the result is axis `perm[i]` of the input.
pub fn permute_axes(data: &[C64], dims: &[usize], perm: &[usize]) -> Vec<C64> {
    debug_assert_eq!(dims.len(), perm.len());
    let old_strides = strides(dims);
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let moved_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dims.len()];
    let mut src = 0usize;
    for _ in 0..total {
        out.push(data[src]);
        // odometer increment over the new axis order
        for ax in (0..new_dims.len()).rev() {
            idx[ax] += 1;
            src += moved_strides[ax];
            if idx[ax] < new_dims[ax] {
                break;
            }
            src -= moved_strides[ax] * new_dims[ax];
            idx[ax] = 0;
        }
    }
    out
}

/// Interprets a row-major buffer as a `rows x cols` matrix.
pub fn reshape(data: &[C64], rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |r, c| data[r * cols + c])
}

/// Row-major flattening of a matrix.
pub fn flatten(m: &Matrix) -> Vec<C64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn log2_safe(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.log2()
    }
}

/// Shannon entropy in bits of a probability vector (zeros contribute nothing).
pub fn shannon_bits(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_axes_swaps_two_qubits() {
        // |01> -> |10>
        let mut data = vec![ZERO; 4];
        data[1] = ONE;
        let out = permute_axes(&data, &[2, 2], &[1, 0]);
        assert_eq!(out[2], ONE);
        assert_eq!(out.iter().filter(|x| x.norm() > 0.0).count(), 1);
    }

    #[test]
    fn permute_axes_three_way_roundtrip() {
        let dims = [2, 3, 4];
        let data: Vec<C64> = (0..24).map(|i| real(i as f64)).collect();
        let p = permute_axes(&data, &dims, &[2, 0, 1]);
        // new dims [4,2,3]; inverse perm of [2,0,1] is [1,2,0]
        let back = permute_axes(&p, &[4, 2, 3], &[1, 2, 0]);
        assert_eq!(back, data);
        // element (a=1,b=2,c=3) of input sits at (c,a,b) of output
        assert_eq!(p[3 * 6 + 3 + 2], data[12 + 2 * 4 + 3]);
    }

    #[test]
    fn eigh_sorted_descending() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![real(0.2), real(0.7), real(0.1)]));
        let (v, _) = eigh(&m);
        assert!((v[0] - 0.7).abs() < 1e-14 && (v[2] - 0.1).abs() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = Matrix::from_row_slice(2, 2, &[real(2.0), c(0.0, 1.0), c(0.0, -1.0), real(2.0)]);
        let s = sqrtm_psd(&m);
        assert!(max_abs_diff(&(&s * &s), &m) < 1e-12);
    }
}
