//! Dense linear algebra shared by the objectives, feature maps and predictors.
//!
//! Data matrices hold one sample per column. Every routine here is a pure
//! function of its inputs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Absolute-or-relative symmetry tolerance accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Relative tolerance on negative eigenvalues before a matrix is rejected as
/// not positive semidefinite.
pub const PSD_TOL: f64 = 1e-8;

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EigFactors {
    pub values: Vector,
    pub vectors: Matrix,
}

impl EigFactors {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Largest eigenvalue, or 0 for an empty decomposition.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Number of eigenvalues strictly above `rel_tol * max(λ_max, 0)`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cutoff = rel_tol * self.max_value();
        let max = self.max_value();
        if max <= 0.0 {
            return 0;
        }
        self.values.iter().take_while(|&&v| v > cutoff).count()
    }

    /// U·diag(values)·Uᵀ.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = scale_columns(&self.vectors, self.values.as_slice());
        &scaled * self.vectors.transpose()
    }
}

/// Default pseudoinverse tolerance for a `rows × cols` matrix.
pub fn default_rel_tol(rows: usize, cols: usize) -> f64 {
    1e-12 * rows.max(cols).max(1) as f64
}

fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Symmetric eigendecomposition with eigenvalues in non-increasing order.
pub fn sym_eig(m: &Matrix) -> Result<EigFactors> {
    check_square(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(EigFactors {
            values: Vector::zeros(0),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let scale = max_abs(m).max(1.0);
    let mut max_asym = 0.0_f64;
    for j in 0..n {
        for i in 0..j {
            max_asym = max_asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { max_asym });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sym_eig input".into()));
    }

    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigFactors { values, vectors })
}

/// Rejects decompositions with eigenvalues below `-PSD_TOL * max|λ|`.
pub(crate) fn check_psd(factors: &EigFactors) -> Result<()> {
    let max_abs = factors
        .values
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if let Some(&min) = factors.values.as_slice().last() {
        if min < -PSD_TOL * max_abs {
            return Err(Error::NotPsd { eigenvalue: min });
        }
    }
    Ok(())
}

/// Pseudoinverse assembled from eigenfactors, keeping eigenvalues above
/// `rel_tol * λ_max`.
pub fn pinv_from_eig(factors: &EigFactors, rel_tol: f64) -> Matrix {
    let n = factors.dim();
    let rank = factors.rank(rel_tol);
    if rank == 0 {
        return Matrix::zeros(n, n);
    }
    let u = factors.vectors.columns(0, rank);
    let inv: Vec<f64> = factors.values.as_slice()[..rank]
        .iter()
        .map(|v| 1.0 / v)
        .collect();
    let scaled = scale_columns(&u.into_owned(), &inv);
    &scaled * u.transpose()
}

/// Moore–Penrose inverse of a symmetric PSD matrix.
pub fn pinv_psd(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let factors = sym_eig(m)?;
    check_psd(&factors)?;
    Ok(pinv_from_eig(&factors, rel_tol))
}

/// Returns `(M + ρI)⁻¹ B` for ρ > 0, and `M⁺ B` (default tolerance) for ρ = 0.
pub fn solve_ridge(m: &Matrix, rho: f64, b: &Matrix) -> Result<Matrix> {
    check_square(m)?;
    if b.nrows() != m.nrows() {
        return Err(Error::dims("solve_ridge", m.nrows(), b.nrows()));
    }
    if !rho.is_finite() || rho < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "ridge rho must be >= 0, got {rho}"
        )));
    }
    let n = m.nrows();
    if rho > 0.0 {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += rho;
        }
        if let Some(chol) = shifted.clone().cholesky() {
            return Ok(chol.solve(b));
        }
        // M slightly indefinite from round-off; fall back to the eigen route.
        let factors = sym_eig(&shifted)?;
        check_psd(&factors)?;
        return Ok(pinv_from_eig(&factors, default_rel_tol(n, n)) * b);
    }
    let factors = sym_eig(m)?;
    check_psd(&factors)?;
    if factors.rank(default_rel_tol(n, n)) == 0 {
        return Err(Error::RankDeficient);
    }
    Ok(pinv_from_eig(&factors, default_rel_tol(n, n)) * b)
}

/// `M·C`: subtracts each row's mean. Never forms the N×N centering matrix.
pub fn center_cols(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    center_cols_mut(&mut out);
    out
}

pub fn center_cols_mut(m: &mut Matrix) {
    let n = m.ncols();
    if n == 0 {
        return;
    }
    let means = m.column_mean();
    for mut col in m.column_iter_mut() {
        col -= &means;
    }
}

/// `C·M`: subtracts each column's mean.
pub fn center_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let n = out.nrows();
    if n == 0 {
        return out;
    }
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Multiplies column `j` of `m` by `s[j]`.
pub fn scale_columns(m: &Matrix, s: &[f64]) -> Matrix {
    debug_assert_eq!(m.ncols(), s.len());
    let mut out = m.clone();
    for (mut col, &f) in out.column_iter_mut().zip(s) {
        col *= f;
    }
    out
}

/// Elementwise inner product ⟨A, B⟩ = tr(AᵀB).
pub fn frob_dot(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}
