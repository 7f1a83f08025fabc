//! Explicit kernel feature maps.
//!
//! [`NystromMap`] is parametrized by representative points `X_r` and whitens
//! `k(X_r, ·)` with the eigenfactors of `B = k(X_r, X_r)`. [`FourierMap`] is
//! the random Fourier map `√(2/J)·cos(W_fᵀx + b_f)`.

use std::f64::consts::TAU;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelConfig, KernelFamily};
use crate::numerics::{default_rel_tol, sym_eig, EigFactors, Matrix, Vector};

#[derive(Debug, Clone)]
pub struct NystromMap {
    reps: Matrix,
    kernel: KernelConfig,
    rank_tol: f64,
    gram: Matrix,
    eig: EigFactors,
}

impl NystromMap {
    /// Builds the map with the default rank tolerance `1e-12·n`.
    pub fn new(reps: Matrix, kernel: KernelConfig) -> Result<Self> {
        let tol = default_rel_tol(reps.ncols(), reps.ncols());
        Self::with_rank_tol(reps, kernel, tol)
    }

    pub fn with_rank_tol(reps: Matrix, kernel: KernelConfig, rank_tol: f64) -> Result<Self> {
        kernel.validate()?;
        if reps.ncols() == 0 {
            return Err(Error::InvalidConfig(
                "Nystrom map needs at least one representative point".into(),
            ));
        }
        if !(0.0..1.0).contains(&rank_tol) {
            return Err(Error::InvalidConfig(format!(
                "rank_tol {rank_tol} outside [0, 1)"
            )));
        }
        let gram = kernel_matrix(&reps, &reps, &kernel)?;
        let eig = sym_eig(&gram)?;
        Ok(NystromMap {
            reps,
            kernel,
            rank_tol,
            gram,
            eig,
        })
    }

    pub fn reps(&self) -> &Matrix {
        &self.reps
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// `B = k(X_r, X_r)`.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn eig(&self) -> &EigFactors {
        &self.eig
    }

    pub fn input_dim(&self) -> usize {
        self.reps.nrows()
    }

    pub fn n_reps(&self) -> usize {
        self.reps.ncols()
    }

    /// Numerical rank of `B`, which is the emitted feature dimension.
    pub fn feature_dim(&self) -> usize {
        self.eig.rank(self.rank_tol)
    }

    /// Replaces the representative points and refreshes the cached factors.
    pub fn set_reps(&mut self, reps: Matrix) -> Result<()> {
        if reps.shape() != self.reps.shape() {
            return Err(Error::dims(
                "representative points",
                format!("{:?}", self.reps.shape()),
                format!("{:?}", reps.shape()),
            ));
        }
        let gram = kernel_matrix(&reps, &reps, &self.kernel)?;
        self.eig = sym_eig(&gram)?;
        self.gram = gram;
        self.reps = reps;
        Ok(())
    }

    /// `Σ^{-1/2}·Uᵀ` restricted to the retained eigenpairs, `J′ × n`.
    pub fn whitening(&self) -> Result<Matrix> {
        let rank = self.feature_dim();
        if rank == 0 {
            return Err(Error::DegenerateMap(
                "every eigenvalue of k(X_r, X_r) is below the rank tolerance".into(),
            ));
        }
        let mut w = self.eig.vectors.columns(0, rank).transpose();
        for (i, mut row) in w.row_iter_mut().enumerate() {
            row /= self.eig.values[i].sqrt();
        }
        Ok(w)
    }
}

/// Whitened Nyström features `Σ^{-1/2} Uᵀ k(X_r, X)`, one column per sample.
pub fn nystrom_features(x: &Matrix, map: &NystromMap) -> Result<Matrix> {
    if x.nrows() != map.input_dim() {
        return Err(Error::dims(
            "Nystrom input dimension",
            map.input_dim(),
            x.nrows(),
        ));
    }
    let whitening = map.whitening()?;
    let g_t = kernel_matrix(&map.reps, x, &map.kernel)?;
    Ok(whitening * g_t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierMap {
    w: Matrix,
    b: Vector,
}

impl FourierMap {
    pub fn new(w: Matrix, b: Vector) -> Result<Self> {
        if w.ncols() == 0 {
            return Err(Error::InvalidConfig("Fourier map needs J >= 1".into()));
        }
        if b.len() != w.ncols() {
            return Err(Error::dims("Fourier phase length", w.ncols(), b.len()));
        }
        if b.iter().any(|v| !(0.0..=TAU).contains(v)) {
            return Err(Error::InvalidConfig(
                "Fourier phases must lie in [0, 2π]".into(),
            ));
        }
        Ok(FourierMap { w, b })
    }

    /// Accepts arbitrary phases and wraps them into `[0, 2π)`.
    pub fn from_unwrapped(w: Matrix, b: Vector) -> Result<Self> {
        Self::new(w, b.map(|v| v.rem_euclid(TAU)))
    }

    pub fn projection(&self) -> &Matrix {
        &self.w
    }

    pub fn phases(&self) -> &Vector {
        &self.b
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn into_parts(self) -> (Matrix, Vector) {
        (self.w, self.b)
    }
}

/// Pre-activations `W_fᵀX + b_f·1ᵀ`, `J × N`.
pub(crate) fn rf_preactivation(x: &Matrix, map: &FourierMap) -> Matrix {
    let mut theta = map.w.transpose() * x;
    for mut col in theta.column_iter_mut() {
        col += &map.b;
    }
    theta
}

pub(crate) fn rf_scale(j: usize) -> f64 {
    (2.0 / j as f64).sqrt()
}

/// `√(2/J)·cos(W_fᵀX + b_f·1ᵀ)`, `J × N`.
pub fn rf_features(x: &Matrix, map: &FourierMap) -> Result<Matrix> {
    if x.nrows() != map.input_dim() {
        return Err(Error::dims(
            "Fourier input dimension",
            map.input_dim(),
            x.nrows(),
        ));
    }
    let s = rf_scale(map.feature_dim());
    Ok(rf_preactivation(x, map).map(|t| s * t.cos()))
}

/// Either trainable map, for code that handles both.
#[derive(Debug, Clone)]
pub enum FeatureMap {
    Nystrom(NystromMap),
    Fourier(FourierMap),
}

impl FeatureMap {
    pub fn kind(&self) -> &'static str {
        match self {
            FeatureMap::Nystrom(_) => "nystrom",
            FeatureMap::Fourier(_) => "fourier",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Nystrom(m) => m.input_dim(),
            FeatureMap::Fourier(m) => m.input_dim(),
        }
    }

    /// Nominal size: `n` representative points or `J` frequencies.
    pub fn size(&self) -> usize {
        match self {
            FeatureMap::Nystrom(m) => m.n_reps(),
            FeatureMap::Fourier(m) => m.feature_dim(),
        }
    }

    /// Features fed to predictors (whitened for Nyström).
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            FeatureMap::Nystrom(m) => nystrom_features(x, m),
            FeatureMap::Fourier(m) => rf_features(x, m),
        }
    }
}

/// Representative points drawn uniformly without replacement from the columns of `x`.
pub fn init_nystrom(x: &Matrix, n: usize, kernel: KernelConfig, seed: u64) -> Result<NystromMap> {
    let idx = sample_columns(x.ncols(), n, seed)?;
    NystromMap::new(x.select_columns(idx.iter()), kernel)
}

pub(crate) fn sample_columns(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 || n > total {
        return Err(Error::InvalidConfig(format!(
            "cannot sample {n} representative points from {total} samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, total, n).into_vec())
}

/// `W_f ~ Normal(0, 2γ)` entrywise and `b_f ~ Uniform[0, 2π)`, the spectral
/// measure of the Gaussian kernel.
pub fn init_fourier(kernel: &KernelConfig, d: usize, j: usize, seed: u64) -> Result<FourierMap> {
    kernel.validate()?;
    if kernel.family != KernelFamily::Gaussian {
        return Err(Error::InvalidConfig(
            "random Fourier features require a shift-invariant (gaussian) kernel".into(),
        ));
    }
    if j == 0 || d == 0 {
        return Err(Error::InvalidConfig(
            "Fourier map needs d >= 1 and J >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (2.0 * kernel.gamma).sqrt())
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let w = Matrix::from_fn(d, j, |_, _| normal.sample(&mut rng));
    let uniform = Uniform::new(0.0, TAU).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let b = Vector::from_fn(j, |_, _| uniform.sample(&mut rng));
    FourierMap::new(w, b)
}
