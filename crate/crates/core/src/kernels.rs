//! Kernel functions and their derivatives with respect to the second argument.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// exp(−γ‖x − y‖²)
    Gaussian,
    /// xᵀy. Used for the exact-span checks of the Nyström objective.
    Linear,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Linear => "linear",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "linear" => Ok(KernelFamily::Linear),
            other => Err(Error::InvalidConfig(format!(
                "unknown kernel family `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub family: KernelFamily,
    /// Inverse squared length-scale. Ignored by the linear kernel.
    pub gamma: f64,
}

impl KernelConfig {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        let cfg = KernelConfig {
            family: KernelFamily::Gaussian,
            gamma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn linear() -> Self {
        KernelConfig {
            family: KernelFamily::Linear,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "kernel gamma must be finite and positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

fn check_dims(x1: &Matrix, x2: &Matrix) -> Result<()> {
    if x1.nrows() != x2.nrows() {
        return Err(Error::dims(
            "kernel feature dimension",
            x1.nrows(),
            x2.nrows(),
        ));
    }
    Ok(())
}

fn sq_norms(x: &Matrix) -> Vec<f64> {
    x.column_iter().map(|c| c.norm_squared()).collect()
}

/// `N₁ × N₂` matrix of kernel values between the columns of `x1` and `x2`.
pub fn kernel_matrix(x1: &Matrix, x2: &Matrix, cfg: &KernelConfig) -> Result<Matrix> {
    check_dims(x1, x2)?;
    let mut k = x1.transpose() * x2;
    if cfg.family == KernelFamily::Gaussian {
        let n1 = sq_norms(x1);
        let n2 = sq_norms(x2);
        for j in 0..k.ncols() {
            for i in 0..k.nrows() {
                let d2 = (n1[i] + n2[j] - 2.0 * k[(i, j)]).max(0.0);
                k[(i, j)] = (-cfg.gamma * d2).exp();
            }
        }
    }
    Ok(k)
}

/// Derivatives `∂k(x₁ᵢ, x₂ⱼ)/∂x₂ⱼ`, stored implicitly as the kernel matrix
/// plus the two point sets. No `N₁ × N₂ × d` tensor is ever built.
#[derive(Debug, Clone)]
pub struct KernelGrad<'a> {
    x1: &'a Matrix,
    x2: &'a Matrix,
    k: Matrix,
    cfg: KernelConfig,
}

impl<'a> KernelGrad<'a> {
    pub fn kernel(&self) -> &Matrix {
        &self.k
    }

    /// The d-vector `∂k(x₁ᵢ, x₂ⱼ)/∂x₂ⱼ`.
    pub fn entry(&self, i: usize, j: usize) -> Vector {
        let a = self.x1.column(i);
        match self.cfg.family {
            KernelFamily::Gaussian => {
                let b = self.x2.column(j);
                (a - b) * (2.0 * self.cfg.gamma * self.k[(i, j)])
            }
            KernelFamily::Linear => a.into_owned(),
        }
    }

    /// `Σᵢ weights[i, j] · ∂k(x₁ᵢ, x₂ⱼ)/∂x₂ⱼ` for every `j`, as a `d × N₂` matrix.
    pub fn contract(&self, weights: &Matrix) -> Result<Matrix> {
        if weights.shape() != self.k.shape() {
            return Err(Error::dims(
                "kernel gradient weights",
                format!("{:?}", self.k.shape()),
                format!("{:?}", weights.shape()),
            ));
        }
        match self.cfg.family {
            KernelFamily::Gaussian => {
                // 2γ [X₁ (Γ∘K) − X₂ diag(1ᵀ(Γ∘K))]
                let wk = weights.component_mul(&self.k);
                let mut out = self.x1 * &wk;
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    let s: f64 = wk.column(j).sum();
                    col.axpy(-s, &self.x2.column(j), 1.0);
                }
                out *= 2.0 * self.cfg.gamma;
                Ok(out)
            }
            KernelFamily::Linear => Ok(self.x1 * weights),
        }
    }
}

pub fn kernel_grad_wrt_x2<'a>(
    x1: &'a Matrix,
    x2: &'a Matrix,
    cfg: &KernelConfig,
) -> Result<KernelGrad<'a>> {
    let k = kernel_matrix(x1, x2, cfg)?;
    Ok(KernelGrad {
        x1,
        x2,
        k,
        cfg: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sym_eig;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn diagonal_is_one_and_small_gamma_flattens() {
        let x = unit_random(3, 6, 1);
        let k = kernel_matrix(&x, &x, &KernelConfig::gaussian(2.0).unwrap()).unwrap();
        for i in 0..6 {
            assert_eq!(k[(i, i)], 1.0);
        }
        assert!(k.iter().all(|&v| v > 0.0 && v <= 1.0));
        let flat = kernel_matrix(&x, &x, &KernelConfig::gaussian(1e-12).unwrap()).unwrap();
        assert!(flat.iter().all(|&v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn hand_evaluated_entry() {
        let x = Matrix::from_column_slice(2, 1, &[0.0, 0.0]);
        let y = Matrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let k = kernel_matrix(&x, &y, &KernelConfig::gaussian(0.5).unwrap()).unwrap();
        assert_relative_eq!(k[(0, 0)], (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(k[(0, 0)], 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn rejects_dimension_mismatch_and_bad_gamma() {
        let cfg = KernelConfig::gaussian(1.0).unwrap();
        assert!(kernel_matrix(&Matrix::zeros(2, 3), &Matrix::zeros(3, 3), &cfg).is_err());
        assert!(KernelConfig::gaussian(0.0).is_err());
        assert!(KernelConfig::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn gram_is_symmetric_psd() {
        let x = unit_random(4, 12, 2);
        let k = kernel_matrix(&x, &x, &KernelConfig::gaussian(3.0).unwrap()).unwrap();
        assert!((&k - k.transpose()).amax() < 1e-10);
        let f = sym_eig(&k).unwrap();
        assert!(f.values.iter().all(|&v| v >= -1e-10 * f.max_value()));
    }

    #[test]
    fn gradient_hand_values() {
        let cfg = KernelConfig::gaussian(1.0).unwrap();
        let x = Matrix::from_column_slice(1, 1, &[0.3]);
        let g = kernel_grad_wrt_x2(&x, &x, &cfg).unwrap();
        assert_eq!(g.entry(0, 0)[0], 0.0);

        let a = Matrix::from_column_slice(1, 1, &[0.0]);
        let b = Matrix::from_column_slice(1, 1, &[1.0]);
        let g = kernel_grad_wrt_x2(&a, &b, &cfg).unwrap();
        assert_relative_eq!(g.entry(0, 0)[0], -2.0 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(g.entry(0, 0)[0], -0.7358, epsilon = 1e-4);
    }

    fn fd_check(cfg: KernelConfig, seed: u64) {
        let x1 = unit_random(3, 5, seed);
        let x2 = unit_random(3, 4, seed + 1);
        let g = kernel_grad_wrt_x2(&x1, &x2, &cfg).unwrap();
        let h = 1e-5;
        for i in 0..5 {
            for j in 0..4 {
                let analytic = g.entry(i, j);
                for r in 0..3 {
                    let mut p = x2.clone();
                    p[(r, j)] += h;
                    let mut m = x2.clone();
                    m[(r, j)] -= h;
                    let kp = kernel_matrix(&x1, &p, &cfg).unwrap()[(i, j)];
                    let km = kernel_matrix(&x1, &m, &cfg).unwrap()[(i, j)];
                    let fd = (kp - km) / (2.0 * h);
                    let err = (fd - analytic[r]).abs() / analytic[r].abs().max(1e-3);
                    assert!(
                        err < 1e-6,
                        "entry ({i},{j},{r}): fd {fd} vs {}",
                        analytic[r]
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..4 {
            fd_check(KernelConfig::gaussian(1.7).unwrap(), seed * 10);
            fd_check(KernelConfig::linear(), seed * 10 + 5);
        }
    }

    #[test]
    fn contraction_matches_entrywise_sum() {
        let cfg = KernelConfig::gaussian(0.8).unwrap();
        let x1 = unit_random(3, 6, 7);
        let x2 = unit_random(3, 4, 8);
        let w = unit_random(6, 4, 9);
        let g = kernel_grad_wrt_x2(&x1, &x2, &cfg).unwrap();
        let c = g.contract(&w).unwrap();
        for j in 0..4 {
            let mut acc = Vector::zeros(3);
            for i in 0..6 {
                acc += g.entry(i, j) * w[(i, j)];
            }
            assert!((c.column(j) - acc).amax() < 1e-13);
        }
        assert!(g.contract(&Matrix::zeros(2, 2)).is_err());
    }
}
