//! Discriminant information (DI) and its kernelized forms.
//!
//! For explicit features `Φ` (`J × N`, centered `Φ̄ = ΦC`) and targets `Y`
//! (`N × L`):
//!
//! ```text
//! DI     = tr((Φ̄Φ̄ᵀ + ρI)⁻¹ Φ̄YYᵀΦ̄ᵀ)
//! NysDI  = tr((ḠᵀḠ + ρB)⁺ ḠᵀYYᵀḠ),   G = k(X, X_r), B = k(X_r, X_r)
//! ```
//!
//! DI equals `‖Ȳ‖²_F` minus the minimum regularized least-squares error of
//! ridge regression on `Φ`, so it always lies in `[0, ‖Ȳ‖²_F]`. Computed
//! values are clamped into that interval to strip round-off.
//!
//! Gradients use `d tr(PᵀA⁻¹P) = 2⟨A⁻¹P, dP⟩ − ⟨A⁻¹PPᵀA⁻¹, dA⟩`, which for
//! both objectives collapses to `∂/∂Φ = 2·Z·(Ȳ − Φ̄ᵀZ)ᵀ` with `Z = A⁻¹Φ̄Y`.

use crate::error::{Error, Result};
use crate::feature_maps::{rf_features, rf_preactivation, rf_scale, FourierMap, NystromMap};
use crate::kernels::{kernel_grad_wrt_x2, kernel_matrix};
use crate::numerics::{
    all_finite, center_cols, center_rows, default_rel_tol, frob_dot, pinv_psd, solve_ridge, Matrix,
    Vector,
};

/// Ridge regularizer used throughout the experiments.
pub const DEFAULT_RHO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DIConfig {
    pub rho: f64,
}

impl Default for DIConfig {
    fn default() -> Self {
        DIConfig { rho: DEFAULT_RHO }
    }
}

impl DIConfig {
    pub fn new(rho: f64) -> Result<Self> {
        let cfg = DIConfig { rho };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must be finite and >= 0, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetEncoding {
    Raw,
    OneHot,
    OneHotUnitNorm,
}

/// Target matrix `Y`, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub y: Matrix,
    pub encoding: TargetEncoding,
}

impl Targets {
    pub fn raw(y: Matrix) -> Self {
        Targets {
            y,
            encoding: TargetEncoding::Raw,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.y.ncols()
    }

    /// `Ȳ = CY`.
    pub fn centered(&self) -> Matrix {
        center_rows(&self.y)
    }

    /// `‖Ȳ‖²_F`, the upper bound of DI.
    pub fn centered_norm2(&self) -> f64 {
        self.centered().norm_squared()
    }
}

fn check_samples(n_cols: usize, y: &Targets) -> Result<()> {
    if n_cols != y.n_samples() {
        return Err(Error::dims(
            "sample count (features vs targets)",
            n_cols,
            y.n_samples(),
        ));
    }
    Ok(())
}

/// `A⁻¹P` for `A = S̄ + ρI`, through the pseudoinverse when ρ = 0.
fn regularized_solve(scatter: &Matrix, rho: f64, rhs: &Matrix) -> Result<Matrix> {
    if rho > 0.0 {
        solve_ridge(scatter, rho, rhs)
    } else {
        let n = scatter.nrows();
        Ok(pinv_psd(scatter, default_rel_tol(n, n))? * rhs)
    }
}

fn clamp_di(value: f64, upper: f64, what: &str) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("{what} evaluated to {value}")));
    }
    Ok(value.clamp(0.0, upper))
}

/// Intermediate quantities shared by DI and its gradient.
struct DiState {
    value: f64,
    centered: Matrix,
    z: Matrix,
    ybar: Matrix,
}

fn di_state(phi: &Matrix, y: &Targets, cfg: &DIConfig) -> Result<DiState> {
    cfg.validate()?;
    check_samples(phi.ncols(), y)?;
    let centered = center_cols(phi);
    let ybar = y.centered();
    let p = &centered * &y.y;
    let scatter = &centered * centered.transpose();
    let z = regularized_solve(&scatter, cfg.rho, &p)?;
    let value = clamp_di(frob_dot(&p, &z), ybar.norm_squared(), "DI")?;
    Ok(DiState {
        value,
        centered,
        z,
        ybar,
    })
}

/// `∂DI/∂Φ = 2·Z·(Ȳ − Φ̄ᵀZ)ᵀ`.
fn di_feature_grad(state: &DiState) -> Matrix {
    let residual = &state.ybar - state.centered.transpose() * &state.z;
    (&state.z * residual.transpose()) * 2.0
}

/// Discriminant information of explicit features `phi` (`J × N`).
pub fn di(phi: &Matrix, y: &Targets, cfg: &DIConfig) -> Result<f64> {
    Ok(di_state(phi, y, cfg)?.value)
}

/// Minimum regularized least-squares error, `‖Ȳ‖²_F − DI`.
pub fn mrlse(phi: &Matrix, y: &Targets, cfg: &DIConfig) -> Result<f64> {
    let state = di_state(phi, y, cfg)?;
    Ok(state.ybar.norm_squared() - state.value)
}

/// DI of random Fourier features on a batch.
pub fn rf_di(xb: &Matrix, y: &Targets, map: &FourierMap, cfg: &DIConfig) -> Result<f64> {
    di(&rf_features(xb, map)?, y, cfg)
}

/// Gradient of [`rf_di`] with respect to `(W_f, b_f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierGrad {
    pub w: Matrix,
    pub b: Vector,
}

/// Backpropagates `∂/∂Φ` through `Φ = s·cos(W_fᵀX + b_f)`.
pub(crate) fn fourier_chain(xb: &Matrix, map: &FourierMap, dphi: &Matrix) -> FourierGrad {
    let s = rf_scale(map.feature_dim());
    let theta = rf_preactivation(xb, map);
    let dtheta = dphi.zip_map(&theta, |g, t| -s * g * t.sin());
    let w = xb * dtheta.transpose();
    let b = Vector::from_iterator(dtheta.nrows(), dtheta.row_iter().map(|r| r.sum()));
    FourierGrad { w, b }
}

/// Value and gradient of [`rf_di`] in one pass.
pub fn rf_di_with_grad(
    xb: &Matrix,
    y: &Targets,
    map: &FourierMap,
    cfg: &DIConfig,
) -> Result<(f64, FourierGrad)> {
    let phi = rf_features(xb, map)?;
    let state = di_state(&phi, y, cfg)?;
    let dphi = di_feature_grad(&state);
    Ok((state.value, fourier_chain(xb, map, &dphi)))
}

pub fn grad_rf_di(
    xb: &Matrix,
    y: &Targets,
    map: &FourierMap,
    cfg: &DIConfig,
) -> Result<FourierGrad> {
    Ok(rf_di_with_grad(xb, y, map, cfg)?.1)
}

struct NysState {
    value: f64,
    /// `F̄ = k(X_r, X)·C`, `n × N`.
    centered: Matrix,
    z: Matrix,
    ybar: Matrix,
}

fn nys_state(kt: &Matrix, y: &Targets, map: &NystromMap, cfg: &DIConfig) -> Result<NysState> {
    cfg.validate()?;
    check_samples(kt.ncols(), y)?;
    let n = map.n_reps();
    let centered = center_cols(kt);
    let ybar = y.centered();
    let p = &centered * &y.y;
    let mut inner = &centered * centered.transpose();
    if cfg.rho > 0.0 {
        inner += map.gram() * cfg.rho;
    }
    let z = pinv_psd(&inner, default_rel_tol(n, n))? * &p;
    let value = clamp_di(frob_dot(&p, &z), ybar.norm_squared(), "NysDI")?;
    Ok(NysState {
        value,
        centered,
        z,
        ybar,
    })
}

/// Kernel DI restricted to the span of the representative points.
pub fn nys_di(xb: &Matrix, y: &Targets, map: &NystromMap, cfg: &DIConfig) -> Result<f64> {
    if xb.nrows() != map.input_dim() {
        return Err(Error::dims(
            "Nystrom input dimension",
            map.input_dim(),
            xb.nrows(),
        ));
    }
    let kt = kernel_matrix(map.reps(), xb, map.kernel())?;
    Ok(nys_state(&kt, y, map, cfg)?.value)
}

/// Value and `∂NysDI/∂X_r` (`d × n`) in one pass.
///
/// The pseudoinverse is differentiated as an inverse on its support, which
/// is exact whenever the inner matrix keeps its rank under perturbation.
pub fn nys_di_with_grad(
    xb: &Matrix,
    y: &Targets,
    map: &NystromMap,
    cfg: &DIConfig,
) -> Result<(f64, Matrix)> {
    if xb.nrows() != map.input_dim() {
        return Err(Error::dims(
            "Nystrom input dimension",
            map.input_dim(),
            xb.nrows(),
        ));
    }
    let reps = map.reps();
    let cross = kernel_grad_wrt_x2(xb, reps, map.kernel())?;
    let kt = cross.kernel().transpose();
    let state = nys_state(&kt, y, map, cfg)?;

    // ∂/∂F = 2 Z (Ȳ − F̄ᵀZ)ᵀ, contracted against ∂k(x_i, x_r_j)/∂x_r_j.
    let residual = &state.ybar - state.centered.transpose() * &state.z;
    let weights = (&residual * state.z.transpose()) * 2.0;
    let mut grad = cross.contract(&weights)?;

    if cfg.rho > 0.0 {
        // ∂/∂B = −ρ Z Zᵀ; both kernel arguments move, doubling the weight.
        let self_grad = kernel_grad_wrt_x2(reps, reps, map.kernel())?;
        let wb = (&state.z * state.z.transpose()) * (-2.0 * cfg.rho);
        grad += self_grad.contract(&wb)?;
    }
    if !all_finite(&grad) {
        return Err(Error::NonFinite("NysDI gradient".into()));
    }
    Ok((state.value, grad))
}

pub fn grad_nys_di(xb: &Matrix, y: &Targets, map: &NystromMap, cfg: &DIConfig) -> Result<Matrix> {
    Ok(nys_di_with_grad(xb, y, map, cfg)?.1)
}

/// Optimal kernel DCA objective `tr((K̄² + ρK̄)⁺ K̄YYᵀK̄)` on a full kernel matrix.
///
/// `O(N³)`; only meant as a reference value on small instances.
pub fn kdca_oracle(k: &Matrix, y: &Targets, cfg: &DIConfig) -> Result<f64> {
    cfg.validate()?;
    if k.nrows() != k.ncols() {
        return Err(Error::NotSquare {
            rows: k.nrows(),
            cols: k.ncols(),
        });
    }
    check_samples(k.ncols(), y)?;
    let n = k.nrows();
    let kc = center_rows(&center_cols(k));
    let kc = (&kc + kc.transpose()) * 0.5;
    let ky = &kc * &y.y;
    let inner = &kc * &kc + &kc * cfg.rho;
    let inner = (&inner + inner.transpose()) * 0.5;
    let value = frob_dot(&ky, &(pinv_psd(&inner, default_rel_tol(n, n))? * &ky));
    clamp_di(value, y.centered_norm2(), "KDCA")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(0.0..1.0))
    }

    fn one_hot_random(n: usize, l: usize, seed: u64) -> Targets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = Matrix::zeros(n, l);
        for i in 0..n {
            y[(i, rng.random_range(0..l))] = 1.0;
        }
        Targets {
            y,
            encoding: TargetEncoding::OneHot,
        }
    }

    fn rho(r: f64) -> DIConfig {
        DIConfig::new(r).unwrap()
    }

    #[test]
    fn hand_computed_two_sample_case() {
        let phi = Matrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let y = Targets::raw(Matrix::from_row_slice(2, 1, &[1.0, -1.0]));
        assert!((di(&phi, &y, &rho(0.0)).unwrap() - 2.0).abs() < 1e-14);
        assert!(mrlse(&phi, &y, &rho(0.0)).unwrap().abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs_give_zero() {
        let one = Matrix::from_row_slice(2, 1, &[0.3, 0.7]);
        let y1 = Targets::raw(Matrix::from_row_slice(1, 1, &[1.0]));
        assert_eq!(di(&one, &y1, &rho(0.0)).unwrap(), 0.0);
        assert_eq!(di(&one, &y1, &DIConfig::default()).unwrap(), 0.0);

        let phi = unit_random(3, 6, 1);
        let y0 = Targets::raw(Matrix::zeros(6, 2));
        assert_eq!(di(&phi, &y0, &DIConfig::default()).unwrap(), 0.0);
        assert_eq!(mrlse(&phi, &y0, &DIConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn rf_constant_features_give_zero() {
        let x = unit_random(4, 12, 2);
        let map = FourierMap::new(Matrix::zeros(4, 3), Vector::from_element(3, 0.4)).unwrap();
        let y = one_hot_random(12, 3, 3);
        assert!(rf_di(&x, &y, &map, &DIConfig::default()).unwrap() < 1e-15);
    }

    #[test]
    fn nys_di_single_rep_scalar_form() {
        let cfg = KernelConfig::gaussian(1.5).unwrap();
        let x = unit_random(2, 9, 4);
        let reps = unit_random(2, 1, 5);
        let map = NystromMap::new(reps.clone(), cfg).unwrap();
        let y = one_hot_random(9, 3, 6);
        let r = 1e-2;
        // ḡ is the centered kernel column; B = [1] for the gaussian kernel.
        let g = kernel_matrix(&x, &reps, &cfg).unwrap();
        let mean = g.sum() / 9.0;
        let gbar: Vec<f64> = g.iter().map(|v| v - mean).collect();
        let denom: f64 = gbar.iter().map(|v| v * v).sum::<f64>() + r * 1.0;
        let mut expected = 0.0;
        for c in 0..3 {
            let proj: f64 = gbar.iter().enumerate().map(|(i, v)| v * y.y[(i, c)]).sum();
            expected += proj * proj / denom;
        }
        let got = nys_di(&x, &y, &map, &rho(r)).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn nys_di_zero_targets_and_zero_gradient() {
        let cfg = KernelConfig::gaussian(1.0).unwrap();
        let map = NystromMap::new(unit_random(3, 4, 7), cfg).unwrap();
        let x = unit_random(3, 20, 8);
        let y = Targets::raw(Matrix::zeros(20, 2));
        let (v, g) = nys_di_with_grad(&x, &y, &map, &rho(1e-2)).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, Matrix::zeros(3, 4));
        let map = FourierMap::new(unit_random(3, 4, 9), Vector::from_element(4, 1.0)).unwrap();
        let g = grad_rf_di(&x, &y, &map, &rho(1e-2)).unwrap();
        assert_eq!(g.w, Matrix::zeros(3, 4));
        assert_eq!(g.b, Vector::zeros(4));
    }

    #[test]
    fn duplicate_reps_keep_gradient_finite() {
        let cfg = KernelConfig::gaussian(2.0).unwrap();
        let base = unit_random(3, 3, 10);
        let mut reps = Matrix::zeros(3, 4);
        reps.columns_mut(0, 3).copy_from(&base);
        reps.set_column(3, &base.column(0));
        let map = NystromMap::new(reps, cfg).unwrap();
        let x = unit_random(3, 20, 11);
        let y = one_hot_random(20, 2, 12);
        let (v, g) = nys_di_with_grad(&x, &y, &map, &rho(1e-2)).unwrap();
        assert!(v.is_finite());
        assert!(all_finite(&g));
    }

    #[test]
    fn di_matches_composition_with_rf_features() {
        let x = unit_random(4, 12, 13);
        let map = crate::feature_maps::init_fourier(&KernelConfig::gaussian(1.0).unwrap(), 4, 3, 1)
            .unwrap();
        let y = one_hot_random(12, 2, 14);
        let direct = di(&rf_features(&x, &map).unwrap(), &y, &DIConfig::default()).unwrap();
        let via = rf_di(&x, &y, &map, &DIConfig::default()).unwrap();
        assert!((direct - via).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn kdca_degenerate_cases() {
        let k = Matrix::from_element(1, 1, 1.0);
        let y = Targets::raw(Matrix::from_element(1, 1, 1.0));
        assert_eq!(kdca_oracle(&k, &y, &DIConfig::default()).unwrap(), 0.0);
        let x = unit_random(2, 5, 15);
        let k = kernel_matrix(&x, &x, &KernelConfig::gaussian(1.0).unwrap()).unwrap();
        let y0 = Targets::raw(Matrix::zeros(5, 2));
        assert_eq!(kdca_oracle(&k, &y0, &DIConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn rejects_mismatched_samples() {
        let phi = unit_random(2, 5, 16);
        let y = Targets::raw(Matrix::zeros(4, 1));
        assert!(matches!(
            di(&phi, &y, &DIConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(DIConfig::new(-1.0).is_err());
    }
}
