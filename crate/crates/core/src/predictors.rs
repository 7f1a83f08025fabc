//! Closed-form kernel ridge regression on explicit features.

use crate::error::{Error, Result};
use crate::numerics::{center_cols, solve_ridge, Matrix, Vector};
use crate::objectives::{DIConfig, Targets};

/// Ridge predictor `ŷ = Wᵀφ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    /// `J × L`.
    pub w: Matrix,
    pub b: Vector,
    pub rho: f64,
}

impl KrrModel {
    pub fn feature_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.w.ncols()
    }
}

/// Minimizes `‖ΦᵀW + 1bᵀ − Y‖²_F + ρ‖W‖²_F` in closed form:
/// `W = (Φ̄Φ̄ᵀ + ρI)⁻¹Φ̄Ȳ`, `b = (Yᵀ1 − WᵀΦ1)/N`.
pub fn krr_fit(phi: &Matrix, y: &Targets, cfg: &DIConfig) -> Result<KrrModel> {
    cfg.validate()?;
    let n = phi.ncols();
    if n == 0 {
        return Err(Error::EmptyDataset(None));
    }
    if y.n_samples() != n {
        return Err(Error::dims("KRR sample count", n, y.n_samples()));
    }
    let centered = center_cols(phi);
    let scatter = &centered * centered.transpose();
    let rhs = &centered * &y.y;
    let w = if cfg.rho == 0.0 {
        log::warn!("fitting ridge regression with rho = 0; using the pseudoinverse");
        match solve_ridge(&scatter, 0.0, &rhs) {
            Ok(w) => w,
            // Φ̄ = 0: every W is optimal, take the minimum-norm one.
            Err(Error::RankDeficient) => Matrix::zeros(phi.nrows(), y.n_outputs()),
            Err(e) => return Err(e),
        }
    } else {
        solve_ridge(&scatter, cfg.rho, &rhs)?
    };
    let y_mean = y.y.row_mean().transpose();
    let phi_mean = phi.column_mean();
    let b = y_mean - w.transpose() * phi_mean;
    Ok(KrrModel { w, b, rho: cfg.rho })
}

/// `ΦᵀW + 1bᵀ`, one row per sample.
pub fn krr_predict(model: &KrrModel, phi: &Matrix) -> Result<Matrix> {
    if phi.nrows() != model.feature_dim() {
        return Err(Error::dims(
            "KRR feature dimension",
            model.feature_dim(),
            phi.nrows(),
        ));
    }
    let mut out = phi.transpose() * &model.w;
    for mut row in out.row_iter_mut() {
        row += model.b.transpose();
    }
    Ok(out)
}

/// Regularized training objective `‖ΦᵀW + 1bᵀ − Y‖²_F + ρ‖W‖²_F`.
pub fn krr_objective(model: &KrrModel, phi: &Matrix, y: &Targets) -> Result<f64> {
    let pred = krr_predict(model, phi)?;
    if pred.shape() != y.y.shape() {
        return Err(Error::dims(
            "KRR targets",
            format!("{:?}", pred.shape()),
            format!("{:?}", y.y.shape()),
        ));
    }
    Ok((pred - &y.y).norm_squared() + model.rho * model.w.norm_squared())
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn classify(scores: &Matrix) -> Vec<usize> {
    scores
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub fn mse(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::dims(
            "mse",
            format!("{:?}", truth.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok((pred - truth).norm_squared() / pred.len() as f64)
}

pub fn accuracy(labels: &[usize], truth: &[usize]) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::dims("accuracy", truth.len(), labels.len()));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = labels.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}
