//! Comparison trainers: alternating least squares (LS) and softmax
//! cross-entropy (CE).
//!
//! Nyström variants parametrize the linear head in kernel coefficients,
//! `ŷ = Aᵀk(X_r, x) + b`, so no gradient has to pass through the
//! eigendecomposition of `B`. On the retained eigenspace this is the same
//! predictor as `Wᵀφ(x) + b` with `W = Σ^{1/2}UᵀA`; the LS penalty
//! `ρ‖W‖²` becomes `ρ·tr(AᵀBA)`.

use crate::data_io::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::feature_maps::{rf_features, FeatureMap, FourierMap, NystromMap};
use crate::kernels::{kernel_grad_wrt_x2, kernel_matrix};
use crate::numerics::{center_cols, default_rel_tol, frob_dot, pinv_psd, Matrix, Vector};
use crate::objectives::{fourier_chain, DIConfig, FourierGrad, Targets};
use crate::predictors::krr_fit;
use crate::training::{
    adam_step, fourier_adam_state, run_schedule, AdamConfig, AdamState, Goal, Learner, TrainConfig,
    TrainReport,
};

/// Linear predictor on explicit features, `ŷ = Wᵀφ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    /// `J × L`.
    pub w: Matrix,
    pub b: Vector,
}

impl LinearHead {
    pub fn zeros(j: usize, l: usize) -> Self {
        LinearHead {
            w: Matrix::zeros(j, l),
            b: Vector::zeros(l),
        }
    }

    /// Scores `ΦᵀW + 1bᵀ`, one row per sample.
    pub fn scores(&self, phi: &Matrix) -> Result<Matrix> {
        if phi.nrows() != self.w.nrows() {
            return Err(Error::dims(
                "head feature dimension",
                self.w.nrows(),
                phi.nrows(),
            ));
        }
        Ok(add_bias(phi.transpose() * &self.w, &self.b))
    }
}

/// Head on raw kernel values, `ŷ = Aᵀk(X_r, x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelHead {
    /// `n × L`.
    pub a: Matrix,
    pub b: Vector,
}

impl KernelHead {
    /// The equivalent head on whitened Nyström features.
    pub fn to_linear(&self, map: &NystromMap) -> LinearHead {
        let rank = map.feature_dim();
        let eig = map.eig();
        let mut ut = eig.vectors.columns(0, rank).transpose();
        for (i, mut row) in ut.row_iter_mut().enumerate() {
            row *= eig.values[i].sqrt();
        }
        LinearHead {
            w: ut * &self.a,
            b: self.b.clone(),
        }
    }
}

fn add_bias(mut m: Matrix, b: &Vector) -> Matrix {
    for mut row in m.row_iter_mut() {
        row += b.transpose();
    }
    m
}

fn col_sums(m: &Matrix) -> Vector {
    m.row_sum().transpose()
}

/// Closed-form minimizer of `‖GA + 1bᵀ − Y‖² + ρ·tr(AᵀBA)` on a batch.
pub fn ls_nystrom_refit(
    xb: &Matrix,
    y: &Targets,
    map: &NystromMap,
    rho: f64,
) -> Result<KernelHead> {
    let kt = kernel_matrix(map.reps(), xb, map.kernel())?;
    if kt.ncols() != y.n_samples() {
        return Err(Error::dims("LS batch targets", kt.ncols(), y.n_samples()));
    }
    let n = map.n_reps();
    let centered = center_cols(&kt);
    let mut inner = &centered * centered.transpose();
    if rho > 0.0 {
        inner += map.gram() * rho;
    }
    let a = pinv_psd(&inner, default_rel_tol(n, n))? * (&centered * &y.y);
    let y_mean = y.y.row_mean().transpose();
    let b = y_mean - a.transpose() * kt.column_mean();
    Ok(KernelHead { a, b })
}

/// LS loss of a fixed kernel head and its gradient in `X_r`.
pub fn ls_nystrom_loss_with_grad(
    xb: &Matrix,
    y: &Targets,
    map: &NystromMap,
    head: &KernelHead,
    rho: f64,
) -> Result<(f64, Matrix)> {
    let reps = map.reps();
    let cross = kernel_grad_wrt_x2(xb, reps, map.kernel())?;
    let residual = add_bias(cross.kernel() * &head.a, &head.b) - &y.y;
    let ba = map.gram() * &head.a;
    let loss = residual.norm_squared() + rho * frob_dot(&head.a, &ba);

    // ∂/∂G = 2RAᵀ, ∂/∂B = ρAAᵀ (both arguments of B move).
    let mut grad = cross.contract(&((&residual * head.a.transpose()) * 2.0))?;
    if rho > 0.0 {
        let own = kernel_grad_wrt_x2(reps, reps, map.kernel())?;
        grad += own.contract(&((&head.a * head.a.transpose()) * (2.0 * rho)))?;
    }
    Ok((loss, grad))
}

/// LS loss of a fixed head on Fourier features and its gradient in `(W_f, b_f)`.
pub fn ls_fourier_loss_with_grad(
    xb: &Matrix,
    y: &Targets,
    map: &FourierMap,
    head: &LinearHead,
    rho: f64,
) -> Result<(f64, FourierGrad)> {
    let phi = rf_features(xb, map)?;
    let residual = head.scores(&phi)? - &y.y;
    let loss = residual.norm_squared() + rho * head.w.norm_squared();
    let dphi = (&head.w * residual.transpose()) * 2.0;
    Ok((loss, fourier_chain(xb, map, &dphi)))
}

/// Mean softmax cross-entropy of `logits` (one row per sample), and
/// `∂loss/∂logits`.
pub fn softmax_ce(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.nrows() != labels.len() {
        return Err(Error::dims("CE labels", logits.nrows(), labels.len()));
    }
    let n = labels.len().max(1) as f64;
    let l = logits.ncols();
    let mut grad = Matrix::zeros(logits.nrows(), l);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= l {
            return Err(Error::LabelOutOfRange { label, classes: l });
        }
        let row = logits.row(i);
        let max = row.max();
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[label];
        for c in 0..l {
            grad[(i, c)] = (row[c] - lse).exp() / n;
        }
        grad[(i, label)] -= 1.0 / n;
    }
    Ok((loss / n, grad))
}

/// CE gradients for a Nyström map with a kernel head.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromCeGrad {
    pub reps: Matrix,
    pub a: Matrix,
    pub b: Vector,
}

pub fn ce_nystrom_loss_with_grad(
    xb: &Matrix,
    labels: &[usize],
    map: &NystromMap,
    head: &KernelHead,
) -> Result<(f64, NystromCeGrad)> {
    let cross = kernel_grad_wrt_x2(xb, map.reps(), map.kernel())?;
    let logits = add_bias(cross.kernel() * &head.a, &head.b);
    let (loss, dlogits) = softmax_ce(&logits, labels)?;
    let reps = cross.contract(&(&dlogits * head.a.transpose()))?;
    let a = cross.kernel().transpose() * &dlogits;
    Ok((
        loss,
        NystromCeGrad {
            reps,
            a,
            b: col_sums(&dlogits),
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierCeGrad {
    pub map: FourierGrad,
    pub w: Matrix,
    pub b: Vector,
}

pub fn ce_fourier_loss_with_grad(
    xb: &Matrix,
    labels: &[usize],
    map: &FourierMap,
    head: &LinearHead,
) -> Result<(f64, FourierCeGrad)> {
    let phi = rf_features(xb, map)?;
    let (loss, dlogits) = softmax_ce(&head.scores(&phi)?, labels)?;
    let dphi = &head.w * dlogits.transpose();
    Ok((
        loss,
        FourierCeGrad {
            map: fourier_chain(xb, map, &dphi),
            w: &phi * &dlogits,
            b: col_sums(&dlogits),
        },
    ))
}

fn column(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn descend(
    params: &mut [Matrix],
    grads: Vec<Matrix>,
    state: &mut AdamState,
    lr: f64,
    adam: &AdamConfig,
) -> Result<()> {
    let negated: Vec<Matrix> = grads.into_iter().map(|g| -g).collect();
    adam_step(params, &negated, state, lr, adam)
}

fn batch_labels(batch: &Batch) -> Result<&[usize]> {
    batch
        .labels
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("cross-entropy training needs class labels".into()))
}

struct LsNystrom {
    map: NystromMap,
    state: AdamState,
    adam: AdamConfig,
    rho: f64,
}

impl Learner for LsNystrom {
    fn step(&mut self, batch: &Batch, lr: f64) -> Result<f64> {
        let head = ls_nystrom_refit(&batch.x, &batch.targets, &self.map, self.rho)?;
        let (loss, grad) =
            ls_nystrom_loss_with_grad(&batch.x, &batch.targets, &self.map, &head, self.rho)?;
        let mut params = [self.map.reps().clone()];
        descend(&mut params, vec![grad], &mut self.state, lr, &self.adam)?;
        let [reps] = params;
        self.map.set_reps(reps)?;
        Ok(loss)
    }

    fn evaluate(&self, batch: &Batch) -> Result<f64> {
        let head = ls_nystrom_refit(&batch.x, &batch.targets, &self.map, self.rho)?;
        Ok(ls_nystrom_loss_with_grad(&batch.x, &batch.targets, &self.map, &head, self.rho)?.0)
    }
}

struct LsFourier {
    map: FourierMap,
    state: AdamState,
    adam: AdamConfig,
    rho: f64,
}

impl LsFourier {
    fn refit(&self, batch: &Batch) -> Result<LinearHead> {
        let phi = rf_features(&batch.x, &self.map)?;
        let m = krr_fit(&phi, &batch.targets, &DIConfig { rho: self.rho })?;
        Ok(LinearHead { w: m.w, b: m.b })
    }
}

impl Learner for LsFourier {
    fn step(&mut self, batch: &Batch, lr: f64) -> Result<f64> {
        let head = self.refit(batch)?;
        let (loss, grad) =
            ls_fourier_loss_with_grad(&batch.x, &batch.targets, &self.map, &head, self.rho)?;
        let (w, b) = self.map.clone().into_parts();
        let mut params = [w, column(&b)];
        descend(
            &mut params,
            vec![grad.w, column(&grad.b)],
            &mut self.state,
            lr,
            &self.adam,
        )?;
        let [w, b] = params;
        self.map = FourierMap::from_unwrapped(w, Vector::from_column_slice(b.as_slice()))?;
        Ok(loss)
    }

    fn evaluate(&self, batch: &Batch) -> Result<f64> {
        let head = self.refit(batch)?;
        Ok(ls_fourier_loss_with_grad(&batch.x, &batch.targets, &self.map, &head, self.rho)?.0)
    }
}

struct CeNystrom {
    map: NystromMap,
    head: KernelHead,
    state: AdamState,
    adam: AdamConfig,
}

impl Learner for CeNystrom {
    fn step(&mut self, batch: &Batch, lr: f64) -> Result<f64> {
        let (loss, g) =
            ce_nystrom_loss_with_grad(&batch.x, batch_labels(batch)?, &self.map, &self.head)?;
        let mut params = [
            self.map.reps().clone(),
            self.head.a.clone(),
            column(&self.head.b),
        ];
        descend(
            &mut params,
            vec![g.reps, g.a, column(&g.b)],
            &mut self.state,
            lr,
            &self.adam,
        )?;
        let [reps, a, b] = params;
        self.map.set_reps(reps)?;
        self.head = KernelHead {
            a,
            b: Vector::from_column_slice(b.as_slice()),
        };
        Ok(loss)
    }

    fn evaluate(&self, batch: &Batch) -> Result<f64> {
        Ok(ce_nystrom_loss_with_grad(&batch.x, batch_labels(batch)?, &self.map, &self.head)?.0)
    }
}

struct CeFourier {
    map: FourierMap,
    head: LinearHead,
    state: AdamState,
    adam: AdamConfig,
}

impl Learner for CeFourier {
    fn step(&mut self, batch: &Batch, lr: f64) -> Result<f64> {
        let (loss, g) =
            ce_fourier_loss_with_grad(&batch.x, batch_labels(batch)?, &self.map, &self.head)?;
        let (w, b) = self.map.clone().into_parts();
        let mut params = [w, column(&b), self.head.w.clone(), column(&self.head.b)];
        let grads = vec![g.map.w, column(&g.map.b), g.w, column(&g.b)];
        descend(&mut params, grads, &mut self.state, lr, &self.adam)?;
        let [w, b, hw, hb] = params;
        self.map = FourierMap::from_unwrapped(w, Vector::from_column_slice(b.as_slice()))?;
        self.head = LinearHead {
            w: hw,
            b: Vector::from_column_slice(hb.as_slice()),
        };
        Ok(loss)
    }

    fn evaluate(&self, batch: &Batch) -> Result<f64> {
        Ok(ce_fourier_loss_with_grad(&batch.x, batch_labels(batch)?, &self.map, &self.head)?.0)
    }
}

fn baseline_batch_size(data: &Dataset, map: &FeatureMap, cfg: &TrainConfig) -> Result<usize> {
    cfg.validate()?;
    if data.n_features() != map.input_dim() {
        return Err(Error::dims(
            "map input dimension vs dataset",
            map.input_dim(),
            data.n_features(),
        ));
    }
    if cfg.batch_size > data.n_samples() {
        return Err(Error::InvalidConfig(format!(
            "batch size {} exceeds the {} training samples",
            cfg.batch_size,
            data.n_samples()
        )));
    }
    Ok(cfg.batch_size)
}

/// Closed-form ridge head on the full training set.
fn full_ridge_head(data: &Dataset, map: &FeatureMap, rho: f64) -> Result<LinearHead> {
    let phi = map.features(&data.x)?;
    let m = krr_fit(&phi, &data.targets, &DIConfig { rho })?;
    Ok(LinearHead { w: m.w, b: m.b })
}

/// LS baseline: per batch, refit the ridge head in closed form, then take one
/// Adam descent step of the map parameters on the ridge loss with that head
/// held fixed. The returned head is a ridge fit on all of `data`.
pub fn train_ls(
    data: &Dataset,
    map: FeatureMap,
    cfg: &TrainConfig,
    di: &DIConfig,
) -> Result<(FeatureMap, LinearHead, TrainReport)> {
    di.validate()?;
    let batch_size = baseline_batch_size(data, &map, cfg)?;
    let (map, report) = match map {
        FeatureMap::Nystrom(map) => {
            let mut learner = LsNystrom {
                state: AdamState::new(std::slice::from_ref(map.reps())),
                map,
                adam: cfg.adam,
                rho: di.rho,
            };
            let report = run_schedule(&mut learner, data, cfg, batch_size, Goal::Minimize)?;
            (FeatureMap::Nystrom(learner.map), report)
        }
        FeatureMap::Fourier(map) => {
            let mut learner = LsFourier {
                state: fourier_adam_state(&map),
                map,
                adam: cfg.adam,
                rho: di.rho,
            };
            let report = run_schedule(&mut learner, data, cfg, batch_size, Goal::Minimize)?;
            (FeatureMap::Fourier(learner.map), report)
        }
    };
    let head = full_ridge_head(data, &map, di.rho)?;
    Ok((map, head, report))
}

/// CE baseline: joint Adam descent of the mean softmax cross-entropy over
/// the map parameters and a zero-initialized linear head.
pub fn train_ce(
    data: &Dataset,
    map: FeatureMap,
    cfg: &TrainConfig,
) -> Result<(FeatureMap, LinearHead, TrainReport)> {
    let classes = data
        .n_classes()
        .ok_or_else(|| Error::InvalidConfig("cross-entropy training needs class labels".into()))?;
    let batch_size = baseline_batch_size(data, &map, cfg)?;
    match map {
        FeatureMap::Nystrom(map) => {
            let head = KernelHead {
                a: Matrix::zeros(map.n_reps(), classes),
                b: Vector::zeros(classes),
            };
            let state = AdamState::new(&[map.reps().clone(), head.a.clone(), column(&head.b)]);
            let mut learner = CeNystrom {
                map,
                head,
                state,
                adam: cfg.adam,
            };
            let report = run_schedule(&mut learner, data, cfg, batch_size, Goal::Minimize)?;
            let head = learner.head.to_linear(&learner.map);
            Ok((FeatureMap::Nystrom(learner.map), head, report))
        }
        FeatureMap::Fourier(map) => {
            let head = LinearHead::zeros(map.feature_dim(), classes);
            let mut state = fourier_adam_state(&map);
            let extra = AdamState::new(&[head.w.clone(), column(&head.b)]);
            state.m.extend(extra.m);
            state.v.extend(extra.v);
            let mut learner = CeFourier {
                map,
                head,
                state,
                adam: cfg.adam,
            };
            let report = run_schedule(&mut learner, data, cfg, batch_size, Goal::Minimize)?;
            Ok((FeatureMap::Fourier(learner.map), learner.head, report))
        }
    }
}
