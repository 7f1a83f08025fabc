//! Mini-batch gradient ascent of NysDI / RFDI with Adam.
//!
//! Each epoch shuffles the data, visits `⌊N / batch_size⌋` full batches and
//! tracks the running mean `μ` of the per-batch objective. When `μ` stops
//! improving by `saturation_rel_tol` (relative to the best value so far) the
//! learning rate is multiplied by `lr_decay`; a second saturation ends the run.

use std::io::Write;
use std::time::{Duration, Instant};

use crate::data_io::{batch_iter, Batch, Dataset};
use crate::error::{Error, Result};
use crate::feature_maps::{FourierMap, NystromMap};
use crate::numerics::{Matrix, Vector};
use crate::objectives::{nys_di, nys_di_with_grad, rf_di, rf_di_with_grad, DIConfig};

pub const DEFAULT_BATCH_SIZE: usize = 1000;
pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_LR_DECAY: f64 = 0.1;
/// Feature dimension above which DI training uses batches of `2J`.
pub const LARGE_FEATURE_DIM: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub saturation_rel_tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: DEFAULT_BATCH_SIZE,
            lr0: DEFAULT_LR,
            lr_decay: DEFAULT_LR_DECAY,
            adam: AdamConfig::default(),
            saturation_rel_tol: 1e-3,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad(format!("lr_decay must be in (0, 1), got {}", self.lr_decay));
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.saturation_rel_tol.is_finite() && self.saturation_rel_tol >= 0.0) {
            return bad(format!(
                "saturation_rel_tol must be >= 0, got {}",
                self.saturation_rel_tol
            ));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || !(a.eps.is_finite() && a.eps > 0.0)
        {
            return bad("Adam needs beta1, beta2 in [0, 1) and eps > 0".into());
        }
        Ok(())
    }
}

/// Batch size for DI training of a `J`-dimensional map on `n_samples` points.
pub fn effective_batch_size(j: usize, cfg: &TrainConfig, n_samples: usize) -> Result<usize> {
    if j == 0 {
        return Err(Error::InvalidConfig(
            "feature dimension must be >= 1".into(),
        ));
    }
    let size = if j > LARGE_FEATURE_DIM {
        cfg.batch_size.max(2 * j)
    } else {
        cfg.batch_size
    };
    if size > n_samples {
        return Err(Error::InvalidConfig(format!(
            "batch size {size} exceeds the {n_samples} training samples"
        )));
    }
    if size <= j {
        log::warn!("batch size {size} does not exceed the feature dimension {j}");
    }
    Ok(size)
}

/// Adam moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = params
            .iter()
            .map(|p| Matrix::zeros(p.nrows(), p.ncols()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One Adam update moving `params` along `+grads` (ascent).
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dims(
            "Adam parameter count",
            params.len(),
            grads.len(),
        ));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::dims(
                "Adam gradient shape",
                format!("{:?}", p.shape()),
                format!("{:?}", g.shape()),
            ));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((pi, &gi), mi), vi) in p
            .iter_mut()
            .zip(g.iter())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi += lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Running mean after the `b`-th value: `((b−1)/b)·μ + value/b`.
pub fn epoch_mean_update(mu_prev: f64, b: usize, value: f64) -> f64 {
    let b = b.max(1) as f64;
    ((b - 1.0) / b) * mu_prev + value / b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    Saturated,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::Saturated => "saturated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrChange {
    /// Epoch (1-based) after which the rate changed.
    pub epoch: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Epoch-mean objective of the untrained map over the first epoch's batches.
    pub initial_mu: f64,
    /// Epoch-mean objective of each training epoch.
    pub mu: Vec<f64>,
    /// Learning rate used during each epoch.
    pub lr: Vec<f64>,
    pub lr_changes: Vec<LrChange>,
    pub stop: StopReason,
    pub batch_size: usize,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.mu.len()
    }

    pub fn final_mu(&self) -> f64 {
        self.mu.last().copied().unwrap_or(self.initial_mu)
    }

    /// `epoch,mu,lr` records; epoch 0 is the untrained map.
    pub fn write_records<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,mu,lr")?;
        let lr0 = self.lr.first().copied().unwrap_or(f64::NAN);
        writeln!(w, "0,{:e},{:e}", self.initial_mu, lr0)?;
        for (e, (mu, lr)) in self.mu.iter().zip(&self.lr).enumerate() {
            writeln!(w, "{},{:e},{:e}", e + 1, mu, lr)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Maximize,
    Minimize,
}

impl Goal {
    fn score(self, v: f64) -> f64 {
        match self {
            Goal::Maximize => v,
            Goal::Minimize => -v,
        }
    }
}

/// A parametrized model trained batch by batch.
pub(crate) trait Learner {
    /// Objective at the current parameters, then one parameter update.
    fn step(&mut self, batch: &Batch, lr: f64) -> Result<f64>;
    fn evaluate(&self, batch: &Batch) -> Result<f64>;
}

fn checked(value: f64, epoch: usize, batch: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!(
            "objective {value} at epoch {epoch}, batch {batch}"
        )))
    }
}

pub(crate) fn run_schedule<L: Learner>(
    learner: &mut L,
    data: &Dataset,
    cfg: &TrainConfig,
    batch_size: usize,
    goal: Goal,
) -> Result<TrainReport> {
    cfg.validate()?;
    let started = Instant::now();

    let mut initial_mu = 0.0;
    for (b, batch) in batch_iter(data, batch_size, cfg.seed, 0)?.enumerate() {
        let v = checked(learner.evaluate(&batch?)?, 0, b + 1)?;
        initial_mu = epoch_mean_update(initial_mu, b + 1, v);
    }

    let mut lr = cfg.lr0;
    let mut best = initial_mu;
    let mut decayed = false;
    let mut report = TrainReport {
        initial_mu,
        mu: Vec::new(),
        lr: Vec::new(),
        lr_changes: Vec::new(),
        stop: StopReason::MaxEpochs,
        batch_size,
        wall_time: Duration::ZERO,
    };

    for epoch in 1..=cfg.max_epochs {
        let mut mu = 0.0;
        for (b, batch) in batch_iter(data, batch_size, cfg.seed, (epoch - 1) as u64)?.enumerate() {
            let v = checked(learner.step(&batch?, lr)?, epoch, b + 1)?;
            mu = epoch_mean_update(mu, b + 1, v);
        }
        report.mu.push(mu);
        report.lr.push(lr);
        log::debug!("epoch {epoch}: mu = {mu:.6e}, lr = {lr:.1e}");

        let gain = (goal.score(mu) - goal.score(best)) / best.abs().max(f64::MIN_POSITIVE);
        if goal.score(mu) > goal.score(best) {
            best = mu;
        }
        if gain < cfg.saturation_rel_tol {
            if decayed {
                report.stop = StopReason::Saturated;
                break;
            }
            decayed = true;
            lr *= cfg.lr_decay;
            report.lr_changes.push(LrChange { epoch, lr });
            log::info!("objective saturated after epoch {epoch}; learning rate now {lr:.1e}");
        }
    }
    report.wall_time = started.elapsed();
    Ok(report)
}

/// One Adam ascent step of `X_r` on NysDI; returns NysDI before the update.
pub fn nystrom_step(
    map: &mut NystromMap,
    batch: &Batch,
    state: &mut AdamState,
    lr: f64,
    adam: &AdamConfig,
    di: &DIConfig,
) -> Result<f64> {
    let (value, grad) = nys_di_with_grad(&batch.x, &batch.targets, map, di)?;
    let mut params = [map.reps().clone()];
    adam_step(&mut params, &[grad], state, lr, adam)?;
    let [reps] = params;
    map.set_reps(reps)?;
    Ok(value)
}

/// One Adam ascent step of `(W_f, b_f)` on RFDI; returns RFDI before the update.
pub fn fourier_step(
    map: &mut FourierMap,
    batch: &Batch,
    state: &mut AdamState,
    lr: f64,
    adam: &AdamConfig,
    di: &DIConfig,
) -> Result<f64> {
    let (value, grad) = rf_di_with_grad(&batch.x, &batch.targets, map, di)?;
    let (w, b) = map.clone().into_parts();
    let mut params = [w, Matrix::from_column_slice(b.len(), 1, b.as_slice())];
    let grads = [
        grad.w,
        Matrix::from_column_slice(grad.b.len(), 1, grad.b.as_slice()),
    ];
    adam_step(&mut params, &grads, state, lr, adam)?;
    let [w, b] = params;
    *map = FourierMap::from_unwrapped(w, Vector::from_column_slice(b.as_slice()))?;
    Ok(value)
}

pub(crate) fn fourier_adam_state(map: &FourierMap) -> AdamState {
    AdamState::new(&[
        map.projection().clone(),
        Matrix::zeros(map.feature_dim(), 1),
    ])
}

struct NystromDi {
    map: NystromMap,
    state: AdamState,
    adam: AdamConfig,
    di: DIConfig,
}

impl Learner for NystromDi {
    fn step(&mut self, batch: &Batch, lr: f64) -> Result<f64> {
        nystrom_step(
            &mut self.map,
            batch,
            &mut self.state,
            lr,
            &self.adam,
            &self.di,
        )
    }

    fn evaluate(&self, batch: &Batch) -> Result<f64> {
        nys_di(&batch.x, &batch.targets, &self.map, &self.di)
    }
}

struct FourierDi {
    map: FourierMap,
    state: AdamState,
    adam: AdamConfig,
    di: DIConfig,
}

impl Learner for FourierDi {
    fn step(&mut self, batch: &Batch, lr: f64) -> Result<f64> {
        fourier_step(
            &mut self.map,
            batch,
            &mut self.state,
            lr,
            &self.adam,
            &self.di,
        )
    }

    fn evaluate(&self, batch: &Batch) -> Result<f64> {
        rf_di(&batch.x, &batch.targets, &self.map, &self.di)
    }
}

fn check_input_dim(data: &Dataset, d: usize) -> Result<()> {
    if data.n_features() != d {
        return Err(Error::dims(
            "map input dimension vs dataset",
            d,
            data.n_features(),
        ));
    }
    Ok(())
}

/// Trains the representative points of a Nyström map by NysDI ascent.
pub fn train_nystrom(
    data: &Dataset,
    map: NystromMap,
    cfg: &TrainConfig,
    di: &DIConfig,
) -> Result<(NystromMap, TrainReport)> {
    cfg.validate()?;
    di.validate()?;
    check_input_dim(data, map.input_dim())?;
    let batch_size = effective_batch_size(map.n_reps(), cfg, data.n_samples())?;
    let state = AdamState::new(std::slice::from_ref(map.reps()));
    let mut learner = NystromDi {
        map,
        state,
        adam: cfg.adam,
        di: *di,
    };
    let report = run_schedule(&mut learner, data, cfg, batch_size, Goal::Maximize)?;
    Ok((learner.map, report))
}

/// Trains the projection and phases of a random Fourier map by RFDI ascent.
pub fn train_fourier(
    data: &Dataset,
    map: FourierMap,
    cfg: &TrainConfig,
    di: &DIConfig,
) -> Result<(FourierMap, TrainReport)> {
    cfg.validate()?;
    di.validate()?;
    check_input_dim(data, map.input_dim())?;
    let batch_size = effective_batch_size(map.feature_dim(), cfg, data.n_samples())?;
    let state = fourier_adam_state(&map);
    let mut learner = FourierDi {
        map,
        state,
        adam: cfg.adam,
        di: *di,
    };
    let report = run_schedule(&mut learner, data, cfg, batch_size, Goal::Maximize)?;
    Ok((learner.map, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = [Matrix::from_element(2, 2, 0.7)];
        let mut s = AdamState::new(&p);
        adam_step(
            &mut p,
            &[Matrix::zeros(2, 2)],
            &mut s,
            1e-3,
            &AdamConfig::default(),
        )
        .unwrap();
        assert_eq!(p[0], Matrix::from_element(2, 2, 0.7));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = [Matrix::zeros(1, 1)];
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(
            &mut p,
            &[Matrix::from_element(1, 1, 1.0)],
            &mut s,
            1e-3,
            &cfg,
        )
        .unwrap();
        let expected = 1e-3 / (1.0 + 1e-8);
        assert!((p[0][(0, 0)] - expected).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = [Matrix::zeros(1, 2)];
        let mut s = AdamState::new(&p);
        let g = Matrix::from_row_slice(1, 2, &[2.0, -0.5]);
        let mut prev = p[0].clone();
        for _ in 0..2 {
            adam_step(
                &mut p,
                std::slice::from_ref(&g),
                &mut s,
                1e-2,
                &AdamConfig::default(),
            )
            .unwrap();
            assert!(p[0][(0, 0)] > prev[(0, 0)]);
            assert!(p[0][(0, 1)] < prev[(0, 1)]);
            prev = p[0].clone();
        }
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut p = [Matrix::zeros(2, 2)];
        let mut s = AdamState::new(&p);
        let err = adam_step(
            &mut p,
            &[Matrix::zeros(2, 1)],
            &mut s,
            1e-3,
            &AdamConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn running_mean() {
        assert_eq!(epoch_mean_update(123.0, 1, 5.0), 5.0);
        assert_eq!(
            epoch_mean_update(epoch_mean_update(0.0, 1, 2.0), 2, 4.0),
            3.0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..100).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut mu = 0.0;
        for (b, v) in values.iter().enumerate() {
            mu = epoch_mean_update(mu, b + 1, *v);
        }
        let direct = values.iter().sum::<f64>() / 100.0;
        assert!((mu - direct).abs() < 1e-12);
    }

    #[test]
    fn batch_size_rule() {
        let cfg = TrainConfig::default();
        assert_eq!(effective_batch_size(100, &cfg, 60000).unwrap(), 1000);
        assert_eq!(effective_batch_size(800, &cfg, 60000).unwrap(), 1600);
        assert_eq!(effective_batch_size(501, &cfg, 60000).unwrap(), 1002);
        assert_eq!(effective_batch_size(500, &cfg, 60000).unwrap(), 1000);
        assert!(effective_batch_size(800, &cfg, 1500).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr_decay: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn records_have_one_line_per_epoch() {
        let report = TrainReport {
            initial_mu: 1.0,
            mu: vec![2.0, 3.0],
            lr: vec![1e-3, 1e-4],
            lr_changes: vec![LrChange { epoch: 1, lr: 1e-4 }],
            stop: StopReason::Saturated,
            batch_size: 10,
            wall_time: Duration::ZERO,
        };
        let mut out = Vec::new();
        report.write_records(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec!["epoch,mu,lr", "0,1e0,1e-3", "1,2e0,1e-3", "2,3e0,1e-4"]
        );
    }
}
