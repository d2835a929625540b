//! Optimisers, the training loop with early stopping, k-fold cross
//! validation, the λ sweep, ablation runs and checkpoint files.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::EncodedSample;
use crate::model::{self, HbgsaConfig};
use crate::nn::{Graph, Mode, ParamStore};
use crate::objective::{hybrid_loss_node, MetricsReport};

/// Smallest batch over which the Pearson term is computed.
pub const MIN_PEARSON_BATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Epochs without a validation-RMSE improvement tolerated before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub lambda: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub strict_ci: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 300,
            learning_rate: 1e-4,
            optimizer: OptimizerKind::default(),
            early_stop_patience: 30,
            seed: 0,
            lambda: 50.0,
            clip_norm: Some(5.0),
            strict_ci: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda > 0.0 && self.batch_size < MIN_PEARSON_BATCH {
            return Err(Error::config(format!(
                "batch_size must be at least {MIN_PEARSON_BATCH} when lambda > 0, got {}",
                self.batch_size
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::config("batch_size and max_epochs must be positive"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("early_stop_patience must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::config("learning_rate must be positive and lambda a non-negative number"));
        }
        Ok(())
    }
}

pub trait Optimizer {
    /// Updates every parameter that has a gradient.
    fn step(&mut self, params: &mut ParamStore<f32>);
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &ParamStore<f32>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Adam { lr, beta1, beta2, eps, t: 0, m: zeros.clone(), v: zeros }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut ParamStore<f32>) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for id in 0..params.len() {
            let t = params.tensor_mut(id);
            let Some(grad) = t.grad.take() else { continue };
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            for (i, w) in t.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                *w -= step * m[i] / (v[i].sqrt() + eps);
            }
            t.grad = Some(grad);
        }
    }
}

pub struct Sgd {
    lr: f32,
    momentum: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(params: &ParamStore<f32>, lr: f64, momentum: f64) -> Self {
        Sgd { lr: lr as f32, momentum: momentum as f32, velocity: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect() }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ParamStore<f32>) {
        for id in 0..params.len() {
            let t = params.tensor_mut(id);
            let Some(grad) = t.grad.take() else { continue };
            let vel = &mut self.velocity[id];
            for (i, w) in t.data_mut().iter_mut().enumerate() {
                vel[i] = self.momentum * vel[i] + grad[i];
                *w -= self.lr * vel[i];
            }
            t.grad = Some(grad);
        }
    }
}

pub fn make_optimizer(kind: OptimizerKind, params: &ParamStore<f32>, lr: f64) -> Box<dyn Optimizer> {
    match kind {
        OptimizerKind::Adam { beta1, beta2, eps } => Box::new(Adam::new(params, lr, beta1, beta2, eps)),
        OptimizerKind::Sgd { momentum } => Box::new(Sgd::new(params, lr, momentum)),
    }
}

/// Scales all gradients so their global norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(params: &mut ParamStore<f32>, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm && norm.is_finite() {
        let scale = (max_norm / norm) as f32;
        for id in 0..params.len() {
            if let Some(g) = params.tensor_mut(id).grad.as_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    norm
}

/// Stops once `epoch − best_epoch > patience`.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: f64::INFINITY, best_epoch: 0 }
    }

    pub fn update(&mut self, epoch: usize, value: f64) -> StopDecision {
        let improved = value < self.best;
        if improved {
            self.best = value;
            self.best_epoch = epoch;
        }
        StopDecision { improved, stop: epoch - self.best_epoch > self.patience }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Mean training-loss components over an epoch's batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub total: f64,
    pub reg: f64,
    pub pearson: f64,
    pub lambda: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: EpochLoss,
    pub val: Option<MetricsReport>,
    pub best: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainLog {
    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> String {
        self.epochs.iter().map(|e| serde_json::to_string(e).expect("log serialises") + "\n").collect()
    }
}

fn labels(samples: &[EncodedSample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| s.affinity.map(f64::from).ok_or_else(|| Error::data(format!("sample `{}` has no affinity label", s.id))))
        .collect()
}

/// Eval-mode metrics over a labelled set.
pub fn evaluate(model_cfg: &HbgsaConfig, params: &ParamStore<f32>, samples: &[EncodedSample], strict_ci: bool) -> Result<(MetricsReport, Vec<f64>)> {
    let target = labels(samples)?;
    let pred: Vec<f64> = model::predict_all(model_cfg, params, samples, 64)?.into_iter().map(|p| p.affinity_pred).collect();
    Ok((MetricsReport::compute(&pred, &target, strict_ci)?, pred))
}

/// Epoch-at-a-time training state.
pub struct Trainer {
    pub model: HbgsaConfig,
    pub config: TrainConfig,
    pub params: ParamStore<f32>,
    optimizer: Box<dyn Optimizer>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: HbgsaConfig, config: TrainConfig, params: ParamStore<f32>) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        let optimizer = make_optimizer(config.optimizer, &params, config.learning_rate);
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);
        Ok(Trainer { model, config, params, optimizer, rng, epoch: 0 })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Batches of one shuffled pass; a short last batch is dropped when the
    /// Pearson term needs at least [`MIN_PEARSON_BATCH`] samples.
    fn batches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let min = if self.config.lambda > 0.0 { MIN_PEARSON_BATCH } else { 2 };
        order.chunks(self.config.batch_size).filter(|b| b.len() >= min).map(<[usize]>::to_vec).collect()
    }

    pub fn train_epoch(&mut self, train: &[EncodedSample]) -> Result<EpochLoss> {
        self.epoch += 1;
        let batches = self.batches(train.len());
        if batches.is_empty() {
            return Err(Error::config(format!(
                "no usable batch: {} training samples with batch_size {} and lambda {}",
                train.len(),
                self.config.batch_size,
                self.config.lambda
            )));
        }
        let mut acc = EpochLoss { total: 0.0, reg: 0.0, pearson: 0.0, lambda: self.config.lambda, batches: 0 };
        for (bi, idx) in batches.iter().enumerate() {
            let batch: Vec<EncodedSample> = idx.iter().map(|&i| train[i].clone()).collect();
            let target = labels(&batch)?;
            let seed = self.config.seed.wrapping_mul(1_000_003).wrapping_add((self.epoch as u64) << 20 | bi as u64);
            let mut g = Graph::<f32>::new(Mode::Train, seed);
            let p = g.bind_params(&self.params);
            let pred = model::forward(&mut g, &p, &self.model, &batch)?;
            let (loss, b) = hybrid_loss_node(&mut g, pred, &target, self.config.lambda)
                .map_err(|e| Error::Numeric(format!("epoch {} batch {bi}: {e}", self.epoch)))?;
            let grads = g.backward(loss)?;
            self.params.set_grads(&p, &grads);
            let norm = match self.config.clip_norm {
                Some(c) => clip_grad_norm(&mut self.params, c),
                None => self.params.grad_norm(),
            };
            if !norm.is_finite() {
                return Err(Error::Numeric(format!("epoch {} batch {bi}: gradient norm is not finite", self.epoch)));
            }
            self.optimizer.step(&mut self.params);
            self.params.zero_grads();
            acc.total += b.total;
            acc.reg += b.reg;
            acc.pearson += b.pearson;
            acc.batches += 1;
            debug!("epoch {} batch {bi}: loss {:.5} grad norm {norm:.4}", self.epoch, b.total);
        }
        let n = acc.batches as f64;
        acc.total /= n;
        acc.reg /= n;
        acc.pearson /= n;
        Ok(acc)
    }
}

/// Trains with early stopping on validation RMSE and returns the best
/// parameters with the per-epoch log.
pub fn train(
    model_cfg: &HbgsaConfig,
    params: ParamStore<f32>,
    train_set: &[EncodedSample],
    val_set: &[EncodedSample],
    config: &TrainConfig,
) -> Result<(ParamStore<f32>, TrainLog)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyInput("training or validation set"));
    }
    let mut trainer = Trainer::new(model_cfg.clone(), config.clone(), params)?;
    let mut stopper = EarlyStopper::new(config.early_stop_patience);
    let mut best = trainer.params.clone();
    let mut log = TrainLog::default();
    for _ in 0..config.max_epochs {
        let loss = trainer.train_epoch(train_set)?;
        let (val, _) = evaluate(model_cfg, &trainer.params, val_set, config.strict_ci)?;
        let epoch = trainer.epoch();
        let decision = stopper.update(epoch, val.rmse);
        if decision.improved {
            best = trainer.params.clone();
        }
        info!("epoch {epoch}: train loss {:.4} val rmse {:.4}{}", loss.total, val.rmse, if decision.improved { " *" } else { "" });
        log.epochs.push(EpochLog { epoch, train: loss, val: Some(val), best: decision.improved });
        if decision.stop {
            info!("early stop at epoch {epoch}, best epoch {}", stopper.best_epoch());
            break;
        }
    }
    log.best_epoch = stopper.best_epoch();
    Ok((best, log))
}

/// Seeded shuffle cut into `k` contiguous folds (sizes differ by at most one).
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::config(format!("k-fold needs 2 ≤ k ≤ {n}, got k = {k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: MetricsReport,
    pub best_epoch: usize,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub rmse: MeanStd,
    pub mae: MeanStd,
    pub pearson_r: Option<MeanStd>,
    pub ci: Option<MeanStd>,
}

impl CvSummary {
    pub fn of(folds: &[FoldResult]) -> Result<Self> {
        let pick = |f: fn(&MetricsReport) -> Option<f64>| -> Vec<f64> { folds.iter().filter_map(|r| f(&r.metrics)).collect() };
        Ok(CvSummary {
            rmse: MeanStd::of(&pick(|m| Some(m.rmse))).ok_or(Error::EmptyInput("folds"))?,
            mae: MeanStd::of(&pick(|m| Some(m.mae))).ok_or(Error::EmptyInput("folds"))?,
            pearson_r: MeanStd::of(&pick(|m| m.pearson_r)),
            ci: MeanStd::of(&pick(|m| m.ci)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub summary: CvSummary,
}

/// Each fold is held out once; the validation set for early stopping is the
/// last tenth (at least one sample) of the remaining training pool.
pub fn kfold_cv(model_cfg: &HbgsaConfig, samples: &[EncodedSample], k: usize, config: &TrainConfig) -> Result<CvResult> {
    let folds = fold_partition(samples.len(), k, config.seed)?;
    let mut results = Vec::with_capacity(k);
    for (f, held) in folds.iter().enumerate() {
        let pool: Vec<usize> = folds.iter().enumerate().filter(|(i, _)| *i != f).flat_map(|(_, v)| v.iter().copied()).collect();
        let n_val = (pool.len() / 10).max(1);
        if pool.len() <= n_val {
            return Err(Error::config(format!("fold {f}: too few samples to carve a validation set")));
        }
        let (tr, va) = pool.split_at(pool.len() - n_val);
        let pick = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
        let params = model::build_params::<f32>(model_cfg, config.seed)?;
        let (best, log) = train(model_cfg, params, &pick(tr), &pick(va), config)?;
        let (metrics, _) = evaluate(model_cfg, &best, &pick(held), config.strict_ci)?;
        info!("fold {f}: rmse {:.4}", metrics.rmse);
        results.push(FoldResult { fold: f, metrics, best_epoch: log.best_epoch });
    }
    let summary = CvSummary::of(&results)?;
    Ok(CvResult { folds: results, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub metrics: MetricsReport,
}

pub const DEFAULT_LAMBDAS: [f64; 7] = [1.0, 25.0, 50.0, 75.0, 100.0, 125.0, 150.0];

/// One training run per λ, otherwise identical, scored on `test`.
pub fn lambda_sweep(
    model_cfg: &HbgsaConfig,
    train_set: &[EncodedSample],
    val_set: &[EncodedSample],
    test_set: &[EncodedSample],
    lambdas: &[f64],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = TrainConfig { lambda, ..config.clone() };
            let m = HbgsaConfig { lambda_pearson: lambda, ..model_cfg.clone() };
            let params = model::build_params::<f32>(&m, cfg.seed)?;
            let (best, _) = train(&m, params, train_set, val_set, &cfg)?;
            let (metrics, _) = evaluate(&m, &best, test_set, cfg.strict_ci)?;
            Ok(SweepRow { label: format!("{lambda}"), metrics })
        })
        .collect()
}

/// One training run per named ablation variant.
pub fn ablate(
    model_cfg: &HbgsaConfig,
    variants: &[&str],
    train_set: &[EncodedSample],
    val_set: &[EncodedSample],
    test_set: &[EncodedSample],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    variants
        .iter()
        .map(|name| {
            let m = model_cfg.ablation_variant(name)?;
            let params = model::build_params::<f32>(&m, config.seed)?;
            let (best, _) = train(&m, params, train_set, val_set, config)?;
            let (metrics, _) = evaluate(&m, &best, test_set, config.strict_ci)?;
            Ok(SweepRow { label: (*name).to_string(), metrics })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// CSV with columns `<first>,rmse,mae,pearson_r,ci`.
pub fn rows_csv(first: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{first},rmse,mae,pearson_r,ci\n");
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!("{},{:.6},{:.6},{},{}\n", r.label, m.rmse, m.mae, fmt_opt(m.pearson_r), fmt_opt(m.ci)));
    }
    out
}

/// Path of the model config stored next to a checkpoint.
pub fn config_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("toml")
}

/// Writes the parameters and, alongside, the model config as TOML.
pub fn save_checkpoint(path: &Path, model_cfg: &HbgsaConfig, params: &ParamStore<f32>) -> Result<()> {
    params.save(BufWriter::new(File::create(path)?))?;
    std::fs::write(config_path(path), model_cfg.to_toml())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(HbgsaConfig, ParamStore<f32>)> {
    let cfg_text = std::fs::read_to_string(config_path(path))
        .map_err(|e| Error::data(format!("{}: {e}", config_path(path).display())))?;
    let cfg = HbgsaConfig::from_toml(&cfg_text)?;
    let params = ParamStore::load(BufReader::new(File::open(path)?), 0)?;
    let expected = model::build_params::<f32>(&cfg, 0)?;
    for (name, t) in expected.iter() {
        match params.get(name) {
            Some(p) if p.shape() == t.shape() => {}
            Some(p) => return Err(Error::Format(format!("parameter `{name}` has shape {:?}, expected {:?}", p.shape(), t.shape()))),
            None => return Err(Error::Format(format!("checkpoint lacks parameter `{name}`"))),
        }
    }
    Ok((cfg, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn early_stop_rule() {
        let mut s = EarlyStopper::new(1);
        assert_eq!(s.update(1, 1.0), StopDecision { improved: true, stop: false });
        assert_eq!(s.update(2, 1.1), StopDecision { improved: false, stop: false });
        assert_eq!(s.update(3, 1.2), StopDecision { improved: false, stop: true });
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = ParamStore::<f32>::new(0);
        p.add_uniform("w", &[4], 1.0).unwrap();
        let before = p.get("w").unwrap().data().to_vec();
        let mut opt = Adam::new(&p, 1e-3, 0.9, 0.999, 1e-8);
        p.tensor_mut(0).grad = Some(vec![0.0; 4]);
        opt.step(&mut p);
        assert_eq!(p.get("w").unwrap().data(), before.as_slice());
    }

    #[test]
    fn sgd_step_on_quadratic() {
        let mut p = ParamStore::<f32>::new(0);
        p.add("theta", Tensor::from_vec(vec![1.0])).unwrap();
        let mut opt = Sgd::new(&p, 0.1, 0.0);
        let theta = p.tensor(0).data()[0];
        p.tensor_mut(0).grad = Some(vec![theta]);
        opt.step(&mut p);
        assert_eq!(p.tensor(0).data()[0], 0.9);
    }

    #[test]
    fn folds_partition_the_set() {
        let folds = fold_partition(10, 5, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(fold_partition(3, 5, 0).is_err());
        let s = MeanStd::of(&[1.3, 1.3, 1.3]).unwrap();
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn config_rules() {
        assert!(TrainConfig { batch_size: 8, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 8, lambda: 0.0, ..Default::default() }.validate().is_ok());
        assert!(TrainConfig { early_stop_patience: 0, ..Default::default() }.validate().is_err());
    }
}
