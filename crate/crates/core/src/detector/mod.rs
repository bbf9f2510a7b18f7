//! Toy jamming detector: windowed RSSI/SINR features, a U-shaped attention
//! classifier and an uncertainty-weighted training loss.
//!
//! Class 0 is benign, class 1 is attack. At inference the detector is frozen
//! and its two logits are appended to the agents' observations.

pub mod features;
pub mod model;
pub mod pca;
pub mod tape;

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::{random_action, JamDetector, JamEnv, RewardWeights};
use crate::error::{Error, Result};
use crate::marl::adam::{clip_global_norm, Adam};
use crate::marl::checkpoint::{self, find, Tensor};
use crate::propagation::db_to_lin;
use crate::rng::{derive_seed, keyed_stream, stream, SimRng, Stream};
use crate::scenario::ScenarioConfig;

use features::{FeaturePipelineConfig, FittedPipeline};
use model::{UNetTransformer, UNetTransformerSpec};
use pca::Pca;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorLoss {
    pub alpha_uncertainty: f64,
    pub grad_accum_steps: usize,
}

impl Default for DetectorLoss {
    fn default() -> Self {
        Self {
            alpha_uncertainty: 0.1,
            grad_accum_steps: 2,
        }
    }
}

impl DetectorLoss {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_uncertainty >= 0.0 && self.alpha_uncertainty.is_finite()) {
            return Err(Error::config("detector.loss.alpha_uncertainty", "must be finite and >= 0"));
        }
        if self.grad_accum_steps < 1 {
            return Err(Error::config("detector.loss.grad_accum_steps", "must be >= 1"));
        }
        Ok(())
    }
}

/// Benign and attack scores before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorLogits {
    pub l1: f64,
    pub l2: f64,
}

impl DetectorLogits {
    pub fn probabilities(&self) -> [f64; 2] {
        let p = softmax2([self.l1, self.l2]);
        [p[0], p[1]]
    }
}

/// Shannon entropy in nats.
pub fn prediction_entropy(p: &[f64]) -> Result<f64> {
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Domain("probabilities must be finite and non-negative".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("probabilities sum to {s}")));
    }
    Ok(-p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>())
}

fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

fn log_softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    [z[0] - lse, z[1] - lse]
}

fn check_batch(logits: &[[f64; 2]], labels: &[usize]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Contract("empty detector batch".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::Shape(format!("{} logits for {} labels", logits.len(), labels.len())));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Contract("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Batch-mean cross-entropy and batch-mean prediction entropy.
pub fn loss_terms(logits: &[[f64; 2]], labels: &[usize]) -> Result<(f64, f64)> {
    check_batch(logits, labels)?;
    let n = logits.len() as f64;
    let mut ce = 0.0;
    let mut ent = 0.0;
    for (z, &y) in logits.iter().zip(labels) {
        let lp = log_softmax2(*z);
        ce -= lp[y];
        ent -= lp[0].exp() * lp[0] + lp[1].exp() * lp[1];
    }
    Ok((ce / n, ent / n))
}

/// `(CE − α·E(P)) / G` over one minibatch.
pub fn combine_loss(ce: f64, entropy: f64, cfg: &DetectorLoss) -> f64 {
    (ce - cfg.alpha_uncertainty * entropy) / cfg.grad_accum_steps as f64
}

pub fn detector_loss(logits: &[[f64; 2]], labels: &[usize], cfg: &DetectorLoss) -> Result<f64> {
    let (ce, ent) = loss_terms(logits, labels)?;
    Ok(combine_loss(ce, ent, cfg))
}

/// Gradient of `detector_loss` with respect to one sample's logits, for a batch of `batch` samples.
pub fn detector_loss_grad(z: [f64; 2], y: usize, batch: usize, cfg: &DetectorLoss) -> [f64; 2] {
    let lp = log_softmax2(z);
    let p = [lp[0].exp(), lp[1].exp()];
    let h = -(p[0] * lp[0] + p[1] * lp[1]);
    let scale = 1.0 / (batch as f64 * cfg.grad_accum_steps as f64);
    let mut g = [0.0; 2];
    for k in 0..2 {
        let onehot = if k == y { 1.0 } else { 0.0 };
        g[k] = scale * ((p[k] - onehot) + cfg.alpha_uncertainty * p[k] * (lp[k] + h));
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub holdout_fraction: f64,
}

impl Default for DetectorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            lr: 3e-3,
            max_grad_norm: 1.0,
            holdout_fraction: 0.25,
        }
    }
}

impl DetectorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::config("detector.train.batch_size", "must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("detector.train.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config("detector.train.holdout_fraction", "must lie in [0,1)"));
        }
        Ok(())
    }
}

/// How labelled windows are drawn from the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub samples: usize,
    /// Distinct topologies visited round-robin.
    pub topologies: usize,
    /// A window is an attack when in-band jamming power is at least this far above noise plus interference.
    pub label_jnr_db: f64,
    /// Give up after `samples × max_steps_factor` environment steps.
    pub max_steps_factor: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            samples: 600,
            topologies: 8,
            label_jnr_db: 0.0,
            max_steps_factor: 50,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 4 || self.topologies < 1 || self.max_steps_factor < 1 {
            return Err(Error::config(
                "detector.dataset",
                "samples >= 4, topologies >= 1 and max_steps_factor >= 1 required",
            ));
        }
        if !self.label_jnr_db.is_finite() {
            return Err(Error::config("detector.dataset.label_jnr_db", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub features: FeaturePipelineConfig,
    pub model: UNetTransformerSpec,
    pub loss: DetectorLoss,
    pub train: DetectorTrainConfig,
    pub dataset: DatasetConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let features = FeaturePipelineConfig::default();
        Self {
            model: UNetTransformerSpec::toy(features.width()),
            features,
            loss: DetectorLoss::default(),
            train: DetectorTrainConfig::default(),
            dataset: DatasetConfig::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.model.validate()?;
        if self.model.input_dim != self.features.width() {
            return Err(Error::config(
                "detector.model.input_dim",
                format!("must equal the feature width {}", self.features.width()),
            ));
        }
        self.loss.validate()?;
        self.train.validate()?;
        self.dataset.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub rssi_dbm: Vec<f64>,
    pub sinr_db: Vec<f64>,
    pub label: usize,
}

/// Class-balanced windows sensed under a uniformly random recovery policy.
pub fn simulate_windows(scenario: &ScenarioConfig, ds: &DatasetConfig, seed: u64) -> Result<Vec<LabeledWindow>> {
    ds.validate()?;
    let cfg = Arc::new(scenario.clone());
    let mut envs = (0..ds.topologies)
        .map(|t| JamEnv::new(cfg.clone(), RewardWeights::default(), derive_seed(seed, t as u64), None))
        .collect::<Result<Vec<_>>>()?;
    let threshold = db_to_lin(ds.label_jnr_db);
    let per_class = [ds.samples / 2, ds.samples - ds.samples / 2];
    let mut out: Vec<LabeledWindow> = Vec::with_capacity(ds.samples);
    let mut counts = [0usize; 2];
    let mut rng = stream(seed, Stream::Dataset);
    let budget = ds.samples * ds.max_steps_factor;
    let mut steps = 0usize;
    let mut episode = 0u64;
    'outer: loop {
        let env = &mut envs[episode as usize % ds.topologies];
        env.reset(derive_seed(seed ^ 0x5d, episode))?;
        episode += 1;
        let n_rb = env.n_rb_per_bwp();
        loop {
            let a = random_action(&mut rng, n_rb);
            let done = env.step(&a)?.done;
            let w = env.sense()?;
            let label = usize::from(w.powers.jam_w > 0.0 && w.powers.jam_w >= threshold * w.powers.other_w);
            if counts[label] < per_class[label] {
                counts[label] += 1;
                out.push(LabeledWindow {
                    rssi_dbm: w.rssi_dbm,
                    sinr_db: w.sinr_db,
                    label,
                });
            }
            steps += 1;
            if counts == per_class || steps >= budget {
                break 'outer;
            }
            if done {
                break;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorMetrics {
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub class_counts: [usize; 2],
    pub accuracy: f64,
    /// Mean `l_c − l_other` over held-out samples of class c, benign then attack.
    pub class_margins: [f64; 2],
    pub final_loss: f64,
}

/// Accuracy and per-class margins of `logits` against `labels`.
pub fn evaluate_logits(logits: &[[f64; 2]], labels: &[usize]) -> Result<(f64, [f64; 2])> {
    check_batch(logits, labels)?;
    let mut correct = 0usize;
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (z, &y) in logits.iter().zip(labels) {
        let pred = usize::from(z[1] > z[0]);
        correct += usize::from(pred == y);
        sums[y] += z[y] - z[1 - y];
        counts[y] += 1;
    }
    let margin = |c: usize| if counts[c] > 0 { sums[c] / counts[c] as f64 } else { f64::NAN };
    Ok((correct as f64 / logits.len() as f64, [margin(0), margin(1)]))
}

/// Per-step record of `fit_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitStep {
    pub loss: f64,
    pub cross_entropy: f64,
    pub entropy: f64,
}

/// Train `model` in place on feature vectors; one entry per optimiser step.
pub fn fit_model(
    model: &mut UNetTransformer,
    x: &[Vec<f64>],
    y: &[usize],
    loss: &DetectorLoss,
    train: &DetectorTrainConfig,
    rng: &mut SimRng,
) -> Result<Vec<FitStep>> {
    loss.validate()?;
    train.validate()?;
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Shape(format!("{} feature rows for {} labels", x.len(), y.len())));
    }
    let n = model.n_params();
    let mut adam = Adam::new(n);
    let mut params = model.flat();
    let mut grad = vec![0.0; n];
    let mut history = Vec::new();
    let mut acc = 0usize;
    let mut acc_terms = (0.0, 0.0, 0.0);
    let mut order: Vec<usize> = (0..x.len()).collect();
    for _ in 0..train.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(train.batch_size) {
            let mut logits = Vec::with_capacity(chunk.len());
            let labels: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            for &i in chunk {
                let (z, g) = model.backprop(&x[i], |z| detector_loss_grad(z, y[i], chunk.len(), loss))?;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                logits.push(z);
            }
            let (ce, ent) = loss_terms(&logits, &labels)?;
            acc_terms.0 += combine_loss(ce, ent, loss);
            acc_terms.1 += ce / loss.grad_accum_steps as f64;
            acc_terms.2 += ent / loss.grad_accum_steps as f64;
            acc += 1;
            if acc == loss.grad_accum_steps {
                if !acc_terms.0.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Divergence("non-finite detector loss".into()));
                }
                clip_global_norm(&mut grad, train.max_grad_norm);
                adam.step(&mut params, &grad, train.lr);
                model.set_flat(&params)?;
                history.push(FitStep {
                    loss: acc_terms.0,
                    cross_entropy: acc_terms.1,
                    entropy: acc_terms.2,
                });
                grad.iter_mut().for_each(|g| *g = 0.0);
                acc = 0;
                acc_terms = (0.0, 0.0, 0.0);
            }
        }
    }
    Ok(history)
}

/// A fitted pipeline and classifier in inference mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenDetector {
    pub pipeline: FittedPipeline,
    pub model: UNetTransformer,
}

impl FrozenDetector {
    pub fn classify(&self, rssi_dbm: &[f64], sinr_db: &[f64]) -> Result<DetectorLogits> {
        let f = self.pipeline.window_features(rssi_dbm, sinr_db)?;
        let [l1, l2] = self.model.logits(&f)?;
        if !(l1.is_finite() && l2.is_finite()) {
            return Err(Error::Divergence("non-finite detector logits".into()));
        }
        Ok(DetectorLogits { l1, l2 })
    }

    pub fn to_tensors(&self) -> Result<Vec<Tensor>> {
        let p = &self.pipeline;
        let mut ts = Vec::new();
        for (g, pca) in p.pcas.iter().enumerate() {
            ts.push(Tensor::vector(format!("pca{g}.mean"), pca.mean.clone()));
            ts.push(Tensor::new(
                format!("pca{g}.basis"),
                vec![pca.basis.rows as u64, pca.basis.cols as u64],
                pca.basis.data.clone(),
            )?);
            ts.push(Tensor::vector(format!("pca{g}.variance"), pca.explained_variance.clone()));
        }
        ts.push(Tensor::vector("features.mean", p.feature_mean.clone()));
        ts.push(Tensor::vector("features.std", p.feature_std.clone()));
        ts.extend(self.model.to_tensors()?);
        Ok(ts)
    }

    pub fn from_tensors(cfg: FeaturePipelineConfig, ts: &[Tensor]) -> Result<Self> {
        cfg.validate()?;
        let mut pcas = Vec::with_capacity(cfg.n_groups());
        for g in 0..cfg.n_groups() {
            let b = find(ts, &format!("pca{g}.basis"))?;
            if b.dims.len() != 2 {
                return Err(Error::Format(format!("pca{g}.basis is not a matrix")));
            }
            pcas.push(Pca {
                mean: find(ts, &format!("pca{g}.mean"))?.data.clone(),
                basis: crate::linalg::Matrix::from_vec(b.dims[0] as usize, b.dims[1] as usize, b.data.clone())?,
                explained_variance: find(ts, &format!("pca{g}.variance"))?.data.clone(),
            });
        }
        let pipeline = FittedPipeline {
            pcas,
            feature_mean: find(ts, "features.mean")?.data.clone(),
            feature_std: find(ts, "features.std")?.data.clone(),
            cfg,
        };
        if pipeline.feature_mean.len() != pipeline.cfg.width() {
            return Err(Error::Format("feature statistics do not match the pipeline width".into()));
        }
        let model = UNetTransformer::from_tensors(ts)?;
        if model.spec.input_dim != pipeline.cfg.width() {
            return Err(Error::Format("model input does not match the pipeline width".into()));
        }
        Ok(Self { pipeline, model })
    }

    /// Weight file; the echo holds the feature pipeline as TOML.
    pub fn save(&self, path: &Path) -> Result<()> {
        let echo = toml::to_string(&self.pipeline.cfg).map_err(|e| Error::Format(e.to_string()))?;
        checkpoint::save(path, &echo, &self.to_tensors()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (echo, ts) = checkpoint::load(path)?;
        let cfg: FeaturePipelineConfig = toml::from_str(&echo).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_tensors(cfg, &ts)
    }
}

impl JamDetector for FrozenDetector {
    fn logits(&self, rssi_dbm: &[f64], sinr_db: &[f64]) -> Result<[f64; 2]> {
        let l = self.classify(rssi_dbm, sinr_db)?;
        Ok([l.l1, l.l2])
    }
}

pub struct TrainedDetector {
    pub detector: FrozenDetector,
    pub metrics: DetectorMetrics,
    pub history: Vec<FitStep>,
}

/// Split, fit the feature pipeline on the training part, train the classifier
/// and score the held-out part.
pub fn train_detector(windows: &[LabeledWindow], cfg: &DetectorConfig, seed: u64) -> Result<TrainedDetector> {
    cfg.validate()?;
    let mut counts = [0usize; 2];
    for w in windows {
        if w.label > 1 {
            return Err(Error::Contract("labels must be 0 or 1".into()));
        }
        counts[w.label] += 1;
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::Contract(format!(
            "detector training needs both classes, got {} benign and {} attack windows",
            counts[0], counts[1]
        )));
    }
    let mut idx: Vec<usize> = (0..windows.len()).collect();
    idx.shuffle(&mut keyed_stream(seed, Stream::Dataset, 1));
    let n_hold = ((windows.len() as f64 * cfg.train.holdout_fraction).round() as usize).min(windows.len() - 1);
    let (hold, tr) = idx.split_at(n_hold);

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = tr
        .iter()
        .map(|&i| (windows[i].rssi_dbm.clone(), windows[i].sinr_db.clone()))
        .collect();
    let pipeline = FittedPipeline::fit(&pairs, &cfg.features)?;
    let feats = |ids: &[usize]| -> Result<Vec<Vec<f64>>> {
        ids.iter()
            .map(|&i| pipeline.window_features(&windows[i].rssi_dbm, &windows[i].sinr_db))
            .collect()
    };
    let x_tr = feats(tr)?;
    let y_tr: Vec<usize> = tr.iter().map(|&i| windows[i].label).collect();

    let mut model = UNetTransformer::init(cfg.model.clone(), &mut stream(seed, Stream::Init))?;
    let history = fit_model(&mut model, &x_tr, &y_tr, &cfg.loss, &cfg.train, &mut stream(seed, Stream::Minibatch))?;

    let (ids, xs) = if hold.is_empty() { (tr, x_tr) } else { (hold, feats(hold)?) };
    let logits = xs.iter().map(|x| model.logits(x)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = ids.iter().map(|&i| windows[i].label).collect();
    let (accuracy, class_margins) = evaluate_logits(&logits, &labels)?;
    Ok(TrainedDetector {
        metrics: DetectorMetrics {
            train_samples: tr.len(),
            holdout_samples: hold.len(),
            class_counts: counts,
            accuracy,
            class_margins,
            final_loss: history.last().map_or(f64::NAN, |h| h.loss),
        },
        detector: FrozenDetector { pipeline, model },
        history,
    })
}
