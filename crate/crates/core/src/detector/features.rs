//! Windowed RSSI/SINR features: fixed transforms, per-group PCA and raw summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean, std_dev, Matrix};

use super::pca::Pca;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    FirstDifference,
    MovingMean,
    MovingStd,
    SquaredMagnitude,
    CumulativeSum,
    Detrended,
    ZScore,
    MinMax,
}

pub const MOVING_WINDOW: usize = 10;

impl Transform {
    pub const ALL: [Transform; 9] = [
        Transform::Identity,
        Transform::FirstDifference,
        Transform::MovingMean,
        Transform::MovingStd,
        Transform::SquaredMagnitude,
        Transform::CumulativeSum,
        Transform::Detrended,
        Transform::ZScore,
        Transform::MinMax,
    ];

    /// Same-length output; moving statistics use a trailing window that is
    /// shorter at the start.
    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        match self {
            Transform::Identity => x.to_vec(),
            Transform::FirstDifference => (0..n).map(|i| if i == 0 { 0.0 } else { x[i] - x[i - 1] }).collect(),
            Transform::MovingMean => (0..n)
                .map(|i| mean(&x[(i + 1).saturating_sub(MOVING_WINDOW)..=i]))
                .collect(),
            Transform::MovingStd => (0..n)
                .map(|i| std_dev(&x[(i + 1).saturating_sub(MOVING_WINDOW)..=i]))
                .collect(),
            Transform::SquaredMagnitude => x.iter().map(|v| v * v).collect(),
            Transform::CumulativeSum => x
                .iter()
                .scan(0.0, |acc, v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect(),
            Transform::Detrended => {
                let t_mean = (n as f64 - 1.0) / 2.0;
                let x_mean = mean(x);
                let (mut sxy, mut sxx) = (0.0, 0.0);
                for (i, v) in x.iter().enumerate() {
                    let dt = i as f64 - t_mean;
                    sxy += dt * (v - x_mean);
                    sxx += dt * dt;
                }
                let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
                x.iter()
                    .enumerate()
                    .map(|(i, v)| v - x_mean - slope * (i as f64 - t_mean))
                    .collect()
            }
            Transform::ZScore => {
                let (m, s) = (mean(x), std_dev(x));
                x.iter().map(|v| if s > 0.0 { (v - m) / s } else { 0.0 }).collect()
            }
            Transform::MinMax => {
                let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                x.iter().map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawStat {
    Mean,
    Std,
    Min,
    Max,
}

impl RawStat {
    pub fn apply(self, x: &[f64]) -> f64 {
        match self {
            RawStat::Mean => mean(x),
            RawStat::Std => std_dev(x),
            RawStat::Min => x.iter().cloned().fold(f64::INFINITY, f64::min),
            RawStat::Max => x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkScenario {
    Los,
    Nlos,
}

impl LinkScenario {
    pub fn target_width(self) -> usize {
        match self {
            LinkScenario::Los => 90,
            LinkScenario::Nlos => 54,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturePipelineConfig {
    pub window_len: usize,
    pub stride: usize,
    pub transforms: Vec<Transform>,
    pub raw_stats: Vec<RawStat>,
    /// Each transformed window is block-averaged to this many points before PCA.
    pub pca_input_dim: usize,
    pub selected_features: usize,
    pub scenario: LinkScenario,
}

impl Default for FeaturePipelineConfig {
    fn default() -> Self {
        Self::los()
    }
}

impl FeaturePipelineConfig {
    /// Nine transforms × five components × two signals.
    pub fn los() -> Self {
        Self {
            window_len: 300,
            stride: 300,
            transforms: Transform::ALL.to_vec(),
            raw_stats: Vec::new(),
            pca_input_dim: 30,
            selected_features: 5,
            scenario: LinkScenario::Los,
        }
    }

    /// Five transforms × five components × two signals, plus mean and spread of each raw signal.
    pub fn nlos() -> Self {
        Self {
            transforms: vec![
                Transform::Identity,
                Transform::FirstDifference,
                Transform::MovingMean,
                Transform::MovingStd,
                Transform::Detrended,
            ],
            raw_stats: vec![RawStat::Mean, RawStat::Std],
            scenario: LinkScenario::Nlos,
            ..Self::los()
        }
    }

    pub fn for_scenario(s: LinkScenario) -> Self {
        match s {
            LinkScenario::Los => Self::los(),
            LinkScenario::Nlos => Self::nlos(),
        }
    }

    pub fn width(&self) -> usize {
        2 * (self.transforms.len() * self.selected_features + self.raw_stats.len())
    }

    pub fn n_groups(&self) -> usize {
        2 * self.transforms.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || self.stride < 1 {
            return Err(Error::config("detector.features.window_len", "need window_len >= 2 and stride >= 1"));
        }
        if self.pca_input_dim < 1 || self.pca_input_dim > self.window_len {
            return Err(Error::config("detector.features.pca_input_dim", "must lie in [1, window_len]"));
        }
        if self.selected_features < 1 || self.selected_features > self.pca_input_dim {
            return Err(Error::config(
                "detector.features.selected_features",
                "must lie in [1, pca_input_dim]",
            ));
        }
        if self.width() != self.scenario.target_width() {
            return Err(Error::config(
                "detector.features",
                format!(
                    "{} features configured but the {:?} preset requires {}",
                    self.width(),
                    self.scenario,
                    self.scenario.target_width()
                ),
            ));
        }
        Ok(())
    }
}

pub fn window_count(len: usize, window_len: usize, stride: usize) -> Result<usize> {
    if len < window_len {
        return Err(Error::Shape(format!("series of {len} samples is shorter than the {window_len}-sample window")));
    }
    Ok((len - window_len) / stride + 1)
}

/// Means over `dim` contiguous, nearly equal blocks.
pub fn block_average(x: &[f64], dim: usize) -> Vec<f64> {
    let n = x.len();
    (0..dim).map(|b| mean(&x[b * n / dim..((b + 1) * n / dim).max(b * n / dim + 1)])).collect()
}

fn group_descriptor(signal: &[f64], t: Transform, dim: usize) -> Vec<f64> {
    block_average(&t.apply(signal), dim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub cfg: FeaturePipelineConfig,
    /// RSSI groups in transform order, then SINR groups.
    pub pcas: Vec<Pca>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

impl FittedPipeline {
    /// Fit per-group PCA and the output standardisation on training windows.
    pub fn fit(windows: &[(Vec<f64>, Vec<f64>)], cfg: &FeaturePipelineConfig) -> Result<Self> {
        cfg.validate()?;
        if windows.is_empty() {
            return Err(Error::Shape("no training windows".into()));
        }
        for (r, q) in windows {
            if r.len() != cfg.window_len || q.len() != cfg.window_len {
                return Err(Error::Shape(format!("windows must hold {} samples", cfg.window_len)));
            }
        }
        let mut pcas = Vec::with_capacity(cfg.n_groups());
        for signal in 0..2 {
            for &t in &cfg.transforms {
                let rows: Vec<Vec<f64>> = windows
                    .iter()
                    .map(|(r, q)| group_descriptor(if signal == 0 { r } else { q }, t, cfg.pca_input_dim))
                    .collect();
                pcas.push(Pca::fit(&Matrix::from_rows(&rows)?, cfg.selected_features)?);
            }
        }
        let mut fp = Self {
            cfg: cfg.clone(),
            pcas,
            feature_mean: vec![0.0; cfg.width()],
            feature_std: vec![1.0; cfg.width()],
        };
        let raw: Vec<Vec<f64>> = windows
            .iter()
            .map(|(r, q)| fp.raw_features(r, q))
            .collect::<Result<_>>()?;
        for j in 0..cfg.width() {
            let col: Vec<f64> = raw.iter().map(|r| r[j]).collect();
            fp.feature_mean[j] = mean(&col);
            let s = std_dev(&col);
            fp.feature_std[j] = if s > 1e-12 { s } else { 1.0 };
        }
        Ok(fp)
    }

    fn raw_features(&self, rssi: &[f64], sinr: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        if rssi.len() != cfg.window_len || sinr.len() != cfg.window_len {
            return Err(Error::Shape(format!("windows must hold {} samples", cfg.window_len)));
        }
        if rssi.iter().chain(sinr).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite sensing sample".into()));
        }
        let mut out = Vec::with_capacity(cfg.width());
        for (s, signal) in [rssi, sinr].into_iter().enumerate() {
            for (g, &t) in cfg.transforms.iter().enumerate() {
                let pca = &self.pcas[s * cfg.transforms.len() + g];
                out.extend(pca.project(&group_descriptor(signal, t, cfg.pca_input_dim))?);
            }
        }
        for signal in [rssi, sinr] {
            for st in &cfg.raw_stats {
                out.push(st.apply(signal));
            }
        }
        Ok(out)
    }

    /// Standardised feature vector of one window.
    pub fn window_features(&self, rssi: &[f64], sinr: &[f64]) -> Result<Vec<f64>> {
        let mut f = self.raw_features(rssi, sinr)?;
        for ((v, m), s) in f.iter_mut().zip(&self.feature_mean).zip(&self.feature_std) {
            *v = (*v - m) / s;
        }
        Ok(f)
    }

    /// Slide over full series: one feature row per window.
    pub fn extract_features(&self, rssi: &[f64], sinr: &[f64]) -> Result<Matrix> {
        if rssi.len() != sinr.len() {
            return Err(Error::Shape("RSSI and SINR series differ in length".into()));
        }
        let (w, s) = (self.cfg.window_len, self.cfg.stride);
        let n = window_count(rssi.len(), w, s)?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            rows.push(self.window_features(&rssi[i * s..i * s + w], &sinr[i * s..i * s + w])?);
        }
        Matrix::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use rand::Rng;

    fn windows(n: usize, len: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = stream(1, Stream::Dataset);
        (0..n)
            .map(|_| {
                let r = (0..len).map(|_| -60.0 + rng.random::<f64>() * 5.0).collect();
                let q = (0..len).map(|_| 10.0 + rng.random::<f64>() * 3.0).collect();
                (r, q)
            })
            .collect()
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_count(300, 300, 1).unwrap(), 1);
        assert_eq!(window_count(600, 300, 300).unwrap(), 2);
        assert!(window_count(299, 300, 1).is_err());
    }

    #[test]
    fn preset_widths() {
        assert_eq!(FeaturePipelineConfig::los().width(), 90);
        assert_eq!(FeaturePipelineConfig::nlos().width(), 54);
        let mut bad = FeaturePipelineConfig::nlos();
        bad.raw_stats.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fitted_pipelines_emit_target_width() {
        let w = windows(20, 300);
        for cfg in [FeaturePipelineConfig::los(), FeaturePipelineConfig::nlos()] {
            let fp = FittedPipeline::fit(&w, &cfg).unwrap();
            let rssi: Vec<f64> = w.iter().take(2).flat_map(|x| x.0.clone()).collect();
            let sinr: Vec<f64> = w.iter().take(2).flat_map(|x| x.1.clone()).collect();
            let m = fp.extract_features(&rssi, &sinr).unwrap();
            assert_eq!((m.rows, m.cols), (2, cfg.width()));
        }
    }

    #[test]
    fn transforms_on_a_ramp() {
        let x: Vec<f64> = (0..5).map(|i| 2.0 * i as f64 + 1.0).collect();
        assert_eq!(Transform::FirstDifference.apply(&x), vec![0.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(Transform::CumulativeSum.apply(&x), vec![1.0, 4.0, 9.0, 16.0, 25.0]);
        assert!(Transform::Detrended.apply(&x).iter().all(|v| v.abs() < 1e-12));
        assert_eq!(Transform::MinMax.apply(&x), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(Transform::MovingMean.apply(&x)[1], 2.0);
        assert_eq!(block_average(&x, 2), vec![2.0, 7.0]);
    }
}
