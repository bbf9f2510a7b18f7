//! Effective-SINR compression, the SINR→BLER curve, HARQ and timing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::lin_to_db;
use crate::rng::SimRng;

/// Largest retransmission budget an agent may request.
pub const R_MAX: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsmConfig {
    pub beta_eesm: f64,
    pub bler_sinr50_db: f64,
    pub bler_slope: f64,
}

impl Default for EsmConfig {
    fn default() -> Self {
        Self {
            beta_eesm: 2.0,
            bler_sinr50_db: 1.0,
            bler_slope: 1.0,
        }
    }
}

impl EsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_eesm > 0.0) {
            return Err(Error::config("beta_eesm", "must be > 0"));
        }
        if !(self.bler_slope > 0.0) {
            return Err(Error::config("bler_slope", "must be > 0"));
        }
        if !self.bler_sinr50_db.is_finite() {
            return Err(Error::config("bler_sinr50_db", "must be finite"));
        }
        Ok(())
    }
}

/// Exponential ESM: `−β·ln(mean(exp(−s_k/β)))`.
pub fn effective_sinr(sinr: &[f64], cfg: &EsmConfig) -> Result<f64> {
    if sinr.is_empty() {
        return Err(Error::Domain("effective SINR of an empty vector".into()));
    }
    if sinr.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Domain("SINR entries must be >= 0".into()));
    }
    let beta = cfg.beta_eesm;
    // Shift by the minimum so the mean of exponentials never underflows.
    let min = sinr.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = sinr.iter().map(|s| (-(s - min) / beta).exp()).sum::<f64>() / sinr.len() as f64;
    let eff = min - beta * mean.ln();
    let max = sinr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(eff.clamp(min, max))
}

/// Logistic BLER in the dB domain. Zero SINR maps to BLER 1.
pub fn sinr_to_bler(sinr_eff: f64, cfg: &EsmConfig) -> f64 {
    if sinr_eff <= 0.0 {
        return 1.0;
    }
    let x = cfg.bler_slope * (lin_to_db(sinr_eff) - cfg.bler_sinr50_db);
    // 1/(1+e^x) without overflow for large |x|.
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerMode {
    /// `1 − (1 − BLER)^(r+1)` taken literally.
    #[default]
    AsWritten,
    /// `BLER^(r+1)`, the residual error after `r` retransmissions.
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarqConfig {
    pub r_max: u32,
    pub mode: PerMode,
}

impl HarqConfig {
    pub fn new(r_max: u32) -> Result<Self> {
        let c = Self {
            r_max,
            mode: PerMode::AsWritten,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_max > R_MAX {
            return Err(Error::config("harq.r_max", format!("must be <= {R_MAX}")));
        }
        Ok(())
    }
}

pub fn per_closed_form(bler: f64, r: u32, mode: PerMode) -> f64 {
    let bler = bler.clamp(0.0, 1.0);
    let n = r as i32 + 1;
    match mode {
        PerMode::AsWritten => 1.0 - (1.0 - bler).powi(n),
        PerMode::Residual => bler.powi(n),
    }
}

/// HARQ outcome from pre-drawn uniforms: attempt `i` fails iff `uniforms[i] < bler`.
pub fn harq_from_uniforms(bler: f64, r_max: u32, uniforms: &[f64]) -> (bool, u32) {
    let budget = (r_max as usize + 1).min(uniforms.len());
    for (i, &u) in uniforms.iter().take(budget).enumerate() {
        if u >= bler {
            return (true, i as u32 + 1);
        }
    }
    (false, budget as u32)
}

/// Bernoulli attempts until success or `r_max + 1` failures. Always consumes `r_max + 1` uniforms.
pub fn harq_episode(bler: f64, harq: &HarqConfig, rng: &mut SimRng) -> (bool, u32) {
    let draws: Vec<f64> = (0..=harq.r_max).map(|_| rng.random::<f64>()).collect();
    harq_from_uniforms(bler, harq.r_max, &draws)
}

/// Latency and jitter bookkeeping for one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingState {
    pub last_latency_s: Option<f64>,
    pub count: u64,
    pub mean_latency_s: f64,
    pub m2: f64,
    pub jitter_s: f64,
    jitter_count: u64,
}

impl TimingState {
    pub fn latency_std_s(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

/// Fold one packet's latency `attempts·slot + penalty` into the running statistics.
pub fn update_timing(attempts: u32, slot_duration_s: f64, reconf_penalty_s: f64, mut t: TimingState) -> Result<TimingState> {
    if attempts < 1 {
        return Err(Error::Domain("a packet needs at least one attempt".into()));
    }
    let latency = attempts as f64 * slot_duration_s + reconf_penalty_s.max(0.0);
    if let Some(prev) = t.last_latency_s {
        t.jitter_count += 1;
        t.jitter_s += ((latency - prev).abs() - t.jitter_s) / t.jitter_count as f64;
    }
    t.count += 1;
    let delta = latency - t.mean_latency_s;
    t.mean_latency_s += delta / t.count as f64;
    t.m2 += delta * (latency - t.mean_latency_s);
    t.last_latency_s = Some(latency);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn esm_examples() {
        let c = EsmConfig {
            beta_eesm: 1.0,
            ..Default::default()
        };
        assert!((effective_sinr(&[3.3; 7], &c).unwrap() - 3.3).abs() < 1e-12);
        assert!((effective_sinr(&[0.42], &c).unwrap() - 0.42).abs() < 1e-15);
        let expected = -(((-1.0f64).exp() + 1.0) / 2.0).ln();
        assert!((effective_sinr(&[1.0, 0.0], &c).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.3799).abs() < 1e-4);
        assert!(effective_sinr(&[], &c).is_err());
        assert!(effective_sinr(&[1.0, -0.5], &c).is_err());
    }

    #[test]
    fn esm_survives_large_sinr() {
        let c = EsmConfig::default();
        let e = effective_sinr(&[1e6, 2e6], &c).unwrap();
        assert!(e.is_finite() && e >= 1e6 && e <= 2e6);
    }

    #[test]
    fn bler_examples() {
        let c = EsmConfig {
            beta_eesm: 2.0,
            bler_sinr50_db: 0.0,
            bler_slope: 1.0,
        };
        assert!((sinr_to_bler(1.0, &c) - 0.5).abs() < 1e-15);
        let two_db = 10f64.powf(0.2);
        let expected = 1.0 / (1.0 + 2f64.exp());
        assert!((sinr_to_bler(two_db, &c) - expected).abs() < 1e-12);
        assert!(sinr_to_bler(1e12, &c) < 1e-40);
        assert_eq!(sinr_to_bler(0.0, &c), 1.0);
    }

    #[test]
    fn per_examples() {
        for r in 0..=R_MAX {
            for m in [PerMode::AsWritten, PerMode::Residual] {
                assert_eq!(per_closed_form(0.0, r, m), 0.0);
                assert_eq!(per_closed_form(1.0, r, m), 1.0);
            }
        }
        assert!((per_closed_form(0.1, 1, PerMode::AsWritten) - 0.19).abs() < 1e-15);
        assert!((per_closed_form(0.1, 1, PerMode::Residual) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn harq_extremes() {
        let mut rng = stream(1, Stream::Harq);
        let h = HarqConfig::new(3).unwrap();
        assert_eq!(harq_episode(0.0, &h, &mut rng), (true, 1));
        assert_eq!(harq_episode(1.0, &h, &mut rng), (false, 4));
        assert!(HarqConfig::new(R_MAX + 1).is_err());
    }

    #[test]
    fn harq_half_bler_one_retx() {
        let mut rng = stream(11, Stream::Harq);
        let h = HarqConfig::new(1).unwrap();
        let n = 100_000;
        let ok = (0..n).filter(|_| harq_episode(0.5, &h, &mut rng).0).count();
        assert!((ok as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn timing_examples() {
        let t = update_timing(1, 0.125e-3, 0.0, TimingState::default()).unwrap();
        assert!((t.last_latency_s.unwrap() - 0.125e-3).abs() < 1e-18);
        let t = update_timing(4, 0.25e-3, 0.0, TimingState::default()).unwrap();
        assert!((t.last_latency_s.unwrap() - 1.0e-3).abs() < 1e-18);

        let mut t = TimingState::default();
        for _ in 0..50 {
            t = update_timing(2, 0.25e-3, 0.0, t).unwrap();
        }
        assert_eq!(t.jitter_s, 0.0);
        assert!(update_timing(0, 0.25e-3, 0.0, TimingState::default()).is_err());
    }

    #[test]
    fn jitter_is_offset_invariant() {
        let pattern = [1u32, 3, 2, 5, 1, 1, 4];
        let run = |pen: f64| {
            let mut t = TimingState::default();
            for &a in &pattern {
                t = update_timing(a, 0.25e-3, pen, t).unwrap();
            }
            t.jitter_s
        };
        assert!((run(0.0) - run(1e-3)).abs() < 1e-15);
    }
}
