//! Per-agent weighted rewards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalised reward inputs, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizedMetrics {
    pub packet_delivery: f64,
    pub sinr: f64,
    pub rsrp: f64,
    pub latency: f64,
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentWeights {
    pub packet_delivery: f64,
    pub sinr: f64,
    pub rsrp: f64,
    pub latency: f64,
    pub jitter: f64,
}

impl Default for AgentWeights {
    fn default() -> Self {
        Self {
            packet_delivery: 0.0,
            sinr: 0.0,
            rsrp: 0.0,
            latency: 0.0,
            jitter: 0.0,
        }
    }
}

impl AgentWeights {
    fn as_array(&self) -> [f64; 5] {
        [self.packet_delivery, self.sinr, self.rsrp, self.latency, self.jitter]
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::config(key, "reward weights must be >= 0"));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(key, "reward weights must sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub agent1: AgentWeights,
    pub agent2: AgentWeights,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            agent1: AgentWeights {
                packet_delivery: 0.4,
                sinr: 0.2,
                latency: 0.2,
                jitter: 0.2,
                ..AgentWeights::default()
            },
            agent2: AgentWeights {
                packet_delivery: 0.4,
                sinr: 0.4,
                rsrp: 0.2,
                ..AgentWeights::default()
            },
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        self.agent1.validate("rewards.agent1")?;
        self.agent2.validate("rewards.agent2")
    }
}

fn weighted(m: &NormalizedMetrics, w: &AgentWeights) -> f64 {
    let v = [m.packet_delivery, m.sinr, m.rsrp, m.latency, m.jitter];
    let r = 2.0 * v.iter().zip(w.as_array()).map(|(a, b)| a * b).sum::<f64>() - 1.0;
    r.clamp(-1.0, 1.0)
}

pub fn compute_rewards(m: &NormalizedMetrics, w: &RewardWeights) -> Result<(f64, f64)> {
    for (name, v) in [
        ("packet_delivery", m.packet_delivery),
        ("sinr", m.sinr),
        ("rsrp", m.rsrp),
        ("latency", m.latency),
        ("jitter", m.jitter),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Contract(format!("normalised {name} = {v} lies outside [0, 1]")));
        }
    }
    Ok((weighted(m, &w.agent1), weighted(m, &w.agent2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(v: f64) -> NormalizedMetrics {
        NormalizedMetrics {
            packet_delivery: v,
            sinr: v,
            rsrp: v,
            latency: v,
            jitter: v,
        }
    }

    #[test]
    fn extremes() {
        let w = RewardWeights::default();
        assert_eq!(compute_rewards(&all(1.0), &w).unwrap(), (1.0, 1.0));
        assert_eq!(compute_rewards(&all(0.0), &w).unwrap(), (-1.0, -1.0));
    }

    #[test]
    fn agent2_example() {
        let m = NormalizedMetrics {
            packet_delivery: 1.0,
            sinr: 0.5,
            rsrp: 0.0,
            ..all(0.0)
        };
        let (_, r2) = compute_rewards(&m, &RewardWeights::default()).unwrap();
        assert!((r2 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn contract() {
        let mut m = all(0.5);
        m.sinr = 1.5;
        assert!(matches!(compute_rewards(&m, &RewardWeights::default()), Err(Error::Contract(_))));
        RewardWeights::default().validate().unwrap();
    }
}
