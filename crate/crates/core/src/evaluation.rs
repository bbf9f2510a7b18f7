//! Policy replays on the environment and KPI summaries.

use serde::{Deserialize, Serialize};

use crate::env::{joint_action, random_action, JamEnv, KpiRecord, RecoveryAction};
use crate::error::{Error, Result};
use crate::linalg::mean;
use crate::marl::trainer::PolicyParameters;
use crate::rng::{keyed_stream, Stream};

#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Trained actors; `greedy` selects the mode of every head.
    Learned { params: &'a PolicyParameters, greedy: bool },
    /// Uniform over the raw action space.
    Random,
    /// The same action every slot.
    Fixed(RecoveryAction),
}

/// Play one episode and return its KPI trace.
pub fn replay(env: &mut JamEnv, policy: Policy<'_>, episode_seed: u64) -> Result<Vec<KpiRecord>> {
    let o = env.reset(episode_seed)?;
    let mut obs = vec![o.agent1, o.agent2];
    let mut rng = keyed_stream(episode_seed, Stream::Policy, u64::MAX);
    let mut kpis = Vec::with_capacity(env.config().episode_slots);
    loop {
        let action = match policy {
            Policy::Learned { params, greedy } => {
                if params.agents.len() != 2 {
                    return Err(Error::Shape("the environment has two agents".into()));
                }
                joint_action(&params.act(&obs, greedy, &mut rng)?, env.n_rb_per_bwp())?
            }
            Policy::Random => random_action(&mut rng, env.n_rb_per_bwp()),
            Policy::Fixed(a) => a,
        };
        let s = env.step(&action)?;
        obs = vec![s.obs.agent1, s.obs.agent2];
        kpis.push(s.kpi);
        if s.done {
            return Ok(kpis);
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub steps: usize,
    pub mean_packet_loss: f64,
    /// Fraction of steps with packet loss below `loss_threshold`.
    pub loss_below: f64,
    pub loss_threshold: f64,
    pub mean_latency_s: f64,
    pub median_latency_s: f64,
    pub p95_latency_s: f64,
    pub mean_reward: f64,
}

pub fn summarize(kpis: &[KpiRecord], loss_threshold: f64) -> EvalSummary {
    let loss: Vec<f64> = kpis.iter().map(|k| k.packet_loss_rate).collect();
    let mut lat: Vec<f64> = kpis.iter().map(|k| k.latency_s).collect();
    lat.sort_by(f64::total_cmp);
    let below = loss.iter().filter(|&&l| l < loss_threshold).count();
    EvalSummary {
        steps: kpis.len(),
        mean_packet_loss: mean(&loss),
        loss_below: if kpis.is_empty() { 0.0 } else { below as f64 / kpis.len() as f64 },
        loss_threshold,
        mean_latency_s: mean(&lat),
        median_latency_s: quantile(&lat, 0.5),
        p95_latency_s: quantile(&lat, 0.95),
        mean_reward: mean(
            &kpis
                .iter()
                .map(|k| 0.5 * (k.reward_agent1 + k.reward_agent2))
                .collect::<Vec<_>>(),
        ),
    }
}

/// Empirical CDF points `(x, F(x))` of a sample.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(ecdf(&[3.0, 1.0]), vec![(1.0, 0.5), (3.0, 1.0)]);
    }
}
