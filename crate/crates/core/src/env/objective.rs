//! Scalar evaluation objective with constraint flags.

use serde::{Deserialize, Serialize};

use crate::propagation::{lin_to_db, watt_to_dbm};
use crate::scenario::ObjectiveWeights;

use super::KpiRecord;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub value: f64,
    pub mean_packet_loss: f64,
    pub mean_attempts: f64,
    pub mean_latency_s: f64,
    pub mean_jitter_s: f64,
    pub latency_violated: bool,
    pub jitter_violated: bool,
    pub notch_violated: bool,
    pub metric_bounds_violated: bool,
}

/// `Φ·P_L + β·R_a + μ·L + Ψ·J` over episode means. An empty sequence scores 0.
pub fn eval_objective(kpis: &[KpiRecord], w: &ObjectiveWeights) -> ObjectiveReport {
    if kpis.is_empty() {
        return ObjectiveReport::default();
    }
    let n = kpis.len() as f64;
    let mean = |f: &dyn Fn(&KpiRecord) -> f64| kpis.iter().map(f).sum::<f64>() / n;
    let p_l = mean(&|k| k.packet_loss_rate);
    let r_a = mean(&|k| k.attempts);
    let l = mean(&|k| k.latency_s);
    let j = mean(&|k| k.jitter_s);
    let sinr_db = lin_to_db(mean(&|k| k.sinr_eff).max(1e-30));
    let rsrp_dbm = watt_to_dbm(mean(&|k| k.rsrp_w).max(1e-30));
    let c = [sinr_db, rsrp_dbm];
    ObjectiveReport {
        value: w.phi * p_l + w.beta * r_a + w.mu * l + w.psi * j,
        mean_packet_loss: p_l,
        mean_attempts: r_a,
        mean_latency_s: l,
        mean_jitter_s: j,
        latency_violated: l > w.l_max_s,
        jitter_violated: j > w.j_max_s,
        notch_violated: kpis.iter().any(|k| k.notched_rbs > w.n_notch_max),
        metric_bounds_violated: (0..2).any(|i| c[i] < w.c_min[i] || c[i] > w.c_max[i]),
    }
}
