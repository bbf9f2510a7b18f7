//! Running min/max normalisation with metric-specific priors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PacketLoss,
    SinrDb,
    RssiDbm,
    RsrpDbm,
    LatencyS,
    JitterS,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::PacketLoss,
        Metric::SinrDb,
        Metric::RssiDbm,
        Metric::RsrpDbm,
        Metric::LatencyS,
        Metric::JitterS,
    ];

    pub fn prior(self) -> (f64, f64) {
        match self {
            Metric::PacketLoss => (0.0, 1.0),
            Metric::SinrDb => (-10.0, 40.0),
            Metric::RssiDbm | Metric::RsrpDbm => (-140.0, -40.0),
            Metric::LatencyS => (0.0, 20e-3),
            Metric::JitterS => (0.0, 10e-3),
        }
    }

    /// Lower is better for these; their normalised values are flipped.
    pub fn inverted(self) -> bool {
        matches!(self, Metric::LatencyS | Metric::JitterS)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTracker {
    pub bounds: [(f64, f64); 6],
}

impl Default for NormalizationTracker {
    fn default() -> Self {
        let mut bounds = [(0.0, 0.0); 6];
        for m in Metric::ALL {
            bounds[m.slot()] = m.prior();
        }
        Self { bounds }
    }
}

impl NormalizationTracker {
    pub fn bounds(&self, m: Metric) -> (f64, f64) {
        self.bounds[m.slot()]
    }
}

/// Widen the bounds with `value`, then return the clipped ratio (flipped for latency and jitter).
pub fn normalize_metric(tracker: &mut NormalizationTracker, metric: Metric, value: f64) -> f64 {
    let b = &mut tracker.bounds[metric.slot()];
    if value.is_finite() {
        b.0 = b.0.min(value);
        b.1 = b.1.max(value);
    }
    let span = b.1 - b.0;
    let r = if span > 0.0 && value.is_finite() {
        ((value - b.0) / span).clamp(0.0, 1.0)
    } else if value == f64::INFINITY {
        1.0
    } else {
        0.0
    };
    if metric.inverted() {
        1.0 - r
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let mut t = NormalizationTracker::default();
        t.bounds[Metric::SinrDb.slot()] = (0.0, 10.0);
        assert_eq!(normalize_metric(&mut t, Metric::SinrDb, 0.0), 0.0);
        assert_eq!(normalize_metric(&mut t, Metric::SinrDb, 10.0), 1.0);
        assert_eq!(normalize_metric(&mut t, Metric::SinrDb, 5.0), 0.5);
        let mut t = NormalizationTracker::default();
        assert_eq!(normalize_metric(&mut t, Metric::LatencyS, 0.0), 1.0);
        assert_eq!(normalize_metric(&mut t, Metric::LatencyS, 20e-3), 0.0);
    }

    #[test]
    fn first_sample_outside_prior_widens() {
        let mut t = NormalizationTracker::default();
        assert_eq!(normalize_metric(&mut t, Metric::SinrDb, 55.0), 1.0);
        assert_eq!(t.bounds(Metric::SinrDb), (-10.0, 55.0));
        assert_eq!(normalize_metric(&mut t, Metric::RssiDbm, -150.0), 0.0);
    }
}
