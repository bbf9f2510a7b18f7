//! Sample-level RSSI/SINR windows observed by the detector.

use rand_distr::{Distribution, StandardNormal};

use crate::propagation::{db_to_lin, lin_to_db, watt_to_dbm};
use crate::rng::SimRng;
use crate::scenario::SensingConfig;

/// Band-summed mean powers seen by the receiver during one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPowers {
    pub desired_w: f64,
    pub jam_w: f64,
    pub other_w: f64,
}

/// `window_len` RSSI (dBm) and SINR (dB) samples with log-normal fluctuation per component.
pub fn sense_window(p: &BandPowers, cfg: &SensingConfig, rng: &mut SimRng) -> (Vec<f64>, Vec<f64>) {
    let mut rssi = Vec::with_capacity(cfg.window_len);
    let mut sinr = Vec::with_capacity(cfg.window_len);
    for _ in 0..cfg.window_len {
        let mut jitter = |sigma: f64| {
            let z: f64 = StandardNormal.sample(rng);
            db_to_lin(sigma * z)
        };
        let d = p.desired_w * jitter(cfg.desired_sigma_db);
        let j = p.jam_w * jitter(cfg.jammer_sigma_db);
        let o = p.other_w * jitter(cfg.noise_sigma_db);
        rssi.push(watt_to_dbm(d + j + o));
        sinr.push(lin_to_db(d / (j + o)));
    }
    (rssi, sinr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn jamming_raises_rssi_and_lowers_sinr() {
        let cfg = SensingConfig::default();
        let quiet = BandPowers {
            desired_w: 1e-9,
            jam_w: 0.0,
            other_w: 1e-11,
        };
        let loud = BandPowers { jam_w: 1e-8, ..quiet };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (r0, s0) = sense_window(&quiet, &cfg, &mut stream(1, Stream::Sensing));
        let (r1, s1) = sense_window(&loud, &cfg, &mut stream(1, Stream::Sensing));
        assert_eq!(r0.len(), 300);
        assert!(mean(&r1) > mean(&r0) + 5.0);
        assert!(mean(&s1) < mean(&s0) - 10.0);
    }
}
