//! Per-resource-block power assembly, notched SINR, and RSSI/RSRP.
//!
//! The modelled link is the UAV uplink received at the serving small cell.
//! Jammers and neighbouring small cells are received through the serving
//! cell's beam, so the gNB beam trades desired gain against jammer leakage
//! while the UAV beam only shapes the desired path.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{
    array_gain, channel_realization, db_to_lin, direction_angles, distance, dbm_to_watt, path_loss, steering_vector,
    wrap_azimuth, ArrayGeometry, BeamAngles, ChannelRealization, ClusterFadingConfig, PathLossConstants, ShadowFading,
};
use crate::rng::SimRng;

pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub boltzmann: f64,
    pub temperature_k: f64,
    pub noise_figure_linear: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            boltzmann: BOLTZMANN,
            temperature_k: 290.0,
            noise_figure_linear: db_to_lin(7.0),
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_k > 0.0) {
            return Err(Error::config("temperature_k", "must be > 0"));
        }
        if !(self.noise_figure_linear >= 1.0) {
            return Err(Error::config("noise_figure_linear", "must be >= 1"));
        }
        if !(self.boltzmann > 0.0) {
            return Err(Error::config("boltzmann", "must be > 0"));
        }
        Ok(())
    }

    /// Thermal noise power `k_B·T·B·NF` in watts.
    pub fn power_w(&self, bandwidth_hz: f64) -> f64 {
        self.boltzmann * self.temperature_k * bandwidth_hz * self.noise_figure_linear
    }
}

/// Which part of the carrier a jammer occupies. Bands are expressed in
/// reference resource blocks counted from the low edge of the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JammerStrategy {
    Barrage,
    Narrowband { rb_start: usize, rb_span: usize },
    Sweep { rb_span: usize, period_slots: usize },
}

/// Slot-level on/off behaviour. `Markov` switches state at slot boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JammerActivity {
    Always,
    Markov { p_on_given_on: f64, p_on_given_off: f64 },
}

impl JammerActivity {
    pub fn next(&self, active: bool, rng: &mut SimRng) -> bool {
        let u: f64 = rng.random();
        match *self {
            JammerActivity::Always => true,
            JammerActivity::Markov {
                p_on_given_on,
                p_on_given_off,
            } => u < if active { p_on_given_on } else { p_on_given_off },
        }
    }

    pub fn stationary_on(&self) -> f64 {
        match *self {
            JammerActivity::Always => 1.0,
            JammerActivity::Markov {
                p_on_given_on,
                p_on_given_off,
            } => {
                let denom = 1.0 - p_on_given_on + p_on_given_off;
                if denom <= 0.0 {
                    1.0
                } else {
                    p_on_given_off / denom
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JammerConfig {
    pub position: [f64; 3],
    pub tx_power_dbm: f64,
    pub antenna_gain_linear: f64,
    pub strategy: JammerStrategy,
    pub activity: JammerActivity,
}

impl JammerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.antenna_gain_linear > 0.0) {
            return Err(Error::config("antenna_gain_linear", "must be > 0"));
        }
        match self.strategy {
            JammerStrategy::Narrowband { rb_span, .. } | JammerStrategy::Sweep { rb_span, .. } if rb_span < 1 => {
                return Err(Error::config("strategy.rb_span", "must be >= 1"))
            }
            JammerStrategy::Sweep { period_slots: 0, .. } => {
                return Err(Error::config("strategy.period_slots", "must be >= 1"))
            }
            _ => {}
        }
        if let JammerActivity::Markov {
            p_on_given_on,
            p_on_given_off,
        } = self.activity
        {
            if !(0.0..=1.0).contains(&p_on_given_on) || !(0.0..=1.0).contains(&p_on_given_off) {
                return Err(Error::config("activity", "transition probabilities must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BwpConfig {
    pub index: usize,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub numerology: u32,
    pub n_rb: usize,
}

impl BwpConfig {
    /// BWP 0: numerology 2 over 100 MHz.
    pub fn bwp0() -> Self {
        Self {
            index: 0,
            center_hz: 3.5e9,
            bandwidth_hz: 100e6,
            numerology: 2,
            n_rb: 16,
        }
    }

    /// BWP 1: numerology 3 over 50 MHz, adjacent above BWP 0.
    pub fn bwp1() -> Self {
        Self {
            index: 1,
            center_hz: 3.575e9,
            bandwidth_hz: 50e6,
            numerology: 3,
            n_rb: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.index {
            0 => (2, 100e6),
            1 => (3, 50e6),
            _ => return Err(Error::config("bwp.index", "must be 0 or 1")),
        };
        if self.numerology != expected.0 {
            return Err(Error::config(
                "bwp.numerology",
                format!("BWP {} uses numerology {}", self.index, expected.0),
            ));
        }
        if (self.bandwidth_hz - expected.1).abs() > 1e-3 {
            return Err(Error::config(
                "bwp.bandwidth_hz",
                format!("BWP {} spans {} Hz", self.index, expected.1),
            ));
        }
        if self.n_rb < 1 {
            return Err(Error::config("bwp.n_rb", "must be >= 1"));
        }
        Ok(())
    }

    pub fn slot_duration_s(&self) -> f64 {
        1e-3 / f64::from(1u32 << self.numerology)
    }

    pub fn rb_bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_rb as f64
    }

    pub fn low_edge_hz(&self) -> f64 {
        self.center_hz - self.bandwidth_hz / 2.0
    }

    /// Frequency span `[lo, hi)` of resource block `k`.
    pub fn rb_span_hz(&self, k: usize) -> (f64, f64) {
        let lo = self.low_edge_hz() + k as f64 * self.rb_bandwidth_hz();
        (lo, lo + self.rb_bandwidth_hz())
    }
}

/// Absolute frequency grid on which jammer bands are defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumPlan {
    pub carrier_low_hz: f64,
    pub ref_rb_hz: f64,
    pub carrier_rbs: usize,
}

impl Default for SpectrumPlan {
    fn default() -> Self {
        // 3.45–3.60 GHz in 6.25 MHz blocks, covering both default BWPs.
        Self {
            carrier_low_hz: 3.45e9,
            ref_rb_hz: 6.25e6,
            carrier_rbs: 24,
        }
    }
}

impl SpectrumPlan {
    /// Occupied band `[lo, hi)` of a jammer at `slot`.
    pub fn jammer_band(&self, strategy: &JammerStrategy, slot: usize) -> (f64, f64) {
        let (start, span) = match *strategy {
            JammerStrategy::Barrage => (0, self.carrier_rbs),
            JammerStrategy::Narrowband { rb_start, rb_span } => (rb_start, rb_span),
            JammerStrategy::Sweep { rb_span, period_slots } => {
                let positions = self.carrier_rbs.saturating_sub(rb_span) + 1;
                ((slot / period_slots.max(1)) % positions.max(1), rb_span)
            }
        };
        let lo = self.carrier_low_hz + start as f64 * self.ref_rb_hz;
        (lo, lo + span as f64 * self.ref_rb_hz)
    }
}

/// Resolved positions and link states for one geometry draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub serving_gnb: [f64; 3],
    pub interfering_gnbs: Vec<[f64; 3]>,
    pub uav: [f64; 3],
    pub jammers: Vec<JammerConfig>,
    pub uav_los: bool,
    pub interferer_los: Vec<bool>,
    pub jammer_los: Vec<bool>,
    /// Large-scale shadowing per link (dB), persistent over the geometry.
    pub uav_shadow_db: f64,
    pub interferer_shadow_db: Vec<f64>,
    pub jammer_shadow_db: Vec<f64>,
}

/// Static radio parameters shared by every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams {
    pub path_loss: PathLossConstants,
    pub shadow: ShadowFading,
    pub fading: ClusterFadingConfig,
    pub noise: NoiseModel,
    pub spectrum: SpectrumPlan,
    pub uav_tx_dbm_per_rb: f64,
    pub gnb_tx_dbm_per_rb: f64,
    pub interference_load: f64,
    pub uav_array: ArrayGeometry,
    pub gnb_array: ArrayGeometry,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerRbRadioState {
    pub p_uav: Vec<f64>,
    pub p_jam: Vec<f64>,
    pub p_interf: Vec<f64>,
    pub p_noise: Vec<f64>,
    pub sinr: Vec<f64>,
}

impl PerRbRadioState {
    pub fn n_rb(&self) -> usize {
        self.p_uav.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.p_uav.len();
        if self.p_jam.len() != n || self.p_interf.len() != n || self.p_noise.len() != n {
            return Err(Error::Shape("per-RB vectors differ in length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NotchVector {
    pub n: Vec<f64>,
    pub efficiency: f64,
}

impl NotchVector {
    pub fn none(n_rb: usize, efficiency: f64) -> Self {
        Self {
            n: vec![0.0; n_rb],
            efficiency,
        }
    }

    /// Expand the `[rb_start, rb_num, i_notch]` triple, clamping the window into `[0, n_rb)`.
    pub fn from_triple(n_rb: usize, rb_start: usize, rb_num: usize, i_notch: u8, efficiency: f64) -> Self {
        let mut v = Self::none(n_rb, efficiency);
        if n_rb == 0 {
            return v;
        }
        let start = rb_start.min(n_rb - 1);
        let end = (start + rb_num).min(n_rb);
        for k in start..end {
            v.n[k] = f64::from(i_notch.min(1));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Domain("notch efficiency must lie in [0, 1]".into()));
        }
        if self.n.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Domain("notch entries must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.n.iter().sum()
    }
}

/// Instantiates slots for a fixed topology.
#[derive(Debug, Clone)]
pub struct RadioEnv {
    pub topology: Topology,
    pub params: RadioParams,
}

fn perturb(dir: (f64, f64), offset: (f64, f64)) -> (f64, f64) {
    ((dir.0 + offset.0).clamp(0.0, PI), wrap_azimuth(dir.1 + offset.1))
}

impl RadioEnv {
    pub fn new(topology: Topology, params: RadioParams) -> Result<Self> {
        params.path_loss.validate()?;
        params.noise.validate()?;
        for j in &topology.jammers {
            j.validate()?;
        }
        Ok(Self { topology, params })
    }

    pub fn uav_weights(&self, beams: &BeamAngles) -> Vec<Complex64> {
        steering_vector(beams.theta_uav, beams.phi_uav, &self.params.uav_array)
    }

    pub fn gnb_weights(&self, beams: &BeamAngles) -> Vec<Complex64> {
        steering_vector(beams.theta_gnb, beams.phi_gnb, &self.params.gnb_array)
    }

    /// Cluster-averaged product of UAV and gNB array gains on the desired path.
    pub fn desired_gain(&self, beams: &BeamAngles, clusters: &[crate::propagation::Cluster]) -> f64 {
        let t = &self.topology;
        let w_u = self.uav_weights(beams);
        let w_g = self.gnb_weights(beams);
        let dep = direction_angles(t.uav, t.serving_gnb);
        let arr = direction_angles(t.serving_gnb, t.uav);
        clusters
            .iter()
            .map(|c| {
                let d = perturb(dep, c.aod_offset);
                let a = perturb(arr, c.aoa_offset);
                c.power * array_gain(&w_u, d.0, d.1, &self.params.uav_array) * array_gain(&w_g, a.0, a.1, &self.params.gnb_array)
            })
            .sum()
    }

    /// gNB receive gain toward a point.
    pub fn gnb_gain_toward(&self, beams: &BeamAngles, point: [f64; 3]) -> f64 {
        let w_g = self.gnb_weights(beams);
        let (th, ph) = direction_angles(self.topology.serving_gnb, point);
        array_gain(&w_g, th, ph, &self.params.gnb_array)
    }

    /// Jamming power per RB of `bwp`, summed over the jammers flagged active.
    pub fn jamming_powers(&self, bwp: &BwpConfig, beams: &BeamAngles, slot: usize, active: &[bool]) -> Result<Vec<f64>> {
        let t = &self.topology;
        let mut p_jam = vec![0.0; bwp.n_rb];
        for (j, jam) in t.jammers.iter().enumerate() {
            if !active.get(j).copied().unwrap_or(true) {
                continue;
            }
            let d = distance(jam.position, t.serving_gnb);
            let large_scale = path_loss(d, t.jammer_los[j], &self.params.path_loss)? * db_to_lin(t.jammer_shadow_db[j]);
            let g_rx = self.gnb_gain_toward(beams, jam.position);
            let per_ref_rb = dbm_to_watt(jam.tx_power_dbm) * jam.antenna_gain_linear * large_scale * g_rx;
            let (lo, hi) = self.params.spectrum.jammer_band(&jam.strategy, slot);
            for (k, p) in p_jam.iter_mut().enumerate() {
                let (rlo, rhi) = bwp.rb_span_hz(k);
                let overlap = (hi.min(rhi) - lo.max(rlo)).max(0.0);
                *p += per_ref_rb * overlap / self.params.spectrum.ref_rb_hz;
            }
        }
        Ok(p_jam)
    }

    /// Desired, jamming, interference and noise powers per RB for one slot.
    pub fn assemble(
        &self,
        bwp: &BwpConfig,
        beams: &BeamAngles,
        slot: usize,
        jammer_active: &[bool],
        rng: &mut SimRng,
    ) -> Result<PerRbRadioState> {
        let t = &self.topology;
        let p = &self.params;
        let n = bwp.n_rb;
        let rb_hz = bwp.rb_bandwidth_hz();
        let no_shadow = ShadowFading {
            sigma_los_db: 0.0,
            sigma_nlos_db: 0.0,
        };

        let desired: ChannelRealization = channel_realization(&p.fading, &no_shadow, t.uav_los, n, rb_hz, rng);
        let g_total = self.desired_gain(beams, &desired.clusters);
        let d = distance(t.uav, t.serving_gnb);
        let large = path_loss(d, t.uav_los, &p.path_loss)? * db_to_lin(t.uav_shadow_db);
        let tx = dbm_to_watt(p.uav_tx_dbm_per_rb);
        let p_uav: Vec<f64> = desired.per_rb.iter().map(|f| tx * g_total * large * f).collect();

        let mut p_interf = vec![0.0; n];
        for (i, pos) in t.interfering_gnbs.iter().enumerate() {
            let fad = channel_realization(&p.fading, &no_shadow, t.interferer_los[i], n, rb_hz, rng);
            let d = distance(*pos, t.serving_gnb);
            let large = path_loss(d, t.interferer_los[i], &p.path_loss)? * db_to_lin(t.interferer_shadow_db[i]);
            let g = self.gnb_gain_toward(beams, *pos);
            let tx = dbm_to_watt(p.gnb_tx_dbm_per_rb) * p.interference_load;
            for (k, slot_p) in p_interf.iter_mut().enumerate() {
                *slot_p += tx * g * large * fad.per_rb[k];
            }
        }

        let p_jam = self.jamming_powers(bwp, beams, slot, jammer_active)?;
        let p_noise = vec![p.noise.power_w(rb_hz); n];
        let mut state = PerRbRadioState {
            p_uav,
            p_jam,
            p_interf,
            p_noise,
            sinr: Vec::new(),
        };
        state.sinr = sinr_per_rb(&state)?;
        Ok(state)
    }
}

/// Per-RB SINR `p_uav / (p_jam + p_interf + p_noise)`.
pub fn sinr_per_rb(state: &PerRbRadioState) -> Result<Vec<f64>> {
    state.check()?;
    (0..state.n_rb())
        .map(|k| {
            let denom = state.p_jam[k] + state.p_interf[k] + state.p_noise[k];
            if denom > 0.0 {
                Ok(state.p_uav[k] / denom)
            } else {
                Err(Error::Domain(format!("zero SINR denominator at RB {k}")))
            }
        })
        .collect()
}

/// Notched SINR `(1−n_k)p_uav / ((1−η·n_k)p_jam + p_interf + p_noise)`.
pub fn apply_notching(state: &PerRbRadioState, notch: &NotchVector) -> Result<Vec<f64>> {
    state.check()?;
    notch.validate()?;
    if notch.n.len() != state.n_rb() {
        return Err(Error::Shape(format!(
            "notch vector has {} entries for {} RBs",
            notch.n.len(),
            state.n_rb()
        )));
    }
    (0..state.n_rb())
        .map(|k| {
            let nk = notch.n[k];
            let denom = (1.0 - notch.efficiency * nk) * state.p_jam[k] + state.p_interf[k] + state.p_noise[k];
            if denom > 0.0 {
                Ok((1.0 - nk) * state.p_uav[k] / denom)
            } else if nk >= 1.0 {
                Ok(0.0)
            } else {
                Err(Error::Domain(format!("zero SINR denominator at RB {k}")))
            }
        })
        .collect()
}

/// RSSI summed over the band and RSRP averaged over reference elements (both in watts).
pub fn measure_indicators(state: &PerRbRadioState, ref_signal_powers: &[f64]) -> Result<(f64, f64)> {
    state.check()?;
    if ref_signal_powers.is_empty() {
        return Err(Error::Domain("RSRP needs at least one reference element".into()));
    }
    let rssi = (0..state.n_rb())
        .map(|k| state.p_uav[k] + state.p_jam[k] + state.p_interf[k] + state.p_noise[k])
        .sum();
    let rsrp = ref_signal_powers.iter().sum::<f64>() / ref_signal_powers.len() as f64;
    Ok((rssi, rsrp))
}

/// Subcarriers per resource block; one reference element per RB carries `p_uav / 12`.
pub const SUBCARRIERS_PER_RB: f64 = 12.0;

pub fn reference_signal_powers(state: &PerRbRadioState) -> Vec<f64> {
    state.p_uav.iter().map(|p| p / SUBCARRIERS_PER_RB).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(p_uav: Vec<f64>, p_jam: Vec<f64>, p_interf: Vec<f64>, p_noise: Vec<f64>) -> PerRbRadioState {
        PerRbRadioState {
            p_uav,
            p_jam,
            p_interf,
            p_noise,
            sinr: vec![],
        }
    }

    #[test]
    fn thermal_noise_closed_form() {
        let nm = NoiseModel {
            boltzmann: BOLTZMANN,
            temperature_k: 290.0,
            noise_figure_linear: 1.0,
        };
        let p = nm.power_w(180e3);
        let expected = 1.380_649e-23 * 290.0 * 180e3;
        assert!(((p - expected) / expected).abs() < 1e-12);
        assert!((p - 7.21e-16).abs() / 7.21e-16 < 1e-3);
        assert!((crate::propagation::watt_to_dbm(p) + 121.4).abs() < 0.05);
    }

    #[test]
    fn sinr_examples() {
        let s = state(vec![10.0], vec![0.0], vec![0.0], vec![2.0]);
        assert_eq!(sinr_per_rb(&s).unwrap(), vec![5.0]);
        let s = state(vec![10.0], vec![3.0], vec![5.0], vec![2.0]);
        assert_eq!(sinr_per_rb(&s).unwrap(), vec![1.0]);
        let doubled = state(vec![10.0], vec![6.0], vec![5.0], vec![2.0]);
        assert!(sinr_per_rb(&doubled).unwrap()[0] < 1.0);
        let zero = state(vec![1.0], vec![0.0], vec![0.0], vec![0.0]);
        assert!(matches!(sinr_per_rb(&zero), Err(Error::Domain(_))));
    }

    #[test]
    fn notching_examples() {
        let s = state(vec![1.0, 2.0], vec![1.0, 0.5], vec![0.0, 0.1], vec![0.1, 0.1]);
        let none = NotchVector::none(2, 0.7);
        assert_eq!(apply_notching(&s, &none).unwrap(), sinr_per_rb(&s).unwrap());

        let full = NotchVector {
            n: vec![1.0, 1.0],
            efficiency: 0.3,
        };
        assert_eq!(apply_notching(&s, &full).unwrap(), vec![0.0, 0.0]);

        let s = state(vec![1.0], vec![1.0], vec![0.0], vec![0.1]);
        let half = NotchVector {
            n: vec![0.5],
            efficiency: 1.0,
        };
        let got = apply_notching(&s, &half).unwrap()[0];
        assert!((got - 0.5 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn triple_expansion_clamps() {
        let v = NotchVector::from_triple(8, 6, 5, 1, 1.0);
        assert_eq!(v.n, vec![0., 0., 0., 0., 0., 0., 1., 1.]);
        let v = NotchVector::from_triple(8, 20, 3, 1, 1.0);
        assert_eq!(v.n, vec![0., 0., 0., 0., 0., 0., 0., 1.]);
        let v = NotchVector::from_triple(8, 2, 3, 0, 1.0);
        assert_eq!(v.total(), 0.0);
    }

    #[test]
    fn indicator_examples() {
        let s = state(vec![1.0, 2.0], vec![0.5, 0.0], vec![0.0, 0.0], vec![0.1, 0.1]);
        let (rssi, rsrp) = measure_indicators(&s, &[0.3, 0.3, 0.3]).unwrap();
        assert!((rssi - 3.7).abs() < 1e-12);
        assert!((rsrp - 0.3).abs() < 1e-15);
        let single = state(vec![1.0], vec![0.25], vec![0.5], vec![0.125]);
        assert_eq!(measure_indicators(&single, &[1.0]).unwrap().0, 1.875);
        assert!(measure_indicators(&single, &[]).is_err());
    }

    #[test]
    fn bwp_slots() {
        assert_eq!(BwpConfig::bwp0().slot_duration_s(), 0.25e-3);
        assert_eq!(BwpConfig::bwp1().slot_duration_s(), 0.125e-3);
        BwpConfig::bwp0().validate().unwrap();
        let mut bad = BwpConfig::bwp1();
        bad.numerology = 2;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_band_moves_and_wraps() {
        let plan = SpectrumPlan::default();
        let s = JammerStrategy::Sweep {
            rb_span: 4,
            period_slots: 2,
        };
        assert_eq!(plan.jammer_band(&s, 0), plan.jammer_band(&s, 1));
        assert!(plan.jammer_band(&s, 2).0 > plan.jammer_band(&s, 0).0);
        let positions = plan.carrier_rbs - 4 + 1;
        assert_eq!(plan.jammer_band(&s, 0), plan.jammer_band(&s, 2 * positions));
    }
}
