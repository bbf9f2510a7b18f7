//! Declarative scenario description and geometry sampling.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link_abstraction::EsmConfig;
use crate::propagation::{
    distance, los_probability, ArrayGeometry, Building, ClusterFadingConfig, PathLossConstants, ShadowFading,
};
use crate::radio_env::{
    BwpConfig, JammerActivity, JammerConfig, JammerStrategy, NoiseModel, RadioEnv, RadioParams, SpectrumPlan, Topology,
};
use crate::rng::{stream, SimRng, Stream};

/// How attackers are drawn when explicit positions are not given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JammerTemplate {
    pub antenna_gain_linear: f64,
    pub strategy: JammerStrategy,
    /// Per-attacker strategies, cycled by attacker index; `strategy` applies when empty.
    pub strategies: Vec<JammerStrategy>,
    pub activity: JammerActivity,
    /// Horizontal distance range from the serving cell.
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub height_m: f64,
    pub positions: Vec<[f64; 3]>,
}

impl Default for JammerTemplate {
    fn default() -> Self {
        Self {
            antenna_gain_linear: 1.0,
            strategy: JammerStrategy::Narrowband { rb_start: 4, rb_span: 8 },
            strategies: Vec::new(),
            activity: JammerActivity::Markov {
                p_on_given_on: 0.95,
                p_on_given_off: 0.05,
            },
            min_distance_m: 50.0,
            max_distance_m: 150.0,
            height_m: 20.0,
            positions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LosConfig {
    /// Distance scale of the `min(1, d0/d)` LoS probability.
    pub d0_m: f64,
    /// Overrides the random draw for every link when set.
    pub force: Option<bool>,
    pub buildings: Vec<Building>,
}

impl Default for LosConfig {
    fn default() -> Self {
        Self {
            d0_m: 50.0,
            force: None,
            buildings: Vec::new(),
        }
    }
}

/// Latency charged to every packet of a slot in which the configuration changed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconfigPenalties {
    pub bwp_switch_s: f64,
    pub beam_update_s: f64,
    pub beam_threshold_rad: f64,
    pub notch_change_s: f64,
}

impl Default for ReconfigPenalties {
    fn default() -> Self {
        Self {
            bwp_switch_s: 1e-3,
            beam_update_s: 0.125e-3,
            beam_threshold_rad: 5f64.to_radians(),
            notch_change_s: 0.25e-3,
        }
    }
}

/// Sample-level fluctuation of the sensing windows fed to the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub window_len: usize,
    pub desired_sigma_db: f64,
    pub jammer_sigma_db: f64,
    pub noise_sigma_db: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            window_len: 300,
            desired_sigma_db: 1.0,
            jammer_sigma_db: 3.0,
            noise_sigma_db: 0.5,
        }
    }
}

/// Weights and bounds of the scalar evaluation objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub phi: f64,
    pub beta: f64,
    pub mu: f64,
    pub psi: f64,
    /// Bounds on `[mean effective SINR (dB), mean RSRP (dBm)]`.
    pub c_min: [f64; 2],
    pub c_max: [f64; 2],
    pub l_max_s: f64,
    pub j_max_s: f64,
    pub n_notch_max: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            phi: 1.0,
            beta: 0.25,
            mu: 0.5,
            psi: 0.25,
            c_min: [-10.0, -140.0],
            c_max: [100.0, 0.0],
            l_max_s: 20e-3,
            j_max_s: 10e-3,
            n_notch_max: 8.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("phi", self.phi), ("beta", self.beta), ("mu", self.mu), ("psi", self.psi)] {
            if !(v >= 0.0) {
                return Err(Error::config(format!("scenario.objective.{k}"), "must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferenceLoad {
    pub base: f64,
    pub per_user: f64,
}

impl Default for InterferenceLoad {
    fn default() -> Self {
        Self {
            base: 0.5,
            per_user: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub label: String,
    pub seed: u64,
    pub area_m2: f64,
    pub sim_time_s: f64,
    pub episode_slots: usize,
    pub packets_per_slot: usize,

    pub gnb_count: usize,
    pub gnb_height_m: f64,
    pub gnb_tx_dbm_per_rb: f64,
    pub gnb_elements: usize,

    pub uav_count: usize,
    pub uav_height_m: f64,
    pub uav_tx_dbm_per_rb: f64,
    pub uav_elements: usize,
    pub uav_speed_mps: f64,
    pub uav_distance_m: f64,

    pub attacker_count: usize,
    pub attacker_power_dbm: f64,
    pub jammer: JammerTemplate,

    pub terrestrial_users: usize,
    pub interference: InterferenceLoad,

    pub los: LosConfig,
    pub path_loss: PathLossConstants,
    pub shadow: ShadowFading,
    pub fading: ClusterFadingConfig,
    pub noise: NoiseModel,
    pub spectrum: SpectrumPlan,
    pub bwps: Vec<BwpConfig>,
    pub esm: EsmConfig,
    pub notch_efficiency: f64,
    pub penalties: ReconfigPenalties,
    pub sensing: SensingConfig,
    pub objective: ObjectiveWeights,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            label: "UMi".into(),
            seed: 1,
            area_m2: 1e6,
            sim_time_s: 10.0,
            episode_slots: 200,
            packets_per_slot: 10,
            gnb_count: 2,
            gnb_height_m: 10.0,
            gnb_tx_dbm_per_rb: 4.0,
            gnb_elements: 4,
            uav_count: 1,
            uav_height_m: 30.0,
            uav_tx_dbm_per_rb: 2.0,
            uav_elements: 4,
            uav_speed_mps: 10.0,
            uav_distance_m: 100.0,
            attacker_count: 1,
            attacker_power_dbm: 5.0,
            jammer: JammerTemplate::default(),
            terrestrial_users: 0,
            interference: InterferenceLoad::default(),
            los: LosConfig::default(),
            path_loss: PathLossConstants::default(),
            shadow: ShadowFading::default(),
            fading: ClusterFadingConfig::default(),
            noise: NoiseModel::default(),
            spectrum: SpectrumPlan::default(),
            bwps: vec![BwpConfig::bwp0(), BwpConfig::bwp1()],
            esm: EsmConfig::default(),
            notch_efficiency: 0.7,
            penalties: ReconfigPenalties::default(),
            sensing: SensingConfig::default(),
            objective: ObjectiveWeights::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("scenario.{key}"), "must be a finite value > 0"))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        positive("area_m2", self.area_m2)?;
        positive("sim_time_s", self.sim_time_s)?;
        positive("gnb_height_m", self.gnb_height_m)?;
        positive("uav_height_m", self.uav_height_m)?;
        positive("uav_distance_m", self.uav_distance_m)?;
        if self.uav_speed_mps < 0.0 {
            return Err(Error::config("scenario.uav_speed_mps", "must be >= 0"));
        }
        if self.episode_slots < 1 {
            return Err(Error::config("scenario.episode_slots", "must be >= 1"));
        }
        if self.packets_per_slot < 1 {
            return Err(Error::config("scenario.packets_per_slot", "must be >= 1"));
        }
        if self.gnb_count < 1 {
            return Err(Error::config("scenario.gnb_count", "at least the serving cell is required"));
        }
        if self.uav_count != 1 {
            return Err(Error::config("scenario.uav_count", "exactly one UAV is modelled"));
        }
        if self.gnb_elements < 1 || self.uav_elements < 1 {
            return Err(Error::config("scenario.*_elements", "arrays need at least one element"));
        }
        if !(0.0..=1.0).contains(&self.notch_efficiency) {
            return Err(Error::config("scenario.notch_efficiency", "must lie in [0, 1]"));
        }
        let j = &self.jammer;
        if !(j.min_distance_m >= 0.0 && j.max_distance_m >= j.min_distance_m) {
            return Err(Error::config("scenario.jammer.max_distance_m", "must be >= min_distance_m >= 0"));
        }
        if !j.positions.is_empty() && j.positions.len() != self.attacker_count {
            return Err(Error::config(
                "scenario.jammer.positions",
                "must list one position per attacker when given",
            ));
        }
        for i in 0..self.jammer.strategies.len().max(1) {
            self.template_jammer(i, [0.0; 3]).validate()?;
        }
        self.path_loss.validate()?;
        self.shadow.validate()?;
        self.fading.validate()?;
        self.noise.validate()?;
        self.esm.validate()?;
        self.objective.validate()?;
        if self.bwps.len() != 2 {
            return Err(Error::config("scenario.bwps", "exactly two bandwidth parts are configured"));
        }
        for (i, b) in self.bwps.iter().enumerate() {
            b.validate()?;
            if b.index != i {
                return Err(Error::config("scenario.bwps", "entries must be ordered by index"));
            }
        }
        if self.sensing.window_len < 1 {
            return Err(Error::config("scenario.sensing.window_len", "must be >= 1"));
        }
        positive("los.d0_m", self.los.d0_m)?;
        Ok(())
    }

    pub fn interference_load(&self) -> f64 {
        (self.interference.base + self.interference.per_user * self.terrestrial_users as f64).clamp(0.0, 1.0)
    }

    fn template_jammer(&self, index: usize, position: [f64; 3]) -> JammerConfig {
        let strategies = &self.jammer.strategies;
        JammerConfig {
            position,
            tx_power_dbm: self.attacker_power_dbm,
            antenna_gain_linear: self.jammer.antenna_gain_linear,
            strategy: if strategies.is_empty() {
                self.jammer.strategy
            } else {
                strategies[index % strategies.len()]
            },
            activity: self.jammer.activity,
        }
    }

    pub fn radio_params(&self) -> RadioParams {
        let lambda = self.path_loss.wavelength_m();
        RadioParams {
            path_loss: self.path_loss,
            shadow: self.shadow,
            fading: self.fading,
            noise: self.noise,
            spectrum: self.spectrum,
            uav_tx_dbm_per_rb: self.uav_tx_dbm_per_rb,
            gnb_tx_dbm_per_rb: self.gnb_tx_dbm_per_rb,
            interference_load: self.interference_load(),
            uav_array: ArrayGeometry::for_count(self.uav_elements, lambda),
            gnb_array: ArrayGeometry::for_count(self.gnb_elements, lambda),
        }
    }

    fn draw_los(&self, a: [f64; 3], b: [f64; 3], rng: &mut SimRng) -> bool {
        let u: f64 = rng.random();
        if let Some(f) = self.los.force {
            return f;
        }
        let blocked = self.los.buildings.iter().any(|bld| bld.blocks(a, b));
        !blocked && u < los_probability(distance(a, b), self.los.d0_m)
    }

    /// Draw node positions, link states and persistent shadowing from `seed`.
    pub fn sample_topology(&self, seed: u64) -> Result<Topology> {
        self.validate()?;
        let mut rng = stream(seed, Stream::Geometry);
        let side = self.area_m2.sqrt();
        let uniform_xy = |rng: &mut SimRng, h: f64| [rng.random::<f64>() * side, rng.random::<f64>() * side, h];

        let serving_gnb = uniform_xy(&mut rng, self.gnb_height_m);
        let interfering_gnbs: Vec<[f64; 3]> =
            (1..self.gnb_count).map(|_| uniform_xy(&mut rng, self.gnb_height_m)).collect();
        let az = rng.random::<f64>() * 2.0 * PI;
        let uav = [
            serving_gnb[0] + self.uav_distance_m * az.cos(),
            serving_gnb[1] + self.uav_distance_m * az.sin(),
            self.uav_height_m,
        ];
        let jammers: Vec<JammerConfig> = (0..self.attacker_count)
            .map(|i| {
                let r = self.jammer.min_distance_m
                    + rng.random::<f64>() * (self.jammer.max_distance_m - self.jammer.min_distance_m);
                let a = rng.random::<f64>() * 2.0 * PI;
                let drawn = [
                    serving_gnb[0] + r * a.cos(),
                    serving_gnb[1] + r * a.sin(),
                    self.jammer.height_m,
                ];
                self.template_jammer(i, self.jammer.positions.get(i).copied().unwrap_or(drawn))
            })
            .collect();

        let uav_los = self.draw_los(uav, serving_gnb, &mut rng);
        let interferer_los: Vec<bool> =
            interfering_gnbs.iter().map(|p| self.draw_los(*p, serving_gnb, &mut rng)).collect();
        let jammer_los: Vec<bool> = jammers.iter().map(|j| self.draw_los(j.position, serving_gnb, &mut rng)).collect();

        let shadow = |los: bool, rng: &mut SimRng| {
            let s = self.shadow.sigma(los);
            if s > 0.0 {
                Normal::new(0.0, s).expect("finite sigma").sample(rng)
            } else {
                0.0
            }
        };
        let uav_shadow_db = shadow(uav_los, &mut rng);
        let interferer_shadow_db = interferer_los.iter().map(|&l| shadow(l, &mut rng)).collect();
        let jammer_shadow_db = jammer_los.iter().map(|&l| shadow(l, &mut rng)).collect();
        Ok(Topology {
            serving_gnb,
            interfering_gnbs,
            uav,
            jammers,
            uav_los,
            interferer_los,
            jammer_los,
            uav_shadow_db,
            interferer_shadow_db,
            jammer_shadow_db,
        })
    }

    pub fn radio_env(&self, seed: u64) -> Result<RadioEnv> {
        RadioEnv::new(self.sample_topology(seed)?, self.radio_params())
    }
}

/// UAV position after `t` seconds on a circle around the serving cell at the configured speed.
pub fn uav_position_at(start: [f64; 3], center: [f64; 3], speed_mps: f64, t: f64) -> [f64; 3] {
    let dx = start[0] - center[0];
    let dy = start[1] - center[1];
    let r = dx.hypot(dy);
    if r <= 0.0 || speed_mps == 0.0 {
        return start;
    }
    let a = dy.atan2(dx) + speed_mps * t / r;
    [center[0] + r * a.cos(), center[1] + r * a.sin(), start[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn topology_is_seeded() {
        let c = ScenarioConfig::default();
        assert_eq!(c.sample_topology(3).unwrap(), c.sample_topology(3).unwrap());
        assert_ne!(c.sample_topology(3).unwrap().uav, c.sample_topology(4).unwrap().uav);
    }

    #[test]
    fn uav_keeps_distance_and_jammers_stay_in_ring() {
        let c = ScenarioConfig::default();
        for s in 0..20 {
            let t = c.sample_topology(s).unwrap();
            let h = (t.uav[0] - t.serving_gnb[0]).hypot(t.uav[1] - t.serving_gnb[1]);
            assert!((h - 100.0).abs() < 1e-9);
            for j in &t.jammers {
                let r = (j.position[0] - t.serving_gnb[0]).hypot(j.position[1] - t.serving_gnb[1]);
                assert!((50.0..=150.0).contains(&r));
            }
            assert_eq!(t.interfering_gnbs.len(), 1);
        }
    }

    #[test]
    fn circular_motion_preserves_radius() {
        let p = uav_position_at([110.0, 0.0, 30.0], [10.0, 0.0, 10.0], 10.0, 1.0);
        assert!(((p[0] - 10.0).hypot(p[1]) - 100.0).abs() < 1e-9);
        assert!(p[1] > 0.0);
    }

    #[test]
    fn invalid_counts_rejected() {
        let mut c = ScenarioConfig::default();
        c.uav_count = 2;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.gnb_count = 0;
        assert!(c.validate().is_err());
    }
}
