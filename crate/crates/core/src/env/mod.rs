//! The two-agent anti-jamming MDP.
//!
//! Agent 1 picks the notch window, bandwidth part and retransmission budget
//! from packet-level KPIs. Agent 2 steers both arrays from radio indicators.

pub mod action;
pub mod beam;
pub mod normalize;
pub mod objective;
pub mod reward;
pub mod sensing;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link_abstraction::{effective_sinr, harq_from_uniforms, sinr_to_bler, update_timing, TimingState, R_MAX};
use crate::marl::api::{AgentAction, AgentSpec, HeadSpec, MultiAgentEnv, Transition};
use crate::propagation::{lin_to_db, watt_to_dbm};
use crate::radio_env::{apply_notching, measure_indicators, reference_signal_powers, BwpConfig, PerRbRadioState, RadioEnv};
use crate::rng::{stream, SimRng, Stream};
use crate::scenario::{uav_position_at, ScenarioConfig};

pub use action::{decode_joint_action, RecoveryAction, BEAM_DIMS, NOTCH_HEADS};
pub use normalize::{normalize_metric, Metric, NormalizationTracker};
pub use objective::{eval_objective, ObjectiveReport};
pub use reward::{compute_rewards, NormalizedMetrics, RewardWeights};
pub use sensing::{sense_window, BandPowers};

/// Lower clamp on effective SINR before conversion to dB.
pub const SINR_FLOOR_DB: f64 = -30.0;

/// Frozen jamming classifier consumed in inference mode.
pub trait JamDetector: Send + Sync {
    /// `[l1, l2]` = benign and attack scores for one sensing window.
    fn logits(&self, rssi_dbm: &[f64], sinr_db: &[f64]) -> Result<[f64; 2]>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KpiRecord {
    pub slot_index: usize,
    pub packet_loss_rate: f64,
    /// Mean transmission attempts per packet in the slot.
    pub attempts: f64,
    /// Mean packet latency in the slot.
    pub latency_s: f64,
    pub jitter_s: f64,
    pub sinr_eff: f64,
    pub rssi_w: f64,
    pub rsrp_w: f64,
    pub reward_agent1: f64,
    pub reward_agent2: f64,
    pub l1: f64,
    pub l2: f64,
    pub notched_rbs: f64,
    pub bwp_idx: usize,
    pub r_max: u32,
    pub jam_in_band: bool,
}

/// One detector input window and what produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedWindow {
    pub rssi_dbm: Vec<f64>,
    pub sinr_db: Vec<f64>,
    pub powers: BandPowers,
    pub jam_in_band: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentObservation {
    pub agent1: Vec<f64>,
    pub agent2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: AgentObservation,
    pub rewards: (f64, f64),
    pub kpi: KpiRecord,
    pub done: bool,
}

/// Uniform random action over every head; used as the baseline policy.
pub fn random_action(rng: &mut SimRng, n_rb_per_bwp: [usize; 2]) -> RecoveryAction {
    let mut raw1 = [0i64; 5];
    for (slot, k) in raw1.iter_mut().zip(NOTCH_HEADS) {
        *slot = rng.random_range(0..k) as i64;
    }
    let mut raw2 = [0.0; 4];
    for x in raw2.iter_mut() {
        *x = rng.random::<f64>() * 2.0 - 1.0;
    }
    decode_joint_action(raw1, raw2, n_rb_per_bwp).expect("finite draws")
}

pub struct JamEnv {
    cfg: Arc<ScenarioConfig>,
    rewards: RewardWeights,
    radio: RadioEnv,
    uav_start: [f64; 3],
    detector: Option<Arc<dyn JamDetector>>,
    fading_rng: SimRng,
    harq_rng: SimRng,
    activity_rng: SimRng,
    sensing_rng: SimRng,
    jammer_active: Vec<bool>,
    slot: usize,
    time_s: f64,
    timing: TimingState,
    tracker: NormalizationTracker,
    prev_action: RecoveryAction,
    prev_state: PerRbRadioState,
    logits: [f64; 2],
    last_obs: Option<AgentObservation>,
    pub kpis: Vec<KpiRecord>,
}

impl JamEnv {
    /// Environment over the topology drawn from `topology_seed`.
    pub fn new(
        cfg: Arc<ScenarioConfig>,
        rewards: RewardWeights,
        topology_seed: u64,
        detector: Option<Arc<dyn JamDetector>>,
    ) -> Result<Self> {
        rewards.validate()?;
        let radio = cfg.radio_env(topology_seed)?;
        Ok(Self::with_radio(cfg, rewards, radio, detector))
    }

    pub fn with_radio(
        cfg: Arc<ScenarioConfig>,
        rewards: RewardWeights,
        radio: RadioEnv,
        detector: Option<Arc<dyn JamDetector>>,
    ) -> Self {
        let n = radio.topology.jammers.len();
        let n_rb = cfg.bwps[0].n_rb;
        Self {
            uav_start: radio.topology.uav,
            rewards,
            radio,
            detector,
            fading_rng: stream(0, Stream::Fading),
            harq_rng: stream(0, Stream::Harq),
            activity_rng: stream(0, Stream::JammerActivity),
            sensing_rng: stream(0, Stream::Sensing),
            jammer_active: vec![true; n],
            slot: 0,
            time_s: 0.0,
            timing: TimingState::default(),
            tracker: NormalizationTracker::default(),
            prev_action: RecoveryAction::default_for(n_rb),
            prev_state: PerRbRadioState::default(),
            logits: [0.0; 2],
            last_obs: None,
            kpis: Vec::new(),
            cfg,
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn radio(&self) -> &RadioEnv {
        &self.radio
    }

    pub fn has_detector(&self) -> bool {
        self.detector.is_some()
    }

    pub fn n_rb_per_bwp(&self) -> [usize; 2] {
        [self.cfg.bwps[0].n_rb, self.cfg.bwps[1].n_rb]
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn jammer_active(&self) -> &[bool] {
        &self.jammer_active
    }

    pub fn obs_dims(&self) -> [usize; 2] {
        let extra = if self.detector.is_some() { 2 } else { 0 };
        [3 + extra, 3 + extra]
    }

    /// Start an episode: reseed the per-episode streams, draw the initial
    /// jammer states and play one default-action slot for the first observation.
    pub fn reset(&mut self, episode_seed: u64) -> Result<AgentObservation> {
        self.fading_rng = stream(episode_seed, Stream::Fading);
        self.harq_rng = stream(episode_seed, Stream::Harq);
        self.activity_rng = stream(episode_seed, Stream::JammerActivity);
        self.sensing_rng = stream(episode_seed, Stream::Sensing);
        self.slot = 0;
        self.time_s = 0.0;
        self.timing = TimingState::default();
        self.tracker = NormalizationTracker::default();
        self.kpis.clear();
        self.logits = [0.0; 2];
        self.radio.topology.uav = self.uav_start;
        self.prev_action = RecoveryAction::default_for(self.cfg.bwps[0].n_rb);
        for (j, jam) in self.radio.topology.jammers.iter().enumerate() {
            let u: f64 = self.activity_rng.random();
            self.jammer_active[j] = u < jam.activity.stationary_on();
        }
        let warmup = self.prev_action;
        let out = self.run_slot(&warmup, false)?;
        Ok(out.obs)
    }

    pub fn step(&mut self, action: &RecoveryAction) -> Result<StepResult> {
        if self.last_obs.is_none() {
            return Err(Error::Contract("step called before reset".into()));
        }
        if self.slot >= self.cfg.episode_slots {
            return Err(Error::Contract("episode already finished".into()));
        }
        self.run_slot(action, true)
    }

    pub fn last_observation(&self) -> Option<&AgentObservation> {
        self.last_obs.as_ref()
    }

    /// Whether an active jammer overlaps the band the receiver last listened on.
    pub fn jam_in_band(&self, bwp: &BwpConfig) -> bool {
        let lo = bwp.low_edge_hz();
        let hi = lo + bwp.bandwidth_hz;
        self.radio.topology.jammers.iter().enumerate().any(|(j, jam)| {
            let (a, b) = self.cfg.spectrum.jammer_band(&jam.strategy, self.slot);
            self.jammer_active[j] && a < hi && b > lo
        })
    }

    /// Sensing window on the previous action's band under the current jammer state.
    pub fn sense(&mut self) -> Result<SensedWindow> {
        let a = self.prev_action;
        let bwp = self.cfg.bwps[a.bwp_idx];
        let jam = self.radio.jamming_powers(&bwp, &a.beams, self.slot, &self.jammer_active)?;
        let s = &self.prev_state;
        let powers = BandPowers {
            desired_w: s.p_uav.iter().sum(),
            jam_w: jam.iter().sum(),
            other_w: s.p_interf.iter().sum::<f64>() + s.p_noise.iter().sum::<f64>(),
        };
        let (rssi_dbm, sinr_db) = sense_window(&powers, &self.cfg.sensing, &mut self.sensing_rng);
        Ok(SensedWindow {
            rssi_dbm,
            sinr_db,
            powers,
            jam_in_band: self.jam_in_band(&bwp),
        })
    }

    fn reconfig_penalty(&self, a: &RecoveryAction, n_rb: usize) -> f64 {
        let p = &self.cfg.penalties;
        let prev = &self.prev_action;
        let mut pen = 0.0;
        if a.bwp_idx != prev.bwp_idx {
            pen += p.bwp_switch_s;
        }
        if a.beams.max_abs_diff(&prev.beams) > p.beam_threshold_rad {
            pen += p.beam_update_s;
        }
        let eff = self.cfg.notch_efficiency;
        let prev_n = self.cfg.bwps[prev.bwp_idx].n_rb;
        if a.notch_vector(n_rb, eff).n != prev.notch_vector(prev_n, eff).n {
            pen += p.notch_change_s;
        }
        pen
    }

    fn run_slot(&mut self, a: &RecoveryAction, charge_reconfig: bool) -> Result<StepResult> {
        let cfg = Arc::clone(&self.cfg);
        let bwp = cfg.bwps[a.bwp_idx];
        let ref_bw = cfg.bwps.iter().map(|b| b.bandwidth_hz).fold(0.0, f64::max);
        let slot_s = bwp.slot_duration_s();
        let penalty = if charge_reconfig {
            self.reconfig_penalty(a, bwp.n_rb)
        } else {
            0.0
        };

        self.radio.topology.uav = uav_position_at(self.uav_start, self.radio.topology.serving_gnb, cfg.uav_speed_mps, self.time_s);
        let jam_in_band = self.jam_in_band(&bwp);
        let state = self.radio.assemble(&bwp, &a.beams, self.slot, &self.jammer_active, &mut self.fading_rng)?;
        let notch = a.notch_vector(bwp.n_rb, cfg.notch_efficiency);
        let notched = apply_notching(&state, &notch)?;
        let scheduled: Vec<f64> = notched
            .iter()
            .zip(&notch.n)
            .filter(|(_, &n)| n < 1.0)
            .map(|(s, _)| *s)
            .collect();
        let sinr_eff = if scheduled.is_empty() {
            0.0
        } else {
            let occupied: f64 = notch.n.iter().map(|n| (1.0 - n) * bwp.rb_bandwidth_hz()).sum();
            effective_sinr(&scheduled, &cfg.esm)? * occupied / ref_bw
        };
        let bler = sinr_to_bler(sinr_eff, &cfg.esm);

        let n_pk = cfg.packets_per_slot;
        let mut lost = 0usize;
        let mut attempts_sum = 0u32;
        let mut latency_sum = 0.0;
        let mut uniforms = [0.0; R_MAX as usize + 1];
        for _ in 0..n_pk {
            for u in uniforms.iter_mut() {
                *u = self.harq_rng.random();
            }
            let (ok, att) = harq_from_uniforms(bler, a.r_max, &uniforms);
            if !ok {
                lost += 1;
            }
            attempts_sum += att;
            let t = std::mem::take(&mut self.timing);
            self.timing = update_timing(att, slot_s, penalty, t)?;
            latency_sum += self.timing.last_latency_s.unwrap_or(0.0);
        }
        let packet_loss = lost as f64 / n_pk as f64;
        let (rssi, rsrp) = measure_indicators(&state, &reference_signal_powers(&state))?;

        let tr = &mut self.tracker;
        let sinr_db = lin_to_db(sinr_eff.max(1e-300)).max(SINR_FLOOR_DB);
        let loss_n = normalize_metric(tr, Metric::PacketLoss, packet_loss);
        let sinr_n = normalize_metric(tr, Metric::SinrDb, sinr_db);
        let rssi_n = normalize_metric(tr, Metric::RssiDbm, watt_to_dbm(rssi));
        let rsrp_n = normalize_metric(tr, Metric::RsrpDbm, watt_to_dbm(rsrp));
        let lat_n = normalize_metric(tr, Metric::LatencyS, latency_sum / n_pk as f64);
        let jit_n = normalize_metric(tr, Metric::JitterS, self.timing.jitter_s);
        let metrics = NormalizedMetrics {
            packet_delivery: 1.0 - loss_n,
            sinr: sinr_n,
            rsrp: rsrp_n,
            latency: lat_n,
            jitter: jit_n,
        };
        let (r1, r2) = compute_rewards(&metrics, &self.rewards)?;

        let kpi = KpiRecord {
            slot_index: self.slot,
            packet_loss_rate: packet_loss,
            attempts: attempts_sum as f64 / n_pk as f64,
            latency_s: latency_sum / n_pk as f64,
            jitter_s: self.timing.jitter_s,
            sinr_eff,
            rssi_w: rssi,
            rsrp_w: rsrp,
            reward_agent1: r1,
            reward_agent2: r2,
            l1: self.logits[0],
            l2: self.logits[1],
            notched_rbs: notch.total(),
            bwp_idx: a.bwp_idx,
            r_max: a.r_max,
            jam_in_band,
        };

        self.prev_action = *a;
        self.prev_state = state;
        self.time_s += slot_s;
        if charge_reconfig {
            self.slot += 1;
            self.kpis.push(kpi);
        }
        for (j, jam) in self.radio.topology.jammers.iter().enumerate() {
            self.jammer_active[j] = jam.activity.next(self.jammer_active[j], &mut self.activity_rng);
        }
        if let Some(det) = self.detector.clone() {
            let w = self.sense()?;
            let l = det.logits(&w.rssi_dbm, &w.sinr_db)?;
            if !(l[0].is_finite() && l[1].is_finite()) {
                return Err(Error::Divergence("detector produced non-finite logits".into()));
            }
            self.logits = l;
        }
        let mut agent1 = vec![loss_n, lat_n, jit_n];
        let mut agent2 = vec![sinr_n, rssi_n, rsrp_n];
        if self.detector.is_some() {
            agent1.extend_from_slice(&self.logits);
            agent2.extend_from_slice(&self.logits);
        }
        let obs = AgentObservation { agent1, agent2 };
        self.last_obs = Some(obs.clone());
        Ok(StepResult {
            obs,
            rewards: (r1, r2),
            kpi,
            done: self.slot >= cfg.episode_slots,
        })
    }
}

/// Agent 1 gets the notch/BWP/HARQ categoricals, agent 2 the four beam angles.
pub fn agent_specs(obs_dims: [usize; 2]) -> Vec<AgentSpec> {
    vec![
        AgentSpec {
            obs_dim: obs_dims[0],
            heads: HeadSpec {
                categorical: NOTCH_HEADS.to_vec(),
                continuous: 0,
            },
        },
        AgentSpec {
            obs_dim: obs_dims[1],
            heads: HeadSpec {
                categorical: vec![],
                continuous: BEAM_DIMS,
            },
        },
    ]
}

/// Assemble a recovery action from the two agents' raw outputs.
pub fn joint_action(actions: &[AgentAction], n_rb_per_bwp: [usize; 2]) -> Result<RecoveryAction> {
    if actions.len() != 2 || actions[0].discrete.len() != 5 || actions[1].continuous.len() != 4 {
        return Err(Error::Shape("expected five categorical and four continuous outputs".into()));
    }
    let d = &actions[0].discrete;
    let c = &actions[1].continuous;
    decode_joint_action(
        [d[0] as i64, d[1] as i64, d[2] as i64, d[3] as i64, d[4] as i64],
        [c[0], c[1], c[2], c[3]],
        n_rb_per_bwp,
    )
}

impl MultiAgentEnv for JamEnv {
    fn agent_specs(&self) -> Vec<AgentSpec> {
        agent_specs(self.obs_dims())
    }

    fn reset(&mut self, episode_seed: u64) -> Result<Vec<Vec<f64>>> {
        let o = JamEnv::reset(self, episode_seed)?;
        Ok(vec![o.agent1, o.agent2])
    }

    fn step(&mut self, actions: &[AgentAction]) -> Result<Transition> {
        let a = joint_action(actions, self.n_rb_per_bwp())?;
        let s = JamEnv::step(self, &a)?;
        Ok(Transition {
            obs: vec![s.obs.agent1, s.obs.agent2],
            rewards: vec![s.rewards.0, s.rewards.1],
            done: s.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(cfg: ScenarioConfig) -> JamEnv {
        JamEnv::new(Arc::new(cfg), RewardWeights::default(), 5, None).unwrap()
    }

    #[test]
    fn full_notch_loses_everything() {
        let mut e = env(ScenarioConfig::default());
        e.reset(1).unwrap();
        let mut a = RecoveryAction::default_for(16);
        a.rb_num = 16;
        a.i_notch = 1;
        let s = e.step(&a).unwrap();
        assert_eq!(s.kpi.packet_loss_rate, 1.0);
        assert_eq!(s.kpi.sinr_eff, 0.0);
    }

    #[test]
    fn clean_strong_link_delivers() {
        let mut cfg = ScenarioConfig::default();
        cfg.attacker_count = 0;
        cfg.gnb_count = 1;
        cfg.los.force = Some(true);
        cfg.uav_tx_dbm_per_rb = 20.0;
        let mut e = env(cfg);
        e.reset(2).unwrap();
        let mut lost = 0.0;
        for _ in 0..200 {
            let beams = beam::los_beams(e.radio());
            let a = RecoveryAction {
                beams,
                r_max: 2,
                ..RecoveryAction::default_for(16)
            };
            let s = e.step(&a).unwrap();
            lost += s.kpi.packet_loss_rate;
            if s.done {
                break;
            }
        }
        assert!(lost / 200.0 < 0.01, "{lost}");
    }

    #[test]
    fn same_seed_same_stream() {
        let run = || {
            let mut e = env(ScenarioConfig::default());
            e.reset(9).unwrap();
            let mut rng = stream(3, Stream::Policy);
            for _ in 0..50 {
                let a = random_action(&mut rng, e.n_rb_per_bwp());
                e.step(&a).unwrap();
            }
            e.kpis.clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rewards_and_observations_bounded() {
        let mut e = env(ScenarioConfig::default());
        e.reset(4).unwrap();
        let mut rng = stream(4, Stream::Policy);
        loop {
            let a = random_action(&mut rng, e.n_rb_per_bwp());
            let s = e.step(&a).unwrap();
            assert!(s.obs.agent1.iter().chain(&s.obs.agent2).all(|x| (0.0..=1.0).contains(x)));
            assert!((-1.0..=1.0).contains(&s.rewards.0) && (-1.0..=1.0).contains(&s.rewards.1));
            assert!(s.kpi.attempts >= 1.0);
            if s.done {
                break;
            }
        }
        assert_eq!(e.kpis.len(), 200);
        assert!(e.step(&RecoveryAction::default_for(16)).is_err());
    }
}
