//! Deterministic SINR probe for comparing beam settings, and an exhaustive angle search.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::Result;
use crate::link_abstraction::{effective_sinr, EsmConfig};
use crate::propagation::{
    channel_realization, db_to_lin, direction_angles, distance, dbm_to_watt, lin_to_db, path_loss, steering_vector,
    wrap_azimuth, ArrayGeometry, BeamAngles, ShadowFading,
};
use crate::radio_env::{BwpConfig, RadioEnv};
use crate::rng::SimRng;

/// Beams pointed along the direct UAV–gNB path at both ends.
pub fn los_beams(radio: &RadioEnv) -> BeamAngles {
    let t = &radio.topology;
    let (tu, pu) = direction_angles(t.uav, t.serving_gnb);
    let (tg, pg) = direction_angles(t.serving_gnb, t.uav);
    BeamAngles::new(tu, pu, tg, pg)
}

fn dot(a: &[Complex64], w: &[Complex64]) -> f64 {
    let s: Complex64 = a.iter().zip(w).map(|(x, y)| x.conj() * y).sum();
    a.len() as f64 * s.norm_sqr()
}

struct Draw {
    cluster_power: Vec<f64>,
    a_dep: Vec<Vec<Complex64>>,
    a_arr: Vec<Vec<Complex64>>,
    desired_rb: Vec<f64>,
    interf_rb: Vec<Vec<f64>>,
}

/// Mean effective SINR over a frozen set of fading draws with all jammers on.
pub struct SinrProbe {
    uav_array: ArrayGeometry,
    gnb_array: ArrayGeometry,
    draws: Vec<Draw>,
    desired_scale: f64,
    jam_rb: Vec<(Vec<Complex64>, Vec<f64>)>,
    interf_dirs: Vec<Vec<Complex64>>,
    noise_rb: f64,
    payload_scale: f64,
    esm: EsmConfig,
}

fn perturb(dir: (f64, f64), off: (f64, f64)) -> (f64, f64) {
    ((dir.0 + off.0).clamp(0.0, PI), wrap_azimuth(dir.1 + off.1))
}

impl SinrProbe {
    pub fn new(radio: &RadioEnv, bwp: &BwpConfig, ref_bw_hz: f64, esm: EsmConfig, n_draws: usize, rng: &mut SimRng) -> Result<Self> {
        let t = &radio.topology;
        let p = &radio.params;
        let no_shadow = ShadowFading {
            sigma_los_db: 0.0,
            sigma_nlos_db: 0.0,
        };
        let rb_hz = bwp.rb_bandwidth_hz();
        let dep = direction_angles(t.uav, t.serving_gnb);
        let arr = direction_angles(t.serving_gnb, t.uav);
        let mut draws = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            let d = channel_realization(&p.fading, &no_shadow, t.uav_los, bwp.n_rb, rb_hz, rng);
            let interf_rb = t
                .interferer_los
                .iter()
                .map(|&los| channel_realization(&p.fading, &no_shadow, los, bwp.n_rb, rb_hz, rng).per_rb)
                .collect();
            draws.push(Draw {
                cluster_power: d.clusters.iter().map(|c| c.power).collect(),
                a_dep: d
                    .clusters
                    .iter()
                    .map(|c| {
                        let x = perturb(dep, c.aod_offset);
                        steering_vector(x.0, x.1, &p.uav_array)
                    })
                    .collect(),
                a_arr: d
                    .clusters
                    .iter()
                    .map(|c| {
                        let x = perturb(arr, c.aoa_offset);
                        steering_vector(x.0, x.1, &p.gnb_array)
                    })
                    .collect(),
                desired_rb: d.per_rb,
                interf_rb,
            });
        }
        let large = path_loss(distance(t.uav, t.serving_gnb), t.uav_los, &p.path_loss)? * db_to_lin(t.uav_shadow_db);
        let iso = BeamAngles::new(0.0, 0.0, 0.0, 0.0);
        let mut jam_rb = Vec::new();
        for (j, jam) in t.jammers.iter().enumerate() {
            let mut only = vec![false; t.jammers.len()];
            only[j] = true;
            // Jammer powers without receive gain: evaluate with a single-element view.
            let mut single = radio.clone();
            single.params.gnb_array = ArrayGeometry::for_count(1, p.gnb_array.wavelength_m);
            let per_rb = single.jamming_powers(bwp, &iso, 0, &only)?;
            let (th, ph) = direction_angles(t.serving_gnb, jam.position);
            jam_rb.push((steering_vector(th, ph, &p.gnb_array), per_rb));
        }
        let interf_dirs = t
            .interfering_gnbs
            .iter()
            .map(|pos| {
                let (th, ph) = direction_angles(t.serving_gnb, *pos);
                steering_vector(th, ph, &p.gnb_array)
            })
            .collect();
        let interf_scale: Vec<f64> = t
            .interfering_gnbs
            .iter()
            .enumerate()
            .map(|(i, pos)| {
                let l = path_loss(distance(*pos, t.serving_gnb), t.interferer_los[i], &p.path_loss).unwrap_or(0.0);
                dbm_to_watt(p.gnb_tx_dbm_per_rb) * p.interference_load * l * db_to_lin(t.interferer_shadow_db[i])
            })
            .collect();
        for d in draws.iter_mut() {
            for (i, rb) in d.interf_rb.iter_mut().enumerate() {
                rb.iter_mut().for_each(|x| *x *= interf_scale[i]);
            }
        }
        Ok(Self {
            uav_array: p.uav_array.clone(),
            gnb_array: p.gnb_array.clone(),
            draws,
            desired_scale: dbm_to_watt(p.uav_tx_dbm_per_rb) * large,
            jam_rb,
            interf_dirs,
            noise_rb: p.noise.power_w(rb_hz),
            payload_scale: bwp.bandwidth_hz / ref_bw_hz,
            esm,
        })
    }

    fn mean_with(&self, g_desired: impl Fn(&Draw) -> f64, g_jam: &[f64], g_int: &[f64]) -> f64 {
        let mut total = 0.0;
        let n_rb = self.draws.first().map_or(0, |d| d.desired_rb.len());
        let mut sinr = vec![0.0; n_rb];
        for d in &self.draws {
            let gd = g_desired(d);
            for (k, s) in sinr.iter_mut().enumerate() {
                let mut den = self.noise_rb;
                for (j, (_, rb)) in self.jam_rb.iter().enumerate() {
                    den += rb[k] * g_jam[j];
                }
                for (i, rb) in d.interf_rb.iter().enumerate() {
                    den += rb[k] * g_int[i];
                }
                *s = self.desired_scale * gd * d.desired_rb[k] / den;
            }
            total += effective_sinr(&sinr, &self.esm).unwrap_or(0.0) * self.payload_scale;
        }
        total / self.draws.len().max(1) as f64
    }

    /// Mean payload-scaled effective SINR (linear) for the given beams.
    pub fn mean_sinr(&self, beams: &BeamAngles) -> f64 {
        let w_u = steering_vector(beams.theta_uav, beams.phi_uav, &self.uav_array);
        let w_g = steering_vector(beams.theta_gnb, beams.phi_gnb, &self.gnb_array);
        self.mean_sinr_weights(&w_u, &w_g)
    }

    fn mean_sinr_weights(&self, w_u: &[Complex64], w_g: &[Complex64]) -> f64 {
        let g_jam: Vec<f64> = self.jam_rb.iter().map(|(a, _)| dot(a, w_g)).collect();
        let g_int: Vec<f64> = self.interf_dirs.iter().map(|a| dot(a, w_g)).collect();
        self.mean_with(
            |d| {
                d.cluster_power
                    .iter()
                    .enumerate()
                    .map(|(c, pw)| pw * dot(&d.a_dep[c], w_u) * dot(&d.a_arr[c], w_g))
                    .sum()
            },
            &g_jam,
            &g_int,
        )
    }

    /// Same draws with single-element arrays at both ends.
    pub fn isotropic_sinr(&self) -> f64 {
        let g_jam = vec![1.0; self.jam_rb.len()];
        let g_int = vec![1.0; self.interf_dirs.len()];
        self.mean_with(|d| d.cluster_power.iter().sum(), &g_jam, &g_int)
    }

    /// Gain of `beams` over the isotropic baseline in dB.
    pub fn gain_db(&self, beams: &BeamAngles) -> f64 {
        lin_to_db(self.mean_sinr(beams).max(1e-300)) - lin_to_db(self.isotropic_sinr().max(1e-300))
    }
}

/// Exhaustive search over a `step_deg` grid, alternating between the gNB and
/// UAV angle pairs (each pair searched in full while the other is held) from the LoS pointing.
pub fn grid_search(probe: &SinrProbe, start: BeamAngles, step_deg: f64, rounds: usize) -> (BeamAngles, f64) {
    let step = step_deg.to_radians();
    let n_theta = (PI / step).round() as usize + 1;
    let n_phi = (2.0 * PI / step).round() as usize;
    let grid: Vec<(f64, f64, Vec<Complex64>, Vec<Complex64>)> = (0..n_theta)
        .flat_map(|i| (0..n_phi).map(move |j| ((i as f64 * step).min(PI), j as f64 * step)))
        .map(|(th, ph)| {
            (
                th,
                ph,
                steering_vector(th, ph, &probe.uav_array),
                steering_vector(th, ph, &probe.gnb_array),
            )
        })
        .collect();
    let mut best = start;
    let mut best_val = probe.mean_sinr(&best);
    for _ in 0..rounds {
        let w_u = steering_vector(best.theta_uav, best.phi_uav, &probe.uav_array);
        for (th, ph, _, w_g) in &grid {
            let v = probe.mean_sinr_weights(&w_u, w_g);
            if v > best_val {
                best_val = v;
                best.theta_gnb = *th;
                best.phi_gnb = *ph;
            }
        }
        let w_g = steering_vector(best.theta_gnb, best.phi_gnb, &probe.gnb_array);
        for (th, ph, w_u, _) in &grid {
            let v = probe.mean_sinr_weights(w_u, &w_g);
            if v > best_val {
                best_val = v;
                best.theta_uav = *th;
                best.phi_uav = *ph;
            }
        }
    }
    (best, best_val)
}
