//! Large-scale path loss, shadowing, a parametric cluster fading stand-in,
//! and antenna-array steering vectors.
//!
//! Path loss is kept in the linear domain: `path_loss` returns the
//! attenuation factor `γ·d^(−α)` (LoS) or `η·d^(−α)` (NLoS), i.e. a number
//! in (0, 1] for any realistic distance.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    db_to_lin(dbm - 30.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    lin_to_db(w) + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossConstants {
    pub gamma_los: f64,
    pub eta_nlos: f64,
    pub alpha: f64,
    pub fc_hz: f64,
}

impl PathLossConstants {
    /// Constants such that a LoS link at `ref_distance_m` sees `ref_loss_db`
    /// of attenuation and NLoS sits `nlos_offset_db` below LoS.
    pub fn calibrated(fc_hz: f64, ref_distance_m: f64, ref_loss_db: f64, nlos_offset_db: f64, alpha: f64) -> Self {
        let gamma_los = db_to_lin(ref_loss_db) * ref_distance_m.powf(alpha);
        Self {
            gamma_los,
            eta_nlos: gamma_los * db_to_lin(nlos_offset_db),
            alpha,
            fc_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_los > 0.0) {
            return Err(Error::config("gamma_los", "must be > 0"));
        }
        if !(self.eta_nlos > 0.0) {
            return Err(Error::config("eta_nlos", "must be > 0"));
        }
        if self.eta_nlos > self.gamma_los {
            return Err(Error::config("eta_nlos", "must not exceed gamma_los"));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::config("alpha", "must be >= 1"));
        }
        if !(self.fc_hz > 0.0) {
            return Err(Error::config("fc_hz", "must be > 0"));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc_hz
    }
}

impl Default for PathLossConstants {
    /// Free-space-like exponent, −83.5 dB at 100 m / 3.5 GHz, NLoS 20 dB worse.
    fn default() -> Self {
        Self::calibrated(3.5e9, 100.0, -83.5, -20.0, 2.0)
    }
}

/// Linear large-scale attenuation at distance `d` meters.
pub fn path_loss(d: f64, los: bool, c: &PathLossConstants) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("path_loss distance must be > 0, got {d}")));
    }
    let k = if los { c.gamma_los } else { c.eta_nlos };
    Ok(k * d.powf(-c.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowFading {
    pub sigma_los_db: f64,
    pub sigma_nlos_db: f64,
}

impl Default for ShadowFading {
    fn default() -> Self {
        // UMi street-canyon values.
        Self {
            sigma_los_db: 4.0,
            sigma_nlos_db: 7.82,
        }
    }
}

impl ShadowFading {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_los_db >= 0.0) {
            return Err(Error::config("sigma_los_db", "must be >= 0"));
        }
        if !(self.sigma_nlos_db >= 0.0) {
            return Err(Error::config("sigma_nlos_db", "must be >= 0"));
        }
        Ok(())
    }

    pub fn sigma(&self, los: bool) -> f64 {
        if los {
            self.sigma_los_db
        } else {
            self.sigma_nlos_db
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterFadingConfig {
    pub num_clusters: usize,
    pub delay_spread_s: f64,
    pub asa_deg: f64,
    pub asd_deg: f64,
    pub zsa_deg: f64,
    pub zsd_deg: f64,
    pub per_cluster_power_decay_db: f64,
}

impl Default for ClusterFadingConfig {
    fn default() -> Self {
        Self {
            num_clusters: 4,
            delay_spread_s: 100e-9,
            asa_deg: 10.0,
            asd_deg: 5.0,
            zsa_deg: 5.0,
            zsd_deg: 3.0,
            per_cluster_power_decay_db: 3.0,
        }
    }
}

impl ClusterFadingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters < 1 {
            return Err(Error::config("num_clusters", "must be >= 1"));
        }
        for (name, v) in [
            ("delay_spread_s", self.delay_spread_s),
            ("asa_deg", self.asa_deg),
            ("asd_deg", self.asd_deg),
            ("zsa_deg", self.zsa_deg),
            ("zsd_deg", self.zsd_deg),
            ("per_cluster_power_decay_db", self.per_cluster_power_decay_db),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(name, "must be >= 0"));
            }
        }
        Ok(())
    }

    /// Cluster powers with exponential decay, normalised to sum to one.
    pub fn cluster_powers(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.num_clusters)
            .map(|c| db_to_lin(-(c as f64) * self.per_cluster_power_decay_db))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

/// Per-cluster angular offsets (radians) relative to the geometric line between the ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub power: f64,
    pub delay_s: f64,
    pub aoa_offset: (f64, f64),
    pub aod_offset: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Small-scale power factor per resource block, unit mean across realizations.
    pub per_rb: Vec<f64>,
    pub shadow_db: f64,
    pub clusters: Vec<Cluster>,
}

/// One draw of the simplified cluster channel over `n_rb` blocks spaced `rb_spacing_hz` apart.
///
/// Clusters carry exponentially decaying powers, exponential excess delays
/// (first cluster at zero delay) and uniform phases; the per-RB factor is
/// `|Σ_c √P_c · exp(j(ψ_c − 2π f_k τ_c))|²`.
pub fn channel_realization(
    cfg: &ClusterFadingConfig,
    shadow: &ShadowFading,
    los: bool,
    n_rb: usize,
    rb_spacing_hz: f64,
    rng: &mut SimRng,
) -> ChannelRealization {
    let powers = cfg.cluster_powers();
    let delay_dist = (cfg.delay_spread_s > 0.0).then(|| Exp::new(1.0 / cfg.delay_spread_s).expect("positive rate"));
    let deg = PI / 180.0;
    let mut clusters = Vec::with_capacity(powers.len());
    let mut phases = Vec::with_capacity(powers.len());
    for (c, &power) in powers.iter().enumerate() {
        let delay_s = match (&delay_dist, c) {
            (_, 0) | (None, _) => 0.0,
            (Some(d), _) => d.sample(rng),
        };
        phases.push(rng.random::<f64>() * 2.0 * PI);
        let mut offset = |spread_deg: f64| -> f64 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            if c == 0 && los {
                0.0
            } else {
                z * spread_deg * deg
            }
        };
        let aoa_offset = (offset(cfg.zsa_deg), offset(cfg.asa_deg));
        let aod_offset = (offset(cfg.zsd_deg), offset(cfg.asd_deg));
        clusters.push(Cluster {
            power,
            delay_s,
            aoa_offset,
            aod_offset,
        });
    }
    let per_rb = (0..n_rb)
        .map(|k| {
            let f = k as f64 * rb_spacing_hz;
            let h: Complex64 = clusters
                .iter()
                .zip(&phases)
                .map(|(cl, &psi)| Complex64::from_polar(cl.power.sqrt(), psi - 2.0 * PI * f * cl.delay_s))
                .sum();
            h.norm_sqr()
        })
        .collect();
    let sigma = shadow.sigma(los);
    let shadow_db = if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    };
    ChannelRealization {
        per_rb,
        shadow_db,
        clusters,
    }
}

/// Probability of line of sight, `min(1, d0 / d)`.
pub fn los_probability(d: f64, d0: f64) -> f64 {
    if d <= 0.0 {
        1.0
    } else {
        (d0 / d).min(1.0)
    }
}

/// Axis-aligned building footprint used for deterministic ray blocking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Building {
    /// Slab test: does the open segment `a → b` pass through the box?
    pub fn blocks(&self, a: [f64; 3], b: [f64; 3]) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for i in 0..3 {
            let d = b[i] - a[i];
            if d.abs() < 1e-12 {
                if a[i] < self.min[i] || a[i] > self.max[i] {
                    return false;
                }
            } else {
                let (mut lo, mut hi) = ((self.min[i] - a[i]) / d, (self.max[i] - a[i]) / d);
                if lo > hi {
                    std::mem::swap(&mut lo, &mut hi);
                }
                t0 = t0.max(lo);
                t1 = t1.min(hi);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub element_positions: Vec<[f64; 3]>,
    pub wavelength_m: f64,
}

impl ArrayGeometry {
    pub fn new(element_positions: Vec<[f64; 3]>, wavelength_m: f64) -> Result<Self> {
        if element_positions.is_empty() {
            return Err(Error::Domain("array needs at least one element".into()));
        }
        if !(wavelength_m > 0.0) {
            return Err(Error::Domain("wavelength must be > 0".into()));
        }
        Ok(Self {
            element_positions,
            wavelength_m,
        })
    }

    /// Uniform rectangular array in the x–y plane with half-wavelength spacing.
    pub fn ura(rows: usize, cols: usize, wavelength_m: f64) -> Self {
        let d = wavelength_m / 2.0;
        let mut pos = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                pos.push([c as f64 * d, r as f64 * d, 0.0]);
            }
        }
        Self::new(pos, wavelength_m).expect("rows, cols >= 1")
    }

    /// Layout for `m` elements: a single element, a line for 2, a square for 4/9/16, else a line.
    pub fn for_count(m: usize, wavelength_m: f64) -> Self {
        let side = (m as f64).sqrt().round() as usize;
        if side * side == m {
            Self::ura(side, side, wavelength_m)
        } else {
            Self::ura(1, m.max(1), wavelength_m)
        }
    }

    pub fn num_elements(&self) -> usize {
        self.element_positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamAngles {
    pub theta_uav: f64,
    pub phi_uav: f64,
    pub theta_gnb: f64,
    pub phi_gnb: f64,
}

impl BeamAngles {
    pub fn new(theta_uav: f64, phi_uav: f64, theta_gnb: f64, phi_gnb: f64) -> Self {
        Self {
            theta_uav,
            phi_uav,
            theta_gnb,
            phi_gnb,
        }
    }

    pub fn is_valid(&self) -> bool {
        let z = 0.0..=PI;
        let a = 0.0..2.0 * PI;
        z.contains(&self.theta_uav) && z.contains(&self.theta_gnb) && a.contains(&self.phi_uav) && a.contains(&self.phi_gnb)
    }

    pub fn max_abs_diff(&self, other: &BeamAngles) -> f64 {
        let wrap = |a: f64, b: f64| {
            let d = (a - b).abs() % (2.0 * PI);
            d.min(2.0 * PI - d)
        };
        [
            (self.theta_uav - other.theta_uav).abs(),
            wrap(self.phi_uav, other.phi_uav),
            (self.theta_gnb - other.theta_gnb).abs(),
            wrap(self.phi_gnb, other.phi_gnb),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Wave vector `(2π/λ)[sinθcosφ, sinθsinφ, cosθ]`.
pub fn wave_vector(theta: f64, phi: f64, wavelength_m: f64) -> [f64; 3] {
    let k = 2.0 * PI / wavelength_m;
    [k * theta.sin() * phi.cos(), k * theta.sin() * phi.sin(), k * theta.cos()]
}

/// Unit-norm steering vector, element m = exp(j·kᵀp_m)/√M.
pub fn steering_vector(theta: f64, phi: f64, geom: &ArrayGeometry) -> Vec<Complex64> {
    let k = wave_vector(theta, phi, geom.wavelength_m);
    let scale = 1.0 / (geom.num_elements() as f64).sqrt();
    geom.element_positions
        .iter()
        .map(|p| Complex64::from_polar(scale, k[0] * p[0] + k[1] * p[1] + k[2] * p[2]))
        .collect()
}

/// Linear power gain `M·|a(θ,φ)ᴴ w|²` of weights `w` toward `(θ, φ)`.
pub fn array_gain(w: &[Complex64], theta: f64, phi: f64, geom: &ArrayGeometry) -> f64 {
    debug_assert_eq!(w.len(), geom.num_elements());
    let a = steering_vector(theta, phi, geom);
    let inner: Complex64 = a.iter().zip(w).map(|(ai, wi)| ai.conj() * wi).sum();
    geom.num_elements() as f64 * inner.norm_sqr()
}

/// Zenith and azimuth of the direction `from → to`, θ ∈ [0, π], φ ∈ [0, 2π).
pub fn direction_angles(from: [f64; 3], to: [f64; 3]) -> (f64, f64) {
    let v = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if r == 0.0 {
        return (0.0, 0.0);
    }
    let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
    (theta, wrap_azimuth(v[1].atan2(v[0])))
}

pub fn wrap_azimuth(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
