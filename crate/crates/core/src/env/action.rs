//! Hybrid action decoding.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link_abstraction::R_MAX;
use crate::propagation::{wrap_azimuth, BeamAngles};
use crate::radio_env::NotchVector;

/// Category counts of agent 1's heads: rb_start, rb_num, i_notch, bwp_idx, r_max.
pub const NOTCH_HEADS: [usize; 5] = [16, 17, 2, 2, R_MAX as usize + 1];
/// Squashed outputs of agent 2: θ_uav, φ_uav, θ_gnb, φ_gnb.
pub const BEAM_DIMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryAction {
    pub rb_start: usize,
    pub rb_num: usize,
    pub i_notch: u8,
    pub bwp_idx: usize,
    pub r_max: u32,
    pub beams: BeamAngles,
}

impl RecoveryAction {
    pub fn notch_vector(&self, n_rb: usize, efficiency: f64) -> NotchVector {
        NotchVector::from_triple(n_rb, self.rb_start, self.rb_num, self.i_notch, efficiency)
    }

    /// No notching on BWP 0 with one retransmission and mid-range beams.
    pub fn default_for(_n_rb: usize) -> Self {
        Self {
            rb_start: 0,
            rb_num: 0,
            i_notch: 0,
            bwp_idx: 0,
            r_max: 1,
            beams: BeamAngles::new(PI / 2.0, PI, PI / 2.0, PI),
        }
    }
}

/// Map a squashed output in (−1, 1) onto a zenith angle in [0, π].
pub fn zenith_from_unit(x: f64) -> f64 {
    ((x.clamp(-1.0, 1.0) + 1.0) * PI / 2.0).clamp(0.0, PI)
}

/// Map a squashed output in (−1, 1) onto an azimuth in [0, 2π).
pub fn azimuth_from_unit(x: f64) -> f64 {
    wrap_azimuth((x.clamp(-1.0, 1.0) + 1.0) * PI)
}

pub fn zenith_to_unit(theta: f64) -> f64 {
    theta / (PI / 2.0) - 1.0
}

pub fn azimuth_to_unit(phi: f64) -> f64 {
    phi / PI - 1.0
}

/// Decode `[rb_start, rb_num, i_notch]` + `[bwp_idx, r_max]` and four squashed angles.
///
/// Indices are clamped into range for the chosen bandwidth part. A start
/// past the last RB is pulled back to it with an empty span.
pub fn decode_joint_action(raw1: [i64; 5], raw2: [f64; 4], n_rb_per_bwp: [usize; 2]) -> Result<RecoveryAction> {
    if raw2.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite beam action".into()));
    }
    let bwp_idx = raw1[3].clamp(0, 1) as usize;
    let n_rb = n_rb_per_bwp[bwp_idx].max(1) as i64;
    let (rb_start, rb_num) = if raw1[0] >= n_rb {
        (n_rb - 1, 0)
    } else {
        let s = raw1[0].max(0);
        (s, raw1[1].clamp(0, n_rb - s))
    };
    Ok(RecoveryAction {
        rb_start: rb_start as usize,
        rb_num: rb_num as usize,
        i_notch: raw1[2].clamp(0, 1) as u8,
        bwp_idx,
        r_max: raw1[4].clamp(0, R_MAX as i64) as u32,
        beams: BeamAngles::new(
            zenith_from_unit(raw2[0]),
            azimuth_from_unit(raw2[1]),
            zenith_from_unit(raw2[2]),
            azimuth_from_unit(raw2[3]),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_output_is_mid_range() {
        let a = decode_joint_action([0, 0, 0, 0, 0], [0.0; 4], [16, 8]).unwrap();
        assert_eq!(a.beams.theta_uav, PI / 2.0);
        assert_eq!(a.beams.phi_uav, PI);
        assert_eq!(a.beams.theta_gnb, PI / 2.0);
        assert_eq!(a.beams.phi_gnb, PI);
    }

    #[test]
    fn out_of_range_start_clamps() {
        let a = decode_joint_action([16 + 5, 3, 1, 0, 9], [0.0; 4], [16, 8]).unwrap();
        assert_eq!((a.rb_start, a.rb_num, a.r_max), (15, 0, R_MAX));
        let a = decode_joint_action([6, 16, 1, 1, 0], [0.0; 4], [16, 8]).unwrap();
        assert_eq!((a.rb_start, a.rb_num), (6, 2));
    }

    #[test]
    fn notch_flag_zero_means_no_notch() {
        let a = decode_joint_action([2, 10, 0, 0, 0], [0.0; 4], [16, 8]).unwrap();
        assert_eq!(a.notch_vector(16, 0.7).total(), 0.0);
    }

    #[test]
    fn nan_rejected() {
        assert!(decode_joint_action([0; 5], [f64::NAN, 0.0, 0.0, 0.0], [16, 8]).is_err());
    }

    #[test]
    fn unit_maps_invert() {
        for x in [-0.9, -0.3, 0.0, 0.4, 0.95] {
            assert!((zenith_to_unit(zenith_from_unit(x)) - x).abs() < 1e-12);
            assert!((azimuth_to_unit(azimuth_from_unit(x)) - x).abs() < 1e-12);
        }
    }
}
