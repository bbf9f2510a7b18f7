//! KL divergences between policy heads with identical support.

use crate::error::{Error, Result};

use super::dist::log_softmax;

/// Head distribution described by its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadDist {
    Categorical { logits: Vec<f64> },
    /// Diagonal Gaussian over the pre-squash variable.
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

/// `KL(p ‖ q)`; only defined when both heads share the same support.
pub fn kl_proximity(p: &HeadDist, q: &HeadDist) -> Result<f64> {
    match (p, q) {
        (HeadDist::Categorical { logits: a }, HeadDist::Categorical { logits: b }) if a.len() == b.len() => {
            let la = log_softmax(a);
            let lb = log_softmax(b);
            Ok(la
                .iter()
                .zip(&lb)
                .map(|(x, y)| if x.is_finite() { x.exp() * (x - y) } else { 0.0 })
                .sum())
        }
        (
            HeadDist::Gaussian {
                mean: m1,
                log_std: s1,
            },
            HeadDist::Gaussian {
                mean: m2,
                log_std: s2,
            },
        ) if m1.len() == m2.len() && s1.len() == m1.len() && s2.len() == m2.len() => Ok((0..m1.len())
            .map(|i| {
                let v1 = (2.0 * s1[i]).exp();
                let v2 = (2.0 * s2[i]).exp();
                s2[i] - s1[i] + (v1 + (m1[i] - m2[i]).powi(2)) / (2.0 * v2) - 0.5
            })
            .sum()),
        _ => Err(Error::Inapplicable("KL between heads of different support".into())),
    }
}

/// Gradient of `KL(p ‖ q)` with respect to `p`'s parameters (logits, or means then log-stds).
pub fn kl_grad_p(p: &HeadDist, q: &HeadDist) -> Result<Vec<f64>> {
    let kl = kl_proximity(p, q)?;
    Ok(match (p, q) {
        (HeadDist::Categorical { logits: a }, HeadDist::Categorical { logits: b }) => {
            let la = log_softmax(a);
            let lb = log_softmax(b);
            la.iter().zip(&lb).map(|(x, y)| x.exp() * (x - y - kl)).collect()
        }
        (
            HeadDist::Gaussian {
                mean: m1,
                log_std: s1,
            },
            HeadDist::Gaussian {
                mean: m2,
                log_std: s2,
            },
        ) => {
            let n = m1.len();
            let mut g = vec![0.0; 2 * n];
            for i in 0..n {
                let v2 = (2.0 * s2[i]).exp();
                g[i] = (m1[i] - m2[i]) / v2;
                g[n + i] = (2.0 * s1[i]).exp() / v2 - 1.0;
            }
            g
        }
        _ => unreachable!("support checked by kl_proximity"),
    })
}
