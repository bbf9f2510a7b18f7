//! Hybrid policy heads: independent categoricals plus a tanh-squashed diagonal Gaussian.
//!
//! An actor's output row holds all categorical logits first, then one mean
//! per continuous dimension. The Gaussian log-std is a separate,
//! state-independent vector.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SimRng;

use super::api::{AgentAction, HeadSpec};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax(z).into_iter().map(f64::exp).collect()
}

pub fn categorical_entropy(logits: &[f64]) -> f64 {
    log_softmax(logits)
        .iter()
        .map(|lp| if lp.is_finite() { -lp.exp() * lp } else { 0.0 })
        .sum()
}

/// `ln(1 − tanh²u)` computed as `2(ln 2 − u − softplus(−2u))`.
pub fn tanh_log_det(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    2.0 * (LN_2 - u - softplus)
}

fn gaussian_log_pdf(u: f64, mean: f64, log_std: f64) -> f64 {
    let z = (u - mean) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub action: AgentAction,
    /// Pre-squash Gaussian sample; the stored quantity for re-evaluating log-probs.
    pub pre_squash: Vec<f64>,
    pub log_prob: f64,
    pub entropy: f64,
}

fn check(out: &[f64], log_std: &[f64], heads: &HeadSpec) -> Result<()> {
    if out.len() != heads.n_outputs() || log_std.len() != heads.continuous {
        return Err(Error::Shape(format!(
            "policy output of width {} and {} log-stds for heads {:?}",
            out.len(),
            log_std.len(),
            heads
        )));
    }
    Ok(())
}

fn split<'a>(out: &'a [f64], heads: &HeadSpec) -> (Vec<&'a [f64]>, &'a [f64]) {
    let mut i = 0;
    let mut cats = Vec::with_capacity(heads.categorical.len());
    for &k in &heads.categorical {
        cats.push(&out[i..i + k]);
        i += k;
    }
    (cats, &out[i..])
}

/// Draw one action. Discrete heads sample by inverse CDF; the continuous block is `tanh(μ + σ·z)`.
pub fn sample_actions(out: &[f64], log_std: &[f64], heads: &HeadSpec, rng: &mut SimRng) -> Result<SampledAction> {
    check(out, log_std, heads)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite policy output".into()));
    }
    let (cats, means) = split(out, heads);
    let mut discrete = Vec::with_capacity(cats.len());
    let mut log_prob = 0.0;
    let mut entropy = 0.0;
    for logits in cats {
        let lp = log_softmax(logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = lp.len() - 1;
        for (j, l) in lp.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                pick = j;
                break;
            }
        }
        discrete.push(pick);
        log_prob += lp[pick];
        entropy += categorical_entropy(logits);
    }
    let mut pre = Vec::with_capacity(means.len());
    let mut cont = Vec::with_capacity(means.len());
    for (m, ls) in means.iter().zip(log_std) {
        let z: f64 = StandardNormal.sample(rng);
        let u = m + ls.exp() * z;
        pre.push(u);
        cont.push(u.tanh());
        log_prob += gaussian_log_pdf(u, *m, *ls) - tanh_log_det(u);
        entropy += 0.5 * (2.0 * PI * std::f64::consts::E).ln() + ls;
    }
    Ok(SampledAction {
        action: AgentAction {
            discrete,
            continuous: cont,
        },
        pre_squash: pre,
        log_prob,
        entropy,
    })
}

/// Mode of every head: argmax logits and `tanh(μ)`.
pub fn greedy_action(out: &[f64], heads: &HeadSpec) -> AgentAction {
    let (cats, means) = split(out, heads);
    let discrete = cats
        .iter()
        .map(|l| {
            l.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect();
    AgentAction {
        discrete,
        continuous: means.iter().map(|m| m.tanh()).collect(),
    }
}

/// Joint log-probability of a stored action, with gradients with respect to the output row and log-stds.
pub fn log_prob_grad(
    out: &[f64],
    log_std: &[f64],
    heads: &HeadSpec,
    discrete: &[usize],
    pre_squash: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check(out, log_std, heads)?;
    if discrete.len() != heads.categorical.len() || pre_squash.len() != heads.continuous {
        return Err(Error::Shape("stored action does not match the head layout".into()));
    }
    let mut d_out = vec![0.0; out.len()];
    let mut d_ls = vec![0.0; log_std.len()];
    let mut lp_total = 0.0;
    let mut off = 0;
    for (h, &k) in heads.categorical.iter().enumerate() {
        let lp = log_softmax(&out[off..off + k]);
        let a = discrete[h];
        if a >= k {
            return Err(Error::Shape(format!("action {a} outside a {k}-way head")));
        }
        lp_total += lp[a];
        for j in 0..k {
            d_out[off + j] = if j == a { 1.0 } else { 0.0 } - lp[j].exp();
        }
        off += k;
    }
    for (c, (&u, &ls)) in pre_squash.iter().zip(log_std).enumerate() {
        let m = out[off + c];
        let s2 = (2.0 * ls).exp();
        lp_total += gaussian_log_pdf(u, m, ls) - tanh_log_det(u);
        d_out[off + c] = (u - m) / s2;
        d_ls[c] = (u - m) * (u - m) / s2 - 1.0;
    }
    Ok((lp_total, d_out, d_ls))
}

/// Categorical entropies plus the pre-squash Gaussian entropy, with gradients.
pub fn entropy_grad(out: &[f64], log_std: &[f64], heads: &HeadSpec) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check(out, log_std, heads)?;
    let mut d_out = vec![0.0; out.len()];
    let mut h_total = 0.0;
    let mut off = 0;
    for &k in &heads.categorical {
        let lp = log_softmax(&out[off..off + k]);
        let h: f64 = lp.iter().map(|l| -l.exp() * l).sum();
        h_total += h;
        for j in 0..k {
            d_out[off + j] = -lp[j].exp() * (lp[j] + h);
        }
        off += k;
    }
    for ls in log_std {
        h_total += 0.5 * (2.0 * PI * std::f64::consts::E).ln() + ls;
    }
    Ok((h_total, d_out, vec![1.0; log_std.len()]))
}
