//! Generalised advantage estimation.

/// `δ_t = r_t + γV_{t+1} − V_t`, `A_t = Σ_k (γλ)^k δ_{t+k}`, returns `A + V`.
/// `terminal_value` bootstraps the step after the last reward (zero for a true terminal).
pub fn compute_gae(rewards: &[f64], values: &[f64], terminal_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len().min(values.len());
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { terminal_value };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}
