/// Generalized advantage estimates and return targets.
///
/// `values` holds `V(s_0..s_T)` including the bootstrap value; a set
/// `dones[t]` cuts both the bootstrap and the recursion after step `t`.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(values.len(), rewards.len() + 1, "values need a bootstrap entry");
    assert_eq!(dones.len(), rewards.len());
    let next: Vec<f64> = values[1..].to_vec();
    gae_with_bootstrap(rewards, &values[..rewards.len()], &next, dones, dones, gamma, lambda)
}

/// GAE where every step carries its own successor value.
///
/// `terminal[t]` zeroes the successor value (true episode end);
/// `boundary[t]` stops the recursion (any episode end, including a
/// timeout whose successor value is still bootstrapped).
pub fn gae_with_bootstrap(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminal: &[bool],
    boundary: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let keep = if terminal[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * keep - values[t];
        let cont = if boundary[t] { 0.0 } else { 1.0 };
        carry = delta + gamma * lambda * cont * carry;
        adv[t] = carry;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shift to zero mean and scale to unit variance in place.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for x in xs {
        *x = (*x - mean) / std;
    }
}
