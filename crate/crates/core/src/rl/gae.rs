use super::RlError;

/// Generalized advantage estimation over one environment's sequence.
///
/// `dones[t]` marks that the episode ended after step `t`, which masks the
/// bootstrap from step `t + 1`. `bootstrap_value` is the value of the state
/// following the last step. Returns `(advantages, returns)` with
/// `returns = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(RlError::Length(format!(
            "rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * mask - values[t];
        next_adv = delta + gamma * gae_lambda * mask * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let (a, r) = gae(&[1.0], &[0.0], &[false], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let rewards = [0.5, -1.0, 2.0, 0.1];
        let values = [0.2, 0.4, -0.3, 1.0];
        let dones = [false, true, false, false];
        let boot = 0.7;
        let g = 0.9;
        let (a, _) = gae(&rewards, &values, &dones, boot, g, 0.0).unwrap();
        for t in 0..4 {
            let next = if t + 1 < 4 { values[t + 1] } else { boot };
            let mask = if dones[t] { 0.0 } else { 1.0 };
            let td = rewards[t] + g * next * mask - values[t];
            assert!((a[t] - td).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.9, 0.9), Err(RlError::Length(_))));
    }

    // Direct sum: A_t = sum_k (g l)^k delta_{t+k}, truncated at the episode end.
    #[test]
    fn matches_brute_force_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..30);
            let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
            let boot = rng.random_range(-1.0..1.0);
            let (g, l) = (rng.random_range(0.5..1.0), rng.random_range(0.0..1.0));
            let (adv, ret) = gae(&rewards, &values, &dones, boot, g, l).unwrap();
            for t in 0..n {
                let mut expect = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    let next = if dones[k] { 0.0 } else if k + 1 < n { values[k + 1] } else { boot };
                    expect += w * (rewards[k] + g * next - values[k]);
                    if dones[k] {
                        break;
                    }
                    w *= g * l;
                }
                assert!((adv[t] - expect).abs() < 1e-12, "t={t}");
                assert!((ret[t] - expect - values[t]).abs() < 1e-12);
            }
        }
    }
}
