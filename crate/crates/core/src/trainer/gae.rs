/// Generalized advantage estimates and value targets for one trajectory
/// segment. `dones[t]` marks that the episode ended after step `t`;
/// `bootstrap` is V(s_L) for a segment cut off mid-episode.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "segment fields differ in length");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct double sum: A_t = sum_k (gamma lambda)^k delta_{t+k}, truncated
    /// at the first episode end at or after t.
    fn brute_force(r: &[f64], v: &[f64], d: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = r.len();
        let delta = |t: usize| {
            let next = if d[t] { 0.0 } else if t + 1 < n { v[t + 1] } else { boot };
            r[t] + gamma * next - v[t]
        };
        (0..n)
            .map(|t| {
                let mut sum = 0.0;
                for k in t..n {
                    sum += (gamma * lambda).powi((k - t) as i32) * delta(k);
                    if d[k] {
                        break;
                    }
                }
                sum
            })
            .collect()
    }

    #[test]
    fn single_terminal_step() {
        let (a, ret) = compute_gae(&[1.0], &[0.0], &[true], 123.0, 0.99, 0.95);
        assert_eq!(a, vec![1.0]);
        assert_eq!(ret, vec![1.0]);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, 0.3];
        let (a, _) = compute_gae(&r, &v, &[false, false, false], 0.7, 0.9, 0.0);
        let want = [0.5 + 0.9 * 0.2 - 0.1, -1.0 + 0.9 * 0.3 - 0.2, 2.0 + 0.9 * 0.7 - 0.3];
        for (x, y) in a.iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.random_range(1..=32);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
            let (gamma, lambda) = (rng.random_range(0.5..=1.0), rng.random_range(0.0..=1.0));
            let boot = rng.random_range(-2.0..2.0);
            let (a, ret) = compute_gae(&r, &v, &d, boot, gamma, lambda);
            let want = brute_force(&r, &v, &d, boot, gamma, lambda);
            for t in 0..n {
                assert!((a[t] - want[t]).abs() < 1e-12);
                assert!((ret[t] - a[t] - v[t]).abs() < 1e-15);
            }
        }
    }
}
