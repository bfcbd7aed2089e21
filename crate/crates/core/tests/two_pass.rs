//! The two-pass baseline with every mean below a point query. The first pass
//! (is some mean below gamma?) ends quickly on the arm farthest from gamma,
//! and the second pass then allocates every arm as in the infeasible optimum.
//! The farthest arm is therefore the one whose share is doubled.

use thompson_chm::{run_batch, BanditInstance, ExpFamilyModel, PolicyKind, Query, RunConfig};

#[test]
fn farthest_arm_share_is_doubled() {
    let m = ExpFamilyModel::bernoulli();
    let means = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
    let gamma = 0.9;
    let inst = BanditInstance::new(m, means.clone(), Query::point(gamma).unwrap()).unwrap();
    let cfg = RunConfig::new(PolicyKind::TwoPass, 0.01).unwrap();
    let batch = run_batch(&inst, &cfg, 100, 20_230_101, None).unwrap();

    let inv: Vec<f64> = means.iter().map(|&mu| 1.0 / m.kl_div(mu, gamma).unwrap()).collect();
    let total = inv.iter().sum::<f64>() + inv[0];
    let predicted: Vec<f64> = inv
        .iter()
        .enumerate()
        .map(|(a, x)| if a == 0 { 2.0 * x / total } else { x / total })
        .collect();
    // 2 d(0.1, 0.9)^-1 / (sum_i d(mu_i, 0.9)^-1 + d(0.1, 0.9)^-1)
    assert!((predicted[0] - 0.071_776).abs() < 1e-5, "{}", predicted[0]);
    assert_eq!(batch.stats.errors, 0);
    for (a, (p, w)) in batch.stats.mean_proportions.iter().zip(&predicted).enumerate() {
        assert!((p - w).abs() <= 0.05, "arm {}: {p} vs {w}", a + 1);
    }
}
