//! Fast invariant suite behind `chm selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exp_family::ExpFamilyModel;
use crate::oracle::{brute_force_game, characteristic_time, Query};
use crate::stopping::{h, h_inv, thresh, StopConfig, StopRule, StoppingRule};

/// The divergence under test; swapped out to check the suite's sensitivity.
pub type KlFn = fn(&ExpFamilyModel, f64, f64) -> Result<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &'static str, outcome: std::result::Result<(), String>) -> CheckResult {
    match outcome {
        Ok(()) => CheckResult {
            name,
            passed: true,
            detail: String::new(),
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn kl_identities(kl: KlFn) -> std::result::Result<(), String> {
    let bern = ExpFamilyModel::bernoulli();
    let gauss = ExpFamilyModel::gaussian(1.0).map_err(|e| e.to_string())?;
    let kl_b = |u, v| kl(&bern, u, v).map_err(|e| e.to_string());
    // reference values: 0.1 ln(1/9) + 0.9 ln 9 and (0 - 2)^2 / 2
    let v = kl_b(0.1, 0.9)?;
    ensure((v - 1.757_779_661_868_976).abs() < 1e-12, || format!("kl(0.1, 0.9) = {v}"))?;
    let v = kl(&gauss, 0.0, 2.0).map_err(|e| e.to_string())?;
    ensure((v - 2.0).abs() < 1e-12, || format!("gaussian kl(0, 2) = {v}"))?;
    let grid = [0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95];
    for &u in &grid {
        let zero = kl_b(u, u)?;
        ensure(zero.abs() < 1e-15, || format!("kl({u}, {u}) = {zero}"))?;
        for &v in &grid {
            if u == v {
                continue;
            }
            let d = kl_b(u, v)?;
            ensure(d > 0.0, || format!("kl({u}, {v}) = {d} is not positive"))?;
            let split = bern.divergence_plus(u, v) + bern.divergence_minus(u, v);
            ensure((split - d).abs() <= 1e-12 * d.max(1.0), || {
                format!("one-sided parts of kl({u}, {v}) sum to {split}, not {d}")
            })?;
        }
    }
    // nondecreasing away from u on both sides
    for &u in &grid {
        let mut prev = 0.0;
        for i in 1..100 {
            let v = u + (0.999 - u) * i as f64 / 100.0;
            let d = kl_b(u, v)?;
            ensure(d >= prev, || format!("kl({u}, .) decreases at {v}"))?;
            prev = d;
        }
        let mut prev = 0.0;
        for i in 1..100 {
            let v = u - (u - 0.001) * i as f64 / 100.0;
            let d = kl_b(u, v)?;
            ensure(d >= prev, || format!("kl({u}, .) decreases at {v}"))?;
            prev = d;
        }
    }
    Ok(())
}

fn h_round_trip() -> std::result::Result<(), String> {
    for y in [1.0, 1.5, 2.0, 5.0, 20.0, 100.0] {
        let u = h_inv(y).map_err(|e| e.to_string())?;
        let back = h(u).map_err(|e| e.to_string())?;
        ensure((back - y).abs() <= 1e-10, || format!("h(h_inv({y})) = {back}"))?;
    }
    Ok(())
}

fn thresh_monotone() -> std::result::Result<(), String> {
    for delta in [0.1, 0.01] {
        let mut prev = f64::NEG_INFINITY;
        let mut r = 1u64;
        while r <= 1_000_000 {
            let t = thresh(delta, r).map_err(|e| e.to_string())?;
            ensure(t >= prev, || format!("thresh({delta}, {r}) = {t} < {prev}"))?;
            prev = t;
            r = if r < 1000 { r + 1 } else { r + r / 100 };
        }
    }
    Ok(())
}

fn oracle_vs_brute_force() -> std::result::Result<(), String> {
    let m = ExpFamilyModel::bernoulli();
    let means = [0.2, 0.5, 0.8];
    for gamma in [0.4, 0.9] {
        let q = Query::point(gamma).map_err(|e| e.to_string())?;
        let exact = characteristic_time(&m, &means, &q).map_err(|e| e.to_string())?.t_star;
        let grid = brute_force_game(&m, &means, &q, 200).map_err(|e| e.to_string())?;
        let gap = (1.0 / grid.value - exact).abs() / exact;
        ensure(gap <= 0.02, || format!("gamma = {gamma}: T* {exact} vs grid {} ({gap:.4})", 1.0 / grid.value))?;
    }
    Ok(())
}

fn stopping_exclusive() -> std::result::Result<(), String> {
    let m = ExpFamilyModel::bernoulli();
    let rule = StoppingRule::new(StopConfig::new(0.3).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    for _ in 0..2000 {
        let k = rng.random_range(1..6);
        let counts: Vec<u64> = (0..k).map(|_| rng.random_range(0..3000)).collect();
        let sums: Vec<f64> = counts.iter().map(|&n| (n as f64 * rng.random::<f64>()).round()).collect();
        let (a, b): (f64, f64) = (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
        let q = Query::interval(a.min(b), a.max(b)).map_err(|e| e.to_string())?;
        let out = rule.check(&counts, &sums, &q, &m);
        let mean = |i: usize| sums[i] / counts[i] as f64;
        let sig = |i: usize, d: f64| counts[i] >= 1 && d > 0.0 && counts[i] as f64 * d >= rule.threshold(counts[i]);
        let below = (0..k).any(|i| sig(i, m.divergence_plus(mean(i), q.upper())));
        let above = (0..k).any(|i| sig(i, m.divergence_minus(mean(i), q.lower())));
        let all_above = (0..k).all(|i| sig(i, m.divergence_minus(mean(i), q.upper())));
        let all_below = (0..k).all(|i| sig(i, m.divergence_plus(mean(i), q.lower())));
        let fired = [below && above, all_above, all_below].iter().filter(|&&f| f).count();
        ensure(fired <= 1, || format!("several rules hold at counts {counts:?}, sums {sums:?}"))?;
        if let Some(StopRule::Tau3) = out.fired {
            ensure(below && above, || "tau3 fired without witnesses".into())?;
        }
    }
    Ok(())
}

/// Runs every check with `kl` as the divergence.
pub fn run_with(kl: KlFn) -> SelftestReport {
    SelftestReport {
        checks: vec![
            check("kl identities", kl_identities(kl)),
            check("h / h_inv round trip", h_round_trip()),
            check("thresh monotone in r", thresh_monotone()),
            check("oracle vs brute force (K = 3)", oracle_vs_brute_force()),
            check("stopping rules exclusive", stopping_exclusive()),
        ],
    }
}

pub fn run() -> SelftestReport {
    run_with(ExpFamilyModel::kl_div)
}
