//! Generalized likelihood ratio stopping rule.
//!
//! Three per-arm tests run against a common boundary `thresh(delta, N_a)`:
//!
//! * `Tau1`: every arm is significantly above `upper`  -> infeasible
//! * `Tau2`: every arm is significantly below `lower`  -> infeasible
//! * `Tau3`: some arm is significantly below `upper` and some arm is
//!   significantly above `lower`                        -> feasible
//!
//! The boundary is `ln(1 + ln r) + T(ln(1/delta))` where
//! `T(x) = 2 h^-1(1 + (h^-1(1 + x) + ln zeta(2)) / 2)` and `h(u) = u - ln u`.

use std::f64::consts::PI;

use crate::error::{ChmError, Result};
use crate::exp_family::ExpFamilyModel;
use crate::oracle::Query;

const H_INV_TOL: f64 = 1e-12;

fn domain(what: &'static str, value: f64, domain: &'static str) -> ChmError {
    ChmError::Domain { what, value, domain }
}

/// `h(u) = u - ln u` on `[1, inf)`.
pub fn h(u: f64) -> Result<f64> {
    if !(u >= 1.0) || u.is_infinite() {
        return Err(domain("h argument", u, "[1, inf)"));
    }
    Ok(u - u.ln())
}

/// Inverse of [`h`] on `[1, inf)`, by Newton's method safeguarded with
/// bisection on the bracket `[1, y + ln y + 2]`.
pub fn h_inv(y: f64) -> Result<f64> {
    if !(y >= 1.0) || y.is_infinite() {
        return Err(domain("h_inv argument", y, "[1, inf)"));
    }
    if y == 1.0 {
        return Ok(1.0);
    }
    let f = |u: f64| u - u.ln() - y;
    let mut lo = 1.0;
    let mut hi = y + y.ln() + 2.0;
    // f is convex and increasing on the bracket, so Newton from the right
    // end moves monotonically toward the root
    let mut u = hi;
    for _ in 0..200 {
        let fu = f(u);
        if fu == 0.0 {
            return Ok(u);
        }
        if fu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let slope = 1.0 - 1.0 / u;
        let newton = if slope > 0.0 { u - fu / slope } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - u).abs() <= H_INV_TOL || hi - lo <= H_INV_TOL {
            return Ok(next);
        }
        u = next;
    }
    Ok(u)
}

/// `ln zeta(2) = ln(pi^2 / 6)`.
fn ln_zeta2() -> f64 {
    (PI * PI / 6.0).ln()
}

/// `T(x) = 2 h^-1(1 + (h^-1(1 + x) + ln zeta(2)) / 2)` for `x >= 0`.
pub fn threshold_t(x: f64) -> Result<f64> {
    if !(x >= 0.0) || x.is_infinite() {
        return Err(domain("T argument", x, "[0, inf)"));
    }
    let inner = h_inv(1.0 + x)?;
    Ok(2.0 * h_inv(1.0 + (inner + ln_zeta2()) / 2.0)?)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(domain("delta", delta, "open interval (0, 1)"))
    }
}

/// Stopping boundary for an arm pulled `r` times at risk `delta`.
pub fn thresh(delta: f64, r: u64) -> Result<f64> {
    check_delta(delta)?;
    if r == 0 {
        return Err(domain("pull count", 0.0, "r >= 1"));
    }
    Ok(count_term(r) + threshold_t((1.0 / delta).ln())?)
}

fn count_term(r: u64) -> f64 {
    (1.0 + (r as f64).ln()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopConfig {
    /// Risk of a wrong decision.
    pub delta: f64,
    /// Pulls an arm needs before its per-arm tests may pass.
    pub r0_floor: u64,
}

impl StopConfig {
    pub fn new(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self { delta, r0_floor: 1 })
    }

    pub fn with_r0_floor(mut self, r0_floor: u64) -> Result<Self> {
        if r0_floor == 0 {
            return Err(ChmError::Config("r0_floor must be at least 1".into()));
        }
        self.r0_floor = r0_floor;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopRule {
    Tau1,
    Tau2,
    Tau3,
}

impl StopRule {
    pub fn decision(self) -> Decision {
        match self {
            StopRule::Tau3 => Decision::Feasible,
            StopRule::Tau1 | StopRule::Tau2 => Decision::Infeasible,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StopRule::Tau1 => "tau1",
            StopRule::Tau2 => "tau2",
            StopRule::Tau3 => "tau3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StopOutcome {
    pub fired: Option<StopRule>,
    /// `(below upper, above lower)` witness arms when `Tau3` fired.
    pub witnesses: Option<(usize, usize)>,
}

impl StopOutcome {
    pub fn decision(&self) -> Option<Decision> {
        self.fired.map(StopRule::decision)
    }
}

/// Stopping rule with `T(ln(1/delta))` precomputed.
#[derive(Debug, Clone, Copy)]
pub struct StoppingRule {
    cfg: StopConfig,
    base: f64,
}

impl StoppingRule {
    pub fn new(cfg: StopConfig) -> Result<Self> {
        check_delta(cfg.delta)?;
        let base = threshold_t((1.0 / cfg.delta).ln())?;
        Ok(Self { cfg, base })
    }

    pub fn config(&self) -> &StopConfig {
        &self.cfg
    }

    /// `thresh(delta, r)`; `r` must be at least 1.
    pub fn threshold(&self, r: u64) -> f64 {
        debug_assert!(r >= 1);
        count_term(r) + self.base
    }

    /// Evaluates the three stopping times at the current counts and reward
    /// sums. Arms with fewer than `max(1, r0_floor)` pulls fail every per-arm
    /// test. `Tau3` is checked first, then `Tau1`, then `Tau2`.
    pub fn check(&self, counts: &[u64], sums: &[f64], q: &Query, model: &ExpFamilyModel) -> StopOutcome {
        debug_assert_eq!(counts.len(), sums.len());
        let floor = self.cfg.r0_floor.max(1);
        let mut all_above_upper = true;
        let mut all_below_lower = true;
        let mut below_upper = None;
        let mut above_lower = None;
        for (a, (&n, &s)) in counts.iter().zip(sums).enumerate() {
            if n < floor {
                all_above_upper = false;
                all_below_lower = false;
                continue;
            }
            let nf = n as f64;
            let mean = s / nf;
            let bound = self.threshold(n);
            let passes = |d: f64| d > 0.0 && nf * d >= bound;
            if !passes(model.divergence_minus(mean, q.upper())) {
                all_above_upper = false;
            }
            if !passes(model.divergence_plus(mean, q.lower())) {
                all_below_lower = false;
            }
            if below_upper.is_none() && passes(model.divergence_plus(mean, q.upper())) {
                below_upper = Some(a);
            }
            if above_lower.is_none() && passes(model.divergence_minus(mean, q.lower())) {
                above_lower = Some(a);
            }
        }
        if let (Some(a1), Some(a2)) = (below_upper, above_lower) {
            return StopOutcome {
                fired: Some(StopRule::Tau3),
                witnesses: Some((a1, a2)),
            };
        }
        let fired = if counts.is_empty() {
            None
        } else if all_above_upper {
            Some(StopRule::Tau1)
        } else if all_below_lower {
            Some(StopRule::Tau2)
        } else {
            None
        };
        StopOutcome { fired, witnesses: None }
    }
}

/// One-shot form of [`StoppingRule::check`].
pub fn check_stop(
    counts: &[u64],
    sums: &[f64],
    q: &Query,
    cfg: &StopConfig,
    model: &ExpFamilyModel,
) -> Result<StopOutcome> {
    Ok(StoppingRule::new(*cfg)?.check(counts, sums, q, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn h_examples() {
        assert_eq!(h(1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(h(E).unwrap(), E - 1.0, epsilon = 1e-15);
        assert!(h(2.0).unwrap() > h(1.5).unwrap());
        assert!(h(1.5).unwrap() > h(1.0).unwrap());
        assert!(h(0.99).is_err());
        assert!(h(f64::NAN).is_err());
    }

    #[test]
    fn h_inv_examples() {
        assert_eq!(h_inv(1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(h_inv(E - 1.0).unwrap(), E, epsilon = 1e-11);
        for y in [1.0, 1.0 + 1e-9, 1.5, 2.0, 5.0, 20.0, 100.0, 1e6] {
            let u = h_inv(y).unwrap();
            assert!(u >= 1.0);
            assert!((h(u).unwrap() - y).abs() <= 1e-10, "y = {y}");
        }
        assert!(h_inv(0.5).is_err());
    }

    #[test]
    fn threshold_t_values() {
        // reference values from a 30-digit root finder
        assert_abs_diff_eq!(threshold_t(0.0).unwrap(), 5.532_790_563_107_999, epsilon = 1e-9);
        assert_abs_diff_eq!(threshold_t(10f64.ln()).unwrap(), 10.751_151_919_486_289, epsilon = 1e-9);
        assert_abs_diff_eq!(threshold_t(100f64.ln()).unwrap(), 14.032_511_831_280_812, epsilon = 1e-9);
        assert!(threshold_t(1.0).unwrap() < threshold_t(2.0).unwrap());
        assert!(threshold_t(2.0).unwrap() < threshold_t(5.0).unwrap());
        assert!(threshold_t(-1.0).is_err());
    }

    #[test]
    fn thresh_properties() {
        for delta in [0.1f64, 0.01] {
            let base = threshold_t((1.0 / delta).ln()).unwrap();
            assert_eq!(thresh(delta, 1).unwrap(), base);
            let c = base - (1.0 / delta).ln() + 1.0;
            for r in [1_000u64, 10_000, 100_000, 1_000_000, 1_000_000_000] {
                assert!(thresh(delta, r).unwrap() <= (r as f64 / delta).ln() + c);
            }
        }
        let rule = StoppingRule::new(StopConfig::new(0.05).unwrap()).unwrap();
        let mut prev = rule.threshold(1);
        for r in 2..=1_000_000 {
            let t = rule.threshold(r);
            assert!(t >= prev);
            prev = t;
        }
        assert!(thresh(0.0, 1).is_err());
        assert!(thresh(0.1, 0).is_err());
    }

    fn bern() -> ExpFamilyModel {
        ExpFamilyModel::bernoulli()
    }

    #[test]
    fn empty_state_never_stops() {
        let q = Query::point(0.5).unwrap();
        let cfg = StopConfig::new(0.1).unwrap();
        let out = check_stop(&[0, 0, 0], &[0.0; 3], &q, &cfg, &bern()).unwrap();
        assert_eq!(out.fired, None);
        assert_eq!(out.decision(), None);
    }

    #[test]
    fn single_arm_above_fires_tau1() {
        let q = Query::point(0.5).unwrap();
        let cfg = StopConfig::new(0.1).unwrap();
        // 1e4 * d(0.9, 0.5) ~ 3681 against a boundary near 13.2
        let out = check_stop(&[10_000], &[9_000.0], &q, &cfg, &bern()).unwrap();
        assert_eq!(out.fired, Some(StopRule::Tau1));
        assert_eq!(out.decision(), Some(Decision::Infeasible));
    }

    #[test]
    fn straddling_arms_fire_tau3() {
        let q = Query::point(0.5).unwrap();
        let cfg = StopConfig::new(0.1).unwrap();
        let out = check_stop(&[10_000, 10_000], &[1_000.0, 9_000.0], &q, &cfg, &bern()).unwrap();
        assert_eq!(out.fired, Some(StopRule::Tau3));
        assert_eq!(out.witnesses, Some((0, 1)));
        assert_eq!(out.decision(), Some(Decision::Feasible));
    }

    #[test]
    fn all_below_fires_tau2() {
        let q = Query::point(0.5).unwrap();
        let cfg = StopConfig::new(0.1).unwrap();
        let out = check_stop(&[500, 500], &[50.0, 100.0], &q, &cfg, &bern()).unwrap();
        assert_eq!(out.fired, Some(StopRule::Tau2));
    }

    #[test]
    fn r0_floor_blocks_early_arms() {
        let q = Query::point(0.5).unwrap();
        let cfg = StopConfig::new(0.1).unwrap().with_r0_floor(20_000).unwrap();
        let out = check_stop(&[10_000], &[9_000.0], &q, &cfg, &bern()).unwrap();
        assert_eq!(out.fired, None);
        assert!(StopConfig::new(0.1).unwrap().with_r0_floor(0).is_err());
    }

    #[test]
    fn half_line_queries() {
        let cfg = StopConfig::new(0.1).unwrap();
        // (0.5, +inf): feasible once one arm is clearly above 0.5
        let q = Query::interval(0.5, f64::INFINITY).unwrap();
        let out = check_stop(&[1, 200], &[0.0, 180.0], &q, &cfg, &bern()).unwrap();
        assert_eq!(out.fired, Some(StopRule::Tau3));
        let out = check_stop(&[200, 200], &[20.0, 40.0], &q, &cfg, &bern()).unwrap();
        assert_eq!(out.fired, Some(StopRule::Tau2));
        // nothing can sit above +inf
        let out = check_stop(&[200], &[199.0], &Query::interval(0.95, f64::INFINITY).unwrap(), &cfg, &bern()).unwrap();
        assert_ne!(out.fired, Some(StopRule::Tau1));
    }

    /// Independent transcription of the point-threshold rule.
    fn point_rule(counts: &[u64], sums: &[f64], gamma: f64, rule: &StoppingRule) -> Option<Decision> {
        let m = bern();
        let stat = |a: usize, d: fn(&ExpFamilyModel, f64, f64) -> f64| {
            let n = counts[a];
            if n == 0 {
                return false;
            }
            let v = n as f64 * d(&m, sums[a] / n as f64, gamma);
            v > 0.0 && v >= rule.threshold(n)
        };
        let k = counts.len();
        let below = (0..k).any(|a| stat(a, ExpFamilyModel::divergence_plus));
        let above = (0..k).any(|a| stat(a, ExpFamilyModel::divergence_minus));
        if below && above {
            Some(Decision::Feasible)
        } else if (0..k).all(|a| stat(a, ExpFamilyModel::divergence_minus))
            || (0..k).all(|a| stat(a, ExpFamilyModel::divergence_plus))
        {
            Some(Decision::Infeasible)
        } else {
            None
        }
    }

    fn state() -> impl Strategy<Value = (Vec<u64>, Vec<f64>)> {
        proptest::collection::vec((0u64..3000, 0.0f64..=1.0), 1..6).prop_map(|arms| {
            let counts: Vec<u64> = arms.iter().map(|a| a.0).collect();
            let sums = arms.iter().map(|&(n, p)| (n as f64 * p).round()).collect();
            (counts, sums)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rules_are_mutually_exclusive((counts, sums) in state(), a in 0.05f64..0.95, b in 0.05f64..0.95) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let q = Query::interval(lo, hi).unwrap();
            let rule = StoppingRule::new(StopConfig::new(0.3).unwrap()).unwrap();
            let m = bern();
            let floor = |n: u64| n >= 1;
            let sig = |a: usize, d: f64| floor(counts[a]) && d > 0.0 && counts[a] as f64 * d >= rule.threshold(counts[a].max(1));
            let mean = |a: usize| sums[a] / counts[a].max(1) as f64;
            let k = counts.len();
            let t1 = (0..k).all(|i| sig(i, m.divergence_minus(mean(i), hi)));
            let t2 = (0..k).all(|i| sig(i, m.divergence_plus(mean(i), lo)));
            let t3 = (0..k).any(|i| sig(i, m.divergence_plus(mean(i), hi)))
                && (0..k).any(|i| sig(i, m.divergence_minus(mean(i), lo)));
            prop_assert!(!(t1 && t3));
            prop_assert!(!(t2 && t3));
            prop_assert!(!(t1 && t2));
            let out = rule.check(&counts, &sums, &q, &m);
            let expected = if t3 { Some(StopRule::Tau3) } else if t1 { Some(StopRule::Tau1) } else if t2 { Some(StopRule::Tau2) } else { None };
            prop_assert_eq!(out.fired, expected);
        }

        #[test]
        fn point_substitution_matches_point_rule((counts, sums) in state(), gamma in 0.05f64..0.95) {
            let rule = StoppingRule::new(StopConfig::new(0.1).unwrap()).unwrap();
            let q = Query::point(gamma).unwrap();
            let out = rule.check(&counts, &sums, &q, &bern());
            prop_assert_eq!(out.decision(), point_rule(&counts, &sums, gamma, &rule));
        }

        #[test]
        fn more_pulls_at_same_mean_keep_firing((counts, sums) in state(), gamma in 0.05f64..0.95, arm in 0usize..6, factor in 2u64..10) {
            let rule = StoppingRule::new(StopConfig::new(0.1).unwrap()).unwrap();
            let q = Query::point(gamma).unwrap();
            let m = bern();
            let out = rule.check(&counts, &sums, &q, &m);
            let arm = arm % counts.len();
            if out.fired.is_none() || counts[arm] == 0 {
                return Ok(());
            }
            let mut counts2 = counts.clone();
            let mut sums2 = sums.clone();
            counts2[arm] *= factor;
            sums2[arm] *= factor as f64;
            let out2 = rule.check(&counts2, &sums2, &q, &m);
            prop_assert_eq!(out2.fired, out.fired);
        }
    }
}
