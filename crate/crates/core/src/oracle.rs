//! Characteristic time and oracle allocation of the convex hull membership
//! problem in one dimension, with a grid solver of the underlying max-min
//! game used to cross-check the closed forms.
//!
//! In one dimension the hull of the means is `[min mu, max mu]`. A query is an
//! open interval `(lower, upper)` with extended-real endpoints; a point query
//! is the special case `lower == upper`. The instance is *feasible* when the
//! query meets the hull, i.e. `min mu < upper` and `max mu > lower`.

use crate::error::{ChmError, Result};
use crate::exp_family::ExpFamilyModel;

/// Means closer than this to a finite query endpoint are rejected.
pub const ENDPOINT_TOLERANCE: f64 = 1e-12;

/// The set tested for intersection with the hull of the arm means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    lower: f64,
    upper: f64,
}

impl Query {
    /// Point query `{gamma}`.
    pub fn point(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(ChmError::DegenerateQuery {
                lower: gamma,
                upper: gamma,
                reason: "a point query needs a finite threshold",
            });
        }
        Ok(Self {
            lower: gamma,
            upper: gamma,
        })
    }

    /// Interval query `(lower, upper)`; either end may be infinite, not both.
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        let reject = |reason| {
            Err(ChmError::DegenerateQuery {
                lower,
                upper,
                reason,
            })
        };
        if lower.is_nan() || upper.is_nan() {
            return reject("endpoints must not be NaN");
        }
        if lower > upper {
            return reject("lower endpoint exceeds upper endpoint");
        }
        if lower == f64::NEG_INFINITY && upper == f64::INFINITY {
            return reject("every instance is feasible");
        }
        if lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return reject("no instance is feasible");
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    /// Feasibility of a candidate mean vector, without the endpoint
    /// assumption check. Used on posterior draws.
    pub fn admits(&self, min: f64, max: f64) -> bool {
        min < self.upper && max > self.lower
    }

    /// Rejects endpoints outside the model's divergence domain.
    pub fn validate_for(&self, model: &ExpFamilyModel) -> Result<()> {
        model.check_target(self.lower)?;
        model.check_target(self.upper)
    }
}

/// Rejects mean vectors that violate the standing assumption that no mean
/// coincides with a finite query endpoint.
pub fn check_endpoint_gap(means: &[f64], q: &Query) -> Result<()> {
    if means.is_empty() {
        return Err(ChmError::Config("at least one arm is required".into()));
    }
    for (i, &mu) in means.iter().enumerate() {
        if mu.is_nan() {
            return Err(ChmError::Domain {
                what: "mean",
                value: mu,
                domain: "real",
            });
        }
        for end in [q.lower, q.upper] {
            if end.is_finite() && (mu - end).abs() <= ENDPOINT_TOLERANCE {
                return Err(ChmError::Assumption(format!(
                    "mean of arm {} ({mu}) coincides with query endpoint {end}",
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

/// Index of the smallest value; ties go to the lowest index.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `1 / x` with `1 / inf = 0`.
pub(crate) fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

/// Whether the query meets the hull of `means`.
pub fn feasibility(means: &[f64], q: &Query) -> Result<bool> {
    check_endpoint_gap(means, q)?;
    let min = means[argmin(means)];
    let max = means[argmax(means)];
    Ok(q.admits(min, max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub feasible: bool,
    /// Characteristic time, in samples per nat of required evidence.
    pub t_star: f64,
    /// Oracle allocation over the arms.
    pub weights: Vec<f64>,
    /// Active endpoint in the infeasible case.
    pub gamma_star: Option<f64>,
}

/// Closed-form characteristic time and oracle allocation.
///
/// Feasible: only the extreme arms are sampled, the minimum against `upper`
/// and the maximum against `lower`:
/// `T* = 1/d(mu_min, upper) + 1/d(mu_max, lower)`.
///
/// Infeasible: every arm is sampled against the active endpoint `gamma*`,
/// the endpoint nearest to any mean (ties go to `lower`):
/// `T* = sum_a 1/d(mu_a, gamma*)`, `w_a ∝ 1/d(mu_a, gamma*)`.
pub fn characteristic_time(model: &ExpFamilyModel, means: &[f64], q: &Query) -> Result<OracleResult> {
    q.validate_for(model)?;
    check_endpoint_gap(means, q)?;
    for &mu in means {
        model.check_mean(mu)?;
    }
    let k = means.len();
    let lo = argmin(means);
    let hi = argmax(means);
    let feasible = q.admits(means[lo], means[hi]);

    if feasible {
        if k > 1 && means.iter().filter(|&&m| m == means[lo] || m == means[hi]).count() > 2 {
            return Err(ChmError::Assumption(
                "the minimum and maximum means must each be attained by a single arm".into(),
            ));
        }
        let low_side = recip(model.divergence(means[lo], q.upper));
        let high_side = recip(model.divergence(means[hi], q.lower));
        let t_star = low_side + high_side;
        let mut weights = vec![0.0; k];
        weights[lo] += low_side / t_star;
        weights[hi] += high_side / t_star;
        Ok(OracleResult {
            feasible,
            t_star,
            weights,
            gamma_star: None,
        })
    } else {
        let gamma_star = active_endpoint(means, q);
        let inv: Vec<f64> = means.iter().map(|&m| recip(model.divergence(m, gamma_star))).collect();
        let t_star: f64 = inv.iter().sum();
        let weights = inv.iter().map(|x| x / t_star).collect();
        Ok(OracleResult {
            feasible,
            t_star,
            weights,
            gamma_star: Some(gamma_star),
        })
    }
}

fn active_endpoint(means: &[f64], q: &Query) -> f64 {
    let nearest = |end: f64| means.iter().map(|&m| (end - m).abs()).fold(f64::INFINITY, f64::min);
    if nearest(q.lower) <= nearest(q.upper) {
        q.lower
    } else {
        q.upper
    }
}

/// `kl(x, y)` between Bernoulli distributions, for the confidence term.
fn binary_kl(x: f64, y: f64) -> f64 {
    x * (x / y).ln() + (1.0 - x) * ((1.0 - x) / (1.0 - y)).ln()
}

/// Expected-sample-complexity lower bound `T* kl(delta, 1 - delta)`.
pub fn lower_bound(t_star: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(ChmError::Domain {
            what: "delta",
            value: delta,
            domain: "open interval (0, 1/2)",
        });
    }
    if !(t_star >= 0.0) {
        return Err(ChmError::Domain {
            what: "characteristic time",
            value: t_star,
            domain: "non-negative",
        });
    }
    Ok(t_star * binary_kl(delta, 1.0 - delta))
}

/// Value and maximizer found by [`brute_force_game`].
#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution {
    /// Approximation of `1 / T*`.
    pub value: f64,
    pub weights: Vec<f64>,
}

pub const BRUTE_FORCE_MAX_ARMS: usize = 4;
pub const BRUTE_FORCE_MIN_GRID: usize = 50;

/// Maximizes `inf_{lambda in Alt} sum_a w_a d(mu_a, lambda_a)` over a uniform
/// grid on the simplex with `grid` subdivisions.
///
/// The inner infimum is evaluated in closed form by pushing the alternative
/// to the nearest endpoint. If the query meets the hull, the adversary must
/// move every mean either to at most `lower` or to at least `upper`, so the
/// cost is the smaller of the two one-sided sums. Otherwise the adversary
/// must pull a single arm across the endpoint facing the means.
pub fn brute_force_game(model: &ExpFamilyModel, means: &[f64], q: &Query, grid: usize) -> Result<GameSolution> {
    let k = means.len();
    if k == 0 || k > BRUTE_FORCE_MAX_ARMS {
        return Err(ChmError::Config(format!(
            "brute-force solver supports 1..={BRUTE_FORCE_MAX_ARMS} arms, got {k}"
        )));
    }
    if grid < BRUTE_FORCE_MIN_GRID {
        return Err(ChmError::Config(format!(
            "brute-force grid must be at least {BRUTE_FORCE_MIN_GRID}, got {grid}"
        )));
    }
    q.validate_for(model)?;
    check_endpoint_gap(means, q)?;
    for &mu in means {
        model.check_mean(mu)?;
    }

    let below_upper: Vec<bool> = means.iter().map(|&m| m < q.upper).collect();
    let above_lower: Vec<bool> = means.iter().map(|&m| m > q.lower).collect();
    let meets = below_upper.iter().any(|&b| b) && above_lower.iter().any(|&b| b);
    let to_lower: Vec<f64> = means.iter().map(|&m| model.divergence(m, q.lower)).collect();
    let to_upper: Vec<f64> = means.iter().map(|&m| model.divergence(m, q.upper)).collect();
    // all means above the interval: cross `upper`; all below: cross `lower`
    let crossing = if below_upper.iter().all(|&b| !b) { &to_upper } else { &to_lower };

    // zero weight times infinite divergence contributes nothing
    let cost = |w: f64, d: f64| if w == 0.0 { 0.0 } else { w * d };
    let inner = |w: &[f64]| -> f64 {
        if meets {
            let mut push_down = 0.0;
            let mut push_up = 0.0;
            for a in 0..k {
                if above_lower[a] {
                    push_down += cost(w[a], to_lower[a]);
                }
                if below_upper[a] {
                    push_up += cost(w[a], to_upper[a]);
                }
            }
            push_down.min(push_up)
        } else {
            (0..k).map(|a| cost(w[a], crossing[a])).fold(f64::INFINITY, f64::min)
        }
    };

    let mut counts = vec![0usize; k];
    let mut w = vec![0.0; k];
    let mut best = GameSolution {
        value: f64::NEG_INFINITY,
        weights: vec![0.0; k],
    };
    let step = 1.0 / grid as f64;
    visit_compositions(&mut counts, 0, grid, &mut |c| {
        for (wi, &ci) in w.iter_mut().zip(c) {
            *wi = ci as f64 * step;
        }
        let v = inner(&w);
        if v > best.value {
            best.value = v;
            best.weights.copy_from_slice(&w);
        }
    });
    Ok(best)
}

/// Calls `f` on every vector of non-negative integers of `counts.len()`
/// entries summing to `remaining`.
fn visit_compositions(counts: &mut [usize], pos: usize, remaining: usize, f: &mut impl FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        f(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        visit_compositions(counts, pos + 1, remaining - c, f);
    }
}
