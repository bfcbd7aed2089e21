//! Sampling rules.
//!
//! Thompson-CHM draws a mean vector from the posterior conditioned on the
//! query meeting the hull of the draw, then plays the draw's argmin with
//! probability `beta_t` and its argmax otherwise, where
//!
//! ```text
//! beta_t = d(min theta, upper)^-1 / (d(min theta, upper)^-1 + d(max theta, lower)^-1)
//! ```
//!
//! Baselines: uniform round-robin and the two-pass composite that first tests
//! `min mu < gamma` and then `max mu > gamma`, each with Thompson-CHM at half
//! the risk.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{ChmError, Result};
use crate::exp_family::{ExpFamilyModel, PosteriorState};
use crate::oracle::{argmax, argmin, recip, Query};
use crate::stopping::Decision;

pub const DEFAULT_REJECTION_CAP: u64 = 1_000;
pub const DEFAULT_EPSILON_KL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    ThompsonChm,
    Uniform,
    TwoPass,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::ThompsonChm => "thompson-chm",
            PolicyKind::Uniform => "uniform",
            PolicyKind::TwoPass => "two-pass",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = ChmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thompson-chm" => Ok(PolicyKind::ThompsonChm),
            "uniform" => Ok(PolicyKind::Uniform),
            "two-pass" => Ok(PolicyKind::TwoPass),
            other => Err(ChmError::Config(format!(
                "unknown policy '{other}' (expected thompson-chm, uniform or two-pass)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Plain posterior draws attempted per round before switching to the
    /// exact conditional sampler.
    pub rejection_cap: u64,
    /// Floor on the divergences entering `beta_t`.
    pub epsilon_kl: f64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            rejection_cap: DEFAULT_REJECTION_CAP,
            epsilon_kl: DEFAULT_EPSILON_KL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rejection_cap == 0 {
            return Err(ChmError::Config("rejection_cap must be at least 1".into()));
        }
        if !(self.epsilon_kl > 0.0) || self.epsilon_kl.is_infinite() {
            return Err(ChmError::Config("epsilon_kl must be a positive finite real".into()));
        }
        Ok(())
    }
}

/// Result of [`conditional_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDraw {
    pub theta: Vec<f64>,
    /// Infeasible draws discarded before `theta` was produced.
    pub rejections: u64,
    /// The conditioning event has no numerically representable posterior
    /// mass; `theta` is the draw with the largest feasibility margin.
    pub saturated: bool,
}

fn margin(theta: &[f64], q: &Query) -> f64 {
    let min = theta[argmin(theta)];
    let max = theta[argmax(theta)];
    (q.upper() - min).min(max - q.lower())
}

/// Draws from the posterior conditioned on `min theta < upper` and
/// `max theta > lower`.
///
/// Up to `cap` plain posterior draws are tried first. If none meets the
/// query, the draw is made exactly by [`exact_conditional_sample`]. Only
/// when the event carries no representable mass is the max-margin draw
/// returned, flagged as saturated.
pub fn conditional_sample<R: Rng + ?Sized>(
    post: &PosteriorState,
    q: &Query,
    cap: u64,
    rng: &mut R,
) -> ConditionalDraw {
    let k = post.num_arms();
    let mut theta = vec![0.0; k];
    let mut best = vec![0.0; k];
    let mut best_margin = f64::NEG_INFINITY;
    let cap = cap.max(1);
    for attempt in 0..cap {
        post.sample_into(rng, &mut theta);
        let min = theta[argmin(&theta)];
        let max = theta[argmax(&theta)];
        if q.admits(min, max) {
            return ConditionalDraw {
                theta,
                rejections: attempt,
                saturated: false,
            };
        }
        let m = margin(&theta, q);
        if m > best_margin {
            best_margin = m;
            best.copy_from_slice(&theta);
        }
    }
    match exact_conditional_sample(post, q, rng) {
        Some(theta) => ConditionalDraw {
            theta,
            rejections: cap,
            saturated: false,
        },
        None => ConditionalDraw {
            theta: best,
            rejections: cap,
            saturated: true,
        },
    }
}

const BELOW: usize = 1;
const ABOVE: usize = 2;
const EXACT_RETRIES: usize = 8;

/// Exact draw from the posterior conditioned on the query meeting the hull.
///
/// Each arm falls in one of three regions: at or below `lower`, strictly
/// inside the query, or at or above `upper`. The region labels are sampled
/// from their joint law given the event by a backward pass over the arms,
/// then each mean is drawn from its posterior truncated to its region.
/// Returns `None` when the event has no representable mass.
pub fn exact_conditional_sample<R: Rng + ?Sized>(
    post: &PosteriorState,
    q: &Query,
    rng: &mut R,
) -> Option<Vec<f64>> {
    let (lower, upper) = (q.lower(), q.upper());
    let regions: [(f64, f64, usize); 3] = [
        (f64::NEG_INFINITY, lower, BELOW),
        (lower, upper, BELOW | ABOVE),
        (upper, f64::INFINITY, ABOVE),
    ];
    let masses: Vec<[f64; 3]> = post
        .arms()
        .iter()
        .map(|arm| {
            let below = if lower == f64::NEG_INFINITY { 0.0 } else { arm.cdf(lower) };
            let above = if upper == f64::INFINITY { 0.0 } else { arm.sf(upper) };
            [below, arm.mass_between(lower, upper), above]
        })
        .collect();
    let k = masses.len();

    // reach[i][s]: mass of completing the event from arm i with flags s,
    // rescaled per row
    let mut reach = vec![[0.0f64; 4]; k + 1];
    reach[k][BELOW | ABOVE] = 1.0;
    for i in (0..k).rev() {
        let mut row = [0.0; 4];
        for (s, slot) in row.iter_mut().enumerate() {
            *slot = masses[i]
                .iter()
                .zip(&regions)
                .map(|(m, r)| m * reach[i + 1][s | r.2])
                .sum();
        }
        let scale = row.iter().cloned().fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        for v in &mut row {
            *v /= scale;
        }
        reach[i] = row;
    }
    if !(reach[0][0] > 0.0) {
        return None;
    }

    for _ in 0..EXACT_RETRIES {
        let mut theta = Vec::with_capacity(k);
        let mut flags = 0;
        for i in 0..k {
            let weights: Vec<f64> = masses[i]
                .iter()
                .zip(&regions)
                .map(|(m, r)| m * reach[i + 1][flags | r.2])
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = 0;
            for (j, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    pick = j;
                    if u < *w {
                        break;
                    }
                    u -= w;
                }
            }
            let (lo, hi, flag) = regions[pick];
            flags |= flag;
            theta.push(post.sample_truncated(i, lo, hi, rng));
        }
        if q.admits(theta[argmin(&theta)], theta[argmax(&theta)]) {
            return Some(theta);
        }
    }
    None
}

/// Probability of playing the argmin of `theta`.
pub fn compute_beta(theta: &[f64], q: &Query, model: &ExpFamilyModel, epsilon_kl: f64) -> f64 {
    let min = theta[argmin(theta)];
    let max = theta[argmax(theta)];
    let low = recip(model.divergence(min, q.upper()).max(epsilon_kl));
    let high = recip(model.divergence(max, q.lower()).max(epsilon_kl));
    if low + high == 0.0 {
        // only reachable for the excluded query (-inf, +inf)
        return 0.5;
    }
    low / (low + high)
}

/// One round of Thompson-CHM.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub theta: Vec<f64>,
    pub beta: f64,
    /// `true` when the argmin branch was taken.
    pub coin: bool,
    pub arm: usize,
    pub rejections: u64,
    pub saturated: bool,
}

pub fn thompson_chm_step<R: Rng + ?Sized>(
    post: &PosteriorState,
    q: &Query,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> StepTrace {
    let draw = conditional_sample(post, q, cfg.rejection_cap, rng);
    let beta = compute_beta(&draw.theta, q, post.model(), cfg.epsilon_kl);
    let coin = rng.random::<f64>() < beta;
    let arm = select_arm(&draw.theta, coin);
    StepTrace {
        theta: draw.theta,
        beta,
        coin,
        arm,
        rejections: draw.rejections,
        saturated: draw.saturated,
    }
}

/// Argmin of `theta` when `coin` is set, argmax otherwise.
pub fn select_arm(theta: &[f64], coin: bool) -> usize {
    if coin {
        argmin(theta)
    } else {
        argmax(theta)
    }
}

/// Round-robin arm for round `t` (0-based).
pub fn uniform_arm(t: u64, arms: usize) -> usize {
    (t % arms as u64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoPassStage {
    /// Testing `min mu < gamma` with the query `(-inf, gamma)`.
    Lower,
    /// Testing `max mu > gamma` with the query `(gamma, +inf)`.
    Upper,
    Done(Decision),
}

/// Stage bookkeeping of the two-pass baseline. Each stage runs Thompson-CHM
/// from the prior with its own stopping rule at risk `delta / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPass {
    gamma: f64,
    delta: f64,
    stage: TwoPassStage,
}

impl TwoPass {
    pub fn new(q: &Query, delta: f64) -> Result<Self> {
        if !q.is_point() {
            return Err(ChmError::Config(
                "the two-pass policy only supports point queries".into(),
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ChmError::Domain {
                what: "delta",
                value: delta,
                domain: "open interval (0, 1)",
            });
        }
        Ok(Self {
            gamma: q.lower(),
            delta,
            stage: TwoPassStage::Lower,
        })
    }

    pub fn stage(&self) -> TwoPassStage {
        self.stage
    }

    /// Query of the current stage, or `None` once finished.
    pub fn stage_query(&self) -> Option<Query> {
        let q = match self.stage {
            TwoPassStage::Lower => Query::interval(f64::NEG_INFINITY, self.gamma),
            TwoPassStage::Upper => Query::interval(self.gamma, f64::INFINITY),
            TwoPassStage::Done(_) => return None,
        };
        Some(q.expect("finite gamma gives a valid half-line"))
    }

    pub fn stage_delta(&self) -> f64 {
        self.delta / 2.0
    }

    /// Records the current stage's decision. Returns the composite decision
    /// once it is known.
    pub fn finish_stage(&mut self, decision: Decision) -> Option<Decision> {
        self.stage = match (self.stage, decision) {
            (TwoPassStage::Lower, Decision::Feasible) => TwoPassStage::Upper,
            (TwoPassStage::Lower, Decision::Infeasible) => TwoPassStage::Done(Decision::Infeasible),
            (TwoPassStage::Upper, d) => TwoPassStage::Done(d),
            (done @ TwoPassStage::Done(_), _) => done,
        };
        match self.stage {
            TwoPassStage::Done(d) => Some(d),
            _ => None,
        }
    }
}
