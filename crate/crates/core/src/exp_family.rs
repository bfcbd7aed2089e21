//! One-parameter exponential-family reward models.
//!
//! Two families are supported: Bernoulli rewards with a Beta conjugate prior,
//! and Gaussian rewards with known variance and a Normal conjugate prior on
//! the mean. Divergences are expressed in the mean parameterization and
//! accept extended-real second arguments: `d(u, ±inf) = +inf`, so formulas
//! that take reciprocals of divergences treat an infinite endpoint as a zero
//! contribution.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::ContinuousCDF;
use statrs::function::erf;

use crate::error::{ChmError, Result};

/// Reward distribution family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Bernoulli,
    /// Gaussian with known observation variance (reward units squared).
    GaussianKnownVariance { variance: f64 },
}

/// Conjugate prior placed independently on each arm's mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Beta { alpha: f64, beta: f64 },
    Normal { mean: f64, variance: f64 },
}

/// A reward family together with its conjugate prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFamilyModel {
    family: Family,
    prior: Prior,
}

impl ExpFamilyModel {
    /// Bernoulli rewards under a uniform Beta(1, 1) prior.
    pub fn bernoulli() -> Self {
        Self {
            family: Family::Bernoulli,
            prior: Prior::Beta {
                alpha: 1.0,
                beta: 1.0,
            },
        }
    }

    pub fn bernoulli_with_prior(alpha: f64, beta: f64) -> Result<Self> {
        positive("prior alpha", alpha)?;
        positive("prior beta", beta)?;
        Ok(Self {
            family: Family::Bernoulli,
            prior: Prior::Beta { alpha, beta },
        })
    }

    /// Gaussian rewards with known `variance` under a Normal(0, 1) prior.
    pub fn gaussian(variance: f64) -> Result<Self> {
        Self::gaussian_with_prior(variance, 0.0, 1.0)
    }

    pub fn gaussian_with_prior(variance: f64, prior_mean: f64, prior_variance: f64) -> Result<Self> {
        positive("variance", variance)?;
        positive("prior variance", prior_variance)?;
        if !prior_mean.is_finite() {
            return Err(ChmError::Domain {
                what: "prior mean",
                value: prior_mean,
                domain: "finite real",
            });
        }
        Ok(Self {
            family: Family::GaussianKnownVariance { variance },
            prior: Prior::Normal {
                mean: prior_mean,
                variance: prior_variance,
            },
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn prior(&self) -> Prior {
        self.prior
    }

    /// Checks that `mu` is a valid mean: (0, 1) for Bernoulli, any finite
    /// real for Gaussian.
    pub fn check_mean(&self, mu: f64) -> Result<()> {
        let ok = match self.family {
            Family::Bernoulli => mu > 0.0 && mu < 1.0,
            Family::GaussianKnownVariance { .. } => mu.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(ChmError::Domain {
                what: "mean",
                value: mu,
                domain: self.mean_domain(),
            })
        }
    }

    /// Checks that `v` may appear as the second argument of a divergence:
    /// a valid mean, a boundary of the mean domain, or an infinity.
    pub fn check_target(&self, v: f64) -> Result<()> {
        let ok = match self.family {
            Family::Bernoulli => v.is_infinite() || (0.0..=1.0).contains(&v),
            Family::GaussianKnownVariance { .. } => !v.is_nan(),
        };
        if ok {
            Ok(())
        } else {
            Err(ChmError::Domain {
                what: "divergence target",
                value: v,
                domain: "closed mean domain or +/-inf",
            })
        }
    }

    fn mean_domain(&self) -> &'static str {
        match self.family {
            Family::Bernoulli => "open interval (0, 1)",
            Family::GaussianKnownVariance { .. } => "finite real",
        }
    }

    /// KL divergence `d(mu1, mu2)` between the family members with means
    /// `mu1` and `mu2`.
    pub fn kl_div(&self, mu1: f64, mu2: f64) -> Result<f64> {
        self.check_mean(mu1)?;
        self.check_target(mu2)?;
        Ok(self.divergence(mu1, mu2))
    }

    /// `d(u, v)` if `u <= v`, else 0.
    pub fn kl_div_plus(&self, u: f64, v: f64) -> Result<f64> {
        self.check_mean(u)?;
        self.check_target(v)?;
        Ok(self.divergence_plus(u, v))
    }

    /// `d(u, v)` if `u >= v`, else 0.
    pub fn kl_div_minus(&self, u: f64, v: f64) -> Result<f64> {
        self.check_mean(u)?;
        self.check_target(v)?;
        Ok(self.divergence_minus(u, v))
    }

    /// Unchecked divergence that also accepts first arguments on the
    /// boundary of the mean domain. Empirical means of Bernoulli arms hit 0
    /// and 1 routinely, and `d(0, q) = -ln(1 - q)` is finite, so the stopping
    /// statistics use this form.
    pub fn divergence(&self, u: f64, v: f64) -> f64 {
        match self.family {
            Family::Bernoulli => bernoulli_kl(u, v),
            Family::GaussianKnownVariance { variance } => {
                if v.is_infinite() {
                    f64::INFINITY
                } else {
                    (u - v) * (u - v) / (2.0 * variance)
                }
            }
        }
    }

    pub fn divergence_plus(&self, u: f64, v: f64) -> f64 {
        if u <= v {
            self.divergence(u, v)
        } else {
            0.0
        }
    }

    pub fn divergence_minus(&self, u: f64, v: f64) -> f64 {
        if u >= v {
            self.divergence(u, v)
        } else {
            0.0
        }
    }

    /// Draws one reward from the family member with mean `mu`.
    pub fn reward_sample<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> Result<f64> {
        self.check_mean(mu)?;
        Ok(self.reward_sample_unchecked(mu, rng))
    }

    pub(crate) fn reward_sample_unchecked<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> f64 {
        match self.family {
            Family::Bernoulli => {
                if rng.random::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
            Family::GaussianKnownVariance { variance } => {
                let noise: f64 = rng.sample(rand_distr::StandardNormal);
                mu + variance.sqrt() * noise
            }
        }
    }
}

fn positive(what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ChmError::Domain {
            what,
            value,
            domain: "positive finite real",
        })
    }
}

fn bernoulli_kl(p: f64, q: f64) -> f64 {
    if q.is_infinite() {
        return f64::INFINITY;
    }
    if p == q {
        return 0.0;
    }
    // x ln(x / y) with 0 ln 0 = 0 and x ln(x / 0) = +inf
    let term = |x: f64, y: f64| {
        if x == 0.0 {
            0.0
        } else if y == 0.0 {
            f64::INFINITY
        } else {
            x * (x / y).ln()
        }
    };
    (term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0)
}

/// Posterior over one arm's mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmPosterior {
    Beta { alpha: f64, beta: f64 },
    Normal { mean: f64, variance: f64 },
}

impl ArmPosterior {
    pub fn mean(&self) -> f64 {
        match *self {
            ArmPosterior::Beta { alpha, beta } => alpha / (alpha + beta),
            ArmPosterior::Normal { mean, .. } => mean,
        }
    }

    /// Posterior probability of `theta <= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ArmPosterior::Beta { alpha, beta } => beta_dist(alpha, beta).cdf(x),
            ArmPosterior::Normal { mean, variance } => {
                if x == f64::NEG_INFINITY {
                    0.0
                } else if x == f64::INFINITY {
                    1.0
                } else {
                    0.5 * erf::erfc((mean - x) / (2.0 * variance).sqrt())
                }
            }
        }
    }

    /// Posterior probability of `theta >= x`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            ArmPosterior::Beta { alpha, beta } => beta_dist(alpha, beta).sf(x),
            ArmPosterior::Normal { mean, variance } => {
                if x == f64::NEG_INFINITY {
                    1.0
                } else if x == f64::INFINITY {
                    0.0
                } else {
                    0.5 * erf::erfc((x - mean) / (2.0 * variance).sqrt())
                }
            }
        }
    }

    /// `x` with `cdf(x) = p`.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            ArmPosterior::Beta { alpha, beta } => beta_dist(alpha, beta).inverse_cdf(p),
            ArmPosterior::Normal { mean, variance } => mean - (2.0 * variance).sqrt() * erf::erfc_inv(2.0 * p),
        }
    }

    /// `x` with `sf(x) = p`, accurate for small `p`.
    pub fn upper_quantile(&self, p: f64) -> f64 {
        match *self {
            ArmPosterior::Beta { alpha, beta } => 1.0 - beta_dist(beta, alpha).inverse_cdf(p),
            ArmPosterior::Normal { mean, variance } => mean + (2.0 * variance).sqrt() * erf::erfc_inv(2.0 * p),
        }
    }

    /// Posterior mass strictly between `lo` and `hi`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        if !(lo < hi) {
            return 0.0;
        }
        let below_hi = self.cdf(hi);
        let mass = if below_hi <= 0.5 {
            below_hi - self.cdf(lo)
        } else {
            self.sf(lo) - self.sf(hi)
        };
        mass.max(0.0)
    }
}

fn beta_dist(alpha: f64, beta: f64) -> statrs::distribution::Beta {
    statrs::distribution::Beta::new(alpha, beta).expect("valid Beta parameters")
}

#[derive(Debug, Clone)]
enum ArmSampler {
    Beta(rand_distr::Beta<f64>),
    Normal(Normal<f64>),
}

impl ArmSampler {
    fn from_posterior(p: &ArmPosterior) -> Self {
        match *p {
            // parameters are validated positive on construction and only grow
            ArmPosterior::Beta { alpha, beta } => {
                ArmSampler::Beta(rand_distr::Beta::new(alpha, beta).expect("valid Beta parameters"))
            }
            ArmPosterior::Normal { mean, variance } => {
                ArmSampler::Normal(Normal::new(mean, variance.sqrt()).expect("valid Normal parameters"))
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            // keep draws inside the open mean domain (0, 1)
            ArmSampler::Beta(d) => d.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0),
            ArmSampler::Normal(d) => d.sample(rng),
        }
    }
}

const DIRECT_TRUNCATION_MASS: f64 = 0.2;
const DIRECT_TRUNCATION_TRIES: usize = 64;

/// Per-arm conjugate posteriors for a K-armed instance.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    model: ExpFamilyModel,
    arms: Vec<ArmPosterior>,
    samplers: Vec<ArmSampler>,
}

impl PosteriorState {
    /// Prior state for `arms` arms.
    pub fn new(model: ExpFamilyModel, arms: usize) -> Result<Self> {
        if arms == 0 {
            return Err(ChmError::Config("at least one arm is required".into()));
        }
        let prior = match model.prior {
            Prior::Beta { alpha, beta } => ArmPosterior::Beta { alpha, beta },
            Prior::Normal { mean, variance } => ArmPosterior::Normal { mean, variance },
        };
        let sampler = ArmSampler::from_posterior(&prior);
        Ok(Self {
            model,
            arms: vec![prior; arms],
            samplers: vec![sampler; arms],
        })
    }

    pub fn model(&self) -> &ExpFamilyModel {
        &self.model
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm(&self, index: usize) -> &ArmPosterior {
        &self.arms[index]
    }

    pub fn arms(&self) -> &[ArmPosterior] {
        &self.arms
    }

    /// Conjugate update of arm `arm` with one observed `reward`.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        let arms = self.arms.len();
        let post = self
            .arms
            .get_mut(arm)
            .ok_or(ChmError::ArmOutOfRange { index: arm, arms })?;
        match (self.model.family, post) {
            (Family::Bernoulli, ArmPosterior::Beta { alpha, beta }) => {
                if reward != 0.0 && reward != 1.0 {
                    return Err(ChmError::Domain {
                        what: "reward",
                        value: reward,
                        domain: "{0, 1}",
                    });
                }
                *alpha += reward;
                *beta += 1.0 - reward;
            }
            (Family::GaussianKnownVariance { variance: noise }, ArmPosterior::Normal { mean, variance }) => {
                if !reward.is_finite() {
                    return Err(ChmError::Domain {
                        what: "reward",
                        value: reward,
                        domain: "finite real",
                    });
                }
                let precision = 1.0 / *variance + 1.0 / noise;
                *mean = (*mean / *variance + reward / noise) / precision;
                *variance = 1.0 / precision;
            }
            _ => unreachable!("posterior kind always matches the model family"),
        }
        self.samplers[arm] = ArmSampler::from_posterior(&self.arms[arm]);
        Ok(())
    }

    /// Draws an independent mean for every arm from its posterior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.arms.len()];
        self.sample_into(rng, &mut out);
        out
    }

    /// Allocation-free form of [`sample`](Self::sample); `out` must have one
    /// slot per arm.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.samplers.len(), "output length must equal arm count");
        for (slot, sampler) in out.iter_mut().zip(&self.samplers) {
            *slot = sampler.sample(rng);
        }
    }

    /// Draws arm `arm`'s mean from its posterior restricted to `[lo, hi]`.
    ///
    /// Heavy regions are hit by plain resampling; light ones are sampled by
    /// inverting the posterior CDF from whichever tail keeps precision. The
    /// region must carry positive posterior mass.
    pub fn sample_truncated<R: Rng + ?Sized>(&self, arm: usize, lo: f64, hi: f64, rng: &mut R) -> f64 {
        let post = &self.arms[arm];
        let sampler = &self.samplers[arm];
        let mass = post.cdf(hi).min(post.sf(lo));
        if mass >= DIRECT_TRUNCATION_MASS {
            for _ in 0..DIRECT_TRUNCATION_TRIES {
                let x = sampler.sample(rng);
                if lo <= x && x <= hi {
                    return x;
                }
            }
        }
        let u: f64 = rng.sample(Open01);
        let x = if post.cdf(hi) <= 0.5 {
            let (a, b) = (post.cdf(lo), post.cdf(hi));
            post.quantile(a + u * (b - a))
        } else {
            let (a, b) = (post.sf(hi), post.sf(lo));
            post.upper_quantile(a + u * (b - a))
        };
        let x = x.clamp(lo, hi);
        match post {
            ArmPosterior::Beta { .. } => x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0),
            ArmPosterior::Normal { .. } => x,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bern() -> ExpFamilyModel {
        ExpFamilyModel::bernoulli()
    }

    fn gauss() -> ExpFamilyModel {
        ExpFamilyModel::gaussian(1.0).unwrap()
    }

    #[test]
    fn kl_examples() {
        assert_eq!(bern().kl_div(0.5, 0.5).unwrap(), 0.0);
        let expected = 0.1 * 0.4f64.ln() + 0.9 * 1.2f64.ln();
        assert_abs_diff_eq!(bern().kl_div(0.1, 0.25).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.0724, epsilon = 1e-4);
        assert_eq!(gauss().kl_div(0.0, 1.0).unwrap(), 0.5);
        assert_eq!(bern().kl_div(0.3, f64::INFINITY).unwrap(), f64::INFINITY);
        assert_eq!(bern().kl_div(0.3, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(bern().kl_div(0.3, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn one_sided_examples() {
        let m = bern();
        assert_eq!(m.kl_div_plus(0.3, 0.2).unwrap(), 0.0);
        assert_eq!(m.kl_div_plus(0.2, 0.3).unwrap(), m.kl_div(0.2, 0.3).unwrap());
        assert_eq!(gauss().kl_div_plus(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(m.kl_div_minus(0.2, 0.3).unwrap(), 0.0);
        assert_eq!(m.kl_div_minus(0.3, 0.2).unwrap(), m.kl_div(0.3, 0.2).unwrap());
        assert_eq!(m.kl_div_minus(0.4, f64::NEG_INFINITY).unwrap(), f64::INFINITY);
        assert_eq!(m.kl_div_plus(0.4, f64::NEG_INFINITY).unwrap(), 0.0);
        assert_eq!(m.kl_div_plus(0.4, f64::INFINITY).unwrap(), f64::INFINITY);
    }

    #[test]
    fn domain_errors() {
        assert!(bern().kl_div(0.0, 0.5).is_err());
        assert!(bern().kl_div(1.0, 0.5).is_err());
        assert!(bern().kl_div(0.5, 1.5).is_err());
        assert!(bern().kl_div(0.5, f64::NAN).is_err());
        assert!(gauss().kl_div(f64::INFINITY, 0.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(bern().reward_sample(0.0, &mut rng).is_err());
        assert!(bern().reward_sample(1.0, &mut rng).is_err());
        assert!(ExpFamilyModel::gaussian(0.0).is_err());
        assert!(ExpFamilyModel::bernoulli_with_prior(0.0, 1.0).is_err());
        assert!(ExpFamilyModel::gaussian_with_prior(1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn boundary_estimates_have_finite_divergence() {
        let m = bern();
        assert_abs_diff_eq!(m.divergence(0.0, 0.25), -(0.75f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(m.divergence(1.0, 0.25), -(0.25f64).ln(), epsilon = 1e-15);
        assert_eq!(m.divergence(0.0, 0.0), 0.0);
        assert_eq!(m.divergence(0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn monotone_along_each_side() {
        for m in [bern(), gauss()] {
            for &u in &[0.1, 0.35, 0.5, 0.8] {
                let mut prev = 0.0;
                for i in 1..200 {
                    let v = u + (0.99 - u) * i as f64 / 200.0;
                    let d = m.kl_div(u, v).unwrap();
                    assert!(d >= prev, "right side not monotone at u={u} v={v}");
                    prev = d;
                }
                let mut prev = 0.0;
                for i in 1..200 {
                    let v = u - (u - 0.01) * i as f64 / 200.0;
                    let d = m.kl_div(u, v).unwrap();
                    assert!(d >= prev, "left side not monotone at u={u} v={v}");
                    prev = d;
                }
            }
        }
    }

    proptest! {
        #[test]
        fn kl_identities(x in 0.001f64..0.999, y in 0.001f64..0.999) {
            let m = bern();
            prop_assert_eq!(m.kl_div(x, x).unwrap(), 0.0);
            let d = m.kl_div(x, y).unwrap();
            if (x - y).abs() > 1e-6 {
                prop_assert!(d > 0.0);
                prop_assert_eq!(m.kl_div_plus(x, y).unwrap() + m.kl_div_minus(x, y).unwrap(), d);
            }
            prop_assert_eq!(m.kl_div_plus(x, x).unwrap(), 0.0);
            prop_assert_eq!(m.kl_div_minus(x, x).unwrap(), 0.0);
        }

        #[test]
        fn bernoulli_update_is_order_insensitive(rewards in proptest::collection::vec(0u8..2, 0..60), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = rewards.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut a = PosteriorState::new(bern(), 2).unwrap();
            let mut b = PosteriorState::new(bern(), 2).unwrap();
            for (&r, &s) in rewards.iter().zip(&shuffled) {
                a.update(1, f64::from(r)).unwrap();
                b.update(1, f64::from(s)).unwrap();
            }
            prop_assert_eq!(a.arms(), b.arms());
            prop_assert_eq!(a.arm(0), &ArmPosterior::Beta { alpha: 1.0, beta: 1.0 });
        }
    }

    #[test]
    fn posterior_update_examples() {
        let mut p = PosteriorState::new(bern(), 3).unwrap();
        p.update(0, 1.0).unwrap();
        p.update(1, 0.0).unwrap();
        assert_eq!(p.arm(0), &ArmPosterior::Beta { alpha: 2.0, beta: 1.0 });
        assert_eq!(p.arm(1), &ArmPosterior::Beta { alpha: 1.0, beta: 2.0 });
        assert_eq!(p.arm(2), &ArmPosterior::Beta { alpha: 1.0, beta: 1.0 });
        assert!(p.update(3, 1.0).is_err());
        assert!(p.update(0, 0.5).is_err());

        let mut g = PosteriorState::new(gauss(), 1).unwrap();
        g.update(0, 2.0).unwrap();
        assert_eq!(
            g.arm(0),
            &ArmPosterior::Normal {
                mean: 1.0,
                variance: 0.5
            }
        );
        assert!(g.update(0, f64::NAN).is_err());
        assert!(PosteriorState::new(gauss(), 0).is_err());
    }

    #[test]
    fn posterior_mean_tracks_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = bern();
        let mut p = PosteriorState::new(m, 1).unwrap();
        for _ in 0..10_000 {
            let r = m.reward_sample(0.7, &mut rng).unwrap();
            p.update(0, r).unwrap();
        }
        assert!((p.arm(0).mean() - 0.7).abs() < 0.02);
    }

    #[test]
    fn concentrated_beta_samples_stay_high() {
        let m = ExpFamilyModel::bernoulli_with_prior(1e9, 1.0).unwrap();
        let p = PosteriorState::new(m, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // P(theta <= 0.999) under Beta(1e9, 1) is 0.999^1e9, far below 1e-6
        for _ in 0..10_000 {
            let theta = p.sample(&mut rng);
            assert_eq!(theta.len(), 4);
            for t in theta {
                assert!(t > 0.999 && t < 1.0);
            }
        }
    }

    #[test]
    fn concentrated_normal_samples() {
        let kappa2 = 1e-12;
        let m = ExpFamilyModel::gaussian_with_prior(1.0, 0.3, kappa2).unwrap();
        let p = PosteriorState::new(m, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            for t in p.sample(&mut rng) {
                assert!((t - 0.3).abs() <= 10.0 * kappa2.sqrt());
            }
        }
    }

    #[test]
    fn reward_sample_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let b: f64 = (0..n).map(|_| bern().reward_sample(0.5, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // binomial sd = 0.5 / sqrt(1e5) ~ 0.0016; 0.01 is > 6 sd
        assert!((b - 0.5).abs() < 0.01);
        let g: f64 = (0..n).map(|_| gauss().reward_sample(0.3, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((g - 0.3).abs() < 0.02);
    }
    #[test]
    fn truncated_normal_tail_mean() {
        let mut p = PosteriorState::new(gauss(), 1).unwrap();
        // prior Normal(0, 1) is already the target; truncate to [3, inf)
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 50_000;
        let mean = (0..n).map(|_| p.sample_truncated(0, 3.0, f64::INFINITY, &mut rng)).sum::<f64>() / n as f64;
        // phi(3) / (1 - Phi(3))
        assert_abs_diff_eq!(mean, 3.283_007_436_808_385, epsilon = 5e-3);
        p.update(0, 0.0).unwrap();
        for _ in 0..1000 {
            let x = p.sample_truncated(0, -0.5, 0.25, &mut rng);
            assert!((-0.5..=0.25).contains(&x));
        }
    }

    #[test]
    fn truncated_beta_far_tail() {
        let mut p = PosteriorState::new(bern(), 1).unwrap();
        for _ in 0..200 {
            p.update(0, 0.0).unwrap();
        }
        let post = *p.arm(0);
        let tail = post.sf(0.5);
        assert!(tail > 0.0 && tail < 1e-50);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..1000 {
            let x = p.sample_truncated(0, 0.5, f64::INFINITY, &mut rng);
            assert!((0.5..1.0).contains(&x));
        }
    }

    #[test]
    fn cdf_sf_consistent() {
        let arms = [
            ArmPosterior::Beta { alpha: 3.0, beta: 7.0 },
            ArmPosterior::Normal { mean: 0.3, variance: 0.2 },
        ];
        for a in arms {
            for x in [0.05, 0.2, 0.3, 0.6, 0.9] {
                assert_abs_diff_eq!(a.cdf(x) + a.sf(x), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(a.quantile(a.cdf(x)), x, epsilon = 1e-8);
                assert_abs_diff_eq!(a.upper_quantile(a.sf(x)), x, epsilon = 1e-8);
            }
            assert_abs_diff_eq!(a.mass_between(0.2, 0.6), a.cdf(0.6) - a.cdf(0.2), epsilon = 1e-12);
            assert_eq!(a.mass_between(0.6, 0.2), 0.0);
        }
    }

}
