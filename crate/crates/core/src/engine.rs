//! Sequential simulation loop and seeded batch execution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{ChmError, Result};
use crate::exp_family::{ExpFamilyModel, PosteriorState};
use crate::oracle::{feasibility, Query};
use crate::policy::{thompson_chm_step, uniform_arm, PolicyConfig, PolicyKind, StepTrace, TwoPass};
use crate::stopping::{Decision, StopConfig, StopRule, StoppingRule};

pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;
pub const DEFAULT_TRACE_STRIDE: u64 = 100;

/// True arm means, their reward model and the query under test.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    model: ExpFamilyModel,
    means: Vec<f64>,
    query: Query,
    feasible: bool,
}

impl BanditInstance {
    pub fn new(model: ExpFamilyModel, means: Vec<f64>, query: Query) -> Result<Self> {
        if means.is_empty() {
            return Err(ChmError::Config("at least one arm is required".into()));
        }
        for &mu in &means {
            model.check_mean(mu)?;
        }
        query.validate_for(&model)?;
        let feasible = feasibility(&means, &query)?;
        Ok(Self {
            model,
            means,
            query,
            feasible,
        })
    }

    pub fn model(&self) -> &ExpFamilyModel {
        &self.model
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    /// Ground truth.
    pub fn is_feasible(&self) -> bool {
        self.feasible
    }

    fn truth(&self) -> Decision {
        if self.feasible {
            Decision::Feasible
        } else {
            Decision::Infeasible
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub policy: PolicyConfig,
    pub stop: StopConfig,
    /// Pull budget; reaching it without stopping truncates the run.
    pub max_steps: u64,
    /// Forced round-robin sweeps before the policy takes over.
    pub init_rounds: u64,
    /// Record `(t, N(t))` every this many pulls; 0 disables the trace.
    pub trace_stride: u64,
    /// Keep every Thompson-CHM [`StepTrace`] in the record.
    pub record_steps: bool,
}

impl RunConfig {
    pub fn new(kind: PolicyKind, delta: f64) -> Result<Self> {
        Ok(Self {
            policy: PolicyConfig::new(kind),
            stop: StopConfig::new(delta)?,
            max_steps: DEFAULT_MAX_STEPS,
            init_rounds: 0,
            trace_stride: DEFAULT_TRACE_STRIDE,
            record_steps: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        StoppingRule::new(self.stop)?;
        if self.max_steps == 0 {
            return Err(ChmError::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-arm statistics of a run in progress.
#[derive(Debug, Clone)]
pub struct RunState {
    pub t: u64,
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    pub posterior: PosteriorState,
}

impl RunState {
    pub fn new(model: ExpFamilyModel, arms: usize) -> Result<Self> {
        Ok(Self {
            t: 0,
            counts: vec![0; arms],
            sums: vec![0.0; arms],
            posterior: PosteriorState::new(model, arms)?,
        })
    }

    pub fn record(&mut self, arm: usize, reward: f64) -> Result<()> {
        self.posterior.update(arm, reward)?;
        self.t += 1;
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        Ok(())
    }

    pub fn empirical_mean(&self, arm: usize) -> Option<f64> {
        match self.counts[arm] {
            0 => None,
            n => Some(self.sums[arm] / n as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Feasible,
    Infeasible,
    Truncated,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Feasible => "feasible",
            Outcome::Infeasible => "infeasible",
            Outcome::Truncated => "truncated",
        }
    }
}

impl From<Decision> for Outcome {
    fn from(d: Decision) -> Self {
        match d {
            Decision::Feasible => Outcome::Feasible,
            Decision::Infeasible => Outcome::Infeasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracePoint {
    pub t: u64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub decision: Outcome,
    /// Total pulls when the run ended.
    pub tau: u64,
    pub fired: Option<StopRule>,
    pub proportions: Vec<f64>,
    pub correct: bool,
    pub seed: u64,
    /// Rounds whose conditional draw hit the rejection cap.
    pub rejection_saturations: u64,
    pub trace: Vec<TracePoint>,
    pub steps: Vec<StepTrace>,
}

/// splitmix64 finalizer.
pub fn mix_seed(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Totals across the stages of one run.
struct Tally {
    t: u64,
    counts: Vec<u64>,
    saturations: u64,
    trace: Vec<TracePoint>,
    steps: Vec<StepTrace>,
}

struct Stage<'a> {
    instance: &'a BanditInstance,
    query: Query,
    rule: StoppingRule,
    cfg: &'a RunConfig,
}

impl Stage<'_> {
    /// Runs from the prior until the stopping rule fires or `budget` pulls
    /// have been made.
    fn run(&self, budget: u64, rng: &mut ChaCha8Rng, tally: &mut Tally) -> Result<Option<StopRule>> {
        let model = self.instance.model();
        let k = self.instance.num_arms();
        let mut state = RunState::new(*model, k)?;
        let forced = self.cfg.init_rounds.saturating_mul(k as u64);
        loop {
            let outcome = self.rule.check(&state.counts, &state.sums, &self.query, model);
            if let Some(rule) = outcome.fired {
                return Ok(Some(rule));
            }
            if state.t >= budget {
                return Ok(None);
            }
            let arm = if state.t < forced || self.cfg.policy.kind == PolicyKind::Uniform {
                uniform_arm(state.t, k)
            } else {
                let step = thompson_chm_step(&state.posterior, &self.query, &self.cfg.policy, rng);
                if step.saturated {
                    tally.saturations += 1;
                }
                let arm = step.arm;
                if self.cfg.record_steps {
                    tally.steps.push(step);
                }
                arm
            };
            let reward = model.reward_sample_unchecked(self.instance.means()[arm], rng);
            state.record(arm, reward)?;
            tally.t += 1;
            tally.counts[arm] += 1;
            if self.cfg.trace_stride > 0 && tally.t.is_multiple_of(self.cfg.trace_stride) {
                tally.trace.push(TracePoint {
                    t: tally.t,
                    counts: tally.counts.clone(),
                });
            }
        }
    }
}

/// Simulates one run. Identical inputs give identical records.
pub fn run_once(instance: &BanditInstance, cfg: &RunConfig, seed: u64) -> Result<RunRecord> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed));
    let k = instance.num_arms();
    let mut tally = Tally {
        t: 0,
        counts: vec![0; k],
        saturations: 0,
        trace: Vec::new(),
        steps: Vec::new(),
    };

    let (decision, fired) = match cfg.policy.kind {
        PolicyKind::ThompsonChm | PolicyKind::Uniform => {
            let stage = Stage {
                instance,
                query: *instance.query(),
                rule: StoppingRule::new(cfg.stop)?,
                cfg,
            };
            match stage.run(cfg.max_steps, &mut rng, &mut tally)? {
                Some(rule) => (Outcome::from(rule.decision()), Some(rule)),
                None => (Outcome::Truncated, None),
            }
        }
        PolicyKind::TwoPass => {
            let mut two_pass = TwoPass::new(instance.query(), cfg.stop.delta)?;
            let stop = StopConfig {
                delta: two_pass.stage_delta(),
                ..cfg.stop
            };
            let rule = StoppingRule::new(stop)?;
            let mut result = (Outcome::Truncated, None);
            while let Some(query) = two_pass.stage_query() {
                let stage = Stage {
                    instance,
                    query,
                    rule,
                    cfg,
                };
                let budget = cfg.max_steps - tally.t;
                match stage.run(budget, &mut rng, &mut tally)? {
                    Some(fired) => {
                        if let Some(d) = two_pass.finish_stage(fired.decision()) {
                            result = (Outcome::from(d), Some(fired));
                        }
                    }
                    None => break,
                }
            }
            result
        }
    };

    let tau = tally.t;
    let proportions = if tau == 0 {
        vec![0.0; k]
    } else {
        tally.counts.iter().map(|&n| n as f64 / tau as f64).collect()
    };
    let correct = match decision {
        Outcome::Truncated => false,
        Outcome::Feasible => instance.truth() == Decision::Feasible,
        Outcome::Infeasible => instance.truth() == Decision::Infeasible,
    };
    Ok(RunRecord {
        decision,
        tau,
        fired,
        proportions,
        correct,
        seed,
        rejection_saturations: tally.saturations,
        trace: tally.trace,
        steps: tally.steps,
    })
}

/// Summary of a batch. Averages exclude truncated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub reps: usize,
    pub completed: usize,
    pub truncated: usize,
    pub mean_tau: f64,
    pub median_tau: f64,
    pub tau_std_err: f64,
    pub errors: usize,
    pub error_rate: f64,
    /// Exact (Clopper-Pearson) 95% interval for the error probability.
    pub error_ci: (f64, f64),
    pub mean_proportions: Vec<f64>,
    pub proportion_std_err: Vec<f64>,
    pub rejection_saturations: u64,
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Exact two-sided binomial confidence interval.
pub fn clopper_pearson(successes: usize, trials: usize, confidence: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let alpha = 1.0 - confidence;
    let (x, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0)
            .expect("positive shape parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x)
            .expect("positive shape parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lower, upper)
}

impl AggregateStats {
    pub fn from_records(records: &[RunRecord], arms: usize) -> Self {
        let done: Vec<&RunRecord> = records.iter().filter(|r| r.decision != Outcome::Truncated).collect();
        let completed = done.len();
        let (mean_tau, tau_std_err) = mean_and_se(done.iter().map(|r| r.tau as f64));
        let mut taus: Vec<u64> = done.iter().map(|r| r.tau).collect();
        taus.sort_unstable();
        let median_tau = match taus.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => taus[n / 2] as f64,
            n => (taus[n / 2 - 1] as f64 + taus[n / 2] as f64) / 2.0,
        };
        let errors = done.iter().filter(|r| !r.correct).count();
        let error_rate = if completed == 0 {
            f64::NAN
        } else {
            errors as f64 / completed as f64
        };
        let (mean_proportions, proportion_std_err) = (0..arms)
            .map(|a| mean_and_se(done.iter().map(move |r| r.proportions[a])))
            .unzip();
        Self {
            reps: records.len(),
            completed,
            truncated: records.len() - completed,
            mean_tau,
            median_tau,
            tau_std_err,
            errors,
            error_rate,
            error_ci: clopper_pearson(errors, completed, 0.95),
            mean_proportions,
            proportion_std_err,
            rejection_saturations: records.iter().map(|r| r.rejection_saturations).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub records: Vec<RunRecord>,
    pub stats: AggregateStats,
}

/// Runs `reps` independent simulations with seeds `base_seed + i`.
///
/// `threads` caps the worker count (`None` uses the global rayon pool).
/// Records come back in index order whatever the parallelism, and each run
/// depends only on its own seed, so the output is the same in every mode.
pub fn run_batch(
    instance: &BanditInstance,
    cfg: &RunConfig,
    reps: usize,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<BatchResult> {
    if reps == 0 {
        return Err(ChmError::Config("reps must be at least 1".into()));
    }
    cfg.validate()?;
    let one = |i: usize| run_once(instance, cfg, base_seed.wrapping_add(i as u64));
    let records: Result<Vec<RunRecord>> = match threads {
        Some(1) => (0..reps).map(one).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ChmError::Config(format!("cannot start worker pool: {e}")))?
            .install(|| (0..reps).into_par_iter().map(one).collect()),
        None => (0..reps).into_par_iter().map(one).collect(),
    };
    let records = records?;
    let stats = AggregateStats::from_records(&records, instance.num_arms());
    Ok(BatchResult { records, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bern_instance(means: &[f64], gamma: f64) -> BanditInstance {
        BanditInstance::new(ExpFamilyModel::bernoulli(), means.to_vec(), Query::point(gamma).unwrap()).unwrap()
    }

    #[test]
    fn instance_validation() {
        let m = ExpFamilyModel::bernoulli();
        assert!(BanditInstance::new(m, vec![], Query::point(0.5).unwrap()).is_err());
        assert!(BanditInstance::new(m, vec![0.5], Query::point(0.5).unwrap()).is_err());
        assert!(BanditInstance::new(m, vec![1.2], Query::point(0.5).unwrap()).is_err());
        assert!(BanditInstance::new(m, vec![0.2], Query::point(2.0).unwrap()).is_err());
    }

    #[test]
    fn single_arm_above_point_is_infeasible_via_tau1() {
        let inst = bern_instance(&[0.9], 0.5);
        let cfg = RunConfig::new(PolicyKind::ThompsonChm, 0.1).unwrap();
        let r = run_once(&inst, &cfg, 1).unwrap();
        assert_eq!(r.decision, Outcome::Infeasible);
        assert_eq!(r.fired, Some(StopRule::Tau1));
        assert!(r.correct);
        assert!(r.tau > 0 && r.tau < 1000);
        assert_eq!(r.proportions, vec![1.0]);
    }

    #[test]
    fn truncation_path() {
        let inst = bern_instance(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], 0.65);
        let mut cfg = RunConfig::new(PolicyKind::ThompsonChm, 0.01).unwrap();
        cfg.max_steps = 5;
        let r = run_once(&inst, &cfg, 3).unwrap();
        assert_eq!(r.decision, Outcome::Truncated);
        assert_eq!(r.tau, 5);
        assert!(!r.correct);
        assert_abs_diff_eq!(r.proportions.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(r.proportions.iter().all(|p| (p * 5.0).fract().abs() < 1e-12));
    }

    #[test]
    fn conservation_along_trace() {
        let inst = bern_instance(&[0.2, 0.5, 0.8], 0.45);
        let mut cfg = RunConfig::new(PolicyKind::ThompsonChm, 0.05).unwrap();
        cfg.trace_stride = 7;
        let r = run_once(&inst, &cfg, 11).unwrap();
        assert!(!r.trace.is_empty());
        for p in &r.trace {
            assert_eq!(p.counts.iter().sum::<u64>(), p.t);
            assert_eq!(p.t % 7, 0);
        }
        let total: Vec<f64> = r.proportions.iter().map(|p| p * r.tau as f64).collect();
        let last = r.trace.last().unwrap();
        for (a, n) in last.counts.iter().enumerate() {
            assert!(*n as f64 <= total[a] + 1e-9);
        }
    }

    #[test]
    fn replaying_rewards_reproduces_sums() {
        // the same seed must regenerate the same pull and reward stream
        let inst = bern_instance(&[0.3, 0.7], 0.5);
        let mut cfg = RunConfig::new(PolicyKind::ThompsonChm, 0.1).unwrap();
        cfg.record_steps = true;
        let a = run_once(&inst, &cfg, 5).unwrap();
        let b = run_once(&inst, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len() as u64, a.tau);
        let c = run_once(&inst, &cfg, 6).unwrap();
        assert_ne!(a.steps, c.steps);
    }

    #[test]
    fn uniform_policy_round_robin() {
        let inst = bern_instance(&[0.1, 0.9], 0.5);
        let cfg = RunConfig::new(PolicyKind::Uniform, 0.1).unwrap();
        let r = run_once(&inst, &cfg, 2).unwrap();
        assert_eq!(r.decision, Outcome::Feasible);
        assert!((r.proportions[0] - 0.5).abs() <= 0.5 / r.tau as f64 + 1e-12);
    }

    #[test]
    fn init_rounds_force_sweeps() {
        let inst = bern_instance(&[0.2, 0.4, 0.6, 0.8], 0.5);
        let mut cfg = RunConfig::new(PolicyKind::ThompsonChm, 0.1).unwrap();
        cfg.init_rounds = 3;
        cfg.trace_stride = 12;
        let r = run_once(&inst, &cfg, 4).unwrap();
        assert_eq!(r.trace[0].counts, vec![3, 3, 3, 3]);
    }

    #[test]
    fn two_pass_decisions() {
        let inst = bern_instance(&[0.6, 0.7], 0.5);
        let cfg = RunConfig::new(PolicyKind::TwoPass, 0.1).unwrap();
        // the first stage already rules out min < 0.5
        let r = run_once(&inst, &cfg, 8).unwrap();
        assert_eq!(r.decision, Outcome::Infeasible);
        assert!(r.correct);

        let inst = bern_instance(&[0.3, 0.7], 0.5);
        let r = run_once(&inst, &cfg, 8).unwrap();
        assert_eq!(r.decision, Outcome::Feasible);
        assert_eq!(r.fired, Some(StopRule::Tau3));
        assert!(r.correct);
    }

    #[test]
    fn two_pass_rejects_intervals() {
        let inst = BanditInstance::new(
            ExpFamilyModel::bernoulli(),
            vec![0.3, 0.7],
            Query::interval(0.4, 0.6).unwrap(),
        )
        .unwrap();
        let cfg = RunConfig::new(PolicyKind::TwoPass, 0.1).unwrap();
        assert!(run_once(&inst, &cfg, 0).is_err());
    }

    #[test]
    fn batch_of_one_matches_record() {
        let inst = bern_instance(&[0.2, 0.8], 0.4);
        let cfg = RunConfig::new(PolicyKind::ThompsonChm, 0.1).unwrap();
        let b = run_batch(&inst, &cfg, 1, 42, Some(1)).unwrap();
        let r = &b.records[0];
        assert_eq!(b.stats.mean_tau, r.tau as f64);
        assert_eq!(b.stats.median_tau, r.tau as f64);
        assert_eq!(b.stats.mean_proportions, r.proportions);
        assert_eq!(b.stats.tau_std_err, 0.0);
        assert_eq!(r.seed, 42);
    }

    #[test]
    fn batch_is_deterministic_across_modes() {
        let inst = bern_instance(&[0.2, 0.5, 0.8], 0.6);
        let cfg = RunConfig::new(PolicyKind::ThompsonChm, 0.1).unwrap();
        let serial = run_batch(&inst, &cfg, 12, 7, Some(1)).unwrap();
        let parallel = run_batch(&inst, &cfg, 12, 7, Some(4)).unwrap();
        let again = run_batch(&inst, &cfg, 12, 7, None).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial, again);
        assert!(run_batch(&inst, &cfg, 0, 7, None).is_err());
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // scipy.stats.binomtest(k, n).proportion_ci(method="exact")
        let (lo, hi) = clopper_pearson(0, 200, 0.95);
        assert_eq!(lo, 0.0);
        assert_abs_diff_eq!(hi, 0.018_275_340_355_148_8, epsilon = 1e-6);
        let (lo, hi) = clopper_pearson(5, 100, 0.95);
        assert_abs_diff_eq!(lo, 0.016_431_879_181_728_28, epsilon = 1e-6);
        assert_abs_diff_eq!(hi, 0.112_834_911_105_462_9, epsilon = 1e-6);
    }

    #[test]
    fn seed_mixing_decorrelates_neighbours() {
        assert_ne!(mix_seed(0), mix_seed(1));
        assert_ne!(mix_seed(1) ^ mix_seed(2), 3);
    }
}
