//! CSV emission.
//!
//! Column order is fixed and a header is always written. Reals use 17
//! significant digits so every value parses back to the same double.

use sha2::{Digest, Sha256};

use crate::engine::{AggregateStats, RunRecord};
use crate::oracle::{OracleResult, Query};

/// Round-trip exact text for a double.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

fn numbered(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |a| format!("{prefix}{a}"))
}

fn join_floats(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_float(v)).collect::<Vec<_>>().join(",")
}

/// First 16 hex digits of the SHA-256 of `canonical`.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    hex::encode(&digest[..8])
}

pub fn runs_header(k: usize) -> String {
    let mut cols: Vec<String> = ["run_index", "seed", "decision", "correct", "tau", "fired_rule", "rejection_saturations"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(numbered("prop_arm_", k));
    cols.join(",")
}

pub fn runs_csv(records: &[RunRecord], k: usize) -> String {
    let mut out = runs_header(k);
    out.push('\n');
    for (i, r) in records.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            i,
            r.seed,
            r.decision.as_str(),
            r.correct,
            r.tau,
            r.fired.map_or("none", |f| f.as_str()),
            r.rejection_saturations,
            join_floats(&r.proportions)
        ));
    }
    out
}

/// Everything in one summary row.
pub struct SummaryRow<'a> {
    pub hash: String,
    pub policy: &'a str,
    pub family: &'a str,
    pub query: Query,
    pub delta: f64,
    pub stats: &'a AggregateStats,
    pub oracle: &'a OracleResult,
    pub lower_bound: f64,
}

pub fn summary_header(k: usize) -> String {
    let mut cols: Vec<String> = [
        "config_hash",
        "policy",
        "family",
        "gamma_minus",
        "gamma_plus",
        "delta",
        "feasible",
        "reps",
        "completed",
        "truncated",
        "errors",
        "error_rate",
        "error_ci_low",
        "error_ci_high",
        "mean_tau",
        "median_tau",
        "tau_std_err",
        "rejection_saturations",
        "t_star",
        "lower_bound",
        "gamma_star",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(numbered("prop_arm_", k));
    cols.extend(numbered("prop_std_err_arm_", k));
    cols.extend(numbered("w_star_", k));
    cols.join(",")
}

pub fn summary_line(row: &SummaryRow<'_>) -> String {
    let s = row.stats;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.hash,
        row.policy,
        row.family,
        fmt_float(row.query.lower()),
        fmt_float(row.query.upper()),
        fmt_float(row.delta),
        row.oracle.feasible,
        s.reps,
        s.completed,
        s.truncated,
        s.errors,
        fmt_float(s.error_rate),
        fmt_float(s.error_ci.0),
        fmt_float(s.error_ci.1),
        fmt_float(s.mean_tau),
        fmt_float(s.median_tau),
        fmt_float(s.tau_std_err),
        s.rejection_saturations,
        fmt_float(row.oracle.t_star),
        fmt_float(row.lower_bound),
        row.oracle.gamma_star.map_or_else(|| "none".to_string(), fmt_float),
        join_floats(&s.mean_proportions),
        join_floats(&s.proportion_std_err),
        join_floats(&row.oracle.weights),
    )
}

pub fn oracle_header(k: usize, brute_force: bool) -> String {
    let mut cols: Vec<String> = ["gamma_minus", "gamma_plus", "delta", "feasible", "t_star", "gamma_star", "lower_bound"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(numbered("w_star_", k));
    if brute_force {
        cols.extend(["brute_force_value", "brute_force_t_star", "relative_gap"].iter().map(|s| s.to_string()));
    }
    cols.join(",")
}

pub fn oracle_line(q: &Query, delta: f64, oracle: &OracleResult, lower_bound: f64, brute_force: Option<f64>) -> String {
    let mut line = format!(
        "{},{},{},{},{},{},{},{}",
        fmt_float(q.lower()),
        fmt_float(q.upper()),
        fmt_float(delta),
        oracle.feasible,
        fmt_float(oracle.t_star),
        oracle.gamma_star.map_or_else(|| "none".to_string(), fmt_float),
        fmt_float(lower_bound),
        join_floats(&oracle.weights),
    );
    if let Some(value) = brute_force {
        let t = 1.0 / value;
        let gap = (t - oracle.t_star).abs() / oracle.t_star;
        line.push_str(&format!(",{},{},{}", fmt_float(value), fmt_float(t), fmt_float(gap)));
    }
    line
}
