//! Sampled monotonicity quantities and the monotonicity check.

use bl_core::{Error, Result};
use serde_json::{json, Value};

/// `t_k = t0 · ratio^k` for `k = 0..count`.
pub fn geometric_times(t0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| t0 * ratio.powi(k as i32)).collect()
}

/// 25 samples from 0.05 with ratio 1.3.
pub fn default_times() -> Vec<f64> {
    geometric_times(0.05, 1.3, 25)
}

pub(crate) fn check_times(times: &[f64], allow_zero: bool) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Domain("at least one time is required".into()));
    }
    let first_ok = if allow_zero { times[0] >= 0.0 } else { times[0] > 0.0 };
    if !first_ok || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("times must be finite and positive".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("times must be strictly increasing".into()));
    }
    Ok(())
}

/// Floor for error bounds: a few ulps of the value.
pub(crate) fn error_floor(q: f64) -> f64 {
    64.0 * f64::EPSILON * q.abs()
}

/// `|Q_h - Q_2h| / 3`, floored at roundoff level.
pub(crate) fn richardson(fine: f64, coarse: f64) -> f64 {
    ((fine - coarse).abs() / 3.0).max(error_floor(fine))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityTrace {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub error_bound: Vec<f64>,
    /// Expected large-time value, when one is known.
    pub limit: Option<f64>,
    /// Largest relative mass change of any evolved input.
    pub mass_drift: Option<f64>,
}

impl MonotonicityTrace {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>, error_bound: Vec<f64>) -> Result<Self> {
        check_times(&times, true)?;
        if values.len() != times.len() || error_bound.len() != times.len() {
            return Err(Error::Dimension("trace columns differ in length".into()));
        }
        if values.iter().chain(&error_bound).any(|v| !v.is_finite()) {
            return Err(Error::Domain("trace values must be finite".into()));
        }
        Ok(MonotonicityTrace {
            label: label.into(),
            times,
            values,
            error_bound,
            limit: None,
            mass_drift: None,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Whether every step rises by more than `factor` times the combined
    /// error bounds of its endpoints.
    pub fn strictly_increasing(&self, factor: f64) -> bool {
        (1..self.len())
            .all(|k| self.values[k] - self.values[k - 1] > factor * (self.error_bound[k] + self.error_bound[k - 1]))
    }

    /// Largest deviation from the first sample.
    pub fn max_spread(&self) -> f64 {
        let q0 = self.values[0];
        self.values.iter().map(|q| (q - q0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,Q,error_bound\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e}\n",
                self.times[k], self.values[k], self.error_bound[k]
            ));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "label": self.label,
            "times": self.times,
            "values": self.values,
            "error_bound": self.error_bound,
            "limit": self.limit,
            "mass_drift": self.mass_drift,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::NonDecreasing => "NonDecreasing",
            Direction::NonIncreasing => "NonIncreasing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub direction: Direction,
    pub passed: bool,
    pub violations: usize,
    /// Largest amount by which a step went the wrong way beyond its slack.
    pub worst_violation: f64,
    /// Index `k` of the worst step `k-1 -> k`.
    pub worst_index: Option<usize>,
}

impl CheckResult {
    pub fn to_json(&self) -> Value {
        json!({
            "direction": self.direction.as_str(),
            "passed": self.passed,
            "violations": self.violations,
            "worst_violation": self.worst_violation,
            "worst_index": self.worst_index,
        })
    }
}

/// Every consecutive step must respect `direction` up to the sum of the two
/// samples' error bounds.
pub fn assert_monotone(trace: &MonotonicityTrace, direction: Direction) -> CheckResult {
    let mut violations = 0;
    let mut worst = 0.0;
    let mut worst_index = None;
    for k in 1..trace.len() {
        let step = trace.values[k] - trace.values[k - 1];
        let wrong = match direction {
            Direction::NonDecreasing => -step,
            Direction::NonIncreasing => step,
        };
        let excess = wrong - (trace.error_bound[k] + trace.error_bound[k - 1]);
        if excess > 0.0 {
            violations += 1;
            if excess > worst {
                worst = excess;
                worst_index = Some(k);
            }
        }
    }
    CheckResult {
        direction,
        passed: violations == 0,
        violations,
        worst_violation: worst,
        worst_index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(values: &[f64], eb: f64) -> MonotonicityTrace {
        let times = (0..values.len()).map(|k| k as f64 + 1.0).collect();
        MonotonicityTrace::new("t", times, values.to_vec(), vec![eb; values.len()]).unwrap()
    }

    #[test]
    fn constant_trace_is_monotone_both_ways() {
        let t = trace(&[2.0; 5], 0.0);
        assert!(assert_monotone(&t, Direction::NonDecreasing).passed);
        assert!(assert_monotone(&t, Direction::NonIncreasing).passed);
    }

    #[test]
    fn rising_trace() {
        let t = trace(&[1.0, 1.1, 1.2], 1e-9);
        assert!(assert_monotone(&t, Direction::NonDecreasing).passed);
        let r = assert_monotone(&t, Direction::NonIncreasing);
        assert!(!r.passed);
        assert_eq!(r.violations, 2);
        assert!(t.strictly_increasing(3.0));
    }

    #[test]
    fn slack_absorbs_small_dips() {
        let t = trace(&[1.0, 0.9999, 1.1], 1e-4);
        assert!(assert_monotone(&t, Direction::NonDecreasing).passed);
        assert!(!t.strictly_increasing(3.0));
    }

    #[test]
    fn times_are_validated() {
        assert!(MonotonicityTrace::new("x", vec![1.0, 1.0], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(MonotonicityTrace::new("x", vec![1.0], vec![f64::NAN], vec![0.0]).is_err());
        assert_eq!(default_times().len(), 25);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = trace(&[1.0, 2.0], 0.0).to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("t,Q,error_bound"));
    }
}
