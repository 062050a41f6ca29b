use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::{Estimate, KsResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// One decision: a statistic confronted with a reference under a stated rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub rule: String,
    pub verdict: Verdict,
    /// Informational checks never affect the overall outcome.
    pub hard: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_bound: Option<f64>,
}

impl Check {
    /// `|mean − reference| ≤ 3·std_error + bias`, where `bias` names a
    /// deterministic allowance (truncation bias, finite-t discrepancy).
    pub fn mean(name: impl Into<String>, est: &Estimate, reference: f64, bias: f64, bias_label: &str) -> Self {
        let tolerance = 3.0 * est.std_error + bias;
        let dev = (est.mean - reference).abs();
        let rule = if bias > 0.0 {
            format!("pass iff |mean - reference| <= 3*std_error + {bias_label} ({bias:.3e})")
        } else {
            "pass iff |mean - reference| <= 3*std_error".to_string()
        };
        let c = Check {
            name: name.into(),
            statistic: est.mean,
            reference,
            tolerance,
            rule,
            verdict: Verdict::from_bool(dev <= tolerance),
            hard: true,
            std_error: Some(est.std_error),
            bias_bound: (bias > 0.0).then_some(bias),
        };
        if est.std_error == 0.0 && dev > tolerance {
            c.inconclusive("all replicas identical, the 3-sigma rule is degenerate")
        } else {
            c
        }
    }

    /// `|a − b| ≤ 3·sqrt(se_a² + se_b²)` for two independent estimates.
    pub fn difference(name: impl Into<String>, a: &Estimate, b: &Estimate) -> Self {
        let se = a.combined_se(b);
        let tolerance = 3.0 * se;
        Check {
            name: name.into(),
            statistic: a.mean,
            reference: b.mean,
            tolerance,
            rule: "pass iff |a - b| <= 3*sqrt(se_a^2 + se_b^2)".into(),
            verdict: Verdict::from_bool((a.mean - b.mean).abs() <= tolerance),
            hard: true,
            std_error: Some(se),
            bias_bound: None,
        }
    }

    pub fn ks(name: impl Into<String>, ks: &KsResult) -> Self {
        Check {
            name: name.into(),
            statistic: ks.p_value,
            reference: 0.01,
            tolerance: 0.0,
            rule: format!("pass iff KS p-value > 0.01 (D = {:.4e}, n_eff = {:.0})", ks.statistic, ks.effective_n),
            verdict: Verdict::from_bool(ks.p_value > 0.01),
            hard: true,
            std_error: None,
            bias_bound: None,
        }
    }

    /// `lo ≤ value ≤ hi`; `reference` records the target the corridor is built around.
    pub fn within(name: impl Into<String>, value: f64, reference: f64, lo: f64, hi: f64, rule: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            statistic: value,
            reference,
            tolerance: (hi - lo) / 2.0,
            rule: rule.into(),
            verdict: Verdict::from_bool(value >= lo && value <= hi),
            hard: true,
            std_error: None,
            bias_bound: None,
        }
    }

    pub fn informational(mut self) -> Self {
        self.hard = false;
        self
    }

    pub fn inconclusive(mut self, why: &str) -> Self {
        self.verdict = Verdict::Inconclusive;
        self.hard = false;
        self.rule = format!("{}; inconclusive: {why}", self.rule);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub seed: u64,
    pub replicas: usize,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    pub fn new(name: &str, seed: u64, replicas: usize) -> Self {
        ExperimentReport {
            name: name.into(),
            parameters: BTreeMap::new(),
            seed,
            replicas,
            checks: Vec::new(),
            notes: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.parameters.insert(key.into(), v);
        self
    }

    pub fn note(&mut self, s: impl Into<String>) -> &mut Self {
        self.notes.push(s.into());
        self
    }

    pub fn push(&mut self, c: Check) -> &mut Self {
        self.checks.push(c);
        self
    }

    /// True iff every hard check passes.
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.hard).all(|c| c.verdict == Verdict::Pass)
    }

    pub fn hard_counts(&self) -> (usize, usize) {
        let hard: Vec<&Check> = self.checks.iter().filter(|c| c.hard).collect();
        let pass = hard.iter().filter(|c| c.verdict == Verdict::Pass).count();
        (pass, hard.len())
    }

    pub fn summary_line(&self) -> String {
        let (p, n) = self.hard_counts();
        format!(
            "{}: {} ({p}/{n} hard checks passed, {} informational) seed={} replicas={}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.checks.len() - n,
            self.seed,
            self.replicas
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| crate::Error::Parse(e.to_string()))
    }
}

/// Per-replica statistics for external plotting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplicaTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ReplicaTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        ReplicaTable {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "replica,{}", self.columns.join(","))?;
        for (i, r) in self.rows.iter().enumerate() {
            write!(out, "{i}")?;
            for v in r {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// A report together with its per-replica table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub table: ReplicaTable,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(mean: f64, se: f64) -> Estimate {
        Estimate { mean, std_error: se, replicas: 10, seed: 0 }
    }

    #[test]
    fn mean_rule() {
        assert_eq!(Check::mean("a", &est(1.0, 0.1), 1.29, 0.0, "").verdict, Verdict::Pass);
        assert_eq!(Check::mean("a", &est(1.0, 0.1), 1.31, 0.0, "").verdict, Verdict::Fail);
        let c = Check::mean("a", &est(1.0, 0.1), 1.31, 0.02, "tail bias");
        assert_eq!(c.verdict, Verdict::Pass);
        assert!(c.rule.contains("tail bias"));
        assert_eq!(Check::mean("a", &est(1.0, 0.0), 1.0, 0.0, "").verdict, Verdict::Pass);
    }

    #[test]
    fn overall_outcome_ignores_informational_checks() {
        let mut r = ExperimentReport::new("x", 1, 2);
        r.push(Check::mean("a", &est(1.0, 0.1), 1.0, 0.0, ""));
        r.push(Check::mean("b", &est(1.0, 0.1), 5.0, 0.0, "").informational());
        assert!(r.passed());
        r.push(Check::mean("c", &est(1.0, 0.1), 5.0, 0.0, ""));
        assert!(!r.passed());
        let back = ExperimentReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn table_csv() {
        let mut t = ReplicaTable::new(["a", "b"]);
        t.rows.push(vec![1.0, 2.5]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "replica,a,b\n0,1.0000000000000000e0,2.5000000000000000e0\n");
    }
}
