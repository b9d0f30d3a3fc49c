//! Pass@k arithmetic and the benchmark harness.
//!
//! `pass_at_k` is the unbiased estimator 1 − C(n−c, k)/C(n, k) in its
//! overflow-safe product form. The harness runs n attempts per case through
//! a caller-supplied runner, scores each attempt against a configurable
//! success policy and emits per-case Pass@1/Pass@5 with a stage-of-failure
//! breakdown as CSV or Markdown.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("pass@k domain: {0}")]
    Domain(String),
    #[error("missing fixture for case {0}")]
    MissingFixture(String),
}

/// Probability that at least one of k samples drawn from n attempts with
/// c successes is a success: 1 − ∏_{i=0}^{k−1} (n−c−i)/(n−i).
///
/// Computed as (den − num)/den with exact integer-valued factors, so
/// `pass_at_k(n, c, 1)` is bit-identical to `c as f64 / n as f64`.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, EvalError> {
    if c > n {
        return Err(EvalError::Domain(format!("c = {c} exceeds n = {n}")));
    }
    if k == 0 || k > n {
        return Err(EvalError::Domain(format!("k = {k} outside 1..={n}")));
    }
    if k > n - c {
        // Fewer failures than draws: some draw must hit a success.
        return Ok(1.0);
    }
    let mut num = 1.0;
    let mut den = 1.0;
    for i in 0..k {
        num *= (n - c - i) as f64;
        den *= (n - i) as f64;
    }
    Ok((den - num) / den)
}

/// Pipeline stage an attempt failed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Netlist,
    Sizing,
    Placement,
    Routing,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Netlist, Stage::Sizing, Stage::Placement, Stage::Routing];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Netlist => "netlist",
            Stage::Sizing => "sizing",
            Stage::Placement => "placement",
            Stage::Routing => "routing",
        }
    }
}

/// Per-stage verdicts one attempt leaves behind. `None` means the stage
/// never ran because an earlier one aborted; a stage that ran but missed
/// its bar is `Some(false)`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AttemptEvidence {
    /// Fused netlist matches the golden netlist up to canonical form.
    pub netlist_exact: Option<bool>,
    /// Sizing met every spec target.
    pub spec_met: Option<bool>,
    /// Placement produced a legal arrangement.
    pub placed: Option<bool>,
    /// Routing completed with a clean DRC.
    pub drc_clean: Option<bool>,
    pub note: Option<String>,
}

/// Which stages count toward success. All on is the full criterion
/// (exact match ∧ spec met ∧ clean DRC); netlist-only scores topology
/// recovery alone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SuccessPolicy {
    pub netlist: bool,
    pub sizing: bool,
    pub layout: bool,
}

impl Default for SuccessPolicy {
    fn default() -> Self {
        SuccessPolicy {
            netlist: true,
            sizing: true,
            layout: true,
        }
    }
}

impl SuccessPolicy {
    pub fn netlist_only() -> Self {
        SuccessPolicy {
            netlist: true,
            sizing: false,
            layout: false,
        }
    }
}

impl AttemptEvidence {
    /// First policy-required stage that did not verify, in pipeline order.
    /// `None` means the attempt succeeded under this policy.
    pub fn failed_stage(&self, policy: &SuccessPolicy) -> Option<Stage> {
        let checks = [
            (policy.netlist, self.netlist_exact, Stage::Netlist),
            (policy.sizing, self.spec_met, Stage::Sizing),
            (policy.layout, self.placed, Stage::Placement),
            (policy.layout, self.drc_clean, Stage::Routing),
        ];
        checks
            .into_iter()
            .find(|(required, verdict, _)| *required && *verdict != Some(true))
            .map(|(_, _, stage)| stage)
    }
}

/// One benchmark case after n attempts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: String,
    pub n: usize,
    pub c: usize,
    /// Stage-of-failure per attempt; `None` is a success.
    pub failures: Vec<Option<Stage>>,
    pub pass_at_1: f64,
    pub pass_at_5: f64,
}

impl CaseResult {
    pub fn breakdown(&self) -> BTreeMap<Stage, usize> {
        let mut counts = BTreeMap::new();
        for f in self.failures.iter().flatten() {
            *counts.entry(*f).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    /// Configuration summary for the table caption (ablations, mode).
    pub label: String,
    pub policy: SuccessPolicy,
    pub cases: Vec<CaseResult>,
}

/// Run `n` attempts per case and score them. The runner maps
/// (case id, attempt index) to evidence; infrastructure problems such as a
/// missing fixture abort the benchmark, while attempts that merely fail a
/// stage are scored as failures.
pub fn run_benchmark<F>(
    cases: &[String],
    n: usize,
    policy: &SuccessPolicy,
    label: &str,
    run_attempt: F,
) -> Result<BenchReport, EvalError>
where
    F: Fn(&str, usize) -> Result<AttemptEvidence, EvalError>,
{
    let mut results = Vec::with_capacity(cases.len());
    for case in cases {
        let mut failures = Vec::with_capacity(n);
        for attempt in 0..n {
            let evidence = run_attempt(case, attempt)?;
            failures.push(evidence.failed_stage(policy));
        }
        let c = failures.iter().filter(|f| f.is_none()).count();
        results.push(CaseResult {
            case: case.clone(),
            n,
            c,
            pass_at_1: pass_at_k(n, c, 1)?,
            pass_at_5: pass_at_k(n, c, 5.min(n))?,
            failures,
        });
    }
    Ok(BenchReport {
        label: label.to_string(),
        policy: *policy,
        cases: results,
    })
}

fn percent(p: f64) -> String {
    format!("{:.1}", 100.0 * p)
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,n,c,pass_at_1,pass_at_5,netlist,sizing,placement,routing\n");
        for r in &self.cases {
            let b = r.breakdown();
            let count = |s: Stage| b.get(&s).copied().unwrap_or(0);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.case,
                r.n,
                r.c,
                percent(r.pass_at_1),
                percent(r.pass_at_5),
                count(Stage::Netlist),
                count(Stage::Sizing),
                count(Stage::Placement),
                count(Stage::Routing),
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n", self.label);
        out.push_str("| Case | n | c | Pass@1 | Pass@5 | Failed at |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for r in &self.cases {
            let breakdown = r.breakdown();
            let failed_at = if breakdown.is_empty() {
                "-".to_string()
            } else {
                breakdown
                    .iter()
                    .map(|(s, c)| format!("{} {c}", s.name()))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                r.case,
                r.n,
                r.c,
                percent(r.pass_at_1),
                percent(r.pass_at_5),
                failed_at,
            ));
        }
        out
    }
}
