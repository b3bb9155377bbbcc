//! Median aggregation and the degradation report.
//!
//! Responsiveness and launch time are gated by absolute thresholds, and only
//! count as degraded when the enforcer side crosses the threshold while the
//! baseline stays within it. Memory and energy are gated by relative
//! overhead against the baseline. All comparisons are strict (`more than`).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{EventName, PolicyMonitor, PolicyVerdict};
use crate::runner::{SampleOutcome, SuiteSamples, Verdict};

/// KPI thresholds; defaults can be overridden per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    #[serde(default = "default_responsiveness_ms")]
    pub responsiveness_ms: f64,
    #[serde(default = "default_launch_ms")]
    pub launch_ms: f64,
    #[serde(default = "default_overhead_pct")]
    pub memory_overhead_pct: f64,
    #[serde(default = "default_overhead_pct")]
    pub energy_overhead_pct: f64,
}

fn default_responsiveness_ms() -> f64 {
    200.0
}

fn default_launch_ms() -> f64 {
    5000.0
}

fn default_overhead_pct() -> f64 {
    5.0
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            responsiveness_ms: default_responsiveness_ms(),
            launch_ms: default_launch_ms(),
            memory_overhead_pct: default_overhead_pct(),
            energy_overhead_pct: default_overhead_pct(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompareError {
    #[error("samples contain no tests or no repetitions")]
    EmptySamples,
    #[error(
        "sample for test `{test_id}` ({variant}, repetition {repetition}) is an error: {message}"
    )]
    IncompleteSamples {
        test_id: String,
        variant: &'static str,
        repetition: usize,
        message: String,
    },
}

/// Which side of the differential run to aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    Enforcer,
}

impl Variant {
    fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Enforcer => "enforcer",
        }
    }
}

/// Suite-level medians for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantAggregates {
    /// Median across repetitions of each repetition's first-test launch.
    pub launch_ms: f64,
    /// Maximum over (test, action position) of the per-position median
    /// handler time.
    pub max_handler_ms: f64,
    /// Median across repetitions of each repetition's suite-wide peak.
    pub peak_memory_kb: f64,
    /// Median across repetitions of each repetition's suite-wide total.
    pub energy_units: f64,
}

/// Median with the even-count rule: mean of the two middle order statistics.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite KPI values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn kpi_matrix(
    samples: &SuiteSamples,
    variant: Variant,
) -> Result<Vec<Vec<&crate::runner::KpiRecord>>, CompareError> {
    let mut matrix = Vec::with_capacity(samples.tests.len());
    for test in &samples.tests {
        let outcomes = match variant {
            Variant::Baseline => &test.baseline,
            Variant::Enforcer => &test.enforcer,
        };
        let mut row = Vec::with_capacity(outcomes.len());
        for (repetition, outcome) in outcomes.iter().enumerate() {
            match outcome {
                SampleOutcome::Ok { kpis, .. } => row.push(kpis),
                SampleOutcome::Error { message } => {
                    return Err(CompareError::IncompleteSamples {
                        test_id: test.test_id.clone(),
                        variant: variant.name(),
                        repetition,
                        message: message.clone(),
                    })
                }
            }
        }
        matrix.push(row);
    }
    Ok(matrix)
}

/// Reduces one variant's samples to suite-level medians.
pub fn aggregate_medians(
    samples: &SuiteSamples,
    variant: Variant,
) -> Result<VariantAggregates, CompareError> {
    if samples.tests.is_empty() || samples.repetitions == 0 {
        return Err(CompareError::EmptySamples);
    }
    let matrix = kpi_matrix(samples, variant)?;
    let reps = samples.repetitions;

    let launches: Vec<f64> = (0..reps).map(|r| matrix[0][r].launch_ms as f64).collect();

    let mut handler_medians = Vec::new();
    for row in &matrix {
        let positions = row[0].action_handler_ms.len();
        for p in 0..positions {
            let values: Vec<f64> = (0..reps)
                .map(|r| row[r].action_handler_ms[p] as f64)
                .collect();
            handler_medians.push(median(&values));
        }
    }
    let max_handler_ms = handler_medians.iter().copied().fold(0.0_f64, f64::max);

    let peaks: Vec<f64> = (0..reps)
        .map(|r| {
            matrix
                .iter()
                .map(|row| row[r].peak_memory_kb as f64)
                .fold(0.0_f64, f64::max)
        })
        .collect();
    let energies: Vec<f64> = (0..reps)
        .map(|r| matrix.iter().map(|row| row[r].energy_units).sum())
        .collect();

    Ok(VariantAggregates {
        launch_ms: median(&launches),
        max_handler_ms,
        peak_memory_kb: median(&peaks),
        energy_units: median(&energies),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KpiVerdict {
    Ok,
    Degraded,
}

/// One row of the degradation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiEntry {
    pub name: String,
    pub baseline: f64,
    pub enforcer: f64,
    pub threshold: f64,
    pub verdict: KpiVerdict,
    pub detail: String,
    /// Per-repetition values for external boxplots.
    #[serde(default)]
    pub baseline_samples: Vec<f64>,
    #[serde(default)]
    pub enforcer_samples: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportVerdict {
    Ok,
    Degraded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalVerdict {
    Pass,
    Fail,
}

/// Summary of the differential oracles; a test passes only when every
/// repetition passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSummary {
    pub verdict: FunctionalVerdict,
    pub failing_tests: Vec<String>,
}

/// Policy evaluation of the collected api traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySection {
    /// Tests whose enforcer-side trace violated the policy (a finding).
    pub enforcer_violations: Vec<String>,
    /// Tests whose baseline trace violated the policy (informational; this
    /// is what the enforcer exists to fix).
    pub baseline_violations: Vec<String>,
}

/// Per-KPI verdicts plus the functional summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub kpis: Vec<KpiEntry>,
    pub overall: ReportVerdict,
    pub functional: FunctionalSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySection>,
}

impl DegradationReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// True when anything warrants a non-zero exit: a degraded KPI, a
    /// functional failure, or an enforcer-side policy violation.
    pub fn has_finding(&self) -> bool {
        self.overall == ReportVerdict::Degraded
            || self.functional.verdict == FunctionalVerdict::Fail
            || self
                .policy
                .as_ref()
                .is_some_and(|p| !p.enforcer_violations.is_empty())
    }
}

/// Applies the four degradation rules to a pair of aggregates.
pub fn compare(
    base: &VariantAggregates,
    enf: &VariantAggregates,
    thresholds: &Thresholds,
) -> Vec<KpiEntry> {
    vec![
        absolute_rule(
            "responsiveness",
            base.max_handler_ms,
            enf.max_handler_ms,
            thresholds.responsiveness_ms,
            "ms",
        ),
        absolute_rule(
            "launch_time",
            base.launch_ms,
            enf.launch_ms,
            thresholds.launch_ms,
            "ms",
        ),
        relative_rule(
            "memory",
            base.peak_memory_kb,
            enf.peak_memory_kb,
            thresholds.memory_overhead_pct,
            "kb",
        ),
        relative_rule(
            "energy",
            base.energy_units,
            enf.energy_units,
            thresholds.energy_overhead_pct,
            "units",
        ),
    ]
}

/// Degraded only when the enforcer side exceeds the threshold while the
/// baseline stays within it.
fn absolute_rule(name: &str, base: f64, enf: f64, threshold: f64, unit: &str) -> KpiEntry {
    let degraded = enf > threshold && base <= threshold;
    let detail = if degraded {
        format!("enforcer median {enf} {unit} exceeds {threshold} {unit}; baseline {base} {unit} is within the bound")
    } else if enf > threshold {
        format!("both variants exceed {threshold} {unit}; not attributable to the enforcer")
    } else {
        format!("enforcer median {enf} {unit} within {threshold} {unit}")
    };
    KpiEntry {
        name: name.into(),
        baseline: base,
        enforcer: enf,
        threshold,
        verdict: if degraded {
            KpiVerdict::Degraded
        } else {
            KpiVerdict::Ok
        },
        detail,
        baseline_samples: Vec::new(),
        enforcer_samples: Vec::new(),
    }
}

fn relative_rule(name: &str, base: f64, enf: f64, threshold_pct: f64, unit: &str) -> KpiEntry {
    let (degraded, detail) = if base == 0.0 {
        if enf > 0.0 {
            (
                true,
                format!("undefined relative overhead: baseline 0 {unit}, enforcer {enf} {unit}"),
            )
        } else {
            (false, "both medians are zero".to_string())
        }
    } else {
        let overhead_pct = (enf - base) / base * 100.0;
        (
            overhead_pct > threshold_pct,
            format!("overhead {overhead_pct:.4}% vs. allowed {threshold_pct}%"),
        )
    };
    KpiEntry {
        name: name.into(),
        baseline: base,
        enforcer: enf,
        threshold: threshold_pct,
        verdict: if degraded {
            KpiVerdict::Degraded
        } else {
            KpiVerdict::Ok
        },
        detail,
        baseline_samples: Vec::new(),
        enforcer_samples: Vec::new(),
    }
}

fn functional_summary(samples: &SuiteSamples) -> FunctionalSummary {
    let mut failing = Vec::new();
    for test in &samples.tests {
        if !test.verdicts.iter().all(|v| matches!(v, Verdict::Pass)) {
            failing.push(test.test_id.clone());
        }
    }
    FunctionalSummary {
        verdict: if failing.is_empty() {
            FunctionalVerdict::Pass
        } else {
            FunctionalVerdict::Fail
        },
        failing_tests: failing,
    }
}

fn policy_section(samples: &SuiteSamples, monitor: &PolicyMonitor) -> PolicySection {
    let alphabet: BTreeSet<&EventName> = monitor.alphabet.iter().collect();
    let mut enforcer_violations = Vec::new();
    let mut baseline_violations = Vec::new();
    for test in &samples.tests {
        let violated = |outcomes: &[SampleOutcome]| {
            outcomes.iter().any(|o| {
                o.api_trace().is_some_and(|trace| {
                    let filtered: Vec<EventName> = trace
                        .iter()
                        .filter(|e| alphabet.contains(*e))
                        .cloned()
                        .collect();
                    matches!(monitor.check(&filtered), Ok(PolicyVerdict::Violated { .. }))
                })
            })
        };
        if violated(&test.enforcer) {
            enforcer_violations.push(test.test_id.clone());
        }
        if violated(&test.baseline) {
            baseline_violations.push(test.test_id.clone());
        }
    }
    PolicySection {
        enforcer_violations,
        baseline_violations,
    }
}

/// Echo vectors: one value per repetition, using the same per-repetition
/// statistic the aggregate is built from (for responsiveness, the run's
/// maximum handler time).
fn kpi_echo(samples: &SuiteSamples, variant: Variant) -> Option<[Vec<f64>; 4]> {
    let matrix = kpi_matrix(samples, variant).ok()?;
    let reps = samples.repetitions;
    let launches = (0..reps).map(|r| matrix[0][r].launch_ms as f64).collect();
    let handlers = (0..reps)
        .map(|r| {
            matrix
                .iter()
                .flat_map(|row| row[r].action_handler_ms.iter())
                .copied()
                .fold(0.0_f64, |acc, v| acc.max(v as f64))
        })
        .collect();
    let peaks = (0..reps)
        .map(|r| {
            matrix
                .iter()
                .map(|row| row[r].peak_memory_kb as f64)
                .fold(0.0_f64, f64::max)
        })
        .collect();
    let energies = (0..reps)
        .map(|r| matrix.iter().map(|row| row[r].energy_units).sum())
        .collect();
    Some([handlers, launches, peaks, energies])
}

/// Per-test medians of one KPI, rendered as `id base/enf` pairs. Memory and
/// energy verdicts are suite-level; this is the diagnosis trail.
fn per_test_breakdown(
    samples: &SuiteSamples,
    kpi: impl Fn(&crate::runner::KpiRecord) -> f64,
) -> Result<String, CompareError> {
    let base = kpi_matrix(samples, Variant::Baseline)?;
    let enf = kpi_matrix(samples, Variant::Enforcer)?;
    let parts: Vec<String> = samples
        .tests
        .iter()
        .enumerate()
        .map(|(i, test)| {
            let med = |rows: &[&crate::runner::KpiRecord]| {
                median(&rows.iter().map(|r| kpi(r)).collect::<Vec<_>>())
            };
            format!("{} {}/{}", test.test_id, med(&base[i]), med(&enf[i]))
        })
        .collect();
    Ok(parts.join(", "))
}

/// Aggregates both variants, applies the rules, and assembles the report.
pub fn build_report(
    samples: &SuiteSamples,
    thresholds: &Thresholds,
    policy: Option<&PolicyMonitor>,
) -> Result<DegradationReport, CompareError> {
    let base = aggregate_medians(samples, Variant::Baseline)?;
    let enf = aggregate_medians(samples, Variant::Enforcer)?;
    let mut kpis = compare(&base, &enf, thresholds);
    if let (Some(base_echo), Some(enf_echo)) = (
        kpi_echo(samples, Variant::Baseline),
        kpi_echo(samples, Variant::Enforcer),
    ) {
        for (entry, (b, e)) in kpis.iter_mut().zip(base_echo.into_iter().zip(enf_echo)) {
            entry.baseline_samples = b;
            entry.enforcer_samples = e;
        }
    }
    for entry in kpis.iter_mut() {
        let breakdown = match entry.name.as_str() {
            "memory" => per_test_breakdown(samples, |r| r.peak_memory_kb as f64)?,
            "energy" => per_test_breakdown(samples, |r| r.energy_units)?,
            _ => continue,
        };
        entry.detail.push_str(&format!(
            "; per-test medians (baseline/enforcer): {breakdown}"
        ));
    }
    let overall = if kpis.iter().any(|k| k.verdict == KpiVerdict::Degraded) {
        ReportVerdict::Degraded
    } else {
        ReportVerdict::Ok
    };
    Ok(DegradationReport {
        kpis,
        overall,
        functional: functional_summary(samples),
        policy: policy.map(|monitor| policy_section(samples, monitor)),
    })
}

/// Aligned text table plus the functional and policy summaries.
pub fn render_text(report: &DegradationReport) -> String {
    let mut rows = vec![[
        "kpi".to_string(),
        "baseline".to_string(),
        "enforcer".to_string(),
        "threshold".to_string(),
        "verdict".to_string(),
    ]];
    for kpi in &report.kpis {
        rows.push([
            kpi.name.clone(),
            format!("{:.2}", kpi.baseline),
            format!("{:.2}", kpi.enforcer),
            format!("{:.2}", kpi.threshold),
            match kpi.verdict {
                KpiVerdict::Ok => "ok".into(),
                KpiVerdict::Degraded => "DEGRADED".into(),
            },
        ]);
    }
    let widths: Vec<usize> = (0..5)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<width$}", width = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    for kpi in &report.kpis {
        if kpi.verdict == KpiVerdict::Degraded {
            out.push_str(&format!("  {}: {}\n", kpi.name, kpi.detail));
        }
    }
    out.push_str(&format!(
        "functional: {}\n",
        match report.functional.verdict {
            FunctionalVerdict::Pass => "pass".to_string(),
            FunctionalVerdict::Fail => {
                format!("FAIL ({})", report.functional.failing_tests.join(", "))
            }
        }
    ));
    if let Some(policy) = &report.policy {
        if policy.enforcer_violations.is_empty() {
            out.push_str("policy: enforcer traces satisfy the policy\n");
        } else {
            out.push_str(&format!(
                "policy: VIOLATED by enforcer traces ({})\n",
                policy.enforcer_violations.join(", ")
            ));
        }
        if !policy.baseline_violations.is_empty() {
            out.push_str(&format!(
                "policy: baseline violations on {} (expected without the enforcer)\n",
                policy.baseline_violations.join(", ")
            ));
        }
    }
    out.push_str(&format!(
        "overall: {}\n",
        match report.overall {
            ReportVerdict::Ok => "ok (exit 0)",
            ReportVerdict::Degraded => "degraded (exit 1)",
        }
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::{ClockMode, KpiRecord, SampleOutcome, SuiteSamples, TestSamples, Verdict};

    fn record(launch: u64, handlers: &[u64], peak: u64, energy: f64) -> KpiRecord {
        KpiRecord {
            launch_ms: launch,
            action_handler_ms: handlers.to_vec(),
            peak_memory_kb: peak,
            energy_units: energy,
        }
    }

    fn ok(kpis: KpiRecord) -> SampleOutcome {
        SampleOutcome::Ok {
            api_trace: vec![],
            kpis,
        }
    }

    /// One test, constant KPIs per variant across `reps` repetitions.
    fn constant_samples(reps: usize, base: KpiRecord, enf: KpiRecord) -> SuiteSamples {
        SuiteSamples {
            repetitions: reps,
            clock: ClockMode::Virtual,
            energy_alpha: 1.0,
            seed: 0,
            tests: vec![TestSamples {
                test_id: "t0".into(),
                target: crate::hsi::InputSequence::empty(),
                baseline: (0..reps).map(|_| ok(base.clone())).collect(),
                enforcer: (0..reps).map(|_| ok(enf.clone())).collect(),
                verdicts: (0..reps).map(|_| Verdict::Pass).collect(),
            }],
        }
    }

    fn aggregates(launch: f64, handler: f64, memory: f64, energy: f64) -> VariantAggregates {
        VariantAggregates {
            launch_ms: launch,
            max_handler_ms: handler,
            peak_memory_kb: memory,
            energy_units: energy,
        }
    }

    fn verdict_of<'a>(entries: &'a [KpiEntry], name: &str) -> &'a KpiEntry {
        entries.iter().find(|e| e.name == name).unwrap()
    }

    #[test]
    fn median_follows_the_even_count_rule() {
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn aggregate_medians_of_constant_energies() {
        let samples = constant_samples(
            10,
            record(800, &[10], 1000, 100.0),
            record(800, &[10], 1000, 114.0),
        );
        let base = aggregate_medians(&samples, Variant::Baseline).unwrap();
        let enf = aggregate_medians(&samples, Variant::Enforcer).unwrap();
        assert_eq!(base.energy_units, 100.0);
        assert_eq!(enf.energy_units, 114.0);
    }

    #[test]
    fn aggregate_medians_single_repetition_is_the_value() {
        let samples = constant_samples(
            1,
            record(42, &[5, 9], 77, 3.5),
            record(42, &[5, 9], 77, 3.5),
        );
        let base = aggregate_medians(&samples, Variant::Baseline).unwrap();
        assert_eq!(base.launch_ms, 42.0);
        assert_eq!(base.max_handler_ms, 9.0);
        assert_eq!(base.peak_memory_kb, 77.0);
        assert_eq!(base.energy_units, 3.5);
    }

    #[test]
    fn aggregate_medians_reject_empty_and_errored_samples() {
        let empty = SuiteSamples {
            repetitions: 0,
            clock: ClockMode::Virtual,
            energy_alpha: 1.0,
            seed: 0,
            tests: vec![],
        };
        assert!(matches!(
            aggregate_medians(&empty, Variant::Baseline),
            Err(CompareError::EmptySamples)
        ));

        let mut samples = constant_samples(2, record(1, &[1], 1, 1.0), record(1, &[1], 1, 1.0));
        samples.tests[0].baseline[1] = SampleOutcome::Error {
            message: "boom".into(),
        };
        assert!(matches!(
            aggregate_medians(&samples, Variant::Baseline),
            Err(CompareError::IncompleteSamples { repetition: 1, .. })
        ));
    }

    #[test]
    fn energy_rule_flags_fourteen_percent() {
        let entries = compare(
            &aggregates(800.0, 50.0, 1000.0, 100.0),
            &aggregates(800.0, 50.0, 1000.0, 114.0),
            &Thresholds::default(),
        );
        assert_eq!(verdict_of(&entries, "energy").verdict, KpiVerdict::Degraded);
    }

    #[test]
    fn memory_rule_tolerates_four_percent() {
        let entries = compare(
            &aggregates(800.0, 50.0, 100000.0, 100.0),
            &aggregates(800.0, 50.0, 104000.0, 100.0),
            &Thresholds::default(),
        );
        assert_eq!(verdict_of(&entries, "memory").verdict, KpiVerdict::Ok);
    }

    #[test]
    fn responsiveness_rule_flags_crossing_the_bound() {
        let entries = compare(
            &aggregates(800.0, 50.0, 1000.0, 100.0),
            &aggregates(800.0, 250.0, 1000.0, 100.0),
            &Thresholds::default(),
        );
        assert_eq!(
            verdict_of(&entries, "responsiveness").verdict,
            KpiVerdict::Degraded
        );
    }

    #[test]
    fn thresholds_are_strict_inequalities() {
        let entries = compare(
            &aggregates(800.0, 50.0, 1000.0, 100.0),
            &aggregates(5000.0, 200.0, 1050.0, 105.0),
            &Thresholds::default(),
        );
        for entry in &entries {
            assert_eq!(
                entry.verdict,
                KpiVerdict::Ok,
                "{} flagged at the boundary",
                entry.name
            );
        }
    }

    #[test]
    fn absolute_rules_require_a_clean_baseline() {
        // Both variants over the bound: not attributable to the enforcer.
        let entries = compare(
            &aggregates(5500.0, 250.0, 1000.0, 100.0),
            &aggregates(6000.0, 300.0, 1000.0, 100.0),
            &Thresholds::default(),
        );
        assert_eq!(
            verdict_of(&entries, "responsiveness").verdict,
            KpiVerdict::Ok
        );
        assert_eq!(verdict_of(&entries, "launch_time").verdict, KpiVerdict::Ok);
    }

    #[test]
    fn zero_baseline_with_nonzero_enforcer_is_degraded_by_definition() {
        let entries = compare(
            &aggregates(800.0, 50.0, 0.0, 0.0),
            &aggregates(800.0, 50.0, 10.0, 0.0),
            &Thresholds::default(),
        );
        let memory = verdict_of(&entries, "memory");
        assert_eq!(memory.verdict, KpiVerdict::Degraded);
        assert!(memory.detail.contains("undefined relative overhead"));
        assert_eq!(verdict_of(&entries, "energy").verdict, KpiVerdict::Ok);
    }

    #[test]
    fn launch_rule_flags_startup_regression() {
        let entries = compare(
            &aggregates(800.0, 50.0, 1000.0, 100.0),
            &aggregates(6800.0, 50.0, 1000.0, 100.0),
            &Thresholds::default(),
        );
        assert_eq!(
            verdict_of(&entries, "launch_time").verdict,
            KpiVerdict::Degraded
        );
    }

    #[test]
    fn custom_thresholds_are_respected() {
        let tight = Thresholds {
            energy_overhead_pct: 1.0,
            ..Thresholds::default()
        };
        let entries = compare(
            &aggregates(800.0, 50.0, 1000.0, 100.0),
            &aggregates(800.0, 50.0, 1000.0, 102.0),
            &tight,
        );
        assert_eq!(verdict_of(&entries, "energy").verdict, KpiVerdict::Degraded);
    }

    #[test]
    fn thresholds_file_may_be_partial() {
        let parsed: Thresholds = serde_json::from_str(r#"{ "launch_ms": 2000.0 }"#).unwrap();
        assert_eq!(parsed.launch_ms, 2000.0);
        assert_eq!(parsed.responsiveness_ms, 200.0);
        assert_eq!(parsed.memory_overhead_pct, 5.0);
    }

    #[test]
    fn report_overall_tracks_kpi_verdicts_and_functional_is_separate() {
        let clean = constant_samples(
            4,
            record(800, &[50], 1000, 100.0),
            record(800, &[50], 1010, 101.0),
        );
        let report = build_report(&clean, &Thresholds::default(), None).unwrap();
        assert_eq!(report.overall, ReportVerdict::Ok);
        assert_eq!(report.functional.verdict, FunctionalVerdict::Pass);
        assert!(!report.has_finding());

        let mut failing = clean.clone();
        failing.tests[0].verdicts[2] = Verdict::Fail {
            reason: "traces differ".into(),
            index: 0,
        };
        let report = build_report(&failing, &Thresholds::default(), None).unwrap();
        assert_eq!(
            report.overall,
            ReportVerdict::Ok,
            "functional failures do not flip overall"
        );
        assert_eq!(report.functional.verdict, FunctionalVerdict::Fail);
        assert_eq!(report.functional.failing_tests, vec!["t0"]);
        assert!(report.has_finding());
    }

    #[test]
    fn report_echoes_per_repetition_samples() {
        let samples = constant_samples(
            3,
            record(800, &[50], 1000, 100.0),
            record(800, &[50], 1000, 114.0),
        );
        let report = build_report(&samples, &Thresholds::default(), None).unwrap();
        let energy = report.kpis.iter().find(|k| k.name == "energy").unwrap();
        assert_eq!(energy.baseline_samples, vec![100.0; 3]);
        assert_eq!(energy.enforcer_samples, vec![114.0; 3]);
    }

    #[test]
    fn suite_level_entries_carry_per_test_breakdowns() {
        let samples = constant_samples(
            3,
            record(800, &[50], 1000, 100.0),
            record(800, &[50], 1040, 114.0),
        );
        let report = build_report(&samples, &Thresholds::default(), None).unwrap();
        let memory = report.kpis.iter().find(|k| k.name == "memory").unwrap();
        assert!(
            memory.detail.contains("per-test medians"),
            "{}",
            memory.detail
        );
        assert!(memory.detail.contains("t0 1000/1040"), "{}", memory.detail);
        let energy = report.kpis.iter().find(|k| k.name == "energy").unwrap();
        assert!(energy.detail.contains("t0 100/114"), "{}", energy.detail);
        let responsiveness = report
            .kpis
            .iter()
            .find(|k| k.name == "responsiveness")
            .unwrap();
        assert!(!responsiveness.detail.contains("per-test"));
    }

    #[test]
    fn render_text_lists_degradations_and_exit_hint() {
        let samples = constant_samples(
            2,
            record(800, &[50], 1000, 100.0),
            record(800, &[50], 1000, 114.0),
        );
        let report = build_report(&samples, &Thresholds::default(), None).unwrap();
        let text = render_text(&report);
        assert!(text.contains("DEGRADED"));
        assert!(text.contains("overall: degraded (exit 1)"));

        let clean = constant_samples(
            2,
            record(800, &[50], 1000, 100.0),
            record(800, &[50], 1000, 100.0),
        );
        let report = build_report(&clean, &Thresholds::default(), None).unwrap();
        assert!(render_text(&report).contains("overall: ok (exit 0)"));
    }

    #[test]
    fn report_json_round_trip() {
        let samples = constant_samples(
            2,
            record(800, &[50], 1000, 100.0),
            record(800, &[50], 1000, 114.0),
        );
        let report = build_report(&samples, &Thresholds::default(), None).unwrap();
        let parsed = DegradationReport::from_json(&report.to_json()).unwrap();
        assert_eq!(report, parsed);
    }

    #[test]
    fn policy_section_separates_enforcer_and_baseline_violations() {
        let monitor = crate::fixtures::camera_policy();
        let mut samples = constant_samples(
            1,
            record(800, &[50], 1000, 100.0),
            record(800, &[50], 1000, 100.0),
        );
        samples.tests[0].baseline[0] = SampleOutcome::Ok {
            api_trace: vec!["camera.open".into(), "activity.onPause".into()],
            kpis: record(800, &[50], 1000, 100.0),
        };
        samples.tests[0].enforcer[0] = SampleOutcome::Ok {
            api_trace: vec![
                "camera.open".into(),
                "camera.release".into(),
                "activity.onPause".into(),
            ],
            kpis: record(800, &[50], 1000, 100.0),
        };
        let report = build_report(&samples, &Thresholds::default(), Some(&monitor)).unwrap();
        let policy = report.policy.as_ref().unwrap();
        assert!(policy.enforcer_violations.is_empty());
        assert_eq!(policy.baseline_violations, vec!["t0"]);
        assert!(!report.has_finding());

        // Flip the traces: a violating enforcer trace is a finding.
        samples.tests[0].enforcer[0] = SampleOutcome::Ok {
            api_trace: vec!["camera.open".into(), "activity.onPause".into()],
            kpis: record(800, &[50], 1000, 100.0),
        };
        let report = build_report(&samples, &Thresholds::default(), Some(&monitor)).unwrap();
        assert_eq!(
            report.policy.as_ref().unwrap().enforcer_violations,
            vec!["t0"]
        );
        assert!(report.has_finding());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Aggregating any permutation of the repetitions is identical.
            #[test]
            fn median_is_permutation_invariant(
                mut values in proptest::collection::vec(0.0_f64..1e6, 1..20),
                seed in 0u64..1000
            ) {
                let original = median(&values);
                // Deterministic shuffle driven by the seed.
                let n = values.len();
                let mut state = seed;
                for i in (1..n).rev() {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let j = (state >> 33) as usize % (i + 1);
                    values.swap(i, j);
                }
                prop_assert_eq!(median(&values), original);
            }

            /// Raising every enforcer-side energy sample never turns a
            /// degraded energy verdict back to ok.
            #[test]
            fn energy_verdict_is_monotone(
                base in proptest::collection::vec(1.0_f64..1e4, 1..12),
                enf in proptest::collection::vec(1.0_f64..1e4, 1..12),
                bump in 0.0_f64..1e4
            ) {
                let rule = |enf_median: f64| {
                    let b = median(&base);
                    (enf_median - b) / b * 100.0 > 5.0
                };
                let before = rule(median(&enf));
                let bumped: Vec<f64> = enf.iter().map(|v| v + bump).collect();
                let after = rule(median(&bumped));
                if before {
                    prop_assert!(after);
                }
            }
        }
    }
}
