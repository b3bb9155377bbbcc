//! Two-variant test execution with fault injection and KPI collection.
//!
//! Each concrete test runs against a baseline deployment (no enforcer; `api`
//! events echo `req` events) and an enforcer deployment (alphabet events are
//! fed through the enforcement machine, everything else passes through).
//! The app relaunches per test, so the deployed enforcer restarts with it.
//!
//! Two clock modes exist. The virtual clock charges declared costs only and
//! is fully deterministic; it is the default and what the acceptance gate
//! uses. The wall clock actually sleeps, spins, and allocates for the
//! injected fault magnitudes and reports measured overheads.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::appsim::Driver;
use crate::concretize::{ConcreteTest, OracleKind};
use crate::hsi::InputSequence;
use crate::model::{EnforcementModel, EventName};

/// Declared-cost accounting vs. real sleeps and spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Virtual,
    Wall,
}

/// Execution configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub repetitions: usize,
    pub clock: ClockMode,
    /// Energy units charged per cpu millisecond.
    pub energy_alpha: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            repetitions: 10,
            clock: ClockMode::Virtual,
            energy_alpha: 1.0,
            seed: 0,
        }
    }
}

/// A performance bug injected into the enforcer deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FaultSpec {
    /// Extra delay per intercepted alphabet event (sleep; not CPU work).
    #[serde(rename = "responsivenessDelay")]
    ResponsivenessDelay { ms: u64 },
    /// Extra delay during deployment initialization.
    #[serde(rename = "startupDelay")]
    StartupDelay { ms: u64 },
    /// Busy CPU work per intercepted alphabet event (counts as CPU time).
    #[serde(rename = "cpuHog")]
    CpuHog { ms: u64 },
    /// Memory allocated per intercepted alphabet event and never freed.
    #[serde(rename = "memoryLeak")]
    MemoryLeak { kb: u64 },
}

impl FaultSpec {
    /// Parses the CLI form `kind=value`, e.g. `responsivenessDelay=250`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let (kind, value) = text
            .split_once('=')
            .ok_or_else(|| format!("expected `kind=value`, got `{text}`"))?;
        let magnitude: u64 = value
            .trim()
            .parse()
            .map_err(|_| format!("fault magnitude `{value}` is not a non-negative integer"))?;
        match kind.trim() {
            "responsivenessDelay" => Ok(FaultSpec::ResponsivenessDelay { ms: magnitude }),
            "startupDelay" => Ok(FaultSpec::StartupDelay { ms: magnitude }),
            "cpuHog" => Ok(FaultSpec::CpuHog { ms: magnitude }),
            "memoryLeak" => Ok(FaultSpec::MemoryLeak { kb: magnitude }),
            other => Err(format!(
                "unknown fault kind `{other}` (expected responsivenessDelay, startupDelay, cpuHog, or memoryLeak)"
            )),
        }
    }
}

/// What runs alongside the app: nothing, or an enforcer (optionally faulty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Deployment {
    Baseline,
    Enforcer {
        model: EnforcementModel,
        fault: Option<FaultSpec>,
        /// Fixed allocation charged at deployment init for the enforcer's
        /// own state tracking.
        bookkeeping_kb: u64,
    },
}

impl Deployment {
    pub fn baseline() -> Self {
        Deployment::Baseline
    }

    pub fn enforcer(model: EnforcementModel) -> Self {
        Deployment::Enforcer {
            model,
            fault: None,
            bookkeeping_kb: 0,
        }
    }

    pub fn with_bookkeeping(self, kb: u64) -> Self {
        match self {
            Deployment::Enforcer { model, fault, .. } => Deployment::Enforcer {
                model,
                fault,
                bookkeeping_kb: kb,
            },
            baseline => baseline,
        }
    }
}

/// Attaches a fault to an enforcer deployment; at most one fault is active.
pub fn inject_fault(deployment: Deployment, fault: FaultSpec) -> Result<Deployment, RunError> {
    match deployment {
        Deployment::Enforcer {
            model,
            bookkeeping_kb,
            ..
        } => Ok(Deployment::Enforcer {
            model,
            fault: Some(fault),
            bookkeeping_kb,
        }),
        Deployment::Baseline => Err(RunError::FaultOnBaseline),
    }
}

/// One run's KPI values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    /// Time to the first displayed frame, including deployment init.
    pub launch_ms: u64,
    /// Handler time per UI action, in action order.
    pub action_handler_ms: Vec<u64>,
    /// Running maximum of accounted memory.
    pub peak_memory_kb: u64,
    /// `energy_alpha × total cpu ms + Σ declared action energy`.
    pub energy_units: f64,
}

/// Result of one test execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestExecution {
    pub api_trace: Vec<EventName>,
    pub kpis: KpiRecord,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("faults can only be injected into enforcer deployments")]
    FaultOnBaseline,
    #[error("deployment pair must be (baseline, enforcer)")]
    DeploymentMismatch,
    #[error("driver error: {0}")]
    Driver(#[from] crate::appsim::DriverError),
    #[error(
        "enforcement model has no transition for alphabet event `{event}` in state `{state}` \
         (event {index} of the req trace); the model is incomplete for this app"
    )]
    UndefinedEnforcerTransition {
        state: String,
        event: EventName,
        index: usize,
    },
    #[error("suite must contain at least one test")]
    EmptySuite,
}

/// Differential verdict for one repetition of one test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail {
        reason: String,
        index: usize,
    },
    /// The test could not be executed or compared; distinct from an oracle
    /// failure.
    Error {
        message: String,
    },
}

/// Outcome of one (test, variant, repetition) execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SampleOutcome {
    Ok {
        api_trace: Vec<EventName>,
        kpis: KpiRecord,
    },
    Error {
        message: String,
    },
}

impl SampleOutcome {
    pub fn kpis(&self) -> Option<&KpiRecord> {
        match self {
            SampleOutcome::Ok { kpis, .. } => Some(kpis),
            SampleOutcome::Error { .. } => None,
        }
    }

    pub fn api_trace(&self) -> Option<&[EventName]> {
        match self {
            SampleOutcome::Ok { api_trace, .. } => Some(api_trace),
            SampleOutcome::Error { .. } => None,
        }
    }
}

/// Samples for one test across both variants and all repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSamples {
    pub test_id: String,
    pub target: InputSequence,
    pub baseline: Vec<SampleOutcome>,
    pub enforcer: Vec<SampleOutcome>,
    /// Differential verdict per repetition.
    pub verdicts: Vec<Verdict>,
}

/// Everything a suite run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSamples {
    pub repetitions: usize,
    pub clock: ClockMode,
    pub energy_alpha: f64,
    pub seed: u64,
    pub tests: Vec<TestSamples>,
}

impl SuiteSamples {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("samples serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Flat per-run rows for external plotting; errored runs are omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "test_id,variant,repetition,launch_ms,max_handler_ms,peak_memory_kb,energy_units\n",
        );
        for test in &self.tests {
            for (variant, samples) in [("baseline", &test.baseline), ("enforcer", &test.enforcer)] {
                for (repetition, sample) in samples.iter().enumerate() {
                    if let Some(kpis) = sample.kpis() {
                        let max_handler = kpis.action_handler_ms.iter().copied().max().unwrap_or(0);
                        out.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            test.test_id,
                            variant,
                            repetition,
                            kpis.launch_ms,
                            max_handler,
                            kpis.peak_memory_kb,
                            kpis.energy_units
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Tracks accounted kilobytes and their running maximum.
struct MemoryAccountant {
    current_kb: u64,
    peak_kb: u64,
}

impl MemoryAccountant {
    fn new(initial_kb: u64) -> Self {
        MemoryAccountant {
            current_kb: initial_kb,
            peak_kb: initial_kb,
        }
    }

    fn alloc(&mut self, kb: u64) {
        self.current_kb += kb;
        self.peak_kb = self.peak_kb.max(self.current_kb);
    }

    fn free(&mut self, kb: u64) {
        self.current_kb = self.current_kb.saturating_sub(kb);
    }
}

fn spin_for(duration: Duration) -> Duration {
    let start = Instant::now();
    while start.elapsed() < duration {
        std::hint::spin_loop();
    }
    start.elapsed()
}

/// Executes one test under one deployment and collects its KPIs.
///
/// An alphabet event with no defined enforcer transition is a hard test
/// error; events outside the alphabet always pass through untouched.
pub fn execute_test<D: Driver + ?Sized>(
    driver: &mut D,
    deployment: &Deployment,
    test: &ConcreteTest,
    config: &RunConfig,
) -> Result<TestExecution, RunError> {
    let (model, fault, bookkeeping_kb) = match deployment {
        Deployment::Baseline => (None, None, 0),
        Deployment::Enforcer {
            model,
            fault,
            bookkeeping_kb,
        } => (Some(model), *fault, *bookkeeping_kb),
    };
    let alphabet: BTreeSet<&EventName> = model
        .map(|m| m.alphabet.iter().collect())
        .unwrap_or_default();

    let (_, app_launch_ms, launch_cost) = driver.reset();
    let mut accountant = MemoryAccountant::new(launch_cost.alloc_kb + bookkeeping_kb);
    // Leak buffers live until the end of the test in wall mode.
    let mut leak_store: Vec<Vec<u8>> = Vec::new();

    let startup_delay = match fault {
        Some(FaultSpec::StartupDelay { ms }) => ms,
        _ => 0,
    };
    let launch_ms = match config.clock {
        ClockMode::Virtual => app_launch_ms + startup_delay,
        ClockMode::Wall => {
            let measured = if startup_delay > 0 {
                let start = Instant::now();
                std::thread::sleep(Duration::from_millis(startup_delay));
                start.elapsed().as_millis() as u64
            } else {
                0
            };
            app_launch_ms + measured
        }
    };

    let mut enforcer_state = model.map(|m| m.initial.clone());
    let mut api_trace: Vec<EventName> = Vec::new();
    let mut handler_ms: Vec<u64> = Vec::new();
    let mut cpu_total_ms: u64 = 0;
    let mut energy_declared = 0.0_f64;
    let mut req_index = 0usize;

    for action in &test.actions {
        let (_, emitted, cost) = driver.perform(action)?;
        let mut intercepted = 0u64;
        for event in emitted {
            if let (Some(model), Some(state)) = (model, enforcer_state.as_mut()) {
                if alphabet.contains(&event) {
                    intercepted += 1;
                    let key = (state.clone(), event.clone());
                    let t = model.transitions.get(&key).ok_or_else(|| {
                        RunError::UndefinedEnforcerTransition {
                            state: state.clone(),
                            event: event.clone(),
                            index: req_index,
                        }
                    })?;
                    api_trace.extend(t.outputs.iter().cloned());
                    *state = t.next.clone();
                    if let Some(FaultSpec::MemoryLeak { kb }) = fault {
                        accountant.alloc(kb);
                        if config.clock == ClockMode::Wall {
                            leak_store.push(vec![0u8; (kb as usize) * 1024]);
                        }
                    }
                } else {
                    api_trace.push(event);
                }
            } else {
                api_trace.push(event);
            }
            req_index += 1;
        }

        let delay_per_event = match fault {
            Some(FaultSpec::ResponsivenessDelay { ms }) => ms,
            _ => 0,
        };
        let hog_per_event = match fault {
            Some(FaultSpec::CpuHog { ms }) => ms,
            _ => 0,
        };
        let (overhead_ms, overhead_cpu_ms) = match config.clock {
            ClockMode::Virtual => (
                intercepted * (delay_per_event + hog_per_event),
                intercepted * hog_per_event,
            ),
            ClockMode::Wall => {
                let mut slept = Duration::ZERO;
                if delay_per_event > 0 && intercepted > 0 {
                    let start = Instant::now();
                    std::thread::sleep(Duration::from_millis(delay_per_event * intercepted));
                    slept = start.elapsed();
                }
                let mut spun = Duration::ZERO;
                if hog_per_event > 0 && intercepted > 0 {
                    spun = spin_for(Duration::from_millis(hog_per_event * intercepted));
                }
                ((slept + spun).as_millis() as u64, spun.as_millis() as u64)
            }
        };

        handler_ms.push(cost.cpu_ms + overhead_ms);
        cpu_total_ms += cost.cpu_ms + overhead_cpu_ms;
        energy_declared += cost.energy_units;
        accountant.alloc(cost.alloc_kb);
        accountant.free(cost.free_kb);
    }

    drop(leak_store);
    let kpis = KpiRecord {
        launch_ms,
        action_handler_ms: handler_ms,
        peak_memory_kb: accountant.peak_kb,
        energy_units: config.energy_alpha * cpu_total_ms as f64 + energy_declared,
    };
    Ok(TestExecution { api_trace, kpis })
}

fn filter_to_alphabet(trace: &[EventName], alphabet: &BTreeSet<&EventName>) -> Vec<EventName> {
    trace
        .iter()
        .filter(|e| alphabet.contains(*e))
        .cloned()
        .collect()
}

fn first_mismatch(a: &[EventName], b: &[EventName]) -> Option<usize> {
    let shared = a.len().min(b.len());
    for i in 0..shared {
        if a[i] != b[i] {
            return Some(i);
        }
    }
    if a.len() != b.len() {
        Some(shared)
    } else {
        None
    }
}

fn first_occurrence(haystack: &[EventName], needle: &[EventName]) -> Option<usize> {
    if needle.is_empty() {
        return Some(0);
    }
    if needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Differential oracle over alphabet-filtered traces.
///
/// Transparent tests require identical traces. Actual tests require strict
/// agreement before the divergence point (aligned to the target's covering
/// occurrence in the baseline trace) and an enforcer trace equal to the
/// model-predicted outputs.
pub fn check_oracle(
    test: &ConcreteTest,
    baseline_trace: &[EventName],
    enforcer_trace: &[EventName],
    alphabet: &BTreeSet<&EventName>,
) -> Verdict {
    let base = filter_to_alphabet(baseline_trace, alphabet);
    let enf = filter_to_alphabet(enforcer_trace, alphabet);
    match test.oracle.kind {
        OracleKind::Transparent => match first_mismatch(&base, &enf) {
            None => Verdict::Pass,
            Some(index) => Verdict::Fail {
                reason: "transparent oracle: traces differ".into(),
                index,
            },
        },
        OracleKind::Actual => {
            let Some(offset) = first_occurrence(&base, test.target.events()) else {
                return Verdict::Error {
                    message: "baseline trace no longer covers the target".into(),
                };
            };
            let divergence = test.oracle.divergence_index.unwrap_or(0);
            let aligned = offset + divergence;
            let prefix_len = aligned.min(base.len());
            if let Some(index) = first_mismatch(
                &base[..prefix_len.min(base.len())],
                &enf[..prefix_len.min(enf.len())],
            ) {
                return Verdict::Fail {
                    reason: "actual oracle: traces differ before the divergence point".into(),
                    index,
                };
            }
            let expected = test
                .oracle
                .expected_api_outputs
                .as_deref()
                .unwrap_or_default();
            match first_mismatch(&enf, expected) {
                None => Verdict::Pass,
                Some(index) => Verdict::Fail {
                    reason: "actual oracle: enforcer trace differs from the model prediction"
                        .into(),
                    index,
                },
            }
        }
    }
}

/// Runs the full suite `repetitions` times under each deployment variant.
///
/// The two variants execute concurrently, each owning a private driver from
/// `driver_factory`; within a variant, tests run sequentially for KPI
/// isolation. Per-test errors are recorded and the suite continues.
pub fn run_suite<D, F>(
    driver_factory: F,
    tests: &[ConcreteTest],
    deployments: (&Deployment, &Deployment),
    config: &RunConfig,
) -> Result<SuiteSamples, RunError>
where
    D: Driver,
    F: Fn() -> D + Sync,
{
    if tests.is_empty() {
        return Err(RunError::EmptySuite);
    }
    let (baseline, enforcer) = deployments;
    if !matches!(baseline, Deployment::Baseline) || !matches!(enforcer, Deployment::Enforcer { .. })
    {
        return Err(RunError::DeploymentMismatch);
    }
    let Deployment::Enforcer { model, .. } = enforcer else {
        unreachable!()
    };
    let alphabet: BTreeSet<&EventName> = model.alphabet.iter().collect();

    let (base_matrix, enf_matrix) = std::thread::scope(|scope| {
        let base = scope.spawn(|| run_variant(driver_factory(), baseline, tests, config));
        let enf = scope.spawn(|| run_variant(driver_factory(), enforcer, tests, config));
        (
            base.join().expect("baseline variant"),
            enf.join().expect("enforcer variant"),
        )
    });

    let mut out = Vec::with_capacity(tests.len());
    for (i, test) in tests.iter().enumerate() {
        let baseline_samples = base_matrix[i].clone();
        let enforcer_samples = enf_matrix[i].clone();
        let verdicts = baseline_samples
            .iter()
            .zip(&enforcer_samples)
            .map(|(b, e)| match (b, e) {
                (
                    SampleOutcome::Ok { api_trace: bt, .. },
                    SampleOutcome::Ok { api_trace: et, .. },
                ) => check_oracle(test, bt, et, &alphabet),
                (SampleOutcome::Error { message }, _) | (_, SampleOutcome::Error { message }) => {
                    Verdict::Error {
                        message: message.clone(),
                    }
                }
            })
            .collect();
        out.push(TestSamples {
            test_id: format!("t{i}"),
            target: test.target.clone(),
            baseline: baseline_samples,
            enforcer: enforcer_samples,
            verdicts,
        });
    }
    Ok(SuiteSamples {
        repetitions: config.repetitions,
        clock: config.clock,
        energy_alpha: config.energy_alpha,
        seed: config.seed,
        tests: out,
    })
}

fn run_variant<D: Driver>(
    mut driver: D,
    deployment: &Deployment,
    tests: &[ConcreteTest],
    config: &RunConfig,
) -> Vec<Vec<SampleOutcome>> {
    let mut matrix: Vec<Vec<SampleOutcome>> = vec![Vec::new(); tests.len()];
    for _ in 0..config.repetitions {
        for (i, test) in tests.iter().enumerate() {
            let outcome = match execute_test(&mut driver, deployment, test, config) {
                Ok(exec) => SampleOutcome::Ok {
                    api_trace: exec.api_trace,
                    kpis: exec.kpis,
                },
                Err(err) => SampleOutcome::Error {
                    message: err.to_string(),
                },
            };
            matrix[i].push(outcome);
        }
    }
    matrix
}
