//! Command-line pipeline for testing runtime enforcers against a simulated
//! app: sequence generation, GUI ripping, concretization, two-variant
//! execution, and the performance gate.
//!
//! Exit codes: 0 clean, 1 finding (functional, policy, or performance),
//! 2 usage or input error, 3 uncoverable sequences present (and no worse
//! finding).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use enfcheck_core::appsim::{AppSpec, SimDriver};
use enfcheck_core::compare::{build_report, render_text, DegradationReport, Thresholds};
use enfcheck_core::concretize::{
    concretize_suite, tests_from_json, tests_to_json, ConcretizeOptions, ConcretizeOutcome,
    MatchMode,
};
use enfcheck_core::hsi::{generate_hsi_suite, HsiSuite};
use enfcheck_core::model::{EnforcementModel, PolicyMonitor};
use enfcheck_core::ripper::{export_gui_model, import_gui_model, rip, AugmentedGuiModel};
use enfcheck_core::runner::{
    inject_fault, run_suite, ClockMode, Deployment, FaultSpec, RunConfig, SuiteSamples,
};

const EXIT_OK: u8 = 0;
const EXIT_FINDING: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_UNCOVERABLE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "enfcheck",
    version,
    about = "Generate, concretize, and execute enforcer test suites; gate on functional and performance regressions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the abstract test-sequence suite from an enforcement model.
    Gen(GenArgs),
    /// Explore the app and write the annotated GUI model.
    Rip(RipArgs),
    /// Map abstract sequences to validated UI-action tests with oracles.
    Concretize(ConcretizeArgs),
    /// Execute tests under both deployments and collect KPI samples.
    Run(RunArgs),
    /// Aggregate samples and write the degradation report.
    Compare(CompareArgs),
    /// Run every stage in order, writing all artifacts to one directory.
    Pipeline(PipelineArgs),
    /// Parse and validate a model file (and optionally a policy monitor).
    ValidateModel(ValidateArgs),
}

#[derive(Args)]
struct OutDir {
    /// Output directory for generated artifacts.
    #[arg(long, env = "ENFCHECK_OUT", default_value = "enfcheck-out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Enforcement model file.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct RipArgs {
    /// App spec file for the simulator backend.
    #[arg(long)]
    app: PathBuf,
    /// Enforcement model file; its alphabet is the tracing alphabet.
    #[arg(long)]
    model: PathBuf,
    /// Maximum number of explored (state, action) executions.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    /// View property keys excluded from state signatures (repeatable).
    #[arg(long = "ignore-prop")]
    ignore_prop: Vec<String>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ConcretizeArgs {
    /// GUI-model file produced by `rip`.
    #[arg(long = "gui-model")]
    gui_model: PathBuf,
    #[arg(long)]
    app: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Suite file produced by `gen`.
    #[arg(long)]
    suite: PathBuf,
    /// Candidate paths tried per sequence.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Require the replayed trace to equal the target exactly instead of
    /// containing it.
    #[arg(long = "strict-match")]
    strict_match: bool,
    #[arg(long = "ignore-prop")]
    ignore_prop: Vec<String>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ExecOpts {
    /// Repetitions per deployment variant.
    #[arg(long = "reps", default_value_t = 10)]
    reps: usize,
    /// `virtual` (deterministic declared costs) or `wall` (real delays).
    #[arg(long, default_value = "virtual", value_parser = parse_clock)]
    clock: ClockMode,
    /// Fault injected into the enforcer deployment, e.g.
    /// `responsivenessDelay=250`, `startupDelay=6000`, `cpuHog=7`,
    /// `memoryLeak=96`.
    #[arg(long, value_parser = parse_fault)]
    fault: Option<FaultSpec>,
    /// Fixed allocation charged at enforcer init.
    #[arg(long = "bookkeeping-kb", default_value_t = 0)]
    bookkeeping_kb: u64,
    /// Energy units per cpu millisecond.
    #[arg(long = "energy-alpha", default_value_t = 1.0)]
    energy_alpha: f64,
    /// Recorded in the samples; virtual-clock runs are reproducible per
    /// (inputs, seed).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// Test-suite file produced by `concretize`.
    #[arg(long)]
    tests: PathBuf,
    #[arg(long)]
    app: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "ignore-prop")]
    ignore_prop: Vec<String>,
    #[command(flatten)]
    exec: ExecOpts,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ThresholdOpts {
    /// Thresholds file (JSON; missing fields keep their defaults).
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Override: responsiveness bound in ms.
    #[arg(long = "threshold-responsiveness-ms")]
    responsiveness_ms: Option<f64>,
    /// Override: launch-time bound in ms.
    #[arg(long = "threshold-launch-ms")]
    launch_ms: Option<f64>,
    /// Override: allowed memory overhead in percent.
    #[arg(long = "threshold-memory-pct")]
    memory_pct: Option<f64>,
    /// Override: allowed energy overhead in percent.
    #[arg(long = "threshold-energy-pct")]
    energy_pct: Option<f64>,
}

impl ThresholdOpts {
    /// Flags override file values override defaults.
    fn resolve(&self) -> Result<Thresholds> {
        let mut thresholds = match &self.thresholds {
            Some(path) => {
                let text = read(path)?;
                serde_json::from_str(&text)
                    .with_context(|| format!("thresholds file {}", path.display()))?
            }
            None => Thresholds::default(),
        };
        if let Some(v) = self.responsiveness_ms {
            thresholds.responsiveness_ms = v;
        }
        if let Some(v) = self.launch_ms {
            thresholds.launch_ms = v;
        }
        if let Some(v) = self.memory_pct {
            thresholds.memory_overhead_pct = v;
        }
        if let Some(v) = self.energy_pct {
            thresholds.energy_overhead_pct = v;
        }
        Ok(thresholds)
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Samples file produced by `run`.
    #[arg(long)]
    samples: PathBuf,
    /// Policy monitor file; enforcer-side violations count as findings.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[command(flatten)]
    thresholds: ThresholdOpts,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    app: PathBuf,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long = "strict-match")]
    strict_match: bool,
    #[arg(long = "ignore-prop")]
    ignore_prop: Vec<String>,
    #[command(flatten)]
    exec: ExecOpts,
    #[command(flatten)]
    thresholds: ThresholdOpts,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    policy: Option<PathBuf>,
}

fn parse_clock(text: &str) -> Result<ClockMode, String> {
    match text {
        "virtual" => Ok(ClockMode::Virtual),
        "wall" => Ok(ClockMode::Wall),
        other => Err(format!(
            "unknown clock mode `{other}` (expected virtual or wall)"
        )),
    }
}

fn parse_fault(text: &str) -> Result<FaultSpec, String> {
    FaultSpec::parse(text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Gen(args) => cmd_gen(args),
        Command::Rip(args) => cmd_rip(args),
        Command::Concretize(args) => cmd_concretize(args),
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::ValidateModel(args) => cmd_validate(args),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn load_model(path: &Path) -> Result<EnforcementModel> {
    EnforcementModel::parse(&read(path)?)
        .with_context(|| format!("invalid enforcement model {}", path.display()))
}

fn load_monitor(path: &Path) -> Result<PolicyMonitor> {
    PolicyMonitor::parse(&read(path)?)
        .with_context(|| format!("invalid policy monitor {}", path.display()))
}

fn load_app(path: &Path) -> Result<AppSpec> {
    AppSpec::parse(&read(path)?).with_context(|| format!("invalid app spec {}", path.display()))
}

fn driver_for(app: &AppSpec, ignore_prop: &[String]) -> SimDriver {
    SimDriver::with_ignored_keys(app.clone(), ignore_prop.iter().cloned())
}

fn cmd_gen(args: GenArgs) -> Result<u8> {
    let model = load_model(&args.model)?;
    let suite = generate_hsi_suite(&model);
    let path = write(&args.out.out, "suite.json", &suite.to_json())?;
    println!("gen: {} sequences -> {}", suite.len(), path.display());
    Ok(EXIT_OK)
}

fn do_rip(
    app: &AppSpec,
    model: &EnforcementModel,
    budget: usize,
    ignore_prop: &[String],
) -> Result<AugmentedGuiModel> {
    let alphabet: BTreeSet<String> = model.alphabet.iter().cloned().collect();
    let mut driver = driver_for(app, ignore_prop);
    rip(&mut driver, &alphabet, budget).context("ripping failed")
}

fn cmd_rip(args: RipArgs) -> Result<u8> {
    let app = load_app(&args.app)?;
    let model = load_model(&args.model)?;
    let gui = do_rip(&app, &model, args.budget, &args.ignore_prop)?;
    let path = write(&args.out.out, "gui-model.json", &export_gui_model(&gui))?;
    println!(
        "rip: {} nodes, {} edges -> {}",
        gui.nodes.len(),
        gui.edges.len(),
        path.display()
    );
    Ok(EXIT_OK)
}

fn do_concretize(
    gui: &AugmentedGuiModel,
    app: &AppSpec,
    model: &EnforcementModel,
    suite: &HsiSuite,
    k: usize,
    strict: bool,
    ignore_prop: &[String],
) -> Result<ConcretizeOutcome> {
    let options = ConcretizeOptions {
        k,
        match_mode: if strict {
            MatchMode::WholeTrace
        } else {
            MatchMode::Substring
        },
    };
    let mut driver = driver_for(app, ignore_prop);
    concretize_suite(gui, &mut driver, model, suite, &options).context("concretization failed")
}

fn write_concretize_outcome(out: &Path, outcome: &ConcretizeOutcome) -> Result<()> {
    write(out, "tests.json", &tests_to_json(&outcome.tests))?;
    let mut uncoverable =
        serde_json::to_string_pretty(&outcome.uncoverable).context("serialize uncoverable")?;
    uncoverable.push('\n');
    write(out, "uncoverable.json", &uncoverable)?;
    println!(
        "concretize: {} tests, {} uncoverable -> {}",
        outcome.tests.len(),
        outcome.uncoverable.len(),
        out.display()
    );
    for entry in &outcome.uncoverable {
        println!("  uncoverable: {}", entry.sequence);
    }
    Ok(())
}

fn cmd_concretize(args: ConcretizeArgs) -> Result<u8> {
    let gui = import_gui_model(&read(&args.gui_model)?)
        .with_context(|| format!("invalid GUI model {}", args.gui_model.display()))?;
    let app = load_app(&args.app)?;
    let model = load_model(&args.model)?;
    let suite = HsiSuite::from_json(&read(&args.suite)?)
        .with_context(|| format!("invalid suite file {}", args.suite.display()))?;
    let outcome = do_concretize(
        &gui,
        &app,
        &model,
        &suite,
        args.k,
        args.strict_match,
        &args.ignore_prop,
    )?;
    write_concretize_outcome(&args.out.out, &outcome)?;
    Ok(if outcome.uncoverable.is_empty() {
        EXIT_OK
    } else {
        EXIT_UNCOVERABLE
    })
}

fn do_run(
    tests: &[enfcheck_core::concretize::ConcreteTest],
    app: &AppSpec,
    model: &EnforcementModel,
    exec: &ExecOpts,
    ignore_prop: &[String],
) -> Result<SuiteSamples> {
    if exec.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let baseline = Deployment::baseline();
    let mut enforcer = Deployment::enforcer(model.clone()).with_bookkeeping(exec.bookkeeping_kb);
    if let Some(fault) = exec.fault {
        enforcer = inject_fault(enforcer, fault).context("fault injection failed")?;
    }
    let config = RunConfig {
        repetitions: exec.reps,
        clock: exec.clock,
        energy_alpha: exec.energy_alpha,
        seed: exec.seed,
    };
    let ignore: Vec<String> = ignore_prop.to_vec();
    run_suite(
        || SimDriver::with_ignored_keys(app.clone(), ignore.iter().cloned()),
        tests,
        (&baseline, &enforcer),
        &config,
    )
    .context("suite execution failed")
}

fn write_samples(out: &Path, samples: &SuiteSamples) -> Result<()> {
    write(out, "samples.json", &samples.to_json())?;
    write(out, "samples.csv", &samples.to_csv())?;
    println!(
        "run: {} tests x {} repetitions x 2 variants -> {}",
        samples.tests.len(),
        samples.repetitions,
        out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let tests = tests_from_json(&read(&args.tests)?)
        .with_context(|| format!("invalid tests file {}", args.tests.display()))?;
    let app = load_app(&args.app)?;
    let model = load_model(&args.model)?;
    let samples = do_run(&tests, &app, &model, &args.exec, &args.ignore_prop)?;
    write_samples(&args.out.out, &samples)?;
    Ok(EXIT_OK)
}

fn finish_compare(
    out: &Path,
    samples: &SuiteSamples,
    thresholds: &Thresholds,
    policy: Option<&PolicyMonitor>,
) -> Result<(DegradationReport, u8)> {
    let report = build_report(samples, thresholds, policy).context("comparison failed")?;
    write(out, "report.json", &report.to_json())?;
    let table = render_text(&report);
    write(out, "report.txt", &table)?;
    print!("{table}");
    let code = if report.has_finding() {
        EXIT_FINDING
    } else {
        EXIT_OK
    };
    Ok((report, code))
}

fn cmd_compare(args: CompareArgs) -> Result<u8> {
    let samples = SuiteSamples::from_json(&read(&args.samples)?)
        .with_context(|| format!("invalid samples file {}", args.samples.display()))?;
    let policy = args.policy.as_deref().map(load_monitor).transpose()?;
    let thresholds = args.thresholds.resolve()?;
    let (_, code) = finish_compare(&args.out.out, &samples, &thresholds, policy.as_ref())?;
    Ok(code)
}

fn cmd_pipeline(args: PipelineArgs) -> Result<u8> {
    let model = load_model(&args.model)?;
    let app = load_app(&args.app)?;
    let policy = args.policy.as_deref().map(load_monitor).transpose()?;
    let thresholds = args.thresholds.resolve()?;
    let out = &args.out.out;

    let suite = generate_hsi_suite(&model);
    write(out, "suite.json", &suite.to_json())?;
    println!("gen: {} sequences", suite.len());

    let gui = do_rip(&app, &model, args.budget, &args.ignore_prop)?;
    write(out, "gui-model.json", &export_gui_model(&gui))?;
    println!("rip: {} nodes, {} edges", gui.nodes.len(), gui.edges.len());

    let outcome = do_concretize(
        &gui,
        &app,
        &model,
        &suite,
        args.k,
        args.strict_match,
        &args.ignore_prop,
    )?;
    write_concretize_outcome(out, &outcome)?;
    if outcome.tests.is_empty() {
        bail!("no sequence could be concretized; nothing to execute");
    }

    let samples = do_run(&outcome.tests, &app, &model, &args.exec, &args.ignore_prop)?;
    write_samples(out, &samples)?;

    let (_, compare_code) = finish_compare(out, &samples, &thresholds, policy.as_ref())?;
    Ok(if compare_code != EXIT_OK {
        compare_code
    } else if !outcome.uncoverable.is_empty() {
        EXIT_UNCOVERABLE
    } else {
        EXIT_OK
    })
}

fn cmd_validate(args: ValidateArgs) -> Result<u8> {
    let model = load_model(&args.model)?;
    println!(
        "model ok: {} states, {} transitions, alphabet [{}]",
        model.states.len(),
        model.transitions.len(),
        model.alphabet.join(", ")
    );
    if let Some(path) = &args.policy {
        let monitor = load_monitor(path)?;
        if monitor.alphabet != model.alphabet {
            println!(
                "note: policy alphabet [{}] differs from the model alphabet",
                monitor.alphabet.join(", ")
            );
        }
        println!(
            "policy ok: {} states, {} violating",
            monitor.states.len(),
            monitor.violating.len()
        );
    }
    Ok(EXIT_OK)
}
