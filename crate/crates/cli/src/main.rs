//! `refshift`: reference re-optimization after a constraint change.
//!
//! Exit codes: 0 success, 2 solve failure, 3 input or schema error,
//! 4 deadline exceeded, 1 anything else.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use refshift_core::orsop::{self, Method, OrsopProblem, SolveOptions, SolveReport, SolveStatus};
use refshift_sim::run::{injection_problem, state_at_change};
use refshift_sim::scenario::load_dir;
use refshift_sim::{
    generate_suite, run_benchmark, run_scenario, BenchConfig, Clock, GenSpec, RunConfig, Scenario, SimError,
    Strategy, Suite,
};

const EXIT_FAILURE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_DEADLINE: u8 = 4;

#[derive(Parser)]
#[command(name = "refshift", version, about = "Restore reachability safety by moving the reference state")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reference problem at the constraint change of a scenario.
    Solve(SolveArgs),
    /// Simulate a scenario through the change and write its trajectory.
    Simulate(SimulateArgs),
    /// Run every method over a scenario suite.
    Bench(BenchArgs),
    /// Write a seeded random scenario suite.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    KktOnly,
    NewtonOnly,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => Method::Auto,
            MethodArg::KktOnly => Method::KktOnly,
            MethodArg::NewtonOnly => Method::NewtonOnly,
        }
    }
}

#[derive(Args)]
struct SolveOpts {
    /// Which steps of the solver to run.
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    /// Barrier weight for the Newton step.
    #[arg(long)]
    lambda: Option<f64>,
}

impl SolveOpts {
    fn options(&self, origin: Option<refshift_core::geometry::StateVector>) -> SolveOptions {
        let mut o = SolveOptions { method: self.method.into(), origin, ..Default::default() };
        if let Some(l) = self.lambda {
            o.newton.lambda = l;
        }
        o
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    solve: SolveOpts,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    /// Exit with code 4 when the solve takes longer (wall clock).
    #[arg(long)]
    deadline_ms: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Trajectory CSV.
    #[arg(long)]
    out: PathBuf,
    /// `orsop` or `ocr`.
    #[arg(long, default_value = "orsop")]
    strategy: Strategy,
    #[command(flatten)]
    solve: SolveOpts,
    /// Time base for the switch latency: `work` (reproducible) or `wall`.
    #[arg(long, default_value = "work")]
    clock: Clock,
    #[arg(long)]
    deadline_ms: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Generator spec: one JSON object or an array of them.
    #[arg(long, conflicts_with = "scenarios", required_unless_present = "scenarios")]
    spec: Option<PathBuf>,
    /// Directory of scenario files.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "orsop,ocr")]
    methods: Vec<Strategy>,
    #[arg(long)]
    deadline_ms: Option<f64>,
    /// Replaces the spec seeds; spec `i` gets `seed + i`.
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, default_value = "work")]
    clock: Clock,
    #[command(flatten)]
    solve: SolveOpts,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Smallest and largest face shrink factor, e.g. `0.4,0.9`.
    #[arg(long, value_delimiter = ',')]
    shrink: Option<Vec<f64>>,
}

/// An error with the exit code it maps to.
struct Exit(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Exit {
    fn from(e: E) -> Self {
        let e = e.into();
        Exit(exit_code(&e), e)
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(s) = cause.downcast_ref::<SimError>() {
            return if s.is_input() { EXIT_INPUT } else { 1 };
        }
        if let Some(c) = cause.downcast_ref::<refshift_core::Error>() {
            return if matches!(c, refshift_core::Error::Numerical(_)) { 1 } else { EXIT_INPUT };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return EXIT_INPUT;
        }
    }
    1
}

fn deadline(ms: Option<f64>) -> Result<Option<Duration>, Exit> {
    match ms {
        None => Ok(None),
        Some(v) if v >= 0.0 && v.is_finite() => Ok(Some(Duration::from_secs_f64(v / 1e3))),
        Some(v) => Err(Exit(EXIT_INPUT, anyhow!("deadline must be a non-negative number of milliseconds, got {v}"))),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn vec_json(v: &Option<refshift_core::geometry::StateVector>) -> serde_json::Value {
    v.as_ref().map_or(serde_json::Value::Null, |x| json!(x.as_slice()))
}

fn finite(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

fn report_json(id: &str, xp: &refshift_core::geometry::StateVector, r: &SolveReport) -> serde_json::Value {
    let d = &r.diagnostics;
    json!({
        "scenario": id,
        "status": r.status.as_str(),
        "state_at_change": xp.as_slice(),
        "reference": vec_json(&r.reference),
        "objective": finite(r.objective),
        "objective_volume": finite(r.objective_volume),
        "margin": finite(r.margin),
        "elapsed_us": r.elapsed.as_nanos() as f64 / 1e3,
        "work": r.work,
        "diagnostics": {
            "whitened": d.whitened,
            "kkt_combinations": d.kkt_combinations,
            "kkt_survivors": d.kkt_survivors,
            "analytic_step": format!("{:?}", d.step2),
            "newton_iterations": d.newton_iterations,
            "start_rounds": d.start_rounds,
            "lambda_effective": d.lambda_effective,
            "failure_reason": d.failure_reason,
        },
    })
}

fn solve_cmd(a: SolveArgs) -> Result<u8, Exit> {
    let limit = deadline(a.deadline_ms)?;
    let s = Scenario::load(&a.scenario)?;
    let xp = state_at_change(&s);
    let prob: OrsopProblem = injection_problem(&s, xp.clone())?;
    let rep = orsop::solve(&prob, &a.solve.options(Some(s.x_ref0.clone())));
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report_json(&s.id, &xp, &rep)).unwrap());
    } else {
        println!("scenario   {}", s.id);
        println!("status     {}", rep.status);
        if let Some(r) = &rep.reference {
            println!("reference  {:?}", r.as_slice());
            println!("objective  {:.6e}", rep.objective);
            println!("volume     {:.6e}", rep.objective_volume);
            println!("margin     {:.6e}", rep.margin);
        }
        println!("elapsed    {:.3} us", rep.elapsed.as_nanos() as f64 / 1e3);
        if let Some(why) = &rep.diagnostics.failure_reason {
            println!("reason     {why}");
        }
    }
    if rep.status == SolveStatus::Failure {
        return Ok(EXIT_FAILURE);
    }
    if limit.is_some_and(|d| rep.elapsed > d) {
        eprintln!("deadline exceeded");
        return Ok(EXIT_DEADLINE);
    }
    Ok(0)
}

fn simulate_cmd(a: SimulateArgs) -> Result<u8, Exit> {
    let s = Scenario::load(&a.scenario)?;
    let cfg = RunConfig { solve: a.solve.options(None), deadline: deadline(a.deadline_ms)?, clock: a.clock };
    let out = run_scenario(&s, a.strategy, &cfg)?;
    let mut w = create(&a.out)?;
    out.trajectory.write_csv(&mut w).with_context(|| format!("writing {}", a.out.display()))?;
    w.flush().with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} {} status={} latency_steps={} switch={} violations={} post_switch={}",
        s.id,
        a.strategy,
        out.report.status,
        out.latency_steps,
        out.switch_index.map_or("-".to_string(), |i| format!("{:.6}", out.trajectory.times[i])),
        out.violations,
        out.post_switch_violations,
    );
    if out.report.status == SolveStatus::Failure {
        return Ok(EXIT_FAILURE);
    }
    if out.deadline_missed {
        return Ok(EXIT_DEADLINE);
    }
    Ok(0)
}

fn read_specs(path: &Path) -> anyhow::Result<Vec<GenSpec>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let specs = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|s| vec![s])
    };
    let specs: Vec<GenSpec> = specs.with_context(|| format!("parsing {}", path.display()))?;
    if specs.is_empty() {
        return Err(SimError::Schema(format!("{}: no generator specs", path.display())).into());
    }
    Ok(specs)
}

fn bench_cmd(a: BenchArgs) -> Result<u8, Exit> {
    let scenarios = match (&a.spec, &a.scenarios) {
        (Some(spec), _) => {
            let mut specs = read_specs(spec)?;
            if let Some(seed) = a.seed {
                for (i, s) in specs.iter_mut().enumerate() {
                    s.seed = seed.wrapping_add(i as u64);
                }
            }
            generate_suite(&specs)?
        }
        (None, Some(dir)) => load_dir(dir)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    if scenarios.is_empty() {
        return Err(Exit(EXIT_INPUT, anyhow!("the suite has no scenarios")));
    }
    let cfg = BenchConfig {
        methods: a.methods.clone(),
        run: RunConfig { solve: a.solve.options(None), deadline: deadline(a.deadline_ms)?, clock: a.clock },
    };
    let res = run_benchmark(Suite::Scenarios(scenarios), &cfg)?;
    let mut w = create(&a.out)?;
    res.write_csv(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", a.out.display()))?;
    let summary = res.summary();
    if let Some(path) = &a.summary {
        let mut w = create(path)?;
        writeln!(w, "{}", serde_json::to_string_pretty(&summary).unwrap())
            .and_then(|_| w.flush())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    for (m, st) in &res.per_method {
        let p50 = st.time_percentile(50.0).map_or(f64::NAN, |d| d.as_nanos() as f64 / 1e3);
        println!(
            "{m:<14} runs={} success={} rate={:.4} p50_us={p50:.3}",
            st.runs(),
            st.success_count,
            st.success_rate()
        );
    }
    Ok(0)
}

fn gen_cmd(a: GenArgs) -> Result<u8, Exit> {
    let mut spec = GenSpec::new(a.n, a.m, a.count, a.seed);
    if let Some(s) = &a.shrink {
        let [lo, hi] = s[..] else {
            return Err(Exit(EXIT_INPUT, anyhow!("--shrink takes two factors, e.g. 0.4,0.9")));
        };
        spec.shrink_range = (lo, hi);
    }
    let suite = generate_suite(&[spec])?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for s in &suite {
        s.save(&a.out.join(format!("{}.json", s.id)))?;
    }
    println!("wrote {} scenarios to {}", suite.len(), a.out.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Gen(a) => gen_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
