//! Command-line front end for running, transforming, diagonalizing, and
//! checking dialectical systems.
//!
//! Exit codes: 0 on a stabilized/passing result, 2 when a result stayed
//! unknown within the budget (or a construction ran out of budget), 1 on
//! validation, schema, or I/O errors.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dialectica::codec::{atom, Pretty};
use dialectica::constructs::{
    d_completion_to_q, d_to_p, diagonalize, omega_ce_family, p_neg_equals_d_check, p_to_q, q_to_d,
    verify_d_to_p, window_codes, window_equivalence, ConstructError, DiagTarget,
};
use dialectica::engine::{
    characterization_check, limit_report, run, CharVerdict, RunOptions, DEFAULT_LOOP_DEPTH,
};
use dialectica::gen;
use dialectica::logic::{completion_check, connective_laws_check, EvalCtx};
use dialectica::operators::{goodify, Approximation, OperatorHandle};
use dialectica::render::{ascii_stacks, trace_tsv};
use dialectica::systems::{consistency, validate, ChainGen, SystemSpec, Verdict};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dialectica", version, about = "Simulate dialectical, q-dialectical, and p-dialectical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a system for a number of stages and report its limit behaviour.
    Run(RunArgs),
    /// Transform a system into another class and compare final theses.
    Transform(TransformArgs),
    /// Execute the diagonalization construction against a target class.
    Diagonalize(DiagArgs),
    /// Check connective laws, completions, or membership characterizations.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// System specification (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Replace the spec's operator by this staged table (JSON).
    #[arg(long)]
    approx: Option<PathBuf>,
    /// Goodify the operator table before running.
    #[arg(long)]
    goodify: bool,
    #[arg(long)]
    budget: u64,
    /// Window of slots for the limit report.
    #[arg(long, default_value_t = 8)]
    window: usize,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
    /// Extra codes whose A_s membership is tracked per stage.
    #[arg(long, value_delimiter = ',')]
    watch: Vec<u64>,
    /// Stack depth above which a slot earns a loop warning.
    #[arg(long, default_value_t = DEFAULT_LOOP_DEPTH)]
    loop_depth: usize,
    /// Render formulas instead of bare codes where applicable.
    #[arg(long)]
    pretty: bool,
    /// Write the trace artifact here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Tsv,
    Ascii,
    Json,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long, value_enum)]
    kind: TransformKind,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 200)]
    budget: u64,
    #[arg(long, default_value_t = 8)]
    window: usize,
    /// Write the emitted spec here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum TransformKind {
    D2p,
    P2q,
    Q2d,
    Dc2q,
    PNegD,
}

#[derive(Args)]
struct DiagArgs {
    /// Targets file (JSON list of stage-indexed 0/1 matrices).
    #[arg(long, conflicts_with = "family")]
    targets: Option<PathBuf>,
    /// Generate a family instead: N,B (N targets, ≤ B mind-changes).
    #[arg(long, value_delimiter = ',', num_args = 1..=2)]
    family: Option<Vec<u64>>,
    #[arg(long, default_value_t = 2000)]
    budget: u64,
    /// Write the emitted spec and report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum)]
    kind: CheckKind,
    /// System specification, for completion/characterization checks.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Sample count for the laws check.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    budget: u64,
    #[arg(long, default_value_t = 8)]
    window: usize,
    /// Number of leading atoms for the completion check.
    #[arg(long, default_value_t = 10)]
    atoms: u64,
}

#[derive(Copy, Clone, ValueEnum)]
enum CheckKind {
    Laws,
    Completion,
    Characterization,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Transform(args) => cmd_transform(args),
        Command::Diagonalize(args) => cmd_diagonalize(args),
        Command::Check(args) => cmd_check(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_spec(path: &PathBuf) -> Result<SystemSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut spec = load_spec(&args.spec)?;
    if let Some(path) = &args.approx {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let approx: Approximation = serde_json::from_str(&text)
            .with_context(|| format!("parsing approximation {}", path.display()))?;
        spec.operator = OperatorHandle::Table(approx);
    }
    if args.goodify {
        match &spec.operator {
            OperatorHandle::Table(t) => spec.operator = OperatorHandle::Good(goodify(t)?),
            _ => return Err(anyhow!("--goodify applies to explicit table operators")),
        }
    }
    let mut ctx = EvalCtx::new();
    let report = validate(&spec, &mut ctx, args.budget.max(1))?;
    if report.verdict == Verdict::Invalid {
        eprintln!("validation failed: {:?}", report.violations);
        return Ok(ExitCode::from(1));
    }
    let mut watch: Vec<u64> = args.watch.clone();
    watch.extend(window_codes(&[&spec], args.window)?);
    watch.sort_unstable();
    watch.dedup();
    let mut opts = RunOptions::new(args.budget).with_watch(watch);
    opts.validate_first = false;
    if args.budget <= 512 {
        opts = opts.with_snapshots(256);
    }
    let trace = run(&spec, &mut ctx, &opts)?;
    let limit = limit_report(&spec, &mut ctx, &trace, args.window, args.loop_depth, 64)?;
    let consistency = consistency(&spec, &mut ctx, args.budget)?;

    let body = match args.format {
        Format::Tsv => trace_tsv(&trace),
        Format::Ascii => ascii_stacks(&trace.final_state, 32, args.pretty),
        Format::Json => {
            serde_json::to_string_pretty(&serde_json::json!({
                "trace": trace,
                "limit": limit,
            }))? + "\n"
        }
    };
    emit(&args.out, &body)?;

    eprintln!("consistency: {consistency:?}");
    for slot in &limit.slots {
        let f = if args.pretty {
            format!("{}", Pretty(slot.f_value))
        } else {
            slot.f_value.to_string()
        };
        eprintln!(
            "slot {:>3}  f = {:<12} stabilized = {:<5} candidate = {:?}",
            slot.slot,
            f,
            slot.stabilized,
            limit.candidate(slot.f_value)
        );
    }
    if !limit.loop_warnings.is_empty() {
        eprintln!("loop warnings at slots {:?}", limit.loop_warnings);
    }
    Ok(if limit.all_stabilized { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn construct_exit(err: ConstructError) -> Result<ExitCode> {
    match err {
        ConstructError::Unknown(msg) => {
            eprintln!("unknown within budget: {msg}");
            Ok(ExitCode::from(2))
        }
        ConstructError::BudgetExceeded(es) => {
            eprintln!("budget exceeded; requirements still pending: {es:?}");
            Ok(ExitCode::from(2))
        }
        ConstructError::TargetsSettleTooLate { bound, actual } => {
            eprintln!("targets settle at stage {actual}, beyond the allowed {bound}");
            Ok(ExitCode::from(2))
        }
        ConstructError::Refused(msg) => {
            eprintln!("refused: {msg}");
            Ok(ExitCode::from(1))
        }
        other => Err(other.into()),
    }
}

fn cmd_transform(args: TransformArgs) -> Result<ExitCode> {
    let spec = load_spec(&args.spec)?;
    let mut ctx = EvalCtx::new();
    let (emitted, equivalence) = match args.kind {
        TransformKind::D2p => {
            let (p, z0) = match d_to_p(&spec, ChainGen::ExcludedMiddle, &mut ctx, args.budget) {
                Ok(v) => v,
                Err(e) => return construct_exit(e),
            };
            let report = verify_d_to_p(&spec, &p, z0, &mut ctx, args.budget, args.window)?;
            eprintln!(
                "d2p: z0 = {z0}, stack correspondence on {} slots: {}",
                report.stack_correspondence.len(),
                report.stack_correspondence.iter().all(|&(_, ok)| ok)
            );
            (p, report.equivalence)
        }
        TransformKind::P2q => {
            let out = match p_to_q(&spec, &mut ctx, args.budget, args.window) {
                Ok(v) => v,
                Err(e) => return construct_exit(e),
            };
            eprintln!("p2q: u0 = {}, z0 = {}, z1 = {}", out.u0, out.z0, out.z1);
            let codes = window_codes(&[&spec], args.window)?;
            let (eq, _, _) = window_equivalence(&spec, &out.q, &mut ctx, args.budget, &codes)?;
            (out.q, eq)
        }
        TransformKind::Q2d => {
            let out = match q_to_d(&spec, &mut ctx, args.budget) {
                Ok(v) => v,
                Err(e) => return construct_exit(e),
            };
            eprintln!("q2d: t0 = {}, v = {}", out.t0, out.v);
            let codes = window_codes(&[&spec, &out.d], args.window)?;
            let (eq, _, _) = window_equivalence(&spec, &out.d, &mut ctx, args.budget, &codes)?;
            (out.d, eq)
        }
        TransformKind::Dc2q => {
            let q = match d_completion_to_q(&spec) {
                Ok(v) => v,
                Err(e) => return construct_exit(e),
            };
            let codes = window_codes(&[&spec], args.window)?;
            let (eq, _, _) = window_equivalence(&spec, &q, &mut ctx, args.budget, &codes)?;
            (q, eq)
        }
        TransformKind::PNegD => {
            let report = match p_neg_equals_d_check(&spec, &mut ctx, args.budget, args.window) {
                Ok(v) => v,
                Err(e) => return construct_exit(e),
            };
            eprintln!(
                "p-neg-d: stack correspondence on {} slots: {}",
                report.stacks.len(),
                report.stacks.iter().all(|&(_, ok, side)| ok && side.unwrap_or(true))
            );
            (spec.clone(), report.equivalence)
        }
    };
    for entry in &equivalence.entries {
        eprintln!("code {:>6}: {:?} vs {:?}", entry.code, entry.left, entry.right);
    }
    eprintln!("window equality: {} ({} unsettled)", equivalence.equal, equivalence.unsettled);
    emit(&args.out, &(serde_json::to_string_pretty(&emitted)? + "\n"))?;
    Ok(if equivalence.equal {
        ExitCode::SUCCESS
    } else if equivalence.unsettled > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    })
}

fn cmd_diagonalize(args: DiagArgs) -> Result<ExitCode> {
    let targets: Vec<DiagTarget> = if let Some(path) = &args.targets {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing targets {}", path.display()))?
    } else if let Some(nb) = &args.family {
        omega_ce_family(nb[0], nb.get(1).copied().unwrap_or(0))
    } else {
        Vec::new()
    };
    let mut ctx = EvalCtx::new();
    let out = match diagonalize(&targets, args.budget, &mut ctx) {
        Ok(v) => v,
        Err(e) => return construct_exit(e),
    };
    eprintln!("  e    x_e  A_p(x_e)     V_e(x_e)  diagonalized");
    for t in &out.report.per_target {
        eprintln!(
            "{:>3} {:>6}  {:<12} {:<9} {}",
            t.e,
            t.x_e,
            format!("{:?}", t.a_p),
            t.v_e,
            t.diagonalized
        );
    }
    eprintln!(
        "completion: {}  validation: {:?}  rho-check: {}  diagonalized: {}/{}",
        out.report.completion.passed(),
        out.report.validation.verdict,
        out.report.rho_ok,
        out.report.per_target.iter().filter(|t| t.diagonalized).count(),
        out.report.per_target.len()
    );
    let artifact = serde_json::json!({
        "spec": out.spec,
        "report": out.report,
    });
    emit(&args.out, &(serde_json::to_string_pretty(&artifact)? + "\n"))?;
    let ok = out.report.all_diagonalized
        && out.report.completion.passed()
        && out.report.rho_ok
        && out.report.validation.verdict == Verdict::Valid;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let mut ctx = EvalCtx::new();
    match args.kind {
        CheckKind::Laws => {
            let op = match &args.spec {
                Some(path) => match load_spec(path)?.operator {
                    OperatorHandle::Entailment(op) => op,
                    _ => return Err(anyhow!("laws check needs an entailment operator")),
                },
                None => dialectica::logic::EntailmentOperator::pure(),
            };
            let samples = gen::law_samples(args.seed, args.samples, 5);
            let violations = connective_laws_check(&op, &samples)?;
            println!("laws: {} samples, {} violations", args.samples, violations.len());
            for v in &violations {
                println!("  law ({}) violated on sample {}: {}", v.law, v.sample, v.detail);
            }
            Ok(if violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        CheckKind::Completion => {
            let spec =
                load_spec(args.spec.as_ref().ok_or_else(|| anyhow!("--spec required"))?)?;
            let atoms: Vec<u64> = (0..args.atoms).collect();
            let mut watch = Vec::new();
            for &i in &atoms {
                watch.push(atom(i));
                watch.push(dialectica::codec::neg(atom(i)));
            }
            let opts = RunOptions::new(args.budget).with_watch(watch);
            let trace = run(&spec, &mut ctx, &opts)?;
            let limit = limit_report(
                &spec,
                &mut ctx,
                &trace,
                args.window,
                DEFAULT_LOOP_DEPTH,
                atom(args.atoms) + 2,
            )?;
            let report = completion_check(|c| limit.candidate(c), &atoms);
            for (x, verdict) in &report.entries {
                println!("atom {:>4}: {:?}", x, verdict);
            }
            println!("completion: {}", report.passed());
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        CheckKind::Characterization => {
            let spec =
                load_spec(args.spec.as_ref().ok_or_else(|| anyhow!("--spec required"))?)?;
            let watch = window_codes(&[&spec], args.window)?;
            let opts = RunOptions::new(args.budget).with_watch(watch);
            let trace = run(&spec, &mut ctx, &opts)?;
            let limit =
                limit_report(&spec, &mut ctx, &trace, args.window, DEFAULT_LOOP_DEPTH, 64)?;
            let entries = characterization_check(&spec, &mut ctx, &trace, &limit)?;
            let mut unknowns = 0;
            let mut fails = 0;
            for e in &entries {
                println!(
                    "slot {:>3}  f = {:<8} candidate = {:<12} witnessed = {:<12} {:?}",
                    e.slot,
                    e.f_value,
                    format!("{:?}", e.candidate),
                    format!("{:?}", e.witnessed),
                    e.verdict
                );
                match e.verdict {
                    CharVerdict::Unknown => unknowns += 1,
                    CharVerdict::Fails => fails += 1,
                    CharVerdict::Holds => {}
                }
            }
            Ok(if fails > 0 {
                ExitCode::from(1)
            } else if unknowns > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}
