use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adsl_core::exec::{Controller, JsonlSink, NullSink, RunResult, TraceSink};
use adsl_core::reverse::StopReason;
use adsl_core::{
    parse_program, validate_program, PolicyMode, Program, ResumePolicy, RunOptions, RunStatus, SequenceResume,
    WorkcellConfig,
};
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_OK: u8 = 0;
const EXIT_DIAGNOSTICS: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_ABORTED: u8 = 3;
const EXIT_REVERSE_STOPPED: u8 = 4;

/// Validate, run and reverse assembly programs against a simulated workcell.
#[derive(Parser)]
#[command(name = "adsl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a program and print its diagnostics.
    Validate { program: PathBuf },
    /// Execute the entry sequence and print a summary.
    Run(RunArgs),
    /// Execute forward, then undo the most recent instructions.
    Reverse {
        #[command(flatten)]
        run: RunArgs,
        /// Number of instructions to undo; everything when omitted.
        #[arg(long)]
        depth: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    program: PathBuf,
    #[arg(long)]
    workcell: PathBuf,
    /// Defaults to the workcell's `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON-lines trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Where a sequence continues after its recovery.
    #[arg(long, value_enum, default_value_t = ResumeArg::Restart)]
    return_to_sequence: ResumeArg,
    /// Depth growth when errors without recovery are handled by reversal.
    #[arg(long, value_enum, default_value_t = PolicyArg::Linear)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1)]
    base_depth: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResumeArg {
    Restart,
    Resume,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Linear,
    Exponential,
}

/// Failure to produce a result at all, as opposed to a run that aborted.
struct Failure(u8, anyhow::Error);

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure(EXIT_INPUT, e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { program } => validate(&program),
        Command::Run(args) => run(&args, None),
        Command::Reverse { run: args, depth } => run(&args, Some(depth)),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load_program(path: &Path) -> Result<Program, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let program = parse_program(&text).with_context(|| format!("parsing {}", path.display()))?;
    let report = validate_program(&program);
    if !report.is_empty() {
        for d in report.iter() {
            let sep = if d.location.is_some() { ":" } else { ": " };
            println!("{}{sep}{d}", path.display());
        }
        return Err(Failure(EXIT_DIAGNOSTICS, anyhow::anyhow!("{} diagnostics", report.len())));
    }
    Ok(program)
}

fn validate(path: &Path) -> Result<u8, Failure> {
    load_program(path)?;
    Ok(EXIT_OK)
}

fn run(args: &RunArgs, reverse: Option<Option<usize>>) -> Result<u8, Failure> {
    let program = load_program(&args.program)?;
    let text =
        std::fs::read_to_string(&args.workcell).with_context(|| format!("reading {}", args.workcell.display()))?;
    let config = WorkcellConfig::from_json(&text).with_context(|| format!("loading {}", args.workcell.display()))?;
    let options = RunOptions {
        seed: args.seed,
        sequence_resume: match args.return_to_sequence {
            ResumeArg::Restart => SequenceResume::Restart,
            ResumeArg::Resume => SequenceResume::Resume,
        },
        policy: ResumePolicy {
            mode: match args.policy {
                PolicyArg::Linear => PolicyMode::Linear,
                PolicyArg::Exponential => PolicyMode::Exponential,
            },
            base_depth: args.base_depth,
            ..ResumePolicy::default()
        },
        ..RunOptions::default()
    };

    let mut file_sink = match &args.trace {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            Some(JsonlSink::new(BufWriter::new(f)))
        }
        None => None,
    };
    let mut null = NullSink;
    let sink: &mut dyn TraceSink = match file_sink.as_mut() {
        Some(s) => s,
        None => &mut null,
    };

    let mut ctl = Controller::new(&program, config, options, sink);
    let result = ctl.run();
    print_summary(&result);
    let mut code = match result.status {
        RunStatus::Completed => EXIT_OK,
        RunStatus::Aborted(_) => EXIT_ABORTED,
    };
    if let (Some(depth), EXIT_OK) = (reverse, code) {
        match ctl.reverse(depth) {
            Ok(plan) => {
                let restored = plan
                    .restored_joints
                    .is_none_or(|want| ctl.workcell().joints().iter().zip(want).all(|(a, b)| (a - b).abs() <= 1e-9));
                let io_restored = plan.restored_io.as_deref().is_none_or(|want| ctl.workcell().io_bits() == want);
                println!("stop reason: {}", plan.stop);
                println!("steps: {}", plan.steps.len());
                println!("joints restored: {restored}");
                println!("io restored: {io_restored}");
                if matches!(plan.stop, StopReason::Barrier | StopReason::NeverReversibleHit) {
                    code = EXIT_REVERSE_STOPPED;
                }
            }
            Err(e) => {
                println!("stop reason: aborted: {}", e.0);
                code = EXIT_ABORTED;
            }
        }
    }
    drop(ctl);
    if let Some(sink) = file_sink {
        sink.into_inner().flush().context("writing trace")?;
    }
    Ok(code)
}

fn print_summary(result: &RunResult) {
    println!("seed: {}", result.seed);
    println!("instructions: {}", result.stats.instructions);
    println!("errors: {}", result.stats.errors);
    println!("recoveries: {}", result.stats.recoveries);
    println!("reversals: {}", result.stats.reversals);
    println!("simulated time: {}", result.stats.sim_time);
    match &result.status {
        RunStatus::Completed => println!("status: completed"),
        RunStatus::Aborted(reason) => println!("status: aborted: {reason}"),
    }
}
