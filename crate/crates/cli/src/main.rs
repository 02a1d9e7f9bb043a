use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capcount::problem::{run, verify, ProblemFile, ResultDocument, Task};
use capcount::SolveStatus;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

/// Capacity-based counting and optimization over matroid base families.
#[derive(Parser)]
#[command(name = "capcount", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capacity of the polynomial with respect to the base family.
    Capacity {
        #[arg(long, value_enum, default_value_t = CapacityVariant::Dual)]
        variant: CapacityVariant,
        #[command(flatten)]
        common: Common,
    },
    /// Interval estimate of the coefficient sum over the bases.
    Count(Common),
    /// Interval estimate of the largest base coefficient.
    Maximize(Common),
    /// Interval estimate of the largest principal minor indexed by a base.
    Subdet(Common),
    /// Maximum-entropy form of the capacity for a distribution polynomial.
    Entropy(Common),
    /// Brute-force reference values for small instances.
    Oracle {
        #[arg(value_enum)]
        kind: OracleKind,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CapacityVariant {
    /// Infimum over the feasible cone.
    Dual,
    /// Supremum over the base polytope.
    Primal,
    /// Lower capacity.
    Lower,
    /// Capacity over the positive orthant.
    Gurvits,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Sum,
    Max,
    Capacity,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Args)]
struct Common {
    /// Problem files; results are printed in the given order.
    #[arg(long, required = true, num_args = 1..)]
    problem: Vec<PathBuf>,
    /// Additive tolerance on log-values (overrides the file).
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration cap (overrides the file).
    #[arg(long)]
    budget: Option<usize>,
    /// Random seed (overrides the file).
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-check results against the brute-force oracles when m ≤ 8.
    #[arg(long)]
    verify: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads across problem files.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Command {
    fn task(&self) -> Task {
        match self {
            Command::Capacity { variant, .. } => match variant {
                CapacityVariant::Dual => Task::Capacity,
                CapacityVariant::Primal => Task::Primal,
                CapacityVariant::Lower => Task::LowerCapacity,
                CapacityVariant::Gurvits => Task::Gurvits,
            },
            Command::Count(_) => Task::Count,
            Command::Maximize(_) => Task::Maximize,
            Command::Subdet(_) => Task::Subdet,
            Command::Entropy(_) => Task::Entropy,
            Command::Oracle { kind, .. } => match kind {
                OracleKind::Sum => Task::OracleSum,
                OracleKind::Max => Task::OracleMax,
                OracleKind::Capacity => Task::OracleCapacity,
            },
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Capacity { common, .. } | Command::Oracle { common, .. } => common,
            Command::Count(c) | Command::Maximize(c) | Command::Subdet(c) | Command::Entropy(c) => c,
        }
    }
}

/// Exit codes, in increasing severity.
const EXIT_OK: u8 = 0;
const EXIT_BUDGET: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_INPUT: u8 = 1;

fn severity(code: u8) -> u8 {
    match code {
        EXIT_OK => 0,
        EXIT_BUDGET => 1,
        EXIT_VERIFY => 2,
        _ => 3,
    }
}

enum Outcome {
    Done { doc: ResultDocument, violations: Vec<String> },
    Failed(String),
}

impl Outcome {
    fn exit_code(&self) -> u8 {
        match self {
            Outcome::Failed(_) => EXIT_INPUT,
            Outcome::Done { violations, .. } if !violations.is_empty() => EXIT_VERIFY,
            Outcome::Done { doc, .. } if doc.status == SolveStatus::BudgetExhausted => EXIT_BUDGET,
            Outcome::Done { .. } => EXIT_OK,
        }
    }
}

fn solve(path: &Path, task: Task, common: &Common) -> Outcome {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return Outcome::Failed(format!("cannot read: {e}")),
    };
    let mut problem = match ProblemFile::from_json(&text) {
        Ok(p) => p,
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    problem.eps = common.eps.or(problem.eps);
    problem.budget = common.budget.or(problem.budget);
    problem.seed = common.seed.or(problem.seed);
    let doc = match run(&problem, task) {
        Ok(d) => d,
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    let violations = if common.verify {
        match verify(&problem, &doc) {
            Ok(v) => v,
            Err(e) => return Outcome::Failed(format!("verification failed: {e}")),
        }
    } else {
        Vec::new()
    };
    Outcome::Done { doc, violations }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let task = cli.command.task();
    let common = cli.command.common();

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(common.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let outcomes: Vec<Outcome> = pool.install(|| common.problem.par_iter().map(|p| solve(p, task, common)).collect());

    if common.format == Format::Tsv {
        println!("file\t{}", ResultDocument::TSV_HEADER);
    }
    let mut code = EXIT_OK;
    for (path, outcome) in common.problem.iter().zip(&outcomes) {
        match outcome {
            Outcome::Done { doc, violations } => {
                match common.format {
                    Format::Json => println!("{}", doc.to_json()),
                    Format::Tsv => println!("{}\t{}", path.display(), doc.to_tsv()),
                }
                for v in &doc.warnings {
                    eprintln!("warning: {}: {v}", path.display());
                }
                for v in violations {
                    eprintln!("verify: {}: {v}", path.display());
                }
            }
            Outcome::Failed(msg) => eprintln!("error: {}: {msg}", path.display()),
        }
        let c = outcome.exit_code();
        if severity(c) > severity(code) {
            code = c;
        }
    }
    ExitCode::from(code)
}
