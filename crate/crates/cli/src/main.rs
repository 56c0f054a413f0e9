use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use redres::bench::{gen_random, oracle_eval, Family};
use redres::calculus::check_proof;
use redres::format::{read_proof, write_proof};
use redres::formula::{emit_qdimacs, parse_qdimacs, Pcnf};
use redres::solver::{solve, Limits, RefinementMode, SolverConfig};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_TRUE: u8 = 10;
const EXIT_FALSE: u8 = 20;

/// QBF solving by clausal abstraction with checkable refutations.
#[derive(Parser)]
#[command(name = "redres", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide a QDIMACS formula; exits 10 when true and 20 when false.
    Solve {
        /// Formula file, `-` or omitted for stdin.
        input: Option<PathBuf>,
        /// plain, strengthen, expansion or both.
        #[arg(long, default_value = "both")]
        refinement: RefinementMode,
        /// Write the refutation here when the formula is false.
        #[arg(long)]
        proof: Option<PathBuf>,
        /// Print solver statistics after the verdict.
        #[arg(long)]
        stats: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        conflict_limit: Option<u64>,
        #[arg(long)]
        iteration_limit: Option<u64>,
    },
    /// Check a proof document against its formula.
    Check { proof: PathBuf, input: PathBuf },
    /// Write a generated formula as QDIMACS.
    Gen {
        /// crn, crn_prime, dag, qparity, composite, example1, example2 or random.
        family: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Random family: number of quantifier blocks.
        #[arg(long, default_value_t = 3)]
        blocks: usize,
        /// Random family: variables per block.
        #[arg(long, default_value_t = 2)]
        vars: usize,
        /// Random family: number of clauses.
        #[arg(long, default_value_t = 10)]
        clauses: usize,
        /// Random family: maximal clause width.
        #[arg(long, default_value_t = 3)]
        width: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Evaluate a small formula by brute force.
    Oracle { input: Option<PathBuf> },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn read_formula(input: Option<&Path>) -> Result<Pcnf, Failure> {
    let text = match input {
        None => read_stdin()?,
        Some(p) if p == Path::new("-") => read_stdin()?,
        Some(p) => fs::read_to_string(p).map_err(|e| Failure(format!("cannot read formula {}: {e}", p.display())))?,
    };
    parse_qdimacs(&text).map_err(|e| Failure(format!("cannot parse formula: {e}")))
}

fn read_stdin() -> Result<String, Failure> {
    let mut text = String::new();
    io::stdin()
        .read_to_string(&mut text)
        .map_err(|e| Failure(format!("cannot read formula from stdin: {e}")))?;
    Ok(text)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Solve {
            input,
            refinement,
            proof,
            stats,
            seed,
            time_limit,
            conflict_limit,
            iteration_limit,
        } => {
            let pcnf = read_formula(input.as_deref())?;
            let time = time_limit
                .map(Duration::try_from_secs_f64)
                .transpose()
                .map_err(|e| Failure(format!("bad time limit: {e}")))?;
            let config = SolverConfig {
                seed,
                proof_logging: proof.is_some(),
                limits: Limits {
                    time,
                    conflicts: conflict_limit,
                    iterations: iteration_limit,
                },
                ..SolverConfig::with_mode(refinement)
            };
            let outcome = solve(&pcnf, config)?;
            writeln!(out, "s cnf {}", if outcome.verdict { "TRUE" } else { "FALSE" })?;
            if stats {
                write!(out, "{}", outcome.stats.report())?;
            }
            if let (Some(path), Some(p)) = (proof, outcome.proof.as_ref()) {
                fs::write(&path, write_proof(&pcnf, p))
                    .map_err(|e| Failure(format!("cannot write proof {}: {e}", path.display())))?;
            }
            Ok(if outcome.verdict { EXIT_TRUE } else { EXIT_FALSE })
        }
        Command::Check { proof, input } => {
            let pcnf = read_formula(Some(&input))?;
            let text = fs::read_to_string(&proof).map_err(|e| Failure(format!("cannot read proof {}: {e}", proof.display())))?;
            let proof = read_proof(&pcnf, &text)?;
            match check_proof(&pcnf, &proof) {
                Ok(report) => {
                    writeln!(out, "proof ok: size {}", report.size)?;
                    Ok(EXIT_OK)
                }
                Err(v) => Err(Failure(format!("proof rejected: {v}"))),
            }
        }
        Command::Gen {
            family,
            n,
            seed,
            blocks,
            vars,
            clauses,
            width,
            output,
        } => {
            let pcnf = if family == "random" {
                gen_random(seed, blocks, vars, clauses, width)
            } else {
                family.parse::<Family>()?.generate(n)?
            };
            let text = emit_qdimacs(&pcnf);
            match output {
                Some(path) => fs::write(&path, text).map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))?,
                None => out.write_all(text.as_bytes())?,
            }
            Ok(EXIT_OK)
        }
        Command::Oracle { input } => {
            let pcnf = read_formula(input.as_deref())?;
            writeln!(out, "{}", if oracle_eval(&pcnf)? { "TRUE" } else { "FALSE" })?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(reason)) => {
            eprintln!("error: {}", reason.lines().next().unwrap_or("unknown failure"));
            ExitCode::from(EXIT_ERROR)
        }
    }
}
