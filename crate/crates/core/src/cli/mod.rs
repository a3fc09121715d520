//! Experiment orchestration and the command-line front end.
//!
//! `solve` runs one configuration and writes the convergence series as
//! CSV (and optionally JSON); `verify` runs the consistency gate and the
//! invariant suite. Exit codes: 0 success, 1 usage or I/O error,
//! 2 failed gate or invariant.

mod run;
mod testcase;
mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use run::{
    csv_string, emit_json, parse_json, read_json, run, run_batch, write_csv, RunConfig, RunRecord, CSV_HEADER,
    SCHEMA_VERSION,
};
pub use testcase::{build_test_case, CustomSpec, TestCase, TestId};
pub use verify::{verify, Check, VerifyOptions};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "thetacg",
    version,
    about = "Theta-weighted Krylov iterates with spectral diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the iteration and write the convergence series.
    Solve(SolveArgs),
    /// Check consistency and the structural invariants on a test problem.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Test case: 1a, 1b, 2a, 2b or custom.
    #[arg(long)]
    test: Option<TestId>,
    /// Grid points (power of two).
    #[arg(long)]
    n: Option<usize>,
    /// Half width of the periodic domain [-L, L).
    #[arg(long = "L")]
    half_length: Option<f64>,
    /// Order of the iterates (1 = conjugate gradients).
    #[arg(long)]
    xi: Option<f64>,
    /// Number of iterations.
    #[arg(long)]
    nmax: Option<usize>,
    /// Largest admissible relative residual of the manufactured solution.
    #[arg(long)]
    consistency_tol: Option<f64>,
    /// Custom diagonal spectrum (comma separated).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    eigenvalues: Option<Vec<f64>>,
    /// Initial error coefficients for the custom spectrum.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    error: Option<Vec<f64>>,
    /// Random custom problem of this dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Seed for the random custom problem.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Exponents of the reported rho values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    sigma: Option<Vec<f64>>,
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON output with metadata.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Stop once ‖R_N‖ ≤ tol_rel ‖R_0‖ + tol_abs.
    #[arg(long)]
    tol_rel: Option<f64>,
    /// Absolute part of the stopping threshold.
    #[arg(long)]
    tol_abs: Option<f64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    problem: ProblemArgs,
}

impl ProblemArgs {
    fn custom(&self) -> Option<CustomSpec> {
        match (&self.eigenvalues, &self.error, self.dim) {
            (Some(eigenvalues), Some(error), _) => Some(CustomSpec::Explicit {
                eigenvalues: eigenvalues.clone(),
                error: error.clone(),
            }),
            (_, _, Some(dim)) => Some(CustomSpec::Random {
                dim,
                seed: self.seed,
                min: 1e-3,
                max: 1e3,
            }),
            _ => None,
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(test) = self.test {
            if test != cfg.test {
                let (n, l) = test.default_grid();
                cfg.test = test;
                cfg.n = n;
                cfg.half_length = l;
            }
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(l) = self.half_length {
            cfg.half_length = l;
        }
        if let Some(xi) = self.xi {
            cfg.xi = xi;
        }
        if let Some(n) = self.nmax {
            cfg.n_max = n;
        }
        if let Some(t) = self.consistency_tol {
            cfg.consistency_tol = t;
        }
        if let Some(c) = self.custom() {
            cfg.custom = Some(c);
        }
    }
}

fn solve_config(args: &SolveArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, args.problem.test) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)?
        }
        (None, Some(test)) => RunConfig::new(test),
        (None, None) => return Err(Error::InvalidArgument("either --test or --config is required".into())),
    };
    args.problem.apply(&mut cfg);
    if let Some(s) = &args.sigma {
        cfg.sigmas = s.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if args.json.is_some() {
        cfg.json = args.json.clone();
    }
    if let Some(t) = args.tol_rel {
        cfg.tolerances.rel = t;
    }
    if let Some(t) = args.tol_abs {
        cfg.tolerances.abs = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Inconsistent { .. } => EXIT_INVARIANT,
        _ => EXIT_USAGE,
    }
}

fn solve(args: &SolveArgs) -> i32 {
    let cfg = match solve_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match run(&cfg) {
        Ok(record) => {
            if cfg.out.is_none() {
                print!("{}", csv_string(&record));
            }
            let failed = record
                .records
                .iter()
                .filter(|r| r.bound_chain_ok == Some(false))
                .count();
            eprintln!(
                "test {} n={} L={} xi={}: {} iterates, {}, consistency {:.2e}",
                cfg.test,
                cfg.n,
                cfg.half_length,
                cfg.xi,
                record.records.len(),
                match record.termination {
                    Some(t) => serde_json::to_value(t)
                        .map(|v| v.as_str().unwrap_or_default().replace('_', " "))
                        .unwrap_or_default(),
                    None => "no termination".into(),
                },
                record.consistency
            );
            if failed > 0 {
                eprintln!("bound chain failed on {failed} iterates");
                return EXIT_INVARIANT;
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn verify_cmd(args: &VerifyArgs) -> i32 {
    let Some(test) = args.problem.test else {
        eprintln!("error: --test is required");
        return EXIT_USAGE;
    };
    let mut cfg = RunConfig::new(test);
    cfg.n_max = 30;
    args.problem.apply(&mut cfg);
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let opts = VerifyOptions {
        test,
        n: cfg.n,
        half_length: cfg.half_length,
        xi: cfg.xi,
        n_max: cfg.n_max,
        consistency_tol: cfg.consistency_tol,
        custom: cfg.custom,
    };
    match verify(&opts) {
        Ok(checks) => {
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().all(|c| c.passed) {
                EXIT_OK
            } else {
                EXIT_INVARIANT
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `args` (including the program name) and runs the command;
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify_cmd(a),
    }
}
