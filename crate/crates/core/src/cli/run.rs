//! One experiment: build a problem, iterate, and record the error
//! functionals and residual-polynomial diagnostics at every step.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::testcase::{build_test_case, CustomSpec, TestCase, TestId};
use crate::diagnostics::{initial_error_measure, rho, ConvergenceRecord};
use crate::error::{Error, Result};
use crate::krylov::{run_cg, theta_iterates, theta_iterates_spectral, IterateHistory, Termination, Tolerances};
use crate::measures::{weight_by_power, DiscreteSpectralMeasure};
use crate::orthopoly::{bound_chain, delta_n, lemma_bound, residual_polynomials, ResidualFamily};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "N,rho0,rho1,rho1_N2,rho2,delta_n,ritz_min,ritz_max,bound_chain_ok";

fn default_consistency() -> f64 {
    1e-6
}

fn default_sigmas() -> Vec<f64> {
    vec![0.0, 1.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub test: TestId,
    pub n: usize,
    #[serde(rename = "L")]
    pub half_length: f64,
    pub xi: f64,
    pub n_max: usize,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Largest admissible `‖A f − g‖/‖g‖` of the manufactured solution.
    #[serde(default = "default_consistency")]
    pub consistency_tol: f64,
    #[serde(default)]
    pub custom: Option<CustomSpec>,
}

impl RunConfig {
    pub fn new(test: TestId) -> Self {
        let (n, half_length) = test.default_grid();
        Self {
            test,
            n,
            half_length,
            xi: 1.0,
            n_max: 60,
            sigmas: default_sigmas(),
            out: None,
            json: None,
            tolerances: Tolerances::default(),
            consistency_tol: default_consistency(),
            custom: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.test == TestId::Custom {
            if self.custom.is_none() {
                return bad("custom test needs a `custom` spectrum".into());
            }
        } else {
            if self.n < 2 || !self.n.is_power_of_two() {
                return bad(format!("n = {} is not a power of two", self.n));
            }
            if !(self.half_length > 0.0) || !self.half_length.is_finite() {
                return bad(format!("L = {} must be positive", self.half_length));
            }
            if self.n_max > self.n {
                return bad(format!("nmax = {} exceeds n = {}", self.n_max, self.n));
            }
        }
        if !(self.xi >= 0.0) || !self.xi.is_finite() {
            return bad(format!("xi = {} must be non-negative", self.xi));
        }
        if self.sigmas.iter().any(|s| !s.is_finite()) {
            return bad("sigma values must be finite".into());
        }
        Ok(())
    }

    fn reported_sigmas(&self) -> Vec<f64> {
        let mut s = default_sigmas();
        for &v in &self.sigmas {
            if !s.contains(&v) {
                s.push(v);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config: RunConfig,
    pub operator_norm: f64,
    pub spectral: bool,
    pub consistency: f64,
    pub datum_shift: f64,
    pub solution_adjustment: f64,
    pub termination: Option<Termination>,
    pub wall_time_secs: f64,
    /// The `N = 0` row.
    pub initial: ConvergenceRecord,
    pub records: Vec<ConvergenceRecord>,
}

impl RunRecord {
    /// The row at `N`, or the last row if the run ended earlier.
    pub fn at_or_last(&self, n: usize) -> &ConvergenceRecord {
        self.records.iter().rev().find(|r| r.n <= n).unwrap_or(&self.initial)
    }

    /// `N = 0` row followed by the series.
    pub fn all_records(&self) -> Vec<ConvergenceRecord> {
        std::iter::once(self.initial.clone())
            .chain(self.records.iter().cloned())
            .collect()
    }

    pub fn column(&self, sigma: f64) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.rho(sigma)).collect()
    }

    pub fn rho1_n2_column(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.rho1_n2()).collect()
    }
}

/// Measures and residual polynomials needed for the spectral columns.
struct SpectralContext {
    mu: Vec<(f64, DiscreteSpectralMeasure)>,
    nu: DiscreteSpectralMeasure,
    family: ResidualFamily,
}

impl SpectralContext {
    fn build(case: &TestCase, xi: f64, sigmas: &[f64], n_max: usize) -> Result<Option<Self>> {
        let problem = &case.problem;
        let op = problem.operator();
        if op.spectral().is_none() || problem.known_solution().is_none() {
            return Ok(None);
        }
        let mu0 = initial_error_measure(problem)?;
        let mu = sigmas
            .iter()
            .map(|&s| Ok((s, weight_by_power(&mu0, s)?)))
            .collect::<Result<Vec<_>>>()?;
        let nu = weight_by_power(&mu0, xi + 1.0)?;
        let family = residual_polynomials(&nu, n_max)?;
        Ok(Some(Self { mu, nu, family }))
    }

    fn fill(&self, record: &mut ConvergenceRecord, xi: f64) -> Result<()> {
        let Some(p) = self.family.get(record.n) else {
            return Ok(());
        };
        record.delta_n = Some(delta_n(p)?);
        record.ritz_min = p.zeros().first().copied();
        record.ritz_max = p.zeros().last().copied();
        let mut ok = None;
        for (sigma, mu) in &self.mu {
            if *sigma > xi {
                continue;
            }
            let value = record.rho(*sigma).unwrap_or(f64::NAN);
            let chain = bound_chain(value, p, mu, &self.nu, xi, *sigma)?;
            let lemma = lemma_bound(p, &self.nu, mu, xi, *sigma)?;
            ok = Some(ok.unwrap_or(true) && chain.ok() && lemma.satisfied);
        }
        record.bound_chain_ok = ok;
        Ok(())
    }
}

fn iterate(case: &TestCase, config: &RunConfig) -> Result<IterateHistory> {
    let p = &case.problem;
    if config.xi == 1.0 {
        run_cg(p, config.n_max, config.tolerances, |_| {})
    } else if config.xi >= 1.0 {
        theta_iterates(p, config.xi, config.n_max, config.tolerances)
    } else {
        theta_iterates_spectral(p, config.xi, config.n_max, config.tolerances)
    }
}

/// Runs one experiment and writes the CSV and JSON outputs named in the
/// config. The consistency gate runs before the solver.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let case = build_test_case(config.test, config.n, config.half_length, config.custom.as_ref())?;
    if !(case.consistency <= config.consistency_tol) {
        return Err(Error::Inconsistent {
            residual: case.consistency,
            threshold: config.consistency_tol,
        });
    }
    let problem = &case.problem;
    let sigmas = config.reported_sigmas();
    let context = SpectralContext::build(&case, config.xi, &sigmas, config.n_max)?;

    let make_record = |n: usize, x: &[f64]| -> Result<ConvergenceRecord> {
        let rho = sigmas
            .iter()
            .map(|&s| Ok((s, rho(problem, x, s)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut record = ConvergenceRecord {
            n,
            rho,
            delta_n: None,
            ritz_min: None,
            ritz_max: None,
            bound_chain_ok: None,
        };
        if let Some(ctx) = &context {
            ctx.fill(&mut record, config.xi)?;
        }
        Ok(record)
    };

    let initial = make_record(0, problem.initial())?;
    let (records, termination) = if config.n_max == 0 {
        (Vec::new(), None)
    } else {
        let history = iterate(&case, config)?;
        let records = history.steps[1..]
            .iter()
            .map(|s| make_record(s.n, &s.iterate))
            .collect::<Result<Vec<_>>>()?;
        (records, Some(history.termination))
    };

    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        operator_norm: problem.operator_norm(),
        spectral: problem.operator().spectral().is_some(),
        consistency: case.consistency,
        datum_shift: case.datum_shift,
        solution_adjustment: case.solution_adjustment,
        termination,
        wall_time_secs: start.elapsed().as_secs_f64(),
        initial,
        records,
    };
    if let Some(path) = &config.out {
        write_csv(&record, path)?;
    }
    if let Some(path) = &config.json {
        emit_json(&record, path)?;
    }
    Ok(record)
}

/// Runs independent configurations on separate threads.
pub fn run_batch(configs: &[RunConfig]) -> Vec<Result<RunRecord>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::InvalidArgument("run panicked".into())))
            })
            .collect()
    })
}

fn fmt_f64(v: f64) -> String {
    ryu::Buffer::new().format(v).to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn csv_string(record: &RunRecord) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &record.records {
        let fields = [
            r.n.to_string(),
            fmt_opt(r.rho(0.0)),
            fmt_opt(r.rho(1.0)),
            fmt_opt(r.rho1_n2()),
            fmt_opt(r.rho(2.0)),
            fmt_opt(r.delta_n),
            fmt_opt(r.ritz_min),
            fmt_opt(r.ritz_max),
            r.bound_chain_ok.map(|b| b.to_string()).unwrap_or_default(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_csv(record: &RunRecord, path: &Path) -> Result<()> {
    fs::write(path, csv_string(record)).map_err(|e| io_error(path, e))
}

pub fn emit_json(record: &RunRecord, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    serde_json::to_writer_pretty(&mut file, record).map_err(|e| io_error(path, e))?;
    file.write_all(b"\n").map_err(|e| io_error(path, e))
}

pub fn read_json(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_json(&text)
}

pub fn parse_json(text: &str) -> Result<RunRecord> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse("missing schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion {
            found: found as u32,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(serde_json::from_value(value)?)
}
