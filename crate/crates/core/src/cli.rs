//! Experiment drivers and the command-line front end.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::adapt::{adaptive_loop_with, AdaptConfig, ConvergenceRecord, ConvergenceTable, Mode, StopRule};
use crate::assembly::ProblemData;
use crate::error::{Error, Result};
use crate::estimator::{exact_error_norms, ExactSolution};
use crate::mesh::io::{write_gamma, write_mesh};
use crate::mesh::MeshPair;
use crate::solver::{infsup_constant, solve_problem, SolutionTriple};
use crate::spaces::{Discretization, SchemeConfig};
use crate::timestep::{run_parabolic_with, write_time_series, TimeConfig, TimeData, TimeRecord, TimeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Problem {
    Square,
    Lshape,
    Parabolic,
    Manufactured,
    Infsup,
}

impl Problem {
    fn name(self) -> &'static str {
        match self {
            Problem::Square => "square",
            Problem::Lshape => "lshape",
            Problem::Parabolic => "parabolic",
            Problem::Manufactured => "manufactured",
            Problem::Infsup => "infsup",
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// `p1`, `p2p0` or `p2p1`.
    pub scheme: String,
    pub mode: Mode,
    pub theta: f64,
    pub sigma: f64,
    pub max_dofs: usize,
    /// Estimator tolerance; for stationary runs it replaces the dof bound.
    pub tol: Option<f64>,
    pub tau: f64,
    pub t0: f64,
    pub t1: f64,
    pub max_rounds: usize,
    /// Uniform levels for the manufactured and inf-sup studies.
    pub levels: usize,
    pub out: Option<PathBuf>,
    pub dump_meshes: Option<PathBuf>,
    /// Parabolic snapshots every this many steps (the final state is always
    /// dumped).
    pub snapshot_every: Option<usize>,
    pub with_error: bool,
}

impl ExperimentConfig {
    pub fn defaults(problem: Problem) -> Self {
        let mut c = Self {
            problem,
            scheme: "p1".into(),
            mode: Mode::Adaptive,
            theta: 0.75,
            sigma: 1.0,
            max_dofs: 10_000,
            tol: None,
            tau: 1.5e-2,
            t0: 1.0,
            t1: 10.0,
            max_rounds: 100,
            levels: 5,
            out: None,
            dump_meshes: None,
            snapshot_every: None,
            with_error: false,
        };
        match problem {
            Problem::Parabolic => {
                c.scheme = "p2p0".into();
                c.tol = Some(1e-6);
            }
            Problem::Manufactured => {
                c.mode = Mode::Uniform;
                c.levels = 7;
            }
            Problem::Infsup => c.levels = 4,
            Problem::Square | Problem::Lshape => {}
        }
        c
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
        }
        match key.replace('-', "_").as_str() {
            "scheme" => {
                scheme_config(value)?;
                self.scheme = value.into();
            }
            "mode" => {
                self.mode = match value {
                    "adaptive" => Mode::Adaptive,
                    "uniform" => Mode::Uniform,
                    _ => return Err(Error::Config(format!("unknown mode '{value}'"))),
                }
            }
            "theta" => self.theta = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "max_dofs" => self.max_dofs = num(key, value)?,
            "tol" => self.tol = Some(num(key, value)?),
            "tau" => self.tau = num(key, value)?,
            "t0" => self.t0 = num(key, value)?,
            "t1" => self.t1 = num(key, value)?,
            "max_rounds" => self.max_rounds = num(key, value)?,
            "levels" => self.levels = num(key, value)?,
            "out" => self.out = Some(value.into()),
            "dump_meshes" => self.dump_meshes = Some(value.into()),
            "snapshot_every" => self.snapshot_every = Some(num(key, value)?),
            "with_error" => self.with_error = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` file; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, found '{line}'", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        scheme_config(&self.scheme)?.with_sigma(self.sigma).validate()?;
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) {
                return Err(Error::Config(format!("tol must be positive, got {tol}")));
            }
        }
        if self.problem == Problem::Parabolic {
            self.time_config().validate()?;
        }
        if self.levels == 0 {
            return Err(Error::Config("levels must be positive".into()));
        }
        Ok(())
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        Ok(scheme_config(&self.scheme)?.with_sigma(self.sigma))
    }

    pub fn adapt_config(&self) -> AdaptConfig {
        AdaptConfig {
            theta: self.theta,
            mode: self.mode,
            stop: match self.tol {
                Some(t) => StopRule::Tolerance(t),
                None => StopRule::MaxDofs(self.max_dofs),
            },
            with_error: self.with_error,
            ..AdaptConfig::default()
        }
    }

    pub fn time_config(&self) -> TimeConfig {
        TimeConfig {
            t0: self.t0,
            t1: self.t1,
            tau: self.tau,
            tol: self.tol.unwrap_or(1e-6),
            theta: self.theta,
            max_rounds: self.max_rounds,
        }
    }
}

pub fn scheme_config(name: &str) -> Result<SchemeConfig> {
    match name {
        "p1" => Ok(SchemeConfig::p1()),
        "p2p0" => Ok(SchemeConfig::p2p0()),
        "p2p1" => Ok(SchemeConfig::p2p1()),
        _ => Err(Error::Config(format!("unknown scheme '{name}' (expected p1, p2p0 or p2p1)"))),
    }
}

pub fn square_data() -> ProblemData {
    ProblemData::new(|_| 0.04, |x| x[0] * x[1] * (10.0 * PI * x[0]).cos() * (10.0 * PI * x[1]).cos())
}

pub fn lshape_data() -> ProblemData {
    ProblemData::new(|_| 4.0, |x| 4.0 * (x[0] * x[0] - x[0] + x[1] * x[1] - x[1]))
}

pub fn parabolic_data() -> TimeData {
    TimeData::new(|_, _| 0.1, |x, t| x[0] * x[1] * (PI * t * x[0]).cos() * (PI * t * x[1]).cos())
}

/// `u = cos πx cos πy` on the unit square together with matching sources
/// for reaction coefficient `sigma`. Its normal derivative vanishes on the
/// boundary, and so does the multiplier.
pub fn manufactured(sigma: f64) -> (ExactSolution, ProblemData) {
    let u = |x: [f64; 2]| (PI * x[0]).cos() * (PI * x[1]).cos();
    let exact = ExactSolution {
        u: Arc::new(u),
        grad_u: Arc::new(|x| {
            [-PI * (PI * x[0]).sin() * (PI * x[1]).cos(), -PI * (PI * x[0]).cos() * (PI * x[1]).sin()]
        }),
        lambda: Arc::new(|_, _| 0.0),
    };
    let data = ProblemData::new(move |x| (sigma + 2.0 * PI * PI) * u(x), move |x| (sigma + PI * PI) * u(x));
    (exact, data)
}

/// Mesh dump followed by one `field index value` line per coefficient.
pub fn write_solution<W: Write>(sol: &SolutionTriple, mut w: W) -> Result<()> {
    write_mesh(sol.disc.bulk(), &mut w)?;
    write_gamma(sol.disc.gamma(), &mut w)?;
    for (field, values) in [("u", &sol.u), ("p", &sol.p), ("lambda", &sol.lambda)] {
        for (i, v) in values.iter().enumerate() {
            writeln!(w, "{field} {i} {v:.16e}")?;
        }
    }
    Ok(())
}

fn dump(dir: &Path, name: &str, sol: &SolutionTriple) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    write_solution(sol, &mut w)?;
    w.flush()?;
    Ok(())
}

fn metadata(config: &ExperimentConfig) -> Vec<(String, String)> {
    vec![
        ("problem".into(), config.problem.name().into()),
        ("scheme".into(), config.scheme.clone()),
        ("theta".into(), config.theta.to_string()),
        ("sigma".into(), config.sigma.to_string()),
        ("lambda_norm".into(), "h-weighted-L2".into()),
        ("mode".into(), if config.mode == Mode::Adaptive { "adaptive" } else { "uniform" }.into()),
    ]
}

fn stationary(config: &ExperimentConfig, pair: MeshPair, data: &ProblemData) -> Result<ConvergenceTable> {
    config.validate()?;
    let disc = Arc::new(Discretization::new(pair, config.scheme_config()?)?);
    let mut table = adaptive_loop_with(&config.adapt_config(), disc, data, |out| match &config.dump_meshes {
        Some(dir) => dump(dir, &format!("step_{:04}.txt", out.record.step), &out.solution),
        None => Ok(()),
    })?;
    table.metadata = metadata(config);
    Ok(table)
}

pub fn run_square(config: &ExperimentConfig) -> Result<ConvergenceTable> {
    stationary(config, MeshPair::unit_square(2)?, &square_data())
}

pub fn run_lshape(config: &ExperimentConfig) -> Result<ConvergenceTable> {
    stationary(config, MeshPair::lshape(1)?, &lshape_data())
}

/// Uniform refinement against the analytic solution; `error` holds the
/// combined norm of the three fields.
pub fn run_manufactured(config: &ExperimentConfig) -> Result<ConvergenceTable> {
    config.validate()?;
    let (exact, data) = manufactured(config.sigma);
    let mut disc = Arc::new(Discretization::new(MeshPair::unit_square(2)?, config.scheme_config()?)?);
    let mut table = ConvergenceTable { metadata: metadata(config), rows: Vec::new() };
    table.metadata.retain(|(k, _)| k != "mode");
    table.metadata.push(("mode".into(), "uniform".into()));
    for step in 0..config.levels {
        let sol = solve_problem(disc.clone(), &data)?;
        let err = exact_error_norms(&sol, &exact)?;
        let report = crate::estimator::estimate(&sol, &data);
        let d = &disc.dofs;
        table.rows.push(ConvergenceRecord {
            step,
            dofs_u: d.n_u,
            dofs_p: d.n_p,
            dofs_lambda: d.n_lambda,
            error: Some(err.total),
            estimator: report.total,
        });
        log::info!("level {step}: dofs {} error {:.4e}", d.total(), err.total);
        if let Some(dir) = &config.dump_meshes {
            dump(dir, &format!("step_{step:04}.txt"), &sol)?;
        }
        if step + 1 < config.levels {
            disc = Arc::new(disc.on(disc.pair.uniform_refine().pair)?);
        }
    }
    Ok(table)
}

/// One row of the inf-sup study. `gamma_refined` marks runs in which the
/// boundary mesh was bisected once more than the bulk trace.
#[derive(Debug, Clone, PartialEq)]
pub struct InfSupRow {
    pub scheme: String,
    pub gamma_refined: bool,
    pub level: usize,
    pub dofs: usize,
    pub beta: f64,
}

pub fn run_infsup(config: &ExperimentConfig) -> Result<Vec<InfSupRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for name in ["p1", "p2p0"] {
        let scheme = scheme_config(name)?.with_sigma(config.sigma);
        for gamma_refined in [false, true] {
            let mut pair = MeshPair::unit_square(2)?;
            for level in 0..config.levels {
                let used = if gamma_refined { pair.refine_gamma_uniform()?.pair } else { pair.clone() };
                let disc = Discretization::new(used, scheme.clone())?;
                let beta = infsup_constant(&disc)?;
                log::info!("{name} level {level}: dofs {} beta {beta:.6}", disc.dofs.total());
                rows.push(InfSupRow { scheme: name.into(), gamma_refined, level, dofs: disc.dofs.total(), beta });
                pair = pair.uniform_refine().pair;
            }
        }
    }
    Ok(rows)
}

pub fn write_infsup<W: Write>(rows: &[InfSupRow], mut w: W) -> Result<()> {
    writeln!(w, "# problem=infsup lambda_norm=h-weighted-L2")?;
    writeln!(w, "scheme,gamma_refined,level,dofs,beta")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{:.16e}", r.scheme, r.gamma_refined, r.level, r.dofs, r.beta)?;
    }
    Ok(())
}

/// Time history and final state of the parabolic experiment, started from
/// zero initial data.
pub fn run_parabolic_experiment(config: &ExperimentConfig) -> Result<(Vec<TimeRecord>, TimeState)> {
    run_parabolic_from(config, &parabolic_data())
}

pub fn run_parabolic_from(config: &ExperimentConfig, data: &TimeData) -> Result<(Vec<TimeRecord>, TimeState)> {
    config.validate()?;
    let tc = config.time_config();
    let disc = Arc::new(Discretization::new(MeshPair::unit_square(2)?, config.scheme_config()?)?);
    let initial = TimeState::initial(tc.t0, SolutionTriple::zero(disc))?;
    let steps = tc.num_steps();
    let (records, state) = run_parabolic_with(&tc, initial, data, |step| {
        let n = step.record.n;
        let due = config.snapshot_every.is_some_and(|k| k > 0 && n % k == 0) || n == steps;
        match &config.dump_meshes {
            Some(dir) if due => dump(dir, &format!("n_{n:05}.txt"), &step.state.sol),
            _ => Ok(()),
        }
    })?;
    Ok((records, state))
}

fn parabolic_metadata(config: &ExperimentConfig) -> Vec<(String, String)> {
    let mut m = metadata(config);
    m.retain(|(k, _)| k != "mode" && k != "sigma");
    m.extend([
        ("tau".to_string(), config.tau.to_string()),
        ("tol".to_string(), config.time_config().tol.to_string()),
        ("t0".to_string(), config.t0.to_string()),
        ("t1".to_string(), config.t1.to_string()),
    ]);
    m
}

/// Command-line flags shared by all subcommands; they override `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat key=value file with defaults for the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<String>,
    /// adaptive or uniform
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub max_dofs: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory receiving solution dumps.
    #[arg(long)]
    pub dump_meshes: Option<PathBuf>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// Add the error against a reference solution to the table.
    #[arg(long)]
    pub with_error: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Adaptive or uniform run on the unit square.
    Square(CommonArgs),
    /// Adaptive or uniform run on the L-shaped domain.
    Lshape(CommonArgs),
    /// Implicit Euler run with adaptivity in every step.
    Parabolic(CommonArgs),
    /// Uniform refinement against an analytic solution.
    Manufactured(CommonArgs),
    /// Discrete inf-sup constants over uniform levels.
    Infsup(CommonArgs),
}

#[derive(Debug, Parser)]
#[command(name = "dynbc", version, about = "Adaptive finite elements for dynamic boundary conditions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let (problem, args) = match &self.command {
            Command::Square(a) => (Problem::Square, a),
            Command::Lshape(a) => (Problem::Lshape, a),
            Command::Parabolic(a) => (Problem::Parabolic, a),
            Command::Manufactured(a) => (Problem::Manufactured, a),
            Command::Infsup(a) => (Problem::Infsup, a),
        };
        let mut c = ExperimentConfig::defaults(problem);
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            c.apply_file(&text)?;
        }
        let mut set = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                set.insert(k.to_string(), v);
            }
        };
        put("scheme", args.scheme.clone());
        put("mode", args.mode.clone());
        put("theta", args.theta.map(|v| v.to_string()));
        put("sigma", args.sigma.map(|v| v.to_string()));
        put("max_dofs", args.max_dofs.map(|v| v.to_string()));
        put("tol", args.tol.map(|v| v.to_string()));
        put("tau", args.tau.map(|v| v.to_string()));
        put("t0", args.t0.map(|v| v.to_string()));
        put("t1", args.t1.map(|v| v.to_string()));
        put("max_rounds", args.max_rounds.map(|v| v.to_string()));
        put("levels", args.levels.map(|v| v.to_string()));
        put("snapshot_every", args.snapshot_every.map(|v| v.to_string()));
        for (k, v) in set {
            c.set(&k, &v)?;
        }
        if let Some(p) = &args.out {
            c.out = Some(p.clone());
        }
        if let Some(p) = &args.dump_meshes {
            c.dump_meshes = Some(p.clone());
        }
        c.with_error |= args.with_error;
        c.validate()?;
        Ok(c)
    }
}

fn write_output(config: &ExperimentConfig, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match &config.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            body(&mut w)?;
        }
    }
    Ok(())
}

/// Runs the resolved experiment and writes its table.
pub fn execute(config: &ExperimentConfig) -> Result<()> {
    match config.problem {
        Problem::Square | Problem::Lshape | Problem::Manufactured => {
            let table = match config.problem {
                Problem::Square => run_square(config)?,
                Problem::Lshape => run_lshape(config)?,
                _ => run_manufactured(config)?,
            };
            write_output(config, |w| table.write_csv(w))
        }
        Problem::Parabolic => {
            let (records, _) = run_parabolic_experiment(config)?;
            write_output(config, |w| write_time_series(&parabolic_metadata(config), &records, w))
        }
        Problem::Infsup => {
            let rows = run_infsup(config)?;
            write_output(config, |w| write_infsup(&rows, w))
        }
    }
}

/// Process exit code for a failed run: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() { 2 } else { 1 }
}
