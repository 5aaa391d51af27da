//! Dörfler marking and the solve–estimate–mark–refine loop.

use std::io::Write;
use std::sync::Arc;

use crate::assembly::ProblemData;
use crate::error::{Error, Result};
use crate::estimator::{error_norms, estimate, EstimatorReport};
use crate::solver::{solve_problem, SolutionTriple};
use crate::spaces::Discretization;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Adaptive,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop after the first step whose total dof count exceeds the bound.
    MaxDofs(usize),
    /// Stop once the total estimator is at most the tolerance.
    Tolerance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub theta: f64,
    pub mode: Mode,
    pub stop: StopRule,
    pub max_steps: usize,
    /// Compute the error against a reference solution on the twice
    /// uniformly refined meshes.
    pub with_error: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self { theta: 0.75, mode: Mode::Adaptive, stop: StopRule::MaxDofs(10_000), max_steps: 200, with_error: false }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if let StopRule::Tolerance(tol) = self.stop {
            if !(tol > 0.0) {
                return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
            }
        }
        Ok(())
    }
}

/// Marked triangles and segments; `converged` is set when every estimator
/// contribution vanishes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Marking {
    pub triangles: Vec<usize>,
    pub segments: Vec<usize>,
    pub converged: bool,
}

/// Smallest set over the pooled triangle and segment contributions whose
/// sum is at least `(1 - theta)` times the total. Ties are broken by kind
/// (triangles first), then by index.
pub fn doerfler_mark(tri: &[f64], seg: &[f64], theta: f64) -> Result<Marking> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {theta}")));
    }
    if let Some(v) = tri.iter().chain(seg).find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("estimator contributions must be finite and nonnegative, got {v}")));
    }
    let mut pool: Vec<(f64, u8, usize)> = tri
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, 0, i))
        .chain(seg.iter().enumerate().map(|(i, &v)| (v, 1, i)))
        .collect();
    let total: f64 = pool.iter().map(|p| p.0).sum();
    if total == 0.0 {
        return Ok(Marking { converged: true, ..Marking::default() });
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let goal = (1.0 - theta) * total;
    let mut marking = Marking::default();
    let mut acc = 0.0;
    for (v, kind, i) in pool {
        if acc >= goal {
            break;
        }
        acc += v;
        if kind == 0 {
            marking.triangles.push(i);
        } else {
            marking.segments.push(i);
        }
    }
    marking.triangles.sort_unstable();
    marking.segments.sort_unstable();
    Ok(marking)
}

/// One row of a convergence history.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub step: usize,
    pub dofs_u: usize,
    pub dofs_p: usize,
    pub dofs_lambda: usize,
    pub error: Option<f64>,
    pub estimator: f64,
}

impl ConvergenceRecord {
    pub fn dofs(&self) -> usize {
        self.dofs_u + self.dofs_p + self.dofs_lambda
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTable {
    /// `key=value` pairs written to the comment line of the CSV.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ConvergenceRecord>,
}

impl ConvergenceTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let meta: Vec<String> = self.metadata.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(w, "# {}", meta.join(" "))?;
        writeln!(w, "step,dofs_u,dofs_p,dofs_lambda,error,estimator")?;
        for r in &self.rows {
            let err = r.error.map(|e| format!("{e:.16e}")).unwrap_or_default();
            writeln!(w, "{},{},{},{},{err},{:.16e}", r.step, r.dofs_u, r.dofs_p, r.dofs_lambda, r.estimator)?;
        }
        Ok(())
    }

    /// Least-squares slope of `log(error)` against `log(dofs)` over the last
    /// `last` rows that have an error.
    pub fn error_slope(&self, last: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> =
            self.rows.iter().filter_map(|r| r.error.map(|e| (r.dofs() as f64, e))).collect();
        fit_slope(&pts[pts.len().saturating_sub(last)..])
    }

    pub fn estimator_slope(&self, last: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.dofs() as f64, r.estimator)).collect();
        fit_slope(&pts[pts.len().saturating_sub(last)..])
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Result of one solve–estimate–mark–refine cycle.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub record: ConvergenceRecord,
    pub solution: SolutionTriple,
    pub report: EstimatorReport,
    pub marking: Marking,
    /// Refined discretization, or `None` when the estimator vanished.
    pub next: Option<Arc<Discretization>>,
}

/// Estimators below this fraction of the estimator of the zero function are
/// treated as round-off.
pub const NEGLIGIBLE: f64 = 1e-10;

/// Solution on the meshes refined uniformly twice.
pub fn reference_solution(disc: &Discretization, data: &ProblemData) -> Result<SolutionTriple> {
    let fine = disc.pair.uniform_refine().pair.uniform_refine().pair;
    solve_problem(Arc::new(disc.on(fine)?), data)
}

pub fn adapt_step(
    step: usize,
    disc: Arc<Discretization>,
    data: &ProblemData,
    config: &AdaptConfig,
) -> Result<StepOutcome> {
    let solution = solve_problem(disc.clone(), data)?;
    let report = estimate(&solution, data);
    let error = if config.with_error {
        Some(error_norms(&solution, &reference_solution(&disc, data)?)?.total)
    } else {
        None
    };
    let d = &disc.dofs;
    let record = ConvergenceRecord {
        step,
        dofs_u: d.n_u,
        dofs_p: d.n_p,
        dofs_lambda: d.n_lambda,
        error,
        estimator: report.total,
    };
    let (marking, refined) = match config.mode {
        Mode::Uniform => (Marking::default(), disc.pair.uniform_refine().pair),
        Mode::Adaptive => {
            let mut m = doerfler_mark(&report.eta_tilde_t2, &report.eta_tilde_i2, config.theta)?;
            if report.total <= NEGLIGIBLE * estimate(&SolutionTriple::zero(disc.clone()), data).total {
                m = Marking { converged: true, ..Marking::default() };
            }
            if m.converged {
                return Ok(StepOutcome { record, solution, report, marking: m, next: None });
            }
            let refined = disc.pair.refine(&m.triangles, &m.segments)?.pair;
            (m, refined)
        }
    };
    let next = Some(Arc::new(disc.on(refined)?));
    Ok(StepOutcome { record, solution, report, marking, next })
}

/// Runs [`adapt_step`] until the stop rule holds, calling `observe` after
/// every step.
pub fn adaptive_loop_with(
    config: &AdaptConfig,
    initial: Arc<Discretization>,
    data: &ProblemData,
    mut observe: impl FnMut(&StepOutcome) -> Result<()>,
) -> Result<ConvergenceTable> {
    config.validate()?;
    let scheme = &initial.scheme;
    let mut table = ConvergenceTable {
        metadata: vec![
            ("scheme".into(), scheme.name().into()),
            ("theta".into(), config.theta.to_string()),
            ("sigma".into(), scheme.sigma.to_string()),
            ("lambda_norm".into(), "h-weighted-L2".into()),
            ("mode".into(), if config.mode == Mode::Adaptive { "adaptive" } else { "uniform" }.into()),
        ],
        rows: Vec::new(),
    };
    let mut disc = initial;
    for step in 0..config.max_steps {
        let out = adapt_step(step, disc, data, config)?;
        observe(&out)?;
        log::info!(
            "step {step}: dofs {} estimator {:.4e} error {:?}",
            out.record.dofs(),
            out.record.estimator,
            out.record.error
        );
        let done = match config.stop {
            StopRule::MaxDofs(n) => out.record.dofs() > n,
            StopRule::Tolerance(tol) => out.record.estimator <= tol,
        };
        table.rows.push(out.record);
        match out.next {
            Some(next) if !done => disc = next,
            _ => break,
        }
    }
    Ok(table)
}

pub fn adaptive_loop(config: &AdaptConfig, initial: Arc<Discretization>, data: &ProblemData) -> Result<ConvergenceTable> {
    adaptive_loop_with(config, initial, data, |_| Ok(()))
}
