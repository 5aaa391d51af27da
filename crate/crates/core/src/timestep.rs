//! Implicit Euler time stepping with spatial adaptivity in every step.

use std::io::Write;
use std::sync::Arc;

use crate::adapt::{doerfler_mark, NEGLIGIBLE};
use crate::assembly::{load_vectors, History, ProblemData};
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorReport};
use crate::mesh::Point;
use crate::quadrature::GAUSS_5;
use crate::solver::{prolong_p, prolong_u, system_matrix, Factorization, SolutionTriple};
use crate::spaces::{boundary_bary, eval_p_local, eval_u_local, Discretization, TriGeom};

pub type SpaceTimeFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

/// Time-dependent sources.
#[derive(Clone)]
pub struct TimeData {
    pub f: SpaceTimeFn,
    pub g: SpaceTimeFn,
}

impl std::fmt::Debug for TimeData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TimeData { .. }")
    }
}

impl TimeData {
    pub fn new(
        f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { f: Arc::new(f), g: Arc::new(g) }
    }

    /// Stationary data at time `t`.
    pub fn at(&self, t: f64) -> ProblemData {
        let (f, g) = (self.f.clone(), self.g.clone());
        ProblemData::new(move |x| f(x, t), move |x| g(x, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub t0: f64,
    pub t1: f64,
    pub tau: f64,
    /// Absolute bound for `τ·η` in every step, `η` being the total estimator
    /// of the stationary problem with `σ = 1/τ`.
    pub tol: f64,
    pub theta: f64,
    pub max_rounds: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t0: 1.0, t1: 10.0, tau: 1.5e-2, tol: 1e-6, theta: 0.75, max_rounds: 30 }
    }
}

impl TimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.t1 > self.t0) {
            return Err(Error::InvalidParameter(format!("empty time horizon [{}, {}]", self.t0, self.t1)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        Ok(())
    }

    /// Number of steps `⌈(t1 − t0) / τ⌉`, robust against round-off in the ratio.
    pub fn num_steps(&self) -> usize {
        let r = (self.t1 - self.t0) / self.tau;
        let n = r.round();
        if (r - n).abs() <= 1e-9 * r.max(1.0) { n as usize } else { r.ceil() as usize }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeRecord {
    pub n: usize,
    pub t: f64,
    pub dofs_u: usize,
    pub dofs_p: usize,
    pub dofs_lambda: usize,
    pub estimator: f64,
    pub refine_rounds: usize,
}

/// Solution at time `t` after `n` steps.
#[derive(Debug, Clone)]
pub struct TimeState {
    pub n: usize,
    pub t: f64,
    pub sol: SolutionTriple,
    /// Factors of the system matrix on `sol.disc`, reused while the meshes
    /// stay unchanged.
    factor: Option<Arc<Factorization>>,
}

/// `‖tr u − p‖_{L²(Γ)}` of a bulk/surface pair.
pub fn consistency_defect(disc: &Discretization, u: &[f64], p: &[f64]) -> f64 {
    let bulk = disc.bulk();
    let gamma = disc.gamma();
    let mut sum = 0.0;
    for i in 0..gamma.len() {
        let b = gamma.segment(i).parent_edge;
        let (t0, t1) = gamma.local_range(bulk, i);
        let h = gamma.segment_size(i);
        let (t, _) = boundary_bary(bulk, b, 0.0);
        let geom = TriGeom::of(bulk, t);
        for q in GAUSS_5 {
            let (_, bary) = boundary_bary(bulk, b, t0 + q.xi * (t1 - t0));
            let d = eval_u_local(&disc.dofs, &geom, u, t, bary).0 - eval_p_local(&disc.dofs, gamma, p, i, q.xi).0;
            sum += q.weight * h * d * d;
        }
    }
    sum.sqrt()
}

impl TimeState {
    /// Initial state; the pair `(u, p)` must be consistent (`tr u = p`).
    pub fn initial(t0: f64, sol: SolutionTriple) -> Result<Self> {
        let defect = consistency_defect(&sol.disc, &sol.u, &sol.p);
        let scale = sol.u.iter().chain(&sol.p).fold(1.0f64, |m, v| m.max(v.abs()));
        if defect > 1e-10 * scale {
            return Err(Error::InvalidParameter(format!("inconsistent initial data: ‖tr u − p‖ = {defect:.3e}")));
        }
        Ok(Self { n: 0, t: t0, sol, factor: None })
    }
}

/// Outcome of one implicit Euler step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: TimeState,
    pub report: EstimatorReport,
    pub record: TimeRecord,
}

/// Advances `state` by one step of size `τ`, refining the meshes until the
/// scaled estimator `τ·η` meets the tolerance.
pub fn euler_step(state: &TimeState, data: &TimeData, config: &TimeConfig) -> Result<StepResult> {
    let sigma = 1.0 / config.tau;
    let n = state.n + 1;
    let t = config.t0 + n as f64 * config.tau;
    let old = &state.sol.disc;
    let (mut disc, mut factor) = if old.scheme.sigma == sigma {
        (old.clone(), state.factor.clone())
    } else {
        let mut scheme = old.scheme.clone();
        scheme.sigma = sigma;
        (Arc::new(Discretization::new(old.pair.clone(), scheme)?), None)
    };
    let mut u_prev = state.sol.u.clone();
    let mut p_prev = state.sol.p.clone();
    let base = data.at(t);
    let mut rounds = 0;
    loop {
        let problem = base.clone().with_history(History { u: u_prev.clone(), p: p_prev.clone(), weight: sigma });
        let lu = match factor.take() {
            Some(f) => f,
            None => Arc::new(Factorization::new(system_matrix(&disc)?)?),
        };
        let (f, g) = load_vectors(&disc, &problem)?;
        let rhs = [f, g, vec![0.0; disc.dofs.n_lambda]].concat();
        let sol = SolutionTriple::from_stacked(disc.clone(), &lu.solve(&rhs)?)?;
        let report = estimate(&sol, &problem);
        let scaled = config.tau * report.total;
        let negligible = || report.total <= NEGLIGIBLE * estimate(&SolutionTriple::zero(disc.clone()), &problem).total;
        if scaled <= config.tol || negligible() {
            let d = &disc.dofs;
            let record = TimeRecord {
                n,
                t,
                dofs_u: d.n_u,
                dofs_p: d.n_p,
                dofs_lambda: d.n_lambda,
                estimator: scaled,
                refine_rounds: rounds,
            };
            return Ok(StepResult { state: TimeState { n, t, sol, factor: Some(lu) }, report, record });
        }
        if rounds == config.max_rounds {
            return Err(Error::NoConvergence { rounds, t });
        }
        let marking = doerfler_mark(&report.eta_tilde_t2, &report.eta_tilde_i2, config.theta)?;
        let refined = disc.pair.refine(&marking.triangles, &marking.segments)?.pair;
        let fine = Arc::new(disc.on(refined)?);
        u_prev = prolong_u(&disc, &u_prev, &fine)?;
        p_prev = prolong_p(&disc, &p_prev, &fine)?;
        disc = fine;
        rounds += 1;
        log::debug!("t = {t}: round {rounds}, estimator {:.3e}, dofs {}", scaled, disc.dofs.total());
    }
}

/// Runs `⌈(t1 − t0)/τ⌉` steps from `initial`, calling `observe` after each.
pub fn run_parabolic_with(
    config: &TimeConfig,
    initial: TimeState,
    data: &TimeData,
    mut observe: impl FnMut(&StepResult) -> Result<()>,
) -> Result<(Vec<TimeRecord>, TimeState)> {
    config.validate()?;
    let steps = config.num_steps();
    let mut records = Vec::with_capacity(steps);
    let mut state = initial;
    for _ in 0..steps {
        let step = euler_step(&state, data, config)?;
        observe(&step)?;
        log::info!(
            "n = {} t = {:.4}: dofs {}/{}/{} estimator {:.3e} rounds {}",
            step.record.n,
            step.record.t,
            step.record.dofs_u,
            step.record.dofs_p,
            step.record.dofs_lambda,
            step.record.estimator,
            step.record.refine_rounds
        );
        records.push(step.record);
        state = step.state;
    }
    Ok((records, state))
}

pub fn run_parabolic(config: &TimeConfig, initial: TimeState, data: &TimeData) -> Result<(Vec<TimeRecord>, TimeState)> {
    run_parabolic_with(config, initial, data, |_| Ok(()))
}

pub fn write_time_series<W: Write>(metadata: &[(String, String)], records: &[TimeRecord], mut w: W) -> Result<()> {
    let meta: Vec<String> = metadata.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(w, "# {}", meta.join(" "))?;
    writeln!(w, "n,t,dofs_u,dofs_p,dofs_lambda,estimator,refine_rounds")?;
    for r in records {
        writeln!(
            w,
            "{},{:.16e},{},{},{},{:.16e},{}",
            r.n, r.t, r.dofs_u, r.dofs_p, r.dofs_lambda, r.estimator, r.refine_rounds
        )?;
    }
    Ok(())
}
