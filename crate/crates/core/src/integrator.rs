//! Fixed-step BDF1/BDF2 with Newton iterations for systems `M y' = F(t, y)`.
//!
//! Trajectories carry derivatives at every node for Hermite dense output.

use log::{debug, warn};

use crate::error::{PodError, Result};
use crate::fem::{AssembledOperators, FemSpace, FieldAssembler};
use crate::linalg::{norm_inf, BandedLu, LinearSolve};
use crate::problems::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BdfMethod {
    Bdf1,
    Bdf2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: BdfMethod,
    pub step: f64,
    /// Bound on `‖c M (y − ψ) − F(t, y)‖_∞` for every accepted step.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Keep every `store_every`-th step node (the first and last node are always kept).
    pub store_every: usize,
    /// Warn when `‖y‖_∞` exceeds this value.
    pub max_norm_warning: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: BdfMethod::Bdf2,
            step: 1e-3,
            newton_tol: 1e-12,
            newton_max_iter: 25,
            store_every: 1,
            max_norm_warning: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.newton_tol > 0.0) || self.newton_max_iter == 0 || self.store_every == 0 {
            return Err(PodError::invalid(format!("invalid integrator settings {self:?}")));
        }
        Ok(())
    }
}

/// A semi-discrete system `M y' = F(t, y)`.
pub trait ImplicitSystem {
    type Factor: LinearSolve;

    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]);
    fn apply_mass(&self, y: &[f64], out: &mut [f64]);
    /// Factorization of `c M − ∂F/∂y (t, y)`.
    fn factor_iteration_matrix(&self, c: f64, t: f64, y: &[f64]) -> Result<Self::Factor>;
    fn factor_mass(&self) -> Result<Self::Factor>;
    /// `∂F/∂y` independent of `(t, y)`.
    fn is_linear(&self) -> bool {
        false
    }
}

/// Stored solution nodes with time derivatives, used for dense output.
///
/// Reduced trajectories use the same type with coefficient vectors as states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub n_components: usize,
    pub step: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    pub stats: IntegrationStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub steps: usize,
    pub newton_iterations: usize,
    pub factorizations: usize,
}

/// Trajectory of reduced coefficients `α(t)`.
pub type RomTrajectory = Trajectory;

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// Index `i` with `times[i] ≤ t ≤ times[i+1]`, or the exact node.
    fn bracket(&self, t: f64) -> Result<Bracket> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(PodError::OutOfRange { t, start, end });
        }
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => Ok(Bracket::Node(i)),
            Err(i) => Ok(Bracket::Interval(i - 1)),
        }
    }

    /// Cubic Hermite interpolation of the state; exact stored value at nodes.
    pub fn dense_eval(&self, t: f64) -> Result<Vec<f64>> {
        let i = match self.bracket(t)? {
            Bracket::Node(i) => return Ok(self.states[i].clone()),
            Bracket::Interval(i) => i,
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let c00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let c10 = h * (s3 - 2.0 * s2 + s);
        let c01 = -2.0 * s3 + 3.0 * s2;
        let c11 = h * (s3 - s2);
        Ok(self.combine(i, [c00, c10, c01, c11]))
    }

    /// Derivative of the Hermite interpolant; exact stored derivative at nodes.
    pub fn dense_derivative(&self, t: f64) -> Result<Vec<f64>> {
        let i = match self.bracket(t)? {
            Bracket::Node(i) => return Ok(self.derivatives[i].clone()),
            Bracket::Interval(i) => i,
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let c00 = (6.0 * s2 - 6.0 * s) / h;
        let c10 = 3.0 * s2 - 4.0 * s + 1.0;
        let c01 = (-6.0 * s2 + 6.0 * s) / h;
        let c11 = 3.0 * s2 - 2.0 * s;
        Ok(self.combine(i, [c00, c10, c01, c11]))
    }

    fn combine(&self, i: usize, c: [f64; 4]) -> Vec<f64> {
        let (p0, m0, p1, m1) = (&self.states[i], &self.derivatives[i], &self.states[i + 1], &self.derivatives[i + 1]);
        (0..p0.len()).map(|k| c[0] * p0[k] + c[1] * m0[k] + c[2] * p1[k] + c[3] * m1[k]).collect()
    }

    /// Copy with times shifted by `-offset`.
    pub fn shifted(mut self, offset: f64) -> Self {
        for t in &mut self.times {
            *t -= offset;
        }
        self
    }
}

enum Bracket {
    Node(usize),
    Interval(usize),
}

struct Newton<'a, S: ImplicitSystem> {
    sys: &'a S,
    cfg: &'a IntegratorConfig,
    factor: Option<(f64, S::Factor)>,
    fresh: bool,
    stats: IntegrationStats,
    residual: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a, S: ImplicitSystem> Newton<'a, S> {
    fn new(sys: &'a S, cfg: &'a IntegratorConfig) -> Self {
        let n = sys.dim();
        Self {
            sys,
            cfg,
            factor: None,
            fresh: false,
            stats: IntegrationStats::default(),
            residual: vec![0.0; n],
            rhs: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    /// `residual = c M (y − ψ) − F(t, y)`; leaves `F(t, y)` in `self.rhs`.
    fn eval_residual(&mut self, c: f64, t: f64, y: &[f64], psi: &[f64]) -> f64 {
        for (s, (a, b)) in self.scratch.iter_mut().zip(y.iter().zip(psi)) {
            *s = c * (a - b);
        }
        self.sys.apply_mass(&self.scratch, &mut self.residual);
        self.sys.rhs(t, y, &mut self.rhs);
        for (r, f) in self.residual.iter_mut().zip(&self.rhs) {
            *r -= f;
        }
        norm_inf(&self.residual)
    }

    fn refactor(&mut self, c: f64, t: f64, y: &[f64]) -> Result<()> {
        self.factor = Some((c, self.sys.factor_iteration_matrix(c, t, y)?));
        self.fresh = true;
        self.stats.factorizations += 1;
        Ok(())
    }

    /// Solves `c M (y − ψ) = F(t, y)` in place, starting from the predictor in `y`.
    fn solve(&mut self, c: f64, t: f64, y: &mut [f64], psi: &[f64]) -> Result<usize> {
        let reusable = self.factor.as_ref().is_some_and(|(fc, _)| *fc == c);
        if !reusable {
            self.refactor(c, t, y)?;
        } else {
            // a reused factorization was built at an earlier state unless the system is linear
            self.fresh = self.sys.is_linear();
        }
        let mut norm = self.eval_residual(c, t, y, psi);
        let mut iterations = 0;
        while norm > self.cfg.newton_tol {
            if iterations >= self.cfg.newton_max_iter {
                return Err(PodError::StepFailure { time: t, residual: norm, iterations });
            }
            let mut delta = std::mem::take(&mut self.residual);
            self.factor.as_ref().unwrap().1.solve_in_place(&mut delta);
            for (yi, d) in y.iter_mut().zip(&delta) {
                *yi -= d;
            }
            self.residual = delta;
            iterations += 1;
            let new_norm = self.eval_residual(c, t, y, psi);
            let slow = new_norm > 0.25 * norm || iterations >= 4;
            if slow && new_norm > self.cfg.newton_tol && !self.fresh {
                debug!("refreshing Newton matrix at t = {t} (residual {norm:e} -> {new_norm:e})");
                self.refactor(c, t, y)?;
            }
            norm = new_norm;
        }
        self.stats.steps += 1;
        self.stats.newton_iterations += iterations;
        Ok(iterations)
    }
}

/// Integrates `M y' = F(t, y)` on `t_span` with fixed steps.
///
/// The span is divided into `ceil((t1 − t0) / step)` equal steps. BDF2 starts with eight BDF1
/// sub-steps of a eighth of the step; only full-step nodes are stored. Stored derivatives are
/// recovered by a mass solve `M y' = F(t, y)`.
pub fn integrate<S: ImplicitSystem>(
    sys: &S,
    t_span: (f64, f64),
    y0: &[f64],
    cfg: &IntegratorConfig,
    label: &str,
    n_components: usize,
) -> Result<Trajectory> {
    cfg.validate()?;
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(PodError::invalid(format!("empty time span [{t0}, {t1}]")));
    }
    if y0.len() != sys.dim() {
        return Err(PodError::invalid(format!("initial state has length {}, system has {}", y0.len(), sys.dim())));
    }
    let nsteps = ((t1 - t0) / cfg.step - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / nsteps as f64;
    let mass = sys.factor_mass()?;
    let mut newton = Newton::new(sys, cfg);
    let derivative = |t: f64, y: &[f64]| {
        let mut d = vec![0.0; y.len()];
        sys.rhs(t, y, &mut d);
        mass.solve_in_place(&mut d);
        d
    };

    let mut traj = Trajectory {
        label: label.to_string(),
        n_components,
        step: h,
        times: vec![t0],
        states: vec![y0.to_vec()],
        derivatives: vec![derivative(t0, y0)],
        stats: IntegrationStats::default(),
    };
    let mut prev: Option<Vec<f64>> = None;
    let mut cur = y0.to_vec();
    let mut cur_der = traj.derivatives[0].clone();
    let mut psi = vec![0.0; cur.len()];
    let mut warned = false;

    for k in 1..=nsteps {
        let t = if k == nsteps { t1 } else { t0 + k as f64 * h };
        let mut next = match (&prev, cfg.method) {
            (Some(p), BdfMethod::Bdf2) => {
                let c = 1.5 / h;
                for i in 0..cur.len() {
                    psi[i] = (4.0 * cur[i] - p[i]) / 3.0;
                }
                let mut y: Vec<f64> = cur.iter().zip(p).map(|(a, b)| 2.0 * a - b).collect();
                newton.solve(c, t, &mut y, &psi)?;
                y
            }
            (None, BdfMethod::Bdf2) => {
                // start-up: eight BDF1 sub-steps
                let hs = h / 8.0;
                let mut y = cur.clone();
                let mut yd = cur_der.clone();
                let ts = t - h;
                for j in 1..=8 {
                    psi.copy_from_slice(&y);
                    let tj = if j == 8 { t } else { ts + j as f64 * hs };
                    let mut guess: Vec<f64> = y.iter().zip(&yd).map(|(a, d)| a + hs * d).collect();
                    newton.solve(1.0 / hs, tj, &mut guess, &psi)?;
                    yd = guess.iter().zip(&y).map(|(a, b)| (a - b) / hs).collect();
                    y = guess;
                }
                y
            }
            (_, BdfMethod::Bdf1) => {
                psi.copy_from_slice(&cur);
                let mut y: Vec<f64> = cur.iter().zip(&cur_der).map(|(a, d)| a + h * d).collect();
                newton.solve(1.0 / h, t, &mut y, &psi)?;
                y
            }
        };
        let der = derivative(t, &next);
        if let Some(bound) = cfg.max_norm_warning {
            let m = norm_inf(&next);
            if m > bound && !warned {
                warn!("{label}: max-norm {m:e} exceeds bound {bound:e} at t = {t}");
                warned = true;
            }
        }
        if k % cfg.store_every == 0 || k == nsteps {
            traj.times.push(t);
            traj.states.push(next.clone());
            traj.derivatives.push(der.clone());
        }
        std::mem::swap(&mut cur, &mut next);
        prev = Some(next);
        cur_der = der;
    }
    traj.stats = newton.stats;
    debug!("{label}: {:?}", traj.stats);
    Ok(traj)
}

/// Finite-element semi-discretization `M u' = −ν A u + ∫R(u_h)φ + ∫fφ`.
pub struct FomSystem<'a> {
    pub problem: &'a ProblemSpec,
    pub ops: &'a AssembledOperators,
    pub assembler: FieldAssembler,
}

impl<'a> FomSystem<'a> {
    pub fn new(problem: &'a ProblemSpec, space: &FemSpace, ops: &'a AssembledOperators) -> Result<Self> {
        problem.validate()?;
        if ops.n_components != problem.n_components || ops.dim() != space.free_dofs() * problem.n_components {
            return Err(PodError::invalid("operators do not match the problem and space"));
        }
        Ok(Self { problem, ops, assembler: FieldAssembler::new(space, problem.n_components)? })
    }
}

impl ImplicitSystem for FomSystem<'_> {
    type Factor = BandedLu;

    fn dim(&self) -> usize {
        self.ops.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.ops.stiffness.mul_vec_into(y, out);
        let nu = self.problem.nu;
        for o in out.iter_mut() {
            *o *= -nu;
        }
        if !self.problem.reaction.is_zero() {
            self.assembler.add_reaction_load(&self.problem.reaction, y, 1.0, out);
        }
        if let Some(f) = self.problem.forcing_load(&self.assembler, t) {
            crate::linalg::axpy(1.0, &f, out);
        }
    }

    fn apply_mass(&self, y: &[f64], out: &mut [f64]) {
        self.ops.mass.mul_vec_into(y, out);
    }

    fn factor_iteration_matrix(&self, c: f64, _t: f64, y: &[f64]) -> Result<BandedLu> {
        let nu = self.problem.nu;
        if self.problem.reaction.is_zero() {
            BandedLu::factor_combination(&[(c, &self.ops.mass), (nu, &self.ops.stiffness)])
        } else {
            let jac = self.assembler.reaction_jacobian(&self.problem.reaction, y);
            BandedLu::factor_combination(&[(c, &self.ops.mass), (nu, &self.ops.stiffness), (-1.0, &jac)])
        }
    }

    fn factor_mass(&self) -> Result<BandedLu> {
        BandedLu::factor(&self.ops.mass)
    }

    fn is_linear(&self) -> bool {
        self.problem.reaction.is_zero()
    }
}

/// Integrates the full-order model of `problem` from `u0` over `t_span`.
pub fn integrate_fom(
    problem: &ProblemSpec,
    space: &FemSpace,
    ops: &AssembledOperators,
    t_span: (f64, f64),
    u0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let sys = FomSystem::new(problem, space, ops)?;
    integrate(&sys, t_span, u0, cfg, &problem.name, problem.n_components)
}

/// `max_i ‖M y'_i − F(t_i, y_i)‖_∞` over the stored nodes.
pub fn derivative_residual<S: ImplicitSystem>(sys: &S, traj: &Trajectory) -> f64 {
    let n = sys.dim();
    let mut md = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut worst = 0.0f64;
    for ((t, y), d) in traj.times.iter().zip(&traj.states).zip(&traj.derivatives) {
        sys.apply_mass(d, &mut md);
        sys.rhs(*t, y, &mut f);
        worst = worst.max(md.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodEstimate {
    pub period: f64,
    /// `max − min` of the gaps between consecutive crossings.
    pub spread: f64,
    pub crossings: Vec<f64>,
}

/// Estimates the period of the scalar observable `probe · y(t)` from upward crossings of its
/// time mean, each refined by bisection on the Hermite interpolant.
pub fn estimate_period(traj: &Trajectory, probe: &[f64]) -> Result<PeriodEstimate> {
    if probe.len() != traj.dim() {
        return Err(PodError::invalid("probe length does not match the trajectory"));
    }
    let obs: Vec<f64> = traj.states.iter().map(|y| crate::linalg::dot(probe, y)).collect();
    let dobs: Vec<f64> = traj.derivatives.iter().map(|y| crate::linalg::dot(probe, y)).collect();
    let span = traj.end() - traj.start();
    if traj.len() < 2 || span <= 0.0 {
        return Err(PodError::InsufficientData("trajectory has a single node".into()));
    }
    let integral: f64 =
        traj.times.windows(2).zip(obs.windows(2)).map(|(t, o)| 0.5 * (t[1] - t[0]) * (o[0] + o[1])).sum();
    let mean = integral / span;
    let scale = obs.iter().fold(0.0f64, |m, o| m.max((o - mean).abs()));
    let mut crossings = Vec::new();
    if scale > 0.0 {
        for i in 0..traj.len() - 1 {
            let (a, b) = (obs[i] - mean, obs[i + 1] - mean);
            if a < 0.0 && b >= 0.0 {
                let h = traj.times[i + 1] - traj.times[i];
                let f = |s: f64| {
                    let s2 = s * s;
                    let s3 = s2 * s;
                    (2.0 * s3 - 3.0 * s2 + 1.0) * a
                        + h * (s3 - 2.0 * s2 + s) * dobs[i]
                        + (-2.0 * s3 + 3.0 * s2) * b
                        + h * (s3 - s2) * dobs[i + 1]
                };
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                crossings.push(traj.times[i] + 0.5 * (lo + hi) * h);
            }
        }
    }
    if crossings.len() < 3 {
        return Err(PodError::InsufficientData(format!(
            "{} upward crossings of the mean, need at least 3",
            crossings.len()
        )));
    }
    let gaps: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let period = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let spread = gaps.iter().fold(f64::MIN, |m, &g| m.max(g)) - gaps.iter().fold(f64::MAX, |m, &g| m.min(g));
    Ok(PeriodEstimate { period, spread, crossings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_operators;
    use crate::linalg::DenseLu;
    use crate::mesh::{BoundaryLayout, Mesh};
    use crate::problems::{brusselator_lifted, InitialData};
    use nalgebra::DMatrix;

    /// Dense linear test system `y' = A y + b(t)`, identity mass.
    struct Dense {
        a: DMatrix<f64>,
        b: fn(f64) -> Vec<f64>,
    }

    impl ImplicitSystem for Dense {
        type Factor = DenseLu;
        fn dim(&self) -> usize {
            self.a.nrows()
        }
        fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) {
            let b = (self.b)(t);
            for i in 0..y.len() {
                out[i] = (0..y.len()).map(|j| self.a[(i, j)] * y[j]).sum::<f64>() + b[i];
            }
        }
        fn apply_mass(&self, y: &[f64], out: &mut [f64]) {
            out.copy_from_slice(y);
        }
        fn factor_iteration_matrix(&self, c: f64, _: f64, _: &[f64]) -> Result<DenseLu> {
            DenseLu::factor(DMatrix::identity(self.dim(), self.dim()) * c - &self.a)
        }
        fn factor_mass(&self) -> Result<DenseLu> {
            DenseLu::factor(DMatrix::identity(self.dim(), self.dim()))
        }
        fn is_linear(&self) -> bool {
            true
        }
    }

    #[test]
    fn bdf2_exact_on_linear_in_time_solution() {
        // y' = b constant, y = y0 + t b
        let sys = Dense { a: DMatrix::zeros(2, 2), b: |_| vec![1.5, -2.0] };
        let cfg = IntegratorConfig { step: 0.1, ..Default::default() };
        let tr = integrate(&sys, (0.0, 1.0), &[1.0, 0.0], &cfg, "lin", 1).unwrap();
        for (t, y) in tr.times.iter().zip(&tr.states) {
            assert!((y[0] - (1.0 + 1.5 * t)).abs() < 1e-13);
            assert!((y[1] + 2.0 * t).abs() < 1e-13);
        }
    }

    #[test]
    fn bdf_orders_on_scalar_decay() {
        let sys = Dense { a: DMatrix::from_element(1, 1, -1.0), b: |_| vec![0.0] };
        for (method, min_ratio) in [(BdfMethod::Bdf1, 1.9), (BdfMethod::Bdf2, 3.7)] {
            let err = |h: f64| {
                let cfg = IntegratorConfig { method, step: h, ..Default::default() };
                let tr = integrate(&sys, (0.0, 1.0), &[1.0], &cfg, "decay", 1).unwrap();
                tr.times.iter().zip(&tr.states).map(|(t, y)| (y[0] - (-t).exp()).abs()).fold(0.0, f64::max)
            };
            let (e1, e2, e3) = (err(0.02), err(0.01), err(0.005));
            assert!(e1 / e2 >= min_ratio && e2 / e3 >= min_ratio, "{method:?}: {e1} {e2} {e3}");
        }
    }

    #[test]
    fn dense_output_reproduces_cubics() {
        let p = |t: f64| vec![t * t * t - 2.0 * t + 1.0, 0.5 * t * t];
        let dp = |t: f64| vec![3.0 * t * t - 2.0, t];
        let times = vec![0.0, 0.3, 0.7, 1.0];
        let tr = Trajectory {
            label: "cubic".into(),
            n_components: 1,
            step: 0.3,
            states: times.iter().map(|&t| p(t)).collect(),
            derivatives: times.iter().map(|&t| dp(t)).collect(),
            times,
            stats: Default::default(),
        };
        for t in [0.15, 0.5, 0.85, 0.999] {
            let y = tr.dense_eval(t).unwrap();
            let d = tr.dense_derivative(t).unwrap();
            for k in 0..2 {
                assert!((y[k] - p(t)[k]).abs() < 1e-14);
                assert!((d[k] - dp(t)[k]).abs() < 1e-13);
            }
        }
        assert_eq!(tr.dense_eval(0.3).unwrap(), tr.states[1]);
        assert!(matches!(tr.dense_eval(1.5), Err(PodError::OutOfRange { .. })));
        assert!(matches!(tr.dense_eval(-0.1), Err(PodError::OutOfRange { .. })));
    }

    fn synthetic(f: impl Fn(f64) -> (f64, f64), t_end: f64, n: usize) -> Trajectory {
        let times: Vec<f64> = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
        Trajectory {
            label: "synthetic".into(),
            n_components: 1,
            step: t_end / n as f64,
            states: times.iter().map(|&t| vec![f(t).0]).collect(),
            derivatives: times.iter().map(|&t| vec![f(t).1]).collect(),
            times,
            stats: Default::default(),
        }
    }

    #[test]
    fn period_of_sinusoid() {
        let tr = synthetic(|t| (t.sin() + 0.3, t.cos()), 40.0, 4000);
        let est = estimate_period(&tr, &[1.0]).unwrap();
        assert!((est.period - 2.0 * std::f64::consts::PI).abs() < 1e-6, "{}", est.period);
        assert!(est.spread < 1e-6);
    }

    #[test]
    fn constant_trajectory_has_no_period() {
        let tr = synthetic(|_| (2.0, 0.0), 10.0, 100);
        assert!(matches!(estimate_period(&tr, &[1.0]), Err(PodError::InsufficientData(_))));
    }

    #[test]
    fn brusselator_equilibrium_has_zero_derivative() {
        let space = FemSpace::p1(Mesh::uniform(4, BoundaryLayout::BrusselatorMixed).unwrap());
        let ops = assemble_operators(&space, 2).unwrap();
        let mut p = brusselator_lifted(0.01).unwrap();
        p.initial = InitialData::Zero;
        let u0 = p.initial_coefficients(&space).unwrap();
        let cfg = IntegratorConfig { step: 0.01, ..Default::default() };
        let tr = integrate_fom(&p, &space, &ops, (0.0, 0.05), &u0, &cfg).unwrap();
        assert!(ops.l2_norm(&tr.derivatives[0]).unwrap() <= cfg.newton_tol);
        assert!(tr.states.iter().all(|s| norm_inf(s) == 0.0));
    }

    #[test]
    fn store_every_keeps_endpoints() {
        let sys = Dense { a: DMatrix::from_element(1, 1, -1.0), b: |_| vec![0.0] };
        let cfg = IntegratorConfig { step: 0.01, store_every: 4, ..Default::default() };
        let tr = integrate(&sys, (0.0, 0.1), &[1.0], &cfg, "decay", 1).unwrap();
        assert_eq!(tr.times.len(), 4);
        assert_eq!(*tr.times.last().unwrap(), 0.1);
        assert!((tr.times[1] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn newton_failure_is_reported() {
        // y' = -y^3 with a single allowed iteration cannot meet the tolerance from a poor guess.
        struct Cubic;
        impl ImplicitSystem for Cubic {
            type Factor = DenseLu;
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _: f64, y: &[f64], out: &mut [f64]) {
                out[0] = -y[0].powi(3);
            }
            fn apply_mass(&self, y: &[f64], out: &mut [f64]) {
                out[0] = y[0];
            }
            fn factor_iteration_matrix(&self, c: f64, _: f64, y: &[f64]) -> Result<DenseLu> {
                DenseLu::factor(DMatrix::from_element(1, 1, c + 3.0 * y[0] * y[0]))
            }
            fn factor_mass(&self) -> Result<DenseLu> {
                DenseLu::factor(DMatrix::from_element(1, 1, 1.0))
            }
        }
        let cfg = IntegratorConfig { step: 0.5, newton_max_iter: 1, method: BdfMethod::Bdf1, ..Default::default() };
        let r = integrate(&Cubic, (0.0, 1.0), &[3.0], &cfg, "cubic", 1);
        assert!(matches!(r, Err(PodError::StepFailure { .. })), "{r:?}");
    }

    #[test]
    fn invalid_config_rejected() {
        let sys = Dense { a: DMatrix::zeros(1, 1), b: |_| vec![0.0] };
        let cfg = IntegratorConfig { step: 0.0, ..Default::default() };
        assert!(integrate(&sys, (0.0, 1.0), &[0.0], &cfg, "x", 1).is_err());
        let cfg = IntegratorConfig::default();
        assert!(integrate(&sys, (1.0, 1.0), &[0.0], &cfg, "x", 1).is_err());
    }
}
