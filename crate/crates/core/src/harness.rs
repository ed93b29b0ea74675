//! Error measurement, bound audits, convergence studies and experiment pipelines.

use std::f64::consts::PI;

use log::info;

use crate::error::{PodError, Result};
use crate::fem::{assemble_operators, AssembledOperators, FemSpace, FieldAssembler};
use crate::integrator::{estimate_period, integrate_fom, IntegratorConfig, PeriodEstimate, RomTrajectory, Trajectory};
use crate::linalg::{dot, BandedLu};
use crate::mesh::{BoundaryLayout, Mesh};
use crate::pod::{compute_pod_basis, correlation_matrix, mean_projection_error, select_r, PodBasis};
use crate::problems::{brusselator_lifted, manufactured_problem, ManufacturedKind, ProblemSpec};
use crate::rom::{build_rom, integrate_rom, RomInitial, RomModel};
use crate::snapshots::{
    build_snapshots, derivative_energy, equidistribute_or_uniform, patch_grid, uniform_grid, AnchorKind, Segment,
    SnapshotKind, SnapshotSet, TimeGrid,
};

/// Poincaré constant of the unit square with homogeneous Dirichlet data, `1/√λ₁` with `λ₁ = 2π²`.
pub const POINCARE_UNIT_SQUARE: f64 = 1.0 / (PI * std::f64::consts::SQRT_2);

/// Header comment recorded in every error CSV.
pub const COMBINED_NORM_NOTE: &str = "multi-component norms are sqrt(sum of squared component norms)";

/// Errors sampled in time; multi-component norms combine as `√(Σ_c ‖e_c‖²)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    /// `u_r − u_h`
    pub l2_rom: Vec<f64>,
    pub h1_rom: Vec<f64>,
    /// `(I − P^r) u_h`
    pub l2_proj: Vec<f64>,
    pub h1_proj: Vec<f64>,
    /// `u_r − P^r u_h`
    pub l2_rom_vs_proj: Vec<f64>,
    pub h1_rom_vs_proj: Vec<f64>,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_l2_rom(&self) -> f64 {
        max_of(&self.l2_rom)
    }

    pub fn max_h1_rom(&self) -> f64 {
        max_of(&self.h1_rom)
    }

    pub fn max_l2_proj(&self) -> f64 {
        max_of(&self.l2_proj)
    }

    pub fn max_h1_proj(&self) -> f64 {
        max_of(&self.h1_proj)
    }
}

/// `n + 1` equispaced sample times on `[t0, t1]`.
pub fn sample_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|k| if k == n { t1 } else { t0 + (t1 - t0) * k as f64 / n as f64 }).collect()
}

/// Samples `u_r − u_h`, `(I − P^r) u_h` and `u_r − P^r u_h` at the given times.
pub fn error_series(
    fom: &Trajectory,
    rom_traj: &RomTrajectory,
    rom: &RomModel,
    ops: &AssembledOperators,
    times: &[f64],
) -> Result<ErrorSeries> {
    let mut out = ErrorSeries::default();
    let aphi: Vec<Vec<f64>> = rom.modes.iter().map(|p| ops.stiffness.mul_vec(p)).collect();
    for &t in times {
        let uh = fom.dense_eval(t)?;
        let ur = rom.reconstruct(&rom_traj.dense_eval(t)?)?;
        let coeffs: Vec<f64> = aphi.iter().map(|a| dot(a, &uh)).collect();
        let puh = rom.reconstruct(&coeffs)?;
        let e_rom: Vec<f64> = ur.iter().zip(&uh).map(|(a, b)| a - b).collect();
        let e_proj: Vec<f64> = uh.iter().zip(&puh).map(|(a, b)| a - b).collect();
        let e_rp: Vec<f64> = ur.iter().zip(&puh).map(|(a, b)| a - b).collect();
        out.times.push(t);
        out.l2_rom.push(ops.l2_norm(&e_rom)?);
        out.h1_rom.push(ops.h1_seminorm(&e_rom)?);
        out.l2_proj.push(ops.l2_norm(&e_proj)?);
        out.h1_proj.push(ops.h1_seminorm(&e_proj)?);
        out.l2_rom_vs_proj.push(ops.l2_norm(&e_rp)?);
        out.h1_rom_vs_proj.push(ops.h1_seminorm(&e_rp)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub constants: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundAuditReport {
    pub entries: Vec<AuditEntry>,
    pub poincare: f64,
}

impl BoundAuditReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

/// `lhs ≤ rhs` up to a relative slack of 1e-9 and an absolute round-off allowance of
/// `1e-12 · scale`, where `scale` is the size of the data `lhs` is measured on.
fn inequality(name: String, lhs: f64, rhs: f64, scale: f64, constants: String) -> AuditEntry {
    AuditEntry { pass: lhs <= rhs * (1.0 + 1e-9) + 1e-12 * scale, name, lhs, rhs, constants }
}

/// `(1/N) Σ_j ‖∇(y_j − P^r y_j)‖₀² = Σ_{k>r} λ_k` within `1e−10 Σ λ`.
pub fn audit_tail_identity(
    snaps: &SnapshotSet,
    basis: &PodBasis,
    ops: &AssembledOperators,
    r: usize,
) -> Result<AuditEntry> {
    let lhs = mean_projection_error(basis, r, snaps, ops)?;
    let rhs = basis.tail(r);
    let tol = 1e-10 * basis.eigenvalue_sum();
    Ok(AuditEntry {
        name: format!("tail_identity_r{r}"),
        pass: (lhs - rhs).abs() <= tol,
        lhs,
        rhs,
        constants: format!("tol={tol:e}"),
    })
}

/// Bounds on `max_n ‖(I − P^r) u_h(t_n)‖` in L² and H¹₀ and on `Δt Σ_n ‖(I − P^r) u_h(t_n)‖₀²`
/// for divided-difference snapshots on a uniform grid, with `C̃ = 1` (initial-state anchor) or 4
/// (mean anchor) and the Poincaré constant of the unit square.
pub fn audit_max_dif(
    fom: &Trajectory,
    snaps: &SnapshotSet,
    basis: &PodBasis,
    space: &FemSpace,
    ops: &AssembledOperators,
    r: usize,
) -> Result<Vec<AuditEntry>> {
    if snaps.kind != SnapshotKind::FiniteDifference {
        return Err(PodError::UnsupportedAudit("the bound is stated for divided-difference snapshots".into()));
    }
    if !snaps.grid.is_uniform() {
        return Err(PodError::UnsupportedAudit("the bound needs a uniform snapshot grid".into()));
    }
    if space.mesh.layout != BoundaryLayout::DirichletAll {
        return Err(PodError::UnsupportedAudit("the Poincaré constant is only known for full Dirichlet data".into()));
    }
    let c_tilde: f64 = match snaps.w0_kind {
        AnchorKind::InitialState => 1.0,
        AnchorKind::MeanState => 4.0,
    };
    let cp = POINCARE_UNIT_SQUARE;
    let t = snaps.grid.span();
    let m = snaps.grid.intervals();
    let dt = t / m as f64;
    let ratio = t * t / (snaps.tau * snaps.tau);
    let tail = basis.tail(r);
    let (mut max_l2, mut max_h1, mut sum_l2) = (0.0f64, 0.0f64, 0.0);
    let (mut size_l2, mut size_h1) = (0.0f64, 0.0f64);
    for &tn in &snaps.grid.points {
        let u = fom.dense_eval(tn.clamp(fom.start(), fom.end()))?;
        let p = basis.project(r, &u, ops)?;
        let e: Vec<f64> = u.iter().zip(&p).map(|(a, b)| a - b).collect();
        let l2 = ops.mass.bilinear(&e, &e);
        max_l2 = max_l2.max(l2);
        max_h1 = max_h1.max(ops.stiffness.bilinear(&e, &e));
        sum_l2 += l2;
        size_l2 = size_l2.max(ops.mass.bilinear(&u, &u));
        size_h1 = size_h1.max(ops.stiffness.bilinear(&u, &u));
    }
    let consts = format!("C_tilde={c_tilde} C_p={cp:.9} T={t} tau={} M={m}", snaps.tau);
    let k1 = 2.0 + 4.0 * c_tilde * ratio;
    Ok(vec![
        inequality(format!("max_dif_l2_r{r}"), max_l2, k1 * cp * cp * tail, size_l2, consts.clone()),
        inequality(format!("max_dif_h1_r{r}"), max_h1, k1 * tail, size_h1, consts.clone()),
        inequality(
            format!("max_dif_promedio_r{r}"),
            dt * sum_l2,
            t * (4.0 + 8.0 * c_tilde * ratio) * cp * cp * tail,
            t * size_l2,
            consts,
        ),
    ])
}

/// How the reduced dimension is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankPolicy {
    /// `r = d_r`
    Full,
    Fixed(usize),
    /// Smallest `r` whose eigenvalue tail is below the threshold.
    Threshold(f64),
}

impl RankPolicy {
    pub fn choose(&self, basis: &PodBasis) -> Result<usize> {
        match *self {
            Self::Full => Ok(basis.rank()),
            Self::Fixed(r) if r >= 1 && r <= basis.rank() => Ok(r),
            Self::Fixed(r) => Err(PodError::invalid(format!("fixed r = {r} exceeds the rank {}", basis.rank()))),
            Self::Threshold(th) => select_r(&basis.lambdas, th),
        }
    }
}

/// Snapshot and POD settings shared by studies and experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionSettings {
    pub kind: SnapshotKind,
    pub tau: f64,
    pub w0_kind: AnchorKind,
    pub rank_tol: f64,
    pub rank: RankPolicy,
    pub initial: RomInitial,
}

/// Everything produced by one snapshot grid: snapshots, basis, ROM solution and its errors.
#[derive(Debug, Clone)]
pub struct ReducedRun {
    pub snapshots: SnapshotSet,
    pub basis: PodBasis,
    pub r: usize,
    /// Kept for reconstruction without borrowing the model.
    pub rom_traj: RomTrajectory,
    pub errors: ErrorSeries,
}

impl ReducedRun {
    pub fn summary(&self) -> SummaryRow {
        SummaryRow {
            m: self.snapshots.grid.intervals(),
            n_snapshots: self.snapshots.len(),
            r: self.r,
            max_l2_rom: self.errors.max_l2_rom(),
            max_l2_proj: self.errors.max_l2_proj(),
            max_h1_rom: self.errors.max_h1_rom(),
            max_h1_proj: self.errors.max_h1_proj(),
        }
    }
}

/// One summary row: `M`, `N`, `r` and the four maximum errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub m: usize,
    pub n_snapshots: usize,
    pub r: usize,
    pub max_l2_rom: f64,
    pub max_l2_proj: f64,
    pub max_h1_rom: f64,
    pub max_h1_proj: f64,
}

/// Runs the reduction on `grid` and measures the ROM over `horizon` at `times`.
#[allow(clippy::too_many_arguments)]
pub fn reduce_and_measure(
    fom: &Trajectory,
    grid: &TimeGrid,
    space: &FemSpace,
    ops: &AssembledOperators,
    problem: &ProblemSpec,
    settings: &ReductionSettings,
    horizon: (f64, f64),
    rom_cfg: &IntegratorConfig,
    times: &[f64],
) -> Result<ReducedRun> {
    let snapshots = build_snapshots(settings.kind, fom, grid, settings.tau, settings.w0_kind)
        .map_err(|e| e.in_stage("snapshots"))?;
    let k = correlation_matrix(&snapshots, ops).map_err(|e| e.in_stage("pod"))?;
    let basis = compute_pod_basis(&k, &snapshots, ops, settings.rank_tol).map_err(|e| e.in_stage("pod"))?;
    let r = settings.rank.choose(&basis).map_err(|e| e.in_stage("pod"))?;
    let u0 = fom.dense_eval(horizon.0).map_err(|e| e.in_stage("rom"))?;
    let rom = build_rom(&basis, r, space, ops, problem, &u0, settings.initial).map_err(|e| e.in_stage("rom"))?;
    let rom_traj = integrate_rom(&rom, horizon, rom_cfg).map_err(|e| e.in_stage("rom"))?;
    let errors = error_series(fom, &rom_traj, &rom, ops, times).map_err(|e| e.in_stage("errors"))?;
    info!(
        "M = {}, N = {}, d_r = {}, r = {r}: max L2 {:e}",
        grid.intervals(),
        snapshots.len(),
        basis.rank(),
        errors.max_l2_rom()
    );
    Ok(ReducedRun { snapshots, basis, r, rom_traj, errors })
}

/// Rows of a Δt convergence study with the fitted log–log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    /// `(Δt, max_t ‖u_r − u_h‖₀, r)`
    pub rows: Vec<(f64, f64, usize)>,
    pub slope: f64,
    /// `max_t ‖u_h^{k} − u_h^{k/2}‖₀` between the reference run and one with half the step.
    pub temporal_floor: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Max-in-time L² distance between two trajectories at the nodes of the first.
pub fn max_l2_distance(a: &Trajectory, b: &Trajectory, ops: &AssembledOperators) -> Result<f64> {
    let mut worst = 0.0f64;
    for (t, ya) in a.times.iter().zip(&a.states) {
        let yb = b.dense_eval(*t)?;
        let e: Vec<f64> = ya.iter().zip(&yb).map(|(x, y)| x - y).collect();
        worst = worst.max(ops.l2_norm(&e)?);
    }
    Ok(worst)
}

/// Studies `max_t ‖u_r − u_h‖₀` over uniform snapshot grids with `M` in `levels` on `[0, T]`.
///
/// The full-order trajectory is integrated once with `cfg`; the ROM uses the same step.
pub fn convergence_study(
    problem: &ProblemSpec,
    space: &FemSpace,
    t_end: f64,
    levels: &[usize],
    settings: &ReductionSettings,
    cfg: &IntegratorConfig,
) -> Result<ConvergenceTable> {
    if levels.len() < 3 {
        return Err(PodError::invalid("a convergence study needs at least three levels"));
    }
    let ops = assemble_operators(space, problem.n_components)?;
    let u0 = problem.initial_coefficients(space)?;
    let fom = integrate_fom(problem, space, &ops, (0.0, t_end), &u0, cfg).map_err(|e| e.in_stage("fom"))?;
    let half = IntegratorConfig { step: cfg.step / 2.0, ..cfg.clone() };
    let fine = integrate_fom(problem, space, &ops, (0.0, t_end), &u0, &half).map_err(|e| e.in_stage("fom"))?;
    let temporal_floor = max_l2_distance(&fom, &fine, &ops)?;
    let mut rows = Vec::new();
    for &m in levels {
        let grid = uniform_grid(t_end, m)?;
        let run = reduce_and_measure(&fom, &grid, space, &ops, problem, settings, (0.0, t_end), cfg, &fom.times)?;
        rows.push((t_end / m as f64, run.errors.max_l2_rom(), run.r));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(ConvergenceTable { slope: loglog_slope(&x, &y), rows, temporal_floor })
}

/// Lowest generalized eigenpair `A x = λ M x` by inverse iteration, `x` normalized in the A norm.
pub fn lowest_eigenpair(ops: &AssembledOperators, iterations: usize) -> Result<(f64, Vec<f64>)> {
    let lu = BandedLu::factor(&ops.stiffness)?;
    let mut x = vec![1.0; ops.dim()];
    let mut lambda = 0.0;
    for _ in 0..iterations.max(1) {
        let mut y = ops.mass.mul_vec(&x);
        lu.solve_in_place(&mut y);
        let norm = ops.h1_inner(&y, &y).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        lambda = 1.0 / ops.mass.bilinear(&y, &y);
        x = y;
    }
    Ok((lambda, x))
}

/// Errors of a full-order run against a closed-form solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FomErrorTable {
    /// `(h or step, L² error at the final time)`
    pub rows: Vec<(f64, f64)>,
    /// Observed orders between consecutive rows.
    pub orders: Vec<f64>,
}

fn orders(rows: &[(f64, f64)]) -> Vec<f64> {
    rows.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect()
}

fn manufactured_error(kind: ManufacturedKind, nu: f64, n: usize, cfg: &IntegratorConfig, t_end: f64) -> Result<f64> {
    let (p, exact) = manufactured_problem(kind, nu)?;
    let space = FemSpace::p1(Mesh::uniform(n, BoundaryLayout::DirichletAll)?);
    let ops = assemble_operators(&space, 1)?;
    let u0 = p.initial_coefficients(&space)?;
    let tr = integrate_fom(&p, &space, &ops, (0.0, t_end), &u0, cfg)?;
    let fa = FieldAssembler::new(&space, 1)?;
    Ok(fa.l2_distance(tr.last_state(), |x, y, out| out[0] = exact.eval(t_end, x, y)))
}

/// L² error at `t_end` against the manufactured solution for each mesh size.
pub fn fom_spatial_study(
    kind: ManufacturedKind,
    nu: f64,
    ns: &[usize],
    cfg: &IntegratorConfig,
    t_end: f64,
) -> Result<FomErrorTable> {
    let rows = ns
        .iter()
        .map(|&n| Ok((1.0 / n as f64, manufactured_error(kind, nu, n, cfg, t_end)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FomErrorTable { orders: orders(&rows), rows })
}

/// Final-time L² distance to a reference run with a much smaller step, for each step.
pub fn fom_temporal_study(
    problem: &ProblemSpec,
    space: &FemSpace,
    steps: &[f64],
    base: &IntegratorConfig,
    t_end: f64,
) -> Result<FomErrorTable> {
    let ops = assemble_operators(space, problem.n_components)?;
    let u0 = problem.initial_coefficients(space)?;
    let finest = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let ref_cfg = IntegratorConfig { step: finest / 16.0, ..base.clone() };
    let reference = integrate_fom(problem, space, &ops, (0.0, t_end), &u0, &ref_cfg)?;
    let mut rows = Vec::new();
    for &h in steps {
        let tr = integrate_fom(problem, space, &ops, (0.0, t_end), &u0, &IntegratorConfig { step: h, ..base.clone() })?;
        let e: Vec<f64> = tr.last_state().iter().zip(reference.last_state()).map(|(a, b)| a - b).collect();
        rows.push((h, ops.l2_norm(&e)?));
    }
    Ok(FomErrorTable { orders: orders(&rows), rows })
}

/// Settings for reaching and sampling the Brusselator limit cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleConfig {
    pub n: usize,
    pub nu: f64,
    /// Length of the coarse transient run from the initial bump.
    pub transient: f64,
    pub coarse_step: f64,
    /// Fine steps per estimated period.
    pub steps_per_period: usize,
    /// Length of the fine run in periods.
    pub periods: f64,
    pub store_every: usize,
    /// Where in `[0, T)`, as a fraction of `T`, the maximum of `‖∇u_{h,t}‖₀²` is placed.
    pub peak_phase: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            n: 32,
            nu: 0.002,
            transient: 300.0,
            coarse_step: 0.02,
            steps_per_period: 8192,
            periods: 1.0,
            store_every: 4,
            peak_phase: 0.875,
        }
    }
}

/// Full-order data on the limit cycle, with time shifted so the derivative-energy peak falls at
/// `peak_phase · T`.
#[derive(Debug, Clone)]
pub struct CycleData {
    pub problem: ProblemSpec,
    pub space: FemSpace,
    pub ops: AssembledOperators,
    pub period: PeriodEstimate,
    pub fom: Trajectory,
    pub fine_cfg: IntegratorConfig,
}

/// Mass-weighted mean of the first component, `∫ u_h` over the domain.
pub fn mean_probe(ops: &AssembledOperators) -> Vec<f64> {
    let nc = ops.n_components;
    let ones: Vec<f64> = (0..ops.dim()).map(|i| if i % nc == 0 { 1.0 } else { 0.0 }).collect();
    ops.mass.mul_vec(&ones)
}

pub fn brusselator_cycle(cfg: &CycleConfig) -> Result<CycleData> {
    let problem = brusselator_lifted(cfg.nu)?;
    let space = FemSpace::p1(Mesh::uniform(cfg.n, problem.bc_layout)?);
    let ops = assemble_operators(&space, 2)?;
    let u0 = problem.initial_coefficients(&space)?;
    let coarse_cfg = IntegratorConfig { step: cfg.coarse_step, store_every: 1, ..Default::default() };
    let coarse = integrate_fom(&problem, &space, &ops, (0.0, cfg.transient), &u0, &coarse_cfg)
        .map_err(|e| e.in_stage("transient"))?;
    let probe = mean_probe(&ops);
    // period from the last third, where the transient has decayed most
    let k0 = coarse.times.iter().position(|&t| t >= cfg.transient * 2.0 / 3.0).unwrap_or(0);
    let tail = Trajectory {
        times: coarse.times[k0..].to_vec(),
        states: coarse.states[k0..].to_vec(),
        derivatives: coarse.derivatives[k0..].to_vec(),
        ..coarse.clone()
    };
    let period = estimate_period(&tail, &probe).map_err(|e| e.in_stage("period"))?;
    if !(0.0..1.0).contains(&cfg.peak_phase) {
        return Err(PodError::invalid("peak_phase must lie in [0, 1)"));
    }
    let t_c = *period.crossings.last().unwrap();
    let t = period.period;
    let samples = 1024;
    let mut t_peak = t_c;
    let mut e_peak = f64::NEG_INFINITY;
    for i in 0..samples {
        let ti = t_c - t * i as f64 / samples as f64;
        let e = derivative_energy(&coarse, &ops, ti)?;
        if e > e_peak {
            (t_peak, e_peak) = (ti, e);
        }
    }
    let mut t_s = t_peak - cfg.peak_phase * t;
    if t_s < coarse.start() {
        t_s += t;
    }
    let y_c = coarse.dense_eval(t_s)?;
    info!("estimated period {} (spread {:e}), restarting at t = {t_s}", period.period, period.spread);
    let span = cfg.periods * period.period;
    let steps = (cfg.periods * cfg.steps_per_period as f64).round() as usize;
    let fine_cfg = IntegratorConfig { step: span / steps as f64, store_every: cfg.store_every, ..Default::default() };
    let fom = integrate_fom(&problem, &space, &ops, (0.0, span), &y_c, &fine_cfg).map_err(|e| e.in_stage("fom"))?;
    Ok(CycleData { problem, space, ops, period, fom, fine_cfg })
}

impl CycleData {
    pub fn period(&self) -> f64 {
        self.period.period
    }

    /// Snapshots on `grid`, ROM over one period, errors every `T / samples`.
    pub fn run(&self, grid: &TimeGrid, settings: &ReductionSettings, samples: usize) -> Result<ReducedRun> {
        let t = self.period().min(self.fom.end());
        let times = sample_times(0.0, t, samples);
        reduce_and_measure(
            &self.fom,
            grid,
            &self.space,
            &self.ops,
            &self.problem,
            settings,
            (0.0, t),
            &self.fine_cfg,
            &times,
        )
    }
}

/// The three-segment patched grid: `T/128` on the first and last pieces, `middle_dt` in between.
pub fn three_patch_grid(t: f64, middle_dt: f64) -> Result<TimeGrid> {
    patch_grid(&[
        Segment { start: 0.0, end: t / 32.0, dt: t / 128.0 },
        Segment { start: t / 32.0, end: 23.0 * t / 32.0, dt: middle_dt },
        Segment { start: 23.0 * t / 32.0, end: t, dt: t / 128.0 },
    ])
}

/// `∫ ‖∇u_{h,t}‖₀²` over each grid interval by composite Simpson quadrature with `per_interval`
/// panels.
pub fn segment_energies(
    traj: &Trajectory,
    ops: &AssembledOperators,
    grid: &TimeGrid,
    per_interval: usize,
) -> Result<Vec<f64>> {
    let k = per_interval.max(1);
    grid.points
        .windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / k as f64;
            let mut total = 0.0;
            for i in 0..k {
                let a = w[0] + i as f64 * h;
                let f = |t: f64| crate::snapshots::derivative_energy(traj, ops, t);
                total += h / 6.0 * (f(a)? + 4.0 * f(a + 0.5 * h)? + f(a + h)?);
            }
            Ok(total)
        })
        .collect()
}

/// How the snapshot grid is built.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Uniform {
        m: usize,
    },
    Equidistributed {
        m: usize,
    },
    /// Segments as fractions of `T`: `(start, end, dt)`.
    Patched {
        segments: Vec<(f64, f64, f64)>,
    },
}

impl GridSpec {
    pub fn build(&self, traj: &Trajectory, ops: &AssembledOperators, t: f64) -> Result<TimeGrid> {
        match self {
            Self::Uniform { m } => uniform_grid(t, *m),
            Self::Equidistributed { m } => {
                let window = restrict(traj, 0.0, t)?;
                equidistribute_or_uniform(&window, ops, *m)
            }
            Self::Patched { segments } => {
                let segs: Vec<Segment> =
                    segments.iter().map(|&(a, b, d)| Segment { start: a * t, end: b * t, dt: d * t }).collect();
                patch_grid(&segs)
            }
        }
    }
}

/// Nodes of `traj` within `[a, b]`, with the endpoints added by dense evaluation when needed.
pub fn restrict(traj: &Trajectory, a: f64, b: f64) -> Result<Trajectory> {
    let mut out = Trajectory { times: vec![], states: vec![], derivatives: vec![], ..traj.clone() };
    let tol = 1e-12 * (b - a).abs().max(1.0);
    let mut push = |t: f64, s: Vec<f64>, d: Vec<f64>| {
        out.times.push(t);
        out.states.push(s);
        out.derivatives.push(d);
    };
    push(a, traj.dense_eval(a)?, traj.dense_derivative(a)?);
    for (i, &t) in traj.times.iter().enumerate() {
        if t > a + tol && t < b - tol {
            push(t, traj.states[i].clone(), traj.derivatives[i].clone());
        }
    }
    let bb = b.min(traj.end());
    push(bb, traj.dense_eval(bb)?, traj.dense_derivative(bb)?);
    Ok(out)
}

/// How the full-order trajectory and the period `T` are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeSetup {
    /// Integrate from the problem's initial data on `[0, T]`.
    Span { t_end: f64 },
    /// Reach the Brusselator limit cycle and use its estimated period as `T`.
    Cycle(CycleConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    pub nu: f64,
    pub n: usize,
    pub degree: u8,
    pub integrator: IntegratorConfig,
    pub time: TimeSetup,
    pub grid: GridSpec,
    pub reduction: ReductionSettings,
    /// `τ` as a multiple of `T`; overrides `reduction.tau` when set.
    pub tau_periods: Option<f64>,
    /// Error samples per `T`.
    pub samples_per_period: usize,
    /// ROM and error horizon in units of `T`.
    pub horizon_periods: f64,
    /// Run the constant-level bound audits (uniform grids, divided differences, full Dirichlet).
    pub audits: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.degree != 1 {
            return Err(PodError::invalid("need n ≥ 1 and degree 1"));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(PodError::invalid("nu must be positive"));
        }
        self.integrator.validate()?;
        if !(self.horizon_periods > 0.0) || self.samples_per_period == 0 {
            return Err(PodError::invalid("horizon and sampling density must be positive"));
        }
        if let Some(tp) = self.tau_periods {
            if !(tp > 0.0) {
                return Err(PodError::invalid("tau must be positive"));
            }
        } else if !(self.reduction.tau > 0.0) {
            return Err(PodError::invalid("tau must be positive"));
        }
        if matches!(self.time, TimeSetup::Cycle(_)) && self.problem != "brusselator" {
            return Err(PodError::invalid("limit-cycle setup is only available for the Brusselator"));
        }
        if let TimeSetup::Span { t_end } = self.time {
            if !(t_end > 0.0) {
                return Err(PodError::invalid("T must be positive"));
            }
        }
        Ok(())
    }
}

/// Full-order data an experiment reduces: the trajectory and the period `T` it is measured on.
#[derive(Debug, Clone)]
pub struct FomStage {
    pub problem: ProblemSpec,
    pub space: FemSpace,
    pub ops: AssembledOperators,
    pub fom: Trajectory,
    pub period: f64,
    /// Integrator settings used for the reduced model.
    pub rom_cfg: IntegratorConfig,
}

fn discretize(cfg: &ExperimentConfig) -> Result<(ProblemSpec, FemSpace, AssembledOperators)> {
    let problem = crate::problems::by_name(&cfg.problem, cfg.nu).map_err(|e| e.in_stage("problem"))?;
    let space = FemSpace::new(Mesh::uniform(cfg.n, problem.bc_layout)?, cfg.degree)?;
    let ops = assemble_operators(&space, problem.n_components).map_err(|e| e.in_stage("assembly"))?;
    Ok((problem, space, ops))
}

/// Integrates the full-order model described by `cfg`.
pub fn prepare_fom(cfg: &ExperimentConfig) -> Result<FomStage> {
    cfg.validate()?;
    match &cfg.time {
        TimeSetup::Cycle(cc) => {
            let cc = CycleConfig { n: cfg.n, nu: cfg.nu, periods: cfg.horizon_periods.max(1.0), ..cc.clone() };
            let data = brusselator_cycle(&cc)?;
            let period = data.period();
            Ok(FomStage {
                problem: data.problem,
                space: data.space,
                ops: data.ops,
                fom: data.fom,
                period,
                rom_cfg: data.fine_cfg,
            })
        }
        TimeSetup::Span { t_end } => {
            let (problem, space, ops) = discretize(cfg)?;
            let u0 = problem.initial_coefficients(&space)?;
            let span = cfg.horizon_periods.max(1.0) * t_end;
            let fom = integrate_fom(&problem, &space, &ops, (0.0, span), &u0, &cfg.integrator)
                .map_err(|e| e.in_stage("fom"))?;
            Ok(FomStage { problem, space, ops, fom, period: *t_end, rom_cfg: cfg.integrator.clone() })
        }
    }
}

impl FomStage {
    /// Rebuilds the discretization for a stored trajectory.
    pub fn from_trajectory(cfg: &ExperimentConfig, fom: Trajectory, period: f64) -> Result<Self> {
        let (problem, space, ops) = discretize(cfg)?;
        if fom.dim() != ops.dim() {
            return Err(PodError::invalid(format!(
                "stored trajectory has {} unknowns, the configured mesh has {}",
                fom.dim(),
                ops.dim()
            )));
        }
        let rom_cfg = match cfg.time {
            TimeSetup::Cycle(_) => IntegratorConfig { step: fom.step, store_every: 1, ..cfg.integrator.clone() },
            TimeSetup::Span { .. } => cfg.integrator.clone(),
        };
        Ok(Self { problem, space, ops, fom, period, rom_cfg })
    }
}

/// Output of the reduction stage of an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub grid: TimeGrid,
    pub run: ReducedRun,
    pub audits: BoundAuditReport,
    pub tau: f64,
}

/// Snapshots → POD → ROM → errors → audits on a prepared full-order trajectory.
pub fn reduce_stage(cfg: &ExperimentConfig, stage: &FomStage) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let t = stage.period;
    let tau = cfg.tau_periods.map_or(cfg.reduction.tau, |k| k * t);
    let settings = ReductionSettings { tau, ..cfg.reduction.clone() };
    let grid = cfg.grid.build(&stage.fom, &stage.ops, t).map_err(|e| e.in_stage("grid"))?;
    let horizon = (0.0, (cfg.horizon_periods * t).min(stage.fom.end()));
    let samples = (cfg.samples_per_period as f64 * cfg.horizon_periods).round().max(1.0) as usize;
    let times = sample_times(horizon.0, horizon.1, samples);
    let run = reduce_and_measure(
        &stage.fom,
        &grid,
        &stage.space,
        &stage.ops,
        &stage.problem,
        &settings,
        horizon,
        &stage.rom_cfg,
        &times,
    )?;
    let mut audits = BoundAuditReport { entries: vec![], poincare: POINCARE_UNIT_SQUARE };
    for r in 1..=run.basis.rank() {
        audits
            .entries
            .push(audit_tail_identity(&run.snapshots, &run.basis, &stage.ops, r).map_err(|e| e.in_stage("audit"))?);
    }
    if cfg.audits {
        for r in 1..=run.basis.rank() {
            match audit_max_dif(&stage.fom, &run.snapshots, &run.basis, &stage.space, &stage.ops, r) {
                Ok(e) => audits.entries.extend(e),
                Err(PodError::UnsupportedAudit(why)) => {
                    info!("skipping constant-level audits: {why}");
                    break;
                }
                Err(e) => return Err(e.in_stage("audit")),
            }
        }
    }
    Ok(ExperimentOutput { grid, run, audits, tau })
}

/// Runs the whole pipeline described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(FomStage, ExperimentOutput)> {
    let stage = prepare_fom(cfg)?;
    let out = reduce_stage(cfg, &stage)?;
    Ok((stage, out))
}
