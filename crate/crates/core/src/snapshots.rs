//! Snapshot time grids and snapshot sets built from a full-order trajectory.

use log::warn;

use crate::error::{PodError, Result};
use crate::fem::AssembledOperators;
use crate::integrator::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    Uniform,
    Equidistributed,
    Patched,
}

/// Increasing snapshot times `t_0 < … < t_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub points: Vec<f64>,
    pub kind: GridKind,
}

impl TimeGrid {
    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }

    /// Largest relative deviation of the spacings from `span / M`.
    pub fn spacing_deviation(&self) -> f64 {
        let dt = self.span() / self.intervals() as f64;
        self.points.windows(2).map(|w| ((w[1] - w[0]) - dt).abs() / dt).fold(0.0, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        self.spacing_deviation() < 1e-9
    }

    /// Shortest spacing.
    pub fn min_spacing(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(PodError::invalid("a time grid needs at least two points"));
        }
        if self.points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PodError::invalid("grid points must be strictly increasing"));
        }
        Ok(())
    }
}

/// `t_j = j T / M` for `j = 0..=M`.
pub fn uniform_grid(t_end: f64, m: usize) -> Result<TimeGrid> {
    if !(t_end > 0.0) || m == 0 {
        return Err(PodError::invalid(format!("uniform grid needs T > 0 and M ≥ 1, got T = {t_end}, M = {m}")));
    }
    let mut points: Vec<f64> = (0..=m).map(|j| j as f64 * t_end / m as f64).collect();
    points[m] = t_end;
    Ok(TimeGrid { points, kind: GridKind::Uniform })
}

/// One uniform piece of a patched grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub dt: f64,
}

impl Segment {
    /// Number of local intervals, if the length is an integer multiple of `dt`.
    pub fn intervals(&self) -> Option<usize> {
        let q = (self.end - self.start) / self.dt;
        let k = q.round();
        (k >= 1.0 && (q - k).abs() <= 1e-9 * k.max(1.0)).then_some(k as usize)
    }
}

/// Union of uniform segments that tile an interval, with seam points counted once.
pub fn patch_grid(segments: &[Segment]) -> Result<TimeGrid> {
    let first = segments.first().ok_or_else(|| PodError::invalid("no segments"))?;
    let total = segments.last().unwrap().end - first.start;
    let seam_tol = 1e-12 * total.abs().max(1.0);
    let mut points = vec![first.start];
    for (i, s) in segments.iter().enumerate() {
        if !(s.dt > 0.0) || !(s.end > s.start) {
            return Err(PodError::invalid(format!("segment {i} is empty or has a nonpositive step")));
        }
        if i > 0 && (s.start - segments[i - 1].end).abs() > seam_tol {
            return Err(PodError::invalid(format!("segment {i} does not start where segment {} ends", i - 1)));
        }
        let k = s
            .intervals()
            .ok_or_else(|| PodError::invalid(format!("segment {i} length is not an integer multiple of its step")))?;
        let start = *points.last().unwrap();
        let len = s.end - s.start;
        for j in 1..=k {
            points.push(if j == k { s.end } else { start + j as f64 * len / k as f64 });
        }
    }
    let grid = TimeGrid { points, kind: GridKind::Patched };
    grid.validate()?;
    Ok(grid)
}

/// Samples used to accumulate the equidistribution density for an `M`-interval grid.
pub fn density_samples(m: usize) -> usize {
    (16 * m).max(4096)
}

/// `‖∇u_{h,t}(t)‖₀²` from the dense derivative of `traj`.
pub fn derivative_energy(traj: &Trajectory, ops: &AssembledOperators, t: f64) -> Result<f64> {
    let d = traj.dense_derivative(clamp(traj, t)?)?;
    Ok(ops.stiffness.bilinear(&d, &d))
}

/// Times `t_0 < … < t_M` over `times` such that the trapezoid-rule integral of `density` is
/// the same on every interval; the cumulative integral is inverted by linear interpolation.
pub fn equidistribute_density(times: &[f64], density: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 || times.len() < 2 || times.len() != density.len() {
        return Err(PodError::invalid("need M ≥ 1 and at least two matching density samples"));
    }
    if density.iter().any(|d| !(*d >= 0.0)) {
        return Err(PodError::invalid("density must be nonnegative"));
    }
    let mut cdf = vec![0.0; times.len()];
    for i in 1..times.len() {
        cdf[i] = cdf[i - 1] + 0.5 * (times[i] - times[i - 1]) * (density[i] + density[i - 1]);
    }
    let total = *cdf.last().unwrap();
    if !(total > 0.0) {
        return Err(PodError::DegenerateDensity);
    }
    let mut points = Vec::with_capacity(m + 1);
    points.push(times[0]);
    let mut i = 1;
    for j in 1..m {
        let target = total * j as f64 / m as f64;
        while cdf[i] < target {
            i += 1;
        }
        // cdf[i-1] < target ≤ cdf[i]
        let w = (target - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
        points.push(times[i - 1] + w * (times[i] - times[i - 1]));
    }
    points.push(*times.last().unwrap());
    Ok(points)
}

/// Grid on `[traj.start(), traj.end()]` equidistributing `‖∇u_{h,t}‖₀²`.
pub fn equidistribute_grid(traj: &Trajectory, ops: &AssembledOperators, m: usize) -> Result<TimeGrid> {
    if m == 0 {
        return Err(PodError::invalid("M must be at least 1"));
    }
    let ns = density_samples(m);
    let (a, b) = (traj.start(), traj.end());
    let times: Vec<f64> = (0..=ns).map(|k| if k == ns { b } else { a + (b - a) * k as f64 / ns as f64 }).collect();
    let density = times.iter().map(|&t| derivative_energy(traj, ops, t)).collect::<Result<Vec<_>>>()?;
    let points = equidistribute_density(&times, &density, m)?;
    let grid = TimeGrid { points, kind: GridKind::Equidistributed };
    grid.validate()?;
    Ok(grid)
}

/// [`equidistribute_grid`], falling back to a uniform grid when the density vanishes.
pub fn equidistribute_or_uniform(traj: &Trajectory, ops: &AssembledOperators, m: usize) -> Result<TimeGrid> {
    match equidistribute_grid(traj, ops, m) {
        Err(PodError::DegenerateDensity) => {
            warn!("{}: derivative energy vanishes, using a uniform grid", traj.label);
            let mut g = uniform_grid(traj.end() - traj.start(), m)?;
            for p in &mut g.points {
                *p += traj.start();
            }
            Ok(g)
        }
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SnapshotKind {
    /// Scaled divided differences of consecutive states.
    FiniteDifference,
    /// Scaled time derivatives at the grid points.
    Derivative,
}

/// Which state anchors the first snapshot `y_1 = √N w_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnchorKind {
    InitialState,
    /// Mean of the states at the grid points.
    MeanState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub vectors: Vec<Vec<f64>>,
    pub kind: SnapshotKind,
    pub tau: f64,
    pub w0_kind: AnchorKind,
    pub grid: TimeGrid,
    pub w0: Vec<f64>,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

/// Snaps times within round-off of the trajectory ends onto them.
fn clamp(traj: &Trajectory, t: f64) -> Result<f64> {
    let (a, b) = (traj.start(), traj.end());
    let tol = 1e-10 * (b - a).abs().max(1.0);
    if t < a - tol || t > b + tol {
        return Err(PodError::OutOfRange { t, start: a, end: b });
    }
    Ok(t.clamp(a, b))
}

fn states_on(traj: &Trajectory, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    grid.points.iter().map(|&t| traj.dense_eval(clamp(traj, t)?)).collect()
}

fn anchor(states: &[Vec<f64>], kind: AnchorKind) -> Vec<f64> {
    match kind {
        AnchorKind::InitialState => states[0].clone(),
        AnchorKind::MeanState => {
            let mut w = vec![0.0; states[0].len()];
            for s in states {
                crate::linalg::axpy(1.0, s, &mut w);
            }
            let k = states.len() as f64;
            w.iter_mut().for_each(|x| *x /= k);
            w
        }
    }
}

fn check_inputs(grid: &TimeGrid, tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(PodError::invalid(format!("time scale must be positive, got {tau}")));
    }
    grid.validate()
}

/// `y_1 = √N w_0` and `y_j = τ (u_h(t_{j−1}) − u_h(t_{j−2})) / (t_{j−1} − t_{j−2})`, N = M + 1.
///
/// On nonuniform grids each difference uses its own spacing.
pub fn build_fd_snapshots(traj: &Trajectory, grid: &TimeGrid, tau: f64, w0_kind: AnchorKind) -> Result<SnapshotSet> {
    check_inputs(grid, tau)?;
    let states = states_on(traj, grid)?;
    let n = grid.points.len();
    let w0 = anchor(&states, w0_kind);
    let mut vectors = Vec::with_capacity(n);
    vectors.push(w0.iter().map(|x| (n as f64).sqrt() * x).collect());
    for j in 1..n {
        let dt = grid.points[j] - grid.points[j - 1];
        vectors.push(states[j].iter().zip(&states[j - 1]).map(|(a, b)| tau * (a - b) / dt).collect());
    }
    Ok(SnapshotSet { vectors, kind: SnapshotKind::FiniteDifference, tau, w0_kind, grid: grid.clone(), w0 })
}

/// `y_1 = √N w_0` and `y_j = τ u_{h,t}(t_{j−2})` for `j = 2..=N`, N = M + 2.
pub fn build_derivative_snapshots(
    traj: &Trajectory,
    grid: &TimeGrid,
    tau: f64,
    w0_kind: AnchorKind,
) -> Result<SnapshotSet> {
    check_inputs(grid, tau)?;
    let states = states_on(traj, grid)?;
    let n = grid.points.len() + 1;
    let w0 = anchor(&states, w0_kind);
    let mut vectors = Vec::with_capacity(n);
    vectors.push(w0.iter().map(|x| (n as f64).sqrt() * x).collect());
    for &t in &grid.points {
        let d = traj.dense_derivative(clamp(traj, t)?)?;
        vectors.push(d.into_iter().map(|x| tau * x).collect());
    }
    Ok(SnapshotSet { vectors, kind: SnapshotKind::Derivative, tau, w0_kind, grid: grid.clone(), w0 })
}

pub fn build_snapshots(
    kind: SnapshotKind,
    traj: &Trajectory,
    grid: &TimeGrid,
    tau: f64,
    w0_kind: AnchorKind,
) -> Result<SnapshotSet> {
    match kind {
        SnapshotKind::FiniteDifference => build_fd_snapshots(traj, grid, tau, w0_kind),
        SnapshotKind::Derivative => build_derivative_snapshots(traj, grid, tau, w0_kind),
    }
}
