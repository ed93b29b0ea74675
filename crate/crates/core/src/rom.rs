//! POD-Galerkin reduced model `M_r α' = −ν A_r α + Φᵀ(∫R(Φα)φ + ∫fφ)`.

use nalgebra::DMatrix;

use crate::error::{PodError, Result};
use crate::fem::{AssembledOperators, FemSpace, FieldAssembler};
use crate::integrator::{integrate, ImplicitSystem, IntegratorConfig, RomTrajectory};
use crate::linalg::{axpy, dot, DenseLu, LinearSolve};
use crate::pod::PodBasis;
use crate::problems::ProblemSpec;

/// How `u_r(0)` is obtained from the full-order initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RomInitial {
    /// `P^r u_h(0)`, the H¹₀ projection.
    #[default]
    Projection,
    /// L² projection onto the POD space.
    L2Projection,
}

pub struct RomModel<'a> {
    pub problem: &'a ProblemSpec,
    pub ops: &'a AssembledOperators,
    assembler: FieldAssembler,
    /// First `r` modes.
    pub modes: Vec<Vec<f64>>,
    pub reduced_mass: DMatrix<f64>,
    pub reduced_stiffness: DMatrix<f64>,
    pub initial_coeffs: Vec<f64>,
}

impl std::fmt::Debug for RomModel<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RomModel").field("problem", &self.problem.name).field("r", &self.r()).finish()
    }
}

fn gram(left: &[Vec<f64>], right: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(left.len(), right.len(), |i, j| dot(&left[i], &right[j]))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn build_rom<'a>(
    basis: &PodBasis,
    r: usize,
    space: &FemSpace,
    ops: &'a AssembledOperators,
    problem: &'a ProblemSpec,
    u_h0: &[f64],
    initial: RomInitial,
) -> Result<RomModel<'a>> {
    problem.validate()?;
    if r == 0 || r > basis.rank() {
        return Err(PodError::invalid(format!("r = {r} outside 1..={}", basis.rank())));
    }
    if ops.dim() != basis.dim() || u_h0.len() != ops.dim() {
        return Err(PodError::invalid("basis, operators and initial state have different dimensions"));
    }
    let modes = basis.basis[..r].to_vec();
    let m_phi: Vec<Vec<f64>> = modes.iter().map(|p| ops.mass.mul_vec(p)).collect();
    let a_phi: Vec<Vec<f64>> = modes.iter().map(|p| ops.stiffness.mul_vec(p)).collect();
    let mut reduced_mass = gram(&modes, &m_phi);
    let mut reduced_stiffness = gram(&modes, &a_phi);
    symmetrize(&mut reduced_mass);
    symmetrize(&mut reduced_stiffness);
    let initial_coeffs = match initial {
        RomInitial::Projection => basis.coefficients(r, u_h0, ops)?,
        RomInitial::L2Projection => {
            let mut b: Vec<f64> = m_phi.iter().map(|p| dot(p, u_h0)).collect();
            DenseLu::factor(reduced_mass.clone())?.solve_in_place(&mut b);
            b
        }
    };
    let assembler = FieldAssembler::new(space, problem.n_components)?;
    Ok(RomModel { problem, ops, assembler, modes, reduced_mass, reduced_stiffness, initial_coeffs })
}

impl RomModel<'_> {
    pub fn r(&self) -> usize {
        self.modes.len()
    }

    /// `Φ_r α`.
    pub fn reconstruct(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.r() {
            return Err(PodError::invalid(format!("{} coefficients for r = {}", alpha.len(), self.r())));
        }
        let mut out = vec![0.0; self.ops.dim()];
        for (a, phi) in alpha.iter().zip(&self.modes) {
            axpy(*a, phi, &mut out);
        }
        Ok(out)
    }

    fn restrict(&self, v: &[f64], out: &mut [f64]) {
        for (o, phi) in out.iter_mut().zip(&self.modes) {
            *o = dot(phi, v);
        }
    }
}

impl ImplicitSystem for RomModel<'_> {
    type Factor = DenseLu;

    fn dim(&self) -> usize {
        self.r()
    }

    fn rhs(&self, t: f64, alpha: &[f64], out: &mut [f64]) {
        let nu = self.problem.nu;
        for (i, o) in out.iter_mut().enumerate() {
            *o = -nu * (0..alpha.len()).map(|j| self.reduced_stiffness[(i, j)] * alpha[j]).sum::<f64>();
        }
        let reaction = !self.problem.reaction.is_zero();
        let forcing = self.problem.forcing_load(&self.assembler, t);
        if !reaction && forcing.is_none() {
            return;
        }
        let mut load = forcing.unwrap_or_else(|| vec![0.0; self.ops.dim()]);
        if reaction {
            let u = self.reconstruct(alpha).expect("coefficient length checked by the integrator");
            self.assembler.add_reaction_load(&self.problem.reaction, &u, 1.0, &mut load);
        }
        let mut g = vec![0.0; self.r()];
        self.restrict(&load, &mut g);
        for (o, x) in out.iter_mut().zip(&g) {
            *o += x;
        }
    }

    fn apply_mass(&self, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..y.len()).map(|j| self.reduced_mass[(i, j)] * y[j]).sum();
        }
    }

    fn factor_iteration_matrix(&self, c: f64, _t: f64, alpha: &[f64]) -> Result<DenseLu> {
        let mut m = &self.reduced_mass * c + &self.reduced_stiffness * self.problem.nu;
        if !self.problem.reaction.is_zero() {
            let u = self.reconstruct(alpha)?;
            let jac = self.assembler.reaction_jacobian(&self.problem.reaction, &u);
            let j_phi: Vec<Vec<f64>> = self.modes.iter().map(|p| jac.mul_vec(p)).collect();
            m -= gram(&self.modes, &j_phi);
        }
        DenseLu::factor(m)
    }

    fn factor_mass(&self) -> Result<DenseLu> {
        DenseLu::factor(self.reduced_mass.clone())
    }

    fn is_linear(&self) -> bool {
        self.problem.reaction.is_zero()
    }
}

pub fn integrate_rom(rom: &RomModel, t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<RomTrajectory> {
    let label = format!("{}-rom-r{}", rom.problem.name, rom.r());
    integrate(rom, t_span, &rom.initial_coeffs, cfg, &label, 1)
}

/// Full-order coefficients of the reduced solution at time `t`.
pub fn reconstruct_at(rom: &RomModel, traj: &RomTrajectory, t: f64) -> Result<Vec<f64>> {
    rom.reconstruct(&traj.dense_eval(t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_operators;
    use crate::integrator::integrate_fom;
    use crate::mesh::{BoundaryLayout, Mesh};
    use crate::pod::{pod, DEFAULT_RANK_TOL};
    use crate::problems::{brusselator_lifted, manufactured_problem, ManufacturedKind};
    use crate::snapshots::{build_fd_snapshots, uniform_grid, AnchorKind};

    fn heat_setup(n: usize) -> (FemSpace, AssembledOperators, ProblemSpec) {
        let space = FemSpace::p1(Mesh::uniform(n, BoundaryLayout::DirichletAll).unwrap());
        let ops = assemble_operators(&space, 1).unwrap();
        let (p, _) = manufactured_problem(ManufacturedKind::Heat, 1.0).unwrap();
        (space, ops, p)
    }

    fn random_basis(ops: &AssembledOperators, count: usize) -> PodBasis {
        let vectors: Vec<Vec<f64>> =
            (0..count).map(|k| (0..ops.dim()).map(|i| ((i * (k + 2)) as f64 * 0.37).sin()).collect()).collect();
        let snaps = crate::snapshots::SnapshotSet {
            w0: vectors[0].clone(),
            vectors,
            kind: crate::snapshots::SnapshotKind::FiniteDifference,
            tau: 1.0,
            w0_kind: AnchorKind::InitialState,
            grid: uniform_grid(1.0, count).unwrap(),
        };
        pod(&snaps, ops, DEFAULT_RANK_TOL).unwrap()
    }

    #[test]
    fn reduced_operators_and_initial_projection() {
        let (space, ops, p) = heat_setup(6);
        let basis = random_basis(&ops, 4);
        let u0 = p.initial_coefficients(&space).unwrap();
        for r in 1..=4 {
            let rom = build_rom(&basis, r, &space, &ops, &p, &u0, RomInitial::Projection).unwrap();
            let eye = DMatrix::<f64>::identity(r, r);
            assert!((&rom.reduced_stiffness - eye).amax() <= 1e-10);
            assert!(rom.reduced_mass.clone().cholesky().is_some());
            let rec = rom.reconstruct(&rom.initial_coeffs).unwrap();
            let proj = basis.project(r, &u0, &ops).unwrap();
            assert!(rec.iter().zip(&proj).all(|(a, b)| (a - b).abs() < 1e-12));
            // round trip through the basis
            let alpha: Vec<f64> = (0..r).map(|k| k as f64 - 1.5).collect();
            let back = basis.coefficients(r, &rom.reconstruct(&alpha).unwrap(), &ops).unwrap();
            assert!(back.iter().zip(&alpha).all(|(a, b)| (a - b).abs() < 1e-10));
        }
        let rom = build_rom(&basis, 1, &space, &ops, &p, &u0, RomInitial::Projection).unwrap();
        assert!(rom.reduced_mass[(0, 0)] > 0.0);
        assert_eq!(rom.reconstruct(&[0.0]).unwrap(), vec![0.0; ops.dim()]);
        assert_eq!(rom.reconstruct(&[1.0]).unwrap(), basis.basis[0]);
        assert!(rom.reconstruct(&[1.0, 2.0]).is_err());
        assert!(build_rom(&basis, 0, &space, &ops, &p, &u0, RomInitial::Projection).is_err());
        assert!(build_rom(&basis, 5, &space, &ops, &p, &u0, RomInitial::Projection).is_err());
    }

    #[test]
    fn l2_initial_condition_is_mass_orthogonal() {
        let (space, ops, p) = heat_setup(6);
        let basis = random_basis(&ops, 3);
        let u0 = p.initial_coefficients(&space).unwrap();
        let rom = build_rom(&basis, 3, &space, &ops, &p, &u0, RomInitial::L2Projection).unwrap();
        let res: Vec<f64> = u0.iter().zip(rom.reconstruct(&rom.initial_coeffs).unwrap()).map(|(a, b)| a - b).collect();
        for phi in &rom.modes {
            assert!(ops.mass.bilinear(phi, &res).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let (space, ops, p) = heat_setup(4);
        let basis = random_basis(&ops, 3);
        let rom = build_rom(&basis, 3, &space, &ops, &p, &vec![0.0; ops.dim()], RomInitial::Projection).unwrap();
        let cfg = IntegratorConfig { step: 0.01, ..Default::default() };
        let tr = integrate_rom(&rom, (0.0, 0.2), &cfg).unwrap();
        assert!(tr.states.iter().flatten().all(|a| *a == 0.0));
    }

    #[test]
    fn brusselator_rom_tracks_fom_briefly() {
        let space = FemSpace::p1(Mesh::uniform(6, BoundaryLayout::BrusselatorMixed).unwrap());
        let ops = assemble_operators(&space, 2).unwrap();
        let p = brusselator_lifted(0.01).unwrap();
        let u0 = p.initial_coefficients(&space).unwrap();
        let cfg = IntegratorConfig { step: 0.01, ..Default::default() };
        let fom = integrate_fom(&p, &space, &ops, (0.0, 2.0), &u0, &cfg).unwrap();
        let snaps = build_fd_snapshots(&fom, &uniform_grid(2.0, 40).unwrap(), 2.0, AnchorKind::InitialState).unwrap();
        let basis = pod(&snaps, &ops, DEFAULT_RANK_TOL).unwrap();
        let r = basis.rank();
        let rom = build_rom(&basis, r, &space, &ops, &p, &u0, RomInitial::Projection).unwrap();
        let tr = integrate_rom(&rom, (0.0, 2.0), &cfg).unwrap();
        let mut worst = 0.0f64;
        for (t, a) in tr.times.iter().zip(&tr.states) {
            let e: Vec<f64> =
                fom.dense_eval(*t).unwrap().iter().zip(rom.reconstruct(a).unwrap()).map(|(x, y)| x - y).collect();
            worst = worst.max(ops.l2_norm(&e).unwrap());
        }
        assert!(worst < 1e-6, "max L2 error {worst}");
    }
}
