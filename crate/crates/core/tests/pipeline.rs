use podrom::fem::{assemble_operators, FemSpace};
use podrom::harness::*;
use podrom::integrator::{integrate_fom, IntegratorConfig};
use podrom::mesh::{BoundaryLayout, Mesh};
use podrom::pod::{pod, DEFAULT_RANK_TOL};
use podrom::problems::{by_name, manufactured_problem, ManufacturedKind};
use podrom::rom::{build_rom, integrate_rom, reconstruct_at, RomInitial};
use podrom::snapshots::{build_snapshots, uniform_grid, AnchorKind, SnapshotKind};

fn heat_config(m: usize) -> ExperimentConfig {
    ExperimentConfig {
        problem: "heat".into(),
        nu: 0.1,
        n: 6,
        degree: 1,
        integrator: IntegratorConfig { step: 0.01, ..Default::default() },
        time: TimeSetup::Span { t_end: 0.5 },
        grid: GridSpec::Uniform { m },
        reduction: ReductionSettings {
            kind: SnapshotKind::FiniteDifference,
            tau: 1.0,
            w0_kind: AnchorKind::InitialState,
            rank_tol: DEFAULT_RANK_TOL,
            rank: RankPolicy::Full,
            initial: RomInitial::Projection,
        },
        tau_periods: Some(1.0),
        samples_per_period: 25,
        horizon_periods: 1.0,
        audits: true,
    }
}

#[test]
fn one_interval_gives_at_most_two_modes() {
    let (_, out) = run_experiment(&heat_config(1)).unwrap();
    assert!(out.run.basis.rank() <= 2);
    assert_eq!(out.run.snapshots.len(), 2);
    let s = out.run.summary();
    for v in [s.max_l2_rom, s.max_l2_proj, s.max_h1_rom, s.max_h1_proj] {
        assert!(v.is_finite());
    }
    assert!(out.audits.all_pass(), "{:#?}", out.audits.entries);
}

#[test]
fn more_snapshots_do_not_hurt_the_projection() {
    let a = run_experiment(&heat_config(2)).unwrap().1.run.summary();
    let b = run_experiment(&heat_config(8)).unwrap().1.run.summary();
    assert!(b.max_l2_proj <= a.max_l2_proj * 1.0001, "{a:?} {b:?}");
    assert!(b.max_l2_rom < 1e-3, "{b:?}");
}

#[test]
fn staged_and_direct_pipelines_agree() {
    let cfg = heat_config(4);
    let (stage, direct) = run_experiment(&cfg).unwrap();
    let again = FomStage::from_trajectory(&cfg, stage.fom.clone(), stage.period).unwrap();
    let staged = reduce_stage(&cfg, &again).unwrap();
    assert_eq!(direct.run.basis.lambdas, staged.run.basis.lambdas);
    assert_eq!(direct.run.errors, staged.run.errors);
}

#[test]
fn cubic_rom_with_full_basis_tracks_fom() {
    let (p, _) = manufactured_problem(ManufacturedKind::Cubic, 0.2).unwrap();
    let space = FemSpace::p1(Mesh::uniform(8, BoundaryLayout::DirichletAll).unwrap());
    let ops = assemble_operators(&space, 1).unwrap();
    let u0 = p.initial_coefficients(&space).unwrap();
    let cfg = IntegratorConfig { step: 2e-3, ..Default::default() };
    let fom = integrate_fom(&p, &space, &ops, (0.0, 0.4), &u0, &cfg).unwrap();
    let snaps =
        build_snapshots(SnapshotKind::Derivative, &fom, &uniform_grid(0.4, 16).unwrap(), 0.4, AnchorKind::MeanState)
            .unwrap();
    let basis = pod(&snaps, &ops, DEFAULT_RANK_TOL).unwrap();
    let rom = build_rom(&basis, basis.rank(), &space, &ops, &p, &u0, RomInitial::Projection).unwrap();
    let traj = integrate_rom(&rom, (0.0, 0.4), &cfg).unwrap();
    let end = reconstruct_at(&rom, &traj, 0.4).unwrap();
    let diff: Vec<f64> = end.iter().zip(fom.last_state()).map(|(a, b)| a - b).collect();
    let rel = ops.l2_norm(&diff).unwrap() / ops.l2_norm(fom.last_state()).unwrap();
    assert!(rel < 1e-4, "{rel:e}");
}

#[test]
fn every_named_problem_discretizes() {
    for name in ["heat", "cubic", "rotating_source", "brusselator"] {
        let p = by_name(name, 0.01).unwrap();
        let space = FemSpace::p1(Mesh::uniform(4, p.bc_layout).unwrap());
        let ops = assemble_operators(&space, p.n_components).unwrap();
        assert_eq!(p.initial_coefficients(&space).unwrap().len(), ops.dim());
    }
    assert!(by_name("wave", 0.1).is_err());
}
