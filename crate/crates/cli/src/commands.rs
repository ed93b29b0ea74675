//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use podrom::harness::{
    audit_tail_identity, prepare_fom, reduce_stage, BoundAuditReport, ExperimentConfig, ExperimentOutput, FomStage,
    TimeSetup,
};
use podrom::pod::pod;
use podrom::rom::{build_rom, integrate_rom};
use podrom::snapshots::build_snapshots;
use rand::{rngs::StdRng, Rng, SeedableRng};

use crate::config::FlatConfig;
use crate::formats;

pub struct Session {
    pub flat: FlatConfig,
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub seed: u64,
    /// Reuse a checkpoint written by `fom-run` instead of integrating again.
    pub fom_checkpoint: Option<PathBuf>,
    /// Also write matrix dumps (operators, snapshot matrix).
    pub dump: bool,
}

impl Session {
    pub fn new(flat: FlatConfig, out: PathBuf, seed: u64, fom_checkpoint: Option<PathBuf>, dump: bool) -> Result<Self> {
        let cfg = flat.to_experiment()?;
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self { flat, cfg, out, seed, fom_checkpoint, dump })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn fom(&self) -> Result<FomStage> {
        match &self.fom_checkpoint {
            Some(p) => {
                let cp = formats::read_trajectory(p)?;
                let period = cp.header_f64("period")?;
                if cp.header_usize("n")? != self.cfg.n {
                    bail!("checkpoint mesh n = {} differs from the config's n = {}", cp.header_usize("n")?, self.cfg.n);
                }
                Ok(FomStage::from_trajectory(&self.cfg, cp.trajectory, period)?)
            }
            None => Ok(prepare_fom(&self.cfg)?),
        }
    }

    pub fn fom_run(&self) -> Result<FomStage> {
        let stage = self.fom()?;
        let extra = [("period", stage.period.to_string()), ("problem", stage.problem.name.clone())];
        formats::write_trajectory(&self.path("fom.csv"), &stage.fom, self.cfg.n, &extra)?;
        if self.dump {
            formats::write_triplets(&self.path("mass.csv"), &stage.ops.mass)?;
            formats::write_triplets(&self.path("stiffness.csv"), &stage.ops.stiffness)?;
        }
        println!("T = {}  nodes = {}  stats = {:?}", stage.period, stage.fom.len(), stage.fom.stats);
        Ok(stage)
    }

    pub fn snapshots(&self) -> Result<()> {
        let stage = self.fom()?;
        let grid = self.cfg.grid.build(&stage.fom, &stage.ops, stage.period)?;
        let tau = self.cfg.tau_periods.map_or(self.cfg.reduction.tau, |k| k * stage.period);
        let snaps = build_snapshots(self.cfg.reduction.kind, &stage.fom, &grid, tau, self.cfg.reduction.w0_kind)?;
        formats::write_grid(&self.path("grid.txt"), &grid)?;
        if self.dump {
            formats::write_snapshot_matrix(&self.path("snapshots.csv"), &snaps)?;
        }
        println!("M = {}  N = {}  tau = {tau}", grid.intervals(), snaps.len());
        Ok(())
    }

    pub fn pod(&self) -> Result<()> {
        let stage = self.fom()?;
        let grid = self.cfg.grid.build(&stage.fom, &stage.ops, stage.period)?;
        let tau = self.cfg.tau_periods.map_or(self.cfg.reduction.tau, |k| k * stage.period);
        let snaps = build_snapshots(self.cfg.reduction.kind, &stage.fom, &grid, tau, self.cfg.reduction.w0_kind)?;
        let basis = pod(&snaps, &stage.ops, self.cfg.reduction.rank_tol)?;
        formats::write_eigs(&self.path("eigs.csv"), &basis)?;
        let r = self.cfg.reduction.rank.choose(&basis)?;
        println!("N = {}  d_r = {}  r = {r}  tail(r) = {:e}", snaps.len(), basis.rank(), basis.tail(r));
        Ok(())
    }

    pub fn rom_run(&self) -> Result<()> {
        let stage = self.fom()?;
        let grid = self.cfg.grid.build(&stage.fom, &stage.ops, stage.period)?;
        let tau = self.cfg.tau_periods.map_or(self.cfg.reduction.tau, |k| k * stage.period);
        let snaps = build_snapshots(self.cfg.reduction.kind, &stage.fom, &grid, tau, self.cfg.reduction.w0_kind)?;
        let basis = pod(&snaps, &stage.ops, self.cfg.reduction.rank_tol)?;
        let r = self.cfg.reduction.rank.choose(&basis)?;
        let u0 = stage.fom.dense_eval(0.0)?;
        let rom = build_rom(&basis, r, &stage.space, &stage.ops, &stage.problem, &u0, self.cfg.reduction.initial)?;
        let horizon = (0.0, (self.cfg.horizon_periods * stage.period).min(stage.fom.end()));
        let traj = integrate_rom(&rom, horizon, &stage.rom_cfg)?;
        let extra = [("period", stage.period.to_string()), ("r", r.to_string())];
        formats::write_trajectory(&self.path("rom.csv"), &traj, self.cfg.n, &extra)?;
        println!("r = {r}  nodes = {}  stats = {:?}", traj.len(), traj.stats);
        Ok(())
    }

    fn write_outputs(&self, dir: &Path, out: &ExperimentOutput) -> Result<()> {
        fs::create_dir_all(dir)?;
        formats::write_eigs(&dir.join("eigs.csv"), &out.run.basis)?;
        formats::write_errors(&dir.join("errors.csv"), &out.run.errors)?;
        formats::write_summary(&dir.join("summary.csv"), &[(out.run.summary(), out.tau)])?;
        formats::write_audit(&dir.join("audit.csv"), &out.audits.entries)?;
        formats::write_grid(&dir.join("grid.txt"), &out.grid)?;
        Ok(())
    }

    pub fn errors(&self) -> Result<()> {
        let stage = self.fom()?;
        let out = reduce_stage(&self.cfg, &stage)?;
        formats::write_errors(&self.path("errors.csv"), &out.run.errors)?;
        formats::write_summary(&self.path("summary.csv"), &[(out.run.summary(), out.tau)])?;
        print_summary(&out);
        Ok(())
    }

    pub fn experiment(&self) -> Result<()> {
        let stage = self.fom()?;
        let out = reduce_stage(&self.cfg, &stage)?;
        self.write_outputs(&self.out, &out)?;
        print_summary(&out);
        Ok(())
    }

    /// Bound audits of the configured experiment, plus a randomized tail-identity suite.
    pub fn audit_bounds(&self, random_configs: usize) -> Result<BoundAuditReport> {
        let stage = self.fom()?;
        let mut report = reduce_stage(&self.cfg, &stage)?.audits;
        report.entries.extend(random_tail_suite(self.seed, random_configs)?.entries);
        formats::write_audit(&self.path("audit.csv"), &report.entries)?;
        let failed = report.entries.iter().filter(|e| !e.pass).count();
        println!("{} audits, {failed} failed", report.entries.len());
        Ok(report)
    }

    /// Runs the experiment for every value of `key`, reusing the full-order run when the key only
    /// affects the reduction.
    pub fn sweep(&self, key: &str, values: &[String]) -> Result<Vec<ExperimentOutput>> {
        let reduction_only = ["grid.", "snapshots.", "pod.", "rom.", "sampling."].iter().any(|p| key.starts_with(p));
        let shared = if reduction_only { Some(self.fom()?) } else { None };
        let mut rows = Vec::new();
        let mut outputs = Vec::new();
        for v in values {
            let mut flat = self.flat.clone();
            flat.set(key, v)?;
            let cfg = flat.to_experiment().with_context(|| format!("{key} = {v}"))?;
            let stage = match &shared {
                Some(s) => s.clone(),
                None => prepare_fom(&cfg)?,
            };
            let out = reduce_stage(&cfg, &stage).with_context(|| format!("{key} = {v}"))?;
            let dir = self.out.join(format!("{}={}", key, sanitize(v)));
            self.write_outputs(&dir, &out)?;
            info!("{key} = {v}: {:?}", out.run.summary());
            rows.push((out.run.summary(), out.tau));
            outputs.push(out);
        }
        formats::write_summary(&self.path("summary.csv"), &rows)?;
        for (s, _) in &rows {
            println!(
                "M = {:4}  N = {:4}  r = {:3}  L2 {:.3e}  proj {:.3e}",
                s.m, s.n_snapshots, s.r, s.max_l2_rom, s.max_l2_proj
            );
        }
        Ok(outputs)
    }
}

fn sanitize(v: &str) -> String {
    v.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn print_summary(out: &ExperimentOutput) {
    let s = out.run.summary();
    println!(
        "M = {}  N = {}  r = {}  max L2 rom {:.3e}  proj {:.3e}  max H1 rom {:.3e}  proj {:.3e}",
        s.m, s.n_snapshots, s.r, s.max_l2_rom, s.max_l2_proj, s.max_h1_rom, s.max_h1_proj
    );
    let failed = out.audits.entries.iter().filter(|e| !e.pass).count();
    println!("{} audits, {failed} failed", out.audits.entries.len());
}

/// Tail-identity audits over random heat-problem configurations
/// (`n ∈ {4, 8}`, `M ∈ 3..=10`, both snapshot kinds and anchors).
pub fn random_tail_suite(seed: u64, count: usize) -> Result<BoundAuditReport> {
    use podrom::fem::{assemble_operators, FemSpace};
    use podrom::integrator::{integrate_fom, IntegratorConfig};
    use podrom::mesh::{BoundaryLayout, Mesh};
    use podrom::problems::{manufactured_problem, ManufacturedKind};
    use podrom::snapshots::{uniform_grid, AnchorKind, SnapshotKind};

    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = BoundAuditReport::default();
    for c in 0..count {
        let n = if rng.gen_bool(0.5) { 4 } else { 8 };
        let m = rng.gen_range(3..=10);
        let kind = if rng.gen_bool(0.5) { SnapshotKind::FiniteDifference } else { SnapshotKind::Derivative };
        let w0 = if rng.gen_bool(0.5) { AnchorKind::InitialState } else { AnchorKind::MeanState };
        let nu = rng.gen_range(0.05..1.0);
        let t_end = rng.gen_range(0.05..0.5);
        let tau = t_end * rng.gen_range(0.25..4.0);
        let (p, _) = manufactured_problem(ManufacturedKind::Heat, nu)?;
        let space = FemSpace::p1(Mesh::uniform(n, BoundaryLayout::DirichletAll)?);
        let ops = assemble_operators(&space, 1)?;
        let u0 = p.initial_coefficients(&space)?;
        let cfg = IntegratorConfig { step: t_end / 64.0, ..Default::default() };
        let fom = integrate_fom(&p, &space, &ops, (0.0, t_end), &u0, &cfg)?;
        let snaps = build_snapshots(kind, &fom, &uniform_grid(t_end, m)?, tau, w0)?;
        let basis = pod(&snaps, &ops, podrom::pod::DEFAULT_RANK_TOL)?;
        for r in 1..=basis.rank() {
            let mut e = audit_tail_identity(&snaps, &basis, &ops, r)?;
            e.name = format!("random{c}_{}", e.name);
            e.constants = format!("{} n={n} M={m} {kind:?} {w0:?}", e.constants);
            report.entries.push(e);
        }
    }
    Ok(report)
}

/// The period `T` for a fixed-span config, without running anything.
pub fn configured_span(cfg: &ExperimentConfig) -> Option<f64> {
    match cfg.time {
        TimeSetup::Span { t_end } => Some(t_end),
        TimeSetup::Cycle(_) => None,
    }
}
