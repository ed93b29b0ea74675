//! Experiment configuration files.
//!
//! A config is a flat TOML document whose keys may be dotted (`grid.M = 64`). Recognized keys:
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `problem` | `brusselator`, `heat`, `cubic` or `rotating_source` | `brusselator` |
//! | `nu` | diffusion coefficient | `0.002` |
//! | `n` | mesh subdivisions per side | `32` |
//! | `degree` | element degree (only 1) | `1` |
//! | `method` | `bdf1` or `bdf2` | `bdf2` |
//! | `step` | integrator step for fixed-span problems | `1e-3` |
//! | `newton_tol`, `newton_max_iter` | Newton settings | `1e-12`, `25` |
//! | `T_span` | snapshot window `[0, T]` for fixed-span problems | `1.0` |
//! | `cycle.transient`, `cycle.coarse_step` | Brusselator transient run | `300`, `0.02` |
//! | `cycle.steps_per_period`, `cycle.store_every` | fine run on the cycle | `8192`, `4` |
//! | `cycle.peak_phase` | position of the `‖∇u_{h,t}‖₀²` peak in the period, as a fraction of `T` | `0.875` |
//! | `grid.kind` | `uniform`, `equidistributed` or `patched` | `uniform` |
//! | `grid.M` | number of snapshot intervals | `64` |
//! | `grid.segments` | `[[start, end, dt], …]` as fractions of `T` | |
//! | `snapshots.kind` | `fd` or `derivative` | `fd` |
//! | `snapshots.tau` | time scale, in units of `T` | `1.0` |
//! | `snapshots.w0` | `initial` or `mean` | `initial` |
//! | `pod.rank_tol` | relative eigenvalue cut-off | `1e-12` |
//! | `rom.r` | fixed dimension, or `"full"` | |
//! | `rom.threshold` | eigenvalue-tail threshold for choosing `r` | |
//! | `rom.initial` | `projection` or `l2` | `projection` |
//! | `sampling.density` | error samples per `T` | `2048` |
//! | `horizon.periods` | ROM horizon in units of `T` | `2` |
//! | `audits` | run the constant-level bound audits | `true` |
//!
//! Exactly one of `rom.r` and `rom.threshold` may be given; without either, `r = d_r`.

use anyhow::{anyhow, bail, Context, Result};
use podrom::harness::{CycleConfig, ExperimentConfig, GridSpec, RankPolicy, ReductionSettings, TimeSetup};
use podrom::integrator::{BdfMethod, IntegratorConfig};
use podrom::pod::DEFAULT_RANK_TOL;
use podrom::rom::RomInitial;
use podrom::snapshots::{AnchorKind, SnapshotKind};
use toml::Value;

const KEYS: &[&str] = &[
    "problem",
    "nu",
    "n",
    "degree",
    "method",
    "step",
    "newton_tol",
    "newton_max_iter",
    "T_span",
    "cycle.transient",
    "cycle.coarse_step",
    "cycle.steps_per_period",
    "cycle.store_every",
    "cycle.peak_phase",
    "grid.kind",
    "grid.M",
    "grid.segments",
    "snapshots.kind",
    "snapshots.tau",
    "snapshots.w0",
    "pod.rank_tol",
    "rom.r",
    "rom.threshold",
    "rom.initial",
    "sampling.density",
    "horizon.periods",
    "audits",
];

/// Dotted key → value, with nested tables flattened.
#[derive(Debug, Clone, Default)]
pub struct FlatConfig(Vec<(String, Value)>);

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().context("config is not valid TOML")?;
        let mut out = Vec::new();
        flatten("", &table, &mut out);
        for (k, _) in &out {
            if !KEYS.contains(&k.as_str()) {
                bail!("unknown config key '{k}'");
            }
        }
        Ok(Self(out))
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Overrides or adds `key = value`, where `value` is TOML syntax.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            bail!("unknown config key '{key}'");
        }
        let doc: toml::Table = format!("v = {value}").parse().or_else(|_| format!("v = \"{value}\"").parse())?;
        self.0.push((key.to_string(), doc["v"].clone()));
        Ok(())
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Float(f)) => Ok(*f),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => bail!("'{key}' must be a number, got {v}"),
        }
    }

    fn uint(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => bail!("'{key}' must be a nonnegative integer, got {v}"),
        }
    }

    fn string(&self, key: &str, default: &str) -> Result<String> {
        match self.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(v) => bail!("'{key}' must be a string, got {v}"),
        }
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => bail!("'{key}' must be true or false, got {v}"),
        }
    }

    pub fn to_experiment(&self) -> Result<ExperimentConfig> {
        let problem = self.string("problem", "brusselator")?;
        let method = match self.string("method", "bdf2")?.as_str() {
            "bdf1" => BdfMethod::Bdf1,
            "bdf2" => BdfMethod::Bdf2,
            other => bail!("unknown method '{other}'"),
        };
        let integrator = IntegratorConfig {
            method,
            step: self.float("step", 1e-3)?,
            newton_tol: self.float("newton_tol", 1e-12)?,
            newton_max_iter: self.uint("newton_max_iter", 25)?,
            ..Default::default()
        };
        let time = if problem == "brusselator" {
            let d = CycleConfig::default();
            TimeSetup::Cycle(CycleConfig {
                transient: self.float("cycle.transient", d.transient)?,
                coarse_step: self.float("cycle.coarse_step", d.coarse_step)?,
                steps_per_period: self.uint("cycle.steps_per_period", d.steps_per_period)?,
                store_every: self.uint("cycle.store_every", d.store_every)?,
                peak_phase: self.float("cycle.peak_phase", d.peak_phase)?,
                ..d
            })
        } else {
            TimeSetup::Span { t_end: self.float("T_span", 1.0)? }
        };
        let m = self.uint("grid.M", 64)?;
        let grid = match self.string("grid.kind", "uniform")?.as_str() {
            "uniform" => GridSpec::Uniform { m },
            "equidistributed" => GridSpec::Equidistributed { m },
            "patched" => GridSpec::Patched { segments: self.segments()? },
            other => bail!("unknown grid kind '{other}'"),
        };
        let kind = match self.string("snapshots.kind", "fd")?.as_str() {
            "fd" => SnapshotKind::FiniteDifference,
            "derivative" => SnapshotKind::Derivative,
            other => bail!("unknown snapshot kind '{other}'"),
        };
        let w0_kind = match self.string("snapshots.w0", "initial")?.as_str() {
            "initial" => AnchorKind::InitialState,
            "mean" => AnchorKind::MeanState,
            other => bail!("unknown anchor '{other}'"),
        };
        let rank = match (self.get("rom.r"), self.get("rom.threshold")) {
            (Some(_), Some(_)) => bail!("give at most one of 'rom.r' and 'rom.threshold'"),
            (Some(Value::String(s)), None) if s == "full" => RankPolicy::Full,
            (Some(Value::Integer(r)), None) if *r >= 1 => RankPolicy::Fixed(*r as usize),
            (Some(v), None) => bail!("'rom.r' must be a positive integer or \"full\", got {v}"),
            (None, Some(_)) => RankPolicy::Threshold(self.float("rom.threshold", 0.0)?),
            (None, None) => RankPolicy::Full,
        };
        let initial = match self.string("rom.initial", "projection")?.as_str() {
            "projection" => RomInitial::Projection,
            "l2" => RomInitial::L2Projection,
            other => bail!("unknown ROM initial condition '{other}'"),
        };
        let cfg = ExperimentConfig {
            nu: self.float("nu", 0.002)?,
            n: self.uint("n", 32)?,
            degree: u8::try_from(self.uint("degree", 1)?).map_err(|_| anyhow!("degree out of range"))?,
            integrator,
            time,
            grid,
            reduction: ReductionSettings {
                kind,
                tau: 1.0,
                w0_kind,
                rank_tol: self.float("pod.rank_tol", DEFAULT_RANK_TOL)?,
                rank,
                initial,
            },
            tau_periods: Some(self.float("snapshots.tau", 1.0)?),
            samples_per_period: self.uint("sampling.density", 2048)?,
            horizon_periods: self.float("horizon.periods", 2.0)?,
            audits: self.boolean("audits", true)?,
            problem,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn segments(&self) -> Result<Vec<(f64, f64, f64)>> {
        let Some(Value::Array(rows)) = self.get("grid.segments") else {
            bail!("patched grids need 'grid.segments = [[start, end, dt], ...]'");
        };
        rows.iter()
            .map(|row| {
                let nums: Vec<f64> = row
                    .as_array()
                    .ok_or_else(|| anyhow!("each segment must be an array"))?
                    .iter()
                    .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                    .collect::<Option<_>>()
                    .ok_or_else(|| anyhow!("segment entries must be numbers"))?;
                match nums[..] {
                    [a, b, d] => Ok((a, b, d)),
                    _ => bail!("each segment needs exactly three numbers"),
                }
            })
            .collect()
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

pub fn load(path: &std::path::Path) -> Result<FlatConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    FlatConfig::parse(&text).with_context(|| format!("in {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_the_desk_brusselator() {
        let cfg = FlatConfig::parse("").unwrap().to_experiment().unwrap();
        assert_eq!(cfg.problem, "brusselator");
        assert_eq!(cfg.n, 32);
        assert!(matches!(cfg.time, TimeSetup::Cycle(_)));
        assert_eq!(cfg.grid, GridSpec::Uniform { m: 64 });
        assert_eq!(cfg.reduction.rank, RankPolicy::Full);
    }

    #[test]
    fn dotted_and_sectioned_keys_agree() {
        let a = FlatConfig::parse(
            "grid.kind = \"patched\"\ngrid.segments = [[0, 0.5, 0.25], [0.5, 1, 0.125]]\nrom.threshold = 0.0273",
        )
        .unwrap();
        let b = FlatConfig::parse(
            "[grid]\nkind = \"patched\"\nsegments = [[0, 0.5, 0.25], [0.5, 1, 0.125]]\n[rom]\nthreshold = 0.0273",
        )
        .unwrap();
        let (a, b) = (a.to_experiment().unwrap(), b.to_experiment().unwrap());
        assert_eq!(a, b);
        assert_eq!(a.grid, GridSpec::Patched { segments: vec![(0.0, 0.5, 0.25), (0.5, 1.0, 0.125)] });
        assert_eq!(a.reduction.rank, RankPolicy::Threshold(0.0273));
    }

    #[test]
    fn heat_problem_uses_fixed_span() {
        let cfg =
            FlatConfig::parse("problem = \"heat\"\nnu = 1\nn = 8\nT_span = 0.1\nrom.r = 3\nsnapshots.w0 = \"mean\"")
                .unwrap()
                .to_experiment()
                .unwrap();
        assert_eq!(cfg.time, TimeSetup::Span { t_end: 0.1 });
        assert_eq!(cfg.reduction.rank, RankPolicy::Fixed(3));
        assert_eq!(cfg.reduction.w0_kind, AnchorKind::MeanState);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(FlatConfig::parse("colour = 3").is_err());
        for bad in [
            "rom.r = 3\nrom.threshold = 0.1",
            "grid.kind = \"spiral\"",
            "nu = -1",
            "n = \"many\"",
            "grid.kind = \"patched\"",
            "snapshots.tau = 0",
            "problem = \"heat\"\ndegree = 2",
        ] {
            assert!(FlatConfig::parse(bad).unwrap().to_experiment().is_err(), "{bad}");
        }
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = FlatConfig::parse("grid.M = 32").unwrap();
        c.set("grid.M", "128").unwrap();
        c.set("snapshots.kind", "derivative").unwrap();
        let e = c.to_experiment().unwrap();
        assert_eq!(e.grid, GridSpec::Uniform { m: 128 });
        assert_eq!(e.reduction.kind, SnapshotKind::Derivative);
        assert!(c.set("bogus", "1").is_err());
    }
}
