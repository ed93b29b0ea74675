//! On-disk formats.
//!
//! Trajectory checkpoints are plain text: a `# podrom trajectory v1` line, `key = value` header
//! lines (`label`, `n`, `step`, `components`, `dim`, `nodes`, plus optional extras such as
//! `period`), a blank line, then one CSV line per stored node and field:
//!
//! ```text
//! state,<t>,<y_0>,<y_1>,…
//! deriv,<t>,<y'_0>,<y'_1>,…
//! ```
//!
//! Values are written in Rust's shortest round-trip form, so reading a checkpoint back gives the
//! stored trajectory bit for bit. Reduced trajectories use the same layout with `dim = r`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use podrom::harness::{AuditEntry, ErrorSeries, SummaryRow, COMBINED_NORM_NOTE};
use podrom::integrator::{IntegrationStats, Trajectory};
use podrom::linalg::CsrMatrix;
use podrom::pod::PodBasis;
use podrom::snapshots::{SnapshotSet, TimeGrid};

const MAGIC: &str = "# podrom trajectory v1";

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn comment(path: &Path, line: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# {line}")?;
    Ok(csv::Writer::from_writer(w))
}

/// Shortest round-trip representation in exponent form.
fn num(v: f64) -> String {
    format!("{v:e}")
}

/// `k, lambda, sigma, tail` over the whole spectrum (`tail` is `Σ_{j>k} λ_j`).
pub fn write_eigs(path: &Path, basis: &PodBasis) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "lambda", "sigma", "tail"])?;
    for (k, l) in basis.spectrum.iter().enumerate() {
        let l = l.max(0.0);
        w.write_record([(k + 1).to_string(), num(l), num(l.sqrt()), num(basis.tail(k + 1))])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_errors(path: &Path, e: &ErrorSeries) -> Result<()> {
    let mut w = comment(path, COMBINED_NORM_NOTE)?;
    w.write_record(["t", "l2_rom", "h1_rom", "l2_proj", "h1_proj", "l2_rom_vs_proj", "h1_rom_vs_proj"])?;
    for i in 0..e.len() {
        let row = [
            e.times[i],
            e.l2_rom[i],
            e.h1_rom[i],
            e.l2_proj[i],
            e.h1_proj[i],
            e.l2_rom_vs_proj[i],
            e.h1_rom_vs_proj[i],
        ];
        w.write_record(row.map(num))?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 8] = ["M", "N", "r", "max_l2_rom", "max_l2_proj", "max_h1_rom", "max_h1_proj", "tau"];

pub fn summary_record(s: &SummaryRow, tau: f64) -> Vec<String> {
    vec![
        s.m.to_string(),
        s.n_snapshots.to_string(),
        s.r.to_string(),
        format!("{:.6e}", s.max_l2_rom),
        format!("{:.6e}", s.max_l2_proj),
        format!("{:.6e}", s.max_h1_rom),
        format!("{:.6e}", s.max_h1_proj),
        tau.to_string(),
    ]
}

pub fn write_summary(path: &Path, rows: &[(SummaryRow, f64)]) -> Result<()> {
    let mut w = comment(path, COMBINED_NORM_NOTE)?;
    w.write_record(SUMMARY_HEADER)?;
    for (s, tau) in rows {
        w.write_record(summary_record(s, *tau))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_audit(path: &Path, entries: &[AuditEntry]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["name", "lhs", "rhs", "pass", "constants"])?;
    for e in entries {
        w.write_record([e.name.clone(), num(e.lhs), num(e.rhs), e.pass.to_string(), e.constants.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// One time per line.
pub fn write_grid(path: &Path, grid: &TimeGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in &grid.points {
        writeln!(w, "{t}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<f64>().with_context(|| format!("bad time '{l}'")))
        .collect()
}

/// One column per snapshot, one row per degree of freedom.
pub fn write_snapshot_matrix(path: &Path, snaps: &SnapshotSet) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record((1..=snaps.len()).map(|j| format!("y{j}")))?;
    for i in 0..snaps.dim() {
        w.write_record(snaps.vectors.iter().map(|y| num(y[i])))?;
    }
    w.flush()?;
    Ok(())
}

/// `row, col, value` triplets.
pub fn write_triplets(path: &Path, m: &CsrMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["row", "col", "value"])?;
    for (i, j, v) in m.triplets() {
        w.write_record([i.to_string(), j.to_string(), num(v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `traj` with the header fields and any `extra` key–value pairs.
pub fn write_trajectory(path: &Path, traj: &Trajectory, n: usize, extra: &[(&str, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "label = {}", traj.label)?;
    writeln!(w, "n = {n}")?;
    writeln!(w, "step = {}", traj.step)?;
    writeln!(w, "components = {}", traj.n_components)?;
    writeln!(w, "dim = {}", traj.dim())?;
    writeln!(w, "nodes = {}", traj.len())?;
    for (k, v) in extra {
        writeln!(w, "{k} = {v}")?;
    }
    writeln!(w)?;
    for i in 0..traj.len() {
        for (tag, v) in [("state", &traj.states[i]), ("deriv", &traj.derivatives[i])] {
            write!(w, "{tag},{}", traj.times[i])?;
            for x in v {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A checkpoint read back from disk.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub trajectory: Trajectory,
}

impl Checkpoint {
    pub fn header_f64(&self, key: &str) -> Result<f64> {
        let v = self.header.get(key).ok_or_else(|| anyhow!("checkpoint has no '{key}'"))?;
        v.parse().with_context(|| format!("bad '{key}' value '{v}'"))
    }

    pub fn header_usize(&self, key: &str) -> Result<usize> {
        let v = self.header.get(key).ok_or_else(|| anyhow!("checkpoint has no '{key}'"))?;
        v.parse().with_context(|| format!("bad '{key}' value '{v}'"))
    }
}

pub fn read_trajectory(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    if lines.next().transpose()?.as_deref() != Some(MAGIC) {
        bail!("{} is not a trajectory checkpoint", path.display());
    }
    let mut header = BTreeMap::new();
    for line in lines.by_ref() {
        let line = line?;
        if line.trim().is_empty() {
            break;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("bad header line '{line}'"))?;
        header.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut cp = Checkpoint {
        trajectory: Trajectory {
            label: header.get("label").cloned().unwrap_or_default(),
            n_components: 1,
            step: 0.0,
            times: vec![],
            states: vec![],
            derivatives: vec![],
            stats: IntegrationStats::default(),
        },
        header,
    };
    cp.trajectory.n_components = cp.header_usize("components")?;
    cp.trajectory.step = cp.header_f64("step")?;
    let dim = cp.header_usize("dim")?;
    let nodes = cp.header_usize("nodes")?;
    let tr = &mut cp.trajectory;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let tag = fields.next().unwrap_or_default();
        let t: f64 = fields.next().ok_or_else(|| anyhow!("line {lineno}: missing time"))?.parse()?;
        let v: Vec<f64> =
            fields.map(str::parse).collect::<Result<_, _>>().with_context(|| format!("data line {lineno}"))?;
        if v.len() != dim {
            bail!("data line {lineno}: {} values, header says {dim}", v.len());
        }
        match tag {
            "state" => {
                tr.times.push(t);
                tr.states.push(v);
            }
            "deriv" => {
                if tr.times.last() != Some(&t) || tr.derivatives.len() + 1 != tr.states.len() {
                    bail!("data line {lineno}: derivative does not follow its state");
                }
                tr.derivatives.push(v);
            }
            other => bail!("data line {lineno}: unknown tag '{other}'"),
        }
    }
    if tr.len() != nodes || tr.derivatives.len() != nodes {
        bail!("checkpoint lists {nodes} nodes but holds {} states and {} derivatives", tr.len(), tr.derivatives.len());
    }
    Ok(cp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(values: &[f64], dim: usize) -> Trajectory {
        let nodes = values.len() / (2 * dim);
        Trajectory {
            label: "test".into(),
            n_components: 1,
            step: 0.1,
            times: (0..nodes).map(|k| k as f64 * 0.1).collect(),
            states: (0..nodes).map(|k| values[2 * k * dim..(2 * k + 1) * dim].to_vec()).collect(),
            derivatives: (0..nodes).map(|k| values[(2 * k + 1) * dim..(2 * k + 2) * dim].to_vec()).collect(),
            stats: IntegrationStats::default(),
        }
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_exact(values in proptest::collection::vec(-1e300f64..1e300, 6..60)) {
            let dim = 3;
            let usable = values.len() / (2 * dim) * 2 * dim;
            let t = traj(&values[..usable], dim);
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("t.csv");
            write_trajectory(&p, &t, 4, &[("period", "7.5".into())]).unwrap();
            let back = read_trajectory(&p).unwrap();
            prop_assert_eq!(&back.trajectory, &t);
            prop_assert_eq!(back.header_f64("period").unwrap(), 7.5);
            prop_assert_eq!(back.header_usize("n").unwrap(), 4);
        }
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let t = traj(&[1.0, 2.0, 3.0, 4.0], 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trajectory(&p, &t, 1, &[]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let cut: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        std::fs::write(&p, cut).unwrap();
        assert!(read_trajectory(&p).is_err());
        std::fs::write(&p, "hello\n").unwrap();
        assert!(read_trajectory(&p).is_err());
    }

    #[test]
    fn grid_round_trip() {
        let g = podrom::snapshots::uniform_grid(7.090636, 128).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        write_grid(&p, &g).unwrap();
        assert_eq!(read_grid(&p).unwrap(), g.points);
    }
}
