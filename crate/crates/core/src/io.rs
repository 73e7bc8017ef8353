//! File formats: CSV for grids and traces, JSON for run manifests, Matrix
//! Market for the assembled system.
//!
//! Floating-point values are written with Rust's shortest-roundtrip
//! formatting, so reading a file back reproduces the original bits; two
//! identical runs therefore produce byte-identical files.

use crate::config::RunConfig;
use crate::elasticity::{Side, SpatialGrid};
use crate::forward::BoundaryTraces;
use crate::recon::ComponentMetrics;
use crate::reduction::SparseSystem;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error in {file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        file: file.display().to_string(),
        line,
        message: message.into(),
    }
}

/// One scalar grid as CSV: a header line `nx,ny,h,x0,y0`, then `ny` rows of
/// `nx` comma-separated values (row index increasing with y).
pub fn write_grid_csv(path: &Path, grid: &SpatialGrid, values: &[f64]) -> Result<(), IoError> {
    assert_eq!(values.len(), grid.n_nodes());
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "{},{},{},{},{}",
        grid.nx, grid.ny, grid.h, grid.x0, grid.y0
    )?;
    let mut line = String::new();
    for iy in 0..grid.ny {
        line.clear();
        for ix in 0..grid.nx {
            if ix > 0 {
                line.push(',');
            }
            write!(line, "{}", values[grid.index(ix, iy)]).expect("write to string");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_grid_csv(path: &Path) -> Result<(SpatialGrid, Vec<f64>), IoError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))??;
    let parts: Vec<&str> = header.trim().split(',').collect();
    if parts.len() != 5 {
        return Err(parse_err(path, 1, "header must be nx,ny,h,x0,y0"));
    }
    let nx: usize = parts[0]
        .parse()
        .map_err(|e| parse_err(path, 1, format!("nx: {e}")))?;
    let ny: usize = parts[1]
        .parse()
        .map_err(|e| parse_err(path, 1, format!("ny: {e}")))?;
    let h: f64 = parts[2]
        .parse()
        .map_err(|e| parse_err(path, 1, format!("h: {e}")))?;
    let x0: f64 = parts[3]
        .parse()
        .map_err(|e| parse_err(path, 1, format!("x0: {e}")))?;
    let y0: f64 = parts[4]
        .parse()
        .map_err(|e| parse_err(path, 1, format!("y0: {e}")))?;
    let grid = SpatialGrid { x0, y0, h, nx, ny };
    let mut values = vec![0.0; nx * ny];
    for iy in 0..ny {
        let line = lines
            .next()
            .ok_or_else(|| parse_err(path, iy + 2, "missing row"))??;
        let mut count = 0;
        for (ix, tok) in line.trim().split(',').enumerate() {
            if ix >= nx {
                return Err(parse_err(path, iy + 2, "too many columns"));
            }
            values[iy * nx + ix] = tok
                .parse()
                .map_err(|e| parse_err(path, iy + 2, format!("value: {e}")))?;
            count += 1;
        }
        if count != nx {
            return Err(parse_err(path, iy + 2, "too few columns"));
        }
    }
    Ok((grid, values))
}

/// Traces as CSV: a metadata line, a column-header line, then one row per
/// (boundary node, outward side, time sample) with columns
/// `node,x,y,normal,t,f1,f2,g1,g2`.
pub fn write_traces_csv(path: &Path, traces: &BoundaryTraces) -> Result<(), IoError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let o = &traces.omega;
    writeln!(
        out,
        "# nx={} ny={} h={} x0={} y0={} T={} steps={} delta={} seed={}",
        o.nx,
        o.ny,
        o.h,
        o.x0,
        o.y0,
        traces.t_final,
        traces.n_steps,
        traces.noise_level,
        traces.seed.map(|s| s.to_string()).unwrap_or_default()
    )?;
    writeln!(out, "node,x,y,normal,t,f1,f2,g1,g2")?;
    let dt = traces.t_final / traces.n_steps as f64;
    let mut line = String::new();
    for (ni, node) in traces.nodes.iter().enumerate() {
        let (x, y) = o.node(node.ix, node.iy);
        for (si, side) in node.sides.iter().enumerate() {
            for k in 0..traces.n_samples() {
                let t = k as f64 * dt;
                let f = traces.f[ni][k];
                let g = traces.g[ni][si][k];
                line.clear();
                write!(
                    line,
                    "{ni},{x},{y},{},{t},{},{},{},{}",
                    side.label(),
                    f[0],
                    f[1],
                    g[0],
                    g[1]
                )
                .expect("write to string");
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}

pub fn read_traces_csv(path: &Path) -> Result<BoundaryTraces, IoError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, meta) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let meta = meta?;
    let get = |key: &str| -> Result<String, IoError> {
        meta.split_whitespace()
            .find_map(|tok| tok.strip_prefix(&format!("{key}=")))
            .map(str::to_string)
            .ok_or_else(|| parse_err(path, 1, format!("metadata key {key} missing")))
    };
    let nx: usize = get("nx")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("nx: {e}")))?;
    let ny: usize = get("ny")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("ny: {e}")))?;
    let h: f64 = get("h")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("h: {e}")))?;
    let x0: f64 = get("x0")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("x0: {e}")))?;
    let y0: f64 = get("y0")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("y0: {e}")))?;
    let t_final: f64 = get("T")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("T: {e}")))?;
    let n_steps: usize = get("steps")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("steps: {e}")))?;
    let delta: f64 = get("delta")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("delta: {e}")))?;
    let seed = get("seed")?.parse::<u64>().ok();
    let omega = SpatialGrid { x0, y0, h, nx, ny };
    let nodes = omega.boundary_nodes();
    let n_samples = n_steps + 1;
    let mut traces = BoundaryTraces {
        t_final,
        n_steps,
        omega,
        f: vec![vec![[0.0; 2]; n_samples]; nodes.len()],
        g: nodes
            .iter()
            .map(|n| vec![vec![[0.0; 2]; n_samples]; n.sides.len()])
            .collect(),
        nodes,
        noise_level: delta,
        seed,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing column header"))?;
    header?;
    let mut counters = vec![0usize; traces.nodes.len() * 4];
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 9 {
            return Err(parse_err(path, idx + 1, "expected 9 columns"));
        }
        let ni: usize = cols[0]
            .parse()
            .map_err(|e| parse_err(path, idx + 1, format!("node: {e}")))?;
        if ni >= traces.nodes.len() {
            return Err(parse_err(path, idx + 1, "node index out of range"));
        }
        let side = Side::from_label(cols[3])
            .ok_or_else(|| parse_err(path, idx + 1, "bad normal label"))?;
        let si = traces.nodes[ni]
            .sides
            .iter()
            .position(|&s| s == side)
            .ok_or_else(|| parse_err(path, idx + 1, "side not present at node"))?;
        let slot = ni * 4 + si;
        let k = counters[slot];
        if k >= n_samples {
            return Err(parse_err(path, idx + 1, "too many samples for node/side"));
        }
        counters[slot] += 1;
        let val = |j: usize| -> Result<f64, IoError> {
            cols[j]
                .parse()
                .map_err(|e| parse_err(path, idx + 1, format!("column {j}: {e}")))
        };
        traces.f[ni][k] = [val(5)?, val(6)?];
        traces.g[ni][si][k] = [val(7)?, val(8)?];
    }
    for (ni, node) in traces.nodes.iter().enumerate() {
        for si in 0..node.sides.len() {
            if counters[ni * 4 + si] != n_samples {
                return Err(parse_err(
                    path,
                    0,
                    format!("node {ni} side {si}: incomplete sample series"),
                ));
            }
        }
    }
    Ok(traces)
}

/// Assembled system in Matrix Market coordinate format.
pub fn write_matrix_market(path: &Path, sys: &SparseSystem) -> Result<(), IoError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "% row classes: pde dirichlet neumann reg-0 reg-1 reg-2")?;
    writeln!(out, "{} {} {}", sys.n_rows(), sys.n_cols(), sys.n_entries())?;
    for (r, c, v) in sys.triplets() {
        writeln!(out, "{} {} {}", r + 1, c + 1, v)?;
    }
    Ok(())
}

/// Solver outcome summary for the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub relative_normal_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub c_max: f64,
    pub courant: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveSummary {
    pub modal: f64,
    pub spacetime: f64,
}

/// Per-run manifest: resolved configuration and everything measured.
/// Contains no timestamps, so identical runs serialize identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    /// Metrics keyed `p1, p2, q1, q2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<(String, ComponentMetrics)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objectives: Option<ObjectiveSummary>,
    /// Output files written by the run, relative to the manifest.
    pub files: Vec<String>,
}

pub fn version_string() -> String {
    option_env!("ELASTIREC_GIT_DESCRIBE")
        .map(str::to_string)
        .unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Manifest {
            version: version_string(),
            command: command.to_string(),
            config: config.clone(),
            seed: config.seed,
            stability: None,
            solver: None,
            metrics: None,
            objectives: None,
            files: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Reads a `RunConfig` from either a bare config JSON or a manifest
/// produced by an earlier run, so a manifest reruns its own configuration.
pub fn read_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(manifest) = serde_json::from_str::<Manifest>(&text) {
        return Ok(manifest.config);
    }
    Ok(serde_json::from_str::<RunConfig>(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{extract_traces, History, TraceWindow};

    #[test]
    fn grid_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let grid = SpatialGrid::square(-1.0, 1.0, 7).unwrap();
        let values: Vec<f64> = (0..49)
            .map(|i| (i as f64 * 0.7345).sin() * 1e-3 + 1.0 / 3.0)
            .collect();
        write_grid_csv(&path, &grid, &values).unwrap();
        let (g2, v2) = read_grid_csv(&path).unwrap();
        assert_eq!(grid, g2);
        assert_eq!(values, v2); // bitwise
    }

    #[test]
    fn traces_csv_round_trip_is_exact() {
        let grid = SpatialGrid::square(-3.0, 3.0, 31).unwrap();
        let window = TraceWindow::new(&grid, -1.0, -1.0, 1.0, 1.0).unwrap();
        let h = History::from_field_fn(&grid, window, 0.02, 50, |x, y, t| {
            [(x + t).sin() * y, (y - t).cos() * x]
        });
        let traces = extract_traces(&h);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.csv");
        write_traces_csv(&path, &traces).unwrap();
        let back = read_traces_csv(&path).unwrap();
        assert_eq!(traces, back);
    }

    #[test]
    fn manifest_round_trip_and_config_extraction() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let cfg = RunConfig {
            delta: 0.05,
            ..Default::default()
        };
        let mut manifest = Manifest::new("forward", &cfg);
        manifest.files.push("traces.csv".to_string());
        manifest.write(&path).unwrap();
        let back = Manifest::read(&path).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.command, "forward");
        // read_config accepts both manifests and bare configs
        assert_eq!(read_config(&path).unwrap(), cfg);
        let bare = dir.path().join("config.json");
        std::fs::write(&bare, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(read_config(&bare).unwrap(), cfg);
    }

    #[test]
    fn matrix_market_dump_has_declared_shape() {
        use crate::basis::{coupling_matrix, TimeBasis};
        use crate::elasticity::make_isotropic;
        use crate::reduction::{assemble, BoundaryMask, ModalBoundaryData};
        let omega = SpatialGrid::square(-1.0, 1.0, 5).unwrap();
        let nodes = omega.boundary_nodes();
        let data = ModalBoundaryData {
            omega: omega.clone(),
            f: vec![vec![[1.0, 0.5]; nodes.len()]; 2],
            g: vec![
                nodes
                    .iter()
                    .map(|n| vec![[0.1, 0.2]; n.sides.len()])
                    .collect();
                2
            ],
            mask: BoundaryMask::full(nodes.len()),
            nodes,
        };
        let basis = TimeBasis::gauss(1.0, 1).unwrap();
        let sys = assemble(
            &make_isotropic(1.0, 2.0).unwrap(),
            &omega,
            &coupling_matrix(&basis),
            &data,
            1e-4,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("system.mtx");
        write_matrix_market(&path, &sys).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("%%MatrixMarket"));
        let size_line = lines.find(|l| !l.starts_with('%')).unwrap();
        let parts: Vec<usize> = size_line
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(parts[0], sys.n_rows());
        assert_eq!(parts[1], sys.n_cols());
        assert_eq!(parts[2], sys.n_entries());
        assert_eq!(text.lines().count(), 3 + sys.n_entries());
    }
}
