//! Trajectory CSV files, JSON documents and experiment bundles on disk.
//!
//! Trajectory CSVs have one row per step with columns `k` (one-based), `t`,
//! the states `x1..xn`, then each player's controls (`u1`, `u2`, … for scalar
//! controls, `u1_1`, `u1_2`, … otherwise). Values are written with 17
//! significant digits so a write/read round trip is exact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{ExperimentConfig, ExperimentResults, Snr};
use crate::game::Trajectory;

fn control_columns(control_dims: &[usize]) -> Vec<String> {
    let mut cols = Vec::new();
    for (i, &m) in control_dims.iter().enumerate() {
        if m == 1 {
            cols.push(format!("u{}", i + 1));
        } else {
            cols.extend((0..m).map(|c| format!("u{}_{}", i + 1, c + 1)));
        }
    }
    cols
}

/// Column names for a trajectory of the given shape.
pub fn trajectory_header(state_dim: usize, control_dims: &[usize]) -> Vec<String> {
    let mut cols = vec!["k".to_string(), "t".to_string()];
    cols.extend((0..state_dim).map(|j| format!("x{}", j + 1)));
    cols.extend(control_columns(control_dims));
    cols
}

pub fn trajectory_to_csv(traj: &Trajectory, dt: f64) -> String {
    let dims: Vec<usize> = traj.controls.iter().map(|c| c.nrows()).collect();
    let mut out = trajectory_header(traj.states.nrows(), &dims).join(",");
    out.push('\n');
    for k in 0..traj.horizon() {
        let mut fields = vec![(k + 1).to_string(), format!("{:.16e}", k as f64 * dt)];
        fields.extend(traj.states.column(k).iter().map(|v| format!("{v:.16e}")));
        for u in &traj.controls {
            fields.extend(u.column(k).iter().map(|v| format!("{v:.16e}")));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parse a trajectory CSV whose columns must match `state_dim` and
/// `control_dims` exactly. Errors carry one-based line and column numbers.
pub fn trajectory_from_csv(text: &str, state_dim: usize, control_dims: &[usize]) -> Result<Trajectory> {
    let expected = trajectory_header(state_dim, control_dims);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_error(1, 1, e.to_string()))?,
        None => return Err(parse_error(1, 1, "empty file")),
    };
    for (c, name) in expected.iter().enumerate() {
        match header.get(c) {
            Some(h) if h == name => {}
            Some(h) => return Err(parse_error(1, c + 1, format!("expected column `{name}`, found `{h}`"))),
            None => return Err(parse_error(1, c + 1, format!("missing column `{name}`"))),
        }
    }
    if header.len() > expected.len() {
        return Err(parse_error(1, expected.len() + 1, "unexpected extra column"));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in records.enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| parse_error(line, 1, e.to_string()))?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != expected.len() {
            let column = record.len().min(expected.len()) + 1;
            return Err(parse_error(
                line,
                column,
                format!("expected {} fields, found {}", expected.len(), record.len()),
            ));
        }
        let values = record
            .iter()
            .enumerate()
            .skip(2)
            .map(|(c, field)| {
                field
                    .parse::<f64>()
                    .map_err(|_| parse_error(line, c + 1, format!("`{field}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(parse_error(2, 1, "no data rows"));
    }

    let horizon = rows.len();
    let states = DMatrix::from_fn(state_dim, horizon, |j, k| rows[k][j]);
    let mut offset = state_dim;
    let mut controls = Vec::with_capacity(control_dims.len());
    for &m in control_dims {
        controls.push(DMatrix::from_fn(m, horizon, |c, k| rows[k][offset + c]));
        offset += m;
    }
    Trajectory::new(states, controls)
}

/// Write `contents` to a temporary sibling and rename it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("`{}` is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Read an experiment configuration. Absent fields take their defaults;
/// unknown fields are rejected.
pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(e.line(), e.column(), e.to_string()))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, dt: f64) -> Result<()> {
    write_atomic(path, trajectory_to_csv(traj, dt).as_bytes())
}

pub fn read_trajectory(path: &Path, state_dim: usize, control_dims: &[usize]) -> Result<Trajectory> {
    trajectory_from_csv(&fs::read_to_string(path)?, state_dim, control_dims)
}

fn snr_label(snr: Snr) -> String {
    match snr {
        Snr::Infinite => "inf".into(),
        Snr::Db(db) => format!("{db}dB"),
    }
}

/// `nmae_grid.csv`: one row per pipeline, one column per SNR level, each
/// value `e_x/e_u` (medians when several trials ran).
pub fn nmae_grid_csv(results: &ExperimentResults) -> String {
    let mut out = String::from("pipeline");
    for snr in &results.config.snr {
        out.push(',');
        out.push_str(&snr_label(*snr));
    }
    out.push('\n');
    let fmt = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.6}"));
    for row in &results.grid {
        out.push_str(&row.pipeline);
        for e in &row.entries {
            out.push_str(&format!(",{}/{}", fmt(e.e_x), fmt(e.e_u)));
        }
        out.push('\n');
    }
    out
}

/// Write the results bundle into `dir` and return the files written:
/// `params_<pipeline>.json` (identification at the highest SNR),
/// `nmae_grid.csv`, `results.json`, and per-cell trajectory CSVs under
/// `trajectories/`.
pub fn write_bundle(results: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let dt = results.config.dt;

    for demo in &results.demonstrations {
        let name = demo.pipeline.to_lowercase();
        if let Some(t) = &demo.trajectory {
            let path = dir.join("trajectories").join(format!("{name}_demonstration.csv"));
            write_trajectory(&path, t, dt)?;
            written.push(path);
        }
        let best = results
            .config
            .snr
            .iter()
            .copied()
            .max_by(|a, b| a.partial_cmp(b).expect("SNR levels are ordered"));
        if let Some(cell) = best.and_then(|snr| results.cell(&demo.pipeline, snr, 0)) {
            let path = dir.join(format!("params_{name}.json"));
            write_json(
                &path,
                &serde_json::json!({
                    "pipeline": demo.pipeline,
                    "snr": cell.snr,
                    "seed": cell.seed,
                    "identification": cell.identification,
                    "failure": cell.failure,
                    "config": results.config,
                }),
            )?;
            written.push(path);
        }
    }

    for cell in &results.cells {
        if let Some(t) = &cell.estimate {
            let path = dir.join("trajectories").join(format!(
                "{}_{}_trial{}.csv",
                cell.pipeline.to_lowercase(),
                snr_label(cell.snr),
                cell.trial
            ));
            write_trajectory(&path, t, dt)?;
            written.push(path);
        }
    }

    let grid = dir.join("nmae_grid.csv");
    write_atomic(&grid, nmae_grid_csv(results).as_bytes())?;
    written.push(grid);
    let all = dir.join("results.json");
    write_json(&all, results)?;
    written.push(all);
    Ok(written)
}
