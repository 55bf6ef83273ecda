//! Artifact formats. Floats are written in Rust's shortest round-trip form,
//! so reloading a CSV reproduces every value bit for bit; missing values are
//! written as `NaN`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use twistflow::flow::FlowState;
use twistflow::geometry::{diameter, scalar_curvature, MetricProfile, TwistProfile};
use twistflow::monitors::MonitorSeries;
use twistflow::numerics::{Field, Grid};

use crate::config::ConfigError;

pub const TRAJECTORY_COLUMNS: [&str; 12] =
    ["t", "Vol", "min_h", "sup_u", "osc_u", "sup_grad_u", "sup_lap_u", "c", "mu", "mabuchi", "diameter", "d_gauge"];
pub const SNAPSHOT_COLUMNS: [&str; 6] = ["x", "h", "u", "phi", "R_c", "a"];

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()
}

/// Rows of the trajectory table for a normalized run.
pub fn monitor_rows(series: &MonitorSeries) -> Vec<Vec<f64>> {
    series
        .samples
        .iter()
        .map(|s| {
            vec![
                s.t,
                s.volume,
                s.min_h,
                s.sup_u,
                s.osc_u,
                s.sup_grad_u,
                s.sup_lap_u,
                s.c,
                s.mu.unwrap_or(f64::NAN),
                s.mabuchi,
                s.diameter,
                s.d_gauge.unwrap_or(f64::NAN),
            ]
        })
        .collect()
}

/// Rows for an unnormalized run, where only the metric columns are defined.
pub fn geometry_rows(states: &[FlowState]) -> Vec<Vec<f64>> {
    states
        .iter()
        .map(|s| {
            let mut row = vec![f64::NAN; TRAJECTORY_COLUMNS.len()];
            row[0] = s.time;
            row[1] = s.metric.volume();
            row[2] = s.metric.h().min();
            row[10] = diameter(&s.metric);
            row
        })
        .collect()
}

pub fn write_trajectory(path: &Path, rows: &[Vec<f64>]) -> io::Result<()> {
    write_rows(path, &TRAJECTORY_COLUMNS, rows.iter().cloned())
}

pub fn snapshot_name(t: f64) -> String {
    format!("snap_{t:.6}.csv")
}

pub fn write_snapshot(path: &Path, s: &FlowState) -> io::Result<()> {
    let m = &s.metric;
    let r = scalar_curvature(m);
    let u = s.u();
    let rows = (0..m.grid().n_nodes()).map(|i| {
        vec![m.grid().x(i), m.h()[i], u.map_or(f64::NAN, |u| u[i]), s.phi[i], r[i], s.twist.a()[i]]
    });
    write_rows(path, &SNAPSHOT_COLUMNS, rows)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn ensure_dir(path: &Path) -> io::Result<PathBuf> {
    fs::create_dir_all(path)?;
    Ok(path.to_path_buf())
}

/// A snapshot reloaded from disk.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub metric: MetricProfile,
    pub twist: TwistProfile,
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, ConfigError> {
    let bad = |msg: String| ConfigError(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != SNAPSHOT_COLUMNS {
        return Err(bad(format!("expected columns {}", SNAPSHOT_COLUMNS.join(","))));
    }
    let mut cols = vec![Vec::new(); SNAPSHOT_COLUMNS.len()];
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        for (k, field) in record.iter().enumerate() {
            cols[k].push(field.trim().parse::<f64>().map_err(|e| bad(format!("{field:?}: {e}")))?);
        }
    }
    let x = &cols[0];
    if x.len() < 3 {
        return Err(bad("too few rows".into()));
    }
    let grid = Grid::new(x[x.len() - 1], x.len()).map_err(|e| bad(e.to_string()))?;
    if x.iter().enumerate().any(|(i, &xi)| (xi - grid.x(i)).abs() > 1e-12 * grid.x_max()) {
        return Err(bad("x column is not a symmetric uniform grid".into()));
    }
    let field = |k: usize| Field::new(grid, cols[k].clone()).map_err(|e| bad(e.to_string()));
    Ok(Snapshot {
        metric: MetricProfile::new(field(1)?).map_err(|e| bad(e.to_string()))?,
        twist: TwistProfile::new(field(5)?).map_err(|e| bad(e.to_string()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use twistflow::flow::{run, FlowMode, RunOptions, Trajectory};
    use twistflow::monitors::monitor_series;

    #[test]
    fn snapshot_round_trip_reproduces_monitors() {
        let g = Grid::new(10.0, 801).unwrap();
        let t = TwistProfile::sech2(g, 0.25).unwrap();
        let m = MetricProfile::scaled_fubini_study(g, 0.75).with_potential(&Field::from_fn(g, |x| 0.05 * (-x * x).exp())).unwrap();
        let traj = run(FlowState::new(m, t, FlowMode::Normalized).unwrap(), 0.3, 0.01, &RunOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(snapshot_name(0.3));
        let last = traj.last();
        write_snapshot(&path, last).unwrap();
        let snap = read_snapshot(&path).unwrap();
        assert_eq!(snap.metric.h(), last.metric.h());
        let mut reloaded = FlowState::new(snap.metric, snap.twist, FlowMode::Normalized).unwrap();
        reloaded.time = last.time;
        reloaded.mabuchi = last.mabuchi;
        let single = |s: &FlowState| Trajectory { mode: FlowMode::Normalized, dt: 0.01, states: vec![s.clone()] };
        let a = monitor_series(&single(last), false, None).unwrap();
        let b = monitor_series(&single(&reloaded), false, None).unwrap();
        let (ra, rb) = (monitor_rows(&a), monitor_rows(&b));
        for (k, (x, y)) in ra[0].iter().zip(&rb[0]).enumerate() {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0) || (x.is_nan() && y.is_nan()), "column {k}: {x} vs {y}");
        }
    }

    #[test]
    fn rejects_foreign_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x,h\n0,1\n").unwrap();
        assert!(read_snapshot(&path).is_err());
    }
}
