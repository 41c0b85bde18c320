//! Trajectory CSV: header `t,<state names>,<input names>`, one row per
//! sample in time order. Input columns are named `u` or `u<digits>`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::dynamics::{SystemKind, Trajectory};
use crate::error::{Error, Result};

/// Largest accepted deviation of a time step from the first one, seconds.
const DT_TOLERANCE: f64 = 1e-9;

/// Shortest text that parses back to the same `f64`. Very large or very
/// small magnitudes switch to exponent notation.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn is_input_name(name: &str) -> bool {
    name == "u" || (name.len() > 1 && name.starts_with('u') && name[1..].bytes().all(|b| b.is_ascii_digit()))
}

fn write_row<W: Write>(w: &mut W, t: f64, cols: impl Iterator<Item = f64>) -> std::io::Result<()> {
    write!(w, "{}", format_number(t))?;
    for v in cols {
        write!(w, ",{}", format_number(v))?;
    }
    writeln!(w)
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, mut w: W) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(traj.state_names().iter().cloned());
    header.extend(traj.input_names().iter().cloned());
    writeln!(w, "{}", header.join(","))?;
    let states = traj.states();
    for k in 0..traj.len() {
        let inputs = traj.inputs().map(|u| u.column(k).iter().cloned().collect::<Vec<_>>());
        let row = states
            .column(k)
            .iter()
            .cloned()
            .chain(inputs.into_iter().flatten())
            .collect::<Vec<_>>();
        write_row(&mut w, k as f64 * traj.dt(), row.into_iter())?;
    }
    w.flush()
}

pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectory(traj, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Writes an n×m matrix as CSV with a `t` column at `k·dt`.
pub fn write_matrix_csv<W: Write>(
    mut w: W,
    names: &[String],
    dt: f64,
    values: &DMatrix<f64>,
) -> std::io::Result<()> {
    writeln!(w, "t,{}", names.join(","))?;
    for k in 0..values.ncols() {
        write_row(&mut w, k as f64 * dt, values.column(k).iter().cloned())?;
    }
    w.flush()
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(file, path)
}

/// Loads a trajectory and checks that its state columns are exactly those
/// of `kind`.
pub fn load_system_trajectory(path: impl AsRef<Path>, kind: SystemKind) -> Result<Trajectory> {
    let path = path.as_ref();
    let traj = load_trajectory(path)?;
    let expected = kind.state_names();
    for name in expected {
        if !traj.state_names().iter().any(|s| s == name) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("missing column `{name}` for {kind}"),
            });
        }
    }
    if traj.state_names() != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "state columns {:?} do not match {kind} ({})",
                traj.state_names(),
                expected.join(",")
            ),
        });
    }
    Ok(traj)
}

fn parse_trajectory<R: std::io::Read>(reader: R, path: &Path) -> Result<Trajectory> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty file".into())),
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.first().map(String::as_str) != Some("t") {
        return Err(parse_err(1, "missing column `t` (must be first)".into()));
    }
    if let Some(empty) = names.iter().position(|s| s.is_empty()) {
        return Err(parse_err(1, format!("empty name for column {}", empty + 1)));
    }
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(parse_err(1, format!("duplicate column `{name}`")));
        }
    }
    let first_input = names[1..].iter().position(|s| is_input_name(s)).map(|i| i + 1);
    let split = first_input.unwrap_or(names.len());
    if let Some(bad) = names[split..].iter().find(|s| !is_input_name(s)) {
        return Err(parse_err(1, format!("state column `{bad}` after input columns")));
    }
    let state_names = names[1..split].to_vec();
    let input_names = names[split..].to_vec();
    if state_names.is_empty() {
        return Err(parse_err(1, "no state columns".into()));
    }

    let width = names.len();
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let mut values = Vec::with_capacity(width);
        for (field, name) in rec.iter().zip(&names) {
            let v: f64 = field.trim().parse().map_err(|_| {
                parse_err(line, format!("column `{name}`: `{field}` is not a number"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column `{name}`: non-finite value `{field}`")));
            }
            values.push(v);
        }
        times.push((line, values[0]));
        rows.push(values[1..].to_vec());
    }

    if rows.len() < 2 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("need at least 2 samples, found {}", rows.len()),
        });
    }
    let (_, t0) = times[0];
    if t0.abs() > DT_TOLERANCE {
        return Err(parse_err(times[0].0, format!("first sample must be at t = 0, found {t0}")));
    }
    let dt = times[1].1 - t0;
    if dt <= 0.0 {
        return Err(parse_err(times[1].0, format!("time must increase, found step {dt}")));
    }
    for w in times.windows(2) {
        let step = w[1].1 - w[0].1;
        if (step - dt).abs() >= DT_TOLERANCE {
            return Err(parse_err(
                w[1].0,
                format!("non-uniform time step {step} (expected {dt})"),
            ));
        }
    }

    let n = state_names.len();
    let m = rows.len();
    let states = DMatrix::from_fn(n, m, |i, k| rows[k][i]);
    let inputs = (!input_names.is_empty())
        .then(|| DMatrix::from_fn(input_names.len(), m, |i, k| rows[k][n + i]));
    Trajectory::new(dt, states, inputs, state_names, input_names)
}
