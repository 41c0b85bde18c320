//! Model JSON. Real matrices are `{rows, cols, data}` in row-major order,
//! complex numbers are `[re, im]` pairs.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dmd::{self, Diagnostics, DmdModel};
use crate::edmd::{self, BasisKind, BasisSpec, Dictionary, EdmdModel};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// A fitted model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dmd(DmdModel),
    Edmd(EdmdModel),
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Dmd(_) => "dmd",
            Model::Edmd(_) => "edmd",
        }
    }

    /// The underlying DMD fit (on lifted data for EDMD).
    pub fn dmd(&self) -> &DmdModel {
        match self {
            Model::Dmd(m) => m,
            Model::Edmd(m) => &m.inner,
        }
    }

    /// Dimension of the original state.
    pub fn state_dim(&self) -> usize {
        match self {
            Model::Dmd(m) => m.dim(),
            Model::Edmd(m) => m.state_dim(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dmd().dt
    }

    pub fn basis(&self) -> Option<BasisSpec> {
        match self {
            Model::Dmd(_) => None,
            Model::Edmd(m) => Some(m.dictionary.spec()),
        }
    }

    /// State estimates at `times`, n×len.
    pub fn reconstruct(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Model::Dmd(m) => dmd::reconstruct(m, times),
            Model::Edmd(m) => edmd::reconstruct_states(m, times),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    kind: String,
    n: usize,
    p: usize,
    r: usize,
    dt: f64,
    basis: Option<BasisFile>,
    state_rows: Option<Vec<usize>>,
    singular_values: Vec<f64>,
    a_tilde: RealMatrix,
    projection: RealMatrix,
    eigenvalues: Vec<[f64; 2]>,
    eigenvectors: ComplexMatrix,
    modes: ComplexMatrix,
    continuous_eigenvalues: Vec<Option<[f64; 2]>>,
    amplitudes: Vec<[f64; 2]>,
    diagnostics: Diagnostics,
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    kind: String,
    order: usize,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn unpair(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

fn real_matrix(a: &DMatrix<f64>) -> RealMatrix {
    RealMatrix {
        rows: a.nrows(),
        cols: a.ncols(),
        data: (0..a.nrows())
            .flat_map(|i| (0..a.ncols()).map(move |j| a[(i, j)]))
            .collect(),
    }
}

fn complex_matrix(a: &CMatrix) -> ComplexMatrix {
    ComplexMatrix {
        rows: a.nrows(),
        cols: a.ncols(),
        data: (0..a.nrows())
            .flat_map(|i| (0..a.ncols()).map(move |j| pair(a[(i, j)])))
            .collect(),
    }
}

fn to_file(model: &Model) -> ModelFile {
    let inner = model.dmd();
    let (basis, state_rows) = match model {
        Model::Dmd(_) => (None, None),
        Model::Edmd(m) => {
            let spec = m.dictionary.spec();
            (
                Some(BasisFile {
                    kind: spec.kind.name().to_string(),
                    order: spec.order,
                }),
                Some(m.state_rows.clone()),
            )
        }
    };
    ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        kind: model.kind_name().to_string(),
        n: model.state_dim(),
        p: inner.dim(),
        r: inner.rank,
        dt: inner.dt,
        basis,
        state_rows,
        singular_values: inner.singular_values.clone(),
        a_tilde: real_matrix(&inner.a_tilde),
        projection: real_matrix(&inner.projection),
        eigenvalues: inner.eigenvalues.iter().map(|&z| pair(z)).collect(),
        eigenvectors: complex_matrix(&inner.eigenvectors),
        modes: complex_matrix(&inner.modes),
        continuous_eigenvalues: inner
            .continuous_eigenvalues
            .iter()
            .map(|w| w.map(pair))
            .collect(),
        amplitudes: inner.amplitudes.iter().map(|&z| pair(z)).collect(),
        diagnostics: inner.diagnostics.clone(),
    }
}

/// Serializes `model` as pretty-printed JSON followed by a newline.
pub fn write_model<W: Write>(model: &Model, mut w: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut w, &to_file(model))?;
    writeln!(w)?;
    w.flush()
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_model(&text).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

fn check_real(name: &str, m: RealMatrix, rows: usize, cols: usize) -> std::result::Result<DMatrix<f64>, String> {
    if m.rows != rows || m.cols != cols || m.data.len() != rows * cols {
        return Err(format!(
            "`{name}` should be {rows}x{cols} with {} entries, found {}x{} with {}",
            rows * cols,
            m.rows,
            m.cols,
            m.data.len()
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &m.data))
}

fn check_complex(name: &str, m: ComplexMatrix, rows: usize, cols: usize) -> std::result::Result<CMatrix, String> {
    if m.rows != rows || m.cols != cols || m.data.len() != rows * cols {
        return Err(format!(
            "`{name}` should be {rows}x{cols} with {} entries, found {}x{} with {}",
            rows * cols,
            m.rows,
            m.cols,
            m.data.len()
        ));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| unpair(m.data[i * cols + j])))
}

fn check_len(name: &str, len: usize, expected: usize) -> std::result::Result<(), String> {
    if len != expected {
        return Err(format!("`{name}` has {len} entries, expected {expected}"));
    }
    Ok(())
}

fn parse_model(text: &str) -> std::result::Result<Model, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(MODEL_SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(format!(
                "unsupported schema_version {v} (this build reads {MODEL_SCHEMA_VERSION})"
            ))
        }
        None => return Err("missing or invalid `schema_version`".into()),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| format!("malformed model: {e}"))?;
    let (n, p, r) = (file.n, file.p, file.r);
    if n == 0 || r == 0 || r > p {
        return Err(format!("inconsistent dimensions n={n}, p={p}, r={r}"));
    }
    if !(file.dt.is_finite() && file.dt > 0.0) {
        return Err(format!("dt must be positive, found {}", file.dt));
    }
    check_len("singular_values", file.singular_values.len(), r)?;
    check_len("eigenvalues", file.eigenvalues.len(), r)?;
    check_len("continuous_eigenvalues", file.continuous_eigenvalues.len(), r)?;
    check_len("amplitudes", file.amplitudes.len(), r)?;
    let inner = DmdModel {
        rank: r,
        dt: file.dt,
        a_tilde: check_real("a_tilde", file.a_tilde, r, r)?,
        eigenvalues: file.eigenvalues.into_iter().map(unpair).collect(),
        eigenvectors: check_complex("eigenvectors", file.eigenvectors, r, r)?,
        modes: check_complex("modes", file.modes, p, r)?,
        continuous_eigenvalues: file
            .continuous_eigenvalues
            .into_iter()
            .map(|w| w.map(unpair))
            .collect(),
        amplitudes: CVector::from_iterator(r, file.amplitudes.into_iter().map(unpair)),
        projection: check_real("projection", file.projection, p, r)?,
        singular_values: file.singular_values,
        diagnostics: file.diagnostics,
    };
    let all_finite = inner.a_tilde.iter().all(|v| v.is_finite())
        && inner.projection.iter().all(|v| v.is_finite())
        && inner.modes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
        && inner.amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    if !all_finite {
        return Err("model contains non-finite values".into());
    }
    match file.kind.as_str() {
        "dmd" => {
            if file.basis.is_some() || p != n {
                return Err("a dmd model has no basis and p = n".into());
            }
            Ok(Model::Dmd(inner))
        }
        "edmd" => {
            let basis = file.basis.ok_or("an edmd model needs a `basis`")?;
            let kind = BasisKind::from_str(&basis.kind).map_err(|e| e.to_string())?;
            let dictionary = Dictionary::new(BasisSpec { kind, order: basis.order }, n)
                .map_err(|e| e.to_string())?;
            if dictionary.lifted_dim() != p {
                return Err(format!(
                    "basis {} on {n} states has {} observables, file says p={p}",
                    dictionary.spec(),
                    dictionary.lifted_dim()
                ));
            }
            let state_rows = file.state_rows.unwrap_or_else(|| dictionary.state_rows());
            if state_rows != dictionary.state_rows() {
                return Err(format!("`state_rows` {state_rows:?} do not match the basis"));
            }
            Ok(Model::Edmd(EdmdModel {
                dictionary,
                inner,
                state_rows,
            }))
        }
        other => Err(format!("unknown model kind `{other}` (expected dmd or edmd)")),
    }
}
