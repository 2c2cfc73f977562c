//! Plain CSV matrices and instance directories (`Y.csv`, `truth.csv`, `meta.json`).

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::datagen::{InstanceMeta, OdlInstance, RsrInstance};
use crate::error::{Error, Result};
use crate::geometry::{DataMatrix, SubspaceBasis};

/// One matrix row per line, no header, shortest round-trip float formatting.
pub fn matrix_to_csv(m: ArrayView2<f64>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("ascii output")
}

pub fn matrix_from_csv(text: &str) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Parse(format!("row {} has {} fields, expected {c}", i + 1, rec.len())));
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse(format!("row {}: not a number: {field:?}", i + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_matrix(path: &Path, m: ArrayView2<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    matrix_from_csv(&text)
}

#[derive(Debug, Clone)]
pub enum Instance {
    Rsr(RsrInstance),
    Odl(OdlInstance),
}

impl Instance {
    pub fn y(&self) -> &DataMatrix {
        match self {
            Instance::Rsr(i) => &i.y,
            Instance::Odl(i) => &i.y,
        }
    }

    pub fn meta(&self) -> &InstanceMeta {
        match self {
            Instance::Rsr(i) => &i.meta,
            Instance::Odl(i) => &i.meta,
        }
    }

    fn truth(&self) -> ArrayView2<'_, f64> {
        match self {
            Instance::Rsr(i) => i.s.view(),
            Instance::Odl(i) => i.xhat.view(),
        }
    }
}

pub fn save_instance(dir: &Path, inst: &Instance) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("Y.csv"), inst.y().view())?;
    write_matrix(&dir.join("truth.csv"), inst.truth())?;
    let mut meta = serde_json::to_string_pretty(inst.meta())?;
    meta.push('\n');
    fs::write(dir.join("meta.json"), meta)?;
    Ok(())
}

/// ODL coefficients are recovered as `X̂ᵀY`.
pub fn load_instance(dir: &Path) -> Result<Instance> {
    let meta: InstanceMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let y = DataMatrix::new(read_matrix(&dir.join("Y.csv"))?)?;
    let truth = read_matrix(&dir.join("truth.csv"))?;
    if truth.nrows() != y.n() {
        return Err(Error::DimensionMismatch(format!("truth has {} rows, Y has {}", truth.nrows(), y.n())));
    }
    if meta.n() != y.n() {
        return Err(Error::DimensionMismatch(format!("meta.json says n={}, Y has {} rows", meta.n(), y.n())));
    }
    Ok(match meta {
        InstanceMeta::Rsr { .. } => Instance::Rsr(RsrInstance { y, s: SubspaceBasis::new(truth)?, meta }),
        InstanceMeta::Odl { .. } => {
            let a = truth.t().dot(&y.view());
            Instance::Odl(OdlInstance { y, xhat: truth, a, meta })
        }
    })
}
