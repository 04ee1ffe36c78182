//! Decomposition JSON documents and vector CSV files.

use std::fs;
use std::io::Read;
use std::path::Path;

use kqp_core::{FeatureMatrix, KernelOperator, KernelSpec, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelDoc {
    Linear,
    Gaussian { bandwidth: f64 },
}

impl From<KernelSpec> for KernelDoc {
    fn from(k: KernelSpec) -> Self {
        match k {
            KernelSpec::Linear => KernelDoc::Linear,
            KernelSpec::Gaussian { bandwidth } => KernelDoc::Gaussian { bandwidth },
        }
    }
}

impl TryFrom<&KernelDoc> for KernelSpec {
    type Error = CliError;

    fn try_from(k: &KernelDoc) -> Result<Self, CliError> {
        match *k {
            KernelDoc::Linear => Ok(KernelSpec::Linear),
            KernelDoc::Gaussian { bandwidth } => Ok(KernelSpec::gaussian(bandwidth)?),
        }
    }
}

/// On-disk form of `X·Y·diag(D)·Y†·X†`.
///
/// Floats are written in shortest round-trip form, so reading a document
/// back gives the same bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub dim: usize,
    pub kernel: KernelDoc,
    pub preimages: Vec<Vec<f64>>,
    #[serde(rename = "Y")]
    pub y: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    pub orthonormal: bool,
}

impl Decomposition {
    pub fn from_operator(op: &KernelOperator) -> Self {
        let x = op.preimages();
        let y = op.coefficients();
        Decomposition {
            dim: x.dim(),
            kernel: x.kernel().into(),
            preimages: x.points().to_vec(),
            y: (0..y.rows()).map(|i| y.row(i).to_vec()).collect(),
            d: op.weights().to_vec(),
            orthonormal: op.is_orthonormal(),
        }
    }

    pub fn to_operator(&self) -> Result<KernelOperator, CliError> {
        let kernel = KernelSpec::try_from(&self.kernel)?;
        if self.preimages.iter().any(|p| p.len() != self.dim) {
            return Err(CliError::input(format!("pre-images must have length dim = {}", self.dim)));
        }
        let n = self.preimages.len();
        let r = self.d.len();
        if self.y.len() != n || self.y.iter().any(|row| row.len() != r) {
            return Err(CliError::input(format!("Y must be {n} x {r}")));
        }
        let x = if n == 0 { FeatureMatrix::empty(kernel, self.dim) } else { FeatureMatrix::new(kernel, self.preimages.clone())? };
        let flat: Vec<f64> = self.y.iter().flatten().copied().collect();
        let y = Matrix::from_row_slice(n, r, &flat);
        Ok(KernelOperator::new(x, y, self.d.clone(), self.orthonormal)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::input(format!("invalid decomposition JSON: {e}")))
    }
}

pub fn read_operator(path: &Path) -> Result<KernelOperator, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Decomposition::from_json(&text)?.to_operator()
}

pub fn write_operator(op: &KernelOperator, path: &Path) -> Result<(), CliError> {
    let mut text = Decomposition::from_operator(op).to_json();
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Parses headerless CSV, one vector per row. All rows must have the same
/// width and at least one row is required.
pub fn parse_vectors(reader: impl Read) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(format!("CSV row {}: {e}", i + 1)))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| CliError::input(format!("CSV row {}: not a number: {f:?}", i + 1))))
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::input(format!("CSV row {} has {} values, expected {}", i + 1, row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input("CSV file contains no vectors"));
    }
    Ok(rows)
}

pub fn read_vectors(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_vectors(file)
}

/// Reads one weight per line (or per CSV field).
pub fn read_weights(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::input(format!("weights: {e}")))?;
        for f in rec.iter().filter(|f| !f.is_empty()) {
            out.push(f.parse::<f64>().map_err(|_| CliError::input(format!("weights: not a number: {f:?}")))?);
        }
    }
    Ok(out)
}
