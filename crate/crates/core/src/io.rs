//! CSV ingestion and output of compositional datasets.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coda::{closure, replace_zeros, Composition};
use crate::data::Dataset;
use crate::error::{LndmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroPolicy {
    /// Any non-positive category value is an error.
    #[default]
    Reject,
    /// Zeros are replaced multiplicatively by `epsilon` before closure.
    Replace,
}

fn default_epsilon() -> f64 {
    1e-6
}

fn default_true() -> bool {
    true
}

/// Column mapping of an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub categories: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Names of the x and y coordinate columns.
    #[serde(default)]
    pub coords: Option<[String; 2]>,
    #[serde(default)]
    pub zero_policy: ZeroPolicy,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Centre and scale the covariates to mean 0, sd 1.
    #[serde(default = "default_true")]
    pub standardize: bool,
}

impl CsvSchema {
    pub fn new(categories: Vec<String>, covariates: Vec<String>, coords: Option<[String; 2]>) -> Self {
        Self {
            categories,
            covariates,
            coords,
            zero_policy: ZeroPolicy::Reject,
            epsilon: default_epsilon(),
            standardize: true,
        }
    }
}

/// Parsed numeric table: header and rows.
struct Table {
    header: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .get(name)
            .copied()
            .ok_or_else(|| LndmError::Data(format!("missing column '{name}'")))
    }

    fn value(&self, row: usize, col: usize, name: &str) -> Result<f64> {
        let cell = self.rows[row].get(col).unwrap_or("");
        cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
            LndmError::Data(format!("row {}: column '{name}' holds non-numeric value '{cell}'", row + 1))
        })
    }

    fn numeric(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let cols: Vec<usize> = names.iter().map(|c| self.column(c)).collect::<Result<_>>()?;
        let mut m = DMatrix::zeros(self.rows.len(), cols.len());
        for i in 0..self.rows.len() {
            for (j, c) in cols.iter().enumerate() {
                m[(i, j)] = self.value(i, *c, &names[j])?;
            }
        }
        Ok(m)
    }

    fn coords(&self, names: &[String; 2]) -> Result<Vec<[f64; 2]>> {
        let m = self.numeric(&[names[0].clone(), names[1].clone()])?;
        Ok((0..m.nrows()).map(|i| [m[(i, 0)], m[(i, 1)]]).collect())
    }
}

fn compositions(raw: &DMatrix<f64>, schema: &CsvSchema) -> Result<Vec<Composition>> {
    let mut replaced = 0;
    let rows = (0..raw.nrows())
        .map(|i| {
            let v: Vec<f64> = raw.row(i).iter().copied().collect();
            let c = match schema.zero_policy {
                ZeroPolicy::Reject => closure(&v),
                ZeroPolicy::Replace => replace_zeros(&v, schema.epsilon).map(|(c, z)| {
                    replaced += usize::from(z);
                    c
                }),
            };
            c.map_err(|e| LndmError::Data(format!("row {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    if replaced > 0 {
        log::info!("replaced zeros in {replaced} rows");
    }
    Ok(rows)
}

/// Reads a dataset from CSV text in `reader`.
pub fn read_dataset_from<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    if schema.categories.len() < 2 {
        return Err(LndmError::Data("at least two category columns are needed".into()));
    }
    let table = Table::read(reader)?;
    if table.rows.is_empty() {
        return Err(LndmError::InsufficientData("input has no data rows".into()));
    }
    let comps = compositions(&table.numeric(&schema.categories)?, schema)?;
    let covariates = table.numeric(&schema.covariates)?;
    let coords = schema.coords.as_ref().map(|c| table.coords(c)).transpose()?;
    let mut data = Dataset::new(
        schema.categories.clone(),
        comps,
        schema.covariates.clone(),
        covariates,
        coords,
    )?;
    if schema.standardize {
        data.standardize()?;
    }
    Ok(data)
}

pub fn read_dataset(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let f = std::fs::File::open(path)
        .map_err(|e| LndmError::Data(format!("cannot open '{}': {e}", path.display())))?;
    read_dataset_from(f, schema)
}

/// Covariates (raw scale) and optional coordinates of rows to predict.
pub fn read_new_rows(path: &Path, covariates: &[String], coords: Option<&[String; 2]>) -> Result<crate::predict::NewData> {
    let f = std::fs::File::open(path)
        .map_err(|e| LndmError::Data(format!("cannot open '{}': {e}", path.display())))?;
    let table = Table::read(f)?;
    Ok(crate::predict::NewData {
        covariate_names: covariates.to_vec(),
        covariates: table.numeric(covariates)?,
        coords: coords.map(|c| table.coords(c)).transpose()?,
    })
}

/// Writes compositions, covariates (unstandardised when statistics are
/// stored) and coordinates as `x`, `y`, with an optional `alr_*` block.
pub fn write_dataset_to<W: Write>(writer: W, data: &Dataset, alr: Option<(&[String], &[Vec<f64>])>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = data.category_names.clone();
    header.extend(data.covariate_names.iter().cloned());
    if data.coords.is_some() {
        header.extend(["x".to_string(), "y".to_string()]);
    }
    if let Some((names, _)) = alr {
        header.extend(names.iter().map(|n| format!("alr_{n}")));
    }
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.compositions[i].values().iter().map(|v| v.to_string()).collect();
        for j in 0..data.covariate_names.len() {
            let v = data.covariates[(i, j)];
            let raw = match &data.standardization {
                Some(s) => v * s[j].sd + s[j].mean,
                None => v,
            };
            rec.push(raw.to_string());
        }
        if let Some(xy) = &data.coords {
            rec.extend([xy[i][0].to_string(), xy[i][1].to_string()]);
        }
        if let Some((_, rows)) = alr {
            rec.extend(rows[i].iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, data: &Dataset, alr: Option<(&[String], &[Vec<f64>])>) -> Result<()> {
    write_dataset_to(std::fs::File::create(path)?, data, alr)
}
