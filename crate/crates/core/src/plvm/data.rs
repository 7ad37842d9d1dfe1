use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Matrix, PlvmModel};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// N observations of dimension D with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    // row-major N×D
    values: Vec<f64>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Io(io::Error::new(io::ErrorKind::InvalidData, msg.into()))
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::input("dataset needs at least one column"));
        }
        if rows.is_empty() {
            return Err(Error::input("dataset needs at least one row"));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::input(format!("row {i} has {} values, expected {d}", rows[i].len())));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("dataset entries must be finite"));
        }
        Ok(Self { columns, values })
    }

    /// Columns named `x0, x1, ...`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        Self::new((0..d).map(|j| format!("x{j}")).collect(), rows)
    }

    /// CSV with a header row and numeric fields. Malformed or empty input is
    /// reported as an I/O error.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let columns: Vec<String> = reader
            .headers()
            .map_err(io::Error::from)?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(invalid("data file has no header"));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(io::Error::from)?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| invalid(format!("data row {}: {e}", i + 1)))?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(invalid("data file has no rows"));
        }
        Self::new(columns, rows).map_err(|e| invalid(e.to_string()))
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(io::BufReader::new(f))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        w.write_record(&self.columns).map_err(io::Error::from)?;
        for n in 0..self.len() {
            w.write_record(self.row(n).iter().map(f64::to_string)).map_err(io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let d = self.dim();
        &self.values[n * d..(n + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|n| self.row(n)[j]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.column(j).iter().sum::<f64>() / self.len() as f64)
            .collect()
    }

    /// First `n` rows and the rest.
    pub fn split(&self, n: usize) -> Result<(Self, Self)> {
        if n == 0 || n >= self.len() {
            return Err(Error::input(format!("cannot split {} rows at {n}", self.len())));
        }
        let d = self.dim();
        let (a, b) = self.values.split_at(n * d);
        Ok((
            Self {
                columns: self.columns.clone(),
                values: a.to_vec(),
            },
            Self {
                columns: self.columns.clone(),
                values: b.to_vec(),
            },
        ))
    }
}

/// Synthetic data: z* ~ N(0, I), x = decode*(z*) + noise·N(0, I).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// `linear` or `mlp`.
    pub decoder: String,
    pub n: usize,
    pub d_obs: usize,
    pub d_lv: usize,
    /// Hidden width for the MLP generator.
    pub hidden: usize,
    /// Observation noise standard deviation; 0 gives noiseless data.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            decoder: "linear".into(),
            n: 200,
            d_obs: 5,
            d_lv: 2,
            hidden: 16,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// The generating model, stored next to results for oracle checks. For
/// noiseless data the model's σ is a placeholder of 1; `spec.noise` is the
/// actual noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub spec: SyntheticSpec,
    pub truth: PlvmModel,
}

pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, Generator)> {
    if spec.n == 0 || spec.d_obs == 0 || spec.d_lv == 0 {
        return Err(Error::config("synthetic n, d_obs and d_lv must be positive"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::config(format!("noise must be >= 0, got {}", spec.noise)));
    }
    let mut rng = Rng::new(spec.seed);
    let sigma = if spec.noise > 0.0 { spec.noise } else { 1.0 };
    let bias: Vec<f64> = (0..spec.d_obs).map(|_| rng.normal()).collect();
    let truth = match spec.decoder.as_str() {
        "linear" => PlvmModel::linear(Matrix::random(spec.d_obs, spec.d_lv, 1.0, &mut rng), bias, sigma)?,
        "mlp" => {
            if spec.hidden == 0 {
                return Err(Error::config("MLP generator needs hidden width >= 1"));
            }
            let w1 = Matrix::random(spec.hidden, spec.d_lv, 1.0, &mut rng);
            let b1 = (0..spec.hidden).map(|_| 0.5 * rng.normal()).collect();
            let w2 = Matrix::random(spec.d_obs, spec.hidden, 1.0 / (spec.hidden as f64).sqrt(), &mut rng);
            PlvmModel::mlp(w1, b1, w2, bias, sigma)?
        }
        other => {
            return Err(Error::config(format!("unknown decoder `{other}`; available: linear, mlp")))
        }
    };
    let rows = (0..spec.n)
        .map(|_| {
            let z: Vec<f64> = (0..spec.d_lv).map(|_| rng.normal()).collect();
            truth
                .decode(&z)
                .into_iter()
                .map(|y| y + spec.noise * rng.normal())
                .collect()
        })
        .collect();
    let data = Dataset::from_rows(rows)?;
    Ok((
        data,
        Generator {
            spec: spec.clone(),
            truth,
        },
    ))
}
