//! Observation tables `O = (W, X, A, Y)` and their CSV form.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Borrowed view of one unit.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub w: &'a [f64],
    pub x: i64,
    pub a: u8,
    pub y: f64,
}

/// Factual data. Covariates are stored row-major, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    covariates: Vec<String>,
    w: Vec<f64>,
    x: Vec<i64>,
    a: Vec<u8>,
    y: Vec<f64>,
}

/// Oracle columns kept apart from the factual table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialOutcomes {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl ObservationTable {
    pub fn new(covariates: Vec<String>) -> Self {
        Self {
            covariates,
            w: Vec::new(),
            x: Vec::new(),
            a: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn with_capacity(covariates: Vec<String>, n: usize) -> Self {
        let p = covariates.len();
        Self {
            covariates,
            w: Vec::with_capacity(n * p),
            x: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, w: &[f64], x: i64, a: u8, y: f64) -> Result<()> {
        if w.len() != self.covariates.len() {
            return Err(Error::Data(format!(
                "expected {} covariates, got {}",
                self.covariates.len(),
                w.len()
            )));
        }
        if a > 1 {
            return Err(Error::Data(format!("exposure must be 0 or 1, got {a}")));
        }
        self.w.extend_from_slice(w);
        self.x.push(x);
        self.a.push(a);
        self.y.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariates
    }

    pub fn get(&self, i: usize) -> Observation<'_> {
        let p = self.covariates.len();
        Observation {
            w: &self.w[i * p..(i + 1) * p],
            x: self.x[i],
            a: self.a[i],
            y: self.y[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Observation<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn x(&self) -> &[i64] {
        &self.x
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Sorted distinct stratum labels.
    pub fn strata(&self) -> Vec<i64> {
        let mut s = self.x.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn stratum_indices(&self, stratum: i64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.x[i] == stratum).collect()
    }

    pub fn stratum_counts(&self) -> BTreeMap<i64, usize> {
        let mut m = BTreeMap::new();
        for &x in &self.x {
            *m.entry(x).or_insert(0) += 1;
        }
        m
    }

    /// New table holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.covariates.clone(), rows.len());
        for &i in rows {
            let o = self.get(i);
            out.w.extend_from_slice(o.w);
            out.x.push(o.x);
            out.a.push(o.a);
            out.y.push(o.y);
        }
        out
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_csv(f)
    }

    /// Reads `x`, `a`, `y` and every column whose name starts with `w` as a
    /// covariate. Other columns (for instance oracle `y0`, `y1`) are ignored.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (xi, ai, yi) = (find("x")?, find("a")?, find("y")?);
        let wcols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with('w'))
            .map(|(i, h)| (i, h.to_string()))
            .collect();
        let mut table = Self::new(wcols.iter().map(|(_, h)| h.clone()).collect());
        let mut w = vec![0.0; wcols.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let num = |i: usize| -> Result<f64> {
                let s = rec.get(i).unwrap_or("");
                s.parse::<f64>().map_err(|_| {
                    Error::Data(format!("row {row}, column `{}`: `{s}` is not a number", &headers[i]))
                })
            };
            for (slot, (ci, _)) in w.iter_mut().zip(&wcols) {
                *slot = num(*ci)?;
            }
            let x = num(xi)?;
            if x.fract() != 0.0 {
                return Err(Error::Data(format!("row {row}: stratum `{x}` is not an integer label")));
            }
            let a = match num(ai)? {
                v if v == 0.0 => 0,
                v if v == 1.0 => 1,
                v => return Err(Error::Data(format!("row {row}: exposure `{v}` is not binary"))),
            };
            let y = num(yi)?;
            if !y.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {row}: non-finite value")));
            }
            table.push(&w, x as i64, a, y)?;
        }
        Ok(table)
    }

    /// Writes `w...,x,a,y`, then `y0,y1` when oracle columns are given.
    pub fn write_csv<W: Write>(&self, writer: W, oracle: Option<&PotentialOutcomes>) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.covariates.iter().map(String::as_str).collect();
        header.extend(["x", "a", "y"]);
        if oracle.is_some() {
            header.extend(["y0", "y1"]);
        }
        wtr.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            let o = self.get(i);
            rec.clear();
            rec.extend(o.w.iter().map(|v| fmt_f64(*v)));
            rec.push(o.x.to_string());
            rec.push(o.a.to_string());
            rec.push(fmt_f64(o.y));
            if let Some(po) = oracle {
                rec.push(fmt_f64(po.y0[i]));
                rec.push(fmt_f64(po.y1[i]));
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
