//! Observations `(Y, A, X)` and their CSV form.

use crate::error::{Error, Result};
use std::io::Read;

/// `n` observations of outcome `y`, treatment `a` and covariates `x` (row-major, `dim` per row).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    y: Vec<f64>,
    a: Vec<f64>,
    x: Vec<f64>,
    dim: usize,
}

impl Sample {
    pub fn new(y: Vec<f64>, a: Vec<f64>, x: Vec<f64>, dim: usize) -> Result<Self> {
        let n = y.len();
        if a.len() != n || x.len() != n * dim {
            return Err(Error::InvalidParameter(format!(
                "inconsistent sample sizes: y={}, a={}, x={} (dim {dim})",
                n,
                a.len(),
                x.len()
            )));
        }
        Ok(Self { y, a, x, dim })
    }

    /// Convenience constructor for a single covariate.
    pub fn univariate(y: Vec<f64>, a: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        Self::new(y, a, x, 1)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn x_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks(self.dim.max(1)).take(self.len())
    }

    pub fn subset(&self, idx: &[usize]) -> Sample {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(self.x(i));
        }
        Sample {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            a: idx.iter().map(|&i| self.a[i]).collect(),
            x,
            dim: self.dim,
        }
    }

    /// `[min, max]` of each covariate.
    pub fn covariate_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|j| {
                self.x_rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[j]), hi.max(r[j]))
                })
            })
            .collect()
    }

    pub fn treatment_range(&self) -> (f64, f64) {
        self.a
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Reads a CSV whose header is exactly `y,a,x1,...,xd`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        let fields: Vec<&str> = header.iter().collect();
        let dim = fields.len().saturating_sub(2);
        let expected: Vec<String> = ["y".to_string(), "a".to_string()]
            .into_iter()
            .chain((1..=dim).map(|j| format!("x{j}")))
            .collect();
        if dim == 0 || fields != expected {
            return Err(Error::MalformedInput {
                line: 1,
                message: format!("header must be y,a,x1,...,xd; got '{}'", fields.join(",")),
            });
        }
        let (mut y, mut a, mut x) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::MalformedInput {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != dim + 2 {
                return Err(Error::MalformedInput {
                    line,
                    message: format!("expected {} fields, found {}", dim + 2, rec.len()),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::MalformedInput {
                    line,
                    message: format!("field {} ('{field}') is not a number", j + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::MalformedInput {
                        line,
                        message: format!("field {} is not finite", j + 1),
                    });
                }
                match j {
                    0 => y.push(v),
                    1 => a.push(v),
                    _ => x.push(v),
                }
            }
        }
        Sample::new(y, a, x, dim)
    }

    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string(), "a".to_string()];
        header.extend((1..=self.dim).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![format!("{}", self.y[i]), format!("{}", self.a[i])];
            row.extend(self.x(i).iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
