//! Plain-text tables and ensemble checkpoints.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), which
//! round-trips every `f64` exactly, so identical runs give identical bytes.
//!
//! Ensemble files have one row per mode per state:
//!
//! ```text
//! state,n,re_u,im_u,re_v,im_v,log_weight
//! ```
//!
//! `log_weight` repeats on every row of its state. The coupling is not
//! stored; the reader supplies it.

use std::io::{Read, Write};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::nonlinearity::Coupling;
use crate::sampling::GibbsEnsemble;
use crate::scalar::Scalar;
use crate::spectral::{FourierField, PairField};

pub const ENSEMBLE_HEADER: [&str; 7] = ["state", "n", "re_u", "im_u", "re_v", "im_v", "log_weight"];

/// Formats a number the way every table in this crate does.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse {
            line: p.line(),
            message: e.to_string(),
        },
        None => Error::Io(e.to_string()),
    }
}

/// Named numeric columns with rows of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(Error::InvalidParameter {
                name: "row",
                reason: format!("{} values for {} columns", row.len(), self.headers.len()),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.headers).map_err(csv_err)?;
        for r in &self.rows {
            out.write_record(r.iter().map(|&x| fmt_num(x))).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
        let mut table = Self { headers, rows: Vec::new() };
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            let row = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        message: format!("{s:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }
}

pub fn write_ensemble<T: Scalar, W: Write>(ens: &GibbsEnsemble<T>, w: W) -> Result<()> {
    let mut t = Table::new(ENSEMBLE_HEADER);
    for (i, (p, lw)) in ens.states.iter().zip(&ens.log_weights).enumerate() {
        for n in 0..=p.max_mode() {
            let (u, v) = (p.u.coeff(n), p.v.coeff(n));
            t.rows.push(vec![
                i as f64,
                n as f64,
                u.re.as_f64(),
                u.im.as_f64(),
                v.re.as_f64(),
                v.im.as_f64(),
                lw.as_f64(),
            ]);
        }
    }
    t.write_csv(w)
}

pub fn read_ensemble<T: Scalar, R: Read>(r: R, coupling: Coupling<T>) -> Result<GibbsEnsemble<T>> {
    let t = Table::read_csv(r)?;
    if t.headers != ENSEMBLE_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", ENSEMBLE_HEADER.join(",")),
        });
    }
    let mut states = Vec::new();
    let mut log_weights = Vec::new();
    let (mut u, mut v) = (Vec::new(), Vec::new());
    let flush = |u: &mut Vec<Complex<T>>, v: &mut Vec<Complex<T>>, states: &mut Vec<PairField<T>>| -> Result<()> {
        if !u.is_empty() {
            let p = PairField::new(
                FourierField::from_coeffs(std::mem::take(u))?,
                FourierField::from_coeffs(std::mem::take(v))?,
            )?;
            states.push(p);
        }
        Ok(())
    };
    for (k, row) in t.rows.iter().enumerate() {
        let line = k as u64 + 2;
        let (state, n) = (row[0], row[1]);
        if n == 0.0 {
            flush(&mut u, &mut v, &mut states)?;
            if state != states.len() as f64 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected state {}, found {state}", states.len()),
                });
            }
            log_weights.push(T::lit(row[6]));
        } else if n != u.len() as f64 || state + 1.0 != log_weights.len() as f64 {
            return Err(Error::Parse {
                line,
                message: format!("mode {n} of state {state} is out of order"),
            });
        }
        u.push(Complex::new(T::lit(row[2]), T::lit(row[3])));
        v.push(Complex::new(T::lit(row[4]), T::lit(row[5])));
    }
    flush(&mut u, &mut v, &mut states)?;
    GibbsEnsemble::new(states, log_weights, coupling)
}
