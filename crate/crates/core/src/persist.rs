//! Versioned plain-text model documents.
//!
//! One `key value...` record per line; reals use 17 significant digits so a
//! saved model predicts bitwise-identically after loading.
//!
//! ```text
//! salsa-model
//! format_version 1
//! d 2
//! lambda 1.0000000000000000e-3
//! c 2.0000000000000000e1
//! variant exact
//! sigma_y 1.0000000000000000e0
//! jitter 0.0000000000000000e0
//! train_mse ...
//! bandwidths <p> h_1 ... h_p
//! norm_means <p> ...
//! norm_sds <p> ...
//! y_mean ...
//! y_sd ...
//! alpha <n> a_1 ... a_n
//! x_train <n> <p>
//! <row 1>
//! ...
//! ```

use std::fs;
use std::path::Path;

use crate::data::{fmt_real, NormalizationStats};
use crate::error::{Error, Result};
use crate::kernels::{EspKernelSpec, KernelVariant};
use crate::linalg::DenseMatrix;
use crate::salsa::FittedSalsa;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "salsa-model";

fn join_reals(values: &[f64]) -> String {
    values.iter().map(|v| fmt_real(*v)).collect::<Vec<_>>().join(" ")
}

/// Renders a fitted model as a model document.
pub fn to_document(model: &FittedSalsa) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        s.push_str(k);
        if !v.is_empty() {
            s.push(' ');
            s.push_str(&v);
        }
        s.push('\n');
    };
    let p = model.dim();
    line(MAGIC, String::new());
    line("format_version", FORMAT_VERSION.to_string());
    line("d", model.order().to_string());
    line("lambda", fmt_real(model.lambda));
    line("c", fmt_real(model.bandwidth_multiplier));
    line("variant", model.spec.variant().name().to_string());
    line("sigma_y", fmt_real(model.spec.scale()));
    line("jitter", fmt_real(model.jitter));
    line("train_mse", fmt_real(model.train_mse));
    line("bandwidths", format!("{p} {}", join_reals(model.spec.bandwidths())));
    let nm = &model.normalization;
    line("norm_means", format!("{p} {}", join_reals(&nm.means)));
    line("norm_sds", format!("{p} {}", join_reals(&nm.sds)));
    line("y_mean", fmt_real(nm.y_mean));
    line("y_sd", fmt_real(nm.y_sd));
    line("alpha", format!("{} {}", model.alpha.len(), join_reals(&model.alpha)));
    let x = &model.x_train;
    line("x_train", format!("{} {}", x.rows(), x.cols()));
    for i in 0..x.rows() {
        line(&join_reals(x.row(i)), String::new());
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.inner.next() {
                Some((i, l)) if l.trim().is_empty() => {
                    let _ = i;
                    continue;
                }
                Some((i, l)) => return Ok((i + 1, l.trim())),
                None => return Err(Error::UnsupportedFormat("truncated model document".into())),
            }
        }
    }

    /// Reads `key rest...` and checks the key.
    fn field(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (row, l) = self.next_line()?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok((row, parts.collect())),
            other => Err(Error::UnsupportedFormat(format!(
                "line {row}: expected `{key}`, found `{}`",
                other.unwrap_or("")
            ))),
        }
    }

    fn real(&mut self, key: &str) -> Result<f64> {
        let (row, v) = self.field(key)?;
        if v.len() != 1 {
            return Err(bad(row, key, "expected one value"));
        }
        parse_real(row, key, v[0])
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let (row, v) = self.field(key)?;
        if v.len() != 1 {
            return Err(bad(row, key, "expected one value"));
        }
        v[0].parse().map_err(|_| bad(row, key, "expected an integer"))
    }

    fn vector(&mut self, key: &str) -> Result<Vec<f64>> {
        let (row, v) = self.field(key)?;
        let (len, rest) = v.split_first().ok_or_else(|| bad(row, key, "missing length"))?;
        let len: usize = len.parse().map_err(|_| bad(row, key, "bad length"))?;
        if rest.len() != len {
            return Err(bad(row, key, &format!("declared {len} values, found {}", rest.len())));
        }
        rest.iter().map(|t| parse_real(row, key, t)).collect()
    }
}

fn bad(row: usize, key: &str, msg: &str) -> Error {
    Error::ParseError {
        row,
        col: 0,
        msg: format!("{key}: {msg}"),
    }
}

fn parse_real(row: usize, key: &str, t: &str) -> Result<f64> {
    let v: f64 = t.parse().map_err(|_| bad(row, key, &format!("not a number: {t}")))?;
    if !v.is_finite() {
        return Err(bad(row, key, "non-finite value"));
    }
    Ok(v)
}

/// Parses a model document.
pub fn from_document(text: &str) -> Result<FittedSalsa> {
    let mut r = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, magic) = r.next_line()?;
    if magic != MAGIC {
        return Err(Error::UnsupportedFormat("not a model document".into()));
    }
    let version = r.usize("format_version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::UnsupportedFormat(format!("model format version {version}")));
    }
    let order = r.usize("d")?;
    let lambda = r.real("lambda")?;
    let c = r.real("c")?;
    let (row, v) = r.field("variant")?;
    let variant = v
        .first()
        .and_then(|s| KernelVariant::parse(s))
        .ok_or_else(|| bad(row, "variant", "unknown kernel variant"))?;
    let scale = r.real("sigma_y")?;
    let jitter = r.real("jitter")?;
    let train_mse = r.real("train_mse")?;
    let bandwidths = r.vector("bandwidths")?;
    let means = r.vector("norm_means")?;
    let sds = r.vector("norm_sds")?;
    let y_mean = r.real("y_mean")?;
    let y_sd = r.real("y_sd")?;
    let alpha = r.vector("alpha")?;
    let (row, dims) = r.field("x_train")?;
    if dims.len() != 2 {
        return Err(bad(row, "x_train", "expected rows and cols"));
    }
    let rows: usize = dims[0].parse().map_err(|_| bad(row, "x_train", "bad rows"))?;
    let cols: usize = dims[1].parse().map_err(|_| bad(row, "x_train", "bad cols"))?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (row, l) = r.next_line()?;
        let before = data.len();
        for t in l.split_whitespace() {
            data.push(parse_real(row, "x_train", t)?);
        }
        if data.len() - before != cols {
            return Err(bad(row, "x_train", "row length mismatch"));
        }
    }
    if alpha.len() != rows || means.len() != cols || sds.len() != cols {
        return Err(Error::UnsupportedFormat("inconsistent model dimensions".into()));
    }
    let spec = EspKernelSpec::new(order, bandwidths, scale, variant)?;
    if spec.dim() != cols {
        return Err(Error::DimensionMismatch {
            expected: cols,
            got: spec.dim(),
        });
    }
    Ok(FittedSalsa {
        alpha,
        x_train: DenseMatrix::new(rows, cols, data)?,
        spec,
        lambda,
        bandwidth_multiplier: c,
        normalization: NormalizationStats {
            means,
            sds,
            y_mean,
            y_sd,
        },
        jitter,
        train_mse,
    })
}

pub fn save_model(model: &FittedSalsa, path: &Path) -> Result<()> {
    fs::write(path, to_document(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FittedSalsa> {
    from_document(&fs::read_to_string(path)?)
}
