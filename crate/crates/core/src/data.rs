//! Tabular datasets: CSV ingestion and export, normalization statistics and
//! seeded train/test splits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

use crate::error::{check_dim, Error, Result};
use crate::linalg::DenseMatrix;

/// Floor applied to the target standard deviation.
pub const TARGET_SD_FLOOR: f64 = 1e-12;

/// Formats a real with 17 significant digits so it parses back bit-exactly.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Feature matrix plus target vector with column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub source: String,
}

impl TabularDataset {
    pub fn new(
        x: DenseMatrix,
        y: Vec<f64>,
        feature_names: Vec<String>,
        target_name: String,
        source: String,
    ) -> Result<Self> {
        check_dim(x.rows(), y.len())?;
        check_dim(x.cols(), feature_names.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target"));
        }
        let mut names: Vec<&String> = feature_names.iter().chain([&target_name]).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("column names must be unique".into()));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            target_name,
            source,
        })
    }

    /// Dataset with generated names `x0..x{D-1}` and target `y`.
    pub fn unnamed(x: DenseMatrix, y: Vec<f64>, source: &str) -> Result<Self> {
        let names = (0..x.cols()).map(|i| format!("x{i}")).collect();
        Self::new(x, y, names, "y".into(), source.into())
    }

    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            source: self.source.clone(),
        }
    }
}

/// How the target column is identified.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
    Last,
}

impl TargetColumn {
    /// A header name, or a 0-based index when the string parses as an integer
    /// and no column carries that name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub target: TargetColumn,
    pub delimiter: u8,
    /// Drop rows with unparsable cells instead of failing.
    pub drop_invalid: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            target: TargetColumn::Last,
            delimiter: b',',
            drop_invalid: false,
        }
    }
}

/// Result of a CSV load; `dropped_rows` is only non-empty with `drop_invalid`.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: TabularDataset,
    pub dropped_rows: Vec<usize>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn reader_for(path: &Path, delimiter: u8, has_headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(has_headers)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Loads a headered CSV; every non-target column becomes a numeric feature.
/// Row numbers in errors count data rows from 1; columns count from 1.
pub fn load_csv(path: &Path, opts: &LoadOptions) -> Result<Loaded> {
    let mut rdr = reader_for(path, opts.delimiter, true)?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyFile);
    }
    let target_idx = match &opts.target {
        TargetColumn::Last => headers.len() - 1,
        TargetColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingTarget(name.clone()))?,
        TargetColumn::Index(i) => {
            if let Some(p) = headers.iter().position(|h| *h == i.to_string()) {
                p
            } else if *i < headers.len() {
                *i
            } else {
                return Err(Error::MissingTarget(i.to_string()));
            }
        }
    };
    let width = headers.len();
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut dropped = Vec::new();
    let mut row_values = Vec::with_capacity(width);
    for (r, rec) in rdr.records().enumerate() {
        let row_no = r + 1;
        let rec = rec.map_err(csv_err)?;
        row_values.clear();
        let mut bad: Option<Error> = None;
        if rec.len() != width {
            bad = Some(Error::ParseError {
                row: row_no,
                col: rec.len().min(width) + 1,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        } else {
            for (c, cell) in rec.iter().enumerate() {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => row_values.push(v),
                    _ => {
                        bad = Some(Error::ParseError {
                            row: row_no,
                            col: c + 1,
                            msg: format!("cannot parse {cell:?} in column {:?}", headers[c]),
                        });
                        break;
                    }
                }
            }
        }
        if let Some(e) = bad {
            if opts.drop_invalid {
                dropped.push(row_no);
                continue;
            }
            return Err(e);
        }
        for (c, &v) in row_values.iter().enumerate() {
            if c == target_idx {
                y.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyFile);
    }
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let x = DenseMatrix::new(y.len(), width - 1, data)?;
    let dataset = TabularDataset::new(
        x,
        y,
        feature_names,
        headers[target_idx].clone(),
        path.display().to_string(),
    )?;
    Ok(Loaded {
        dataset,
        dropped_rows: dropped,
    })
}

/// Loads a headered all-numeric CSV as a matrix (used for prediction inputs).
pub fn load_matrix_csv(path: &Path, delimiter: u8) -> Result<(Vec<String>, DenseMatrix)> {
    let mut rdr = reader_for(path, delimiter, true)?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let width = headers.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != width {
            return Err(Error::ParseError {
                row: r + 1,
                col: rec.len().min(width) + 1,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::ParseError {
                row: r + 1,
                col: c + 1,
                msg: format!("cannot parse {cell:?}"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok((headers, DenseMatrix::new(rows, width, data)?))
}

/// Writes a CSV with optional `# meta:` comment lines, a header and rows.
pub fn write_table<W: Write>(
    out: &mut W,
    meta: &[(String, String)],
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    if !meta.is_empty() {
        let fields: Vec<String> = meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(out, "# meta: {}", fields.join(" "))?;
    }
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    Ok(())
}

/// Saves features followed by the target column, 17 significant digits.
pub fn save_csv(ds: &TabularDataset, path: &Path, meta: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = ds.feature_names.clone();
    header.push(ds.target_name.clone());
    let rows = (0..ds.n_rows()).map(|i| {
        let mut r: Vec<String> = ds.x.row(i).iter().map(|&v| fmt_real(v)).collect();
        r.push(fmt_real(ds.y[i]));
        r
    });
    write_table(&mut w, meta, &header, rows)?;
    w.flush()?;
    Ok(())
}

/// Seeded shuffle, then the first `⌈fraction·n⌉` rows go to train.
pub fn train_test_split(
    ds: &TabularDataset,
    fraction: f64,
    seed: u64,
) -> Result<(TabularDataset, TabularDataset)> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must be in (0,1), got {fraction}"
        )));
    }
    let (train, test) = split_indices(n, fraction, seed);
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

/// Index form of [`train_test_split`].
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut SplitMix64::seed_from_u64(seed));
    let n_train = ((fraction * n as f64).ceil() as usize).clamp(1, n.saturating_sub(1).max(1));
    let test = idx.split_off(n_train);
    (idx, test)
}

/// Per-column means and population (1/n) standard deviations of the
/// features, plus target mean and sd (floored at [`TARGET_SD_FLOOR`]).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
}

/// Mean and population standard deviation.
pub fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Column means and population standard deviations of a matrix.
pub fn column_stats(x: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    (0..x.cols())
        .map(|j| mean_sd((0..x.rows()).map(move |i| x[(i, j)])))
        .unzip()
}

/// Columns whose spread is zero up to rounding.
pub(crate) fn degenerate_columns(means: &[f64], sds: &[f64]) -> Vec<usize> {
    sds.iter()
        .zip(means)
        .enumerate()
        .filter(|(_, (sd, m))| **sd <= 1e-12 * (1.0 + m.abs()))
        .map(|(j, _)| j)
        .collect()
}

impl NormalizationStats {
    pub fn from_data(x: &DenseMatrix, y: &[f64]) -> Result<Self> {
        check_dim(x.rows(), y.len())?;
        if x.rows() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: x.rows(),
            });
        }
        let (means, sds) = column_stats(x);
        let bad = degenerate_columns(&means, &sds);
        if !bad.is_empty() {
            return Err(Error::DegenerateColumn(bad));
        }
        let (y_mean, y_sd) = mean_sd(y.iter().copied());
        Ok(Self {
            means,
            sds,
            y_mean,
            y_sd: y_sd.max(TARGET_SD_FLOOR),
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn normalize_x(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.dim(), x.cols())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.means).zip(&self.sds) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn denormalize_x(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.dim(), x.cols())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.means).zip(&self.sds) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    pub fn normalize_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.y_mean) / self.y_sd).collect()
    }

    pub fn denormalize_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.y_sd + self.y_mean).collect()
    }
}

/// Normalization statistics of a dataset.
pub fn normalization_stats(ds: &TabularDataset) -> Result<NormalizationStats> {
    NormalizationStats::from_data(&ds.x, &ds.y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn load_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "a.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let ds = load_csv(&p, &LoadOptions::default()).unwrap().dataset;
        assert_eq!((ds.n_rows(), ds.n_features()), (3, 2));
        assert_eq!(ds.y, vec![3.0, 6.0, 9.0]);
        assert_eq!(ds.x.row(1), &[4.0, 5.0]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn target_by_name_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "a.csv", "y;a;b\n1;2;3\n4;5;6\n");
        let opts = LoadOptions {
            target: TargetColumn::Name("y".into()),
            delimiter: b';',
            ..Default::default()
        };
        let ds = load_csv(&p, &opts).unwrap().dataset;
        assert_eq!(ds.y, vec![1.0, 4.0]);
        let opts = LoadOptions {
            target: TargetColumn::Index(1),
            delimiter: b';',
            ..Default::default()
        };
        let ds = load_csv(&p, &opts).unwrap().dataset;
        assert_eq!(ds.y, vec![2.0, 5.0]);
        let opts = LoadOptions {
            target: TargetColumn::Name("z".into()),
            delimiter: b';',
            ..Default::default()
        };
        assert!(matches!(load_csv(&p, &opts), Err(Error::MissingTarget(_))));
    }

    #[test]
    fn blank_cell_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "a.csv", "a,b,y\n1,2,3\n4,,6\n");
        match load_csv(&p, &LoadOptions::default()) {
            Err(Error::ParseError { row, col, .. }) => assert_eq!((row, col), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let opts = LoadOptions {
            drop_invalid: true,
            ..Default::default()
        };
        let loaded = load_csv(&p, &opts).unwrap();
        assert_eq!(loaded.dropped_rows, vec![2]);
        assert_eq!(loaded.dataset.n_rows(), 1);
    }

    #[test]
    fn empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "a.csv", "");
        assert!(matches!(load_csv(&p, &LoadOptions::default()), Err(Error::EmptyFile)));
        let p = write_file(&dir, "b.csv", "a,y\n");
        assert!(matches!(load_csv(&p, &LoadOptions::default()), Err(Error::EmptyFile)));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let x = DenseMatrix::new(3, 2, vec![0.1, 1.0 / 3.0, -2.5e-300, 7.0, 1e17, -0.0]).unwrap();
        let ds = TabularDataset::unnamed(x, vec![std::f64::consts::PI, 2.0 / 7.0, -1e-5], "t").unwrap();
        let p = dir.path().join("rt.csv");
        save_csv(&ds, &p, &[("seed".into(), "1".into())]).unwrap();
        let back = load_csv(&p, &LoadOptions::default()).unwrap().dataset;
        assert_eq!(back.x, ds.x);
        assert_eq!(back.y, ds.y);
    }

    #[test]
    fn split_sizes_and_partition() {
        let x = DenseMatrix::new(10, 1, (0..10).map(f64::from).collect()).unwrap();
        let ds = TabularDataset::unnamed(x, (0..10).map(f64::from).collect(), "t").unwrap();
        let (a, b) = train_test_split(&ds, 0.5, 3).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (5, 5));
        let (a2, _) = train_test_split(&ds, 0.5, 3).unwrap();
        assert_eq!(a, a2);
        let (tr, te) = split_indices(10, 0.5, 3);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let one = ds.select_rows(&[0]);
        assert!(matches!(
            train_test_split(&one, 0.5, 1),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn normalization_cases() {
        let x = DenseMatrix::new(2, 1, vec![1.0, -1.0]).unwrap();
        let st = NormalizationStats::from_data(&x, &[0.0, 1.0]).unwrap();
        assert_eq!((st.means[0], st.sds[0]), (0.0, 1.0));
        let c = DenseMatrix::new(2, 2, vec![5.0, 1.0, 5.0, 2.0]).unwrap();
        assert_eq!(
            NormalizationStats::from_data(&c, &[0.0, 1.0]),
            Err(Error::DegenerateColumn(vec![0]))
        );
    }

    #[test]
    fn self_normalization() {
        let data: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64).sin() * 3.0 + 2.0).collect();
        let x = DenseMatrix::new(20, 2, data).unwrap();
        let y: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let st = NormalizationStats::from_data(&x, &y).unwrap();
        let z = st.normalize_x(&x).unwrap();
        let (m, s) = column_stats(&z);
        for j in 0..2 {
            assert!(m[j].abs() <= 1e-12 && (s[j] - 1.0).abs() <= 1e-12);
        }
        let back = st.denormalize_x(&z).unwrap();
        assert!(back.sub(&x).unwrap().max_abs() <= 1e-12);
        let yb = st.denormalize_y(&st.normalize_y(&y));
        assert!(yb.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 1e-12));
    }
}
