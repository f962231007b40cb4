//! Tabular observations `(Y, A, X)`, CSV I/O, and seeded row partitioning.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sim::rng_from_seed;

/// Outcome `y`, treatment `a` and covariates `x` (one row per observation).
///
/// All entries are finite. Values are immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<f64>,
    x: Matrix,
}

impl Dataset {
    pub fn new(y: Vec<f64>, a: Vec<f64>, x: Matrix) -> Result<Self> {
        let n = y.len();
        if a.len() != n || x.rows() != n {
            return Err(Error::InvalidData(format!(
                "length mismatch: y has {n} rows, a has {}, x has {}",
                a.len(),
                x.rows()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite outcome at row {i}")));
        }
        if let Some(i) = a.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite treatment at row {i}")));
        }
        if let Some(k) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite covariate at row {}",
                k / x.cols().max(1)
            )));
        }
        Ok(Self { y, a, x })
    }

    /// Convenience constructor for a single covariate.
    pub fn from_columns(y: Vec<f64>, a: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        Self::new(y, a, Matrix::column(x))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    /// True when every treatment value is exactly 0 or 1.
    pub fn has_binary_treatment(&self) -> bool {
        self.a.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            y: indices.iter().map(|&i| self.y[i]).collect(),
            a: indices.iter().map(|&i| self.a[i]).collect(),
            x: self.x.select_rows(indices),
        }
    }

    /// Same rows with the outcome replaced.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(y, self.a.clone(), self.x.clone())
    }
}

/// Column names used to read a CSV file into a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
}

impl CsvSchema {
    /// `y`, `a`, `x1..xd`: the header written by [`save_csv`].
    pub fn standard(d: usize) -> Self {
        Self {
            outcome: "y".into(),
            treatment: "a".into(),
            covariates: (1..=d).map(|j| format!("x{j}")).collect(),
        }
    }
}

/// Reads a header-first, comma-delimited numeric file.
///
/// Rows keep file order and covariate columns follow `schema.covariates`.
/// Parse failures report the 1-based data row and the column name.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let y_col = find(&schema.outcome)?;
    let a_col = find(&schema.treatment)?;
    let x_cols = schema.covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let d = x_cols.len();
    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut x = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = r + 1;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        y.push(cell(y_col, &schema.outcome)?);
        a.push(cell(a_col, &schema.treatment)?);
        for (&c, name) in x_cols.iter().zip(&schema.covariates) {
            x.push(cell(c, name)?);
        }
    }
    let n = y.len();
    Dataset::new(y, a, Matrix::new(n, d, x)?)
}

/// Writes `y,a,x1..xd` followed by one line per row.
///
/// Reals use Rust's shortest round-trip formatting, so loading the file back
/// reproduces every value bit for bit.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let schema = CsvSchema::standard(dataset.d());
    let mut header = vec![schema.outcome, schema.treatment];
    header.extend(schema.covariates);
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;
    for i in 0..dataset.n() {
        write!(w, "{},{}", dataset.y[i], dataset.a[i]).map_err(io_err)?;
        for v in dataset.x_row(i) {
            write!(w, ",{v}").map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// A disjoint train/estimation partition of a dataset.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Dataset,
    pub estimation: Dataset,
    /// Source row indices of `train`, ascending.
    pub train_rows: Vec<usize>,
    /// Source row indices of `estimation`, ascending.
    pub estimation_rows: Vec<usize>,
}

/// Random partition with `round(fraction·n)` training rows.
///
/// The training count is clamped to `[1, n-1]` so both halves are nonempty.
/// Each half keeps source row order.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<SplitResult> {
    let n = dataset.n();
    if n < 2 {
        return Err(Error::InvalidData(format!("cannot split {n} rows")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut train_rows = perm[..n_train].to_vec();
    let mut estimation_rows = perm[n_train..].to_vec();
    train_rows.sort_unstable();
    estimation_rows.sort_unstable();
    Ok(SplitResult {
        train: dataset.subset(&train_rows),
        estimation: dataset.subset(&estimation_rows),
        train_rows,
        estimation_rows,
    })
}

/// Fold label for every row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_index: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    /// Row indices in fold `f` and in its complement, both ascending.
    pub fn train_valid(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for (i, &g) in self.fold_index.iter().enumerate() {
            if g == f {
                valid.push(i);
            } else {
                train.push(i);
            }
        }
        (train, valid)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &g in &self.fold_index {
            sizes[g] += 1;
        }
        sizes
    }
}

/// Seeded balanced k-fold assignment: rows are permuted, then dealt round-robin.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k-fold needs 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut fold_index = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold_index[row] = pos % k;
    }
    Ok(FoldAssignment { fold_index, k })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let y = (0..n).map(|i| i as f64).collect();
        let a = (0..n).map(|i| (i % 2) as f64).collect();
        let x = (0..n).map(|i| i as f64 * 0.1).collect();
        Dataset::from_columns(y, a, x).unwrap()
    }

    #[test]
    fn rejects_length_mismatch_and_non_finite() {
        assert!(Dataset::from_columns(vec![1.0], vec![1.0, 0.0], vec![0.0]).is_err());
        assert!(Dataset::from_columns(vec![f64::NAN], vec![1.0], vec![0.0]).is_err());
        assert!(Dataset::from_columns(vec![1.0], vec![1.0], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn split_sizes() {
        let s = split(&toy(1000), 0.5, 3).unwrap();
        assert_eq!((s.train.n(), s.estimation.n()), (500, 500));
        let s = split(&toy(2), 0.5, 3).unwrap();
        assert_eq!((s.train.n(), s.estimation.n()), (1, 1));
    }

    #[test]
    fn split_is_deterministic_partition() {
        let d = toy(37);
        let s1 = split(&d, 0.3, 11).unwrap();
        let s2 = split(&d, 0.3, 11).unwrap();
        assert_eq!(s1.train_rows, s2.train_rows);
        let mut all: Vec<usize> = s1.train_rows.iter().chain(&s1.estimation_rows).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_eq!(s1.train.n(), 11);
    }

    #[test]
    fn split_rejects_tiny_data() {
        assert!(split(&toy(1), 0.5, 0).is_err());
        assert!(split(&toy(10), 1.0, 0).is_err());
    }

    #[test]
    fn kfold_sizes() {
        let f = kfold(10, 5, 1).unwrap();
        assert_eq!(f.fold_sizes(), vec![2; 5]);
        let f = kfold(7, 3, 1).unwrap();
        let mut sizes = f.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);
        assert_eq!(kfold(7, 3, 1).unwrap(), f);
    }

    #[test]
    fn kfold_rejects_bad_k() {
        assert!(kfold(5, 1, 0).is_err());
        assert!(kfold(5, 6, 0).is_err());
    }

    #[test]
    fn csv_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "y,a,x1\n1.5,1,0.2\n2,0,0.7\n-3,1,0.9\n").unwrap();
        let d = load_csv(&p, &CsvSchema::standard(1)).unwrap();
        assert_eq!((d.n(), d.d()), (3, 1));
        assert_eq!(d.y(), &[1.5, 2.0, -3.0]);
        assert_eq!(d.x_row(1), &[0.7]);
    }

    #[test]
    fn csv_reports_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "y,a,x1\n1,1,0.2\n2,abc,0.7\n").unwrap();
        match load_csv(&p, &CsvSchema::standard(1)) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_nan_and_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "y,a,x1\n1,NaN,0.2\n").unwrap();
        assert!(matches!(
            load_csv(&p, &CsvSchema::standard(1)),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            load_csv(&p, &CsvSchema::standard(2)),
            Err(Error::MissingColumn { .. })
        ));
        assert!(matches!(
            load_csv(dir.path().join("nope.csv"), &CsvSchema::standard(1)),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_schema_reorders_covariates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "z,w,out,t\n1,2,3,0\n4,5,6,1\n").unwrap();
        let schema = CsvSchema {
            outcome: "out".into(),
            treatment: "t".into(),
            covariates: vec!["w".into(), "z".into()],
        };
        let d = load_csv(&p, &schema).unwrap();
        assert_eq!(d.x_row(0), &[2.0, 1.0]);
        assert_eq!(d.a(), &[0.0, 1.0]);
    }

    #[test]
    fn save_empty_dataset_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let d = Dataset::new(vec![], vec![], Matrix::zeros(0, 2)).unwrap();
        save_csv(&d, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "y,a,x1,x2\n");
        let back = load_csv(&p, &CsvSchema::standard(2)).unwrap();
        assert_eq!(back.n(), 0);
    }

    #[test]
    fn save_then_load_file_content_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let text = "y,a,x1\n0.1,1,0.30000000000000004\n-2.5e-300,0,12345.678901234567\n";
        std::fs::write(&p, text).unwrap();
        let d = load_csv(&p, &CsvSchema::standard(1)).unwrap();
        let q = dir.path().join("g.csv");
        save_csv(&d, &q).unwrap();
        let d2 = load_csv(&q, &CsvSchema::standard(1)).unwrap();
        assert_eq!(d, d2);
    }
}
