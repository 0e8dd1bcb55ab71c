//! Dataset ingestion, preprocessing, and synthetic problem generation.
//!
//! Supported on-disk formats are delimited text (CSV with RFC-style quoting
//! is not needed here; fields are plain numbers) and the libsvm sparse text
//! format, densified on load. Loaders reject NaN/Inf.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::select_rows;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    ClassificationOnehot,
    Regression,
}

/// An in-memory dataset: `n x p` features and `n x c` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub task: TaskKind,
    pub name: String,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, task: TaskKind, name: impl Into<String>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::dim(x.nrows(), y.nrows(), "dataset rows"));
        }
        let ds = Dataset {
            x,
            y,
            task,
            name: name.into(),
        };
        if !ds.x.iter().chain(ds.y.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Load a delimited numeric text file.
///
/// `target_columns` are zero-based column indices that become the target
/// matrix; the remaining columns become features, in file order.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_columns: &[usize],
    has_header: bool,
    delimiter: char,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && has_header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, field) in line.split(delimiter).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("cannot parse field {:?} as a number", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    path: path_str.clone(),
                    line: lineno + 1,
                    column: col,
                });
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    line: lineno + 1,
                    message: format!("expected {w} fields, got {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path_str,
            line: 0,
            message: "file contains no data rows".into(),
        });
    }
    let width = width.unwrap();
    for &t in target_columns {
        if t >= width {
            return Err(Error::invalid(format!(
                "target column {t} out of range for {width}-column file"
            )));
        }
    }
    let n = rows.len();
    let c = target_columns.len();
    let p = width - c;
    let mut x = DMatrix::zeros(n, p);
    let mut y = DMatrix::zeros(n, c);
    for (i, row) in rows.iter().enumerate() {
        let mut fi = 0;
        for (j, &v) in row.iter().enumerate() {
            if let Some(t) = target_columns.iter().position(|&t| t == j) {
                y[(i, t)] = v;
            } else {
                x[(i, fi)] = v;
                fi += 1;
            }
        }
    }
    Dataset::new(x, y, TaskKind::Regression, path_str)
}

/// Write a dataset as delimited text (targets appended as the last columns).
///
/// Values are printed with Rust's shortest round-trip float formatting, so a
/// save/load cycle reproduces the matrix bit-exactly.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>, delimiter: char) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for i in 0..ds.len() {
        let mut first = true;
        for j in 0..ds.x.ncols() {
            if !first {
                out.push(delimiter);
            }
            write!(out, "{}", ds.x[(i, j)]).unwrap();
            first = false;
        }
        for j in 0..ds.y.ncols() {
            if !first {
                out.push(delimiter);
            }
            write!(out, "{}", ds.y[(i, j)]).unwrap();
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load a libsvm-format text file (label followed by `index:value` pairs,
/// 1-based indices). Missing indices densify to zero.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();

    let mut labels: Vec<f64> = Vec::new();
    let mut sparse_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label: f64 = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: "cannot parse label".into(),
            })?;
        if !label.is_finite() {
            return Err(Error::NonFinite {
                path: path_str.clone(),
                line: lineno + 1,
                column: 0,
            });
        }
        let mut row = Vec::new();
        for pair in parts {
            let (idx, val) = pair.split_once(':').ok_or_else(|| Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("malformed feature {pair:?}, expected index:value"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("bad feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    line: lineno + 1,
                    message: "libsvm feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("bad feature value {val:?}"),
            })?;
            if !val.is_finite() {
                return Err(Error::NonFinite {
                    path: path_str.clone(),
                    line: lineno + 1,
                    column: idx,
                });
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        labels.push(label);
        sparse_rows.push(row);
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            path: path_str,
            line: 0,
            message: "file contains no data rows".into(),
        });
    }
    let n = labels.len();
    let mut x = DMatrix::zeros(n, max_index);
    for (i, row) in sparse_rows.iter().enumerate() {
        for &(j, v) in row {
            x[(i, j)] = v;
        }
    }
    let y = DMatrix::from_iterator(n, 1, labels);
    Dataset::new(x, y, TaskKind::Regression, path_str)
}

/// Z-score features with population (1/n) variance. Constant features are
/// dropped; the returned index list names the dropped columns.
pub fn zscore(ds: &Dataset) -> (Dataset, Vec<usize>) {
    let n = ds.len() as f64;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..ds.x.ncols() {
        let col = ds.x.column(j);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var > 0.0 {
            kept.push((j, mean, var.sqrt()));
        } else {
            dropped.push(j);
        }
    }
    let mut x = DMatrix::zeros(ds.len(), kept.len());
    for (out_j, &(j, mean, std)) in kept.iter().enumerate() {
        for i in 0..ds.len() {
            x[(i, out_j)] = (ds.x[(i, j)] - mean) / std;
        }
    }
    let out = Dataset {
        x,
        y: ds.y.clone(),
        task: ds.task,
        name: ds.name.clone(),
    };
    (out, dropped)
}

/// Rescale each feature to `[0, 1]`; constant features map to zero.
pub fn rescale_unit(ds: &Dataset) -> Dataset {
    let mut x = ds.x.clone();
    for j in 0..x.ncols() {
        let col = x.column(j);
        let min = col.min();
        let max = col.max();
        let range = max - min;
        if range > 0.0 {
            x.column_mut(j).apply(|v| *v = (*v - min) / range);
        } else {
            x.column_mut(j).apply(|v| *v = 0.0);
        }
    }
    Dataset {
        x,
        y: ds.y.clone(),
        task: ds.task,
        name: ds.name.clone(),
    }
}

/// One-hot encode integer labels into an `n x c` matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<DMatrix<f64>> {
    if classes == 0 {
        return Err(Error::invalid("one_hot needs classes >= 1"));
    }
    let mut y = DMatrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::invalid(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        y[(i, l)] = 1.0;
    }
    Ok(y)
}

/// Sample `m` of `n` indices without replacement, deterministically per seed.
pub fn sample_indices(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, "sample-without-replacement");
    idx.shuffle(&mut rng);
    idx.truncate(m);
    idx
}

/// Subsample `m` rows without replacement.
pub fn subsample(ds: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    if m > ds.len() {
        return Err(Error::invalid(format!(
            "subsample size {m} exceeds dataset size {}",
            ds.len()
        )));
    }
    let idx = sample_indices(ds.len(), m, seed);
    Ok(Dataset {
        x: select_rows(&ds.x, &idx),
        y: select_rows(&ds.y, &idx),
        task: ds.task,
        name: ds.name.clone(),
    })
}

/// Generate a least-squares problem whose sample covariance `X^T X / n` has
/// exactly the prescribed spectrum.
///
/// `X = sqrt(n) U diag(sqrt(lambda)) V^T` with `U` a random `n x d`
/// column-orthonormal matrix and `V` random orthogonal, so
/// `X^T X / n = V diag(lambda) V^T`. Targets are `y = X alpha* + noise`.
pub fn synth_spectrum(
    n: usize,
    d: usize,
    eigenvalues: &[f64],
    noise_std: f64,
    seed: u64,
) -> Result<(Dataset, DVector<f64>)> {
    if eigenvalues.len() != d {
        return Err(Error::invalid(format!(
            "need {d} eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    if eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid("prescribed eigenvalues must be positive and finite"));
    }
    if n < d {
        return Err(Error::invalid(format!("need n >= d, got n={n}, d={d}")));
    }
    if noise_std < 0.0 {
        return Err(Error::invalid("noise_std must be nonnegative"));
    }

    let mut rng = rng_for(seed, "synth-spectrum");
    let g = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let u = thin_q(&g);
    let gv = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let v = thin_q(&gv);

    let mut x = u;
    let scale = (n as f64).sqrt();
    for j in 0..d {
        let s = scale * eigenvalues[j].sqrt();
        x.column_mut(j).apply(|val| *val = *val * s);
    }
    let x = x * v.transpose();

    let alpha_star = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    let mut y = &x * &alpha_star;
    if noise_std > 0.0 {
        for i in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            y[i] += noise_std * z;
        }
    }
    let y = DMatrix::from_column_slice(n, 1, y.as_slice());
    let ds = Dataset::new(x, y, TaskKind::Regression, format!("synth-{seed}"))?;
    Ok((ds, alpha_star))
}

// Thin Q factor via modified Gram-Schmidt with one reorthogonalization pass.
fn thin_q(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = a.clone();
    let cols = q.ncols();
    for j in 0..cols {
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i).clone_owned();
                let proj = qi.dot(&q.column(j));
                let mut col = q.column_mut(j);
                col.axpy(-proj, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        q.column_mut(j).apply(|v| *v = *v / norm);
    }
    q
}
