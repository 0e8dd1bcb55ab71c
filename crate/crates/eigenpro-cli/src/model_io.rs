//! Versioned plain-text model container.
//!
//! Layout: a `eigenpro-model v1` magic line, `key value` header lines, then
//! named numeric blocks (`matrix NAME ROWS COLS` followed by one line per
//! row, `vector NAME LEN` followed by one line). Floats are printed with
//! Rust's shortest round-trip formatting, so save/load/predict is
//! bit-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use eigenpro::features::{FeatureMap, RbfMap, RffMap};
use eigenpro::kernels::{KernelFamily, KernelSpec};
use eigenpro::optimizer::{KernelModel, LinearModel};
use eigenpro::{Error, Result};
use nalgebra::{DMatrix, DVector};

const MAGIC: &str = "eigenpro-model v1";

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Linear(LinearModel),
    Kernel(KernelModel),
}

impl SavedModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            SavedModel::Linear(m) => m.predict(x),
            SavedModel::Kernel(m) => m.predict(x),
        }
    }
}

fn push_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols()).unwrap();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{}", m[(i, j)]).unwrap();
        }
        out.push('\n');
    }
}

fn push_vector(out: &mut String, name: &str, v: &DVector<f64>) {
    writeln!(out, "vector {name} {}", v.len()).unwrap();
    for (j, val) in v.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        write!(out, "{val}").unwrap();
    }
    out.push('\n');
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    match model {
        SavedModel::Kernel(m) => {
            out.push_str("kind kernel\n");
            writeln!(out, "kernel {} {}", m.spec.family().name(), m.spec.bandwidth()).unwrap();
            push_matrix(&mut out, "alpha", &m.alpha);
            push_matrix(&mut out, "train_x", &m.train_x);
        }
        SavedModel::Linear(m) => {
            out.push_str("kind linear\n");
            match &m.feature_map {
                None => out.push_str("map none\n"),
                Some(FeatureMap::Rff(map)) => {
                    out.push_str("map rff\n");
                    writeln!(out, "bandwidth {}", map.source_bandwidth()).unwrap();
                    writeln!(out, "seed {}", map.seed()).unwrap();
                    push_matrix(&mut out, "omega", map.omega());
                    push_vector(&mut out, "phase", map.phase());
                }
                Some(FeatureMap::Rbf(map)) => {
                    out.push_str("map rbf\n");
                    writeln!(out, "kernel {} {}", map.spec().family().name(), map.spec().bandwidth()).unwrap();
                    push_matrix(&mut out, "centers", map.centers());
                }
            }
            push_matrix(&mut out, "alpha", &m.alpha);
        }
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Reader<'a> {
    path: String,
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.pos,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err("unexpected end of model file"))?;
        self.pos += 1;
        Ok(line)
    }

    fn parse_floats(&self, line: &str, expect: usize) -> Result<Vec<f64>> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.err("malformed numeric row"))?;
        if vals.len() != expect {
            return Err(self.err(format!("expected {expect} values, got {}", vals.len())));
        }
        Ok(vals)
    }

    fn matrix(&mut self, name: &str) -> Result<DMatrix<f64>> {
        let header = self.next()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "matrix" || parts[1] != name {
            return Err(self.err(format!("expected 'matrix {name} R C', got {header:?}")));
        }
        let rows: usize = parts[2].parse().map_err(|_| self.err("bad row count"))?;
        let cols: usize = parts[3].parse().map_err(|_| self.err("bad column count"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next()?;
            data.extend(self.parse_floats(line, cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn vector(&mut self, name: &str) -> Result<DVector<f64>> {
        let header = self.next()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "vector" || parts[1] != name {
            return Err(self.err(format!("expected 'vector {name} N', got {header:?}")));
        }
        let len: usize = parts[2].parse().map_err(|_| self.err("bad vector length"))?;
        let line = self.next()?;
        Ok(DVector::from_vec(self.parse_floats(line, len)?))
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected '{key} ...', got {line:?}")));
        }
        Ok(parts.collect())
    }
}

fn parse_spec(reader: &Reader, parts: &[&str]) -> Result<KernelSpec> {
    if parts.len() != 2 {
        return Err(reader.err("expected 'kernel FAMILY BANDWIDTH'"));
    }
    let family = KernelFamily::parse(parts[0])?;
    let bandwidth: f64 = parts[1].parse().map_err(|_| reader.err("bad bandwidth"))?;
    KernelSpec::new(family, bandwidth)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = Reader {
        path: path.display().to_string(),
        lines: text.lines().collect(),
        pos: 0,
    };
    if reader.next()? != MAGIC {
        return Err(reader.err(format!("not a model file (missing {MAGIC:?} header)")));
    }
    let kind = reader.keyed("kind")?;
    match kind.as_slice() {
        ["kernel"] => {
            let spec_parts = reader.keyed("kernel")?;
            let spec = parse_spec(&reader, &spec_parts)?;
            let alpha = reader.matrix("alpha")?;
            let train_x = reader.matrix("train_x")?;
            if train_x.nrows() != alpha.nrows() {
                return Err(reader.err("alpha rows disagree with training points"));
            }
            Ok(SavedModel::Kernel(KernelModel {
                alpha,
                train_x,
                spec,
            }))
        }
        ["linear"] => {
            let map = reader.keyed("map")?;
            let feature_map = match map.as_slice() {
                ["none"] => None,
                ["rff"] => {
                    let bw = reader.keyed("bandwidth")?;
                    let bandwidth: f64 = bw
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| reader.err("bad rff bandwidth"))?;
                    let seed_parts = reader.keyed("seed")?;
                    let seed: u64 = seed_parts
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| reader.err("bad rff seed"))?;
                    let omega = reader.matrix("omega")?;
                    let phase = reader.vector("phase")?;
                    Some(FeatureMap::Rff(RffMap::from_parts(omega, phase, bandwidth, seed)?))
                }
                ["rbf"] => {
                    let spec_parts = reader.keyed("kernel")?;
                    let spec = parse_spec(&reader, &spec_parts)?;
                    let centers = reader.matrix("centers")?;
                    Some(FeatureMap::Rbf(RbfMap::new(centers, spec)?))
                }
                other => return Err(reader.err(format!("unknown feature map {other:?}"))),
            };
            let alpha = reader.matrix("alpha")?;
            if let Some(map) = &feature_map {
                if map.feature_count() != alpha.nrows() {
                    return Err(reader.err("alpha rows disagree with feature count"));
                }
            }
            Ok(SavedModel::Linear(LinearModel {
                alpha,
                feature_map,
            }))
        }
        other => Err(reader.err(format!("unknown model kind {other:?}"))),
    }
}
