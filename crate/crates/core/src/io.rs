//! On-disk formats.
//!
//! A case directory holds `manifest.json` plus, for replicate `k`,
//! `scores_<k>.csv` (`eps1..epsJ`, one row per site in row-major order) and
//! `responses_<k>.csv` (`site,y`). Function-valued outputs are `t,value` CSVs.
//! Lines starting with `#` carry metadata and are skipped by the readers.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{FunctionGrid, GridSpec};
use crate::error::{Result, SgflmError};
use crate::lattice::LatticeSpec;
use crate::model::{Dataset, DatasetMeta, Theta};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseManifest {
    pub lattice: LatticeSpec,
    pub grid: GridSpec,
    pub basis_size: usize,
    pub replicates: usize,
    pub centered: bool,
    #[serde(default)]
    pub mean_scores: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Generating parameters on the raw-covariate scale, when known.
    #[serde(default)]
    pub true_theta: Option<Theta>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

fn comment_block(header: &[String]) -> String {
    header.iter().map(|h| format!("# {h}\n")).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| SgflmError::io(path, e))
}

fn data_err(path: &Path, what: impl std::fmt::Display) -> SgflmError {
    SgflmError::Data(format!("{}: {what}", path.display()))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| SgflmError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

pub fn write_function_csv(path: &Path, f: &FunctionGrid, header: &[String]) -> Result<()> {
    let mut out = comment_block(header);
    out.push_str("t,value\n");
    for (t, v) in f.grid_points().iter().zip(f.values()) {
        out.push_str(&format!("{t},{v}\n"));
    }
    write_text(path, &out)
}

pub fn read_function_csv(path: &Path) -> Result<FunctionGrid> {
    let mut rdr = reader(path)?;
    let mut t = Vec::new();
    let mut v = Vec::new();
    for rec in rdr.deserialize::<(f64, f64)>() {
        let (a, b) = rec.map_err(|e| data_err(path, e))?;
        t.push(a);
        v.push(b);
    }
    FunctionGrid::new(t, v).map_err(|e| data_err(path, e))
}

fn scores_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("scores_{k}.csv"))
}

fn responses_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("responses_{k}.csv"))
}

/// Writes the replicates and manifest into an existing directory.
pub fn write_case(dir: &Path, datasets: &[Dataset], manifest: &CaseManifest, header: &[String]) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(SgflmError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    let mut written = Vec::new();
    for (k, ds) in datasets.iter().enumerate() {
        let j = ds.num_scores();
        let mut out = comment_block(header);
        let cols: Vec<String> = (1..=j).map(|m| format!("eps{m}")).collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        for row in ds.scores().row_iter() {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&vals.join(","));
            out.push('\n');
        }
        let path = scores_path(dir, k);
        write_text(&path, &out)?;
        written.push(path);

        let mut out = comment_block(header);
        out.push_str("site,y\n");
        for (i, y) in ds.responses().iter().enumerate() {
            out.push_str(&format!("{i},{y}\n"));
        }
        let path = responses_path(dir, k);
        write_text(&path, &out)?;
        written.push(path);
    }
    let path = dir.join(MANIFEST);
    write_text(&path, &(serde_json::to_string_pretty(manifest)? + "\n"))?;
    written.push(path);
    Ok(written)
}

pub fn read_manifest(dir: &Path) -> Result<CaseManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| SgflmError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| data_err(&path, e))
}

fn read_scores(path: &Path, sites: usize, j: usize) -> Result<DMatrix<f64>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| data_err(path, e))?.clone();
    if headers.len() != j {
        return Err(data_err(path, format!("expected {j} score columns, found {}", headers.len())));
    }
    let mut values = Vec::with_capacity(sites * j);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        for field in rec.iter() {
            values.push(field.parse::<f64>().map_err(|e| data_err(path, format!("row {rows}: {e}")))?);
        }
        rows += 1;
    }
    if rows != sites {
        return Err(data_err(path, format!("expected {sites} rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(sites, j, &values))
}

fn read_responses(path: &Path, sites: usize) -> Result<Vec<u8>> {
    let mut rdr = reader(path)?;
    let mut y = vec![None; sites];
    for rec in rdr.deserialize::<(usize, i64)>() {
        let (i, v) = rec.map_err(|e| data_err(path, e))?;
        if i >= sites {
            return Err(data_err(path, format!("site {i} outside a lattice of {sites} sites")));
        }
        if v != 0 && v != 1 {
            return Err(data_err(path, format!("response {v} at site {i} is not binary")));
        }
        if y[i].replace(v as u8).is_some() {
            return Err(data_err(path, format!("site {i} listed twice")));
        }
    }
    y.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| data_err(path, format!("site {i} missing"))))
        .collect()
}

/// Reads a case directory written by [`write_case`].
pub fn read_case(dir: &Path) -> Result<(CaseManifest, Vec<Dataset>)> {
    if !dir.is_dir() {
        return Err(SgflmError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory does not exist"),
        ));
    }
    let manifest = read_manifest(dir)?;
    let lattice = Arc::new(manifest.lattice.build().map_err(|e| data_err(&dir.join(MANIFEST), e))?);
    let n = lattice.num_sites();
    let mut datasets = Vec::with_capacity(manifest.replicates);
    for k in 0..manifest.replicates {
        let scores = read_scores(&scores_path(dir, k), n, manifest.basis_size)?;
        let y = read_responses(&responses_path(dir, k), n)?;
        let meta = DatasetMeta {
            grid: manifest.grid,
            basis_size: manifest.basis_size,
            centered: manifest.centered,
            mean_scores: manifest.mean_scores.clone(),
            seed: manifest.seed,
            replicate: Some(k),
        };
        datasets.push(Dataset::new(lattice.clone(), scores, y, meta)?);
    }
    if datasets.is_empty() {
        return Err(data_err(&dir.join(MANIFEST), "no replicates"));
    }
    Ok((manifest, datasets))
}
