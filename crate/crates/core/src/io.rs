//! CSV / edge-list ingestion, JSON result records, run manifests, and output
//! directories that clean up after a failed run.
//!
//! Formats: comma-separated with a header row, `\n` line endings, `.` decimals.
//! Floats in JSON use the shortest representation that parses back to the same
//! `f64`, so saved coefficients reload bitwise.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AftError, Result};
use crate::network::{build_laplacian, Adjacency, NetworkPrior};
use crate::selection::{CvReport, LambdaGrid};
use crate::solver::{FitResult, SolutionPath};
use crate::survival::SurvivalDataset;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AftError + '_ {
    move |source| AftError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> AftError + '_ {
    move |source| AftError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, row: usize, column: &str, message: impl Into<String>) -> AftError {
    AftError::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))
}

/// Header names and the numeric body of a headered table. Rows are numbered from
/// 1 at the first line after the header.
pub fn read_numeric_table(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if header.is_empty() {
        return Err(parse_err(path, 0, "", "empty header"));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, r + 1, &header[c], format!("not a number: '{cell}'")))?;
            if !v.is_finite() {
                return Err(parse_err(path, r + 1, &header[c], format!("non-finite value '{cell}'")));
            }
            values.push(v);
        }
        rows += 1;
    }
    let x = Array2::from_shape_vec((rows, header.len()), values).expect("csv rows have header width");
    Ok((header, x))
}

/// Reads the `time` and `status` columns; other columns are ignored.
fn read_outcomes(path: &Path, log_times: bool) -> Result<(Array1<f64>, Vec<bool>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, 0, name, "missing column"))
    };
    let (ti, si) = (find("time")?, find("status")?);
    let mut y = Vec::new();
    let mut events = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let row = r + 1;
        let t_cell = &record[ti];
        let t: f64 = t_cell
            .parse()
            .map_err(|_| parse_err(path, row, "time", format!("not a number: '{t_cell}'")))?;
        if !t.is_finite() {
            return Err(parse_err(path, row, "time", format!("non-finite value '{t_cell}'")));
        }
        if log_times {
            y.push(t);
        } else if t > 0.0 {
            y.push(t.ln());
        } else {
            return Err(parse_err(path, row, "time", format!("time must be positive, got {t}")));
        }
        let s_cell = &record[si];
        match s_cell.parse::<f64>() {
            Ok(v) if v == 1.0 => events.push(true),
            Ok(v) if v == 0.0 => events.push(false),
            _ => return Err(parse_err(path, row, "status", format!("status must be 0 or 1, got '{s_cell}'"))),
        }
    }
    Ok((Array1::from(y), events))
}

/// Dataset from a features table and an outcomes table with `time` (original scale)
/// and `status` columns. With `log_times`, `time` already holds log times.
pub fn load_dataset(features_path: &Path, outcomes_path: &Path, log_times: bool) -> Result<SurvivalDataset> {
    let (names, x) = read_numeric_table(features_path)?;
    let (y, events) = read_outcomes(outcomes_path, log_times)?;
    if x.nrows() != y.len() {
        return Err(AftError::DimensionMismatch {
            what: "feature rows vs outcome rows",
            expected: x.nrows(),
            found: y.len(),
        });
    }
    SurvivalDataset::new(x, y, events)?.with_feature_names(names)
}

#[derive(Debug, Clone)]
pub struct LoadedNetwork {
    pub prior: NetworkPrior,
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
}

/// Edge list with a header and columns `source,target[,weight]`. Endpoints are
/// feature names, or 0-based column indices when no feature has that name. A
/// missing weight means 1.
pub fn load_adjacency(path: &Path, feature_names: &[String]) -> Result<LoadedNetwork> {
    let index: HashMap<&str, usize> = feature_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let resolve = |name: &str| -> Result<usize> {
        if let Some(&i) = index.get(name) {
            return Ok(i);
        }
        match name.parse::<usize>() {
            Ok(i) if i < feature_names.len() => Ok(i),
            _ => Err(AftError::UnknownNode {
                path: path.to_path_buf(),
                name: name.to_string(),
            }),
        }
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut self_loops = 0;
    let mut duplicates = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let row = r + 1;
        if record.len() < 2 || record.len() > 3 {
            return Err(parse_err(path, row, "", format!("expected 2 or 3 fields, got {}", record.len())));
        }
        let (a, b) = (resolve(&record[0])?, resolve(&record[1])?);
        let w = match record.get(2) {
            Some(cell) => cell
                .parse::<f64>()
                .map_err(|_| parse_err(path, row, "weight", format!("not a number: '{cell}'")))?,
            None => 1.0,
        };
        if a == b {
            self_loops += 1;
            continue;
        }
        if edges.insert((a.min(b), a.max(b)), w).is_some() {
            duplicates += 1;
        }
    }
    let adjacency = Adjacency::from_edges(feature_names.len(), edges.into_iter().map(|((a, b), w)| (a, b, w)))?;
    let prior = build_laplacian(&adjacency)?.with_node_names(feature_names.to_vec())?;
    Ok(LoadedNetwork {
        prior,
        self_loops_dropped: self_loops,
        duplicate_edges: duplicates,
    })
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(io_err(path))
}

fn flush(path: &Path, mut wtr: csv::Writer<fs::File>) -> Result<()> {
    wtr.flush().map_err(io_err(path))
}

/// Numbers are written with Rust's shortest round-trip formatting.
pub fn write_numeric_table(path: &Path, header: &[String], x: &Array2<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(header).map_err(csv_err(path))?;
    for row in x.outer_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err(path))?;
    }
    flush(path, wtr)
}

/// `time,status` with `time = exp(y)` on the original scale.
pub fn write_outcomes(path: &Path, log_times: ArrayView1<f64>, events: &[bool]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(["time", "status"]).map_err(csv_err(path))?;
    for (y, &d) in log_times.iter().zip(events) {
        wtr.write_record([y.exp().to_string(), u8::from(d).to_string()])
            .map_err(csv_err(path))?;
    }
    flush(path, wtr)
}

pub fn write_dataset(features_path: &Path, outcomes_path: &Path, data: &SurvivalDataset) -> Result<()> {
    let names: Vec<String> = match data.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..data.n_features()).map(|j| format!("x{j}")).collect(),
    };
    write_numeric_table(features_path, &names, &data.covariates().to_owned())?;
    write_outcomes(outcomes_path, data.log_times(), data.events())
}

/// One line per undirected edge, `source,target,weight`, endpoints by name when known.
pub fn write_edge_list(path: &Path, prior: &NetworkPrior) -> Result<()> {
    let name = |i: usize| match prior.node_names() {
        Some(n) => n[i].clone(),
        None => i.to_string(),
    };
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(["source", "target", "weight"]).map_err(csv_err(path))?;
    for (i, j, w) in prior.adjacency().iter().filter(|&(i, j, _)| i < j) {
        wtr.write_record([name(i), name(j), w.to_string()]).map_err(csv_err(path))?;
    }
    flush(path, wtr)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|source| AftError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(b"\n").map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| AftError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// A fitted model with its coefficients stored sparsely (index -> value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub lambda: f64,
    pub alpha: f64,
    pub sigma_hat: f64,
    pub intercept: Option<f64>,
    pub p: usize,
    pub beta: BTreeMap<usize, f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
}

impl FitRecord {
    pub fn from_fit(fit: &FitResult) -> Self {
        let beta = fit
            .beta_hat
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(j, &b)| (j, b))
            .collect();
        Self {
            lambda: fit.lambda,
            alpha: fit.alpha,
            sigma_hat: fit.sigma_hat,
            intercept: fit.intercept,
            p: fit.beta_hat.len(),
            beta,
            iterations: fit.iterations,
            converged: fit.converged,
            final_objective: fit.final_objective(),
        }
    }

    pub fn dense_beta(&self) -> Result<Array1<f64>> {
        let mut beta = Array1::zeros(self.p);
        for (&j, &b) in &self.beta {
            if j >= self.p {
                return Err(AftError::DimensionMismatch {
                    what: "sparse coefficient index vs p",
                    expected: self.p,
                    found: j,
                });
            }
            beta[j] = b;
        }
        Ok(beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub alpha: f64,
    pub sigma_hat: f64,
    pub lambdas: Vec<f64>,
    pub fits: Vec<FitRecord>,
}

impl PathRecord {
    pub fn from_path(path: &SolutionPath) -> Self {
        Self {
            alpha: path.alpha,
            sigma_hat: path.sigma_hat,
            lambdas: path.lambdas(),
            fits: path.fits.iter().map(FitRecord::from_fit).collect(),
        }
    }
}

/// Output of `cv`: the CV report, the grid, the full-data path and its fit at `lambda_opt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub report: CvReport,
    pub grid: LambdaGrid,
    pub selected: FitRecord,
    pub path: PathRecord,
}

/// Any result file accepted by `evaluate`.
#[derive(Debug, Clone, PartialEq)]
pub enum ResultFile {
    Cv(CvRecord),
    Path(PathRecord),
    Fit(FitRecord),
}

/// Reads a result file, telling the kinds apart by their top-level keys.
// serde's untagged enums cannot parse the integer-keyed beta maps, hence two passes.
pub fn read_result(path: &Path) -> Result<ResultFile> {
    let value: serde_json::Value = read_json(path)?;
    let json_err = |source| AftError::Json {
        path: path.to_path_buf(),
        source,
    };
    let has = |k: &str| value.get(k).is_some();
    if has("report") {
        CvRecord::deserialize(&value).map(ResultFile::Cv).map_err(json_err)
    } else if has("fits") {
        PathRecord::deserialize(&value).map(ResultFile::Path).map_err(json_err)
    } else {
        FitRecord::deserialize(&value).map(ResultFile::Fit).map_err(json_err)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub options: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input path -> sha256 of its raw bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
}

/// Output directory for one run. Files registered through [`OutputDir::file`] are
/// deleted on drop unless [`OutputDir::commit`] ran; a directory created by the
/// run is removed as well when it ends up empty.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    files: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            created_root,
            files: Vec::new(),
            committed: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn file(&mut self, name: &str) -> PathBuf {
        let path = self.root.join(name);
        self.files.push(path.clone());
        path
    }

    pub fn file_names(&self) -> Vec<String> {
        self.files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}
