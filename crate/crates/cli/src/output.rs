//! CSV rendering, atomic file writes and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use cls_core::analysis::{ConvergenceStudy, ErrorField};
use cls_core::evolve::{Trajectory, WptSnapshot};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Values carry 17 significant digits; coordinates and times use the
/// shortest representation that parses back exactly.
fn value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,x,value\n");
    for (t, state) in traj.times.iter().zip(&traj.states) {
        for (x, v) in traj.grid.nodes().iter().zip(&state.values) {
            writeln!(out, "{t},{x},{}", value(*v)).expect("writing to a string");
        }
    }
    out
}

pub fn error_field_csv(field: &ErrorField) -> String {
    let mut out = String::from("t,x,abs,rel\n");
    for (i, t) in field.times.iter().enumerate() {
        for (j, x) in field.node_coords.iter().enumerate() {
            writeln!(out, "{t},{x},{},{}", value(field.abs_error[i][j]), value(field.rel_error[i][j])).expect("writing to a string");
        }
    }
    out
}

/// Physical block of the warped state: `t,p,x,value`.
pub fn wpt_csv(snapshots: &[WptSnapshot], p_nodes: &[f64], x_nodes: &[f64]) -> String {
    let mut out = String::from("t,p,x,value\n");
    let n_x = x_nodes.len();
    for snap in snapshots {
        for (j, p) in p_nodes.iter().enumerate() {
            for (i, x) in x_nodes.iter().enumerate() {
                writeln!(out, "{},{p},{x},{}", snap.time, value(snap.values[j * n_x + i])).expect("writing to a string");
            }
        }
    }
    out
}

/// `param,error,slope_fitted` for one study, under a comment carrying the
/// config digest.
pub fn convergence_csv(study: &ConvergenceStudy, config_digest: &str) -> String {
    let mut out = format!("# config_sha256={config_digest} t={}\nparam,error,slope_fitted\n", study.time);
    for (p, e) in &study.samples {
        writeln!(out, "{p},{},{}", value(*e), value(study.fitted_slope)).expect("writing to a string");
    }
    out
}

/// All studies of a sweep, one block of rows per sample time.
pub fn convergence_by_time_csv(studies: &[ConvergenceStudy], config_digest: &str) -> String {
    let mut out = format!("# config_sha256={config_digest}\nt,param,error,slope_fitted\n");
    for study in studies {
        for (p, e) in &study.samples {
            writeln!(out, "{},{p},{},{}", study.time, value(*e), value(study.fitted_slope)).expect("writing to a string");
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Collects written files and their digests.
#[derive(Debug, Default)]
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<OutputFile>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}
