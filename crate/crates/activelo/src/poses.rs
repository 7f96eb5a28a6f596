//! KITTI pose files: one line per frame holding the top three rows of the
//! 4×4 camera-to-world matrix, row-major, whitespace separated.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use activelo_core::geom::{Pose, Rotation};
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Rotations drifting further than this from orthonormal are projected back.
pub const DRIFT_RENORMALIZE: f64 = 1e-6;
/// Rotations drifting further than this are rejected.
pub const DRIFT_REJECT: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum PoseFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {source}")]
    Read { line: usize, source: io::Error },
    #[error("line {line}: expected 12 values, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: {token:?} is not a number")]
    Parse { line: usize, token: String },
    #[error("line {line}: non-finite value")]
    NonFinite { line: usize },
    #[error("line {line}: rotation is not orthonormal (deviation {error:.3e})")]
    NotOrthonormal { line: usize, error: f64 },
}

pub fn parse_poses<R: BufRead>(reader: R) -> Result<Vec<Pose>, PoseFileError> {
    let mut poses = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| PoseFileError::Read { line: line_no, source })?;
        if line.trim().is_empty() {
            continue;
        }
        poses.push(parse_line(&line, line_no)?);
    }
    Ok(poses)
}

fn parse_line(line: &str, line_no: usize) -> Result<Pose, PoseFileError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 12 {
        return Err(PoseFileError::FieldCount {
            line: line_no,
            found: tokens.len(),
        });
    }
    let mut v = [0.0f64; 12];
    for (slot, token) in v.iter_mut().zip(&tokens) {
        *slot = token.parse().map_err(|_| PoseFileError::Parse {
            line: line_no,
            token: token.to_string(),
        })?;
        if !slot.is_finite() {
            return Err(PoseFileError::NonFinite { line: line_no });
        }
    }
    #[rustfmt::skip]
    let m = Matrix3::new(
        v[0], v[1], v[2],
        v[4], v[5], v[6],
        v[8], v[9], v[10],
    );
    let mut rotation = Rotation::from_matrix_unchecked(m);
    let error = rotation.orthonormality_error();
    if error > DRIFT_REJECT {
        return Err(PoseFileError::NotOrthonormal { line: line_no, error });
    }
    if error > DRIFT_RENORMALIZE {
        log::warn!("line {line_no}: rotation drift {error:.3e}, re-orthonormalized");
        rotation = Rotation::nearest(&m);
    }
    Ok(Pose::new(rotation, Vector3::new(v[3], v[7], v[11])))
}

pub fn load_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>, PoseFileError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| PoseFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_poses(BufReader::new(file))
}

/// `%.8e`-style formatting: nine significant digits and a two-digit signed
/// exponent.
pub fn format_sci(v: f64) -> String {
    let s = format!("{v:.8e}");
    let (mantissa, exp) = s.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn write_poses<W: Write>(mut w: W, poses: &[Pose]) -> io::Result<()> {
    for pose in poses {
        let row: Vec<String> = pose.to_row_major().iter().map(|&v| format_sci(v)).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()
}

pub fn save_poses(path: impl AsRef<Path>, poses: &[Pose]) -> Result<(), PoseFileError> {
    let path = path.as_ref();
    let io_err = |source| PoseFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_poses(BufWriter::new(file), poses).map_err(io_err)
}
