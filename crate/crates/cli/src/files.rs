//! On-disk formats: hashed JSON artifacts, the training-curve CSV.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ddrl_core::agents::{Checkpoint, CurveRow};
use ddrl_core::numfmt::fmt_g17;
use ddrl_core::ppo::UpdateStats;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: hash mismatch, sidecar says {expected}, content hashes to {actual}")]
    HashMismatch { path: PathBuf, expected: String, actual: String },
    #[error("{path}: missing hash sidecar {sidecar}")]
    MissingSidecar { path: PathBuf, sidecar: PathBuf },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

pub type FileResult<T> = std::result::Result<T, FileError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FileError + '_ {
    move |source| FileError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".sha256");
    path.with_file_name(name)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> FileResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes `bytes` plus a `sha256sum`-style sidecar; returns the hex digest.
pub fn write_hashed(path: &Path, bytes: &[u8]) -> FileResult<String> {
    write_file(path, bytes)?;
    let digest = sha256_hex(bytes);
    let name = path.file_name().unwrap_or_default().to_string_lossy();
    write_file(&sidecar_path(path), format!("{digest}  {name}\n").as_bytes())?;
    Ok(digest)
}

/// Reads a file and checks it against its sidecar; returns content and digest.
pub fn read_hashed(path: &Path) -> FileResult<(Vec<u8>, String)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let sidecar = sidecar_path(path);
    let line = match fs::read_to_string(&sidecar) {
        Ok(line) => line,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(FileError::MissingSidecar { path: path.to_path_buf(), sidecar })
        }
        Err(e) => return Err(FileError::Io { path: sidecar, source: e }),
    };
    let expected = line.split_whitespace().next().unwrap_or_default().to_string();
    let actual = sha256_hex(&bytes);
    if expected != actual {
        return Err(FileError::HashMismatch { path: path.to_path_buf(), expected, actual });
    }
    Ok((bytes, actual))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("plain data serializes");
    out.push(b'\n');
    out
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> FileResult<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| FileError::Json { path: path.to_path_buf(), source })
}

/// Checkpoints are compact single-line JSON; floats use the shortest
/// representation that parses back to the same bits.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> FileResult<String> {
    let mut bytes = serde_json::to_vec(checkpoint).expect("checkpoint serializes");
    bytes.push(b'\n');
    write_hashed(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> FileResult<(Checkpoint, String)> {
    let (bytes, digest) = read_hashed(path)?;
    let ck = serde_json::from_slice(&bytes).map_err(|source| FileError::Json { path: path.to_path_buf(), source })?;
    Ok((ck, digest))
}

pub const CURVE_HEADER: &str = "epoch,return,mean_100,steps,fell,policy_loss,value_loss,entropy,clip_fraction,approx_kl";

pub fn curve_line(row: &CurveRow) -> String {
    let s = &row.stats;
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        row.epoch,
        fmt_g17(row.episode_return),
        fmt_g17(row.mean_100),
        row.steps,
        u8::from(row.fell),
        fmt_g17(s.policy_loss),
        fmt_g17(s.value_loss),
        fmt_g17(s.entropy),
        fmt_g17(s.clip_fraction),
        fmt_g17(s.approx_kl),
    )
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&curve_line(r));
        out.push('\n');
    }
    out
}

pub fn parse_curve_csv(text: &str, path: &Path) -> FileResult<Vec<CurveRow>> {
    let err = |line: usize, message: String| FileError::Parse { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CURVE_HEADER => {}
        _ => return Err(err(1, "unexpected header".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(err(i + 1, format!("expected 10 fields, got {}", f.len())));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|e| err(i + 1, format!("field {k}: {e}")));
            let int = |k: usize| f[k].parse::<usize>().map_err(|e| err(i + 1, format!("field {k}: {e}")));
            Ok(CurveRow {
                epoch: int(0)?,
                episode_return: num(1)?,
                mean_100: num(2)?,
                steps: int(3)?,
                fell: int(4)? != 0,
                stats: UpdateStats {
                    policy_loss: num(5)?,
                    value_loss: num(6)?,
                    entropy: num(7)?,
                    clip_fraction: num(8)?,
                    approx_kl: num(9)?,
                },
            })
        })
        .collect()
}

/// Appends curve rows as training progresses.
pub struct CurveWriter {
    path: PathBuf,
    file: std::io::BufWriter<fs::File>,
}

impl CurveWriter {
    pub fn create(path: &Path) -> FileResult<Self> {
        write_file(path, format!("{CURVE_HEADER}\n").as_bytes())?;
        let file = fs::OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        Ok(Self { path: path.to_path_buf(), file: std::io::BufWriter::new(file) })
    }

    pub fn push(&mut self, row: &CurveRow) -> FileResult<()> {
        writeln!(self.file, "{}", curve_line(row)).map_err(io_err(&self.path))
    }

    pub fn flush(&mut self) -> FileResult<()> {
        self.file.flush().map_err(io_err(&self.path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.json");
        let digest = write_hashed(&p, b"{\"x\":1}\n").unwrap();
        let (bytes, d2) = read_hashed(&p).unwrap();
        assert_eq!((bytes.as_slice(), d2.as_str()), (&b"{\"x\":1}\n"[..], digest.as_str()));
        fs::write(&p, b"{\"x\":2}\n").unwrap();
        assert!(matches!(read_hashed(&p), Err(FileError::HashMismatch { .. })));
        fs::remove_file(sidecar_path(&p)).unwrap();
        assert!(matches!(read_hashed(&p), Err(FileError::MissingSidecar { .. })));
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
